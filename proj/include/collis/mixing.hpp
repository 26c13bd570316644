#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "collis/point_cloud.hpp"
#include "collis/rng.hpp"

namespace collis {

enum class MixStrategy { LaserMix, PolarMix, SubCloudShuffle, None };

std::string mix_strategy_name(MixStrategy s);

// Result of a mixing step. `source_row` tracks each output point's row in
// its pre-mix cloud so diagnostics can look up sealed ground truth; it never
// feeds the training losses.
struct MixOutcome {
    PointCloud mixed;
    std::vector<std::int32_t> source_row;
    MixStrategy strategy = MixStrategy::None;
    bool was_mixed = false;
};

// Elevation range used to slice scans into LaserMix bands.
struct MixParams {
    double fov_up_deg = 15.0;
    double fov_down_deg = -15.0;
    int laser_partitions_min = 2;
    int laser_partitions_max = 4;
};

// Splits [fov_down, fov_up] into equal elevation bands; even bands keep a's
// points and odd bands b's, or swapped by one random bit.
MixOutcome laser_mix(const PointCloud& a, const PointCloud& b, int partitions,
                     double fov_down_deg, double fov_up_deg, RngStream& rng);

// Replaces a's points inside the azimuth sector [start, start+width) with
// b's; the sector wraps modulo 2*pi.
MixOutcome polar_mix(const PointCloud& a, const PointCloud& b, double sector_start_rad,
                     double sector_width_rad);

// Randomly permutes and halves each cloud, then concatenates the halves.
MixOutcome sub_cloud_shuffle(const PointCloud& a, const PointCloud& b, RngStream& rng);

// With probability q_m applies one of the three strategies (chosen uniformly)
// to (labeled, unlabeled); otherwise reports was_mixed=false and leaves the
// pair untouched.
MixOutcome maybe_mix(const PointCloud& labeled, const PointCloud& unlabeled, double q_m,
                     const MixParams& params, RngStream& rng);

}  // namespace collis
