#include "collis/mixing.hpp"

#include <cmath>

namespace collis {

namespace {

constexpr double kPi = 3.14159265358979323846;

double elevation(const Point& p) {
    const double rho = std::sqrt(double(p.x) * p.x + double(p.y) * p.y + double(p.z) * p.z);
    if (rho < 1e-12) return 0.0;
    return std::asin(p.z / rho);
}

double azimuth(const Point& p) { return std::atan2(double(p.y), double(p.x)); }

// Appends point `row` of `src` to `out` tagged with `tag`.
void take_point(const PointCloud& src, std::size_t row, std::uint8_t tag, MixOutcome& out) {
    out.mixed.points.push_back(src.points[row]);
    out.mixed.labels.push_back(src.has_labels() ? src.labels[row] : kNoLabel);
    out.mixed.origin.push_back(tag);
    out.source_row.push_back(static_cast<std::int32_t>(row));
}

void strip_all_sentinel_labels(MixOutcome& out) {
    for (std::uint8_t l : out.mixed.labels)
        if (l != kNoLabel) return;
    out.mixed.labels.clear();
}

}  // namespace

std::string mix_strategy_name(MixStrategy s) {
    switch (s) {
        case MixStrategy::LaserMix: return "lasermix";
        case MixStrategy::PolarMix: return "polarmix";
        case MixStrategy::SubCloudShuffle: return "subcloud";
        case MixStrategy::None: return "none";
    }
    return "?";
}

MixOutcome laser_mix(const PointCloud& a, const PointCloud& b, int partitions,
                     double fov_down_deg, double fov_up_deg, RngStream& rng) {
    if (partitions < 2) throw ConfigError("laser_mix needs at least 2 partitions");
    if (a.empty() || b.empty()) throw DataError("laser_mix needs non-empty clouds");

    const double lo = fov_down_deg * kPi / 180.0;
    const double hi = fov_up_deg * kPi / 180.0;
    const bool swap = rng.next_bool();

    auto band = [&](const Point& p) {
        int k = static_cast<int>(std::floor((elevation(p) - lo) / (hi - lo) * partitions));
        if (k < 0) k = 0;
        if (k >= partitions) k = partitions - 1;
        return k;
    };

    MixOutcome out;
    out.strategy = MixStrategy::LaserMix;
    out.was_mixed = true;
    for (std::size_t i = 0; i < a.size(); ++i)
        if ((band(a.points[i]) % 2 == 0) != swap) take_point(a, i, kOriginA, out);
    for (std::size_t i = 0; i < b.size(); ++i)
        if ((band(b.points[i]) % 2 == 1) != swap) take_point(b, i, kOriginB, out);
    strip_all_sentinel_labels(out);
    return out;
}

MixOutcome polar_mix(const PointCloud& a, const PointCloud& b, double sector_start_rad,
                     double sector_width_rad) {
    if (!(sector_width_rad > 0.0 && sector_width_rad < 2.0 * kPi))
        throw ConfigError("polar_mix sector width must be in (0, 2*pi)");
    if (a.empty() || b.empty()) throw DataError("polar_mix needs non-empty clouds");

    auto in_sector = [&](const Point& p) {
        double rel = std::fmod(azimuth(p) - sector_start_rad, 2.0 * kPi);
        if (rel < 0) rel += 2.0 * kPi;
        return rel < sector_width_rad;
    };

    MixOutcome out;
    out.strategy = MixStrategy::PolarMix;
    out.was_mixed = true;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!in_sector(a.points[i])) take_point(a, i, kOriginA, out);
    for (std::size_t i = 0; i < b.size(); ++i)
        if (in_sector(b.points[i])) take_point(b, i, kOriginB, out);
    strip_all_sentinel_labels(out);
    return out;
}

MixOutcome sub_cloud_shuffle(const PointCloud& a, const PointCloud& b, RngStream& rng) {
    if (a.empty() || b.empty()) throw DataError("sub_cloud_shuffle needs non-empty clouds");

    MixOutcome out;
    out.strategy = MixStrategy::SubCloudShuffle;
    out.was_mixed = true;

    auto take_half = [&](const PointCloud& src, std::uint8_t tag) {
        const std::vector<std::size_t> perm = rng.permutation(src.size());
        const std::size_t half = (src.size() + 1) / 2;
        for (std::size_t i = 0; i < half; ++i) take_point(src, perm[i], tag, out);
    };
    take_half(a, kOriginA);
    take_half(b, kOriginB);
    strip_all_sentinel_labels(out);
    return out;
}

MixOutcome maybe_mix(const PointCloud& labeled, const PointCloud& unlabeled, double q_m,
                     const MixParams& params, RngStream& rng) {
    if (!(q_m >= 0.0 && q_m <= 1.0)) throw ConfigError("q_m must be a probability");

    if (rng.next_double() >= q_m) {
        MixOutcome out;
        out.strategy = MixStrategy::None;
        out.was_mixed = false;
        return out;
    }

    switch (rng.next_below(3)) {
        case 0: {
            const int span = params.laser_partitions_max - params.laser_partitions_min;
            const int partitions =
                params.laser_partitions_min + static_cast<int>(rng.next_below(span + 1));
            return laser_mix(labeled, unlabeled, partitions, params.fov_down_deg,
                             params.fov_up_deg, rng);
        }
        case 1: {
            const double start = rng.next_double(0.0, 2.0 * kPi);
            const double width = rng.next_double(kPi / 3.0, kPi);
            return polar_mix(labeled, unlabeled, start, width);
        }
        default:
            return sub_cloud_shuffle(labeled, unlabeled, rng);
    }
}

}  // namespace collis
