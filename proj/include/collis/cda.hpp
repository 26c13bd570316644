#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "collis/types.hpp"

namespace collis {

// Fraction of cross-student prediction agreement: summed per-point matches
// over unordered student pairs, normalized by pairs * points.
double consensus_fraction(const std::vector<Eigen::VectorXi>& predictions);

// Sign transform of the consensus ratio: a-1 on mixed batches, a otherwise.
double consensus_transform(double a, bool was_mixed);

// Linear curriculum ramp from q_min at epoch 0 to q_max at epoch e_max.
double curriculum_q(int epoch, int e_max, double q_min, double q_max);

enum class CdaMode { Constant, Curriculum, Consensus };

std::string cda_mode_name(CdaMode mode);

struct CdaConfig {
    CdaMode mode = CdaMode::Consensus;
    double q_init = 0.2;
    int step_size = 50;  // observations per multiplicative update
    double q_min = 0.15;
    double q_max = 0.25;

    void validate() const;
};

inline constexpr double kQmClampLo = 0.01;
inline constexpr double kQmClampHi = 1.0;

// Controls the mixing probability q_m. Consensus mode applies the
// multiplicative update q <- clamp(q * (1 + sum g(a_n))) every `step_size`
// observations; curriculum mode ramps with the epoch; constant mode never
// moves.
class CdaController {
public:
    explicit CdaController(const CdaConfig& config);

    double q() const { return q_m_; }
    CdaMode mode() const { return config_.mode; }

    // Feeds one (consensus, was_mixed) observation. Returns true when a
    // consensus-mode update fired.
    bool observe(double a, bool was_mixed);

    // Epoch boundary hook for curriculum mode.
    void set_epoch(int epoch, int e_max);

private:
    CdaConfig config_;
    double q_m_;
    std::vector<double> g_buffer_;
};

}  // namespace collis
