#include "collis/cda.hpp"

#include <algorithm>

namespace collis {

double consensus_fraction(const std::vector<Eigen::VectorXi>& predictions) {
    const std::size_t s = predictions.size();
    if (s < 2) throw DataError("consensus needs at least 2 students");
    const Eigen::Index m = predictions[0].size();
    if (m < 1) throw DataError("consensus needs at least 1 point");
    for (const auto& p : predictions)
        if (p.size() != m) throw DataError("prediction length mismatch");

    std::int64_t agreements = 0;
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i + 1; j < s; ++j)
            agreements += (predictions[i].array() == predictions[j].array()).count();

    const double pairs = static_cast<double>(s * (s - 1) / 2);
    return static_cast<double>(agreements) / (pairs * static_cast<double>(m));
}

double consensus_transform(double a, bool was_mixed) { return was_mixed ? a - 1.0 : a; }

double curriculum_q(int epoch, int e_max, double q_min, double q_max) {
    if (e_max <= 0) throw ConfigError("curriculum ramp needs e_max > 0");
    if (epoch < 0 || epoch > e_max) throw ConfigError("epoch outside [0, e_max]");
    return q_min + (static_cast<double>(epoch) / e_max) * (q_max - q_min);
}

std::string cda_mode_name(CdaMode mode) {
    switch (mode) {
        case CdaMode::Constant: return "constant";
        case CdaMode::Curriculum: return "curriculum";
        case CdaMode::Consensus: return "consensus";
    }
    return "?";
}

void CdaConfig::validate() const {
    if (!(q_init >= 0.0 && q_init <= 1.0)) throw ConfigError("cda q_init must be a probability");
    if (step_size < 1) throw ConfigError("cda step_size must be positive");
    if (mode == CdaMode::Curriculum && !(q_min <= q_max))
        throw ConfigError("curriculum needs q_min <= q_max");
}

CdaController::CdaController(const CdaConfig& config) : config_(config), q_m_(config.q_init) {
    config_.validate();
    g_buffer_.reserve(config_.step_size);
}

bool CdaController::observe(double a, bool was_mixed) {
    if (config_.mode != CdaMode::Consensus) return false;
    g_buffer_.push_back(consensus_transform(a, was_mixed));
    if (static_cast<int>(g_buffer_.size()) < config_.step_size) return false;

    double sum_g = 0.0;
    for (double g : g_buffer_) sum_g += g;
    q_m_ = std::clamp(q_m_ * (1.0 + sum_g), kQmClampLo, kQmClampHi);
    g_buffer_.clear();
    return true;
}

void CdaController::set_epoch(int epoch, int e_max) {
    if (config_.mode == CdaMode::Curriculum)
        q_m_ = curriculum_q(epoch, e_max, config_.q_min, config_.q_max);
}

}  // namespace collis
