#include "collis/reliability.hpp"

#include <algorithm>
#include <cmath>

namespace collis {

std::pair<double, double> absolute_reliability(int epoch, int e_max, double lambda_0) {
    if (e_max < 1) throw ConfigError("e_max must be at least 1");
    if (epoch < 0 || epoch > e_max) throw ConfigError("epoch outside [0, e_max]");
    const double beta = static_cast<double>(epoch) / static_cast<double>(e_max);
    const double lambda_u = lambda_0 * (1.0 - beta) + beta;
    return {beta, lambda_u};
}

Eigen::MatrixXi dominance_counts(const std::vector<Eigen::VectorXd>& confidences) {
    const auto s = static_cast<int>(confidences.size());
    if (s < 2) throw DataError("dominance counts need at least 2 students");
    const Eigen::Index m = confidences[0].size();
    for (const auto& c : confidences)
        if (c.size() != m) throw DataError("confidence length mismatch");

    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(s, s);
    for (int i = 0; i < s; ++i) {
        for (int j = i + 1; j < s; ++j) {
            int nij = 0, nji = 0;
            for (Eigen::Index p = 0; p < m; ++p) {
                if (confidences[i][p] > confidences[j][p])
                    ++nij;
                else if (confidences[j][p] > confidences[i][p])
                    ++nji;
            }
            counts(i, j) = nij + 1;
            counts(j, i) = nji + 1;
        }
    }
    return counts;
}

std::vector<std::vector<Ratio>> relative_reliability(const Eigen::MatrixXi& counts) {
    const auto s = static_cast<int>(counts.rows());
    if (counts.cols() != s) throw DataError("count table must be square");
    std::vector<std::vector<Ratio>> gamma(s, std::vector<Ratio>(s));
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
            if (i == j) continue;
            if (counts(i, j) <= 0 || counts(j, i) <= 0)
                throw DataError("dominance counts must be positive (smoothed)");
            gamma[i][j] = Ratio{counts(i, j), counts(j, i)};
        }
    }
    return gamma;
}

double pseudo_label_threshold(double delta_0, double beta, double gamma) {
    if (gamma <= 0) throw DataError("gamma must be positive");
    return std::min(delta_0, delta_0 * (1.0 - beta) / gamma);
}

std::pair<Eigen::VectorXi, Mask> filter_pseudo_labels(const StudentOutput& source, double delta,
                                                      const Mask& eligibility) {
    const Eigen::Index m = source.confidence.size();
    if (static_cast<Eigen::Index>(eligibility.size()) != m)
        throw DataError("eligibility mask length mismatch");
    Mask retained(m, 0);
    for (Eigen::Index i = 0; i < m; ++i)
        retained[i] = eligibility[i] && source.confidence[i] > delta;
    return {source.predictions, std::move(retained)};
}

Eigen::VectorXd distillation_weights(const Eigen::MatrixXi& counts, int target) {
    const auto s = static_cast<int>(counts.rows());
    if (target < 0 || target >= s) throw DataError("target index out of range");

    Eigen::VectorXd omega = Eigen::VectorXd::Zero(s);
    std::vector<int> sources;
    for (int i = 0; i < s; ++i)
        if (i != target) sources.push_back(i);

    if (sources.size() == 1) {
        omega[sources[0]] = 1.0;
        return omega;
    }

    Eigen::VectorXd raw = Eigen::VectorXd::Zero(s);
    double total = 0.0;
    for (int i : sources) {
        double acc = 0.0;
        for (int j : sources)
            if (j != i) acc += counts(i, j);
        raw[i] = acc;
        total += acc;
    }
    // The last source takes the complement so the simplex identity is exact.
    double partial = 0.0;
    for (std::size_t r = 0; r + 1 < sources.size(); ++r) {
        omega[sources[r]] = raw[sources[r]] / total;
        partial += omega[sources[r]];
    }
    omega[sources.back()] = 1.0 - partial;
    return omega;
}

ReliabilityState compute_reliability(const std::vector<Eigen::VectorXd>& confidences,
                                     double beta, double lambda_u, double delta_0) {
    ReliabilityState st;
    st.beta = beta;
    st.lambda_u = lambda_u;
    st.counts = dominance_counts(confidences);
    st.gamma = relative_reliability(st.counts);

    const auto s = static_cast<int>(confidences.size());
    st.delta.resize(s, s);
    st.delta.setZero();
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
            if (i != j)
                st.delta(i, j) = pseudo_label_threshold(delta_0, beta, st.gamma[i][j].value());

    st.omega.resize(s, s);
    st.omega.setZero();
    for (int t = 0; t < s; ++t) st.omega.col(t) = distillation_weights(st.counts, t);
    return st;
}

}  // namespace collis
