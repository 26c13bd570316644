#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "collis/student.hpp"
#include "collis/types.hpp"

namespace collis {

// Pairwise relative reliability, kept as an integer ratio of smoothed
// dominance counts so the reciprocal identity gamma_ij * gamma_ji = 1 holds
// in exact arithmetic.
struct Ratio {
    std::int64_t num = 1;
    std::int64_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Epoch-linear absolute reliability and the unlabeled-loss weight:
// beta = e / e_max, lambda_u = lambda_0 * (1 - beta) + beta.
std::pair<double, double> absolute_reliability(int epoch, int e_max, double lambda_0);

// Smoothed confidence-dominance counts: N(i,j) = |{m : c_i[m] > c_j[m]}| + 1.
// Strict comparison, ties count for neither; the +1 keeps denominators and
// weights positive. Diagonal entries are zero.
Eigen::MatrixXi dominance_counts(const std::vector<Eigen::VectorXd>& confidences);

// gamma[i][j] = N(i,j) / N(j,i) over the smoothed counts.
std::vector<std::vector<Ratio>> relative_reliability(const Eigen::MatrixXi& counts);

// Adaptive pseudo-label threshold: min(delta_0, delta_0 * (1-beta) / gamma).
double pseudo_label_threshold(double delta_0, double beta, double gamma);

// Keeps eligible points whose source confidence strictly exceeds delta;
// labels are the source argmax.
std::pair<Eigen::VectorXi, Mask> filter_pseudo_labels(const StudentOutput& source, double delta,
                                                      const Mask& eligibility);

// Distillation weights for `target`: each source is weighted by its dominance
// counts over the other non-target peers, normalized to sum exactly 1.
// Reduces to N(i,j)/(N(i,j)+N(j,i)) for the two-source case. Entry `target`
// is zero.
Eigen::VectorXd distillation_weights(const Eigen::MatrixXi& counts, int target);

// Per-step reliability snapshot shared by all loss computations of the step.
struct ReliabilityState {
    double beta = 0.0;
    double lambda_u = 0.0;
    Eigen::MatrixXi counts;                  // smoothed dominance counts
    std::vector<std::vector<Ratio>> gamma;   // gamma[i][j]
    Eigen::MatrixXd delta;                   // delta(i,j): threshold for i -> j
    Eigen::MatrixXd omega;                   // omega(i,t): weight of source i for target t
};

ReliabilityState compute_reliability(const std::vector<Eigen::VectorXd>& confidences,
                                     double beta, double lambda_u, double delta_0);

}  // namespace collis
