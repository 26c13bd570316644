#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "collis/types.hpp"

namespace collis {

// Loss evaluated on softmax probabilities with its gradient taken at the
// logits (chained through softmax). count is the number of contributing
// points; zero count means the term was skipped, not failed.
struct LossValue {
    double value = 0.0;
    Eigen::MatrixXd grad_logits;
    std::int64_t count = 0;
};

LossValue make_zero_loss(Eigen::Index m, Eigen::Index k);

// Mean negative log-likelihood over masked points.
LossValue cross_entropy(const Eigen::MatrixXd& probs, const Eigen::VectorXi& targets,
                        const Mask& mask);

// Lovász-softmax: per class present in the masked targets, sorted prediction
// errors dotted with the Jaccard-extension gradient, averaged over present
// classes.
LossValue lovasz_softmax(const Eigen::MatrixXd& probs, const Eigen::VectorXi& targets,
                         const Mask& mask);

// Lovász extension of the Jaccard loss for one class given its probability
// column and foreground indicator; exposed for the discrete-IoU oracle.
double lovasz_single_class(const Eigen::VectorXd& class_probs, const std::vector<int>& foreground);

// Cross-entropy plus Lovász on the same mask.
LossValue labeled_loss(const Eigen::MatrixXd& probs, const Eigen::VectorXi& targets,
                       const Mask& mask);

struct PseudoSource {
    Eigen::VectorXi labels;
    Mask mask;    // points whose pseudo-label survived this source's threshold
    double weight = 0.0;  // distillation weight, sums to 1 across sources
};

// lambda_u * sum over sources of weight * (CE + Lovasz) against that
// source's retained pseudo-labels.
LossValue unlabeled_loss(const Eigen::MatrixXd& probs, const std::vector<PseudoSource>& sources,
                         double lambda_u);

// KL-to-uniform confidence penalty, lambda_reg-scaled.
LossValue regularization_loss(const Eigen::MatrixXd& probs, const Mask& mask, double lambda_reg);

// -sum_k (1/K) log p_k for one probability row; the building block of the
// regularization loss and of the certainty-of-incorrect diagnostic.
double uniform_nll(const Eigen::VectorXd& prob_row);

}  // namespace collis
