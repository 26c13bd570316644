#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "collis/point_cloud.hpp"
#include "collis/types.hpp"

namespace collis {

// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes);

    int num_classes() const { return static_cast<int>(counts_.rows()); }
    std::int64_t at(int truth, int pred) const { return counts_(truth, pred); }
    std::int64_t total() const { return counts_.sum(); }

    void add(int truth, int pred) { ++counts_(truth, pred); }

    void accumulate(const Eigen::VectorXi& truths, const Eigen::VectorXi& predictions,
                    const Mask& mask);

    // Element-wise merge; the parallel-reduction contract.
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);

private:
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts_;
};

struct IouResult {
    Eigen::VectorXd per_class;  // NaN where the class is excluded
    std::vector<std::uint8_t> valid;
    double miou = 0.0;  // mean over valid classes
};

// IoU_c = M[c][c] / (row_c + col_c - M[c][c]); classes with zero denominator
// are excluded from the mean.
IouResult iou_from_matrix(const ConfusionMatrix& matrix);

struct PseudoLabelQuality {
    double retention = 0.0;          // retained / eligible
    std::optional<double> accuracy;  // defined only when retained > 0
    std::int64_t n_eligible = 0;
    std::int64_t n_retained = 0;
    std::int64_t n_correct = 0;
};

// Retention and accuracy of retained pseudo-labels against explicit truths.
PseudoLabelQuality retention_and_accuracy(const Mask& eligible, const Mask& retained,
                                          const Eigen::VectorXi& pseudo_labels,
                                          const Eigen::VectorXi& truths);

// Average certainty of incorrect predictions: mean over masked points with
// prediction != truth of the cross-entropy against the uniform prior.
// Absent when nothing is incorrect.
std::optional<double> certainty_of_incorrect(const Eigen::MatrixXd& probs,
                                             const Eigen::VectorXi& predictions,
                                             const Eigen::VectorXi& truths, const Mask& mask);

// The only gate to the sealed ground truth of unlabeled scenes. The trainer
// hands it the per-step tensors and receives aggregate diagnostics; raw label
// values never leave this class.
class DiagnosticAccess {
public:
    explicit DiagnosticAccess(const SealedLabels& sealed) : sealed_(&sealed) {}

    // `pick` re-indexes mixed-cloud rows into the unlabeled scene; -1 entries
    // (points from the labeled cloud) are skipped. Pass an empty pick for an
    // unmixed unlabeled scene (identity).
    PseudoLabelQuality pseudo_quality(std::size_t scene, const std::vector<std::int32_t>& pick,
                                      const Mask& eligible, const Mask& retained,
                                      const Eigen::VectorXi& pseudo_labels) const;

    std::optional<double> certainty(std::size_t scene, const std::vector<std::int32_t>& pick,
                                    const Eigen::MatrixXd& probs,
                                    const Eigen::VectorXi& predictions,
                                    const Mask& candidates) const;

private:
    // Truths aligned with the picked rows; -2 where unknown.
    Eigen::VectorXi truths(std::size_t scene, const std::vector<std::int32_t>& pick,
                           Eigen::Index rows) const;

    const SealedLabels* sealed_;
};

// Per-epoch per-class IoU table export for offline plotting.
struct IouCsvRow {
    int epoch = 0;
    int student = -1;  // -1 for the ensemble
    Eigen::VectorXd per_class;
    double miou = 0.0;
};

void write_iou_csv(const std::filesystem::path& path, const std::vector<IouCsvRow>& rows,
                   const std::vector<std::string>& class_names);

}  // namespace collis
