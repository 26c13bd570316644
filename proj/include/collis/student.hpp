#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>

#include "collis/point_cloud.hpp"
#include "collis/repr.hpp"

namespace collis {

// Input channels per point: (x, y, z, intensity, depth) plus the six grid
// channels of the point's cell in the student's representation.
inline constexpr int kPointFeatureCount = 5;
inline constexpr int kFeatureDim = kPointFeatureCount + kCellFeatureCount;

struct StudentConfig {
    int id = 0;
    ReprConfig repr;
    int hidden = 32;
    double learning_rate = 0.05;

    void validate() const;
};

struct StudentOutput {
    Eigen::MatrixXd logits;       // M x K
    Eigen::MatrixXd probs;        // M x K, rows sum to 1
    Eigen::VectorXi predictions;  // per-point argmax, ties to lowest class
    Eigen::VectorXd confidence;   // per-point max probability
};

// Assembled per-point features plus the mapping they were built from.
// Immutable per (cloud, repr config), so the trainer caches them per scene.
struct StudentFeatures {
    ReprMapping mapping;
    Eigen::MatrixXd x;  // M x kFeatureDim

    Eigen::Index point_count() const { return x.rows(); }
};

// Activations retained by forward for the exact backward pass.
struct ForwardTrace {
    Eigen::MatrixXd hidden;  // M x H, post-tanh
};

struct ParamGrads {
    Eigen::MatrixXd w1;
    Eigen::RowVectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::RowVectorXd b2;

    ParamGrads& operator+=(const ParamGrads& other);
    bool all_finite() const;
};

// Two-layer tanh classifier over one representation's features, trained with
// SGD + momentum. Out-of-bounds points carry zero cell channels.
class Student {
public:
    Student(const StudentConfig& config, int num_classes, std::uint64_t master_seed);

    const StudentConfig& config() const { return config_; }
    int id() const { return config_.id; }
    int num_classes() const { return num_classes_; }

    StudentFeatures assemble_features(const PointCloud& cloud) const;

    StudentOutput forward(const StudentFeatures& features, ForwardTrace* trace = nullptr) const;
    StudentOutput forward(const PointCloud& cloud) const;

    // Exact reverse-mode gradients of the affine-tanh-affine stack for an
    // upstream gradient at the logits.
    ParamGrads backward(const StudentFeatures& features, const ForwardTrace& trace,
                        const Eigen::MatrixXd& grad_logits) const;

    // SGD with momentum 0.9. Throws on non-finite gradients.
    void step(const ParamGrads& grads);

    void save_checkpoint(const std::filesystem::path& path) const;
    void load_checkpoint(const std::filesystem::path& path);

    // Replaces all parameters (momentum buffers reset).
    void set_parameters(const Eigen::MatrixXd& w1, const Eigen::RowVectorXd& b1,
                        const Eigen::MatrixXd& w2, const Eigen::RowVectorXd& b2);

    const Eigen::MatrixXd& w1() const { return w1_; }
    const Eigen::RowVectorXd& b1() const { return b1_; }
    const Eigen::MatrixXd& w2() const { return w2_; }
    const Eigen::RowVectorXd& b2() const { return b2_; }

private:
    StudentConfig config_;
    int num_classes_;
    Eigen::MatrixXd w1_;  // F x H
    Eigen::RowVectorXd b1_;
    Eigen::MatrixXd w2_;  // H x K
    Eigen::RowVectorXd b2_;
    Eigen::MatrixXd vel_w1_;
    Eigen::RowVectorXd vel_b1_;
    Eigen::MatrixXd vel_w2_;
    Eigen::RowVectorXd vel_b2_;
};

}  // namespace collis
