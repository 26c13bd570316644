#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "collis/cda.hpp"
#include "collis/metrics.hpp"
#include "collis/mixing.hpp"
#include "collis/point_cloud.hpp"
#include "collis/reliability.hpp"
#include "collis/student.hpp"

namespace collis {

enum class TrainMode { Collis, NaiveCodistill, SupervisedOnly };

std::string train_mode_name(TrainMode mode);

struct TrainerConfig {
    TrainMode mode = TrainMode::Collis;
    int epochs = 60;
    double lambda_0 = 0.5;
    double delta_0 = 0.95;
    double lambda_reg = 0.1;
    std::uint64_t seed = 1;
    int log_window = 50;
    CdaConfig cda;
    MixParams mix;
    std::vector<StudentConfig> students;

    // Forces every pseudo-label threshold to a fixed value; used by the
    // reduction-identity checks.
    std::optional<double> delta_override;

    std::vector<std::string> class_names;  // for the IoU export; generated if empty

    int worker_cap = 0;  // 0 = use hardware parallelism

    void validate() const;
};

struct StudentStepRecord {
    double loss_labeled = 0.0;
    double loss_unlabeled = 0.0;
    double loss_reg = 0.0;
    double loss_total = 0.0;
    double retention = 0.0;  // as pseudo-label source, averaged over targets
    std::optional<double> pseudo_accuracy;
    std::optional<double> certainty_incorrect;
};

struct StepRecord {
    std::int64_t iteration = 0;
    int epoch = 0;
    double q_m = 0.0;
    double consensus = 0.0;
    bool was_mixed = false;
    MixStrategy strategy = MixStrategy::None;
    double beta = 0.0;
    double lambda_u = 0.0;
    std::vector<StudentStepRecord> students;
    // Reliability snapshot, flattened row-major; empty in supervised mode.
    std::vector<double> gamma;
    std::vector<double> delta;
    std::vector<double> omega;
    std::vector<std::int64_t> retained_counts;
    std::vector<std::int64_t> eligible_counts;
    std::int64_t unlabeled_origin_points = 0;
};

struct EpochSummary {
    int epoch = 0;
    double q_m = 0.0;
    double beta = 0.0;
    double lambda_u = 0.0;
    std::vector<double> val_miou;  // per student
    double ensemble_miou = 0.0;
    std::vector<double> mean_retention;
    std::vector<std::optional<double>> mean_certainty;
};

struct TrainResult {
    std::vector<StepRecord> steps;
    std::vector<EpochSummary> epochs;
};

// One iteration's scene pairing. unlabeled_index is npos when the unlabeled
// pool is empty (fully labeled degenerate regime).
struct IterationPlan {
    std::size_t labeled_index = 0;
    std::size_t unlabeled_index = npos;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Deterministic per-epoch schedule: the unlabeled pool is visited once in a
// seeded random order and the labeled pool is cycled through reshuffled
// blocks to match its length.
std::vector<IterationPlan> epoch_schedule(std::uint64_t seed, int epoch, std::size_t n_labeled,
                                          std::size_t n_unlabeled);

struct EvalScores {
    Eigen::VectorXd per_class;  // NaN where undefined
    double miou = 0.0;          // mean over classes present in ground truth
};

struct EvalResult {
    std::vector<EvalScores> students;
    EvalScores ensemble;
};

// Confusion-based IoU of each student and of the confidence-voting ensemble
// over labeled scenes.
EvalResult evaluate(const std::vector<Student>& students, const std::vector<PointCloud>& scenes,
                    int num_classes);

// Per point, the prediction of the student with strictly greatest
// confidence; ties break to the lowest student id.
Eigen::VectorXi ensemble_predict(const std::vector<Student>& students, const PointCloud& cloud);

// Writes labeled scenes with ground truth (origin A) plus unlabeled scenes
// relabeled with ensemble predictions (origin B) in the point-cloud file
// format, with a manifest listing every file.
std::vector<std::filesystem::path> export_distillation_set(
    const std::vector<Student>& students, const std::vector<PointCloud>& labeled,
    const std::vector<PointCloud>& unlabeled, int num_classes,
    const std::filesystem::path& out_dir);

// The collaborative training loop: mix, fan out forwards, compute the shared
// reliability state, exchange filtered pseudo-labels, update every student,
// then feed the consensus controller.
class Trainer {
public:
    Trainer(const TrainerConfig& config, const DatasetSplit& data, int num_classes);

    std::vector<StepRecord> run_epoch(int epoch);

    // Runs all epochs; writes metrics.jsonl, iou.csv and per-student
    // checkpoints when out_dir is set.
    TrainResult run(const std::optional<std::filesystem::path>& out_dir = std::nullopt);

    const std::vector<Student>& students() const { return students_; }
    std::vector<Student>& students() { return students_; }
    const CdaController& controller() const { return controller_; }
    int num_classes() const { return num_classes_; }

private:
    struct SceneCache {
        std::vector<std::optional<StudentFeatures>> labeled;
        std::vector<std::optional<StudentFeatures>> unlabeled;
        std::vector<std::optional<StudentFeatures>> validation;
    };

    const StudentFeatures& cached_features(std::size_t student, int pool, std::size_t index);

    void step_supervised(const IterationPlan& plan, StepRecord& rec);
    void step_collaborative(const IterationPlan& plan, StepRecord& rec);

    void serialize_abort(const StepRecord& rec, const IterationPlan& plan,
                         const std::string& reason);

    void for_each_student(const std::function<void(std::size_t)>& fn);

    TrainerConfig config_;
    const DatasetSplit* data_;
    int num_classes_;
    TrainMode effective_mode_;
    std::vector<Student> students_;
    CdaController controller_;
    DiagnosticAccess diagnostics_;
    RngStream mix_stream_;
    std::vector<SceneCache> cache_;  // per student
    std::int64_t global_iteration_ = 0;
    double beta_ = 0.0;
    double lambda_u_ = 0.0;
    int current_epoch_ = 0;
    std::optional<std::filesystem::path> out_dir_;
    int workers_ = 1;
};

// JSON-lines serialization of the metrics log.
std::string step_record_json(const StepRecord& rec);
std::string epoch_summary_json(const EpochSummary& summary);

}  // namespace collis
