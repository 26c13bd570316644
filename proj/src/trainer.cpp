#include "collis/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <thread>

#include "collis/losses.hpp"
#include "json.hpp"

namespace collis {

std::string train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::Collis: return "collis";
        case TrainMode::NaiveCodistill: return "naive_codistill";
        case TrainMode::SupervisedOnly: return "supervised_only";
    }
    return "?";
}

void TrainerConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (students.empty()) throw ConfigError("student roster must not be empty");
    if (!(delta_0 > 0.0 && delta_0 <= 1.0)) throw ConfigError("delta_0 must be in (0, 1]");
    if (lambda_reg < 0.0) throw ConfigError("lambda_reg must be nonnegative");
    if (log_window < 1) throw ConfigError("log window must be positive");
    std::vector<int> ids;
    for (const StudentConfig& s : students) {
        s.validate();
        ids.push_back(s.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ConfigError("student ids must be unique");
    cda.validate();
}

std::vector<IterationPlan> epoch_schedule(std::uint64_t seed, int epoch, std::size_t n_labeled,
                                          std::size_t n_unlabeled) {
    if (n_labeled == 0) throw ConfigError("schedule needs at least one labeled scene");

    std::vector<IterationPlan> plan;
    RngStream lab_rng = derive_stream(seed, "sched-labeled", static_cast<std::uint64_t>(epoch));

    if (n_unlabeled == 0) {
        // Fully labeled regime: one pass over the labeled pool.
        std::vector<std::size_t> order = lab_rng.permutation(n_labeled);
        plan.resize(n_labeled);
        for (std::size_t i = 0; i < n_labeled; ++i) plan[i].labeled_index = order[i];
        return plan;
    }

    RngStream unlab_rng =
        derive_stream(seed, "sched-unlabeled", static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> unlab_order = unlab_rng.permutation(n_unlabeled);

    // The labeled pool is repeated to match the unlabeled pool, reshuffling
    // each block.
    std::vector<std::size_t> lab_order;
    lab_order.reserve(n_unlabeled);
    while (lab_order.size() < n_unlabeled) {
        std::vector<std::size_t> block = lab_rng.permutation(n_labeled);
        for (std::size_t idx : block) {
            if (lab_order.size() == n_unlabeled) break;
            lab_order.push_back(idx);
        }
    }

    plan.resize(n_unlabeled);
    for (std::size_t i = 0; i < n_unlabeled; ++i) {
        plan[i].labeled_index = lab_order[i];
        plan[i].unlabeled_index = unlab_order[i];
    }
    return plan;
}

namespace {

Eigen::VectorXi targets_from_labels(const std::vector<std::uint8_t>& labels) {
    Eigen::VectorXi t(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i)
        t[static_cast<Eigen::Index>(i)] = labels[i] == kNoLabel ? -1 : labels[i];
    return t;
}

Eigen::VectorXi ensemble_from_outputs(const std::vector<StudentOutput>& outputs) {
    const Eigen::Index m = outputs.front().predictions.size();
    Eigen::VectorXi preds(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        std::size_t best = 0;
        double best_conf = outputs[0].confidence[i];
        for (std::size_t s = 1; s < outputs.size(); ++s) {
            if (outputs[s].confidence[i] > best_conf) {
                best_conf = outputs[s].confidence[i];
                best = s;
            }
        }
        preds[i] = outputs[best].predictions[i];
    }
    return preds;
}

struct GtPresence {
    std::vector<std::int64_t> per_class;
};

EvalScores scores_from_matrix(const ConfusionMatrix& matrix) {
    const IouResult iou = iou_from_matrix(matrix);
    EvalScores scores;
    scores.per_class = iou.per_class;
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < matrix.num_classes(); ++c) {
        std::int64_t row = 0;
        for (int j = 0; j < matrix.num_classes(); ++j) row += matrix.at(c, j);
        if (row == 0) continue;  // class absent from ground truth
        sum += iou.per_class[c];
        ++n;
    }
    scores.miou = n > 0 ? sum / n : 0.0;
    return scores;
}

}  // namespace

EvalResult evaluate(const std::vector<Student>& students, const std::vector<PointCloud>& scenes,
                    int num_classes) {
    if (students.empty()) throw ConfigError("evaluate needs at least one student");
    std::vector<ConfusionMatrix> per_student(students.size(), ConfusionMatrix(num_classes));
    ConfusionMatrix ensemble_matrix(num_classes);

    for (const PointCloud& scene : scenes) {
        if (!scene.has_labels()) throw DataError("evaluation scenes must be labeled");
        const Eigen::VectorXi truths = targets_from_labels(scene.labels);
        const Mask all(scene.size(), 1);

        std::vector<StudentOutput> outputs;
        outputs.reserve(students.size());
        for (const Student& s : students) outputs.push_back(s.forward(scene));

        for (std::size_t s = 0; s < students.size(); ++s)
            per_student[s].accumulate(truths, outputs[s].predictions, all);
        ensemble_matrix.accumulate(truths, ensemble_from_outputs(outputs), all);
    }

    EvalResult result;
    for (const ConfusionMatrix& m : per_student) result.students.push_back(scores_from_matrix(m));
    result.ensemble = scores_from_matrix(ensemble_matrix);
    return result;
}

Eigen::VectorXi ensemble_predict(const std::vector<Student>& students, const PointCloud& cloud) {
    if (students.empty()) throw ConfigError("ensemble needs at least one student");
    std::vector<StudentOutput> outputs;
    outputs.reserve(students.size());
    for (const Student& s : students) outputs.push_back(s.forward(cloud));
    return ensemble_from_outputs(outputs);
}

std::vector<std::filesystem::path> export_distillation_set(
    const std::vector<Student>& students, const std::vector<PointCloud>& labeled,
    const std::vector<PointCloud>& unlabeled, int num_classes,
    const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> files;
    nlohmann::json manifest;
    manifest["num_classes"] = num_classes;
    manifest["files"] = nlohmann::json::array();

    char name[32];
    std::size_t index = 0;
    for (const PointCloud& scene : labeled) {
        if (!scene.has_labels()) throw DataError("labeled export scene missing labels");
        std::snprintf(name, sizeof(name), "distill_%04zu.pcls", index++);
        const auto path = out_dir / name;
        write_cloud(scene, num_classes, path);
        manifest["files"].push_back({{"path", name}, {"labels", "ground_truth"}});
        files.push_back(path);
    }
    for (const PointCloud& scene : unlabeled) {
        PointCloud pseudo = scene;
        const Eigen::VectorXi preds = ensemble_predict(students, scene);
        pseudo.labels.resize(scene.size());
        for (std::size_t i = 0; i < scene.size(); ++i)
            pseudo.labels[i] = static_cast<std::uint8_t>(preds[static_cast<Eigen::Index>(i)]);
        pseudo.origin.assign(scene.size(), kOriginB);
        std::snprintf(name, sizeof(name), "distill_%04zu.pcls", index++);
        const auto path = out_dir / name;
        write_cloud(pseudo, num_classes, path);
        manifest["files"].push_back({{"path", name}, {"labels", "ensemble"}});
        files.push_back(path);
    }

    std::ofstream os(out_dir / "manifest.json");
    if (!os) throw IoError("cannot write distillation manifest");
    os << manifest.dump(2) << '\n';
    return files;
}

Trainer::Trainer(const TrainerConfig& config, const DatasetSplit& data, int num_classes)
    : config_(config),
      data_(&data),
      num_classes_(num_classes),
      effective_mode_(config.mode),
      controller_(config.cda),
      diagnostics_(data.diagnostics),
      mix_stream_(derive_stream(config.seed, "mixing")) {
    config_.validate();
    if (data_->labeled.empty()) throw ConfigError("training needs labeled scenes");

    // A single-student roster has no peers to exchange pseudo-labels with;
    // the collaborative modes degenerate to supervised training.
    if (config_.students.size() < 2 && effective_mode_ != TrainMode::SupervisedOnly)
        effective_mode_ = TrainMode::SupervisedOnly;

    for (const StudentConfig& sc : config_.students)
        students_.emplace_back(sc, num_classes_, config_.seed);

    cache_.resize(students_.size());
    for (SceneCache& c : cache_) {
        c.labeled.resize(data_->labeled.size());
        c.unlabeled.resize(data_->unlabeled.size());
    }

    if (config_.worker_cap > 0) {
        workers_ = config_.worker_cap;
    } else {
        const unsigned hw = std::thread::hardware_concurrency();
        workers_ = hw == 0 ? 1 : static_cast<int>(hw);
    }
}

void Trainer::for_each_student(const std::function<void(std::size_t)>& fn) {
    const std::size_t n = students_.size();
    if (workers_ <= 1 || n <= 1) {
        for (std::size_t s = 0; s < n; ++s) fn(s);
        return;
    }
    std::vector<std::future<void>> futures;
    futures.reserve(n - 1);
    for (std::size_t s = 1; s < n; ++s)
        futures.push_back(std::async(std::launch::async, fn, s));
    fn(0);
    for (auto& f : futures) f.get();
}

const StudentFeatures& Trainer::cached_features(std::size_t student, int pool,
                                                std::size_t index) {
    auto& slot = pool == 0 ? cache_[student].labeled[index] : cache_[student].unlabeled[index];
    if (!slot) {
        const PointCloud& scene =
            pool == 0 ? data_->labeled[index] : data_->unlabeled[index];
        slot = students_[student].assemble_features(scene);
    }
    return *slot;
}

void Trainer::step_supervised(const IterationPlan& plan, StepRecord& rec) {
    const PointCloud& scene = data_->labeled[plan.labeled_index];
    const Eigen::VectorXi targets = targets_from_labels(scene.labels);

    for_each_student([&](std::size_t s) {
        const StudentFeatures& feats = cached_features(s, 0, plan.labeled_index);
        ForwardTrace trace;
        const StudentOutput out = students_[s].forward(feats, &trace);
        const LossValue ll = labeled_loss(out.probs, targets, feats.mapping.in_bounds_mask());
        const ParamGrads grads = students_[s].backward(feats, trace, ll.grad_logits);
        students_[s].step(grads);

        StudentStepRecord& sr = rec.students[s];
        sr.loss_labeled = ll.value;
        sr.loss_total = ll.value;
    });
}

void Trainer::step_collaborative(const IterationPlan& plan, StepRecord& rec) {
    const std::size_t n_students = students_.size();
    const PointCloud& labeled_scene = data_->labeled[plan.labeled_index];
    const Eigen::VectorXi labeled_targets = targets_from_labels(labeled_scene.labels);
    const bool have_unlabeled = plan.unlabeled_index != IterationPlan::npos;

    MixOutcome mo;
    if (have_unlabeled)
        mo = maybe_mix(labeled_scene, data_->unlabeled[plan.unlabeled_index], rec.q_m,
                       config_.mix, mix_stream_);
    rec.was_mixed = mo.was_mixed;
    rec.strategy = mo.strategy;

    struct PerStudent {
        StudentFeatures feats_mixed;
        const StudentFeatures* feats_labeled = nullptr;
        const StudentFeatures* feats_unlabeled = nullptr;
        ForwardTrace trace_mixed, trace_labeled, trace_unlabeled;
        StudentOutput out_mixed, out_labeled, out_unlabeled;
        Eigen::VectorXd conf;
        Eigen::VectorXi preds;
        Mask in_bounds_unlab;  // on the cloud carrying unlabeled-origin points
    };
    std::vector<PerStudent> ps(n_students);

    const Eigen::VectorXi mixed_targets =
        mo.was_mixed ? targets_from_labels(mo.mixed.labels) : Eigen::VectorXi();

    for_each_student([&](std::size_t s) {
        PerStudent& p = ps[s];
        if (mo.was_mixed) {
            p.feats_mixed = students_[s].assemble_features(mo.mixed);
            p.out_mixed = students_[s].forward(p.feats_mixed, &p.trace_mixed);
            p.conf = p.out_mixed.confidence;
            p.preds = p.out_mixed.predictions;
            p.in_bounds_unlab = p.feats_mixed.mapping.in_bounds_mask();
        } else {
            p.feats_labeled = &cached_features(s, 0, plan.labeled_index);
            p.out_labeled = students_[s].forward(*p.feats_labeled, &p.trace_labeled);
            if (have_unlabeled) {
                p.feats_unlabeled = &cached_features(s, 1, plan.unlabeled_index);
                p.out_unlabeled = students_[s].forward(*p.feats_unlabeled, &p.trace_unlabeled);
                p.in_bounds_unlab = p.feats_unlabeled->mapping.in_bounds_mask();
                p.conf.resize(p.out_labeled.confidence.size() +
                              p.out_unlabeled.confidence.size());
                p.conf << p.out_labeled.confidence, p.out_unlabeled.confidence;
                p.preds.resize(p.out_labeled.predictions.size() +
                               p.out_unlabeled.predictions.size());
                p.preds << p.out_labeled.predictions, p.out_unlabeled.predictions;
            } else {
                p.conf = p.out_labeled.confidence;
                p.preds = p.out_labeled.predictions;
            }
        }
    });

    const bool collaborate = have_unlabeled && n_students >= 2;

    // Shared reliability state for this step.
    ReliabilityState rel;
    if (collaborate) {
        std::vector<Eigen::VectorXd> confs;
        confs.reserve(n_students);
        for (const PerStudent& p : ps) confs.push_back(p.conf);

        if (effective_mode_ == TrainMode::Collis) {
            rel = compute_reliability(confs, beta_, lambda_u_, config_.delta_0);
        } else {
            // Naive mutual distillation: flat reliability, fixed threshold
            // and loss weight, uniform source weights.
            const auto s = static_cast<int>(n_students);
            rel.beta = 0.0;
            rel.lambda_u = config_.lambda_0;
            rel.counts = Eigen::MatrixXi::Ones(s, s);
            rel.gamma.assign(s, std::vector<Ratio>(s));
            rel.delta = Eigen::MatrixXd::Constant(s, s, config_.delta_0);
            rel.omega = Eigen::MatrixXd::Constant(s, s, 1.0 / (s - 1));
            for (int i = 0; i < s; ++i) rel.omega(i, i) = 0.0;
        }
        if (config_.delta_override) rel.delta.setConstant(*config_.delta_override);

        rec.beta = rel.beta;
        rec.lambda_u = rel.lambda_u;
        rec.gamma.reserve(n_students * n_students);
        rec.delta.reserve(n_students * n_students);
        rec.omega.reserve(n_students * n_students);
        for (std::size_t i = 0; i < n_students; ++i)
            for (std::size_t j = 0; j < n_students; ++j) {
                rec.gamma.push_back(i == j ? 1.0 : rel.gamma[i][j].value());
                rec.delta.push_back(rel.delta(i, j));
                rec.omega.push_back(rel.omega(i, j));
            }
    }

    // Pseudo-label exchange: filtered per ordered (source -> target) pair.
    std::vector<std::vector<Eigen::VectorXi>> pair_labels(n_students);
    std::vector<std::vector<Mask>> pair_retained(n_students);
    std::vector<std::vector<Mask>> pair_eligible(n_students);
    Mask unlabeled_origin;
    if (collaborate) {
        if (mo.was_mixed) {
            unlabeled_origin.resize(mo.mixed.size());
            for (std::size_t i = 0; i < mo.mixed.size(); ++i)
                unlabeled_origin[i] = mo.mixed.origin[i] == kOriginB;
        } else {
            unlabeled_origin.assign(data_->unlabeled[plan.unlabeled_index].size(), 1);
        }

        rec.retained_counts.assign(n_students * n_students, 0);
        rec.eligible_counts.assign(n_students * n_students, 0);
        rec.unlabeled_origin_points =
            static_cast<std::int64_t>(mask_count(unlabeled_origin));
        for (std::size_t i = 0; i < n_students; ++i) {
            pair_labels[i].resize(n_students);
            pair_retained[i].resize(n_students);
            pair_eligible[i].resize(n_students);
            const StudentOutput& src = mo.was_mixed ? ps[i].out_mixed : ps[i].out_unlabeled;
            for (std::size_t t = 0; t < n_students; ++t) {
                if (t == i) continue;
                Mask eligible(unlabeled_origin.size());
                for (std::size_t m = 0; m < eligible.size(); ++m)
                    eligible[m] = unlabeled_origin[m] && ps[i].in_bounds_unlab[m] &&
                                  ps[t].in_bounds_unlab[m];
                auto [labels, retained] = filter_pseudo_labels(
                    src, rel.delta(static_cast<int>(i), static_cast<int>(t)), eligible);
                rec.retained_counts[i * n_students + t] =
                    static_cast<std::int64_t>(mask_count(retained));
                rec.eligible_counts[i * n_students + t] =
                    static_cast<std::int64_t>(mask_count(eligible));
                pair_labels[i][t] = std::move(labels);
                pair_retained[i][t] = std::move(retained);
                pair_eligible[i][t] = std::move(eligible);
            }
        }
    }

    // Per-student composite loss, backward and update.
    for_each_student([&](std::size_t t) {
        PerStudent& p = ps[t];
        StudentStepRecord& sr = rec.students[t];

        std::vector<PseudoSource> sources;
        if (collaborate) {
            for (std::size_t i = 0; i < n_students; ++i) {
                if (i == t) continue;
                sources.push_back(PseudoSource{pair_labels[i][t], pair_retained[i][t],
                                               rel.omega(static_cast<int>(i),
                                                         static_cast<int>(t))});
            }
        }

        ParamGrads grads;
        if (mo.was_mixed) {
            const Mask in_bounds = p.in_bounds_unlab;
            LossValue ll =
                make_zero_loss(p.out_mixed.probs.rows(), p.out_mixed.probs.cols());
            if (mo.mixed.has_labels()) {
                // A mix can drop every labeled-origin point; then no labels
                // survive and the labeled term is skipped for this step.
                Mask labeled_mask(mo.mixed.size(), 0);
                for (std::size_t m = 0; m < mo.mixed.size(); ++m)
                    labeled_mask[m] = mo.mixed.origin[m] == kOriginA && in_bounds[m] &&
                                      mo.mixed.labels[m] != kNoLabel;
                ll = labeled_loss(p.out_mixed.probs, mixed_targets, labeled_mask);
            }
            const LossValue lu = unlabeled_loss(p.out_mixed.probs, sources, rel.lambda_u);
            const LossValue lr =
                regularization_loss(p.out_mixed.probs, in_bounds, config_.lambda_reg);

            Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(p.out_mixed.probs.rows(),
                                                         p.out_mixed.probs.cols());
            if (ll.count > 0) grad += ll.grad_logits;
            if (lu.count > 0) grad += lu.grad_logits;
            if (lr.count > 0) grad += lr.grad_logits;
            grads = students_[t].backward(p.feats_mixed, p.trace_mixed, grad);

            sr.loss_labeled = ll.value;
            sr.loss_unlabeled = lu.value;
            sr.loss_reg = lr.value;
        } else {
            const LossValue ll = labeled_loss(p.out_labeled.probs, labeled_targets,
                                              p.feats_labeled->mapping.in_bounds_mask());
            grads = students_[t].backward(*p.feats_labeled, p.trace_labeled, ll.grad_logits);
            sr.loss_labeled = ll.value;

            if (have_unlabeled) {
                const LossValue lu = unlabeled_loss(p.out_unlabeled.probs, sources, rel.lambda_u);
                const LossValue lr = regularization_loss(p.out_unlabeled.probs,
                                                         p.in_bounds_unlab, config_.lambda_reg);
                Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(p.out_unlabeled.probs.rows(),
                                                             p.out_unlabeled.probs.cols());
                if (lu.count > 0) grad += lu.grad_logits;
                if (lr.count > 0) grad += lr.grad_logits;
                grads += students_[t].backward(*p.feats_unlabeled, p.trace_unlabeled, grad);
                sr.loss_unlabeled = lu.value;
                sr.loss_reg = lr.value;
            }
        }

        sr.loss_total = sr.loss_labeled + sr.loss_unlabeled + sr.loss_reg;
        if (!std::isfinite(sr.loss_total))
            throw DataError("non-finite loss for student " +
                            std::to_string(students_[t].id()));
        students_[t].step(grads);
    });

    // Diagnostics against the sealed ground truth (metrics-module gate).
    if (collaborate) {
        std::vector<std::int32_t> pick;
        Mask candidates;
        if (mo.was_mixed) {
            pick.resize(mo.mixed.size());
            candidates.resize(mo.mixed.size());
            for (std::size_t m = 0; m < mo.mixed.size(); ++m) {
                const bool unl = mo.mixed.origin[m] == kOriginB;
                pick[m] = unl ? mo.source_row[m] : -1;
                candidates[m] = unl;
            }
        } else {
            candidates.assign(data_->unlabeled[plan.unlabeled_index].size(), 1);
        }

        for_each_student([&](std::size_t s) {
            std::int64_t eligible = 0, retained = 0, correct = 0;
            for (std::size_t t = 0; t < n_students; ++t) {
                if (t == s) continue;
                const PseudoLabelQuality q = diagnostics_.pseudo_quality(
                    plan.unlabeled_index, pick, pair_eligible[s][t], pair_retained[s][t],
                    pair_labels[s][t]);
                eligible += q.n_eligible;
                retained += q.n_retained;
                correct += q.n_correct;
            }
            StudentStepRecord& sr = rec.students[s];
            sr.retention = eligible > 0 ? static_cast<double>(retained) / eligible : 0.0;
            if (retained > 0) sr.pseudo_accuracy = static_cast<double>(correct) / retained;

            const StudentOutput& out = mo.was_mixed ? ps[s].out_mixed : ps[s].out_unlabeled;
            sr.certainty_incorrect = diagnostics_.certainty(plan.unlabeled_index, pick,
                                                            out.probs, out.predictions,
                                                            candidates);
        });
    }

    if (n_students >= 2) {
        std::vector<Eigen::VectorXi> preds;
        preds.reserve(n_students);
        for (const PerStudent& p : ps) preds.push_back(p.preds);
        rec.consensus = consensus_fraction(preds);
        if (effective_mode_ == TrainMode::Collis) controller_.observe(rec.consensus, rec.was_mixed);
    }
}

std::vector<StepRecord> Trainer::run_epoch(int epoch) {
    current_epoch_ = epoch;
    switch (effective_mode_) {
        case TrainMode::Collis: {
            const auto [beta, lambda_u] =
                absolute_reliability(epoch, config_.epochs, config_.lambda_0);
            beta_ = beta;
            lambda_u_ = lambda_u;
            break;
        }
        case TrainMode::NaiveCodistill:
            beta_ = 0.0;
            lambda_u_ = config_.lambda_0;
            break;
        case TrainMode::SupervisedOnly:
            beta_ = 0.0;
            lambda_u_ = 0.0;
            break;
    }
    controller_.set_epoch(epoch, config_.epochs);

    const std::vector<IterationPlan> plan =
        epoch_schedule(config_.seed, epoch, data_->labeled.size(), data_->unlabeled.size());

    std::vector<StepRecord> records;
    records.reserve(plan.size());
    for (const IterationPlan& it : plan) {
        StepRecord rec;
        rec.iteration = global_iteration_++;
        rec.epoch = epoch;
        rec.beta = beta_;
        rec.lambda_u = lambda_u_;
        rec.students.resize(students_.size());

        try {
            if (effective_mode_ == TrainMode::SupervisedOnly) {
                step_supervised(it, rec);
            } else {
                rec.q_m = controller_.q();
                step_collaborative(it, rec);
            }
        } catch (const DataError& e) {
            serialize_abort(rec, it, e.what());
            throw;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void Trainer::serialize_abort(const StepRecord& rec, const IterationPlan& plan,
                              const std::string& reason) {
    if (!out_dir_) return;
    nlohmann::json j;
    j["reason"] = reason;
    j["iteration"] = rec.iteration;
    j["epoch"] = rec.epoch;
    j["q_m"] = rec.q_m;
    j["labeled_index"] = plan.labeled_index;
    j["labeled_file"] = "abort_labeled.pcls";
    write_cloud(data_->labeled[plan.labeled_index], num_classes_,
                *out_dir_ / "abort_labeled.pcls");
    if (plan.unlabeled_index != IterationPlan::npos) {
        j["unlabeled_index"] = plan.unlabeled_index;
        j["unlabeled_file"] = "abort_unlabeled.pcls";
        write_cloud(data_->unlabeled[plan.unlabeled_index], num_classes_,
                    *out_dir_ / "abort_unlabeled.pcls");
    }
    std::ofstream os(*out_dir_ / "abort_step.json");
    os << j.dump(2) << '\n';
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

}  // namespace

std::string step_record_json(const StepRecord& rec) {
    nlohmann::json j;
    j["type"] = "step";
    j["iter"] = rec.iteration;
    j["epoch"] = rec.epoch;
    j["q_m"] = rec.q_m;
    j["a"] = rec.consensus;
    j["mixed"] = rec.was_mixed;
    j["strategy"] = mix_strategy_name(rec.strategy);
    j["beta"] = rec.beta;
    j["lambda_u"] = rec.lambda_u;
    j["gamma"] = rec.gamma;
    j["delta"] = rec.delta;
    j["omega"] = rec.omega;
    j["retained"] = rec.retained_counts;
    j["eligible"] = rec.eligible_counts;
    j["unlabeled_points"] = rec.unlabeled_origin_points;
    j["students"] = nlohmann::json::array();
    for (const StudentStepRecord& s : rec.students) {
        j["students"].push_back({{"loss_labeled", s.loss_labeled},
                                 {"loss_unlabeled", s.loss_unlabeled},
                                 {"loss_reg", s.loss_reg},
                                 {"loss_total", s.loss_total},
                                 {"retention", s.retention},
                                 {"pseudo_accuracy", optional_json(s.pseudo_accuracy)},
                                 {"certainty_incorrect", optional_json(s.certainty_incorrect)}});
    }
    return j.dump();
}

std::string epoch_summary_json(const EpochSummary& summary) {
    nlohmann::json j;
    j["type"] = "epoch";
    j["epoch"] = summary.epoch;
    j["q_m"] = summary.q_m;
    j["beta"] = summary.beta;
    j["lambda_u"] = summary.lambda_u;
    j["val_miou"] = summary.val_miou;
    j["ensemble_miou"] = summary.ensemble_miou;
    j["mean_retention"] = summary.mean_retention;
    j["mean_certainty"] = nlohmann::json::array();
    for (const auto& c : summary.mean_certainty)
        j["mean_certainty"].push_back(optional_json(c));
    return j.dump();
}

TrainResult Trainer::run(const std::optional<std::filesystem::path>& out_dir) {
    out_dir_ = out_dir;
    std::ofstream log;
    if (out_dir_) {
        std::filesystem::create_directories(*out_dir_);
        log.open(*out_dir_ / "metrics.jsonl");
        if (!log) throw IoError("cannot open metrics log for writing");
    }

    TrainResult result;
    std::vector<IouCsvRow> csv_rows;
    std::vector<std::string> class_names = config_.class_names;
    while (static_cast<int>(class_names.size()) < num_classes_)
        class_names.push_back("class" + std::to_string(class_names.size()));

    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
        std::vector<StepRecord> steps = run_epoch(epoch);

        EpochSummary summary;
        summary.epoch = epoch;
        summary.q_m = controller_.q();
        summary.beta = beta_;
        summary.lambda_u = lambda_u_;

        const std::size_t n_students = students_.size();
        summary.mean_retention.assign(n_students, 0.0);
        summary.mean_certainty.assign(n_students, std::nullopt);
        std::vector<double> cert_sum(n_students, 0.0);
        std::vector<int> cert_n(n_students, 0);
        for (const StepRecord& r : steps) {
            for (std::size_t s = 0; s < n_students; ++s) {
                summary.mean_retention[s] += r.students[s].retention;
                if (r.students[s].certainty_incorrect) {
                    cert_sum[s] += *r.students[s].certainty_incorrect;
                    ++cert_n[s];
                }
            }
        }
        for (std::size_t s = 0; s < n_students; ++s) {
            if (!steps.empty()) summary.mean_retention[s] /= static_cast<double>(steps.size());
            if (cert_n[s] > 0) summary.mean_certainty[s] = cert_sum[s] / cert_n[s];
        }

        if (!data_->validation.empty()) {
            const EvalResult eval = evaluate(students_, data_->validation, num_classes_);
            for (std::size_t s = 0; s < n_students; ++s) {
                summary.val_miou.push_back(eval.students[s].miou);
                csv_rows.push_back(IouCsvRow{epoch, students_[s].id(),
                                             eval.students[s].per_class,
                                             eval.students[s].miou});
            }
            summary.ensemble_miou = eval.ensemble.miou;
            csv_rows.push_back(
                IouCsvRow{epoch, -1, eval.ensemble.per_class, eval.ensemble.miou});
        }

        if (out_dir_) {
            for (const StepRecord& r : steps) log << step_record_json(r) << '\n';
            log << epoch_summary_json(summary) << '\n';
            for (const Student& s : students_)
                s.save_checkpoint(*out_dir_ / ("student_" + std::to_string(s.id()) + ".ckpt"));
        }

        for (StepRecord& r : steps) result.steps.push_back(std::move(r));
        result.epochs.push_back(std::move(summary));
    }

    if (out_dir_) {
        write_iou_csv(*out_dir_ / "iou.csv", csv_rows, class_names);
        log.close();
    }
    return result;
}

}  // namespace collis
