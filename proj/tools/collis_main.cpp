#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "collis/config.hpp"
#include "collis/trainer.hpp"
#include "json.hpp"

namespace {

using namespace collis;

int worker_cap_from_env() {
    const char* env = std::getenv("COLLIS_THREADS");
    if (!env) return 0;
    const int v = std::atoi(env);
    return v > 0 ? v : 1;
}

void print_eval_table(const RunConfig& cfg, const EvalResult& eval) {
    std::printf("%-10s %-8s", "student", "repr");
    for (const std::string& name : cfg.data.scene.classes.names)
        std::printf(" %10s", name.c_str());
    std::printf(" %10s\n", "mIoU");
    for (std::size_t s = 0; s < eval.students.size(); ++s) {
        std::printf("%-10d %-8s", cfg.students[s].id,
                    repr_kind_name(cfg.students[s].repr.kind).c_str());
        for (Eigen::Index c = 0; c < eval.students[s].per_class.size(); ++c)
            std::printf(" %10.4f", eval.students[s].per_class[c]);
        std::printf(" %10.4f\n", eval.students[s].miou);
    }
    std::printf("%-10s %-8s", "ensemble", "-");
    for (Eigen::Index c = 0; c < eval.ensemble.per_class.size(); ++c)
        std::printf(" %10.4f", eval.ensemble.per_class[c]);
    std::printf(" %10.4f\n", eval.ensemble.miou);
}

std::vector<Student> make_students(const RunConfig& cfg) {
    const TrainerConfig tc = cfg.trainer_config();
    std::vector<Student> students;
    for (const StudentConfig& sc : tc.students)
        students.emplace_back(sc, cfg.data.scene.classes.num_classes, tc.seed);
    return students;
}

void load_all_checkpoints(std::vector<Student>& students,
                          const std::filesystem::path& ckpt_dir) {
    for (Student& s : students)
        s.load_checkpoint(ckpt_dir / ("student_" + std::to_string(s.id()) + ".ckpt"));
}

int cmd_gen_data(const RunConfig& cfg) {
    const auto dir = cfg.output_dir / "data";
    std::filesystem::create_directories(dir);
    const int k = cfg.data.scene.classes.num_classes;

    std::vector<PointCloud> scenes;
    for (int i = 0; i < cfg.data.train_scenes; ++i)
        scenes.push_back(generate_scene(
            derive_seed(cfg.data.seed, "train-scene", static_cast<std::uint64_t>(i)),
            cfg.data.scene));

    nlohmann::json manifest;
    manifest["num_classes"] = k;
    manifest["seed"] = cfg.data.seed;
    manifest["label_fraction"] = cfg.data.label_fraction;
    manifest["train"] = nlohmann::json::array();
    manifest["validation"] = nlohmann::json::array();

    char name[32];
    for (int i = 0; i < cfg.data.train_scenes; ++i) {
        std::snprintf(name, sizeof(name), "train_%04d.pcls", i);
        write_cloud(scenes[static_cast<std::size_t>(i)], k, dir / name);
        manifest["train"].push_back(name);
    }
    for (int i = 0; i < cfg.data.val_scenes; ++i) {
        const PointCloud scene = generate_scene(
            derive_seed(cfg.data.seed, "val-scene", static_cast<std::uint64_t>(i)),
            cfg.data.scene);
        std::snprintf(name, sizeof(name), "val_%04d.pcls", i);
        write_cloud(scene, k, dir / name);
        manifest["validation"].push_back(name);
    }

    const DatasetSplit split = split_dataset(std::move(scenes), cfg.data.label_fraction,
                                             derive_seed(cfg.data.seed, "split"));
    manifest["labeled_indices"] = split.labeled_indices;
    manifest["unlabeled_indices"] = split.unlabeled_indices;

    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot write split manifest");
    os << manifest.dump(2) << '\n';
    std::printf("wrote %d train + %d validation scenes to %s (%zu labeled, %zu unlabeled)\n",
                cfg.data.train_scenes, cfg.data.val_scenes, dir.string().c_str(),
                split.labeled_indices.size(), split.unlabeled_indices.size());
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const DatasetSplit data = build_dataset(cfg);
    TrainerConfig tc = cfg.trainer_config();
    tc.worker_cap = worker_cap_from_env();
    Trainer trainer(tc, data, cfg.data.scene.classes.num_classes);
    const TrainResult result = trainer.run(cfg.output_dir);

    if (!result.epochs.empty()) {
        const EpochSummary& last = result.epochs.back();
        std::printf("mode=%s epochs=%d final q_m=%.4f\n", train_mode_name(cfg.mode).c_str(),
                    cfg.epochs, last.q_m);
        for (std::size_t s = 0; s < last.val_miou.size(); ++s)
            std::printf("student %d (%s): val mIoU %.4f\n", cfg.students[s].id,
                        repr_kind_name(cfg.students[s].repr.kind).c_str(), last.val_miou[s]);
        std::printf("ensemble: val mIoU %.4f\n", last.ensemble_miou);
    }
    std::printf("metrics log: %s\n", (cfg.output_dir / "metrics.jsonl").string().c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_dir) {
    const DatasetSplit data = build_dataset(cfg);
    std::vector<Student> students = make_students(cfg);
    load_all_checkpoints(students,
                         ckpt_dir.empty() ? cfg.output_dir : std::filesystem::path(ckpt_dir));
    const EvalResult eval =
        evaluate(students, data.validation, cfg.data.scene.classes.num_classes);
    print_eval_table(cfg, eval);
    return 0;
}

int cmd_export_distill(const RunConfig& cfg, const std::string& ckpt_dir) {
    const DatasetSplit data = build_dataset(cfg);
    std::vector<Student> students = make_students(cfg);
    load_all_checkpoints(students,
                         ckpt_dir.empty() ? cfg.output_dir : std::filesystem::path(ckpt_dir));
    const auto files =
        export_distillation_set(students, data.labeled, data.unlabeled,
                                cfg.data.scene.classes.num_classes, cfg.output_dir / "distill");
    std::printf("wrote %zu distillation scenes to %s\n", files.size(),
                (cfg.output_dir / "distill").string().c_str());
    return 0;
}

int cmd_compare(const RunConfig& cfg) {
    const DatasetSplit data = build_dataset(cfg);
    const int k = cfg.data.scene.classes.num_classes;
    const TrainMode modes[3] = {TrainMode::SupervisedOnly, TrainMode::NaiveCodistill,
                                TrainMode::Collis};

    std::filesystem::create_directories(cfg.output_dir);
    std::ofstream csv(cfg.output_dir / "compare.csv");
    if (!csv) throw IoError("cannot write compare.csv");
    csv << "mode,epoch,student,val_miou,mean_certainty,mean_retention\n";

    std::vector<TrainResult> results;
    for (TrainMode mode : modes) {
        RunConfig run_cfg = cfg;
        run_cfg.mode = mode;
        TrainerConfig tc = run_cfg.trainer_config();
        tc.worker_cap = worker_cap_from_env();
        Trainer trainer(tc, data, k);
        std::fprintf(stderr, "running mode %s...\n", train_mode_name(mode).c_str());
        results.push_back(trainer.run());

        for (const EpochSummary& e : results.back().epochs) {
            for (std::size_t s = 0; s < e.val_miou.size(); ++s) {
                csv << train_mode_name(mode) << ',' << e.epoch << ',' << cfg.students[s].id
                    << ',' << e.val_miou[s] << ',';
                if (e.mean_certainty[s]) csv << *e.mean_certainty[s];
                csv << ',' << e.mean_retention[s] << '\n';
            }
        }
    }

    std::printf("%-18s", "final val mIoU");
    for (const StudentConfig& s : cfg.students)
        std::printf(" %10s", repr_kind_name(s.repr.kind).c_str());
    std::printf("\n");
    for (std::size_t m = 0; m < 3; ++m) {
        std::printf("%-18s", train_mode_name(modes[m]).c_str());
        const EpochSummary& last = results[m].epochs.back();
        for (double v : last.val_miou) std::printf(" %10.4f", v);
        std::printf("\n");
    }
    std::printf("\n%-18s", "final certainty");
    for (const StudentConfig& s : cfg.students)
        std::printf(" %10s", repr_kind_name(s.repr.kind).c_str());
    std::printf("\n");
    for (std::size_t m = 1; m < 3; ++m) {
        std::printf("%-18s", train_mode_name(modes[m]).c_str());
        const EpochSummary& last = results[m].epochs.back();
        for (const auto& c : last.mean_certainty) {
            if (c)
                std::printf(" %10.4f", *c);
            else
                std::printf(" %10s", "-");
        }
        std::printf("\n");
    }
    std::printf("\ncomparison table: %s\n", (cfg.output_dir / "compare.csv").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"collis: collaborative semi-supervised point-cloud segmentation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string mode_override;
    std::string ckpt_dir;
    std::optional<std::uint64_t> seed_override;

    app.add_option("--config", config_path, "JSON experiment config (defaults when omitted)");
    app.add_option("--seed", seed_override, "master seed override");
    app.add_option("--out", out_override, "output directory override");
    app.add_option("--mode", mode_override, "training mode override: collis|naive|sup");

    CLI::App* gen = app.add_subcommand("gen-data", "write scene files and the split manifest");
    CLI::App* train = app.add_subcommand("train", "run a full training experiment");
    CLI::App* eval = app.add_subcommand("eval", "evaluate checkpoints on the validation set");
    CLI::App* exp =
        app.add_subcommand("export-distill", "export the ensemble-labeled distillation set");
    CLI::App* cmp =
        app.add_subcommand("compare", "run supervised/naive/collis with shared seeds");
    eval->add_option("--ckpt-dir", ckpt_dir, "checkpoint directory (default: output dir)");
    exp->add_option("--ckpt-dir", ckpt_dir, "checkpoint directory (default: output dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg =
            config_path.empty() ? collis::default_run_config() : load_run_config(config_path);
        if (seed_override) cfg.data.seed = *seed_override;
        if (!out_override.empty()) cfg.output_dir = out_override;
        if (!mode_override.empty()) cfg.mode = parse_train_mode(mode_override);
        cfg.validate();

        if (gen->parsed()) return cmd_gen_data(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed()) return cmd_eval(cfg, ckpt_dir);
        if (exp->parsed()) return cmd_export_distill(cfg, ckpt_dir);
        if (cmp->parsed()) return cmd_compare(cfg);
    } catch (const collis::ConfigError& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "config"}}.dump() << '\n';
        return 2;
    } catch (const collis::Error& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "runtime"}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "internal"}}.dump() << '\n';
        return 1;
    }
    return 0;
}
