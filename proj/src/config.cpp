#include "collis/config.hpp"

#include <fstream>
#include <set>

#include "collis/rng.hpp"
#include "json.hpp"

namespace collis {

std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index) {
    return derive_stream(master, name, index).next_u64();
}

RunConfig default_run_config() {
    RunConfig cfg;
    StudentConfig range;
    range.id = 0;
    range.repr = ReprConfig::range_default();
    StudentConfig polar;
    polar.id = 1;
    polar.repr = ReprConfig::polar_default();
    StudentConfig voxel;
    voxel.id = 2;
    voxel.repr = ReprConfig::voxel_default();
    cfg.students = {range, polar, voxel};
    return cfg;
}

void RunConfig::validate() const {
    if (data.train_scenes < 2) throw ConfigError("data.train_scenes must be at least 2");
    if (data.val_scenes < 0) throw ConfigError("data.val_scenes must be nonnegative");
    if (!(data.label_fraction > 0.0 && data.label_fraction <= 1.0))
        throw ConfigError("data.label_fraction must be in (0, 1]");
    data.scene.validate();
    if (students.empty()) throw ConfigError("at least one student required");
    trainer_config().validate();
}

TrainerConfig RunConfig::trainer_config() const {
    TrainerConfig tc;
    tc.mode = mode;
    tc.epochs = epochs;
    tc.lambda_0 = lambda_0;
    tc.delta_0 = delta_0;
    tc.lambda_reg = lambda_reg;
    tc.seed = data.seed;
    tc.log_window = log_window;
    tc.cda = cda;
    tc.mix.fov_up_deg = data.scene.fov_up_deg;
    tc.mix.fov_down_deg = data.scene.fov_down_deg;
    tc.students = students;
    for (StudentConfig& s : tc.students) {
        s.hidden = hidden;
        s.learning_rate = learning_rate;
    }
    tc.class_names = data.scene.classes.names;
    return tc;
}

TrainMode parse_train_mode(const std::string& name) {
    if (name == "collis") return TrainMode::Collis;
    if (name == "naive" || name == "naive_codistill") return TrainMode::NaiveCodistill;
    if (name == "sup" || name == "supervised_only") return TrainMode::SupervisedOnly;
    throw ConfigError("unknown mode: " + name);
}

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& section,
                  const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError("unknown config key: " + section + "." + it.key());
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_data(const json& j, DataConfig& data) {
    require_keys(j, "data",
                 {"train_scenes", "val_scenes", "label_fraction", "long_tail", "seed",
                  "elevation_rows", "azimuth_cols", "fov_up_deg", "fov_down_deg",
                  "ground_radius", "max_vehicles", "max_poles", "max_vegetation",
                  "intensity_noise", "scene_intensity_shift", "ground_tilt",
                  "max_ray_dropout"});
    read_field(j, "train_scenes", data.train_scenes);
    read_field(j, "val_scenes", data.val_scenes);
    read_field(j, "label_fraction", data.label_fraction);
    read_field(j, "long_tail", data.long_tail);
    read_field(j, "seed", data.seed);
    read_field(j, "elevation_rows", data.scene.elevation_rows);
    read_field(j, "azimuth_cols", data.scene.azimuth_cols);
    read_field(j, "fov_up_deg", data.scene.fov_up_deg);
    read_field(j, "fov_down_deg", data.scene.fov_down_deg);
    read_field(j, "ground_radius", data.scene.ground_radius);
    read_field(j, "max_vehicles", data.scene.max_vehicles);
    read_field(j, "max_poles", data.scene.max_poles);
    read_field(j, "max_vegetation", data.scene.max_vegetation);
    read_field(j, "intensity_noise", data.scene.intensity_noise);
    read_field(j, "scene_intensity_shift", data.scene.scene_intensity_shift);
    read_field(j, "ground_tilt", data.scene.ground_tilt);
    read_field(j, "max_ray_dropout", data.scene.max_ray_dropout);
    data.scene.classes = ClassMap::default_map(data.long_tail);
}

ReprKind parse_repr_kind(const std::string& name) {
    if (name == "range") return ReprKind::Range;
    if (name == "polar") return ReprKind::Polar;
    if (name == "voxel") return ReprKind::Voxel;
    throw ConfigError("unknown representation kind: " + name);
}

StudentConfig parse_student(const json& j, int index) {
    const std::string section = "students[" + std::to_string(index) + "]";
    require_keys(j, section,
                 {"id", "kind", "rows", "cols", "fov_up_deg", "fov_down_deg", "radial_bins",
                  "azimuth_bins", "max_radius", "height_bins", "z_min", "z_max"});
    if (!j.contains("kind")) throw ConfigError(section + " needs a kind");

    StudentConfig sc;
    sc.id = index;
    const ReprKind kind = parse_repr_kind(j.at("kind").get<std::string>());
    switch (kind) {
        case ReprKind::Range: sc.repr = ReprConfig::range_default(); break;
        case ReprKind::Polar: sc.repr = ReprConfig::polar_default(); break;
        case ReprKind::Voxel: sc.repr = ReprConfig::voxel_default(); break;
    }
    read_field(j, "id", sc.id);
    read_field(j, "rows", sc.repr.rows);
    read_field(j, "cols", sc.repr.cols);
    read_field(j, "fov_up_deg", sc.repr.fov_up_deg);
    read_field(j, "fov_down_deg", sc.repr.fov_down_deg);
    read_field(j, "radial_bins", sc.repr.radial_bins);
    read_field(j, "azimuth_bins", sc.repr.azimuth_bins);
    read_field(j, "max_radius", sc.repr.max_radius);
    read_field(j, "height_bins", sc.repr.height_bins);
    read_field(j, "z_min", sc.repr.z_min);
    read_field(j, "z_max", sc.repr.z_max);
    return sc;
}

CdaMode parse_cda_mode(const std::string& name) {
    if (name == "constant") return CdaMode::Constant;
    if (name == "curriculum") return CdaMode::Curriculum;
    if (name == "consensus") return CdaMode::Consensus;
    throw ConfigError("unknown cda mode: " + name);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    require_keys(j, "<root>", {"data", "students", "training", "cda", "output_dir"});

    RunConfig cfg = default_run_config();
    if (j.contains("data")) parse_data(j.at("data"), cfg.data);

    if (j.contains("students")) {
        const json& arr = j.at("students");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("students must be a non-empty array");
        cfg.students.clear();
        for (std::size_t i = 0; i < arr.size(); ++i)
            cfg.students.push_back(parse_student(arr[i], static_cast<int>(i)));
    }

    if (j.contains("training")) {
        const json& t = j.at("training");
        require_keys(t, "training",
                     {"mode", "epochs", "lambda_0", "delta_0", "lambda_reg", "learning_rate",
                      "hidden", "log_window"});
        if (t.contains("mode")) cfg.mode = parse_train_mode(t.at("mode").get<std::string>());
        read_field(t, "epochs", cfg.epochs);
        read_field(t, "lambda_0", cfg.lambda_0);
        read_field(t, "delta_0", cfg.delta_0);
        read_field(t, "lambda_reg", cfg.lambda_reg);
        read_field(t, "learning_rate", cfg.learning_rate);
        read_field(t, "hidden", cfg.hidden);
        read_field(t, "log_window", cfg.log_window);
    }

    if (j.contains("cda")) {
        const json& c = j.at("cda");
        require_keys(c, "cda", {"mode", "q_init", "step_size", "q_min", "q_max"});
        if (c.contains("mode")) cfg.cda.mode = parse_cda_mode(c.at("mode").get<std::string>());
        read_field(c, "q_init", cfg.cda.q_init);
        read_field(c, "step_size", cfg.cda.step_size);
        read_field(c, "q_min", cfg.cda.q_min);
        read_field(c, "q_max", cfg.cda.q_max);
    }

    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

DatasetSplit build_dataset(const RunConfig& config) {
    config.validate();
    std::vector<PointCloud> scenes;
    scenes.reserve(config.data.train_scenes);
    for (int i = 0; i < config.data.train_scenes; ++i)
        scenes.push_back(generate_scene(
            derive_seed(config.data.seed, "train-scene", static_cast<std::uint64_t>(i)),
            config.data.scene));

    DatasetSplit split = split_dataset(std::move(scenes), config.data.label_fraction,
                                       derive_seed(config.data.seed, "split"));

    split.validation.reserve(config.data.val_scenes);
    for (int i = 0; i < config.data.val_scenes; ++i)
        split.validation.push_back(generate_scene(
            derive_seed(config.data.seed, "val-scene", static_cast<std::uint64_t>(i)),
            config.data.scene));
    return split;
}

}  // namespace collis
