#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "collis/rng.hpp"
#include "collis/types.hpp"

namespace collis {

struct Point {
    float x = 0.f;
    float y = 0.f;
    float z = 0.f;
    float intensity = 0.f;
};

// Origin tag for points of a mixed cloud: which pre-mix cloud they came from.
inline constexpr std::uint8_t kOriginA = 0;  // labeled-source
inline constexpr std::uint8_t kOriginB = 1;  // unlabeled-source

// Label sentinel for points whose source cloud carried no labels. Never a
// valid class index and rejected by the file format.
inline constexpr std::uint8_t kNoLabel = 0xff;

struct PointCloud {
    std::vector<Point> points;
    std::vector<std::uint8_t> labels;  // empty, or one class index per point
    std::vector<std::uint8_t> origin;  // empty, or one origin tag per point

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_labels() const { return !labels.empty(); }
    bool has_origin() const { return !origin.empty(); }

    // Checks array lengths, finiteness, intensity range and label indices.
    void validate(int num_classes) const;
};

struct ClassMap {
    int num_classes = 0;
    std::vector<std::string> names;
    std::vector<double> weights;  // expected per-class point fraction, sums to 1

    void validate() const;

    // ground / vehicle / pole / vegetation. With long_tail the pole class is
    // shrunk to a rare-class sliver.
    static ClassMap default_map(bool long_tail = false);
};

inline constexpr int kClassGround = 0;
inline constexpr int kClassVehicle = 1;
inline constexpr int kClassPole = 2;
inline constexpr int kClassVegetation = 3;

// Synthetic scene layout. Scenes are ray-cast with an E x A beam pattern so
// elevation/azimuth mixing operates on realistic scan geometry.
struct SceneConfig {
    int elevation_rows = 16;
    int azimuth_cols = 64;
    double fov_up_deg = 15.0;
    double fov_down_deg = -15.0;
    double sensor_height = 1.8;

    double ground_radius = 40.0;
    int max_vehicles = 9;
    int max_poles = 10;
    int max_vegetation = 8;

    // Class-conditional intensity model. Returns attenuate with distance, so
    // the class signature is a curve over range rather than a flat band;
    // per-scene calibration jitter stays below the class gaps.
    double intensity_noise = 0.13;
    double scene_intensity_shift = 0.05;
    double intensity_attenuation = 0.22;  // absolute fall-off at the disc edge
    double ground_tilt = 0.02;  // stddev of per-scene ground slope coefficients

    // Each scene drops a random fraction of rays, up to this bound. Scene
    // density becomes a nuisance dimension of its own.
    double max_ray_dropout = 0.6;

    ClassMap classes = ClassMap::default_map();

    void validate() const;
};

// Casts the beam pattern against the scene surfaces; a point is emitted at
// the first hit per ray. Pure function of (seed, config).
PointCloud generate_scene(std::uint64_t seed, const SceneConfig& config);

// Ground-truth labels of unlabeled scenes, kept for diagnostics only. The
// training path cannot read them: access goes through the metrics module
// (see metrics.hpp), which is the sole friend.
class SealedLabels {
public:
    SealedLabels() = default;

    std::size_t scene_count() const { return store_.size(); }

    void seal(std::vector<std::uint8_t> labels) { store_.push_back(std::move(labels)); }

private:
    friend class DiagnosticAccess;
    std::vector<std::vector<std::uint8_t>> store_;
};

struct DatasetSplit {
    std::vector<PointCloud> labeled;
    std::vector<PointCloud> unlabeled;  // labels stripped into diagnostics
    std::vector<PointCloud> validation;
    SealedLabels diagnostics;  // indexed like `unlabeled`
    std::vector<std::size_t> labeled_indices;    // positions in the input scene list
    std::vector<std::size_t> unlabeled_indices;
};

// Uniformly samples ceil(fraction * |scenes|) scenes as labeled; the rest
// become unlabeled with their labels moved into the sealed store.
DatasetSplit split_dataset(std::vector<PointCloud> scenes, double labeled_fraction,
                           std::uint64_t seed);

// Binary point-cloud file ("PCLS" format). Round-trips bit-exactly.
void write_cloud(const PointCloud& cloud, int num_classes, const std::filesystem::path& path);

struct CloudFile {
    PointCloud cloud;
    int num_classes = 0;
};

CloudFile read_cloud(const std::filesystem::path& path);

}  // namespace collis
