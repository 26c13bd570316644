#include "collis/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace collis {

void PointCloud::validate(int num_classes) const {
    const std::size_t n = points.size();
    if (!labels.empty() && labels.size() != n)
        throw DataError("labels length does not match point count");
    if (!origin.empty() && origin.size() != n)
        throw DataError("origin length does not match point count");
    for (const Point& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
            !std::isfinite(p.intensity))
            throw DataError("non-finite point coordinates");
        if (p.intensity < 0.f || p.intensity > 1.f)
            throw DataError("intensity outside [0, 1]");
    }
    for (std::uint8_t l : labels) {
        if (l != kNoLabel && l >= num_classes)
            throw DataError("label index out of range");
    }
    for (std::uint8_t o : origin) {
        if (o > 1) throw DataError("origin tag out of range");
    }
}

void ClassMap::validate() const {
    if (num_classes < 2) throw ConfigError("need at least 2 classes");
    if (static_cast<int>(names.size()) != num_classes)
        throw ConfigError("class name count mismatch");
    if (static_cast<int>(weights.size()) != num_classes)
        throw ConfigError("class weight count mismatch");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("class weights must sum to 1");
}

ClassMap ClassMap::default_map(bool long_tail) {
    ClassMap m;
    m.num_classes = 4;
    m.names = {"ground", "vehicle", "pole", "vegetation"};
    m.weights = long_tail ? std::vector<double>{0.725, 0.12, 0.005, 0.15}
                          : std::vector<double>{0.70, 0.12, 0.03, 0.15};
    return m;
}

void SceneConfig::validate() const {
    if (elevation_rows <= 0 || azimuth_cols <= 0)
        throw ConfigError("beam pattern needs at least one ray");
    if (fov_up_deg <= fov_down_deg) throw ConfigError("fov_up must exceed fov_down");
    if (ground_radius <= 0) throw ConfigError("ground radius must be positive");
    if (max_vehicles < 0 || max_poles < 0 || max_vegetation < 0)
        throw ConfigError("object counts must be nonnegative");
    classes.validate();
    if (classes.num_classes < 4)
        throw ConfigError("scene generator expects the 4-class default taxonomy");
}

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
    double x, y, z;
};

struct Box {
    double cx, cy, base;      // center and ground height
    double hx, hy, h;         // half extents and height
    double cos_yaw, sin_yaw;  // rotation about z

    // Slab test in the box frame; returns nearest positive hit.
    bool intersect(const Vec3& o, const Vec3& d, double& t_hit) const {
        const double ox = o.x - cx, oy = o.y - cy, oz = o.z - base;
        const double lox = cos_yaw * ox + sin_yaw * oy;
        const double loy = -sin_yaw * ox + cos_yaw * oy;
        const double ldx = cos_yaw * d.x + sin_yaw * d.y;
        const double ldy = -sin_yaw * d.x + cos_yaw * d.y;

        double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
        const double lo[3] = {lox, loy, oz};
        const double ld[3] = {ldx, ldy, d.z};
        const double mn[3] = {-hx, -hy, 0.0};
        const double mx[3] = {hx, hy, h};
        for (int i = 0; i < 3; ++i) {
            if (std::abs(ld[i]) < 1e-12) {
                if (lo[i] < mn[i] || lo[i] > mx[i]) return false;
                continue;
            }
            double ta = (mn[i] - lo[i]) / ld[i];
            double tb = (mx[i] - lo[i]) / ld[i];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            if (t0 > t1) return false;
        }
        if (t0 <= 1e-9) return false;
        t_hit = t0;
        return true;
    }
};

struct Cylinder {
    double cx, cy, base, r, h;

    bool intersect(const Vec3& o, const Vec3& d, double& t_hit) const {
        const double ox = o.x - cx, oy = o.y - cy;
        const double a = d.x * d.x + d.y * d.y;
        if (a < 1e-12) return false;
        const double b = 2.0 * (ox * d.x + oy * d.y);
        const double c = ox * ox + oy * oy - r * r;
        const double disc = b * b - 4 * a * c;
        if (disc < 0) return false;
        const double sq = std::sqrt(disc);
        for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
            if (t <= 1e-9) continue;
            const double z = o.z + t * d.z;
            if (z >= base && z <= base + h) {
                t_hit = t;
                return true;
            }
        }
        return false;
    }
};

struct Ellipsoid {
    double cx, cy, cz, sa, sb, sc;

    bool intersect(const Vec3& o, const Vec3& d, double& t_hit) const {
        const double ox = (o.x - cx) / sa, oy = (o.y - cy) / sb, oz = (o.z - cz) / sc;
        const double dx = d.x / sa, dy = d.y / sb, dz = d.z / sc;
        const double a = dx * dx + dy * dy + dz * dz;
        const double b = 2.0 * (ox * dx + oy * dy + oz * dz);
        const double c = ox * ox + oy * oy + oz * oz - 1.0;
        const double disc = b * b - 4 * a * c;
        if (disc < 0) return false;
        const double sq = std::sqrt(disc);
        const double t = (-b - sq) / (2 * a);
        if (t <= 1e-9) return false;
        t_hit = t;
        return true;
    }
};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

PointCloud generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
    cfg.validate();
    RngStream rng = derive_stream(seed, "scene");

    // Per-scene nuisances: ground slope, a global intensity shift and the
    // ray dropout rate.
    const double tilt_x = rng.next_normal(0.0, cfg.ground_tilt);
    const double tilt_y = rng.next_normal(0.0, cfg.ground_tilt);
    const double shift = rng.next_normal(0.0, cfg.scene_intensity_shift);
    const double dropout = rng.next_double(0.0, cfg.max_ray_dropout);

    std::vector<Box> vehicles(rng.next_below(cfg.max_vehicles + 1));
    for (Box& v : vehicles) {
        const double rho = rng.next_double(5.0, 30.0);
        const double phi = rng.next_double(-kPi, kPi);
        v.cx = rho * std::cos(phi);
        v.cy = rho * std::sin(phi);
        v.base = tilt_x * v.cx + tilt_y * v.cy;
        v.hx = 0.5 * rng.next_double(3.5, 5.0);
        v.hy = 0.5 * rng.next_double(1.6, 2.2);
        v.h = rng.next_double(1.0, 2.6);
        const double yaw = rng.next_double(-kPi, kPi);
        v.cos_yaw = std::cos(yaw);
        v.sin_yaw = std::sin(yaw);
    }

    std::vector<Cylinder> poles(rng.next_below(cfg.max_poles + 1));
    for (Cylinder& p : poles) {
        const double rho = rng.next_double(4.0, 30.0);
        const double phi = rng.next_double(-kPi, kPi);
        p.cx = rho * std::cos(phi);
        p.cy = rho * std::sin(phi);
        p.base = tilt_x * p.cx + tilt_y * p.cy;
        p.r = rng.next_double(0.15, 0.45);
        p.h = rng.next_double(4.0, 7.0);
    }

    std::vector<Ellipsoid> blobs(rng.next_below(cfg.max_vegetation + 1));
    for (Ellipsoid& e : blobs) {
        const double rho = rng.next_double(6.0, 30.0);
        const double phi = rng.next_double(-kPi, kPi);
        e.cx = rho * std::cos(phi);
        e.cy = rho * std::sin(phi);
        e.cz = rng.next_double(1.0, 3.0);
        e.sa = rng.next_double(0.8, 3.5);
        e.sb = rng.next_double(0.8, 3.5);
        e.sc = rng.next_double(0.7, 2.4);
    }

    const double class_mean[4] = {0.30, 0.68, 0.95, 0.50};
    const double fov_up = cfg.fov_up_deg * kPi / 180.0;
    const double fov_down = cfg.fov_down_deg * kPi / 180.0;
    const Vec3 o{0.0, 0.0, cfg.sensor_height};

    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(cfg.elevation_rows) * cfg.azimuth_cols);

    for (int row = 0; row < cfg.elevation_rows; ++row) {
        const double theta = fov_up - (row + 0.5) / cfg.elevation_rows * (fov_up - fov_down);
        for (int col = 0; col < cfg.azimuth_cols; ++col) {
            const double phi = -kPi + (col + 0.5) / cfg.azimuth_cols * 2.0 * kPi;
            const Vec3 d{std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi),
                         std::sin(theta)};

            // Dropout and foliage pass-through decisions are drawn for every
            // ray so the stream stays aligned whether or not a hit occurs.
            const bool dropped = rng.next_double() < dropout;
            std::vector<bool> blob_solid(blobs.size());
            for (std::size_t i = 0; i < blobs.size(); ++i)
                blob_solid[i] = rng.next_double() < 0.65;
            if (dropped) continue;

            double best_t = std::numeric_limits<double>::infinity();
            int best_class = -1;

            // Ground plane z = tilt_x*x + tilt_y*y inside the disc.
            const double denom = d.z - tilt_x * d.x - tilt_y * d.y;
            if (std::abs(denom) > 1e-12) {
                const double t = -(o.z - tilt_x * o.x - tilt_y * o.y) / denom;
                if (t > 1e-9) {
                    const double gx = o.x + t * d.x, gy = o.y + t * d.y;
                    if (gx * gx + gy * gy <= cfg.ground_radius * cfg.ground_radius) {
                        best_t = t;
                        best_class = kClassGround;
                    }
                }
            }
            double t_hit;
            for (const Box& v : vehicles) {
                if (v.intersect(o, d, t_hit) && t_hit < best_t) {
                    best_t = t_hit;
                    best_class = kClassVehicle;
                }
            }
            for (const Cylinder& p : poles) {
                if (p.intersect(o, d, t_hit) && t_hit < best_t) {
                    best_t = t_hit;
                    best_class = kClassPole;
                }
            }
            for (std::size_t i = 0; i < blobs.size(); ++i) {
                if (blob_solid[i] && blobs[i].intersect(o, d, t_hit) && t_hit < best_t) {
                    best_t = t_hit;
                    best_class = kClassVegetation;
                }
            }

            if (best_class < 0) continue;

            Point p;
            p.x = static_cast<float>(o.x + best_t * d.x);
            p.y = static_cast<float>(o.y + best_t * d.y);
            p.z = static_cast<float>(o.z + best_t * d.z);
            if (best_class == kClassGround)
                p.z += static_cast<float>(rng.next_normal(0.0, 0.02));
            const double rho2d = std::hypot(double(p.x), double(p.y));
            const double fade =
                cfg.intensity_attenuation * std::min(1.0, rho2d / cfg.ground_radius);
            p.intensity = static_cast<float>(
                clamp01(class_mean[best_class] - fade + shift +
                        rng.next_normal(0.0, cfg.intensity_noise)));
            cloud.points.push_back(p);
            cloud.labels.push_back(static_cast<std::uint8_t>(best_class));
        }
    }
    return cloud;
}

DatasetSplit split_dataset(std::vector<PointCloud> scenes, double labeled_fraction,
                           std::uint64_t seed) {
    if (scenes.size() < 2) throw ConfigError("split needs at least 2 scenes");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
        throw ConfigError("labeled fraction must be in (0, 1]");
    for (const PointCloud& s : scenes)
        if (!s.has_labels()) throw DataError("split input scenes must be labeled");

    const std::size_t n = scenes.size();
    const auto n_labeled =
        static_cast<std::size_t>(std::ceil(labeled_fraction * static_cast<double>(n)));

    RngStream rng = derive_stream(seed, "split");
    std::vector<std::size_t> order = rng.permutation(n);
    std::vector<std::uint8_t> is_labeled(n, 0);
    for (std::size_t i = 0; i < n_labeled; ++i) is_labeled[order[i]] = 1;

    DatasetSplit split;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_labeled[i]) {
            split.labeled.push_back(std::move(scenes[i]));
            split.labeled_indices.push_back(i);
        } else {
            split.diagnostics.seal(std::move(scenes[i].labels));
            scenes[i].labels.clear();
            split.unlabeled.push_back(std::move(scenes[i]));
            split.unlabeled_indices.push_back(i);
        }
    }
    return split;
}

namespace {

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("truncated point-cloud file");
    return v;
}

}  // namespace

void write_cloud(const PointCloud& cloud, int num_classes, const std::filesystem::path& path) {
    cloud.validate(num_classes);
    for (std::uint8_t l : cloud.labels)
        if (l == kNoLabel) throw DataError("cannot serialize a cloud with unlabeled sentinels");

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");

    os.write("PCLS", 4);
    write_raw<std::uint16_t>(os, 1);
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(cloud.size()));
    write_raw<std::uint16_t>(os, static_cast<std::uint16_t>(num_classes));
    std::uint8_t flags = 0;
    if (cloud.has_labels()) flags |= 1;
    if (cloud.has_origin()) flags |= 2;
    write_raw<std::uint8_t>(os, flags);

    for (const Point& p : cloud.points) {
        write_raw<float>(os, p.x);
        write_raw<float>(os, p.y);
        write_raw<float>(os, p.z);
        write_raw<float>(os, p.intensity);
    }
    if (cloud.has_labels())
        os.write(reinterpret_cast<const char*>(cloud.labels.data()),
                 static_cast<std::streamsize>(cloud.labels.size()));
    if (cloud.has_origin())
        os.write(reinterpret_cast<const char*>(cloud.origin.data()),
                 static_cast<std::streamsize>(cloud.origin.size()));
    if (!os) throw IoError("write failed for " + path.string());
}

CloudFile read_cloud(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PCLS", 4) != 0)
        throw IoError("bad magic in " + path.string());
    const auto version = read_raw<std::uint16_t>(is);
    if (version != 1) throw IoError("unsupported point-cloud file version");
    const auto n = read_raw<std::uint32_t>(is);
    const auto k = read_raw<std::uint16_t>(is);
    const auto flags = read_raw<std::uint8_t>(is);
    if (flags & ~0x3) throw IoError("unknown flags in point-cloud file");
    if (k < 2) throw IoError("point-cloud file declares fewer than 2 classes");

    CloudFile result;
    result.num_classes = k;
    result.cloud.points.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        result.cloud.points[i].x = read_raw<float>(is);
        result.cloud.points[i].y = read_raw<float>(is);
        result.cloud.points[i].z = read_raw<float>(is);
        result.cloud.points[i].intensity = read_raw<float>(is);
    }
    if (flags & 1) {
        result.cloud.labels.resize(n);
        is.read(reinterpret_cast<char*>(result.cloud.labels.data()), n);
        if (!is) throw IoError("truncated label block");
        for (std::uint8_t l : result.cloud.labels)
            if (l >= k) throw IoError("label index out of range in file");
    }
    if (flags & 2) {
        result.cloud.origin.resize(n);
        is.read(reinterpret_cast<char*>(result.cloud.origin.data()), n);
        if (!is) throw IoError("truncated origin block");
        for (std::uint8_t o : result.cloud.origin)
            if (o > 1) throw IoError("origin tag out of range in file");
    }
    return result;
}

}  // namespace collis
