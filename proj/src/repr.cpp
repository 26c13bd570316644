#include "collis/repr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace collis {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::string repr_kind_name(ReprKind kind) {
    switch (kind) {
        case ReprKind::Range: return "range";
        case ReprKind::Polar: return "polar";
        case ReprKind::Voxel: return "voxel";
    }
    return "?";
}

int ReprConfig::cell_count() const {
    switch (kind) {
        case ReprKind::Range: return rows * cols;
        case ReprKind::Polar: return radial_bins * azimuth_bins;
        case ReprKind::Voxel: return radial_bins * azimuth_bins * height_bins;
    }
    return 0;
}

void ReprConfig::validate() const {
    switch (kind) {
        case ReprKind::Range:
            if (rows < 1 || cols < 1) throw ConfigError("range grid needs positive bins");
            if (fov_up_deg <= fov_down_deg) throw ConfigError("fov_up must exceed fov_down");
            break;
        case ReprKind::Voxel:
            if (height_bins < 1) throw ConfigError("voxel grid needs positive height bins");
            if (z_max <= z_min) throw ConfigError("voxel z extent must be positive");
            [[fallthrough]];
        case ReprKind::Polar:
            if (radial_bins < 1 || azimuth_bins < 1)
                throw ConfigError("cylindrical grid needs positive bins");
            if (max_radius <= 0) throw ConfigError("max radius must be positive");
            break;
    }
}

ReprConfig ReprConfig::range_default() {
    ReprConfig c;
    c.kind = ReprKind::Range;
    c.rows = 8;
    c.cols = 24;
    return c;
}

ReprConfig ReprConfig::polar_default() {
    ReprConfig c;
    c.kind = ReprKind::Polar;
    c.radial_bins = 10;
    c.azimuth_bins = 20;
    c.max_radius = 36.0;
    return c;
}

ReprConfig ReprConfig::voxel_default() {
    ReprConfig c;
    c.kind = ReprKind::Voxel;
    c.radial_bins = 8;
    c.azimuth_bins = 14;
    c.max_radius = 38.0;
    c.height_bins = 5;
    return c;
}

Mask ReprMapping::in_bounds_mask() const {
    Mask m(point_to_cell.size());
    for (std::size_t i = 0; i < point_to_cell.size(); ++i) m[i] = point_to_cell[i] >= 0;
    return m;
}

namespace {

inline int clamp_bin(double v, int bins) {
    int b = static_cast<int>(std::floor(v));
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;
    return b;
}

inline int azimuth_bin(double phi, int bins) {
    return clamp_bin((phi + kPi) / (2.0 * kPi) * bins, bins);
}

// Cell assignment plus the winner-ordering key (lower is better).
struct CellRef {
    std::int32_t cell = -1;
    double key = 0.0;
};

CellRef locate(const Point& p, const ReprConfig& cfg) {
    const double x = p.x, y = p.y, z = p.z;
    const double rho2 = std::sqrt(x * x + y * y);
    const double rho3 = std::sqrt(x * x + y * y + z * z);
    const double phi = std::atan2(y, x);

    CellRef ref;
    switch (cfg.kind) {
        case ReprKind::Range: {
            if (rho3 < 1e-9) return ref;
            const double fov_up = cfg.fov_up_deg * kPi / 180.0;
            const double fov_down = cfg.fov_down_deg * kPi / 180.0;
            const double theta = std::asin(z / rho3);
            if (theta < fov_down || theta > fov_up) return ref;
            const int row =
                clamp_bin((1.0 - (theta - fov_down) / (fov_up - fov_down)) * cfg.rows, cfg.rows);
            const int col = azimuth_bin(phi, cfg.cols);
            ref.cell = row * cfg.cols + col;
            ref.key = rho3;
            return ref;
        }
        case ReprKind::Polar: {
            if (rho2 >= cfg.max_radius) return ref;
            const int rb = clamp_bin(rho2 / cfg.max_radius * cfg.radial_bins, cfg.radial_bins);
            const int ab = azimuth_bin(phi, cfg.azimuth_bins);
            ref.cell = rb * cfg.azimuth_bins + ab;
            const double rho_c = (rb + 0.5) / cfg.radial_bins * cfg.max_radius;
            const double phi_c = -kPi + (ab + 0.5) / cfg.azimuth_bins * 2.0 * kPi;
            const double dx = x - rho_c * std::cos(phi_c);
            const double dy = y - rho_c * std::sin(phi_c);
            ref.key = dx * dx + dy * dy;
            return ref;
        }
        case ReprKind::Voxel: {
            if (rho2 >= cfg.max_radius || z < cfg.z_min || z > cfg.z_max) return ref;
            const int rb = clamp_bin(rho2 / cfg.max_radius * cfg.radial_bins, cfg.radial_bins);
            const int ab = azimuth_bin(phi, cfg.azimuth_bins);
            const int zb = clamp_bin((z - cfg.z_min) / (cfg.z_max - cfg.z_min) * cfg.height_bins,
                                     cfg.height_bins);
            ref.cell = (rb * cfg.azimuth_bins + ab) * cfg.height_bins + zb;
            const double rho_c = (rb + 0.5) / cfg.radial_bins * cfg.max_radius;
            const double phi_c = -kPi + (ab + 0.5) / cfg.azimuth_bins * 2.0 * kPi;
            const double z_c = cfg.z_min + (zb + 0.5) / cfg.height_bins * (cfg.z_max - cfg.z_min);
            const double dx = x - rho_c * std::cos(phi_c);
            const double dy = y - rho_c * std::sin(phi_c);
            const double dz = z - z_c;
            ref.key = dx * dx + dy * dy + dz * dz;
            return ref;
        }
    }
    return ref;
}

}  // namespace

ReprMapping project(const PointCloud& cloud, const ReprConfig& cfg) {
    cfg.validate();
    if (cloud.empty()) throw DataError("cannot project an empty cloud");

    const std::size_t n = cloud.size();
    const int cells = cfg.cell_count();

    ReprMapping m;
    m.config = cfg;
    m.point_to_cell.assign(n, -1);
    m.cell_winner.assign(cells, -1);
    m.occupancy.assign(cells, 0);

    std::vector<double> best_key(cells, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        const CellRef ref = locate(cloud.points[i], cfg);
        if (ref.cell < 0) continue;
        m.point_to_cell[i] = ref.cell;
        ++m.occupancy[ref.cell];
        ++m.in_bounds_count;
        // Ascending scan keeps the lowest point index on key ties.
        if (ref.key < best_key[ref.cell]) {
            best_key[ref.cell] = ref.key;
            m.cell_winner[ref.cell] = static_cast<std::int32_t>(i);
        }
    }
    for (int c = 0; c < cells; ++c)
        if (m.occupancy[c] > 0) m.occupied_cells.push_back(c);
    return m;
}

std::vector<std::int32_t> scatter_labels(const ReprMapping& mapping,
                                         const std::vector<std::int32_t>& per_point) {
    if (per_point.size() != mapping.point_count())
        throw DataError("per-point label length mismatch");
    std::vector<std::int32_t> table(mapping.cell_winner.size(), -1);
    for (std::int32_t c : mapping.occupied_cells) table[c] = per_point[mapping.cell_winner[c]];
    return table;
}

std::vector<std::int32_t> gather_cells(const ReprMapping& mapping,
                                       const std::vector<std::int32_t>& per_cell,
                                       std::int32_t fallback) {
    if (per_cell.size() != mapping.cell_winner.size())
        throw DataError("per-cell table length mismatch");
    std::vector<std::int32_t> out(mapping.point_count(), fallback);
    for (std::size_t i = 0; i < mapping.point_count(); ++i) {
        const std::int32_t c = mapping.point_to_cell[i];
        if (c >= 0) out[i] = per_cell[c];
    }
    return out;
}

std::vector<std::int32_t> compose_mapping(const ReprMapping& src, const ReprMapping& dst) {
    if (src.point_count() != dst.point_count())
        throw DataError("mappings built from different clouds");
    std::vector<std::int32_t> table(src.cell_winner.size(), -1);
    for (std::int32_t c : src.occupied_cells)
        table[c] = dst.point_to_cell[src.cell_winner[c]];
    return table;
}

Eigen::MatrixXd grid_features(const PointCloud& cloud, const ReprMapping& mapping) {
    if (cloud.size() != mapping.point_count()) throw DataError("cloud/mapping size mismatch");
    Eigen::MatrixXd feat = Eigen::MatrixXd::Zero(mapping.cell_winner.size(), kCellFeatureCount);

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const std::int32_t c = mapping.point_to_cell[i];
        if (c < 0) continue;
        const Point& p = cloud.points[i];
        feat(c, 0) += p.x;
        feat(c, 1) += p.y;
        feat(c, 2) += p.z;
        feat(c, 3) += p.intensity;
    }
    for (std::int32_t c : mapping.occupied_cells) {
        const double count = mapping.occupancy[c];
        feat.row(c).head<4>() /= count;
        feat(c, 4) = std::log1p(count);
        const Point& w = cloud.points[mapping.cell_winner[c]];
        feat(c, 5) = std::sqrt(double(w.x) * w.x + double(w.y) * w.y + double(w.z) * w.z);
    }
    return feat;
}

}  // namespace collis
