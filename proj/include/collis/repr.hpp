#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "collis/point_cloud.hpp"
#include "collis/types.hpp"

namespace collis {

enum class ReprKind { Range, Polar, Voxel };

std::string repr_kind_name(ReprKind kind);

struct ReprConfig {
    ReprKind kind = ReprKind::Range;

    // range: spherical projection image
    int rows = 16;
    int cols = 32;
    double fov_up_deg = 15.0;
    double fov_down_deg = -15.0;

    // polar / voxel: cylindrical grid
    int radial_bins = 16;
    int azimuth_bins = 32;
    double max_radius = 32.0;

    // voxel only
    int height_bins = 6;
    double z_min = -0.5;
    double z_max = 6.5;

    int cell_count() const;
    void validate() const;

    static ReprConfig range_default();
    static ReprConfig polar_default();
    static ReprConfig voxel_default();
};

// Per-point cell assignment for one representation plus the representative
// ("winner") point per occupied cell. Realizes the point-mediated mappings
// between representations: composing two of these through the shared cloud
// routes cell values across grids.
struct ReprMapping {
    ReprConfig config;
    std::vector<std::int32_t> point_to_cell;   // -1 for out-of-bounds points
    std::vector<std::int32_t> cell_winner;     // -1 for unoccupied cells
    std::vector<std::int32_t> occupancy;       // points per cell
    std::vector<std::int32_t> occupied_cells;  // ascending cell indices
    std::size_t in_bounds_count = 0;

    std::size_t point_count() const { return point_to_cell.size(); }

    Mask in_bounds_mask() const;
};

// Assigns every point to a grid cell. Range winners take the minimum 3-D
// depth in the cell; polar/voxel winners the minimum distance to the cell
// center; ties break to the lowest point index.
ReprMapping project(const PointCloud& cloud, const ReprConfig& config);

// Each occupied cell takes the label of its winner point. Unoccupied cells
// hold -1.
std::vector<std::int32_t> scatter_labels(const ReprMapping& mapping,
                                         const std::vector<std::int32_t>& per_point);

// Reads each point's cell entry back; out-of-bounds points get fallback.
std::vector<std::int32_t> gather_cells(const ReprMapping& mapping,
                                       const std::vector<std::int32_t>& per_cell,
                                       std::int32_t fallback = -1);

// Routes src cells to dst cells through the winner points: for each occupied
// src cell c, result[c] = dst.point_to_cell[src.cell_winner[c]].
std::vector<std::int32_t> compose_mapping(const ReprMapping& src, const ReprMapping& dst);

inline constexpr int kCellFeatureCount = 6;

// Per-cell summary consumed by the students: mean (x, y, z, intensity) of the
// cell's points, log(1+count), and the winner's depth. Unoccupied rows stay
// zero.
Eigen::MatrixXd grid_features(const PointCloud& cloud, const ReprMapping& mapping);

}  // namespace collis
