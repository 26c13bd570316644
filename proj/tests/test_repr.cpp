#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "collis/repr.hpp"
#include "collis/rng.hpp"

using namespace collis;

namespace {

PointCloud single_point(float x, float y, float z) {
    PointCloud c;
    c.points = {{x, y, z, 0.5f}};
    return c;
}

// Random points including adversarial ones at the fov edges and max radius.
PointCloud adversarial_cloud(std::uint64_t seed, std::size_t n) {
    RngStream rng(seed);
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        Point p;
        const double rho = rng.next_double(0.1, 45.0);
        const double phi = rng.next_double(-M_PI, M_PI);
        double theta;
        switch (rng.next_below(4)) {
            case 0: theta = 15.0 * M_PI / 180.0; break;   // exactly fov_up
            case 1: theta = -15.0 * M_PI / 180.0; break;  // exactly fov_down
            default: theta = rng.next_double(-0.5, 0.5);
        }
        p.x = static_cast<float>(rho * std::cos(theta) * std::cos(phi));
        p.y = static_cast<float>(rho * std::cos(theta) * std::sin(phi));
        p.z = static_cast<float>(rho * std::sin(theta));
        p.intensity = static_cast<float>(rng.next_double());
        c.points.push_back(p);
    }
    return c;
}

}  // namespace

TEST_CASE("range projection maps the axis point to the center cell") {
    ReprConfig cfg = ReprConfig::range_default();
    cfg.rows = 16;
    cfg.cols = 64;

    const ReprMapping m = project(single_point(10.f, 0.f, 0.f), cfg);
    REQUIRE(m.point_to_cell[0] >= 0);
    const int cell = m.point_to_cell[0];
    CHECK(cell / cfg.cols == 8);   // row
    CHECK(cell % cfg.cols == 32);  // col
}

TEST_CASE("voxel projection bins radius, azimuth and height linearly") {
    ReprConfig cfg;
    cfg.kind = ReprKind::Voxel;
    cfg.radial_bins = 8;
    cfg.azimuth_bins = 8;
    cfg.height_bins = 4;
    cfg.max_radius = 20.0;
    cfg.z_min = -2.0;
    cfg.z_max = 2.0;

    const ReprMapping m = project(single_point(10.f, 0.f, 0.f), cfg);
    REQUIRE(m.point_to_cell[0] >= 0);
    const int cell = m.point_to_cell[0];
    const int zb = cell % cfg.height_bins;
    const int ab = (cell / cfg.height_bins) % cfg.azimuth_bins;
    const int rb = cell / (cfg.height_bins * cfg.azimuth_bins);
    CHECK(rb == 4);
    CHECK(ab == 4);
    CHECK(zb == 2);
}

TEST_CASE("out-of-bounds points map to -1") {
    ReprConfig range = ReprConfig::range_default();
    const ReprMapping above = project(single_point(1.f, 0.f, 10.f), range);
    CHECK(above.point_to_cell[0] == -1);
    CHECK(above.in_bounds_count == 0);

    ReprConfig polar = ReprConfig::polar_default();
    const ReprMapping far = project(single_point(100.f, 0.f, 0.f), polar);
    CHECK(far.point_to_cell[0] == -1);

    ReprConfig voxel = ReprConfig::voxel_default();
    const ReprMapping low = project(single_point(5.f, 0.f, -3.f), voxel);
    CHECK(low.point_to_cell[0] == -1);
}

TEST_CASE("indices never exceed grid bounds on adversarial clouds") {
    const ReprConfig configs[3] = {ReprConfig::range_default(), ReprConfig::polar_default(),
                                   ReprConfig::voxel_default()};
    for (int trial = 0; trial < 100; ++trial) {
        const PointCloud cloud = adversarial_cloud(trial, 64);
        for (const ReprConfig& cfg : configs) {
            const ReprMapping m = project(cloud, cfg);
            std::int64_t occupied_points = 0;
            for (std::int32_t c : m.point_to_cell) {
                CHECK(c >= -1);
                CHECK(c < cfg.cell_count());
            }
            for (std::int32_t c : m.occupied_cells) {
                CHECK(m.cell_winner[c] >= 0);
                CHECK(m.point_to_cell[m.cell_winner[c]] == c);
                occupied_points += m.occupancy[c];
            }
            CHECK(occupied_points == static_cast<std::int64_t>(m.in_bounds_count));
        }
    }
}

TEST_CASE("collision-free clouds make the winner table a bijection") {
    // Points in distinct range cells: one per elevation row at distinct depths.
    PointCloud cloud;
    for (int i = 0; i < 8; ++i) {
        const double theta = (-12.0 + 3.0 * i) * M_PI / 180.0;
        const double rho = 5.0 + i;
        cloud.points.push_back({static_cast<float>(rho * std::cos(theta)), 0.f,
                                static_cast<float>(rho * std::sin(theta)), 0.5f});
    }
    const ReprMapping m = project(cloud, ReprConfig::range_default());
    REQUIRE(m.in_bounds_count == cloud.size());
    CHECK(m.occupied_cells.size() == cloud.size());

    std::vector<std::int32_t> per_point(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) per_point[i] = static_cast<int>(i) + 10;
    const auto table = scatter_labels(m, per_point);
    const auto back = gather_cells(m, table);
    CHECK(back == per_point);
}

TEST_CASE("cell winner is the nearer point and carries its label") {
    // Two points in the same range cell, different depths.
    PointCloud cloud;
    cloud.points = {{10.f, 0.f, 0.f, 0.5f}, {12.f, 0.05f, 0.f, 0.5f}};
    const ReprMapping m = project(cloud, ReprConfig::range_default());
    REQUIRE(m.point_to_cell[0] == m.point_to_cell[1]);
    CHECK(m.cell_winner[m.point_to_cell[0]] == 0);

    const auto table = scatter_labels(m, {7, 9});
    CHECK(table[m.point_to_cell[0]] == 7);
}

TEST_CASE("scatter rejects length mismatches") {
    const ReprMapping m = project(single_point(5.f, 0.f, 0.f), ReprConfig::range_default());
    CHECK_THROWS_AS(scatter_labels(m, {1, 2}), DataError);
}

TEST_CASE("composing a mapping with itself is the identity on occupied cells") {
    const PointCloud cloud = adversarial_cloud(5, 64);
    const ReprMapping m = project(cloud, ReprConfig::polar_default());
    const auto table = compose_mapping(m, m);
    for (std::int32_t c : m.occupied_cells) CHECK(table[c] == c);
}

TEST_CASE("single-point cloud composes range cell to voxel cell") {
    const PointCloud cloud = single_point(10.f, 0.f, 0.f);
    const ReprMapping r = project(cloud, ReprConfig::range_default());
    const ReprMapping v = project(cloud, ReprConfig::voxel_default());
    const auto table = compose_mapping(r, v);
    REQUIRE(r.point_to_cell[0] >= 0);
    CHECK(table[r.point_to_cell[0]] == v.point_to_cell[0]);
}

TEST_CASE("composition matches the brute-force per-point route") {
    for (int trial = 0; trial < 20; ++trial) {
        const PointCloud cloud = adversarial_cloud(100 + trial, 64);
        const ReprMapping src = project(cloud, ReprConfig::range_default());
        const ReprMapping dst = project(cloud, ReprConfig::voxel_default());
        const auto table = compose_mapping(src, dst);

        // Oracle: for every occupied src cell, find its winner by scanning
        // all points, then look up that point's dst cell.
        for (std::int32_t c : src.occupied_cells) {
            std::int32_t best = -1;
            double best_key = 1e300;
            for (std::size_t p = 0; p < cloud.size(); ++p) {
                if (src.point_to_cell[p] != c) continue;
                const Point& pt = cloud.points[p];
                const double depth = std::sqrt(double(pt.x) * pt.x + double(pt.y) * pt.y +
                                               double(pt.z) * pt.z);
                if (depth < best_key) {
                    best_key = depth;
                    best = static_cast<std::int32_t>(p);
                }
            }
            REQUIRE(best >= 0);
            CHECK(table[c] == dst.point_to_cell[best]);
        }
    }
}

TEST_CASE("compose rejects mappings from different clouds") {
    const ReprMapping a = project(single_point(5.f, 0.f, 0.f), ReprConfig::range_default());
    const ReprMapping b =
        project(adversarial_cloud(1, 8), ReprConfig::range_default());
    CHECK_THROWS_AS(compose_mapping(a, b), DataError);
}

TEST_CASE("grid features summarize cell occupancy") {
    PointCloud cloud;
    cloud.points = {{10.f, 0.f, 0.f, 0.4f}, {12.f, 0.05f, 0.f, 0.8f}};
    const ReprMapping m = project(cloud, ReprConfig::range_default());
    const Eigen::MatrixXd feat = grid_features(cloud, m);
    const std::int32_t c = m.point_to_cell[0];
    CHECK(feat(c, 0) == doctest::Approx(11.0).epsilon(1e-6));
    CHECK(feat(c, 3) == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(feat(c, 4) == doctest::Approx(std::log(3.0)).epsilon(1e-9));
    CHECK(feat(c, 5) == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("projection rejects empty clouds and bad configs") {
    PointCloud empty;
    CHECK_THROWS_AS(project(empty, ReprConfig::range_default()), DataError);

    ReprConfig bad = ReprConfig::range_default();
    bad.rows = 0;
    CHECK_THROWS_AS(project(single_point(1.f, 0.f, 0.f), bad), ConfigError);

    ReprConfig bad_fov = ReprConfig::range_default();
    bad_fov.fov_up_deg = -20.0;
    CHECK_THROWS_AS(project(single_point(1.f, 0.f, 0.f), bad_fov), ConfigError);
}
