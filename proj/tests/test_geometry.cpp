#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <tuple>

#include "oracles.hpp"
#include "tomotr/geometry.hpp"

using namespace tomotr;

// A single beamlet always sits at the detector center (offset 0), which
// these small cases rely on.
TEST_CASE("single pixel, axis-aligned ray: unit chord") {
    ScanGeometry g{1, {0.0}, 1, 0.5};
    REQUIRE(g.beamlet_offset(0) == doctest::Approx(0.0));
    auto tensor = build_system_tensor(g);
    REQUIRE(tensor.entries.size() == 1);
    CHECK(tensor.entries[0].ray == 0);
    CHECK(tensor.entries[0].row == 0);
    CHECK(tensor.entries[0].col == 0);
    CHECK(tensor.entries[0].length == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single pixel, diagonal ray: sqrt(2) chord") {
    ScanGeometry g{1, {std::numbers::pi / 4.0}, 1, 0.5};
    auto tensor = build_system_tensor(g);
    REQUIRE(tensor.entries.size() == 1);
    CHECK(tensor.entries[0].length == doctest::Approx(std::numbers::sqrt2).epsilon(1e-12));
}

TEST_CASE("K=4 horizontal ray sums to grid width") {
    ScanGeometry g{4, {0.0}, 2, 1.0};  // beamlet 1 sits at offset +0.5
    REQUIRE(g.beamlet_offset(1) == doctest::Approx(0.5));
    auto tensor = build_system_tensor(g);
    double total = 0.0;
    for (const auto& e : tensor.entries) {
        if (e.ray == 1) total += e.length;
    }
    CHECK(total == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(total ==
          doctest::Approx(oracles::clipped_chord_length(0.0, 0.5, 4)).epsilon(1e-12));
}

TEST_CASE("build rejects degenerate geometry") {
    ScanGeometry g;
    g.grid_size = 0;
    g.angles = {0.0};
    g.num_beamlets = 1;
    g.detector_halfwidth = 1.0;
    CHECK_THROWS_AS(build_system_tensor(g), std::invalid_argument);
    g.grid_size = 4;
    g.angles.clear();
    CHECK_THROWS_AS(build_system_tensor(g), std::invalid_argument);
}

TEST_CASE("uniform geometry enforces coverage and angle spacing") {
    CHECK_THROWS_AS(ScanGeometry::uniform(64, 30, 64), std::invalid_argument);
    auto g = ScanGeometry::uniform(64, 30, 91);
    CHECK(g.angles.size() == 30);
    CHECK(g.angles.front() == doctest::Approx(1.0));
    CHECK(g.angles.back() < 2.0 * std::numbers::pi);
    CHECK(g.detector_halfwidth == doctest::Approx(45.5));
    CHECK(g.detector_halfwidth >= std::numbers::sqrt2 * 64 / 2.0);
    // beamlet offsets symmetric about zero
    CHECK(g.beamlet_offset(0) == doctest::Approx(-g.beamlet_offset(90)));
    CHECK(g.beamlet_offset(45) == doctest::Approx(0.0));
}

TEST_CASE("mass preservation: ray sums equal clipped chord lengths") {
    auto g = ScanGeometry::uniform(16, 7, 23);
    auto tensor = build_system_tensor(g);
    std::vector<double> sums(g.num_rays(), 0.0);
    for (const auto& e : tensor.entries) sums[e.ray] += e.length;
    for (int a = 0; a < 7; ++a) {
        for (int t = 0; t < 23; ++t) {
            const double expected =
                oracles::clipped_chord_length(g.angles[a], g.beamlet_offset(t), 16);
            CHECK(std::abs(sums[g.ray_index(a, t)] - expected) <= 1e-10);
        }
    }
}

TEST_CASE("entry lengths bounded by the pixel diagonal, keys unique") {
    auto g = ScanGeometry::uniform(12, 9, 19);
    auto tensor = build_system_tensor(g);
    std::set<std::tuple<int, int, int>> keys;
    for (const auto& e : tensor.entries) {
        CHECK(e.length > 0.0);
        CHECK(e.length <= std::numbers::sqrt2 + 1e-12);
        CHECK(keys.insert({e.ray, e.row, e.col}).second);
    }
    // ray_begin brackets every entry of each ray
    for (int b = 0; b < tensor.num_rays(); ++b) {
        for (auto k = tensor.ray_begin[b]; k < tensor.ray_begin[b + 1]; ++k) {
            CHECK(tensor.entries[k].ray == b);
        }
    }
}

TEST_CASE("forward projection: zeros, scaling, all-ones chord totals") {
    auto g = ScanGeometry::uniform(4, 5, 7);
    auto tensor = build_system_tensor(g);

    Image zeros = Image::Zero(4, 4);
    auto s0 = forward_project(tensor, zeros);
    CHECK(s0.values.norm() == 0.0);

    Image ones = Image::Ones(4, 4);
    auto s1 = forward_project(tensor, ones);
    for (int a = 0; a < 5; ++a) {
        for (int t = 0; t < 7; ++t) {
            const double expected =
                oracles::clipped_chord_length(g.angles[a], g.beamlet_offset(t), 4);
            CHECK(s1.at(a, t) == doctest::Approx(expected).epsilon(1e-10));
        }
    }

    ScanGeometry single = ScanGeometry{1, {0.0}, 1, 0.5};
    auto ts = build_system_tensor(single);
    Image c(1, 1);
    c(0, 0) = 3.25;
    auto sc = forward_project(ts, c);
    CHECK(sc.values[0] == doctest::Approx(3.25).epsilon(1e-12));

    Image wrong = Image::Zero(5, 5);
    CHECK_THROWS_AS(forward_project(tensor, wrong), std::invalid_argument);
}

TEST_CASE("back projection: zero input, single-ray case, dimension checks") {
    ScanGeometry single = ScanGeometry{1, {0.0}, 1, 0.5};
    auto ts = build_system_tensor(single);
    Sinogram s = Sinogram::zeros(single);
    CHECK(back_project(ts, s).norm() == 0.0);

    s.values[0] = 1.0;
    Image bp = back_project(ts, s);
    CHECK(bp(0, 0) == doctest::Approx(ts.entries[0].length).epsilon(1e-12));

    auto g = ScanGeometry::uniform(4, 5, 7);
    auto tensor = build_system_tensor(g);
    CHECK_THROWS_AS(back_project(tensor, s), std::invalid_argument);
}

TEST_CASE("adjoint identity against dense materialization") {
    auto g = ScanGeometry::uniform(8, 6, 13);
    auto tensor = build_system_tensor(g);
    Eigen::MatrixXd dense = oracles::materialize_unfolding(tensor);

    for (int trial = 0; trial < 20; ++trial) {
        Image w = oracles::random_matrix(8, 8, 100 + trial);
        Eigen::VectorXd svec = oracles::random_vector(g.num_rays(), 200 + trial);
        Sinogram s;
        s.values = svec;
        s.num_angles = 6;
        s.num_beamlets = 13;

        const double lhs = forward_project(tensor, w).values.dot(svec);
        const double rhs = (back_project(tensor, s).array() * w.array()).sum();
        CHECK(std::abs(lhs - rhs) <= 1e-10 * (w.norm() * svec.norm() + 1.0));

        // and both match the dense operator
        Eigen::Map<const Eigen::VectorXd> wvec(w.data(), w.size());
        CHECK((forward_project(tensor, w).values - dense * wvec).norm() <=
              1e-12 * (dense * wvec).norm() + 1e-14);
    }
}

TEST_CASE("rotation consistency: theta and theta+pi reverse the detector") {
    const int K = 10;
    const double theta = 0.7;
    ScanGeometry g;
    g.grid_size = K;
    g.angles = {theta, theta + std::numbers::pi};
    g.num_beamlets = 17;
    g.detector_halfwidth = 8.5;
    auto tensor = build_system_tensor(g);

    // centrally symmetric image: f(x) = f(-x)
    Image img = Image::Zero(K, K);
    for (int i = 0; i < K; ++i) {
        for (int j = 0; j < K; ++j) {
            const double x = j + 0.5 - K / 2.0;
            const double y = K / 2.0 - i - 0.5;
            img(i, j) = std::exp(-(x * x + y * y) / 8.0) + 0.2 * std::cos(x * y);
        }
    }
    auto s = forward_project(tensor, img);
    for (int t = 0; t < 17; ++t) {
        CHECK(s.at(0, t) == doctest::Approx(s.at(1, 16 - t)).epsilon(1e-8));
    }
}

TEST_CASE("unfold_mode1: trivial cases and product equivalence") {
    ScanGeometry single = ScanGeometry{1, {0.0}, 1, 0.5};
    auto ts = build_system_tensor(single);
    auto m1 = unfold_mode1(ts);
    REQUIRE(m1.rows() == 1);
    REQUIRE(m1.cols() == 1);
    CHECK(m1.coeff(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    SparseSystemTensor empty;
    empty.geometry = single;
    empty.ray_begin = {0, 0};
    auto m0 = unfold_mode1(empty);
    CHECK(m0.nonZeros() == 0);

    auto g = ScanGeometry::uniform(6, 4, 9);
    auto tensor = build_system_tensor(g);
    auto unfolded = unfold_mode1(tensor);
    for (int trial = 0; trial < 100; ++trial) {
        Image w = oracles::random_matrix(6, 6, 300 + trial);
        Eigen::Map<const Eigen::VectorXd> wvec(w.data(), w.size());
        Eigen::VectorXd via_matrix = unfolded * wvec;
        Eigen::VectorXd via_op = forward_project(tensor, w).values;
        CHECK((via_matrix - via_op).norm() <= 1e-12 * via_op.norm() + 1e-15);
    }
}

TEST_CASE("system tensor construction is deterministic") {
    auto g = ScanGeometry::uniform(16, 5, 23);
    auto t1 = build_system_tensor(g);
    auto t2 = build_system_tensor(g);
    REQUIRE(t1.entries.size() == t2.entries.size());
    for (std::size_t k = 0; k < t1.entries.size(); ++k) {
        CHECK(t1.entries[k].ray == t2.entries[k].ray);
        CHECK(t1.entries[k].row == t2.entries[k].row);
        CHECK(t1.entries[k].col == t2.entries[k].col);
        CHECK(t1.entries[k].length == t2.entries[k].length);
    }
}
