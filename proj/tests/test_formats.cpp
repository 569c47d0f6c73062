#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "tomotr/experiments.hpp"
#include "tomotr/geometry.hpp"
#include "tomotr/io_util.hpp"
#include "tomotr/phantom.hpp"

using namespace tomotr;

namespace {

std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("system tensor triplet file round trips") {
    auto g = ScanGeometry::uniform(8, 5, 13);
    auto tensor = build_system_tensor(g);
    const auto path = std::filesystem::temp_directory_path() / "tomotr_tensor.txt";
    save_system_tensor(tensor, path);

    {
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        CHECK(header == "b i j count=" + std::to_string(tensor.nnz()) + " shape=" +
                            std::to_string(g.num_rays()) + "x8x8");
    }

    auto loaded = load_system_tensor(path, g);
    REQUIRE(loaded.nnz() == tensor.nnz());
    // same operator action even though entry order is canonicalized
    Image w = oracles::random_matrix(8, 8, 11);
    auto s1 = forward_project(tensor, w);
    auto s2 = forward_project(loaded, w);
    CHECK((s1.values - s2.values).cwiseAbs().maxCoeff() <= 1e-12 * s1.values.norm() + 1e-15);

    ScanGeometry wrong = ScanGeometry::uniform(8, 6, 13);
    CHECK_THROWS(load_system_tensor(path, wrong));
}

TEST_CASE("sinogram csv round trips") {
    auto g = ScanGeometry::uniform(8, 4, 13);
    auto tensor = build_system_tensor(g);
    auto s = forward_project(tensor, oracles::random_matrix(8, 8, 5));

    const auto path = std::filesystem::temp_directory_path() / "tomotr_sino.csv";
    save_sinogram_csv(s, path);
    auto loaded = load_sinogram_csv(path);
    CHECK(loaded.num_angles == 4);
    CHECK(loaded.num_beamlets == 13);
    CHECK((loaded.values - s.values).norm() == 0.0);

    const std::string content = read_all(path);
    CHECK(content.rfind("angle_index,beamlet_index,value\n", 0) == 0);
}

TEST_CASE("format_double round trips doubles compactly") {
    for (double v : {0.0, 1.0, -1.5, 1e-5, 0.1, 3.141592653589793, 1.0 / 3.0, 45.5}) {
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("sweep csv layout and completeness") {
    std::vector<SweepCell> rows = {{10, "tr", 1, 0.25, 12, "ok"},
                                   {10, "lsqr", 0, 0.5, 200, "ok"},
                                   {20, "tr", 2, 0.0, 0, "error:boom"}};
    const auto path = std::filesystem::temp_directory_path() / "tomotr_sweep.csv";
    write_sweep_csv(rows, path);
    const std::string content = read_all(path);
    CHECK(content ==
          "angles,solver,rank,rmse,iters,status\n"
          "10,tr,1,0.25,12,ok\n"
          "10,lsqr,0,0.5,200,ok\n"
          "20,tr,2,nan,0,error:boom\n");
}

TEST_CASE("reconstruction pgm sidecar records clamp bounds") {
    Image img = (oracles::random_matrix(16, 16, 12).array() + 1.0) * 0.6;
    const auto path = std::filesystem::temp_directory_path() / "tomotr_recon.pgm";
    write_reconstruction_pgm(img, 1.5, path);
    Image back = load_image_pgm(path) * 1.5;
    Image clamped = img.cwiseMax(0.0).cwiseMin(1.5);
    CHECK((back - clamped).cwiseAbs().maxCoeff() <= 1.5 / 65535.0);

    const std::string meta = read_all(path.string() + ".json");
    CHECK(meta.find("\"clamp_max\": 1.5") != std::string::npos);
    CHECK(meta.find("\"maxval\": 65535") != std::string::npos);
}
