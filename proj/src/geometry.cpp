#include "tomotr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "tomotr/io_util.hpp"

namespace tomotr {

namespace {

constexpr double kDropLength = 1e-12;  // entries below this never enter the store

}  // namespace

ScanGeometry ScanGeometry::uniform(int grid_size, int num_angles, int num_beamlets) {
    if (num_angles < 1) {
        throw std::invalid_argument("ScanGeometry: need at least one angle");
    }
    if (num_beamlets <= std::numbers::sqrt2 * grid_size) {
        throw std::invalid_argument(
            "ScanGeometry: num_beamlets must exceed sqrt(2)*K for full coverage");
    }
    ScanGeometry g;
    g.grid_size = grid_size;
    g.num_beamlets = num_beamlets;
    g.detector_halfwidth = num_beamlets / 2.0;
    g.angles.resize(num_angles);
    // evenly spaced over [1, 2*pi), right endpoint excluded
    const double step = (2.0 * std::numbers::pi - 1.0) / num_angles;
    for (int t = 0; t < num_angles; ++t) {
        g.angles[t] = 1.0 + t * step;
    }
    g.validate();
    return g;
}

double ScanGeometry::beamlet_offset(int t) const {
    const double spacing = 2.0 * detector_halfwidth / num_beamlets;
    return -detector_halfwidth + (t + 0.5) * spacing;
}

void ScanGeometry::validate() const {
    if (grid_size < 1) throw std::invalid_argument("ScanGeometry: grid_size must be >= 1");
    if (num_beamlets < 1) throw std::invalid_argument("ScanGeometry: num_beamlets must be >= 1");
    if (angles.empty()) throw std::invalid_argument("ScanGeometry: angle list is empty");
    if (!(detector_halfwidth > 0.0)) {
        throw std::invalid_argument("ScanGeometry: detector_halfwidth must be positive");
    }
}

Sinogram Sinogram::zeros(const ScanGeometry& g) {
    Sinogram s;
    s.values = Eigen::VectorXd::Zero(g.num_rays());
    s.num_angles = static_cast<int>(g.angles.size());
    s.num_beamlets = g.num_beamlets;
    return s;
}

namespace {

// Clips the line p(t) = origin + t*dir against [lo,hi] on one axis.
// Returns false if the line misses the slab entirely.
bool clip_axis(double origin, double dir, double lo, double hi, double& t_min, double& t_max) {
    if (std::abs(dir) < 1e-300) {
        return origin >= lo && origin <= hi;
    }
    double t1 = (lo - origin) / dir;
    double t2 = (hi - origin) / dir;
    if (t1 > t2) std::swap(t1, t2);
    t_min = std::max(t_min, t1);
    t_max = std::min(t_max, t2);
    return true;
}

// Traces one ray (unit direction) through the K x K unit-pixel grid
// centered at the origin, accumulating per-pixel chord lengths. The
// crossing parameters with all x- and y-grid lines are merged in order;
// each gap between consecutive crossings lies inside a single pixel,
// identified by the gap midpoint.
void trace_ray(int ray, double theta, double offset, int K,
               std::vector<SparseSystemTensor::Entry>& out) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double px = offset * c;
    const double py = offset * s;
    const double dx = -s;
    const double dy = c;
    const double half = K / 2.0;

    double t_min = -std::numeric_limits<double>::infinity();
    double t_max = std::numeric_limits<double>::infinity();
    if (!clip_axis(px, dx, -half, half, t_min, t_max)) return;
    if (!clip_axis(py, dy, -half, half, t_min, t_max)) return;
    if (!(t_max - t_min > kDropLength)) return;

    std::vector<double> cuts;
    cuts.reserve(2 * K + 4);
    cuts.push_back(t_min);
    for (int axis = 0; axis < 2; ++axis) {
        const double p0 = axis == 0 ? px : py;
        const double d = axis == 0 ? dx : dy;
        if (std::abs(d) < 1e-300) continue;
        for (int m = 1; m < K; ++m) {  // interior grid lines only
            const double t = (-half + m - p0) / d;
            if (t > t_min && t < t_max) cuts.push_back(t);
        }
    }
    cuts.push_back(t_max);
    std::sort(cuts.begin(), cuts.end());

    int last_row = -1, last_col = -1;
    double pending = 0.0;
    auto flush = [&]() {
        if (pending > kDropLength && last_row >= 0) {
            out.push_back({ray, last_row, last_col, pending});
        }
        pending = 0.0;
    };
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double len = cuts[k + 1] - cuts[k];
        if (len <= 0.0) continue;
        const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
        const double x = px + mid * dx;
        const double y = py + mid * dy;
        int col = static_cast<int>(std::floor(x + half));
        int row = static_cast<int>(std::floor(half - y));
        // midpoints landing exactly on the outer boundary belong to the edge pixel
        if (col == K && x + half <= K) col = K - 1;
        if (row == K && half - y <= K) row = K - 1;
        if (col < 0 || col >= K || row < 0 || row >= K) continue;
        if (row != last_row || col != last_col) {
            flush();
            last_row = row;
            last_col = col;
        }
        pending += len;
    }
    flush();
}

}  // namespace

SparseSystemTensor build_system_tensor(const ScanGeometry& geometry) {
    geometry.validate();
    const int K = geometry.grid_size;
    const int num_angles = static_cast<int>(geometry.angles.size());

    SparseSystemTensor tensor;
    tensor.geometry = geometry;
    tensor.ray_begin.assign(static_cast<std::size_t>(geometry.num_rays()) + 1, 0);
    tensor.entries.reserve(static_cast<std::size_t>(geometry.num_rays()) * (2 * K));

    for (int a = 0; a < num_angles; ++a) {
        for (int t = 0; t < geometry.num_beamlets; ++t) {
            const int b = geometry.ray_index(a, t);
            trace_ray(b, geometry.angles[a], geometry.beamlet_offset(t), K, tensor.entries);
            tensor.ray_begin[static_cast<std::size_t>(b) + 1] = tensor.entries.size();
        }
    }
    return tensor;
}

Sinogram forward_project(const SparseSystemTensor& tensor, const Image& image) {
    if (image.rows() != tensor.grid_size() || image.cols() != tensor.grid_size()) {
        throw std::invalid_argument("forward_project: image does not match tensor grid");
    }
    Sinogram s = Sinogram::zeros(tensor.geometry);
    for (const auto& e : tensor.entries) {
        s.values[e.ray] += e.length * image(e.row, e.col);
    }
    return s;
}

Image back_project(const SparseSystemTensor& tensor, const Sinogram& sinogram) {
    if (sinogram.size() != tensor.num_rays()) {
        throw std::invalid_argument("back_project: sinogram length does not match tensor");
    }
    Image image = Image::Zero(tensor.grid_size(), tensor.grid_size());
    for (const auto& e : tensor.entries) {
        image(e.row, e.col) += e.length * sinogram.values[e.ray];
    }
    return image;
}

Eigen::SparseMatrix<double> unfold_mode1(const SparseSystemTensor& tensor) {
    const int K = tensor.grid_size();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(tensor.nnz());
    for (const auto& e : tensor.entries) {
        triplets.emplace_back(e.ray, e.col * K + e.row, e.length);
    }
    Eigen::SparseMatrix<double> m(tensor.num_rays(), K * K);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

void save_system_tensor(const SparseSystemTensor& tensor, const std::filesystem::path& path) {
    auto sorted = tensor.entries;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return std::tie(a.ray, a.row, a.col) < std::tie(b.ray, b.row, b.col);
    });
    auto out = open_output(path);
    out << "b i j count=" << sorted.size() << " shape=" << tensor.num_rays() << "x"
        << tensor.grid_size() << "x" << tensor.grid_size() << "\n";
    for (const auto& e : sorted) {
        out << e.ray << " " << e.row << " " << e.col << " " << format_double(e.length) << "\n";
    }
}

SparseSystemTensor load_system_tensor(const std::filesystem::path& path,
                                      const ScanGeometry& geometry) {
    geometry.validate();
    auto in = open_input(path);
    std::string header;
    std::getline(in, header);
    std::size_t count = 0;
    int B = 0, K1 = 0, K2 = 0;
    if (std::sscanf(header.c_str(), "b i j count=%zu shape=%dx%dx%d", &count, &B, &K1, &K2) != 4) {
        throw std::runtime_error("system tensor file: malformed header: " + header);
    }
    if (B != geometry.num_rays() || K1 != geometry.grid_size || K2 != geometry.grid_size) {
        throw std::runtime_error("system tensor file: shape does not match supplied geometry");
    }
    SparseSystemTensor tensor;
    tensor.geometry = geometry;
    tensor.entries.reserve(count);
    int prev_ray = 0;
    for (std::size_t n = 0; n < count; ++n) {
        SparseSystemTensor::Entry e;
        if (!(in >> e.ray >> e.row >> e.col >> e.length)) {
            throw std::runtime_error("system tensor file: truncated entry list");
        }
        if (e.ray < prev_ray) {
            throw std::runtime_error("system tensor file: entries not in ascending ray order");
        }
        if (!(e.length > 0.0)) {
            throw std::runtime_error("system tensor file: nonpositive length");
        }
        prev_ray = e.ray;
        tensor.entries.push_back(e);
    }
    tensor.ray_begin.assign(static_cast<std::size_t>(geometry.num_rays()) + 1, 0);
    for (const auto& e : tensor.entries) {
        tensor.ray_begin[static_cast<std::size_t>(e.ray) + 1]++;
    }
    for (std::size_t b = 1; b < tensor.ray_begin.size(); ++b) {
        tensor.ray_begin[b] += tensor.ray_begin[b - 1];
    }
    return tensor;
}

void save_sinogram_csv(const Sinogram& sinogram, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "angle_index,beamlet_index,value\n";
    for (int a = 0; a < sinogram.num_angles; ++a) {
        for (int t = 0; t < sinogram.num_beamlets; ++t) {
            out << a << "," << t << "," << format_double(sinogram.at(a, t)) << "\n";
        }
    }
}

Sinogram load_sinogram_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    std::getline(in, line);
    if (line != "angle_index,beamlet_index,value") {
        throw std::runtime_error("sinogram csv: unexpected header: " + line);
    }
    struct Row {
        int a, t;
        double v;
    };
    std::vector<Row> rows;
    int max_a = -1, max_t = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Row r;
        char comma1 = 0, comma2 = 0;
        std::istringstream ss(line);
        if (!(ss >> r.a >> comma1 >> r.t >> comma2 >> r.v) || comma1 != ',' || comma2 != ',') {
            throw std::runtime_error("sinogram csv: malformed row: " + line);
        }
        rows.push_back(r);
        max_a = std::max(max_a, r.a);
        max_t = std::max(max_t, r.t);
    }
    if (rows.empty()) throw std::runtime_error("sinogram csv: no data rows");
    Sinogram s;
    s.num_angles = max_a + 1;
    s.num_beamlets = max_t + 1;
    s.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.num_angles) * s.num_beamlets);
    for (const auto& r : rows) {
        s.at(r.a, r.t) = r.v;
    }
    return s;
}

}  // namespace tomotr
