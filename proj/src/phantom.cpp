#include "tomotr/phantom.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "tomotr/cp.hpp"
#include "tomotr/io_util.hpp"

namespace tomotr {

namespace {

struct Point {
    double r, c;
};

double cross(const Point& o, const Point& a, const Point& b) {
    return (a.r - o.r) * (b.c - o.c) - (a.c - o.c) * (b.r - o.r);
}

// half-plane test against all three edges; boundary counts as inside
bool in_triangle(const Point& p, const Point& v0, const Point& v1, const Point& v2) {
    const double d0 = cross(v0, v1, p);
    const double d1 = cross(v1, v2, p);
    const double d2 = cross(v2, v0, p);
    const bool has_neg = d0 < 0 || d1 < 0 || d2 < 0;
    const bool has_pos = d0 > 0 || d1 > 0 || d2 > 0;
    return !(has_neg && has_pos);
}

}  // namespace

Phantom make_circle_triangle_phantom(int grid_size) {
    if (grid_size < 16) {
        throw std::invalid_argument("circle-triangle phantom: K must be >= 16");
    }
    const double K = grid_size;
    const Point circle_center{0.3 * K, 0.3 * K};
    const double radius = 0.15 * K;
    const Point v0{0.55 * K, 0.75 * K};
    const Point v1{0.85 * K, 0.55 * K};
    const Point v2{0.85 * K, 0.90 * K};

    Phantom p;
    p.name = "circle-triangle";
    p.image = Image::Zero(grid_size, grid_size);
    for (int i = 0; i < grid_size; ++i) {
        for (int j = 0; j < grid_size; ++j) {
            const Point center{i + 0.5, j + 0.5};
            const double dr = center.r - circle_center.r;
            const double dc = center.c - circle_center.c;
            if (dr * dr + dc * dc <= radius * radius) {
                p.image(i, j) = 1.0;
            } else if (in_triangle(center, v0, v1, v2)) {
                p.image(i, j) = 0.6;
            }
        }
    }
    p.measured_rank = matrix_rank(p.image);
    return p;
}

namespace {

struct EllipseSpec {
    double value;   // additive intensity
    double a, b;    // semi-axes in [-1,1] coordinates
    double x0, y0;  // center
    double phi;     // rotation, radians
};

// Synthetic head slice: skull shell, brain interior, ventricles and a few
// small bright structures. Intensities are chosen so every sum of
// overlapping components stays inside [0,1].
constexpr std::array<EllipseSpec, 10> kHeadEllipses = {{
    {1.00, 0.690, 0.920, 0.00, 0.000, 0.0},
    {-0.80, 0.662, 0.874, 0.00, -0.018, 0.0},
    {-0.20, 0.110, 0.310, 0.22, 0.000, -0.314159265358979},
    {-0.20, 0.160, 0.410, -0.22, 0.000, 0.314159265358979},
    {0.10, 0.210, 0.250, 0.00, 0.350, 0.0},
    {0.10, 0.046, 0.046, 0.00, 0.100, 0.0},
    {0.10, 0.046, 0.046, 0.00, -0.100, 0.0},
    {0.10, 0.046, 0.023, -0.08, -0.605, 0.0},
    {0.10, 0.023, 0.023, 0.00, -0.606, 0.0},
    {0.10, 0.023, 0.046, 0.06, -0.605, 0.0},
}};

}  // namespace

Phantom make_brain_phantom(int grid_size) {
    if (grid_size < 16) {
        throw std::invalid_argument("brain phantom: K must be >= 16");
    }
    Phantom p;
    p.name = "brain";
    p.image = Image::Zero(grid_size, grid_size);
    const double half = grid_size / 2.0;
    for (int i = 0; i < grid_size; ++i) {
        for (int j = 0; j < grid_size; ++j) {
            const double x = (j + 0.5 - half) / half;
            const double y = (half - i - 0.5) / half;
            double value = 0.0;
            for (const auto& e : kHeadEllipses) {
                const double ct = std::cos(e.phi);
                const double st = std::sin(e.phi);
                const double u = (x - e.x0) * ct + (y - e.y0) * st;
                const double v = -(x - e.x0) * st + (y - e.y0) * ct;
                if ((u / e.a) * (u / e.a) + (v / e.b) * (v / e.b) <= 1.0) {
                    value += e.value;
                }
            }
            p.image(i, j) = std::clamp(value, 0.0, 1.0);
        }
    }
    p.measured_rank = matrix_rank(p.image);
    return p;
}

Phantom phantom_by_name(const std::string& name, int grid_size) {
    if (name == "circle-triangle") return make_circle_triangle_phantom(grid_size);
    if (name == "brain") return make_brain_phantom(grid_size);
    throw std::invalid_argument("unknown phantom id: " + name);
}

namespace {

int read_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments per the PNM spec
    while (true) {
        int ch = in.peek();
        if (ch == '#') {
            std::string comment;
            std::getline(in, comment);
        } else if (ch != EOF && std::isspace(static_cast<unsigned char>(ch))) {
            in.get();
        } else {
            break;
        }
    }
    int value = 0;
    if (!(in >> value)) {
        throw std::runtime_error("pgm: malformed header");
    }
    return value;
}

}  // namespace

Image load_image_pgm(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P2" && magic != "P5") {
        throw std::runtime_error("pgm: unsupported magic (want P2 or P5): " + path.string());
    }
    const int width = read_pnm_token(in);
    const int height = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
        throw std::runtime_error("pgm: invalid dimensions or maxval in " + path.string());
    }
    if (width != height) {
        throw std::runtime_error("pgm: image must be square, got " + std::to_string(width) + "x" +
                                 std::to_string(height));
    }

    Image image(height, width);
    if (magic == "P2") {
        for (int i = 0; i < height; ++i) {
            for (int j = 0; j < width; ++j) {
                int v = 0;
                if (!(in >> v)) throw std::runtime_error("pgm: truncated ASCII data");
                image(i, j) = static_cast<double>(v) / maxval;
            }
        }
    } else {
        in.get();  // single whitespace byte after maxval
        const int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> buf(static_cast<std::size_t>(width) * height * bytes);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
            throw std::runtime_error("pgm: truncated binary data");
        }
        std::size_t pos = 0;
        for (int i = 0; i < height; ++i) {
            for (int j = 0; j < width; ++j) {
                unsigned v = buf[pos++];
                if (bytes == 2) v = (v << 8) | buf[pos++];  // big-endian
                image(i, j) = static_cast<double>(v) / maxval;
            }
        }
    }
    return image;
}

void save_image_pgm(const Image& image, const std::filesystem::path& path, int maxval,
                    bool binary) {
    if (maxval != 255 && maxval != 65535) {
        throw std::invalid_argument("pgm: maxval must be 255 or 65535");
    }
    if (image.rows() != image.cols()) {
        throw std::invalid_argument("pgm: only square images are written");
    }
    auto out = open_output(path);
    const int K = static_cast<int>(image.rows());
    out << (binary ? "P5" : "P2") << "\n" << K << " " << K << "\n" << maxval << "\n";
    auto quantize = [&](double v) {
        return static_cast<unsigned>(std::llround(std::clamp(v, 0.0, 1.0) * maxval));
    };
    if (binary) {
        std::vector<unsigned char> buf;
        buf.reserve(static_cast<std::size_t>(K) * K * (maxval > 255 ? 2 : 1));
        for (int i = 0; i < K; ++i) {
            for (int j = 0; j < K; ++j) {
                const unsigned v = quantize(image(i, j));
                if (maxval > 255) buf.push_back(static_cast<unsigned char>(v >> 8));
                buf.push_back(static_cast<unsigned char>(v & 0xFF));
            }
        }
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
    } else {
        for (int i = 0; i < K; ++i) {
            for (int j = 0; j < K; ++j) {
                out << quantize(image(i, j)) << (j + 1 == K ? "\n" : " ");
            }
        }
    }
}

std::uint64_t GaussianSampler::raw() { return engine_(); }

double GaussianSampler::uniform_unit() {
    // top 53 bits mapped to (0, 1]: never zero, so log() below is safe
    return (static_cast<double>(raw() >> 11) + 1.0) * 0x1.0p-53;
}

double GaussianSampler::next() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_unit();
    const double u2 = uniform_unit();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = mag * std::sin(angle);
    has_spare_ = true;
    return mag * std::cos(angle);
}

Sinogram add_gaussian_noise(const Sinogram& sinogram, const NoiseSpec& spec) {
    if (!(spec.percent >= 0.0)) {
        throw std::invalid_argument("add_gaussian_noise: percent must be >= 0");
    }
    if (spec.percent == 0.0) return sinogram;
    const double sigma = spec.percent * sinogram.values.maxCoeff();
    GaussianSampler noise(spec.seed);
    Sinogram out = sinogram;
    for (Eigen::Index b = 0; b < out.values.size(); ++b) {
        out.values[b] += sigma * noise.next();
    }
    return out;
}

double rmse(const Image& a, const Image& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("rmse: image dimensions differ");
    }
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

}  // namespace tomotr
