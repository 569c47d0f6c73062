#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "tomotr/geometry.hpp"

namespace tomotr {

/// Ground-truth test image with values in [0,1] and its numerical rank
/// at the default tolerance.
struct Phantom {
    Image image;
    std::string name;
    int measured_rank = 0;
};

/// Gaussian measurement noise: standard deviation = percent * max(s).
struct NoiseSpec {
    double percent = 0.0;   // fraction of the peak value, e.g. 0.01
    std::uint64_t seed = 0;
};

/// Filled circle (center 0.3K, radius 0.15K, value 1.0) plus a filled
/// triangle (value 0.6) on zero background; pixels included by their
/// center point. Requires K >= 16.
Phantom make_circle_triangle_phantom(int grid_size);

/// Synthetic axial head slice built from a fixed set of superimposed
/// ellipses (skull shell, interior, ventricles, small lesions). Values
/// stay in [0,1]; detail scales with K. Requires K >= 16.
Phantom make_brain_phantom(int grid_size);

/// Lookup by id: "circle-triangle" or "brain".
Phantom phantom_by_name(const std::string& name, int grid_size);

/// Reads ASCII (P2) or binary (P5) PGM, square images only, maxval up to
/// 65535; values come back normalized to [0,1].
Image load_image_pgm(const std::filesystem::path& path);

/// Writes binary (P5) or ASCII (P2) PGM at the given bit depth. Values
/// are clamped to [0,1] and quantized to maxval levels; 16-bit samples
/// are big-endian per the PNM convention.
void save_image_pgm(const Image& image, const std::filesystem::path& path, int maxval = 255,
                    bool binary = true);

/// Adds i.i.d. zero-mean Gaussian noise with sigma = percent * max(s).
/// Deterministic for a fixed seed (mt19937_64 + Box-Muller, both pinned);
/// percent = 0 returns the input unchanged.
Sinogram add_gaussian_noise(const Sinogram& sinogram, const NoiseSpec& spec);

/// sqrt(mean((a - b)^2)) over all pixels.
double rmse(const Image& a, const Image& b);

/// Seedable standard-normal stream used for all noise in this project:
/// mt19937_64 mapped to (0,1] doubles, paired through Box-Muller. Both
/// pieces are fully specified, so streams are stable across platforms.
class GaussianSampler {
  public:
    explicit GaussianSampler(std::uint64_t seed) : engine_(seed) {}
    double next();

  private:
    std::uint64_t raw();
    double uniform_unit();  // in (0, 1]

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace tomotr
