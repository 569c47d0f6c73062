#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace tomotr {

/// A 2D attenuation map on a K x K grid. Row index increases downward,
/// column index increases to the right; storage is Eigen's default
/// (column-major), so vectorizing an Image stacks its columns.
using Image = Eigen::MatrixXd;

/// Parallel-beam scan description: pixel grid size, projection angles
/// (radians) and a uniform detector of `num_beamlets` rays spanning
/// [-detector_halfwidth, +detector_halfwidth] in pixel units.
struct ScanGeometry {
    int grid_size = 0;
    std::vector<double> angles;
    int num_beamlets = 0;
    double detector_halfwidth = 0.0;

    /// Default scan used throughout: `num_angles` angles evenly spaced
    /// over [1, 2*pi) starting at 1 rad, detector halfwidth = |T|/2.
    /// Requires |T| > sqrt(2)*K so every ray family covers the grid.
    static ScanGeometry uniform(int grid_size, int num_angles, int num_beamlets = 91);

    int num_rays() const { return static_cast<int>(angles.size()) * num_beamlets; }

    /// Signed detector offset of beamlet t; beamlets are centered in
    /// equal detector bins, so offsets are symmetric about zero.
    double beamlet_offset(int t) const;

    int ray_index(int angle_index, int beamlet_index) const {
        return angle_index * num_beamlets + beamlet_index;
    }

    void validate() const;
};

/// Stacked projection data: values[b] with b = angle_index*|T| + beamlet_index.
struct Sinogram {
    Eigen::VectorXd values;
    int num_angles = 0;
    int num_beamlets = 0;

    int size() const { return static_cast<int>(values.size()); }
    double& at(int angle_index, int beamlet_index) {
        return values[angle_index * num_beamlets + beamlet_index];
    }
    double at(int angle_index, int beamlet_index) const {
        return values[angle_index * num_beamlets + beamlet_index];
    }

    static Sinogram zeros(const ScanGeometry& g);
};

/// Sparse ray/pixel intersection operator. Each entry stores the exact
/// length of ray b inside pixel (row, col); entries are grouped by ray
/// (ray_begin[b] .. ray_begin[b+1]) in traversal order.
struct SparseSystemTensor {
    struct Entry {
        std::int32_t ray;
        std::int32_t row;
        std::int32_t col;
        double length;
    };

    ScanGeometry geometry;
    std::vector<Entry> entries;
    std::vector<std::size_t> ray_begin;  // size num_rays()+1

    int num_rays() const { return geometry.num_rays(); }
    int grid_size() const { return geometry.grid_size; }
    std::size_t nnz() const { return entries.size(); }
};

/// Trace every (angle, beamlet) ray through the unit-pixel grid centered
/// at the origin and collect exact intersection lengths (Siddon-style
/// incremental traversal). Entries below 1e-12 are dropped.
SparseSystemTensor build_system_tensor(const ScanGeometry& geometry);

/// s[b] = sum_{i,j} L[b,i,j] * W(i,j).
Sinogram forward_project(const SparseSystemTensor& tensor, const Image& image);

/// W0(i,j) = sum_b L[b,i,j] * s[b]; exact adjoint of forward_project.
Image back_project(const SparseSystemTensor& tensor, const Sinogram& sinogram);

/// Flatten to a (num_rays x K^2) sparse matrix whose column for pixel
/// (i,j) is j*K + i, matching the column-major vectorization of Image.
Eigen::SparseMatrix<double> unfold_mode1(const SparseSystemTensor& tensor);

/// Text triplet export: header "b i j count=N shape=BxKxK" followed by
/// one "b i j length" line per entry, ascending (b, i, j).
void save_system_tensor(const SparseSystemTensor& tensor, const std::filesystem::path& path);

/// Re-reads a triplet file produced by save_system_tensor. The file does
/// not carry the angle list, so the caller supplies the geometry; shape
/// consistency is checked.
SparseSystemTensor load_system_tensor(const std::filesystem::path& path,
                                      const ScanGeometry& geometry);

/// CSV with header "angle_index,beamlet_index,value", one row per beamlet.
void save_sinogram_csv(const Sinogram& sinogram, const std::filesystem::path& path);
Sinogram load_sinogram_csv(const std::filesystem::path& path);

}  // namespace tomotr
