#include "tomotr/cp.hpp"

#include <Eigen/SVD>

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "tomotr/io_util.hpp"

namespace tomotr {

void CPFactorPair::validate() const {
    if (W1.cols() != W2.cols()) {
        throw std::invalid_argument("CPFactorPair: factors disagree on rank");
    }
    if (W1.rows() != W2.rows()) {
        throw std::invalid_argument("CPFactorPair: factors disagree on grid size");
    }
    if (W1.cols() < 1) {
        throw std::invalid_argument("CPFactorPair: rank must be >= 1");
    }
    if (W1.cols() > W1.rows()) {
        throw std::invalid_argument("CPFactorPair: rank exceeds grid size");
    }
    if (!W1.allFinite() || !W2.allFinite()) {
        throw std::invalid_argument("CPFactorPair: non-finite factor entries");
    }
}

Image cp_compose(const CPFactorPair& factors) {
    return factors.W1 * factors.W2.transpose();
}

Eigen::MatrixXd assemble_design(const SparseSystemTensor& tensor, const Eigen::MatrixXd& other,
                                int mode) {
    const int K = tensor.grid_size();
    if (mode != 1 && mode != 2) {
        throw std::invalid_argument("assemble_design: mode must be 1 or 2");
    }
    if (other.rows() != K) {
        throw std::invalid_argument("assemble_design: fixed factor has wrong row count");
    }
    const int R = static_cast<int>(other.cols());
    // scatter into a row-major buffer: one ray touches one contiguous row
    using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajorMatrix A = RowMajorMatrix::Zero(tensor.num_rays(), static_cast<Eigen::Index>(K) * R);
    if (mode == 1) {
        // unknown factor indexes rows; contract the fixed one over columns
        for (const auto& e : tensor.entries) {
            double* row = A.data() + static_cast<std::ptrdiff_t>(e.ray) * A.cols() + e.row;
            for (int r = 0; r < R; ++r) {
                row[static_cast<std::ptrdiff_t>(r) * K] += e.length * other(e.col, r);
            }
        }
    } else {
        for (const auto& e : tensor.entries) {
            double* row = A.data() + static_cast<std::ptrdiff_t>(e.ray) * A.cols() + e.col;
            for (int r = 0; r < R; ++r) {
                row[static_cast<std::ptrdiff_t>(r) * K] += e.length * other(e.row, r);
            }
        }
    }
    return A;
}

int matrix_rank(const Image& image, double tol) {
    if (!image.allFinite()) {
        throw std::invalid_argument("matrix_rank: non-finite image");
    }
    if (image.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(image);
    const auto& sv = svd.singularValues();
    const double sigma_max = sv.size() > 0 ? sv[0] : 0.0;
    if (sigma_max == 0.0) return 0;
    if (tol < 0.0) {
        tol = 1e-10 * static_cast<double>(std::max(image.rows(), image.cols()));
    }
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv[i] > tol * sigma_max) ++rank;
    }
    return rank;
}

long parameter_count(int grid_size, int rank) {
    if (grid_size < 1 || rank < 1) {
        throw std::invalid_argument("parameter_count: K and R must be >= 1");
    }
    return 2L * grid_size * rank;
}

namespace {

void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
    auto out = open_output(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out << ",";
            out << format_double(m(i, j));
        }
        out << "\n";
    }
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t start = 0;
        while (start <= line.size()) {
            std::size_t end = line.find(',', start);
            if (end == std::string::npos) end = line.size();
            row.push_back(std::stod(line.substr(start, end - start)));
            start = end + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw std::runtime_error("factor csv: ragged rows in " + path.string());
        }
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

}  // namespace

void save_factors_csv(const CPFactorPair& factors, const std::filesystem::path& base,
                      int iteration) {
    factors.validate();
    write_matrix_csv(factors.W1, base.string() + "_W1.csv");
    write_matrix_csv(factors.W2, base.string() + "_W2.csv");
    nlohmann::json meta;
    meta["K"] = factors.grid_size();
    meta["R"] = factors.rank();
    meta["iteration"] = iteration;
    auto out = open_output(base.string() + "_meta.json");
    out << meta.dump(2) << "\n";
}

CPFactorPair load_factors_csv(const std::filesystem::path& base) {
    CPFactorPair f;
    f.W1 = read_matrix_csv(base.string() + "_W1.csv");
    f.W2 = read_matrix_csv(base.string() + "_W2.csv");
    f.validate();
    return f;
}

}  // namespace tomotr
