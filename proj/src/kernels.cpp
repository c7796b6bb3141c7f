#include "hrge/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "hrge/errors.hpp"

namespace hrge::kernels {
namespace {

constexpr std::size_t kParallelWork = 1u << 15;

void check_affine(const Matrix& x, const Matrix& w, std::span<const double> b, const Matrix& out) {
    require_dim(x.cols(), w.cols(), "affine input width");
    require_dim(b.size(), w.rows(), "affine bias length");
    require_dim(out.rows(), x.rows(), "affine output rows");
    require_dim(out.cols(), w.rows(), "affine output cols");
}

inline void affine_row(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& out, std::size_t r) {
    const auto xr = x.row(r);
    auto orow = out.row(r);
    for (std::size_t o = 0; o < w.rows(); ++o) {
        const auto wr = w.row(o);
        double acc = 0.0;
        for (std::size_t k = 0; k < xr.size(); ++k) acc += xr[k] * wr[k];
        orow[o] = acc + b[o];
    }
}

inline void grad_input_row(const Matrix& g, const Matrix& w, Matrix& gi, std::size_t r) {
    auto dst = gi.row(r);
    std::fill(dst.begin(), dst.end(), 0.0);
    const auto gr = g.row(r);
    for (std::size_t o = 0; o < w.rows(); ++o) {
        const double go = gr[o];
        if (go == 0.0) continue;
        const auto wr = w.row(o);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += go * wr[k];
    }
}

inline void grad_params_row(const Matrix& g, const Matrix& x, Matrix& gw, std::span<double> gb, std::size_t o) {
    auto wrow = gw.row(o);
    double bsum = 0.0;
    for (std::size_t r = 0; r < g.rows(); ++r) {
        const double go = g(r, o);
        bsum += go;
        if (go == 0.0) continue;
        const auto xr = x.row(r);
        for (std::size_t k = 0; k < wrow.size(); ++k) wrow[k] += go * xr[k];
    }
    gb[o] += bsum;
}

inline void pair_row(const Matrix& x, Matrix& out, std::size_t i) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        auto dst = out.row(pair_index(i, j, n));
        std::copy_n(x.row(i).begin(), d, dst.begin());
        std::copy_n(x.row(j).begin(), d, dst.begin() + static_cast<std::ptrdiff_t>(d));
    }
}

inline double row_distance(const Matrix& a, const Matrix& b, std::size_t i, std::size_t j) {
    const auto ar = a.row(i);
    const auto br = b.row(j);
    double s = 0.0;
    for (std::size_t k = 0; k < ar.size(); ++k) {
        const double d = ar[k] - br[k];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace

void affine_serial(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& out) {
    check_affine(x, w, b, out);
    for (std::size_t r = 0; r < x.rows(); ++r) affine_row(x, w, b, out, r);
}

void affine_parallel(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& out) {
    check_affine(x, w, b, out);
    const auto rows = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) affine_row(x, w, b, out, static_cast<std::size_t>(r));
}

void affine_grad_input_serial(const Matrix& grad_out, const Matrix& w, Matrix& grad_in) {
    require_dim(grad_out.cols(), w.rows(), "affine grad width");
    grad_in = Matrix(grad_out.rows(), w.cols());
    for (std::size_t r = 0; r < grad_out.rows(); ++r) grad_input_row(grad_out, w, grad_in, r);
}

void affine_grad_input_parallel(const Matrix& grad_out, const Matrix& w, Matrix& grad_in) {
    require_dim(grad_out.cols(), w.rows(), "affine grad width");
    grad_in = Matrix(grad_out.rows(), w.cols());
    const auto rows = static_cast<std::ptrdiff_t>(grad_out.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) grad_input_row(grad_out, w, grad_in, static_cast<std::size_t>(r));
}

void affine_grad_params_serial(const Matrix& grad_out, const Matrix& x, Matrix& grad_w, std::span<double> grad_b) {
    require_dim(grad_out.rows(), x.rows(), "affine grad batch");
    require_dim(grad_w.rows(), grad_out.cols(), "affine grad_w rows");
    require_dim(grad_w.cols(), x.cols(), "affine grad_w cols");
    for (std::size_t o = 0; o < grad_w.rows(); ++o) grad_params_row(grad_out, x, grad_w, grad_b, o);
}

void affine_grad_params_parallel(const Matrix& grad_out, const Matrix& x, Matrix& grad_w, std::span<double> grad_b) {
    require_dim(grad_out.rows(), x.rows(), "affine grad batch");
    require_dim(grad_w.rows(), grad_out.cols(), "affine grad_w rows");
    require_dim(grad_w.cols(), x.cols(), "affine grad_w cols");
    const auto outs = static_cast<std::ptrdiff_t>(grad_w.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < outs; ++o) grad_params_row(grad_out, x, grad_w, grad_b, static_cast<std::size_t>(o));
}

Matrix expand_pairs_serial(const Matrix& x) {
    const std::size_t n = x.rows();
    Matrix out(n < 2 ? 0 : n * (n - 1), 2 * x.cols());
    if (n < 2) return out;
    for (std::size_t i = 0; i < n; ++i) pair_row(x, out, i);
    return out;
}

Matrix expand_pairs_parallel(const Matrix& x) {
    const std::size_t n = x.rows();
    Matrix out(n < 2 ? 0 : n * (n - 1), 2 * x.cols());
    if (n < 2) return out;
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) pair_row(x, out, static_cast<std::size_t>(i));
    return out;
}

Matrix distances_serial(const Matrix& a, const Matrix& b) {
    require_dim(b.cols(), a.cols(), "distance width");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = row_distance(a, b, i, j);
    return out;
}

Matrix distances_parallel(const Matrix& a, const Matrix& b) {
    require_dim(b.cols(), a.cols(), "distance width");
    Matrix out(a.rows(), b.rows());
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < b.rows(); ++j) out(ui, j) = row_distance(a, b, ui, j);
    }
    return out;
}

void affine(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& out) {
    if (x.rows() * w.size() >= kParallelWork) affine_parallel(x, w, b, out);
    else affine_serial(x, w, b, out);
}

void affine_grad_input(const Matrix& grad_out, const Matrix& w, Matrix& grad_in) {
    if (grad_out.rows() * w.size() >= kParallelWork) affine_grad_input_parallel(grad_out, w, grad_in);
    else affine_grad_input_serial(grad_out, w, grad_in);
}

void affine_grad_params(const Matrix& grad_out, const Matrix& x, Matrix& grad_w, std::span<double> grad_b) {
    if (grad_out.rows() * grad_w.size() >= kParallelWork) affine_grad_params_parallel(grad_out, x, grad_w, grad_b);
    else affine_grad_params_serial(grad_out, x, grad_w, grad_b);
}

Matrix expand_pairs(const Matrix& x) {
    if (x.rows() * x.rows() * x.cols() >= kParallelWork) return expand_pairs_parallel(x);
    return expand_pairs_serial(x);
}

Matrix distances(const Matrix& a, const Matrix& b) {
    if (a.rows() * b.rows() * a.cols() >= kParallelWork) return distances_parallel(a, b);
    return distances_serial(a, b);
}

} // namespace hrge::kernels
