#pragma once

// Dense inner loops shared by the layers, the model and retrieval. Every
// kernel has a serial reference and an OpenMP version. Each output element
// is produced by exactly one thread with the same accumulation order as the
// serial loop, so both versions are bit-identical.

#include <cstddef>
#include <span>

#include "hrge/matrix.hpp"

namespace hrge::kernels {

// out = x * w^T + b (bias broadcast per row). out must be x.rows() x w.rows().
void affine_serial(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& out);
void affine_parallel(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& out);

// grad_in = grad_out * w
void affine_grad_input_serial(const Matrix& grad_out, const Matrix& w, Matrix& grad_in);
void affine_grad_input_parallel(const Matrix& grad_out, const Matrix& w, Matrix& grad_in);

// grad_w += grad_out^T * x, grad_b += column sums of grad_out
void affine_grad_params_serial(const Matrix& grad_out, const Matrix& x, Matrix& grad_w, std::span<double> grad_b);
void affine_grad_params_parallel(const Matrix& grad_out, const Matrix& x, Matrix& grad_w, std::span<double> grad_b);

// Row pair_index(i, j, n) holds [x_i, x_j] for every ordered pair i != j.
Matrix expand_pairs_serial(const Matrix& x);
Matrix expand_pairs_parallel(const Matrix& x);

// Euclidean distances between every row of a and every row of b.
Matrix distances_serial(const Matrix& a, const Matrix& b);
Matrix distances_parallel(const Matrix& a, const Matrix& b);

// Dispatchers used by library code: go parallel above a work threshold.
void affine(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& out);
void affine_grad_input(const Matrix& grad_out, const Matrix& w, Matrix& grad_in);
void affine_grad_params(const Matrix& grad_out, const Matrix& x, Matrix& grad_w, std::span<double> grad_b);
Matrix expand_pairs(const Matrix& x);
Matrix distances(const Matrix& a, const Matrix& b);

// Index of pair (i, j), i != j, inside expand_pairs output for n nodes.
inline std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) {
    return i * (n - 1) + (j < i ? j : j - 1);
}

} // namespace hrge::kernels
