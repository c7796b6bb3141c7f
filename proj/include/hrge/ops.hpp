#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hrge/matrix.hpp"

namespace hrge {

struct MaxPoolResult {
    Vector values;
    std::vector<std::size_t> argmax;  // first maximal row per column
};

MaxPoolResult maxpool_rows(const Matrix& x);
// Routes grad[c] to row argmax[c] of a rows x grad.size() matrix.
Matrix maxpool_rows_backward(const MaxPoolResult& pool, std::size_t rows, std::span<const double> grad);

inline constexpr double kDegenerateNorm = 1e-12;

struct NormalizeResult {
    Vector values;
    double norm = 0.0;
    bool degenerate = false;  // input returned unchanged
};

NormalizeResult l2_normalize(std::span<const double> v);
// Gradient w.r.t. the input of l2_normalize given the gradient w.r.t. its output.
Vector l2_normalize_backward(const NormalizeResult& r, std::span<const double> grad);

struct SoftmaxCrossEntropy {
    double loss = 0.0;  // mean over rows
    Matrix grad;        // (softmax - onehot) / batch
};

SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels);

// Index of the largest entry; first wins on ties.
std::size_t argmax(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

} // namespace hrge
