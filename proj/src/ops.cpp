#include "hrge/ops.hpp"

#include <cmath>

#include "hrge/errors.hpp"

namespace hrge {

MaxPoolResult maxpool_rows(const Matrix& x) {
    if (x.rows() == 0) throw EmptyInputError("maxpool_rows: input has no rows");
    MaxPoolResult r;
    r.values.assign(x.row(0).begin(), x.row(0).end());
    r.argmax.assign(x.cols(), 0);
    for (std::size_t i = 1; i < x.rows(); ++i) {
        const auto row = x.row(i);
        for (std::size_t c = 0; c < x.cols(); ++c) {
            if (row[c] > r.values[c]) {
                r.values[c] = row[c];
                r.argmax[c] = i;
            }
        }
    }
    return r;
}

Matrix maxpool_rows_backward(const MaxPoolResult& pool, std::size_t rows, std::span<const double> grad) {
    require_dim(grad.size(), pool.argmax.size(), "maxpool backward width");
    Matrix out(rows, grad.size());
    for (std::size_t c = 0; c < grad.size(); ++c) out(pool.argmax[c], c) += grad[c];
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require_dim(b.size(), a.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

NormalizeResult l2_normalize(std::span<const double> v) {
    NormalizeResult r;
    r.norm = l2_norm(v);
    r.values.assign(v.begin(), v.end());
    if (r.norm < kDegenerateNorm) {
        r.degenerate = true;
        return r;
    }
    for (double& x : r.values) x /= r.norm;
    return r;
}

Vector l2_normalize_backward(const NormalizeResult& r, std::span<const double> grad) {
    require_dim(grad.size(), r.values.size(), "normalize backward");
    Vector out(grad.begin(), grad.end());
    if (r.degenerate) return out;
    const double proj = dot(r.values, grad);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (grad[i] - r.values[i] * proj) / r.norm;
    return out;
}

std::size_t argmax(std::span<const double> v) {
    if (v.empty()) throw EmptyInputError("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
    require_dim(labels.size(), logits.rows(), "softmax_cross_entropy labels");
    if (logits.rows() == 0) throw EmptyInputError("softmax_cross_entropy: empty batch");
    const std::size_t classes = logits.cols();
    const double batch = static_cast<double>(logits.rows());
    SoftmaxCrossEntropy out;
    out.grad = Matrix(logits.rows(), classes);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        if (labels[r] >= classes) {
            throw LabelError("label " + std::to_string(labels[r]) + " at index " + std::to_string(r) +
                             " outside [0, " + std::to_string(classes) + ")");
        }
        const auto z = logits.row(r);
        const std::size_t top = argmax(z);
        const double zmax = z[top];
        // log1p keeps precision when one logit dominates
        double rest = 0.0;
        for (std::size_t c = 0; c < classes; ++c)
            if (c != top) rest += std::exp(z[c] - zmax);
        const double log_sum = std::log1p(rest);
        const double lse = zmax + log_sum;
        out.loss += log_sum + (zmax - z[labels[r]]);
        auto g = out.grad.row(r);
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = std::exp(z[c] - lse);
            g[c] = (p - (c == labels[r] ? 1.0 : 0.0)) / batch;
        }
    }
    out.loss /= batch;
    return out;
}

} // namespace hrge
