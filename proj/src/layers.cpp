#include "hrge/layers.hpp"

#include <algorithm>
#include <cmath>

#include "hrge/errors.hpp"
#include "hrge/kernels.hpp"

namespace hrge {

void zero_grads(const ParamList& params) {
    for (const auto& p : params) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

Matrix relu(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Matrix relu_backward(const Matrix& pre, const Matrix& grad) {
    require_dim(grad.rows(), pre.rows(), "relu backward rows");
    require_dim(grad.cols(), pre.cols(), "relu backward cols");
    Matrix out = grad;
    auto o = out.values();
    const auto p = pre.values();
    for (std::size_t i = 0; i < o.size(); ++i)
        if (!(p[i] > 0.0)) o[i] = 0.0;
    return out;
}

LinearLayer::LinearLayer(std::size_t in_dim, std::size_t out_dim)
    : weight_(out_dim, in_dim), bias_(out_dim, 0.0), grad_weight_(out_dim, in_dim), grad_bias_(out_dim, 0.0) {
    if (in_dim == 0 || out_dim == 0) throw ConfigError("linear layer dimensions must be positive");
}

void LinearLayer::init(std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_dim()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : weight_.values()) w = dist(rng);
    std::fill(bias_.begin(), bias_.end(), 0.0);
}

Matrix LinearLayer::forward(const Matrix& x) const {
    if (x.cols() != in_dim()) {
        throw ShapeError("linear layer: input has " + std::to_string(x.cols()) + " columns, layer expects " +
                         std::to_string(in_dim()));
    }
    Matrix out(x.rows(), out_dim());
    kernels::affine(x, weight_, bias_, out);
    return out;
}

Matrix LinearLayer::backward(const Matrix& x, const Matrix& grad_out) {
    require_dim(x.cols(), in_dim(), "linear backward input width");
    require_dim(grad_out.cols(), out_dim(), "linear backward grad width");
    kernels::affine_grad_params(grad_out, x, grad_weight_, grad_bias_);
    Matrix grad_in;
    kernels::affine_grad_input(grad_out, weight_, grad_in);
    return grad_in;
}

void LinearLayer::zero_grad() {
    grad_weight_.fill(0.0);
    std::fill(grad_bias_.begin(), grad_bias_.end(), 0.0);
}

void LinearLayer::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".weight", weight_.values(), grad_weight_.values(), weight_.rows(), weight_.cols()});
    out.push_back({prefix + ".bias", bias_, grad_bias_, 1, bias_.size()});
}

Mlp::Mlp(std::span<const std::size_t> dims) {
    if (dims.size() < 2) throw ConfigError("mlp needs at least one layer");
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) layers_.emplace_back(dims[k], dims[k + 1]);
}

void Mlp::init(std::mt19937_64& rng) {
    for (auto& l : layers_) l.init(rng);
}

Matrix Mlp::forward(const Matrix& x, MlpTrace* trace) const {
    if (trace) {
        trace->inputs.clear();
        trace->pre.clear();
    }
    Matrix h = x;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        Matrix z = layers_[k].forward(h);
        const bool last = k + 1 == layers_.size();
        if (trace) {
            trace->inputs.push_back(std::move(h));
            trace->pre.push_back(z);
        }
        h = last ? std::move(z) : relu(z);
    }
    if (trace) trace->ready = true;
    return h;
}

Matrix Mlp::backward(MlpTrace& trace, const Matrix& grad_out) {
    if (!trace.ready) throw StaleCacheError("mlp backward: no fresh forward trace");
    trace.ready = false;
    Matrix g = grad_out;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        if (k + 1 != layers_.size()) g = relu_backward(trace.pre[k], g);
        g = layers_[k].backward(trace.inputs[k], g);
    }
    return g;
}

void Mlp::zero_grad() {
    for (auto& l : layers_) l.zero_grad();
}

void Mlp::collect(const std::string& prefix, ParamList& out) {
    for (std::size_t k = 0; k < layers_.size(); ++k) layers_[k].collect(prefix + "." + std::to_string(k), out);
}

} // namespace hrge
