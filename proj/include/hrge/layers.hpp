#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hrge/matrix.hpp"

namespace hrge {

// A named view onto one trainable tensor and its gradient buffer. Spans stay
// valid for as long as the owning layer is alive and not moved.
struct ParamRef {
    std::string name;
    std::span<double> value;
    std::span<double> grad;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

using ParamList = std::vector<ParamRef>;

void zero_grads(const ParamList& params);

enum class Activation { identity, relu };

// Elementwise max(0, x).
Matrix relu(const Matrix& x);
// grad * 1[pre > 0]
Matrix relu_backward(const Matrix& pre, const Matrix& grad);

// y = x W^T + b. Weight is out x in.
class LinearLayer {
public:
    LinearLayer() = default;
    LinearLayer(std::size_t in_dim, std::size_t out_dim);

    // Uniform He-style fan-in initialisation; biases zero.
    void init(std::mt19937_64& rng);

    std::size_t in_dim() const noexcept { return weight_.cols(); }
    std::size_t out_dim() const noexcept { return weight_.rows(); }

    Matrix forward(const Matrix& x) const;
    // Accumulates parameter gradients for input x and returns d(loss)/dx.
    Matrix backward(const Matrix& x, const Matrix& grad_out);

    void zero_grad();
    void collect(const std::string& prefix, ParamList& out);

    Matrix& weight() noexcept { return weight_; }
    const Matrix& weight() const noexcept { return weight_; }
    Vector& bias() noexcept { return bias_; }
    const Vector& bias() const noexcept { return bias_; }
    const Matrix& grad_weight() const noexcept { return grad_weight_; }
    const Vector& grad_bias() const noexcept { return grad_bias_; }

private:
    Matrix weight_;
    Vector bias_;
    Matrix grad_weight_;
    Vector grad_bias_;
};

// Activations cached by Mlp::forward for a later backward pass. A trace can be
// consumed once.
struct MlpTrace {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
    bool ready = false;
};

// Stack of linear layers with a rectifier between layers and identity after
// the last one.
class Mlp {
public:
    Mlp() = default;
    // dims = {in, h1, ..., out}; dims.size() - 1 layers.
    explicit Mlp(std::span<const std::size_t> dims);

    void init(std::mt19937_64& rng);

    std::size_t in_dim() const { return layers_.front().in_dim(); }
    std::size_t out_dim() const { return layers_.back().out_dim(); }
    std::size_t depth() const noexcept { return layers_.size(); }

    Matrix forward(const Matrix& x, MlpTrace* trace = nullptr) const;
    Matrix backward(MlpTrace& trace, const Matrix& grad_out);

    void zero_grad();
    void collect(const std::string& prefix, ParamList& out);

    std::vector<LinearLayer>& layers() noexcept { return layers_; }
    const std::vector<LinearLayer>& layers() const noexcept { return layers_; }

private:
    std::vector<LinearLayer> layers_;
};

} // namespace hrge
