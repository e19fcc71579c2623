#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmtl/tensor.hpp"

namespace fedmtl {

enum class Activation { Identity, ReLU, Sigmoid, Softmax };
enum class LossKind { BinaryCrossEntropy, CategoricalCrossEntropy, MeanSquaredError };

const char* to_string(Activation a);
const char* to_string(LossKind k);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
    Tensor2 weights;              // out x in
    std::vector<double> bias;     // out
    Activation activation = Activation::Identity;

    std::size_t in_width() const { return weights.cols(); }
    std::size_t out_width() const { return weights.rows(); }
};

using Network = std::vector<DenseLayer>;

struct LayerSpec {
    std::size_t width = 0;
    Activation activation = Activation::Identity;
};

struct ForwardCache {
    Tensor2 input;
    std::vector<Tensor2> pre;   // z = W a_prev + b, per layer
    std::vector<Tensor2> post;  // a = sigma(z), per layer
    const Tensor2& output() const { return post.back(); }
};

struct LayerGrad {
    Tensor2 dweights;
    std::vector<double> dbias;
};

using GradientSet = std::vector<LayerGrad>;

// Rejects Softmax anywhere but the final layer and inconsistent widths.
void validate_network(const Network& net);
// Rejects loss/output-activation pairs the math does not support.
void validate_loss_pairing(const Network& net, LossKind loss);

ForwardCache forward(const Network& net, const Tensor2& batch);
Tensor2 forward_values(const Network& net, const Tensor2& batch);

// Scalar loss, mean over batch rows, summed over output columns.
double loss_value(const Tensor2& output, const Tensor2& targets, LossKind loss);

// Gradients of loss_value w.r.t. every weight and bias, mean reduction over
// the batch built in.
GradientSet backward(const Network& net, const ForwardCache& cache, const Tensor2& targets,
                     LossKind loss);

// Central differences (l(w+eps) - l(w-eps)) / 2 eps on every parameter.
// Verification oracle; independent of backward.
GradientSet finite_diff_grad(const Network& net, const Tensor2& batch, const Tensor2& targets,
                             LossKind loss, double epsilon);

void sgd_step(Network& net, const GradientSet& grads, double eta);
void sgd_step(DenseLayer& layer, const LayerGrad& grad, double eta);

// He-scaled init for ReLU layers, Glorot uniform otherwise, zero biases.
Network init_weights(std::size_t input_width, const std::vector<LayerSpec>& specs,
                     std::uint64_t seed);

GradientSet zero_gradients(const Network& net);

double max_relative_error(const GradientSet& a, const GradientSet& b);

} // namespace fedmtl
