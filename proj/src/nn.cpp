#include "fedmtl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedmtl/errors.hpp"
#include "fedmtl/rng.hpp"

namespace fedmtl {

namespace {

constexpr double kProbClamp = 1e-12; // cross-entropy inputs clamped to [kProbClamp, 1 - kProbClamp]

double clamp_prob(double p) {
    return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

double sigmoid(double z) {
    double s;
    if (z >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        s = e / (1.0 + e);
    }
    // keep the output strictly inside (0, 1) even when exp underflows
    if (s >= 1.0) s = std::nextafter(1.0, 0.0);
    if (s <= 0.0) s = std::numeric_limits<double>::min();
    return s;
}

void apply_activation(Activation act, const Tensor2& z, Tensor2& a) {
    const std::size_t n = z.rows(), w = z.cols();
    switch (act) {
        case Activation::Identity:
            a = z;
            break;
        case Activation::ReLU:
            a = z;
            for (double& v : a.data())
                if (v < 0.0) v = 0.0;
            break;
        case Activation::Sigmoid:
            a = Tensor2(n, w);
            for (std::size_t i = 0; i < z.size(); ++i) a.data()[i] = sigmoid(z.data()[i]);
            break;
        case Activation::Softmax: {
            a = Tensor2(n, w);
            for (std::size_t r = 0; r < n; ++r) {
                const double* zr = z.row_ptr(r);
                double* ar = a.row_ptr(r);
                double m = zr[0];
                for (std::size_t c = 1; c < w; ++c) m = std::max(m, zr[c]);
                double sum = 0.0;
                for (std::size_t c = 0; c < w; ++c) {
                    ar[c] = std::exp(zr[c] - m);
                    sum += ar[c];
                }
                for (std::size_t c = 0; c < w; ++c) ar[c] /= sum;
            }
            break;
        }
    }
}

// Derivative of the activation at z (elementwise activations only).
double activation_deriv(Activation act, double z, double a) {
    switch (act) {
        case Activation::Identity: return 1.0;
        case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return a * (1.0 - a);
        case Activation::Softmax: break; // handled by the row Jacobian path
    }
    return 0.0;
}

} // namespace

const char* to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::ReLU: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softmax: return "softmax";
    }
    return "?";
}

const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::BinaryCrossEntropy: return "bce";
        case LossKind::CategoricalCrossEntropy: return "cce";
        case LossKind::MeanSquaredError: return "mse";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::ReLU;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softmax") return Activation::Softmax;
    throw ConfigError("unknown activation '" + s + "'");
}

void validate_network(const Network& net) {
    if (net.empty()) throw ConfigError("network has no layers");
    for (std::size_t l = 0; l < net.size(); ++l) {
        const DenseLayer& layer = net[l];
        if (layer.out_width() == 0 || layer.in_width() == 0)
            throw ConfigError("layer " + std::to_string(l) + " has zero width");
        if (layer.bias.size() != layer.out_width())
            throw ShapeError("layer " + std::to_string(l) + ": bias length " +
                             std::to_string(layer.bias.size()) + " != out width " +
                             std::to_string(layer.out_width()));
        if (l + 1 < net.size() && layer.activation == Activation::Softmax)
            throw ConfigError("layer " + std::to_string(l) +
                              ": softmax is only permitted on the final layer");
        if (l > 0 && net[l - 1].out_width() != layer.in_width())
            throw ShapeError("layer " + std::to_string(l) + ": input width " +
                             std::to_string(layer.in_width()) + " != previous out width " +
                             std::to_string(net[l - 1].out_width()));
    }
}

void validate_loss_pairing(const Network& net, LossKind loss) {
    validate_network(net);
    const Activation out = net.back().activation;
    if (loss == LossKind::BinaryCrossEntropy && out != Activation::Sigmoid)
        throw ConfigError("binary cross-entropy requires a sigmoid output layer, got " +
                          std::string(to_string(out)));
    if (loss == LossKind::CategoricalCrossEntropy && out != Activation::Softmax)
        throw ConfigError("categorical cross-entropy requires a softmax output layer, got " +
                          std::string(to_string(out)));
}

ForwardCache forward(const Network& net, const Tensor2& batch) {
    validate_network(net);
    if (batch.cols() != net.front().in_width())
        throw ShapeError("layer 0: batch has " + std::to_string(batch.cols()) +
                         " columns, layer expects " + std::to_string(net.front().in_width()));

    ForwardCache cache;
    cache.input = batch;
    cache.pre.reserve(net.size());
    cache.post.reserve(net.size());

    const Tensor2* x = &cache.input;
    for (std::size_t l = 0; l < net.size(); ++l) {
        const DenseLayer& layer = net[l];
        if (x->cols() != layer.in_width())
            throw ShapeError("layer " + std::to_string(l) + ": input width " +
                             std::to_string(x->cols()) + " != expected " +
                             std::to_string(layer.in_width()));
        Tensor2 z(x->rows(), layer.out_width());
        for (std::size_t r = 0; r < x->rows(); ++r) {
            const double* xr = x->row_ptr(r);
            double* zr = z.row_ptr(r);
            for (std::size_t o = 0; o < layer.out_width(); ++o) {
                const double* wr = layer.weights.row_ptr(o);
                double acc = layer.bias[o];
                for (std::size_t i = 0; i < layer.in_width(); ++i) acc += wr[i] * xr[i];
                zr[o] = acc;
            }
        }
        Tensor2 a;
        apply_activation(layer.activation, z, a);
        cache.pre.push_back(std::move(z));
        cache.post.push_back(std::move(a));
        x = &cache.post.back();
    }
    return cache;
}

Tensor2 forward_values(const Network& net, const Tensor2& batch) {
    return forward(net, batch).post.back();
}

double loss_value(const Tensor2& output, const Tensor2& targets, LossKind loss) {
    if (!output.same_shape(targets))
        throw ShapeError("loss: output is " + std::to_string(output.rows()) + "x" +
                         std::to_string(output.cols()) + " but targets are " +
                         std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()));
    const std::size_t n = output.rows();
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double* y = targets.row_ptr(r);
        const double* a = output.row_ptr(r);
        for (std::size_t c = 0; c < output.cols(); ++c) {
            switch (loss) {
                case LossKind::MeanSquaredError: {
                    const double d = a[c] - y[c];
                    total += d * d;
                    break;
                }
                case LossKind::BinaryCrossEntropy: {
                    const double p = clamp_prob(a[c]);
                    total += -(y[c] * std::log(p) + (1.0 - y[c]) * std::log(1.0 - p));
                    break;
                }
                case LossKind::CategoricalCrossEntropy: {
                    if (y[c] != 0.0) total += -y[c] * std::log(clamp_prob(a[c]));
                    break;
                }
            }
        }
    }
    return total / static_cast<double>(n);
}

GradientSet backward(const Network& net, const ForwardCache& cache, const Tensor2& targets,
                     LossKind loss) {
    validate_loss_pairing(net, loss);
    if (cache.post.size() != net.size())
        throw ShapeError("backward: cache holds " + std::to_string(cache.post.size()) +
                         " layers, network has " + std::to_string(net.size()));
    const Tensor2& out = cache.output();
    if (!out.same_shape(targets))
        throw ShapeError("backward: targets are " + std::to_string(targets.rows()) + "x" +
                         std::to_string(targets.cols()) + ", output is " +
                         std::to_string(out.rows()) + "x" + std::to_string(out.cols()));

    const std::size_t n = out.rows();
    const double inv_n = 1.0 / static_cast<double>(n);

    // delta = dLoss/dz for the current layer, already carrying the 1/n factor
    Tensor2 delta(n, out.cols());
    const std::size_t last = net.size() - 1;
    const Activation out_act = net[last].activation;

    if ((loss == LossKind::CategoricalCrossEntropy && out_act == Activation::Softmax) ||
        (loss == LossKind::BinaryCrossEntropy && out_act == Activation::Sigmoid)) {
        // fused cross-entropy shortcut: dL/dz = a - y
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < out.cols(); ++c)
                delta(r, c) = (out(r, c) - targets(r, c)) * inv_n;
    } else {
        // dL/da, then chain through the output activation
        Tensor2 dlda(n, out.cols());
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) {
                switch (loss) {
                    case LossKind::MeanSquaredError:
                        dlda(r, c) = 2.0 * (out(r, c) - targets(r, c)) * inv_n;
                        break;
                    case LossKind::BinaryCrossEntropy: {
                        const double p = clamp_prob(out(r, c));
                        dlda(r, c) = (-(targets(r, c) / p) + (1.0 - targets(r, c)) / (1.0 - p)) * inv_n;
                        break;
                    }
                    case LossKind::CategoricalCrossEntropy:
                        dlda(r, c) = -(targets(r, c) / clamp_prob(out(r, c))) * inv_n;
                        break;
                }
            }
        if (out_act == Activation::Softmax) {
            // dL/dz_i = a_i (dL/da_i - sum_j dL/da_j a_j)
            for (std::size_t r = 0; r < n; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < out.cols(); ++c) dot += dlda(r, c) * out(r, c);
                for (std::size_t c = 0; c < out.cols(); ++c)
                    delta(r, c) = out(r, c) * (dlda(r, c) - dot);
            }
        } else {
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < out.cols(); ++c)
                    delta(r, c) = dlda(r, c) *
                                  activation_deriv(out_act, cache.pre[last](r, c), out(r, c));
        }
    }

    GradientSet grads(net.size());
    for (std::size_t li = net.size(); li-- > 0;) {
        const DenseLayer& layer = net[li];
        const Tensor2& x = li == 0 ? cache.input : cache.post[li - 1];

        LayerGrad& g = grads[li];
        g.dweights = Tensor2(layer.out_width(), layer.in_width());
        g.dbias.assign(layer.out_width(), 0.0);

        for (std::size_t r = 0; r < n; ++r) {
            const double* dr = delta.row_ptr(r);
            const double* xr = x.row_ptr(r);
            for (std::size_t o = 0; o < layer.out_width(); ++o) {
                const double d = dr[o];
                if (d == 0.0) continue;
                g.dbias[o] += d;
                double* gw = g.dweights.row_ptr(o);
                for (std::size_t i = 0; i < layer.in_width(); ++i) gw[i] += d * xr[i];
            }
        }

        if (li > 0) {
            // propagate: delta_prev = (W^T delta) * sigma'(z_prev)
            Tensor2 prev(n, layer.in_width());
            for (std::size_t r = 0; r < n; ++r) {
                const double* dr = delta.row_ptr(r);
                double* pr = prev.row_ptr(r);
                for (std::size_t i = 0; i < layer.in_width(); ++i) pr[i] = 0.0;
                for (std::size_t o = 0; o < layer.out_width(); ++o) {
                    const double d = dr[o];
                    if (d == 0.0) continue;
                    const double* wr = layer.weights.row_ptr(o);
                    for (std::size_t i = 0; i < layer.in_width(); ++i) pr[i] += d * wr[i];
                }
                const Activation act = net[li - 1].activation;
                for (std::size_t i = 0; i < layer.in_width(); ++i)
                    pr[i] *= activation_deriv(act, cache.pre[li - 1](r, i), cache.post[li - 1](r, i));
            }
            delta = std::move(prev);
        }
    }

    for (std::size_t li = 0; li < grads.size(); ++li)
        if (!grads[li].dweights.all_finite())
            throw Error("backward: non-finite gradient in layer " + std::to_string(li));
    return grads;
}

GradientSet finite_diff_grad(const Network& net, const Tensor2& batch, const Tensor2& targets,
                             LossKind loss, double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("finite_diff_grad: epsilon must be positive");
    validate_loss_pairing(net, loss);

    Network work = net;
    auto loss_at = [&]() {
        return loss_value(forward_values(work, batch), targets, loss);
    };

    GradientSet grads = zero_gradients(net);
    for (std::size_t li = 0; li < net.size(); ++li) {
        DenseLayer& layer = work[li];
        LayerGrad& g = grads[li];
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            const double saved = layer.weights.data()[i];
            layer.weights.data()[i] = saved + epsilon;
            const double up = loss_at();
            layer.weights.data()[i] = saved - epsilon;
            const double down = loss_at();
            layer.weights.data()[i] = saved;
            g.dweights.data()[i] = (up - down) / (2.0 * epsilon);
        }
        for (std::size_t o = 0; o < layer.bias.size(); ++o) {
            const double saved = layer.bias[o];
            layer.bias[o] = saved + epsilon;
            const double up = loss_at();
            layer.bias[o] = saved - epsilon;
            const double down = loss_at();
            layer.bias[o] = saved;
            g.dbias[o] = (up - down) / (2.0 * epsilon);
        }
    }
    return grads;
}

void sgd_step(DenseLayer& layer, const LayerGrad& grad, double eta) {
    if (!layer.weights.same_shape(grad.dweights) || layer.bias.size() != grad.dbias.size())
        throw ShapeError("sgd_step: gradient shape does not match layer");
    for (std::size_t i = 0; i < layer.weights.size(); ++i)
        layer.weights.data()[i] -= eta * grad.dweights.data()[i];
    for (std::size_t o = 0; o < layer.bias.size(); ++o) layer.bias[o] -= eta * grad.dbias[o];
}

void sgd_step(Network& net, const GradientSet& grads, double eta) {
    if (!(eta > 0.0)) throw ConfigError("sgd_step: eta must be positive");
    if (grads.size() != net.size())
        throw ShapeError("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(net.size()) + " layers");
    for (std::size_t l = 0; l < net.size(); ++l) sgd_step(net[l], grads[l], eta);
}

Network init_weights(std::size_t input_width, const std::vector<LayerSpec>& specs,
                     std::uint64_t seed) {
    if (input_width == 0) throw ConfigError("init_weights: zero input width");
    if (specs.empty()) throw ConfigError("init_weights: no layers");
    Rng rng(derive_seed(seed, 0x11));
    Network net;
    net.reserve(specs.size());
    std::size_t fan_in = input_width;
    for (const LayerSpec& spec : specs) {
        if (spec.width == 0) throw ConfigError("init_weights: zero layer width");
        DenseLayer layer;
        layer.activation = spec.activation;
        layer.weights = Tensor2(spec.width, fan_in);
        layer.bias.assign(spec.width, 0.0);
        if (spec.activation == Activation::ReLU) {
            const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (double& w : layer.weights.data()) w = stddev * rng.normal();
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + spec.width));
            for (double& w : layer.weights.data()) w = rng.uniform(-limit, limit);
        }
        fan_in = spec.width;
        net.push_back(std::move(layer));
    }
    return net;
}

GradientSet zero_gradients(const Network& net) {
    GradientSet grads(net.size());
    for (std::size_t l = 0; l < net.size(); ++l) {
        grads[l].dweights = Tensor2(net[l].out_width(), net[l].in_width());
        grads[l].dbias.assign(net[l].out_width(), 0.0);
    }
    return grads;
}

double max_relative_error(const GradientSet& a, const GradientSet& b) {
    if (a.size() != b.size()) throw ShapeError("max_relative_error: layer count mismatch");
    double worst = 0.0;
    auto accum = [&worst](double x, double y) {
        const double denom = std::max({std::fabs(x), std::fabs(y), 1e-3});
        worst = std::max(worst, std::fabs(x - y) / denom);
    };
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (!a[l].dweights.same_shape(b[l].dweights) || a[l].dbias.size() != b[l].dbias.size())
            throw ShapeError("max_relative_error: shape mismatch in layer " + std::to_string(l));
        for (std::size_t i = 0; i < a[l].dweights.size(); ++i)
            accum(a[l].dweights.data()[i], b[l].dweights.data()[i]);
        for (std::size_t o = 0; o < a[l].dbias.size(); ++o) accum(a[l].dbias[o], b[l].dbias[o]);
    }
    return worst;
}

} // namespace fedmtl
