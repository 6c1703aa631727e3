#include "dbdt/soft_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dbdt {

namespace {

int node_level(std::size_t node) {
    int level = 1;
    for (std::size_t k = node + 1; k > 1; k >>= 1) {
        ++level;
    }
    return level;
}

double balance_decay(const TreeShape& shape, std::size_t node, BalanceDecay decay) {
    const int exponent = decay == BalanceDecay::TreeDepth ? shape.depth : node_level(node);
    return std::ldexp(1.0, -exponent);
}

}  // namespace

std::size_t TreeShape::node_param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < layers; ++l) {
        n += layer_out(l) * layer_in(l) + layer_out(l);
    }
    return n;
}

void TreeShape::validate() const {
    if (depth < 2 || depth > 20) {
        throw InputError("tree depth must be in [2, 20], got " + std::to_string(depth));
    }
    if (layers < 1) {
        throw InputError("node networks need at least one layer");
    }
    if (input_dim == 0) {
        throw InputError("input dimension must be positive");
    }
}

double NodeNetView::forward(std::span<const double> x,
                            std::vector<std::vector<double>>& activations) const {
    const TreeShape& s = *shape_;
    activations.resize(static_cast<std::size_t>(s.layers));
    activations[0].assign(x.begin(), x.end());
    std::size_t offset = 0;
    double logit = 0.0;
    for (int l = 0; l < s.layers; ++l) {
        const std::size_t in = s.layer_in(l);
        const std::size_t out = s.layer_out(l);
        const double* w = params_.data() + offset;
        const double* b = w + out * in;
        const auto& a = activations[static_cast<std::size_t>(l)];
        if (l + 1 == s.layers) {
            double z = b[0];
            for (std::size_t j = 0; j < in; ++j) {
                z += w[j] * a[j];
            }
            logit = z;
        } else {
            auto& next = activations[static_cast<std::size_t>(l) + 1];
            next.resize(out);
            for (std::size_t o = 0; o < out; ++o) {
                double z = b[o];
                const double* row = w + o * in;
                for (std::size_t j = 0; j < in; ++j) {
                    z += row[j] * a[j];
                }
                next[o] = std::tanh(z);
            }
        }
        offset += out * in + out;
    }
    return logit;
}

double NodeNetView::routing_prob(std::span<const double> x) const {
    if (x.size() != shape_->input_dim) {
        throw InputError("routing_prob: input has " + std::to_string(x.size()) +
                         " features, node expects " + std::to_string(shape_->input_dim));
    }
    if (shape_->layers == 1) {
        double z = params_[shape_->input_dim];
        for (std::size_t j = 0; j < x.size(); ++j) {
            z += params_[j] * x[j];
        }
        return logistic(z);
    }
    thread_local std::vector<std::vector<double>> activations;
    return logistic(forward(x, activations));
}

void NodeNetView::backward(std::span<const double> x, double grad_prob, std::span<double> grad) const {
    const TreeShape& s = *shape_;
    thread_local std::vector<std::vector<double>> acts;
    const double prob = logistic(forward(x, acts));
    // Walk layers backwards; delta holds d(loss)/d(pre-activation) of layer l.
    std::vector<double> delta{grad_prob * prob * (1.0 - prob)};
    std::vector<std::size_t> offsets(static_cast<std::size_t>(s.layers));
    std::size_t offset = 0;
    for (int l = 0; l < s.layers; ++l) {
        offsets[static_cast<std::size_t>(l)] = offset;
        offset += s.layer_out(l) * s.layer_in(l) + s.layer_out(l);
    }
    std::vector<double> upstream;
    for (int l = s.layers - 1; l >= 0; --l) {
        const std::size_t in = s.layer_in(l);
        const std::size_t out = s.layer_out(l);
        const std::size_t off = offsets[static_cast<std::size_t>(l)];
        const double* w = params_.data() + off;
        double* gw = grad.data() + off;
        double* gb = gw + out * in;
        const auto& a = acts[static_cast<std::size_t>(l)];
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            gb[o] += d;
            double* grow = gw + o * in;
            for (std::size_t j = 0; j < in; ++j) {
                grow[j] += d * a[j];
            }
        }
        if (l == 0) {
            break;
        }
        upstream.assign(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double* row = w + o * in;
            for (std::size_t j = 0; j < in; ++j) {
                upstream[j] += row[j] * delta[o];
            }
        }
        // a is tanh output of the previous layer.
        delta.resize(in);
        for (std::size_t j = 0; j < in; ++j) {
            delta[j] = upstream[j] * (1.0 - a[j] * a[j]);
        }
    }
}

double routing_prob(std::span<const double> weights, double bias, std::span<const double> x) {
    if (weights.size() != x.size()) {
        throw InputError("routing_prob: dimension mismatch");
    }
    double z = bias;
    for (std::size_t j = 0; j < x.size(); ++j) {
        z += weights[j] * x[j];
    }
    return logistic(z);
}

std::vector<double> leaf_class_distribution(std::span<const double> phi) {
    if (phi.size() < 2) {
        throw InputError("leaf_class_distribution: need at least two classes");
    }
    if (!std::all_of(phi.begin(), phi.end(), [](double v) { return std::isfinite(v); })) {
        throw InputError("leaf_class_distribution: non-finite input");
    }
    const double top = *std::max_element(phi.begin(), phi.end());
    std::vector<double> out(phi.size());
    double total = 0.0;
    for (std::size_t k = 0; k < phi.size(); ++k) {
        out[k] = std::exp(phi[k] - top);
        total += out[k];
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

SoftTree::SoftTree(const TreeShape& shape) : shape_(shape) {
    shape_.validate();
    params_.assign(shape_.param_count(), 0.0);
}

SoftTree::SoftTree(const TreeShape& shape, std::vector<double> params)
    : shape_(shape), params_(std::move(params)) {
    shape_.validate();
    if (params_.size() != shape_.param_count()) {
        throw InputError("tree parameter count " + std::to_string(params_.size()) +
                         " does not match shape (" + std::to_string(shape_.param_count()) + ")");
    }
}

std::span<const double> SoftTree::node_params(std::size_t node) const {
    const std::size_t n = shape_.node_param_count();
    return std::span<const double>(params_).subspan(node * n, n);
}

std::span<double> SoftTree::node_params(std::size_t node) {
    const std::size_t n = shape_.node_param_count();
    return std::span<double>(params_).subspan(node * n, n);
}

std::span<const double> SoftTree::leaves() const {
    return std::span<const double>(params_).subspan(shape_.inner_count() * shape_.node_param_count());
}

std::span<double> SoftTree::leaves() {
    return std::span<double>(params_).subspan(shape_.inner_count() * shape_.node_param_count());
}

void SoftTree::check_input(std::span<const double> x) const {
    if (x.size() != shape_.input_dim) {
        throw InputError("soft tree: input has " + std::to_string(x.size()) +
                         " features, tree expects " + std::to_string(shape_.input_dim));
    }
}

ForwardTrace SoftTree::path_probabilities(std::span<const double> x) const {
    check_input(x);
    const std::size_t inner = shape_.inner_count();
    ForwardTrace t;
    t.routing.resize(inner);
    std::vector<double> arrival(shape_.node_count(), 0.0);
    arrival[0] = 1.0;
    for (std::size_t i = 0; i < inner; ++i) {
        const double d = node(i).routing_prob(x);
        t.routing[i] = d;
        arrival[2 * i + 1] = arrival[i] * (1.0 - d);
        arrival[2 * i + 2] = arrival[i] * d;
    }
    t.node_probs.assign(arrival.begin(), arrival.begin() + static_cast<std::ptrdiff_t>(inner));
    t.leaf_probs.assign(arrival.begin() + static_cast<std::ptrdiff_t>(inner), arrival.end());
    const auto phi = leaves();
    double score = 0.0;
    for (std::size_t l = 0; l < phi.size(); ++l) {
        score += phi[l] * t.leaf_probs[l];
    }
    t.score = score;
    return t;
}

double SoftTree::predict_score(std::span<const double> x) const {
    return path_probabilities(x).score;
}

std::vector<double> SoftTree::predict_batch(const Matrix& batch) const {
    std::vector<double> out(batch.rows);
    for (std::size_t r = 0; r < batch.rows; ++r) {
        out[r] = predict_score(batch.row(r));
    }
    return out;
}

HardRoute SoftTree::hard_route(std::span<const double> x) const {
    check_input(x);
    HardRoute route;
    std::size_t i = 0;
    const std::size_t inner = shape_.inner_count();
    while (i < inner) {
        const bool right = node(i).routing_prob(x) >= 0.5;
        route.path.emplace_back(i, right ? Branch::Right : Branch::Left);
        i = right ? 2 * i + 2 : 2 * i + 1;
    }
    route.leaf = i - inner;
    return route;
}

double SoftTree::balance_alpha(const Matrix& batch, std::size_t node_index) const {
    if (batch.rows == 0) {
        throw InputError("balance_alpha: empty batch");
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t r = 0; r < batch.rows; ++r) {
        const auto t = path_probabilities(batch.row(r));
        num += t.node_probs[node_index] * t.routing[node_index];
        den += t.node_probs[node_index];
    }
    return den < kUnreachable ? 0.5 : num / den;
}

double SoftTree::reg_balance(const Matrix& batch, double lambda1, BalanceDecay decay) const {
    if (batch.rows == 0) {
        throw InputError("reg_balance: empty batch");
    }
    const std::size_t inner = shape_.inner_count();
    std::vector<double> num(inner, 0.0);
    std::vector<double> den(inner, 0.0);
    for (std::size_t r = 0; r < batch.rows; ++r) {
        const auto t = path_probabilities(batch.row(r));
        for (std::size_t i = 0; i < inner; ++i) {
            num[i] += t.node_probs[i] * t.routing[i];
            den[i] += t.node_probs[i];
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
        double alpha = den[i] < kUnreachable ? 0.5 : num[i] / den[i];
        alpha = std::clamp(alpha, kAlphaClamp, 1.0 - kAlphaClamp);
        total += balance_decay(shape_, i, decay) * (0.5 * std::log(alpha) + 0.5 * std::log(1.0 - alpha));
    }
    return -lambda1 * total;
}

double SoftTree::reg_l2(double lambda2) const {
    double total = 0.0;
    for (std::size_t i = 0; i < shape_.inner_count(); ++i) {
        const auto p = node_params(i);
        total += std::sqrt(std::inner_product(p.begin(), p.end(), p.begin(), 0.0));
    }
    return lambda2 * total;
}

void SoftTree::backward(const Matrix& batch, std::span<const double> upstream, const Regularization& reg,
                        std::span<double> grad) const {
    if (upstream.size() != batch.rows) {
        throw InputError("soft tree backward: upstream length does not match batch size");
    }
    if (grad.size() != params_.size()) {
        throw InputError("soft tree backward: gradient buffer has the wrong size");
    }
    if (batch.rows > 0) {
        check_input(batch.row(0));
    }
    const std::size_t n = batch.rows;
    const std::size_t inner = shape_.inner_count();
    const std::size_t nodes = shape_.node_count();
    const std::size_t npc = shape_.node_param_count();
    const auto phi = leaves();

    std::vector<double> routing(n * inner);
    std::vector<double> arrival(n * nodes);
    for (std::size_t z = 0; z < n; ++z) {
        const auto x = batch.row(z);
        double* d = routing.data() + z * inner;
        double* pi = arrival.data() + z * nodes;
        pi[0] = 1.0;
        for (std::size_t i = 0; i < inner; ++i) {
            d[i] = node(i).routing_prob(x);
            pi[2 * i + 1] = pi[i] * (1.0 - d[i]);
            pi[2 * i + 2] = pi[i] * d[i];
        }
    }

    // d(C)/d(alpha_i) and the batch sums behind each alpha_i.
    std::vector<double> alpha(inner, 0.5);
    std::vector<double> den(inner, 0.0);
    std::vector<double> dc_dalpha(inner, 0.0);
    if (reg.lambda1 != 0.0 && n > 0) {
        std::vector<double> num(inner, 0.0);
        for (std::size_t z = 0; z < n; ++z) {
            for (std::size_t i = 0; i < inner; ++i) {
                num[i] += arrival[z * nodes + i] * routing[z * inner + i];
                den[i] += arrival[z * nodes + i];
            }
        }
        for (std::size_t i = 0; i < inner; ++i) {
            if (den[i] < kUnreachable) {
                continue;
            }
            const double a = num[i] / den[i];
            alpha[i] = a;
            if (a < kAlphaClamp || a > 1.0 - kAlphaClamp) {
                continue;  // clamped: locally constant
            }
            dc_dalpha[i] = -reg.lambda1 * balance_decay(shape_, i, reg.decay) * (0.5 / a - 0.5 / (1.0 - a));
        }
    }

    auto leaf_grad = grad.subspan(inner * npc);
    std::vector<double> g_arrival(nodes);
    std::vector<double> g_routing(inner);
    for (std::size_t z = 0; z < n; ++z) {
        const double* d = routing.data() + z * inner;
        const double* pi = arrival.data() + z * nodes;
        const double u = upstream[z];
        for (std::size_t l = 0; l < phi.size(); ++l) {
            leaf_grad[l] += u * pi[inner + l];
            g_arrival[inner + l] = u * phi[l];
        }
        for (std::size_t i = 0; i < inner; ++i) {
            if (dc_dalpha[i] != 0.0) {
                g_routing[i] = dc_dalpha[i] * pi[i] / den[i];
                g_arrival[i] = dc_dalpha[i] * (d[i] - alpha[i]) / den[i];
            } else {
                g_routing[i] = 0.0;
                g_arrival[i] = 0.0;
            }
        }
        for (std::size_t i = inner; i-- > 0;) {
            const double gl = g_arrival[2 * i + 1];
            const double gr = g_arrival[2 * i + 2];
            g_arrival[i] += gl * (1.0 - d[i]) + gr * d[i];
            g_routing[i] += pi[i] * (gr - gl);
        }
        const auto x = batch.row(z);
        for (std::size_t i = 0; i < inner; ++i) {
            if (g_routing[i] != 0.0) {
                node(i).backward(x, g_routing[i], grad.subspan(i * npc, npc));
            }
        }
    }

    if (reg.lambda2 != 0.0) {
        for (std::size_t i = 0; i < inner; ++i) {
            const auto p = node_params(i);
            const double norm = std::sqrt(std::inner_product(p.begin(), p.end(), p.begin(), 0.0));
            if (norm == 0.0) {
                continue;  // subgradient 0 at the origin
            }
            auto g = grad.subspan(i * npc, npc);
            for (std::size_t k = 0; k < npc; ++k) {
                g[k] += reg.lambda2 * p[k] / norm;
            }
        }
    }
}

}  // namespace dbdt
