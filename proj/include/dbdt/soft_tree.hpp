#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dbdt/core.hpp"

namespace dbdt {

// Geometry shared by every tree of a model.
//
// A tree of depth d has 2^(d-1)-1 inner nodes in heap order (children of i
// are 2i+1 and 2i+2) followed by 2^(d-1) leaves. Each inner node owns a small
// network of `layers` dense layers: the hidden ones use tanh with width
// `hidden`, the last one maps to a single logistic unit.
struct TreeShape {
    std::size_t input_dim = 0;
    int depth = 2;
    int layers = 1;
    std::size_t hidden = 0;  // 0 means input_dim; ignored when layers == 1

    std::size_t inner_count() const { return (std::size_t{1} << (depth - 1)) - 1; }
    std::size_t leaf_count() const { return std::size_t{1} << (depth - 1); }
    std::size_t node_count() const { return inner_count() + leaf_count(); }
    std::size_t hidden_width() const { return hidden ? hidden : input_dim; }

    // Input/output width of layer l of a node network.
    std::size_t layer_in(int l) const { return l == 0 ? input_dim : hidden_width(); }
    std::size_t layer_out(int l) const { return l == layers - 1 ? 1 : hidden_width(); }

    std::size_t node_param_count() const;
    std::size_t param_count() const { return inner_count() * node_param_count() + leaf_count(); }

    void validate() const;
    bool operator==(const TreeShape&) const = default;
};

// Read-only view over one inner node's parameters. Per layer the layout is the
// out x in weight matrix (row-major) followed by the out biases.
class NodeNetView {
public:
    NodeNetView(const TreeShape& shape, std::span<const double> params)
        : shape_(&shape), params_(params) {}

    const TreeShape& shape() const { return *shape_; }
    std::span<const double> params() const { return params_; }

    // Right-branch probability d(x), strictly inside (0,1) for finite logits.
    double routing_prob(std::span<const double> x) const;

    // Forward pass that keeps every hidden activation, for backprop.
    // activations[l] is the input to layer l; returns the final logit.
    double forward(std::span<const double> x, std::vector<std::vector<double>>& activations) const;

    // Adds d(loss)/d(params) to grad given d(loss)/d(routing prob).
    void backward(std::span<const double> x, double grad_prob, std::span<double> grad) const;

private:
    const TreeShape* shape_;
    std::span<const double> params_;
};

// Single-layer convenience: one logistic unit with weights w and bias b.
double routing_prob(std::span<const double> weights, double bias, std::span<const double> x);

struct ForwardTrace {
    std::vector<double> routing;     // d_i(x), per inner node
    std::vector<double> node_probs;  // arrival probability of each inner node
    std::vector<double> leaf_probs;  // path probability of each leaf
    double score = 0.0;
};

enum class Branch { Left, Right };

struct HardRoute {
    std::size_t leaf = 0;  // leaf index in [0, leaf_count)
    std::vector<std::pair<std::size_t, Branch>> path;  // (inner node, branch taken)
};

// How the balance penalty is decayed over the tree.
enum class BalanceDecay {
    TreeDepth,  // one constant 2^-d outside the sum
    NodeDepth,  // 2^-k for a node on level k (root on level 1)
};

struct Regularization {
    double lambda1 = 0.0;  // balance penalty weight
    double lambda2 = 0.0;  // node weight-norm penalty weight
    BalanceDecay decay = BalanceDecay::TreeDepth;
};

inline constexpr double kAlphaClamp = 1e-6;
inline constexpr double kUnreachable = 1e-30;

// Softmax of leaf logits, for the multi-class leaf variant.
std::vector<double> leaf_class_distribution(std::span<const double> phi);

// One soft decision tree: routing networks on the inner nodes and a scalar
// score on each leaf. Parameters live in one flat vector: inner nodes in heap
// order, then the leaves.
class SoftTree {
public:
    SoftTree() = default;
    explicit SoftTree(const TreeShape& shape);
    SoftTree(const TreeShape& shape, std::vector<double> params);

    const TreeShape& shape() const { return shape_; }
    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }

    std::span<const double> node_params(std::size_t node) const;
    std::span<double> node_params(std::size_t node);
    NodeNetView node(std::size_t i) const { return NodeNetView(shape_, node_params(i)); }

    std::span<const double> leaves() const;
    std::span<double> leaves();

    ForwardTrace path_probabilities(std::span<const double> x) const;
    double predict_score(std::span<const double> x) const;
    HardRoute hard_route(std::span<const double> x) const;

    // Arrival-weighted mean routing probability of inner node i over a batch.
    double balance_alpha(const Matrix& batch, std::size_t node) const;
    double reg_balance(const Matrix& batch, double lambda1, BalanceDecay decay = BalanceDecay::TreeDepth) const;
    double reg_l2(double lambda2) const;

    // Scores for every row of the batch.
    std::vector<double> predict_batch(const Matrix& batch) const;

    // Adds to grad (length param_count) the gradient of
    //   sum_z upstream[z] * h(x_z) + C + Omega
    // with gradients flowing through the batch balance ratios.
    void backward(const Matrix& batch, std::span<const double> upstream, const Regularization& reg,
                  std::span<double> grad) const;

private:
    void check_input(std::span<const double> x) const;

    TreeShape shape_;
    std::vector<double> params_;
};

}  // namespace dbdt
