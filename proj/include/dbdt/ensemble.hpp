#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dbdt/core.hpp"
#include "dbdt/soft_tree.hpp"

namespace dbdt {

// Additive model H(x) = sum_t h_t(x) over trees sharing one shape.
struct DbdtModel {
    TreeShape shape;
    std::vector<SoftTree> trees;
    std::vector<std::string> feature_names;
    bool score_squash = true;  // AUC objective sees logistic(H) instead of H

    std::size_t tree_count() const { return trees.size(); }
    std::size_t param_count() const { return trees.size() * shape.param_count(); }

    // All tree parameters concatenated in tree order.
    std::vector<double> flat_params() const;
    void set_flat_params(std::span<const double> flat);

    double score(std::span<const double> x) const;
    double partial_score(std::span<const double> x, std::size_t upto) const;
    std::vector<double> score_batch(const Matrix& x) const;
};

// Xavier-uniform routing weights, zero biases, zero leaves.
DbdtModel init_model(std::size_t trees, const TreeShape& shape, std::uint64_t seed);

inline constexpr double kExponentClamp = 30.0;

// r_z = y_z * exp(-y_z * H_z), exponent clamped to [-30, 30].
std::vector<double> residuals(std::span<const int> labels, std::span<const double> partial_scores);
double residual(int label, double partial_score);

// Sum of squared differences; residual targets are treated as constants.
double local_loss(std::span<const double> tree_scores, std::span<const double> residual_targets);

struct TreeObjective {
    double fit = 0.0;      // L_t
    double balance = 0.0;  // C_t
    double l2 = 0.0;       // Omega_t
};

struct Objective {
    double total = 0.0;
    std::vector<TreeObjective> per_tree;
};

struct ObjectiveOptions {
    // Multiplies every L_t. 1 gives the boosting objective; 1/|batch| gives
    // the batch-averaged fit used by the compositional inner step.
    double fit_weight = 1.0;
    // Residual targets are constants when differentiating (classical
    // stage-wise boosting). Off: later trees also push on earlier ones.
    bool stop_gradient = true;
};

// Runs the residual schedule tree by tree: residuals from trees 1..t-1, then
// L_t, C_t and Omega_t of tree t. The total is accumulated left to right.
Objective global_objective(const DbdtModel& model, const Batch& batch, const Regularization& reg,
                           const ObjectiveOptions& options = {});

// Gradient of global_objective over all tree parameters (flat layout).
std::vector<double> ensemble_backward(const DbdtModel& model, const Batch& batch, const Regularization& reg,
                                      const ObjectiveOptions& options = {});

// Objective and gradient in one sweep, sharing the tree forward passes.
Objective objective_and_gradient(const DbdtModel& model, const Batch& batch, const Regularization& reg,
                                 const ObjectiveOptions& options, std::vector<double>& grad);

// +1 when score >= threshold, else -1.
int predict_label(double score, double threshold = 0.0);
int predict_label(const DbdtModel& model, std::span<const double> x, double threshold = 0.0);

}  // namespace dbdt
