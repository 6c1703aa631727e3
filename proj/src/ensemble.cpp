#include "dbdt/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dbdt/parallel.hpp"
#include "dbdt/rng.hpp"

namespace dbdt {

std::vector<double> DbdtModel::flat_params() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (const auto& t : trees) {
        flat.insert(flat.end(), t.params().begin(), t.params().end());
    }
    return flat;
}

void DbdtModel::set_flat_params(std::span<const double> flat) {
    if (flat.size() != param_count()) {
        throw InputError("set_flat_params: expected " + std::to_string(param_count()) +
                         " values, got " + std::to_string(flat.size()));
    }
    const std::size_t per_tree = shape.param_count();
    for (std::size_t t = 0; t < trees.size(); ++t) {
        const auto src = flat.subspan(t * per_tree, per_tree);
        std::copy(src.begin(), src.end(), trees[t].params().begin());
    }
}

double DbdtModel::partial_score(std::span<const double> x, std::size_t upto) const {
    if (upto > trees.size()) {
        throw InputError("partial_score: upto exceeds the number of trees");
    }
    double h = 0.0;
    for (std::size_t t = 0; t < upto; ++t) {
        h += trees[t].predict_score(x);
    }
    return h;
}

double DbdtModel::score(std::span<const double> x) const { return partial_score(x, trees.size()); }

std::vector<double> DbdtModel::score_batch(const Matrix& x) const {
    std::vector<double> out(x.rows, 0.0);
    for (const auto& tree : trees) {
        for (std::size_t r = 0; r < x.rows; ++r) {
            out[r] += tree.predict_score(x.row(r));
        }
    }
    return out;
}

DbdtModel init_model(std::size_t trees, const TreeShape& shape, std::uint64_t seed) {
    if (trees < 1) {
        throw InputError("init_model: need at least one tree");
    }
    shape.validate();
    DbdtModel model;
    model.shape = shape;
    model.trees.reserve(trees);
    for (std::size_t t = 0; t < trees; ++t) {
        SoftTree tree(shape);
        Rng rng(derive_seed(seed, t));
        for (std::size_t i = 0; i < shape.inner_count(); ++i) {
            auto p = tree.node_params(i);
            std::size_t offset = 0;
            for (int l = 0; l < shape.layers; ++l) {
                const std::size_t in = shape.layer_in(l);
                const std::size_t out = shape.layer_out(l);
                const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
                for (std::size_t k = 0; k < in * out; ++k) {
                    p[offset + k] = rng.uniform(-limit, limit);
                }
                offset += in * out + out;  // biases stay zero
            }
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

double residual(int label, double partial_score) {
    const double y = static_cast<double>(label);
    const double e = std::clamp(-y * partial_score, -kExponentClamp, kExponentClamp);
    return y * std::exp(e);
}

std::vector<double> residuals(std::span<const int> labels, std::span<const double> partial_scores) {
    if (labels.size() != partial_scores.size()) {
        throw InputError("residuals: label and score lengths differ");
    }
    std::vector<double> r(labels.size());
    for (std::size_t z = 0; z < labels.size(); ++z) {
        r[z] = residual(labels[z], partial_scores[z]);
    }
    return r;
}

double local_loss(std::span<const double> tree_scores, std::span<const double> residual_targets) {
    if (tree_scores.size() != residual_targets.size()) {
        throw InputError("local_loss: length mismatch");
    }
    double total = 0.0;
    for (std::size_t z = 0; z < tree_scores.size(); ++z) {
        const double d = tree_scores[z] - residual_targets[z];
        total += d * d;
    }
    return total;
}

namespace {

struct Schedule {
    std::vector<std::vector<double>> scores;     // per tree, per sample
    std::vector<std::vector<double>> residuals;  // target of tree t from trees < t
};

Schedule run_schedule(const DbdtModel& model, const Batch& batch) {
    const std::size_t T = model.trees.size();
    Schedule s;
    s.scores.resize(T);
    s.residuals.resize(T);
    parallel_for(T, [&](std::size_t t) { s.scores[t] = model.trees[t].predict_batch(batch.features); });
    std::vector<double> running(batch.size(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        s.residuals[t] = residuals(batch.labels, running);
        for (std::size_t z = 0; z < running.size(); ++z) {
            running[z] += s.scores[t][z];
        }
    }
    return s;
}

void check_batch(const DbdtModel& model, const Batch& batch) {
    if (batch.size() == 0) {
        throw InputError("objective: empty batch");
    }
    if (batch.features.rows != batch.size()) {
        throw InputError("objective: feature rows and labels differ in length");
    }
    if (batch.features.cols != model.shape.input_dim) {
        throw InputError("objective: batch has " + std::to_string(batch.features.cols) +
                         " features, model expects " + std::to_string(model.shape.input_dim));
    }
}

}  // namespace

Objective global_objective(const DbdtModel& model, const Batch& batch, const Regularization& reg,
                           const ObjectiveOptions& options) {
    check_batch(model, batch);
    const auto s = run_schedule(model, batch);
    const std::size_t T = model.trees.size();
    Objective obj;
    obj.per_tree.resize(T);
    parallel_for(T, [&](std::size_t t) {
        auto& row = obj.per_tree[t];
        row.fit = options.fit_weight * local_loss(s.scores[t], s.residuals[t]);
        row.balance = model.trees[t].reg_balance(batch.features, reg.lambda1, reg.decay);
        row.l2 = model.trees[t].reg_l2(reg.lambda2);
    });
    for (const auto& row : obj.per_tree) {
        obj.total += row.fit + row.balance + row.l2;
    }
    return obj;
}

Objective objective_and_gradient(const DbdtModel& model, const Batch& batch, const Regularization& reg,
                                 const ObjectiveOptions& options, std::vector<double>& grad) {
    check_batch(model, batch);
    const auto s = run_schedule(model, batch);
    const std::size_t T = model.trees.size();
    const std::size_t n = batch.size();
    const double w = options.fit_weight;

    // upstream[t][z] = d(objective)/d(h_t(x_z))
    std::vector<std::vector<double>> upstream(T, std::vector<double>(n));
    std::vector<double> carry(n, 0.0);
    for (std::size_t t = T; t-- > 0;) {
        for (std::size_t z = 0; z < n; ++z) {
            const double diff = 2.0 * w * (s.scores[t][z] - s.residuals[t][z]);
            upstream[t][z] = diff + carry[z];
            if (!options.stop_gradient && t > 0) {
                // d r / d H = -exp(-y H) inside the clamp, 0 outside.
                double partial = 0.0;
                for (std::size_t k = 0; k < t; ++k) {
                    partial += s.scores[k][z];
                }
                const double y = static_cast<double>(batch.labels[z]);
                const double e = -y * partial;
                const double dr = (e > -kExponentClamp && e < kExponentClamp) ? -std::exp(e) : 0.0;
                carry[z] += -diff * dr;
            }
        }
    }

    grad.assign(model.param_count(), 0.0);
    const std::size_t per_tree = model.shape.param_count();
    Objective obj;
    obj.per_tree.resize(T);
    parallel_for(T, [&](std::size_t t) {
        const auto& tree = model.trees[t];
        tree.backward(batch.features, upstream[t], reg, std::span<double>(grad).subspan(t * per_tree, per_tree));
        auto& row = obj.per_tree[t];
        row.fit = w * local_loss(s.scores[t], s.residuals[t]);
        row.balance = reg.lambda1 != 0.0 ? tree.reg_balance(batch.features, reg.lambda1, reg.decay) : 0.0;
        row.l2 = tree.reg_l2(reg.lambda2);
    });
    for (const auto& row : obj.per_tree) {
        obj.total += row.fit + row.balance + row.l2;
    }
    return obj;
}

std::vector<double> ensemble_backward(const DbdtModel& model, const Batch& batch, const Regularization& reg,
                                      const ObjectiveOptions& options) {
    std::vector<double> grad;
    objective_and_gradient(model, batch, reg, options, grad);
    return grad;
}

int predict_label(double score, double threshold) { return score >= threshold ? 1 : -1; }

int predict_label(const DbdtModel& model, std::span<const double> x, double threshold) {
    return predict_label(model.score(x), threshold);
}

}  // namespace dbdt
