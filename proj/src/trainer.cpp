#include "dbdt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dbdt/metrics.hpp"
#include "dbdt/parallel.hpp"

namespace dbdt {

namespace {

void check_training_inputs(const DbdtModel& model, const Dataset& train, std::size_t batch_size) {
    if (train.size() == 0) {
        throw InputError("training set is empty");
    }
    if (train.dim() != model.shape.input_dim) {
        throw InputError("training set has " + std::to_string(train.dim()) + " features, model expects " +
                         std::to_string(model.shape.input_dim));
    }
    if (batch_size < 2) {
        throw InputError("batch size must be at least 2");
    }
}

std::optional<double> validation_auc(const DbdtModel& model, const Dataset* validation) {
    if (validation == nullptr || validation->size() == 0) {
        return std::nullopt;
    }
    const auto pos = validation->positives();
    if (pos == 0 || pos == validation->size()) {
        return std::nullopt;
    }
    return auc(model.score_batch(validation->features), validation->labels);
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Gradient of mean over the batch of g1 + alpha*g2 with respect to
// (Theta; a; b), evaluated at the given model and head.
std::vector<double> auc_gradient(const DbdtModel& model, const AucHead& head, const Batch& batch,
                                 double* mean_psi_out) {
    const std::size_t n = batch.size();
    const auto raw = model.score_batch(batch.features);
    std::vector<double> upstream(n);
    double grad_a = 0.0;
    double grad_b = 0.0;
    double psi_sum = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t z = 0; z < n; ++z) {
        const double s = squash_score(model, raw[z]);
        const PsiValue v = psi(head, s, batch.labels[z]);
        const double ds_dh = model.score_squash ? s * (1.0 - s) : 1.0;
        upstream[z] = v.d_score * ds_dh * inv_n;
        grad_a += v.d_a;
        grad_b += v.d_b;
        psi_sum += v.value;
    }
    if (mean_psi_out != nullptr) {
        *mean_psi_out = psi_sum * inv_n;
    }
    std::vector<double> grad(model.param_count() + 2, 0.0);
    const std::size_t per_tree = model.shape.param_count();
    const Regularization none{};
    parallel_for(model.trees.size(), [&](std::size_t t) {
        model.trees[t].backward(batch.features, upstream, none, std::span<double>(grad).subspan(t * per_tree, per_tree));
    });
    grad[grad.size() - 2] = grad_a * inv_n;
    grad[grad.size() - 1] = grad_b * inv_n;
    return grad;
}

}  // namespace

SgdResult train_sgd(DbdtModel model, const Dataset& train, const SgdConfig& config, const Dataset* validation,
                    const TraceSink& sink) {
    check_training_inputs(model, train, config.batch_size);
    if (!(config.learning_rate >= 0.0)) {
        throw InputError("learning rate must be nonnegative");
    }
    SgdResult result;
    const ObjectiveOptions options{1.0, config.stop_gradient};
    std::vector<double> grad;
    std::vector<double> params = model.flat_params();
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto batches = batch_iter(train.size(), config.batch_size, config.seed, epoch);
        double loss_sum = 0.0;
        for (std::size_t k = 0; k < batches.size(); ++k) {
            const Batch batch = train.gather(batches[k]);
            const Objective obj = objective_and_gradient(model, batch, config.reg, options, grad);
            if (!std::isfinite(obj.total) || !all_finite(grad)) {
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(k + 1));
            }
            loss_sum += obj.total;
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i] -= config.learning_rate * grad[i];
            }
            model.set_flat_params(params);
            ++step;
        }
        TraceRecord rec{epoch, step, loss_sum / static_cast<double>(batches.size()), validation_auc(model, validation)};
        if (sink) {
            sink(rec);
        }
        result.trace.push_back(rec);
    }
    result.model = std::move(model);
    return result;
}

std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> batch_pairs(
    std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
    auto chunks = batch_iter(n, batch_size, seed, epoch);
    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> pairs;
    if (chunks.size() == 1) {
        // Too few samples for two batches: halve the single chunk.
        auto& only = chunks[0];
        const auto mid = static_cast<std::ptrdiff_t>(only.size() / 2);
        if (mid > 0) {
            pairs.emplace_back(std::vector<std::size_t>(only.begin(), only.begin() + mid),
                               std::vector<std::size_t>(only.begin() + mid, only.end()));
        }
        return pairs;
    }
    for (std::size_t k = 0; k + 1 < chunks.size(); k += 2) {
        pairs.emplace_back(std::move(chunks[k]), std::move(chunks[k + 1]));
    }
    return pairs;
}

double project_dual(double alpha, const PdscaConfig& config) {
    switch (config.projection) {
        case DualProjection::None:
            return alpha;
        case DualProjection::Nonnegative:
            return std::max(alpha, 0.0);
        case DualProjection::Interval:
            return std::clamp(alpha, 0.0, config.alpha_max);
    }
    return alpha;
}

PdscaState init_pdsca_state(const DbdtModel& model, const AucHead& head, const Batch& first,
                            const PdscaConfig& config) {
    PdscaState state;
    const ExtendedParams current = extended_params(model, head);
    state.u = config.beta == 0.0 ? current : q_map(current, model, first, config.reg, config.beta);
    state.z.assign(current.size(), 0.0);
    state.z2.assign(current.size(), 0.0);
    return state;
}

PdscaStepInfo pdsca_step(DbdtModel& model, AucHead& head, PdscaState& state, const Batch& s1, const Batch& s2,
                         const PdscaConfig& config) {
    if (s1.size() == 0 || s2.size() == 0) {
        throw InputError("pdsca_step: both sample sets must be nonempty");
    }
    const ExtendedParams current = extended_params(model, head);
    if (state.u.size() != current.size()) {
        throw InputError("pdsca_step: state does not match the model");
    }

    // Moving average of the compositional inner map.
    const ThetaGradient inner = averaged_loss_gradient(model, s1, config.reg);
    const ExtendedParams q = q_map(current, inner, config.beta);
    {
        auto u = state.u.values();
        const auto qv = q.values();
        for (std::size_t k = 0; k < u.size(); ++k) {
            u[k] = (1.0 - config.beta0) * u[k] + config.beta0 * qv[k];
        }
    }

    // Outer gradient at u, pulled back through the Jacobian of q.
    DbdtModel at_u = model;
    at_u.set_flat_params(state.u.theta());
    AucHead head_u = head;
    head_u.a = state.u.a();
    head_u.b = state.u.b();
    PdscaStepInfo info;
    const auto outer = auc_gradient(at_u, head_u, s2, &info.psi);
    std::vector<double> o = q_jacobian_apply(current, inner, config.beta, outer, config.jacobian);
    const auto theta = current.theta();
    for (std::size_t k = 0; k < theta.size(); ++k) {
        o[k] += config.weight_decay * theta[k];
    }
    if (!all_finite(o)) {
        throw NumericError("non-finite gradient at PDSCA step " + std::to_string(state.step + 1));
    }

    // Momentum, second moment, adaptive primal step.
    std::vector<double> next(current.values().begin(), current.values().end());
    for (std::size_t k = 0; k < o.size(); ++k) {
        state.z[k] = (1.0 - config.beta1) * state.z[k] + config.beta1 * o[k];
        state.z2[k] = (1.0 - config.beta2) * state.z2[k] + config.beta2 * o[k] * o[k];
        next[k] -= config.eta1 * state.z[k] / (std::sqrt(state.z2[k]) + config.g0);
    }

    // Projected dual ascent with g2 at u over S1 and S2.
    const auto raw1 = at_u.score_batch(s1.features);
    const auto raw2 = at_u.score_batch(s2.features);
    double g2_sum = 0.0;
    for (std::size_t z = 0; z < s1.size(); ++z) {
        g2_sum += g2(head_u, squash_score(at_u, raw1[z]), s1.labels[z]);
    }
    for (std::size_t z = 0; z < s2.size(); ++z) {
        g2_sum += g2(head_u, squash_score(at_u, raw2[z]), s2.labels[z]);
    }
    const double g2_mean = g2_sum / static_cast<double>(s1.size() + s2.size());
    const double dual_grad = g2_mean - 2.0 * head.p * (1.0 - head.p) * head.alpha;
    const double alpha = project_dual(head.alpha + config.eta2 * dual_grad, config);
    if (!std::isfinite(alpha)) {
        throw NumericError("non-finite dual variable at PDSCA step " + std::to_string(state.step + 1));
    }

    model.set_flat_params(std::span<const double>(next).first(model.param_count()));
    head.a = next[next.size() - 2];
    head.b = next[next.size() - 1];
    head.alpha = alpha;
    ++state.step;
    return info;
}

PdscaResult train_pdsca(DbdtModel model, const Dataset& train, const PdscaConfig& config, const Dataset* validation,
                        const TraceSink& sink) {
    check_training_inputs(model, train, config.batch_size);
    if (!(config.beta0 > 0.0 && config.beta0 <= 1.0 && config.beta1 > 0.0 && config.beta1 <= 1.0 &&
          config.beta2 > 0.0 && config.beta2 <= 1.0)) {
        throw InputError("PDSCA rates beta0, beta1, beta2 must lie in (0, 1]");
    }
    if (!(config.eta1 >= 0.0 && config.eta2 >= 0.0 && config.g0 > 0.0 && config.beta >= 0.0)) {
        throw InputError("PDSCA step sizes must be nonnegative and G0 positive");
    }
    const double p = train.pos_ratio;
    if (!(p > 0.0 && p < 1.0)) {
        throw InputError("PDSCA needs both classes in the training set");
    }

    PdscaResult result;
    result.head.p = p;
    result.head.margin = config.margin;
    PdscaConfig running = config;
    std::optional<PdscaState> state;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (std::find(config.decay_epochs.begin(), config.decay_epochs.end(), epoch) != config.decay_epochs.end()) {
            running.eta1 *= config.decay_factor;
            running.eta2 *= config.decay_factor;
        }
        const auto pairs = batch_pairs(train.size(), config.batch_size, config.seed, epoch);
        double psi_sum = 0.0;
        for (const auto& [i1, i2] : pairs) {
            const Batch s1 = train.gather(i1);
            const Batch s2 = train.gather(i2);
            if (!state) {
                state = init_pdsca_state(model, result.head, s1, running);
            }
            psi_sum += pdsca_step(model, result.head, *state, s1, s2, running).psi;
        }
        TraceRecord rec{epoch, state ? state->step : 0,
                        pairs.empty() ? 0.0 : psi_sum / static_cast<double>(pairs.size()),
                        validation_auc(model, validation)};
        if (sink) {
            sink(rec);
        }
        result.trace.push_back(rec);
    }
    result.model = std::move(model);
    return result;
}

}  // namespace dbdt
