#include "dbdt/auc_head.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace dbdt {

double squash_score(const DbdtModel& model, double raw) { return model.score_squash ? logistic(raw) : raw; }

double score_for_auc(const DbdtModel& model, std::span<const double> x) {
    return squash_score(model, model.score(x));
}

double auc_surrogate(std::span<const double> pos_scores, std::span<const double> neg_scores, double margin) {
    if (pos_scores.empty() || neg_scores.empty()) {
        throw InputError("auc_surrogate: both classes must be present");
    }
    double total = 0.0;
    for (double sp : pos_scores) {
        for (double sn : neg_scores) {
            const double gap = margin - sp + sn;
            total += gap * gap;
        }
    }
    return total / (static_cast<double>(pos_scores.size()) * static_cast<double>(neg_scores.size()));
}

double g1(const AucHead& h, double s, int y) {
    if (y == 1) {
        return (1.0 - h.p) * (s - h.a) * (s - h.a) - h.margin * 2.0 * (1.0 - h.p) * s;
    }
    return h.p * (s - h.b) * (s - h.b) + h.margin * 2.0 * h.p * s;
}

double g2(const AucHead& h, double s, int y) { return y == 1 ? -2.0 * (1.0 - h.p) * s : 2.0 * h.p * s; }

double g3(double alpha, double p) { return p * (1.0 - p) * alpha * alpha; }

PsiValue psi(const AucHead& h, double s, int y) {
    const double p = h.p;
    const double scale = h.margin + h.alpha;
    PsiValue v;
    if (y == 1) {
        v.value = (1.0 - p) * (s - h.a) * (s - h.a) - 2.0 * scale * (1.0 - p) * s;
        v.d_score = 2.0 * (1.0 - p) * (s - h.a) - 2.0 * scale * (1.0 - p);
        v.d_a = -2.0 * (1.0 - p) * (s - h.a);
        v.d_alpha = -2.0 * (1.0 - p) * s;
    } else {
        v.value = p * (s - h.b) * (s - h.b) + 2.0 * scale * p * s;
        v.d_score = 2.0 * p * (s - h.b) + 2.0 * scale * p;
        v.d_b = -2.0 * p * (s - h.b);
        v.d_alpha = 2.0 * p * s;
    }
    v.value -= p * (1.0 - p) * h.alpha * h.alpha;
    v.d_alpha -= 2.0 * p * (1.0 - p) * h.alpha;
    return v;
}

double mean_psi(const AucHead& head, std::span<const double> scores, std::span<const int> labels) {
    double total = 0.0;
    for (std::size_t z = 0; z < scores.size(); ++z) {
        total += psi(head, scores[z], labels[z]).value;
    }
    return total / static_cast<double>(scores.size());
}

double mean_g2(const AucHead& head, std::span<const double> scores, std::span<const int> labels) {
    double total = 0.0;
    for (std::size_t z = 0; z < scores.size(); ++z) {
        total += g2(head, scores[z], labels[z]);
    }
    return total / static_cast<double>(scores.size());
}

double best_alpha(const AucHead& head, std::span<const double> scores, std::span<const int> labels) {
    return mean_g2(head, scores, labels) / (2.0 * head.p * (1.0 - head.p));
}

ExtendedParams::ExtendedParams(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) {
        throw InputError("ExtendedParams: need at least the two head scalars");
    }
}

ExtendedParams::ExtendedParams(std::span<const double> theta, double a, double b) {
    values_.reserve(theta.size() + 2);
    values_.assign(theta.begin(), theta.end());
    values_.push_back(a);
    values_.push_back(b);
}

ExtendedParams extended_params(const DbdtModel& model, const AucHead& head) {
    return ExtendedParams(model.flat_params(), head.a, head.b);
}

ThetaGradient averaged_loss_gradient(const DbdtModel& model, const Batch& batch, const Regularization& reg) {
    if (batch.size() == 0) {
        throw InputError("averaged loss: empty batch");
    }
    auto scratch = std::make_shared<DbdtModel>(model);
    auto data = std::make_shared<Batch>(batch);
    const ObjectiveOptions options{1.0 / static_cast<double>(batch.size()), true};
    return [scratch, data, reg, options](std::span<const double> theta) {
        scratch->set_flat_params(theta);
        std::vector<double> grad;
        objective_and_gradient(*scratch, *data, reg, options, grad);
        return grad;
    };
}

ExtendedParams q_map(const ExtendedParams& theta_bar, const ThetaGradient& grad, double beta) {
    if (beta < 0.0) {
        throw InputError("q_map: beta must be nonnegative");
    }
    ExtendedParams out = theta_bar;
    if (beta == 0.0) {
        return out;
    }
    const auto g = grad(theta_bar.theta());
    auto theta = out.theta();
    for (std::size_t k = 0; k < theta.size(); ++k) {
        theta[k] -= beta * g[k];
    }
    return out;
}

ExtendedParams q_map(const ExtendedParams& theta_bar, const DbdtModel& model, const Batch& batch,
                     const Regularization& reg, double beta) {
    return q_map(theta_bar, averaged_loss_gradient(model, batch, reg), beta);
}

std::vector<double> q_jacobian_apply(const ExtendedParams& theta_bar, const ThetaGradient& grad, double beta,
                                     std::span<const double> v, JacobianMode mode) {
    if (v.size() != theta_bar.size()) {
        throw InputError("q_jacobian_apply: vector length does not match parameters");
    }
    std::vector<double> out(v.begin(), v.end());
    if (mode == JacobianMode::FirstOrder || beta == 0.0) {
        return out;
    }
    const auto theta = theta_bar.theta();
    const std::size_t n = theta.size();
    double v_max = 0.0;
    double theta_max = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        v_max = std::max(v_max, std::abs(v[k]));
        theta_max = std::max(theta_max, std::abs(theta[k]));
    }
    if (v_max == 0.0) {
        return out;
    }
    // Probe along v / |v|_inf so the step size is independent of v's scale.
    const double h = 1e-4 * (1.0 + theta_max);
    std::vector<double> plus(theta.begin(), theta.end());
    std::vector<double> minus(theta.begin(), theta.end());
    for (std::size_t k = 0; k < n; ++k) {
        plus[k] += h * v[k] / v_max;
        minus[k] -= h * v[k] / v_max;
    }
    const auto gp = grad(plus);
    const auto gm = grad(minus);
    for (std::size_t k = 0; k < n; ++k) {
        const double hvp = v_max * (gp[k] - gm[k]) / (2.0 * h);
        out[k] -= beta * hvp;
    }
    return out;
}

}  // namespace dbdt
