#pragma once

// Direct primal-dual update on mean psi at the current parameters: what one
// compositional step must reduce to when the inner step is zero, the moving
// average takes the fresh value, and the Jacobian is the identity.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dbdt/auc_head.hpp"
#include "dbdt/ensemble.hpp"

namespace dbdt::oracle {

struct ReducedState {
    std::vector<double> z;
    std::vector<double> z2;
};

struct ReducedParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double g0 = 1e-8;
    double eta1 = 0.1;
    double eta2 = 0.1;
    double weight_decay = 1e-4;
    bool nonnegative = true;
};

inline void reduced_step(DbdtModel& model, AucHead& head, ReducedState& st, const Batch& s1, const Batch& s2,
                         const ReducedParams& cfg) {
    const double p = head.p;
    const double scale = head.margin + head.alpha;
    const std::size_t n = s2.size();
    const std::size_t dim = model.param_count();

    // Gradient of mean (g1 + alpha g2) over s2 with respect to (Theta; a; b).
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> upstream(n);
    double ga = 0.0;
    double gb = 0.0;
    for (std::size_t z = 0; z < n; ++z) {
        const double s = logistic(model.score(s2.features.row(z)));
        double ds = 0.0;
        if (s2.labels[z] == 1) {
            ds = 2.0 * (1.0 - p) * (s - head.a) - 2.0 * scale * (1.0 - p);
            ga += -2.0 * (1.0 - p) * (s - head.a);
        } else {
            ds = 2.0 * p * (s - head.b) + 2.0 * scale * p;
            gb += -2.0 * p * (s - head.b);
        }
        upstream[z] = ds * (s * (1.0 - s)) * inv_n;
    }
    std::vector<double> o(dim + 2, 0.0);
    const std::size_t per_tree = model.shape.param_count();
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        model.trees[t].backward(s2.features, upstream, Regularization{},
                                std::span<double>(o).subspan(t * per_tree, per_tree));
    }
    o[dim] = ga * inv_n;
    o[dim + 1] = gb * inv_n;
    std::vector<double> params = model.flat_params();
    for (std::size_t k = 0; k < dim; ++k) {
        o[k] += cfg.weight_decay * params[k];
    }

    // Dual gradient at the pre-step parameters over s1 then s2.
    double g2_sum = 0.0;
    for (const Batch* b : {&s1, &s2}) {
        for (std::size_t z = 0; z < b->size(); ++z) {
            const double s = logistic(model.score(b->features.row(z)));
            g2_sum += b->labels[z] == 1 ? -2.0 * (1.0 - p) * s : 2.0 * p * s;
        }
    }
    const double g2_mean = g2_sum / static_cast<double>(s1.size() + s2.size());

    params.push_back(head.a);
    params.push_back(head.b);
    for (std::size_t k = 0; k < o.size(); ++k) {
        st.z[k] = (1.0 - cfg.beta1) * st.z[k] + cfg.beta1 * o[k];
        st.z2[k] = (1.0 - cfg.beta2) * st.z2[k] + cfg.beta2 * o[k] * o[k];
        params[k] -= cfg.eta1 * st.z[k] / (std::sqrt(st.z2[k]) + cfg.g0);
    }
    double alpha = head.alpha + cfg.eta2 * (g2_mean - 2.0 * p * (1.0 - p) * head.alpha);
    if (cfg.nonnegative) {
        alpha = std::max(alpha, 0.0);
    }
    head.a = params[dim];
    head.b = params[dim + 1];
    head.alpha = alpha;
    params.resize(dim);
    model.set_flat_params(params);
}

}  // namespace dbdt::oracle
