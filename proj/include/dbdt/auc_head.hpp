#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dbdt/core.hpp"
#include "dbdt/ensemble.hpp"

namespace dbdt {

// Auxiliary scalars of the min-max AUC objective: a, b are primal class
// centers for positive/negative scores, alpha is the dual variable, p the
// positive-class prior and margin the target gap between the classes.
struct AucHead {
    double a = 0.0;
    double b = 0.0;
    double alpha = 0.0;
    double p = 0.5;
    double margin = 1.0;
};

// Score the AUC objective sees: logistic(H) when squashing, raw H otherwise.
double score_for_auc(const DbdtModel& model, std::span<const double> x);
double squash_score(const DbdtModel& model, double raw);

// Mean over positive-negative pairs of (margin - s+ + s-)^2.
double auc_surrogate(std::span<const double> pos_scores, std::span<const double> neg_scores, double margin = 1.0);

struct PsiValue {
    double value = 0.0;
    double d_score = 0.0;
    double d_a = 0.0;
    double d_b = 0.0;
    double d_alpha = 0.0;
};

// psi(s, a, b, alpha; y) and its partials.
PsiValue psi(const AucHead& head, double score, int label);

double g1(const AucHead& head, double score, int label);
double g2(const AucHead& head, double score, int label);
double g3(double alpha, double p);

// Batch means.
double mean_psi(const AucHead& head, std::span<const double> scores, std::span<const int> labels);
double mean_g2(const AucHead& head, std::span<const double> scores, std::span<const int> labels);

// Stationary point of mean psi in alpha (unconstrained).
double best_alpha(const AucHead& head, std::span<const double> scores, std::span<const int> labels);

// (Theta; a; b): all model parameters followed by the two primal scalars.
class ExtendedParams {
public:
    ExtendedParams() = default;
    explicit ExtendedParams(std::vector<double> values);
    ExtendedParams(std::span<const double> theta, double a, double b);

    std::size_t size() const { return values_.size(); }
    std::span<const double> theta() const { return std::span<const double>(values_).first(values_.size() - 2); }
    std::span<double> theta() { return std::span<double>(values_).first(values_.size() - 2); }
    double a() const { return values_[values_.size() - 2]; }
    double b() const { return values_[values_.size() - 1]; }
    double& a() { return values_[values_.size() - 2]; }
    double& b() { return values_[values_.size() - 1]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

private:
    std::vector<double> values_;
};

ExtendedParams extended_params(const DbdtModel& model, const AucHead& head);

// Gradient of the averaged exponential objective with respect to Theta.
using ThetaGradient = std::function<std::vector<double>(std::span<const double> theta)>;

// Averaged objective over a batch: mean of the per-tree fit terms plus the
// batch regularizers. Returns a closure over model geometry and the batch.
ThetaGradient averaged_loss_gradient(const DbdtModel& model, const Batch& batch, const Regularization& reg);

// q(Theta_bar) = (Theta - beta * grad L_avg(Theta); a; b).
ExtendedParams q_map(const ExtendedParams& theta_bar, const ThetaGradient& grad, double beta);
ExtendedParams q_map(const ExtendedParams& theta_bar, const DbdtModel& model, const Batch& batch,
                     const Regularization& reg, double beta);

enum class JacobianMode {
    FirstOrder,  // identity
    Exact,       // I - beta * Hessian, Hessian-vector product by central differences
};

// Applies the Jacobian of q to v (length size of theta_bar).
std::vector<double> q_jacobian_apply(const ExtendedParams& theta_bar, const ThetaGradient& grad, double beta,
                                     std::span<const double> v, JacobianMode mode);

}  // namespace dbdt
