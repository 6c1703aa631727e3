#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dbdt/auc_head.hpp"
#include "dbdt/data.hpp"
#include "dbdt/ensemble.hpp"

namespace dbdt {

struct TraceRecord {
    std::size_t epoch = 0;  // 1-based
    std::size_t step = 0;   // optimizer steps taken so far
    double loss = 0.0;      // SGD: epoch-mean batch L_Exp; PDSCA: epoch-mean psi
    std::optional<double> val_auc;
};

using TraceSink = std::function<void(const TraceRecord&)>;

struct SgdConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    double learning_rate = 0.01;
    Regularization reg{0.1, 0.005, BalanceDecay::TreeDepth};
    bool stop_gradient = true;
    std::uint64_t seed = 0;
};

struct SgdResult {
    DbdtModel model;
    std::vector<TraceRecord> trace;
};

// Mini-batch gradient descent on the boosting objective.
SgdResult train_sgd(DbdtModel model, const Dataset& train, const SgdConfig& config,
                    const Dataset* validation = nullptr, const TraceSink& sink = {});

enum class DualProjection {
    None,         // alpha unconstrained
    Nonnegative,  // alpha >= 0
    Interval,     // 0 <= alpha <= alpha_max
};

struct PdscaConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    double beta = 0.001;   // inner gradient step of the compositional map
    double beta0 = 0.9;    // moving-average rate of u
    double beta1 = 0.9;    // momentum rate
    double beta2 = 0.999;  // second-moment rate
    double g0 = 1e-8;      // adaptivity floor
    double eta1 = 0.1;     // primal step
    double eta2 = 0.1;     // dual step
    double margin = 1.0;
    double weight_decay = 1e-4;
    Regularization reg{0.1, 0.005, BalanceDecay::TreeDepth};  // inside the averaged loss
    JacobianMode jacobian = JacobianMode::FirstOrder;
    DualProjection projection = DualProjection::Nonnegative;
    double alpha_max = 1e3;
    // Step sizes are multiplied by decay_factor at the start of each listed
    // epoch (1-based).
    std::vector<std::size_t> decay_epochs;
    double decay_factor = 0.1;
    std::uint64_t seed = 0;
};

struct PdscaState {
    ExtendedParams u;
    std::vector<double> z;
    std::vector<double> z2;
    std::size_t step = 0;
};

// u = q(Theta_bar; first), zero moments.
PdscaState init_pdsca_state(const DbdtModel& model, const AucHead& head, const Batch& first,
                            const PdscaConfig& config);

double project_dual(double alpha, const PdscaConfig& config);

struct PdscaStepInfo {
    double psi = 0.0;  // mean psi on S2 at u, before the update
};

// One primal-dual compositional step. eta1 and eta2 come from the config.
PdscaStepInfo pdsca_step(DbdtModel& model, AucHead& head, PdscaState& state, const Batch& s1, const Batch& s2,
                         const PdscaConfig& config);

struct PdscaResult {
    DbdtModel model;
    AucHead head;
    std::vector<TraceRecord> trace;
};

PdscaResult train_pdsca(DbdtModel model, const Dataset& train, const PdscaConfig& config,
                        const Dataset* validation = nullptr, const TraceSink& sink = {});

// Disjoint (S1, S2) index pairs for one epoch.
std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> batch_pairs(
    std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

}  // namespace dbdt
