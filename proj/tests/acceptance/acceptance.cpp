// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
//   dbdt_acceptance            run every criterion
//   dbdt_acceptance --only N   run criterion N alone
//
// Exit status: 0 when nothing failed and something passed, 1 on any failure,
// 77 when every selected criterion was skipped.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dbdt/auc_head.hpp"
#include "dbdt/data.hpp"
#include "dbdt/importance.hpp"
#include "dbdt/metrics.hpp"
#include "dbdt/model_io.hpp"
#include "dbdt/synthetic.hpp"
#include "dbdt/trainer.hpp"
#include "oracles.hpp"
#include "reduced_pdsca.hpp"

using namespace dbdt;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string fixed(double v, int digits = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

DbdtModel random_model(std::size_t trees, const TreeShape& shape, Rng& rng, double scale) {
    DbdtModel m;
    m.shape = shape;
    for (std::size_t t = 0; t < trees; ++t) {
        m.trees.push_back(oracle::random_tree(shape, rng, scale));
    }
    return m;
}

std::vector<double> scores_of(const DbdtModel& m, const Dataset& ds) { return m.score_batch(ds.features); }

double test_auc(const DbdtModel& m, const Dataset& test) { return auc(scores_of(m, test), test.labels); }

struct Split {
    Dataset train;
    Dataset test;
};

Split normalized_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    auto [train, test] = split(ds, test_fraction, seed);
    const auto stats = fit_normalize(train);
    return {apply_normalize(train, stats), apply_normalize(test, stats)};
}

// Step-size stages used by the command line when none are given.
std::vector<std::size_t> default_stages(std::size_t epochs) { return {epochs / 2 + 1, epochs * 3 / 4 + 1}; }

Outcome gradient_correctness() {
    const double start = cpu_seconds();
    Rng rng(1001);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const std::size_t trees = k % 2 == 0 ? 1 : 3;
        const int depth = (k / 2) % 2 == 0 ? 2 : 3;
        const int layers = (k / 4) % 2 == 0 ? 1 : 2;
        const std::size_t dim = (k / 8) % 2 == 0 ? 3 : 8;
        const TreeShape shape{dim, depth, layers, 0};
        const DbdtModel m = random_model(trees, shape, rng, 0.7);
        const Batch b{oracle::random_matrix(20, dim, rng), oracle::random_labels(20, rng)};
        const Regularization reg{0.1, 0.005};
        const auto grad = ensemble_backward(m, b, reg);
        const auto fd = oracle::fd_gradient(
            [&](std::span<const double> p) { return oracle::frozen_objective(m, p, b, reg); }, m.flat_params(), 1e-5);
        worst = std::max(worst, oracle::max_relative_error(grad, fd));
    }
    const double elapsed = cpu_seconds() - start;
    return verdict(worst <= 1e-4 && elapsed < 30.0,
                   "max relative error " + sci(worst) + " (limit 1e-4), " + fixed(elapsed, 1) + " s CPU (limit 30)");
}

Outcome probability_normalization() {
    Rng rng(1002);
    double worst_sum = 0.0;
    double worst_enum = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const int depth = 2 + static_cast<int>(rng.below(3));
        const int layers = 1 + static_cast<int>(rng.below(2));
        const std::size_t dim = 1 + rng.below(6);
        const TreeShape shape{dim, depth, layers, 0};
        const SoftTree tree = oracle::random_tree(shape, rng, 2.0);
        std::vector<double> x(dim);
        for (double& v : x) {
            v = 2.0 * rng.normal();
        }
        const auto trace = tree.path_probabilities(x);
        const auto brute = oracle::enumerate_leaf_probs(tree, x);
        const double total = std::accumulate(trace.leaf_probs.begin(), trace.leaf_probs.end(), 0.0);
        worst_sum = std::max(worst_sum, std::abs(total - 1.0));
        for (std::size_t l = 0; l < brute.size(); ++l) {
            worst_enum = std::max(worst_enum, std::abs(trace.leaf_probs[l] - brute[l]));
        }
    }
    return verdict(worst_sum <= 1e-9 && worst_enum <= 1e-12,
                   "max |sum-1| " + sci(worst_sum) + " (limit 1e-9), max enumeration gap " + sci(worst_enum) +
                       " (limit 1e-12)");
}

Outcome auc_oracle_equivalence() {
    Rng rng(1003);
    int exact = 0;
    double worst_area = 0.0;
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 2 + rng.below(199);
        const auto labels = oracle::random_labels(n, rng);
        std::vector<double> scores(n);
        for (double& v : scores) {
            // Every other set on a coarse grid so ties occur.
            v = k % 2 == 0 ? std::floor(rng.uniform(0.0, 8.0)) : rng.normal();
        }
        exact += auc(scores, labels) == oracle::pairwise_auc(scores, labels) ? 1 : 0;
        worst_area = std::max(worst_area, std::abs(auc(scores, labels) - roc_area(roc_curve(scores, labels))));
    }
    return verdict(exact == 100 && worst_area <= 1e-12, std::to_string(exact) +
                                                            "/100 exact pairwise matches, max trapezoid gap " +
                                                            sci(worst_area) + " (limit 1e-12)");
}

Outcome psi_decomposition() {
    Rng rng(1004);
    double worst_identity = 0.0;
    for (int k = 0; k < 10000; ++k) {
        AucHead h;
        h.p = rng.uniform(0.01, 0.99);
        h.a = rng.uniform(-2.0, 2.0);
        h.b = rng.uniform(-2.0, 2.0);
        h.alpha = rng.uniform(-3.0, 3.0);
        h.margin = rng.uniform(0.5, 1.5);
        const double s = rng.uniform(-1.0, 2.0);
        const int y = rng.uniform() < 0.5 ? 1 : -1;
        const double gap = psi(h, s, y).value - (g1(h, s, y) + h.alpha * g2(h, s, y) - g3(h.alpha, h.p));
        worst_identity = std::max(worst_identity, std::abs(gap));
    }
    double worst_coeff = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        AucHead h;
        h.p = rng.uniform(0.02, 0.6);
        h.a = rng.uniform();
        h.b = rng.uniform();
        std::vector<double> s(128);
        std::vector<int> y(128);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = rng.uniform();
            y[i] = rng.uniform() < h.p ? 1 : -1;
        }
        auto f = [&](double alpha) {
            h.alpha = alpha;
            return mean_psi(h, s, y);
        };
        const double leading = (f(1.0) - 2.0 * f(0.0) + f(-1.0)) / 2.0;
        worst_coeff = std::max(worst_coeff, std::abs(leading + h.p * (1.0 - h.p)));
    }
    return verdict(worst_identity <= 1e-12 && worst_coeff <= 1e-10,
                   "max identity gap " + sci(worst_identity) + " (limit 1e-12), max leading-coefficient gap " +
                       sci(worst_coeff) + " (limit 1e-10)");
}

Outcome pdsca_reduction() {
    const Dataset ds = make_two_gaussians({600, 0.1, 3, 2.0, 1.0}, 1005);
    DbdtModel m = init_model(3, TreeShape{3, 3, 1, 0}, 1005);
    DbdtModel ref = m;
    AucHead h;
    h.p = ds.pos_ratio;
    AucHead ref_head = h;
    PdscaConfig cfg;
    cfg.beta = 0.0;
    cfg.beta0 = 1.0;
    cfg.jacobian = JacobianMode::FirstOrder;
    cfg.eta1 = 0.05;
    cfg.eta2 = 0.5;
    oracle::ReducedState rs{std::vector<double>(m.param_count() + 2, 0.0),
                            std::vector<double>(m.param_count() + 2, 0.0)};
    const oracle::ReducedParams rp{cfg.beta1, cfg.beta2, cfg.g0, cfg.eta1, cfg.eta2, cfg.weight_decay, true};
    std::optional<PdscaState> state;
    double worst = 0.0;
    std::size_t steps = 0;
    for (std::uint64_t epoch = 1; steps < 100; ++epoch) {
        for (const auto& [i1, i2] : batch_pairs(ds.size(), 32, 1005, epoch)) {
            if (steps == 100) {
                break;
            }
            const Batch s1 = ds.gather(i1);
            const Batch s2 = ds.gather(i2);
            if (!state) {
                state = init_pdsca_state(m, h, s1, cfg);
            }
            pdsca_step(m, h, *state, s1, s2, cfg);
            oracle::reduced_step(ref, ref_head, rs, s1, s2, rp);
            const auto a = m.flat_params();
            const auto b = ref.flat_params();
            for (std::size_t k = 0; k < a.size(); ++k) {
                worst = std::max(worst, std::abs(a[k] - b[k]));
            }
            worst = std::max({worst, std::abs(h.a - ref_head.a), std::abs(h.b - ref_head.b),
                              std::abs(h.alpha - ref_head.alpha)});
            ++steps;
        }
    }
    return verdict(worst <= 1e-12, "max deviation over " + std::to_string(steps) + " steps " + sci(worst) +
                                       " (limit 1e-12)");
}

Outcome imbalance_advantage() {
    const double start = cpu_seconds();
    constexpr std::size_t kEpochs = 50;
    double sum_sgd = 0.0;
    double sum_pdsca = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset ds = make_two_gaussians({10000, 0.02, 2, 2.0, 1.0}, seed);
        const Split s = normalized_split(ds, 0.2, seed);
        const DbdtModel init = init_model(10, TreeShape{2, 3, 1, 0}, seed);

        SgdConfig sgd;
        sgd.epochs = kEpochs;
        sgd.seed = seed;
        PdscaConfig pdsca;
        pdsca.epochs = kEpochs;
        pdsca.decay_epochs = default_stages(kEpochs);
        pdsca.seed = seed;

        const double a_sgd = test_auc(train_sgd(init, s.train, sgd).model, s.test);
        const double a_pdsca = test_auc(train_pdsca(init, s.train, pdsca).model, s.test);
        sum_sgd += a_sgd;
        sum_pdsca += a_pdsca;
        per_seed += (seed ? " " : "") + fixed(a_pdsca - a_sgd);
    }
    const double diff = (sum_pdsca - sum_sgd) / 5.0;
    const double elapsed = cpu_seconds() - start;
    return verdict(diff >= 0.02 && elapsed < 600.0,
                   "mean AUC pdsca " + fixed(sum_pdsca / 5.0) + " vs sgd " + fixed(sum_sgd / 5.0) + ", difference " +
                       fixed(diff) + " (needs >= 0.02; per seed " + per_seed + "), " + fixed(elapsed, 0) +
                       " s CPU (limit 600)");
}

std::optional<fs::path> bank_marketing_csv() {
    if (const char* env = std::getenv("DBDT_BANK_MARKETING_CSV"); env != nullptr && *env != '\0') {
        return fs::path(env);
    }
    const fs::path bundled = fs::path(DBDT_SOURCE_DIR) / "data" / "bank-full.csv";
    if (fs::exists(bundled)) {
        return bundled;
    }
    return std::nullopt;
}

Outcome bank_marketing() {
    const auto csv = bank_marketing_csv();
    if (!csv || !fs::exists(*csv)) {
        return {Status::Skip, "UCI Bank Marketing CSV not found (set DBDT_BANK_MARKETING_CSV or add data/bank-full.csv)"};
    }
    const double start = cpu_seconds();
    constexpr std::size_t kEpochs = 50;
    const Schema schema = load_schema(fs::path(DBDT_SOURCE_DIR) / "data" / "bank_marketing.schema.json");
    const Dataset ds = load_csv(*csv, schema, {"yes", 0});
    const Split s = normalized_split(ds, 0.2, 0);
    const DbdtModel init = init_model(40, TreeShape{s.train.dim(), 4, 1, 0}, 0);
    SgdConfig sgd;
    sgd.epochs = kEpochs;
    PdscaConfig pdsca;
    pdsca.epochs = kEpochs;
    pdsca.decay_epochs = default_stages(kEpochs);
    const double a_sgd = test_auc(train_sgd(init, s.train, sgd).model, s.test);
    const double a_pdsca = test_auc(train_pdsca(init, s.train, pdsca).model, s.test);
    const double elapsed = cpu_seconds() - start;
    return verdict(a_pdsca >= 0.85 && a_pdsca > a_sgd && elapsed < 1800.0,
                   "test AUC pdsca " + fixed(a_pdsca) + " (needs >= 0.85), sgd " + fixed(a_sgd) + ", " +
                       fixed(elapsed, 0) + " s CPU (limit 1800)");
}

Outcome residual_law() {
    Rng rng(1008);
    double worst = 0.0;
    const double h = 1e-5;
    for (int k = 0; k < 1000; ++k) {
        const int y = rng.uniform() < 0.5 ? 1 : -1;
        const double score = rng.uniform(-3.0, 3.0);
        const double fd = -(std::exp(-y * (score + h)) - std::exp(-y * (score - h))) / (2.0 * h);
        worst = std::max(worst, std::abs(residual(y, score) - fd));
    }
    return verdict(worst <= 1e-8, "max |r - fd| " + sci(worst) + " (limit 1e-8)");
}

Outcome serialization_determinism() {
    const auto table = make_mixed_table(300, 0.2, 1009);
    const Schema schema = parse_schema(table.schema_json);
    const Dataset ds = parse_csv(table.csv, schema);
    const Split s = normalized_split(ds, 0.2, 1009);
    PdscaConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 32;
    cfg.seed = 1009;
    auto train_file = [&] {
        auto r = train_pdsca(init_model(4, TreeShape{ds.dim(), 3, 2, 0}, 1009), s.train, cfg);
        ModelFile f;
        f.schema = schema;
        f.positive_label = ds.positive_label;
        f.normalization = fit_normalize(s.train);
        f.model = std::move(r.model);
        f.head = r.head;
        return f;
    };
    const ModelFile first = train_file();
    const ModelFile second = train_file();
    const bool same_bytes = serialize_model(first) == serialize_model(second);

    const ModelFile loaded = parse_model(serialize_model(first));
    Rng rng(1009);
    const Matrix x = oracle::random_matrix(1000, ds.dim(), rng);
    const auto before = first.model.score_batch(x);
    const auto after = loaded.model.score_batch(x);
    std::size_t identical = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        identical += std::memcmp(&before[i], &after[i], sizeof(double)) == 0 ? 1 : 0;
    }
    return verdict(identical == 1000 && same_bytes, std::to_string(identical) +
                                                        "/1000 bitwise-identical predictions after round trip, "
                                                        "seeded reruns " +
                                                        (same_bytes ? "byte-identical" : "differ"));
}

Outcome importance_sanity() {
    const Dataset ds = make_two_gaussians({2000, 0.2, 4, 2.0, 1.0}, 1010);
    const Split s = normalized_split(ds, 0.2, 1010);
    SgdConfig cfg;
    cfg.epochs = 5;
    DbdtModel m = train_sgd(init_model(5, TreeShape{4, 3, 2, 0}, 1010), s.train, cfg).model;
    // Remove every first-layer weight reading feature 2.
    const std::size_t in = m.shape.input_dim;
    for (auto& tree : m.trees) {
        for (std::size_t node = 0; node < m.shape.inner_count(); ++node) {
            auto params = tree.node_params(node);
            for (std::size_t o = 0; o < m.shape.layer_out(0); ++o) {
                params[o * in + 2] = 0.0;
            }
        }
    }
    const auto report = permutation_importance(m, s.test, 10, 1010);
    double total = 0.0;
    for (const auto& f : report.features) {
        total += f.share;
    }
    const double ignored = report.features[2].share;
    return verdict(ignored == 0.0 && std::abs(total - 100.0) <= 0.1,
                   "ignored feature share " + fixed(ignored, 3) + "%, shares sum to " + fixed(total, 6) + "%");
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "gradient correctness", gradient_correctness},
        {2, "probability normalization", probability_normalization},
        {3, "AUC oracle equivalence", auc_oracle_equivalence},
        {4, "psi decomposition and dual concavity", psi_decomposition},
        {5, "PDSCA reduction identity", pdsca_reduction},
        {6, "imbalance advantage", imbalance_advantage},
        {7, "Bank Marketing scaled reproduction", bank_marketing},
        {8, "residual law", residual_law},
        {9, "serialization and determinism", serialization_determinism},
        {10, "permutation-importance sanity", importance_sanity},
    };

    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--only" && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
            return 2;
        }
    }

    int passed = 0;
    int failed = 0;
    int skipped = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome{Status::Fail, ""};
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {Status::Fail, std::string("exception: ") + e.what()};
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = outcome.status == Status::Pass ? "PASS" : outcome.status == Status::Fail ? "FAIL" : "SKIP";
        std::printf("%s [%d] %s: %s (%.1f s)\n", tag, c.id, c.name, outcome.detail.c_str(), wall);
        std::fflush(stdout);
        (outcome.status == Status::Pass ? passed : outcome.status == Status::Fail ? failed : skipped) += 1;
    }
    if (passed + failed + skipped == 0) {
        std::fprintf(stderr, "no criterion %d\n", only);
        return 2;
    }
    if (failed > 0) {
        return 1;
    }
    return passed == 0 ? 77 : 0;
}
