#include "dbdt/importance.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <numeric>

#include "dbdt/metrics.hpp"
#include "dbdt/parallel.hpp"
#include "dbdt/rng.hpp"

namespace dbdt {

ImportanceReport permutation_importance(const DbdtModel& model, const Dataset& heldout, std::size_t repeats,
                                        std::uint64_t seed) {
    if (repeats < 1) {
        throw InputError("permutation_importance: repeats must be at least 1");
    }
    const auto pos = heldout.positives();
    if (pos == 0 || pos == heldout.size()) {
        throw InputError("permutation_importance: held-out set must contain both classes");
    }
    std::vector<FeatureGroup> groups = heldout.groups;
    if (groups.empty()) {
        for (std::size_t c = 0; c < heldout.dim(); ++c) {
            groups.push_back({heldout.feature_names.empty() ? "x" + std::to_string(c) : heldout.feature_names[c], {c}});
        }
    }

    ImportanceReport report;
    report.repeats = repeats;
    report.seed = seed;
    report.baseline_auc = auc(model.score_batch(heldout.features), heldout.labels);
    report.features.resize(groups.size());

    parallel_for(groups.size(), [&](std::size_t g) {
        Matrix shuffled = heldout.features;
        double drop_sum = 0.0;
        for (std::size_t k = 0; k < repeats; ++k) {
            Rng rng(derive_seed(derive_seed(seed, g), k));
            const auto perm = rng.permutation(heldout.size());
            for (const std::size_t c : groups[g].columns) {
                for (std::size_t r = 0; r < heldout.size(); ++r) {
                    shuffled(r, c) = heldout.features(perm[r], c);
                }
            }
            drop_sum += report.baseline_auc - auc(model.score_batch(shuffled), heldout.labels);
        }
        report.features[g].feature = groups[g].name;
        report.features[g].mean_drop = drop_sum / static_cast<double>(repeats);
    });

    double total = 0.0;
    for (const auto& f : report.features) {
        total += std::max(f.mean_drop, 0.0);
    }
    for (auto& f : report.features) {
        f.share = total > 0.0 ? 100.0 * std::max(f.mean_drop, 0.0) / total : 0.0;
    }
    std::vector<std::size_t> order(report.features.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return report.features[i].mean_drop > report.features[j].mean_drop;
    });
    for (std::size_t r = 0; r < order.size(); ++r) {
        report.features[order[r]].rank = r + 1;
    }
    return report;
}

std::string importance_to_json(const ImportanceReport& report) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : report.features) {
        features.push_back({{"feature", f.feature}, {"mean_auc_drop", f.mean_drop}, {"share_percent", f.share},
                            {"rank", f.rank}});
    }
    nlohmann::json doc{{"baseline_auc", report.baseline_auc},
                       {"repeats", report.repeats},
                       {"seed", report.seed},
                       {"features", features}};
    return doc.dump(2) + "\n";
}

std::string importance_table(const ImportanceReport& report) {
    std::vector<const FeatureImportance*> sorted;
    for (const auto& f : report.features) {
        sorted.push_back(&f);
    }
    std::sort(sorted.begin(), sorted.end(), [](auto* l, auto* r) { return l->rank < r->rank; });
    std::size_t width = 7;
    for (const auto* f : sorted) {
        width = std::max(width, f->feature.size());
    }
    std::string out;
    char line[512];
    std::snprintf(line, sizeof line, "%-*s  %8s\n", static_cast<int>(width), "feature", "share%");
    out += line;
    for (const auto* f : sorted) {
        std::snprintf(line, sizeof line, "%-*s  %8.2f\n", static_cast<int>(width), f->feature.c_str(), f->share);
        out += line;
    }
    return out;
}

}  // namespace dbdt
