#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbdt/data.hpp"
#include "dbdt/ensemble.hpp"

namespace dbdt {

struct FeatureImportance {
    std::string feature;     // original (pre-encoding) feature name
    double mean_drop = 0.0;  // baseline AUC minus permuted AUC, averaged over repeats
    double share = 0.0;      // percent of the total clamped drop
    std::size_t rank = 0;    // 1 = most important
};

struct ImportanceReport {
    double baseline_auc = 0.0;
    std::size_t repeats = 0;
    std::uint64_t seed = 0;
    std::vector<FeatureImportance> features;  // in dataset feature order
};

// Permutation importance on held-out data. The encoded columns of one
// original feature are shuffled together with a single permutation. Negative
// mean drops count as zero when computing shares; if every drop is zero all
// shares are zero.
ImportanceReport permutation_importance(const DbdtModel& model, const Dataset& heldout, std::size_t repeats,
                                        std::uint64_t seed);

std::string importance_to_json(const ImportanceReport& report);

// Two columns (feature, share%), most important first.
std::string importance_table(const ImportanceReport& report);

}  // namespace dbdt
