#include "dbdt/synthetic.hpp"

#include <cmath>
#include <sstream>

#include "dbdt/rng.hpp"

namespace dbdt {

Dataset make_two_gaussians(const GaussianSpec& spec, std::uint64_t seed) {
    if (spec.samples < 2 || spec.dim < 1 || !(spec.pos_ratio > 0.0 && spec.pos_ratio < 1.0)) {
        throw InputError("make_two_gaussians: invalid parameters");
    }
    Rng rng(seed);
    const auto positives = static_cast<std::size_t>(std::llround(spec.pos_ratio * static_cast<double>(spec.samples)));
    const double shift = spec.separation / std::sqrt(static_cast<double>(spec.dim));
    // Interleave classes through a permutation so row order carries no label signal.
    auto order = rng.permutation(spec.samples);
    Dataset ds;
    ds.features = Matrix(spec.samples, spec.dim);
    ds.labels.assign(spec.samples, -1);
    for (std::size_t k = 0; k < spec.samples; ++k) {
        const std::size_t r = order[k];
        const bool pos = k < positives;
        ds.labels[r] = pos ? 1 : -1;
        for (std::size_t j = 0; j < spec.dim; ++j) {
            ds.features(r, j) = pos ? shift + spec.positive_scale * rng.normal() : rng.normal();
        }
    }
    for (std::size_t j = 0; j < spec.dim; ++j) {
        ds.feature_names.push_back("x" + std::to_string(j + 1));
        ds.column_kinds.push_back(EncodedKind::Numeric);
        ds.groups.push_back({ds.feature_names.back(), {j}});
    }
    ds.positive_label = "1";
    ds.pos_ratio = positive_ratio(ds.labels);
    return ds;
}

SyntheticTable make_mixed_table(std::size_t samples, double pos_ratio, std::uint64_t seed) {
    Rng rng(seed);
    const char* segments[] = {"retail", "online", "atm"};
    const char* tiers[] = {"low", "mid", "high"};
    std::ostringstream csv;
    csv.precision(10);
    csv << "amount,age,segment,tier,noise,label\n";
    for (std::size_t i = 0; i < samples; ++i) {
        const bool fraud = rng.uniform() < pos_ratio;
        // Fraud skews toward larger amounts, online purchases and the high tier.
        const double amount = std::exp(3.0 + 0.8 * rng.normal() + (fraud ? 1.2 : 0.0));
        const double age = std::round(45.0 + 12.0 * rng.normal() - (fraud ? 6.0 : 0.0));
        std::size_t segment = static_cast<std::size_t>(rng.below(3));
        if (fraud && rng.uniform() < 0.5) {
            segment = 1;
        }
        std::size_t tier = static_cast<std::size_t>(rng.below(3));
        if (fraud && rng.uniform() < 0.4) {
            tier = 2;
        }
        const double noise = rng.normal();
        csv << amount << ',' << age << ',' << segments[segment] << ',' << tiers[tier] << ',' << noise << ','
            << (fraud ? "fraud" : "legit") << '\n';
    }
    SyntheticTable table;
    table.csv = csv.str();
    table.schema_json = R"({
  "columns": [
    {"name": "amount", "kind": "numeric"},
    {"name": "age", "kind": "numeric"},
    {"name": "segment", "kind": "nominal", "categories": ["retail", "online", "atm"]},
    {"name": "tier", "kind": "ordinal", "ordering": ["low", "mid", "high"]},
    {"name": "noise", "kind": "numeric"},
    {"name": "label", "kind": "target"}
  ]
}
)";
    return table;
}

}  // namespace dbdt
