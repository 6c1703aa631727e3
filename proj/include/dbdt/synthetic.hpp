#pragma once

#include <cstdint>
#include <string>

#include "dbdt/data.hpp"

namespace dbdt {

// Two isotropic Gaussian classes. Negatives ~ N(0, I); positives are centered
// at `separation` along the all-ones direction (unit length) with standard
// deviation `positive_scale`. Exactly round(samples * pos_ratio) positives.
struct GaussianSpec {
    std::size_t samples = 1000;
    double pos_ratio = 0.5;
    std::size_t dim = 2;
    double separation = 2.0;
    double positive_scale = 1.0;
};

Dataset make_two_gaussians(const GaussianSpec& spec, std::uint64_t seed);

// Mixed-type table (numeric, ordinal, nominal columns plus a text target)
// for end-to-end runs of the CSV pipeline.
struct SyntheticTable {
    std::string csv;
    std::string schema_json;
};

SyntheticTable make_mixed_table(std::size_t samples, double pos_ratio, std::uint64_t seed);

}  // namespace dbdt
