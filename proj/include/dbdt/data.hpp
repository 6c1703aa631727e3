#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dbdt/core.hpp"

namespace dbdt {

enum class ColumnKind { Numeric, Ordinal, Nominal, Target };

const char* to_string(ColumnKind kind);
ColumnKind column_kind_from_string(const std::string& text);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::string> ordering;    // ordinal only, lowest first
    std::vector<std::string> categories;  // nominal only
};

// Ordered column list with exactly one target column.
class Schema {
public:
    Schema() = default;
    explicit Schema(std::vector<ColumnSpec> columns);

    const std::vector<ColumnSpec>& columns() const { return columns_; }
    const ColumnSpec& target() const { return columns_[target_index_]; }
    std::size_t target_index() const { return target_index_; }

    // Post-encoding feature names, in encoded column order.
    std::vector<std::string> encoded_names() const;

private:
    std::vector<ColumnSpec> columns_;
    std::size_t target_index_ = 0;
};

// Accepts either a bare JSON array of column objects or {"columns": [...]}.
Schema parse_schema(const std::string& json_text);
Schema load_schema(const std::filesystem::path& path);
std::string schema_to_json(const Schema& schema);

// How each encoded column was produced. Only Numeric columns are normalized.
enum class EncodedKind : std::uint8_t { Numeric, Ordinal, Indicator };

// One original (pre-encoding) feature and the encoded columns it owns.
struct FeatureGroup {
    std::string name;
    std::vector<std::size_t> columns;
};

struct Dataset {
    Matrix features;                     // N x P
    std::vector<int> labels;             // {-1,+1}
    std::vector<std::string> feature_names;
    std::vector<EncodedKind> column_kinds;
    std::vector<FeatureGroup> groups;
    std::string positive_label;          // raw target text mapped to +1
    double pos_ratio = 0.0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }
    std::size_t positives() const;

    // Row subset in the given order; pos_ratio recomputed.
    Dataset subset(std::span<const std::size_t> rows) const;
    Batch gather(std::span<const std::size_t> rows) const;
    Batch as_batch() const;
};

double positive_ratio(std::span<const int> labels);

struct LoadOptions {
    // Raw target text to map to +1. Empty: the minority class.
    std::string positive_label;
    // Field separator; 0 auto-detects ',' or ';' from the header row.
    char delimiter = 0;
};

Dataset load_csv(const std::filesystem::path& path, const Schema& schema,
                 const LoadOptions& options = {});
Dataset parse_csv(const std::string& text, const Schema& schema,
                  const LoadOptions& options = {}, const std::string& source = "<memory>");

// Encodes feature columns only; a target column in the header is ignored and
// may be absent. Used for scoring files.
Matrix load_features(const std::filesystem::path& path, const Schema& schema, char delimiter = 0);

struct NormalizationStats {
    std::vector<std::string> feature_names;  // full encoded name list, for mismatch checks
    std::vector<std::size_t> columns;        // numeric columns that get normalized
    std::vector<double> means;
    std::vector<double> stds;
    std::vector<std::string> warnings;
};

inline constexpr double kMinStd = 1e-12;

NormalizationStats fit_normalize(const Dataset& train);
Dataset apply_normalize(const Dataset& ds, const NormalizationStats& stats);
void apply_normalize_inplace(Matrix& features, std::span<const std::string> names,
                             const NormalizationStats& stats);

// Stratified by label; returns (train, test).
std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, std::uint64_t seed);

Dataset undersample_majority(const Dataset& ds, double target_pos_ratio, std::uint64_t seed);

// Seeded permutation of [0, n) chunked into batch_size pieces; last may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch);

}  // namespace dbdt
