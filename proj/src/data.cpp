#include "dbdt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dbdt/rng.hpp"

namespace dbdt {

namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError(std::string("cannot open ") + what + " file: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

struct CsvRecord {
    std::size_t line = 0;  // 1-based line where the record starts
    std::vector<std::string> fields;
};

// RFC-4180 reader: quoted fields, doubled quotes, CRLF or LF endings.
std::vector<CsvRecord> parse_records(const std::string& text, char delim, const std::string& source) {
    std::vector<CsvRecord> records;
    std::size_t pos = 0;
    std::size_t line = 1;
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        pos = 3;
    }
    while (pos < text.size()) {
        CsvRecord rec;
        rec.line = line;
        std::string field;
        bool in_quotes = false;
        bool was_quoted = false;
        bool done = false;
        while (!done) {
            if (pos >= text.size()) {
                if (in_quotes) {
                    throw InputError(source + ":" + std::to_string(rec.line) +
                                     ": unterminated quoted field");
                }
                rec.fields.push_back(std::move(field));
                break;
            }
            const char c = text[pos];
            if (in_quotes) {
                if (c == '"') {
                    if (pos + 1 < text.size() && text[pos + 1] == '"') {
                        field.push_back('"');
                        pos += 2;
                    } else {
                        in_quotes = false;
                        ++pos;
                    }
                } else {
                    if (c == '\n') {
                        ++line;
                    }
                    field.push_back(c);
                    ++pos;
                }
                continue;
            }
            if (c == '"' && field.empty() && !was_quoted) {
                in_quotes = true;
                was_quoted = true;
                ++pos;
            } else if (c == delim) {
                rec.fields.push_back(std::move(field));
                field.clear();
                was_quoted = false;
                ++pos;
            } else if (c == '\r' || c == '\n') {
                rec.fields.push_back(std::move(field));
                if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') {
                    ++pos;
                }
                ++pos;
                ++line;
                done = true;
            } else {
                field.push_back(c);
                ++pos;
            }
        }
        const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
        if (!blank) {
            records.push_back(std::move(rec));
        }
    }
    return records;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

char detect_delimiter(const std::string& text) {
    const auto eol = text.find_first_of("\r\n");
    const std::string header = text.substr(0, eol);
    const auto commas = std::count(header.begin(), header.end(), ',');
    const auto semis = std::count(header.begin(), header.end(), ';');
    return semis > commas ? ';' : ',';
}

std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line);
}

// Maps schema columns onto header positions; target may be optional.
std::vector<std::size_t> match_header(const Schema& schema, const std::vector<std::string>& header,
                                      bool require_target, const std::string& source) {
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name = trim(header[i]);
        if (!position.emplace(name, i).second) {
            throw InputError(where(source, 1) + ": duplicate header column '" + name + "'");
        }
    }
    std::vector<std::size_t> index(schema.columns().size(), SIZE_MAX);
    std::size_t matched = 0;
    for (std::size_t c = 0; c < schema.columns().size(); ++c) {
        const auto& col = schema.columns()[c];
        auto it = position.find(col.name);
        if (it == position.end()) {
            if (col.kind == ColumnKind::Target && !require_target) {
                continue;
            }
            throw InputError(where(source, 1) + ": schema/header mismatch: column '" + col.name +
                             "' missing from header");
        }
        index[c] = it->second;
        ++matched;
    }
    if (require_target && matched != header.size()) {
        for (const auto& h : header) {
            const std::string name = trim(h);
            const bool known = std::any_of(schema.columns().begin(), schema.columns().end(),
                                           [&](const ColumnSpec& c) { return c.name == name; });
            if (!known) {
                throw InputError(where(source, 1) + ": schema/header mismatch: header column '" +
                                 name + "' not in schema");
            }
        }
    }
    return index;
}

double parse_number(const std::string& raw, const std::string& column, const std::string& loc) {
    const std::string text = trim(raw);
    double value = 0.0;
    const auto* begin = text.data();
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        throw InputError(loc + ": column '" + column + "': not a finite number: '" + text + "'");
    }
    return value;
}

// Encodes feature fields of a record into out (length P).
void encode_row(const Schema& schema, const std::vector<std::size_t>& index,
                const CsvRecord& rec, const std::string& source, std::span<double> out) {
    std::size_t col = 0;
    const std::string loc = where(source, rec.line);
    for (std::size_t c = 0; c < schema.columns().size(); ++c) {
        const auto& spec = schema.columns()[c];
        if (spec.kind == ColumnKind::Target) {
            continue;
        }
        const std::string value = trim(rec.fields[index[c]]);
        if (value.empty()) {
            throw InputError(loc + ": missing value in column '" + spec.name + "'");
        }
        switch (spec.kind) {
            case ColumnKind::Numeric:
                out[col++] = parse_number(value, spec.name, loc);
                break;
            case ColumnKind::Ordinal: {
                auto it = std::find(spec.ordering.begin(), spec.ordering.end(), value);
                if (it == spec.ordering.end()) {
                    throw InputError(loc + ": unknown category '" + value + "' in column '" +
                                     spec.name + "'");
                }
                out[col++] = static_cast<double>(it - spec.ordering.begin() + 1);
                break;
            }
            case ColumnKind::Nominal: {
                auto it = std::find(spec.categories.begin(), spec.categories.end(), value);
                if (it == spec.categories.end()) {
                    throw InputError(loc + ": unknown category '" + value + "' in column '" +
                                     spec.name + "'");
                }
                const auto hot = static_cast<std::size_t>(it - spec.categories.begin());
                for (std::size_t k = 0; k < spec.categories.size(); ++k) {
                    out[col + k] = k == hot ? 1.0 : 0.0;
                }
                col += spec.categories.size();
                break;
            }
            case ColumnKind::Target:
                break;
        }
    }
}

std::vector<EncodedKind> encoded_kinds(const Schema& schema) {
    std::vector<EncodedKind> kinds;
    for (const auto& spec : schema.columns()) {
        switch (spec.kind) {
            case ColumnKind::Numeric:
                kinds.push_back(EncodedKind::Numeric);
                break;
            case ColumnKind::Ordinal:
                kinds.push_back(EncodedKind::Ordinal);
                break;
            case ColumnKind::Nominal:
                kinds.insert(kinds.end(), spec.categories.size(), EncodedKind::Indicator);
                break;
            case ColumnKind::Target:
                break;
        }
    }
    return kinds;
}

std::vector<FeatureGroup> feature_groups(const Schema& schema) {
    std::vector<FeatureGroup> groups;
    std::size_t col = 0;
    for (const auto& spec : schema.columns()) {
        if (spec.kind == ColumnKind::Target) {
            continue;
        }
        FeatureGroup g{spec.name, {}};
        const std::size_t width = spec.kind == ColumnKind::Nominal ? spec.categories.size() : 1;
        for (std::size_t k = 0; k < width; ++k) {
            g.columns.push_back(col++);
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

}  // namespace

const char* to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::Numeric:
            return "numeric";
        case ColumnKind::Ordinal:
            return "ordinal";
        case ColumnKind::Nominal:
            return "nominal";
        case ColumnKind::Target:
            return "target";
    }
    return "?";
}

ColumnKind column_kind_from_string(const std::string& text) {
    if (text == "numeric") return ColumnKind::Numeric;
    if (text == "ordinal") return ColumnKind::Ordinal;
    if (text == "nominal") return ColumnKind::Nominal;
    if (text == "target") return ColumnKind::Target;
    throw InputError("unknown column kind '" + text + "'");
}

Schema::Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
    std::size_t targets = 0;
    std::set<std::string> names;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto& c = columns_[i];
        if (c.name.empty()) {
            throw InputError("schema: column " + std::to_string(i) + " has an empty name");
        }
        if (!names.insert(c.name).second) {
            throw InputError("schema: duplicate column '" + c.name + "'");
        }
        if (c.kind == ColumnKind::Target) {
            ++targets;
            target_index_ = i;
        }
        if (c.kind == ColumnKind::Ordinal && c.ordering.empty()) {
            throw InputError("schema: ordinal column '" + c.name + "' needs an ordering");
        }
        if (c.kind == ColumnKind::Nominal && c.categories.empty()) {
            throw InputError("schema: nominal column '" + c.name + "' needs categories");
        }
        const auto& labels = c.kind == ColumnKind::Ordinal ? c.ordering : c.categories;
        if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size()) {
            throw InputError("schema: column '" + c.name + "' lists a category twice");
        }
    }
    if (targets != 1) {
        throw InputError("schema: expected exactly one target column, found " +
                         std::to_string(targets));
    }
    if (columns_.size() < 2) {
        throw InputError("schema: no feature columns");
    }
}

std::vector<std::string> Schema::encoded_names() const {
    std::vector<std::string> names;
    for (const auto& c : columns_) {
        if (c.kind == ColumnKind::Nominal) {
            for (const auto& cat : c.categories) {
                names.push_back(c.name + "=" + cat);
            }
        } else if (c.kind != ColumnKind::Target) {
            names.push_back(c.name);
        }
    }
    return names;
}

Schema parse_schema(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("schema: invalid JSON: ") + e.what());
    }
    const json& list = doc.is_object() && doc.contains("columns") ? doc["columns"] : doc;
    if (!list.is_array()) {
        throw InputError("schema: expected an array of column specs");
    }
    std::vector<ColumnSpec> columns;
    try {
        for (const auto& item : list) {
            ColumnSpec spec;
            spec.name = item.at("name").get<std::string>();
            spec.kind = column_kind_from_string(item.at("kind").get<std::string>());
            if (item.contains("ordering")) {
                spec.ordering = item["ordering"].get<std::vector<std::string>>();
            }
            if (item.contains("categories")) {
                spec.categories = item["categories"].get<std::vector<std::string>>();
            }
            columns.push_back(std::move(spec));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("schema: ") + e.what());
    }
    return Schema(std::move(columns));
}

Schema load_schema(const std::filesystem::path& path) {
    try {
        return parse_schema(read_file(path, "schema"));
    } catch (const InputError& e) {
        const std::string msg = e.what();
        if (msg.rfind("cannot open", 0) == 0) {
            throw;
        }
        throw InputError(path.string() + ": " + msg);
    }
}

std::string schema_to_json(const Schema& schema) {
    json list = json::array();
    for (const auto& c : schema.columns()) {
        json item{{"name", c.name}, {"kind", to_string(c.kind)}};
        if (c.kind == ColumnKind::Ordinal) {
            item["ordering"] = c.ordering;
        }
        if (c.kind == ColumnKind::Nominal) {
            item["categories"] = c.categories;
        }
        list.push_back(std::move(item));
    }
    return json{{"columns", list}}.dump(2);
}

double positive_ratio(std::span<const int> labels) {
    if (labels.empty()) {
        return 0.0;
    }
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    return static_cast<double>(pos) / static_cast<double>(labels.size());
}

std::size_t Dataset::positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features = Matrix(rows.size(), features.cols);
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = features.row(rows[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels.push_back(labels[rows[i]]);
    }
    out.feature_names = feature_names;
    out.column_kinds = column_kinds;
    out.groups = groups;
    out.positive_label = positive_label;
    out.pos_ratio = positive_ratio(out.labels);
    return out;
}

Batch Dataset::gather(std::span<const std::size_t> rows) const {
    Batch b;
    b.features = Matrix(rows.size(), features.cols);
    b.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = features.row(rows[i]);
        std::copy(src.begin(), src.end(), b.features.row(i).begin());
        b.labels.push_back(labels[rows[i]]);
    }
    return b;
}

Batch Dataset::as_batch() const { return Batch{features, labels}; }

Dataset parse_csv(const std::string& text, const Schema& schema, const LoadOptions& options,
                  const std::string& source) {
    const char delim = options.delimiter ? options.delimiter : detect_delimiter(text);
    const auto records = parse_records(text, delim, source);
    if (records.empty()) {
        throw InputError(source + ": empty file (header row required)");
    }
    const auto index = match_header(schema, records[0].fields, true, source);
    const std::size_t target_pos = index[schema.target_index()];

    const std::size_t n = records.size() - 1;
    const auto names = schema.encoded_names();
    Dataset ds;
    ds.features = Matrix(n, names.size());
    ds.feature_names = names;
    ds.column_kinds = encoded_kinds(schema);
    ds.groups = feature_groups(schema);

    std::vector<std::string> raw_targets;
    raw_targets.reserve(n);
    std::map<std::string, std::size_t> counts;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& rec = records[r + 1];
        if (rec.fields.size() != records[0].fields.size()) {
            throw InputError(where(source, rec.line) + ": expected " +
                             std::to_string(records[0].fields.size()) + " fields, found " +
                             std::to_string(rec.fields.size()));
        }
        encode_row(schema, index, rec, source, ds.features.row(r));
        std::string t = trim(rec.fields[target_pos]);
        if (t.empty()) {
            throw InputError(where(source, rec.line) + ": missing value in column '" +
                             schema.target().name + "'");
        }
        ++counts[t];
        raw_targets.push_back(std::move(t));
    }
    if (counts.size() > 2 || (counts.size() == 1 && options.positive_label.empty())) {
        throw InputError(source + ": non-binary target: column '" + schema.target().name +
                         "' has " + std::to_string(counts.size()) + " distinct values");
    }
    std::string positive = options.positive_label;
    if (positive.empty() && !counts.empty()) {
        // Minority class is +1; on an exact tie the lexicographically larger label.
        auto first = counts.begin();
        auto second = std::next(first);
        positive = first->second < second->second ? first->first : second->first;
    }
    if (counts.size() == 2 && counts.find(positive) == counts.end()) {
        throw InputError(source + ": positive label '" + positive +
                         "' not present in target column '" + schema.target().name + "'");
    }
    ds.positive_label = positive;
    ds.labels.reserve(n);
    for (const auto& t : raw_targets) {
        ds.labels.push_back(t == positive ? 1 : -1);
    }
    ds.pos_ratio = positive_ratio(ds.labels);
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema, const LoadOptions& options) {
    return parse_csv(read_file(path, "data"), schema, options, path.string());
}

Matrix load_features(const std::filesystem::path& path, const Schema& schema, char delimiter) {
    const std::string text = read_file(path, "data");
    const std::string source = path.string();
    const char delim = delimiter ? delimiter : detect_delimiter(text);
    const auto records = parse_records(text, delim, source);
    if (records.empty()) {
        throw InputError(source + ": empty file (header row required)");
    }
    const auto index = match_header(schema, records[0].fields, false, source);
    Matrix out(records.size() - 1, schema.encoded_names().size());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].fields.size() != records[0].fields.size()) {
            throw InputError(where(source, records[r].line) + ": expected " +
                             std::to_string(records[0].fields.size()) + " fields, found " +
                             std::to_string(records[r].fields.size()));
        }
        encode_row(schema, index, records[r], source, out.row(r - 1));
    }
    return out;
}

NormalizationStats fit_normalize(const Dataset& train) {
    if (train.size() == 0) {
        throw InputError("fit_normalize: empty training set");
    }
    NormalizationStats stats;
    stats.feature_names = train.feature_names;
    const double n = static_cast<double>(train.size());
    for (std::size_t c = 0; c < train.dim(); ++c) {
        if (train.column_kinds[c] != EncodedKind::Numeric) {
            continue;
        }
        double sum = 0.0;
        for (std::size_t r = 0; r < train.size(); ++r) {
            sum += train.features(r, c);
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (std::size_t r = 0; r < train.size(); ++r) {
            const double d = train.features(r, c) - mean;
            ss += d * d;
        }
        double sd = std::sqrt(ss / n);
        if (!(sd > kMinStd)) {
            stats.warnings.push_back("column '" + train.feature_names[c] +
                                     "' is constant on the training split; it normalizes to zero");
            sd = kMinStd;
        }
        stats.columns.push_back(c);
        stats.means.push_back(mean);
        stats.stds.push_back(sd);
    }
    return stats;
}

void apply_normalize_inplace(Matrix& features, std::span<const std::string> names,
                             const NormalizationStats& stats) {
    if (names.size() != stats.feature_names.size() ||
        !std::equal(names.begin(), names.end(), stats.feature_names.begin()) ||
        features.cols != names.size()) {
        throw InputError("apply_normalize: normalization stats were fitted on different columns");
    }
    for (std::size_t k = 0; k < stats.columns.size(); ++k) {
        const std::size_t c = stats.columns[k];
        const double mean = stats.means[k];
        const double sd = stats.stds[k];
        for (std::size_t r = 0; r < features.rows; ++r) {
            double& v = features(r, c);
            v = (v - mean) / sd;
        }
    }
}

Dataset apply_normalize(const Dataset& ds, const NormalizationStats& stats) {
    Dataset out = ds;
    apply_normalize_inplace(out.features, out.feature_names, stats);
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InputError("split: test_fraction must lie strictly between 0 and 1");
    }
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    for (int cls : {1, -1}) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.labels[i] == cls) {
                rows.push_back(i);
            }
        }
        if (rows.size() < 2) {
            throw InputError("split: class " + std::to_string(cls) + " has fewer than 2 samples");
        }
        Rng rng(derive_seed(seed, cls == 1 ? 1 : 2));
        rng.shuffle(std::span<std::size_t>(rows));
        auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
        n_test = std::clamp<std::size_t>(n_test, 1, rows.size() - 1);
        test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
        train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
    }
    // Mix the classes so consumers that read rows in order see both.
    Rng mix(derive_seed(seed, 3));
    mix.shuffle(std::span<std::size_t>(train_rows));
    mix.shuffle(std::span<std::size_t>(test_rows));
    return {ds.subset(train_rows), ds.subset(test_rows)};
}

Dataset undersample_majority(const Dataset& ds, double target_pos_ratio, std::uint64_t seed) {
    if (!(target_pos_ratio > 0.0 && target_pos_ratio < 1.0)) {
        throw InputError("undersample_majority: target ratio must lie strictly between 0 and 1");
    }
    if (target_pos_ratio < ds.pos_ratio - 1e-12) {
        throw InputError("undersample_majority: target ratio " + std::to_string(target_pos_ratio) +
                         " is below the current positive ratio " + std::to_string(ds.pos_ratio));
    }
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] != 1) {
            negatives.push_back(i);
        }
    }
    const double pos = static_cast<double>(ds.positives());
    const auto wanted = static_cast<std::size_t>(std::llround(pos * (1.0 - target_pos_ratio) / target_pos_ratio));
    const std::size_t keep = std::min(wanted, negatives.size());
    if (keep == negatives.size()) {
        return ds;
    }
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(negatives));
    std::vector<char> kept(ds.size(), 0);
    for (std::size_t i = 0; i < keep; ++i) {
        kept[negatives[i]] = 1;
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == 1 || kept[i]) {
            rows.push_back(i);
        }
    }
    return ds.subset(rows);
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size < 2) {
        throw InputError("batch_iter: batch_size must be at least 2");
    }
    Rng rng(derive_seed(seed, 0x1000 + epoch));
    const auto perm = rng.permutation(n);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                             perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

}  // namespace dbdt
