#include "dbdt/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dbdt {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string checksum_of(const json& content) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(content.dump())));
    return std::string("fnv1a64:") + buf;
}

}  // namespace

std::string serialize_model(const ModelFile& file) {
    const auto& m = file.model;
    json trees = json::array();
    for (const auto& t : m.trees) {
        trees.push_back(std::vector<double>(t.params().begin(), t.params().end()));
    }
    json doc;
    doc["format"] = "dbdt-model";
    doc["format_version"] = kModelFormatVersion;
    doc["schema"] = file.schema ? json::parse(schema_to_json(*file.schema))["columns"] : json(nullptr);
    doc["positive_label"] = file.positive_label;
    doc["normalization"] = {{"feature_names", file.normalization.feature_names},
                            {"columns", file.normalization.columns},
                            {"means", file.normalization.means},
                            {"stds", file.normalization.stds}};
    doc["model"] = {{"input_dim", m.shape.input_dim},
                    {"depth", m.shape.depth},
                    {"layers", m.shape.layers},
                    {"hidden", m.shape.hidden},
                    {"score_squash", m.score_squash},
                    {"feature_names", m.feature_names},
                    {"trees", trees}};
    doc["head"] = {{"a", file.head.a},
                   {"b", file.head.b},
                   {"alpha", file.head.alpha},
                   {"p", file.head.p},
                   {"margin", file.head.margin}};
    doc["config"] = file.config;
    doc["checksum"] = checksum_of(doc);
    return doc.dump(1) + "\n";
}

ModelFile parse_model(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("model file: invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != "dbdt-model") {
        throw InputError("model file: not a dbdt model");
    }
    const int version = doc.value("format_version", -1);
    if (version != kModelFormatVersion) {
        throw InputError("model file: unsupported format version " + std::to_string(version));
    }
    const std::string stored = doc.value("checksum", "");
    doc.erase("checksum");
    if (stored != checksum_of(doc)) {
        throw InputError("model file: checksum mismatch (file is corrupt or was edited)");
    }
    ModelFile file;
    try {
        if (!doc["schema"].is_null()) {
            file.schema = parse_schema(json{{"columns", doc["schema"]}}.dump());
        }
        file.positive_label = doc["positive_label"].get<std::string>();
        const auto& norm = doc["normalization"];
        file.normalization.feature_names = norm["feature_names"].get<std::vector<std::string>>();
        file.normalization.columns = norm["columns"].get<std::vector<std::size_t>>();
        file.normalization.means = norm["means"].get<std::vector<double>>();
        file.normalization.stds = norm["stds"].get<std::vector<double>>();
        const auto& jm = doc["model"];
        auto& m = file.model;
        m.shape.input_dim = jm["input_dim"].get<std::size_t>();
        m.shape.depth = jm["depth"].get<int>();
        m.shape.layers = jm["layers"].get<int>();
        m.shape.hidden = jm["hidden"].get<std::size_t>();
        m.score_squash = jm["score_squash"].get<bool>();
        m.feature_names = jm["feature_names"].get<std::vector<std::string>>();
        for (const auto& t : jm["trees"]) {
            m.trees.emplace_back(m.shape, t.get<std::vector<double>>());
        }
        if (m.trees.empty()) {
            throw InputError("model file: no trees");
        }
        const auto& h = doc["head"];
        file.head.a = h["a"].get<double>();
        file.head.b = h["b"].get<double>();
        file.head.alpha = h["alpha"].get<double>();
        file.head.p = h["p"].get<double>();
        file.head.margin = h["margin"].get<double>();
        file.config = doc["config"];
    } catch (const json::exception& e) {
        throw InputError(std::string("model file: ") + e.what());
    }
    return file;
}

void save_model(const std::filesystem::path& path, const ModelFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot write model file: " + path.string());
    }
    out << serialize_model(file);
}

ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open model file: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_model(buffer.str());
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

}  // namespace dbdt
