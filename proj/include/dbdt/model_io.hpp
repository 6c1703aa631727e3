#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "dbdt/auc_head.hpp"
#include "dbdt/data.hpp"
#include "dbdt/ensemble.hpp"

namespace dbdt {

inline constexpr int kModelFormatVersion = 1;

// Everything needed to score raw CSV rows: encoding schema, normalization,
// the trees and the AUC head, plus an echo of the training configuration.
struct ModelFile {
    std::optional<Schema> schema;
    std::string positive_label;
    NormalizationStats normalization;
    DbdtModel model;
    AucHead head;
    nlohmann::json config = nlohmann::json::object();
};

// JSON with shortest round-trip decimals, so load(save(m)) is bit-exact. The
// checksum is FNV-1a 64 over the compact dump of every other key.
std::string serialize_model(const ModelFile& file);
ModelFile parse_model(const std::string& text);

void save_model(const std::filesystem::path& path, const ModelFile& file);
ModelFile load_model(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace dbdt
