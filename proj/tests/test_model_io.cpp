#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dbdt/model_io.hpp"
#include "dbdt/synthetic.hpp"
#include "oracles.hpp"

using namespace dbdt;

namespace {

ModelFile sample_file(std::uint64_t seed) {
    const auto table = make_mixed_table(120, 0.2, seed);
    ModelFile f;
    f.schema = parse_schema(table.schema_json);
    const Dataset ds = parse_csv(table.csv, *f.schema);
    f.positive_label = ds.positive_label;
    f.normalization = fit_normalize(ds);
    f.model = init_model(3, TreeShape{ds.dim(), 3, 2, 4}, seed);
    f.model.feature_names = ds.feature_names;
    Rng rng(seed);
    auto flat = f.model.flat_params();
    for (double& v : flat) {
        // Awkward decimals exercise the shortest round-trip formatting.
        v = rng.normal() / 3.0;
    }
    f.model.set_flat_params(flat);
    f.head.a = 0.1 / 3.0;
    f.head.b = std::nextafter(0.2, 1.0);
    f.head.alpha = 1e-300;
    f.head.p = ds.pos_ratio;
    f.config = {{"optimizer", "pdsca"}, {"epochs", 3}};
    return f;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("dbdt_model_io_" + name);
}

}  // namespace

TEST_CASE("round trip is bit exact") {
    const ModelFile f = sample_file(1);
    const ModelFile g = parse_model(serialize_model(f));
    CHECK(g.model.flat_params() == f.model.flat_params());
    CHECK(g.model.shape == f.model.shape);
    CHECK(g.model.feature_names == f.model.feature_names);
    CHECK(g.head.a == f.head.a);
    CHECK(g.head.b == f.head.b);
    CHECK(g.head.alpha == f.head.alpha);
    CHECK(g.head.p == f.head.p);
    CHECK(g.normalization.means == f.normalization.means);
    CHECK(g.normalization.stds == f.normalization.stds);
    CHECK(g.positive_label == f.positive_label);
    CHECK(g.config == f.config);
    REQUIRE(g.schema.has_value());
    CHECK(schema_to_json(*g.schema) == schema_to_json(*f.schema));

    Rng rng(2);
    const Matrix x = oracle::random_matrix(100, f.model.shape.input_dim, rng);
    CHECK(g.model.score_batch(x) == f.model.score_batch(x));
    CHECK(serialize_model(g) == serialize_model(f));
}

TEST_CASE("save and load through a file") {
    const ModelFile f = sample_file(3);
    const auto path = temp_path("a.json");
    const auto again = temp_path("b.json");
    save_model(path, f);
    save_model(again, load_model(path));
    std::ifstream a(path);
    std::ifstream b(again);
    std::stringstream sa;
    std::stringstream sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    std::filesystem::remove(path);
    std::filesystem::remove(again);
    CHECK_THROWS_WITH_AS(load_model(temp_path("missing.json")), doctest::Contains("missing.json"), InputError);
}

TEST_CASE("model without schema") {
    ModelFile f = sample_file(4);
    f.schema.reset();
    CHECK_FALSE(parse_model(serialize_model(f)).schema.has_value());
}

TEST_CASE("corrupted files are rejected") {
    const std::string text = serialize_model(sample_file(5));
    auto doc = nlohmann::json::parse(text);

    SUBCASE("edited parameter") {
        doc["head"]["a"] = 0.5;
        CHECK_THROWS_WITH_AS(parse_model(doc.dump()), doctest::Contains("checksum"), InputError);
    }
    SUBCASE("unknown version") {
        doc["format_version"] = kModelFormatVersion + 1;
        CHECK_THROWS_WITH_AS(parse_model(doc.dump()), doctest::Contains("version"), InputError);
    }
    SUBCASE("not a model") {
        CHECK_THROWS_AS(parse_model("{\"a\": 1}"), InputError);
        CHECK_THROWS_AS(parse_model("not json"), InputError);
    }
}

TEST_CASE("fnv-1a reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}
