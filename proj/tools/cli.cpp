#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dbdt/auc_head.hpp"
#include "dbdt/data.hpp"
#include "dbdt/ensemble.hpp"
#include "dbdt/importance.hpp"
#include "dbdt/metrics.hpp"
#include "dbdt/model_io.hpp"
#include "dbdt/synthetic.hpp"
#include "dbdt/trainer.hpp"

namespace dbdt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainOptions {
    std::string data;
    std::string schema;
    std::string positive_label;
    std::string optimizer = "pdsca";
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    std::size_t trees = 40;
    int depth = 4;
    int layers = 1;
    std::size_t hidden = 0;
    double lambda1 = 0.1;
    double lambda2 = 0.005;
    std::string balance_decay = "tree";
    double learning_rate = 0.01;
    double eta1 = 0.1;
    double eta2 = 0.1;
    double beta = 0.001;
    double beta0 = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double g0 = 1e-8;
    double margin = 1.0;
    double weight_decay = 1e-4;
    std::vector<std::size_t> decay_epochs;
    bool decay_epochs_set = false;
    double decay_factor = 0.1;
    std::string projection = "nonnegative";
    double alpha_max = 1e3;
    std::string jacobian = "first-order";
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    std::string out = ".";
};

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw InputError("cannot write " + path.string());
    }
    f << text;
    if (!f) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

// Step-decay at half and three quarters of the run unless listed explicitly.
std::vector<std::size_t> stage_schedule(const TrainOptions& o) {
    if (o.decay_epochs_set) {
        return o.decay_epochs;
    }
    std::vector<std::size_t> s;
    for (std::size_t e : {o.epochs / 2 + 1, o.epochs * 3 / 4 + 1}) {
        if (e >= 2 && e <= o.epochs && std::find(s.begin(), s.end(), e) == s.end()) {
            s.push_back(e);
        }
    }
    return s;
}

Regularization regularization(const TrainOptions& o) {
    BalanceDecay decay = BalanceDecay::TreeDepth;
    if (o.balance_decay == "node") {
        decay = BalanceDecay::NodeDepth;
    } else if (o.balance_decay != "tree") {
        throw InputError("--balance-decay must be 'tree' or 'node'");
    }
    return {o.lambda1, o.lambda2, decay};
}

SgdConfig sgd_config(const TrainOptions& o) {
    if (!(o.learning_rate > 0.0)) {
        throw InputError("--learning-rate must be positive");
    }
    SgdConfig c;
    c.epochs = o.epochs;
    c.batch_size = o.batch_size;
    c.learning_rate = o.learning_rate;
    c.reg = regularization(o);
    c.seed = o.seed;
    return c;
}

PdscaConfig pdsca_config(const TrainOptions& o) {
    if (!(o.eta1 > 0.0 && o.eta2 > 0.0)) {
        throw InputError("--eta1 and --eta2 must be positive");
    }
    PdscaConfig c;
    c.epochs = o.epochs;
    c.batch_size = o.batch_size;
    c.beta = o.beta;
    c.beta0 = o.beta0;
    c.beta1 = o.beta1;
    c.beta2 = o.beta2;
    c.g0 = o.g0;
    c.eta1 = o.eta1;
    c.eta2 = o.eta2;
    c.margin = o.margin;
    c.weight_decay = o.weight_decay;
    c.reg = regularization(o);
    if (o.jacobian == "exact") {
        c.jacobian = JacobianMode::Exact;
    } else if (o.jacobian != "first-order") {
        throw InputError("--jacobian must be 'first-order' or 'exact'");
    }
    if (o.projection == "none") {
        c.projection = DualProjection::None;
    } else if (o.projection == "interval") {
        c.projection = DualProjection::Interval;
    } else if (o.projection != "nonnegative") {
        throw InputError("--projection must be 'none', 'nonnegative' or 'interval'");
    }
    c.alpha_max = o.alpha_max;
    c.decay_epochs = stage_schedule(o);
    c.decay_factor = o.decay_factor;
    c.seed = o.seed;
    return c;
}

TreeShape tree_shape(const TrainOptions& o, std::size_t dim) {
    const TreeShape shape{dim, o.depth, o.layers, o.hidden};
    shape.validate();
    return shape;
}

json config_echo(const TrainOptions& o) {
    json c = {{"optimizer", o.optimizer},   {"epochs", o.epochs},         {"batch_size", o.batch_size},
              {"trees", o.trees},           {"depth", o.depth},           {"layers", o.layers},
              {"hidden", o.hidden},         {"lambda1", o.lambda1},       {"lambda2", o.lambda2},
              {"balance_decay", o.balance_decay}, {"seed", o.seed},       {"test_fraction", o.test_fraction}};
    if (o.optimizer == "sgd") {
        c["learning_rate"] = o.learning_rate;
    } else {
        c["eta1"] = o.eta1;
        c["eta2"] = o.eta2;
        c["beta"] = o.beta;
        c["beta0"] = o.beta0;
        c["beta1"] = o.beta1;
        c["beta2"] = o.beta2;
        c["g0"] = o.g0;
        c["margin"] = o.margin;
        c["weight_decay"] = o.weight_decay;
        c["decay_epochs"] = stage_schedule(o);
        c["decay_factor"] = o.decay_factor;
        c["projection"] = o.projection;
        c["jacobian"] = o.jacobian;
    }
    return c;
}

json trace_json(const TraceRecord& r) {
    json j = {{"epoch", r.epoch}, {"step", r.step}, {"loss", r.loss}};
    j["val_auc"] = r.val_auc ? json(*r.val_auc) : json(nullptr);
    return j;
}

json metrics_json(std::span<const double> scores, std::span<const int> labels, double threshold) {
    const auto cm = confusion(scores, labels, threshold);
    return {{"auc", auc(scores, labels)},
            {"h_measure", h_measure(scores, labels)},
            {"confusion", {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}}},
            {"threshold", threshold}};
}

struct Prepared {
    Dataset train;
    Dataset test;
    NormalizationStats stats;
};

Prepared prepare(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    auto [train, test] = split(ds, test_fraction, seed);
    Prepared p;
    p.stats = fit_normalize(train);
    p.train = apply_normalize(train, p.stats);
    p.test = apply_normalize(test, p.stats);
    return p;
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
    if (o.optimizer != "sgd" && o.optimizer != "pdsca") {
        throw InputError("--optimizer must be 'sgd' or 'pdsca'");
    }
    const Schema schema = load_schema(o.schema);
    const Dataset ds = load_csv(o.data, schema, {o.positive_label, 0});
    Prepared prep = prepare(ds, o.test_fraction, o.seed);
    for (const auto& w : prep.stats.warnings) {
        err << "warning: " << w << '\n';
    }
    DbdtModel model = init_model(o.trees, tree_shape(o, prep.train.dim()), o.seed);
    model.feature_names = prep.train.feature_names;

    const fs::path dir(o.out);
    fs::create_directories(dir);
    std::ofstream trace(dir / "trace.jsonl", std::ios::binary);
    if (!trace) {
        throw InputError("cannot write " + (dir / "trace.jsonl").string());
    }
    const TraceSink sink = [&](const TraceRecord& r) { trace << trace_json(r).dump() << '\n' << std::flush; };

    ModelFile file;
    file.schema = schema;
    file.positive_label = ds.positive_label;
    file.normalization = prep.stats;
    file.config = config_echo(o);
    if (o.optimizer == "sgd") {
        auto result = train_sgd(std::move(model), prep.train, sgd_config(o), &prep.test, sink);
        file.model = std::move(result.model);
        file.head.p = prep.train.pos_ratio;
    } else {
        auto result = train_pdsca(std::move(model), prep.train, pdsca_config(o), &prep.test, sink);
        file.model = std::move(result.model);
        file.head = result.head;
    }
    save_model(dir / "model.json", file);

    const auto scores = file.model.score_batch(prep.test.features);
    json metrics = metrics_json(scores, prep.test.labels, 0.0);
    metrics["split"] = {{"train", prep.train.size()},
                        {"test", prep.test.size()},
                        {"train_positives", prep.train.positives()},
                        {"test_positives", prep.test.positives()}};
    write_text(dir / "metrics.json", metrics.dump(2) + "\n");
    write_text(dir / "roc.csv", roc_to_csv(roc_curve(scores, prep.test.labels)));
    out << "test auc " << fmt(metrics["auc"].get<double>()) << ", h-measure "
        << fmt(metrics["h_measure"].get<double>()) << "\n"
        << "wrote " << (dir / "model.json").string() << ", trace.jsonl, metrics.json, roc.csv\n";
    return 0;
}

const Schema& model_schema(const ModelFile& file) {
    if (!file.schema) {
        throw InputError("model file carries no schema; cannot encode CSV input");
    }
    return *file.schema;
}

int cmd_predict(const std::string& model_path, const std::string& data, const std::string& out_path,
                std::ostream& out) {
    const ModelFile file = load_model(model_path);
    const Schema& schema = model_schema(file);
    Matrix x = load_features(data, schema);
    apply_normalize_inplace(x, schema.encoded_names(), file.normalization);
    std::ostringstream csv;
    csv << "raw_score,score,label\n";
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double raw = file.model.score(x.row(i));
        csv << fmt(raw) << ',' << fmt(squash_score(file.model, raw)) << ',' << predict_label(raw) << '\n';
    }
    if (out_path.empty() || out_path == "-") {
        out << csv.str();
    } else {
        write_text(out_path, csv.str());
    }
    return 0;
}

Dataset load_labeled(const ModelFile& file, const std::string& data) {
    Dataset ds = load_csv(data, model_schema(file), {file.positive_label, 0});
    return apply_normalize(ds, file.normalization);
}

int cmd_evaluate(const std::string& model_path, const std::string& data, const std::string& out_dir,
                 double threshold, std::ostream& out) {
    const ModelFile file = load_model(model_path);
    const Dataset ds = load_labeled(file, data);
    const auto scores = file.model.score_batch(ds.features);
    const json metrics = metrics_json(scores, ds.labels, threshold);
    const auto roc = roc_curve(scores, ds.labels);
    const fs::path dir(out_dir);
    write_text(dir / "metrics.json", metrics.dump(2) + "\n");
    write_text(dir / "roc.csv", roc_to_csv(roc));
    out << metrics.dump(2) << '\n';
    return 0;
}

int cmd_importance(const std::string& model_path, const std::string& data, std::size_t repeats,
                   std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
    if (repeats < 1) {
        throw InputError("--repeats must be at least 1");
    }
    const ModelFile file = load_model(model_path);
    const Dataset ds = load_labeled(file, data);
    const auto report = permutation_importance(file.model, ds, repeats, seed);
    const std::string table = importance_table(report);
    if (!out_dir.empty()) {
        const fs::path dir(out_dir);
        write_text(dir / "importance.json", importance_to_json(report));
        write_text(dir / "importance.txt", table);
    }
    out << table;
    return 0;
}

int cmd_benchmark_ratio(const TrainOptions& o, const std::vector<std::string>& ratios, std::ostream& out) {
    const Schema schema = load_schema(o.schema);
    const Dataset ds = load_csv(o.data, schema, {o.positive_label, 0});
    std::ostringstream csv;
    csv << "ratio,optimizer,epoch,test_auc\n";
    for (const auto& label : ratios) {
        Dataset sampled = ds;
        if (label != "original") {
            double r = 0.0;
            const auto res = std::from_chars(label.data(), label.data() + label.size(), r);
            if (res.ec != std::errc() || res.ptr != label.data() + label.size()) {
                throw InputError("--ratios: '" + label + "' is neither a number nor 'original'");
            }
            sampled = undersample_majority(ds, r, o.seed);
        }
        const Prepared prep = prepare(sampled, o.test_fraction, o.seed);
        DbdtModel init = init_model(o.trees, tree_shape(o, prep.train.dim()), o.seed);
        init.feature_names = prep.train.feature_names;
        const auto sgd = train_sgd(init, prep.train, sgd_config(o), &prep.test);
        const auto pdsca = train_pdsca(init, prep.train, pdsca_config(o), &prep.test);
        auto emit = [&](const char* name, const std::vector<TraceRecord>& trace) {
            for (const auto& r : trace) {
                csv << label << ',' << name << ',' << r.epoch << ',' << (r.val_auc ? fmt(*r.val_auc) : "") << '\n';
            }
        };
        emit("sgd", sgd.trace);
        emit("pdsca", pdsca.trace);
        const auto final_auc = [](const std::vector<TraceRecord>& t) {
            return t.empty() || !t.back().val_auc ? std::string("n/a") : fmt(*t.back().val_auc);
        };
        out << "ratio " << label << ": final test auc sgd " << final_auc(sgd.trace) << ", pdsca "
            << final_auc(pdsca.trace) << '\n';
    }
    write_text(o.out, csv.str());
    return 0;
}

std::string gaussian_csv(const Dataset& ds) {
    std::ostringstream csv;
    for (std::size_t c = 0; c < ds.dim(); ++c) {
        csv << ds.feature_names[c] << ',';
    }
    csv << "label\n";
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < ds.dim(); ++c) {
            csv << fmt(ds.features(r, c)) << ',';
        }
        csv << (ds.labels[r] == 1 ? "1" : "0") << '\n';
    }
    return csv.str();
}

std::string gaussian_schema(const Dataset& ds) {
    json cols = json::array();
    for (const auto& name : ds.feature_names) {
        cols.push_back({{"name", name}, {"kind", "numeric"}});
    }
    cols.push_back({{"name", "label"}, {"kind", "target"}});
    return json{{"columns", cols}}.dump(2) + "\n";
}

int cmd_generate(const std::string& kind, std::size_t samples, double pos_ratio, std::size_t dim,
                 double separation, std::uint64_t seed, const std::string& out_path, const std::string& schema_path,
                 std::ostream& out) {
    std::string csv;
    std::string schema;
    if (kind == "gaussian") {
        const Dataset ds = make_two_gaussians({samples, pos_ratio, dim, separation, 1.0}, seed);
        csv = gaussian_csv(ds);
        schema = gaussian_schema(ds);
    } else if (kind == "table") {
        auto table = make_mixed_table(samples, pos_ratio, seed);
        csv = std::move(table.csv);
        schema = std::move(table.schema_json);
    } else {
        throw InputError("--kind must be 'gaussian' or 'table'");
    }
    write_text(out_path, csv);
    if (!schema_path.empty()) {
        write_text(schema_path, schema);
    }
    out << "wrote " << samples << " rows to " << out_path << '\n';
    return 0;
}

void add_training_options(CLI::App* cmd, TrainOptions& o) {
    cmd->add_option("--data", o.data, "Training CSV")->required();
    cmd->add_option("--schema", o.schema, "Schema JSON")->required();
    cmd->add_option("--positive-label", o.positive_label, "Target value mapped to +1 (default: minority class)");
    cmd->add_option("--epochs", o.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", o.batch_size)->capture_default_str()->check(CLI::Range(2, 1 << 30));
    cmd->add_option("--trees", o.trees)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--depth", o.depth)->capture_default_str();
    cmd->add_option("--layers", o.layers)->capture_default_str();
    cmd->add_option("--hidden", o.hidden, "Hidden width for --layers > 1 (0: feature count)")->capture_default_str();
    cmd->add_option("--lambda1", o.lambda1, "Balance penalty weight")->capture_default_str();
    cmd->add_option("--lambda2", o.lambda2, "Node weight-norm penalty weight")->capture_default_str();
    cmd->add_option("--balance-decay", o.balance_decay, "tree | node")->capture_default_str();
    cmd->add_option("--learning-rate", o.learning_rate, "SGD step size")->capture_default_str();
    cmd->add_option("--eta1", o.eta1, "PDSCA primal step")->capture_default_str();
    cmd->add_option("--eta2", o.eta2, "PDSCA dual step")->capture_default_str();
    cmd->add_option("--beta", o.beta, "Inner step of the compositional map")->capture_default_str();
    cmd->add_option("--beta0", o.beta0, "Moving-average rate")->capture_default_str();
    cmd->add_option("--beta1", o.beta1, "Momentum rate")->capture_default_str();
    cmd->add_option("--beta2", o.beta2, "Second-moment rate")->capture_default_str();
    cmd->add_option("--g0", o.g0, "Adaptivity floor")->capture_default_str();
    cmd->add_option("--margin", o.margin)->capture_default_str();
    cmd->add_option("--weight-decay", o.weight_decay)->capture_default_str();
    cmd->add_option_function<std::vector<std::size_t>>(
        "--decay-epochs",
        [&o](const std::vector<std::size_t>& v) {
            o.decay_epochs = v;
            o.decay_epochs_set = true;
        },
        "Epochs (1-based) at which the PDSCA steps decay (default: halfway and three quarters)")
        ->delimiter(',');
    cmd->add_option("--decay-factor", o.decay_factor)->capture_default_str();
    cmd->add_option("--projection", o.projection, "Dual projection: none | nonnegative | interval")
        ->capture_default_str();
    cmd->add_option("--alpha-max", o.alpha_max)->capture_default_str();
    cmd->add_option("--jacobian", o.jacobian, "first-order | exact")->capture_default_str();
    cmd->add_option("--seed", o.seed)->capture_default_str();
    cmd->add_option("--test-fraction", o.test_fraction)->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Boosted soft trees for imbalanced binary classification", "dbdt"};
    app.require_subcommand(1);

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train a model and report test-split metrics");
    add_training_options(train_cmd, train);
    train_cmd->add_option("--optimizer", train.optimizer, "sgd | pdsca")->capture_default_str();
    train_cmd->add_option("--out", train.out, "Output directory")->capture_default_str();

    std::string model_path;
    std::string data_path;
    std::string out_path;
    auto* predict_cmd = app.add_subcommand("predict", "Score CSV rows with a saved model");
    predict_cmd->add_option("--model", model_path)->required();
    predict_cmd->add_option("--data", data_path)->required();
    predict_cmd->add_option("--out", out_path, "Output CSV (default: stdout)");

    double threshold = 0.0;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "AUC, H-measure, confusion and ROC on labelled CSV");
    evaluate_cmd->add_option("--model", model_path)->required();
    evaluate_cmd->add_option("--data", data_path)->required();
    std::string eval_dir = ".";
    evaluate_cmd->add_option("--out", eval_dir, "Output directory")->capture_default_str();
    evaluate_cmd->add_option("--threshold", threshold, "Raw-score threshold for the confusion matrix")
        ->capture_default_str();

    std::size_t repeats = 10;
    std::uint64_t seed = 0;
    auto* importance_cmd = app.add_subcommand("importance", "Permutation feature importance on held-out CSV");
    importance_cmd->alias("explain");
    importance_cmd->add_option("--model", model_path)->required();
    importance_cmd->add_option("--data", data_path)->required();
    importance_cmd->add_option("--repeats", repeats)->capture_default_str();
    importance_cmd->add_option("--seed", seed)->capture_default_str();
    importance_cmd->add_option("--out", out_path, "Output directory for importance.json and importance.txt");

    TrainOptions bench;
    std::vector<std::string> ratios{"original"};
    auto* bench_cmd = app.add_subcommand("benchmark-ratio", "Per-epoch test AUC of both optimizers per positive ratio");
    add_training_options(bench_cmd, bench);
    bench_cmd->add_option("--ratios", ratios, "Positive ratios after under-sampling, or 'original'")
        ->delimiter(',')
        ->capture_default_str();
    bench.out = "benchmark.csv";
    bench_cmd->add_option("--out", bench.out, "Output CSV")->capture_default_str();

    std::string kind = "table";
    std::size_t samples = 400;
    double pos_ratio = 0.1;
    std::size_t dim = 2;
    double separation = 2.0;
    std::string schema_out;
    auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic CSV and its schema");
    generate_cmd->add_option("--kind", kind, "table | gaussian")->capture_default_str();
    generate_cmd->add_option("--samples", samples)->capture_default_str();
    generate_cmd->add_option("--pos-ratio", pos_ratio)->capture_default_str();
    generate_cmd->add_option("--dim", dim, "Gaussian dimension")->capture_default_str();
    generate_cmd->add_option("--separation", separation, "Gaussian mean distance")->capture_default_str();
    generate_cmd->add_option("--seed", seed)->capture_default_str();
    generate_cmd->add_option("--out", out_path, "Output CSV")->required();
    generate_cmd->add_option("--schema-out", schema_out, "Output schema JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        if (*train_cmd) {
            return cmd_train(train, out, err);
        }
        if (*predict_cmd) {
            return cmd_predict(model_path, data_path, out_path, out);
        }
        if (*evaluate_cmd) {
            return cmd_evaluate(model_path, data_path, eval_dir, threshold, out);
        }
        if (*importance_cmd) {
            return cmd_importance(model_path, data_path, repeats, seed, out_path, out);
        }
        if (*bench_cmd) {
            return cmd_benchmark_ratio(bench, ratios, out);
        }
        if (*generate_cmd) {
            return cmd_generate(kind, samples, pos_ratio, dim, separation, seed, out_path, schema_out, out);
        }
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace dbdt::cli
