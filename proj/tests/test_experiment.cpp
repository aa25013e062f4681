#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ifv/experiment.hpp"
#include "support/test_support.hpp"

using namespace ifv;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("minitoml parses the supported subset", "[experiment]") {
    auto doc = minitoml::parse_string(R"(
# comment
top = 1
[section]
count = 42        # trailing comment
rate = 5e-2
flag = true
name = "hello # not a comment"
dims = [16, 16, 3]
mixed = [1.5, 2]
)");
    REQUIRE(doc.section("").at("top").as_int() == 1);
    const auto& s = doc.section("section");
    REQUIRE(s.at("count").as_int() == 42);
    REQUIRE(s.at("rate").as_float() == 0.05);
    REQUIRE(s.at("flag").as_bool() == true);
    REQUIRE(s.at("name").as_string() == "hello # not a comment");
    REQUIRE(s.at("dims").as_array().size() == 3);
    REQUIRE(s.at("dims").as_array()[2].as_int() == 3);
    REQUIRE(s.at("mixed").as_array()[0].as_float() == 1.5);
}

TEST_CASE("minitoml reports parse errors with line numbers", "[experiment]") {
    REQUIRE_THROWS_WITH(minitoml::parse_string("a = 1\nwhat\n"),
                        Catch::Matchers::ContainsSubstring("line 2"));
    REQUIRE_THROWS_WITH(minitoml::parse_string("x = zzz\n"),
                        Catch::Matchers::ContainsSubstring("cannot parse value"));
    REQUIRE_THROWS_AS(minitoml::Value{std::int64_t{1}}.as_string(), std::runtime_error);
}

TEST_CASE("experiment config loads with defaults and overrides", "[experiment]") {
    fs::path dir = fresh_dir("ifv_cfg_test");
    std::ofstream(dir / "exp.toml") << R"(
[network]
kind = "toy_softmax"
features = 6
conv_channels = 3
input = [8, 8, 3]
seed = 9

[objective]
k = 0
aggregation = "mean"

[fv]
adam_steps = 10
adam_lr = 0.1

[sampling]
random = 2
canonical = 1

[critical_space]
enabled = true
samples = 4

[output]
dir = "outdir"

[experiment]
seed = 777
)";
    ExperimentConfig cfg = load_experiment_config((dir / "exp.toml").string());
    REQUIRE(cfg.network.kind == NetworkSpec::Kind::toy_softmax);
    REQUIRE(cfg.network.features == 6);
    REQUIRE(cfg.network.input_h == 8);
    REQUIRE(cfg.objective.k == 0);
    REQUIRE(cfg.objective.aggregation == Aggregation::mean);
    REQUIRE(cfg.fv.adam_steps == 10);
    REQUIRE(cfg.fv.adam.lr == 0.1);
    REQUIRE(cfg.fv.adam.beta1 == 0.9);  // default
    REQUIRE(cfg.fv.lbfgs_steps == 300);  // default
    REQUIRE(cfg.sampling.random == 2);
    REQUIRE(cfg.critical.enabled);
    REQUIRE(cfg.critical.cfg.sample_count == 4);
    REQUIRE(cfg.output.dir == "outdir");
    REQUIRE(cfg.seed == 777);

    std::ofstream(dir / "bad.toml") << "[objective]\nk = -1\n";
    REQUIRE_THROWS_WITH(load_experiment_config((dir / "bad.toml").string()),
                        Catch::Matchers::ContainsSubstring("k must be"));
    fs::remove_all(dir);
}

TEST_CASE("pipelines can load serialized network files", "[experiment]") {
    fs::path dir = fresh_dir("ifv_netfile_test");
    Network net = make_toy_conv(8, 8, 3, {3}, 4, 5);
    save_network(net, (dir / "net.json").string(), (dir / "net.bin").string());

    ExperimentConfig cfg;
    cfg.network.kind = NetworkSpec::Kind::file;
    cfg.network.file = "net.json";
    FeaturePipeline pipe = build_pipeline(cfg, dir.string());
    REQUIRE(pipe.feature_count() == 4);
    REQUIRE(pipe.param_count() == 8 * 8 * 3);
    fs::remove_all(dir);
}

TEST_CASE("select_critical_space returns the only candidate", "[experiment]") {
    std::vector<SubspaceBasis> candidates{SubspaceBasis::full(3)};
    std::vector<LabeledSample> validation;
    SubspaceBasis chosen = select_critical_space(candidates, validation, 2);
    REQUIRE(chosen.dim() == 3);
}

TEST_CASE("select_critical_space prefers the larger space on ties", "[experiment]") {
    // target on e_0, response on e_0, Jacobian with e_0 in the left null
    // space: both the axis candidate and the full space predict +-e_0 with
    // distance zero, so the tie break must pick the full space even though it
    // is listed second
    Rng rng(83);
    Matrix jac = testsupport::random_matrix(rng, 2, 10);
    for (std::size_t c = 0; c < jac.cols; ++c) jac(0, c) = 0.0;
    LabeledSample sample{FeatureObjective::canonical(2, 0), FeatureResponse{{1.0, 0.0}}, &jac};
    std::vector<SubspaceBasis> candidates{
        SubspaceBasis::from_columns(2, {{1.0, 0.0}}),
        SubspaceBasis::full(2),
    };
    SubspaceBasis chosen = select_critical_space(candidates, {sample}, 0);
    REQUIRE(chosen.dim() == 2);
}

TEST_CASE("experiment with zero samples writes the manifest only", "[experiment]") {
    fs::path dir = fresh_dir("ifv_empty_run");
    ExperimentConfig cfg;
    cfg.network = NetworkSpec{};
    cfg.network.input_h = cfg.network.input_w = 8;
    cfg.sampling.random = 0;
    cfg.sampling.canonical = 0;
    cfg.output.dir = (dir / "out").string();
    ExperimentReport report = run_experiment(cfg);
    REQUIRE(report.total == 0);
    REQUIRE(fs::exists(dir / "out" / "manifest.json"));
    REQUIRE_FALSE(fs::exists(dir / "out" / "records.csv"));
    REQUIRE_FALSE(fs::exists(dir / "out" / "records.json"));
    fs::remove_all(dir);
}

TEST_CASE("dead-feature experiment selects the complement of the dead axis", "[experiment][slow]") {
    fs::path dir = fresh_dir("ifv_dead_run");
    ExperimentConfig cfg;
    cfg.network.kind = NetworkSpec::Kind::toy_dead_feature;
    cfg.network.features = 4;
    cfg.network.hidden = {3};
    cfg.network.dead_feature = 2;
    cfg.network.input_h = cfg.network.input_w = 8;
    cfg.network.seed = 11;
    cfg.objective.k = 2;
    cfg.sampling.random = 5;
    cfg.sampling.canonical = 0;
    cfg.fv.adam_steps = 120;
    cfg.fv.lbfgs_steps = 25;
    cfg.critical.enabled = true;
    cfg.critical.cfg.sample_count = 5;
    cfg.reopt.enabled = false;
    cfg.output.dir = (dir / "out").string();
    cfg.seed = 99;

    ExperimentReport report = run_experiment(cfg);
    REQUIRE(report.failures == 0);
    REQUIRE(report.chosen.dim() == 3);
    std::vector<double> dead{0.0, 0.0, 1.0, 0.0};
    for (std::size_t c = 0; c < report.chosen.dim(); ++c)
        REQUIRE(std::abs(dot(report.chosen.basis.col(c), dead)) < 1e-8);
    fs::remove_all(dir);
}

TEST_CASE("experiment outputs are byte-reproducible and parseable", "[experiment][slow]") {
    fs::path dir = fresh_dir("ifv_repro_run");
    ExperimentConfig cfg;
    cfg.network.features = 4;
    cfg.network.hidden = {3};
    cfg.network.input_h = cfg.network.input_w = 8;
    cfg.objective.k = 2;
    cfg.sampling.random = 2;
    cfg.sampling.canonical = 2;
    cfg.fv.adam_steps = 50;
    cfg.fv.lbfgs_steps = 10;
    cfg.reopt.enabled = true;
    cfg.reopt.steps = 30;
    cfg.critical.enabled = true;
    cfg.critical.cfg.sample_count = 4;
    cfg.output.traces = true;
    cfg.output.save_realizations = true;
    cfg.seed = 4242;

    cfg.output.dir = (dir / "a").string();
    ExperimentReport ra = run_experiment(cfg);
    cfg.output.dir = (dir / "b").string();
    ExperimentReport rb = run_experiment(cfg);
    REQUIRE(ra.failures == 0);

    for (const char* name : {"records.csv", "records.json", "decomposition.json", "rho_scan.json",
                             "realizations/sample_000.json", "traces/sample_000.csv"}) {
        CAPTURE(name);
        REQUIRE(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    }

    // sanity of the emitted JSON: parse and check one field
    nlohmann::json records = nlohmann::json::parse(slurp(dir / "a" / "records.json"));
    REQUIRE(records.at("samples").size() == 4);
    REQUIRE(records.at("samples")[0].contains("prediction"));
    nlohmann::json manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    REQUIRE(manifest.at("seed").get<std::uint64_t>() == 4242);
    REQUIRE(manifest.at("config").at("objective").at("k").get<int>() == 2);

    // per-sample records carry both prediction routes
    REQUIRE(records.at("samples")[0].contains("prediction_full_space"));
    fs::remove_all(dir);
}

TEST_CASE("jacobians computed via the pipeline are schedule independent", "[experiment]") {
    // rows are independent backward passes; a two-thread split must be
    // bitwise identical to the serial result
    FeaturePipeline pipe;
    pipe.net = make_toy_conv(8, 8, 2, {3}, 4, 31);
    pipe.param = make_parametrization(ParamKind::rgb, 8, 8, 2);
    pipe.cfg = SignificanceConfig{2, Aggregation::maxpool_mean};
    Rng rng(67);
    Tensor v({pipe.param_count()});
    v.data = rng.gaussian_vector(pipe.param_count(), 0.3);

    JacobianMatrix serial = pipe.jacobian(v);
    JacobianMatrix threaded(serial.rows, serial.cols);
    parallel_for(serial.rows, [&](std::size_t f) {
        std::vector<double> cot(serial.rows, 0.0);
        cot[f] = 1.0;
        Tensor row = pipe.response_vjp(v, cot);
        std::copy(row.data.begin(), row.data.end(), threaded.data.begin() + f * serial.cols);
    });
    REQUIRE(serial.data == threaded.data);
}
