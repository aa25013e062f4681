#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ifv/critical_space.hpp"
#include "ifv/fv.hpp"
#include "ifv/metrics.hpp"
#include "ifv/minitoml.hpp"
#include "ifv/network_io.hpp"
#include "ifv/pipeline.hpp"
#include "ifv/sampling.hpp"
#include "ifv/solver.hpp"
#include "ifv/toynets.hpp"

namespace ifv {

inline constexpr const char* kVersion = "0.1.0";

struct NetworkSpec {
    enum class Kind { toy_conv, toy_softmax, toy_dead_feature, file };
    Kind kind = Kind::toy_conv;
    std::string file;
    std::size_t features = 8;
    std::vector<std::size_t> hidden = {4};
    std::size_t conv_channels = 4;  // softmax trunk width
    std::size_t dead_feature = 0;
    std::uint64_t seed = 1;
    std::size_t input_h = 16, input_w = 16, input_c = 3;
};

struct SamplingSpec {
    std::size_t random = 32;
    std::size_t canonical = 8;
};

struct CriticalStageSpec {
    bool enabled = false;
    CriticalSpaceConfig cfg;   // rho used when select == false
    bool select = true;        // pick the best candidate on the known targets
};

struct ReoptSpec {
    bool enabled = true;
    std::size_t steps = 500;
};

struct OutputSpec {
    std::string dir = "out";
    bool traces = false;
    bool save_realizations = false;
};

struct ExperimentConfig {
    NetworkSpec network;
    ParamKind param_kind = ParamKind::rgb;
    SignificanceConfig objective;
    SamplingSpec sampling;
    FvConfig fv;
    CriticalStageSpec critical;
    ReoptSpec reopt;
    OutputSpec output;
    std::uint64_t seed = 12345;
};

// ---- config parsing ----

inline ExperimentConfig load_experiment_config(const std::string& path) {
    minitoml::Document doc = minitoml::parse_file(path);
    ExperimentConfig cfg;

    if (doc.has("network")) {
        const auto& t = doc.section("network");
        std::string kind = minitoml::get_string(t, "kind", "toy_conv");
        if (kind == "toy_conv")
            cfg.network.kind = NetworkSpec::Kind::toy_conv;
        else if (kind == "toy_softmax")
            cfg.network.kind = NetworkSpec::Kind::toy_softmax;
        else if (kind == "toy_dead_feature")
            cfg.network.kind = NetworkSpec::Kind::toy_dead_feature;
        else if (kind == "file")
            cfg.network.kind = NetworkSpec::Kind::file;
        else
            throw std::runtime_error("config: unknown network.kind '" + kind + "'");
        cfg.network.file = minitoml::get_string(t, "file", "");
        cfg.network.features =
            static_cast<std::size_t>(minitoml::get_int(t, "features", 8));
        if (t.count("hidden")) {
            cfg.network.hidden.clear();
            for (const auto& v : t.at("hidden").as_array())
                cfg.network.hidden.push_back(static_cast<std::size_t>(v.as_int()));
        }
        cfg.network.conv_channels =
            static_cast<std::size_t>(minitoml::get_int(t, "conv_channels", 4));
        cfg.network.dead_feature =
            static_cast<std::size_t>(minitoml::get_int(t, "dead_feature", 0));
        cfg.network.seed = static_cast<std::uint64_t>(minitoml::get_int(t, "seed", 1));
        if (t.count("input")) {
            const auto& arr = t.at("input").as_array();
            if (arr.size() != 3) throw std::runtime_error("config: network.input must be [H, W, C]");
            cfg.network.input_h = static_cast<std::size_t>(arr[0].as_int());
            cfg.network.input_w = static_cast<std::size_t>(arr[1].as_int());
            cfg.network.input_c = static_cast<std::size_t>(arr[2].as_int());
        }
    }

    if (doc.has("parametrization")) {
        std::string kind = minitoml::get_string(doc.section("parametrization"), "kind", "rgb");
        if (kind == "rgb")
            cfg.param_kind = ParamKind::rgb;
        else if (kind == "fft")
            cfg.param_kind = ParamKind::fft;
        else if (kind == "ffte")
            cfg.param_kind = ParamKind::ffte;
        else
            throw std::runtime_error("config: unknown parametrization.kind '" + kind + "'");
    }

    if (doc.has("objective")) {
        const auto& t = doc.section("objective");
        cfg.objective.k = static_cast<int>(minitoml::get_int(t, "k", 2));
        if (cfg.objective.k < 0) throw std::runtime_error("config: objective.k must be >= 0");
        std::string agg = minitoml::get_string(t, "aggregation", "maxpool_mean");
        if (agg == "maxpool_mean")
            cfg.objective.aggregation = Aggregation::maxpool_mean;
        else if (agg == "mean")
            cfg.objective.aggregation = Aggregation::mean;
        else if (agg == "pick_center")
            cfg.objective.aggregation = Aggregation::pick_center;
        else
            throw std::runtime_error("config: unknown objective.aggregation '" + agg + "'");
    }

    if (doc.has("sampling")) {
        const auto& t = doc.section("sampling");
        cfg.sampling.random = static_cast<std::size_t>(minitoml::get_int(t, "random", 32));
        cfg.sampling.canonical = static_cast<std::size_t>(minitoml::get_int(t, "canonical", 8));
    }

    if (doc.has("fv")) {
        const auto& t = doc.section("fv");
        cfg.fv.adam_steps = static_cast<std::size_t>(minitoml::get_int(t, "adam_steps", 800));
        cfg.fv.adam.lr = minitoml::get_float(t, "adam_lr", 0.05);
        cfg.fv.adam.beta1 = minitoml::get_float(t, "adam_beta1", 0.9);
        cfg.fv.adam.beta2 = minitoml::get_float(t, "adam_beta2", 0.999);
        cfg.fv.adam.eps = minitoml::get_float(t, "adam_eps", 1e-8);
        cfg.fv.lbfgs_steps = static_cast<std::size_t>(minitoml::get_int(t, "lbfgs_steps", 300));
        cfg.fv.lbfgs_history = static_cast<std::size_t>(minitoml::get_int(t, "lbfgs_history", 10));
        cfg.fv.init_scale = minitoml::get_float(t, "init_scale", 0.01);
        if (cfg.fv.adam.lr <= 0.0) throw std::runtime_error("config: fv.adam_lr must be positive");
    }

    if (doc.has("critical_space")) {
        const auto& t = doc.section("critical_space");
        cfg.critical.enabled = minitoml::get_bool(t, "enabled", true);
        cfg.critical.cfg.rho = minitoml::get_float(t, "rho", 0.01);
        cfg.critical.cfg.sample_count =
            static_cast<std::size_t>(minitoml::get_int(t, "samples", 32));
        cfg.critical.select = minitoml::get_bool(t, "select", true);
        if (cfg.critical.enabled &&
            !(cfg.critical.cfg.rho > 0.0 && cfg.critical.cfg.rho < 1.0))
            throw std::runtime_error("config: critical_space.rho must lie in (0,1)");
    }

    if (doc.has("reoptimize")) {
        const auto& t = doc.section("reoptimize");
        cfg.reopt.enabled = minitoml::get_bool(t, "enabled", true);
        cfg.reopt.steps = static_cast<std::size_t>(minitoml::get_int(t, "steps", 500));
    }

    if (doc.has("output")) {
        const auto& t = doc.section("output");
        cfg.output.dir = minitoml::get_string(t, "dir", "out");
        cfg.output.traces = minitoml::get_bool(t, "traces", false);
        cfg.output.save_realizations = minitoml::get_bool(t, "save_realizations", false);
    }

    if (doc.has("experiment")) {
        cfg.seed = static_cast<std::uint64_t>(
            minitoml::get_int(doc.section("experiment"), "seed", 12345));
    }
    return cfg;
}

inline Network build_network(const NetworkSpec& spec, const std::string& config_dir = ".") {
    switch (spec.kind) {
        case NetworkSpec::Kind::toy_conv:
            return make_toy_conv(spec.input_h, spec.input_w, spec.input_c, spec.hidden,
                                 spec.features, spec.seed);
        case NetworkSpec::Kind::toy_softmax:
            return make_toy_softmax_head(spec.input_h, spec.input_w, spec.input_c, spec.conv_channels,
                                    spec.features, spec.seed);
        case NetworkSpec::Kind::toy_dead_feature:
            return make_toy_dead_feature(spec.input_h, spec.input_w, spec.input_c, spec.hidden,
                                         spec.features, spec.dead_feature, spec.seed);
        case NetworkSpec::Kind::file: {
            std::filesystem::path p(spec.file);
            if (p.is_relative()) p = std::filesystem::path(config_dir) / p;
            return load_network(p.string());
        }
    }
    throw std::logic_error("build_network: unknown kind");
}

inline FeaturePipeline build_pipeline(const ExperimentConfig& cfg,
                                      const std::string& config_dir = ".") {
    FeaturePipeline pipe;
    pipe.net = build_network(cfg.network, config_dir);
    if (pipe.net.input_shape.size() != 3)
        throw std::runtime_error("build_pipeline: network input must be rank-3");
    pipe.param = make_parametrization(cfg.param_kind, pipe.net.input_shape[0],
                                      pipe.net.input_shape[1], pipe.net.input_shape[2]);
    pipe.cfg = cfg.objective;
    return pipe;
}

// ---- per-sample outputs ----

struct SampleRecord {
    std::size_t index = 0;
    std::string kind;   // "random" | "canonical"
    std::string error;  // empty on success
    std::vector<double> x_true, x_hat, y;
    double fv_value = 0.0, fv_grad_norm = 0.0;
    double angle_pred_true = std::nan(""), angle_pred_proj = std::nan("");
    double angle_resp_true = std::nan("");
    double ssim_true = std::nan(""), ssim_pred = std::nan(""), ssim_resp = std::nan(""),
           ssim_rand = std::nan("");
    bool stable = false;
    double out_of_c_frac = std::nan("");
    bool projection_failed = false;
    bool line_search_warning = false;
    std::optional<Prediction> pred_chosen, pred_full;
    std::optional<Decomposition> decomp;
};

struct ExperimentReport {
    std::size_t n_f = 0, n_p = 0;
    std::size_t total = 0, failures = 0;
    std::vector<SampleRecord> records;
    std::vector<double> alpha;
    SubspaceBasis chosen;
    std::vector<RhoInterval> scan;
    std::map<std::string, double> stage_wall_ms;
    std::filesystem::path out_dir;
};

// Candidate selection: median angular distance between the prediction and the
// projected known target, per candidate; ties prefer the larger critical
// space (the lower-dimensional complement).
struct LabeledSample {
    FeatureObjective x_true;
    FeatureResponse y;
    const JacobianMatrix* jac = nullptr;
};

inline SubspaceBasis select_critical_space(const std::vector<SubspaceBasis>& candidates,
                                           const std::vector<LabeledSample>& validation, int k) {
    if (candidates.empty()) throw std::invalid_argument("select_critical_space: no candidates");
    std::size_t best = 0;
    double best_median = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        const SubspaceBasis& c = candidates[ci];
        if (c.dim() == 0) continue;
        std::vector<double> dists;
        dists.reserve(validation.size());
        for (const auto& s : validation) {
            try {
                Prediction p = predict_objective(s.y, *s.jac, k, c);
                FeatureObjective proj = project_objective(s.x_true, s.y, k, c);
                dists.push_back(angular_distance(p.x_hat, proj));
            } catch (const std::exception&) {
                dists.push_back(90.0);
            }
        }
        if (dists.empty()) continue;
        double med = median(dists);
        bool better = med < best_median - 1e-12;
        bool tie = std::abs(med - best_median) <= 1e-12 &&
                   c.dim() > candidates[best].dim();
        if (better || tie) {
            best = ci;
            best_median = med;
        }
    }
    return candidates[best];
}

// ---- parallel helper ----

inline std::size_t worker_count() {
    if (const char* env = std::getenv("IFV_THREADS")) {
        long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<std::size_t>(n);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

// Runs fn(0..n-1) on a bounded pool. Work items must not share mutable state;
// outputs go into per-index slots, so results do not depend on the schedule.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---- serialization helpers ----

namespace detail {

inline nlohmann::json prediction_json(const Prediction& p) {
    return {{"x_hat", p.x_hat.x},
            {"sigma", p.sigma},
            {"singular_values", p.singular_values},
            {"smallest_singular_value", p.smallest_singular_value},
            {"degenerate", p.degenerate},
            {"multiple_minima", p.multiple_minima}};
}

inline nlohmann::json basis_json(const SubspaceBasis& b) {
    return {{"ambient_dim", b.ambient_dim},
            {"dim", b.dim()},
            {"degenerate", b.degenerate},
            {"basis", b.basis.data}};
}

inline SubspaceBasis basis_from_json(const nlohmann::json& j) {
    SubspaceBasis b;
    b.ambient_dim = j.at("ambient_dim").get<std::size_t>();
    std::size_t dim = j.at("dim").get<std::size_t>();
    b.degenerate = j.value("degenerate", false);
    b.basis = Matrix(b.ambient_dim, dim, j.at("basis").get<std::vector<double>>());
    return b;
}

inline nlohmann::json rho_scan_json(const std::vector<RhoInterval>& scan) {
    nlohmann::json intervals = nlohmann::json::array();
    for (const auto& iv : scan)
        intervals.push_back({{"rho_lo", iv.lo},
                             {"rho_hi", iv.hi},
                             {"dim", iv.dim},
                             {"space", basis_json(iv.space)}});
    return {{"intervals", intervals}};
}

inline nlohmann::json config_json(const ExperimentConfig& cfg) {
    const char* net_kind = nullptr;
    switch (cfg.network.kind) {
        case NetworkSpec::Kind::toy_conv: net_kind = "toy_conv"; break;
        case NetworkSpec::Kind::toy_softmax: net_kind = "toy_softmax"; break;
        case NetworkSpec::Kind::toy_dead_feature: net_kind = "toy_dead_feature"; break;
        case NetworkSpec::Kind::file: net_kind = "file"; break;
    }
    return {
        {"network",
         {{"kind", net_kind},
          {"file", cfg.network.file},
          {"features", cfg.network.features},
          {"hidden", cfg.network.hidden},
          {"conv_channels", cfg.network.conv_channels},
          {"dead_feature", cfg.network.dead_feature},
          {"seed", cfg.network.seed},
          {"input", {cfg.network.input_h, cfg.network.input_w, cfg.network.input_c}}}},
        {"parametrization", param_kind_name(cfg.param_kind)},
        {"objective",
         {{"k", cfg.objective.k}, {"aggregation", aggregation_name(cfg.objective.aggregation)}}},
        {"sampling", {{"random", cfg.sampling.random}, {"canonical", cfg.sampling.canonical}}},
        {"fv",
         {{"adam_steps", cfg.fv.adam_steps},
          {"adam_lr", cfg.fv.adam.lr},
          {"adam_beta1", cfg.fv.adam.beta1},
          {"adam_beta2", cfg.fv.adam.beta2},
          {"adam_eps", cfg.fv.adam.eps},
          {"lbfgs_steps", cfg.fv.lbfgs_steps},
          {"lbfgs_history", cfg.fv.lbfgs_history},
          {"init_scale", cfg.fv.init_scale}}},
        {"critical_space",
         {{"enabled", cfg.critical.enabled},
          {"rho", cfg.critical.cfg.rho},
          {"samples", cfg.critical.cfg.sample_count},
          {"select", cfg.critical.select}}},
        {"reoptimize", {{"enabled", cfg.reopt.enabled}, {"steps", cfg.reopt.steps}}},
        {"output",
         {{"dir", cfg.output.dir},
          {"traces", cfg.output.traces},
          {"save_realizations", cfg.output.save_realizations}}},
        {"seed", cfg.seed}};
}

inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline nlohmann::json realization_json(std::size_t index, const FeatureObjective& x_true,
                                       const Realization& r, const JacobianMatrix& jac, int k) {
    return {{"format", "ifv-realization"},
            {"index", index},
            {"k", k},
            {"x_true", x_true.x},
            {"v_star", r.v_star.data},
            {"image_shape", r.image.shape},
            {"image", r.image.data},
            {"y", r.y.y},
            {"value", r.final_value},
            {"grad_norm", r.grad_norm_at_opt},
            {"jacobian", {{"rows", jac.rows}, {"cols", jac.cols}, {"data", jac.data}}}};
}

}  // namespace detail

// ---- the experiment pipeline ----

namespace detail {

struct SampleWork {
    FeatureObjective x_true;
    std::string kind;
    std::string error;
    std::optional<Realization> realization;
    std::optional<JacobianMatrix> jac;
    std::optional<FeatureResponse> y;
};

class StageTimer {
public:
    explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}
    template <typename Fn>
    void run(const std::string& name, Fn&& fn) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        sink_[name] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }

private:
    std::map<std::string, double>& sink_;
};

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                       const std::string& config_dir = ".") {
    namespace fs = std::filesystem;
    ExperimentReport report;
    detail::StageTimer timer(report.stage_wall_ms);

    FeaturePipeline pipe = build_pipeline(cfg, config_dir);
    const std::size_t n_f = pipe.feature_count();
    const int k = cfg.objective.k;
    report.n_f = n_f;
    report.n_p = pipe.param_count();
    report.out_dir = fs::path(cfg.output.dir);
    fs::create_directories(report.out_dir);

    const std::size_t n_random = cfg.sampling.random;
    const std::size_t n_total = n_random + cfg.sampling.canonical;
    report.total = n_total;
    report.chosen = SubspaceBasis::full(n_f);

    std::vector<detail::SampleWork> work(n_total);

    timer.run("sample_targets", [&] {
        for (std::size_t i = 0; i < n_total; ++i) {
            if (i < n_random) {
                Rng rng(stream_seed(cfg.seed, stream::targets, i));
                work[i].x_true = sample_objective(n_f, rng);
                work[i].kind = "random";
            } else {
                work[i].x_true = FeatureObjective::canonical(n_f, (i - n_random) % n_f);
                work[i].kind = "canonical";
            }
        }
    });

    timer.run("fv", [&] {
        parallel_for(n_total, [&](std::size_t i) {
            try {
                FvConfig fv = cfg.fv;
                fv.seed = stream_seed(cfg.seed, stream::fv_init, i);
                Realization r = run_fv(pipe, work[i].x_true, fv);
                JacobianMatrix jac = pipe.jacobian(r.v_star);
                work[i].y = r.y;
                work[i].realization = std::move(r);
                work[i].jac = std::move(jac);
            } catch (const std::exception& e) {
                work[i].error = e.what();
            }
        });
    });

    // critical-space estimation on the first sample_count usable Jacobians
    std::vector<SubspaceBasis> candidates{SubspaceBasis::full(n_f)};
    if (cfg.critical.enabled && n_total > 0) {
        timer.run("critical_space", [&] {
            std::vector<JacobianMatrix> jacs;
            for (const auto& w : work) {
                if (!w.jac) continue;
                jacs.push_back(*w.jac);
                if (jacs.size() >= cfg.critical.cfg.sample_count) break;
            }
            if (jacs.empty()) return;
            report.scan = rho_scan(jacs);
            for (const auto& iv : report.scan) {
                if (iv.dim == 0 || iv.dim == n_f) continue;
                candidates.push_back(iv.space);
            }
            if (cfg.critical.select) {
                std::vector<LabeledSample> validation;
                for (const auto& w : work)
                    if (w.jac && w.y) validation.push_back({w.x_true, *w.y, &*w.jac});
                report.chosen = select_critical_space(candidates, validation, k);
            } else {
                report.chosen = critical_space(jacs, cfg.critical.cfg.rho);
                if (report.chosen.dim() == 0) report.chosen = SubspaceBasis::full(n_f);
            }
        });
    }

    const SubspaceBasis full = SubspaceBasis::full(n_f);
    const SubspaceBasis& chosen = report.chosen;
    report.records.assign(n_total, {});

    timer.run("predict", [&] {
        parallel_for(n_total, [&](std::size_t i) {
            SampleRecord& rec = report.records[i];
            rec.index = i;
            rec.kind = work[i].kind;
            rec.x_true = work[i].x_true.x;
            rec.error = work[i].error;
            if (!work[i].realization) return;
            const Realization& real = *work[i].realization;
            rec.y = real.y.y;
            rec.fv_value = real.final_value;
            rec.fv_grad_norm = real.grad_norm_at_opt;
            rec.line_search_warning = real.line_search_warning;
            try {
                rec.pred_full = predict_objective(real.y, *work[i].jac, k, full);
                rec.pred_chosen = chosen.dim() == n_f
                                      ? rec.pred_full
                                      : predict_objective(real.y, *work[i].jac, k, chosen);
                rec.x_hat = rec.pred_chosen->x_hat.x;
                rec.angle_pred_true = angular_distance(rec.pred_chosen->x_hat, work[i].x_true);
                rec.angle_resp_true =
                    angular_distance(FeatureObjective::unit(real.y.y), work[i].x_true);
                rec.out_of_c_frac =
                    out_of_space_fraction(work[i].x_true, rec.pred_chosen->substitution_u);
                try {
                    FeatureObjective proj = project_objective(work[i].x_true, real.y, k, chosen);
                    rec.angle_pred_proj = angular_distance(rec.pred_chosen->x_hat, proj);
                } catch (const std::exception&) {
                    rec.projection_failed = true;
                }
                rec.decomp = decompose(work[i].x_true, real.y, *work[i].jac, k);
            } catch (const std::exception& e) {
                rec.error = e.what();
                work[i].realization.reset();
            }
        });
    });

    if (cfg.reopt.enabled) {
        timer.run("reoptimize", [&] {
            parallel_for(n_total, [&](std::size_t i) {
                SampleRecord& rec = report.records[i];
                if (!work[i].realization || !rec.pred_chosen) return;
                const Realization& real = *work[i].realization;
                try {
                    Rng rng(stream_seed(cfg.seed, stream::reopt, i));
                    FeatureObjective x_rand{rng.unit_vector(n_f)};
                    auto run = [&](const FeatureObjective& x) {
                        ReoptResult r = reoptimize(pipe, real, x, cfg.reopt.steps, cfg.fv.adam);
                        return ssim(r.image_before, r.image_after);
                    };
                    rec.ssim_true = run(work[i].x_true);
                    rec.ssim_pred = run(rec.pred_chosen->x_hat);
                    rec.ssim_resp = run(FeatureObjective::unit(real.y.y));
                    rec.ssim_rand = run(x_rand);
                    rec.stable = rec.ssim_true >= 0.7;
                } catch (const std::exception& e) {
                    rec.error = e.what();
                }
            });
        });
    }

    std::vector<Decomposition> decomp_rows;
    for (const auto& rec : report.records) {
        if (rec.decomp) decomp_rows.push_back(*rec.decomp);
        if (!rec.error.empty()) ++report.failures;
    }
    report.alpha = alpha_coefficients(decomp_rows);

    timer.run("write", [&] {
        if (n_total == 0) return;  // manifest only
        // records.csv
        {
            std::ofstream csv(report.out_dir / "records.csv");
            csv << "index,kind,error,fv_value,fv_grad_norm,angle_pred_true_deg,"
                   "angle_pred_proj_deg,angle_resp_true_deg,ssim_true,ssim_pred,ssim_resp,"
                   "ssim_rand,stable,out_of_c_frac,line_search_warning";
            for (std::size_t f = 0; f < n_f; ++f) csv << ",x_true_" << f;
            for (std::size_t f = 0; f < n_f; ++f) csv << ",x_hat_" << f;
            for (std::size_t f = 0; f < n_f; ++f) csv << ",y_" << f;
            csv << "\n";
            for (const auto& rec : report.records) {
                csv << rec.index << "," << rec.kind << "," << rec.error << ","
                    << detail::fmt_double(rec.fv_value) << ","
                    << detail::fmt_double(rec.fv_grad_norm) << ","
                    << detail::fmt_double(rec.angle_pred_true) << ","
                    << detail::fmt_double(rec.angle_pred_proj) << ","
                    << detail::fmt_double(rec.angle_resp_true) << ","
                    << detail::fmt_double(rec.ssim_true) << ","
                    << detail::fmt_double(rec.ssim_pred) << ","
                    << detail::fmt_double(rec.ssim_resp) << ","
                    << detail::fmt_double(rec.ssim_rand) << "," << (rec.stable ? 1 : 0) << ","
                    << detail::fmt_double(rec.out_of_c_frac) << ","
                    << (rec.line_search_warning ? 1 : 0);
                auto emit_vec = [&](const std::vector<double>& v) {
                    for (std::size_t f = 0; f < n_f; ++f)
                        csv << "," << (f < v.size() ? detail::fmt_double(v[f]) : "");
                };
                emit_vec(rec.x_true);
                emit_vec(rec.x_hat);
                emit_vec(rec.y);
                csv << "\n";
            }
        }
        // records.json
        {
            nlohmann::json samples = nlohmann::json::array();
            for (const auto& rec : report.records) {
                nlohmann::json j{{"index", rec.index},
                                 {"kind", rec.kind},
                                 {"error", rec.error},
                                 {"x_true", rec.x_true}};
                if (!rec.x_hat.empty()) j["x_hat"] = rec.x_hat;
                if (!rec.y.empty()) j["y"] = rec.y;
                if (rec.error.empty()) {
                    j["fv_value"] = rec.fv_value;
                    j["fv_grad_norm"] = rec.fv_grad_norm;
                    j["line_search_warning"] = rec.line_search_warning;
                }
                auto put = [&](const char* key, double v) {
                    if (!std::isnan(v)) j[key] = v;
                };
                put("angle_pred_true_deg", rec.angle_pred_true);
                put("angle_pred_proj_deg", rec.angle_pred_proj);
                put("angle_resp_true_deg", rec.angle_resp_true);
                put("ssim_true", rec.ssim_true);
                put("ssim_pred", rec.ssim_pred);
                put("ssim_resp", rec.ssim_resp);
                put("ssim_rand", rec.ssim_rand);
                put("out_of_c_frac", rec.out_of_c_frac);
                if (!std::isnan(rec.ssim_true)) j["stable"] = rec.stable;
                if (rec.projection_failed) j["projection_failed"] = true;
                if (rec.pred_chosen) j["prediction"] = detail::prediction_json(*rec.pred_chosen);
                if (rec.pred_full) j["prediction_full_space"] = detail::prediction_json(*rec.pred_full);
                if (rec.decomp)
                    j["decomposition"] = {{"coefficients", rec.decomp->coefficients},
                                          {"quad_proxy_deg", rec.decomp->quad_proxy_deg}};
                samples.push_back(std::move(j));
            }
            nlohmann::json doc{{"samples", samples}};
            std::ofstream out(report.out_dir / "records.json");
            out << doc.dump(1) << "\n";
        }
        // decomposition.json
        {
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& rec : report.records)
                if (rec.decomp) rows.push_back(rec.decomp->coefficients);
            nlohmann::json doc{{"alpha", report.alpha}, {"coefficients", rows}};
            std::ofstream out(report.out_dir / "decomposition.json");
            out << doc.dump(1) << "\n";
        }
        // critical space artifacts
        if (cfg.critical.enabled) {
            nlohmann::json doc = detail::rho_scan_json(report.scan);
            doc["chosen"] = detail::basis_json(report.chosen);
            std::ofstream out(report.out_dir / "rho_scan.json");
            out << doc.dump(1) << "\n";
        }
        if (cfg.output.save_realizations) {
            fs::create_directories(report.out_dir / "realizations");
            for (std::size_t i = 0; i < n_total; ++i) {
                if (!work[i].realization) continue;
                char name[32];
                std::snprintf(name, sizeof(name), "sample_%03zu.json", i);
                std::ofstream out(report.out_dir / "realizations" / name);
                out << detail::realization_json(i, work[i].x_true, *work[i].realization,
                                                *work[i].jac, k)
                           .dump()
                    << "\n";
            }
        }
        if (cfg.output.traces) {
            fs::create_directories(report.out_dir / "traces");
            for (std::size_t i = 0; i < n_total; ++i) {
                if (!work[i].realization) continue;
                char name[32];
                std::snprintf(name, sizeof(name), "sample_%03zu.csv", i);
                std::ofstream out(report.out_dir / "traces" / name);
                out << "phase,step,value\n";
                const Realization& r = *work[i].realization;
                for (std::size_t s = 0; s < r.adam_trace.size(); ++s)
                    out << "adam," << s << "," << detail::fmt_double(r.adam_trace[s]) << "\n";
                for (std::size_t s = 0; s < r.lbfgs_trace.size(); ++s)
                    out << "lbfgs," << s << "," << detail::fmt_double(r.lbfgs_trace[s]) << "\n";
            }
        }
    });

    // manifest last: includes the wall times of every other stage. Timings are
    // the one non-reproducible output, so determinism checks skip this file.
    {
        nlohmann::json seeds;
        std::vector<std::uint64_t> target_seeds, fv_seeds, reopt_seeds;
        for (std::size_t i = 0; i < n_total; ++i) {
            target_seeds.push_back(stream_seed(cfg.seed, stream::targets, i));
            fv_seeds.push_back(stream_seed(cfg.seed, stream::fv_init, i));
            reopt_seeds.push_back(stream_seed(cfg.seed, stream::reopt, i));
        }
        nlohmann::json doc{
            {"tool", "ifv"},
            {"version", kVersion},
            {"seed", cfg.seed},
            {"n_f", report.n_f},
            {"n_p", report.n_p},
            {"samples", {{"total", report.total}, {"failures", report.failures}}},
            {"threads", worker_count()},
            {"config", detail::config_json(cfg)},
            {"stage_wall_ms", report.stage_wall_ms},
            {"chosen_critical_dim", report.chosen.dim()},
            {"sample_seeds",
             {{"targets", target_seeds}, {"fv", fv_seeds}, {"reoptimize", reopt_seeds}}}};
        if (cfg.critical.enabled) {
            nlohmann::json cands = nlohmann::json::array();
            for (const auto& iv : report.scan)
                cands.push_back({{"dim", iv.dim}, {"rho_lo", iv.lo}, {"rho_hi", iv.hi}});
            doc["candidates"] = cands;
        }
        std::ofstream out(report.out_dir / "manifest.json");
        out << doc.dump(1) << "\n";
    }

    return report;
}

}  // namespace ifv
