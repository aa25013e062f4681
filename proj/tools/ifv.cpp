// Experiment runner for feature visualization and its inversion.
//
// Subcommands:
//   run <config>                 full experiment per the TOML config
//   fv <config> --objective ...  one feature visualization run -> realization file
//   invert <realization>         predict the target objective of a realization
//   rho-scan <dir>               critical-space scan over saved realizations
//   report <dir>                 summarize an experiment output directory
//
// Exit codes: 0 success, 1 configuration/usage error, 2 more than 10% of
// samples failed. Worker threads via IFV_THREADS.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ifv/experiment.hpp"

namespace fs = std::filesystem;

namespace {

ifv::FeatureObjective parse_objective(const std::string& spec, std::size_t n_f) {
    if (spec.rfind("canonical:", 0) == 0) {
        std::size_t i = std::stoul(spec.substr(10));
        if (i >= n_f) throw std::runtime_error("objective index out of range (n_f = " +
                                               std::to_string(n_f) + ")");
        return ifv::FeatureObjective::canonical(n_f, i);
    }
    std::vector<double> v;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
    if (v.size() != n_f)
        throw std::runtime_error("objective has " + std::to_string(v.size()) +
                                 " components, network has " + std::to_string(n_f) + " features");
    return ifv::FeatureObjective::unit(std::move(v));
}

struct LoadedRealization {
    ifv::FeatureResponse y;
    ifv::JacobianMatrix jac;
    int k = 0;
};

LoadedRealization load_realization(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.value("format", "") != std::string("ifv-realization"))
        throw std::runtime_error(path + " is not an ifv-realization file");
    LoadedRealization r;
    r.y.y = doc.at("y").get<std::vector<double>>();
    r.k = doc.at("k").get<int>();
    const auto& j = doc.at("jacobian");
    r.jac = ifv::Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                        j.at("data").get<std::vector<double>>());
    return r;
}

ifv::SubspaceBasis load_space(const std::string& path, int want_dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.contains("basis")) return ifv::detail::basis_from_json(doc);
    if (doc.contains("chosen") && want_dim < 0)
        return ifv::detail::basis_from_json(doc.at("chosen"));
    if (doc.contains("intervals")) {
        for (const auto& iv : doc.at("intervals"))
            if (want_dim < 0 || iv.at("dim").get<int>() == want_dim)
                return ifv::detail::basis_from_json(iv.at("space"));
        throw std::runtime_error("no interval with dim " + std::to_string(want_dim) + " in " +
                                 path);
    }
    throw std::runtime_error(path + " holds neither a basis nor a rho-scan result");
}

int cmd_run(const std::string& config_path, const std::string& out_override) {
    ifv::ExperimentConfig cfg = ifv::load_experiment_config(config_path);
    if (!out_override.empty()) cfg.output.dir = out_override;
    std::string config_dir = fs::path(config_path).parent_path().string();
    if (config_dir.empty()) config_dir = ".";
    ifv::ExperimentReport report = ifv::run_experiment(cfg, config_dir);
    std::printf("wrote %s (%zu samples, %zu failures, critical dim %zu/%zu)\n",
                report.out_dir.string().c_str(), report.total, report.failures,
                report.chosen.dim(), report.n_f);
    if (report.total > 0 && report.failures * 10 > report.total) return 2;
    return 0;
}

int cmd_fv(const std::string& config_path, const std::string& objective_spec,
           const std::string& out_path) {
    ifv::ExperimentConfig cfg = ifv::load_experiment_config(config_path);
    std::string config_dir = fs::path(config_path).parent_path().string();
    if (config_dir.empty()) config_dir = ".";
    ifv::FeaturePipeline pipe = ifv::build_pipeline(cfg, config_dir);
    ifv::FeatureObjective x = parse_objective(objective_spec, pipe.feature_count());
    ifv::FvConfig fv = cfg.fv;
    fv.seed = ifv::stream_seed(cfg.seed, ifv::stream::fv_init, 0);
    ifv::Realization r = ifv::run_fv(pipe, x, fv);
    ifv::JacobianMatrix jac = pipe.jacobian(r.v_star);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    out << ifv::detail::realization_json(0, x, r, jac, cfg.objective.k).dump() << "\n";
    std::printf("S_x = %.6g, |grad| = %.3g, wrote %s\n", r.final_value, r.grad_norm_at_opt,
                out_path.c_str());
    return 0;
}

int cmd_invert(const std::string& realization_path, const std::string& space_path, int space_dim,
               const std::string& out_path) {
    LoadedRealization r = load_realization(realization_path);
    ifv::SubspaceBasis c = space_path.empty() ? ifv::SubspaceBasis::full(r.y.dim())
                                              : load_space(space_path, space_dim);
    ifv::Prediction p = ifv::predict_objective(r.y, r.jac, r.k, c);
    nlohmann::json doc = ifv::detail::prediction_json(p);
    doc["critical_dim"] = c.dim();
    std::string text = doc.dump(1) + "\n";
    if (out_path.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        std::ofstream out(out_path);
        out << text;
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_rho_scan(const std::string& dir, const std::string& out_path) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ifv::JacobianMatrix> jacs;
    for (const auto& f : files) {
        try {
            jacs.push_back(load_realization(f.string()).jac);
        } catch (const std::exception&) {
            // not a realization file; skip
        }
    }
    if (jacs.empty()) throw std::runtime_error("no realization files under " + dir);
    std::vector<ifv::RhoInterval> scan = ifv::rho_scan(jacs);
    nlohmann::json doc = ifv::detail::rho_scan_json(scan);
    doc["jacobians"] = jacs.size();
    std::string text = doc.dump(1) + "\n";
    if (out_path.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        std::ofstream out(out_path);
        out << text;
        std::printf("wrote %s (%zu intervals from %zu Jacobians)\n", out_path.c_str(),
                    scan.size(), jacs.size());
    }
    return 0;
}

double median_of(std::vector<double> v) {
    return v.empty() ? std::nan("") : ifv::median(std::move(v));
}

int cmd_report(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "records.json");
    if (!in) throw std::runtime_error("no records.json under " + dir);
    nlohmann::json doc = nlohmann::json::parse(in);
    const auto& samples = doc.at("samples");
    std::vector<double> a_true, a_proj, a_resp, s_true, s_pred, s_resp, s_rand;
    std::size_t failures = 0, stable = 0, with_ssim = 0;
    for (const auto& s : samples) {
        if (!s.value("error", std::string()).empty()) {
            ++failures;
            continue;
        }
        auto grab = [&](const char* key, std::vector<double>& sink) {
            if (s.contains(key)) sink.push_back(s.at(key).get<double>());
        };
        grab("angle_pred_true_deg", a_true);
        grab("angle_pred_proj_deg", a_proj);
        grab("angle_resp_true_deg", a_resp);
        grab("ssim_true", s_true);
        grab("ssim_pred", s_pred);
        grab("ssim_resp", s_resp);
        grab("ssim_rand", s_rand);
        if (s.contains("stable")) {
            ++with_ssim;
            if (s.at("stable").get<bool>()) ++stable;
        }
    }
    std::printf("samples: %zu (%zu failed)\n", samples.size(), failures);
    std::printf("median angular distance [deg]\n");
    std::printf("  prediction vs target     %8.3f\n", median_of(a_true));
    std::printf("  prediction vs projected  %8.3f\n", median_of(a_proj));
    std::printf("  response   vs target     %8.3f\n", median_of(a_resp));
    if (!s_true.empty()) {
        std::printf("median SSIM after re-optimization\n");
        std::printf("  w.r.t. target     %8.4f\n", median_of(s_true));
        std::printf("  w.r.t. prediction %8.4f\n", median_of(s_pred));
        std::printf("  w.r.t. response   %8.4f\n", median_of(s_resp));
        std::printf("  w.r.t. random     %8.4f\n", median_of(s_rand));
        std::printf("stable samples (SSIM >= 0.7): %zu/%zu\n", stable, with_ssim);
    }
    std::ifstream din(fs::path(dir) / "decomposition.json");
    if (din) {
        nlohmann::json ddoc = nlohmann::json::parse(din);
        std::printf("alpha:");
        for (const auto& a : ddoc.at("alpha")) std::printf(" %.4f", a.get<double>());
        std::printf("\n");
    }
    std::ifstream min(fs::path(dir) / "manifest.json");
    if (min) {
        nlohmann::json mdoc = nlohmann::json::parse(min);
        std::printf("critical space dim: %zu/%zu\n",
                    mdoc.value("chosen_critical_dim", std::size_t{0}),
                    mdoc.value("n_f", std::size_t{0}));
        if (mdoc.contains("stage_wall_ms")) {
            std::printf("stage wall times [ms]:");
            for (const auto& [name, ms] : mdoc.at("stage_wall_ms").items())
                std::printf(" %s=%.0f", name.c_str(), ms.get<double>());
            std::printf("\n");
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"feature visualization and gradient-based inversion"};
    app.require_subcommand(1);

    std::string config_path, out_dir, objective_spec, out_path, space_path, input_dir;
    int space_dim = -1;

    auto* run = app.add_subcommand("run", "run a full experiment from a TOML config");
    run->add_option("config", config_path, "experiment config file")->required();
    run->add_option("--out", out_dir, "override the output directory");

    auto* fv = app.add_subcommand("fv", "run feature visualization for one objective");
    fv->add_option("config", config_path, "experiment config file")->required();
    fv->add_option("--objective", objective_spec,
                   "target objective: 'canonical:i' or comma-separated components")
        ->required();
    fv->add_option("--out", out_path, "realization output file")->default_val("realization.json");

    auto* invert = app.add_subcommand("invert", "predict the objective of a saved realization");
    invert->add_option("realization", config_path, "realization JSON file")->required();
    invert->add_option("--critical-space", space_path,
                       "basis or rho-scan JSON restricting the solve");
    invert->add_option("--critical-dim", space_dim,
                       "pick the rho-scan interval with this critical dimension");
    invert->add_option("--out", out_path, "prediction output file (default: stdout)");

    auto* scan = app.add_subcommand("rho-scan", "scan rho over saved realizations");
    scan->add_option("dir", input_dir, "directory of realization JSON files")->required();
    scan->add_option("--out", out_path, "scan output file (default: stdout)");

    auto* rep = app.add_subcommand("report", "summarize an experiment output directory");
    rep->add_option("dir", input_dir, "experiment output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir);
        if (fv->parsed()) return cmd_fv(config_path, objective_spec, out_path);
        if (invert->parsed()) return cmd_invert(config_path, space_path, space_dim, out_path);
        if (scan->parsed()) return cmd_rho_scan(input_dir, out_path);
        if (rep->parsed()) return cmd_report(input_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
