#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svib/metrics.hpp"
#include "svib/trainer.hpp"
#include "svib/verify.hpp"

namespace fs = std::filesystem;
using namespace svib;

namespace {

std::string runs_root(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("SVIB_RUNS_DIR"); env && *env) return env;
    return "runs";
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              std::int64_t seed, const std::string& variant, const std::string& runs_dir) {
    Json raw = load_config_file(config_path);
    for (const auto& s : sets) apply_override(raw, s);
    if (seed >= 0) raw["seed"] = static_cast<std::uint64_t>(seed);
    if (!variant.empty()) raw["variant"] = variant;
    RunConfig cfg = config_from_json(raw);
    RunResult res = train(cfg, runs_root(runs_dir));
    Json out;
    out["run_dir"] = res.run_dir;
    out["final_mean_return"] = res.final_mean_return;
    out["updates_to_09"] =
        res.updates_to_09 == static_cast<std::size_t>(-1) ? Json(nullptr) : Json(res.updates_to_09);
    out["mi_probes"] = res.mi_records.size();
    std::cout << out.dump(2) << std::endl;
    return 0;
}

int cmd_verify(std::uint64_t seed, std::size_t instances, std::size_t families,
               std::size_t stationarity, std::size_t mi_seeds, bool inject_fault,
               const std::string& out_path) {
    VerifyCounts counts;
    counts.theorem2_instances = instances;
    counts.theorem1_families = families;
    counts.stationarity_instances = stationarity;
    counts.mi_seeds = mi_seeds;
    counts.inject_fault = inject_fault;
    bool all_pass = false;
    Json report = verify_oracle(seed, counts, &all_pass);
    const std::string text = report.dump(2);
    std::cout << text << std::endl;
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) {
            std::cerr << "cannot write report: " << out_path << "\n";
            return 2;
        }
        out << text << '\n';
    }
    return all_pass ? 0 : 1;
}

int cmd_probe_mi(const std::string& pairs_path, std::size_t steps, std::size_t batch, double lr,
                 std::uint64_t seed) {
    Json j = load_config_file(pairs_path);
    PairBatch pool;
    pool.n = j.at("n").get<std::size_t>();
    pool.dx = j.at("dx").get<std::size_t>();
    pool.dz = j.at("dz").get<std::size_t>();
    pool.x = j.at("x").get<std::vector<double>>();
    pool.z = j.at("z").get<std::vector<double>>();
    if (pool.x.size() != pool.n * pool.dx || pool.z.size() != pool.n * pool.dz)
        throw ContractError("pair file arrays do not match n*dx / n*dz");
    ProbeConfig cfg;
    cfg.steps = steps;
    cfg.batch = batch;
    cfg.lr = lr;
    Rng rng(seed);
    StatisticsNet net(StatNetConfig{.obs_dim = pool.dx, .latent_dim = pool.dz, .hidden = {128}},
                      rng);
    MIRecord rec = train_probe(net, cfg, pool, rng);
    Json out;
    out["mi_nats"] = rec.estimate;
    out["probe_steps"] = rec.probe_steps;
    out["batch"] = rec.batch;
    std::cout << out.dump(2) << std::endl;
    return 0;
}

int cmd_plot(const std::vector<std::string>& run_dirs, const std::string& field,
             const std::string& record_type, double ema, const std::string& out_dir,
             bool svg) {
    fs::create_directories(out_dir);
    std::map<std::string, std::vector<PlotSeries>> by_variant;
    std::vector<PlotSeries> all;
    for (const auto& dir : run_dirs) {
        auto mf = read_metrics((fs::path(dir) / "metrics.jsonl").string());
        if (mf.truncated_tail)
            std::cerr << "warning: truncated final line in " << dir << "/metrics.jsonl\n";
        if (mf.records.empty()) throw ContractError("no metrics records in " + dir);
        const std::string variant = mf.records.front().variant;
        const std::string label = variant + "_seed" + std::to_string(mf.records.front().seed);
        PlotSeries s = extract_series(mf.records, record_type, field, label);
        if (ema > 0.0) s = ema_smooth(s, ema);
        {
            std::ofstream out(fs::path(out_dir) / (label + ".csv"));
            out << series_csv(s);
        }
        by_variant[variant].push_back(s);
        all.push_back(s);
    }
    for (auto& [variant, runs] : by_variant) {
        PlotSeries med = median_series(runs, variant + "_median");
        std::ofstream out(fs::path(out_dir) / (variant + "_median.csv"));
        out << series_csv(med);
        all.push_back(med);
    }
    if (svg) {
        std::ofstream out(fs::path(out_dir) / "plot.svg");
        out << series_svg(all);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"information-bottleneck actor-critic experiment harness"};
    app.require_subcommand(1);

    auto* train_cmd = app.add_subcommand("train", "run a training configuration");
    std::string config_path, train_variant, train_runs_dir;
    std::vector<std::string> sets;
    std::int64_t train_seed = -1;
    train_cmd->add_option("--config", config_path, "config JSON path")->required();
    train_cmd->add_option("--set", sets, "dotted-path override, e.g. svgd.beta=0.01");
    train_cmd->add_option("--seed", train_seed, "override config seed");
    train_cmd->add_option("--variant", train_variant, "override config variant");
    train_cmd->add_option("--runs-dir", train_runs_dir, "runs root (default $SVIB_RUNS_DIR or ./runs)");

    auto* verify_cmd = app.add_subcommand("verify-oracle", "exact theorem and MI sweeps");
    std::uint64_t verify_seed = 12345;
    std::size_t v_instances = 100, v_families = 50, v_stationarity = 20, v_mi_seeds = 5;
    bool v_fault = false;
    std::string verify_out;
    verify_cmd->add_option("--seed", verify_seed, "sweep seed");
    verify_cmd->add_option("--instances", v_instances, "theorem-2 instances per beta");
    verify_cmd->add_option("--families", v_families, "theorem-1 families");
    verify_cmd->add_option("--stationarity", v_stationarity, "stationarity instances");
    verify_cmd->add_option("--mi-seeds", v_mi_seeds, "seeds per closed-form MI probe");
    verify_cmd->add_flag("--inject-fault", v_fault, "use an off-by-beta target (must fail)");
    verify_cmd->add_option("--json", verify_out, "also write the report to this path");

    auto* probe_cmd = app.add_subcommand("probe-mi", "standalone MINE probe on a pair file");
    std::string pairs_path;
    std::size_t p_steps = 256, p_batch = 64;
    double p_lr = 0.0007;
    std::uint64_t p_seed = 0;
    probe_cmd->add_option("--pairs", pairs_path, "JSON file with n, dx, dz, x[], z[]")->required();
    probe_cmd->add_option("--steps", p_steps, "probe training steps");
    probe_cmd->add_option("--batch", p_batch, "probe batch size");
    probe_cmd->add_option("--lr", p_lr, "probe learning rate");
    probe_cmd->add_option("--seed", p_seed, "probe seed");

    auto* plot_cmd = app.add_subcommand("plot", "emit CSV (and SVG) series from run metrics");
    std::vector<std::string> run_dirs;
    std::string field = "mean_return", record_type = "train", plot_out = "plots";
    double ema = 0.0;
    bool svg = false;
    plot_cmd->add_option("--runs", run_dirs, "run directories")->required();
    plot_cmd->add_option("--field", field, "metrics field to plot");
    plot_cmd->add_option("--record-type", record_type, "train | mi_probe | eval");
    plot_cmd->add_option("--ema", ema, "exponential moving average factor in [0,1)");
    plot_cmd->add_option("--out", plot_out, "output directory");
    plot_cmd->add_flag("--svg", svg, "also write a simple SVG chart");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd)
            return cmd_train(config_path, sets, train_seed, train_variant, train_runs_dir);
        if (*verify_cmd)
            return cmd_verify(verify_seed, v_instances, v_families, v_stationarity, v_mi_seeds,
                              v_fault, verify_out);
        if (*probe_cmd) return cmd_probe_mi(pairs_path, p_steps, p_batch, p_lr, p_seed);
        if (*plot_cmd) return cmd_plot(run_dirs, field, record_type, ema, plot_out, svg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
