#include "htdsm/cli.hpp"

#include "htdsm/distributions.hpp"
#include "htdsm/experiments.hpp"
#include "htdsm/io.hpp"
#include "htdsm/metrics.hpp"
#include "htdsm/sampler.hpp"
#include "htdsm/schedule.hpp"
#include "htdsm/scorenet.hpp"
#include "htdsm/selftest.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace htdsm {

namespace {

/// Raised for malformed configs or inconsistent flags; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Global {
    std::uint64_t seed = 0;
    std::string out;
    std::string config;
    bool verbose = false;
};

Json load_config(const std::string& path) {
    if (path.empty()) {
        return Json::object();
    }
    return read_json(path);
}

void emit_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::filesystem::create_directories(p.parent_path());
    }
    std::ofstream f(p, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    f << text;
}

std::vector<double> parse_levels(const std::string& csv) {
    std::vector<double> levels;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            levels.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError("bad schedule level '" + item + "'");
        }
    }
    return levels;
}

// ----------------------------- schedule -----------------------------

struct ScheduleArgs {
    double beta = 2.0;
    std::size_t dim = 2;
    double delta = 0.9;
    double sigma_min = 0.01;
    double sigma_max = 1.0;
    bool empirical = false;
    std::size_t mc_count = 100000;
};

void add_schedule(CLI::App& app, ScheduleArgs& a) {
    auto* sc = app.add_subcommand("schedule", "Quantile-matched noise schedule as JSON");
    sc->add_option("--beta", a.beta, "Noise shape")->capture_default_str();
    sc->add_option("--dim", a.dim, "Data dimension n")->capture_default_str();
    sc->add_option("--delta", a.delta, "Central mass of each level's norm distribution")
        ->capture_default_str();
    sc->add_option("--sigma-min", a.sigma_min, "Smallest level")->capture_default_str();
    sc->add_option("--sigma-max", a.sigma_max, "Largest level (clamped)")->capture_default_str();
    sc->add_flag("--empirical", a.empirical, "Use Monte-Carlo norm quantiles");
    sc->add_option("--mc-count", a.mc_count, "Draws for --empirical")->capture_default_str();
}

int run_schedule(const ScheduleArgs& a, const Global& g, std::ostream& out) {
    std::optional<EmpiricalQuantileOptions> emp;
    if (a.empirical) {
        emp = EmpiricalQuantileOptions{a.mc_count, g.seed};
    }
    const auto sched =
        quantile_matched_schedule(a.beta, a.dim, a.delta, a.sigma_min, a.sigma_max, emp);
    Json j = to_json(sched);
    Json pairs = Json::array();
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < sched.size(); ++i) {
        // Levels are descending: sigmas[i + 1] is the smaller one.
        const double upper_of_smaller =
            norm_model_quantile(a.dim, sched.sigmas[i + 1], a.beta, (1 + a.delta) / 2);
        const double lower_of_larger =
            norm_model_quantile(a.dim, sched.sigmas[i], a.beta, (1 - a.delta) / 2);
        const double rel = std::abs(upper_of_smaller - lower_of_larger) / upper_of_smaller;
        const bool clamped = sched.top_clamped && i == 0;
        if (!clamped && !sched.empirical) {
            worst = std::max(worst, rel);
        }
        pairs.push_back({{"larger", sched.sigmas[i]},
                         {"smaller", sched.sigmas[i + 1]},
                         {"upper_quantile_of_smaller", upper_of_smaller},
                         {"lower_quantile_of_larger", lower_of_larger},
                         {"clamped", clamped}});
    }
    j["pairs"] = pairs;
    j["identity_max_rel_error"] = worst;
    j["identity_verified"] = sched.empirical || worst <= 1e-8;
    emit_text(g.out, j.dump(2) + "\n", out);
    if (!g.out.empty()) {
        out << "schedule: " << sched.size() << " levels, identity error " << format_double(worst)
            << "\n";
    }
    return 0;
}

// ----------------------------- noise -----------------------------

struct NoiseArgs {
    double beta = 2.0;
    std::optional<double> alpha;
    double mu = 0.0;
    std::size_t count = 1000;
    std::string method = "gamma_power";
};

void add_noise(CLI::App& app, NoiseArgs& a) {
    auto* sc = app.add_subcommand("noise", "Generalized normal draws as CSV");
    sc->add_option("--beta", a.beta, "Shape")->capture_default_str();
    sc->add_option("--alpha", a.alpha, "Scale (default: unit variance)");
    sc->add_option("--mu", a.mu, "Location")->capture_default_str();
    sc->add_option("--count", a.count, "Number of draws")->capture_default_str();
    sc->add_option("--method", a.method, "gamma_power or uniform_scale_mixture")
        ->check(CLI::IsMember({"gamma_power", "uniform_scale_mixture"}))
        ->capture_default_str();
}

int run_noise(const NoiseArgs& a, const Global& g, std::ostream& out) {
    const double alpha = a.alpha.value_or(gn_unit_variance_alpha(a.beta));
    const auto dist = GeneralizedNormal::make(a.mu, alpha, a.beta);
    Rng rng = make_rng(g.seed);
    const auto method =
        a.method == "gamma_power" ? GnSampler::gamma_power : GnSampler::uniform_scale_mixture;
    const auto xs = gn_sample(dist, rng, a.count, method);
    std::ostringstream csv;
    CsvWriter w(csv);
    w.row({"x"});
    for (double x : xs) {
        w.field(x).end_row();
    }
    emit_text(g.out, csv.str(), out);
    return 0;
}

// ----------------------------- train -----------------------------

struct TrainArgs {
    std::optional<double> beta;
    std::optional<std::size_t> steps;
    std::optional<double> lr;
    std::optional<std::string> optimizer;
    std::optional<double> ratio;
    std::string data;
    std::string losses;
};

void add_train(CLI::App& app, TrainArgs& a) {
    auto* sc = app.add_subcommand(
        "train", "Train a score network; --config takes {mixture, majority_samples, train}");
    sc->add_option("--beta", a.beta, "Training noise shape (default 2)");
    sc->add_option("--steps", a.steps, "Optimizer steps (default 20000)");
    sc->add_option("--lr", a.lr, "Learning rate (default 1e-3)");
    sc->add_option("--optimizer", a.optimizer, "sgd (default) or adam")
        ->check(CLI::IsMember({"sgd", "adam"}));
    sc->add_option("--ratio", a.ratio, "Two-mode mixture imbalance (default 1)");
    sc->add_option("--data", a.data, "CSV training points instead of mixture draws");
    sc->add_option("--losses", a.losses, "Write the per-step loss curve CSV here");
}

int run_train(const TrainArgs& a, const Global& g, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    cfg.mixture = MixtureSpec::two_mode(1.0);
    const Json j = load_config(g.config);
    for (const auto& item : j.items()) {
        if (item.key() != "mixture" && item.key() != "majority_samples" && item.key() != "train") {
            throw UsageError("train config: unknown key '" + item.key() + "'");
        }
    }
    if (j.contains("mixture")) {
        cfg.mixture = mixture_from_json(j.at("mixture"), cfg.mixture);
    }
    if (j.contains("majority_samples")) {
        cfg.majority_samples = j.at("majority_samples").get<std::size_t>();
    }
    if (j.contains("train")) {
        cfg.train = train_config_from_json(j.at("train"), cfg.train);
    }
    if (a.ratio) {
        cfg.mixture = MixtureSpec::two_mode(*a.ratio);
    }
    if (a.beta) {
        cfg.train.noise.beta = *a.beta;
    }
    if (a.steps) {
        cfg.train.steps = *a.steps;
    }
    if (a.lr) {
        cfg.train.learning_rate = *a.lr;
    }
    if (a.optimizer) {
        cfg.train.optimizer = *a.optimizer == "adam" ? Optimizer::adam : Optimizer::sgd;
    }
    cfg.train.seed = g.seed;
    cfg.train.validate();

    const PointSet data = a.data.empty() ? [&] {
        Rng rng = make_rng(g.seed, 1);
        const double top =
            *std::max_element(cfg.mixture.weights.begin(), cfg.mixture.weights.end());
        return cfg.mixture.sample_stratified(
            static_cast<std::size_t>(std::llround(static_cast<double>(cfg.majority_samples) / top)),
            rng);
    }()
                                         : read_points_csv(a.data);
    if (g.verbose) {
        err << "training on " << data.size() << " points for " << cfg.train.steps << " steps\n";
    }
    const auto result = train(data, cfg.train);
    emit_text(g.out, checkpoint_to_json(result.net, &cfg.train).dump(2) + "\n", out);
    if (!a.losses.empty()) {
        std::ostringstream csv;
        CsvWriter w(csv);
        w.row({"step", "level", "loss"});
        for (std::size_t i = 0; i < result.losses.size(); ++i) {
            w.field(i).field(std::size_t{result.levels[i]}).field(result.losses[i]).end_row();
        }
        emit_text(a.losses, csv.str(), out);
    }
    if (!g.out.empty()) {
        const auto s = summarize_losses(result.losses);
        out << "train: loss " << format_double(s.first) << " -> " << format_double(s.last)
            << (s.converged() ? " (converged)" : " (not converged)") << "\n";
    }
    return 0;
}

// ----------------------------- sample -----------------------------

struct SampleArgs {
    std::string ckpt;
    std::size_t count = 1000;
    std::optional<std::string> levels;
    std::optional<double> epsilon;
    std::optional<std::size_t> steps;
    std::optional<double> diffusion_beta;
    bool paths = false;
    bool single_level = false;
    std::size_t workers = 1;
};

void add_sample(CLI::App& app, SampleArgs& a) {
    auto* sc = app.add_subcommand("sample", "Langevin sampling from a checkpoint");
    sc->add_option("--ckpt", a.ckpt, "Checkpoint JSON")->required();
    sc->add_option("--count", a.count, "Particles")->capture_default_str();
    sc->add_option("--schedule", a.levels, "Comma-separated descending levels");
    sc->add_option("--epsilon", a.epsilon, "Base step size (default 0.1)");
    sc->add_option("--steps", a.steps, "Steps per level (default 1000)");
    sc->add_option("--diffusion-beta", a.diffusion_beta, "Diffusion noise shape (default 2)");
    sc->add_flag("--paths", a.paths, "Write every step instead of endpoints");
    sc->add_flag("--ld", a.single_level, "Single-level Langevin at the largest level");
    sc->add_option("--workers", a.workers, "Particle worker threads")->capture_default_str();
}

int run_sample(const SampleArgs& a, const Global& g, std::ostream& out) {
    const auto ck = checkpoint_from_json(read_json(a.ckpt));
    SamplerConfig cfg;
    if (ck.train) {
        cfg.schedule = ck.train->schedule;
    }
    cfg.dim = ck.net.data_dim();
    cfg = sampler_config_from_json(load_config(g.config), cfg);
    if (a.levels) {
        cfg.schedule = NoiseSchedule::from_levels(parse_levels(*a.levels));
    }
    if (a.epsilon) {
        cfg.epsilon = *a.epsilon;
    }
    if (a.steps) {
        cfg.steps_per_level = {*a.steps};
    }
    if (a.diffusion_beta) {
        cfg.diffusion_beta = *a.diffusion_beta;
    }
    cfg.record_paths = cfg.record_paths || a.paths;
    cfg.seed = g.seed;
    cfg.workers = a.workers;
    if (cfg.dim != ck.net.data_dim()) {
        throw UsageError("sampler dim does not match the checkpoint");
    }
    const auto fn = network_score_fn(ck.net);
    const auto paths = a.single_level ? ld_run(fn, cfg, a.count) : ald_run(fn, cfg, a.count);
    const std::string target = g.out.empty() ? std::string("samples.csv") : g.out;
    if (cfg.record_paths) {
        write_paths_csv(target, paths);
    } else {
        write_endpoints_csv(target, paths);
    }
    out << "sample: " << paths.size() << " particles, " << count_diverged(paths)
        << " diverged -> " << target << "\n";
    return 0;
}

// ----------------------------- metrics -----------------------------

struct MetricsArgs {
    std::string real;
    std::string fake;
    std::size_t k = 5;
};

void add_metrics(CLI::App& app, MetricsArgs& a) {
    auto* sc = app.add_subcommand("metrics", "PRDC, KID and FID between two CSV point sets");
    sc->add_option("--real", a.real, "Reference CSV")->required();
    sc->add_option("--fake", a.fake, "Generated CSV")->required();
    sc->add_option("--k", a.k, "Nearest-neighbour k")->capture_default_str();
}

int run_metrics(const MetricsArgs& a, const Global& g, std::ostream& out) {
    const FeatureSet real{read_points_csv(a.real), FeatureSource::real};
    const FeatureSet fake{read_points_csv(a.fake), FeatureSource::generated};
    const auto report = compute_metrics(real, fake, a.k);
    emit_text(g.out, to_json(report).dump(2) + "\n", out);
    return 0;
}

// ----------------------------- experiment -----------------------------

struct ExperimentArgs {
    std::size_t levels = 2;
    double beta = 2.0;
    std::optional<std::size_t> seeds;
    std::optional<std::size_t> workers;
    bool no_sweep = false;
};

void add_experiment(CLI::App& app, ExperimentArgs& a) {
    auto* ex = app.add_subcommand("experiment", "Mode-imbalance study or convergence demo");
    ex->require_subcommand(1);
    auto* imb = ex->add_subcommand(
        "imbalance", "DSM/HTDSM x diffusion grid plus beta sweep (grid.json, per_seed.csv, sweep.csv)");
    imb->add_option("--seeds", a.seeds, "Use seeds 0..N-1 (default 10)");
    imb->add_option("--workers", a.workers, "Seeds run concurrently (default 1)");
    imb->add_flag("--no-sweep", a.no_sweep, "Skip the beta sweep");
    auto* demo = ex->add_subcommand("demo", "Balanced two-mode demo (paths.csv, endpoints.csv)");
    demo->add_option("--levels", a.levels, "1 or 2 noise levels")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    demo->add_option("--beta", a.beta, "Training noise and diffusion shape")->capture_default_str();
}

ExperimentConfig experiment_config(const Global& g, const ExperimentArgs& a) {
    ExperimentConfig cfg = experiment_config_from_json(load_config(g.config), ExperimentConfig{});
    cfg.master_seed = g.seed;
    if (a.seeds) {
        cfg.seeds.resize(*a.seeds);
        std::iota(cfg.seeds.begin(), cfg.seeds.end(), std::uint64_t{0});
    }
    if (a.workers) {
        cfg.workers = *a.workers;
    }
    cfg.validate();
    return cfg;
}

int run_experiment(CLI::App& ex, const ExperimentArgs& a, const Global& g, std::ostream& out) {
    const std::filesystem::path dir = std::filesystem::path(g.out.empty() ? std::string("results") : g.out);
    auto cfg = experiment_config(g, a);
    if (ex.got_subcommand("demo")) {
        cfg.sample.record_paths = true;
        const auto demo = run_convergence_demo(cfg, a.levels, a.beta);
        write_paths_csv(dir / "paths.csv", demo.paths);
        write_endpoints_csv(dir / "endpoints.csv", demo.paths);
        const auto s = demo.record.loss;
        out << "demo: loss " << format_double(s.first) << " -> " << format_double(s.last)
            << ", mode capture " << format_double(demo.mode_capture) << ", diverged "
            << demo.record.diverged << " -> " << dir.string() << "\n";
        return 0;
    }
    ModelCache cache;
    const auto grid = run_imbalance_grid(cfg, &cache);
    const auto sweep = a.no_sweep ? std::vector<CellSummary>{} : run_beta_sweep(cfg, &cache);
    write_study_outputs(dir, grid, sweep, cfg);
    for (const auto* group : {&grid, &sweep}) {
        for (const auto& cell : *group) {
            out << cell.label << ": ";
            if (cell.divergent) {
                out << "Divergent";
            } else if (cell.ci) {
                out << format_double(cell.ci->mean) << " (" << format_double(cell.ci->lo) << ", "
                    << format_double(cell.ci->hi) << ")";
            } else {
                out << "n/a";
            }
            out << "\n";
        }
    }
    return 0;
}

int run_selftest_cmd(const Global& g, std::ostream& out) {
    const auto results = run_selftest(g.seed);
    bool all = true;
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << " " << r.detail << "\n";
        all = all && r.passed;
    }
    return all ? 0 : 1;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Heavy-tailed denoising score matching toolkit", "htdsm"};
    app.require_subcommand(1);
    app.fallthrough();
    Global g;
    app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
    app.add_option("--out,-o", g.out, "Output file or directory");
    app.add_option("--config,-c", g.config, "JSON config; flags override its values");
    app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");

    ScheduleArgs schedule_args;
    NoiseArgs noise_args;
    TrainArgs train_args;
    SampleArgs sample_args;
    MetricsArgs metrics_args;
    ExperimentArgs experiment_args;
    add_schedule(app, schedule_args);
    add_noise(app, noise_args);
    add_train(app, train_args);
    add_sample(app, sample_args);
    add_metrics(app, metrics_args);
    add_experiment(app, experiment_args);
    app.add_subcommand("selftest", "Fast invariant suite; exit 0 when every check passes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return 2;
    }

    try {
        if (app.got_subcommand("schedule")) {
            return run_schedule(schedule_args, g, out);
        }
        if (app.got_subcommand("noise")) {
            return run_noise(noise_args, g, out);
        }
        if (app.got_subcommand("train")) {
            return run_train(train_args, g, out, err);
        }
        if (app.got_subcommand("sample")) {
            return run_sample(sample_args, g, out);
        }
        if (app.got_subcommand("metrics")) {
            return run_metrics(metrics_args, g, out);
        }
        if (app.got_subcommand("experiment")) {
            return run_experiment(*app.get_subcommand("experiment"), experiment_args, g, out);
        }
        return run_selftest_cmd(g, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const Json::exception& e) {
        err << "error: malformed config: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        err << "error: " << e.what() << " (step " << e.step() << ", sigma "
            << format_double(e.sigma()) << ")\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace htdsm
