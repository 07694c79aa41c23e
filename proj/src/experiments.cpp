#include "htdsm/experiments.hpp"

#include "htdsm/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

namespace htdsm {

namespace {

// Substreams of a per-seed base seed.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kSampleStream = 3;
constexpr std::uint64_t kReferenceStream = 4;
constexpr std::uint64_t kBootstrapStream = 0xB0075712ull;

std::uint64_t seed_base(const ExperimentConfig& cfg, std::uint64_t seed) {
    return derive_seed(cfg.master_seed, seed);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h = (h ^ c) * 0x100000001b3ull;
    }
    return h;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

std::string beta_label(double beta) {
    return format_double(beta);
}

CellSummary summarize(const ExperimentConfig& cfg, std::string label, double train_beta,
                      double diffusion_beta, std::vector<RunRecord> records) {
    CellSummary cell;
    cell.label = std::move(label);
    cell.train_beta = train_beta;
    cell.diffusion_beta = diffusion_beta;
    cell.records = std::move(records);
    cell.divergent = is_divergent(cell.records);
    std::vector<double> values;
    for (const auto& r : cell.records) {
        if (r.imbalance) {
            values.push_back(*r.imbalance);
        }
    }
    if (!cell.divergent && !values.empty()) {
        Rng rng = make_rng(cfg.master_seed, kBootstrapStream ^ fnv1a(cell.label));
        cell.ci = bootstrap_ci(values, cfg.bootstrap_resamples, cfg.ci_level, rng);
    }
    return cell;
}

Json ci_json(const CellSummary& cell) {
    if (cell.divergent) {
        return "Divergent";
    }
    if (!cell.ci) {
        return nullptr;
    }
    return Json{{"mean", cell.ci->mean}, {"lo", cell.ci->lo}, {"hi", cell.ci->hi}};
}

}  // namespace

double ExperimentConfig::ratio() const {
    const auto [lo, hi] = std::minmax_element(mixture.weights.begin(), mixture.weights.end());
    return *hi / *lo;
}

void ExperimentConfig::validate() const {
    mixture.validate();
    train.validate();
    sample.validate();
    if (seeds.empty()) {
        throw DomainError("ExperimentConfig: seeds must be nonempty");
    }
    if (particles == 0 || majority_samples == 0) {
        throw DomainError("ExperimentConfig: particles and majority_samples must be positive");
    }
    if (sample.dim != mixture.dim()) {
        throw DomainError("ExperimentConfig: sampler dim does not match the mixture");
    }
    if (!(htdsm_beta > 0.0)) {
        throw DomainError("ExperimentConfig: htdsm_beta must be positive");
    }
    for (double b : sweep_betas) {
        if (!(b > 0.0 && b <= 2.0)) {
            throw DomainError("ExperimentConfig: sweep betas must lie in (0, 2]");
        }
    }
}

bool RunRecord::same_outcome(const RunRecord& o) const {
    const auto same_metrics = [](const std::optional<MetricReport>& a,
                                 const std::optional<MetricReport>& b) {
        if (a.has_value() != b.has_value()) {
            return false;
        }
        return !a || (a->precision == b->precision && a->recall == b->recall &&
                      a->density == b->density && a->coverage == b->coverage &&
                      a->kid == b->kid && a->fid == b->fid);
    };
    return seed == o.seed && cell == o.cell && train_beta == o.train_beta &&
           diffusion_beta == o.diffusion_beta && imbalance == o.imbalance &&
           mode_counts == o.mode_counts && particles == o.particles && diverged == o.diverged &&
           loss.first == o.loss.first && loss.last == o.loss.last &&
           same_metrics(metrics, o.metrics);
}

bool is_divergent(const std::vector<RunRecord>& records) {
    const auto bad = std::count_if(records.begin(), records.end(), [](const RunRecord& r) {
        return 2 * r.diverged > r.particles;
    });
    return 2 * static_cast<std::size_t>(bad) > records.size();
}

const TrainedModel& ModelCache::get(const ExperimentConfig& cfg, double beta, std::uint64_t seed) {
    const auto key = std::make_pair(beta, seed);
    {
        std::lock_guard lock(mutex_);
        if (auto it = models_.find(key); it != models_.end()) {
            return it->second;
        }
    }
    auto model = train_model(cfg, beta, seed);
    std::lock_guard lock(mutex_);
    return models_.try_emplace(key, std::move(model)).first->second;
}

PointSet experiment_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    Rng rng = make_rng(seed_base(cfg, seed), kDataStream);
    const double top = *std::max_element(cfg.mixture.weights.begin(), cfg.mixture.weights.end());
    const auto total = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfg.majority_samples) / top));
    return cfg.mixture.sample_stratified(total, rng);
}

TrainedModel train_model(const ExperimentConfig& cfg, double beta, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig tc = cfg.train;
    tc.noise.beta = beta;
    tc.seed = derive_seed(seed_base(cfg, seed), kTrainStream);
    auto result = train(experiment_data(cfg, seed), tc);
    TrainedModel model;
    model.loss = summarize_losses(result.losses);
    model.net = std::move(result.net);
    model.seconds = seconds_since(t0);
    return model;
}

RunRecord sample_run(const ExperimentConfig& cfg, const TrainedModel& model, std::uint64_t seed,
                     double train_beta, double diffusion_beta, const std::string& cell,
                     std::vector<ParticlePath>* paths_out) {
    const auto t0 = std::chrono::steady_clock::now();
    SamplerConfig sc = cfg.sample;
    sc.diffusion_beta = diffusion_beta;
    sc.seed = derive_seed(seed_base(cfg, seed), kSampleStream);
    sc.workers = 1;
    auto paths = ald_run(network_score_fn(model.net), sc, cfg.particles);

    RunRecord rec;
    rec.seed = seed;
    rec.cell = cell;
    rec.train_beta = train_beta;
    rec.diffusion_beta = diffusion_beta;
    rec.particles = paths.size();
    rec.diverged = count_diverged(paths);
    rec.loss = model.loss;
    if (rec.diverged < rec.particles) {
        const auto imb = mode_imbalance(paths, cfg.mixture);
        rec.imbalance = imb.percentage;
        rec.mode_counts = imb.counts;
    } else {
        rec.mode_counts.assign(cfg.mixture.components(), 0);
    }
    if (cfg.compute_metrics && rec.particles - rec.diverged > cfg.metric_k) {
        PointSet fake(cfg.mixture.dim(), 0);
        for (const auto& p : paths) {
            if (p.status == ParticleStatus::converged) {
                fake.push_back(p.final_position);
            }
        }
        Rng ref_rng = make_rng(seed_base(cfg, seed), kReferenceStream);
        FeatureSet real{cfg.mixture.sample_stratified(cfg.particles, ref_rng), FeatureSource::real};
        try {
            rec.metrics = compute_metrics(real, FeatureSet{fake, FeatureSource::generated}, cfg.metric_k);
        } catch (const MetricError&) {
            rec.metrics.reset();
        }
    }
    rec.wall_seconds = model.seconds + seconds_since(t0);
    if (paths_out) {
        *paths_out = std::move(paths);
    }
    return rec;
}

CellSummary run_cell(const ExperimentConfig& cfg, double train_beta, double diffusion_beta,
                     const std::string& label, ModelCache* cache) {
    cfg.validate();
    ModelCache local;
    ModelCache& models = cache ? *cache : local;
    std::vector<RunRecord> records(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
        const auto seed = cfg.seeds[i];
        records[i] = sample_run(cfg, models.get(cfg, train_beta, seed), seed, train_beta,
                                diffusion_beta, label);
    });
    return summarize(cfg, label, train_beta, diffusion_beta, std::move(records));
}

std::vector<CellSummary> run_imbalance_grid(const ExperimentConfig& cfg, ModelCache* cache) {
    cfg.validate();
    ModelCache local;
    ModelCache& models = cache ? *cache : local;
    struct Spec {
        const char* label;
        double train_beta;
        double diffusion_beta;
    };
    const Spec specs[] = {{"DSM+gaussian", 2.0, 2.0},
                          {"DSM+laplace", 2.0, 1.0},
                          {"HTDSM+gaussian", cfg.htdsm_beta, 2.0},
                          {"HTDSM+laplace", cfg.htdsm_beta, 1.0}};
    // Seeds run in parallel; each seed trains both networks once and samples all
    // four cells from them.
    std::vector<std::vector<RunRecord>> records(4, std::vector<RunRecord>(cfg.seeds.size()));
    parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
        const auto seed = cfg.seeds[i];
        for (std::size_t c = 0; c < 4; ++c) {
            const auto& s = specs[c];
            records[c][i] = sample_run(cfg, models.get(cfg, s.train_beta, seed), seed,
                                       s.train_beta, s.diffusion_beta, s.label);
        }
    });
    std::vector<CellSummary> cells;
    for (std::size_t c = 0; c < 4; ++c) {
        cells.push_back(summarize(cfg, specs[c].label, specs[c].train_beta,
                                  specs[c].diffusion_beta, std::move(records[c])));
    }
    return cells;
}

std::vector<CellSummary> run_beta_sweep(const ExperimentConfig& cfg, ModelCache* cache) {
    cfg.validate();
    ModelCache local;
    ModelCache& models = cache ? *cache : local;
    std::vector<CellSummary> out;
    for (double beta : cfg.sweep_betas) {
        out.push_back(run_cell(cfg, beta, beta, "sweep_beta=" + beta_label(beta), &models));
    }
    return out;
}

double mode_capture_fraction(const std::vector<ParticlePath>& paths, const MixtureSpec& mixture,
                             double n_std) {
    if (paths.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (const auto& p : paths) {
        if (p.status == ParticleStatus::diverged) {
            continue;
        }
        for (std::size_t k = 0; k < mixture.components(); ++k) {
            const double r = n_std * mixture.stds[k];
            if (squared_distance(p.final_position, mixture.means[k]) <= r * r) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(paths.size());
}

DemoResult run_convergence_demo(ExperimentConfig cfg, std::size_t levels, double beta) {
    if (levels != 1 && levels != 2) {
        throw DomainError("run_convergence_demo: levels must be 1 or 2");
    }
    const auto schedule = NoiseSchedule::from_levels(levels == 1 ? std::vector<double>{1.0}
                                                                 : std::vector<double>{1.0, 0.25});
    cfg.train.schedule = schedule;
    cfg.sample.schedule = schedule;
    std::fill(cfg.mixture.weights.begin(), cfg.mixture.weights.end(),
              1.0 / static_cast<double>(cfg.mixture.components()));
    cfg.validate();
    const auto seed = cfg.seeds.front();

    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig tc = cfg.train;
    tc.noise.beta = beta;
    tc.seed = derive_seed(seed_base(cfg, seed), kTrainStream);
    auto trained = train(experiment_data(cfg, seed), tc);
    TrainedModel model{std::move(trained.net), summarize_losses(trained.losses),
                       seconds_since(t0)};

    DemoResult demo;
    demo.losses = std::move(trained.losses);
    demo.record = sample_run(cfg, model, seed, beta, beta,
                             "demo_levels=" + std::to_string(levels) + "_beta=" + beta_label(beta),
                             &demo.paths);
    demo.mode_capture = mode_capture_fraction(demo.paths, cfg.mixture);
    return demo;
}

void write_study_outputs(const std::filesystem::path& dir, const std::vector<CellSummary>& grid,
                         const std::vector<CellSummary>& sweep, const ExperimentConfig& cfg) {
    std::filesystem::create_directories(dir);

    Json table;
    for (const auto& cell : grid) {
        const auto plus = cell.label.find('+');
        table[cell.label.substr(0, plus)][cell.label.substr(plus + 1)] = ci_json(cell);
    }
    Json cells = Json::array();
    for (const auto& cell : grid) {
        Json c;
        c["label"] = cell.label;
        c["train_beta"] = cell.train_beta;
        c["diffusion_beta"] = cell.diffusion_beta;
        c["divergent"] = cell.divergent;
        c["summary"] = ci_json(cell);
        cells.push_back(c);
    }
    Json grid_json;
    grid_json["table"] = table;
    grid_json["cells"] = cells;
    grid_json["ratio"] = cfg.ratio();
    grid_json["seeds"] = cfg.seeds;
    grid_json["master_seed"] = cfg.master_seed;
    grid_json["particles"] = cfg.particles;
    grid_json["bootstrap_resamples"] = cfg.bootstrap_resamples;
    grid_json["ci_level"] = cfg.ci_level;
    grid_json["config"] = to_json(cfg);
    write_json(dir / "grid.json", grid_json);

    {
        std::ofstream out(dir / "per_seed.csv", std::ios::binary);
        CsvWriter w(out);
        w.row({"cell", "seed", "train_beta", "diffusion_beta", "imbalance", "diverged",
               "particles", "loss_first", "loss_last", "precision", "recall", "density",
               "coverage", "kid", "fid", "wall_seconds"});
        const auto opt = [](const std::optional<double>& v) {
            return v ? format_double(*v) : std::string();
        };
        for (const auto* group : {&grid, &sweep}) {
            for (const auto& cell : *group) {
                for (const auto& r : cell.records) {
                    w.field(r.cell).field(std::to_string(r.seed)).field(r.train_beta)
                        .field(r.diffusion_beta).field(opt(r.imbalance)).field(r.diverged)
                        .field(r.particles).field(r.loss.first).field(r.loss.last);
                    const MetricReport m = r.metrics.value_or(MetricReport{});
                    w.field(opt(m.precision)).field(opt(m.recall)).field(opt(m.density))
                        .field(opt(m.coverage)).field(opt(m.kid)).field(opt(m.fid));
                    w.field(r.wall_seconds).end_row();
                }
            }
        }
    }
    {
        std::ofstream out(dir / "sweep.csv", std::ios::binary);
        CsvWriter w(out);
        w.row({"beta", "mean", "lo", "hi", "divergent", "seeds"});
        for (const auto& cell : sweep) {
            w.field(cell.train_beta);
            if (cell.ci) {
                w.field(cell.ci->mean).field(cell.ci->lo).field(cell.ci->hi);
            } else {
                w.field(std::string()).field(std::string()).field(std::string());
            }
            w.field(std::string(cell.divergent ? "true" : "false")).field(cell.records.size());
            w.end_row();
        }
    }
}

}  // namespace htdsm
