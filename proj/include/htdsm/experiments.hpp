#pragma once

#include "htdsm/common.hpp"
#include "htdsm/metrics.hpp"
#include "htdsm/sampler.hpp"
#include "htdsm/scorenet.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace htdsm {

struct ExperimentConfig {
    MixtureSpec mixture = MixtureSpec::two_mode(10.0);
    /// Training points drawn from the majority mode; the others scale by weight.
    std::size_t majority_samples = 10000;
    TrainConfig train;
    SamplerConfig sample;
    std::size_t particles = 1000;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::uint64_t master_seed = 0;
    /// Shape used for the heavy-tailed training cells.
    double htdsm_beta = 1.0;
    std::vector<double> sweep_betas{1.0, 1.25, 1.5, 1.75, 2.0};
    bool compute_metrics = false;
    std::size_t metric_k = 5;
    std::size_t bootstrap_resamples = 10000;
    double ci_level = 0.95;
    /// Seeds processed concurrently.
    std::size_t workers = 1;

    double ratio() const;
    void validate() const;
};

struct RunRecord {
    std::uint64_t seed = 0;
    std::string cell;
    double train_beta = 2.0;
    double diffusion_beta = 2.0;
    std::optional<double> imbalance;  ///< absent iff every particle diverged
    std::vector<std::size_t> mode_counts;
    std::size_t particles = 0;
    std::size_t diverged = 0;
    LossSummary loss;
    std::optional<MetricReport> metrics;
    double wall_seconds = 0.0;

    /// Field-wise equality ignoring wall time.
    bool same_outcome(const RunRecord& other) const;
};

struct CellSummary {
    std::string label;
    double train_beta = 2.0;
    double diffusion_beta = 2.0;
    std::vector<RunRecord> records;  ///< seed order
    std::optional<BootstrapCi> ci;   ///< absent when divergent or nothing to aggregate
    bool divergent = false;
};

/// A cell is divergent when more than half of its seeds lost more than half of
/// their particles.
bool is_divergent(const std::vector<RunRecord>& records);

struct TrainedModel {
    ScoreNetwork net;
    LossSummary loss;
    double seconds = 0.0;
};

/// Trained networks keyed by (training beta, seed); safe for concurrent use.
class ModelCache {
public:
    const TrainedModel& get(const ExperimentConfig& cfg, double beta, std::uint64_t seed);

private:
    std::mutex mutex_;
    std::map<std::pair<double, std::uint64_t>, TrainedModel> models_;
};

/// Training set for one seed: exact per-mode counts.
PointSet experiment_data(const ExperimentConfig& cfg, std::uint64_t seed);

TrainedModel train_model(const ExperimentConfig& cfg, double beta, std::uint64_t seed);

/// Samples `cfg.particles` particles with ALD from a trained model and scores them.
RunRecord sample_run(const ExperimentConfig& cfg, const TrainedModel& model, std::uint64_t seed,
                     double train_beta, double diffusion_beta, const std::string& cell,
                     std::vector<ParticlePath>* paths = nullptr);

/// One (training beta, diffusion beta) cell over all seeds.
CellSummary run_cell(const ExperimentConfig& cfg, double train_beta, double diffusion_beta,
                     const std::string& label, ModelCache* cache = nullptr);

/// {DSM, HTDSM} x {Gaussian, Laplace} diffusion, in that row-major order.
std::vector<CellSummary> run_imbalance_grid(const ExperimentConfig& cfg,
                                            ModelCache* cache = nullptr);

/// Matching training and diffusion shape for each beta in cfg.sweep_betas.
std::vector<CellSummary> run_beta_sweep(const ExperimentConfig& cfg, ModelCache* cache = nullptr);

struct DemoResult {
    RunRecord record;
    std::vector<ParticlePath> paths;
    std::vector<double> losses;
    double mode_capture = 0.0;
};

/// Demo on cfg.mixture with its weights equalized, with one ([1.0]) or two ([1.0, 0.25]) levels; training
/// noise and diffusion share `beta`. Uses the first configured seed.
DemoResult run_convergence_demo(ExperimentConfig cfg, std::size_t levels, double beta);

/// Fraction of all particles that end within `n_std` component std of some mode
/// mean (diverged particles count as misses).
double mode_capture_fraction(const std::vector<ParticlePath>& paths, const MixtureSpec& mixture,
                             double n_std = 3.0);

/// grid.json, per_seed.csv and sweep.csv.
void write_study_outputs(const std::filesystem::path& dir, const std::vector<CellSummary>& grid,
                         const std::vector<CellSummary>& sweep, const ExperimentConfig& cfg);

}  // namespace htdsm
