#pragma once

#include "htdsm/common.hpp"
#include "htdsm/schedule.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace htdsm {

// ----------------------------- mixture data -----------------------------

/// Mixture of isotropic Gaussians sum_k w_k N(mean_k, std_k² I).
struct MixtureSpec {
    std::vector<std::vector<double>> means;
    std::vector<double> stds;
    std::vector<double> weights;

    std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
    std::size_t components() const { return means.size(); }
    /// Index of the component with the largest weight (lowest index on ties).
    std::size_t majority_component() const;
    void validate() const;

    /// Two modes at (+offset, +offset) and (-offset, -offset) with weights
    /// ratio : 1, the first being the majority mode.
    static MixtureSpec two_mode(double ratio, double offset = 2.5, double std = 0.5);

    /// Exact component counts: round(total * w_k) points from component k.
    PointSet sample_stratified(std::size_t total, Rng& rng) const;
};

/// ∇ log sum_k w_k N(x; mean_k, (std_k² + smoothing²) I), log-domain stable.
std::vector<double> analytic_mixture_score(std::span<const double> x, const MixtureSpec& mixture,
                                           double smoothing_sigma);
double mixture_log_density(std::span<const double> x, const MixtureSpec& mixture,
                           double smoothing_sigma);

// ----------------------------- network -----------------------------

/// Dense ReLU network s(x, log sigma) with the noise level appended as one extra
/// input feature. Parameters live in one flat vector; layer l stores its
/// out x in weight matrix (row-major) followed by its bias.
class ScoreNetwork {
public:
    ScoreNetwork() = default;
    /// widths = {data_dim + 1, hidden..., data_dim}. Weights and biases are drawn
    /// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    ScoreNetwork(std::vector<std::size_t> widths, Rng& rng);
    /// Takes ownership of explicit parameters (checkpoint loading, tests).
    ScoreNetwork(std::vector<std::size_t> widths, std::vector<double> parameters);

    static ScoreNetwork make(std::size_t data_dim, const std::vector<std::size_t>& hidden,
                             std::uint64_t seed);

    const std::vector<std::size_t>& widths() const noexcept { return widths_; }
    std::size_t data_dim() const noexcept { return widths_.back(); }
    std::size_t layer_count() const noexcept { return widths_.size() - 1; }

    std::span<const double> parameters() const noexcept { return params_; }
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> weights(std::size_t layer) const;
    std::span<const double> bias(std::size_t layer) const;
    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const {
        return offsets_[layer] + widths_[layer] * widths_[layer + 1];
    }

    /// Zeroes the output layer, making the network output identically zero.
    void zero_output_layer();

    std::vector<double> forward(std::span<const double> x, double log_sigma) const;
    void forward(std::span<const double> x, double log_sigma, std::span<double> out) const;

    /// Activations of one forward pass, kept for backpropagation.
    struct Tape {
        std::vector<std::vector<double>> activations;  // input, hidden..., output
        std::span<const double> output() const { return activations.back(); }
    };

    void forward(std::span<const double> x, double log_sigma, Tape& tape) const;
    /// Adds dL/d parameters into `param_grad` given dL/d output for the pass in `tape`.
    void backward(const Tape& tape, std::span<const double> output_grad,
                  std::span<double> param_grad) const;

    bool all_finite() const;

private:
    void init_offsets();

    std::vector<std::size_t> widths_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

/// Score-function view used by the samplers: writes s(x, log sigma) into out.
using ScoreFn = std::function<void(std::span<const double> x, double log_sigma,
                                   std::span<double> out)>;

ScoreFn network_score_fn(const ScoreNetwork& net);

// ----------------------------- objective -----------------------------

/// Noising kernel for (HT)DSM: each coordinate gets GN(0, sigma * alpha_unit,
/// beta) noise, and the loss at level sigma is weighted by sigma^weight_exponent.
struct NoiseConfig {
    double beta = 2.0;
    /// Per-unit-sigma GN scale; nullopt selects beta^(1/beta), the kernel
    /// exp(-|x|^beta / beta): standard normal at beta = 2, standard Laplace at 1.
    std::optional<double> alpha_unit;
    double weight_exponent = 2.0;

    double resolved_alpha_unit() const;
};

/// Noised inputs and conditional-score targets for one batch at one level.
struct DsmBatch {
    PointSet noisy;
    PointSet targets;
};

DsmBatch make_dsm_batch(const PointSet& clean, double sigma, const NoiseConfig& noise, Rng& rng);

/// lambda(sigma) * mean_i ½ ||prediction_i - target_i||².
double dsm_loss_value(const PointSet& predictions, const PointSet& targets, double weight);

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;  // same layout as ScoreNetwork::parameters()
};

/// Weighted DSM loss of `net` on `clean` noised at level sigma, with exact
/// parameter gradients.
LossAndGradient dsm_loss(const ScoreNetwork& net, const PointSet& clean, double sigma,
                         const NoiseConfig& noise, Rng& rng);

LossAndGradient dsm_loss(const ScoreNetwork& net, const DsmBatch& batch, double sigma,
                         const NoiseConfig& noise);

// ----------------------------- training -----------------------------

enum class Optimizer { sgd, adam };

struct TrainConfig {
    NoiseSchedule schedule = NoiseSchedule::from_levels({1.0, 0.25});
    NoiseConfig noise;
    std::vector<std::size_t> hidden{16, 16};
    std::size_t batch_size = 256;
    std::size_t steps = 20000;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::sgd;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    ScoreNetwork net;
    std::vector<double> losses;            // one per step
    std::vector<std::uint32_t> levels;     // schedule index drawn at each step
};

/// Minibatch training: each step draws one level uniformly from the schedule and
/// a batch (with replacement) from `data`. Throws TrainingError on non-finite
/// loss or parameters.
TrainResult train(const PointSet& data, const TrainConfig& cfg);

/// Mean of the first and last `fraction` of a loss curve.
struct LossSummary {
    double first = 0.0;
    double last = 0.0;
    bool converged() const { return last < first; }
};
LossSummary summarize_losses(std::span<const double> losses, double fraction = 0.1);

}  // namespace htdsm
