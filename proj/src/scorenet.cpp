#include "htdsm/scorenet.hpp"

#include "htdsm/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace htdsm {

// ----------------------------- mixture -----------------------------

std::size_t MixtureSpec::majority_component() const {
    return static_cast<std::size_t>(
        std::distance(weights.begin(), std::max_element(weights.begin(), weights.end())));
}

void MixtureSpec::validate() const {
    if (means.empty() || means.size() != stds.size() || means.size() != weights.size()) {
        throw DomainError("MixtureSpec: means, stds and weights must be nonempty and aligned");
    }
    const std::size_t d = means.front().size();
    if (d == 0) {
        throw DomainError("MixtureSpec: zero-dimensional means");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) {
        if (means[k].size() != d) {
            throw DomainError("MixtureSpec: means differ in dimension");
        }
        if (!(stds[k] > 0.0) || !(weights[k] > 0.0)) {
            throw DomainError("MixtureSpec: stds and weights must be positive");
        }
        total += weights[k];
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw DomainError("MixtureSpec: weights must sum to 1");
    }
}

MixtureSpec MixtureSpec::two_mode(double ratio, double offset, double std) {
    if (!(ratio >= 1.0)) {
        throw DomainError("MixtureSpec::two_mode: ratio must be >= 1");
    }
    MixtureSpec mix;
    mix.means = {{offset, offset}, {-offset, -offset}};
    mix.stds = {std, std};
    mix.weights = {ratio / (ratio + 1.0), 1.0 / (ratio + 1.0)};
    mix.validate();
    return mix;
}

PointSet MixtureSpec::sample_stratified(std::size_t total, Rng& rng) const {
    validate();
    PointSet out(dim(), 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> point(dim());
    for (std::size_t k = 0; k < components(); ++k) {
        const auto count =
            static_cast<std::size_t>(std::llround(static_cast<double>(total) * weights[k]));
        for (std::size_t i = 0; i < count; ++i) {
            for (std::size_t j = 0; j < dim(); ++j) {
                point[j] = means[k][j] + stds[k] * normal(rng);
            }
            out.push_back(point);
        }
    }
    return out;
}

namespace {

// Per-component log N(x; mean_k, var_k I) + log w_k and the variances used.
void component_log_terms(std::span<const double> x, const MixtureSpec& mixture,
                         double smoothing_sigma, std::vector<double>& log_terms,
                         std::vector<double>& variances) {
    mixture.validate();
    if (x.size() != mixture.dim()) {
        throw DomainError("mixture: point dimension mismatch");
    }
    const auto d = static_cast<double>(mixture.dim());
    log_terms.resize(mixture.components());
    variances.resize(mixture.components());
    for (std::size_t k = 0; k < mixture.components(); ++k) {
        const double var = mixture.stds[k] * mixture.stds[k] + smoothing_sigma * smoothing_sigma;
        variances[k] = var;
        log_terms[k] = std::log(mixture.weights[k]) -
                       0.5 * d * std::log(2.0 * std::numbers::pi * var) -
                       0.5 * squared_distance(x, mixture.means[k]) / var;
    }
}

double log_sum_exp(std::span<const double> values) {
    const double peak = *std::max_element(values.begin(), values.end());
    double acc = 0.0;
    for (double v : values) {
        acc += std::exp(v - peak);
    }
    return peak + std::log(acc);
}

}  // namespace

std::vector<double> analytic_mixture_score(std::span<const double> x, const MixtureSpec& mixture,
                                           double smoothing_sigma) {
    std::vector<double> log_terms;
    std::vector<double> variances;
    component_log_terms(x, mixture, smoothing_sigma, log_terms, variances);
    const double norm = log_sum_exp(log_terms);
    std::vector<double> score(x.size(), 0.0);
    for (std::size_t k = 0; k < mixture.components(); ++k) {
        const double resp = std::exp(log_terms[k] - norm);
        for (std::size_t j = 0; j < x.size(); ++j) {
            score[j] -= resp * (x[j] - mixture.means[k][j]) / variances[k];
        }
    }
    return score;
}

double mixture_log_density(std::span<const double> x, const MixtureSpec& mixture,
                           double smoothing_sigma) {
    std::vector<double> log_terms;
    std::vector<double> variances;
    component_log_terms(x, mixture, smoothing_sigma, log_terms, variances);
    return log_sum_exp(log_terms);
}

// ----------------------------- network -----------------------------

ScoreNetwork::ScoreNetwork(std::vector<std::size_t> widths, Rng& rng) : widths_(std::move(widths)) {
    init_offsets();
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        const std::size_t end = bias_offset(l) + widths_[l + 1];
        for (std::size_t i = offsets_[l]; i < end; ++i) {
            params_[i] = uniform(rng);
        }
    }
}

ScoreNetwork::ScoreNetwork(std::vector<std::size_t> widths, std::vector<double> parameters)
    : widths_(std::move(widths)) {
    init_offsets();
    if (parameters.size() != params_.size()) {
        throw DomainError("ScoreNetwork: parameter count does not match widths");
    }
    params_ = std::move(parameters);
}

ScoreNetwork ScoreNetwork::make(std::size_t data_dim, const std::vector<std::size_t>& hidden,
                                std::uint64_t seed) {
    std::vector<std::size_t> widths{data_dim + 1};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(data_dim);
    Rng rng = make_rng(seed, 0x1417u);
    return ScoreNetwork(std::move(widths), rng);
}

void ScoreNetwork::init_offsets() {
    if (widths_.size() < 2) {
        throw DomainError("ScoreNetwork: need at least input and output widths");
    }
    if (widths_.front() != widths_.back() + 1) {
        throw DomainError("ScoreNetwork: input width must be data_dim + 1");
    }
    for (std::size_t w : widths_) {
        if (w == 0) {
            throw DomainError("ScoreNetwork: zero layer width");
        }
    }
    offsets_.assign(layer_count() + 1, 0);
    for (std::size_t l = 0; l < layer_count(); ++l) {
        offsets_[l + 1] = offsets_[l] + widths_[l] * widths_[l + 1] + widths_[l + 1];
    }
    params_.assign(offsets_.back(), 0.0);
}

std::span<const double> ScoreNetwork::weights(std::size_t layer) const {
    return std::span<const double>(params_).subspan(offsets_[layer],
                                                    widths_[layer] * widths_[layer + 1]);
}

std::span<const double> ScoreNetwork::bias(std::size_t layer) const {
    return std::span<const double>(params_).subspan(bias_offset(layer), widths_[layer + 1]);
}

void ScoreNetwork::zero_output_layer() {
    const std::size_t last = layer_count() - 1;
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(offsets_[last]), params_.end(), 0.0);
}

void ScoreNetwork::forward(std::span<const double> x, double log_sigma, Tape& tape) const {
    if (x.size() != data_dim()) {
        throw DomainError("ScoreNetwork::forward: input dimension mismatch");
    }
    tape.activations.resize(widths_.size());
    auto& input = tape.activations[0];
    input.assign(x.begin(), x.end());
    input.push_back(log_sigma);

    for (std::size_t l = 0; l < layer_count(); ++l) {
        const std::size_t in = widths_[l];
        const std::size_t out = widths_[l + 1];
        const double* w = params_.data() + offsets_[l];
        const double* b = params_.data() + bias_offset(l);
        const auto& a = tape.activations[l];
        auto& z = tape.activations[l + 1];
        z.resize(out);
        const bool hidden = l + 1 < layer_count();
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b[o];
            const double* row = w + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                acc += row[i] * a[i];
            }
            z[o] = hidden ? std::max(acc, 0.0) : acc;
        }
    }
}

void ScoreNetwork::backward(const Tape& tape, std::span<const double> output_grad,
                            std::span<double> param_grad) const {
    if (param_grad.size() != params_.size() || output_grad.size() != data_dim()) {
        throw DomainError("ScoreNetwork::backward: gradient size mismatch");
    }
    std::vector<double> delta(output_grad.begin(), output_grad.end());
    std::vector<double> prev;
    for (std::size_t l = layer_count(); l-- > 0;) {
        const std::size_t in = widths_[l];
        const std::size_t out = widths_[l + 1];
        const double* w = params_.data() + offsets_[l];
        double* gw = param_grad.data() + offsets_[l];
        double* gb = param_grad.data() + bias_offset(l);
        const auto& a = tape.activations[l];
        for (std::size_t o = 0; o < out; ++o) {
            gb[o] += delta[o];
            double* grow = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                grow[i] += delta[o] * a[i];
            }
        }
        if (l == 0) {
            break;
        }
        prev.assign(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double* row = w + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                prev[i] += row[i] * delta[o];
            }
        }
        // a is the ReLU output of layer l - 1; its derivative is 1 where a > 0.
        for (std::size_t i = 0; i < in; ++i) {
            if (a[i] <= 0.0) {
                prev[i] = 0.0;
            }
        }
        delta.swap(prev);
    }
}

void ScoreNetwork::forward(std::span<const double> x, double log_sigma,
                           std::span<double> out) const {
    thread_local Tape tape;
    forward(x, log_sigma, tape);
    if (out.size() != data_dim()) {
        throw DomainError("ScoreNetwork::forward: output dimension mismatch");
    }
    std::copy(tape.activations.back().begin(), tape.activations.back().end(), out.begin());
}

std::vector<double> ScoreNetwork::forward(std::span<const double> x, double log_sigma) const {
    std::vector<double> out(data_dim());
    forward(x, log_sigma, std::span<double>(out));
    return out;
}

bool ScoreNetwork::all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

ScoreFn network_score_fn(const ScoreNetwork& net) {
    return [&net](std::span<const double> x, double log_sigma, std::span<double> out) {
        net.forward(x, log_sigma, out);
    };
}

// ----------------------------- objective -----------------------------

double NoiseConfig::resolved_alpha_unit() const {
    if (alpha_unit) {
        if (!(*alpha_unit > 0.0)) {
            throw DomainError("NoiseConfig: alpha_unit must be positive");
        }
        return *alpha_unit;
    }
    return std::pow(beta, 1.0 / beta);
}

DsmBatch make_dsm_batch(const PointSet& clean, double sigma, const NoiseConfig& noise, Rng& rng) {
    if (!(sigma > 0.0)) {
        throw DomainError("make_dsm_batch: sigma must be positive");
    }
    const double alpha = sigma * noise.resolved_alpha_unit();
    const auto kernel = GeneralizedNormal::make(0.0, alpha, noise.beta);
    DsmBatch batch{PointSet(clean.dim(), clean.size()), PointSet(clean.dim(), clean.size())};
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const auto x = clean.row(i);
        auto noisy = batch.noisy.row(i);
        auto target = batch.targets.row(i);
        for (std::size_t j = 0; j < x.size(); ++j) {
            noisy[j] = x[j] + gn_sample_one(kernel, rng);
            target[j] = gn_score_clamped(noisy[j], x[j], alpha, noise.beta);
        }
    }
    return batch;
}

double dsm_loss_value(const PointSet& predictions, const PointSet& targets, double weight) {
    if (predictions.size() != targets.size() || predictions.dim() != targets.dim() ||
        predictions.empty()) {
        throw DomainError("dsm_loss_value: prediction/target shape mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        acc += 0.5 * squared_distance(predictions.row(i), targets.row(i));
    }
    return weight * acc / static_cast<double>(predictions.size());
}

LossAndGradient dsm_loss(const ScoreNetwork& net, const DsmBatch& batch, double sigma,
                         const NoiseConfig& noise) {
    const std::size_t count = batch.noisy.size();
    if (count == 0 || batch.noisy.dim() != net.data_dim()) {
        throw DomainError("dsm_loss: empty batch or dimension mismatch");
    }
    const double weight = std::pow(sigma, noise.weight_exponent);
    const double log_sigma = std::log(sigma);
    const double scale = weight / static_cast<double>(count);

    LossAndGradient result;
    result.gradient.assign(net.parameters().size(), 0.0);
    ScoreNetwork::Tape tape;
    std::vector<double> residual(net.data_dim());
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        net.forward(batch.noisy.row(i), log_sigma, tape);
        const auto out = tape.output();
        const auto target = batch.targets.row(i);
        double sq = 0.0;
        for (std::size_t j = 0; j < residual.size(); ++j) {
            const double r = out[j] - target[j];
            sq += r * r;
            residual[j] = scale * r;
        }
        acc += 0.5 * sq;
        net.backward(tape, residual, result.gradient);
    }
    result.loss = scale * acc;
    return result;
}

LossAndGradient dsm_loss(const ScoreNetwork& net, const PointSet& clean, double sigma,
                         const NoiseConfig& noise, Rng& rng) {
    return dsm_loss(net, make_dsm_batch(clean, sigma, noise, rng), sigma, noise);
}

// ----------------------------- training -----------------------------

void TrainConfig::validate() const {
    schedule.validate();
    if (batch_size < 1 || steps < 1) {
        throw DomainError("TrainConfig: batch_size and steps must be >= 1");
    }
    if (!(learning_rate > 0.0) || !(noise.beta > 0.0)) {
        throw DomainError("TrainConfig: learning_rate and beta must be positive");
    }
    (void)noise.resolved_alpha_unit();
}

namespace {

class AdamState {
public:
    explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t t_ = 0;
};

}  // namespace

TrainResult train(const PointSet& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) {
        throw DomainError("train: empty dataset");
    }
    TrainResult result{ScoreNetwork::make(data.dim(), cfg.hidden, cfg.seed), {}, {}};
    result.losses.reserve(cfg.steps);
    result.levels.reserve(cfg.steps);

    Rng rng = make_rng(cfg.seed, 0x7121u);
    std::uniform_int_distribution<std::size_t> pick_level(0, cfg.schedule.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_point(0, data.size() - 1);
    AdamState adam(result.net.parameters().size());
    PointSet batch(data.dim(), cfg.batch_size);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const std::size_t level = pick_level(rng);
        const double sigma = cfg.schedule.sigmas[level];
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            const auto src = data.row(pick_point(rng));
            std::copy(src.begin(), src.end(), batch.row(i).begin());
        }
        const auto lg = dsm_loss(result.net, batch, sigma, cfg.noise, rng);
        if (!std::isfinite(lg.loss)) {
            throw TrainingError("train: non-finite loss at step " + std::to_string(step) +
                                    " (sigma " + std::to_string(sigma) + ")",
                                step, sigma);
        }
        auto params = result.net.parameters();
        if (cfg.optimizer == Optimizer::adam) {
            adam.step(params, lg.gradient, cfg.learning_rate);
        } else {
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i] -= cfg.learning_rate * lg.gradient[i];
            }
        }
        if (!result.net.all_finite()) {
            throw TrainingError("train: non-finite parameters after step " +
                                    std::to_string(step) + " (sigma " + std::to_string(sigma) +
                                    ")",
                                step, sigma);
        }
        result.losses.push_back(lg.loss);
        result.levels.push_back(static_cast<std::uint32_t>(level));
    }
    return result;
}

LossSummary summarize_losses(std::span<const double> losses, double fraction) {
    if (losses.empty() || !(fraction > 0.0 && fraction <= 0.5)) {
        throw DomainError("summarize_losses: need nonempty curve and fraction in (0, 0.5]");
    }
    const auto window = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(losses.size()))));
    const auto mean = [](std::span<const double> s) {
        return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    };
    return {mean(losses.first(window)), mean(losses.last(window))};
}

}  // namespace htdsm
