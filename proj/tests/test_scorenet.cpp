#include "htdsm/distributions.hpp"
#include "htdsm/scorenet.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace htdsm;

TEST_CASE("two-mode mixture layout") {
    const auto m = MixtureSpec::two_mode(10.0);
    CHECK(m.components() == 2);
    CHECK(m.dim() == 2);
    CHECK(m.weights[0] == doctest::Approx(10.0 / 11.0));
    CHECK(m.majority_component() == 0);
    CHECK(m.means[0][0] == 2.5);
    CHECK(m.means[1][1] == -2.5);
    CHECK_THROWS_AS(MixtureSpec::two_mode(0.5), DomainError);
    MixtureSpec bad = m;
    bad.weights = {0.5, 0.6};
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("stratified sampling yields exact counts") {
    const auto m = MixtureSpec::two_mode(10.0);
    Rng rng(1);
    const auto pts = m.sample_stratified(11000, rng);
    CHECK(pts.size() == 11000);
    std::size_t positive = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts.row(i)[0] + pts.row(i)[1] > 0) ++positive;
    }
    CHECK(positive == 10000);
}

TEST_CASE("analytic mixture score matches finite differences of the log density") {
    MixtureSpec m;
    m.means = {{1.0, -1.0}, {-2.0, 0.5}, {0.0, 3.0}};
    m.stds = {0.5, 1.0, 0.3};
    m.weights = {0.2, 0.5, 0.3};
    for (double smoothing : {0.0, 0.25, 1.0}) {
        for (auto x : std::vector<std::vector<double>>{{0.0, 0.0}, {1.5, -0.7}, {-3.0, 2.0}}) {
            const auto s = analytic_mixture_score(x, m, smoothing);
            for (std::size_t j = 0; j < 2; ++j) {
                auto xp = x, xm = x;
                const double h = 1e-5;
                xp[j] += h;
                xm[j] -= h;
                const double fd =
                    (mixture_log_density(xp, m, smoothing) - mixture_log_density(xm, m, smoothing)) /
                    (2 * h);
                CHECK(std::abs(s[j] - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
            }
        }
    }
}

TEST_CASE("single Gaussian score is linear and the mixture score is stable far away") {
    MixtureSpec g;
    g.means = {{1.0, 2.0}};
    g.stds = {2.0};
    g.weights = {1.0};
    const std::vector<double> x{3.0, -1.0};
    const auto s = analytic_mixture_score(x, g, 1.0);
    CHECK(s[0] == doctest::Approx(-(3.0 - 1.0) / 5.0));
    CHECK(s[1] == doctest::Approx(-(-1.0 - 2.0) / 5.0));
    const auto far = analytic_mixture_score(std::vector<double>{500.0, 500.0},
                                            MixtureSpec::two_mode(10.0), 0.0);
    CHECK(std::isfinite(far[0]));
    CHECK(far[0] == doctest::Approx(-(500.0 - 2.5) / 0.25));
}

TEST_CASE("network forward with hand-set parameters") {
    // widths {2, 2, 1}: input (x, log sigma), one hidden ReLU layer.
    std::vector<double> p{1.0, 0.0,   // W0 row 0
                          0.0, -1.0,  // W0 row 1
                          0.5, 0.0,   // b0
                          2.0, 3.0,   // W1
                          -1.0};      // b1
    ScoreNetwork net({2, 2, 1}, p);
    CHECK(net.data_dim() == 1);
    CHECK(net.layer_count() == 2);
    // h = relu(x + 0.5, -log sigma) ; out = 2 h0 + 3 h1 - 1.
    CHECK(net.forward(std::vector<double>{1.0}, std::log(0.5))[0] ==
          doctest::Approx(2 * 1.5 + 3 * std::log(2.0) - 1));
    CHECK(net.forward(std::vector<double>{-2.0}, 1.0)[0] == doctest::Approx(-1.0));
    CHECK_THROWS_AS(ScoreNetwork({2, 2, 1}, std::vector<double>(3)), DomainError);
    CHECK_THROWS_AS(ScoreNetwork({3, 1}, std::vector<double>(4)), DomainError);
}

TEST_CASE("network initialization bounds and determinism") {
    const auto a = ScoreNetwork::make(2, {16, 16}, 4);
    const auto b = ScoreNetwork::make(2, {16, 16}, 4);
    CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
    CHECK(a.parameters().size() == 3 * 16 + 16 + 16 * 16 + 16 + 16 * 2 + 2);
    for (std::size_t l = 0; l < a.layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(double(a.widths()[l]));
        for (double w : a.weights(l)) CHECK(std::abs(w) <= bound);
        for (double w : a.bias(l)) CHECK(std::abs(w) <= bound);
    }
    auto z = a;
    z.zero_output_layer();
    const auto out = z.forward(std::vector<double>{1.0, -3.0}, 0.2);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
}

TEST_CASE("DSM gradient matches central differences") {
    const auto m = MixtureSpec::two_mode(3.0);
    Rng rng(2);
    const auto clean = m.sample_stratified(40, rng);
    for (double beta : {1.0, 2.0}) {
        auto net = ScoreNetwork::make(2, {8, 8}, 3);
        NoiseConfig noise{beta, std::nullopt, 2.0};
        Rng brng(5);
        const auto batch = make_dsm_batch(clean, 0.7, noise, brng);
        const auto lg = dsm_loss(net, batch, 0.7, noise);
        auto params = net.parameters();
        for (std::size_t i = 0; i < params.size(); i += 7) {
            const double saved = params[i];
            const double h = 1e-6;
            params[i] = saved + h;
            const double up = dsm_loss(net, batch, 0.7, noise).loss;
            params[i] = saved - h;
            const double down = dsm_loss(net, batch, 0.7, noise).loss;
            params[i] = saved;
            const double fd = (up - down) / (2 * h);
            CHECK(std::abs(lg.gradient[i] - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("DSM batch targets are conditional GN scores") {
    PointSet clean(2, std::vector<double>{0.0, 1.0, -2.0, 0.5});
    for (double beta : {1.0, 1.5, 2.0}) {
        NoiseConfig noise{beta, std::nullopt, 2.0};
        Rng rng(8);
        const auto batch = make_dsm_batch(clean, 0.5, noise, rng);
        const double alpha = 0.5 * std::pow(beta, 1.0 / beta);
        for (std::size_t i = 0; i < clean.size(); ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
                const double expect =
                    gn_score(batch.noisy.row(i)[j], clean.row(i)[j], alpha, beta).value();
                CHECK(batch.targets.row(i)[j] == doctest::Approx(expect));
            }
        }
    }
}

TEST_CASE("default noise scale gives the standard normal and Laplace kernels") {
    CHECK(NoiseConfig{2.0, std::nullopt, 2.0}.resolved_alpha_unit() == doctest::Approx(std::sqrt(2.0)));
    CHECK(NoiseConfig{1.0, std::nullopt, 2.0}.resolved_alpha_unit() == 1.0);
    CHECK(NoiseConfig{1.0, 0.3, 2.0}.resolved_alpha_unit() == 0.3);
    CHECK_THROWS_AS((NoiseConfig{1.0, -1.0, 2.0}.resolved_alpha_unit()), DomainError);
}

TEST_CASE("DSM loss value") {
    PointSet a(2, std::vector<double>{1.0, 0.0, 0.0, 0.0});
    PointSet b(2, std::vector<double>{0.0, 0.0, 0.0, 2.0});
    CHECK(dsm_loss_value(a, b, 4.0) == doctest::Approx(4.0 * (0.5 + 2.0) / 2.0));
    CHECK_THROWS_AS(dsm_loss_value(a, PointSet(2, 1), 1.0), DomainError);
}

TEST_CASE("short training run lowers the loss and is reproducible") {
    const auto m = MixtureSpec::two_mode(1.0);
    Rng rng(3);
    const auto data = m.sample_stratified(2000, rng);
    TrainConfig cfg;
    cfg.steps = 1500;
    cfg.learning_rate = 1e-2;
    cfg.seed = 6;
    const auto r = train(data, cfg);
    CHECK(r.losses.size() == cfg.steps);
    CHECK(r.levels.size() == cfg.steps);
    CHECK(summarize_losses(r.losses).converged());
    const auto r2 = train(data, cfg);
    CHECK(r.losses == r2.losses);
}

TEST_CASE("training raises TrainingError on divergence") {
    const auto m = MixtureSpec::two_mode(1.0);
    Rng rng(3);
    const auto data = m.sample_stratified(200, rng);
    TrainConfig cfg;
    cfg.steps = 500;
    cfg.learning_rate = 1e6;
    try {
        train(data, cfg);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(e.step() < cfg.steps);
        CHECK(e.sigma() > 0.0);
    }
}

TEST_CASE("training config validation") {
    TrainConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    CHECK_THROWS_AS(train(PointSet{}, TrainConfig{}), DomainError);
}

TEST_CASE("loss summary") {
    std::vector<double> l(100);
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = 100.0 - double(i);
    const auto s = summarize_losses(l, 0.1);
    CHECK(s.first == doctest::Approx(95.5));
    CHECK(s.last == doctest::Approx(5.5));
    CHECK(s.converged());
}

TEST_CASE("backward matches finite differences on a 2-4-2 network for every tensor") {
    auto net = ScoreNetwork::make(2, {4}, 10);
    const std::vector<double> x{0.3, -0.8};
    const std::vector<double> upstream{0.7, -1.1};
    ScoreNetwork::Tape tape;
    net.forward(x, -0.4, tape);
    std::vector<double> grad(net.parameters().size(), 0.0);
    net.backward(tape, upstream, grad);
    const auto objective = [&] {
        const auto out = net.forward(x, -0.4);
        return upstream[0] * out[0] + upstream[1] * out[1];
    };
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + 1e-6;
        const double up = objective();
        params[i] = saved - 1e-6;
        const double down = objective();
        params[i] = saved;
        const double fd = (up - down) / 2e-6;
        CHECK(std::abs(grad[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("one-point dataset: training approaches the exact conditional score") {
    PointSet data(2, std::vector<double>{0.5, -1.0});
    TrainConfig cfg;
    cfg.schedule = NoiseSchedule::from_levels({1.0});
    cfg.steps = 3000;
    cfg.learning_rate = 1e-2;
    cfg.seed = 2;
    const NoiseConfig noise = cfg.noise;
    const auto gap = [&](const ScoreNetwork& net) {
        // With one data point the conditional score is the exact DSM minimizer.
        Rng rng(5);
        PointSet clean(2, 0);
        for (int i = 0; i < 2000; ++i) clean.push_back(data.row(0));
        const auto batch = make_dsm_batch(clean, 1.0, noise, rng);
        double acc = 0.0;
        for (std::size_t i = 0; i < clean.size(); ++i) {
            acc += squared_distance(net.forward(batch.noisy.row(i), 0.0), batch.targets.row(i));
        }
        return acc / double(clean.size());
    };
    const double before = gap(ScoreNetwork::make(2, cfg.hidden, cfg.seed));
    cfg.steps = 300;
    const double middle = gap(train(data, cfg).net);
    cfg.steps = 3000;
    const double after = gap(train(data, cfg).net);
    CHECK(middle < before);
    CHECK(after < middle);
    CHECK(after < 0.05 * before);
}

TEST_CASE("weighted per-level losses stay within an order of magnitude") {
    const auto m = MixtureSpec::two_mode(1.0);
    Rng rng(4);
    const auto data = m.sample_stratified(2000, rng);
    TrainConfig cfg;
    cfg.schedule = NoiseSchedule::from_levels({2.0, 1.0, 0.5, 0.25});
    cfg.steps = 4000;
    cfg.learning_rate = 1e-2;
    cfg.seed = 8;
    const auto r = train(data, cfg);
    std::vector<double> sum(4, 0.0), count(4, 0.0);
    for (std::size_t i = r.losses.size() * 9 / 10; i < r.losses.size(); ++i) {
        sum[r.levels[i]] += r.losses[i];
        count[r.levels[i]] += 1.0;
    }
    double lo = 1e300, hi = 0.0;
    for (std::size_t l = 0; l < 4; ++l) {
        const double mean = sum[l] / count[l];
        lo = std::min(lo, mean);
        hi = std::max(hi, mean);
    }
    CHECK(hi / lo < 10.0);
}
