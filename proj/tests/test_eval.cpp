#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "inflow/baselines.hpp"
#include "inflow/eval.hpp"

using namespace inflow;
using namespace inflow::testing;

namespace {

Pipeline linear_pipeline(std::unique_ptr<Transform> t, std::size_t L, std::size_t H, std::size_t D, double w = 0.0,
                         double b = 0.0) {
    Rng rng(1);
    ForecasterConfig fc;
    fc.kind = BackboneKind::linear;
    fc.lookback = L;
    fc.horizon = H;
    fc.variates = D;
    auto f = make_forecaster(fc, rng);
    auto* lin = dynamic_cast<LinearForecaster*>(f.get());
    lin->map().weight.value.fill(w);
    lin->map().bias.value.fill(b);
    return Pipeline(std::move(t), std::move(f));
}

std::vector<WindowPair> random_windows(std::size_t n, std::size_t L, std::size_t H, std::size_t D, Rng& rng) {
    std::vector<WindowPair> ws;
    for (std::size_t i = 0; i < n; ++i)
        ws.push_back({random_tensor({L, D}, rng), random_tensor({H, D}, rng), L + i, WindowRole::test});
    return ws;
}

}  // namespace

TEST_CASE("constant-zero forecaster") {
    auto p = linear_pipeline(std::make_unique<IdentityTransform>(), 3, 2, 1);
    std::vector<WindowPair> ws;
    for (int i = 0; i < 4; ++i) ws.push_back({Tensor({3, 1}, 1.0 * i), Tensor({2, 1}, -3.0), 3u + i, WindowRole::test});
    const auto r = evaluate(p, ws, {});
    CHECK(r.mse == doctest::Approx(9.0).epsilon(1e-15));
    CHECK(r.mae == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("perfect forecaster") {
    auto p = linear_pipeline(std::make_unique<IdentityTransform>(), 3, 2, 2, 0.0, 0.75);
    Rng rng(2);
    auto ws = random_windows(5, 3, 2, 2, rng);
    for (auto& w : ws) w.y.fill(0.75);
    const auto r = evaluate(p, ws, {});
    CHECK(r.mse == 0.0);
    CHECK(r.mae == 0.0);
}

TEST_CASE("metrics match a brute-force recomputation") {
    Rng rng(3);
    auto p = linear_pipeline(std::make_unique<RevInTransform>(2), 6, 3, 2);
    randomize(p.theta(), rng, 0.5);
    randomize(p.phi(), rng, 0.5);
    const auto ws = random_windows(37, 6, 3, 2, rng);
    EvalOptions opt;
    opt.chunk = 8;
    const auto r = evaluate(p, ws, opt);
    double se = 0.0, ae = 0.0;
    std::size_t n = 0;
    for (const auto& w : ws) {
        const Tensor pred = p.predict(w.x.reshaped({1, 6, 2}));
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t d = 0; d < 2; ++d) {
                const double diff = pred.at(0, t, d) - w.y.at(t, d);
                se += diff * diff;
                ae += std::fabs(diff);
                ++n;
            }
    }
    CHECK(std::abs(r.mse - se / n) < 1e-10);
    CHECK(std::abs(r.mae - ae / n) < 1e-10);
    CHECK(mean_squared_error(Tensor::vector({1, 2}), Tensor::vector({1, 3})) == 0.5);
    CHECK(mean_absolute_error(Tensor::vector({1, 2}), Tensor::vector({1, 4})) == 1.0);
}

TEST_CASE("z-scored windows are scored in original units") {
    auto p = linear_pipeline(std::make_unique<IdentityTransform>(), 3, 2, 1);
    ZScoreStats stats{{10.0}, {4.0}};
    std::vector<WindowPair> ws = {{Tensor({3, 1}, 0.0), Tensor({2, 1}, 0.5), 3, WindowRole::test}};
    EvalOptions opt;
    opt.zscored = true;
    CHECK_THROWS_AS(evaluate(p, ws, opt), ContractError);
    opt.stats = &stats;
    const auto r = evaluate(p, ws, opt);
    // prediction 0 -> 10, truth 0.5 -> 12
    CHECK(r.mse == doctest::Approx(4.0));
    CHECK(r.mae == doctest::Approx(2.0));
}

TEST_CASE("report scale factors") {
    auto p = linear_pipeline(std::make_unique<IdentityTransform>(), 3, 2, 1);
    std::vector<WindowPair> ws = {{Tensor({3, 1}, 0.0), Tensor({2, 1}, 2.0), 3, WindowRole::test}};
    EvalOptions opt;
    opt.mse_scale = 0.1;
    const auto r = evaluate(p, ws, opt);
    CHECK(r.mse == 4.0);
    CHECK(r.reported_mse() == doctest::Approx(0.4));
    CHECK(r.reported_mae() == 2.0);
    const auto j = r.to_json();
    CHECK(j["mse"] == 4.0);
    CHECK(j["reported_mse"].get<double>() == doctest::Approx(0.4));
}

TEST_CASE("seed aggregation") {
    const auto one = aggregate_seeds({{1, 2.0, 1.0}});
    CHECK(one.mse_mean == 2.0);
    CHECK(one.mse_std == 0.0);
    const auto four = aggregate_seeds({{1, 1.0, 1.0}, {2, 2.0, 1.0}, {3, 3.0, 1.0}, {4, 4.0, 1.0}});
    CHECK(four.mse_mean == 2.5);
    CHECK(four.mse_std == doctest::Approx(std::sqrt(1.25)));
    CHECK(four.mae_std == 0.0);
    CHECK(four.per_seed.size() == 4);
    CHECK_THROWS_AS(aggregate_seeds({}), ContractError);
}

TEST_CASE("identity trace") {
    auto p = linear_pipeline(std::make_unique<IdentityTransform>(), 4, 3, 2, 0.1, 0.2);
    Rng rng(5);
    const auto w = random_windows(1, 4, 3, 2, rng).front();
    const TraceRecord t = dump_forecast_trace(p, w);
    CHECK(t.rows() == 7);
    CHECK(t.x_tilde == t.x);
    CHECK(t.y_hat == t.y_tilde);
    CHECK(t.y == w.y);

    std::istringstream csv(t.to_csv());
    std::string line;
    std::getline(csv, line);
    CHECK(line == "step_index,stage,variate,value");
    std::size_t rows = 0, max_step = 0;
    while (std::getline(csv, line)) {
        ++rows;
        max_step = std::max<std::size_t>(max_step, std::stoul(line.substr(0, line.find(','))));
    }
    CHECK(rows == (2 * 4 + 3 * 3) * 2);
    CHECK(max_step + 1 == t.rows());
}

TEST_CASE("revin trace has the shift as its lookback mean") {
    auto revin = std::make_unique<RevInTransform>(2);
    revin->shift.value = Tensor::vector({0.4, -0.6});
    auto p = linear_pipeline(std::move(revin), 8, 3, 2);
    Rng rng(6);
    const auto w = random_windows(1, 8, 3, 2, rng).front();
    const TraceRecord t = dump_forecast_trace(p, w);
    for (std::size_t d = 0; d < 2; ++d) {
        double m = 0.0;
        for (std::size_t s = 0; s < 8; ++s) m += t.x_tilde.at(s, d);
        CHECK(m / 8.0 == doctest::Approx(d == 0 ? 0.4 : -0.6).epsilon(1e-10));
    }
}
