#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "inflow/baselines.hpp"
#include "inflow/flow.hpp"
#include "inflow/pipeline.hpp"

using namespace inflow;
using namespace inflow::testing;

namespace {

ForecasterConfig small(BackboneKind kind, std::size_t d, bool per_variate = true) {
    ForecasterConfig c;
    c.kind = kind;
    c.lookback = 6;
    c.horizon = 4;
    c.variates = d;
    c.hidden_width = 8;
    c.depth = 2;
    c.nbeats_depth = 2;
    c.nbeats_blocks = 2;
    c.per_variate = per_variate;
    return c;
}

const BackboneKind kKinds[] = {BackboneKind::linear, BackboneKind::mlp, BackboneKind::nbeats_lite};

}  // namespace

TEST_CASE("forecast shapes and errors") {
    for (auto kind : kKinds)
        for (bool pv : {true, false}) {
            Rng rng(1);
            auto f = make_forecaster(small(kind, 3, pv), rng);
            ad::Tape tape(false);
            Rng data(2);
            auto y = f->forecast(tape, tape.constant(random_tensor({5, 6, 3}, data)));
            CHECK(y.shape() == Shape{5, 4, 3});
            CHECK_THROWS_AS(f->forecast(tape, tape.constant(Tensor({5, 7, 3}))), DimensionError);
            CHECK_THROWS_AS(f->forecast(tape, tape.constant(Tensor({5, 6, 2}))), DimensionError);
        }
    ForecasterConfig bad = small(BackboneKind::mlp, 1);
    bad.horizon = 0;
    Rng rng(1);
    CHECK_THROWS_AS(make_forecaster(bad, rng), ConfigError);
    CHECK_THROWS_AS(backbone_from_string("transformer"), ConfigError);
}

TEST_CASE("linear forecaster applies one map to every variate") {
    Rng rng(3);
    ForecasterConfig c = small(BackboneKind::linear, 2);
    c.lookback = 2;
    c.horizon = 1;
    LinearForecaster f(c, rng);
    f.map().weight.value = Tensor({2, 1}, std::vector<double>{2.0, -1.0});
    f.map().bias.value = Tensor::vector({0.5});
    ad::Tape tape(false);
    // x[t, d]: variate 0 = (1, 3), variate 1 = (10, 4)
    const Tensor x({1, 2, 2}, std::vector<double>{1, 10, 3, 4});
    const Tensor y = f.forecast(tape, tape.constant(x)).value();
    CHECK(y.at(0, 0, 0) == doctest::Approx(2 * 1 - 3 + 0.5));
    CHECK(y.at(0, 0, 1) == doctest::Approx(2 * 10 - 4 + 0.5));
}

TEST_CASE("per-variate backbones commute with variate reordering") {
    for (auto kind : kKinds) {
        Rng rng(4);
        auto f = make_forecaster(small(kind, 3), rng);
        Rng data(5);
        const Tensor x = random_tensor({2, 6, 3}, data);
        ad::Tape tape(false);
        const Tensor y = f->forecast(tape, tape.constant(x)).value();
        const Tensor yr = f->forecast(tape, permute_reverse(tape.constant(x))).value();
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < 4; ++t)
                for (std::size_t d = 0; d < 3; ++d) CHECK(yr.at(b, t, d) == doctest::Approx(y.at(b, t, 2 - d)).epsilon(1e-13));
    }
}

TEST_CASE("nbeats blocks have lookback backcasts and horizon forecasts") {
    Rng rng(6);
    NBeatsLiteForecaster f(small(BackboneKind::nbeats_lite, 2), rng);
    REQUIRE(f.blocks().size() == 2);
    for (auto& b : f.blocks()) {
        CHECK(b.backcast->out_features() == 6);
        CHECK(b.forecast->out_features() == 4);
        CHECK(b.trunk->layers().size() == 2);
    }
    ad::Tape tape(false);
    Rng data(7);
    (void)f.forecast(tape, tape.constant(random_tensor({3, 6, 2}, data)));
    CHECK(f.last_residual().shape() == Shape{6, 6});
}

TEST_CASE("backbone gradients match central differences") {
    for (auto kind : kKinds)
        for (bool pv : {true, false}) {
            Rng rng(8);
            auto f = make_forecaster(small(kind, 2, pv), rng);
            randomize(f->parameters(), rng, 0.5);
            LossFn loss = [&](ad::Tape& tape, const std::vector<ad::Var>& in) {
                return weighted_sum(tape, f->forecast(tape, in[0]));
            };
            const auto r = gradcheck(loss, {random_tensor({3, 6, 2}, rng)}, rng, 36);
            INFO(to_string(kind) << " per_variate=" << pv << " input " << r.max_rel_error);
            CHECK(r.max_rel_error < 1e-4);
            const Tensor x = random_tensor({3, 6, 2}, rng);
            const auto rp = gradcheck_params(
                [&](ad::Tape& tape) { return weighted_sum(tape, f->forecast(tape, tape.constant(x))); },
                f->parameters(), rng, 6);
            INFO(to_string(kind) << " per_variate=" << pv << " params " << rp.max_rel_error);
            CHECK(rp.max_rel_error < 1e-4);
        }
}

TEST_CASE("revin matches a single instance-norm stack") {
    Rng rng(9);
    RevInTransform revin(3);
    std::vector<std::unique_ptr<FlowLayer>> layers;
    auto norm = std::make_unique<InstanceNormLayer>("n", 3);
    InstanceNormLayer* raw = norm.get();
    layers.push_back(std::move(norm));
    FlowStack stack(std::move(layers));
    randomize(revin.parameters(), rng, 0.5);
    raw->log_scale.value = revin.log_scale.value;
    raw->shift.value = revin.shift.value;

    const Tensor x = random_tensor({4, 10, 3}, rng, -30.0, 30.0);
    const Tensor y = random_tensor({4, 5, 3}, rng);
    ad::Tape tape(false);
    const Tensor a = revin.forward(tape, tape.constant(x)).value();
    const Tensor b = stack.forward(tape, tape.constant(x)).value();
    CHECK(max_abs_diff(a, b) < 1e-12);
    const Tensor ai = revin.inverse(tape, tape.constant(y)).value();
    const Tensor bi = stack.inverse(tape, tape.constant(y)).value();
    CHECK(max_abs_diff(ai, bi) < 1e-12);
}

TEST_CASE("revin roundtrip, errors and non-affine mode") {
    Rng rng(10);
    RevInTransform revin(2);
    randomize(revin.parameters(), rng);
    const Tensor x = random_tensor({3, 8, 2}, rng);
    ad::Tape tape(false);
    CHECK_THROWS_AS(revin.inverse(tape, tape.constant(x)), ContractError);
    const Tensor back = revin.inverse(tape, revin.forward(tape, tape.constant(x))).value();
    CHECK(max_abs_diff(back, x) < 1e-12);
    CHECK_THROWS_AS(revin.inverse(tape, tape.constant(Tensor({2, 8, 2}))), ContractError);

    RevInTransform plain(2, false);
    CHECK(plain.parameters().empty());
}

TEST_CASE("revin output mean equals the shift") {
    Rng rng(11);
    RevInTransform revin(2);
    revin.shift.value = Tensor::vector({0.25, -1.5});
    revin.log_scale.value = Tensor::vector({0.3, -0.2});
    ad::Tape tape(false);
    const Tensor xt = revin.forward(tape, tape.constant(random_tensor({2, 12, 2}, rng, -9.0, 9.0))).value();
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t d = 0; d < 2; ++d) {
            double m = 0.0;
            for (std::size_t t = 0; t < 12; ++t) m += xt.at(b, t, d);
            CHECK(m / 12.0 == doctest::Approx(revin.shift.value[d]).epsilon(1e-10));
        }
}

TEST_CASE("identity transform") {
    IdentityTransform id;
    Rng rng(12);
    const Tensor x = random_tensor({2, 3, 2}, rng);
    ad::Tape tape;
    auto v = tape.variable(x);
    auto y = id.inverse(tape, id.forward(tape, v));
    CHECK(y.value() == x);
    tape.backward(ad::sum_all(y));
    CHECK(tape.grad(v) == Tensor({2, 3, 2}, 1.0));
    CHECK(id.parameters().empty());
}

TEST_CASE("revin and full pipeline gradients match central differences") {
    Rng rng(13);
    {
        RevInTransform revin(2);
        randomize(revin.parameters(), rng, 0.5);
        const Tensor y = random_tensor({2, 4, 2}, rng);
        auto body = [&](ad::Tape& tape, ad::Var x) {
            auto xt = revin.forward(tape, x);
            return weighted_sum(tape, xt) + weighted_sum(tape, revin.inverse(tape, tape.constant(y) + ad::slice(xt, 1, 0, 4)), 3);
        };
        const auto r = gradcheck([&](ad::Tape& t, const std::vector<ad::Var>& in) { return body(t, in[0]); },
                                 {random_tensor({2, 6, 2}, rng)}, rng, 24);
        CHECK(r.max_rel_error < 1e-4);
        const Tensor x = random_tensor({2, 6, 2}, rng);
        const auto rp = gradcheck_params([&](ad::Tape& t) { return body(t, t.constant(x)); }, revin.parameters(), rng);
        CHECK(rp.max_rel_error < 1e-4);
    }
    for (auto kind : kKinds) {
        Rng init(14);
        FlowOptions opt;
        opt.coupling_width = 8;
        Pipeline p(make_flow_stack(FlowVariant::pre_norm, 2, 3, opt, init), make_forecaster(small(kind, 3), init));
        randomize(p.phi(), init, 0.4);
        const Tensor x = random_tensor({2, 6, 3}, rng);
        const Tensor y = random_tensor({2, 4, 3}, rng);
        auto loss = [&](ad::Tape& t) {
            return ad::mean_all(ad::square(p.predict(t, t.constant(x)) - t.constant(y)));
        };
        auto params = p.theta();
        for (auto* q : p.phi()) params.push_back(q);
        const auto rp = gradcheck_params(loss, params, rng, 4);
        INFO(to_string(kind) << " pipeline " << rp.max_rel_error << " over " << rp.probes);
        CHECK(rp.max_rel_error < 1e-4);
    }
}
