#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "refinegan/optim.hpp"

namespace rg = refinegan;

namespace {

struct Scalar {
    double value = 1.0;
    double grad = 0.0;
    std::vector<rg::ParamRef<double>> params() {
        return {{&value, &grad, 1, "w"}};
    }
};

}  // namespace

TEST(Optim, RmspropMatchesClosedForm) {
    Scalar p;
    auto refs = p.params();
    rg::Optimizer<double> opt(rg::rmsprop_spec(), refs);

    double w = 1.0, acc = 0.0;
    const double lr = 0.001, rho = 0.9, eps = 1e-8;
    for (int t = 0; t < 10; ++t) {
        const double g = 0.5 + 0.1 * t;
        p.grad = g;
        opt.step(refs);
        acc = rho * acc + (1.0 - rho) * g * g;
        w -= lr * g / std::sqrt(acc + eps);
        ASSERT_NEAR(p.value, w, 1e-12) << "step " << t;
    }
}

TEST(Optim, AdadeltaMatchesClosedForm) {
    Scalar p;
    auto refs = p.params();
    rg::Optimizer<double> opt(rg::adadelta_spec(), refs);

    double w = 1.0, acc = 0.0, acc_d = 0.0;
    const double rho = 0.95, eps = 1e-6;
    for (int t = 0; t < 10; ++t) {
        const double g = 1.0 - 0.05 * t;
        p.grad = g;
        opt.step(refs);
        acc = rho * acc + (1.0 - rho) * g * g;
        const double delta = -std::sqrt(acc_d + eps) / std::sqrt(acc + eps) * g;
        w += delta;
        acc_d = rho * acc_d + (1.0 - rho) * delta * delta;
        ASSERT_NEAR(p.value, w, 1e-12) << "step " << t;
    }
}

TEST(Optim, AdadeltaFirstStepIsTiny) {
    // sqrt(eps)/sqrt((1-rho)g^2+eps) ~ 4.5e-3 for unit gradient: the scheme
    // warms up from the delta accumulator, it does not need a tuned rate.
    Scalar p;
    auto refs = p.params();
    rg::Optimizer<double> opt(rg::adadelta_spec(), refs);
    p.grad = 1.0;
    opt.step(refs);
    EXPECT_LT(std::abs(p.value - 1.0), 0.01);
    EXPECT_GT(std::abs(p.value - 1.0), 1e-4);
}

TEST(Optim, ZeroGradientLeavesRmspropParameterAlone) {
    Scalar p;
    auto refs = p.params();
    rg::Optimizer<double> opt(rg::rmsprop_spec(), refs);
    p.grad = 0.0;
    opt.step(refs);
    EXPECT_EQ(p.value, 1.0);
}

TEST(Optim, NonFiniteGradientThrowsNamingTensor) {
    Scalar p;
    auto refs = p.params();
    rg::Optimizer<double> opt(rg::rmsprop_spec(), refs);
    p.grad = std::numeric_limits<double>::quiet_NaN();
    try {
        opt.step(refs);
        FAIL() << "expected DivergenceError";
    } catch (const rg::DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("w"), std::string::npos);
    }
    p.grad = std::numeric_limits<double>::infinity();
    EXPECT_THROW(opt.step(refs), rg::DivergenceError);
}

TEST(Optim, SpecValidation) {
    auto bad = rg::rmsprop_spec();
    bad.lr = 0.0;
    EXPECT_THROW(bad.validate(), rg::ConfigError);
    bad = rg::rmsprop_spec();
    bad.rho = 1.0;
    EXPECT_THROW(bad.validate(), rg::ConfigError);
    bad = rg::rmsprop_spec();
    bad.eps = -1e-8;
    EXPECT_THROW(bad.validate(), rg::ConfigError);
    EXPECT_NO_THROW(rg::adadelta_spec().validate());
}

TEST(Optim, DefaultSpecs) {
    const auto r = rg::rmsprop_spec();
    EXPECT_EQ(r.kind, rg::OptimizerSpec::Kind::rmsprop);
    EXPECT_DOUBLE_EQ(r.lr, 0.001);
    EXPECT_DOUBLE_EQ(r.rho, 0.9);
    EXPECT_DOUBLE_EQ(r.eps, 1e-8);
    const auto a = rg::adadelta_spec();
    EXPECT_EQ(a.kind, rg::OptimizerSpec::Kind::adadelta);
    EXPECT_DOUBLE_EQ(a.lr, 1.0);
    EXPECT_DOUBLE_EQ(a.rho, 0.95);
    EXPECT_DOUBLE_EQ(a.eps, 1e-6);
}

TEST(Optim, KindNamesRoundTrip) {
    EXPECT_EQ(rg::parse_optimizer_kind("rmsprop"), rg::OptimizerSpec::Kind::rmsprop);
    EXPECT_EQ(rg::parse_optimizer_kind("adadelta"), rg::OptimizerSpec::Kind::adadelta);
    EXPECT_EQ(rg::to_string(rg::OptimizerSpec::Kind::rmsprop), "rmsprop");
    EXPECT_EQ(rg::to_string(rg::OptimizerSpec::Kind::adadelta), "adadelta");
    EXPECT_THROW(rg::parse_optimizer_kind("sgd"), rg::ConfigError);
}

TEST(Optim, ChangedParameterListRejected) {
    Scalar p;
    auto refs = p.params();
    rg::Optimizer<double> opt(rg::rmsprop_spec(), refs);
    std::vector<rg::ParamRef<double>> two = refs;
    two.push_back(refs[0]);
    EXPECT_THROW(opt.step(two), rg::DataError);
}

TEST(Optim, RmspropDecreasesSimpleQuadratic) {
    // f(w) = w^2 from w=1. The normalized step is roughly lr per iteration,
    // so the walk to zero takes about 1/lr = 1000 steps.
    Scalar p;
    auto refs = p.params();
    rg::Optimizer<double> opt(rg::rmsprop_spec(), refs);
    for (int t = 0; t < 2000; ++t) {
        p.grad = 2.0 * p.value;
        opt.step(refs);
    }
    EXPECT_LT(std::abs(p.value), 0.05);
}
