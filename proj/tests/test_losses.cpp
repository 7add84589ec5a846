// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cortex/losses.hpp"
#include "cortex/ops.hpp"
#include "gradcheck.hpp"

using namespace cortex;
using cortex::testing::check_gradients;
using cortex::testing::random_tensor;

TEST_CASE("mse examples and properties", "[mse]") {
    Tensor<double> a({3}, std::vector<double>{1, 2, 3});
    Tensor<double> b({3}, std::vector<double>{1, 2, 6});
    CHECK(mse(a, a).item() == 0.0);
    CHECK(mse(a, b).item() == Catch::Approx(3.0));
    CHECK_THROWS_AS(mse(a, Tensor<double>({4})), ShapeError);

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = random_tensor<double>({2, 3, 4}, rng);
        auto y = random_tensor<double>({2, 3, 4}, rng);
        CHECK(mse(x, y).item() == mse(y, x).item());
        CHECK(mse(x, y).item() > 0.0);
    }

    auto x = random_tensor<double>({2, 3, 4}, rng);
    auto y = random_tensor<double>({2, 3, 4}, rng);
    std::function<Tensor<double>()> f = [&] { return mse(x, y); };
    CHECK(check_gradients<double>(f, {x, y}, 1e-6).worst < 1e-6);
    // closed form 2(a - b)/#a
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        CHECK(x.grad()[i] == Catch::Approx(2.0 * (x[i] - y[i]) / 24.0).margin(1e-12));
    }
}

TEST_CASE("mse_rows averages over the selected rows only", "[mse]") {
    Tensor<double> a({3, 2}, std::vector<double>{1, 1, 5, 5, 0, 2});
    Tensor<double> b({3, 2}, std::vector<double>{0, 0, 0, 0, 0, 0});
    const std::vector<std::uint8_t> rows{1, 0, 1};
    CHECK(mse_rows(a, b, rows).item() == Catch::Approx((1 + 1 + 0 + 4) / 4.0));
    const std::vector<std::uint8_t> none{0, 0, 0};
    CHECK(mse_rows(a, b, none).item() == 0.0);

    std::mt19937_64 rng(5);
    auto x = random_tensor<double>({3, 2, 2}, rng);
    auto y = random_tensor<double>({3, 2, 2}, rng);
    std::function<Tensor<double>()> f = [&] { return mse_rows(x, y, rows); };
    CHECK(check_gradients<double>(f, {x, y}, 1e-6).worst < 1e-6);
    for (std::int64_t i = 4; i < 8; ++i) CHECK(x.grad()[i] == 0.0);
}

TEST_CASE("cross entropy anchors", "[cross_entropy]") {
    for (int k : {2, 3, 10, 35, 970}) {
        Tensor<double> logits({1, k}, 0.3);
        const std::vector<int> target{k - 1};
        CHECK(cross_entropy<double>(logits, target, unit_weights(k)).item() ==
              Catch::Approx(std::log(static_cast<double>(k))).margin(1e-6));
    }
    CHECK(std::log(970.0) == Catch::Approx(6.877).margin(5e-4));

    Tensor<double> saturated({1, 4}, 0.0);
    saturated.mutable_data()[2] = 1000.0;
    const std::vector<int> two{2};
    CHECK(cross_entropy<double>(saturated, two, unit_weights(4)).item() == Catch::Approx(0.0).margin(1e-6));

    ClassWeights w = unit_weights(2);
    w.weights[1] = 2.0;
    const std::vector<int> one{1};
    CHECK(cross_entropy<double>(Tensor<double>({1, 2}), one, w).item() == Catch::Approx(2 * std::log(2.0)));

    const std::vector<int> bad{5};
    CHECK_THROWS_AS(cross_entropy<double>(Tensor<double>({1, 2}), bad, unit_weights(2)), ConfigError);
    const std::vector<int> negative{-1};
    CHECK_THROWS_AS(cross_entropy<double>(Tensor<double>({1, 2}), negative, unit_weights(2)), ConfigError);
}

TEST_CASE("cross entropy averages weighted terms over the batch", "[cross_entropy]") {
    ClassWeights w = unit_weights(2);
    w.weights = {1.0, 3.0};
    Tensor<double> logits({2, 2});
    const std::vector<int> targets{0, 1};
    CHECK(cross_entropy<double>(logits, targets, w).item() == Catch::Approx((1 + 3) * std::log(2.0) / 2));
    const std::vector<std::uint8_t> rows{0, 1};
    CHECK(cross_entropy<double>(logits, targets, w, rows).item() == Catch::Approx(3 * std::log(2.0)));
}

TEST_CASE("cross entropy gradients", "[cross_entropy][grad]") {
    std::mt19937_64 rng(7);
    auto logits = random_tensor<double>({4, 5}, rng, -3, 3);
    const std::vector<int> targets{0, 4, 2, 2};
    auto w = class_weights(std::vector<std::int64_t>{3, 1, 4, 1, 5});
    const std::vector<std::uint8_t> rows{1, 1, 0, 1};
    std::function<Tensor<double>()> f = [&] { return cross_entropy<double>(logits, targets, w, rows); };
    CHECK(check_gradients<double>(f, {logits}, 1e-6).worst < 1e-6);

    auto lf = cast<float>(logits);
    auto ld = cast<double>(lf);
    std::function<Tensor<float>()> ff = [&] { return cross_entropy<float>(lf, targets, w, rows); };
    std::function<Tensor<double>()> fd = [&] { return cross_entropy<double>(ld, targets, w, rows); };
    CHECK(cortex::testing::check_gradients_single(ff, {lf}, fd, {ld}, 1e-3).worst < 1e-3);
}

TEST_CASE("class weights", "[class_weights]") {
    auto even = class_weights(std::vector<std::int64_t>{10, 10});
    CHECK(even.weights == std::vector<double>{1.0, 1.0});
    auto skew = class_weights(std::vector<std::int64_t>{30, 10});
    CHECK(skew.weights[0] == Catch::Approx(2.0 / 3.0));
    CHECK(skew.weights[1] == Catch::Approx(2.0));
    CHECK_THROWS_AS(class_weights(std::vector<std::int64_t>{3, 0}), ConfigError);
    CHECK_THROWS_AS(class_weights(std::vector<std::int64_t>{}), ConfigError);

    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::int64_t> count(1, 500);
    std::uniform_int_distribution<int> classes(1, 40);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::int64_t> m(static_cast<std::size_t>(classes(rng)));
        for (auto& v : m) v = count(rng);
        auto w = class_weights(m);
        double lhs = 0, rhs = 0;
        for (std::size_t k = 0; k < m.size(); ++k) {
            lhs += static_cast<double>(m[k]) * w.weights[k];
            rhs += static_cast<double>(m[k]);
        }
        CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("system loss", "[system_loss]") {
    auto s = [](double v) { return Tensor<double>::scalar(v); };
    CHECK(system_loss(s(2), s(3), s(7), LossWeights{1, 0.01, 0}).item() == Catch::Approx(2.03));
    CHECK(system_loss(s(2), s(3), s(7), LossWeights{0, 0, 0}).item() == 0.0);
    CHECK(system_loss(s(9), s(9), s(5), LossWeights{0, 0, 0.01}).item() == Catch::Approx(0.05));
    // undefined tensors are allowed when their coefficient is zero
    CHECK(system_loss(s(2), Tensor<double>(), Tensor<double>(), LossWeights{1, 0, 0}).item() == 2.0);
    CHECK_THROWS_AS(system_loss(s(1), s(1), s(1), LossWeights{-1, 0, 0}), ConfigError);
}

TEST_CASE("zero-coefficient terms leave every gradient unchanged", "[system_loss]") {
    std::mt19937_64 rng(13);
    auto w = random_tensor<double>({3, 4}, rng).set_requires_grad(true);
    auto x = random_tensor<double>({2, 4}, rng);
    auto target = random_tensor<double>({2, 3}, rng);
    const std::vector<int> cls{1, 2};

    auto grad_of = [&](bool include_zero_terms) {
        w.zero_grad();
        Tape<double> tape;
        {
            TapeScope<double> scope(tape);
            auto logits = linear(x, w, Tensor<double>({3}));
            auto l_mu = mse(logits, target);
            auto l_tau = cross_entropy<double>(logits, cls, unit_weights(3));
            Tensor<double> loss = system_loss(l_mu, l_tau, l_tau, LossWeights{1, 0, 0});
            if (include_zero_terms) loss = add(add(l_mu, scale(l_tau, 0.0)), scale(l_tau, 0.0));
            backward(loss, tape);
        }
        return w.grad();
    };
    CHECK(grad_of(false) == grad_of(true));
}

TEST_CASE("panning speed and reporting units", "[panning]") {
    Tensor<float> frame({3, 4, 4}, 0.25f);
    CHECK(panning_speed(frame, frame) == 0.0);
    CHECK(to_mmse(panning_speed(frame, Tensor<float>({3, 4, 4}, 1.25f))) == Catch::Approx(1000.0));
    CHECK(to_mmse(0.0021) == Catch::Approx(2.1));
    CHECK(to_mmse(0.0) == 0.0);
    CHECK(to_mmse(1.0) == 1000.0);

    // a fixed smooth pattern translated by growing shifts
    const int n = 32;
    auto pattern = [&](double shift) {
        Tensor<double> t({1, n, n});
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                t.mutable_data()[y * n + x] = 0.5 + 0.5 * std::sin(2 * M_PI * (x + shift) / n) *
                                                        std::cos(2 * M_PI * y / n);
            }
        }
        return t;
    };
    double previous = 0;
    for (double shift = 0.5; shift <= 8.0; shift += 0.5) {
        const double speed = panning_speed(pattern(0), pattern(shift));
        CHECK(speed > previous);
        previous = speed;
    }
}
