// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "cortex/checkpoint.hpp"
#include "cortex/losses.hpp"
#include "cortex/model.hpp"
#include "cortex/ops.hpp"
#include "gradcheck.hpp"

using namespace cortex;
using cortex::testing::random_tensor;

namespace {

template <typename T>
bool same(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(T)) == 0;
}

template <typename T>
bool same_row(const Tensor<T>& a, const Tensor<T>& b, std::int64_t row) {
    const std::int64_t item = a.numel() / a.dim(0);
    return std::memcmp(a.data().data() + row * item, b.data().data() + row * item, item * sizeof(T)) == 0;
}

LayerSpec tiny_spec(int levels = 2, int side = 8) {
    LayerSpec s;
    s.levels = levels;
    s.side = side;
    s.maps = {3};
    for (int n = 1; n <= levels; ++n) s.maps.push_back(2 + n);
    return s;
}

// Overwrites weights and biases with a wider draw than the default init so
// recurrent effects stand well above rounding.
template <typename T>
void randomize(CortexModel<T>& m, std::uint64_t seed, double lo = -0.5, double hi = 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& p : m.named_parameters()) {
        if (p.name.find(".bn.") != std::string::npos) continue;
        for (auto& v : p.tensor.mutable_data()) v = static_cast<T>(dist(rng));
    }
}

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "cortex_test_model";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("layer spec validation", "[cortexnet]") {
    CHECK_NOTHROW(LayerSpec::standard(4, 256).validate());
    CHECK(LayerSpec::standard(6, 256).maps == std::vector<int>{3, 32, 64, 128, 256, 256, 256});
    CHECK_THROWS_AS(LayerSpec::standard(1, 256).validate(), ConfigError);
    CHECK_THROWS_AS(LayerSpec::standard(4, 100).validate(), ConfigError);
    auto bad = LayerSpec::standard(2, 8);
    bad.maps[0] = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = LayerSpec::standard(2, 8);
    bad.maps[2] = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("default ladder shapes", "[cortexnet]") {
    CortexModel<float> m(LayerSpec::standard(4, 256), 35, true, 1);
    const std::vector<Shape> d_shapes{{32, 3, 3, 3}, {64, 64, 3, 3}, {128, 128, 3, 3}, {256, 256, 3, 3}};
    const std::vector<Shape> g_shapes{{32, 3, 3, 3}, {64, 32, 3, 3}, {128, 64, 3, 3}, {256, 128, 3, 3}};
    for (int n = 1; n <= 4; ++n) {
        CHECK(m.discriminative(n).weight.shape() == d_shapes[n - 1]);
        CHECK(m.generative(n).weight.shape() == g_shapes[n - 1]);
    }
    CHECK(m.classifier_weight().shape() == Shape{35, 256});

    Tensor<float> x({1, 3, 256, 256}, 0.5f);
    auto out = m.step(x, zero_state<float>(m.spec(), 1));
    CHECK(out.prediction.shape() == Shape{1, 3, 256, 256});
    CHECK(out.embedding.shape() == Shape{1, 256});
    CHECK(out.logits.shape() == Shape{1, 35});
    REQUIRE(out.state.feedback.size() == 3);
    CHECK(out.state.feedback[0].shape() == Shape{1, 32, 128, 128});
    CHECK(out.state.feedback[1].shape() == Shape{1, 64, 64, 64});
    CHECK(out.state.feedback[2].shape() == Shape{1, 128, 32, 32});
    CHECK(out.state.age == std::vector<std::int64_t>{1});
}

TEST_CASE("shape audit over depths and extents", "[cortexnet]") {
    for (int levels = 2; levels <= 6; ++levels) {
        for (int k = 1; k <= 8; ++k) {
            const int side = (1 << levels) * k;
            CortexModel<float> m(tiny_spec(levels, side), 3, true, 7);
            auto state = zero_state<float>(m.spec(), 2);
            Tensor<float> x({2, 3, side, side}, 0.25f);
            for (int t = 0; t < 2; ++t) {
                auto out = m.step(x, state);
                REQUIRE(out.prediction.shape() == x.shape());
                REQUIRE(out.embedding.shape() == Shape{2, m.spec().maps.back()});
                for (int n = 2; n <= levels; ++n) {
                    const std::int64_t r = side >> (n - 1);
                    REQUIRE(out.state.feedback[n - 2].shape() == Shape{2, m.spec().maps[n - 1], r, r});
                }
                state = out.state;
            }
        }
    }
}

TEST_CASE("step rejects mismatched state or input", "[cortexnet]") {
    CortexModel<float> m(tiny_spec(), 3, false, 1);
    Tensor<float> x({2, 3, 8, 8});
    CHECK_THROWS_AS(m.step(x, zero_state<float>(m.spec(), 1)), ShapeError);
    CHECK_THROWS_AS(m.step(Tensor<float>({2, 3, 16, 16}), zero_state<float>(m.spec(), 2)), ShapeError);
    auto wrong = zero_state<float>(tiny_spec(3, 8), 2);
    CHECK_THROWS_AS(m.step(x, wrong), ShapeError);
}

TEST_CASE("all-zero parameters", "[cortexnet]") {
    for (bool norm : {false, true}) {
        CortexModel<float> m(tiny_spec(3, 16), 4, norm, 3);
        for (auto& p : m.named_parameters()) {
            for (auto& v : p.tensor.mutable_data()) v = 0.0f;
        }
        auto bias = m.classifier_bias();
        for (std::int64_t i = 0; i < 4; ++i) bias.mutable_data()[i] = 0.5f * static_cast<float>(i) - 1.0f;
        std::mt19937_64 rng(5);
        auto x = random_tensor<float>({2, 3, 16, 16}, rng, 0, 1);
        auto state = zero_state<float>(m.spec(), 2);
        for (int t = 0; t < 2; ++t) {
            auto out = m.step(x, state);
            for (float v : out.prediction.data()) CHECK(v == 0.0f);
            for (std::int64_t r = 0; r < 2; ++r) {
                for (std::int64_t k = 0; k < 4; ++k) CHECK(out.logits.data()[r * 4 + k] == bias[k]);
            }
            state = out.state;
        }
    }
}

TEST_CASE("zero state matches the feed-forward pass", "[cortexnet]") {
    for (bool norm : {false, true}) {
        CortexModel<float> m(tiny_spec(3, 16), 5, norm, 11);
        std::mt19937_64 rng(13);
        auto x = random_tensor<float>({3, 3, 16, 16}, rng, 0, 1);
        auto out = m.step(x, zero_state<float>(m.spec(), 3), StepOptions{{}, false});
        auto ff = m.feedforward_logits(x, StepOptions{{}, false});
        CHECK(same(out.logits, ff));
    }
}

TEST_CASE("temporal sensitivity", "[cortexnet]") {
    CortexModel<double> m(tiny_spec(3, 16), 5, false, 17);
    randomize(m, 19);
    std::mt19937_64 rng(23);
    auto a = random_tensor<double>({1, 3, 16, 16}, rng, 0, 1);
    auto b = random_tensor<double>({1, 3, 16, 16}, rng, 0, 1);

    // same frame twice: the state changes the answer
    auto s0 = zero_state<double>(m.spec(), 1);
    auto o1 = m.step(a, s0);
    auto o2 = m.step(a, o1.state);
    CHECK_FALSE(same(o1.logits, o2.logits));
    CHECK(same(m.feedforward_logits(a), m.feedforward_logits(a)));

    // frame b at t=2 after a vs after b
    auto after_a = m.step(b, m.step(a, s0).state);
    auto after_b = m.step(b, m.step(b, s0).state);
    CHECK_FALSE(same(after_a.logits, after_b.logits));

    // feed-forward logits are per-frame: order does not matter
    auto la = m.feedforward_logits(a), lb = m.feedforward_logits(b);
    Tensor<double> pair({2, 3, 16, 16});
    Tensor<double> swapped({2, 3, 16, 16});
    const std::size_t item = 3 * 16 * 16;
    std::copy(a.data().begin(), a.data().end(), pair.mutable_data().begin());
    std::copy(b.data().begin(), b.data().end(), pair.mutable_data().begin() + item);
    std::copy(b.data().begin(), b.data().end(), swapped.mutable_data().begin());
    std::copy(a.data().begin(), a.data().end(), swapped.mutable_data().begin() + item);
    auto lp = m.feedforward_logits(pair), ls = m.feedforward_logits(swapped);
    CHECK(same_row(lp, ls, 0) == false);
    for (std::int64_t k = 0; k < 5; ++k) {
        CHECK(lp.data()[k] == ls.data()[5 + k]);
        CHECK(lp.data()[5 + k] == ls.data()[k]);
        CHECK(lp.data()[k] == la.data()[k]);
        CHECK(lp.data()[5 + k] == lb.data()[k]);
    }
}

TEST_CASE("state locality", "[cortexnet]") {
    for (bool norm : {false, true}) {
        CortexModel<float> m(tiny_spec(3, 16), 5, norm, 29);
        randomize(m, 31);
        if (norm) m.set_training(false);
        std::mt19937_64 rng(37);
        auto x = random_tensor<float>({2, 3, 16, 16}, rng, 0, 1);
        auto state = m.step(x, zero_state<float>(m.spec(), 2)).state;
        state = m.step(x, state).state;

        const std::vector<std::uint8_t> mask{1, 0};
        auto reset = reset_state_rows(state, mask);
        auto kept = m.step(x, state);
        auto cut = m.step(x, reset);
        CHECK(same_row(kept.prediction, cut.prediction, 1));
        CHECK(same_row(kept.logits, cut.logits, 1));
        CHECK_FALSE(same_row(kept.prediction, cut.prediction, 0));
    }
}

TEST_CASE("one-step delay", "[cortexnet]") {
    CortexModel<float> m(tiny_spec(), 3, false, 41);
    std::mt19937_64 rng(43);
    auto x0 = random_tensor<float>({1, 3, 8, 8}, rng, 0, 1);
    auto x1 = random_tensor<float>({1, 3, 8, 8}, rng, 0, 1);
    auto x1b = random_tensor<float>({1, 3, 8, 8}, rng, 0, 1);
    auto s = zero_state<float>(m.spec(), 1);
    auto first = m.step(x0, s);
    auto snapshot = first.prediction.detach();
    auto logits = first.logits.detach();
    auto next_a = m.step(x1, first.state);
    auto next_b = m.step(x1b, first.state);
    CHECK(same(first.prediction, snapshot));
    CHECK(same(first.logits, logits));
    auto again = m.step(x0, s);
    CHECK(same(again.prediction, snapshot));
    CHECK_FALSE(same(next_a.prediction, next_b.prediction));
}

TEST_CASE("reset_state_rows", "[cortexnet]") {
    CortexModel<float> m(tiny_spec(), 3, false, 47);
    randomize(m, 53);
    std::mt19937_64 rng(59);
    auto x = random_tensor<float>({2, 3, 8, 8}, rng, 0, 1);
    auto state = m.step(x, zero_state<float>(m.spec(), 2)).state;
    REQUIRE(state.age == std::vector<std::int64_t>{1, 1});

    const std::vector<std::uint8_t> all{1, 1}, none{0, 0}, first{1, 0};
    auto fresh = zero_state<float>(m.spec(), 2);
    auto r_all = reset_state_rows(state, all);
    for (std::size_t i = 0; i < fresh.feedback.size(); ++i) CHECK(same(r_all.feedback[i], fresh.feedback[i]));
    CHECK(r_all.age == fresh.age);

    auto r_none = reset_state_rows(state, none);
    for (std::size_t i = 0; i < state.feedback.size(); ++i) CHECK(same(r_none.feedback[i], state.feedback[i]));
    CHECK(r_none.age == state.age);

    auto r_first = reset_state_rows(state, first);
    for (std::size_t i = 0; i < state.feedback.size(); ++i) {
        CHECK(same_row(r_first.feedback[i], fresh.feedback[i], 0));
        CHECK(same_row(r_first.feedback[i], state.feedback[i], 1));
    }
    CHECK(r_first.age == std::vector<std::int64_t>{0, 1});

    const std::vector<std::uint8_t> wrong{1};
    CHECK_THROWS_AS(reset_state_rows(state, wrong), ShapeError);
}

TEST_CASE("replace_classifier", "[cortexnet]") {
    CortexModel<float> m(LayerSpec::standard(3, 16), 33, true, 61);
    auto before = m.clone();
    m.replace_classifier(35, 67);
    CHECK(m.classes() == 35);
    auto pa = before.named_parameters(), pb = m.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].name.rfind("classifier", 0) == 0) continue;
        CHECK(same(pa[i].tensor, pb[i].tensor));
    }
    auto logits = m.feedforward_logits(Tensor<float>({2, 3, 16, 16}, 0.5f));
    CHECK(logits.shape() == Shape{2, 35});

    auto w = m.classifier_weight().detach();
    m.replace_classifier(35, 71);
    CHECK_FALSE(same(w, m.classifier_weight()));
    CHECK_THROWS_AS(m.replace_classifier(0, 1), ConfigError);
}

TEST_CASE("clone is independent", "[cortexnet]") {
    CortexModel<float> m(tiny_spec(), 3, true, 73);
    auto c = m.clone();
    auto w = c.discriminative(1).weight;
    w.mutable_data()[0] += 1.0f;
    CHECK(m.discriminative(1).weight[0] != c.discriminative(1).weight[0]);
}

TEST_CASE("three-step unrolled gradients match finite differences", "[cortexnet][grad]") {
    const auto spec = tiny_spec(2, 8);
    const std::vector<int> targets{0, 2};
    std::mt19937_64 rng(79);
    std::vector<Tensor<double>> frames_d;
    for (int t = 0; t < 4; ++t) frames_d.push_back(random_tensor<double>({2, 3, 8, 8}, rng, 0, 1));

    auto unroll = [&](auto& model, auto& frames) {
        using T = typename std::decay_t<decltype(frames[0])>::value_type;
        auto state = zero_state<T>(spec, 2);
        std::vector<Tensor<T>> terms;
        std::vector<double> coeffs;
        for (int t = 0; t < 3; ++t) {
            auto out = model.step(frames[t], state);
            terms.push_back(mse(out.prediction, frames[t + 1]));
            terms.push_back(cross_entropy<T>(out.logits, targets, unit_weights(3)));
            coeffs.insert(coeffs.end(), {1.0, 0.1});
            state = out.state;
        }
        return weighted_sum<T>(terms, coeffs);
    };

    for (bool norm : {false, true}) {
        CortexModel<double> md(spec, 3, norm, 83);
        randomize(md, 89);
        CortexModel<float> mf(spec, 3, norm, 83);
        auto pd = md.parameters();
        auto pf = mf.parameters();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            for (std::int64_t j = 0; j < pd[i].numel(); ++j) {
                pf[i].mutable_data()[j] = static_cast<float>(pd[i][j]);
                pd[i].mutable_data()[j] = static_cast<double>(pf[i][j]);
            }
        }
        std::vector<Tensor<float>> frames_f;
        for (auto& f : frames_d) frames_f.push_back(cast<float>(f));
        std::vector<Tensor<double>> frames_dd;
        for (auto& f : frames_f) frames_dd.push_back(cast<double>(f));

        auto wrt_d = pd;
        wrt_d.push_back(frames_dd[0]);
        auto wrt_f = pf;
        wrt_f.push_back(frames_f[0]);
        std::function<Tensor<double>()> loss_d = [&] { return unroll(md, frames_dd); };
        std::function<Tensor<float>()> loss_f = [&] { return unroll(mf, frames_f); };

        const auto dbl = cortex::testing::check_gradients<double>(loss_d, wrt_d, 1e-6, 24);
        INFO("norm " << norm << " double error " << dbl.worst);
        CHECK(dbl.worst < 1e-6);
        const auto sgl = cortex::testing::check_gradients_single(loss_f, wrt_f, loss_d, wrt_d, 1e-3, 24);
        INFO("single error " << sgl.worst);
        CHECK(sgl.worst < 1e-3);
    }
}

TEST_CASE("detached state blocks gradients across chunk boundaries", "[cortexnet]") {
    CortexModel<double> m(tiny_spec(), 3, false, 97);
    randomize(m, 101);
    std::mt19937_64 rng(103);
    auto x0 = random_tensor<double>({1, 3, 8, 8}, rng, 0, 1).set_requires_grad(true);
    auto x1 = random_tensor<double>({1, 3, 8, 8}, rng, 0, 1);
    Tape<double> tape;
    {
        TapeScope<double> scope(tape);
        auto s = m.step(x0, zero_state<double>(m.spec(), 1)).state.detach();
        auto out = m.step(x1, s);
        backward(mse(out.prediction, x1), tape);
    }
    for (double g : x0.grad()) CHECK(g == 0.0);

    Tape<double> linked;
    x0.zero_grad();
    {
        TapeScope<double> scope(linked);
        auto s = m.step(x0, zero_state<double>(m.spec(), 1)).state;
        auto out = m.step(x1, s);
        backward(mse(out.prediction, x1), linked);
    }
    const auto g = x0.grad();
    CHECK(std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; }));
}

TEST_CASE("checkpoint round trip", "[checkpoint]") {
    CortexModel<float> m(tiny_spec(3, 16), 4, true, 107);
    randomize(m, 109);
    std::mt19937_64 rng(113);
    auto x = random_tensor<float>({2, 3, 16, 16}, rng, 0, 1);
    // populate running statistics and momentum
    m.step(x, zero_state<float>(m.spec(), 2));
    auto params = m.parameters();
    SgdState<float> opt(params, SgdOptions{0.05, 0.9, 1e-4});
    for (auto& v : opt.velocity) {
        for (auto& e : v.mutable_data()) e = 0.125f;
    }

    const auto p1 = temp_file("a.cxck"), p2 = temp_file("b.cxck");
    save_checkpoint(p1, m, &opt, 7);
    auto loaded = load_checkpoint(p1);
    CHECK(loaded.epoch == 7);
    REQUIRE(loaded.optimizer.has_value());
    CHECK(loaded.optimizer->options.lr == 0.05);
    CHECK(loaded.optimizer->velocity[0][0] == 0.125f);
    save_checkpoint(p2, loaded.model, &*loaded.optimizer, loaded.epoch);
    CHECK(slurp(p1) == slurp(p2));

    m.set_training(false);
    loaded.model.set_training(false);
    auto s = zero_state<float>(m.spec(), 2);
    auto a = m.step(x, s), b = loaded.model.step(x, s);
    CHECK(same(a.prediction, b.prediction));
    CHECK(same(a.logits, b.logits));

    auto header = read_checkpoint_header(p1);
    CHECK(header.spec == m.spec());
    CHECK(header.classes == 4);
    CHECK(header.batch_norm);

    CortexModel<float> target(tiny_spec(3, 16), 4, true, 1);
    CHECK(load_parameters_into(loaded, target));
    CortexModel<float> other_head(tiny_spec(3, 16), 6, true, 1);
    CHECK_FALSE(load_parameters_into(loaded, other_head));
    CHECK(same(other_head.discriminative(2).weight, m.discriminative(2).weight));
    CortexModel<float> mismatch(tiny_spec(2, 16), 4, true, 1);
    CHECK_THROWS_AS(load_parameters_into(loaded, mismatch), ShapeError);
}

TEST_CASE("corrupt checkpoints are rejected", "[checkpoint]") {
    CortexModel<float> m(tiny_spec(), 3, false, 127);
    const auto good = temp_file("good.cxck");
    save_checkpoint(good, m, nullptr, 1);
    const std::string bytes = slurp(good);

    auto write = [](const std::filesystem::path& p, const std::string& s) {
        std::ofstream out(p, std::ios::binary);
        out << s;
    };
    const auto bad = temp_file("bad.cxck");
    std::string magic = bytes;
    magic[0] = 'X';
    write(bad, magic);
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);

    write(bad, bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);

    std::string version = bytes;
    version[4] = 9;
    write(bad, version);
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);

    write(bad, bytes + "x");
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);

    CHECK_THROWS_AS(load_checkpoint(temp_file("missing.cxck")), IoError);
    CHECK_FALSE(load_checkpoint(good).optimizer.has_value());
}
