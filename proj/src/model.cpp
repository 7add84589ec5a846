// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "cortex/ops.hpp"

namespace cortex {

std::vector<int> default_feature_maps(int levels) {
    std::vector<int> maps{3, 32, 64, 128, 256};
    maps.resize(static_cast<std::size_t>(std::max(levels, 0) + 1), 256);
    return maps;
}

LayerSpec LayerSpec::standard(int levels, int side) {
    return LayerSpec{levels, default_feature_maps(levels), side};
}

void LayerSpec::validate() const {
    if (levels < 2) throw ConfigError("model needs at least 2 block pairs, got " + std::to_string(levels));
    if (static_cast<int>(maps.size()) != levels + 1) {
        throw ConfigError("feature-map list must have L+1 entries (" + std::to_string(levels + 1) + "), got " +
                          std::to_string(maps.size()));
    }
    if (maps[0] != 3) throw ConfigError("input feature maps f_0 must be 3");
    for (int f : maps) {
        if (f < 1) throw ConfigError("feature maps must be positive");
    }
    if (levels >= 30 || side < 1 || side % (1 << levels) != 0) {
        throw ConfigError("input side " + std::to_string(side) + " is not divisible by 2^" + std::to_string(levels));
    }
}

std::string to_string(const LayerSpec& spec) {
    std::ostringstream os;
    os << "L=" << spec.levels << " R=" << spec.side << " maps=";
    for (std::size_t i = 0; i < spec.maps.size(); ++i) os << (i ? "," : "") << spec.maps[i];
    return os.str();
}

template <typename T>
ModelState<T> ModelState<T>::detach() const {
    ModelState out;
    out.age = age;
    out.feedback.reserve(feedback.size());
    for (const auto& f : feedback) out.feedback.push_back(f.detach());
    return out;
}

template <typename T>
ModelState<T> zero_state(const LayerSpec& spec, std::int64_t batch) {
    spec.validate();
    ModelState<T> state;
    state.age.assign(static_cast<std::size_t>(batch), 0);
    for (int n = 2; n <= spec.levels; ++n) {
        const std::int64_t r = spec.resolution(n - 1);
        state.feedback.push_back(Tensor<T>::zeros({batch, spec.maps[static_cast<std::size_t>(n - 1)], r, r}));
    }
    return state;
}

template <typename T>
ModelState<T> reset_state_rows(const ModelState<T>& state, std::span<const std::uint8_t> rows) {
    if (static_cast<std::int64_t>(rows.size()) != state.batch()) {
        throw ShapeError("reset mask has " + std::to_string(rows.size()) + " entries for batch " +
                         std::to_string(state.batch()));
    }
    ModelState<T> out;
    out.age = state.age;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r]) out.age[r] = 0;
    }
    for (const auto& f : state.feedback) out.feedback.push_back(zero_rows(f, rows));
    return out;
}

namespace {

template <typename T>
Tensor<T> uniform(Shape shape, double bound, std::mt19937_64& rng) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
ConvBlock<T> make_block(Shape weight_shape, std::int64_t out_channels, std::int64_t fan_in, bool norm,
                        std::mt19937_64& rng) {
    ConvBlock<T> b;
    b.weight = uniform<T>(std::move(weight_shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    b.weight.set_requires_grad(true);
    b.bias = Tensor<T>::zeros({out_channels});
    b.bias.set_requires_grad(true);
    if (norm) {
        b.gamma = Tensor<T>({out_channels}, T(1));
        b.gamma.set_requires_grad(true);
        b.beta = Tensor<T>::zeros({out_channels});
        b.beta.set_requires_grad(true);
        b.running_mean = Tensor<T>::zeros({out_channels});
        b.running_var = Tensor<T>({out_channels}, T(1));
    }
    return b;
}

template <typename T>
Tensor<T> copy_param(const Tensor<T>& t) {
    if (!t.defined()) return {};
    Tensor<T> c = t.detach();
    c.set_requires_grad(t.requires_grad());
    return c;
}

template <typename T>
ConvBlock<T> copy_block(const ConvBlock<T>& b) {
    return ConvBlock<T>{copy_param(b.weight), copy_param(b.bias),         copy_param(b.gamma),
                        copy_param(b.beta),   copy_param(b.running_mean), copy_param(b.running_var)};
}

}  // namespace

template <typename T>
CortexModel<T>::CortexModel(LayerSpec spec, int classes, bool batch_norm, std::uint64_t seed)
    : spec_(std::move(spec)), classes_(classes), batch_norm_(batch_norm) {
    spec_.validate();
    if (classes < 1) throw ConfigError("classifier width must be >= 1");
    std::mt19937_64 rng(seed);
    const auto& f = spec_.maps;
    for (int n = 1; n <= spec_.levels; ++n) {
        const std::int64_t c_in = n == 1 ? f[0] : 2 * f[static_cast<std::size_t>(n - 1)];
        const std::int64_t c_out = f[static_cast<std::size_t>(n)];
        discriminative_.push_back(make_block<T>({c_out, c_in, 3, 3}, c_out, c_in * 9, batch_norm_, rng));
    }
    for (int n = 1; n <= spec_.levels; ++n) {
        const std::int64_t c_in = f[static_cast<std::size_t>(n)];
        const std::int64_t c_out = f[static_cast<std::size_t>(n - 1)];
        // G_1 writes pixels directly and carries no normalization.
        generative_.push_back(make_block<T>({c_in, c_out, 3, 3}, c_out, c_in * 9, batch_norm_ && n > 1, rng));
    }
    replace_classifier(classes, rng());
}

template <typename T>
CortexModel<T> CortexModel<T>::clone() const {
    CortexModel<T> m;
    m.spec_ = spec_;
    m.classes_ = classes_;
    m.batch_norm_ = batch_norm_;
    m.training_ = training_;
    for (const auto& b : discriminative_) m.discriminative_.push_back(copy_block(b));
    for (const auto& b : generative_) m.generative_.push_back(copy_block(b));
    m.classifier_weight_ = copy_param(classifier_weight_);
    m.classifier_bias_ = copy_param(classifier_bias_);
    return m;
}

template <typename T>
void CortexModel<T>::replace_classifier(int classes, std::uint64_t seed) {
    if (classes < 1) throw ConfigError("classifier width must be >= 1");
    std::mt19937_64 rng(seed);
    const std::int64_t features = spec_.maps.back();
    classes_ = classes;
    classifier_weight_ = uniform<T>({classes, features}, 1.0 / std::sqrt(static_cast<double>(features)), rng);
    classifier_weight_.set_requires_grad(true);
    classifier_bias_ = Tensor<T>::zeros({classes});
    classifier_bias_.set_requires_grad(true);
}

template <typename T>
void CortexModel<T>::zero_classifier() {
    for (auto& v : classifier_weight_.mutable_data()) v = T(0);
    for (auto& v : classifier_bias_.mutable_data()) v = T(0);
}

template <typename T>
std::vector<NamedTensor<T>> CortexModel<T>::named_parameters() const {
    std::vector<NamedTensor<T>> out;
    auto add_block = [&](const std::string& prefix, const ConvBlock<T>& b) {
        out.push_back({prefix + ".weight", b.weight});
        out.push_back({prefix + ".bias", b.bias});
        if (b.has_norm()) {
            out.push_back({prefix + ".bn.gamma", b.gamma});
            out.push_back({prefix + ".bn.beta", b.beta});
        }
    };
    for (int n = 1; n <= spec_.levels; ++n) add_block("d" + std::to_string(n), discriminative_[n - 1]);
    for (int n = 1; n <= spec_.levels; ++n) add_block("g" + std::to_string(n), generative_[n - 1]);
    out.push_back({"classifier.weight", classifier_weight_});
    out.push_back({"classifier.bias", classifier_bias_});
    return out;
}

template <typename T>
std::vector<NamedTensor<T>> CortexModel<T>::named_buffers() const {
    std::vector<NamedTensor<T>> out;
    auto add_block = [&](const std::string& prefix, const ConvBlock<T>& b) {
        if (!b.has_norm()) return;
        out.push_back({prefix + ".bn.running_mean", b.running_mean});
        out.push_back({prefix + ".bn.running_var", b.running_var});
    };
    for (int n = 1; n <= spec_.levels; ++n) add_block("d" + std::to_string(n), discriminative_[n - 1]);
    for (int n = 1; n <= spec_.levels; ++n) add_block("g" + std::to_string(n), generative_[n - 1]);
    return out;
}

template <typename T>
std::vector<Tensor<T>> CortexModel<T>::parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& p : named_parameters()) out.push_back(p.tensor);
    return out;
}

template <typename T>
Tensor<T> CortexModel<T>::apply_norm(ConvBlock<T>& block, const Tensor<T>& x, const StepOptions& options) {
    if (!block.has_norm()) return x;
    BatchNormOptions bn;
    bn.training = training_;
    bn.update_running = options.update_running;
    return cortex::batch_norm(x, block.gamma, block.beta, block.running_mean, block.running_var, bn, options.stat_rows);
}

template <typename T>
void CortexModel<T>::check_input(const Tensor<T>& frames) const {
    if (frames.rank() != 4 || frames.dim(1) != spec_.maps[0] || frames.dim(2) != spec_.side ||
        frames.dim(3) != spec_.side) {
        throw ShapeError("model expects B×3×" + std::to_string(spec_.side) + "×" + std::to_string(spec_.side) +
                         " frames, got " + shape_str(frames.shape()));
    }
}

template <typename T>
void CortexModel<T>::check_feedback(std::span<const Tensor<T>> feedback, std::int64_t batch) const {
    if (static_cast<int>(feedback.size()) != spec_.levels - 1) {
        throw ShapeError("state carries " + std::to_string(feedback.size()) + " feedback tensors, model needs " +
                         std::to_string(spec_.levels - 1));
    }
    for (int n = 2; n <= spec_.levels; ++n) {
        const std::int64_t r = spec_.resolution(n - 1);
        const Shape want{batch, spec_.maps[static_cast<std::size_t>(n - 1)], r, r};
        if (feedback[static_cast<std::size_t>(n - 2)].shape() != want) {
            throw ShapeError("feedback g_" + std::to_string(n) + " has shape " +
                             shape_str(feedback[static_cast<std::size_t>(n - 2)].shape()) + ", expected " +
                             shape_str(want));
        }
    }
}

template <typename T>
StepOutput<T> CortexModel<T>::step(const Tensor<T>& frames, const ModelState<T>& state,
                                   const StepOptions& options) {
    check_input(frames);
    const std::int64_t batch = frames.dim(0);
    if (state.batch() != batch) throw ShapeError("state batch does not match frame batch");
    check_feedback(state.feedback, batch);

    const int levels = spec_.levels;
    std::vector<Tensor<T>> lateral(static_cast<std::size_t>(levels));
    Tensor<T> d = frames;
    for (int n = 1; n <= levels; ++n) {
        auto& block = discriminative_[static_cast<std::size_t>(n - 1)];
        const Tensor<T> in = n == 1 ? d : concat_channels(d, state.feedback[static_cast<std::size_t>(n - 2)]);
        Tensor<T> y = apply_norm(block, conv2d(in, block.weight, block.bias), options);
        lateral[static_cast<std::size_t>(n - 1)] = y;
        d = relu(y);
    }

    StepOutput<T> out;
    out.embedding = global_avg_pool(d);
    out.logits = linear(out.embedding, classifier_weight_, classifier_bias_);

    std::vector<Tensor<T>> emitted(static_cast<std::size_t>(levels + 1));
    Tensor<T> u = d;
    for (int n = levels; n >= 1; --n) {
        auto& block = generative_[static_cast<std::size_t>(n - 1)];
        Tensor<T> z = conv_transpose2d(u, block.weight, block.bias);
        if (n == 1) {
            out.prediction = z;
            break;
        }
        z = apply_norm(block, z, options);
        u = relu(add(z, lateral[static_cast<std::size_t>(n - 2)]));
        emitted[static_cast<std::size_t>(n)] = u;
    }

    out.state.age = state.age;
    for (auto& a : out.state.age) ++a;
    for (int n = 2; n <= levels; ++n) out.state.feedback.push_back(emitted[static_cast<std::size_t>(n)]);
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> CortexModel<T>::discriminate(const Tensor<T>& frames,
                                                             std::span<const Tensor<T>> feedback,
                                                             const StepOptions& options) {
    check_input(frames);
    check_feedback(feedback, frames.dim(0));
    Tensor<T> d = frames;
    for (int n = 1; n <= spec_.levels; ++n) {
        auto& block = discriminative_[static_cast<std::size_t>(n - 1)];
        const Tensor<T> in = n == 1 ? d : concat_channels(d, feedback[static_cast<std::size_t>(n - 2)]);
        d = relu(apply_norm(block, conv2d(in, block.weight, block.bias), options));
    }
    Tensor<T> e = global_avg_pool(d);
    Tensor<T> l = linear(e, classifier_weight_, classifier_bias_);
    return {e, l};
}

template <typename T>
Tensor<T> CortexModel<T>::feedforward_logits(const Tensor<T>& frames, const StepOptions& options) {
    const auto zeros = zero_state<T>(spec_, frames.dim(0));
    return discriminate(frames, zeros.feedback, options).second;
}

template struct ModelState<float>;
template struct ModelState<double>;
template ModelState<float> zero_state(const LayerSpec&, std::int64_t);
template ModelState<double> zero_state(const LayerSpec&, std::int64_t);
template ModelState<float> reset_state_rows(const ModelState<float>&, std::span<const std::uint8_t>);
template ModelState<double> reset_state_rows(const ModelState<double>&, std::span<const std::uint8_t>);
template class CortexModel<float>;
template class CortexModel<double>;

}  // namespace cortex
