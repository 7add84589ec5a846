// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/trainers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cortex/error.hpp"
#include "cortex/ops.hpp"

namespace cortex {

namespace {

std::vector<std::uint8_t> invert(std::span<const std::uint8_t> mask) {
    std::vector<std::uint8_t> out(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 0 : 1;
    return out;
}

std::int64_t count(std::span<const std::uint8_t> mask) {
    return std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

// Correct argmax predictions among the selected rows.
std::int64_t correct_rows(const Tensor<float>& logits, std::span<const int> targets,
                          std::span<const std::uint8_t> rows) {
    const std::int64_t b = logits.dim(0), k = logits.dim(1);
    const auto v = logits.data();
    std::int64_t hits = 0;
    for (std::int64_t r = 0; r < b; ++r) {
        if (!rows.empty() && !rows[static_cast<std::size_t>(r)]) continue;
        const auto row = v.subspan(static_cast<std::size_t>(r * k), static_cast<std::size_t>(k));
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        hits += best == targets[static_cast<std::size_t>(r)];
    }
    return hits;
}

// Row-mask cross-entropy reporting helper: the mean CE as a double, no tape.
double ce_value(const Tensor<float>& logits, std::span<const int> targets, const ClassWeights& weights,
                std::span<const std::uint8_t> rows) {
    NoGradScope<float> no_grad;
    return static_cast<double>(cross_entropy(logits.detach(), targets, weights, rows).item());
}

double mse_value(const Tensor<float>& a, const Tensor<float>& b, std::span<const std::uint8_t> rows) {
    NoGradScope<float> no_grad;
    return static_cast<double>(mse_rows(a.detach(), b.detach(), rows).item());
}

Tensor<float> as_batch(const Tensor<float>& frame) {
    Shape s{1};
    s.insert(s.end(), frame.shape().begin(), frame.shape().end());
    return Tensor<float>(s, std::vector<float>(frame.data().begin(), frame.data().end()));
}

std::vector<double> softmax_row(const Tensor<float>& logits) {
    NoGradScope<float> no_grad;
    const auto p = softmax(logits.detach());
    return {p.data().begin(), p.data().end()};
}

// Chunk layouts of one epoch. Records are visited in `order`; cells are mapped
// back to indices of `records`.
std::vector<ChunkLayout> epoch_layouts(std::span<const VideoRecord> records, const std::vector<std::size_t>& order,
                                       std::int64_t beta, std::int64_t T) {
    std::vector<VideoRecord> visited;
    visited.reserve(order.size());
    for (auto i : order) visited.push_back(records[i]);
    const auto grid = build_grid(visited, beta);
    auto layouts = chunk_layouts(grid, visited, T);
    auto remap = [&](GridCell& c) { c.record = static_cast<std::int64_t>(order[static_cast<std::size_t>(c.record)]); };
    for (auto& l : layouts) {
        for (auto& c : l.cells) remap(c);
        if (l.next) {
            for (auto& c : *l.next) remap(c);
        }
    }
    return layouts;
}

std::vector<std::size_t> identity_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
}

std::int64_t total_frames(std::span<const VideoRecord> records) {
    std::int64_t n = 0;
    for (const auto& r : records) n += r.frames;
    return n;
}

void check_targets(std::span<const VideoRecord> records, TrainMode mode, int classes) {
    for (const auto& r : records) {
        const std::int64_t target = mode == TrainMode::matchnet ? r.parent - 1 : r.label;
        if (target < 0 || target >= classes) {
            throw ConfigError("record " + r.path.string() + " has " +
                              (mode == TrainMode::matchnet ? "video index " : "class ") + std::to_string(target) +
                              " outside the " + std::to_string(classes) + " logits");
        }
    }
}

ClassWeights training_weights(std::span<const VideoRecord> records, const TrainConfig& config) {
    if (config.mode != TrainMode::temponet) return unit_weights(config.classes);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(config.classes), 0);
    for (const auto& r : records) counts[static_cast<std::size_t>(r.label)] += 1;
    for (auto& c : counts) c = std::max<std::int64_t>(c, 1);
    return class_weights(counts);
}

void clip_gradients(std::span<Tensor<float>> params, double max_norm) {
    double sq = 0;
    for (auto& p : params) {
        if (!p.has_grad()) continue;
        for (float g : p.mutable_grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0) return;
    const auto factor = static_cast<float>(max_norm / norm);
    for (auto& p : params) {
        if (!p.has_grad()) continue;
        for (float& g : p.mutable_grad()) g *= factor;
    }
}

bool finite_totals(const LossTotals& t) {
    return std::isfinite(t.mu_sum) && std::isfinite(t.rho_sum) && std::isfinite(t.tau_sum) && std::isfinite(t.pi_sum);
}

class Stopwatch {
public:
    explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        if (!enabled_) return 0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    bool enabled_;
    std::chrono::steady_clock::time_point start_;
};

SgdState<float> make_optimizer(const CortexModel<float>& model, const TrainConfig& config, const TrainHooks& hooks) {
    if (hooks.optimizer) {
        auto opt = *hooks.optimizer;
        opt.options.momentum = config.momentum;
        opt.options.weight_decay = config.weight_decay;
        return opt;
    }
    const auto params = model.parameters();
    return SgdState<float>(params, SgdOptions{config.schedule.lr0, config.momentum, config.weight_decay});
}

// Applies the accumulated gradients and clears them.
void update(CortexModel<float>& model, SgdState<float>& opt, const TrainConfig& config) {
    auto params = model.parameters();
    if (config.clip_norm > 0) clip_gradients(params, config.clip_norm);
    sgd_step<float>(params, opt);
    zero_grads<float>(params);
}

[[noreturn]] void numerical_abort(int epoch, std::size_t chunk, const LossTotals& t, double loss) {
    std::ostringstream msg;
    msg << "non-finite loss at epoch " << epoch << ", chunk " << chunk + 1 << " (system " << loss << ", L_mu sum "
        << t.mu_sum << ", L_tau sum " << t.tau_sum << ", L_pi sum " << t.pi_sum << ")";
    throw NumericalError(msg.str());
}

// Shared epoch loop of the two recurrent modes.
std::vector<MetricsRow> train_recurrent(CortexModel<float>& model, FrameSource& train, FrameSource* val,
                                        const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    if (model.classes() != config.classes) {
        throw ConfigError("model has " + std::to_string(model.classes()) + " logits, config K = " +
                          std::to_string(config.classes));
    }
    const auto& records = train.records();
    check_targets(records, config.mode, config.classes);
    if (val) check_targets(val->records(), config.mode, config.classes);
    const ClassWeights weights = training_weights(records, config);
    auto opt = make_optimizer(model, config, hooks);

    std::vector<MetricsRow> history;
    for (int epoch = hooks.start_epoch; epoch <= config.epochs; ++epoch) {
        const Stopwatch clock(config.wall_clock);
        const double lr = lr_at(config.schedule, epoch);
        opt.set_lr(lr);
        model.set_training(true);

        auto order = identity_order(records.size());
        if (config.shuffle) {
            std::mt19937_64 rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
            std::shuffle(order.begin(), order.end(), rng);
        }
        const auto layouts = epoch_layouts(records, order, config.beta, config.T);
        auto state = zero_state<float>(config.spec, config.beta);
        LossTotals totals;
        for (std::size_t c = 0; c < layouts.size(); ++c) {
            const auto& layout = layouts[c];
            const auto frames = load_chunk(train, layout);
            const auto targets = chunk_targets(layout, records, config.mode);
            Tape<float> tape;
            ChunkResult result;
            {
                TapeScope<float> scope(tape);
                result = run_chunk(model, layout, frames, targets, state, config, weights);
            }
            const double loss = result.loss.defined() ? static_cast<double>(result.loss.item()) : 0.0;
            if (!std::isfinite(loss) || !finite_totals(result.totals)) numerical_abort(epoch, c, result.totals, loss);
            if (result.loss.defined() && result.loss.requires_grad()) {
                backward(result.loss, tape);
                update(model, opt, config);
            }
            state = result.state.detach();
            totals.merge(result.totals);
        }

        MetricsRow row;
        row.epoch = epoch;
        row.split = "train";
        row.lr = lr;
        totals.fill(row);
        row.wall_s = clock.seconds();
        EpochReport report{epoch, {row}, &opt};
        if (val) {
            const Stopwatch val_clock(config.wall_clock);
            auto v = evaluate(model, *val, config).row;
            v.epoch = epoch;
            v.lr = lr;
            v.wall_s = val_clock.seconds();
            report.rows.push_back(v);
        }
        history.insert(history.end(), report.rows.begin(), report.rows.end());
        if (hooks.on_epoch) hooks.on_epoch(report);
    }
    model.set_training(true);
    return history;
}

}  // namespace

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::matchnet:
            return "matchnet";
        case TrainMode::temponet:
            return "temponet";
        default:
            return "pretrain";
    }
}

TrainMode parse_mode(const std::string& name) {
    if (name == "matchnet") return TrainMode::matchnet;
    if (name == "temponet") return TrainMode::temponet;
    if (name == "pretrain") return TrainMode::pretrain;
    throw ConfigError("unknown mode '" + name + "' (expected matchnet, temponet or pretrain)");
}

double lr_at(const Schedule& schedule, int epoch) {
    if (epoch < 1) throw ConfigError("epochs are numbered from 1");
    if (schedule.period < 1 || !(schedule.gamma > 0)) throw ConfigError("schedule needs period >= 1 and gamma > 0");
    return schedule.lr0 / std::pow(schedule.gamma, (epoch - 1) / schedule.period);
}

TrainConfig TrainConfig::defaults(TrainMode mode) {
    TrainConfig c;
    c.mode = mode;
    switch (mode) {
        case TrainMode::matchnet:
            c.coeffs = {1.0, 0.01, 0.0};
            c.schedule = {0.1, 10.0, 10};
            c.epochs = 30;
            break;
        case TrainMode::temponet:
            c.coeffs = {0.0, 0.0, 1e-2};
            c.schedule = {0.1, std::sqrt(10.0), 10};
            c.epochs = 30;
            break;
        case TrainMode::pretrain:
            c.coeffs = {0.0, 0.0, 1.0};
            c.schedule = {0.1, 10.0, 30};
            c.epochs = 90;
            break;
    }
    return c;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (beta < 1) fail("beta must be >= 1");
    if (T < 1) fail("T must be >= 1");
    if (epochs < 1) fail("epochs must be >= 1");
    if (S < 2) fail("S must be >= 2");
    if (classes < 1) fail("K must be >= 1");
    if (coeffs.mu < 0 || coeffs.tau < 0 || coeffs.pi < 0) fail("loss coefficients must be nonnegative");
    if (mode == TrainMode::matchnet && coeffs.pi != 0) fail("matchnet monitors L_pi only: pi must be 0");
    if (mode == TrainMode::temponet && coeffs.tau != 0) fail("temponet monitors L_tau only: tau must be 0");
    if (!(schedule.lr0 > 0)) fail("learning rate must be positive");
    if (schedule.period < 1 || !(schedule.gamma > 0)) fail("schedule needs period >= 1 and gamma > 0");
    if (momentum < 0 || weight_decay < 0) fail("momentum and weight decay must be nonnegative");
    if (clip_norm < 0) fail("clip_norm must be nonnegative");
    spec.validate();
}

std::string to_csv(const MetricsRow& row) {
    std::ostringstream out;
    out << row.epoch << ',' << row.split << ',' << fmt(row.l_mu_mmse) << ',' << fmt(row.l_rho_mmse) << ','
        << fmt(row.l_tau_nit) << ',' << fmt(row.l_pi_nit) << ',' << fmt(row.accuracy) << ',' << fmt(row.lr) << ','
        << fmt(row.wall_s);
    return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
    auto out = open_for_write(path);
    out << kMetricsHeader << '\n';
    for (const auto& r : rows) out << to_csv(r) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

void LossTotals::merge(const LossTotals& o) {
    mu_sum += o.mu_sum;
    rho_sum += o.rho_sum;
    panning_sum += o.panning_sum;
    mu_cells += o.mu_cells;
    tau_sum += o.tau_sum;
    tau_cells += o.tau_cells;
    pi_sum += o.pi_sum;
    pi_cells += o.pi_cells;
    correct += o.correct;
}

void LossTotals::fill(MetricsRow& row) const {
    if (mu_cells > 0) {
        row.l_mu_mmse = to_mmse(mu_sum / static_cast<double>(mu_cells));
        row.l_rho_mmse = to_mmse(rho_sum / static_cast<double>(mu_cells));
    }
    if (tau_cells > 0) row.l_tau_nit = tau_sum / static_cast<double>(tau_cells);
    if (pi_cells > 0) {
        row.l_pi_nit = pi_sum / static_cast<double>(pi_cells);
        row.accuracy = static_cast<double>(correct) / static_cast<double>(pi_cells);
    }
}

double LossTotals::panning_mmse() const {
    return mu_cells > 0 ? to_mmse(panning_sum / static_cast<double>(mu_cells)) : 0.0;
}

ChunkFrames load_chunk(FrameSource& source, const ChunkLayout& layout) {
    ChunkFrames f;
    for (std::int64_t t = 0; t < layout.length; ++t) f.columns.push_back(source.batch(layout.column_cells(t)));
    if (layout.next) f.columns.push_back(source.batch(*layout.next));
    return f;
}

std::vector<int> chunk_targets(const ChunkLayout& layout, std::span<const VideoRecord> records, TrainMode mode) {
    std::vector<int> out(layout.cells.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto& r = records[static_cast<std::size_t>(layout.cells[k].record)];
        out[k] = mode == TrainMode::matchnet ? static_cast<int>(r.parent - 1) : r.label;
    }
    return out;
}

ChunkResult run_chunk(CortexModel<float>& model, const ChunkLayout& layout, const ChunkFrames& frames,
                      std::span<const int> targets, const ModelState<float>& state, const TrainConfig& config,
                      const ClassWeights& weights) {
    const bool grad = Tape<float>::active() != nullptr;
    const auto& co = config.coeffs;
    const bool matchnet = config.mode == TrainMode::matchnet;
    const auto rows = static_cast<std::size_t>(layout.rows);
    if (static_cast<std::int64_t>(frames.columns.size()) < layout.length) throw ShapeError("chunk is missing frames");

    std::vector<Tensor<float>> terms;
    std::vector<double> counts;
    std::vector<int> group;  // 0 mu, 1 tau, 2 pi
    ChunkResult res;
    auto& tot = res.totals;
    auto st = state;

    for (std::int64_t t = 0; t < layout.length; ++t) {
        const auto reset = layout.column(layout.reset, t);
        if (count(reset) > 0) st = reset_state_rows(st, reset);
        const auto active = invert(layout.column(layout.padding, t));
        const auto& x = frames.columns[static_cast<std::size_t>(t)];
        const auto col_targets = std::span<const int>(targets).subspan(layout.index(t, 0), rows);
        const StepOptions opts{active, true};
        const auto input_state = st;
        auto out = model.step(x, st, opts);

        const auto match = layout.column(layout.match, t);
        if (const auto n = count(match); n > 0 && (co.mu > 0 || config.monitor)) {
            const auto& target = frames.columns.at(static_cast<std::size_t>(t + 1));
            double mu_value;
            if (grad && co.mu > 0) {
                auto l = mse_rows(out.prediction, target, match);
                mu_value = static_cast<double>(l.item());
                terms.push_back(l);
                counts.push_back(static_cast<double>(n));
                group.push_back(0);
            } else {
                mu_value = mse_value(out.prediction, target, match);
            }
            const auto dn = static_cast<double>(n);
            tot.mu_sum += mu_value * dn;
            tot.rho_sum += mse_value(out.prediction, x, match) * dn;
            tot.panning_sum += mse_value(x, target, match) * dn;
            tot.mu_cells += n;
        }

        const auto ends = layout.column(layout.video_end, t);
        if (const auto n = count(ends); n > 0 && (co.tau > 0 || config.monitor)) {
            double tau_value;
            if (grad && co.tau > 0) {
                // static pass: same frame, feedback taken as constants
                const auto fixed = input_state.detach();
                auto [e, logits] = model.discriminate(x, fixed.feedback, StepOptions{active, false});
                auto l = cross_entropy(logits, col_targets, weights, ends);
                tau_value = static_cast<double>(l.item());
                terms.push_back(l);
                counts.push_back(static_cast<double>(n));
                group.push_back(1);
            } else {
                tau_value = ce_value(out.logits, col_targets, weights, ends);
            }
            tot.tau_sum += tau_value * static_cast<double>(n);
            tot.tau_cells += n;
        }

        const bool pi_column = matchnet ? t == 0 : t == layout.length - 1;
        if (const auto n = count(active); pi_column && n > 0 && (co.pi > 0 || config.monitor)) {
            double pi_value;
            if (grad && co.pi > 0) {
                auto l = cross_entropy(out.logits, col_targets, weights, active);
                pi_value = static_cast<double>(l.item());
                terms.push_back(l);
                counts.push_back(static_cast<double>(n));
                group.push_back(2);
            } else {
                pi_value = ce_value(out.logits, col_targets, weights, active);
            }
            tot.pi_sum += pi_value * static_cast<double>(n);
            tot.pi_cells += n;
            tot.correct += correct_rows(out.logits, col_targets, active);
        }
        st = out.state;
    }
    res.state = st;

    if (!terms.empty()) {
        double group_count[3] = {0, 0, 0};
        for (std::size_t i = 0; i < terms.size(); ++i) group_count[group[i]] += counts[i];
        const double coeff[3] = {co.mu, co.tau, co.pi};
        std::vector<double> w(terms.size());
        for (std::size_t i = 0; i < terms.size(); ++i) w[i] = coeff[group[i]] * counts[i] / group_count[group[i]];
        res.loss = weighted_sum<float>(terms, w);
    }
    return res;
}

std::vector<MetricsRow> train_matchnet(CortexModel<float>& model, FrameSource& train, FrameSource* val,
                                       const TrainConfig& config, const TrainHooks& hooks) {
    if (config.mode != TrainMode::matchnet) throw ConfigError("train_matchnet needs mode = matchnet");
    return train_recurrent(model, train, val, config, hooks);
}

std::vector<MetricsRow> train_temponet(CortexModel<float>& model, FrameSource& train, FrameSource* val,
                                       const TrainConfig& config, const TrainHooks& hooks) {
    if (config.mode != TrainMode::temponet) throw ConfigError("train_temponet needs mode = temponet");
    return train_recurrent(model, train, val, config, hooks);
}

std::vector<GridCell> all_stills(std::span<const VideoRecord> records) {
    std::vector<GridCell> out;
    for (std::size_t v = 0; v < records.size(); ++v) {
        for (std::int64_t k = 1; k <= records[v].frames; ++k) out.push_back({static_cast<std::int64_t>(v), k, false});
    }
    return out;
}

std::vector<MetricsRow> pretrain_discriminative(CortexModel<float>& model, FrameSource& source,
                                                std::span<const GridCell> train, std::span<const GridCell> val,
                                                const TrainConfig& config, const TrainHooks& hooks) {
    if (config.mode != TrainMode::pretrain) throw ConfigError("pretrain_discriminative needs mode = pretrain");
    config.validate();
    if (train.empty()) throw ConfigError("no training stills");
    if (model.classes() != config.classes) throw ConfigError("model logits do not match K");
    check_targets(source.records(), TrainMode::pretrain, config.classes);
    const auto weights = unit_weights(config.classes);
    auto opt = make_optimizer(model, config, hooks);
    const auto& records = source.records();

    std::vector<MetricsRow> history;
    for (int epoch = hooks.start_epoch; epoch <= config.epochs; ++epoch) {
        const Stopwatch clock(config.wall_clock);
        const double lr = lr_at(config.schedule, epoch);
        opt.set_lr(lr);
        model.set_training(true);
        auto order = identity_order(train.size());
        if (config.shuffle) {
            std::mt19937_64 rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
            std::shuffle(order.begin(), order.end(), rng);
        }
        LossTotals totals;
        const auto beta = static_cast<std::size_t>(config.beta);
        for (std::size_t first = 0; first < order.size(); first += beta) {
            const std::size_t n = std::min(beta, order.size() - first);
            // batch statistics need two samples
            if (n < 2 && config.batch_norm && order.size() > 1) break;
            std::vector<GridCell> cells;
            std::vector<int> targets;
            for (std::size_t i = first; i < first + n; ++i) {
                cells.push_back(train[order[i]]);
                targets.push_back(records[static_cast<std::size_t>(train[order[i]].record)].label);
            }
            const auto x = source.batch(cells);
            Tape<float> tape;
            Tensor<float> loss, logits;
            {
                TapeScope<float> scope(tape);
                logits = model.feedforward_logits(x);
                loss = cross_entropy(logits, targets, weights);
            }
            const double value = static_cast<double>(loss.item());
            LossTotals batch;
            batch.pi_sum = value * static_cast<double>(n);
            batch.pi_cells = static_cast<std::int64_t>(n);
            batch.correct = correct_rows(logits, targets, {});
            if (!std::isfinite(value)) numerical_abort(epoch, first / beta, batch, value);
            backward(loss, tape);
            update(model, opt, config);
            totals.merge(batch);
        }
        MetricsRow row;
        row.epoch = epoch;
        row.split = "train";
        row.lr = lr;
        totals.fill(row);
        row.wall_s = clock.seconds();
        EpochReport report{epoch, {row}, &opt};
        if (!val.empty()) {
            const Stopwatch val_clock(config.wall_clock);
            auto v = evaluate_stills(model, source, val, config).row;
            v.epoch = epoch;
            v.lr = lr;
            v.wall_s = val_clock.seconds();
            report.rows.push_back(v);
        }
        history.insert(history.end(), report.rows.begin(), report.rows.end());
        if (hooks.on_epoch) hooks.on_epoch(report);
    }
    model.set_training(true);
    return history;
}

EvalResult evaluate(CortexModel<float>& model, FrameSource& source, const TrainConfig& config) {
    if (config.mode == TrainMode::pretrain) throw ConfigError("evaluate needs a recurrent mode; use evaluate_stills");
    const auto& records = source.records();
    check_targets(records, config.mode, model.classes());
    const bool was_training = model.training();
    model.set_training(false);
    NoGradScope<float> no_grad;

    auto eval_config = config;
    eval_config.classes = model.classes();
    eval_config.monitor = true;
    const ClassWeights weights = training_weights(records, eval_config);
    const std::int64_t beta = std::min(config.beta, total_frames(records));
    const auto layouts = epoch_layouts(records, identity_order(records.size()), beta, config.T);
    auto state = zero_state<float>(model.spec(), beta);
    LossTotals totals;
    for (const auto& layout : layouts) {
        const auto frames = load_chunk(source, layout);
        const auto targets = chunk_targets(layout, records, config.mode);
        auto result = run_chunk(model, layout, frames, targets, state, eval_config, weights);
        state = result.state;
        totals.merge(result.totals);
    }
    model.set_training(was_training);

    EvalResult out;
    out.row.split = "val";
    totals.fill(out.row);
    out.panning_mmse = totals.panning_mmse();
    return out;
}

EvalResult evaluate_stills(CortexModel<float>& model, FrameSource& source, std::span<const GridCell> stills,
                           const TrainConfig& config) {
    const bool was_training = model.training();
    model.set_training(false);
    NoGradScope<float> no_grad;
    const auto weights = unit_weights(model.classes());
    const auto& records = source.records();
    LossTotals totals;
    const auto beta = static_cast<std::size_t>(std::max<std::int64_t>(config.beta, 1));
    for (std::size_t first = 0; first < stills.size(); first += beta) {
        const std::size_t n = std::min(beta, stills.size() - first);
        const auto cells = stills.subspan(first, n);
        std::vector<int> targets;
        for (const auto& c : cells) targets.push_back(records[static_cast<std::size_t>(c.record)].label);
        const auto logits = model.feedforward_logits(source.batch(cells));
        totals.pi_sum += ce_value(logits, targets, weights, {}) * static_cast<double>(n);
        totals.pi_cells += static_cast<std::int64_t>(n);
        totals.correct += correct_rows(logits, targets, {});
    }
    model.set_training(was_training);
    EvalResult out;
    out.row.split = "val";
    totals.fill(out.row);
    return out;
}

std::vector<MatchTraceRow> match_trace(std::span<const Tensor<float>> frames, const FramePredictor& predict) {
    std::vector<MatchTraceRow> rows;
    NoGradScope<float> no_grad;
    for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
        const auto h = predict(frames[k], static_cast<std::int64_t>(k + 1));
        MatchTraceRow r;
        r.t = static_cast<std::int64_t>(k + 1);
        r.l_mu_mmse = to_mmse(static_cast<double>(mse(h, frames[k + 1]).item()));
        r.l_rho_mmse = to_mmse(static_cast<double>(mse(h, frames[k]).item()));
        r.panning_mmse = to_mmse(panning_speed(frames[k], frames[k + 1]));
        rows.push_back(r);
    }
    return rows;
}

std::vector<MatchTraceRow> match_trace(CortexModel<float>& model, std::span<const Tensor<float>> frames) {
    const bool was_training = model.training();
    model.set_training(false);
    auto state = zero_state<float>(model.spec(), 1);
    const auto rows = match_trace(frames, [&](const Tensor<float>& x, std::int64_t) {
        auto out = model.step(as_batch(x), state);
        state = out.state;
        return Tensor<float>(x.shape(), std::vector<float>(out.prediction.data().begin(), out.prediction.data().end()));
    });
    model.set_training(was_training);
    return rows;
}

std::vector<std::vector<double>> probability_trace(CortexModel<float>& model, std::span<const Tensor<float>> frames) {
    const bool was_training = model.training();
    model.set_training(false);
    NoGradScope<float> no_grad;
    auto state = zero_state<float>(model.spec(), 1);
    std::vector<std::vector<double>> probs;
    for (const auto& x : frames) {
        auto out = model.step(as_batch(x), state);
        state = out.state;
        probs.push_back(softmax_row(out.logits));
    }
    model.set_training(was_training);
    return probs;
}

std::vector<std::vector<double>> feedforward_trace(CortexModel<float>& model, std::span<const Tensor<float>> frames) {
    const bool was_training = model.training();
    model.set_training(false);
    NoGradScope<float> no_grad;
    std::vector<std::vector<double>> probs;
    for (const auto& x : frames) probs.push_back(softmax_row(model.feedforward_logits(as_batch(x))));
    model.set_training(was_training);
    return probs;
}

void write_match_trace(const std::filesystem::path& path, std::span<const MatchTraceRow> rows) {
    auto out = open_for_write(path);
    out << "t,l_mu_mmse,l_rho_mmse,panning_mmse\n";
    for (const auto& r : rows) {
        out << r.t << ',' << fmt(r.l_mu_mmse) << ',' << fmt(r.l_rho_mmse) << ',' << fmt(r.panning_mmse) << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

void write_probability_trace(const std::filesystem::path& path, const std::vector<std::vector<double>>& probs) {
    auto out = open_for_write(path);
    const std::size_t k = probs.empty() ? 0 : probs.front().size();
    out << 't';
    for (std::size_t c = 0; c < k; ++c) out << ",p_class_" << c;
    out << ",argmax\n";
    for (std::size_t t = 0; t < probs.size(); ++t) {
        out << t + 1;
        for (double p : probs[t]) out << ',' << fmt(p);
        out << ',' << (std::max_element(probs[t].begin(), probs[t].end()) - probs[t].begin()) << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Stability stability_metrics(const std::vector<std::vector<double>>& probs) {
    if (probs.empty() || probs.front().empty()) throw ConfigError("stability metrics need a non-empty trace");
    const std::size_t k = probs.front().size();
    Stability s;
    std::int64_t prev = -1;
    for (const auto& p : probs) {
        if (p.size() != k) throw ShapeError("probability rows differ in length");
        const auto top = std::max_element(p.begin(), p.end()) - p.begin();
        if (prev >= 0 && top != prev) ++s.flicker_count;
        prev = top;
    }
    const auto frames = static_cast<double>(probs.size());
    s.mean_top1_dwell = frames / static_cast<double>(s.flicker_count + 1);
    double var = 0;
    for (std::size_t c = 0; c < k; ++c) {
        double mean = 0;
        for (const auto& p : probs) mean += p[c];
        mean /= frames;
        double v = 0;
        for (const auto& p : probs) v += (p[c] - mean) * (p[c] - mean);
        var += v / frames;
    }
    s.temporal_variance = var / static_cast<double>(k);
    return s;
}

std::vector<Tensor<float>> clip_frames(FrameSource& source, std::int64_t record) {
    const auto& r = source.records().at(static_cast<std::size_t>(record));
    std::vector<Tensor<float>> out;
    for (std::int64_t k = 1; k <= r.frames; ++k) out.push_back(source.frame(record, k));
    return out;
}

}  // namespace cortex
