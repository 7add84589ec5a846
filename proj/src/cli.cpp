// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "cortex/checkpoint.hpp"
#include "cortex/error.hpp"
#include "cortex/image.hpp"
#include "cortex/pipeline.hpp"
#include "cortex/synth.hpp"
#include "cortex/trainers.hpp"

namespace cortex::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string num(double v) {
    std::ostringstream o;
    o << std::setprecision(10) << v;
    return o.str();
}

// Options shared by train and eval; unset values fall back to the mode defaults.
struct TrainArgs {
    std::string mode = "matchnet";
    std::string data;
    std::string run_dir = "run";
    std::string init;
    std::string resume;
    int levels = 4;
    int side = 256;
    std::string maps;
    bool batch_norm = true;
    int classes = 0;
    std::optional<std::int64_t> beta, T, val_frames;
    std::optional<int> S, epochs, period;
    std::optional<double> mu, tau, pi, lr, gamma, momentum, weight_decay, clip_norm;
    std::uint64_t seed = 0;
    bool shuffle = true;
    bool wall_clock = true;
};

void add_train_options(CLI::App& app, TrainArgs& a) {
    app.add_option("--mode", a.mode, "matchnet, temponet or pretrain");
    app.add_option("--data", a.data, "dataset root (frame directories and manifest.jsonl)");
    app.add_option("--levels", a.levels, "number of D/G block pairs L");
    app.add_option("--side", a.side, "input side R");
    app.add_option("--maps", a.maps, "comma-separated feature maps f_1..f_L (default ladder when empty)");
    app.add_option("--batch_norm,--batch-norm", a.batch_norm, "batch normalization in the blocks");
    app.add_option("--classes", a.classes, "logit width K (0 derives it from the data)");
    app.add_option("--beta", a.beta, "grid rows (batch size)");
    app.add_option("--T", a.T, "chunk length");
    app.add_option("--S", a.S, "temponet subsamples");
    app.add_option("--val_frames,--val-frames", a.val_frames, "matchnet validation frames per video");
    app.add_option("--mu", a.mu, "L_mu coefficient");
    app.add_option("--tau", a.tau, "L_tau coefficient");
    app.add_option("--pi", a.pi, "L_pi coefficient");
    app.add_option("--lr", a.lr, "initial learning rate");
    app.add_option("--gamma", a.gamma, "learning-rate decay factor");
    app.add_option("--period", a.period, "epochs between decays");
    app.add_option("--momentum", a.momentum, "SGD momentum");
    app.add_option("--weight_decay,--weight-decay", a.weight_decay, "SGD weight decay");
    app.add_option("--epochs", a.epochs, "training epochs");
    app.add_option("--seed", a.seed, "seed for initialization and shuffling");
    app.add_option("--clip_norm,--clip-norm", a.clip_norm, "global gradient-norm clip (0 disables)");
    app.add_option("--shuffle", a.shuffle, "permute the video order every epoch");
    app.add_option("--wall_clock,--wall-clock", a.wall_clock, "record wall time in the metrics");
    app.add_option("--init", a.init, "checkpoint whose parameters initialize the model");
}

LayerSpec layer_spec(const TrainArgs& a) {
    LayerSpec spec = LayerSpec::standard(a.levels, a.side);
    if (!a.maps.empty()) {
        spec.maps = {3};
        std::stringstream ss(a.maps);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                spec.maps.push_back(std::stoi(trim(item)));
            } catch (const std::exception&) {
                throw ConfigError("maps: '" + item + "' is not an integer");
            }
        }
    }
    spec.validate();
    return spec;
}

TrainConfig resolve(const TrainArgs& a) {
    auto c = TrainConfig::defaults(parse_mode(a.mode));
    c.spec = layer_spec(a);
    c.batch_norm = a.batch_norm;
    c.classes = a.classes;
    if (a.beta) c.beta = *a.beta;
    if (a.T) c.T = *a.T;
    if (a.S) c.S = *a.S;
    if (a.val_frames) c.val_frames = *a.val_frames;
    if (a.mu) c.coeffs.mu = *a.mu;
    if (a.tau) c.coeffs.tau = *a.tau;
    if (a.pi) c.coeffs.pi = *a.pi;
    if (a.lr) c.schedule.lr0 = *a.lr;
    if (a.gamma) c.schedule.gamma = *a.gamma;
    if (a.period) c.schedule.period = *a.period;
    if (a.momentum) c.momentum = *a.momentum;
    if (a.weight_decay) c.weight_decay = *a.weight_decay;
    if (a.epochs) c.epochs = *a.epochs;
    if (a.clip_norm) c.clip_norm = *a.clip_norm;
    c.seed = a.seed;
    c.shuffle = a.shuffle;
    c.wall_clock = a.wall_clock;
    return c;
}

std::string maps_string(const LayerSpec& spec) {
    std::string s;
    for (std::size_t i = 1; i < spec.maps.size(); ++i) s += (i > 1 ? "," : "") + std::to_string(spec.maps[i]);
    return s;
}

std::vector<std::pair<std::string, std::string>> describe(const TrainConfig& c, const TrainArgs& a) {
    return {{"mode", to_string(c.mode)},
            {"data", a.data},
            {"init", a.init},
            {"levels", std::to_string(c.spec.levels)},
            {"side", std::to_string(c.spec.side)},
            {"maps", maps_string(c.spec)},
            {"batch_norm", c.batch_norm ? "true" : "false"},
            {"classes", std::to_string(c.classes)},
            {"beta", std::to_string(c.beta)},
            {"T", std::to_string(c.T)},
            {"S", std::to_string(c.S)},
            {"val_frames", std::to_string(c.val_frames)},
            {"mu", num(c.coeffs.mu)},
            {"tau", num(c.coeffs.tau)},
            {"pi", num(c.coeffs.pi)},
            {"lr", num(c.schedule.lr0)},
            {"gamma", num(c.schedule.gamma)},
            {"period", std::to_string(c.schedule.period)},
            {"momentum", num(c.momentum)},
            {"weight_decay", num(c.weight_decay)},
            {"epochs", std::to_string(c.epochs)},
            {"seed", std::to_string(c.seed)},
            {"clip_norm", num(c.clip_norm)},
            {"shuffle", c.shuffle ? "true" : "false"},
            {"wall_clock", c.wall_clock ? "true" : "false"}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void make_dirs(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Records of the training run's split: {train, val}.
std::pair<std::vector<VideoRecord>, std::vector<VideoRecord>> split_records(const std::vector<VideoRecord>& records,
                                                                            const TrainConfig& c) {
    if (c.mode == TrainMode::matchnet) {
        auto plan = matchnet_split(records, c.val_frames);
        return {plan.train, plan.val};
    }
    auto plan = temponet_split(records, c.S);
    return {plan.train, plan.val};
}

int derived_classes(const std::vector<VideoRecord>& records, TrainMode mode) {
    if (mode == TrainMode::matchnet) return static_cast<int>(records.size());
    return class_count(records);
}

void check_compatible(const CheckpointHeader& h, const TrainConfig& c, const std::string& what) {
    if (!(h.spec == c.spec) || h.batch_norm != c.batch_norm || h.classes != c.classes) {
        throw ShapeError(what + " holds " + to_string(h.spec) + " K=" + std::to_string(h.classes) +
                         " norm=" + (h.batch_norm ? "on" : "off") + ", configuration asks for " + to_string(c.spec) +
                         " K=" + std::to_string(c.classes) + " norm=" + (c.batch_norm ? "on" : "off"));
    }
}

// Lines of an existing metrics CSV whose epoch is at most `last_epoch`.
std::vector<std::string> earlier_metrics(const fs::path& path, int last_epoch) {
    std::vector<std::string> out;
    std::ifstream in(path);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        if (std::atoi(line.c_str()) <= last_epoch) out.push_back(line);
    }
    return out;
}

std::string stability_line(const std::string& name, const Stability& s) {
    std::ostringstream o;
    o << name << ": flicker_count=" << s.flicker_count << " mean_top1_dwell=" << num(s.mean_top1_dwell)
      << " temporal_variance=" << num(s.temporal_variance);
    return o.str();
}

int cmd_gen(const SynthSpec& spec, const std::string& out_dir, std::ostream& out) {
    spec.validate();
    const auto records = generate(spec, out_dir);
    std::int64_t frames = 0;
    for (const auto& r : records) frames += r.frames;
    out << "wrote " << records.size() << " videos, " << frames << " frames, " << spec.classes << " classes to "
        << out_dir << '\n';
    return kOk;
}

struct StatsArgs {
    std::string data;
    std::string manifest;
    double beta = 20;
    double T = 10;
    double confidence = 0.95;
    std::string filtered;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
    const fs::path mf = !a.manifest.empty() ? fs::path(a.manifest) : fs::path(a.data) / "manifest.jsonl";
    if (fs::exists(mf)) {
        std::ifstream in(mf);
        std::string line;
        bool any = false;
        while (std::getline(in, line)) any = any || !trim(line).empty();
        if (!any) throw ConfigError("manifest " + mf.string() + " lists no videos");
    }
    const auto records = scan_dataset(a.data, a.manifest);
    std::vector<double> lengths;
    for (const auto& r : records) lengths.push_back(static_cast<double>(r.frames));
    const double total = std::accumulate(lengths.begin(), lengths.end(), 0.0);
    const double mean = total / static_cast<double>(lengths.size());
    out << "videos " << records.size() << '\n';
    out << "classes " << class_count(records) << '\n';
    out << "frames total " << num(total) << " min " << num(*std::min_element(lengths.begin(), lengths.end()))
        << " max " << num(*std::max_element(lengths.begin(), lengths.end())) << " mean " << num(mean) << '\n';
    out << "expected video changes per chunk (beta " << num(a.beta) << ", T " << num(a.T) << "): " << std::fixed
        << std::setprecision(2) << expected_video_changes(a.beta, a.T, mean) << std::defaultfloat << '\n';
    if (records.size() < 3) throw ConfigError("duration interval needs at least 3 videos, found " +
                                              std::to_string(records.size()));
    const auto iv = duration_interval(lengths, a.confidence);
    out << "stddev " << num(iv.stddev) << '\n';
    out << "t-interval " << num(a.confidence * 100) << "% [" << num(iv.lower) << ", " << num(iv.upper) << "]\n";
    if (!a.filtered.empty()) {
        const auto res = remove_duration_outliers(records, a.confidence);
        write_manifest(a.filtered, res.records, a.data);
        out << "removed " << res.removed << ", trimmed " << res.trimmed << ", wrote " << a.filtered << '\n';
    }
    return kOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    if (a.data.empty()) throw ConfigError("train needs --data");
    auto config = resolve(a);
    const auto records = scan_dataset(a.data);
    if (config.classes == 0) config.classes = derived_classes(records, config.mode);
    config.validate();
    const auto [train_records, val_records] = split_records(records, config);

    const fs::path dir = a.run_dir;
    make_dirs(dir);
    std::string echo;
    for (const auto& [k, v] : describe(config, a)) echo += k + " = " + v + "\n";
    write_text(dir / "config.txt", echo);
    out << echo;

    std::optional<Checkpoint> resumed;
    TrainHooks hooks;
    CortexModel<float> model(config.spec, config.classes, config.batch_norm, config.seed);
    if (!a.resume.empty()) {
        check_compatible(read_checkpoint_header(a.resume), config, "checkpoint " + a.resume);
        resumed = load_checkpoint(a.resume);
        model = std::move(resumed->model);
        hooks.start_epoch = resumed->epoch + 1;
        if (resumed->optimizer) hooks.optimizer = &*resumed->optimizer;
        out << "resuming after epoch " << resumed->epoch << '\n';
    } else if (!a.init.empty()) {
        const auto init = load_checkpoint(a.init);
        const bool head = load_parameters_into(init, model);
        out << "initialized from " << a.init << (head ? "" : " (fresh classifier)") << '\n';
    }

    const fs::path metrics_path = dir / "metrics.csv";
    const fs::path ckpt_path = dir / "model.cxck";
    std::vector<std::string> lines;
    if (resumed) lines = earlier_metrics(metrics_path, resumed->epoch);
    auto flush_metrics = [&] {
        std::string text = std::string(kMetricsHeader) + "\n";
        for (const auto& l : lines) text += l + "\n";
        write_text(metrics_path, text);
    };
    hooks.on_epoch = [&](const EpochReport& r) {
        for (const auto& row : r.rows) {
            lines.push_back(to_csv(row));
            out << lines.back() << '\n';
        }
        save_checkpoint(ckpt_path, model, r.optimizer, r.epoch);
        flush_metrics();
    };
    flush_metrics();

    if (config.mode == TrainMode::pretrain) {
        std::vector<VideoRecord> all = train_records;
        all.insert(all.end(), val_records.begin(), val_records.end());
        FrameSource source(all, config.spec.side);
        auto stills = all_stills(all);
        const auto n_train = static_cast<std::int64_t>(train_records.size());
        std::vector<GridCell> train, val;
        for (const auto& c : stills) (c.record < n_train ? train : val).push_back(c);
        pretrain_discriminative(model, source, train, val, config, hooks);
    } else {
        FrameSource train(train_records, config.spec.side);
        FrameSource val(val_records, config.spec.side);
        if (config.mode == TrainMode::matchnet) {
            train_matchnet(model, train, &val, config, hooks);
        } else {
            train_temponet(model, train, &val, config, hooks);
        }
    }
    if (!fs::exists(ckpt_path)) save_checkpoint(ckpt_path, model, nullptr, resumed ? resumed->epoch : 0);
    out << "run directory " << dir.string() << '\n';
    return kOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string ff_checkpoint;
    std::string out_dir = "eval";
    std::string split = "val";
    std::int64_t clip = 1;
    bool compare_feedforward = false;
    bool dump_frames = false;
    std::string perturb = "none";
    double perturb_amount = 0.1;
    double perturb_fraction = 0.3;
    std::uint64_t perturb_seed = 0;
};

std::vector<Tensor<float>> perturbed_clip(std::vector<Tensor<float>> frames, const EvalArgs& e) {
    if (e.perturb == "none") return frames;
    Perturbation p;
    if (e.perturb == "noise") {
        p.kind = PerturbKind::noise;
    } else if (e.perturb == "blur") {
        p.kind = PerturbKind::blur;
    } else {
        throw ConfigError("perturb must be none, noise or blur");
    }
    if (e.perturb_fraction < 0 || e.perturb_fraction > 1) throw ConfigError("perturb_fraction must be in [0, 1]");
    p.amount = e.perturb_amount;
    p.seed = e.perturb_seed;
    std::vector<std::int64_t> idx(frames.size());
    std::iota(idx.begin(), idx.end(), std::int64_t{1});
    std::mt19937_64 rng(e.perturb_seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(std::llround(e.perturb_fraction * static_cast<double>(frames.size()))));
    std::sort(idx.begin(), idx.end());
    return perturb_frames(frames, p, idx);
}

int cmd_eval(const TrainArgs& a, const EvalArgs& e, std::ostream& out) {
    if (e.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
    if (a.data.empty()) throw ConfigError("eval needs --data");
    auto config = resolve(a);
    if (config.mode == TrainMode::pretrain) config.mode = TrainMode::temponet;
    const auto header = read_checkpoint_header(e.checkpoint);
    config.classes = header.classes;
    if (a.classes != 0 && a.classes != header.classes) {
        throw ShapeError("checkpoint has K=" + std::to_string(header.classes) + ", configuration asks for " +
                         std::to_string(a.classes));
    }
    // the stored LayerSpec is authoritative unless the caller pinned one
    const bool pinned = !a.maps.empty() || a.levels != 4 || a.side != 256;
    if (pinned) check_compatible(header, config, "checkpoint " + e.checkpoint);
    config.spec = header.spec;
    config.batch_norm = header.batch_norm;
    auto ckpt = load_checkpoint(e.checkpoint);
    auto& model = ckpt.model;

    const auto records = scan_dataset(a.data);
    std::vector<VideoRecord> chosen;
    if (e.split == "all") {
        chosen = records;
    } else if (e.split == "val") {
        chosen = split_records(records, config).second;
    } else {
        throw ConfigError("split must be val or all");
    }
    FrameSource source(chosen, config.spec.side);
    const fs::path dir = e.out_dir;
    make_dirs(dir);

    auto result = evaluate(model, source, config);
    result.row.epoch = ckpt.epoch;
    write_metrics_csv(dir / "metrics.csv", std::span<const MetricsRow>(&result.row, 1));
    out << kMetricsHeader << '\n' << to_csv(result.row) << '\n';
    if (config.mode == TrainMode::matchnet) out << "panning_mmse " << num(result.panning_mmse) << '\n';

    if (e.clip < 1 || e.clip > static_cast<std::int64_t>(chosen.size())) {
        throw ConfigError("clip must be in [1, " + std::to_string(chosen.size()) + "]");
    }
    const auto frames = perturbed_clip(clip_frames(source, e.clip - 1), e);

    if (config.mode == TrainMode::matchnet) {
        const auto rows = match_trace(model, frames);
        write_match_trace(dir / "trace.csv", rows);
        out << "trace " << (dir / "trace.csv").string() << " (" << rows.size() << " rows)\n";
    }
    if (config.mode == TrainMode::temponet || e.compare_feedforward) {
        const auto full = probability_trace(model, frames);
        write_probability_trace(dir / "probs_full.csv", full);
        std::string summary = stability_line("full", stability_metrics(full)) + "\n";
        if (e.compare_feedforward) {
            std::vector<std::vector<double>> ff;
            if (!e.ff_checkpoint.empty()) {
                auto ff_ckpt = load_checkpoint(e.ff_checkpoint);
                if (ff_ckpt.model.spec().side != config.spec.side) {
                    throw ShapeError("feed-forward checkpoint expects side " +
                                     std::to_string(ff_ckpt.model.spec().side));
                }
                ff = feedforward_trace(ff_ckpt.model, frames);
            } else {
                ff = feedforward_trace(model, frames);
            }
            write_probability_trace(dir / "probs_ff.csv", ff);
            summary += stability_line("feedforward", stability_metrics(ff)) + "\n";
        }
        write_text(dir / "stability.txt", summary);
        out << summary;
    }

    if (e.dump_frames) {
        const fs::path fd = dir / "frames";
        make_dirs(fd);
        auto state = zero_state<float>(model.spec(), 1);
        model.set_training(false);
        NoGradScope<float> no_grad;
        for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
            Shape s{1};
            s.insert(s.end(), frames[k].shape().begin(), frames[k].shape().end());
            auto step = model.step(Tensor<float>(s, std::vector<float>(frames[k].data().begin(), frames[k].data().end())),
                                   state);
            state = step.state;
            const Tensor<float> h(frames[k].shape(), std::vector<float>(step.prediction.data().begin(),
                                                                        step.prediction.data().end()));
            char name[32];
            std::snprintf(name, sizeof name, "%04zu", k + 1);
            write_image(fd / (std::string(name) + "_x.png"), tensor_to_image(frames[k]));
            write_image(fd / (std::string(name) + "_h.png"), tensor_to_image(h));
            write_image(fd / (std::string(name) + "_next.png"), tensor_to_image(frames[k + 1]));
        }
        out << "frames " << fd.string() << '\n';
    }
    return kOk;
}

// Rewrites argv so that config-file entries precede the command-line options of
// the subcommand (command line wins under TakeLast).
std::vector<std::string> expand_config(const std::vector<std::string>& argv, CLI::App& app) {
    if (argv.size() < 2) return argv;
    CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands({})) {
        if (s->get_name() == argv[1]) sub = s;
    }
    if (!sub) return argv;
    std::string path;
    for (std::size_t i = 2; i < argv.size(); ++i) {
        if (argv[i] == "--config" && i + 1 < argv.size()) path = argv[i + 1];
        if (argv[i].rfind("--config=", 0) == 0) path = argv[i].substr(9);
    }
    if (path.empty()) return argv;
    std::vector<std::string> out(argv.begin(), argv.begin() + 2);
    for (const auto& [key, value] : read_config_file(path)) {
        if (key == "config" || sub->get_option_no_throw("--" + key) == nullptr) {
            throw ConfigError("unknown config key '" + key + "' in " + path);
        }
        if (value.empty()) continue;
        out.push_back("--" + key + "=" + value);
    }
    out.insert(out.end(), argv.begin() + 2, argv.end());
    return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        out.emplace_back(key, trim(line.substr(eq + 1)));
    }
    return out;
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"CortexNet: recurrent predictive vision models"};
    app.name(argv.empty() ? "cortex" : fs::path(argv[0]).filename().string());
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    SynthSpec synth;
    std::string gen_out;
    std::int64_t frames = 0;
    auto* gen = app.add_subcommand("gen", "write a synthetic dataset");
    gen->add_option("--config", "key = value file");
    gen->add_option("--videos", synth.videos);
    gen->add_option("--classes", synth.classes);
    gen->add_option("--frames", frames, "frames per video (sets min and max)");
    gen->add_option("--min_frames,--min-frames", synth.min_frames);
    gen->add_option("--max_frames,--max-frames", synth.max_frames);
    gen->add_option("--side", synth.side);
    gen->add_option("--object_speed_min,--object-speed-min", synth.object_speed_min);
    gen->add_option("--object_speed_max,--object-speed-max", synth.object_speed_max);
    gen->add_option("--pan_speed_min,--pan-speed-min", synth.pan_speed_min);
    gen->add_option("--pan_speed_max,--pan-speed-max", synth.pan_speed_max);
    gen->add_option("--object", synth.object, "draw the class shape");
    gen->add_option("--noise", synth.noise, "std of additive pixel noise");
    gen->add_option("--class_skew,--class-skew", synth.class_skew);
    gen->add_option("--seed", synth.seed);
    gen->add_option("--format", synth.format, "ppm or png");
    gen->add_option("--out", gen_out, "output root")->required();

    StatsArgs stats_args;
    auto* stats = app.add_subcommand("stats", "dataset length statistics and outlier filtering");
    stats->add_option("--config", "key = value file");
    stats->add_option("--data", stats_args.data, "dataset root")->required();
    stats->add_option("--manifest", stats_args.manifest, "manifest path (default <data>/manifest.jsonl)");
    stats->add_option("--beta", stats_args.beta);
    stats->add_option("--T", stats_args.T);
    stats->add_option("--confidence", stats_args.confidence);
    stats->add_option("--filter", stats_args.filtered, "write an outlier-filtered manifest here");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", "key = value file");
    add_train_options(*train, train_args);
    train->add_option("--run_dir,--run-dir", train_args.run_dir, "output directory");
    train->add_option("--resume", train_args.resume, "checkpoint to continue from");

    TrainArgs eval_train;
    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and write traces");
    eval->add_option("--config", "key = value file");
    add_train_options(*eval, eval_train);
    eval->add_option("--run_dir,--run-dir", eval_train.run_dir, "ignored (accepted for run configs)");
    eval->add_option("--checkpoint", eval_args.checkpoint)->required();
    eval->add_option("--ff_checkpoint,--ff-checkpoint", eval_args.ff_checkpoint,
                     "feed-forward baseline model (default: the checkpoint's own discriminative branch)");
    eval->add_option("--out", eval_args.out_dir, "output directory");
    eval->add_option("--split", eval_args.split, "val or all");
    eval->add_option("--clip", eval_args.clip, "1-based clip index for traces");
    eval->add_flag("--compare_feedforward,--compare-feedforward", eval_args.compare_feedforward);
    eval->add_flag("--dump_frames,--dump-frames", eval_args.dump_frames, "write x[t], h[t], x[t+1] images");
    eval->add_option("--perturb", eval_args.perturb, "none, noise or blur");
    eval->add_option("--perturb_amount,--perturb-amount", eval_args.perturb_amount);
    eval->add_option("--perturb_fraction,--perturb-fraction", eval_args.perturb_fraction);
    eval->add_option("--perturb_seed,--perturb-seed", eval_args.perturb_seed);

    try {
        auto args = expand_config(argv, app);
        std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
        app.parse(reversed);
        if (*gen) {
            if (frames > 0) synth.min_frames = synth.max_frames = frames;
            return cmd_gen(synth, gen_out, out);
        }
        if (*stats) return cmd_stats(stats_args, out);
        if (*train) return cmd_train(train_args, out);
        if (*eval) return cmd_eval(eval_train, eval_args, out);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericalError& e) {
        err << "numerical abort: " << e.what() << '\n';
        return kNumerical;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const FormatError& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIo;
    }
    return kUsage;
}

}  // namespace cortex::cli
