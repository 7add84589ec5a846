// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "cortex/tensor_io.hpp"

namespace cortex {

namespace {

constexpr std::uint32_t kMaxLevels = 16;
constexpr std::uint32_t kMaxRecords = 4096;

CheckpointHeader read_header(std::istream& is, bool& has_optimizer, SgdOptions& opts) {
    char magic[4];
    is.read(magic, 4);
    if (!is) throw FormatError("truncated checkpoint header");
    if (std::memcmp(magic, "CXCK", 4) != 0) throw FormatError("not a checkpoint (bad magic)");
    const auto version = io::read_u8(is);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    CheckpointHeader h;
    const auto levels = io::read_u32(is);
    if (levels < 2 || levels > kMaxLevels) throw FormatError("invalid level count in checkpoint");
    h.spec.levels = static_cast<int>(levels);
    h.spec.maps.resize(levels + 1);
    for (auto& f : h.spec.maps) f = static_cast<int>(io::read_u32(is));
    h.spec.side = static_cast<int>(io::read_u32(is));
    h.classes = static_cast<int>(io::read_u32(is));
    h.batch_norm = io::read_u8(is) != 0;
    h.epoch = static_cast<int>(io::read_u32(is));
    has_optimizer = io::read_u8(is) != 0;
    opts.lr = io::read_f64(is);
    opts.momentum = io::read_f64(is);
    opts.weight_decay = io::read_f64(is);
    try {
        h.spec.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint holds an invalid layer spec: ") + e.what());
    }
    if (h.classes < 1) throw FormatError("checkpoint holds an invalid classifier width");
    return h;
}

void copy_into(Tensor<float>& dst, const Tensor<float>& src, const std::string& name) {
    if (dst.shape() != src.shape()) {
        throw FormatError("record " + name + " has shape " + shape_str(src.shape()) + ", expected " +
                          shape_str(dst.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CortexModel<float>& model,
                     const SgdState<float>* optimizer, int epoch) {
    std::ostringstream os(std::ios::binary);
    os.write("CXCK", 4);
    io::write_u8(os, kCheckpointVersion);
    const auto& spec = model.spec();
    io::write_u32(os, static_cast<std::uint32_t>(spec.levels));
    for (int f : spec.maps) io::write_u32(os, static_cast<std::uint32_t>(f));
    io::write_u32(os, static_cast<std::uint32_t>(spec.side));
    io::write_u32(os, static_cast<std::uint32_t>(model.classes()));
    io::write_u8(os, model.batch_norm() ? 1 : 0);
    io::write_u32(os, static_cast<std::uint32_t>(epoch));
    io::write_u8(os, optimizer ? 1 : 0);
    const SgdOptions opts = optimizer ? optimizer->options : SgdOptions{};
    io::write_f64(os, opts.lr);
    io::write_f64(os, opts.momentum);
    io::write_f64(os, opts.weight_decay);

    std::vector<NamedTensor<float>> records = model.named_parameters();
    for (auto& b : model.named_buffers()) records.push_back(b);
    if (optimizer) {
        const auto params = model.named_parameters();
        if (optimizer->velocity.size() != params.size()) {
            throw ShapeError("optimizer state does not match model parameters");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            records.push_back({"momentum/" + params[i].name, optimizer->velocity[i]});
        }
    }
    io::write_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
        io::write_u32(os, static_cast<std::uint32_t>(r.name.size()));
        os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        write_tensor(os, r.tensor);
    }

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
        if (!file) throw IoError("cannot open " + tmp + " for writing");
        const auto bytes = os.str();
        file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!file) throw IoError("failed writing " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    bool has_optimizer = false;
    SgdOptions opts;
    return read_header(is, has_optimizer, opts);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    bool has_optimizer = false;
    SgdOptions opts;
    const CheckpointHeader h = read_header(is, has_optimizer, opts);

    const auto count = io::read_u32(is);
    if (count > kMaxRecords) throw FormatError("implausible record count in checkpoint");
    std::map<std::string, Tensor<float>> records;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = io::read_u32(is);
        if (len > 256) throw FormatError("implausible record name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw FormatError("truncated record name");
        if (!records.emplace(name, read_tensor(is)).second) throw FormatError("duplicate record " + name);
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint records");

    Checkpoint ck{CortexModel<float>(h.spec, h.classes, h.batch_norm, 0), std::nullopt, h.epoch};
    std::size_t used = 0;
    auto take = [&](const std::string& name) -> const Tensor<float>& {
        auto it = records.find(name);
        if (it == records.end()) throw FormatError("checkpoint is missing record " + name);
        ++used;
        return it->second;
    };
    const auto params = ck.model.named_parameters();
    for (auto p : params) copy_into(p.tensor, take(p.name), p.name);
    for (auto b : ck.model.named_buffers()) copy_into(b.tensor, take(b.name), b.name);
    if (has_optimizer) {
        std::vector<Tensor<float>> ps;
        for (const auto& p : params) ps.push_back(p.tensor);
        SgdState<float> state(ps, opts);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const std::string name = "momentum/" + params[i].name;
            copy_into(state.velocity[i], take(name), name);
        }
        ck.optimizer = std::move(state);
    }
    if (used != records.size()) throw FormatError("checkpoint holds unexpected records");
    return ck;
}

bool load_parameters_into(const Checkpoint& checkpoint, CortexModel<float>& model) {
    if (!(checkpoint.model.spec() == model.spec()) || checkpoint.model.batch_norm() != model.batch_norm()) {
        throw ShapeError("checkpoint layer spec (" + to_string(checkpoint.model.spec()) +
                         ") does not match model (" + to_string(model.spec()) + ")");
    }
    const bool same_head = checkpoint.model.classes() == model.classes();
    auto src = checkpoint.model.named_parameters();
    auto dst = model.named_parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (!same_head && dst[i].name.rfind("classifier.", 0) == 0) continue;
        copy_into(dst[i].tensor, src[i].tensor, dst[i].name);
    }
    auto src_b = checkpoint.model.named_buffers();
    auto dst_b = model.named_buffers();
    for (std::size_t i = 0; i < dst_b.size(); ++i) copy_into(dst_b[i].tensor, src_b[i].tensor, dst_b[i].name);
    return same_head;
}

}  // namespace cortex
