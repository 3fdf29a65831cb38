// Checkpoint serialization and the cross-minigame transfer protocol.
//
// Binary layout (all integers little-endian):
//   magic "A3CK"
//   u32 version (= 1)
//   u32 metadata length, metadata as key=value text lines
//   u32 tensor count
//   per tensor: u16 name length, name bytes, u8 ndim, u32 dims..., f32 data
//
// The encoding is canonical: identical state produces identical bytes.
// Writes are atomic (temp file + rename), so an interrupted save never leaves
// a partial file at the target path.
#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridrl/env.hpp"
#include "gridrl/net.hpp"

namespace gridrl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadMagicError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct VersionMismatchError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct TruncatedError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct ShapeError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct IncompatibleError : CheckpointError {
    using CheckpointError::CheckpointError;
};

inline constexpr char kCheckpointMagic[4] = {'A', '3', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMetadata {
    std::string arch = "baseline";       // architecture variant name
    std::string minigame = "beacon";
    ObservationSpec obs;
    long long global_step = 0;
    double mean_recent_score = 0.0;
    std::string rng_state;               // opaque; recorded for deterministic resume

    ArchitectureSpec architecture() const { return ArchitectureSpec{parse_variant(arch), obs}; }
};

namespace ckpt_detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string encode_metadata(const CheckpointMetadata& m) {
    std::ostringstream out;
    out << "arch=" << m.arch << '\n'
        << "minigame=" << m.minigame << '\n'
        << "resolution=" << m.obs.resolution << '\n'
        << "screen_channels=" << m.obs.screen_channels << '\n'
        << "minimap_channels=" << m.obs.minimap_channels << '\n'
        << "flat_dim=" << m.obs.flat_dim << '\n'
        << "num_functions=" << m.obs.num_functions << '\n'
        << "global_step=" << m.global_step << '\n'
        << "mean_recent_score=" << format_double(m.mean_recent_score) << '\n'
        << "rng_state=" << m.rng_state << '\n';
    return out.str();
}

inline CheckpointMetadata decode_metadata(const std::string& text) {
    CheckpointMetadata m;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "arch") m.arch = value;
        else if (key == "minigame") m.minigame = value;
        else if (key == "resolution") m.obs.resolution = std::stoi(value);
        else if (key == "screen_channels") m.obs.screen_channels = std::stoi(value);
        else if (key == "minimap_channels") m.obs.minimap_channels = std::stoi(value);
        else if (key == "flat_dim") m.obs.flat_dim = std::stoi(value);
        else if (key == "num_functions") m.obs.num_functions = std::stoi(value);
        else if (key == "global_step") m.global_step = std::stoll(value);
        else if (key == "mean_recent_score") m.mean_recent_score = std::stod(value);
        else if (key == "rng_state") m.rng_state = value;
    }
    return m;
}

template <class T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_raw(std::istream& in, T& v, const char* what) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw TruncatedError(std::string("checkpoint truncated while reading ") + what);
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::filesystem::path& path, const ParameterSet<float>& params,
                            const CheckpointMetadata& meta) {
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
        out.write(kCheckpointMagic, 4);
        ckpt_detail::write_raw(out, kCheckpointVersion);
        const std::string metadata = ckpt_detail::encode_metadata(meta);
        ckpt_detail::write_raw(out, static_cast<std::uint32_t>(metadata.size()));
        out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
        ckpt_detail::write_raw(out, static_cast<std::uint32_t>(params.size()));
        for (const auto& p : params) {
            ckpt_detail::write_raw(out, static_cast<std::uint16_t>(p.name.size()));
            out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
            ckpt_detail::write_raw(out, static_cast<std::uint8_t>(p.tensor.shape.size()));
            for (int d : p.tensor.shape)
                ckpt_detail::write_raw(out, static_cast<std::uint32_t>(d));
            out.write(reinterpret_cast<const char*>(p.tensor.data.data()),
                      static_cast<std::streamsize>(p.tensor.data.size() * sizeof(float)));
        }
        out.flush();
        if (!out) throw CheckpointError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

struct LoadedCheckpoint {
    ParameterSet<float> params;
    CheckpointMetadata meta;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4) throw TruncatedError("checkpoint truncated while reading magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw BadMagicError("not a checkpoint file: bad magic in " + path.string());
    std::uint32_t version = 0;
    ckpt_detail::read_raw(in, version, "version");
    if (version != kCheckpointVersion)
        throw VersionMismatchError("unsupported checkpoint version " + std::to_string(version) +
                                   " (expected " + std::to_string(kCheckpointVersion) + ")");
    std::uint32_t meta_len = 0;
    ckpt_detail::read_raw(in, meta_len, "metadata length");
    std::string metadata(meta_len, '\0');
    in.read(metadata.data(), static_cast<std::streamsize>(meta_len));
    if (in.gcount() != static_cast<std::streamsize>(meta_len))
        throw TruncatedError("checkpoint truncated while reading metadata");

    LoadedCheckpoint result;
    result.meta = ckpt_detail::decode_metadata(metadata);

    std::uint32_t count = 0;
    ckpt_detail::read_raw(in, count, "tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t name_len = 0;
        ckpt_detail::read_raw(in, name_len, "tensor name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw TruncatedError("checkpoint truncated while reading tensor name");
        std::uint8_t ndim = 0;
        ckpt_detail::read_raw(in, ndim, "tensor rank");
        std::vector<int> shape(ndim);
        long long numel = 1;
        for (int d = 0; d < ndim; ++d) {
            std::uint32_t dim = 0;
            ckpt_detail::read_raw(in, dim, "tensor dims");
            if (dim == 0 || dim > (1u << 24))
                throw ShapeError("implausible dimension " + std::to_string(dim) + " in " + name);
            shape[static_cast<std::size_t>(d)] = static_cast<int>(dim);
            numel *= dim;
        }
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(numel * sizeof(float)))
            throw TruncatedError("checkpoint truncated while reading data of " + name);
        result.params.add(std::move(name), std::move(t));
    }

    // validate the tensor table against the declared architecture
    ArchitectureSpec arch;
    try {
        arch = result.meta.architecture();
    } catch (const std::invalid_argument& e) {
        throw ShapeError(std::string("invalid architecture metadata: ") + e.what());
    }
    std::size_t expected_count = 0;
    std::string mismatch;
    for_each_parameter_shape(arch, [&](const std::string& name, const std::vector<int>& shape) {
        ++expected_count;
        if (!mismatch.empty()) return;
        const Tensor<float>* t = result.params.find(name);
        if (!t)
            mismatch = "missing tensor " + name;
        else if (t->shape != shape)
            mismatch = "tensor " + name + " has unexpected shape";
    });
    if (mismatch.empty() && expected_count != result.params.size())
        mismatch = "unexpected extra tensors";
    if (!mismatch.empty())
        throw ShapeError("checkpoint does not match declared architecture: " + mismatch);
    return result;
}

// ---------------------------------------------------------------------------
// Transfer: reuse a source network verbatim as the starting point of a new
// run on another minigame. Requires the same architecture variant and
// observation dimensions (the global function registry guarantees head-shape
// compatibility). Optimizer statistics and the global step counter are not
// carried over; training starts fresh.
// ---------------------------------------------------------------------------

inline ParameterSet<float> transfer_init(const LoadedCheckpoint& source, Minigame /*target*/,
                                         const ArchitectureSpec& target_arch) {
    if (source.meta.arch != variant_name(target_arch.variant)) {
        // name the first structurally differing tensor to make the mismatch
        // concrete
        std::string offender = "?";
        bool found = false;
        ArchitectureSpec src_arch;
        try {
            src_arch = source.meta.architecture();
            for_each_parameter_shape(
                target_arch, [&](const std::string& name, const std::vector<int>& shape) {
                    if (found) return;
                    const Tensor<float>* t = source.params.find(name);
                    if (!t || t->shape != shape) {
                        offender = name;
                        found = true;
                    }
                });
        } catch (const std::invalid_argument&) {
        }
        throw IncompatibleError("architecture mismatch: source is " + source.meta.arch +
                                ", target is " + variant_name(target_arch.variant) +
                                " (first incompatible tensor: " + offender + ")");
    }
    if (!(source.meta.obs == target_arch.obs)) {
        std::string offender = "?";
        bool found = false;
        for_each_parameter_shape(target_arch,
                                 [&](const std::string& name, const std::vector<int>& shape) {
                                     if (found) return;
                                     const Tensor<float>* t = source.params.find(name);
                                     if (!t || t->shape != shape) {
                                         offender = name;
                                         found = true;
                                     }
                                 });
        throw IncompatibleError(
            "observation spec mismatch between source checkpoint and target (first "
            "incompatible tensor: " +
            offender + ")");
    }
    ParameterSet<float> out = source.params;
    out.zero_grads();
    return out;
}

}  // namespace gridrl
