#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evmae/event_io.hpp"
#include "evmae/model.hpp"

namespace evmae {

// Checkpoint layout (all little-endian):
//   "EVMC" | u32 version | u64 config_len | config JSON (UTF-8) |
//   repeated parameter records until EOF:
//     u32 name_len | name bytes | u32 rank | u64 dims[rank] | f64 data[prod(dims)]

inline constexpr std::uint32_t checkpoint_version = 1;

namespace detail {

inline void append_f64le(std::string& out, double x) {
    append_u64le(out, std::bit_cast<std::uint64_t>(x));
}

inline double read_f64le(const unsigned char* p) {
    return std::bit_cast<double>(read_u64le(p));
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
    return {
        {"embed_dim", cfg.embed_dim},       {"encoder_depth", cfg.encoder_depth},
        {"decoder_depth", cfg.decoder_depth}, {"heads", cfg.heads},
        {"mlp_ratio", cfg.mlp_ratio},       {"mask_ratio", cfg.mask_ratio},
        {"patch_k", cfg.patch_k},           {"n_classes", cfg.n_classes},
        {"seed", cfg.seed},
    };
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
    cfg.encoder_depth = j.at("encoder_depth").get<std::size_t>();
    cfg.decoder_depth = j.at("decoder_depth").get<std::size_t>();
    cfg.heads = j.at("heads").get<std::size_t>();
    cfg.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    cfg.mask_ratio = j.at("mask_ratio").get<double>();
    cfg.patch_k = j.at("patch_k").get<std::size_t>();
    cfg.n_classes = j.at("n_classes").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Model& model) {
    std::string out = "EVMC";
    detail::append_u32le(out, checkpoint_version);
    const std::string cfg = detail::config_to_json(model.cfg).dump();
    detail::append_u64le(out, cfg.size());
    out += cfg;
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const std::string& name = model.params.names[i];
        const Tensor& t = model.params.tensors[i];
        detail::append_u32le(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::append_u32le(out, 2);
        detail::append_u64le(out, t.rows);
        detail::append_u64le(out, t.cols);
        for (double x : t.v) detail::append_f64le(out, x);
    }
    return out;
}

struct Checkpoint {
    ModelConfig cfg;
    std::vector<std::pair<std::string, Tensor>> params;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return &t;
        return nullptr;
    }
};

inline Checkpoint parse_checkpoint(std::string_view bytes) {
    require(bytes.size() >= 4, errc::corrupt, "checkpoint shorter than its magic");
    require(bytes.substr(0, 4) == "EVMC", errc::bad_magic, "not an EVMC checkpoint");
    const auto* base = reinterpret_cast<const unsigned char*>(bytes.data());
    std::size_t pos = 4;
    require(bytes.size() - pos >= 4, errc::corrupt, "missing version field");
    const std::uint32_t version = detail::read_u32le(base + pos);
    pos += 4;
    require(version == checkpoint_version, errc::version_mismatch,
            "checkpoint version " + std::to_string(version) + ", expected " +
                std::to_string(checkpoint_version));
    require(bytes.size() - pos >= 8, errc::corrupt, "missing config length");
    const std::uint64_t cfg_len = detail::read_u64le(base + pos);
    pos += 8;
    require(bytes.size() - pos >= cfg_len, errc::corrupt, "config blob truncated");
    Checkpoint ckpt;
    try {
        ckpt.cfg = detail::config_from_json(
            nlohmann::json::parse(bytes.substr(pos, static_cast<std::size_t>(cfg_len))));
    } catch (const nlohmann::json::exception& e) {
        raise(errc::corrupt, std::string("bad config blob: ") + e.what());
    }
    pos += static_cast<std::size_t>(cfg_len);

    while (pos < bytes.size()) {
        require(bytes.size() - pos >= 4, errc::corrupt, "parameter name length truncated");
        const std::uint32_t name_len = detail::read_u32le(base + pos);
        pos += 4;
        require(bytes.size() - pos >= name_len, errc::corrupt, "parameter name truncated");
        std::string name(bytes.substr(pos, name_len));
        pos += name_len;
        require(bytes.size() - pos >= 4, errc::corrupt, "parameter rank truncated");
        const std::uint32_t rank = detail::read_u32le(base + pos);
        pos += 4;
        require(rank == 2, errc::corrupt, "unsupported parameter rank");
        require(bytes.size() - pos >= 16, errc::corrupt, "parameter dims truncated");
        const std::uint64_t rows = detail::read_u64le(base + pos);
        const std::uint64_t cols = detail::read_u64le(base + pos + 8);
        pos += 16;
        require(rows > 0 && cols > 0 && rows < (1u << 24) && cols < (1u << 24), errc::corrupt,
                "nonsensical parameter dims");
        const std::uint64_t count = rows * cols;
        require((bytes.size() - pos) / 8 >= count, errc::corrupt, "parameter data truncated");
        Tensor t(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
        for (std::uint64_t i = 0; i < count; ++i) t.v[i] = detail::read_f64le(base + pos + 8 * i);
        pos += static_cast<std::size_t>(8 * count);
        ckpt.params.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

/// Rebuild a model from a checkpoint. In strict mode every model parameter
/// must be present with matching shape. With fresh_head set, a classifier of
/// n_classes is (re)attached and its parameters may be absent from the file
/// (they keep their fresh initialization), which is the fine-tune entry path.
inline Model model_from_checkpoint(const Checkpoint& ckpt, bool fresh_head = false,
                                   std::size_t n_classes = 0, std::uint64_t head_seed = 0) {
    ModelConfig cfg = ckpt.cfg;
    if (fresh_head) {
        cfg.n_classes = n_classes;
        cfg.seed = head_seed;  // only fresh parameters draw from it
    }
    Model model(cfg);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const Tensor* stored = ckpt.find(model.params.names[i]);
        if (stored == nullptr) {
            require(fresh_head && model.is_classifier_param(i), errc::bad_checkpoint,
                    "checkpoint is missing parameter " + model.params.names[i]);
            continue;
        }
        require(stored->same_shape(model.params.tensors[i]), errc::bad_checkpoint,
                "shape mismatch for parameter " + model.params.names[i]);
        model.params.tensors[i] = *stored;
    }
    return model;
}

inline void save_checkpoint(const Model& model, const std::string& path) {
    write_file(path, serialize_checkpoint(model));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return parse_checkpoint(read_file(path));
}

}  // namespace evmae
