#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evmae/autodiff.hpp"
#include "evmae/patch.hpp"
#include "evmae/rng.hpp"
#include "evmae/tensor.hpp"

namespace evmae {

struct ModelConfig {
    std::size_t embed_dim = 64;  // C
    std::size_t encoder_depth = 3;
    std::size_t decoder_depth = 2;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 2;
    double mask_ratio = 0.8;   // alpha
    std::size_t patch_k = 32;  // points per patch, sizes the reconstruction head
    std::size_t n_classes = 0;  // 0 = no classifier head
    std::uint64_t seed = 0;

    void validate() const {
        require(embed_dim >= 1 && heads >= 1 && embed_dim % heads == 0, errc::invalid_config,
                "embed_dim must be a positive multiple of heads");
        require(mlp_ratio >= 1, errc::invalid_config, "mlp_ratio must be >= 1");
        require(mask_ratio >= 0.0 && mask_ratio < 1.0, errc::invalid_config,
                "mask_ratio must lie in [0, 1)");
        require(patch_k >= 1, errc::invalid_config, "patch_k must be >= 1");
    }
};

/// How a parameter is filled at construction time.
enum class InitKind { trunc_normal, zeros, ones };

/// Ordered named parameter registry. Order is the checkpoint and init order,
/// so it must never depend on container iteration quirks.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    std::vector<InitKind> kinds;

    std::size_t add(std::string name, std::size_t rows, std::size_t cols, InitKind kind) {
        names.push_back(std::move(name));
        tensors.emplace_back(rows, cols);
        kinds.push_back(kind);
        return tensors.size() - 1;
    }

    std::size_t size() const { return tensors.size(); }

    std::size_t find(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        return npos;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// The full masked-autoencoder parameter set: PointNet-style patch embedding,
/// a positional MLP shared by encoder and decoder, pre-norm transformer
/// blocks, a learned mask token, a reconstruction head, and an optional
/// classification head.
class Model {
  public:
    struct Block {
        std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        std::size_t ln2_g, ln2_b, mw1, mb1, mw2, mb2;
    };

    ModelConfig cfg;
    ParamStore params;
    std::size_t embed_w1, embed_b1, embed_w2, embed_b2;
    std::size_t pos_w1, pos_b1, pos_w2, pos_b2;
    std::size_t mask_token;
    std::vector<Block> enc, dec;
    std::size_t recon_w, recon_b;
    std::size_t cls_w1 = ParamStore::npos, cls_b1 = ParamStore::npos;
    std::size_t cls_w2 = ParamStore::npos, cls_b2 = ParamStore::npos;

    explicit Model(ModelConfig config) : cfg(config) {
        cfg.validate();
        const std::size_t c = cfg.embed_dim;
        const std::size_t h = cfg.mlp_ratio * c;

        embed_w1 = params.add("embed.w1", c, 3, InitKind::trunc_normal);
        embed_b1 = params.add("embed.b1", 1, c, InitKind::zeros);
        embed_w2 = params.add("embed.w2", c, c, InitKind::trunc_normal);
        embed_b2 = params.add("embed.b2", 1, c, InitKind::zeros);

        pos_w1 = params.add("pos.w1", c, 3, InitKind::trunc_normal);
        pos_b1 = params.add("pos.b1", 1, c, InitKind::zeros);
        pos_w2 = params.add("pos.w2", c, c, InitKind::trunc_normal);
        pos_b2 = params.add("pos.b2", 1, c, InitKind::zeros);

        mask_token = params.add("mask_token", 1, c, InitKind::trunc_normal);

        const auto add_block = [&](const std::string& prefix) {
            Block b;
            b.ln1_g = params.add(prefix + ".ln1.g", 1, c, InitKind::ones);
            b.ln1_b = params.add(prefix + ".ln1.b", 1, c, InitKind::zeros);
            b.wq = params.add(prefix + ".wq", c, c, InitKind::trunc_normal);
            b.bq = params.add(prefix + ".bq", 1, c, InitKind::zeros);
            b.wk = params.add(prefix + ".wk", c, c, InitKind::trunc_normal);
            b.bk = params.add(prefix + ".bk", 1, c, InitKind::zeros);
            b.wv = params.add(prefix + ".wv", c, c, InitKind::trunc_normal);
            b.bv = params.add(prefix + ".bv", 1, c, InitKind::zeros);
            b.wo = params.add(prefix + ".wo", c, c, InitKind::trunc_normal);
            b.bo = params.add(prefix + ".bo", 1, c, InitKind::zeros);
            b.ln2_g = params.add(prefix + ".ln2.g", 1, c, InitKind::ones);
            b.ln2_b = params.add(prefix + ".ln2.b", 1, c, InitKind::zeros);
            b.mw1 = params.add(prefix + ".mlp.w1", h, c, InitKind::trunc_normal);
            b.mb1 = params.add(prefix + ".mlp.b1", 1, h, InitKind::zeros);
            b.mw2 = params.add(prefix + ".mlp.w2", c, h, InitKind::trunc_normal);
            b.mb2 = params.add(prefix + ".mlp.b2", 1, c, InitKind::zeros);
            return b;
        };
        for (std::size_t i = 0; i < cfg.encoder_depth; ++i)
            enc.push_back(add_block("enc" + std::to_string(i)));
        for (std::size_t i = 0; i < cfg.decoder_depth; ++i)
            dec.push_back(add_block("dec" + std::to_string(i)));

        recon_w = params.add("recon.w", 3 * cfg.patch_k, c, InitKind::trunc_normal);
        recon_b = params.add("recon.b", 1, 3 * cfg.patch_k, InitKind::zeros);

        if (cfg.n_classes > 0) {
            require(cfg.n_classes >= 2, errc::invalid_config, "need at least 2 classes");
            cls_w1 = params.add("cls.w1", c, 2 * c, InitKind::trunc_normal);
            cls_b1 = params.add("cls.b1", 1, c, InitKind::zeros);
            cls_w2 = params.add("cls.w2", cfg.n_classes, c, InitKind::trunc_normal);
            cls_b2 = params.add("cls.b2", 1, cfg.n_classes, InitKind::zeros);
        }

        Rng rng(cfg.seed);
        for (std::size_t i = 0; i < params.size(); ++i) {
            switch (params.kinds[i]) {
                case InitKind::trunc_normal: fill_truncated_normal(params.tensors[i], 0.02, rng); break;
                case InitKind::zeros: break;
                case InitKind::ones:
                    for (double& x : params.tensors[i].v) x = 1.0;
                    break;
            }
        }
    }

    bool is_classifier_param(std::size_t i) const {
        return i == cls_w1 || i == cls_b1 || i == cls_w2 || i == cls_b2;
    }
};

/// Visible/masked index partition of m patches. Both lists ascend.
struct MaskSplit {
    std::vector<std::size_t> visible;
    std::vector<std::size_t> masked;
};

/// Uniformly choose round(alpha*m) masked patches.
inline MaskSplit mask_patches(std::size_t m, double alpha, Rng& rng) {
    require(m >= 1, errc::empty_set, "no patches to mask");
    const std::size_t n_masked =
        static_cast<std::size_t>(std::llround(alpha * static_cast<double>(m)));
    require(n_masked < m, errc::all_masked,
            "mask_ratio leaves no visible patch (m=" + std::to_string(m) + ")");
    MaskSplit split;
    split.masked = sample_without_replacement(m, n_masked, rng);
    std::sort(split.masked.begin(), split.masked.end());
    std::vector<bool> is_masked(m, false);
    for (std::size_t i : split.masked) is_masked[i] = true;
    for (std::size_t i = 0; i < m; ++i)
        if (!is_masked[i]) split.visible.push_back(i);
    return split;
}

/// Tensor view of a masked PatchSet: visible patch points for the encoder,
/// centers for positions, and masked ground truth in local coordinates.
struct MaskedBatch {
    MaskSplit split;
    std::size_t m = 0;
    std::size_t k = 0;
    Tensor visible_pts;      // (v*k) x 3 local coordinates
    Tensor visible_centers;  // v x 3
    Tensor all_centers;      // m x 3
    Tensor gt_masked;        // (m-v) x 3k local coordinates
};

inline MaskedBatch make_masked_batch(const PatchSet& set, double alpha, Rng& rng) {
    require(!set.patches.empty(), errc::empty_set, "empty patch set");
    MaskedBatch mb;
    mb.m = set.size();
    mb.k = set.k;
    mb.split = mask_patches(mb.m, alpha, rng);
    const std::size_t v = mb.split.visible.size();
    const std::size_t nm = mb.split.masked.size();
    mb.visible_pts = Tensor(v * mb.k, 3);
    mb.visible_centers = Tensor(v, 3);
    mb.all_centers = Tensor(mb.m, 3);
    mb.gt_masked = Tensor(nm, 3 * mb.k);
    for (std::size_t i = 0; i < mb.m; ++i)
        for (int c = 0; c < 3; ++c) mb.all_centers.at(i, c) = set.patches[i].center[c];
    for (std::size_t i = 0; i < v; ++i) {
        const Patch& p = set.patches[mb.split.visible[i]];
        require(p.k() == mb.k, errc::shape_mismatch, "ragged patch set");
        for (std::size_t j = 0; j < mb.k; ++j)
            for (int c = 0; c < 3; ++c)
                mb.visible_pts.at(i * mb.k + j, c) = p.local_xyz[3 * j + c];
        for (int c = 0; c < 3; ++c) mb.visible_centers.at(i, c) = p.center[c];
    }
    for (std::size_t i = 0; i < nm; ++i) {
        const Patch& p = set.patches[mb.split.masked[i]];
        require(p.k() == mb.k, errc::shape_mismatch, "ragged patch set");
        for (std::size_t j = 0; j < 3 * mb.k; ++j) mb.gt_masked.at(i, j) = p.local_xyz[j];
    }
    return mb;
}

/// A model bound into a graph: one leaf Var per parameter, in store order.
struct BoundModel {
    Graph* g = nullptr;
    const Model* model = nullptr;
    std::vector<Var> p;

    Var operator[](std::size_t i) const { return p[i]; }
};

inline BoundModel bind(Graph& g, const Model& m, bool needs_grad = true) {
    BoundModel bm;
    bm.g = &g;
    bm.model = &m;
    bm.p.reserve(m.params.size());
    for (const Tensor& t : m.params.tensors) bm.p.push_back(g.leaf(t, needs_grad));
    return bm;
}

namespace detail {

/// x W1^T + b1 -> GELU -> W2^T + b2
inline Var mlp2(Graph& g, Var x, Var w1, Var b1, Var w2, Var b2) {
    return g.add_row(g.matmul_nt(g.gelu(g.add_row(g.matmul_nt(x, w1), b1)), w2), b2);
}

/// One pre-norm transformer block: x += MHA(LN(x)); x += MLP(LN(x)).
inline Var transformer_block(const BoundModel& bm, Var x, const Model::Block& blk) {
    Graph& g = *bm.g;
    const std::size_t c = bm.model->cfg.embed_dim;
    const std::size_t heads = bm.model->cfg.heads;
    const std::size_t dh = c / heads;

    Var xn = g.layer_norm(x, bm[blk.ln1_g], bm[blk.ln1_b]);
    Var q = g.add_row(g.matmul_nt(xn, bm[blk.wq]), bm[blk.bq]);
    Var kk = g.add_row(g.matmul_nt(xn, bm[blk.wk]), bm[blk.bk]);
    Var vv = g.add_row(g.matmul_nt(xn, bm[blk.wv]), bm[blk.bv]);
    std::vector<Var> head_out;
    head_out.reserve(heads);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t hi = 0; hi < heads; ++hi) {
        Var qh = g.col_slice(q, hi * dh, dh);
        Var kh = g.col_slice(kk, hi * dh, dh);
        Var vh = g.col_slice(vv, hi * dh, dh);
        Var attn = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), inv_sqrt_dh));
        head_out.push_back(g.matmul(attn, vh));
    }
    Var merged = heads == 1 ? head_out[0] : g.concat_cols(head_out);
    Var proj = g.add_row(g.matmul_nt(merged, bm[blk.wo]), bm[blk.bo]);
    x = g.add(x, proj);

    Var xn2 = g.layer_norm(x, bm[blk.ln2_g], bm[blk.ln2_b]);
    Var mlp = mlp2(g, xn2, bm[blk.mw1], bm[blk.mb1], bm[blk.mw2], bm[blk.mb2]);
    return g.add(x, mlp);
}

}  // namespace detail

/// PointNet-style set encoder: shared per-point 2-layer lift 3 -> C, then a
/// column max over each patch's k points. pts is (groups*k) x 3.
inline Var embed_patches(const BoundModel& bm, Var pts, std::size_t groups) {
    Graph& g = *bm.g;
    const Model& m = *bm.model;
    Var lifted = detail::mlp2(g, pts, bm[m.embed_w1], bm[m.embed_b1], bm[m.embed_w2],
                              bm[m.embed_b2]);
    return g.max_over_groups(lifted, groups);
}

/// Per-row positional MLP 3 -> C over patch centers.
inline Var pos_embed(const BoundModel& bm, Var centers) {
    Graph& g = *bm.g;
    const Model& m = *bm.model;
    return detail::mlp2(g, centers, bm[m.pos_w1], bm[m.pos_b1], bm[m.pos_w2], bm[m.pos_b2]);
}

/// Encoder: tokens + pos, then encoder_depth pre-norm blocks (no final norm,
/// so depth 0 is exactly the identity on tokens + pos).
inline Var encoder_forward(const BoundModel& bm, Var tokens, Var pos) {
    Graph& g = *bm.g;
    Var x = g.add(tokens, pos);
    for (const Model::Block& blk : bm.model->enc) x = detail::transformer_block(bm, x, blk);
    return x;
}

/// Decoder: reassemble the full m-token sequence (visible latents in their
/// original slots, the shared mask token elsewhere), add positions for all m
/// centers, run decoder blocks, and return the masked-slot rows.
inline Var decoder_forward(const BoundModel& bm, Var latents, const MaskSplit& split,
                           Var all_pos, std::size_t m) {
    Graph& g = *bm.g;
    Var vis = g.scatter_rows(latents, split.visible, m);
    Var mask_tiles = g.tile_rows(bm[bm.model->mask_token], split.masked.size());
    Var masked = g.scatter_rows(mask_tiles, split.masked, m);
    Var x = g.add(g.add(vis, masked), all_pos);
    for (const Model::Block& blk : bm.model->dec) x = detail::transformer_block(bm, x, blk);
    return g.select_rows(x, split.masked);
}

/// Affine C -> 3k; rows are flattened k x 3 local reconstructions.
inline Var reconstruct_head(const BoundModel& bm, Var decoded) {
    Graph& g = *bm.g;
    return g.add_row(g.matmul_nt(decoded, bm[bm.model->recon_w]), bm[bm.model->recon_b]);
}

/// Pre-train loss of one sample: embed visible patches, encode, decode masked
/// slots, reconstruct, Chamfer against ground truth.
inline Var pretrain_loss(const BoundModel& bm, const MaskedBatch& mb) {
    Graph& g = *bm.g;
    require(!mb.split.masked.empty(), errc::empty_set, "nothing to reconstruct at this ratio");
    Var tokens = embed_patches(bm, g.constant(mb.visible_pts), mb.split.visible.size());
    Var pos_vis = pos_embed(bm, g.constant(mb.visible_centers));
    Var latents = encoder_forward(bm, tokens, pos_vis);
    Var all_pos = pos_embed(bm, g.constant(mb.all_centers));
    Var decoded = decoder_forward(bm, latents, mb.split, all_pos, mb.m);
    Var pred = reconstruct_head(bm, decoded);
    return g.chamfer(pred, g.constant(mb.gt_masked), mb.k);
}

/// Classifier logits of one sample: encode all m patches (no masking), pool
/// mean and max, 2-layer MLP head. Returns a 1 x n_classes row.
inline Var classify_forward(const BoundModel& bm, const PatchSet& set) {
    Graph& g = *bm.g;
    const Model& m = *bm.model;
    require(m.cfg.n_classes >= 2, errc::invalid_config, "model has no classifier head");
    require(!set.patches.empty(), errc::empty_set, "empty patch set");
    const std::size_t mm = set.size();
    Tensor pts(mm * set.k, 3);
    Tensor centers(mm, 3);
    for (std::size_t i = 0; i < mm; ++i) {
        const Patch& p = set.patches[i];
        require(p.k() == set.k, errc::shape_mismatch, "ragged patch set");
        for (std::size_t j = 0; j < set.k; ++j)
            for (int c = 0; c < 3; ++c) pts.at(i * set.k + j, c) = p.local_xyz[3 * j + c];
        for (int c = 0; c < 3; ++c) centers.at(i, c) = p.center[c];
    }
    Var tokens = embed_patches(bm, g.constant(std::move(pts)), mm);
    Var pos = pos_embed(bm, g.constant(std::move(centers)));
    Var latents = encoder_forward(bm, tokens, pos);
    Var pooled = g.concat_cols({g.mean_rows(latents), g.max_rows(latents)});
    return detail::mlp2(g, pooled, bm[m.cls_w1], bm[m.cls_b1], bm[m.cls_w2], bm[m.cls_b2]);
}

}  // namespace evmae
