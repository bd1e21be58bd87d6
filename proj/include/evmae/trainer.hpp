#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evmae/checkpoint.hpp"
#include "evmae/dataset.hpp"
#include "evmae/model.hpp"
#include "evmae/rng.hpp"

namespace evmae {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t steps = 200;
    std::size_t batch_size = 4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool freeze_encoder = false;       // fine-tune: update only the classifier head
    std::size_t checkpoint_every = 0;  // extra checkpoint cadence in steps; 0 = final only
    std::uint64_t seed = 0;

    void validate() const {
        // lr 0 is allowed: it is the cheapest way to assert update identity
        require(lr >= 0.0, errc::invalid_config, "lr must be >= 0");
        require(steps >= 1, errc::invalid_config, "steps must be >= 1");
        require(batch_size >= 1, errc::invalid_config, "batch_size must be >= 1");
    }
};

struct MetricsRow {
    std::size_t step = 0;  // 1-based
    double loss = 0.0;
    std::optional<double> acc;  // absent during pre-training
};

/// Cosine decay from lr to 0 over S steps; s is the 0-based step index.
inline double cosine_lr(double lr, std::size_t s, std::size_t total) {
    return lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(s) /
                                      static_cast<double>(total)));
}

/// Adam with per-parameter moment buffers, matching the parameter store
/// layout. Parameters with no gradient this step are left untouched (their
/// zero-gradient update is exactly zero anyway).
class Adam {
  public:
    explicit Adam(const Model& model) {
        m_.reserve(model.params.size());
        v_.reserve(model.params.size());
        for (const Tensor& t : model.params.tensors) {
            m_.emplace_back(t.rows, t.cols);
            v_.emplace_back(t.rows, t.cols);
        }
    }

    void step(Model& model, const std::vector<Tensor>& grads, double lr, const TrainConfig& cfg,
              bool head_only = false) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            if (grads[i].v.empty()) continue;
            if (head_only && !model.is_classifier_param(i)) continue;
            Tensor& p = model.params.tensors[i];
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            for (std::size_t j = 0; j < p.v.size(); ++j) {
                const double g = grads[i].v[j];
                require(std::isfinite(g), errc::non_finite_gradient,
                        "non-finite gradient in " + model.params.names[i]);
                m.v[j] = cfg.beta1 * m.v[j] + (1.0 - cfg.beta1) * g;
                v.v[j] = cfg.beta2 * v.v[j] + (1.0 - cfg.beta2) * g * g;
                const double mhat = m.v[j] / bc1;
                const double vhat = v.v[j] / bc2;
                p.v[j] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
            }
        }
    }

  private:
    std::vector<Tensor> m_, v_;
    std::size_t t_ = 0;
};

namespace detail {

/// Deterministic batch of dataset indices for one step.
inline std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, std::size_t step) {
    Rng rng(mix64(seed ^ 0xba7c4ull, step));
    if (batch_size >= n) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    return sample_without_replacement(n, batch_size, rng);
}

inline std::size_t argmax_row(const Tensor& logits, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c)
        if (logits.at(row, c) > logits.at(row, best)) best = c;
    return best;
}

}  // namespace detail

/// One masked-reconstruction update over a batch of patch sets. Masking RNG
/// derives from (seed, step), so the whole run replays bit-exactly.
inline double pretrain_step(Model& model, Adam& opt, const std::vector<const PatchSet*>& batch,
                            std::size_t step, const TrainConfig& cfg) {
    require(!batch.empty(), errc::empty_set, "empty batch");
    Graph g;
    BoundModel bm = bind(g, model);
    Rng mask_rng(mix64(cfg.seed ^ 0x6d61736bull, step));
    Var total{};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const MaskedBatch mb = make_masked_batch(*batch[i], model.cfg.mask_ratio, mask_rng);
        Var loss = pretrain_loss(bm, mb);
        total = i == 0 ? loss : g.add(total, loss);
    }
    Var mean = g.scale(total, 1.0 / static_cast<double>(batch.size()));
    const double loss_value = g.value(mean).v[0];
    require(std::isfinite(loss_value), errc::non_finite_loss, "pre-train loss is not finite");
    g.backward(mean);
    std::vector<Tensor> grads;
    grads.reserve(bm.p.size());
    for (Var v : bm.p) grads.push_back(g.grad(v));
    opt.step(model, grads, cosine_lr(cfg.lr, step, cfg.steps), cfg);
    return loss_value;
}

/// Called after each optimizer update with the 1-based step and the model.
using StepHook = std::function<void(std::size_t, const Model&)>;

/// Full pre-training loop over unlabeled samples.
inline std::vector<MetricsRow> pretrain(Model& model, const std::vector<Sample>& data,
                                        const TrainConfig& cfg, const StepHook& on_step = {}) {
    cfg.validate();
    require(!data.empty(), errc::empty_input, "no pre-training samples");
    Adam opt(model);
    std::vector<MetricsRow> history;
    history.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto idx = detail::batch_indices(data.size(), cfg.batch_size, cfg.seed, step);
        std::vector<const PatchSet*> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) batch.push_back(&data[i].patches);
        const double loss = pretrain_step(model, opt, batch, step, cfg);
        history.push_back({step + 1, loss, std::nullopt});
        if (on_step) on_step(step + 1, model);
    }
    return history;
}

/// One cross-entropy update over labeled samples; returns (loss, batch acc).
inline std::pair<double, double> finetune_step(Model& model, Adam& opt,
                                               const std::vector<const Sample*>& batch,
                                               std::size_t step, const TrainConfig& cfg) {
    require(!batch.empty(), errc::empty_set, "empty batch");
    Graph g;
    BoundModel bm = bind(g, model);
    std::vector<Var> logit_rows;
    std::vector<std::size_t> labels;
    logit_rows.reserve(batch.size());
    for (const Sample* s : batch) {
        logit_rows.push_back(classify_forward(bm, s->patches));
        labels.push_back(s->label);
    }
    Var logits = logit_rows.size() == 1 ? logit_rows[0] : g.concat_rows(logit_rows);
    const Tensor logits_value = g.value(logits);
    Var loss = g.cross_entropy(logits, labels);
    const double loss_value = g.value(loss).v[0];
    require(std::isfinite(loss_value), errc::non_finite_loss, "fine-tune loss is not finite");
    g.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(bm.p.size());
    for (Var v : bm.p) grads.push_back(g.grad(v));
    opt.step(model, grads, cosine_lr(cfg.lr, step, cfg.steps), cfg, cfg.freeze_encoder);

    std::size_t correct = 0;
    for (std::size_t r = 0; r < batch.size(); ++r)
        correct += detail::argmax_row(logits_value, r) == labels[r];
    return {loss_value, static_cast<double>(correct) / static_cast<double>(batch.size())};
}

/// Fine-tuning loop; metrics carry per-step training loss and batch accuracy.
inline std::vector<MetricsRow> finetune(Model& model, const std::vector<Sample>& data,
                                        const TrainConfig& cfg, const StepHook& on_step = {}) {
    cfg.validate();
    require(!data.empty(), errc::empty_input, "no fine-tuning samples");
    require(model.cfg.n_classes >= 2, errc::invalid_config, "model has no classifier head");
    for (const Sample& s : data)
        require(s.label < model.cfg.n_classes, errc::label_out_of_range,
                "label " + std::to_string(s.label) + " in sample " + s.id);
    Adam opt(model);
    std::vector<MetricsRow> history;
    history.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto idx = detail::batch_indices(data.size(), cfg.batch_size, cfg.seed, step);
        std::vector<const Sample*> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) batch.push_back(&data[i]);
        const auto [loss, acc] = finetune_step(model, opt, batch, step, cfg);
        history.push_back({step + 1, loss, acc});
        if (on_step) on_step(step + 1, model);
    }
    return history;
}

/// Forward-only masked reconstruction loss of one patch set, no updates.
inline double masked_loss(const Model& model, const PatchSet& set, Rng& mask_rng) {
    Graph g;
    BoundModel bm = bind(g, model, false);
    const MaskedBatch mb = make_masked_batch(set, model.cfg.mask_ratio, mask_rng);
    return g.value(pretrain_loss(bm, mb)).v[0];
}

/// Mean cross entropy and accuracy over a labeled set, no updates.
inline MetricsRow evaluate(const Model& model, const std::vector<Sample>& data) {
    require(!data.empty(), errc::empty_eval_set, "nothing to evaluate");
    double loss_sum = 0;
    std::size_t correct = 0;
    for (const Sample& s : data) {
        require(s.label < model.cfg.n_classes, errc::label_out_of_range,
                "label " + std::to_string(s.label) + " in sample " + s.id);
        Graph g;
        BoundModel bm = bind(g, model, false);
        Var logits = classify_forward(bm, s.patches);
        loss_sum += g.value(g.cross_entropy(logits, {s.label})).v[0];
        correct += detail::argmax_row(g.value(logits), 0) == s.label;
    }
    MetricsRow row;
    row.step = 0;
    row.loss = loss_sum / static_cast<double>(data.size());
    row.acc = static_cast<double>(correct) / static_cast<double>(data.size());
    return row;
}

}  // namespace evmae
