#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "evmae/errors.hpp"
#include "evmae/tensor.hpp"

namespace evmae {

/// Handle into a Graph's tape.
struct Var {
    std::size_t id = 0;
};

/// Reverse-mode tape over 2-D tensors. Ops append nodes whose backward
/// closures accumulate into input gradients; creation order is a topological
/// order, so backward() is a single reverse sweep. Non-finite forward values
/// raise immediately (NonFiniteActivation) to stop bad runs at the source.
class Graph {
  public:
    struct Node {
        Tensor val;
        Tensor grad;  // allocated on first touch
        bool needs_grad = false;
        std::function<void(Graph&)> back;  // empty for leaves
    };

    std::vector<Node> nodes;

    const Tensor& value(Var v) const { return nodes[v.id].val; }
    const Tensor& grad(Var v) const { return nodes[v.id].grad; }
    bool needs_grad(Var v) const { return nodes[v.id].needs_grad; }

    /// Gradient of v, allocating zeros on first use.
    Tensor& grad_buffer(Var v) {
        Node& n = nodes[v.id];
        if (n.grad.v.empty()) n.grad = Tensor(n.val.rows, n.val.cols);
        return n.grad;
    }

    Var leaf(Tensor t, bool needs_grad_flag) {
        require(t.all_finite(), errc::non_finite_activation, "non-finite leaf tensor");
        nodes.push_back(Node{std::move(t), {}, needs_grad_flag, {}});
        return Var{nodes.size() - 1};
    }

    Var constant(Tensor t) { return leaf(std::move(t), false); }

    /// Seed d(loss)/d(loss) = 1 and sweep the tape in reverse.
    void backward(Var loss) {
        require(value(loss).numel() == 1, errc::shape_mismatch, "backward needs a scalar loss");
        grad_buffer(loss).v[0] = 1.0;
        for (std::size_t i = nodes.size(); i-- > 0;) {
            Node& n = nodes[i];
            if (!n.back || !n.needs_grad || n.grad.v.empty()) continue;
            n.back(*this);
        }
    }

    // --- ops -----------------------------------------------------------------

    /// C = A * B
    Var matmul(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.cols == tb.rows, errc::shape_mismatch, "matmul inner dims differ");
        Tensor out(ta.rows, tb.cols);
        emap(out).noalias() = emap(ta) * emap(tb);
        return record(std::move(out), {a, b}, [a, b](Graph& g, Var y) {
            const Tensor& gy = g.grad(y);
            if (g.needs_grad(a))
                emap(g.grad_buffer(a)).noalias() += emap(gy) * emap(g.value(b)).transpose();
            if (g.needs_grad(b))
                emap(g.grad_buffer(b)).noalias() += emap(g.value(a)).transpose() * emap(gy);
        });
    }

    /// C = A * B^T (the y = x W^T convention for (out, in) weight shapes)
    Var matmul_nt(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.cols == tb.cols, errc::shape_mismatch, "matmul_nt inner dims differ");
        Tensor out(ta.rows, tb.rows);
        emap(out).noalias() = emap(ta) * emap(tb).transpose();
        return record(std::move(out), {a, b}, [a, b](Graph& g, Var y) {
            const Tensor& gy = g.grad(y);
            if (g.needs_grad(a))
                emap(g.grad_buffer(a)).noalias() += emap(gy) * emap(g.value(b));
            if (g.needs_grad(b))
                emap(g.grad_buffer(b)).noalias() += emap(gy).transpose() * emap(g.value(a));
        });
    }

    Var add(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.same_shape(tb), errc::shape_mismatch, "add shapes differ");
        Tensor out = ta;
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += tb.v[i];
        return record(std::move(out), {a, b}, [a, b](Graph& g, Var y) {
            const Tensor& gy = g.grad(y);
            if (g.needs_grad(a)) {
                Tensor& ga = g.grad_buffer(a);
                for (std::size_t i = 0; i < gy.v.size(); ++i) ga.v[i] += gy.v[i];
            }
            if (g.needs_grad(b)) {
                Tensor& gb = g.grad_buffer(b);
                for (std::size_t i = 0; i < gy.v.size(); ++i) gb.v[i] += gy.v[i];
            }
        });
    }

    /// A + row-broadcast bias (1 x cols)
    Var add_row(Var a, Var bias) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(bias);
        require(tb.rows == 1 && tb.cols == ta.cols, errc::shape_mismatch, "bias must be 1 x cols");
        Tensor out = ta;
        for (std::size_t r = 0; r < out.rows; ++r)
            for (std::size_t c = 0; c < out.cols; ++c) out.at(r, c) += tb.v[c];
        return record(std::move(out), {a, bias}, [a, bias](Graph& g, Var y) {
            const Tensor& gy = g.grad(y);
            if (g.needs_grad(a)) {
                Tensor& ga = g.grad_buffer(a);
                for (std::size_t i = 0; i < gy.v.size(); ++i) ga.v[i] += gy.v[i];
            }
            if (g.needs_grad(bias)) {
                Tensor& gb = g.grad_buffer(bias);
                for (std::size_t r = 0; r < gy.rows; ++r)
                    for (std::size_t c = 0; c < gy.cols; ++c) gb.v[c] += gy.at(r, c);
            }
        });
    }

    Var scale(Var a, double s) {
        Tensor out = value(a);
        for (double& x : out.v) x *= s;
        return record(std::move(out), {a}, [a, s](Graph& g, Var y) {
            const Tensor& gy = g.grad(y);
            if (!g.needs_grad(a)) return;
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t i = 0; i < gy.v.size(); ++i) ga.v[i] += s * gy.v[i];
        });
    }

    /// Exact (erf-based) GELU; smooth everywhere, which keeps finite-difference
    /// gradient checks clean.
    Var gelu(Var a) {
        static constexpr double inv_sqrt2 = 0.7071067811865475244;
        Tensor out = value(a);
        for (double& x : out.v) x = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
        return record(std::move(out), {a}, [a](Graph& g, Var y) {
            if (!g.needs_grad(a)) return;
            static constexpr double inv_sqrt2pi = 0.3989422804014326779;
            const Tensor& gy = g.grad(y);
            const Tensor& ta = g.value(a);
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t i = 0; i < gy.v.size(); ++i) {
                const double x = ta.v[i];
                const double phi = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                ga.v[i] += gy.v[i] * (phi + x * pdf);
            }
        });
    }

    /// Row-wise layer norm with learned gain/bias (each 1 x cols), eps 1e-5.
    Var layer_norm(Var a, Var gamma, Var beta) {
        static constexpr double eps = 1e-5;
        const Tensor& ta = value(a);
        const Tensor& tg = value(gamma);
        const Tensor& tb = value(beta);
        require(tg.rows == 1 && tg.cols == ta.cols && tb.rows == 1 && tb.cols == ta.cols,
                errc::shape_mismatch, "layer_norm gain/bias must be 1 x cols");
        Tensor out(ta.rows, ta.cols);
        Tensor xhat(ta.rows, ta.cols);      // cached for backward
        std::vector<double> inv_sd(ta.rows);
        const double n = static_cast<double>(ta.cols);
        for (std::size_t r = 0; r < ta.rows; ++r) {
            double mu = 0;
            for (std::size_t c = 0; c < ta.cols; ++c) mu += ta.at(r, c);
            mu /= n;
            double var = 0;
            for (std::size_t c = 0; c < ta.cols; ++c) {
                const double d = ta.at(r, c) - mu;
                var += d * d;
            }
            var /= n;
            const double isd = 1.0 / std::sqrt(var + eps);
            inv_sd[r] = isd;
            for (std::size_t c = 0; c < ta.cols; ++c) {
                const double xh = (ta.at(r, c) - mu) * isd;
                xhat.at(r, c) = xh;
                out.at(r, c) = tg.v[c] * xh + tb.v[c];
            }
        }
        return record(std::move(out), {a, gamma, beta},
                      [a, gamma, beta, xhat = std::move(xhat),
                       inv_sd = std::move(inv_sd)](Graph& g, Var y) {
            const Tensor& gy = g.grad(y);
            const Tensor& tg = g.value(gamma);
            const double n = static_cast<double>(gy.cols);
            if (g.needs_grad(gamma)) {
                Tensor& gg = g.grad_buffer(gamma);
                for (std::size_t r = 0; r < gy.rows; ++r)
                    for (std::size_t c = 0; c < gy.cols; ++c)
                        gg.v[c] += gy.at(r, c) * xhat.at(r, c);
            }
            if (g.needs_grad(beta)) {
                Tensor& gb = g.grad_buffer(beta);
                for (std::size_t r = 0; r < gy.rows; ++r)
                    for (std::size_t c = 0; c < gy.cols; ++c) gb.v[c] += gy.at(r, c);
            }
            if (g.needs_grad(a)) {
                Tensor& ga = g.grad_buffer(a);
                for (std::size_t r = 0; r < gy.rows; ++r) {
                    double sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (std::size_t c = 0; c < gy.cols; ++c) {
                        const double dxh = gy.at(r, c) * tg.v[c];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat.at(r, c);
                    }
                    for (std::size_t c = 0; c < gy.cols; ++c) {
                        const double dxh = gy.at(r, c) * tg.v[c];
                        ga.at(r, c) += inv_sd[r] *
                                       (dxh - sum_dxhat / n - xhat.at(r, c) * sum_dxhat_xhat / n);
                    }
                }
            }
        });
    }

    /// Row-wise softmax (max-shifted).
    Var softmax_rows(Var a) {
        const Tensor& ta = value(a);
        Tensor out(ta.rows, ta.cols);
        for (std::size_t r = 0; r < ta.rows; ++r) {
            double mx = ta.at(r, 0);
            for (std::size_t c = 1; c < ta.cols; ++c) mx = std::max(mx, ta.at(r, c));
            double sum = 0;
            for (std::size_t c = 0; c < ta.cols; ++c) {
                const double e = std::exp(ta.at(r, c) - mx);
                out.at(r, c) = e;
                sum += e;
            }
            for (std::size_t c = 0; c < ta.cols; ++c) out.at(r, c) /= sum;
        }
        return record(std::move(out), {a}, [a](Graph& g, Var y) {
            if (!g.needs_grad(a)) return;
            const Tensor& gy = g.grad(y);
            const Tensor& s = g.value(y);
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t r = 0; r < gy.rows; ++r) {
                double dot = 0;
                for (std::size_t c = 0; c < gy.cols; ++c) dot += gy.at(r, c) * s.at(r, c);
                for (std::size_t c = 0; c < gy.cols; ++c)
                    ga.at(r, c) += s.at(r, c) * (gy.at(r, c) - dot);
            }
        });
    }

    /// Contiguous column slice [start, start+len).
    Var col_slice(Var a, std::size_t start, std::size_t len) {
        const Tensor& ta = value(a);
        require(start + len <= ta.cols, errc::shape_mismatch, "column slice out of range");
        Tensor out(ta.rows, len);
        for (std::size_t r = 0; r < ta.rows; ++r)
            for (std::size_t c = 0; c < len; ++c) out.at(r, c) = ta.at(r, start + c);
        return record(std::move(out), {a}, [a, start, len](Graph& g, Var y) {
            if (!g.needs_grad(a)) return;
            const Tensor& gy = g.grad(y);
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t r = 0; r < gy.rows; ++r)
                for (std::size_t c = 0; c < len; ++c) ga.at(r, start + c) += gy.at(r, c);
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        require(!parts.empty(), errc::shape_mismatch, "concat of nothing");
        const std::size_t rows = value(parts[0]).rows;
        std::size_t cols = 0;
        for (Var p : parts) {
            require(value(p).rows == rows, errc::shape_mismatch, "concat_cols row mismatch");
            cols += value(p).cols;
        }
        Tensor out(rows, cols);
        std::size_t off = 0;
        for (Var p : parts) {
            const Tensor& tp = value(p);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < tp.cols; ++c) out.at(r, off + c) = tp.at(r, c);
            off += tp.cols;
        }
        return record(std::move(out), parts, [parts](Graph& g, Var y) {
            const Tensor& gy = g.grad(y);
            std::size_t off = 0;
            for (Var p : parts) {
                const std::size_t w = g.value(p).cols;
                if (g.needs_grad(p)) {
                    Tensor& gp = g.grad_buffer(p);
                    for (std::size_t r = 0; r < gy.rows; ++r)
                        for (std::size_t c = 0; c < w; ++c) gp.at(r, c) += gy.at(r, off + c);
                }
                off += w;
            }
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        require(!parts.empty(), errc::shape_mismatch, "concat of nothing");
        const std::size_t cols = value(parts[0]).cols;
        std::size_t rows = 0;
        for (Var p : parts) {
            require(value(p).cols == cols, errc::shape_mismatch, "concat_rows col mismatch");
            rows += value(p).rows;
        }
        Tensor out(rows, cols);
        std::size_t off = 0;
        for (Var p : parts) {
            const Tensor& tp = value(p);
            std::copy(tp.v.begin(), tp.v.end(), out.v.begin() + off * cols);
            off += tp.rows;
        }
        return record(std::move(out), parts, [parts](Graph& g, Var y) {
            const Tensor& gy = g.grad(y);
            std::size_t off = 0;
            for (Var p : parts) {
                const std::size_t h = g.value(p).rows;
                if (g.needs_grad(p)) {
                    Tensor& gp = g.grad_buffer(p);
                    for (std::size_t i = 0; i < h * gy.cols; ++i)
                        gp.v[i] += gy.v[off * gy.cols + i];
                }
                off += h;
            }
        });
    }

    /// Column-wise max over g consecutive row groups of equal size:
    /// (g*k) x c -> g x c. Ties keep the first row (stable argmax).
    Var max_over_groups(Var a, std::size_t groups) {
        const Tensor& ta = value(a);
        require(groups >= 1 && ta.rows % groups == 0, errc::shape_mismatch,
                "rows must split evenly into groups");
        const std::size_t k = ta.rows / groups;
        Tensor out(groups, ta.cols);
        std::vector<std::size_t> argmax(groups * ta.cols);
        for (std::size_t gi = 0; gi < groups; ++gi) {
            for (std::size_t c = 0; c < ta.cols; ++c) {
                std::size_t best = gi * k;
                double bv = ta.at(best, c);
                for (std::size_t r = gi * k + 1; r < (gi + 1) * k; ++r) {
                    if (ta.at(r, c) > bv) {
                        bv = ta.at(r, c);
                        best = r;
                    }
                }
                out.at(gi, c) = bv;
                argmax[gi * ta.cols + c] = best;
            }
        }
        return record(std::move(out), {a}, [a, argmax = std::move(argmax)](Graph& g, Var y) {
            if (!g.needs_grad(a)) return;
            const Tensor& gy = g.grad(y);
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t gi = 0; gi < gy.rows; ++gi)
                for (std::size_t c = 0; c < gy.cols; ++c)
                    ga.at(argmax[gi * gy.cols + c], c) += gy.at(gi, c);
        });
    }

    /// Column means over all rows: r x c -> 1 x c.
    Var mean_rows(Var a) {
        const Tensor& ta = value(a);
        require(ta.rows >= 1, errc::empty_set, "mean over zero rows");
        Tensor out(1, ta.cols);
        for (std::size_t r = 0; r < ta.rows; ++r)
            for (std::size_t c = 0; c < ta.cols; ++c) out.v[c] += ta.at(r, c);
        for (double& x : out.v) x /= static_cast<double>(ta.rows);
        return record(std::move(out), {a}, [a](Graph& g, Var y) {
            if (!g.needs_grad(a)) return;
            const Tensor& gy = g.grad(y);
            Tensor& ga = g.grad_buffer(a);
            const double inv = 1.0 / static_cast<double>(ga.rows);
            for (std::size_t r = 0; r < ga.rows; ++r)
                for (std::size_t c = 0; c < ga.cols; ++c) ga.at(r, c) += gy.v[c] * inv;
        });
    }

    /// Column max over all rows (first-row ties): r x c -> 1 x c.
    Var max_rows(Var a) { return max_over_groups(a, 1); }

    /// Gather rows: out[i] = a[idx[i]].
    Var select_rows(Var a, std::vector<std::size_t> idx) {
        const Tensor& ta = value(a);
        for (std::size_t i : idx)
            require(i < ta.rows, errc::shape_mismatch, "row index out of range");
        Tensor out(idx.size(), ta.cols);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t c = 0; c < ta.cols; ++c) out.at(i, c) = ta.at(idx[i], c);
        return record(std::move(out), {a}, [a, idx = std::move(idx)](Graph& g, Var y) {
            if (!g.needs_grad(a)) return;
            const Tensor& gy = g.grad(y);
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t c = 0; c < gy.cols; ++c) ga.at(idx[i], c) += gy.at(i, c);
        });
    }

    /// Scatter rows into a zero-filled (out_rows x cols) tensor:
    /// out[idx[i]] = a[i]. Indices must be distinct.
    Var scatter_rows(Var a, std::vector<std::size_t> idx, std::size_t out_rows) {
        const Tensor& ta = value(a);
        require(idx.size() == ta.rows, errc::shape_mismatch, "one index per input row");
        Tensor out(out_rows, ta.cols);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            require(idx[i] < out_rows, errc::shape_mismatch, "scatter index out of range");
            for (std::size_t c = 0; c < ta.cols; ++c) out.at(idx[i], c) = ta.at(i, c);
        }
        return record(std::move(out), {a}, [a, idx = std::move(idx)](Graph& g, Var y) {
            if (!g.needs_grad(a)) return;
            const Tensor& gy = g.grad(y);
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t c = 0; c < gy.cols; ++c) ga.at(i, c) += gy.at(idx[i], c);
        });
    }

    /// Repeat a 1 x c row n times.
    Var tile_rows(Var a, std::size_t n) {
        const Tensor& ta = value(a);
        require(ta.rows == 1, errc::shape_mismatch, "tile_rows wants a single row");
        Tensor out(n, ta.cols);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < ta.cols; ++c) out.at(r, c) = ta.v[c];
        return record(std::move(out), {a}, [a](Graph& g, Var y) {
            if (!g.needs_grad(a)) return;
            const Tensor& gy = g.grad(y);
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t r = 0; r < gy.rows; ++r)
                for (std::size_t c = 0; c < gy.cols; ++c) ga.v[c] += gy.at(r, c);
        });
    }

    /// Symmetric squared-L2 Chamfer distance between patch sets. pred and gt
    /// are (p x 3k) with each row holding k xyz points; the result is the
    /// per-patch symmetric mean, averaged over patches. Nearest-neighbor ties
    /// go to the first index, which keeps the subgradient deterministic.
    Var chamfer(Var pred, Var gt, std::size_t k) {
        const Tensor& tp = value(pred);
        const Tensor& tg = value(gt);
        require(k >= 1, errc::empty_set, "chamfer needs non-empty point sets");
        require(tp.same_shape(tg) && tp.cols == 3 * k, errc::shape_mismatch,
                "chamfer wants matching (p x 3k) tensors");
        require(tp.rows >= 1, errc::empty_set, "chamfer over zero patches");
        const std::size_t p = tp.rows;
        std::vector<std::size_t> nn_pg(p * k), nn_gp(p * k);  // argmin tables
        double total = 0;
        for (std::size_t pi = 0; pi < p; ++pi) {
            const double* a = &tp.v[pi * 3 * k];
            const double* b = &tg.v[pi * 3 * k];
            double sum_pg = 0, sum_gp = 0;
            for (std::size_t i = 0; i < k; ++i) {
                double best = -1;
                std::size_t bj = 0;
                for (std::size_t j = 0; j < k; ++j) {
                    const double dx = a[3 * i] - b[3 * j];
                    const double dy = a[3 * i + 1] - b[3 * j + 1];
                    const double dz = a[3 * i + 2] - b[3 * j + 2];
                    const double d = dx * dx + dy * dy + dz * dz;
                    if (best < 0 || d < best) {
                        best = d;
                        bj = j;
                    }
                }
                nn_pg[pi * k + i] = bj;
                sum_pg += best;
            }
            for (std::size_t j = 0; j < k; ++j) {
                double best = -1;
                std::size_t bi = 0;
                for (std::size_t i = 0; i < k; ++i) {
                    const double dx = a[3 * i] - b[3 * j];
                    const double dy = a[3 * i + 1] - b[3 * j + 1];
                    const double dz = a[3 * i + 2] - b[3 * j + 2];
                    const double d = dx * dx + dy * dy + dz * dz;
                    if (best < 0 || d < best) {
                        best = d;
                        bi = i;
                    }
                }
                nn_gp[pi * k + j] = bi;
                sum_gp += best;
            }
            total += (sum_pg + sum_gp) / static_cast<double>(k);
        }
        Tensor out = Tensor::scalar(total / static_cast<double>(p));
        return record(std::move(out), {pred, gt},
                      [pred, gt, k, nn_pg = std::move(nn_pg),
                       nn_gp = std::move(nn_gp)](Graph& g, Var y) {
            const double gy = g.grad(y).v[0];
            const Tensor& tp = g.value(pred);
            const Tensor& tg = g.value(gt);
            const std::size_t p = tp.rows;
            const double w = gy * 2.0 / (static_cast<double>(k) * static_cast<double>(p));
            auto accumulate = [&](Tensor& dst, bool into_pred) {
                for (std::size_t pi = 0; pi < p; ++pi) {
                    const double* a = &tp.v[pi * 3 * k];
                    const double* b = &tg.v[pi * 3 * k];
                    double* d = &dst.v[pi * 3 * k];
                    for (std::size_t i = 0; i < k; ++i) {
                        const std::size_t j = nn_pg[pi * k + i];
                        for (int c = 0; c < 3; ++c) {
                            const double diff = a[3 * i + c] - b[3 * j + c];
                            if (into_pred)
                                d[3 * i + c] += w * diff;
                            else
                                d[3 * j + c] -= w * diff;
                        }
                    }
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::size_t i = nn_gp[pi * k + j];
                        for (int c = 0; c < 3; ++c) {
                            const double diff = a[3 * i + c] - b[3 * j + c];
                            if (into_pred)
                                d[3 * i + c] += w * diff;
                            else
                                d[3 * j + c] -= w * diff;
                        }
                    }
                }
            };
            if (g.needs_grad(pred)) accumulate(g.grad_buffer(pred), true);
            if (g.needs_grad(gt)) accumulate(g.grad_buffer(gt), false);
        });
    }

    /// Fixed-weight scalar reduction sum_ij a_ij * w_ij, mainly to turn any
    /// tensor into a checkable scalar loss.
    Var weighted_sum(Var a, Tensor w) {
        const Tensor& ta = value(a);
        require(ta.same_shape(w), errc::shape_mismatch, "weighted_sum shapes differ");
        double total = 0;
        for (std::size_t i = 0; i < ta.v.size(); ++i) total += ta.v[i] * w.v[i];
        return record(Tensor::scalar(total), {a}, [a, w = std::move(w)](Graph& g, Var y) {
            if (!g.needs_grad(a)) return;
            const double gy = g.grad(y).v[0];
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += gy * w.v[i];
        });
    }

    /// Mean cross entropy of row logits against integer labels.
    Var cross_entropy(Var logits, std::vector<std::size_t> labels) {
        const Tensor& tl = value(logits);
        require(tl.rows == labels.size(), errc::shape_mismatch, "one label per logits row");
        require(tl.rows >= 1, errc::empty_set, "cross entropy over zero rows");
        for (std::size_t y : labels)
            require(y < tl.cols, errc::label_out_of_range,
                    "label " + std::to_string(y) + " with " + std::to_string(tl.cols) + " classes");
        double total = 0;
        Tensor soft(tl.rows, tl.cols);  // cached softmax for backward
        for (std::size_t r = 0; r < tl.rows; ++r) {
            double mx = tl.at(r, 0);
            for (std::size_t c = 1; c < tl.cols; ++c) mx = std::max(mx, tl.at(r, c));
            double sum = 0;
            for (std::size_t c = 0; c < tl.cols; ++c) sum += std::exp(tl.at(r, c) - mx);
            const double lse = mx + std::log(sum);
            total += lse - tl.at(r, labels[r]);
            for (std::size_t c = 0; c < tl.cols; ++c)
                soft.at(r, c) = std::exp(tl.at(r, c) - lse);
        }
        Tensor out = Tensor::scalar(total / static_cast<double>(tl.rows));
        return record(std::move(out), {logits},
                      [logits, labels = std::move(labels), soft = std::move(soft)](Graph& g,
                                                                                   Var y) {
            if (!g.needs_grad(logits)) return;
            const double gy = g.grad(y).v[0];
            Tensor& gl = g.grad_buffer(logits);
            const double inv = gy / static_cast<double>(gl.rows);
            for (std::size_t r = 0; r < gl.rows; ++r)
                for (std::size_t c = 0; c < gl.cols; ++c)
                    gl.at(r, c) += inv * (soft.at(r, c) - (c == labels[r] ? 1.0 : 0.0));
        });
    }

  private:
    template <typename F>
    Var record(Tensor out, const std::vector<Var>& inputs, F&& back_fn) {
        require(out.all_finite(), errc::non_finite_activation, "non-finite activation");
        bool ng = false;
        for (Var v : inputs) ng = ng || nodes[v.id].needs_grad;
        Node node;
        node.val = std::move(out);
        node.needs_grad = ng;
        const Var id{nodes.size()};
        if (ng)
            node.back = [id, fn = std::forward<F>(back_fn)](Graph& g) { fn(g, id); };
        nodes.push_back(std::move(node));
        return id;
    }
};

}  // namespace evmae
