#include "qg/autodiff.hpp"

#include <cmath>

namespace qg {

namespace {
constexpr double kLnEps = 1e-5;  // layer norm epsilon
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

int Tape::push(Tensor value, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw ContractError("invalid tape node (backward before forward?)");
    }
}

Tape::Node& Tape::node(Var v) {
    check(v);
    return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    check(v);
    return nodes_[static_cast<size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const {
    const Node& n = node(v);
    return n.view ? *n.view : n.value;
}

Tensor& Tape::grad(Var v) {
    Node& n = node(v);
    if (n.grad_sink) return *n.grad_sink;
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.view ? *n.view : n.value);
    return n.grad;
}

Var Tape::constant(Tensor v) { return Var{push(std::move(v), nullptr)}; }

Var Tape::param(ParamStore& store, int entry) {
    Node n;
    n.view = &store.entry(entry).value;
    n.grad_sink = &store.entry(entry).grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Tensor& v) {
    Node n;
    n.view = &v;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::matmul(Var a, Var b) {
    Tensor out = qg::matmul(value(a), value(b));
    int id = push(std::move(out), [a, b, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        t.grad(a) = qg::add(t.grad(a), qg::matmul_nt(g, t.value(b)));
        t.grad(b) = qg::add(t.grad(b), qg::matmul_tn(t.value(a), g));
    });
    return Var{id};
}

Var Tape::matmul_nt(Var a, Var b) {
    Tensor out = qg::matmul_nt(value(a), value(b));
    int id = push(std::move(out), [a, b, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        t.grad(a) = qg::add(t.grad(a), qg::matmul(g, t.value(b)));
        t.grad(b) = qg::add(t.grad(b), qg::matmul_tn(g, t.value(a)));
    });
    return Var{id};
}

Var Tape::add(Var a, Var b) {
    Tensor out = qg::add(value(a), value(b));
    int id = push(std::move(out), [a, b, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        t.grad(a) = qg::add(t.grad(a), g);
        t.grad(b) = qg::add(t.grad(b), g);
    });
    return Var{id};
}

Var Tape::mul(Var a, Var b) {
    Tensor out = qg::mul(value(a), value(b));
    int id = push(std::move(out), [a, b, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        t.grad(a) = qg::add(t.grad(a), qg::mul(g, t.value(b)));
        t.grad(b) = qg::add(t.grad(b), qg::mul(g, t.value(a)));
    });
    return Var{id};
}

Var Tape::scale(Var a, double c) {
    Tensor out = qg::scale(value(a), c);
    int id = push(std::move(out), [a, c, self = Var{size()}](Tape& t) {
        t.grad(a) = qg::add(t.grad(a), qg::scale(t.grad(self), c));
    });
    return Var{id};
}

Var Tape::add_row_bias(Var x, Var bias) {
    Tensor out = qg::add_row_bias(value(x), value(bias));
    int id = push(std::move(out), [x, bias, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        t.grad(x) = qg::add(t.grad(x), g);
        Tensor& gb = t.grad(bias);
        const int m = g.dim(0), n = g.dim(1);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) gb.at(j) += g.at(i, j);
        }
    });
    return Var{id};
}

Var Tape::gelu(Var x) {
    const Tensor& xin = value(x);
    Tensor out = xin;
    for (int64_t i = 0; i < out.size(); ++i) {
        double v = out[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    int id = push(std::move(out), [x, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad(x);
        for (int64_t i = 0; i < g.size(); ++i) {
            double v = xv[i];
            double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            gx[i] += g[i] * (cdf + v * pdf);
        }
    });
    return Var{id};
}

Var Tape::layer_norm(Var x, Var gain, Var bias) {
    const Tensor& xin = value(x);
    if (xin.rank() != 2) throw ContractError("layer_norm: expected rank-2 input");
    const int m = xin.dim(0), n = xin.dim(1);
    const Tensor& gv = value(gain);
    const Tensor& bv = value(bias);
    if (gv.rank() != 1 || gv.dim(0) != n || !gv.same_shape(bv)) {
        throw ContractError("layer_norm: gain/bias shape mismatch " + gv.shape_str());
    }
    Tensor norm({m, n});     // x-hat, saved for backward
    Tensor inv_std({m});
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += xin.at(i, j);
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = xin.at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        double is = 1.0 / std::sqrt(var + kLnEps);
        inv_std.at(i) = is;
        for (int j = 0; j < n; ++j) {
            double nh = (xin.at(i, j) - mean) * is;
            norm.at(i, j) = nh;
            out.at(i, j) = nh * gv.at(j) + bv.at(j);
        }
    }
    int id = push(std::move(out),
                  [x, gain, bias, norm, inv_std, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& gv = t.value(gain);
        Tensor& gx = t.grad(x);
        Tensor& ggain = t.grad(gain);
        Tensor& gbias = t.grad(bias);
        const int m = g.dim(0), n = g.dim(1);
        for (int i = 0; i < m; ++i) {
            double sum_dn = 0.0, sum_dn_nh = 0.0;
            for (int j = 0; j < n; ++j) {
                double dn = g.at(i, j) * gv.at(j);
                sum_dn += dn;
                sum_dn_nh += dn * norm.at(i, j);
                ggain.at(j) += g.at(i, j) * norm.at(i, j);
                gbias.at(j) += g.at(i, j);
            }
            double is = inv_std.at(i);
            for (int j = 0; j < n; ++j) {
                double dn = g.at(i, j) * gv.at(j);
                gx.at(i, j) += is * (dn - sum_dn / n - norm.at(i, j) * sum_dn_nh / n);
            }
        }
    });
    return Var{id};
}

Var Tape::softmax_rows(Var x, const Tensor* add_mask) {
    Tensor z = value(x);
    if (add_mask) z = qg::add(z, *add_mask);
    Tensor sm = qg::softmax_rows(z);
    int id = push(sm, [x, sm, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(x);
        const int m = sm.rank() == 2 ? sm.dim(0) : 1;
        const int n = sm.rank() == 2 ? sm.dim(1) : sm.dim(0);
        for (int i = 0; i < m; ++i) {
            const double* srow = sm.data() + static_cast<size_t>(i) * n;
            const double* grow = g.data() + static_cast<size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += grow[j] * srow[j];
            double* gxrow = gx.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) gxrow[j] += srow[j] * (grow[j] - dot);
        }
    });
    return Var{id};
}

Var Tape::embedding(Var table, std::vector<int> ids) {
    const Tensor& tab = value(table);
    if (tab.rank() != 2) throw ContractError("embedding: table must be rank 2");
    const int vocab = tab.dim(0), d = tab.dim(1);
    Tensor out({static_cast<int>(ids.size()), d});
    for (size_t t = 0; t < ids.size(); ++t) {
        int id = ids[t];
        if (id < 0 || id >= vocab) {
            throw ContractError("embedding: id " + std::to_string(id) + " out of range [0," +
                                std::to_string(vocab) + ")");
        }
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(t), j) = tab.at(id, j);
    }
    int id = push(std::move(out), [table, ids = std::move(ids), self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gt = t.grad(table);
        const int d = g.dim(1);
        for (size_t k = 0; k < ids.size(); ++k) {
            for (int j = 0; j < d; ++j) {
                gt.at(ids[k], j) += g.at(static_cast<int>(k), j);
            }
        }
    });
    return Var{id};
}

Var Tape::slice_cols(Var x, int c0, int c1) {
    const Tensor& xin = value(x);
    if (xin.rank() != 2 || c0 < 0 || c1 > xin.dim(1) || c0 >= c1) {
        throw ContractError("slice_cols: bad range");
    }
    const int m = xin.dim(0), w = c1 - c0;
    Tensor out({m, w});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) out.at(i, j) = xin.at(i, c0 + j);
    }
    int id = push(std::move(out), [x, c0, w, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(x);
        for (int i = 0; i < g.dim(0); ++i) {
            for (int j = 0; j < w; ++j) gx.at(i, c0 + j) += g.at(i, j);
        }
    });
    return Var{id};
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("concat_cols: empty list");
    const int m = value(xs[0]).dim(0);
    int total = 0;
    for (Var v : xs) {
        if (value(v).rank() != 2 || value(v).dim(0) != m) {
            throw ContractError("concat_cols: row mismatch");
        }
        total += value(v).dim(1);
    }
    Tensor out({m, total});
    int off = 0;
    for (Var v : xs) {
        const Tensor& part = value(v);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < part.dim(1); ++j) out.at(i, off + j) = part.at(i, j);
        }
        off += part.dim(1);
    }
    int id = push(std::move(out), [xs, self = Var{size()}](Tape& t) {
        const Tensor& g = t.grad(self);
        int off = 0;
        for (Var v : xs) {
            Tensor& gx = t.grad(v);
            const int w = gx.dim(1);
            for (int i = 0; i < g.dim(0); ++i) {
                for (int j = 0; j < w; ++j) gx.at(i, j) += g.at(i, off + j);
            }
            off += w;
        }
    });
    return Var{id};
}

Var Tape::mul_mask(Var x, Tensor mask) {
    Tensor out = qg::mul(value(x), mask);
    int id = push(std::move(out), [x, mask = std::move(mask), self = Var{size()}](Tape& t) {
        t.grad(x) = qg::add(t.grad(x), qg::mul(t.grad(self), mask));
    });
    return Var{id};
}

Var Tape::sequence_log_prob(Var logits, std::vector<int> targets, std::vector<bool> pad_mask,
                            std::vector<double>* per_step_out) {
    const Tensor& lg = value(logits);
    CrossEntropyResult ce = cross_entropy(lg, targets, pad_mask);
    if (per_step_out) {
        per_step_out->clear();
        for (double nll : ce.per_step_nll) per_step_out->push_back(-nll);
    }
    Tensor sm = qg::softmax_rows(lg);  // saved for backward
    Tensor out = Tensor::scalar(-ce.total_nll);
    int id = push(std::move(out),
                  [logits, targets = std::move(targets), pad_mask = std::move(pad_mask), sm,
                   self = Var{size()}](Tape& t) {
        const double gs = t.grad(self).at(0);
        Tensor& gl = t.grad(logits);
        const int v = sm.dim(1);
        for (size_t step = 0; step < targets.size(); ++step) {
            if (!pad_mask.empty() && pad_mask[step]) continue;
            const int i = static_cast<int>(step);
            for (int j = 0; j < v; ++j) gl.at(i, j) -= gs * sm.at(i, j);
            gl.at(i, targets[step]) += gs;
        }
    });
    return Var{id};
}

Var Tape::bce_with_logits(Var z, std::vector<bool> labels, std::vector<bool> include) {
    const Tensor& zv = value(z);
    if (zv.rank() != 2 || zv.dim(1) != 1 ||
        static_cast<size_t>(zv.dim(0)) != labels.size() || labels.size() != include.size()) {
        throw ContractError("bce_with_logits: shape mismatch");
    }
    int count = 0;
    double total = 0.0;
    for (size_t t = 0; t < labels.size(); ++t) {
        if (!include[t]) continue;
        ++count;
        double x = zv.at(static_cast<int>(t), 0);
        double y = labels[t] ? 1.0 : 0.0;
        // softplus(x) - y*x, computed stably
        double sp = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
        total += sp - y * x;
    }
    if (count == 0) throw ContractError("bce_with_logits: no included positions");
    Tensor out = Tensor::scalar(total / count);
    int id = push(std::move(out),
                  [z, labels = std::move(labels), include = std::move(include), count,
                   self = Var{size()}](Tape& t) {
        const double gs = t.grad(self).at(0);
        const Tensor& zv = t.value(z);
        Tensor& gz = t.grad(z);
        for (size_t k = 0; k < labels.size(); ++k) {
            if (!include[k]) continue;
            double x = zv.at(static_cast<int>(k), 0);
            double sig = 1.0 / (1.0 + std::exp(-x));
            double y = labels[k] ? 1.0 : 0.0;
            gz.at(static_cast<int>(k), 0) += gs * (sig - y) / count;
        }
    });
    return Var{id};
}

void Tape::backward(Var loss, double seed) {
    if (nodes_.empty()) throw ContractError("backward before forward: tape is empty");
    check(loss);
    if (value(loss).size() != 1) throw ContractError("backward: loss must be a scalar");
    grad(loss).at(0) += seed;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.back) continue;
        if (n.grad.empty() && !n.grad_sink) continue;  // no gradient reached this node
        n.back(*this);
    }
}

void Tape::reset() { nodes_.clear(); }

}  // namespace qg
