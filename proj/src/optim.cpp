#include "qg/optim.hpp"

#include <cmath>

#include "qg/common.hpp"

namespace qg {

AdamState AdamState::init(const ParamStore& store, AdamConfig cfg) {
    AdamState s;
    s.cfg = cfg;
    for (int i = 0; i < store.count(); ++i) {
        s.m.push_back(Tensor::zeros_like(store.entry(i).value));
        s.v.push_back(Tensor::zeros_like(store.entry(i).value));
    }
    return s;
}

void adam_step(ParamStore& store, AdamState& state) {
    if (static_cast<int>(state.m.size()) != store.count()) {
        throw ContractError("adam_step: state does not match store");
    }
    state.t += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (int i = 0; i < store.count(); ++i) {
        const Tensor& g = store.entry(i).grad;
        Tensor& p = store.mutable_value(i);
        Tensor& m = state.m[static_cast<size_t>(i)];
        Tensor& v = state.v[static_cast<size_t>(i)];
        for (int64_t k = 0; k < g.size(); ++k) {
            double gk = g[k];
            if (!std::isfinite(gk)) {
                throw ContractError("adam_step: non-finite gradient in " + store.entry(i).name);
            }
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            double m_hat = m[k] / bc1;
            double v_hat = v[k] / bc2;
            p[k] -= state.cfg.lr * m_hat / (std::sqrt(v_hat) + state.cfg.eps);
        }
    }
}

double finite_diff_check(const std::function<double()>& f, ParamStore& store, double epsilon) {
    if (epsilon < 1e-7 || epsilon > 1e-3) {
        throw ContractError("finite_diff_check: epsilon outside [1e-7, 1e-3]");
    }
    double max_rel = 0.0;
    for (int i = 0; i < store.count(); ++i) {
        Tensor& p = store.mutable_value(i);
        const Tensor& analytic = store.entry(i).grad;
        for (int64_t k = 0; k < p.size(); ++k) {
            const double orig = p[k];
            p[k] = orig + epsilon;
            double up = f();
            p[k] = orig - epsilon;
            double down = f();
            p[k] = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw ContractError("finite_diff_check: non-finite objective");
            }
            double numeric = (up - down) / (2.0 * epsilon);
            double ga = analytic[k];
            double rel = std::abs(ga - numeric) / std::max(1e-8, std::abs(ga) + std::abs(numeric));
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace qg
