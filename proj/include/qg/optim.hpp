#pragma once

#include <functional>

#include "qg/params.hpp"

namespace qg {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment buffers parallel to a ParamStore's entries.
struct AdamState {
    AdamConfig cfg;
    int64_t t = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState init(const ParamStore& store, AdamConfig cfg);
};

// Standard Adam update with bias correction, reading store.entry(i).grad.
// Non-finite gradients fail fast with ContractError.
void adam_step(ParamStore& store, AdamState& state);

// Max over all parameter scalars of the relative error between the analytic
// gradients currently held in the store and central finite differences of f.
// f is re-evaluated with perturbed parameters; values are restored afterwards.
double finite_diff_check(const std::function<double()>& f, ParamStore& store, double epsilon);

}  // namespace qg
