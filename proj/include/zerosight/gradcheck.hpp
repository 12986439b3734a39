#pragma once

#include <functional>
#include <string>

#include "zerosight/tensor.hpp"

namespace zerosight {

// Central finite-difference verification of the reverse-mode gradients.
// The oracle side re-evaluates the forward function only; it never touches
// the tape, so the two gradient routes stay independent.
struct GradCheckResult {
    double max_err = 0.0;        // max over probed coords of the scaled error
    std::string worst;           // "input 2, coord 17" style location
    std::size_t probed = 0;

    bool pass(double tol) const { return max_err <= tol; }
};

// fn() must rebuild the forward graph from the current contents of `inputs`
// and return a scalar. Probes every coordinate unless `coords` narrows the
// probe set per input. Error metric per coordinate:
//   |analytic - fd| / max(1, |analytic|, |fd|)
// i.e. absolute near zero, relative for large gradients.
//
// refine_below > 0 re-probes offending coordinates at step/10 and step/100
// and keeps the best estimate. A relu/pool kink inside the probe window
// poisons the difference quotient but vanishes as the window shrinks; a
// genuinely wrong adjoint keeps its mismatch at every step size.
inline GradCheckResult check_gradients(const std::function<TensorD()>& fn,
                                       std::vector<TensorD> inputs, double step = 1e-5,
                                       const std::vector<std::vector<std::size_t>>* coords =
                                           nullptr,
                                       double refine_below = 0.0) {
    for (auto& t : inputs) t.set_requires_grad(true);

    // analytic pass
    std::vector<std::vector<double>> analytic;
    {
        Tape<double> tape;
        Tape<double>::Scope scope(tape);
        TensorD y = fn();
        tape.backward(y);
        for (auto& t : inputs)
            analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));
    }
    for (auto& t : inputs) t.zero_grad();

    GradCheckResult res;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        TensorD& t = inputs[ti];
        std::vector<std::size_t> all;
        const std::vector<std::size_t>* probe = nullptr;
        if (coords && ti < coords->size()) {
            probe = &(*coords)[ti];
        } else {
            all.resize(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) all[i] = i;
            probe = &all;
        }
        for (std::size_t i : *probe) {
            double a = analytic[ti][i];
            auto probe_at = [&](double h) {
                double saved = t.at(i);
                t.at(i) = saved + h;
                double y_plus = fn().item();
                t.at(i) = saved - h;
                double y_minus = fn().item();
                t.at(i) = saved;
                double fd = (y_plus - y_minus) / (2.0 * h);
                return std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            };
            double err = probe_at(step);
            if (refine_below > 0.0 && err > refine_below) {
                err = std::min(err, probe_at(step / 10.0));
                if (err > refine_below) err = std::min(err, probe_at(step / 100.0));
            }
            ++res.probed;
            if (err > res.max_err) {
                res.max_err = err;
                res.worst = "input " + std::to_string(ti) + ", coord " + std::to_string(i);
            }
        }
    }
    return res;
}

}  // namespace zerosight
