#pragma once

#include <cmath>

#include "zerosight/layers.hpp"

namespace zerosight {

struct AdamWOptions {
    double lr0 = 1e-4;
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double gamma = 0.94;  // per-epoch exponential lr decay
};

// Adam with decoupled weight decay:
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
// Decay skips parameters collected with decay=false (norm scales/shifts,
// proxies). The learning rate at epoch e is lr0 * gamma^e.
template <class T>
class AdamW {
public:
    AdamW(std::vector<ParamRef<T>> params, AdamWOptions opt = {})
        : params_(std::move(params)), opt_(opt), lr_(opt.lr0) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].tensor.size(), 0.0);
            v_[i].assign(params_[i].tensor.size(), 0.0);
        }
    }

    void set_epoch(std::size_t epoch) {
        lr_ = opt_.lr0 * std::pow(opt_.gamma, static_cast<double>(epoch));
    }

    double lr() const { return lr_; }
    std::size_t step_count() const { return step_; }
    const std::vector<ParamRef<T>>& params() const { return params_; }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    // Validates every gradient before touching any state, so a non-finite
    // gradient aborts the step with the model unchanged.
    void step() {
        for (auto& p : params_) {
            if (!p.tensor.has_grad())
                throw Error("adamw: no gradient recorded for parameter '" + p.name + "'");
            for (T g : p.tensor.grad())
                if (!std::isfinite(static_cast<double>(g)))
                    throw NumericError("adamw: non-finite gradient in parameter '" + p.name +
                                       "'");
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& t = params_[i].tensor;
            const auto& grad = t.grad();
            const double wd = params_[i].decay ? opt_.weight_decay : 0.0;
            for (std::size_t j = 0; j < t.size(); ++j) {
                double g = static_cast<double>(grad[j]);
                m_[i][j] = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * g;
                v_[i][j] = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * g * g;
                double m_hat = m_[i][j] / bc1;
                double v_hat = v_[i][j] / bc2;
                double p = static_cast<double>(t.at(j));
                double adam_step = lr_ * m_hat / (std::sqrt(v_hat) + opt_.eps);
                double decay_step = lr_ * wd * p;  // decoupled, from the pre-update value
                t.at(j) = static_cast<T>(p - adam_step - decay_step);
            }
        }
    }

private:
    std::vector<ParamRef<T>> params_;
    AdamWOptions opt_;
    double lr_;
    std::size_t step_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace zerosight
