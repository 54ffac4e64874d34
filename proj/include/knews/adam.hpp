#pragma once
// Bias-corrected Adam over a ParamRegistry. Frozen entries must not appear in
// the gradient map; every trainable entry must.

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "params.hpp"
#include "tensor.hpp"

namespace knews {

template <typename T>
class AdamState {
  public:
    AdamState(const ParamRegistry<T>& reg, double lr, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& name : reg.names()) {
            if (reg.frozen(name)) continue;
            const Tensor<T>& v = reg.value(name);
            m_.emplace(name, Tensor<T>(v.rows, v.cols));
            v_.emplace(name, Tensor<T>(v.rows, v.cols));
        }
    }

    int64_t step_count() const { return step_; }
    double learning_rate() const { return lr_; }

    void step(ParamRegistry<T>& reg, const GradStore<T>& grads) {
        for (const auto& name : grads.names()) {
            if (!reg.has(name)) throw std::invalid_argument("adam: gradient for unknown param " + name);
            if (reg.frozen(name)) throw std::invalid_argument("adam: gradient supplied for frozen param " + name);
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
        for (const auto& name : reg.names()) {
            if (reg.frozen(name)) continue;
            if (!grads.has(name)) throw std::invalid_argument("adam: missing gradient for param " + name);
            Tensor<T>& p = reg.value(name);
            const Tensor<T>& g = grads.grad(name);
            Tensor<T>& m = m_.at(name);
            Tensor<T>& v = v_.at(name);
            for (size_t k = 0; k < p.data.size(); ++k) {
                const double gk = static_cast<double>(g.data[k]);
                const double mk = beta1_ * static_cast<double>(m.data[k]) + (1.0 - beta1_) * gk;
                const double vk = beta2_ * static_cast<double>(v.data[k]) + (1.0 - beta2_) * gk * gk;
                m.data[k] = static_cast<T>(mk);
                v.data[k] = static_cast<T>(vk);
                const double mhat = mk / bc1;
                const double vhat = vk / bc2;
                p.data[k] = static_cast<T>(static_cast<double>(p.data[k]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

  private:
    double lr_, beta1_, beta2_, eps_;
    int64_t step_ = 0;
    std::unordered_map<std::string, Tensor<T>> m_, v_;
};

}  // namespace knews
