#pragma once
// Central finite-difference gradient oracle. Meant to run on a double-precision
// registry with any stochastic pieces (dropout) disabled so the loss is a
// deterministic function of the parameters.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "params.hpp"
#include "rng.hpp"

namespace knews {

struct CoordGrad {
    size_t index = 0;  // flat index into the parameter
    double grad = 0.0;
};

// (L(theta+h) - L(theta-h)) / 2h for each requested coordinate. The parameter
// is restored exactly after each probe.
template <typename T>
std::vector<CoordGrad> finite_difference_gradient(const std::function<double()>& loss_fn,
                                                  ParamRegistry<T>& params, const std::string& name,
                                                  double h, const std::vector<size_t>& coords) {
    Tensor<T>& p = params.value(name);
    std::vector<CoordGrad> out;
    out.reserve(coords.size());
    for (size_t idx : coords) {
        if (idx >= p.data.size()) throw std::out_of_range("finite_difference_gradient: coordinate out of range");
        const T saved = p.data[idx];
        p.data[idx] = static_cast<T>(static_cast<double>(saved) + h);
        const double lp = loss_fn();
        p.data[idx] = static_cast<T>(static_cast<double>(saved) - h);
        const double lm = loss_fn();
        p.data[idx] = saved;
        if (!std::isfinite(lp) || !std::isfinite(lm))
            throw std::domain_error("finite_difference_gradient: loss non-finite at perturbed point for " + name);
        out.push_back({idx, (lp - lm) / (2.0 * h)});
    }
    return out;
}

// Uniformly sampled coordinates (without replacement when the tensor is small).
inline std::vector<size_t> sample_coords(size_t numel, size_t want, Rng& rng) {
    std::vector<size_t> out;
    if (numel == 0) return out;
    if (numel <= want) {
        for (size_t i = 0; i < numel; ++i) out.push_back(i);
        return out;
    }
    for (int i : rng.sample_without_replacement(static_cast<int>(numel), static_cast<int>(want)))
        out.push_back(static_cast<size_t>(i));
    return out;
}

// Relative error with an absolute deadband: |a-n| / max(|a|, |n|, floor).
// The floor keeps coordinates whose true gradient is at the level of the
// finite-difference noise from producing spurious blowups.
inline double grad_rel_error(double analytic, double numeric, double floor_ = 1e-4) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor_});
    return std::abs(analytic - numeric) / denom;
}

}  // namespace knews
