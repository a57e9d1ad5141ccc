#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "hd/core/tensor.hpp"

// Central-difference gradient checking. Always runs in double: single precision
// leaves too little headroom between truncation and rounding error.

namespace hd {

struct GradCheckResult {
  bool ok = true;
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  std::int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;

  std::string summary() const {
    if (ok) return "gradcheck ok (max abs diff " + std::to_string(max_abs_diff) + ")";
    return "gradcheck FAILED at flat index " + std::to_string(worst_index) + ": analytic " +
           std::to_string(analytic_at_worst) + " vs numeric " + std::to_string(numeric_at_worst);
  }
};

// f maps a candidate tensor value to a scalar loss; analytic is the gradient
// produced by the tape for the same input. Mixed tolerance: a component fails
// when |a - n| > atol + rtol * max(|a|, |n|).
inline GradCheckResult check_gradient(const std::function<double(const TensorD&)>& f,
                                      const TensorD& x, const TensorD& analytic,
                                      double step = 1e-5, double rtol = 1e-4,
                                      double atol = 1e-8) {
  if (!x.same_shape(analytic))
    throw std::invalid_argument("check_gradient: gradient shape " + analytic.shape_str() +
                                " does not match input " + x.shape_str());
  GradCheckResult res;
  TensorD probe = x;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = f(probe);
    probe[i] = orig - step;
    const double fm = f(probe);
    probe[i] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    const double diff = std::abs(a - numeric);
    const double ref = std::max(std::abs(a), std::abs(numeric));
    if (diff > res.max_abs_diff) {
      res.max_abs_diff = diff;
      res.worst_index = i;
      res.analytic_at_worst = a;
      res.numeric_at_worst = numeric;
    }
    if (ref > 0.0) res.max_rel_diff = std::max(res.max_rel_diff, diff / ref);
    if (diff > atol + rtol * ref) res.ok = false;
  }
  return res;
}

}  // namespace hd
