#pragma once

#include <functional>

#include "onedf/autodiff.hpp"

namespace onedf {

/// Builds a scalar-valued graph from x on the given tape.
template <typename S>
using GraphFnT = std::function<VarT<S>(TapeT<S>&, const VarT<S>&)>;

struct GradCheckResult {
  double max_error = 0.0;   // per the mixed relative/absolute rule
  int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Compares the reverse-mode gradient of fn w.r.t. x against central
/// differences, coordinate by coordinate. Relative error is
/// |a - n| / max(|a|, |n|); where |analytic| < 1e-6 the absolute error
/// |a - n| is used instead. step must lie in [1e-4, 1e-2]. Gradient checks
/// normally run on the double instantiation so finite-difference noise stays
/// well under the comparison tolerances.
template <typename S>
GradCheckResult check_gradient(const GraphFnT<S>& fn, const TensorPtrT<S>& x, double step);

/// Convenience wrapper returning just the error.
template <typename S>
double check_gradient_max_error(const GraphFnT<S>& fn, const TensorPtrT<S>& x, double step);

extern template GradCheckResult check_gradient<float>(const GraphFnT<float>&,
                                                      const TensorPtrT<float>&, double);
extern template GradCheckResult check_gradient<double>(const GraphFnT<double>&,
                                                       const TensorPtrT<double>&, double);
extern template double check_gradient_max_error<float>(const GraphFnT<float>&,
                                                       const TensorPtrT<float>&, double);
extern template double check_gradient_max_error<double>(const GraphFnT<double>&,
                                                        const TensorPtrT<double>&, double);

}  // namespace onedf
