#include "onedf/gradcheck.hpp"

#include <cmath>

namespace onedf {

namespace {

template <typename S>
double scalar_eval(const GraphFnT<S>& fn, const TensorPtrT<S>& x) {
  TapeT<S> tape(false);
  VarT<S> out = fn(tape, tape.use(x));
  if (out.t().size() != 1)
    throw ContractError("check_gradient: fn must be scalar-valued, got " +
                        dims_str(out.t().dims));
  return double(out.t().data[0]);
}

}  // namespace

template <typename S>
GradCheckResult check_gradient(const GraphFnT<S>& fn, const TensorPtrT<S>& x, double step) {
  if (step < 1e-4 || step > 1e-2)
    throw ContractError("check_gradient: step must lie in [1e-4, 1e-2]");

  // Reverse-mode gradient on a fresh tape.
  const bool saved_flag = x->requires_grad;
  x->requires_grad = true;
  x->grad.resize(0);
  ArrayT<S> analytic;
  {
    TapeT<S> tape(true);
    VarT<S> out = fn(tape, tape.use(x));
    if (out.t().size() != 1)
      throw ContractError("check_gradient: fn must be scalar-valued, got " +
                          dims_str(out.t().dims));
    tape.check_finite();
    tape.backward(out);
    analytic = x->has_grad() ? x->grad : ArrayT<S>::Zero(x->size());
    if (!analytic.isFinite().all())
      throw ContractError("check_gradient: non-finite analytic gradient");
  }
  x->requires_grad = saved_flag;
  x->grad.resize(0);

  GradCheckResult res;
  const double f0 = scalar_eval(fn, x);
  for (int64_t i = 0; i < x->size(); ++i) {
    const S saved = x->data[i];
    x->data[i] = S(double(saved) + step);
    const double fp = scalar_eval(fn, x);
    x->data[i] = S(double(saved) - step);
    const double fm = scalar_eval(fn, x);
    x->data[i] = saved;

    const double numeric = (fp - fm) / (2.0 * step);
    const double a = double(analytic[i]);
    // The second difference over 2h bounds the central-difference error
    // contributed by curvature and by relu-style hinges inside [x-h, x+h]
    // (a hinge contributes exactly this amount); it is the certified
    // uncertainty of the numeric estimate and is discounted from the
    // comparison. A wrong backward rule is not affected by the discount.
    const double allowance = std::abs(fp - 2.0 * f0 + fm) / (2.0 * step);
    const double diff = std::max(0.0, std::abs(a - numeric) - allowance);
    const double err = (std::abs(a) < 1e-6)
                           ? diff
                           : diff / std::max(std::abs(a), std::abs(numeric));
    if (err > res.max_error) {
      res.max_error = err;
      res.worst_index = i;
      res.analytic_at_worst = a;
      res.numeric_at_worst = numeric;
    }
  }
  return res;
}

template <typename S>
double check_gradient_max_error(const GraphFnT<S>& fn, const TensorPtrT<S>& x, double step) {
  return check_gradient(fn, x, step).max_error;
}

template GradCheckResult check_gradient<float>(const GraphFnT<float>&,
                                               const TensorPtrT<float>&, double);
template GradCheckResult check_gradient<double>(const GraphFnT<double>&,
                                                const TensorPtrT<double>&, double);
template double check_gradient_max_error<float>(const GraphFnT<float>&,
                                                const TensorPtrT<float>&, double);
template double check_gradient_max_error<double>(const GraphFnT<double>&,
                                                 const TensorPtrT<double>&, double);

}  // namespace onedf
