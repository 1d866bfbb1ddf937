#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "onedf/common.hpp"

namespace onedf {

template <typename S>
using ArrayT = Eigen::Array<S, Eigen::Dynamic, 1>;
template <typename S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMapT = Eigen::Map<MatT<S>>;
template <typename S>
using ConstMatMapT = Eigen::Map<const MatT<S>>;

int64_t numel(const std::vector<int>& dims);
std::string dims_str(const std::vector<int>& dims);

/// Dense tensor in row-major order with an optional gradient buffer of the
/// same extent. Rank and extents are dynamic. The scalar type is a template
/// parameter: the model runs on float, the finite-difference verification
/// harness instantiates the same operators on double.
template <typename S>
struct TensorT {
  std::vector<int> dims;
  ArrayT<S> data;
  ArrayT<S> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;

  int64_t size() const { return data.size(); }
  int rank() const { return int(dims.size()); }
  int dim(int i) const { return dims[size_t(i)]; }

  /// Leading extent of a rank-2 tensor.
  int rows() const;
  /// Trailing extent of a rank-2 tensor.
  int cols() const;

  bool has_grad() const { return grad.size() != 0; }
  void ensure_grad() {
    if (!has_grad()) grad = ArrayT<S>::Zero(data.size());
  }
  void zero_grad() {
    if (has_grad()) grad.setZero();
  }
  /// Lazily allocates the gradient buffer and adds g into it.
  void accumulate(const ArrayT<S>& g);

  bool all_finite() const { return data.isFinite().all(); }
  bool grad_finite() const { return !has_grad() || grad.isFinite().all(); }

  ConstMatMapT<S> mat() const;  // rank-2 view
  MatMapT<S> mat();
};

template <typename S>
using TensorPtrT = std::shared_ptr<TensorT<S>>;

using Tensor = TensorT<float>;
using TensorPtr = TensorPtrT<float>;
using ArrayX = ArrayT<float>;
using MatRM = MatT<float>;

template <typename S>
TensorPtrT<S> make_tensor(std::vector<int> dims, bool requires_grad = false);
template <typename S>
TensorPtrT<S> make_tensor(std::vector<int> dims, const std::vector<float>& values);

inline TensorPtr make_tensor(std::vector<int> dims, bool requires_grad = false) {
  return make_tensor<float>(std::move(dims), requires_grad);
}
inline TensorPtr make_tensor(std::vector<int> dims, std::initializer_list<float> values) {
  return make_tensor<float>(std::move(dims), std::vector<float>(values));
}
inline TensorPtr make_tensor(std::vector<int> dims, const std::vector<float>& values) {
  return make_tensor<float>(std::move(dims), values);
}

/// Deep copy (data only; gradient buffer is not copied).
template <typename S>
TensorPtrT<S> clone_tensor(const TensorPtrT<S>& t);

/// Element-by-element cast; used to lift float parameters into the double
/// verification instance.
template <typename To, typename From>
TensorPtrT<To> cast_tensor(const TensorPtrT<From>& t);

/// Fills with uniform values in [-a, a], a = sqrt(6 / (fan_in + fan_out)).
/// Values are drawn in float and widened, so float and double instances of
/// the same seed hold identical parameters.
template <typename S>
void glorot_init(TensorT<S>& t, int fan_in, int fan_out, Rng& rng);
template <typename S>
void uniform_init(TensorT<S>& t, float lo, float hi, Rng& rng);

extern template struct TensorT<float>;
extern template struct TensorT<double>;

}  // namespace onedf
