#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "onedf/tensor.hpp"

namespace onedf {

template <typename S>
class TapeT;

/// Handle to a tensor participating in a forward pass on one tape.
/// Copying a Var copies the handle, not the payload.
template <typename S>
class VarT {
 public:
  VarT() = default;
  VarT(TapeT<S>* tape, TensorPtrT<S> node) : tape_(tape), node_(std::move(node)) {}

  TapeT<S>* tape() const { return tape_; }
  const TensorPtrT<S>& node() const { return node_; }
  TensorT<S>& t() { return *node_; }
  const TensorT<S>& t() const { return *node_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  TapeT<S>* tape_ = nullptr;
  TensorPtrT<S> node_ = nullptr;
};

/// Reverse-mode tape. Operations execute eagerly and append one node each;
/// backward() replays the record in exact reverse execution order. A tape is
/// built fresh for every forward pass and is single-threaded; distinct tapes
/// over shared read-only parameters may run in parallel.
template <typename S>
class TapeT {
 public:
  /// grad_enabled=false evaluates forward only and records nothing, which
  /// keeps memory flat for streaming inference.
  explicit TapeT(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  /// Wraps an existing tensor (parameter or input) for use on this tape.
  VarT<S> use(const TensorPtrT<S>& t) { return VarT<S>(this, t); }

  /// Fresh non-differentiable tensor owned by the caller.
  VarT<S> input(std::vector<int> dims) {
    return VarT<S>(this, make_tensor<S>(std::move(dims)));
  }
  VarT<S> input(std::vector<int> dims, const std::vector<float>& values) {
    return VarT<S>(this, make_tensor<S>(std::move(dims), values));
  }
  VarT<S> constant(std::vector<int> dims, std::initializer_list<float> values) {
    return VarT<S>(this, make_tensor<S>(std::move(dims), std::vector<float>(values)));
  }

  /// Seeds d(loss)/d(loss) = seed and propagates through the record in
  /// reverse. loss must be scalar.
  void backward(const VarT<S>& loss, S seed = S(1));

  size_t node_count() const { return nodes_.size(); }

  /// Throws ContractError naming the first recorded node whose output holds
  /// a non-finite value.
  void check_finite() const;

  void record(const char* op, TensorPtrT<S> out, std::function<void()> fn) {
    nodes_.push_back(Node{op, std::move(out), std::move(fn)});
  }

 private:
  struct Node {
    const char* op;
    TensorPtrT<S> out;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

using Var = VarT<float>;
using Tape = TapeT<float>;
using VarD = VarT<double>;
using TapeD = TapeT<double>;

// ---------------------------------------------------------------------------
// Operation suite. All functions evaluate eagerly, enforce extents, and
// register their backward rule on the owning tape.
// ---------------------------------------------------------------------------

template <typename S> VarT<S> add(const VarT<S>& a, const VarT<S>& b);
template <typename S> VarT<S> sub(const VarT<S>& a, const VarT<S>& b);
template <typename S> VarT<S> mul(const VarT<S>& a, const VarT<S>& b);  // elementwise
template <typename S> VarT<S> scale(const VarT<S>& a, S s);
template <typename S> VarT<S> relu(const VarT<S>& a);
template <typename S> VarT<S> sigmoid(const VarT<S>& a);

/// [m x k] . [k x n] -> [m x n]
template <typename S> VarT<S> matmul(const VarT<S>& a, const VarT<S>& b);
/// a . b^T : [m x k] . ([n x k])^T -> [m x n]
template <typename S> VarT<S> matmul_nt(const VarT<S>& a, const VarT<S>& b);
/// x . w^T + bias, bias broadcast over rows: [m x in], [out x in], [1 x out]
template <typename S> VarT<S> linear(const VarT<S>& x, const VarT<S>& w, const VarT<S>& bias);

/// Row-wise softmax with max subtraction.
template <typename S> VarT<S> softmax(const VarT<S>& x);
/// Row-wise layer normalization over the trailing extent; epsilon 1e-5
/// inside the square root. gain/bias are [1 x L].
template <typename S> VarT<S> layer_norm(const VarT<S>& x, const VarT<S>& gain, const VarT<S>& bias);

/// Cross-correlation (no kernel flip). x [Ci x L], k [Co x Ci x kw],
/// bias [1 x Co] -> [Co x L'] with L' = floor((L + 2 pad - kw)/stride) + 1.
template <typename S> VarT<S> conv1d(const VarT<S>& x, const VarT<S>& k, const VarT<S>& bias,
                                     int stride, int pad);
/// x [Ci x H x W], k [Co x Ci x kh x kw], bias [1 x Co] -> [Co x H' x W'].
template <typename S> VarT<S> conv2d(const VarT<S>& x, const VarT<S>& k, const VarT<S>& bias,
                                     int stride, int pad);

/// Stacks rank-2 inputs with equal column counts along rows.
template <typename S> VarT<S> concat_rows(std::span<const VarT<S>> parts);
/// Joins single-row inputs along columns.
template <typename S> VarT<S> concat_cols(std::span<const VarT<S>> parts);

template <typename S> VarT<S> slice_row(const VarT<S>& x, int row);
template <typename S> VarT<S> slice_rows(const VarT<S>& x, int row, int count);
template <typename S> VarT<S> slice_cols(const VarT<S>& x, int col, int count);
/// Rank-3 [A x B x C] -> row [1 x C] at (i0, i1).
template <typename S> VarT<S> row3(const VarT<S>& x, int i0, int i1);

template <typename S> VarT<S> reshape(const VarT<S>& x, std::vector<int> dims);
template <typename S> VarT<S> transpose(const VarT<S>& x);

/// Column means of a rank-2 tensor -> [1 x c].
template <typename S> VarT<S> mean_rows(const VarT<S>& x);
/// Mean over the middle axis of [C x H x W] -> [C x W].
template <typename S> VarT<S> mean_axis1(const VarT<S>& x);
/// Mean over the trailing axis of [C x H x W] -> [C x H].
template <typename S> VarT<S> mean_axis2(const VarT<S>& x);
template <typename S> VarT<S> mean_all(const VarT<S>& x);   // -> [1 x 1]
template <typename S> VarT<S> sum_sq(const VarT<S>& x);     // -> [1 x 1]

/// Identity forward; the gradient stops here.
template <typename S> VarT<S> detach(const VarT<S>& x);

/// Adds per-(landmark, window-position) embeddings to window rows: row w of
/// the window receives table[n][w][:] for w < W'. table is [N x W x L].
template <typename S> VarT<S> apply_alp(const VarT<S>& window, const VarT<S>& table, int landmark);

#define ONEDF_EXTERN_OPS(S)                                                            \
  extern template class TapeT<S>;                                                     \
  extern template VarT<S> add(const VarT<S>&, const VarT<S>&);                        \
  extern template VarT<S> sub(const VarT<S>&, const VarT<S>&);                        \
  extern template VarT<S> mul(const VarT<S>&, const VarT<S>&);                        \
  extern template VarT<S> scale(const VarT<S>&, S);                                   \
  extern template VarT<S> relu(const VarT<S>&);                                       \
  extern template VarT<S> sigmoid(const VarT<S>&);                                    \
  extern template VarT<S> matmul(const VarT<S>&, const VarT<S>&);                     \
  extern template VarT<S> matmul_nt(const VarT<S>&, const VarT<S>&);                  \
  extern template VarT<S> linear(const VarT<S>&, const VarT<S>&, const VarT<S>&);     \
  extern template VarT<S> softmax(const VarT<S>&);                                    \
  extern template VarT<S> layer_norm(const VarT<S>&, const VarT<S>&, const VarT<S>&); \
  extern template VarT<S> conv1d(const VarT<S>&, const VarT<S>&, const VarT<S>&, int, int); \
  extern template VarT<S> conv2d(const VarT<S>&, const VarT<S>&, const VarT<S>&, int, int); \
  extern template VarT<S> concat_rows(std::span<const VarT<S>>);                      \
  extern template VarT<S> concat_cols(std::span<const VarT<S>>);                      \
  extern template VarT<S> slice_row(const VarT<S>&, int);                             \
  extern template VarT<S> slice_rows(const VarT<S>&, int, int);                       \
  extern template VarT<S> slice_cols(const VarT<S>&, int, int);                       \
  extern template VarT<S> row3(const VarT<S>&, int, int);                             \
  extern template VarT<S> reshape(const VarT<S>&, std::vector<int>);                  \
  extern template VarT<S> transpose(const VarT<S>&);                                  \
  extern template VarT<S> mean_rows(const VarT<S>&);                                  \
  extern template VarT<S> mean_axis1(const VarT<S>&);                                 \
  extern template VarT<S> mean_axis2(const VarT<S>&);                                 \
  extern template VarT<S> mean_all(const VarT<S>&);                                   \
  extern template VarT<S> sum_sq(const VarT<S>&);                                     \
  extern template VarT<S> detach(const VarT<S>&);                                      \
  extern template VarT<S> apply_alp(const VarT<S>&, const VarT<S>&, int);

ONEDF_EXTERN_OPS(float)
ONEDF_EXTERN_OPS(double)
#undef ONEDF_EXTERN_OPS

}  // namespace onedf
