#include "onedf/tensor.hpp"

#include <cmath>
#include <sstream>

namespace onedf {

float Rng::normal(float mean, float sd) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + sd * spare_;
  }
  // Box-Muller; u clamped away from 0 so the log stays finite.
  double u = next_double();
  double v = next_double();
  if (u < 1e-300) u = 1e-300;
  double r = std::sqrt(-2.0 * std::log(u));
  double a = 2.0 * M_PI * v;
  spare_ = float(r * std::sin(a));
  has_spare_ = true;
  return mean + sd * float(r * std::cos(a));
}

uint64_t derive_seed(uint64_t base, uint64_t tag) {
  uint64_t z = base + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

int64_t numel(const std::vector<int>& dims) {
  int64_t n = 1;
  for (int d : dims) n *= d;
  return n;
}

std::string dims_str(const std::vector<int>& dims) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << "x";
    os << dims[i];
  }
  os << "]";
  return os.str();
}

template <typename S>
int TensorT<S>::rows() const {
  if (rank() != 2) throw ShapeError("rank-2 tensor expected, got " + dims_str(dims));
  return dims[0];
}

template <typename S>
int TensorT<S>::cols() const {
  if (rank() != 2) throw ShapeError("rank-2 tensor expected, got " + dims_str(dims));
  return dims[1];
}

template <typename S>
void TensorT<S>::accumulate(const ArrayT<S>& g) {
  if (g.size() != data.size())
    throw ShapeError("gradient extent mismatch: " + std::to_string(g.size()) +
                     " vs " + std::to_string(data.size()));
  ensure_grad();
  grad += g;
}

template <typename S>
ConstMatMapT<S> TensorT<S>::mat() const {
  return ConstMatMapT<S>(data.data(), rows(), cols());
}

template <typename S>
MatMapT<S> TensorT<S>::mat() {
  return MatMapT<S>(data.data(), rows(), cols());
}

template <typename S>
TensorPtrT<S> make_tensor(std::vector<int> dims, bool requires_grad) {
  for (int d : dims)
    if (d <= 0) throw ShapeError("non-positive extent in " + dims_str(dims));
  auto t = std::make_shared<TensorT<S>>();
  t->data = ArrayT<S>::Zero(numel(dims));
  t->dims = std::move(dims);
  t->requires_grad = requires_grad;
  return t;
}

template <typename S>
TensorPtrT<S> make_tensor(std::vector<int> dims, const std::vector<float>& values) {
  auto t = make_tensor<S>(std::move(dims));
  if (int64_t(values.size()) != t->size())
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not fill " + dims_str(t->dims));
  for (int64_t i = 0; i < t->size(); ++i) t->data[i] = S(values[size_t(i)]);
  return t;
}

template <typename S>
TensorPtrT<S> clone_tensor(const TensorPtrT<S>& t) {
  auto c = std::make_shared<TensorT<S>>();
  c->dims = t->dims;
  c->data = t->data;
  c->requires_grad = t->requires_grad;
  return c;
}

template <typename To, typename From>
TensorPtrT<To> cast_tensor(const TensorPtrT<From>& t) {
  auto c = std::make_shared<TensorT<To>>();
  c->dims = t->dims;
  c->data = t->data.template cast<To>();
  c->requires_grad = t->requires_grad;
  return c;
}

template <typename S>
void glorot_init(TensorT<S>& t, int fan_in, int fan_out, Rng& rng) {
  const float a = std::sqrt(6.f / float(fan_in + fan_out));
  uniform_init(t, -a, a, rng);
}

template <typename S>
void uniform_init(TensorT<S>& t, float lo, float hi, Rng& rng) {
  for (int64_t i = 0; i < t.size(); ++i) t.data[i] = S(rng.uniform(lo, hi));
}

template struct TensorT<float>;
template struct TensorT<double>;
template TensorPtrT<float> make_tensor<float>(std::vector<int>, bool);
template TensorPtrT<double> make_tensor<double>(std::vector<int>, bool);
template TensorPtrT<float> make_tensor<float>(std::vector<int>, const std::vector<float>&);
template TensorPtrT<double> make_tensor<double>(std::vector<int>, const std::vector<float>&);
template TensorPtrT<float> clone_tensor<float>(const TensorPtrT<float>&);
template TensorPtrT<double> clone_tensor<double>(const TensorPtrT<double>&);
template TensorPtrT<double> cast_tensor<double, float>(const TensorPtrT<float>&);
template TensorPtrT<float> cast_tensor<float, double>(const TensorPtrT<double>&);
template void glorot_init<float>(TensorT<float>&, int, int, Rng&);
template void glorot_init<double>(TensorT<double>&, int, int, Rng&);
template void uniform_init<float>(TensorT<float>&, float, float, Rng&);
template void uniform_init<double>(TensorT<double>&, float, float, Rng&);

}  // namespace onedf
