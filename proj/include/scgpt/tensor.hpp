// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a reverse-mode tape. Every op is templated on
// the scalar type: float for training, double for gradient checking.
//
// Ops treat a tensor as a matrix of rows() x cols() where cols() is the last
// dimension. An op's output requires a gradient iff one of its inputs does;
// only such ops are recorded on the tape.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "scgpt/error.hpp"

namespace scgpt::ag {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;

  std::size_t numel() const { return data.size(); }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::size_t rows() const { return shape.empty() || shape.back() == 0 ? 1 : numel() / shape.back(); }

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
  void zero_grad() { grad.assign(data.size(), T(0)); }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, T fill = T(0), bool requires_grad = false) {
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  auto t = std::make_shared<Tensor<T>>();
  t->data.assign(shape_numel(shape), fill);
  t->shape = std::move(shape);
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  auto t = make_tensor<T>(std::move(shape), T(0), requires_grad);
  t->data = std::move(data);
  return t;
}

// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Records backward closures in forward order and replays them in exact
// reverse order. One tape per thread; tapes are independent.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  void backward(const TensorPtr<T>& loss) {
    if (loss->numel() != 1)
      throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss->shape));
    if (entries_.empty()) throw InvalidArgument("backward called on an empty tape");
    loss->ensure_grad()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> entries_;
};

namespace kernels {

// C[M,N] += A[M,K] * B[K,N]. Rows of C are updated four at a time so each
// row of B is read once per block.
template <typename T>
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    T* c0 = C + i * N;
    T* c1 = c0 + N;
    T* c2 = c1 + N;
    T* c3 = c2 + N;
    const T* a0 = A + i * K;
    const T* a1 = a0 + K;
    const T* a2 = a1 + K;
    const T* a3 = a2 + K;
    for (std::size_t k = 0; k < K; ++k) {
      const T x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) {
        const T bj = b[j];
        c0[j] += x0 * bj;
        c1[j] += x1 * bj;
        c2[j] += x2 * bj;
        c3[j] += x3 * bj;
      }
    }
  }
  for (; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N], folding four rows of A and B per pass over C.
template <typename T>
void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  std::size_t m = 0;
  for (; m + 4 <= M; m += 4) {
    const T* a0 = A + m * K;
    const T* a1 = a0 + K;
    const T* a2 = a1 + K;
    const T* a3 = a2 + K;
    const T* b0 = B + m * N;
    const T* b1 = b0 + N;
    const T* b2 = b1 + N;
    const T* b3 = b2 + N;
    for (std::size_t k = 0; k < K; ++k) {
      const T x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
      T* c = C + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += x0 * b0[j] + x1 * b1[j] + x2 * b2[j] + x3 * b3[j];
    }
  }
  for (; m < M; ++m) {
    const T* a = A + m * K;
    const T* b = B + m * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = a[k];
      T* c = C + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

template <typename T>
std::vector<T> transpose(std::size_t R, std::size_t C, const T* A) {
  std::vector<T> out(R * C);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = A[r * C + c];
  return out;
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  const std::vector<T> bt = transpose(N, K, B);
  gemm_nn(M, K, N, A, bt.data(), C);
}

template <typename T>
T gelu(T x) {
  const T k = T(0.7978845608028654);  // sqrt(2 / pi)
  return T(0.5) * x * (T(1) + std::tanh(k * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  const T k = T(0.7978845608028654);
  const T u = k * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(u);
  const T du = k * (T(1) + T(3) * T(0.044715) * x * x);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
}

// In-place numerically stable softmax of one row.
template <typename T>
void softmax_row(T* row, std::size_t n) {
  T mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  T sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

// Normalizes `in` into `xhat` and returns 1/sigma.
template <typename T>
T layernorm_row(const T* in, T* xhat, std::size_t n, T eps) {
  T mean = 0;
  for (std::size_t j = 0; j < n; ++j) mean += in[j];
  mean /= T(n);
  T var = 0;
  for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
  var /= T(n);
  const T rstd = T(1) / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j) xhat[j] = (in[j] - mean) * rstd;
  return rstd;
}

}  // namespace kernels

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
bool wants_grad(const TensorPtr<T>& t) {
  return grad_mode() && t->requires_grad;
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data)
    if (!std::isfinite(v)) throw NumericFault(std::string("non-finite value produced by ") + op);
}

template <typename T>
bool any_grad(std::initializer_list<const TensorPtr<T>*> ts) {
  if (!grad_mode()) return false;
  for (auto* t : ts)
    if ((*t)->requires_grad) return true;
  return false;
}

template <typename T>
void same_shape(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* op) {
  if (a->shape != b->shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
}

template <typename T>
void require_2d(const TensorPtr<T>& a, const char* op) {
  if (a->shape.size() != 2) throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(a->shape));
}

}  // namespace detail

// [M,K] x [K,N] -> [M,N]
template <typename T>
TensorPtr<T> matmul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const std::size_t M = a->shape[0], K = a->shape[1], N = b->shape[1];
  if (b->shape[0] != K)
    throw ShapeError("matmul: shape mismatch " + shape_str(a->shape) + " x " + shape_str(b->shape));
  auto out = make_tensor<T>({M, N});
  kernels::gemm_nn(M, K, N, a->data.data(), b->data.data(), out->data.data());
  detail::check_finite(*out, "matmul");
  if (detail::any_grad<T>({&a, &b})) {
    out->requires_grad = true;
    tape.record([a, b, out, M, K, N] {
      if (out->grad.empty()) return;
      if (a->requires_grad) kernels::gemm_nt(M, N, K, out->grad.data(), b->data.data(), a->ensure_grad().data());
      if (b->requires_grad) kernels::gemm_tn(M, K, N, a->data.data(), out->grad.data(), b->ensure_grad().data());
    });
  }
  return out;
}

// [M,K] x [N,K]^T -> [M,N]; used for the tied output projection.
template <typename T>
TensorPtr<T> matmul_nt(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::require_2d(a, "matmul_nt");
  detail::require_2d(b, "matmul_nt");
  const std::size_t M = a->shape[0], K = a->shape[1], N = b->shape[0];
  if (b->shape[1] != K)
    throw ShapeError("matmul_nt: shape mismatch " + shape_str(a->shape) + " x " + shape_str(b->shape) + "^T");
  auto out = make_tensor<T>({M, N});
  kernels::gemm_nt(M, K, N, a->data.data(), b->data.data(), out->data.data());
  detail::check_finite(*out, "matmul_nt");
  if (detail::any_grad<T>({&a, &b})) {
    out->requires_grad = true;
    tape.record([a, b, out, M, K, N] {
      if (out->grad.empty()) return;
      if (a->requires_grad) kernels::gemm_nn(M, N, K, out->grad.data(), b->data.data(), a->ensure_grad().data());
      if (b->requires_grad) kernels::gemm_tn(M, N, K, out->grad.data(), a->data.data(), b->ensure_grad().data());
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::same_shape(a, b, "add");
  auto out = make_tensor<T>(a->shape);
  for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = a->data[i] + b->data[i];
  detail::check_finite(*out, "add");
  if (detail::any_grad<T>({&a, &b})) {
    out->requires_grad = true;
    tape.record([a, b, out] {
      if (out->grad.empty()) return;
      for (const auto* p : {&a, &b}) {
        if (!(*p)->requires_grad) continue;
        auto& g = (*p)->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i];
      }
    });
  }
  return out;
}

// [R,C] + [C] broadcast over rows.
template <typename T>
TensorPtr<T> add_bias(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& bias) {
  const std::size_t R = a->rows(), C = a->cols();
  if (bias->numel() != C)
    throw ShapeError("add_bias: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(bias->shape));
  auto out = make_tensor<T>(a->shape);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out->data[r * C + c] = a->data[r * C + c] + bias->data[c];
  detail::check_finite(*out, "add_bias");
  if (detail::any_grad<T>({&a, &bias})) {
    out->requires_grad = true;
    tape.record([a, bias, out, R, C] {
      if (out->grad.empty()) return;
      if (a->requires_grad) {
        auto& g = a->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i];
      }
      if (bias->requires_grad) {
        auto& g = bias->ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) g[c] += out->grad[r * C + c];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::same_shape(a, b, "mul");
  auto out = make_tensor<T>(a->shape);
  for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = a->data[i] * b->data[i];
  detail::check_finite(*out, "mul");
  if (detail::any_grad<T>({&a, &b})) {
    out->requires_grad = true;
    tape.record([a, b, out] {
      if (out->grad.empty()) return;
      if (a->requires_grad) {
        auto& g = a->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] * b->data[i];
      }
      if (b->requires_grad) {
        auto& g = b->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] * a->data[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> scale(Tape<T>& tape, const TensorPtr<T>& a, T s) {
  auto out = make_tensor<T>(a->shape);
  for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = a->data[i] * s;
  detail::check_finite(*out, "scale");
  if (detail::wants_grad(a)) {
    out->requires_grad = true;
    tape.record([a, out, s] {
      if (out->grad.empty()) return;
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] * s;
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> sum(Tape<T>& tape, const TensorPtr<T>& a) {
  T total = 0;
  for (T v : a->data) total += v;
  auto out = make_tensor<T>({1}, total);
  detail::check_finite(*out, "sum");
  if (detail::wants_grad(a)) {
    out->requires_grad = true;
    tape.record([a, out] {
      if (out->grad.empty()) return;
      auto& g = a->ensure_grad();
      for (auto& v : g) v += out->grad[0];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> gelu(Tape<T>& tape, const TensorPtr<T>& a) {
  auto out = make_tensor<T>(a->shape);
  for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = kernels::gelu(a->data[i]);
  detail::check_finite(*out, "gelu");
  if (detail::wants_grad(a)) {
    out->requires_grad = true;
    tape.record([a, out] {
      if (out->grad.empty()) return;
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] * kernels::gelu_grad(a->data[i]);
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> softmax_lastdim(Tape<T>& tape, const TensorPtr<T>& a) {
  const std::size_t R = a->rows(), C = a->cols();
  auto out = make_tensor<T>(a->shape);
  out->data = a->data;
  for (std::size_t r = 0; r < R; ++r) kernels::softmax_row(out->data.data() + r * C, C);
  detail::check_finite(*out, "softmax_lastdim");
  if (detail::wants_grad(a)) {
    out->requires_grad = true;
    tape.record([a, out, R, C] {
      if (out->grad.empty()) return;
      auto& g = a->ensure_grad();
      for (std::size_t r = 0; r < R; ++r) {
        const T* y = out->data.data() + r * C;
        const T* dy = out->grad.data() + r * C;
        T dot = 0;
        for (std::size_t c = 0; c < C; ++c) dot += y[c] * dy[c];
        for (std::size_t c = 0; c < C; ++c) g[r * C + c] += y[c] * (dy[c] - dot);
      }
    });
  }
  return out;
}

// Row-wise layer normalization followed by the affine gain/bias.
template <typename T>
TensorPtr<T> layernorm(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& gain, const TensorPtr<T>& bias,
                       T eps = T(1e-5)) {
  const std::size_t R = x->rows(), C = x->cols();
  if (gain->numel() != C || bias->numel() != C)
    throw ShapeError("layernorm: shape mismatch " + shape_str(x->shape) + " vs gain " + shape_str(gain->shape) +
                     " / bias " + shape_str(bias->shape));
  auto out = make_tensor<T>(x->shape);
  auto xhat = std::make_shared<std::vector<T>>(x->numel());
  auto rstd = std::make_shared<std::vector<T>>(R);
  for (std::size_t r = 0; r < R; ++r) {
    (*rstd)[r] = kernels::layernorm_row(x->data.data() + r * C, xhat->data() + r * C, C, eps);
    for (std::size_t c = 0; c < C; ++c)
      out->data[r * C + c] = (*xhat)[r * C + c] * gain->data[c] + bias->data[c];
  }
  detail::check_finite(*out, "layernorm");
  if (detail::any_grad<T>({&x, &gain, &bias})) {
    out->requires_grad = true;
    tape.record([x, gain, bias, out, xhat, rstd, R, C] {
      if (out->grad.empty()) return;
      const T* dy = out->grad.data();
      if (gain->requires_grad || bias->requires_grad) {
        auto& gg = gain->ensure_grad();
        auto& gb = bias->ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) {
            gg[c] += dy[r * C + c] * (*xhat)[r * C + c];
            gb[c] += dy[r * C + c];
          }
      }
      if (x->requires_grad) {
        auto& gx = x->ensure_grad();
        std::vector<T> dxhat(C);
        for (std::size_t r = 0; r < R; ++r) {
          T mean_d = 0, mean_dx = 0;
          for (std::size_t c = 0; c < C; ++c) {
            dxhat[c] = dy[r * C + c] * gain->data[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * (*xhat)[r * C + c];
          }
          mean_d /= T(C);
          mean_dx /= T(C);
          for (std::size_t c = 0; c < C; ++c)
            gx[r * C + c] += (*rstd)[r] * (dxhat[c] - mean_d - (*xhat)[r * C + c] * mean_dx);
        }
      }
    });
  }
  return out;
}

// Gathers rows of `table` [V,D] -> [ids.size(), D].
template <typename T>
TensorPtr<T> embed_lookup(Tape<T>& tape, const TensorPtr<T>& table, std::span<const std::int32_t> ids) {
  detail::require_2d(table, "embed_lookup");
  const std::size_t V = table->shape[0], D = table->shape[1];
  if (ids.empty()) throw ShapeError("embed_lookup: empty id list");
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      throw ShapeError("embed_lookup: id " + std::to_string(id) + " outside table " + shape_str(table->shape));
  auto out = make_tensor<T>({ids.size(), D});
  for (std::size_t n = 0; n < ids.size(); ++n)
    std::copy_n(table->data.data() + static_cast<std::size_t>(ids[n]) * D, D, out->data.data() + n * D);
  detail::check_finite(*out, "embed_lookup");
  if (detail::wants_grad(table)) {
    out->requires_grad = true;
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    tape.record([table, out, idv = std::move(idv), D] {
      if (out->grad.empty()) return;
      auto& g = table->ensure_grad();
      for (std::size_t n = 0; n < idv.size(); ++n) {
        T* dst = g.data() + static_cast<std::size_t>(idv[n]) * D;
        const T* src = out->grad.data() + n * D;
        for (std::size_t d = 0; d < D; ++d) dst[d] += src[d];
      }
    });
  }
  return out;
}

// Mean negative log-likelihood over rows with mask != 0. Targets at masked-out
// rows are never read. An all-zero mask yields loss 0 and no gradient.
template <typename T>
TensorPtr<T> cross_entropy_masked(Tape<T>& tape, const TensorPtr<T>& logits, std::span<const std::int32_t> targets,
                                  std::span<const std::uint8_t> mask) {
  const std::size_t R = logits->rows(), V = logits->cols();
  if (targets.size() != R || mask.size() != R)
    throw ShapeError("cross_entropy_masked: logits " + shape_str(logits->shape) + " vs targets [" +
                     std::to_string(targets.size()) + "] / mask [" + std::to_string(mask.size()) + "]");
  std::size_t count = 0;
  for (std::size_t r = 0; r < R; ++r)
    if (mask[r]) {
      if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= V)
        throw ShapeError("cross_entropy_masked: target " + std::to_string(targets[r]) + " outside vocab of " +
                         std::to_string(V));
      ++count;
    }
  auto probs = std::make_shared<std::vector<T>>();
  T total = 0;
  if (count > 0) {
    probs->resize(R * V);
    for (std::size_t r = 0; r < R; ++r) {
      if (!mask[r]) continue;
      T* p = probs->data() + r * V;
      std::copy_n(logits->data.data() + r * V, V, p);
      T mx = p[0];
      for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, p[v]);
      T z = 0;
      for (std::size_t v = 0; v < V; ++v) z += std::exp(p[v] - mx);
      const T lse = mx + std::log(z);
      total += lse - p[targets[r]];
      for (std::size_t v = 0; v < V; ++v) p[v] = std::exp(p[v] - lse);
    }
    total /= T(count);
  }
  auto out = make_tensor<T>({1}, total);
  detail::check_finite(*out, "cross_entropy_masked");
  if (detail::wants_grad(logits)) {
    out->requires_grad = true;
    std::vector<std::int32_t> tv(targets.begin(), targets.end());
    std::vector<std::uint8_t> mv(mask.begin(), mask.end());
    tape.record([logits, out, probs, tv = std::move(tv), mv = std::move(mv), count, R, V] {
      if (out->grad.empty() || count == 0) return;
      auto& g = logits->ensure_grad();
      const T s = out->grad[0] / T(count);
      for (std::size_t r = 0; r < R; ++r) {
        if (!mv[r]) continue;
        const T* p = probs->data() + r * V;
        T* gr = g.data() + r * V;
        for (std::size_t v = 0; v < V; ++v) gr[v] += s * p[v];
        gr[tv[r]] -= s;
      }
    });
  }
  return out;
}

// Multi-head causal self-attention over a packed [B*T, 3*D] projection laid
// out as [q | k | v] per row. Position t of sequence b attends to positions
// j <= t whose key_valid flag is set. Returns [B*T, D].
template <typename T>
TensorPtr<T> causal_attention(Tape<T>& tape, const TensorPtr<T>& qkv, std::size_t batch, std::size_t seq,
                              std::size_t heads, std::span<const std::uint8_t> key_valid) {
  detail::require_2d(qkv, "causal_attention");
  const std::size_t D3 = qkv->shape[1];
  if (qkv->shape[0] != batch * seq || D3 % 3 != 0 || (D3 / 3) % heads != 0)
    throw ShapeError("causal_attention: qkv " + shape_str(qkv->shape) + " incompatible with batch " +
                     std::to_string(batch) + ", seq " + std::to_string(seq) + ", heads " + std::to_string(heads));
  if (key_valid.size() != batch * seq)
    throw ShapeError("causal_attention: key mask length " + std::to_string(key_valid.size()) + " vs " +
                     std::to_string(batch * seq));
  const std::size_t D = D3 / 3, dh = D / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  auto out = make_tensor<T>({batch * seq, D});
  // probs[((b*H + h)*T + t)*T + j]
  auto probs = std::make_shared<std::vector<T>>(batch * heads * seq * seq, T(0));
  const T* X = qkv->data.data();
  std::vector<T> row(seq);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < seq; ++t) {
        const T* q = X + (b * seq + t) * D3 + h * dh;
        T* p = probs->data() + ((b * heads + h) * seq + t) * seq;
        T mx = -std::numeric_limits<T>::infinity();
        bool any = false;
        for (std::size_t j = 0; j <= t; ++j) {
          if (!key_valid[b * seq + j]) continue;
          const T* k = X + (b * seq + j) * D3 + D + h * dh;
          T s = 0;
          for (std::size_t d = 0; d < dh; ++d) s += q[d] * k[d];
          row[j] = s * sc;
          mx = any ? std::max(mx, row[j]) : row[j];
          any = true;
        }
        if (!any) continue;
        T z = 0;
        for (std::size_t j = 0; j <= t; ++j) {
          if (!key_valid[b * seq + j]) continue;
          p[j] = std::exp(row[j] - mx);
          z += p[j];
        }
        T* o = out->data.data() + (b * seq + t) * D + h * dh;
        for (std::size_t j = 0; j <= t; ++j) {
          if (!key_valid[b * seq + j]) continue;
          p[j] /= z;
          const T* v = X + (b * seq + j) * D3 + 2 * D + h * dh;
          for (std::size_t d = 0; d < dh; ++d) o[d] += p[j] * v[d];
        }
      }
  detail::check_finite(*out, "causal_attention");
  if (detail::wants_grad(qkv)) {
    out->requires_grad = true;
    std::vector<std::uint8_t> kv(key_valid.begin(), key_valid.end());
    tape.record([qkv, out, probs, kv = std::move(kv), batch, seq, heads, D, dh, sc] {
      if (out->grad.empty()) return;
      const std::size_t D3 = 3 * D;
      const T* X = qkv->data.data();
      T* G = qkv->ensure_grad().data();
      std::vector<T> dp(seq);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t t = 0; t < seq; ++t) {
            const T* p = probs->data() + ((b * heads + h) * seq + t) * seq;
            const T* go = out->grad.data() + (b * seq + t) * D + h * dh;
            T dot = 0;
            for (std::size_t j = 0; j <= t; ++j) {
              if (!kv[b * seq + j]) continue;
              const T* v = X + (b * seq + j) * D3 + 2 * D + h * dh;
              T* gv = G + (b * seq + j) * D3 + 2 * D + h * dh;
              T s = 0;
              for (std::size_t d = 0; d < dh; ++d) {
                s += go[d] * v[d];
                gv[d] += p[j] * go[d];
              }
              dp[j] = s;
              dot += p[j] * s;
            }
            const T* q = X + (b * seq + t) * D3 + h * dh;
            T* gq = G + (b * seq + t) * D3 + h * dh;
            for (std::size_t j = 0; j <= t; ++j) {
              if (!kv[b * seq + j]) continue;
              const T ds = p[j] * (dp[j] - dot) * sc;
              const T* k = X + (b * seq + j) * D3 + D + h * dh;
              T* gk = G + (b * seq + j) * D3 + D + h * dh;
              for (std::size_t d = 0; d < dh; ++d) {
                gq[d] += ds * k[d];
                gk[d] += ds * q[d];
              }
            }
          }
    });
  }
  return out;
}

// Inverted dropout; identity when p == 0.
template <typename T, typename Rng>
TensorPtr<T> dropout(Tape<T>& tape, const TensorPtr<T>& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw InvalidArgument("dropout probability must be < 1");
  auto keep = std::make_shared<std::vector<std::uint8_t>>(a->numel());
  const T s = T(1.0 / (1.0 - p));
  auto out = make_tensor<T>(a->shape);
  for (std::size_t i = 0; i < a->numel(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    (*keep)[i] = u >= p;
    out->data[i] = (*keep)[i] ? a->data[i] * s : T(0);
  }
  if (detail::wants_grad(a)) {
    out->requires_grad = true;
    tape.record([a, out, keep, s] {
      if (out->grad.empty()) return;
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if ((*keep)[i]) g[i] += out->grad[i] * s;
    });
  }
  return out;
}

inline NoGradGuard::NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
inline NoGradGuard::~NoGradGuard() { detail::grad_mode() = previous_; }

}  // namespace scgpt::ag
