#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "recdiff/core/errors.hpp"

namespace recdiff {

// Dense row-major array. Rank is dynamic but in practice 1..3.
// Invariant: numel() == data.size() after every operation.
template <class T>
struct Arr {
  std::vector<int> shape;
  std::vector<T> data;

  Arr() = default;
  Arr(std::initializer_list<int> s, std::vector<T> d) : shape(s), data(std::move(d)) {
    if (numel() != static_cast<long long>(data.size()))
      throw DimensionError("init list size does not match shape");
  }

  static Arr zeros(std::vector<int> s) {
    Arr a;
    a.shape = std::move(s);
    a.data.assign(static_cast<size_t>(a.numel()), T(0));
    return a;
  }
  static Arr full(std::vector<int> s, T v) {
    Arr a = zeros(std::move(s));
    for (auto& x : a.data) x = v;
    return a;
  }

  long long numel() const {
    long long n = 1;
    for (int d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  T& operator()(int i) { return data[static_cast<size_t>(i)]; }
  T operator()(int i) const { return data[static_cast<size_t>(i)]; }
  T& operator()(int i, int j) { return data[static_cast<size_t>(i) * dim(1) + j]; }
  T operator()(int i, int j) const { return data[static_cast<size_t>(i) * dim(1) + j]; }
  T& operator()(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  T operator()(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
  }

  bool same_shape(const Arr& o) const { return shape == o.shape; }

  template <class U>
  Arr<U> cast() const {
    Arr<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using Array = Arr<float>;

// ---- raw kernels (shared by the tape's forward and backward passes) ----

// c[m x n] = a[m x k] * b[k x n]; accumulation in double for reproducible accuracy.
template <class T>
void matmul_kernel(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p)
        acc += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
      c[i * n + j] = static_cast<T>(acc);
    }
}

// c += a * b (same layout as matmul_kernel).
template <class T>
void matmul_acc_kernel(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = static_cast<double>(c[i * n + j]);
      for (int p = 0; p < k; ++p)
        acc += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
      c[i * n + j] = static_cast<T>(acc);
    }
}

// Cross-correlation with zero padding, length preserved.
// x[ci][l], w[co][ci][j], y[co][l]; K odd, offset P=(K-1)/2.
template <class T>
void conv1d_kernel(const T* x, const T* w, T* y, int cin, int cout, int L, int K) {
  const int P = (K - 1) / 2;
  for (int co = 0; co < cout; ++co)
    for (int l = 0; l < L; ++l) {
      double acc = 0.0;
      for (int ci = 0; ci < cin; ++ci) {
        const T* xr = x + ci * L;
        const T* wr = w + (co * cin + ci) * K;
        const int j0 = std::max(0, P - l);
        const int j1 = std::min(K, L + P - l);
        for (int j = j0; j < j1; ++j)
          acc += static_cast<double>(wr[j]) * static_cast<double>(xr[l + j - P]);
      }
      y[co * L + l] = static_cast<T>(acc);
    }
}

}  // namespace recdiff
