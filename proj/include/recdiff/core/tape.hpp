#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "recdiff/core/array.hpp"
#include "recdiff/core/errors.hpp"

namespace recdiff {

// Define-by-run reverse-mode tape over dense arrays. The graph is rebuilt on
// every forward pass; node creation order is a topological order, so the
// backward sweep is a reverse scan. With recording=false the same code path
// runs forward-only (no closures), which is the inference fast path.
template <class T>
class Tape {
 public:
  struct V {
    int id = -1;
  };

  bool recording = true;

  void reset() { nodes_.clear(); }
  int size() const { return static_cast<int>(nodes_.size()); }

  const Arr<T>& val(V v) const { return nodes_[static_cast<size_t>(v.id)].val; }
  const Arr<T>& grad(V v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

  V constant(Arr<T> a) { return push(std::move(a), nullptr); }
  V variable(Arr<T> a) { return push(std::move(a), nullptr); }

  V add(V a, V b) {
    check_same(a, b, "add");
    Arr<T> y = val(a);
    const auto& bv = val(b);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += bv.data[i];
    return push(std::move(y), [this, a, b](const Arr<T>& dy) {
      axpy(a, dy, T(1));
      axpy(b, dy, T(1));
    });
  }

  V sub(V a, V b) {
    check_same(a, b, "sub");
    Arr<T> y = val(a);
    const auto& bv = val(b);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] -= bv.data[i];
    return push(std::move(y), [this, a, b](const Arr<T>& dy) {
      axpy(a, dy, T(1));
      axpy(b, dy, T(-1));
    });
  }

  V mul(V a, V b) {
    check_same(a, b, "mul");
    Arr<T> y = val(a);
    const auto& bv = val(b);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= bv.data[i];
    return push(std::move(y), [this, a, b](const Arr<T>& dy) {
      auto& ga = gradref(a);
      auto& gb = gradref(b);
      const auto& av = val(a);
      const auto& bv2 = val(b);
      for (size_t i = 0; i < dy.data.size(); ++i) {
        ga.data[i] += dy.data[i] * bv2.data[i];
        gb.data[i] += dy.data[i] * av.data[i];
      }
    });
  }

  V scale(V a, T c) {
    Arr<T> y = val(a);
    for (auto& x : y.data) x *= c;
    return push(std::move(y), [this, a, c](const Arr<T>& dy) { axpy(a, dy, c); });
  }

  // y = x (*) mask, mask a captured constant of identical shape.
  V mul_mask(V a, Arr<T> mask) {
    if (val(a).shape != mask.shape) throw DimensionError("mul_mask shape");
    Arr<T> y = val(a);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= mask.data[i];
    auto m = std::make_shared<Arr<T>>(std::move(mask));
    return push(std::move(y), [this, a, m](const Arr<T>& dy) {
      auto& ga = gradref(a);
      for (size_t i = 0; i < dy.data.size(); ++i) ga.data[i] += dy.data[i] * m->data[i];
    });
  }

  V matmul(V a, V b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
      throw DimensionError("matmul inner dims");
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Arr<T> y = Arr<T>::zeros({m, n});
    matmul_kernel(av.data.data(), bv.data.data(), y.data.data(), m, k, n);
    return push(std::move(y), [this, a, b, m, k, n](const Arr<T>& dy) {
      const auto& av2 = val(a);
      const auto& bv2 = val(b);
      auto& ga = gradref(a);
      auto& gb = gradref(b);
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = static_cast<double>(ga.data[static_cast<size_t>(i) * k + p]);
          for (int j = 0; j < n; ++j)
            acc += static_cast<double>(dy.data[static_cast<size_t>(i) * n + j]) *
                   static_cast<double>(bv2.data[static_cast<size_t>(p) * n + j]);
          ga.data[static_cast<size_t>(i) * k + p] = static_cast<T>(acc);
        }
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double acc = static_cast<double>(gb.data[static_cast<size_t>(p) * n + j]);
          for (int i = 0; i < m; ++i)
            acc += static_cast<double>(av2.data[static_cast<size_t>(i) * k + p]) *
                   static_cast<double>(dy.data[static_cast<size_t>(i) * n + j]);
          gb.data[static_cast<size_t>(p) * n + j] = static_cast<T>(acc);
        }
    });
  }

  // x[Cin x L], w[Cout x Cin x K] with K odd, zero padding, length preserved.
  V conv1d(V x, V w) {
    const auto& xv = val(x);
    const auto& wv = val(w);
    if (xv.rank() != 2 || wv.rank() != 3 || wv.dim(1) != xv.dim(0))
      throw DimensionError("conv1d shapes");
    const int K = wv.dim(2);
    if (K % 2 == 0) throw ParameterError("conv1d kernel size must be odd");
    const int cin = xv.dim(0), L = xv.dim(1), cout = wv.dim(0);
    Arr<T> y = Arr<T>::zeros({cout, L});
    conv1d_kernel(xv.data.data(), wv.data.data(), y.data.data(), cin, cout, L, K);
    return push(std::move(y), [this, x, w, cin, cout, L, K](const Arr<T>& dy) {
      const int P = (K - 1) / 2;
      const auto& xv2 = val(x);
      const auto& wv2 = val(w);
      auto& gx = gradref(x);
      auto& gw = gradref(w);
      for (int ci = 0; ci < cin; ++ci)
        for (int t = 0; t < L; ++t) {
          double acc = static_cast<double>(gx.data[static_cast<size_t>(ci) * L + t]);
          for (int co = 0; co < cout; ++co) {
            const T* wr = wv2.data.data() + (static_cast<size_t>(co) * cin + ci) * K;
            for (int j = 0; j < K; ++j) {
              const int l = t + P - j;
              if (l >= 0 && l < L)
                acc += static_cast<double>(wr[j]) *
                       static_cast<double>(dy.data[static_cast<size_t>(co) * L + l]);
            }
          }
          gx.data[static_cast<size_t>(ci) * L + t] = static_cast<T>(acc);
        }
      for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
          for (int j = 0; j < K; ++j) {
            double acc = 0.0;
            for (int l = 0; l < L; ++l) {
              const int t = l + j - P;
              if (t >= 0 && t < L)
                acc += static_cast<double>(dy.data[static_cast<size_t>(co) * L + l]) *
                       static_cast<double>(xv2.data[static_cast<size_t>(ci) * L + t]);
            }
            gw.data[(static_cast<size_t>(co) * cin + ci) * K + j] += static_cast<T>(acc);
          }
    });
  }

  // x[C x L] + v[C] broadcast across columns.
  V add_colvec(V x, V v) {
    const auto& xv = val(x);
    const auto& vv = val(v);
    if (xv.rank() != 2 || vv.numel() != xv.dim(0)) throw DimensionError("add_colvec");
    const int C = xv.dim(0), L = xv.dim(1);
    Arr<T> y = xv;
    for (int c = 0; c < C; ++c)
      for (int l = 0; l < L; ++l) y.data[static_cast<size_t>(c) * L + l] += vv.data[static_cast<size_t>(c)];
    return push(std::move(y), [this, x, v, C, L](const Arr<T>& dy) {
      axpy(x, dy, T(1));
      auto& gv = gradref(v);
      for (int c = 0; c < C; ++c) {
        double acc = static_cast<double>(gv.data[static_cast<size_t>(c)]);
        for (int l = 0; l < L; ++l) acc += static_cast<double>(dy.data[static_cast<size_t>(c) * L + l]);
        gv.data[static_cast<size_t>(c)] = static_cast<T>(acc);
      }
    });
  }

  // x[B x N] + v[N] broadcast across rows.
  V add_rowvec(V x, V v) {
    const auto& xv = val(x);
    const auto& vv = val(v);
    if (xv.rank() != 2 || vv.numel() != xv.dim(1)) throw DimensionError("add_rowvec");
    const int B = xv.dim(0), N = xv.dim(1);
    Arr<T> y = xv;
    for (int b = 0; b < B; ++b)
      for (int j = 0; j < N; ++j) y.data[static_cast<size_t>(b) * N + j] += vv.data[static_cast<size_t>(j)];
    return push(std::move(y), [this, x, v, B, N](const Arr<T>& dy) {
      axpy(x, dy, T(1));
      auto& gv = gradref(v);
      for (int j = 0; j < N; ++j) {
        double acc = static_cast<double>(gv.data[static_cast<size_t>(j)]);
        for (int b = 0; b < B; ++b) acc += static_cast<double>(dy.data[static_cast<size_t>(b) * N + j]);
        gv.data[static_cast<size_t>(j)] = static_cast<T>(acc);
      }
    });
  }

  V silu(V a) {
    Arr<T> y = val(a);
    for (auto& x : y.data) {
      const double xd = static_cast<double>(x);
      x = static_cast<T>(xd / (1.0 + std::exp(-xd)));
    }
    return push(std::move(y), [this, a](const Arr<T>& dy) {
      const auto& av = val(a);
      auto& ga = gradref(a);
      for (size_t i = 0; i < dy.data.size(); ++i) {
        const double xd = static_cast<double>(av.data[i]);
        const double s = 1.0 / (1.0 + std::exp(-xd));
        ga.data[i] += dy.data[i] * static_cast<T>(s * (1.0 + xd * (1.0 - s)));
      }
    });
  }

  // [C x L] -> [C x L/2], mean of adjacent column pairs; L must be even.
  V avgpool2(V a) {
    const auto& av = val(a);
    if (av.rank() != 2 || av.dim(1) % 2 != 0) throw DimensionError("avgpool2 needs even length");
    const int C = av.dim(0), L = av.dim(1), Lh = L / 2;
    Arr<T> y = Arr<T>::zeros({C, Lh});
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < Lh; ++i)
        y(c, i) = static_cast<T>(0.5) * (av(c, 2 * i) + av(c, 2 * i + 1));
    return push(std::move(y), [this, a, C, Lh](const Arr<T>& dy) {
      auto& ga = gradref(a);
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < Lh; ++i) {
          const T g = dy(c, i) * static_cast<T>(0.5);
          ga(c, 2 * i) += g;
          ga(c, 2 * i + 1) += g;
        }
    });
  }

  // [C x L] -> [C x 2L], nearest-neighbor repeat.
  V upsample2(V a) {
    const auto& av = val(a);
    if (av.rank() != 2) throw DimensionError("upsample2 rank");
    const int C = av.dim(0), L = av.dim(1);
    Arr<T> y = Arr<T>::zeros({C, 2 * L});
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < L; ++i) {
        y(c, 2 * i) = av(c, i);
        y(c, 2 * i + 1) = av(c, i);
      }
    return push(std::move(y), [this, a, C, L](const Arr<T>& dy) {
      auto& ga = gradref(a);
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < L; ++i) ga(c, i) += dy(c, 2 * i) + dy(c, 2 * i + 1);
    });
  }

  // Channel concatenation: [C1 x L], [C2 x L] -> [(C1+C2) x L].
  V concat_rows(V a, V b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1))
      throw DimensionError("concat_rows lengths");
    const int C1 = av.dim(0), C2 = bv.dim(0), L = av.dim(1);
    Arr<T> y = Arr<T>::zeros({C1 + C2, L});
    std::copy(av.data.begin(), av.data.end(), y.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), y.data.begin() + static_cast<long>(C1) * L);
    return push(std::move(y), [this, a, b, C1, C2, L](const Arr<T>& dy) {
      auto& ga = gradref(a);
      auto& gb = gradref(b);
      for (int i = 0; i < C1 * L; ++i) ga.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(i)];
      for (int i = 0; i < C2 * L; ++i)
        gb.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(C1) * L + i];
    });
  }

  // 1-D concatenation.
  V concat1d(V a, V b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    const int n1 = static_cast<int>(av.numel()), n2 = static_cast<int>(bv.numel());
    Arr<T> y = Arr<T>::zeros({n1 + n2});
    std::copy(av.data.begin(), av.data.end(), y.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), y.data.begin() + n1);
    return push(std::move(y), [this, a, b, n1, n2](const Arr<T>& dy) {
      auto& ga = gradref(a);
      auto& gb = gradref(b);
      for (int i = 0; i < n1; ++i) ga.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(i)];
      for (int i = 0; i < n2; ++i) gb.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(n1 + i)];
    });
  }

  // [C x L] -> [C], mean over columns.
  V mean_cols(V a) {
    const auto& av = val(a);
    if (av.rank() != 2) throw DimensionError("mean_cols rank");
    const int C = av.dim(0), L = av.dim(1);
    Arr<T> y = Arr<T>::zeros({C});
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int l = 0; l < L; ++l) acc += static_cast<double>(av(c, l));
      y(c) = static_cast<T>(acc / L);
    }
    return push(std::move(y), [this, a, C, L](const Arr<T>& dy) {
      auto& ga = gradref(a);
      const T inv = static_cast<T>(1.0 / L);
      for (int c = 0; c < C; ++c)
        for (int l = 0; l < L; ++l) ga(c, l) += dy(c) * inv;
    });
  }

  // Scalar sum of squares (double accumulation).
  V sum_sq(V a) {
    const auto& av = val(a);
    double acc = 0.0;
    for (T x : av.data) acc += static_cast<double>(x) * static_cast<double>(x);
    Arr<T> y = Arr<T>::zeros({1});
    y(0) = static_cast<T>(acc);
    return push(std::move(y), [this, a](const Arr<T>& dy) {
      const auto& av2 = val(a);
      auto& ga = gradref(a);
      const T g = dy(0);
      for (size_t i = 0; i < av2.data.size(); ++i)
        ga.data[i] += static_cast<T>(2) * g * av2.data[i];
    });
  }

  // Same data, new shape (numel preserved).
  V reshape(V a, std::vector<int> shape) {
    Arr<T> y;
    y.shape = std::move(shape);
    y.data = val(a).data;
    if (y.numel() != val(a).numel()) throw DimensionError("reshape numel mismatch");
    return push(std::move(y), [this, a](const Arr<T>& dy) {
      auto& ga = gradref(a);
      for (size_t i = 0; i < dy.data.size(); ++i) ga.data[i] += dy.data[i];
    });
  }

  V sum(V a) {
    const auto& av = val(a);
    double acc = 0.0;
    for (T x : av.data) acc += static_cast<double>(x);
    Arr<T> y = Arr<T>::zeros({1});
    y(0) = static_cast<T>(acc);
    return push(std::move(y), [this, a](const Arr<T>& dy) {
      auto& ga = gradref(a);
      for (auto& g : ga.data) g += dy(0);
    });
  }

  // Reverse sweep from a scalar loss. Grad arrays are (re)allocated here.
  void backward(V loss) {
    if (!recording) throw ContractError("backward on a non-recording tape");
    if (val(loss).numel() != 1) throw ContractError("backward requires a scalar loss");
    for (auto& n : nodes_) {
      n.grad = Arr<T>::zeros(n.val.shape);
    }
    nodes_[static_cast<size_t>(loss.id)].grad(0) = T(1);
    for (int i = loss.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<size_t>(i)];
      if (n.back) n.back(n.grad);
    }
  }

 private:
  struct Node {
    Arr<T> val;
    Arr<T> grad;
    std::function<void(const Arr<T>&)> back;
  };
  std::vector<Node> nodes_;

  V push(Arr<T> v, std::function<void(const Arr<T>&)> back) {
    Node n;
    n.val = std::move(v);
    if (recording) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return V{static_cast<int>(nodes_.size()) - 1};
  }

  Arr<T>& gradref(V v) { return nodes_[static_cast<size_t>(v.id)].grad; }

  void axpy(V v, const Arr<T>& dy, T c) {
    auto& g = gradref(v);
    for (size_t i = 0; i < dy.data.size(); ++i) g.data[i] += c * dy.data[i];
  }

  void check_same(V a, V b, const char* op) {
    if (!val(a).same_shape(val(b))) throw DimensionError(std::string(op) + " shape mismatch");
  }
};

}  // namespace recdiff
