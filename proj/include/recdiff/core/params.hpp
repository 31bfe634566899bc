#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "recdiff/core/array.hpp"
#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/core/tape.hpp"

namespace recdiff {

// Named parameter arrays with a flat concatenated view. Entry order is
// creation order; the flat layout is the concatenation in that order.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Arr<T> value;
    Arr<T> grad;
  };

  Arr<T>& add(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw ParameterError("duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, Arr<T>::zeros(shape), Arr<T>::zeros(shape)});
    return entries_.back().value;
  }

  Arr<T>& operator[](const std::string& name) { return entry(name).value; }
  const Arr<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParameterError("unknown parameter " + name);
    return entries_[it->second].value;
  }
  Arr<T>& grad(const std::string& name) { return entry(name).grad; }

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  size_t count() const { return entries_.size(); }
  Entry& entry_at(size_t i) { return entries_[i]; }
  const Entry& entry_at(size_t i) const { return entries_[i]; }

  long long total() const {
    long long n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  std::vector<T> flat() const {
    std::vector<T> out;
    out.reserve(static_cast<size_t>(total()));
    for (const auto& e : entries_) out.insert(out.end(), e.value.data.begin(), e.value.data.end());
    return out;
  }

  void set_flat(const std::vector<T>& flat) {
    if (static_cast<long long>(flat.size()) != total())
      throw DimensionError("flat parameter vector length mismatch");
    size_t off = 0;
    for (auto& e : entries_) {
      std::copy(flat.begin() + static_cast<long>(off),
                flat.begin() + static_cast<long>(off + e.value.data.size()),
                e.value.data.begin());
      off += e.value.data.size();
    }
  }

  void zero_grad() {
    for (auto& e : entries_)
      for (auto& g : e.grad.data) g = T(0);
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.shape) = e.value.template cast<U>();
    return out;
  }

  // Registers every entry as a tape variable; returns handles by entry index.
  // After tape.backward, pull_grads accumulates tape gradients back here.
  std::vector<typename Tape<T>::V> attach(Tape<T>& tape) const {
    std::vector<typename Tape<T>::V> vs;
    vs.reserve(entries_.size());
    for (const auto& e : entries_) vs.push_back(tape.variable(e.value));
    return vs;
  }

  void pull_grads(const Tape<T>& tape, const std::vector<typename Tape<T>::V>& vs) {
    for (size_t i = 0; i < entries_.size(); ++i) {
      const auto& g = tape.grad(vs[i]);
      for (size_t j = 0; j < entries_[i].grad.data.size(); ++j)
        entries_[i].grad.data[j] += g.data[j];
    }
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;

  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParameterError("unknown parameter " + name);
    return entries_[it->second];
  }
};

// Fan-in scaled uniform init for dense and conv weights.
template <class T>
void init_uniform(Arr<T>& w, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  for (auto& x : w.data) x = static_cast<T>(rng.uniform(-bound, bound));
}

// Adam with bias correction; slot buffers keyed by entry order.
template <class T>
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  double lr() const { return lr_; }

  void step(ParamStore<T>& ps) {
    if (m_.empty()) {
      for (size_t i = 0; i < ps.count(); ++i) {
        m_.push_back(Arr<double>::zeros(ps.entry_at(i).value.shape));
        v_.push_back(Arr<double>::zeros(ps.entry_at(i).value.shape));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (size_t i = 0; i < ps.count(); ++i) {
      auto& e = ps.entry_at(i);
      for (size_t j = 0; j < e.value.data.size(); ++j) {
        const double g = static_cast<double>(e.grad.data[j]);
        m_[i].data[j] = b1_ * m_[i].data[j] + (1.0 - b1_) * g;
        v_[i].data[j] = b2_ * v_[i].data[j] + (1.0 - b2_) * g * g;
        const double mh = m_[i].data[j] / c1;
        const double vh = v_[i].data[j] / c2;
        e.value.data[j] -= static_cast<T>(lr_ * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Arr<double>> m_, v_;
};

}  // namespace recdiff
