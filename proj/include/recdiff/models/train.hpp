#pragma once

#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"

namespace recdiff {

struct FitConfig {
  int epochs = 40;
  int batch = 32;
  int log_every = 0;  // epochs between loss callbacks; 0 = never

  void validate() const {
    if (epochs < 1) throw ParameterError("training needs epochs >= 1");
    if (batch < 1) throw ParameterError("training needs batch >= 1");
  }
};

struct FitResult {
  std::vector<float> epoch_loss;  // mean step loss per epoch
  float final_loss = 0.0f;
};

// Epoch loop over normalized flat vectors (mode channels already appended for
// joint models): shuffle, batch, one optimizer step per batch. The optional
// callback sees (epoch, mean loss) every log_every epochs.
template <class M, class Log = void (*)(int, float)>
FitResult fit_model(M& model, const std::vector<std::vector<float>>& corpus,
                    const FitConfig& fc, Rng& rng,
                    Log log = [](int, float) {}) {
  fc.validate();
  if (corpus.empty()) throw ParameterError("training needs a nonempty corpus");

  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  FitResult out;
  for (int e = 0; e < fc.epochs; ++e) {
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int>(i)));
      std::swap(order[i - 1], order[j]);
    }
    double sum = 0.0;
    int steps = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(fc.batch)) {
      std::vector<const std::vector<float>*> batch;
      const size_t end = std::min(at + static_cast<size_t>(fc.batch), order.size());
      for (size_t i = at; i < end; ++i) batch.push_back(&corpus[order[i]]);
      sum += model.train_step(batch, rng);
      ++steps;
    }
    out.epoch_loss.push_back(static_cast<float>(sum / steps));
    if (fc.log_every > 0 && (e + 1) % fc.log_every == 0) log(e + 1, out.epoch_loss.back());
  }
  out.final_loss = out.epoch_loss.back();
  return out;
}

}  // namespace recdiff
