#pragma once

#include <map>
#include <string>
#include <vector>

#include "toat/evaluation.hpp"
#include "toat/model.hpp"

namespace toat {

// Adaptive moments with decoupled weight decay: the decay multiplies the
// parameter directly and never enters the moment estimates.
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  long long t = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments;  // first/second

  void step(ParamStore& params, const std::map<std::string, Tensor>& grads);
};

// Owns one optimization trajectory: parameters, optimizer moments, and the
// run RNG (shuffle + dropout draws in program order). Restoring from a
// checkpoint continues the trajectory bit-for-bit.
class Trainer {
 public:
  explicit Trainer(Model model);
  explicit Trainer(const Checkpoint& checkpoint);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  int epoch() const { return epoch_; }

  // single gradient step on one sample; returns the loss
  double train_step(const EncodedSample& sample);
  // one shuffled pass over the training set honoring batch_size; returns mean loss
  double train_epoch(const std::vector<EncodedSample>& samples);

  Checkpoint make_checkpoint() const;

 private:
  double forward_backward(const EncodedSample& sample, std::map<std::string, Tensor>& grad_sums);
  void apply_step(std::map<std::string, Tensor>& grad_sums, std::size_t batch);

  Model model_;
  AdamW opt_;
  Rng rng_;
  int epoch_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  Metrics validation;
};

struct TrainResult {
  Checkpoint best;  // parameters at the best-validation-F1 epoch (ties keep the earlier one)
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

TrainResult train(Model model, const std::vector<EncodedSample>& train_set,
                  const std::vector<EncodedSample>& validation_set);

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

}  // namespace toat
