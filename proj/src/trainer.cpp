#include "toat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "toat/errors.hpp"

namespace toat {

void AdamW::step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (const auto& [name, grad] : grads) {
    Param& param = params.at(name);
    if (!param.trainable)
      throw std::logic_error("AdamW: gradient supplied for frozen parameter '" + name + "'");
    if (!param.value.same_shape(grad))
      throw std::logic_error("AdamW: gradient shape " + grad.shape_str() + " does not match parameter '" +
                             name + "' " + param.value.shape_str());
    auto it = moments.find(name);
    if (it == moments.end()) {
      it = moments
               .emplace(name, std::make_pair(Tensor::zeros(param.value.shape()),
                                             Tensor::zeros(param.value.shape())))
               .first;
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    double* p = param.value.data();
    const double* g = grad.data();
    for (std::size_t i = 0; i < param.value.numel(); ++i) {
      m.at(i) = beta1 * m.at(i) + (1.0 - beta1) * g[i];
      v.at(i) = beta2 * v.at(i) + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m.at(i) / bc1;
      const double v_hat = v.at(i) / bc2;
      p[i] *= 1.0 - lr * weight_decay;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

Trainer::Trainer(Model model)
    : model_(std::move(model)), rng_(model_.train.seed, /*stream=*/2) {
  opt_.lr = model_.train.learning_rate;
  opt_.beta1 = model_.train.beta1;
  opt_.beta2 = model_.train.beta2;
  opt_.eps = model_.train.adam_eps;
  opt_.weight_decay = model_.train.weight_decay;
}

Trainer::Trainer(const Checkpoint& checkpoint) : model_(checkpoint.model), rng_(0) {
  opt_.lr = model_.train.learning_rate;
  opt_.beta1 = model_.train.beta1;
  opt_.beta2 = model_.train.beta2;
  opt_.eps = model_.train.adam_eps;
  opt_.weight_decay = model_.train.weight_decay;
  opt_.t = checkpoint.adam_t;
  opt_.moments = checkpoint.moments;
  rng_.set_state(checkpoint.rng_state);
  epoch_ = checkpoint.epoch;
}

double Trainer::forward_backward(const EncodedSample& sample, std::map<std::string, Tensor>& grad_sums) {
  ad::Tape tape;
  ParamBinder binder(tape, model_.params);
  ForwardNodes nodes = model_forward(binder, model_, sample, RunMode::Train, &rng_);
  ad::NodeId loss = tape.cross_entropy(nodes.logits, sample.label);
  const double loss_value = tape.value(loss).at(0);
  if (!std::isfinite(loss_value)) {
    double total_sq = 0.0, largest = -1.0;
    std::string largest_name;
    for (const auto& [name, param] : model_.params.entries()) {
      double sq = 0.0;
      for (std::size_t i = 0; i < param.value.numel(); ++i) sq += param.value.at(i) * param.value.at(i);
      total_sq += sq;
      if (sq > largest) {
        largest = sq;
        largest_name = name;
      }
    }
    throw TrainError("train: non-finite loss at epoch " + std::to_string(epoch_ + 1) + ", sample '" +
                     sample.participant_id + "' (total param L2 " + std::to_string(std::sqrt(total_sq)) +
                     ", largest '" + largest_name + "' " + std::to_string(std::sqrt(std::max(0.0, largest))) +
                     ")");
  }
  tape.backward(loss);
  for (const auto& [name, node] : binder.bound()) {
    if (!model_.params.at(name).trainable) continue;
    const Tensor& g = tape.grad(node);
    auto it = grad_sums.find(name);
    if (it == grad_sums.end()) {
      grad_sums.emplace(name, g);
    } else {
      for (std::size_t i = 0; i < g.numel(); ++i) it->second.at(i) += g.at(i);
    }
  }
  return loss_value;
}

void Trainer::apply_step(std::map<std::string, Tensor>& grad_sums, std::size_t batch) {
  if (grad_sums.empty() || batch == 0) return;
  if (batch > 1) {
    const double inv = 1.0 / static_cast<double>(batch);
    for (auto& [name, g] : grad_sums)
      for (std::size_t i = 0; i < g.numel(); ++i) g.at(i) *= inv;
  }
  opt_.step(model_.params, grad_sums);
  grad_sums.clear();
}

double Trainer::train_step(const EncodedSample& sample) {
  std::map<std::string, Tensor> grads;
  const double loss = forward_backward(sample, grads);
  apply_step(grads, 1);
  return loss;
}

double Trainer::train_epoch(const std::vector<EncodedSample>& samples) {
  if (samples.empty()) throw InputError("train_epoch: empty training set");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng_.shuffle(order);
  const auto batch_size = static_cast<std::size_t>(std::max(1, model_.train.batch_size));
  double loss_sum = 0.0;
  std::map<std::string, Tensor> grad_sums;
  std::size_t in_batch = 0;
  for (std::size_t idx : order) {
    loss_sum += forward_backward(samples[idx], grad_sums);
    if (++in_batch == batch_size) {
      apply_step(grad_sums, in_batch);
      in_batch = 0;
    }
  }
  apply_step(grad_sums, in_batch);
  ++epoch_;
  return loss_sum / static_cast<double>(samples.size());
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ckpt;
  ckpt.model = model_;
  ckpt.adam_t = opt_.t;
  ckpt.moments = opt_.moments;
  ckpt.rng_state = rng_.state();
  ckpt.epoch = epoch_;
  return ckpt;
}

TrainResult train(Model model, const std::vector<EncodedSample>& train_set,
                  const std::vector<EncodedSample>& validation_set) {
  Trainer trainer(std::move(model));
  TrainResult result;
  double best_f1 = -1.0;
  for (int e = 0; e < trainer.model().train.epochs; ++e) {
    EpochRecord record;
    record.train_loss = trainer.train_epoch(train_set);
    record.epoch = trainer.epoch();
    const EvalOutcome val = evaluate(trainer.model(), validation_set);
    record.validation = val.metrics;
    result.history.push_back(record);
    if (val.metrics.f1 > best_f1) {  // strict: ties keep the earlier epoch
      best_f1 = val.metrics.f1;
      result.best = trainer.make_checkpoint();
      result.best.best_epoch = trainer.epoch();
      result.best.best_val_f1 = val.metrics.f1;
      result.best_epoch = trainer.epoch();
    }
  }
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream f(path);
  if (!f) throw InputError("write_history_csv: cannot open '" + path + "'");
  f << "epoch,train_loss,val_accuracy,val_recall,val_precision,val_f1\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss,
                  r.validation.accuracy, r.validation.recall, r.validation.precision, r.validation.f1);
    f << buf;
  }
}

}  // namespace toat
