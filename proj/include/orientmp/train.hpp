#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "orientmp/config.hpp"

namespace orientmp {

/// Mean negative log-softmax of the true class. `logits` is [B, c] (or [c]
/// for a single sample); max-subtracted for stability.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// mean_i (1 - <pred_i / |pred_i|, n_i>) for unit targets n_i.
Tensor cosine_distance_loss(const Tensor& pred, const Tensor& target);

/// Mean over all entries of (pred - target)^2.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState init(const ParamList& params, const OptimConfig& cfg);
};

/// Bias-corrected Adam update of every parameter in place. Throws StateError
/// if a parameter has no gradient.
void adam_step(AdamState& state, const ParamList& params);

void zero_grads(const ParamList& params);

using Metrics = std::map<std::string, double>;

/// One input cloud and, for regression tasks, its per-point target.
struct Example {
  PointCloud cloud;
  Points target;  // normals or future positions; empty for classification
};

/// Examples of `split` ("train" or "test") for `task`. Shape files hold one
/// split each, so `split` only selects within N-body files.
std::vector<Example> load_examples(Task task, const DatasetFile& file, const std::string& split);

/// Per-sample loss as a scalar tensor.
Tensor example_loss(const TaskModel& model, const Example& ex, const ModelOptions& options = {});

/// classify: loss, accuracy; normals: loss, cosine_distance; nbody: loss, mse,
/// baseline_mse.
Metrics evaluate(const TaskModel& model, const std::vector<Example>& examples);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean training loss; epoch 0 reports the initial model
  Metrics test;
};

std::string to_json_line(const EpochRecord& record);

struct TrainResult {
  TaskModel model;
  std::vector<EpochRecord> history;
};

/// Loads the configured data, trains with Adam on shuffled mini-batches, and
/// streams one JSON line per epoch to `metrics` (if non-null).
TrainResult train_task(const RunConfig& cfg, std::ostream* metrics = nullptr);

/// Same loop on preloaded examples.
TrainResult train_examples(const RunConfig& cfg, const std::vector<Example>& train,
                           const std::vector<Example>& test, std::ostream* metrics = nullptr);

/// horizon * dt from an N-body file's metadata.
double nbody_elapsed(const DatasetFile& file);

}  // namespace orientmp
