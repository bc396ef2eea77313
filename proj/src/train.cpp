#include "orientmp/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

namespace orientmp {

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const Tensor x = logits.rank() == 1 ? reshape(logits, {1, logits.numel()}) : logits;
  if (x.rank() != 2) throw ShapeError("cross_entropy: expected [B, c] logits, got " + to_string(logits.shape()));
  const std::size_t b = x.shape()[0];
  const std::size_t c = x.shape()[1];
  if (labels.size() != b) throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                           std::to_string(b) + " rows");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  const auto v = x.data();
  std::vector<double> softmax(b * c);
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const double* row = v.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      softmax[r * c + j] = std::exp(row[j] - mx);
      z += softmax[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) softmax[r * c + j] /= z;
    total += mx + std::log(z) - row[labels[r]];
  }
  return make_op("cross_entropy", {}, {total / static_cast<double>(b)}, {x},
                 [softmax = std::move(softmax), labels, b, c](const TensorImpl& out, auto inputs) {
                   auto& g = inputs[0]->grad_buffer();
                   const double s = out.grad[0] / static_cast<double>(b);
                   for (std::size_t r = 0; r < b; ++r) {
                     for (std::size_t j = 0; j < c; ++j) {
                       const double onehot = static_cast<int>(j) == labels[r] ? 1.0 : 0.0;
                       g[r * c + j] += s * (softmax[r * c + j] - onehot);
                     }
                   }
                 });
}

Tensor cosine_distance_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape() || pred.rank() != 2 || pred.shape()[1] != 3) {
    throw ShapeError("cosine_distance_loss: expected matching [N, 3], got " + to_string(pred.shape()) + " and " +
                     to_string(target.shape()));
  }
  const Tensor cos = sum(mul(normalize_rows(pred), target), 1);
  return add_scalar(neg(mean_all(cos)), 1.0);
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: shapes " + to_string(pred.shape()) + " and " + to_string(target.shape()) + " differ");
  }
  return mean_all(square(sub(pred, target)));
}

AdamState AdamState::init(const ParamList& params, const OptimConfig& cfg) {
  AdamState s;
  s.lr = cfg.lr;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.eps = cfg.eps;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adam_step(AdamState& s, const ParamList& params) {
  if (params.size() != s.m.size()) throw StateError("adam: state built for a different parameter list");
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw StateError("adam: parameter '" + p.name + "' has no gradient");
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    const auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = s.m[i];
    auto& v = s.v[i];
    if (m.size() != w.size()) throw StateError("adam: moment buffer shape mismatch for '" + params[i].name + "'");
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g[j];
      v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g[j] * g[j];
      w[j] -= s.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + s.eps);
    }
  }
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

double nbody_elapsed(const DatasetFile& file) {
  try {
    const auto meta = nlohmann::json::parse(file.metadata);
    return meta.at("horizon").get<double>() * meta.at("dt").get<double>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("nbody dataset metadata lacks horizon/dt");
  }
}

std::vector<Example> load_examples(Task task, const DatasetFile& file, const std::string& split) {
  std::vector<Example> out;
  if (task == Task::nbody) {
    for (auto& s : nbody_samples(file, split)) out.push_back({std::move(s.cloud), std::move(s.target)});
    return out;
  }
  for (auto& c : shape_clouds(file)) {
    Example ex;
    if (task == Task::normals) ex.target = c.normals;
    ex.cloud = std::move(c);
    out.push_back(std::move(ex));
  }
  return out;
}

Tensor example_loss(const TaskModel& model, const Example& ex, const ModelOptions& options) {
  const ModelOutput out = model_forward(model, ex.cloud, options);
  switch (model.config.task) {
    case Task::classify: return cross_entropy(out.prediction, {ex.cloud.label});
    case Task::normals: return cosine_distance_loss(out.prediction, points_to_tensor(ex.target));
    case Task::nbody: return mse_loss(out.prediction, points_to_tensor(ex.target));
  }
  throw ConfigError("unknown task");
}

Metrics evaluate(const TaskModel& model, const std::vector<Example>& examples) {
  NoGradGuard guard;
  Metrics m;
  if (examples.empty()) return m;
  const auto count = static_cast<double>(examples.size());
  double loss = 0.0, hits = 0.0, baseline = 0.0;
  for (const auto& ex : examples) {
    const ModelOutput out = model_forward(model, ex.cloud);
    switch (model.config.task) {
      case Task::classify: {
        loss += cross_entropy(out.prediction, {ex.cloud.label}).item();
        const auto v = out.prediction.data();
        const auto best = std::max_element(v.begin(), v.end()) - v.begin();
        hits += best == ex.cloud.label ? 1.0 : 0.0;
        break;
      }
      case Task::normals:
        loss += cosine_distance_loss(out.prediction, points_to_tensor(ex.target)).item();
        break;
      case Task::nbody: {
        loss += mse_loss(out.prediction, points_to_tensor(ex.target)).item();
        const Points lin = ex.cloud.points + model.config.elapsed * ex.cloud.velocities;
        baseline += (lin - ex.target).squaredNorm() / static_cast<double>(ex.target.size());
        break;
      }
    }
  }
  m["loss"] = loss / count;
  switch (model.config.task) {
    case Task::classify: m["accuracy"] = hits / count; break;
    case Task::normals: m["cosine_distance"] = loss / count; break;
    case Task::nbody:
      m["mse"] = loss / count;
      m["baseline_mse"] = baseline / count;
      break;
  }
  return m;
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j = {{"epoch", r.epoch}, {"loss", r.loss}};
  for (const auto& [k, v] : r.test) j["test_" + k] = v;
  return j.dump();
}

TrainResult train_examples(const RunConfig& cfg, const std::vector<Example>& train, const std::vector<Example>& test,
                           std::ostream* metrics) {
  if (train.empty()) throw ConfigError("train: training set is empty");
  if (cfg.task() == Task::classify) {
    for (const auto* set : {&train, &test}) {
      for (const auto& ex : *set) {
        if (ex.cloud.label < 0 || static_cast<std::size_t>(ex.cloud.label) >= cfg.model.classes) {
          throw ConfigError("train: label " + std::to_string(ex.cloud.label) + " outside the model's " +
                            std::to_string(cfg.model.classes) + " classes");
        }
      }
    }
  }
  const Rng root(cfg.seed);
  TrainResult result{TaskModel::init(cfg.model, cfg.seed), {}};
  const ParamList params = result.model.parameters();
  AdamState adam = AdamState::init(params, cfg.optim);

  auto emit = [&](EpochRecord rec) {
    if (metrics) *metrics << to_json_line(rec) << '\n' << std::flush;
    result.history.push_back(std::move(rec));
  };

  {
    EpochRecord rec;
    rec.test = evaluate(result.model, test);
    rec.loss = evaluate(result.model, train).at("loss");
    emit(std::move(rec));
  }

  std::vector<std::size_t> order(train.size());
  const double batch = static_cast<double>(cfg.optim.batch_size);
  for (std::size_t epoch = 1; epoch <= cfg.optim.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = root.split(1000 + epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle() % i]);

    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.optim.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.optim.batch_size);
      const double denom = std::min(batch, static_cast<double>(end - start));
      zero_grads(params);
      for (std::size_t b = start; b < end; ++b) {
        const Tensor loss = example_loss(result.model, train[order[b]]);
        total += loss.item();
        scale(loss, 1.0 / denom).backward();
      }
      adam_step(adam, params);
    }
    zero_grads(params);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = total / static_cast<double>(order.size());
    rec.test = evaluate(result.model, test);
    emit(std::move(rec));
  }
  return result;
}

TrainResult train_task(const RunConfig& cfg_in, std::ostream* metrics) {
  RunConfig cfg = cfg_in;
  if (cfg.train_data.empty()) throw ConfigError("train: train_data path is required");
  const DatasetFile train_file = read_dataset(cfg.train_data);
  const DatasetFile test_file = cfg.test_data.empty() ? train_file : read_dataset(cfg.test_data);
  const DatasetKind want = cfg.task() == Task::nbody ? DatasetKind::nbody : DatasetKind::shapes;
  for (const auto* f : {&train_file, &test_file}) {
    if (f->kind != want) {
      throw ConfigError("task " + to_string(cfg.task()) + " needs a " + to_string(want) + " dataset, got " +
                        to_string(f->kind));
    }
  }
  if (cfg.task() == Task::nbody) cfg.model.elapsed = nbody_elapsed(train_file);
  const auto train = load_examples(cfg.task(), train_file, "train");
  const auto test = load_examples(cfg.task(), test_file, "test");
  return train_examples(cfg, train, test, metrics);
}

}  // namespace orientmp
