#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "orientmp/model.hpp"

namespace orientmp {

struct OptimConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Everything a run needs. Serialized as strict JSON: unknown keys are
/// rejected with a ConfigError naming the key.
struct RunConfig {
  ModelConfig model;
  OptimConfig optim;
  std::uint64_t seed = 0;
  std::string train_data;
  std::string test_data;  // empty: the train file (N-body files hold both splits)
  std::string metrics;    // JSON-lines path; empty: stdout

  Task task() const { return model.task; }
};

/// Per-task defaults (N-body uses the generic backbone on tiny graphs).
RunConfig default_run_config(Task task);

std::string to_json(const RunConfig& cfg, int indent = -1);
std::string to_json(const ModelConfig& cfg, int indent = -1);

/// Missing keys keep the defaults of `default_run_config(task)`.
RunConfig parse_run_config(std::string_view json);
ModelConfig parse_model_config(std::string_view json);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace orientmp
