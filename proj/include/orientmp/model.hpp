#pragma once

#include <string>

#include "orientmp/backbone.hpp"
#include "orientmp/data.hpp"
#include "orientmp/dataset_file.hpp"
#include "orientmp/readout.hpp"

namespace orientmp {

enum class Task { classify, normals, nbody };

std::string to_string(Task task);
Task parse_task(const std::string& s);

struct ModelConfig {
  Task task = Task::classify;
  BackboneConfig backbone;
  OrientationConfig orientation;
  GlobalOrientationConfig global;
  std::size_t head_hidden = 64;
  Pool pool = Pool::max;
  std::size_t classes = kShapeClasses;
  /// N-body: simulated time between input and target (horizon * dt), taken
  /// from the dataset at training time.
  double elapsed = 0.5;
};

/// Width of the task-specific per-point inputs: for N-body, O_i^T v_i per
/// frame, |v_i| and q_i.
std::size_t task_input_width(const ModelConfig& cfg);

/// Backbone plus readout head for one task.
struct TaskModel {
  ModelConfig config;
  BackboneParams backbone;
  HeadParams head;

  static TaskModel init(const ModelConfig& cfg, std::uint64_t seed);
  ParamList parameters() const;
};

/// Switches for the verification harness; defaults give the real model.
struct ModelOptions {
  bool identity_frames = false;
  FrameConstruction frame_mode = FrameConstruction::gram_schmidt;
  bool apply_frames = true;
};

struct ModelOutput {
  /// classify: logits [c]; normals: [N, 3];
  /// nbody: predicted positions x_i + v_i * elapsed + O_i p_i, [N, 3].
  Tensor prediction;
  /// Head output before O_i is applied (equivariant tasks), [N, 3].
  Tensor raw;
  BackboneOutput backbone;
};

/// `cloud` supplies velocities and charges for the N-body task.
ModelOutput model_forward(const TaskModel& model, const PointCloud& cloud, const ModelOptions& options = {});

/// Parameters plus the model configuration as metadata.
DatasetFile save_model(const TaskModel& model);
TaskModel load_model(const DatasetFile& file);

}  // namespace orientmp
