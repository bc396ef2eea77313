#include "orientmp/model.hpp"

#include "orientmp/config.hpp"

namespace orientmp {

namespace {

constexpr double kNBodyHeadScale = 1e-2;

}  // namespace

std::string to_string(Task task) {
  switch (task) {
    case Task::classify: return "classify";
    case Task::normals: return "normals";
    case Task::nbody: return "nbody";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "classify") return Task::classify;
  if (s == "normals") return Task::normals;
  if (s == "nbody") return Task::nbody;
  throw ConfigError("unknown task '" + s + "' (expected classify, normals, nbody)");
}

std::size_t task_input_width(const ModelConfig& cfg) {
  return cfg.task == Task::nbody ? 3 * cfg.backbone.frames + 2 : 0;
}

TaskModel TaskModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.task == Task::classify && cfg.classes < 2) throw ConfigError("model: classify needs at least 2 classes");
  if (cfg.task == Task::nbody && (cfg.orientation.scalar_channels < 2 || cfg.orientation.vector_channels < 1)) {
    throw ConfigError("model: nbody needs >= 2 scalar and >= 1 vector orientation channels");
  }
  const Rng root(seed);
  TaskModel m;
  m.config = cfg;
  m.config.orientation.frames = cfg.backbone.frames;
  Rng backbone_rng = root.split(0);
  m.backbone = BackboneParams::init(m.config.backbone, m.config.orientation, m.config.global, task_input_width(cfg),
                                    backbone_rng);
  Rng head_rng = root.split(1);
  const std::size_t out = cfg.task == Task::classify ? cfg.classes : 3;
  m.head = Mlp::init(m.backbone.output_width(), cfg.head_hidden, out, head_rng);
  if (cfg.task == Task::nbody) {
    for (double& w : m.head.second.weight.mutable_data()) w *= kNBodyHeadScale;
    for (double& b : m.head.second.bias.mutable_data()) b *= kNBodyHeadScale;
  }
  return m;
}

ParamList TaskModel::parameters() const {
  ParamList out;
  backbone.collect(out, "backbone");
  head.collect(out, "head");
  return out;
}

namespace {

Tensor column(const Points& p) { return points_to_tensor(p); }

void check_nbody_cloud(const PointCloud& cloud) {
  const Eigen::Index n = cloud.points.rows();
  if (cloud.velocities.rows() != n || cloud.charges.size() != n) {
    throw ArgumentError("nbody model: cloud needs velocities and charges for every point");
  }
}

}  // namespace

ModelOutput model_forward(const TaskModel& model, const PointCloud& cloud, const ModelOptions& options) {
  const ModelConfig& cfg = model.config;
  const auto n = static_cast<std::size_t>(cloud.points.rows());
  BackboneOptions bopt;
  bopt.identity_frames = options.identity_frames;
  bopt.frame_mode = options.frame_mode;

  Tensor velocities;
  if (cfg.task == Task::nbody) {
    check_nbody_cloud(cloud);
    velocities = column(cloud.velocities);
    std::vector<double> speed(n), charge(n);
    for (std::size_t i = 0; i < n; ++i) {
      speed[i] = cloud.velocities.row(static_cast<Eigen::Index>(i)).norm();
      charge[i] = cloud.charges[static_cast<Eigen::Index>(i)];
    }
    const Tensor invariants = concat({Tensor::from_data({n, 1}, charge), Tensor::from_data({n, 1}, speed)}, 1);
    const std::size_t d = cfg.orientation.scalar_channels;
    const std::size_t m = cfg.orientation.vector_channels;
    FeaturePair init;
    init.scalars = d == 2 ? invariants : concat({invariants, Tensor::zeros({n, d - 2})}, 1);
    const Tensor v3 = reshape(velocities, {n, 1, 3});
    init.vectors = m == 1 ? v3 : concat({v3, Tensor::zeros({n, m - 1, 3})}, 1);
    bopt.orientation_inputs = init;
    bopt.extra_features = [n, v3, invariants](const std::vector<OrientationSet>& frames) {
      std::vector<Tensor> parts;
      for (const auto& f : frames) parts.push_back(reshape(project_to_frames(f, v3), {n, 3}));
      parts.push_back(invariants);
      return concat(parts, 1);
    };
  }

  ModelOutput out;
  out.backbone = backbone_forward(model.backbone, cloud.points, bopt);
  const Tensor& h = out.backbone.features;
  switch (cfg.task) {
    case Task::classify:
      out.prediction = invariant_global(model.head, h, cfg.pool);
      break;
    case Task::normals:
      out.raw = invariant_pointwise(model.head, h);
      out.prediction = options.apply_frames ? apply_frames(out.backbone.frames.front(), out.raw) : out.raw;
      break;
    case Task::nbody: {
      out.raw = invariant_pointwise(model.head, h);
      const Tensor disp = options.apply_frames ? apply_frames(out.backbone.frames.front(), out.raw) : out.raw;
      out.prediction = add(add(column(cloud.points), scale(velocities, cfg.elapsed)), disp);
      break;
    }
  }
  return out;
}

DatasetFile save_model(const TaskModel& model) {
  DatasetFile file;
  file.kind = DatasetKind::params;
  file.metadata = to_json(model.config);
  for (const auto& p : model.parameters()) {
    const auto v = p.tensor.data();
    file.add(p.name, p.tensor.shape(), std::vector<double>(v.begin(), v.end()));
  }
  return file;
}

TaskModel load_model(const DatasetFile& file) {
  if (file.kind != DatasetKind::params) throw ConfigError("expected a params file, got " + to_string(file.kind));
  TaskModel model = TaskModel::init(parse_model_config(file.metadata), 0);
  ParamList params = model.parameters();
  if (params.size() != file.records.size()) {
    throw ConfigError("params file holds " + std::to_string(file.records.size()) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (auto& p : params) {
    const Record& r = file.get(p.name);
    if (r.shape != p.tensor.shape()) {
      throw ConfigError("params tensor '" + p.name + "' has shape " + to_string(r.shape) + ", expected " +
                        to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(r.values.begin(), r.values.end(), dst.begin());
  }
  return model;
}

}  // namespace orientmp
