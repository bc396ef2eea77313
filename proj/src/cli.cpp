#include "orientmp/cli.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "orientmp/verify.hpp"

namespace orientmp {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int gen_nbody(const NBodyDatasetConfig& cfg, std::uint64_t seed, const std::string& path, std::ostream& out) {
  const DatasetFile file = gen_nbody_dataset(seed, cfg);
  write_dataset(file, path);
  out << file.metadata << '\n';
  return kExitOk;
}

int gen_shapes_cmd(const ShapesConfig& cfg, std::uint64_t seed, const std::string& path, std::ostream& out) {
  const DatasetFile file = gen_shapes(seed, cfg);
  write_dataset(file, path);
  out << file.metadata << '\n';
  return kExitOk;
}

struct TrainFlags {
  std::string config;
  std::string out;
  std::optional<std::string> task, train_data, test_data, metrics;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr;
};

int train_cmd(const TrainFlags& f, std::ostream& out) {
  RunConfig cfg = f.config.empty() ? default_run_config(f.task ? parse_task(*f.task) : Task::classify)
                                   : load_run_config(f.config);
  if (f.task && parse_task(*f.task) != cfg.task()) {
    throw ConfigError("--task " + *f.task + " contradicts config task " + to_string(cfg.task()));
  }
  if (f.train_data) cfg.train_data = *f.train_data;
  if (f.test_data) cfg.test_data = *f.test_data;
  if (f.metrics) cfg.metrics = *f.metrics;
  if (f.seed) cfg.seed = *f.seed;
  if (f.epochs) cfg.optim.epochs = *f.epochs;
  if (f.batch_size) cfg.optim.batch_size = *f.batch_size;
  if (f.lr) cfg.optim.lr = *f.lr;
  if (cfg.optim.batch_size == 0) throw ArgumentError("--batch-size must be >= 1");

  out << to_json(cfg) << '\n';
  std::ofstream file;
  std::ostream* sink = &out;
  if (!cfg.metrics.empty()) {
    file.open(cfg.metrics, std::ios::trunc);
    if (!file) throw IoError("cannot open metrics file '" + cfg.metrics + "'");
    sink = &file;
  }
  const TrainResult result = train_task(cfg, sink);
  write_dataset(save_model(result.model), f.out);
  return kExitOk;
}

int eval_cmd(const std::string& params, const std::string& data, const std::optional<std::string>& task,
             const std::string& split, std::ostream& out) {
  const TaskModel model = load_model(read_dataset(params));
  if (task && parse_task(*task) != model.config.task) {
    throw ConfigError("--task " + *task + " does not match the trained model's task " + to_string(model.config.task));
  }
  const DatasetFile file = read_dataset(data);
  const auto examples = load_examples(model.config.task, file, split);
  const Metrics m = evaluate(model, examples);
  nlohmann::ordered_json j = {{"task", to_string(model.config.task)}, {"examples", examples.size()}};
  for (const auto& [k, v] : m) j[k] = v;
  out << j.dump() << '\n';
  return kExitOk;
}

int verify_cmd(const std::string& config, std::uint64_t seed, std::size_t trials, double tol, std::size_t points,
               bool mutations, std::ostream& out) {
  if (trials == 0) throw ArgumentError("--trials must be >= 1");
  if (!(tol > 0.0)) throw ArgumentError("--tol must be positive");
  RunConfig cfg = config.empty() ? default_run_config(Task::normals) : load_run_config(config);
  VerifyOptions o;
  o.audit.trials = trials;
  o.audit.tol = tol;
  o.audit.seed = seed;
  o.audit.points = points;
  o.gradients.seed = seed;
  o.mutations = mutations;
  const AuditReport report = run_verification(cfg, o);
  out << report.to_json(2) << '\n';
  return report.pass() ? kExitOk : kExitAuditFailed;
}

int export_cmd(const std::string& params, const std::string& data, const std::string& path, std::size_t index,
               const std::string& split, std::ostream& out) {
  const TaskModel model = load_model(read_dataset(params));
  const DatasetFile file = read_dataset(data);
  const Task source = file.kind == DatasetKind::nbody ? Task::nbody : Task::normals;
  if ((source == Task::nbody) != (model.config.task == Task::nbody)) {
    throw ConfigError("export-orientations: model task " + to_string(model.config.task) + " cannot read " +
                      to_string(file.kind) + " data");
  }
  const auto examples = load_examples(source, file, split);
  if (index >= examples.size()) {
    throw ArgumentError("--index " + std::to_string(index) + " out of range (" + std::to_string(examples.size()) +
                        " samples)");
  }
  NoGradGuard guard;
  const PointCloud& cloud = examples[index].cloud;
  const ModelOutput o = model_forward(model, cloud);
  const OrientationSet& frames = o.backbone.frames.front();
  std::ofstream csv(path, std::ios::trunc);
  if (!csv) throw IoError("cannot open '" + path + "' for writing");
  csv << "x,y,z,u1x,u1y,u1z,u2x,u2y,u2z\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Mat3 f = frames.frame(i);
    const auto row = cloud.points.row(static_cast<Eigen::Index>(i));
    csv << fmt(row(0)) << ',' << fmt(row(1)) << ',' << fmt(row(2));
    for (int c = 0; c < 2; ++c) {
      for (int r = 0; r < 3; ++r) csv << ',' << fmt(f(r, c));
    }
    csv << '\n';
  }
  if (!csv) throw IoError("failed writing '" + path + "'");
  out << "{\"rows\":" << cloud.size() << ",\"out\":" << nlohmann::json(path).dump() << "}\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotation-invariant point-cloud message passing with learned orientations", "orientmp"};
  app.require_subcommand(1);

  NBodyDatasetConfig nb;
  std::uint64_t nb_seed = 0;
  std::string nb_out;
  auto* gn = app.add_subcommand("gen-nbody", "Simulate charged-particle trajectories into a dataset file");
  gn->add_option("--particles", nb.particles, "Particles per system (>= 2)")->capture_default_str();
  gn->add_option("--trajectories", nb.train_trajectories, "Training trajectories")->capture_default_str();
  gn->add_option("--test-trajectories", nb.test_trajectories, "Test trajectories")->capture_default_str();
  gn->add_option("--steps", nb.horizon, "Integration steps between input and target")->capture_default_str();
  gn->add_option("--dt", nb.dt, "Time step")->capture_default_str();
  gn->add_option("--seed", nb_seed, "Random seed")->capture_default_str();
  gn->add_option("--out", nb_out, "Output dataset path")->required();

  ShapesConfig sh;
  std::string sh_rotation = "none";
  std::uint64_t sh_seed = 0;
  std::string sh_out;
  auto* gs = app.add_subcommand("gen-shapes", "Sample labeled sphere, cuboid and cylinder surfaces");
  gs->add_option("--classes", sh.per_class, "Samples per class (3 classes)")->capture_default_str();
  gs->add_option("--points", sh.points, "Points per shape (>= 8)")->capture_default_str();
  gs->add_option("--noise", sh.noise, "Gaussian coordinate noise sigma")->capture_default_str();
  gs->add_option("--rotation", sh_rotation, "Pose augmentation: none, z or so3")->capture_default_str();
  gs->add_option("--seed", sh_seed, "Random seed")->capture_default_str();
  gs->add_option("--out", sh_out, "Output dataset path")->required();

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "Train a task model; metrics are written as JSON lines");
  tr->add_option("--config", tf.config, "Run configuration JSON");
  tr->add_option("--out", tf.out, "Output params file")->required();
  tr->add_option("--task", tf.task, "classify, normals or nbody (without --config)");
  tr->add_option("--train-data", tf.train_data, "Training dataset file");
  tr->add_option("--test-data", tf.test_data, "Test dataset file");
  tr->add_option("--metrics", tf.metrics, "JSON-lines metrics file (default: stdout)");
  tr->add_option("--seed", tf.seed, "Random seed");
  tr->add_option("--epochs", tf.epochs, "Training epochs");
  tr->add_option("--batch-size", tf.batch_size, "Clouds per optimizer step");
  tr->add_option("--lr", tf.lr, "Adam learning rate");

  std::string ev_params, ev_data, ev_split = "test";
  std::optional<std::string> ev_task;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained model and print metrics JSON");
  ev->add_option("--params", ev_params, "Params file")->required();
  ev->add_option("--data", ev_data, "Dataset file")->required();
  ev->add_option("--task", ev_task, "Expected task");
  ev->add_option("--split", ev_split, "N-body split: train or test")->capture_default_str();

  std::string vf_config;
  std::uint64_t vf_seed = 0;
  std::size_t vf_trials = 50, vf_points = 128;
  double vf_tol = 1e-8;
  bool vf_no_mutations = false;
  auto* vf = app.add_subcommand("verify", "Run the equivariance and gradient audits");
  vf->add_option("--config", vf_config, "Run configuration JSON (model section is used)");
  vf->add_option("--seed", vf_seed, "Random seed")->capture_default_str();
  vf->add_option("--trials", vf_trials, "Random clouds per audit")->capture_default_str();
  vf->add_option("--tol", vf_tol, "Equivariance tolerance")->capture_default_str();
  vf->add_option("--points", vf_points, "Points per audit cloud")->capture_default_str();
  vf->add_flag("--no-mutations", vf_no_mutations, "Skip the broken-variant sensitivity checks");

  std::string ex_params, ex_data, ex_out, ex_split = "test";
  std::size_t ex_index = 0;
  auto* ex = app.add_subcommand("export-orientations", "Write learned per-point frames as CSV");
  ex->add_option("--params", ex_params, "Params file")->required();
  ex->add_option("--data", ex_data, "Dataset file")->required();
  ex->add_option("--out", ex_out, "Output CSV path")->required();
  ex->add_option("--index", ex_index, "Sample index within the dataset")->capture_default_str();
  ex->add_option("--split", ex_split, "N-body split: train or test")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitArgument;
  }

  try {
    if (gn->parsed()) return gen_nbody(nb, nb_seed, nb_out, out);
    if (gs->parsed()) {
      sh.rotation = parse_rotation_mode(sh_rotation);
      return gen_shapes_cmd(sh, sh_seed, sh_out, out);
    }
    if (tr->parsed()) return train_cmd(tf, out);
    if (ev->parsed()) return eval_cmd(ev_params, ev_data, ev_task, ev_split, out);
    if (vf->parsed()) return verify_cmd(vf_config, vf_seed, vf_trials, vf_tol, vf_points, !vf_no_mutations, out);
    if (ex->parsed()) return export_cmd(ex_params, ex_data, ex_out, ex_index, ex_split, out);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitArgument;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitArgument;
}

}  // namespace orientmp
