#include "orientmp/config.hpp"

#include <fstream>
#include <initializer_list>
#include <iterator>

#include <json.hpp>

namespace orientmp {

using Json = nlohmann::ordered_json;

namespace {

void reject_unknown(const Json& obj, const std::string& path, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError("config: '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("config: unknown key '" + (path.empty() ? key : path + "." + key) + "'");
  }
}

template <class T>
void read(const Json& obj, const char* key, const std::string& path, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: key '" + (path.empty() ? std::string(key) : path + "." + key) + "' has the wrong type");
  }
}

void read_size(const Json& obj, const char* key, const std::string& path, std::size_t& out) {
  if (!obj.contains(key)) return;
  const Json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError("config: key '" + (path.empty() ? std::string(key) : path + "." + key) +
                      "' must be a non-negative integer");
  }
  out = v.get<std::size_t>();
}

Json orientation_json(const OrientationConfig& c) {
  return {{"layers", c.layers}, {"scalar_channels", c.scalar_channels}, {"vector_channels", c.vector_channels},
          {"k", c.k}};
}

Json global_json(const GlobalOrientationConfig& c) {
  return {{"levels", c.levels}, {"scalar_channels", c.scalar_channels}, {"vector_channels", c.vector_channels},
          {"k", c.k}};
}

Json model_json(const ModelConfig& c) {
  return {{"backbone", to_string(c.backbone.kind)},
          {"widths", c.backbone.widths},
          {"k", c.backbone.k},
          {"aggregation", to_string(c.backbone.agg)},
          {"frames", c.backbone.frames},
          {"global_coords", c.backbone.global_coords},
          {"feature_knn", c.backbone.feature_knn},
          {"head_hidden", c.head_hidden},
          {"pool", to_string(c.pool)},
          {"classes", c.classes},
          {"elapsed", c.elapsed},
          {"orientation", orientation_json(c.orientation)},
          {"global", global_json(c.global)}};
}

void apply_model(const Json& j, const std::string& path, ModelConfig& c) {
  reject_unknown(j, path,
                 {"backbone", "widths", "k", "aggregation", "frames", "global_coords", "feature_knn", "head_hidden",
                  "pool", "classes", "elapsed", "orientation", "global"});
  std::string s;
  if (j.contains("backbone")) {
    read(j, "backbone", path, s);
    c.backbone.kind = parse_backbone_kind(s);
  }
  if (j.contains("widths")) {
    const Json& w = j.at("widths");
    if (!w.is_array()) throw ConfigError("config: key '" + path + ".widths' must be an array");
    c.backbone.widths.clear();
    for (const auto& v : w) {
      if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) {
        throw ConfigError("config: key '" + path + ".widths' must hold positive integers");
      }
      c.backbone.widths.push_back(v.get<std::size_t>());
    }
  }
  read_size(j, "k", path, c.backbone.k);
  if (j.contains("aggregation")) {
    read(j, "aggregation", path, s);
    c.backbone.agg = parse_aggregation(s);
  }
  read_size(j, "frames", path, c.backbone.frames);
  read(j, "global_coords", path, c.backbone.global_coords);
  read(j, "feature_knn", path, c.backbone.feature_knn);
  read_size(j, "head_hidden", path, c.head_hidden);
  if (j.contains("pool")) {
    read(j, "pool", path, s);
    c.pool = parse_pool(s);
  }
  read_size(j, "classes", path, c.classes);
  read(j, "elapsed", path, c.elapsed);
  if (j.contains("orientation")) {
    const Json& o = j.at("orientation");
    const std::string p = path + ".orientation";
    reject_unknown(o, p, {"layers", "scalar_channels", "vector_channels", "k"});
    read_size(o, "layers", p, c.orientation.layers);
    read_size(o, "scalar_channels", p, c.orientation.scalar_channels);
    read_size(o, "vector_channels", p, c.orientation.vector_channels);
    read_size(o, "k", p, c.orientation.k);
  }
  if (j.contains("global")) {
    const Json& g = j.at("global");
    const std::string p = path + ".global";
    reject_unknown(g, p, {"levels", "scalar_channels", "vector_channels", "k"});
    read_size(g, "levels", p, c.global.levels);
    read_size(g, "scalar_channels", p, c.global.scalar_channels);
    read_size(g, "vector_channels", p, c.global.vector_channels);
    read_size(g, "k", p, c.global.k);
  }
  c.orientation.frames = c.backbone.frames;
}

Json parse_text(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig default_run_config(Task task) {
  RunConfig cfg;
  cfg.model.task = task;
  if (task == Task::nbody) {
    cfg.model.backbone.kind = BackboneKind::generic;
    cfg.model.backbone.widths = {64, 64};
    cfg.model.backbone.k = 4;
    cfg.model.backbone.agg = Aggregation::mean;
    cfg.model.orientation.k = 4;
    cfg.model.orientation.layers = 2;
    cfg.model.orientation.scalar_channels = 16;
    cfg.model.orientation.vector_channels = 4;
    cfg.optim.epochs = 100;
  }
  return cfg;
}

std::string to_json(const ModelConfig& cfg, int indent) {
  Json j = {{"task", to_string(cfg.task)}};
  j["model"] = model_json(cfg);
  return j.dump(indent);
}

std::string to_json(const RunConfig& cfg, int indent) {
  Json j = {{"task", to_string(cfg.model.task)},
            {"seed", cfg.seed},
            {"train_data", cfg.train_data},
            {"test_data", cfg.test_data},
            {"metrics", cfg.metrics},
            {"model", model_json(cfg.model)},
            {"optim",
             {{"epochs", cfg.optim.epochs},
              {"batch_size", cfg.optim.batch_size},
              {"lr", cfg.optim.lr},
              {"beta1", cfg.optim.beta1},
              {"beta2", cfg.optim.beta2},
              {"eps", cfg.optim.eps}}}};
  return j.dump(indent);
}

ModelConfig parse_model_config(std::string_view text) {
  const Json j = parse_text(text);
  reject_unknown(j, "", {"task", "model"});
  std::string task = "classify";
  read(j, "task", "", task);
  ModelConfig cfg = default_run_config(parse_task(task)).model;
  if (j.contains("model")) apply_model(j.at("model"), "model", cfg);
  return cfg;
}

RunConfig parse_run_config(std::string_view text) {
  const Json j = parse_text(text);
  reject_unknown(j, "", {"task", "seed", "train_data", "test_data", "metrics", "model", "optim"});
  std::string task = "classify";
  read(j, "task", "", task);
  RunConfig cfg = default_run_config(parse_task(task));
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<std::int64_t>() >= 0)) {
      throw ConfigError("config: key 'seed' must be a non-negative integer");
    }
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  read(j, "train_data", "", cfg.train_data);
  read(j, "test_data", "", cfg.test_data);
  read(j, "metrics", "", cfg.metrics);
  if (j.contains("model")) apply_model(j.at("model"), "model", cfg.model);
  if (j.contains("optim")) {
    const Json& o = j.at("optim");
    reject_unknown(o, "optim", {"epochs", "batch_size", "lr", "beta1", "beta2", "eps"});
    read_size(o, "epochs", "optim", cfg.optim.epochs);
    read_size(o, "batch_size", "optim", cfg.optim.batch_size);
    read(o, "lr", "optim", cfg.optim.lr);
    read(o, "beta1", "optim", cfg.optim.beta1);
    read(o, "beta2", "optim", cfg.optim.beta2);
    read(o, "eps", "optim", cfg.optim.eps);
  }
  if (cfg.optim.batch_size == 0) throw ConfigError("config: optim.batch_size must be >= 1");
  if (!(cfg.optim.lr > 0.0)) throw ConfigError("config: optim.lr must be positive");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

}  // namespace orientmp
