#include "orientmp/verify.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace orientmp {

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("audit: compared tensors differ in size");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool same_graph(const KnnGraph& a, const KnnGraph& b) { return a.k == b.k && a.idx.data == b.idx.data; }

// Frames this close to the Gram-Schmidt fallback may take it in either pose.
constexpr double kFrameMargin = 2.0 * kGramSchmidtDegeneracy;

// True when some point's frame-generating vectors are nearly vanishing or collinear.
bool near_degenerate(const FeaturePair& f) {
  const std::size_t n = f.vectors.shape()[0];
  const std::size_t m = f.vectors.shape()[1];
  const double* v = f.vectors.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c + 1 < m; c += 2) {
      const Vec3 a(v[(i * m + c) * 3], v[(i * m + c) * 3 + 1], v[(i * m + c) * 3 + 2]);
      const Vec3 b(v[(i * m + c + 1) * 3], v[(i * m + c + 1) * 3 + 1], v[(i * m + c + 1) * 3 + 2]);
      const double na = a.norm();
      if (na < kFrameMargin) return true;
      const Vec3 u = a / na;
      if ((b - b.dot(u) * u).norm() < kFrameMargin) return true;
    }
  }
  return false;
}

bool near_degenerate(const OrientationNet& net, const Points& x) {
  return near_degenerate(learn_orientation_frames(net, x, knn(x, net.config.k)).features);
}

AuditCheck finish(std::string name, std::size_t trials, double dev, double tol, std::size_t skipped = 0) {
  return {std::move(name), trials, dev, tol, dev < tol && 2 * skipped <= trials, skipped};
}

RigidTransform draw_transform(Rng& rng, std::size_t trial, bool translation_only) {
  if (trial == 0) return RigidTransform::identity();
  RigidTransform g = sample_rigid(rng, 1.0);
  if (translation_only) g.rotation = Mat3::Identity();
  return g;
}

// Squaring whose backward uses d/dx = x instead of 2x.
Tensor broken_square(const Tensor& x) {
  std::vector<double> y(x.numel());
  const auto v = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = v[i] * v[i];
  return make_op("broken_square", x.shape(), std::move(y), {x}, [](const TensorImpl& out, auto inputs) {
    auto& g = inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * inputs[0]->data[i];
  });
}

}  // namespace

bool AuditReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const AuditCheck& c) { return c.pass; });
}

std::string AuditReport::to_json(int indent) const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name}, {"trials", c.trials}, {"max_dev", c.max_dev}, {"tol", c.tol}, {"skipped", c.skipped}, {"pass", c.pass}});
  }
  nlohmann::ordered_json j = {{"checks", arr}, {"pass", pass()}};
  return j.dump(indent);
}

PointCloud random_cloud(Rng& rng, std::size_t n) {
  const auto rows = static_cast<Eigen::Index>(n);
  PointCloud c;
  c.points.resize(rows, 3);
  c.velocities.resize(rows, 3);
  c.normals.resize(rows, 3);
  c.charges.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (int d = 0; d < 3; ++d) c.points(i, d) = rng.normal();
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (int d = 0; d < 3; ++d) c.velocities(i, d) = rng.normal(0.0, 0.5);
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    c.normals.row(i) = v.normalized().transpose();
    c.charges[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  c.label = static_cast<int>(rng() % kShapeClasses);
  return c;
}

AuditCheck audit_orientation_equivariance(const OrientationNet& net, const AuditSettings& s, FrameConstruction mode) {
  if (s.trials == 0) throw ArgumentError("audit: trials must be >= 1");
  NoGradGuard guard;
  Rng rng = Rng(s.seed).split(11);
  double dev = 0.0;
  std::size_t skipped = 0;
  for (std::size_t t = 0; t < s.trials; ++t) {
    const Points x = random_cloud(rng, s.points).points;
    const RigidTransform g = draw_transform(rng, t, false);
    const Points gx = apply(g, x);
    const KnnGraph graph = knn(x, net.config.k);
    const KnnGraph ggraph = knn(gx, net.config.k);
    if (!same_graph(graph, ggraph)) {
      ++skipped;
      continue;
    }
    const OrientationOutput oa_out = learn_orientation_frames(net, x, graph, mode);
    if (mode == FrameConstruction::gram_schmidt && near_degenerate(oa_out.features)) {
      ++skipped;
      continue;
    }
    const OrientationSet& a = oa_out.frames.front();
    const OrientationSet b = learn_orientations(net, gx, ggraph, mode);
    for (std::size_t i = 0; i < s.points; ++i) {
      const Mat3 oa = a.frame(i);
      const Mat3 ob = b.frame(i);
      dev = std::max(dev, (ob - g.rotation * oa).cwiseAbs().maxCoeff());
      dev = std::max(dev, (oa.transpose() * oa - Mat3::Identity()).cwiseAbs().maxCoeff());
      dev = std::max(dev, std::abs(oa.determinant() - 1.0));
    }
  }
  return finish("orientation_equivariance", s.trials, dev, s.tol, skipped);
}

AuditCheck audit_feature_invariance(const BackboneParams& params, const AuditSettings& s, bool identity_frames,
                                    bool translation_only) {
  if (s.trials == 0) throw ArgumentError("audit: trials must be >= 1");
  NoGradGuard guard;
  Rng rng = Rng(s.seed).split(translation_only ? 13 : 12);
  BackboneOptions opt;
  opt.identity_frames = identity_frames;
  const std::size_t extra = params.extra_inputs;
  double dev = 0.0;
  std::size_t skipped = 0;
  for (std::size_t t = 0; t < s.trials; ++t) {
    const PointCloud cloud = random_cloud(rng, s.points);
    const RigidTransform g = draw_transform(rng, t, translation_only);
    const Points gx = apply(g, cloud.points);
    if (!same_graph(knn(cloud.points, params.config.k), knn(gx, params.config.k)) ||
        !same_graph(knn(cloud.points, params.orientation.config.k), knn(gx, params.orientation.config.k)) ||
        (!identity_frames && near_degenerate(params.orientation, cloud.points))) {
      ++skipped;
      continue;
    }
    // Task inputs, when the backbone expects them, are invariant constants here.
    if (extra > 0) {
      Rng in_rng = rng.split(t);
      std::vector<double> v(s.points * extra);
      for (double& e : v) e = in_rng.normal();
      const Tensor inputs = Tensor::from_data({s.points, extra}, std::move(v));
      opt.extra_features = [inputs](const std::vector<OrientationSet>&) { return inputs; };
    }
    const BackboneOutput a = backbone_forward(params, cloud.points, opt);
    const BackboneOutput b = backbone_forward(params, gx, opt);
    for (std::size_t l = 0; l < a.layers.size(); ++l) dev = std::max(dev, max_abs_diff(a.layers[l].data(), b.layers[l].data()));
  }
  std::string name = "feature_invariance." + to_string(params.config.kind);
  if (params.config.global_coords) name += "+global";
  if (translation_only) name += ".translation";
  return finish(std::move(name), s.trials, dev, s.tol, skipped);
}

AuditCheck audit_output_equivariance(const TaskModel& model, const AuditSettings& s, bool apply_frames) {
  if (s.trials == 0) throw ArgumentError("audit: trials must be >= 1");
  if (model.config.task == Task::classify) throw ConfigError("audit: output equivariance needs an equivariant head");
  NoGradGuard guard;
  Rng rng = Rng(s.seed).split(14);
  ModelOptions opt;
  opt.apply_frames = apply_frames;
  const bool positions = model.config.task == Task::nbody;
  double dev = 0.0;
  std::size_t skipped = 0;
  for (std::size_t t = 0; t < s.trials; ++t) {
    const PointCloud cloud = random_cloud(rng, s.points);
    const RigidTransform g = draw_transform(rng, t, false);
    const PointCloud gc = apply(g, cloud);
    const std::size_t k = model.backbone.config.k;
    if (!same_graph(knn(cloud.points, k), knn(gc.points, k)) ||
        !same_graph(knn(cloud.points, model.backbone.orientation.config.k),
                    knn(gc.points, model.backbone.orientation.config.k)) ||
        near_degenerate(model.backbone.orientation, cloud.points)) {
      ++skipped;
      continue;
    }
    const Points e = tensor_to_points(model_forward(model, cloud, opt).prediction);
    const Points ge = tensor_to_points(model_forward(model, gc, opt).prediction);
    const Points expect = positions ? apply(g, e) : Points(e * g.rotation.transpose());
    dev = std::max(dev, (ge - expect).cwiseAbs().maxCoeff());
  }
  return finish("output_equivariance", s.trials, dev, s.tol, skipped);
}

AuditCheck audit_output_norms(const TaskModel& model, const AuditSettings& s) {
  if (model.config.task == Task::classify) throw ConfigError("audit: output norms need an equivariant head");
  NoGradGuard guard;
  Rng rng = Rng(s.seed).split(15);
  double dev = 0.0;
  for (std::size_t t = 0; t < s.trials; ++t) {
    const PointCloud cloud = random_cloud(rng, s.points);
    const ModelOutput out = model_forward(model, cloud);
    const Points p = tensor_to_points(out.raw);
    const Points e = tensor_to_points(apply_frames(out.backbone.frames.front(), out.raw));
    dev = std::max(dev, (e.rowwise().norm() - p.rowwise().norm()).cwiseAbs().maxCoeff());
  }
  return finish("output_norm_preservation", s.trials, dev, 1e-12);
}

AuditCheck audit_frame_orthogonality(std::size_t draws, double tol, std::uint64_t seed) {
  if (draws == 0) throw ArgumentError("audit: draws must be >= 1");
  NoGradGuard guard;
  Rng rng = Rng(seed).split(16);
  std::vector<double> v1(draws * 3), v2(draws * 3);
  for (std::size_t i = 0; i < draws; ++i) {
    Vec3 a(rng.normal(), rng.normal(), rng.normal());
    Vec3 b(rng.normal(), rng.normal(), rng.normal());
    switch (i % 8) {
      case 1: a.setZero(); break;                                     // vanishing first vector
      case 2: b = a * rng.normal(); break;                            // parallel pair
      case 3: b.setZero(); break;                                     // vanishing second vector
      case 4: a *= 1e-7; break;                                       // below the threshold
      case 5: b = a + 1e-9 * b; break;                                // nearly parallel
      case 6: a = Vec3::UnitX() * rng.normal(); b = Vec3::UnitX(); break;  // parallel to a fallback axis
      case 7: a *= 1e4; b *= 1e-4; break;                             // badly scaled
      default: break;
    }
    for (int c = 0; c < 3; ++c) {
      v1[i * 3 + static_cast<std::size_t>(c)] = a[c];
      v2[i * 3 + static_cast<std::size_t>(c)] = b[c];
    }
  }
  const OrientationSet frames =
      gram_schmidt(Tensor::from_data({draws, 3}, std::move(v1)), Tensor::from_data({draws, 3}, std::move(v2)));
  double dev = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const Mat3 o = frames.frame(i);
    dev = std::max(dev, (o.transpose() * o - Mat3::Identity()).cwiseAbs().maxCoeff());
    dev = std::max(dev, std::abs(o.determinant() - 1.0));
  }
  return finish("frame_orthogonality", draws, dev, tol);
}

AuditCheck audit_gradients(const std::function<Tensor()>& loss, const ParamList& params,
                           const GradientAuditSettings& s, const std::string& name) {
  if (s.sampled == 0) throw ArgumentError("audit: sampled parameters must be >= 1");
  zero_grads(params);
  loss().backward();

  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t j = 0; j < params[p].tensor.numel(); ++j) all.emplace_back(p, j);
  }
  Rng rng = Rng(s.seed).split(17);
  const std::size_t m = std::min(s.sampled, all.size());
  for (std::size_t i = 0; i < m; ++i) std::swap(all[i], all[i + rng() % (all.size() - i)]);

  NoGradGuard guard;
  const double base = loss().item();
  double dev = 0.0;
  std::size_t accepted = 0, skipped = 0;
  for (std::size_t i = 0; i < all.size() && accepted < m; ++i) {
    if (i >= m) std::swap(all[i], all[i + rng() % (all.size() - i)]);
    const auto [p, j] = all[i];
    Tensor t = params[p].tensor;
    const double analytic = t.has_grad() ? t.grad()[j] : 0.0;
    auto w = t.mutable_data();
    const double saved = w[j];
    w[j] = saved + s.step;
    const double up = loss().item();
    w[j] = saved - s.step;
    const double down = loss().item();
    w[j] = saved;
    const double forward = (up - base) / s.step;
    const double backward = (base - down) / s.step;
    const double numeric = (up - down) / (2.0 * s.step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), s.floor});
    if (std::abs(forward - backward) > s.tol * std::max({std::abs(forward), std::abs(backward), s.floor})) {
      ++skipped;
      continue;
    }
    ++accepted;
    dev = std::max(dev, std::abs(analytic - numeric) / denom);
  }
  zero_grads(params);
  AuditCheck c = finish(name, accepted, dev, s.tol, skipped);
  c.pass = c.pass && accepted == m && skipped <= accepted;
  return c;
}

AuditCheck audit_model_gradients(const TaskModel& model, std::size_t points, const GradientAuditSettings& s) {
  Rng rng = Rng(s.seed).split(18);
  Example ex;
  ex.cloud = random_cloud(rng, points);
  if (model.config.task == Task::normals) ex.target = ex.cloud.normals;
  if (model.config.task == Task::nbody) {
    ex.target = ex.cloud.points;
    for (Eigen::Index i = 0; i < ex.target.size(); ++i) ex.target.data()[i] += 0.1 * rng.normal();
  }
  return audit_gradients([&] { return example_loss(model, ex); }, model.parameters(), s,
                         "gradients." + to_string(model.config.task) + "." + to_string(model.config.backbone.kind));
}

AuditCheck audit_wrong_backward(const GradientAuditSettings& s) {
  Rng rng = Rng(s.seed).split(19);
  std::vector<double> w(16), x(16);
  for (auto& e : w) e = rng.normal();
  for (auto& e : x) e = rng.normal();
  const Tensor wt = Tensor::from_data({16}, w, true);
  const Tensor xt = Tensor::from_data({16}, x);
  return audit_gradients([&] { return sum_all(broken_square(mul(wt, xt))); }, {{"w", wt}}, s, "wrong_backward");
}

AuditReport run_verification(const RunConfig& cfg, const VerifyOptions& o) {
  const AuditSettings& s = o.audit;
  if (s.trials == 0) throw ArgumentError("verify: trials must be >= 1");
  AuditReport report;
  const std::uint64_t seed = s.seed;

  ModelConfig head_cfg = cfg.model;
  if (head_cfg.task == Task::classify) head_cfg.task = Task::normals;
  const TaskModel equivariant = TaskModel::init(head_cfg, seed);
  const TaskModel model = TaskModel::init(cfg.model, seed);

  report.checks.push_back(audit_orientation_equivariance(model.backbone.orientation, s));

  std::vector<BackboneParams> backbones;
  for (BackboneKind kind : {BackboneKind::generic, BackboneKind::dgcnn, BackboneKind::rscnn}) {
    BackboneConfig b = cfg.model.backbone;
    b.kind = kind;
    Rng r = Rng(seed).split(20 + static_cast<std::uint64_t>(kind));
    backbones.push_back(BackboneParams::init(b, cfg.model.orientation, cfg.model.global, 0, r));
  }
  if (!cfg.model.backbone.global_coords) {
    BackboneConfig b = cfg.model.backbone;
    b.kind = BackboneKind::dgcnn;
    b.global_coords = true;
    Rng r = Rng(seed).split(24);
    backbones.push_back(BackboneParams::init(b, cfg.model.orientation, cfg.model.global, 0, r));
  }
  for (const auto& b : backbones) report.checks.push_back(audit_feature_invariance(b, s));
  report.checks.push_back(audit_feature_invariance(backbones[1], s, false, true));

  report.checks.push_back(audit_output_equivariance(equivariant, s));
  report.checks.push_back(audit_output_norms(equivariant, s));
  report.checks.push_back(audit_frame_orthogonality(o.orthogonality_draws, s.tol, seed));
  report.checks.push_back(audit_model_gradients(model, o.gradient_points, o.gradients));

  if (o.mutations) {
    AuditSettings few = s;
    few.trials = std::min<std::size_t>(s.trials, 5);
    auto sensitivity = [&](std::string name, const AuditCheck& broken) {
      AuditCheck c{std::move(name), broken.trials, broken.max_dev, o.mutation_margin, false, broken.skipped};
      c.pass = !broken.pass && broken.max_dev > o.mutation_margin;
      report.checks.push_back(std::move(c));
    };
    sensitivity("sensitivity.no_orthogonalization",
                audit_orientation_equivariance(model.backbone.orientation, few, FrameConstruction::unnormalized));
    sensitivity("sensitivity.identity_frames", audit_feature_invariance(backbones[1], few, true));
    sensitivity("sensitivity.raw_head_output", audit_output_equivariance(equivariant, few, false));
    sensitivity("sensitivity.wrong_backward", audit_wrong_backward(o.gradients));
  }
  return report;
}

}  // namespace orientmp
