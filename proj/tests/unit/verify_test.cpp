#include <gtest/gtest.h>
#include <json.hpp>

#include "orientmp/verify.hpp"

namespace orientmp {
namespace {

AuditSettings quick(std::size_t trials = 4, std::size_t points = 40) {
  AuditSettings s;
  s.trials = trials;
  s.points = points;
  return s;
}

ModelConfig small_model(Task task) {
  ModelConfig m = default_run_config(task).model;
  m.backbone.widths = {16, 16};
  m.backbone.k = 8;
  m.head_hidden = 16;
  m.orientation = {2, 8, 4, 8, 1};
  m.global = {1, 8, 4, 8};
  if (task == Task::nbody) m.backbone.k = m.orientation.k = 4;
  return m;
}

TEST(RandomCloud, CarriesEveryTaskInput) {
  Rng rng(1);
  const PointCloud c = random_cloud(rng, 12);
  EXPECT_EQ(c.points.rows(), 12);
  EXPECT_EQ(c.velocities.rows(), 12);
  EXPECT_EQ(c.charges.size(), 12);
  for (Eigen::Index i = 0; i < 12; ++i) {
    EXPECT_NEAR(c.normals.row(i).norm(), 1.0, 1e-12);
    EXPECT_EQ(std::abs(c.charges[i]), 1.0);
  }
  EXPECT_GE(c.label, 0);
  EXPECT_LT(c.label, kShapeClasses);
}

TEST(Audit, OrientationEquivarianceAndUnnormalizedMutation) {
  Rng rng(2);
  const OrientationNet net = OrientationNet::init({2, 8, 4, 8, 1}, rng);
  const AuditCheck good = audit_orientation_equivariance(net, quick());
  EXPECT_TRUE(good.pass) << good.max_dev;
  EXPECT_LT(good.max_dev, 1e-10);
  const AuditCheck bad = audit_orientation_equivariance(net, quick(), FrameConstruction::unnormalized);
  EXPECT_FALSE(bad.pass);
  EXPECT_GT(bad.max_dev, 1e-2);
}

TEST(Audit, FeatureInvarianceAndIdentityFramesMutation) {
  Rng rng(3);
  for (BackboneKind kind : {BackboneKind::generic, BackboneKind::dgcnn, BackboneKind::rscnn}) {
    BackboneConfig b;
    b.kind = kind;
    b.widths = {12, 12};
    b.k = 8;
    const BackboneParams p = BackboneParams::init(b, {2, 8, 4, 8, 1}, {}, 0, rng);
    const AuditCheck good = audit_feature_invariance(p, quick());
    EXPECT_TRUE(good.pass) << to_string(kind) << " " << good.max_dev;
    EXPECT_EQ(good.name, "feature_invariance." + to_string(kind));
    const AuditCheck bad = audit_feature_invariance(p, quick(), true);
    EXPECT_FALSE(bad.pass) << to_string(kind);
    EXPECT_GT(bad.max_dev, 1e-2);
    const AuditCheck shift = audit_feature_invariance(p, quick(), true, true);
    EXPECT_TRUE(shift.pass) << "identity frames keep translation invariance";
  }
}

TEST(Audit, OutputEquivarianceNormsAndRawHeadMutation) {
  for (Task task : {Task::normals, Task::nbody}) {
    const TaskModel model = TaskModel::init(small_model(task), 4);
    const std::size_t points = task == Task::nbody ? 5 : 40;
    const AuditCheck eq = audit_output_equivariance(model, quick(4, points));
    EXPECT_TRUE(eq.pass) << to_string(task) << " " << eq.max_dev;
    const AuditCheck raw = audit_output_equivariance(model, quick(4, points), false);
    EXPECT_FALSE(raw.pass) << to_string(task);
  }
  const TaskModel normals = TaskModel::init(small_model(Task::normals), 5);
  EXPECT_TRUE(audit_output_norms(normals, quick()).pass);
  const TaskModel classifier = TaskModel::init(small_model(Task::classify), 5);
  EXPECT_THROW(audit_output_equivariance(classifier, quick()), ConfigError);
  EXPECT_THROW(audit_output_norms(classifier, quick()), ConfigError);
}

TEST(Audit, FrameOrthogonalityIncludesDegenerateInputs) {
  const AuditCheck c = audit_frame_orthogonality(2000, 1e-8, 6);
  EXPECT_TRUE(c.pass);
  EXPECT_EQ(c.trials, 2000u);
  EXPECT_LT(c.max_dev, 1e-12);
}

TEST(Audit, GradientAuditAcceptsCorrectAndRejectsWrongBackward) {
  GradientAuditSettings s;
  s.sampled = 12;
  const Tensor w = Tensor::from_data({4, 3}, {0.3, -0.2, 0.5, 1.1, -0.7, 0.4, 0.9, 0.1, -0.6, 0.2, 0.8, -1.3}, true);
  const Tensor x = Tensor::from_data({3, 2}, {0.5, -1.0, 2.0, 0.25, -0.75, 1.5});
  const AuditCheck good = audit_gradients([&] { return sum_all(sigmoid(matmul(w, x))); }, {{"w", w}}, s);
  EXPECT_TRUE(good.pass) << good.max_dev;
  EXPECT_EQ(good.trials, 12u);
  EXPECT_EQ(good.skipped, 0u);

  const AuditCheck wrong = audit_wrong_backward(s);
  EXPECT_FALSE(wrong.pass);
  EXPECT_NEAR(wrong.max_dev, 0.5, 1e-6);
  s.sampled = 0;
  EXPECT_THROW(audit_gradients([&] { return sum_all(w); }, {{"w", w}}, s), ArgumentError);
}

TEST(Audit, GradientAuditSkipsKinksWithoutHidingThem) {
  // relu has a kink at 0; with every entry sitting on it no smooth sample exists.
  const Tensor w = Tensor::from_data({6}, std::vector<double>(6, 0.0), true);
  GradientAuditSettings s;
  s.sampled = 3;
  const AuditCheck c = audit_gradients([&] { return sum_all(relu(w)); }, {{"w", w}}, s);
  EXPECT_EQ(c.skipped, 6u);
  EXPECT_FALSE(c.pass);
}

TEST(Audit, WholeModelGradientsPass) {
  GradientAuditSettings s;
  s.sampled = 60;
  const AuditCheck c = audit_model_gradients(TaskModel::init(small_model(Task::normals), 8), 20, s);
  EXPECT_TRUE(c.pass) << c.max_dev << " skipped " << c.skipped;
  EXPECT_EQ(c.name, "gradients.normals.dgcnn");
}

TEST(Audit, ReportJsonAndDeterminism) {
  RunConfig cfg = default_run_config(Task::normals);
  cfg.model = small_model(Task::normals);
  VerifyOptions o;
  o.audit = quick(3, 40);
  o.orthogonality_draws = 500;
  o.gradients.sampled = 20;
  o.gradient_points = 16;
  const AuditReport r = run_verification(cfg, o);
  EXPECT_TRUE(r.pass()) << r.to_json(2);
  std::vector<std::string> names;
  for (const auto& c : r.checks) names.push_back(c.name);
  for (const char* want :
       {"orientation_equivariance", "feature_invariance.generic", "feature_invariance.dgcnn", "feature_invariance.rscnn",
        "feature_invariance.dgcnn+global", "output_equivariance", "output_norm_preservation", "frame_orthogonality",
        "gradients.normals.dgcnn", "sensitivity.no_orthogonalization", "sensitivity.identity_frames",
        "sensitivity.raw_head_output", "sensitivity.wrong_backward"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
  }
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j.at("checks").size(), r.checks.size());
  EXPECT_EQ(j.at("pass").get<bool>(), r.pass());
  EXPECT_EQ(r.to_json(), run_verification(cfg, o).to_json());

  o.audit.trials = 0;
  EXPECT_THROW(run_verification(cfg, o), ArgumentError);
}

}  // namespace
}  // namespace orientmp
