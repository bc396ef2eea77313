#pragma once

#include <functional>
#include <string>
#include <vector>

#include "orientmp/config.hpp"
#include "orientmp/train.hpp"

namespace orientmp {

struct AuditCheck {
  std::string name;
  std::size_t trials = 0;
  double max_dev = 0.0;
  double tol = 0.0;
  bool pass = false;
  /// Trials dropped by the kNN tie guard or because a frame lies within twice
  /// the Gram-Schmidt fallback threshold. A check that drops more than half of
  /// its trials fails.
  std::size_t skipped = 0;
};

struct AuditReport {
  std::vector<AuditCheck> checks;

  bool pass() const;
  /// {"checks": [{name, trials, max_dev, tol, skipped, pass}], "pass": bool}
  std::string to_json(int indent = -1) const;
};

struct AuditSettings {
  std::size_t trials = 50;
  std::size_t points = 128;
  double tol = 1e-8;
  std::uint64_t seed = 0;
};

/// Gaussian cloud with velocities, ±1 charges, unit normals and a label, so any
/// task model can consume it.
PointCloud random_cloud(Rng& rng, std::size_t n);

/// max over trials of the larger of
///   max_i |O(RX+t)_i - R O(X)_i|_inf,  max_i |O_i^T O_i - I|_inf,  max_i |det O_i - 1|.
AuditCheck audit_orientation_equivariance(const OrientationNet& net, const AuditSettings& s,
                                          FrameConstruction mode = FrameConstruction::gram_schmidt);

/// max over trials, layers, points and channels of |h(RX+t) - h(X)|. Trials whose
/// transformed kNN graph differs from the original are skipped. With
/// `translation_only` the transforms carry R = I.
AuditCheck audit_feature_invariance(const BackboneParams& params, const AuditSettings& s, bool identity_frames = false,
                                    bool translation_only = false);

/// Equivariant-head models (normals, nbody): max_i |e(gX)_i - g·e(X)_i|_inf where
/// g acts on directions (normals) or on positions (nbody, velocities co-rotated).
AuditCheck audit_output_equivariance(const TaskModel& model, const AuditSettings& s, bool apply_frames = true);

/// max_i | |e_i| - |p_i| | on random clouds.
AuditCheck audit_output_norms(const TaskModel& model, const AuditSettings& s);

/// Orthonormality and det of Gram-Schmidt frames over random and degenerate
/// input pairs (zero, parallel, tiny vectors).
AuditCheck audit_frame_orthogonality(std::size_t draws, double tol, std::uint64_t seed);

struct GradientAuditSettings {
  std::size_t sampled = 200;
  double step = 1e-5;
  double tol = 1e-4;
  /// Denominator floor of the relative error.
  double floor = 1e-3;
  std::uint64_t seed = 0;
};

/// |a - n| / max(|a|, |n|, floor) over a random subsample of scalar parameters,
/// n the central difference of `loss`. A parameter whose one-sided differences
/// disagree by more than `tol` (a ReLU, max or kNN switch inside the step) is
/// counted in `skipped` and replaced by a fresh draw. Fails if fewer than
/// `sampled` parameters are smooth or more were skipped than accepted.
AuditCheck audit_gradients(const std::function<Tensor()>& loss, const ParamList& params,
                           const GradientAuditSettings& s, const std::string& name = "gradients");

/// Gradient audit of the full task loss on one random cloud.
AuditCheck audit_model_gradients(const TaskModel& model, std::size_t points, const GradientAuditSettings& s);

/// Toy loss sum((w x)^2) whose squaring op carries a wrong backward rule.
AuditCheck audit_wrong_backward(const GradientAuditSettings& s);

struct VerifyOptions {
  AuditSettings audit;
  GradientAuditSettings gradients;
  std::size_t orthogonality_draws = 10000;
  std::size_t gradient_points = 32;
  /// Also run the broken variants and record that each one fails.
  bool mutations = true;
  /// Threshold a broken variant's deviation must exceed.
  double mutation_margin = 1e-2;
};

/// Every audit against models initialized from `cfg.model` and `options.audit.seed`:
/// orientation, feature invariance for all three backbone kinds (and with
/// global coordinates), output equivariance, orthogonality, gradients, and
/// the sensitivity checks.
AuditReport run_verification(const RunConfig& cfg, const VerifyOptions& options);

}  // namespace orientmp
