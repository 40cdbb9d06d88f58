#pragma once

#include "nebp/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nebp {

/// Gaussian kinematic state over (px, py, vx, vy).
struct KinematicState {
  Vec4 mean = Vec4::Zero();
  Mat4 covariance = Mat4::Identity();
};

enum class Lineage { Legacy, New };

/// Augmented potential-object state: kinematics plus a binary existence
/// variable, summarized by its probability.
struct PotentialObject {
  KinematicState state;
  double existence = 0.0;
  std::optional<std::int64_t> track_id;
  Lineage lineage = Lineage::New;
  double score = 0.0;
  std::optional<VectorXd> shape;
};

struct Detection {
  Vec4 z = Vec4::Zero();
  double score = 1.0;
  std::optional<VectorXd> shape;
  int frame = 0;
};

/// Axis-aligned rectangle in position space.
struct Roi {
  double x_min = -54.0;
  double x_max = 54.0;
  double y_min = -54.0;
  double y_max = 54.0;

  double area() const { return (x_max - x_min) * (y_max - y_min); }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
};

// Generation defaults shared by the simulator and the matched tracker model.
namespace defaults {
inline constexpr double kDetectionProb = 0.9;
inline constexpr double kSurvivalProb = 0.98;
inline constexpr double kClutterRate = 4.0;
inline constexpr double kBirthRate = 0.2;
inline constexpr double kVMax = 10.0;
inline constexpr double kProcessNoise = 0.5;
inline constexpr double kMeasVariance = 0.25;
inline constexpr double kFramePeriod = 0.5;
}  // namespace defaults

struct ModelParams {
  double p_d = defaults::kDetectionProb;
  double p_s = defaults::kSurvivalProb;
  double mu_fa = defaults::kClutterRate;
  double mu_n = defaults::kBirthRate;
  Roi roi;
  double v_max = defaults::kVMax;
  double q = defaults::kProcessNoise;
  Mat4 meas_cov = defaults::kMeasVariance * Mat4::Identity();
  double t_dec = 0.5;
  double t_dec_new = 0.5;
  double t_pru = 1e-3;
  double dt = defaults::kFramePeriod;
  // false: detections are used for position only (H = [I 0]).
  bool measure_velocity = true;
};

ModelParams default_params();

/// Every violated invariant, by name. Empty means valid.
std::vector<std::string> validate(const ModelParams& params);

/// Throws ValidationError listing all violations.
void require_valid(const ModelParams& params);

/// True iff z lies in roi x [-v_max, v_max]^2 (velocity box ignored when
/// velocity is not measured).
bool in_measurement_box(const Vec4& z, const ModelParams& params);

/// Uniform clutter / birth density over the measurement box; 0 outside.
double uniform_density(const Vec4& z, const ModelParams& params);

/// Constant-velocity transition for period dt.
Mat4 cv_transition(double dt);

/// Continuous white-noise-acceleration process covariance.
Mat4 cv_process_noise(double q, double dt);

/// Measurement matrix: identity, or position-only rows.
MatrixXd measurement_matrix(const ModelParams& params);

/// Measurement covariance restricted to the measured components.
MatrixXd measurement_covariance(const ModelParams& params);

/// Measured components of z.
VectorXd measured(const Vec4& z, const ModelParams& params);

}  // namespace nebp
