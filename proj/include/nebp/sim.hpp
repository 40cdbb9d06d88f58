#pragma once

#include "nebp/model.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace nebp {

struct SimConfig {
  int n_frames = 100;
  int initial_objects = 0;
  double birth_rate = defaults::kBirthRate;  // mu_n
  double p_s = defaults::kSurvivalProb;
  double p_d = defaults::kDetectionProb;
  double clutter_rate = defaults::kClutterRate;  // mu_fa
  double q = defaults::kProcessNoise;
  Mat4 meas_cov = defaults::kMeasVariance * Mat4::Identity();
  Roi roi;
  double v_max = defaults::kVMax;
  double dt = defaults::kFramePeriod;
  int shape_dim = 8;
  double shape_noise = 0.3;
  double clutter_shape_offset = 1.5;
  // false: a position-only sensor; reported velocity components are 0.
  bool measure_velocity = true;
  std::uint64_t seed = 1;
};

std::vector<std::string> validate(const SimConfig& config);

struct TruthTrack {
  std::int64_t id = 0;
  int birth = 0;
  int death = 0;  // last frame alive, inclusive
  std::vector<Vec4> states;  // states[k - birth]

  bool alive(int frame) const { return frame >= birth && frame <= death; }
  const Vec4& at(int frame) const { return states[static_cast<std::size_t>(frame - birth)]; }
};

inline constexpr std::int64_t kClutterOrigin = -1;

struct Scenario {
  SimConfig config;
  std::vector<TruthTrack> truth;
  std::vector<std::vector<Detection>> frames;
  std::vector<std::vector<std::int64_t>> origins;  // parallel to frames, kClutterOrigin for clutter
  std::map<std::int64_t, VectorXd> descriptor_book;

  int n_frames() const { return static_cast<int>(frames.size()); }
};

/// Ground-truth objects alive in a frame.
struct TruthObject {
  std::int64_t id = 0;
  Vec4 state = Vec4::Zero();
};
std::vector<TruthObject> truth_at(const Scenario& scenario, int frame);

/// Births, survival, constant-velocity motion, detection with misses and
/// Poisson clutter. Objects leaving roi x [-v_max, v_max]^2 die; detections
/// falling outside that box are not reported.
Scenario generate(const SimConfig& config);

/// Latent per-track descriptor, observed with noise by each of its
/// detections; clutter draws around clutter_shape_offset * 1.
Scenario attach_shape_descriptors(Scenario scenario, const SimConfig& config);

/// generate followed by attach_shape_descriptors.
Scenario simulate(const SimConfig& config);

/// Tracker model matched to the generator.
ModelParams model_params_from_sim(const SimConfig& config);

}  // namespace nebp
