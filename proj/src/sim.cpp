#include "nebp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nebp {
namespace {

using Rng = std::mt19937_64;

// Salt for the descriptor stream, so shapes can be attached independently of
// the kinematic draws.
constexpr std::uint64_t kShapeStreamSalt = 0x9e3779b97f4a7c15ULL;

int poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

Vec4 uniform_in_box(Rng& rng, const Roi& roi, double v_max) {
  std::uniform_real_distribution<double> ux(roi.x_min, roi.x_max);
  std::uniform_real_distribution<double> uy(roi.y_min, roi.y_max);
  std::uniform_real_distribution<double> uv(-v_max, v_max);
  Vec4 x;
  x(0) = ux(rng);
  x(1) = uy(rng);
  x(2) = uv(rng);
  x(3) = uv(rng);
  return x;
}

Vec4 gaussian(Rng& rng, const Mat4& chol) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec4 w;
  for (int k = 0; k < 4; ++k) w(k) = n01(rng);
  return chol * w;
}

bool inside(const Vec4& x, const Roi& roi, double v_max) {
  return roi.contains(x(0), x(1)) && std::abs(x(2)) <= v_max && std::abs(x(3)) <= v_max;
}

Mat4 cholesky_or_zero(const Mat4& m) {
  if (m.isZero(0.0)) return Mat4::Zero();
  Eigen::LDLT<Mat4> ldlt(m);
  // LDLT tolerates the semidefinite process noise of q = 0 style configs.
  const Mat4 L = ldlt.matrixL();
  const Vec4 d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  return ldlt.transpositionsP().transpose() * L * d.asDiagonal();
}

}  // namespace

std::vector<std::string> validate(const SimConfig& c) {
  std::vector<std::string> errors;
  auto prob = [](double v) { return v > 0.0 && v <= 1.0; };
  auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (c.n_frames < 0) errors.emplace_back("n_frames negative");
  if (c.initial_objects < 0) errors.emplace_back("initial_objects negative");
  if (!nonneg(c.birth_rate)) errors.emplace_back("birth_rate out of range");
  if (!nonneg(c.clutter_rate)) errors.emplace_back("clutter_rate out of range");
  if (!prob(c.p_s)) errors.emplace_back("p_s out of range");
  if (!prob(c.p_d)) errors.emplace_back("p_d out of range");
  if (!nonneg(c.q)) errors.emplace_back("q out of range");
  if (!(c.v_max > 0.0)) errors.emplace_back("v_max out of range");
  if (!(c.dt >= 0.0)) errors.emplace_back("dt out of range");
  if (c.shape_dim < 1) errors.emplace_back("shape_dim out of range");
  if (!nonneg(c.shape_noise)) errors.emplace_back("shape_noise out of range");
  if (!std::isfinite(c.clutter_shape_offset)) errors.emplace_back("clutter_shape_offset not finite");
  if (!(c.roi.x_max > c.roi.x_min && c.roi.y_max > c.roi.y_min)) errors.emplace_back("roi degenerate");
  if (!c.meas_cov.allFinite() || (c.meas_cov - c.meas_cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 ||
      Eigen::LDLT<Mat4>(c.meas_cov).vectorD().minCoeff() < 0.0) {
    errors.emplace_back("meas_cov not symmetric positive semidefinite");
  }
  return errors;
}

std::vector<TruthObject> truth_at(const Scenario& scenario, int frame) {
  std::vector<TruthObject> out;
  for (const auto& t : scenario.truth) {
    if (t.alive(frame)) out.push_back({t.id, t.at(frame)});
  }
  return out;
}

Scenario generate(const SimConfig& config) {
  const auto errors = validate(config);
  if (!errors.empty()) throw ValidationError("invalid sim config: " + errors.front());

  Rng rng(config.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> true_score(0.5, 1.0);
  std::uniform_real_distribution<double> clutter_score(0.05, 0.6);
  const Mat4 F = cv_transition(config.dt);
  const Mat4 q_chol = cholesky_or_zero(cv_process_noise(config.q, config.dt));
  const Mat4 r_chol = cholesky_or_zero(config.meas_cov);

  Scenario sc;
  sc.config = config;
  sc.frames.resize(static_cast<std::size_t>(config.n_frames));
  sc.origins.resize(static_cast<std::size_t>(config.n_frames));
  std::vector<std::size_t> alive;  // indices into sc.truth
  std::int64_t next_id = 0;

  auto spawn = [&](int frame) {
    TruthTrack t;
    t.id = next_id++;
    t.birth = frame;
    t.death = frame;
    t.states.push_back(uniform_in_box(rng, config.roi, config.v_max));
    sc.truth.push_back(std::move(t));
    alive.push_back(sc.truth.size() - 1);
  };

  for (int k = 0; k < config.n_frames; ++k) {
    if (k == 0) {
      for (int n = 0; n < config.initial_objects; ++n) spawn(0);
    } else {
      std::vector<std::size_t> survivors;
      for (std::size_t idx : alive) {
        TruthTrack& t = sc.truth[idx];
        if (u01(rng) >= config.p_s) continue;
        const Vec4 x = F * t.states.back() + gaussian(rng, q_chol);
        if (!inside(x, config.roi, config.v_max)) continue;
        t.states.push_back(x);
        t.death = k;
        survivors.push_back(idx);
      }
      alive = std::move(survivors);
    }
    const int births = poisson(rng, config.birth_rate);
    for (int n = 0; n < births; ++n) spawn(k);

    auto& dets = sc.frames[static_cast<std::size_t>(k)];
    auto& origin = sc.origins[static_cast<std::size_t>(k)];
    for (std::size_t idx : alive) {
      const TruthTrack& t = sc.truth[idx];
      if (u01(rng) >= config.p_d) continue;
      Detection d;
      d.z = t.states.back() + gaussian(rng, r_chol);
      d.score = true_score(rng);
      d.frame = k;
      if (!config.measure_velocity) d.z.tail<2>().setZero();
      if (!inside(d.z, config.roi, config.v_max)) continue;
      dets.push_back(std::move(d));
      origin.push_back(t.id);
    }
    const int n_clutter = poisson(rng, config.clutter_rate);
    for (int n = 0; n < n_clutter; ++n) {
      Detection d;
      d.z = uniform_in_box(rng, config.roi, config.v_max);
      if (!config.measure_velocity) d.z.tail<2>().setZero();
      d.score = clutter_score(rng);
      d.frame = k;
      dets.push_back(std::move(d));
      origin.push_back(kClutterOrigin);
    }
    // Report order carries no information about origin.
    std::vector<std::size_t> perm(dets.size());
    for (std::size_t n = 0; n < perm.size(); ++n) perm[n] = n;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Detection> shuffled;
    std::vector<std::int64_t> shuffled_origin;
    for (std::size_t n : perm) {
      shuffled.push_back(dets[n]);
      shuffled_origin.push_back(origin[n]);
    }
    dets = std::move(shuffled);
    origin = std::move(shuffled_origin);
  }
  return sc;
}

Scenario attach_shape_descriptors(Scenario sc, const SimConfig& config) {
  Rng rng(config.seed ^ kShapeStreamSalt);
  std::normal_distribution<double> n01(0.0, 1.0);
  const Index D = config.shape_dim;
  auto draw = [&]() {
    VectorXd v(D);
    for (Index k = 0; k < D; ++k) v(k) = n01(rng);
    return v;
  };
  sc.descriptor_book.clear();
  for (const auto& t : sc.truth) sc.descriptor_book[t.id] = draw();
  for (std::size_t k = 0; k < sc.frames.size(); ++k) {
    for (std::size_t j = 0; j < sc.frames[k].size(); ++j) {
      const std::int64_t origin = sc.origins[k][j];
      if (origin == kClutterOrigin) {
        sc.frames[k][j].shape = VectorXd::Constant(D, config.clutter_shape_offset) + draw();
      } else {
        sc.frames[k][j].shape = sc.descriptor_book.at(origin) + config.shape_noise * draw();
      }
    }
  }
  return sc;
}

Scenario simulate(const SimConfig& config) { return attach_shape_descriptors(generate(config), config); }

ModelParams model_params_from_sim(const SimConfig& c) {
  ModelParams p;
  p.p_d = c.p_d;
  p.p_s = c.p_s;
  p.mu_fa = std::max(c.clutter_rate, 1e-9);
  p.mu_n = std::max(c.birth_rate, 1e-9);
  p.roi = c.roi;
  p.v_max = c.v_max;
  p.q = std::max(c.q, 1e-9);
  p.meas_cov = c.meas_cov;
  p.dt = c.dt > 0.0 ? c.dt : defaults::kFramePeriod;
  p.measure_velocity = c.measure_velocity;
  return p;
}

}  // namespace nebp
