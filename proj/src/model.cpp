#include "nebp/model.hpp"

#include <cmath>
#include <sstream>

namespace nebp {

ModelParams default_params() { return ModelParams{}; }

std::vector<std::string> validate(const ModelParams& params) {
  std::vector<std::string> errors;
  auto in_open_closed = [](double v) { return v > 0.0 && v <= 1.0; };
  auto in_open = [](double v) { return v > 0.0 && v < 1.0; };
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };

  if (!in_open_closed(params.p_d)) errors.emplace_back("p_d out of range");
  if (!in_open_closed(params.p_s)) errors.emplace_back("p_s out of range");
  if (!positive(params.mu_fa)) errors.emplace_back("mu_fa out of range");
  if (!positive(params.mu_n)) errors.emplace_back("mu_n out of range");
  if (!positive(params.v_max)) errors.emplace_back("v_max out of range");
  if (!positive(params.q)) errors.emplace_back("q out of range");
  if (!positive(params.dt)) errors.emplace_back("dt out of range");
  if (!in_open(params.t_dec)) errors.emplace_back("t_dec out of range");
  if (!in_open(params.t_dec_new)) errors.emplace_back("t_dec_new out of range");
  if (!in_open(params.t_pru)) errors.emplace_back("t_pru out of range");
  if (!(params.t_pru < params.t_dec)) errors.emplace_back("t_pru < t_dec violated");
  if (!(params.t_pru < params.t_dec_new)) errors.emplace_back("t_pru < t_dec_new violated");
  const Roi& r = params.roi;
  if (!(std::isfinite(r.area()) && r.x_max > r.x_min && r.y_max > r.y_min)) {
    errors.emplace_back("roi degenerate");
  }
  const Mat4& R = params.meas_cov;
  if (!R.allFinite() || (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    errors.emplace_back("meas_cov not symmetric");
  } else if (Eigen::LLT<Mat4>(R).info() != Eigen::Success) {
    errors.emplace_back("meas_cov not positive definite");
  }
  return errors;
}

void require_valid(const ModelParams& params) {
  const auto errors = validate(params);
  if (errors.empty()) return;
  std::ostringstream os;
  os << "invalid model parameters:";
  for (const auto& e : errors) os << ' ' << e << ';';
  throw ValidationError(os.str());
}

bool in_measurement_box(const Vec4& z, const ModelParams& params) {
  if (!z.allFinite() || !params.roi.contains(z(0), z(1))) return false;
  if (!params.measure_velocity) return true;
  return std::abs(z(2)) <= params.v_max && std::abs(z(3)) <= params.v_max;
}

double uniform_density(const Vec4& z, const ModelParams& params) {
  if (!in_measurement_box(z, params)) return 0.0;
  double volume = params.roi.area();
  if (params.measure_velocity) volume *= 4.0 * params.v_max * params.v_max;
  return 1.0 / volume;
}

Mat4 cv_transition(double dt) {
  Mat4 F = Mat4::Identity();
  F(0, 2) = dt;
  F(1, 3) = dt;
  return F;
}

Mat4 cv_process_noise(double q, double dt) {
  const double dt2 = dt * dt;
  const double dt3 = dt2 * dt;
  Mat4 Q = Mat4::Zero();
  for (int axis = 0; axis < 2; ++axis) {
    Q(axis, axis) = q * dt3 / 3.0;
    Q(axis, axis + 2) = q * dt2 / 2.0;
    Q(axis + 2, axis) = q * dt2 / 2.0;
    Q(axis + 2, axis + 2) = q * dt;
  }
  return Q;
}

MatrixXd measurement_matrix(const ModelParams& params) {
  if (params.measure_velocity) return MatrixXd::Identity(4, 4);
  MatrixXd H = MatrixXd::Zero(2, 4);
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;
  return H;
}

MatrixXd measurement_covariance(const ModelParams& params) {
  if (params.measure_velocity) return params.meas_cov;
  return params.meas_cov.topLeftCorner<2, 2>();
}

VectorXd measured(const Vec4& z, const ModelParams& params) {
  if (params.measure_velocity) return z;
  return z.head<2>();
}

}  // namespace nebp
