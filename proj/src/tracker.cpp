#include "nebp/tracker.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace nebp {
namespace {

Mat4 symmetrize(const Mat4& m) { return 0.5 * (m + m.transpose()); }

// log N(z; Hm, S) for all detections, S = H P H^T + R.
struct Innovation {
  MatrixXd H;
  MatrixXd S;
  Eigen::LLT<MatrixXd> llt;
  double log_norm = 0.0;
};

Innovation innovation(const KinematicState& x, const ModelParams& params) {
  Innovation inn;
  inn.H = measurement_matrix(params);
  inn.S = inn.H * x.covariance * inn.H.transpose() + measurement_covariance(params);
  inn.S = 0.5 * (inn.S + inn.S.transpose());
  inn.llt.compute(inn.S);
  if (inn.llt.info() != Eigen::Success) {
    throw NumericalError("singular innovation covariance");
  }
  const double log_det = 2.0 * inn.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  inn.log_norm = -0.5 * (static_cast<double>(inn.S.rows()) * std::log(2.0 * std::numbers::pi) + log_det);
  return inn;
}

double log_likelihood(const Innovation& inn, const VectorXd& residual) {
  const VectorXd w = inn.llt.matrixL().solve(residual);
  return inn.log_norm - 0.5 * w.squaredNorm();
}

}  // namespace

TrackerState predict(const TrackerState& state, const ModelParams& params) {
  const Mat4 F = cv_transition(params.dt);
  const Mat4 Q = cv_process_noise(params.q, params.dt);
  TrackerState out = state;
  for (auto& po : out.legacy) {
    po.state.mean = F * po.state.mean;
    po.state.covariance = symmetrize(F * po.state.covariance * F.transpose() + Q);
    po.existence *= params.p_s;
    if (!po.state.mean.allFinite() || !po.state.covariance.allFinite() ||
        !std::isfinite(po.existence)) {
      throw NumericalError("numerical overflow in prediction");
    }
  }
  return out;
}

double phi_b_zero(const Detection& detection, const ModelParams& params) {
  if (!in_measurement_box(detection.z, params)) throw ValidationError("out of ROI");
  // f_n = f_fa uniform on the same box and the likelihood integrates to one,
  // so mu_n * int f_n f(z|x) dx / (mu_fa f_fa(z)) reduces to mu_n / mu_fa.
  return params.mu_n / params.mu_fa + 1.0;
}

VectorXd phi_b_zero(const std::vector<Detection>& detections, const ModelParams& params) {
  VectorXd out(static_cast<Index>(detections.size()));
  for (std::size_t j = 0; j < detections.size(); ++j) {
    out(static_cast<Index>(j)) = phi_b_zero(detections[j], params);
  }
  return out;
}

MatrixXd association_weights(const std::vector<PotentialObject>& legacy,
                             const std::vector<Detection>& detections, const ModelParams& params) {
  const auto I = static_cast<Index>(legacy.size());
  const auto J = static_cast<Index>(detections.size());
  MatrixXd phi_a = MatrixXd::Zero(I, J + 1);

  std::vector<double> log_clutter(detections.size());
  std::vector<VectorXd> zs(detections.size());
  for (std::size_t j = 0; j < detections.size(); ++j) {
    const double f_fa = uniform_density(detections[j].z, params);
    if (f_fa <= 0.0) throw ValidationError("out of ROI");
    log_clutter[j] = std::log(params.mu_fa * f_fa);
    zs[j] = measured(detections[j].z, params);
  }

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  VectorXd log_w(J + 1);
  for (Index i = 0; i < I; ++i) {
    const auto& po = legacy[static_cast<std::size_t>(i)];
    const double r = po.existence;
    const double miss = 1.0 - r * params.p_d;
    log_w(0) = miss > 0.0 ? std::log(miss) : kNegInf;
    const double detect = r * params.p_d;
    if (J > 0 && detect > 0.0) {
      const Innovation inn = innovation(po.state, params);
      const VectorXd predicted_z = inn.H * po.state.mean;
      const double log_detect = std::log(detect);
      for (Index j = 0; j < J; ++j) {
        log_w(j + 1) = log_detect + log_likelihood(inn, zs[static_cast<std::size_t>(j)] - predicted_z) -
                       log_clutter[static_cast<std::size_t>(j)];
      }
    } else {
      log_w.tail(J).setConstant(kNegInf);
    }
    const double top = log_w.maxCoeff();
    if (!std::isfinite(top)) {
      phi_a(i, 0) = 1.0;
      continue;
    }
    VectorXd w = (log_w.array() - top).unaryExpr([](double v) { return std::exp(v); });
    phi_a.row(i) = (w / w.sum()).transpose();
  }
  return phi_a;
}

std::vector<PotentialObject> update_legacy_beliefs(const std::vector<PotentialObject>& predicted,
                                                   const std::vector<Detection>& detections,
                                                   const MatrixXd& phi_a, const MatrixXd& kappa,
                                                   const ModelParams& params) {
  const auto J = static_cast<Index>(detections.size());
  std::vector<PotentialObject> out;
  out.reserve(predicted.size());
  const MatrixXd R = measurement_covariance(params);

  for (std::size_t ii = 0; ii < predicted.size(); ++ii) {
    const auto i = static_cast<Index>(ii);
    const PotentialObject& po = predicted[ii];
    PotentialObject next = po;
    next.lineage = Lineage::Legacy;

    const double r = po.existence;
    const double miss_all = 1.0 - r * params.p_d;
    // Share of phi_a(i, 0) that belongs to "exists but missed".
    const double miss_exists_share = miss_all > 0.0 ? r * (1.0 - params.p_d) / miss_all : 0.0;
    const double w_miss = phi_a(i, 0) * kappa(i, 0);
    const double w_miss_exists = w_miss * miss_exists_share;

    VectorXd w_det(J);
    for (Index j = 0; j < J; ++j) w_det(j) = phi_a(i, j + 1) * kappa(i, j + 1);
    const double det_total = w_det.sum();
    const double total = w_miss + det_total;
    const double exists_total = w_miss_exists + det_total;

    if (!(total > 0.0) || !(exists_total > 0.0)) {
      next.existence = 0.0;
      out.push_back(std::move(next));
      continue;
    }
    next.existence = std::clamp(exists_total / total, 0.0, 1.0);

    if (det_total > 0.0) {
      const Innovation inn = innovation(po.state, params);
      const MatrixXd K = inn.llt.solve(inn.H * po.state.covariance).transpose();
      const MatrixXd IKH = MatrixXd::Identity(4, 4) - K * inn.H;
      const Mat4 P_upd = symmetrize(IKH * po.state.covariance * IKH.transpose() + K * R * K.transpose());
      const VectorXd predicted_z = inn.H * po.state.mean;

      std::vector<Vec4> means;
      std::vector<double> weights;
      means.reserve(static_cast<std::size_t>(J) + 1);
      weights.reserve(static_cast<std::size_t>(J) + 1);
      if (w_miss_exists > 0.0) {
        means.push_back(po.state.mean);
        weights.push_back(w_miss_exists);
      }
      for (Index j = 0; j < J; ++j) {
        if (w_det(j) <= 0.0) continue;
        const VectorXd z = measured(detections[static_cast<std::size_t>(j)].z, params);
        means.push_back(po.state.mean + K * (z - predicted_z));
        weights.push_back(w_det(j));
      }
      Vec4 mean = Vec4::Zero();
      for (std::size_t c = 0; c < means.size(); ++c) mean += weights[c] * means[c];
      mean /= exists_total;
      Mat4 cov = Mat4::Zero();
      for (std::size_t c = 0; c < means.size(); ++c) {
        const Vec4 d = means[c] - mean;
        const Mat4& P_c = (c == 0 && w_miss_exists > 0.0) ? po.state.covariance : P_upd;
        cov += weights[c] * (P_c + d * d.transpose());
      }
      next.state.mean = mean;
      next.state.covariance = symmetrize(cov / exists_total);

      // Shape follows the dominant association when it is a detection.
      Index best = 0;
      const double best_w = w_det.maxCoeff(&best);
      if (best_w / total > 0.5 && detections[static_cast<std::size_t>(best)].shape) {
        next.shape = detections[static_cast<std::size_t>(best)].shape;
      }
    }
    if (!next.state.mean.allFinite() || !next.state.covariance.allFinite()) {
      throw NumericalError("non-finite legacy belief");
    }
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<PotentialObject> update_legacy_beliefs(const std::vector<PotentialObject>& predicted,
                                                   const std::vector<Detection>& detections,
                                                   const Messages& msgs, const ModelParams& params) {
  return update_legacy_beliefs(predicted, detections, msgs.phi_a, msgs.kappa, params);
}

std::vector<PotentialObject> init_new_po_beliefs(const std::vector<Detection>& detections,
                                                 const VectorXd& phi_b0, const MatrixXd& iota,
                                                 const ModelParams& params) {
  std::vector<PotentialObject> out;
  out.reserve(detections.size());
  Mat4 cov = params.meas_cov;
  if (!params.measure_velocity) {
    cov.topRightCorner<2, 2>().setZero();
    cov.bottomLeftCorner<2, 2>().setZero();
    cov.bottomRightCorner<2, 2>() = (params.v_max * params.v_max / 3.0) * Eigen::Matrix2d::Identity();
  }
  for (std::size_t jj = 0; jj < detections.size(); ++jj) {
    const auto j = static_cast<Index>(jj);
    const double legacy_sum = iota.cols() > 1 ? iota.row(j).tail(iota.cols() - 1).sum() : 0.0;
    PotentialObject po;
    po.lineage = Lineage::New;
    po.state.mean = detections[jj].z;
    if (!params.measure_velocity) po.state.mean.tail<2>().setZero();
    po.state.covariance = cov;
    po.existence = std::clamp((phi_b0(j) - 1.0) / (phi_b0(j) + legacy_sum), 0.0, 1.0);
    po.shape = detections[jj].shape;
    out.push_back(std::move(po));
  }
  return out;
}

std::vector<PotentialObject> init_new_po_beliefs(const std::vector<Detection>& detections,
                                                 const Messages& msgs, const ModelParams& params) {
  return init_new_po_beliefs(detections, msgs.phi_b0, msgs.iota, params);
}

void object_scores(std::vector<PotentialObject>& legacy, const MatrixXd& phi_a,
                   const MatrixXd& kappa, std::vector<PotentialObject>& fresh,
                   const std::vector<Detection>& detections) {
  const auto J = static_cast<Index>(detections.size());
  for (std::size_t ii = 0; ii < legacy.size(); ++ii) {
    const auto i = static_cast<Index>(ii);
    double num = 0.0;
    double den = 0.0;
    for (Index j = 0; j < J; ++j) {
      const double w = phi_a(i, j + 1) * kappa(i, j + 1);
      num += w * detections[static_cast<std::size_t>(j)].score;
      den += w;
    }
    legacy[ii].score = legacy[ii].existence + (den < 1e-12 ? 0.0 : num / den);
  }
  for (std::size_t j = 0; j < fresh.size(); ++j) {
    fresh[j].score = fresh[j].existence + detections[j].score;
  }
}

PruneResult prune_and_declare(const std::vector<PotentialObject>& legacy,
                              const std::vector<PotentialObject>& fresh,
                              std::int64_t& next_track_id, const ModelParams& params) {
  PruneResult out;
  auto visit = [&](const std::vector<PotentialObject>& list, Lineage lineage, double t_dec) {
    for (std::size_t k = 0; k < list.size(); ++k) {
      const PotentialObject& po = list[k];
      if (!(po.existence >= params.t_pru)) continue;
      out.kept.push_back(po);
      out.sources.push_back({lineage, k});
      if (po.existence >= t_dec) {
        if (!out.kept.back().track_id) out.kept.back().track_id = next_track_id++;
        out.declared.push_back(out.kept.size() - 1);
      }
    }
  };
  visit(legacy, Lineage::Legacy, params.t_dec);
  visit(fresh, Lineage::New, params.t_dec_new);
  return out;
}

FrameContext bp_stage(const TrackerState& state, const std::vector<Detection>& detections,
                      const ModelParams& params) {
  FrameContext ctx;
  ctx.prior = state;
  ctx.predicted = predict(state, params);
  ctx.detections = detections;
  const MatrixXd phi_a = association_weights(ctx.predicted.legacy, detections, params);
  const VectorXd phi_b0 = phi_b_zero(detections, params);
  ctx.msgs = iterate_da_bp<double>(phi_a, phi_b0);
  return ctx;
}

StepResult finish_step(const FrameContext& ctx, const MatrixXd& kappa, const VectorXd& phi_b0,
                       const MatrixXd& iota, const ModelParams& params) {
  StepResult res;
  res.msgs = ctx.msgs;
  res.legacy_beliefs =
      update_legacy_beliefs(ctx.predicted.legacy, ctx.detections, ctx.msgs.phi_a, kappa, params);
  res.new_beliefs = init_new_po_beliefs(ctx.detections, phi_b0, iota, params);
  object_scores(res.legacy_beliefs, ctx.msgs.phi_a, kappa, res.new_beliefs, ctx.detections);

  std::int64_t next_id = ctx.predicted.next_track_id;
  PruneResult pr = prune_and_declare(res.legacy_beliefs, res.new_beliefs, next_id, params);
  const int frame = ctx.predicted.frame;
  for (std::size_t k : pr.declared) {
    const PotentialObject& po = pr.kept[k];
    DeclaredTrack t;
    t.frame = frame;
    t.track_id = *po.track_id;
    t.mean = po.state.mean;
    t.covariance_diagonal = po.state.covariance.diagonal();
    t.existence = po.existence;
    t.score = po.score;
    res.declared.push_back(t);
  }
  // Every PO handed over as legacy carries an identity.
  for (auto& po : pr.kept) {
    po.lineage = Lineage::Legacy;
    if (!po.track_id) po.track_id = next_id++;
  }
  res.state.legacy = std::move(pr.kept);
  res.state.frame = frame + 1;
  res.state.next_track_id = next_id;
  res.sources = std::move(pr.sources);
  return res;
}

StepResult bp_track_step(const TrackerState& state, const std::vector<Detection>& detections,
                         const ModelParams& params) {
  const FrameContext ctx = bp_stage(state, detections, params);
  return finish_step(ctx, ctx.msgs.kappa, ctx.msgs.phi_b0, ctx.msgs.iota, params);
}

}  // namespace nebp
