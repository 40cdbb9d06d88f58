#include "nebp/metrics.hpp"

#include "nebp/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace nebp {
namespace {

double planar_distance(const Vec4& a, const Vec4& b) { return std::hypot(a(0) - b(0), a(1) - b(1)); }

// Scores of matched estimates when every estimate is kept, descending.
std::vector<double> true_positive_scores(const TrackFrames& tracks, const TruthFrames& truth, double t_dist) {
  std::vector<double> scores;
  std::map<std::int64_t, std::int64_t> previous;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    static const std::vector<DeclaredTrack> kNone;
    const auto& est = k < tracks.size() ? tracks[k] : kNone;
    const FrameMatch m = match_frame(est, truth[k], t_dist, &previous);
    for (const auto& [e, t] : m.pairs) {
      scores.push_back(est[e].score);
      previous[truth[k][t].id] = est[e].track_id;
    }
  }
  std::sort(scores.begin(), scores.end(), std::greater<>());
  return scores;
}

}  // namespace

TruthFrames truth_frames(const Scenario& scenario) {
  TruthFrames out;
  out.reserve(static_cast<std::size_t>(scenario.n_frames()));
  for (int k = 0; k < scenario.n_frames(); ++k) out.push_back(truth_at(scenario, k));
  return out;
}

FrameMatch match_frame(const std::vector<DeclaredTrack>& estimates,
                       const std::vector<TruthObject>& truth, double t_dist,
                       const std::map<std::int64_t, std::int64_t>* previous) {
  FrameMatch out;
  std::vector<bool> est_used(estimates.size(), false);
  std::vector<bool> gt_used(truth.size(), false);

  if (previous) {
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const auto it = previous->find(truth[t].id);
      if (it == previous->end()) continue;
      for (std::size_t e = 0; e < estimates.size(); ++e) {
        if (est_used[e] || estimates[e].track_id != it->second) continue;
        if (planar_distance(estimates[e].mean, truth[t].state) <= t_dist) {
          out.pairs.emplace_back(e, t);
          est_used[e] = true;
          gt_used[t] = true;
        }
        break;
      }
    }
  }

  std::vector<std::size_t> free_est, free_gt;
  for (std::size_t e = 0; e < estimates.size(); ++e) {
    if (!est_used[e]) free_est.push_back(e);
  }
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (!gt_used[t]) free_gt.push_back(t);
  }
  if (!free_est.empty() && !free_gt.empty()) {
    const auto ne = static_cast<Index>(free_est.size());
    const auto nt = static_cast<Index>(free_gt.size());
    // Gated pairs cost more than any set of admissible ones.
    const double blocked = t_dist * static_cast<double>(std::min(ne, nt) + 1) + 1.0;
    MatrixXd dist(ne, nt);
    MatrixXd cost(ne, nt);
    for (Index e = 0; e < ne; ++e) {
      for (Index t = 0; t < nt; ++t) {
        dist(e, t) = planar_distance(estimates[free_est[static_cast<std::size_t>(e)]].mean,
                                     truth[free_gt[static_cast<std::size_t>(t)]].state);
        cost(e, t) = dist(e, t) <= t_dist ? dist(e, t) : blocked;
      }
    }
    const auto a = hungarian<double>(cost);
    for (Index e = 0; e < ne; ++e) {
      const Index t = a.row_to_col[static_cast<std::size_t>(e)];
      if (t >= 0 && dist(e, t) <= t_dist) {
        out.pairs.emplace_back(free_est[static_cast<std::size_t>(e)], free_gt[static_cast<std::size_t>(t)]);
      }
    }
  }
  out.fp = static_cast<int>(estimates.size() - out.pairs.size());
  out.fn = static_cast<int>(truth.size() - out.pairs.size());
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

ClearCounts clear_metrics(const TrackFrames& tracks, const TruthFrames& truth, double t_dist,
                          double min_score) {
  if (tracks.size() > truth.size()) throw ValidationError("clear_metrics: more track frames than truth frames");
  ClearCounts c;
  std::map<std::int64_t, std::int64_t> last_match;  // truth id -> estimate id
  std::map<std::int64_t, bool> matched_before;      // truth id -> matched in its previous frame
  std::set<std::int64_t> ever_matched;
  static const std::vector<DeclaredTrack> kNone;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    std::vector<DeclaredTrack> est;
    for (const auto& t : k < tracks.size() ? tracks[k] : kNone) {
      if (t.score >= min_score) est.push_back(t);
    }
    const auto& gt = truth[k];
    const FrameMatch m = match_frame(est, gt, t_dist, &last_match);
    c.tp += static_cast<long>(m.pairs.size());
    c.fp += m.fp;
    c.fn += m.fn;
    c.gt += static_cast<long>(gt.size());
    std::vector<bool> hit(gt.size(), false);
    for (const auto& [e, t] : m.pairs) {
      hit[t] = true;
      const std::int64_t gid = gt[t].id;
      const auto it = last_match.find(gid);
      if (it != last_match.end() && it->second != est[e].track_id) ++c.ids;
      last_match[gid] = est[e].track_id;
    }
    for (std::size_t t = 0; t < gt.size(); ++t) {
      const std::int64_t gid = gt[t].id;
      const auto prev = matched_before.find(gid);
      if (hit[t] && ever_matched.count(gid) && prev != matched_before.end() && !prev->second) ++c.frag;
      matched_before[gid] = hit[t];
      if (hit[t]) ever_matched.insert(gid);
    }
  }
  return c;
}

MetricReport amota(const TrackFrames& tracks, const TruthFrames& truth, double t_dist, int n_thresholds) {
  if (n_thresholds < 1) throw ValidationError("amota: n_thresholds must be >= 1");
  MetricReport rep;
  const ClearCounts all = clear_metrics(tracks, truth, t_dist);
  rep.ids = all.ids;
  rep.frag = all.frag;
  rep.fp = all.fp;
  rep.fn = all.fn;
  rep.tp = all.tp;
  rep.gt = all.gt;
  if (all.gt == 0) return rep;

  const std::vector<double> tp_scores = true_positive_scores(tracks, truth, t_dist);
  const auto P = static_cast<double>(all.gt);
  double total = 0.0;
  for (int n = 1; n <= n_thresholds; ++n) {
    RecallRow row;
    row.recall = static_cast<double>(n) / n_thresholds;
    const auto needed = static_cast<std::size_t>(std::ceil(row.recall * P - 1e-9));
    for (std::size_t k = needed; k >= 1 && k <= tp_scores.size(); ++k) {
      if (k > needed && tp_scores[k - 1] == tp_scores[k - 2]) continue;
      const ClearCounts c = clear_metrics(tracks, truth, t_dist, tp_scores[k - 1]);
      if (static_cast<double>(c.tp) < row.recall * P - 1e-9) continue;
      row.reached = true;
      row.threshold = tp_scores[k - 1];
      row.achieved_recall = static_cast<double>(c.tp) / P;
      row.fp = c.fp;
      row.fn = c.fn;
      row.ids = c.ids;
      row.motar = std::max(0.0, 1.0 - static_cast<double>(c.ids + c.fp) / static_cast<double>(c.tp));
      break;
    }
    total += row.motar;
    rep.per_recall.push_back(row);
  }
  rep.amota = total / n_thresholds;
  return rep;
}

const RecallRow* best_motar_row(const MetricReport& report) {
  const RecallRow* best = nullptr;
  for (const auto& r : report.per_recall) {
    if (!best || r.motar > best->motar) best = &r;
  }
  return best;
}

const RecallRow* row_at_recall(const MetricReport& report, double recall) {
  const RecallRow* best = nullptr;
  for (const auto& r : report.per_recall) {
    if (!best || std::abs(r.recall - recall) < std::abs(best->recall - recall)) best = &r;
  }
  return best;
}

}  // namespace nebp
