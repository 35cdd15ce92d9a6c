#include "affkp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "affkp/error.hpp"
#include "affkp/kdtree.hpp"

namespace affkp {

void FMeasureConfig::validate() const {
  if (!(beta > 0)) throw ConfigError("fmeasure: beta must be positive");
  if (!(sigma_sq > 0)) throw ConfigError("fmeasure: sigma_sq must be positive");
}

double weighted_fmeasure(const Eigen::VectorXd& pred_conf,
                         const std::vector<std::uint8_t>& gt_labels, std::uint8_t affordance,
                         const std::vector<Vec3>& xyz, const FMeasureConfig& cfg) {
  cfg.validate();
  if (affordance < 1 || affordance >= kNumClasses)
    throw DataError("weighted_fmeasure: affordance must be in 1..6");
  const std::size_t n = xyz.size();
  if (gt_labels.size() != n || static_cast<std::size_t>(pred_conf.size()) != n)
    throw DataError("weighted_fmeasure: inputs do not align");

  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < n; ++i)
    if (gt_labels[i] == affordance) fg.push_back(i);
  if (fg.empty())
    throw DataError("weighted_fmeasure: ground truth has no foreground for this affordance");

  Eigen::VectorXd err(n);
  double max_err = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double g = gt_labels[i] == affordance ? 1.0 : 0.0;
    err(static_cast<Eigen::Index>(i)) = std::abs(pred_conf(static_cast<Eigen::Index>(i)) - g);
    max_err = std::max(max_err, err(static_cast<Eigen::Index>(i)));
  }
  if (max_err == 0.0) return 1.0;  // exact prediction

  // Nearest foreground point per point (ties resolved to the smallest fg
  // index); distances in centimeters.
  std::vector<std::size_t> nearest_fg(n);
  std::vector<double> dist_cm(n, 0.0);
  std::vector<Vec3> fg_pts(fg.size());
  for (std::size_t k = 0; k < fg.size(); ++k) fg_pts[k] = xyz[fg[k]];
  KdTree3 tree;
  bool use_tree = fg.size() > 64;
  if (use_tree) tree.build(fg_pts);
  for (std::size_t i = 0; i < n; ++i) {
    if (gt_labels[i] == affordance) {
      nearest_fg[i] = i;
      continue;
    }
    std::size_t best = 0;
    if (use_tree) {
      best = tree.nearest(xyz[i]);
    } else {
      double best_d2 = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < fg.size(); ++k) {
        double d2 = (xyz[i] - fg_pts[k]).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = k;
        }
      }
    }
    nearest_fg[i] = fg[best];
    dist_cm[i] = (xyz[i] - fg_pts[best]).norm() * 100.0;
  }

  // Foreground-substituted error field, then Gaussian dependency smoothing
  // evaluated at foreground points.
  Eigen::VectorXd err_t(n);
  for (std::size_t i = 0; i < n; ++i)
    err_t(static_cast<Eigen::Index>(i)) = err(static_cast<Eigen::Index>(nearest_fg[i]));

  double inv_two_sigma = 1.0 / (2.0 * cfg.sigma_sq);
  Eigen::VectorXd ew(n);
  double sum_fg_ew = 0, sum_bg_ew = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double e = err(static_cast<Eigen::Index>(i));
    double weighted;
    if (gt_labels[i] == affordance) {
      double num = 0, den = 0;
      for (std::size_t j = 0; j < n; ++j) {
        double d_cm = (xyz[i] - xyz[j]).norm() * 100.0;
        double w = std::exp(-d_cm * d_cm * inv_two_sigma);
        num += w * err_t(static_cast<Eigen::Index>(j));
        den += w;
      }
      double ea = num / den;
      weighted = std::min(e, ea);  // smoothing may only reduce foreground error
    } else {
      double b = 2.0 - std::exp(cfg.alpha_w * dist_cm[i]);
      weighted = e * b;
    }
    ew(static_cast<Eigen::Index>(i)) = weighted;
    if (gt_labels[i] == affordance)
      sum_fg_ew += weighted;
    else
      sum_bg_ew += weighted;
  }

  double nf = static_cast<double>(fg.size());
  double tpw = nf - sum_fg_ew;
  double fpw = sum_bg_ew;
  double recall = 1.0 - sum_fg_ew / nf;
  double precision = (tpw + fpw) > 0 ? tpw / (tpw + fpw) : 0.0;
  if (precision + recall <= 0) return 0.0;
  double b2 = cfg.beta * cfg.beta;
  return (1.0 + b2) * precision * recall / (b2 * precision + recall);
}

double d_aff(const std::vector<KeypointQuadruplet>& gt_quadruplets) {
  if (gt_quadruplets.empty()) throw DataError("d_aff: no ground-truth quadruplets");
  double total = 0;
  for (const KeypointQuadruplet& q : gt_quadruplets) {
    Vec3 center = q.centroid();
    for (int j = 0; j < 4; ++j) total += (q[j] - center).norm();
  }
  return total / (4.0 * static_cast<double>(gt_quadruplets.size()));
}

double nmse(const std::vector<MatchedPair>& matched, double d) {
  if (!(d > 0)) throw DataError("nmse: normalization factor must be positive");
  if (matched.empty()) throw DataError("nmse: no matched pairs");
  double total = 0;
  for (const MatchedPair& m : matched)
    for (int j = 0; j < 4; ++j) total += (m.pred[j] - m.gt[j]).norm() / d;
  return total / (4.0 * static_cast<double>(matched.size()));
}

double pck3d(const std::vector<MatchedPair>& matched, int unmatched_gt, double d,
             double threshold_frac) {
  if (!(d > 0)) throw DataError("pck3d: normalization factor must be positive");
  int c_aff = static_cast<int>(matched.size()) + unmatched_gt;
  if (c_aff == 0) throw DataError("pck3d: no ground-truth quadruplets");
  double gate = threshold_frac * d;
  int correct = 0;
  for (const MatchedPair& m : matched) {
    bool ok = true;
    for (int j = 0; j < 4 && ok; ++j) ok = (m.pred[j] - m.gt[j]).norm() <= gate;
    if (ok) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(c_aff);
}

std::vector<std::pair<int, int>> min_cost_assignment(const Eigen::MatrixXd& cost) {
  int rows = static_cast<int>(cost.rows());
  int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return {};
  bool transposed = rows > cols;
  Eigen::MatrixXd a = transposed ? Eigen::MatrixXd(cost.transpose()) : cost;
  int n = static_cast<int>(a.rows());
  int m = static_cast<int>(a.cols());

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, kInf);
    std::vector<bool> used(static_cast<std::size_t>(m) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                     v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::pair<int, int>> pairs;
  for (int j = 1; j <= m; ++j) {
    int i = p[static_cast<std::size_t>(j)];
    if (i == 0) continue;
    if (transposed)
      pairs.emplace_back(j - 1, i - 1);
    else
      pairs.emplace_back(i - 1, j - 1);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

MatchResult match_quadruplets(const std::vector<KeypointQuadruplet>& pred,
                              const std::vector<KeypointQuadruplet>& gt, double gate_distance) {
  MatchResult out;
  if (pred.empty() || gt.empty()) {
    for (int i = 0; i < static_cast<int>(pred.size()); ++i) out.unmatched_pred.push_back(i);
    for (int i = 0; i < static_cast<int>(gt.size()); ++i) out.unmatched_gt.push_back(i);
    return out;
  }
  Eigen::MatrixXd cost(pred.size(), gt.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < gt.size(); ++j)
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (pred[i].centroid() - gt[j].centroid()).norm();

  std::vector<bool> pred_used(pred.size(), false), gt_used(gt.size(), false);
  for (auto [pi, gj] : min_cost_assignment(cost)) {
    if (cost(pi, gj) > gate_distance) continue;
    out.pairs.emplace_back(pi, gj);
    pred_used[static_cast<std::size_t>(pi)] = true;
    gt_used[static_cast<std::size_t>(gj)] = true;
  }
  for (int i = 0; i < static_cast<int>(pred.size()); ++i)
    if (!pred_used[static_cast<std::size_t>(i)]) out.unmatched_pred.push_back(i);
  for (int j = 0; j < static_cast<int>(gt.size()); ++j)
    if (!gt_used[static_cast<std::size_t>(j)]) out.unmatched_gt.push_back(j);
  return out;
}

MetricsReport evaluate_scenes(const std::vector<SceneEvaluation>& scenes,
                              const FMeasureConfig& cfg, double threshold_frac) {
  cfg.validate();
  MetricsReport report;

  for (int aff = 1; aff < kNumClasses; ++aff) {
    AffordanceMetrics& m = report.per_affordance[static_cast<std::size_t>(aff)];

    std::vector<KeypointQuadruplet> all_gt;
    for (const SceneEvaluation& s : scenes)
      for (const AffordanceInstance& inst : s.gt_instances)
        if (inst.label == aff) all_gt.push_back(inst.keypoints);
    if (all_gt.empty()) continue;  // absent, excluded from macro averages
    m.present = true;
    m.c_aff = static_cast<int>(all_gt.size());
    m.d_aff = d_aff(all_gt);
    if (!(m.d_aff > 0)) {
      m.degenerate = true;
      continue;
    }

    std::vector<MatchedPair> matched;
    int unmatched_gt_total = 0;
    double f_sum = 0;
    int f_scenes = 0;
    for (const SceneEvaluation& s : scenes) {
      std::vector<KeypointQuadruplet> preds, gts;
      for (const AffordanceInstance& inst : s.pred_instances)
        if (inst.label == aff) preds.push_back(inst.keypoints);
      for (const AffordanceInstance& inst : s.gt_instances)
        if (inst.label == aff) gts.push_back(inst.keypoints);
      if (!gts.empty()) {
        MatchResult mr = match_quadruplets(preds, gts, m.d_aff);
        for (auto [pi, gj] : mr.pairs)
          matched.push_back({preds[static_cast<std::size_t>(pi)],
                             gts[static_cast<std::size_t>(gj)]});
        unmatched_gt_total += static_cast<int>(mr.unmatched_gt.size());
      }

      bool fg_here = false;
      for (std::uint8_t l : s.gt_labels)
        if (l == aff) {
          fg_here = true;
          break;
        }
      if (fg_here && s.scores.rows() > 0) {
        f_sum += weighted_fmeasure(s.scores.col(aff), s.gt_labels,
                                   static_cast<std::uint8_t>(aff), s.xyz, cfg);
        ++f_scenes;
      }
    }

    m.matched = static_cast<int>(matched.size());
    m.fmeasure_scenes = f_scenes;
    m.fmeasure = f_scenes > 0 ? f_sum / f_scenes : 0.0;
    m.nmse = matched.empty() ? 0.0 : nmse(matched, m.d_aff);
    m.pck = pck3d(matched, unmatched_gt_total, m.d_aff, threshold_frac);
    double gate = threshold_frac * m.d_aff;
    m.c_correct = 0;
    for (const MatchedPair& pair : matched) {
      bool ok = true;
      for (int j = 0; j < 4 && ok; ++j) ok = (pair.pred[j] - pair.gt[j]).norm() <= gate;
      if (ok) ++m.c_correct;
    }
  }

  int counted = 0;
  for (int aff = 1; aff < kNumClasses; ++aff) {
    const AffordanceMetrics& m = report.per_affordance[static_cast<std::size_t>(aff)];
    if (!m.present || m.degenerate) continue;
    report.macro_f += m.fmeasure;
    report.macro_nmse += m.nmse;
    report.macro_pck += m.pck;
    ++counted;
  }
  report.affordances_present = counted;
  if (counted > 0) {
    report.macro_f /= counted;
    report.macro_nmse /= counted;
    report.macro_pck /= counted;
  }
  return report;
}

namespace {

nlohmann::json metrics_to_json(const MetricsReport& report) {
  nlohmann::json per;
  for (int aff = 1; aff < kNumClasses; ++aff) {
    const AffordanceMetrics& m = report.per_affordance[static_cast<std::size_t>(aff)];
    nlohmann::json row = {{"present", m.present}};
    if (m.present) {
      row["degenerate"] = m.degenerate;
      row["d_aff"] = m.d_aff;
      row["c_aff"] = m.c_aff;
      if (!m.degenerate) {
        row["weighted_f"] = m.fmeasure;
        row["nmse"] = m.nmse;
        row["pck_0.3"] = m.pck;
        row["c_correct"] = m.c_correct;
        row["matched"] = m.matched;
        row["fmeasure_scenes"] = m.fmeasure_scenes;
      }
    }
    per[kAffordanceNames[aff]] = row;
  }
  return {{"per_affordance", per},
          {"macro",
           {{"weighted_f", report.macro_f},
            {"nmse", report.macro_nmse},
            {"pck_0.3", report.macro_pck},
            {"affordances", report.affordances_present}}}};
}

}  // namespace

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << metrics_to_json(report).dump(2) << "\n";
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.precision(17);
  f << "affordance,weighted_f,nmse,pck_0.3\n";
  for (int aff = 1; aff < kNumClasses; ++aff) {
    const AffordanceMetrics& m = report.per_affordance[static_cast<std::size_t>(aff)];
    if (!m.present || m.degenerate) continue;
    f << kAffordanceNames[aff] << "," << m.fmeasure << "," << m.nmse << "," << m.pck << "\n";
  }
  f << "average," << report.macro_f << "," << report.macro_nmse << "," << report.macro_pck << "\n";
  if (!f) throw DataError("short write: " + path.string());
}

}  // namespace affkp
