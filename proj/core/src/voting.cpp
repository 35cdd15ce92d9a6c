#include "affkp/voting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "affkp/error.hpp"

namespace affkp {

namespace {

struct UnionFind {
  std::vector<std::size_t> parent, size;
  explicit UnionFind(std::size_t n) : parent(n), size(n, 1) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size[a] < size[b] || (size[a] == size[b] && b < a)) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
  }
};

struct LexLess {
  bool operator()(const Vec3& a, const Vec3& b) const {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
  }
};

}  // namespace

void ClusterConfig::validate() const {
  if (!(separation > 0)) throw ConfigError("cluster: separation must be positive");
  if (!(bandwidth > 0)) throw ConfigError("cluster: bandwidth must be positive");
  if (!(tolerance > 0)) throw ConfigError("cluster: tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("cluster: max_iterations must be >= 1");
  if (!(merge_radius > 0)) throw ConfigError("cluster: merge_radius must be positive");
  if (min_component < 1) throw ConfigError("cluster: min_component must be >= 1");
  if (vote_start_limit < 1) throw ConfigError("cluster: vote_start_limit must be >= 1");
}

std::vector<std::vector<std::int64_t>> separate_instances(const PointCloudFrame& cloud,
                                                          const std::vector<std::uint8_t>& labels,
                                                          const ClusterConfig& cfg) {
  cfg.validate();
  if (labels.size() != cloud.size())
    throw DataError("separate_instances: labels do not align with cloud");

  const double eps = cfg.separation;
  const double eps2 = eps * eps;
  // Cells sized so any two points sharing a cell are within eps of each
  // other; connectivity across cells is checked pairwise.
  const double cell = eps / std::sqrt(3.0);

  std::vector<std::vector<std::int64_t>> result;

  for (int label = 1; label < kNumClasses; ++label) {
    std::vector<std::int64_t> pts;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) pts.push_back(static_cast<std::int64_t>(i));
    if (pts.empty()) continue;

    struct CellKey {
      long x, y, z;
      bool operator<(const CellKey& o) const {
        if (x != o.x) return x < o.x;
        if (y != o.y) return y < o.y;
        return z < o.z;
      }
    };
    std::map<CellKey, std::vector<std::size_t>> cells;  // local index into pts
    auto key_of = [&](const Vec3& p) {
      return CellKey{static_cast<long>(std::floor(p.x() / cell)),
                     static_cast<long>(std::floor(p.y() / cell)),
                     static_cast<long>(std::floor(p.z() / cell))};
    };
    for (std::size_t li = 0; li < pts.size(); ++li)
      cells[key_of(cloud.xyz[static_cast<std::size_t>(pts[li])])].push_back(li);

    UnionFind uf(pts.size());
    // Same-cell points are mutually within eps.
    for (const auto& [key, members] : cells)
      for (std::size_t m = 1; m < members.size(); ++m) uf.unite(members[0], members[m]);

    // Cross-cell links: any pair with distance <= eps merges both cells'
    // components; the scan stops at the first hit between two roots.
    for (const auto& [key, members] : cells) {
      for (long dx = 0; dx <= 2; ++dx) {
        for (long dy = dx == 0 ? 0 : -2; dy <= 2; ++dy) {
          for (long dz = (dx == 0 && dy == 0) ? 1 : -2; dz <= 2; ++dz) {
            double gx = std::max(std::abs(static_cast<double>(dx)) - 1.0, 0.0);
            double gy = std::max(std::abs(static_cast<double>(dy)) - 1.0, 0.0);
            double gz = std::max(std::abs(static_cast<double>(dz)) - 1.0, 0.0);
            if (cell * cell * (gx * gx + gy * gy + gz * gz) > eps2) continue;
            auto it = cells.find(CellKey{key.x + dx, key.y + dy, key.z + dz});
            if (it == cells.end()) continue;
            const auto& other = it->second;
            // Each cell is already one component, so a single root check and
            // the first crossing pair settle the link.
            if (uf.find(members[0]) == uf.find(other[0])) continue;
            bool linked = false;
            for (std::size_t a = 0; a < members.size() && !linked; ++a) {
              const Vec3& pa = cloud.xyz[static_cast<std::size_t>(pts[members[a]])];
              for (std::size_t b = 0; b < other.size(); ++b) {
                const Vec3& pb = cloud.xyz[static_cast<std::size_t>(pts[other[b]])];
                if ((pa - pb).squaredNorm() <= eps2) {
                  uf.unite(members[a], other[b]);
                  linked = true;
                  break;
                }
              }
            }
          }
        }
      }
    }

    std::map<std::size_t, std::vector<std::int64_t>> groups;
    for (std::size_t li = 0; li < pts.size(); ++li) groups[uf.find(li)].push_back(pts[li]);
    for (auto& [root, group] : groups) {
      if (group.size() < static_cast<std::size_t>(cfg.min_component)) continue;
      std::sort(group.begin(), group.end());
      result.push_back(std::move(group));
    }
  }

  // Deterministic, order-independent output: sort by (label, centroid).
  std::sort(result.begin(), result.end(),
            [&](const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
              std::uint8_t la = labels[static_cast<std::size_t>(a[0])];
              std::uint8_t lb = labels[static_cast<std::size_t>(b[0])];
              if (la != lb) return la < lb;
              Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
              for (std::int64_t i : a) ca += cloud.xyz[static_cast<std::size_t>(i)];
              for (std::int64_t i : b) cb += cloud.xyz[static_cast<std::size_t>(i)];
              ca /= static_cast<double>(a.size());
              cb /= static_cast<double>(b.size());
              return LexLess()(ca, cb);
            });
  return result;
}

std::array<std::vector<Vec3>, 4> vote(const PointCloudFrame& cloud,
                                      const std::vector<std::int64_t>& instance_points,
                                      const Eigen::MatrixXd& offsets) {
  if (instance_points.empty()) throw DataError("vote: empty instance");
  if (offsets.rows() != static_cast<Eigen::Index>(cloud.size()) || offsets.cols() != 12)
    throw DataError("vote: offsets do not align with cloud");
  std::array<std::vector<Vec3>, 4> out;
  for (int j = 0; j < 4; ++j) out[j].reserve(instance_points.size());
  for (std::int64_t idx : instance_points) {
    const Vec3& x = cloud.xyz[static_cast<std::size_t>(idx)];
    for (int j = 0; j < 4; ++j)
      out[j].emplace_back(x.x() + offsets(idx, 3 * j), x.y() + offsets(idx, 3 * j + 1),
                          x.z() + offsets(idx, 3 * j + 2));
  }
  return out;
}

ModeResult mean_shift(const std::vector<Vec3>& votes, const ClusterConfig& cfg) {
  cfg.validate();
  if (votes.empty()) throw DataError("mean_shift: no votes");

  // Canonical vote order makes the start subset independent of caller order.
  std::vector<Vec3> v = votes;
  std::sort(v.begin(), v.end(), LexLess());

  std::size_t stride = 1;
  if (v.size() > static_cast<std::size_t>(cfg.vote_start_limit))
    stride = (v.size() + cfg.vote_start_limit - 1) / cfg.vote_start_limit;

  const double h2 = cfg.bandwidth * cfg.bandwidth;
  auto shift_once = [&](const Vec3& y, Vec3& out) {
    Vec3 num = Vec3::Zero();
    double den = 0;
    for (const Vec3& p : v) {
      double d2 = (y - p).squaredNorm();
      double w;
      if (cfg.kernel == Kernel::kFlat)
        w = d2 <= h2 ? 1.0 : 0.0;
      else
        w = std::exp(-0.5 * d2 / h2);
      num += w * p;
      den += w;
    }
    if (den <= 0) {
      out = y;
      return;
    }
    out = num / den;
  };

  struct Basin {
    Vec3 sum = Vec3::Zero();
    int count = 0;
    Vec3 representative = Vec3::Zero();
  };
  std::vector<Basin> basins;
  bool all_converged = true;

  for (std::size_t s = 0; s < v.size(); s += stride) {
    Vec3 y = v[s];
    bool converged = false;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      Vec3 next;
      shift_once(y, next);
      double step = (next - y).norm();
      y = next;
      if (step < cfg.tolerance) {
        converged = true;
        break;
      }
    }
    if (!converged) all_converged = false;  // keep the current iterate

    bool merged = false;
    for (Basin& b : basins) {
      if ((y - b.representative).norm() <= cfg.merge_radius) {
        b.sum += y;
        b.count += 1;
        merged = true;
        break;
      }
    }
    if (!merged) basins.push_back({y, 1, y});
  }

  ModeResult out;
  out.converged = all_converged;
  const Basin* best = nullptr;
  Vec3 best_mode = Vec3::Zero();
  for (const Basin& b : basins) {
    Vec3 mode = b.sum / static_cast<double>(b.count);
    if (!best || b.count > best->count ||
        (b.count == best->count && LexLess()(mode, best_mode))) {
      best = &b;
      best_mode = mode;
    }
  }
  out.mode = best_mode;
  out.basin_count = best ? best->count : 0;
  return out;
}

std::vector<AffordanceInstance> extract_quadruplets(const PointCloudFrame& cloud,
                                                    const std::vector<std::uint8_t>& labels,
                                                    const Eigen::MatrixXd& offsets,
                                                    const ClusterConfig& cfg) {
  auto components = separate_instances(cloud, labels, cfg);
  std::vector<AffordanceInstance> out;
  out.reserve(components.size());
  for (auto& comp : components) {
    AffordanceInstance inst;
    inst.label = labels[static_cast<std::size_t>(comp[0])];
    inst.votes = vote(cloud, comp, offsets);
    for (int j = 0; j < 4; ++j) {
      ModeResult mode = mean_shift(inst.votes[static_cast<std::size_t>(j)], cfg);
      inst.keypoints[j] = mode.mode;
      inst.converged = inst.converged && mode.converged;
    }
    inst.points = std::move(comp);
    out.push_back(std::move(inst));
  }
  // separate_instances already ordered components by (label, centroid).
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<int>(i);
  return out;
}

}  // namespace affkp
