#include "lvcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "lvcal/error.hpp"

namespace lvcal {

namespace {

constexpr std::size_t kLeafSize = 8;

// Shared by the tree and the brute-force path so both produce identical bits.
double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

void check_submaps(const std::vector<PointSet>& submaps) {
  if (submaps.size() < 2) throw Error(ErrorCode::TooFewSubmaps, "point disparity needs at least two submaps");
  for (std::size_t i = 0; i < submaps.size(); ++i) {
    if (submaps[i].empty()) throw Error(ErrorCode::TooFewSubmaps, fmt::format("submap {} has no points", i));
  }
}

DisparityReport labelled(const std::vector<PointSet>& submaps) {
  DisparityReport r;
  for (std::size_t i = 0; i < submaps.size(); ++i) r.submap.insert(r.submap.end(), submaps[i].size(), static_cast<int>(i));
  r.per_point.assign(r.submap.size(), 0.0);
  return r;
}

}  // namespace

KdTree::KdTree(PointSet points) : points_(std::move(points)) {
  if (!points_.empty()) build(0, points_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[begin], hi = points_[begin];
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[i]);
    hi = hi.cwiseMax(points_[i]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi(axis) == lo(axis)) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(points_.begin() + static_cast<std::ptrdiff_t>(begin),
                   points_.begin() + static_cast<std::ptrdiff_t>(mid),
                   points_.begin() + static_cast<std::ptrdiff_t>(end),
                   [axis](const Vec3& a, const Vec3& b) { return a(axis) < b(axis); });
  const double split = points_[mid](axis);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Vec3& q, double& best) const {
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) best = std::min(best, squared_distance(q, points_[i]));
    return;
  }
  // left holds coordinates <= split, right holds >= split
  const double d = q(n.axis) - n.split;
  const int near = d < 0.0 ? n.left : n.right;
  const int far = d < 0.0 ? n.right : n.left;
  search(near, q, best);
  if (d * d <= best) search(far, q, best);
}

double KdTree::nearest_squared(const Vec3& q) const {
  double best = std::numeric_limits<double>::infinity();
  if (!nodes_.empty()) search(0, q, best);
  return best;
}

DisparityReport point_disparity(const std::vector<PointSet>& submaps, int bins) {
  check_submaps(submaps);
  std::vector<KdTree> trees;
  trees.reserve(submaps.size());
  for (const PointSet& s : submaps) trees.emplace_back(s);

  DisparityReport r = labelled(submaps);
  std::vector<const Vec3*> query;
  for (const PointSet& s : submaps) {
    for (const Vec3& p : s) query.push_back(&p);
  }
  const auto n = static_cast<std::ptrdiff_t>(query.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(r.submap[static_cast<std::size_t>(i)]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < trees.size(); ++j) {
      if (j != own) best = std::min(best, trees[j].nearest_squared(*query[static_cast<std::size_t>(i)]));
    }
    r.per_point[static_cast<std::size_t>(i)] = std::sqrt(best);
  }
  summarize(r, bins);
  return r;
}

DisparityReport point_disparity_brute_force(const std::vector<PointSet>& submaps, int bins) {
  check_submaps(submaps);
  DisparityReport r = labelled(submaps);
  std::size_t k = 0;
  for (std::size_t i = 0; i < submaps.size(); ++i) {
    for (const Vec3& p : submaps[i]) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < submaps.size(); ++j) {
        if (j == i) continue;
        for (const Vec3& q : submaps[j]) best = std::min(best, squared_distance(p, q));
      }
      r.per_point[k++] = std::sqrt(best);
    }
  }
  summarize(r, bins);
  return r;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::EmptyReport, "percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyReport, "median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void summarize(DisparityReport& report, int bins) {
  if (report.per_point.empty()) throw Error(ErrorCode::EmptyReport, "no disparities to summarize");
  if (bins < 1) throw Error(ErrorCode::InvalidArgument, "bins must be >= 1");
  const std::vector<double>& v = report.per_point;
  report.median = median(v);
  report.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());

  double upper = percentile(v, 99.5);
  // a degenerate sample still gets a finite bin width
  if (!(upper > 0.0)) upper = 1.0;
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = upper * i / bins;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = upper / bins;
  std::size_t binned = 0;
  for (double x : v) {
    if (x > upper) {
      ++h.clipped;
      continue;
    }
    auto b = static_cast<std::size_t>(x / width);
    b = std::min(b, static_cast<std::size_t>(bins) - 1);
    // keep the bin consistent with the stored edges despite rounding
    while (b > 0 && x < h.edges[b]) --b;
    while (b + 1 < static_cast<std::size_t>(bins) && x >= h.edges[b + 1]) ++b;
    ++h.counts[b];
    ++binned;
  }
  h.density.resize(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    h.density[i] = static_cast<double>(h.counts[i]) / (static_cast<double>(binned) * (h.edges[i + 1] - h.edges[i]));
  }
  report.histogram = std::move(h);
}

std::vector<PointSet> registered_submaps(const std::vector<Submap>& submaps, const Pose& extrinsic) {
  std::vector<PointSet> out;
  out.reserve(submaps.size());
  for (const Submap& s : submaps) out.push_back(world_keypoints(s, extrinsic));
  return out;
}

void write_disparity_csv(std::ostream& os, const std::vector<PointSet>& submaps, const DisparityReport& report) {
  os << "submap,x,y,z,disparity\n";
  std::size_t k = 0;
  for (std::size_t i = 0; i < submaps.size(); ++i) {
    for (const Vec3& p : submaps[i]) {
      os << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", i, p.x(), p.y(), p.z(), report.per_point.at(k++));
    }
  }
}

}  // namespace lvcal
