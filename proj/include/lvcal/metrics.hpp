#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "lvcal/lie.hpp"
#include "lvcal/scene.hpp"

namespace lvcal {

using PointSet = std::vector<Vec3>;

struct Histogram {
  std::vector<double> edges;    // bins + 1 values
  std::vector<std::size_t> counts;
  std::vector<double> density;  // unit area over the binned samples
  std::size_t clipped = 0;      // samples above the last edge
};

struct DisparityReport {
  std::vector<double> per_point;
  /// submap index of each entry of per_point
  std::vector<int> submap;
  double median = 0.0;
  double mean = 0.0;
  Histogram histogram;
};

inline constexpr int kDefaultHistogramBins = 100;

/// Exact nearest neighbour in a static point set.
class KdTree {
 public:
  explicit KdTree(PointSet points);

  std::size_t size() const { return points_.size(); }
  /// Squared distance to the nearest point; +inf for an empty tree.
  double nearest_squared(const Vec3& q) const;

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
    std::size_t begin = 0, end = 0;
  };
  int build(std::size_t begin, std::size_t end);
  void search(int node, const Vec3& q, double& best) const;

  PointSet points_;
  std::vector<Node> nodes_;
};

/// Distance from every point to the nearest point of any other set, then
/// summarize(). OpenMP over query points. Throws TooFewSubmaps.
DisparityReport point_disparity(const std::vector<PointSet>& submaps, int bins = kDefaultHistogramBins);
/// O(n^2) serial reference for point_disparity.
DisparityReport point_disparity_brute_force(const std::vector<PointSet>& submaps,
                                            int bins = kDefaultHistogramBins);

/// Fills median (midpoint rule), mean and a histogram over [0, p99.5].
/// Throws EmptyReport, InvalidArgument for bins < 1.
void summarize(DisparityReport& report, int bins = kDefaultHistogramBins);

/// Linear-interpolated percentile of unsorted data, p in [0, 100].
double percentile(std::vector<double> values, double p);
double median(std::vector<double> values);

/// World keypoints of each submap registered through the given extrinsic.
std::vector<PointSet> registered_submaps(const std::vector<Submap>& submaps, const Pose& extrinsic);

/// Header plus one row per point: submap,x,y,z,disparity.
void write_disparity_csv(std::ostream& os, const std::vector<PointSet>& submaps, const DisparityReport& report);

}  // namespace lvcal
