#pragma once

// Similarity of the current soft-sensor input to the training inputs,
// expressed as a confidence tau in [0, 1].

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "hekf/narx.hpp"

namespace hekf {

using PointCloud3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct Neighbor {
  Eigen::Index index = 0;
  double sq_distance = 0.0;
};

// Static k-d tree over 3-D points, exact Euclidean kNN.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(PointCloud3 points);

  // k nearest points sorted by ascending distance (ties by index).
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, int k) const;
  Eigen::Index size() const { return points_.rows(); }
  const PointCloud3& points() const { return points_; }

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t begin = 0;
    std::int32_t end = 0;
    Eigen::Vector3d lo;
    Eigen::Vector3d hi;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end);
  void search(std::int32_t node, const Eigen::Vector3d& q, int k, std::vector<Neighbor>& heap) const;

  PointCloud3 points_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
};

// Brute-force reference for the tree.
std::vector<Neighbor> brute_force_knn(const PointCloud3& points, const Eigen::Vector3d& query, int k);

// tau = (d_max - d) / d_max for d <= d_max, otherwise 0.
double confidence_from_distance(double d_k, double d_max);

struct ConfidenceSample {
  double d_k = 0.0;
  double tau = 0.0;
};

class ConfidenceModel {
 public:
  static constexpr int kDefaultK = 25;

  ConfidenceModel() = default;

  // training_inputs rows are [vx2, fz2, yaw_rate2] in SI units; the
  // standardizer is shared with the soft sensor.
  static ConfidenceModel build(const Eigen::MatrixXd& training_inputs,
                               std::shared_ptr<const Standardizer> standardizer, int k, double d_max);
  // Same, from points that are already standardized.
  static ConfidenceModel from_standardized(PointCloud3 points,
                                           std::shared_ptr<const Standardizer> standardizer, int k,
                                           double d_max);

  double mean_knn_distance(const Eigen::Vector3d& query) const;
  double mean_knn_distance_standardized(const Eigen::Vector3d& query) const;
  double confidence(double d_k) const { return confidence_from_distance(d_k, d_max_); }
  ConfidenceSample evaluate(const Eigen::Vector3d& query) const;

  int k() const { return k_; }
  double d_max() const { return d_max_; }
  const std::shared_ptr<const Standardizer>& standardizer() const { return standardizer_; }
  const PointCloud3& training_points() const { return tree_.points(); }
  const KdTree3& index() const { return tree_; }

 private:
  std::shared_ptr<const Standardizer> standardizer_;
  KdTree3 tree_;
  int k_ = kDefaultK;
  double d_max_ = 1.0;
};

// Percentile of held-out mean kNN distances. Each group (one maneuver) is
// queried against a tree built from all other groups; every stride-th
// sample of a group is used as a query.
double calibrate_d_max(const std::vector<Eigen::MatrixXd>& groups, const Standardizer& standardizer,
                       int k, double percentile = 0.95, int stride = 10);

// Histogram-binning confidence: count of the query's cell over the largest
// cell count, bins spanning the training range in each standardized channel.
class HistogramConfidence {
 public:
  HistogramConfidence(const PointCloud3& training, int n_grid);
  double confidence(const Eigen::Vector3d& query) const;

 private:
  int n_grid_;
  Eigen::Vector3d lo_;
  Eigen::Vector3d hi_;
  std::vector<std::uint32_t> counts_;
  std::uint32_t max_count_ = 0;
};

double histogram_confidence_baseline(const PointCloud3& training, int n_grid,
                                     const Eigen::Vector3d& query);

}  // namespace hekf
