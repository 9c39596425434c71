#include "hekf/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hekf/errors.hpp"

namespace hekf {

namespace {

constexpr std::int32_t kLeafSize = 16;

inline bool closer(const Neighbor& a, const Neighbor& b) {
  return a.sq_distance < b.sq_distance || (a.sq_distance == b.sq_distance && a.index < b.index);
}

// Squared distance from q to the box [lo, hi].
inline double box_distance(const Eigen::Vector3d& q, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  double d = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double e = q[i] < lo[i] ? lo[i] - q[i] : (q[i] > hi[i] ? q[i] - hi[i] : 0.0);
    d += e * e;
  }
  return d;
}

}  // namespace

KdTree3::KdTree3(PointCloud3 points) : points_(std::move(points)) {
  if (points_.rows() == 0) throw ConfigError("KdTree3: no points");
  if (!points_.allFinite()) throw ConfigError("KdTree3: non-finite points");
  if (points_.rows() > std::numeric_limits<std::int32_t>::max() / 2) {
    throw ConfigError("KdTree3: too many points");
  }
  order_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * points_.rows() / kLeafSize + 2));
  build(0, static_cast<std::int32_t>(points_.rows()));
}

std::int32_t KdTree3::build(std::int32_t begin, std::int32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (std::int32_t i = begin; i < end; ++i) {
    const Eigen::Vector3d p = points_.row(order_[static_cast<std::size_t>(i)]).transpose();
    node.lo = node.lo.cwiseMin(p);
    node.hi = node.hi.cwiseMax(p);
  }
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) return id;

  Eigen::Index axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  if (node.hi[axis] == node.lo[axis]) return id;  // all points identical
  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) { return points_(a, axis) < points_(b, axis); });
  const double split = points_(order_[static_cast<std::size_t>(mid)], axis);
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].axis = static_cast<int>(axis);
  nodes_[static_cast<std::size_t>(id)].split = split;
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree3::search(std::int32_t id, const Eigen::Vector3d& q, int k, std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  if (static_cast<int>(heap.size()) == k && box_distance(q, node.lo, node.hi) > heap.front().sq_distance) {
    return;
  }
  if (node.axis < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) {
      const std::int32_t p = order_[static_cast<std::size_t>(i)];
      const Neighbor n{p, (points_.row(p).transpose() - q).squaredNorm()};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(n);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(n, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = n;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  const bool go_left = q[node.axis] < node.split;
  search(go_left ? node.left : node.right, q, k, heap);
  search(go_left ? node.right : node.left, q, k, heap);
}

std::vector<Neighbor> KdTree3::knn(const Eigen::Vector3d& query, int k) const {
  if (k < 1 || k > points_.rows()) throw ConfigError("KdTree3: k must be in [1, N]");
  std::vector<Neighbor> heap;
  heap.reserve(static_cast<std::size_t>(k));
  search(0, query, k, heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

std::vector<Neighbor> brute_force_knn(const PointCloud3& points, const Eigen::Vector3d& query, int k) {
  if (k < 1 || k > points.rows()) throw ConfigError("brute_force_knn: k must be in [1, N]");
  std::vector<Neighbor> all(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    all[static_cast<std::size_t>(i)] = {i, (points.row(i).transpose() - query).squaredNorm()};
  }
  std::partial_sort(all.begin(), all.begin() + k, all.end(), closer);
  all.resize(static_cast<std::size_t>(k));
  return all;
}

double confidence_from_distance(double d_k, double d_max) {
  if (!(d_max > 0.0)) throw ConfigError("confidence: d_max must be positive");
  if (d_k < 0.0 || std::isnan(d_k)) throw DomainError("confidence: d_k must be non-negative");
  return d_k <= d_max ? (d_max - d_k) / d_max : 0.0;
}

ConfidenceModel ConfidenceModel::build(const Eigen::MatrixXd& training_inputs,
                                       std::shared_ptr<const Standardizer> standardizer, int k,
                                       double d_max) {
  if (!standardizer || standardizer->channels() != 3) {
    throw ConfigError("ConfidenceModel: a 3-channel standardizer is required");
  }
  if (training_inputs.cols() != 3) throw ConfigError("ConfidenceModel: training inputs need 3 columns");
  PointCloud3 pts = standardizer->apply_rows(training_inputs);
  return from_standardized(std::move(pts), std::move(standardizer), k, d_max);
}

ConfidenceModel ConfidenceModel::from_standardized(PointCloud3 points,
                                                   std::shared_ptr<const Standardizer> standardizer,
                                                   int k, double d_max) {
  if (!standardizer || standardizer->channels() != 3) {
    throw ConfigError("ConfidenceModel: a 3-channel standardizer is required");
  }
  if (k < 1) throw ConfigError("ConfidenceModel: K must be at least 1");
  if (points.rows() < k) {
    throw ConfigError("ConfidenceModel: " + std::to_string(points.rows()) +
                      " training points are fewer than K = " + std::to_string(k));
  }
  if (!(d_max > 0.0) || !std::isfinite(d_max)) throw ConfigError("ConfidenceModel: d_max must be positive");
  ConfidenceModel m;
  m.standardizer_ = std::move(standardizer);
  m.tree_ = KdTree3(std::move(points));
  m.k_ = k;
  m.d_max_ = d_max;
  return m;
}

double ConfidenceModel::mean_knn_distance_standardized(const Eigen::Vector3d& query) const {
  const auto nn = tree_.knn(query, k_);
  double sum = 0.0;
  for (const auto& n : nn) sum += n.sq_distance;
  return sum / static_cast<double>(k_);
}

double ConfidenceModel::mean_knn_distance(const Eigen::Vector3d& query) const {
  return mean_knn_distance_standardized(standardizer_->apply(Eigen::VectorXd(query)));
}

ConfidenceSample ConfidenceModel::evaluate(const Eigen::Vector3d& query) const {
  ConfidenceSample s;
  s.d_k = mean_knn_distance(query);
  s.tau = confidence(s.d_k);
  return s;
}

double calibrate_d_max(const std::vector<Eigen::MatrixXd>& groups, const Standardizer& standardizer,
                       int k, double percentile, int stride) {
  if (groups.size() < 2) throw ConfigError("calibrate_d_max: need at least two groups");
  if (!(percentile > 0.0 && percentile <= 1.0)) throw ConfigError("calibrate_d_max: bad percentile");
  if (stride < 1) throw ConfigError("calibrate_d_max: stride must be positive");
  std::vector<PointCloud3> std_groups;
  for (const auto& g : groups) std_groups.emplace_back(standardizer.apply_rows(g));
  std::vector<double> distances;
  for (std::size_t held = 0; held < std_groups.size(); ++held) {
    Eigen::Index rows = 0;
    for (std::size_t j = 0; j < std_groups.size(); ++j) {
      if (j != held) rows += std_groups[j].rows();
    }
    PointCloud3 rest(rows, 3);
    Eigen::Index r = 0;
    for (std::size_t j = 0; j < std_groups.size(); ++j) {
      if (j == held) continue;
      rest.middleRows(r, std_groups[j].rows()) = std_groups[j];
      r += std_groups[j].rows();
    }
    const KdTree3 tree(std::move(rest));
    for (Eigen::Index i = 0; i < std_groups[held].rows(); i += stride) {
      const auto nn = tree.knn(std_groups[held].row(i).transpose(), k);
      double sum = 0.0;
      for (const auto& n : nn) sum += n.sq_distance;
      distances.push_back(sum / static_cast<double>(k));
    }
  }
  std::sort(distances.begin(), distances.end());
  const auto pos = static_cast<std::size_t>(
      std::ceil(percentile * static_cast<double>(distances.size())) - 1.0);
  const double d = distances[std::min(pos, distances.size() - 1)];
  return std::max(d, 1e-12);
}

HistogramConfidence::HistogramConfidence(const PointCloud3& training, int n_grid) : n_grid_(n_grid) {
  if (n_grid < 1) throw ConfigError("histogram confidence: n_grid must be at least 1");
  if (training.rows() == 0) throw ConfigError("histogram confidence: no training data");
  lo_ = training.colwise().minCoeff().transpose();
  hi_ = training.colwise().maxCoeff().transpose();
  counts_.assign(static_cast<std::size_t>(n_grid) * n_grid * n_grid, 0);
  for (Eigen::Index i = 0; i < training.rows(); ++i) {
    std::size_t cell = 0;
    for (int c = 0; c < 3; ++c) {
      const double span = hi_[c] - lo_[c];
      int b = span > 0.0 ? static_cast<int>((training(i, c) - lo_[c]) / span * n_grid) : 0;
      b = std::clamp(b, 0, n_grid - 1);
      cell = cell * static_cast<std::size_t>(n_grid) + static_cast<std::size_t>(b);
    }
    max_count_ = std::max(max_count_, ++counts_[cell]);
  }
}

double HistogramConfidence::confidence(const Eigen::Vector3d& query) const {
  std::size_t cell = 0;
  for (int c = 0; c < 3; ++c) {
    if (query[c] < lo_[c] || query[c] > hi_[c]) return 0.0;
    const double span = hi_[c] - lo_[c];
    int b = span > 0.0 ? static_cast<int>((query[c] - lo_[c]) / span * n_grid_) : 0;
    b = std::clamp(b, 0, n_grid_ - 1);
    cell = cell * static_cast<std::size_t>(n_grid_) + static_cast<std::size_t>(b);
  }
  return static_cast<double>(counts_[cell]) / static_cast<double>(max_count_);
}

double histogram_confidence_baseline(const PointCloud3& training, int n_grid, const Eigen::Vector3d& query) {
  return HistogramConfidence(training, n_grid).confidence(query);
}

}  // namespace hekf
