#ifndef SDMRAC_BUFFER_HPP
#define SDMRAC_BUFFER_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "sdmrac/adapt.hpp"
#include "sdmrac/bnn.hpp"
#include "sdmrac/common.hpp"
#include "sdmrac/csv.hpp"

namespace sdmrac {

/// Self-labelled training pair. `y` is W^T phi_at_storage, frozen at admission.
struct BufferRecord {
  VectorXd x;
  VectorXd y;
  VectorXd phi_at_storage;
  std::uint64_t sigma = 0;
  double t = 0.0;
};

/// Space in which the admission kernel compares points.
enum class ScoreSpace { state, feature };

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, double eps_tol, double kernel_width, ScoreSpace space = ScoreSpace::state)
      : capacity_(capacity), eps_tol_(eps_tol), kernel_width_(kernel_width), space_(space) {
    detail::require(capacity >= 1, "ReplayBuffer: capacity must be positive");
    detail::require(kernel_width > 0.0, "ReplayBuffer: kernel_width must be positive");
    detail::require(eps_tol >= 0.0 && eps_tol <= 1.0, "ReplayBuffer: eps_tol must lie in [0, 1]");
  }

  std::size_t capacity() const { return capacity_; }
  double eps_tol() const { return eps_tol_; }
  double kernel_width() const { return kernel_width_; }
  ScoreSpace space() const { return space_; }
  const std::vector<BufferRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Point used by the kernel for a record.
  const VectorXd& key(const BufferRecord& r) const { return space_ == ScoreSpace::state ? r.x : r.phi_at_storage; }

  /// 1 - max_j exp(-|p - p_j|^2 / (2 w^2)); 1 for an empty buffer.
  double independence_score(const VectorXd& point) const {
    double best = 0.0;
    const double denom = 2.0 * kernel_width_ * kernel_width_;
    for (const auto& r : records_) best = std::max(best, std::exp(-(point - key(r)).squaredNorm() / denom));
    return 1.0 - best;
  }

  /// Appends a record that already passed the test, evicting for maximum spread at capacity.
  /// Returns false when the newcomer itself is the evicted point.
  bool insert(BufferRecord record) {
    records_.push_back(std::move(record));
    if (records_.size() <= capacity_) return true;
    const std::size_t victim = spread_victim();
    const bool kept_new = victim != records_.size() - 1;
    records_.erase(records_.begin() + static_cast<std::ptrdiff_t>(victim));
    return kept_new;
  }

  /// Smallest pairwise kernel-space distance among stored points (infinity below two points).
  double min_pairwise_distance() const { return min_distance_excluding(records_.size()); }

  void clear() { records_.clear(); }

 private:
  double min_distance_excluding(std::size_t skip) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (i == skip) continue;
      for (std::size_t j = i + 1; j < records_.size(); ++j) {
        if (j == skip) continue;
        best = std::min(best, (key(records_[i]) - key(records_[j])).norm());
      }
    }
    return best;
  }

  // Only the two endpoints of the closest pair can raise the minimum distance when removed; any
  // other removal leaves that pair in place.
  std::size_t spread_victim() const {
    std::size_t a = 0, b = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < records_.size(); ++i) {
      for (std::size_t j = i + 1; j < records_.size(); ++j) {
        const double d = (key(records_[i]) - key(records_[j])).norm();
        if (d < best) {
          best = d;
          a = i;
          b = j;
        }
      }
    }
    const double without_a = min_distance_excluding(a);
    const double without_b = min_distance_excluding(b);
    if (without_a == without_b) return records_[a].t <= records_[b].t ? a : b;
    return without_a > without_b ? a : b;
  }

  std::size_t capacity_;
  double eps_tol_;
  double kernel_width_;
  ScoreSpace space_;
  std::vector<BufferRecord> records_;
};

inline double independence_score(const ReplayBuffer& buf, const VectorXd& x_new) {
  return buf.independence_score(x_new);
}

/// Kernel-independence admission of the live state with a generative label W^T phi_mean(x).
inline bool try_admit(ReplayBuffer& buf, const VectorXd& x, double t, const FastWeights& weights,
                      const NetworkVersion& version, std::size_t draws, Rng& rng) {
  if (buf.space() == ScoreSpace::state) {
    if (buf.independence_score(x) < buf.eps_tol()) return false;
    BufferRecord rec;
    rec.phi_at_storage = feature_mean(version.net, x, draws, rng);
    rec.y = weights.W.transpose() * rec.phi_at_storage;
    rec.x = x;
    rec.sigma = version.sigma;
    rec.t = t;
    return buf.insert(std::move(rec));
  }
  VectorXd phi = feature_mean(version.net, x, draws, rng);
  if (buf.independence_score(phi) < buf.eps_tol()) return false;
  BufferRecord rec;
  rec.y = weights.W.transpose() * phi;
  rec.phi_at_storage = std::move(phi);
  rec.x = x;
  rec.sigma = version.sigma;
  rec.t = t;
  return buf.insert(std::move(rec));
}

/// Deep copy of the (x, y) pairs for training.
inline std::vector<DataPoint> snapshot(const ReplayBuffer& buf) {
  std::vector<DataPoint> out;
  out.reserve(buf.size());
  for (const auto& r : buf.records()) out.push_back({r.x, r.y});
  return out;
}

/// Columns x1..xn, y1..ym, sigma, t.
inline void write_buffer_csv(std::ostream& os, const ReplayBuffer& buf, Eigen::Index n, Eigen::Index m) {
  auto header = csv::numbered("x", n);
  for (auto& h : csv::numbered("y", m)) header.push_back(h);
  header.push_back("sigma");
  header.push_back("t");
  std::vector<std::vector<double>> rows;
  for (const auto& r : buf.records()) {
    std::vector<double> row(r.x.data(), r.x.data() + r.x.size());
    row.insert(row.end(), r.y.data(), r.y.data() + r.y.size());
    row.push_back(static_cast<double>(r.sigma));
    row.push_back(r.t);
    rows.push_back(std::move(row));
  }
  csv::write(os, header, rows);
}

/// Reads the (x, y) pairs of a buffer dump.
inline std::vector<DataPoint> read_buffer_csv(const csv::Table& table) {
  std::vector<std::size_t> xs, ys;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    const auto& h = table.header[i];
    if (h.size() > 1 && h[0] == 'x' && std::isdigit(static_cast<unsigned char>(h[1]))) xs.push_back(i);
    if (h.size() > 1 && h[0] == 'y' && std::isdigit(static_cast<unsigned char>(h[1]))) ys.push_back(i);
  }
  if (xs.empty() || ys.empty()) throw std::runtime_error("buffer csv: needs x1.. and y1.. columns");
  std::vector<DataPoint> out;
  for (const auto& row : table.rows) {
    DataPoint p{VectorXd(static_cast<Eigen::Index>(xs.size())), VectorXd(static_cast<Eigen::Index>(ys.size()))};
    for (std::size_t i = 0; i < xs.size(); ++i) p.x(static_cast<Eigen::Index>(i)) = row[xs[i]];
    for (std::size_t i = 0; i < ys.size(); ++i) p.y(static_cast<Eigen::Index>(i)) = row[ys[i]];
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace sdmrac

#endif  // SDMRAC_BUFFER_HPP
