#include "smore/diagnostics.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "smore/error.hpp"

namespace smore {
namespace {

// Leading eigenvector of the d x d covariance via fixed-iteration power
// method with a deterministic start. Returns a zero vector when the matrix
// has (numerically) no component in that direction, which downstream code
// treats as "no spread on this axis".
std::vector<double> power_iterate(const std::vector<double>& cov, std::size_t d) {
  std::vector<double> x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = 1.0 + 0.25 * static_cast<double>(i % 7);
  std::vector<double> y(d);
  for (int it = 0; it < 200; ++it) {
    double norm = 0;
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0;
      for (std::size_t c = 0; c < d; ++c) acc += cov[r * d + c] * x[c];
      y[r] = acc;
      norm += acc * acc;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-300) return std::vector<double>(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) x[r] = y[r] / norm;
  }
  return x;
}

}  // namespace

UniformityStats uniformity_stats(const Tensor& rows) {
  if (rows.shape.size() != 2)
    throw ShapeError("uniformity_stats expects a 2-D matrix, got " + shape_str(rows.shape));
  const std::size_t n = rows.rows(), d = rows.cols();

  // Unit-normalize, skipping zero rows; accumulate the coordinate-wise sum so
  // the all-pairs cosine total falls out of one norm computation.
  std::vector<double> unit;
  unit.reserve(n * d);
  std::vector<double> colsum(d, 0.0);
  std::size_t used = 0;
  for (std::size_t r = 0; r < n; ++r) {
    double sq = 0;
    for (std::size_t c = 0; c < d; ++c) sq += rows.v[r * d + c] * rows.v[r * d + c];
    if (sq <= 0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t c = 0; c < d; ++c) {
      const double u = rows.v[r * d + c] * inv;
      unit.push_back(u);
      colsum[c] += u;
    }
    ++used;
  }
  if (used < 2)
    throw DataError("uniformity_stats needs at least two non-zero rows, got " +
                    std::to_string(used));

  UniformityStats s;
  s.rows_used = used;
  double sumsq = 0;
  for (std::size_t c = 0; c < d; ++c) sumsq += colsum[c] * colsum[c];
  const double nd = static_cast<double>(used);
  s.mean_pairwise_cosine = (sumsq - nd) / (nd * (nd - 1.0));

  // Angular histogram of the unit rows in their top-2 principal plane.
  std::vector<double> mean(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) mean[c] = colsum[c] / nd;
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t r = 0; r < used; ++r)
    for (std::size_t a = 0; a < d; ++a) {
      const double da = unit[r * d + a] - mean[a];
      for (std::size_t b = 0; b < d; ++b)
        cov[a * d + b] += da * (unit[r * d + b] - mean[b]);
    }
  for (auto& x : cov) x /= nd;

  const std::vector<double> p1 = power_iterate(cov, d);
  // Deflate: remove the first component's subspace, then repeat.
  double lambda1 = 0;
  {
    std::vector<double> cp(d, 0.0);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cp[a] += cov[a * d + b] * p1[b];
    for (std::size_t a = 0; a < d; ++a) lambda1 += p1[a] * cp[a];
  }
  std::vector<double> deflated = cov;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) deflated[a * d + b] -= lambda1 * p1[a] * p1[b];
  const std::vector<double> p2 = power_iterate(deflated, d);

  std::vector<std::size_t> hist(static_cast<std::size_t>(s.bins), 0);
  for (std::size_t r = 0; r < used; ++r) {
    double x = 0, y = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const double v = unit[r * d + c] - mean[c];
      x += v * p1[c];
      y += v * p2[c];
    }
    const double ang = std::atan2(y, x);  // [-pi, pi]
    int b = static_cast<int>((ang + std::numbers::pi) / (2.0 * std::numbers::pi) *
                             s.bins);
    if (b < 0) b = 0;
    if (b >= s.bins) b = s.bins - 1;
    hist[static_cast<std::size_t>(b)]++;
  }
  double entropy = 0;
  for (std::size_t c = 0; c < hist.size(); ++c) {
    if (hist[c] == 0) continue;
    const double p = static_cast<double>(hist[c]) / nd;
    entropy -= p * std::log(p);
  }
  s.angular_entropy = entropy;
  return s;
}

std::string UniformityStats::to_json() const {
  nlohmann::ordered_json j;
  j["mean_pairwise_cosine"] = mean_pairwise_cosine;
  j["angular_entropy"] = angular_entropy;
  j["rows_used"] = rows_used;
  j["bins"] = bins;
  return j.dump(2) + "\n";
}

}  // namespace smore
