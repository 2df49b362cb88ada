#include "trimine/distance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trimine/errors.hpp"

namespace trimine {

namespace {

double squared_diff(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = u[k] - v[k];
    s += d * d;
  }
  return s;
}

void normalize_into(std::span<const double> u, std::vector<double>& out) {
  double norm_sq = 0.0;
  for (double x : u) norm_sq += x * x;
  if (norm_sq == 0.0) {
    throw UsageError("cannot normalize a zero vector");
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  out.resize(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) out[k] = u[k] * inv;
}

double finish(double squared, MetricKind kind) {
  return kind == MetricKind::kSquaredEuclidean ? squared : std::sqrt(squared);
}

}  // namespace

double distance(std::span<const double> u, std::span<const double> v,
                const Metric& metric) {
  if (u.size() != v.size()) {
    throw UsageError("dimension mismatch: " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  }
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!std::isfinite(u[k]) || !std::isfinite(v[k])) {
      throw UsageError("distance inputs must be finite");
    }
  }
  if (!metric.normalize_inputs) {
    return finish(squared_diff(u, v), metric.kind);
  }
  std::vector<double> un, vn;
  normalize_into(u, un);
  normalize_into(v, vn);
  return finish(squared_diff(un, vn), metric.kind);
}

void pairwise_block(const EmbeddingSet& embeddings, const Metric& metric,
                    std::size_t row_begin, std::size_t row_end, Matrix& out) {
  const Matrix* source = &embeddings.vectors;
  Matrix normalized;
  if (metric.normalize_inputs) {
    normalized = embeddings.vectors;
    std::vector<double> tmp;
    for (std::size_t i = 0; i < normalized.rows(); ++i) {
      normalize_into(embeddings.vectors.row(i), tmp);
      std::copy(tmp.begin(), tmp.end(), normalized.row(i).begin());
    }
    source = &normalized;
  }
  const std::size_t n = source->rows();
  for (std::size_t i = row_begin; i < row_end; ++i) {
    out(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      out(i, j) = finish(squared_diff(source->row(i), source->row(j)), metric.kind);
    }
  }
}

DistanceMatrix pairwise(const EmbeddingSet& embeddings, const Metric& metric) {
  embeddings.validate();
  const std::size_t n = embeddings.size();
  Matrix values(n, n, 0.0);

  constexpr std::size_t kBlockRows = 64;
  for (std::size_t begin = 0; begin < n; begin += kBlockRows) {
    pairwise_block(embeddings, metric, begin, std::min(begin + kBlockRows, n), values);
  }
  // Mirror the upper triangle so symmetry is bitwise.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      values(j, i) = values(i, j);
    }
  }
  return DistanceMatrix{std::move(values), metric};
}

bool OutlierMask::unanimous(std::size_t j) const {
  for (std::size_t i = 0; i < n; ++i) {
    if (i != j && !at(i, j)) return false;
  }
  return n > 1;
}

OutlierMask OutlierMask::none(std::size_t n) {
  return OutlierMask{n, std::vector<std::uint8_t>(n * n, 0), 0.0};
}

OutlierMask outlier_mask(const DistanceMatrix& distances, double z_threshold) {
  const std::size_t n = distances.size();
  if (n < 3) {
    throw UsageError("outlier mask needs N >= 3, got N = " + std::to_string(n));
  }
  OutlierMask mask;
  mask.n = n;
  mask.z_threshold = z_threshold;
  mask.excluded.assign(n * n, 0);

  const Matrix& d = distances.values;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum += d(i, j);
    }
    const double count = static_cast<double>(n - 1);
    const double mean = sum / count;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) {
        const double diff = d(i, j) - mean;
        var += diff * diff;
      }
    }
    const double sigma = std::sqrt(var / count);
    if (sigma == 0.0) continue;  // degenerate row, nothing excluded
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && (d(i, j) - mean) / sigma > z_threshold) {
        mask.excluded[i * n + j] = 1;
      }
    }
  }
  return mask;
}

}  // namespace trimine
