#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trimine/matrix.hpp"
#include "trimine/types.hpp"

namespace trimine {

// Default Z threshold: 99th percentile of the standard normal.
inline constexpr double kDefaultZThreshold = 2.3263;

// Distance between two vectors under the metric. Inputs must be finite and of
// equal dimension; with normalize_inputs, zero-norm vectors are rejected.
double distance(std::span<const double> u, std::span<const double> v, const Metric& metric);

// Symmetric N x N matrix of pairwise distances with a zero diagonal.
struct DistanceMatrix {
  Matrix values;
  Metric metric;

  std::size_t size() const { return values.rows(); }
};

// Full pairwise matrix. Each pair is computed once and mirrored, so the
// result is bitwise symmetric. Memory is 8 * N^2 bytes.
DistanceMatrix pairwise(const EmbeddingSet& embeddings, const Metric& metric);

// Fills rows [row_begin, row_end) of out (entries j >= i, mirrored into
// column space by the caller or by pairwise()). Blocks touch O(block * N)
// intermediate state, so callers can bound memory and run blocks
// concurrently; the assembled matrix does not depend on the schedule.
void pairwise_block(const EmbeddingSet& embeddings, const Metric& metric,
                    std::size_t row_begin, std::size_t row_end, Matrix& out);

// Row-local Z-score exclusion flags: excluded(i, j) means candidate j is
// barred from every extreme role for anchor i.
struct OutlierMask {
  std::size_t n = 0;
  std::vector<std::uint8_t> excluded;
  double z_threshold = kDefaultZThreshold;

  bool at(std::size_t i, std::size_t j) const { return excluded[i * n + j] != 0; }

  // True when j is flagged in every row i != j; such an instance can never
  // appear in any triplet role.
  bool unanimous(std::size_t j) const;

  static OutlierMask none(std::size_t n);
};

// For each row i, distances {D[i][j] : j != i} are standardized with their
// row mean and population standard deviation; entries whose Z-score exceeds
// z_threshold are flagged. A zero-variance row flags nothing. Requires N >= 3
// so every row has at least two off-diagonal samples.
OutlierMask outlier_mask(const DistanceMatrix& distances,
                         double z_threshold = kDefaultZThreshold);

}  // namespace trimine
