#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trimine/errors.hpp"
#include "trimine/matrix.hpp"

namespace trimine {

enum class MetricKind { kSquaredEuclidean, kEuclidean };

// Distance metric selector. With normalize_inputs set, vectors are projected
// to the unit sphere before the distance is computed, which bounds squared
// euclidean distances by 4 and euclidean ones by 2.
struct Metric {
  MetricKind kind = MetricKind::kSquaredEuclidean;
  bool normalize_inputs = false;
};

// N embeddings of dimension d with integer class labels in [0, class_count).
struct EmbeddingSet {
  Matrix vectors;
  std::vector<std::int32_t> labels;
  std::int32_t class_count = 0;

  std::size_t size() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }

  // Enforces the type invariants: nonempty, finite, labels in range, every
  // class inhabited.
  void validate() const;
};

// The four extreme positive/negative pairings plus the per-anchor random mix.
enum class ExtremePolicy { kEPEN, kEPHN, kHPEN, kHPHN, kAssorted };

const char* to_string(ExtremePolicy policy);
ExtremePolicy policy_from_string(const std::string& name);

struct Triplet {
  std::int64_t anchor = 0;
  std::int64_t positive = 0;
  std::int64_t negative = 0;
  ExtremePolicy policy = ExtremePolicy::kEPEN;

  bool operator==(const Triplet&) const = default;
};

// b rows per batch, w rows per class (w = floor(b / c) for online batches).
struct BatchSpec {
  int batch_size = 45;
  int per_class = 5;
};

}  // namespace trimine
