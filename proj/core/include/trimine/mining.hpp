#pragma once

#include <cstdint>
#include <vector>

#include "trimine/distance.hpp"
#include "trimine/rng.hpp"
#include "trimine/types.hpp"

namespace trimine {

enum class SkipReason { kNoPositive, kNoNegative, kOutlierAnchor };

const char* to_string(SkipReason reason);

struct SkipRecord {
  std::int64_t anchor = 0;
  SkipReason reason = SkipReason::kNoPositive;
};

// Product of one offline mining pass: one triplet per non-skipped anchor,
// each tagged with the policy that produced it (the drawn case under the
// assorted policy).
struct TripletSet {
  std::vector<Triplet> triplets;
  ExtremePolicy source_policy = ExtremePolicy::kEPEN;
  std::uint64_t seed = 0;
  std::vector<SkipRecord> skipped;
};

// c x c tally: counts(i, j) = triplets whose anchor is class i and negative
// class j. Row/column layout backs the chord-diagram export.
struct NegativeFrequencyMatrix {
  std::vector<std::int64_t> counts;
  std::int32_t class_count = 0;

  std::int64_t at(std::int32_t i, std::int32_t j) const {
    return counts[static_cast<std::size_t>(i) * class_count + j];
  }
  std::int64_t total() const;
};

// Mines one triplet per anchor from the distance matrix. Positives are the
// nearest (EP) or farthest (HP) same-class candidate, negatives the nearest
// (HN) or farthest (EN) other-class candidate, ties broken by lowest index.
// Candidates flagged by the mask are excluded for that anchor; an anchor that
// is flagged in every other row is itself skipped, as are anchors whose
// candidate pool empties. The assorted policy draws one of the four cases per
// anchor from rng.fork(anchor index). Throws UsageError if every anchor is
// skipped.
TripletSet mine_offline(const EmbeddingSet& embeddings, const DistanceMatrix& distances,
                        const OutlierMask& mask, ExtremePolicy policy, const Rng& rng);

NegativeFrequencyMatrix negative_frequency(const TripletSet& triplets,
                                           const EmbeddingSet& embeddings);

}  // namespace trimine
