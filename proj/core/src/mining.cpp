#include "trimine/mining.hpp"

#include <numeric>
#include <string>

#include "trimine/errors.hpp"

namespace trimine {

namespace {

// The four concrete cases in draw order for the assorted policy.
constexpr ExtremePolicy kCases[4] = {ExtremePolicy::kEPEN, ExtremePolicy::kEPHN,
                                     ExtremePolicy::kHPEN, ExtremePolicy::kHPHN};

bool positive_is_max(ExtremePolicy policy) {
  return policy == ExtremePolicy::kHPEN || policy == ExtremePolicy::kHPHN;
}

bool negative_is_min(ExtremePolicy policy) {
  return policy == ExtremePolicy::kEPHN || policy == ExtremePolicy::kHPHN;
}

}  // namespace

const char* to_string(SkipReason reason) {
  switch (reason) {
    case SkipReason::kNoPositive: return "no_positive";
    case SkipReason::kNoNegative: return "no_negative";
    case SkipReason::kOutlierAnchor: return "outlier_anchor";
  }
  return "?";
}

std::int64_t NegativeFrequencyMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

TripletSet mine_offline(const EmbeddingSet& embeddings, const DistanceMatrix& distances,
                        const OutlierMask& mask, ExtremePolicy policy, const Rng& rng) {
  embeddings.validate();
  const std::size_t n = embeddings.size();
  if (distances.size() != n) {
    throw UsageError("distance matrix size does not match embedding set");
  }
  if (mask.n != n) {
    throw UsageError("outlier mask size does not match embedding set");
  }

  TripletSet result;
  result.source_policy = policy;
  result.seed = rng.seed();
  result.triplets.reserve(n);

  const Matrix& d = distances.values;
  for (std::size_t a = 0; a < n; ++a) {
    if (mask.unanimous(a)) {
      result.skipped.push_back({static_cast<std::int64_t>(a), SkipReason::kOutlierAnchor});
      continue;
    }
    ExtremePolicy resolved = policy;
    if (policy == ExtremePolicy::kAssorted) {
      resolved = kCases[rng.fork(a).uniform_int(4)];
    }

    const std::int32_t label = embeddings.labels[a];
    const bool pos_max = positive_is_max(resolved);
    const bool neg_min = negative_is_min(resolved);

    std::int64_t best_p = -1, best_n = -1;
    double best_pd = 0.0, best_nd = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a || mask.at(a, j)) continue;
      const double dist = d(a, j);
      if (embeddings.labels[j] == label) {
        if (best_p < 0 || (pos_max ? dist > best_pd : dist < best_pd)) {
          best_p = static_cast<std::int64_t>(j);
          best_pd = dist;
        }
      } else {
        if (best_n < 0 || (neg_min ? dist < best_nd : dist > best_nd)) {
          best_n = static_cast<std::int64_t>(j);
          best_nd = dist;
        }
      }
    }

    if (best_p < 0) {
      result.skipped.push_back({static_cast<std::int64_t>(a), SkipReason::kNoPositive});
    } else if (best_n < 0) {
      result.skipped.push_back({static_cast<std::int64_t>(a), SkipReason::kNoNegative});
    } else {
      result.triplets.push_back({static_cast<std::int64_t>(a), best_p, best_n, resolved});
    }
  }

  if (result.triplets.empty()) {
    throw UsageError("offline mining skipped every anchor (" +
                     std::to_string(result.skipped.size()) + " skips)");
  }
  return result;
}

NegativeFrequencyMatrix negative_frequency(const TripletSet& triplets,
                                           const EmbeddingSet& embeddings) {
  const std::int64_t n = static_cast<std::int64_t>(embeddings.size());
  NegativeFrequencyMatrix freq;
  freq.class_count = embeddings.class_count;
  freq.counts.assign(static_cast<std::size_t>(freq.class_count) * freq.class_count, 0);
  for (const Triplet& t : triplets.triplets) {
    if (t.anchor < 0 || t.anchor >= n || t.negative < 0 || t.negative >= n) {
      throw UsageError("triplet index out of range for embedding set");
    }
    const std::int32_t ai = embeddings.labels[static_cast<std::size_t>(t.anchor)];
    const std::int32_t nj = embeddings.labels[static_cast<std::size_t>(t.negative)];
    ++freq.counts[static_cast<std::size_t>(ai) * freq.class_count + nj];
  }
  return freq;
}

}  // namespace trimine
