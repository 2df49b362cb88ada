#include "trimine/types.hpp"

#include <string>

namespace trimine {

void EmbeddingSet::validate() const {
  if (vectors.rows() == 0 || vectors.cols() == 0) {
    throw UsageError("embedding set must have N >= 1 and d >= 1");
  }
  if (labels.size() != vectors.rows()) {
    throw UsageError("label count " + std::to_string(labels.size()) +
                     " does not match vector count " + std::to_string(vectors.rows()));
  }
  if (class_count <= 0) {
    throw UsageError("class_count must be positive");
  }
  std::vector<bool> seen(static_cast<std::size_t>(class_count), false);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::int32_t label = labels[i];
    if (label < 0 || label >= class_count) {
      throw UsageError("label " + std::to_string(label) + " at row " + std::to_string(i) +
                       " is outside [0, " + std::to_string(class_count) + ")");
    }
    seen[static_cast<std::size_t>(label)] = true;
  }
  for (std::int32_t c = 0; c < class_count; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw UsageError("class " + std::to_string(c) + " has no members");
    }
  }
  if (!vectors.all_finite()) {
    throw UsageError("embedding set contains non-finite values");
  }
}

const char* to_string(ExtremePolicy policy) {
  switch (policy) {
    case ExtremePolicy::kEPEN: return "epen";
    case ExtremePolicy::kEPHN: return "ephn";
    case ExtremePolicy::kHPEN: return "hpen";
    case ExtremePolicy::kHPHN: return "hphn";
    case ExtremePolicy::kAssorted: return "assorted";
  }
  return "?";
}

ExtremePolicy policy_from_string(const std::string& name) {
  if (name == "epen") return ExtremePolicy::kEPEN;
  if (name == "ephn") return ExtremePolicy::kEPHN;
  if (name == "hpen") return ExtremePolicy::kHPEN;
  if (name == "hphn") return ExtremePolicy::kHPHN;
  if (name == "assorted") return ExtremePolicy::kAssorted;
  throw UsageError("unknown extreme policy '" + name +
                   "' (expected epen|ephn|hpen|hphn|assorted)");
}

}  // namespace trimine
