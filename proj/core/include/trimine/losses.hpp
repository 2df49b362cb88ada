#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trimine/matrix.hpp"
#include "trimine/rng.hpp"
#include "trimine/types.hpp"

namespace trimine {

// Mini-batch of embeddings with labels. Online losses expect every present
// class to contribute spec.per_class rows; the pair-based losses (BA, BSH,
// NCA, PNCA, EP, EP-D, DWS) tolerate uneven classes and simply iterate the
// anchor-positive pairs that exist, while the extreme losses reject classes
// with a single member (no positive candidate for that anchor).
struct Batch {
  Matrix embeddings;
  std::vector<std::int32_t> labels;
  BatchSpec spec;

  std::size_t size() const { return embeddings.rows(); }
  std::size_t dim() const { return embeddings.cols(); }
};

enum class LossKind {
  kBatchAll,
  kBatchSemiHard,
  kHPHN,
  kNCA,
  kProxyNCA,
  kEasyPositive,
  kEasyPositiveDist,
  kDWS,
  kEPEN,
  kEPHN,
  kHPEN,
  kAssorted,
};

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

// All twelve LossKind values in their canonical order.
std::span<const LossKind> all_loss_kinds();

// Loss selector plus hyperparameters. epd_literal_sign reproduces the
// positive exponent on negatives in the distance form of the easy-positive
// loss as printed; the default applies the minus-distance substitution the
// surrounding text describes.
struct LossSpec {
  LossKind kind = LossKind::kBatchAll;
  double margin = 0.25;
  double dws_lambda = 10.0;
  double dws_dmin = 0.5;
  double proxy_momentum = 0.9;
  bool epd_literal_sign = false;
};

// One proxy vector per class, maintained as momentum-blended means of the
// class rows seen in each batch. Classes never seen stay undefined.
struct ProxyState {
  Matrix proxies;                       // class_count x d
  std::vector<std::uint8_t> defined;    // per class
  bool initialized = false;

  static ProxyState empty(std::int32_t class_count, std::size_t dim);
};

struct LossResult {
  double value = 0.0;
  Matrix grad;                    // dL/dembedding, same shape as the batch
  std::int64_t active_triplets = 0;  // hinge losses only
};

// Eq.-style sum over every (anchor, positive, negative) combination.
LossResult loss_batch_all(const Batch& batch, const LossSpec& spec);

// Per (anchor, positive): nearest negative farther than the positive, falling
// back to the farthest negative when none qualifies.
LossResult loss_batch_semi_hard(const Batch& batch, const LossSpec& spec);

// Extreme-distance losses, one hinge per anchor. policy selects min/max for
// positive and negative distances; the assorted policy draws the two
// operators per anchor from rng.fork keyed by (class, within-class rank), so
// results do not depend on row order. rng is required only for assorted.
LossResult loss_extreme(const Batch& batch, const LossSpec& spec, ExtremePolicy policy,
                        const Rng* rng = nullptr);

// Softmax loss over all negatives, summed over same-class ordered pairs. The
// positive term is not part of the denominator, so the value is unbounded in
// sign.
LossResult loss_nca(const Batch& batch, const LossSpec& spec);

// NCA over nearest-proxy assignments. Gradients flow to embeddings only;
// the returned state carries the momentum-updated proxies.
std::pair<LossResult, ProxyState> loss_proxy_nca(const Batch& batch, const LossSpec& spec,
                                                 ProxyState state);

// Easy-positive softmax on the unit sphere. use_distance_form=false scores
// with inner products, true with minus squared distances (see
// LossSpec::epd_literal_sign). Gradients include the normalization Jacobian.
LossResult loss_easy_positive(const Batch& batch, const LossSpec& spec,
                              bool use_distance_form);

// Distance-weighted sampling: unit-sphere euclidean distances clamped below
// at dws_dmin, one negative drawn per (anchor, positive) pair with
// probability proportional to min(lambda, 1/q(d)).
LossResult loss_dws(const Batch& batch, const LossSpec& spec, const Rng& rng);

// Normalized sampling probabilities over negative candidates at the given
// clamped distances, for an embedding of dimension dim. Exposed for tests.
std::vector<double> dws_negative_weights(std::span<const double> distances,
                                         std::size_t dim, double lambda);

// Auxiliary state for loss_and_grad: rng for DWS/assorted, proxies for PNCA.
struct LossContext {
  const Rng* rng = nullptr;
  ProxyState* proxies = nullptr;
};

// Uniform dispatch over the twelve loss kinds. PNCA updates ctx.proxies in
// place; DWS and assorted fork per-anchor streams from ctx.rng.
LossResult loss_and_grad(const Batch& batch, const LossSpec& spec, const LossContext& ctx);

}  // namespace trimine
