#include "trimine/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "trimine/errors.hpp"

namespace trimine {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Class structure of a batch: present classes ascending, member rows per
// class in row order, and each row's within-class rank. The (class slot,
// rank) pair keys per-anchor RNG substreams, so draws follow the logical
// anchor rather than its row position.
struct BatchView {
  std::size_t b = 0;
  std::size_t d = 0;
  std::vector<std::int32_t> classes;
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::size_t> slot;     // per row: index into classes
  std::vector<std::size_t> ordinal;  // per row: rank among same-class rows
};

BatchView make_view(const Batch& batch) {
  BatchView view;
  view.b = batch.size();
  view.d = batch.dim();
  if (view.b == 0 || view.d == 0) {
    throw UsageError("batch must be nonempty");
  }
  if (batch.labels.size() != view.b) {
    throw UsageError("batch label count does not match row count");
  }
  if (!batch.embeddings.all_finite()) {
    throw UsageError("batch embeddings must be finite");
  }
  std::map<std::int32_t, std::vector<std::size_t>> by_class;
  for (std::size_t r = 0; r < view.b; ++r) {
    if (batch.labels[r] < 0) {
      throw UsageError("batch labels must be non-negative");
    }
    by_class[batch.labels[r]].push_back(r);
  }
  if (by_class.size() < 2) {
    throw UsageError("batch needs at least two classes for negatives");
  }
  view.slot.resize(view.b);
  view.ordinal.resize(view.b);
  for (auto& [label, rows] : by_class) {
    const std::size_t s = view.classes.size();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      view.slot[rows[k]] = s;
      view.ordinal[rows[k]] = k;
    }
    view.classes.push_back(label);
    view.members.push_back(std::move(rows));
  }
  return view;
}

std::uint64_t anchor_key(const BatchView& view, std::size_t row) {
  return (static_cast<std::uint64_t>(view.slot[row]) << 32) |
         static_cast<std::uint64_t>(view.ordinal[row]);
}

Matrix squared_distances(const Matrix& y) {
  const std::size_t b = y.rows(), d = y.cols();
  Matrix out(b, b, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t s = r + 1; s < b; ++s) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = y(r, k) - y(s, k);
        acc += diff * diff;
      }
      out(r, s) = acc;
      out(s, r) = acc;
    }
  }
  return out;
}

// grad_r = sum_s (K(r,s) + K(s,r)) * 2 (y_r - y_s), the chain rule for
// coefficients on squared euclidean distances between batch rows.
Matrix grad_from_sq_coeffs(const Matrix& y, const Matrix& coeffs) {
  const std::size_t b = y.rows(), d = y.cols();
  Matrix grad(b, d, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t s = 0; s < b; ++s) {
      const double c = coeffs(r, s) + coeffs(s, r);
      if (c == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) {
        grad(r, k) += 2.0 * c * (y(r, k) - y(s, k));
      }
    }
  }
  return grad;
}

// grad_r = sum_s (K(r,s) + K(s,r)) * y_s, for coefficients on inner products.
Matrix grad_from_ip_coeffs(const Matrix& y, const Matrix& coeffs) {
  const std::size_t b = y.rows(), d = y.cols();
  Matrix grad(b, d, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t s = 0; s < b; ++s) {
      const double c = coeffs(r, s) + coeffs(s, r);
      if (c == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) {
        grad(r, k) += c * y(s, k);
      }
    }
  }
  return grad;
}

// Coefficients on clamped euclidean distances max(dmin, e(r,s)): rows inside
// the clamp contribute nothing.
Matrix grad_from_euclid_coeffs(const Matrix& y, const Matrix& coeffs, const Matrix& euclid,
                               double dmin) {
  const std::size_t b = y.rows(), d = y.cols();
  Matrix grad(b, d, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t s = 0; s < b; ++s) {
      const double c = coeffs(r, s) + coeffs(s, r);
      if (c == 0.0 || euclid(r, s) <= dmin) continue;
      const double scale = c / euclid(r, s);
      for (std::size_t k = 0; k < d; ++k) {
        grad(r, k) += scale * (y(r, k) - y(s, k));
      }
    }
  }
  return grad;
}

struct Normalized {
  Matrix unit;
  std::vector<double> norms;
};

Normalized normalize_rows(const Matrix& y) {
  Normalized out;
  out.unit = y;
  out.norms.resize(y.rows());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double norm_sq = 0.0;
    for (std::size_t k = 0; k < y.cols(); ++k) norm_sq += y(r, k) * y(r, k);
    if (norm_sq == 0.0) {
      throw UsageError("cannot normalize zero embedding at row " + std::to_string(r));
    }
    const double norm = std::sqrt(norm_sq);
    out.norms[r] = norm;
    for (std::size_t k = 0; k < y.cols(); ++k) out.unit(r, k) /= norm;
  }
  return out;
}

// Pulls a gradient on unit rows back through y -> y/|y|:
// g_r = (gu_r - u_r (u_r . gu_r)) / |y_r|.
Matrix backprop_normalization(const Normalized& nh, const Matrix& grad_unit) {
  const std::size_t b = grad_unit.rows(), d = grad_unit.cols();
  Matrix grad(b, d, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) dot += nh.unit(r, k) * grad_unit(r, k);
    for (std::size_t k = 0; k < d; ++k) {
      grad(r, k) = (grad_unit(r, k) - nh.unit(r, k) * dot) / nh.norms[r];
    }
  }
  return grad;
}

double log_sum_exp(std::span<const double> values) {
  double max_v = -kInf;
  for (double v : values) max_v = std::max(max_v, v);
  if (max_v == -kInf) return -kInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - max_v);
  return max_v + std::log(acc);
}

// In-place softmax with max subtraction.
void softmax_inplace(std::vector<double>& values) {
  double max_v = -kInf;
  for (double v : values) max_v = std::max(max_v, v);
  double acc = 0.0;
  for (double& v : values) {
    v = std::exp(v - max_v);
    acc += v;
  }
  for (double& v : values) v /= acc;
}

void require_same_class_pair(const BatchView& view, const char* loss_name) {
  for (const auto& rows : view.members) {
    if (rows.size() >= 2) return;
  }
  throw UsageError(std::string(loss_name) + " needs at least one same-class pair");
}

void require_all_classes_pairable(const BatchView& view, const char* loss_name) {
  for (std::size_t s = 0; s < view.members.size(); ++s) {
    if (view.members[s].size() < 2) {
      throw UsageError(std::string(loss_name) + ": class " +
                       std::to_string(view.classes[s]) +
                       " has a single member, so an anchor there has no positive");
    }
  }
}

LossResult make_result(const Batch& batch) {
  LossResult res;
  res.grad = Matrix(batch.size(), batch.dim(), 0.0);
  return res;
}

}  // namespace

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kBatchAll: return "ba";
    case LossKind::kBatchSemiHard: return "bsh";
    case LossKind::kHPHN: return "hphn";
    case LossKind::kNCA: return "nca";
    case LossKind::kProxyNCA: return "pnca";
    case LossKind::kEasyPositive: return "ep";
    case LossKind::kEasyPositiveDist: return "epd";
    case LossKind::kDWS: return "dws";
    case LossKind::kEPEN: return "epen";
    case LossKind::kEPHN: return "ephn";
    case LossKind::kHPEN: return "hpen";
    case LossKind::kAssorted: return "assorted";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
  for (LossKind kind : all_loss_kinds()) {
    if (name == to_string(kind)) return kind;
  }
  throw UsageError("unknown loss kind '" + name +
                   "' (expected ba|bsh|hphn|nca|pnca|ep|epd|dws|epen|ephn|hpen|assorted)");
}

std::span<const LossKind> all_loss_kinds() {
  static constexpr std::array<LossKind, 12> kinds = {
      LossKind::kBatchAll,     LossKind::kBatchSemiHard,
      LossKind::kHPHN,         LossKind::kNCA,
      LossKind::kProxyNCA,     LossKind::kEasyPositive,
      LossKind::kEasyPositiveDist, LossKind::kDWS,
      LossKind::kEPEN,         LossKind::kEPHN,
      LossKind::kHPEN,         LossKind::kAssorted,
  };
  return kinds;
}

ProxyState ProxyState::empty(std::int32_t class_count, std::size_t dim) {
  ProxyState state;
  state.proxies = Matrix(static_cast<std::size_t>(class_count), dim, 0.0);
  state.defined.assign(static_cast<std::size_t>(class_count), 0);
  state.initialized = false;
  return state;
}

LossResult loss_batch_all(const Batch& batch, const LossSpec& spec) {
  const BatchView view = make_view(batch);
  require_same_class_pair(view, "batch-all");
  const Matrix dist = squared_distances(batch.embeddings);
  Matrix coeffs(view.b, view.b, 0.0);
  LossResult res = make_result(batch);

  for (std::size_t a = 0; a < view.b; ++a) {
    const std::int32_t label = batch.labels[a];
    for (std::size_t p : view.members[view.slot[a]]) {
      if (p == a) continue;
      const double dp = dist(a, p);
      for (std::size_t n = 0; n < view.b; ++n) {
        if (batch.labels[n] == label) continue;
        const double arg = spec.margin + dp - dist(a, n);
        if (arg > 0.0) {
          res.value += arg;
          coeffs(a, p) += 1.0;
          coeffs(a, n) -= 1.0;
          ++res.active_triplets;
        }
      }
    }
  }
  res.grad = grad_from_sq_coeffs(batch.embeddings, coeffs);
  return res;
}

LossResult loss_batch_semi_hard(const Batch& batch, const LossSpec& spec) {
  const BatchView view = make_view(batch);
  require_same_class_pair(view, "batch-semi-hard");
  const Matrix dist = squared_distances(batch.embeddings);
  Matrix coeffs(view.b, view.b, 0.0);
  LossResult res = make_result(batch);

  for (std::size_t a = 0; a < view.b; ++a) {
    const std::int32_t label = batch.labels[a];
    for (std::size_t p : view.members[view.slot[a]]) {
      if (p == a) continue;
      const double dp = dist(a, p);
      // Nearest negative strictly farther than the positive; if none exists,
      // fall back to the farthest negative. Ties go to the lowest row.
      std::size_t semi_hard = view.b, farthest = view.b;
      double semi_dist = kInf, far_dist = -kInf;
      for (std::size_t n = 0; n < view.b; ++n) {
        if (batch.labels[n] == label) continue;
        const double dn = dist(a, n);
        if (dn > dp && dn < semi_dist) {
          semi_dist = dn;
          semi_hard = n;
        }
        if (dn > far_dist) {
          far_dist = dn;
          farthest = n;
        }
      }
      const std::size_t chosen = semi_hard != view.b ? semi_hard : farthest;
      const double arg = spec.margin + dp - dist(a, chosen);
      if (arg > 0.0) {
        res.value += arg;
        coeffs(a, p) += 1.0;
        coeffs(a, chosen) -= 1.0;
        ++res.active_triplets;
      }
    }
  }
  res.grad = grad_from_sq_coeffs(batch.embeddings, coeffs);
  return res;
}

LossResult loss_extreme(const Batch& batch, const LossSpec& spec, ExtremePolicy policy,
                        const Rng* rng) {
  const BatchView view = make_view(batch);
  require_all_classes_pairable(view, "extreme loss");
  if (policy == ExtremePolicy::kAssorted && rng == nullptr) {
    throw UsageError("assorted extreme loss requires an rng");
  }
  const Matrix dist = squared_distances(batch.embeddings);
  Matrix coeffs(view.b, view.b, 0.0);
  LossResult res = make_result(batch);

  for (std::size_t a = 0; a < view.b; ++a) {
    bool pos_max = policy == ExtremePolicy::kHPEN || policy == ExtremePolicy::kHPHN;
    bool neg_min = policy == ExtremePolicy::kEPHN || policy == ExtremePolicy::kHPHN;
    if (policy == ExtremePolicy::kAssorted) {
      // Two independent operator draws per anchor: 0 selects min, 1 max.
      Rng stream = rng->fork(anchor_key(view, a));
      pos_max = stream.uniform_int(2) == 1;
      neg_min = stream.uniform_int(2) == 0;
    }

    std::size_t best_p = view.b, best_n = view.b;
    double best_pd = 0.0, best_nd = 0.0;
    for (std::size_t p : view.members[view.slot[a]]) {
      if (p == a) continue;
      const double dp = dist(a, p);
      if (best_p == view.b || (pos_max ? dp > best_pd : dp < best_pd)) {
        best_p = p;
        best_pd = dp;
      }
    }
    for (std::size_t n = 0; n < view.b; ++n) {
      if (batch.labels[n] == batch.labels[a]) continue;
      const double dn = dist(a, n);
      if (best_n == view.b || (neg_min ? dn < best_nd : dn > best_nd)) {
        best_n = n;
        best_nd = dn;
      }
    }

    const double arg = spec.margin + best_pd - best_nd;
    if (arg > 0.0) {
      res.value += arg;
      coeffs(a, best_p) += 1.0;
      coeffs(a, best_n) -= 1.0;
      ++res.active_triplets;
    }
  }
  res.grad = grad_from_sq_coeffs(batch.embeddings, coeffs);
  return res;
}

LossResult loss_nca(const Batch& batch, const LossSpec& spec) {
  (void)spec;
  const BatchView view = make_view(batch);
  require_same_class_pair(view, "nca");
  const Matrix dist = squared_distances(batch.embeddings);
  Matrix coeffs(view.b, view.b, 0.0);
  LossResult res = make_result(batch);

  std::vector<std::size_t> negs;
  std::vector<double> args;
  for (std::size_t a = 0; a < view.b; ++a) {
    const std::size_t positives = view.members[view.slot[a]].size() - 1;
    if (positives == 0) continue;
    negs.clear();
    args.clear();
    for (std::size_t n = 0; n < view.b; ++n) {
      if (batch.labels[n] == batch.labels[a]) continue;
      negs.push_back(n);
      args.push_back(-dist(a, n));
    }
    const double lse = log_sum_exp(args);
    softmax_inplace(args);  // args now holds softmax weights
    for (std::size_t p : view.members[view.slot[a]]) {
      if (p == a) continue;
      res.value += dist(a, p) + lse;
      coeffs(a, p) += 1.0;
    }
    const double pair_count = static_cast<double>(positives);
    for (std::size_t idx = 0; idx < negs.size(); ++idx) {
      coeffs(a, negs[idx]) -= args[idx] * pair_count;
    }
  }
  res.grad = grad_from_sq_coeffs(batch.embeddings, coeffs);
  return res;
}

std::pair<LossResult, ProxyState> loss_proxy_nca(const Batch& batch, const LossSpec& spec,
                                                 ProxyState state) {
  const BatchView view = make_view(batch);
  require_same_class_pair(view, "proxy-nca");
  const std::int32_t max_label = *std::max_element(batch.labels.begin(), batch.labels.end());

  if (!state.initialized && state.proxies.rows() == 0) {
    state = ProxyState::empty(max_label + 1, view.d);
  }
  if (state.proxies.cols() != view.d) {
    throw UsageError("proxy state dimension does not match batch");
  }
  if (static_cast<std::size_t>(max_label) >= state.proxies.rows()) {
    throw UsageError("batch label " + std::to_string(max_label) +
                     " exceeds proxy state class count");
  }

  // Per-class means of the current batch.
  Matrix means(state.proxies.rows(), view.d, 0.0);
  for (std::size_t s = 0; s < view.classes.size(); ++s) {
    const auto& rows = view.members[s];
    const std::size_t cls = static_cast<std::size_t>(view.classes[s]);
    for (std::size_t r : rows) {
      for (std::size_t k = 0; k < view.d; ++k) means(cls, k) += batch.embeddings(r, k);
    }
    for (std::size_t k = 0; k < view.d; ++k) means(cls, k) /= static_cast<double>(rows.size());
  }

  if (!state.initialized) {
    for (std::int32_t label : view.classes) {
      const std::size_t cls = static_cast<std::size_t>(label);
      for (std::size_t k = 0; k < view.d; ++k) state.proxies(cls, k) = means(cls, k);
      state.defined[cls] = 1;
    }
    state.initialized = true;
  }

  std::vector<std::size_t> defined_classes;
  for (std::size_t cls = 0; cls < state.defined.size(); ++cls) {
    if (state.defined[cls]) defined_classes.push_back(cls);
  }
  if (defined_classes.empty()) {
    throw UsageError("proxy state has no defined proxies");
  }

  // Nearest-proxy assignment per row, ties to the lowest class id.
  const std::size_t b = view.b;
  std::vector<std::size_t> assignment(b);
  Matrix proxy_dist(b, defined_classes.size(), 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    double best = kInf;
    std::size_t best_idx = 0;
    for (std::size_t c = 0; c < defined_classes.size(); ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < view.d; ++k) {
        const double diff = batch.embeddings(r, k) - state.proxies(defined_classes[c], k);
        acc += diff * diff;
      }
      proxy_dist(r, c) = acc;
      if (acc < best) {
        best = acc;
        best_idx = c;
      }
    }
    assignment[r] = best_idx;  // index into defined_classes
  }

  auto dist_to_proxy = [&](std::size_t row, std::size_t defined_idx) {
    return proxy_dist(row, defined_idx);
  };

  LossResult res = make_result(batch);
  std::vector<std::size_t> negs;
  std::vector<double> args;
  for (std::size_t a = 0; a < b; ++a) {
    const std::size_t positives = view.members[view.slot[a]].size() - 1;
    if (positives == 0) continue;
    negs.clear();
    args.clear();
    for (std::size_t n = 0; n < b; ++n) {
      if (batch.labels[n] == batch.labels[a]) continue;
      negs.push_back(n);
      args.push_back(-dist_to_proxy(a, assignment[n]));
    }
    const double lse = log_sum_exp(args);
    softmax_inplace(args);

    auto add_anchor_grad = [&](std::size_t defined_idx, double coeff) {
      const std::size_t cls = defined_classes[defined_idx];
      for (std::size_t k = 0; k < view.d; ++k) {
        res.grad(a, k) += coeff * 2.0 * (batch.embeddings(a, k) - state.proxies(cls, k));
      }
    };

    for (std::size_t p : view.members[view.slot[a]]) {
      if (p == a) continue;
      res.value += dist_to_proxy(a, assignment[p]) + lse;
      add_anchor_grad(assignment[p], 1.0);
    }
    const double pair_count = static_cast<double>(positives);
    for (std::size_t idx = 0; idx < negs.size(); ++idx) {
      add_anchor_grad(assignment[negs[idx]], -args[idx] * pair_count);
    }
  }

  // Momentum-blended update from the batch class means.
  for (std::int32_t label : view.classes) {
    const std::size_t cls = static_cast<std::size_t>(label);
    for (std::size_t k = 0; k < view.d; ++k) {
      state.proxies(cls, k) = spec.proxy_momentum * state.proxies(cls, k) +
                              (1.0 - spec.proxy_momentum) * means(cls, k);
    }
    state.defined[cls] = 1;
  }
  return {std::move(res), std::move(state)};
}

LossResult loss_easy_positive(const Batch& batch, const LossSpec& spec,
                              bool use_distance_form) {
  const BatchView view = make_view(batch);
  require_same_class_pair(view, "easy-positive");
  const Normalized nh = normalize_rows(batch.embeddings);
  Matrix coeffs(view.b, view.b, 0.0);
  LossResult res = make_result(batch);

  Matrix scores;  // inner products or squared distances on the unit sphere
  if (use_distance_form) {
    scores = squared_distances(nh.unit);
  } else {
    scores = Matrix(view.b, view.b, 0.0);
    for (std::size_t r = 0; r < view.b; ++r) {
      for (std::size_t s = 0; s < view.b; ++s) {
        double acc = 0.0;
        for (std::size_t k = 0; k < view.d; ++k) acc += nh.unit(r, k) * nh.unit(s, k);
        scores(r, s) = acc;
      }
    }
  }

  std::vector<std::size_t> negs;
  std::vector<double> args;
  for (std::size_t a = 0; a < view.b; ++a) {
    if (view.members[view.slot[a]].size() < 2) continue;

    // Easiest positive: highest inner product / smallest distance.
    std::size_t ep = view.b;
    double ep_score = 0.0;
    for (std::size_t p : view.members[view.slot[a]]) {
      if (p == a) continue;
      const double sc = scores(a, p);
      const bool better = use_distance_form ? sc < ep_score : sc > ep_score;
      if (ep == view.b || better) {
        ep = p;
        ep_score = sc;
      }
    }

    negs.clear();
    args.clear();
    const double ep_arg = use_distance_form ? -ep_score : ep_score;
    args.push_back(ep_arg);
    for (std::size_t n = 0; n < view.b; ++n) {
      if (batch.labels[n] == batch.labels[a]) continue;
      negs.push_back(n);
      if (use_distance_form) {
        args.push_back(spec.epd_literal_sign ? scores(a, n) : -scores(a, n));
      } else {
        args.push_back(scores(a, n));
      }
    }

    res.value += -ep_arg + log_sum_exp(args);
    softmax_inplace(args);  // args[0] belongs to the easiest positive

    if (use_distance_form) {
      coeffs(a, ep) += 1.0 - args[0];  // d(term)/d(dist to ep)
      for (std::size_t idx = 0; idx < negs.size(); ++idx) {
        const double sigma = args[idx + 1];
        coeffs(a, negs[idx]) += spec.epd_literal_sign ? sigma : -sigma;
      }
    } else {
      coeffs(a, ep) += args[0] - 1.0;  // d(term)/d(inner product with ep)
      for (std::size_t idx = 0; idx < negs.size(); ++idx) {
        coeffs(a, negs[idx]) += args[idx + 1];
      }
    }
  }

  const Matrix grad_unit = use_distance_form ? grad_from_sq_coeffs(nh.unit, coeffs)
                                             : grad_from_ip_coeffs(nh.unit, coeffs);
  res.grad = backprop_normalization(nh, grad_unit);
  return res;
}

std::vector<double> dws_negative_weights(std::span<const double> distances,
                                         std::size_t dim, double lambda) {
  if (lambda <= 0.0) {
    throw UsageError("dws lambda must be positive");
  }
  const double log_lambda = std::log(lambda);
  const double exponent = (static_cast<double>(dim) - 3.0) / 2.0;
  std::vector<double> log_w(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double d = distances[i];
    if (d <= 0.0) {
      throw UsageError("dws weights need positive (clamped) distances");
    }
    double log_q = 0.0;
    if (dim != 2) log_q += (static_cast<double>(dim) - 2.0) * std::log(d);
    const double support = 1.0 - 0.25 * d * d;
    if (exponent != 0.0) {
      if (support > 0.0) {
        log_q += exponent * std::log(support);
      } else {
        // At or past the antipode the density is 0 (dim > 3) or diverges
        // (dim < 3); the inverse weight is +inf or 0 respectively.
        log_q = exponent > 0.0 ? -kInf : kInf;
      }
    }
    log_w[i] = std::min(log_lambda, -log_q);
  }

  double max_log = -kInf;
  for (double v : log_w) max_log = std::max(max_log, v);
  std::vector<double> weights(log_w.size(), 0.0);
  if (max_log == -kInf) return weights;  // all mass vanished; caller reports
  double total = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    weights[i] = std::exp(log_w[i] - max_log);
    total += weights[i];
  }
  for (double& w : weights) w /= total;
  return weights;
}

LossResult loss_dws(const Batch& batch, const LossSpec& spec, const Rng& rng) {
  const BatchView view = make_view(batch);
  require_same_class_pair(view, "dws");
  const Normalized nh = normalize_rows(batch.embeddings);

  Matrix euclid = squared_distances(nh.unit);
  for (std::size_t i = 0; i < euclid.size(); ++i) {
    euclid.storage()[i] = std::sqrt(euclid.storage()[i]);
  }
  auto clamped = [&](std::size_t r, std::size_t s) {
    return std::max(spec.dws_dmin, euclid(r, s));
  };

  Matrix coeffs(view.b, view.b, 0.0);
  LossResult res = make_result(batch);

  std::vector<std::size_t> negs;
  std::vector<double> dists;
  for (std::size_t a = 0; a < view.b; ++a) {
    if (view.members[view.slot[a]].size() < 2) continue;
    negs.clear();
    dists.clear();
    for (std::size_t n = 0; n < view.b; ++n) {
      if (batch.labels[n] == batch.labels[a]) continue;
      negs.push_back(n);
      dists.push_back(clamped(a, n));
    }
    const std::vector<double> probs = dws_negative_weights(dists, view.d, spec.dws_lambda);
    double mass = 0.0;
    for (double p : probs) mass += p;
    if (mass <= 0.0) {
      throw UsageError("dws: all negative sampling weights are zero for anchor row " +
                       std::to_string(a));
    }

    Rng stream = rng.fork(anchor_key(view, a));
    for (std::size_t p : view.members[view.slot[a]]) {
      if (p == a) continue;
      // Inverse-CDF draw over negatives in row order.
      const double u = stream.uniform();
      std::size_t pick = negs.size() - 1;
      double cumulative = 0.0;
      for (std::size_t idx = 0; idx < probs.size(); ++idx) {
        cumulative += probs[idx];
        if (u < cumulative) {
          pick = idx;
          break;
        }
      }
      const std::size_t n = negs[pick];
      const double arg = spec.margin + clamped(a, p) - clamped(a, n);
      if (arg > 0.0) {
        res.value += arg;
        coeffs(a, p) += 1.0;
        coeffs(a, n) -= 1.0;
        ++res.active_triplets;
      }
    }
  }

  const Matrix grad_unit = grad_from_euclid_coeffs(nh.unit, coeffs, euclid, spec.dws_dmin);
  res.grad = backprop_normalization(nh, grad_unit);
  return res;
}

LossResult loss_and_grad(const Batch& batch, const LossSpec& spec, const LossContext& ctx) {
  switch (spec.kind) {
    case LossKind::kBatchAll:
      return loss_batch_all(batch, spec);
    case LossKind::kBatchSemiHard:
      return loss_batch_semi_hard(batch, spec);
    case LossKind::kHPHN:
      return loss_extreme(batch, spec, ExtremePolicy::kHPHN);
    case LossKind::kEPEN:
      return loss_extreme(batch, spec, ExtremePolicy::kEPEN);
    case LossKind::kEPHN:
      return loss_extreme(batch, spec, ExtremePolicy::kEPHN);
    case LossKind::kHPEN:
      return loss_extreme(batch, spec, ExtremePolicy::kHPEN);
    case LossKind::kAssorted:
      if (ctx.rng == nullptr) {
        throw UsageError("assorted loss requires LossContext.rng");
      }
      return loss_extreme(batch, spec, ExtremePolicy::kAssorted, ctx.rng);
    case LossKind::kNCA:
      return loss_nca(batch, spec);
    case LossKind::kProxyNCA: {
      if (ctx.proxies == nullptr) {
        throw UsageError("proxy-nca requires LossContext.proxies");
      }
      auto [result, state] = loss_proxy_nca(batch, spec, std::move(*ctx.proxies));
      *ctx.proxies = std::move(state);
      return std::move(result);
    }
    case LossKind::kEasyPositive:
      return loss_easy_positive(batch, spec, false);
    case LossKind::kEasyPositiveDist:
      return loss_easy_positive(batch, spec, true);
    case LossKind::kDWS:
      if (ctx.rng == nullptr) {
        throw UsageError("dws requires LossContext.rng");
      }
      return loss_dws(batch, spec, *ctx.rng);
  }
  throw UsageError("unhandled loss kind");
}

}  // namespace trimine
