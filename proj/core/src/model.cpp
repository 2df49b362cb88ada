#include "trimine/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trimine/errors.hpp"

namespace trimine {

namespace {

// out = x * W^T + b, the affine map of one layer.
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
  const std::size_t n = x.rows(), in = x.cols(), out_dim = w.rows();
  Matrix out(n, out_dim, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < out_dim; ++j) {
      double acc = b[j];
      for (std::size_t k = 0; k < in; ++k) acc += x(r, k) * w(j, k);
      out(r, j) = acc;
    }
  }
  return out;
}

void tanh_inplace(Matrix& m) {
  for (double& v : m.storage()) v = std::tanh(v);
}

// dW += g^T x and db += column sums of g, for g = dL/d(layer output).
void accumulate_affine_grads(const Matrix& g, const Matrix& x, Matrix& dw,
                             std::vector<double>& db) {
  const std::size_t n = g.rows(), out_dim = g.cols(), in = x.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < out_dim; ++j) {
      const double gj = g(r, j);
      if (gj == 0.0) continue;
      db[j] += gj;
      for (std::size_t k = 0; k < in; ++k) dw(j, k) += gj * x(r, k);
    }
  }
}

// returns g * W, the gradient w.r.t. the layer input.
Matrix input_grad(const Matrix& g, const Matrix& w) {
  const std::size_t n = g.rows(), out_dim = g.cols(), in = w.cols();
  Matrix out(n, in, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < out_dim; ++j) {
      const double gj = g(r, j);
      if (gj == 0.0) continue;
      for (std::size_t k = 0; k < in; ++k) out(r, k) += gj * w(j, k);
    }
  }
  return out;
}

}  // namespace

void ModelParams::validate() const {
  if (dims.size() < 2 || weights.size() != dims.size() - 1 ||
      biases.size() != weights.size()) {
    throw UsageError("model has inconsistent layer structure");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != dims[l + 1] || weights[l].cols() != dims[l] ||
        biases[l].size() != dims[l + 1]) {
      throw UsageError("layer " + std::to_string(l) + " shape mismatch");
    }
    if (!weights[l].all_finite()) {
      throw UsageError("layer " + std::to_string(l) + " has non-finite weights");
    }
    for (double v : biases[l]) {
      if (!std::isfinite(v)) throw UsageError("layer " + std::to_string(l) + " bias not finite");
    }
  }
  if (class_count > 0) {
    if (classifier_weight.rows() != static_cast<std::size_t>(class_count) ||
        classifier_weight.cols() != embedding_dim() ||
        classifier_bias.size() != static_cast<std::size_t>(class_count)) {
      throw UsageError("classifier head shape mismatch");
    }
    if (!classifier_weight.all_finite()) {
      throw UsageError("classifier head has non-finite weights");
    }
  }
}

ModelParams init_params(std::span<const std::size_t> dims, std::int32_t class_count,
                        Rng& rng) {
  if (dims.size() < 2) {
    throw UsageError("model needs at least input and embedding dims");
  }
  ModelParams params;
  params.dims.assign(dims.begin(), dims.end());
  params.class_count = class_count;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    Matrix w(dims[l + 1], dims[l], 0.0);
    for (double& v : w.storage()) v = (2.0 * rng.uniform() - 1.0) * scale;
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(dims[l + 1], 0.0);
  }
  if (class_count > 0) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims.back()));
    params.classifier_weight = Matrix(class_count, dims.back(), 0.0);
    for (double& v : params.classifier_weight.storage()) {
      v = (2.0 * rng.uniform() - 1.0) * scale;
    }
    params.classifier_bias.assign(class_count, 0.0);
  }
  return params;
}

Matrix forward(const ModelParams& params, const Matrix& input, Head head) {
  ForwardCache cache;
  return forward(params, input, head, cache);
}

Matrix forward(const ModelParams& params, const Matrix& input, Head head,
               ForwardCache& cache) {
  params.validate();
  if (input.cols() != params.input_dim()) {
    throw UsageError("input dim " + std::to_string(input.cols()) +
                     " does not match model input dim " +
                     std::to_string(params.input_dim()));
  }
  cache.activations.clear();
  cache.activations.push_back(input);
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    Matrix z = affine(cache.activations.back(), params.weights[l], params.biases[l]);
    if (l + 1 < params.layer_count()) tanh_inplace(z);  // embedding layer is linear
    cache.activations.push_back(std::move(z));
  }
  if (head == Head::kEmbedding) {
    return cache.activations.back();
  }
  if (params.class_count <= 0) {
    throw UsageError("model has no classifier head");
  }
  return affine(cache.activations.back(), params.classifier_weight, params.classifier_bias);
}

ParamGrads zero_grads(const ModelParams& params) {
  ParamGrads grads;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    grads.weights.emplace_back(params.weights[l].rows(), params.weights[l].cols(), 0.0);
    grads.biases.emplace_back(params.biases[l].size(), 0.0);
  }
  grads.classifier_weight =
      Matrix(params.classifier_weight.rows(), params.classifier_weight.cols(), 0.0);
  grads.classifier_bias.assign(params.classifier_bias.size(), 0.0);
  return grads;
}

ParamGrads backward_from_embedding(const ModelParams& params, const ForwardCache& cache,
                                   const Matrix& grad_embedding) {
  ParamGrads grads = zero_grads(params);
  Matrix g = grad_embedding;
  for (std::size_t l = params.layer_count(); l-- > 0;) {
    accumulate_affine_grads(g, cache.activations[l], grads.weights[l], grads.biases[l]);
    if (l == 0) break;
    g = input_grad(g, params.weights[l]);
    // tanh' = 1 - a^2 where a is the cached post-activation.
    const Matrix& act = cache.activations[l];
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t k = 0; k < g.cols(); ++k) {
        g(r, k) *= 1.0 - act(r, k) * act(r, k);
      }
    }
  }
  return grads;
}

ParamGrads backward_from_scores(const ModelParams& params, const ForwardCache& cache,
                                const Matrix& grad_scores) {
  if (params.class_count <= 0) {
    throw UsageError("model has no classifier head");
  }
  const Matrix& embedding = cache.activations.back();
  ParamGrads grads = backward_from_embedding(
      params, cache, input_grad(grad_scores, params.classifier_weight));
  accumulate_affine_grads(grad_scores, embedding, grads.classifier_weight,
                          grads.classifier_bias);
  return grads;
}

double softmax_cross_entropy(const Matrix& scores, std::span<const std::int32_t> labels,
                             Matrix* grad_scores) {
  const std::size_t n = scores.rows(), c = scores.cols();
  if (labels.size() != n) {
    throw UsageError("label count does not match score rows");
  }
  if (grad_scores != nullptr) *grad_scores = Matrix(n, c, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::int32_t label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw UsageError("label " + std::to_string(label) + " out of range for " +
                       std::to_string(c) + " classes");
    }
    double max_v = scores(r, 0);
    for (std::size_t j = 1; j < c; ++j) max_v = std::max(max_v, scores(r, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(scores(r, j) - max_v);
    const double log_sum = max_v + std::log(sum);
    total += log_sum - scores(r, static_cast<std::size_t>(label));
    if (grad_scores != nullptr) {
      for (std::size_t j = 0; j < c; ++j) {
        const double softmax = std::exp(scores(r, j) - log_sum);
        (*grad_scores)(r, j) =
            (softmax - (j == static_cast<std::size_t>(label) ? 1.0 : 0.0)) /
            static_cast<double>(n);
      }
    }
  }
  return total / static_cast<double>(n);
}

namespace {

template <class Params>
auto views_impl(Params& p) {
  using Span = std::conditional_t<std::is_const_v<Params>, std::span<const double>,
                                  std::span<double>>;
  std::vector<Span> views;
  for (auto& w : p.weights) views.push_back({w.data(), w.size()});
  for (auto& b : p.biases) views.push_back({b.data(), b.size()});
  views.push_back({p.classifier_weight.data(), p.classifier_weight.size()});
  views.push_back({p.classifier_bias.data(), p.classifier_bias.size()});
  return views;
}

}  // namespace

std::vector<std::span<double>> tensor_views(ModelParams& params) {
  return views_impl(params);
}
std::vector<std::span<double>> tensor_views(ParamGrads& grads) {
  return views_impl(grads);
}
std::vector<std::span<const double>> tensor_views(const ParamGrads& grads) {
  return views_impl(grads);
}

}  // namespace trimine
