#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trimine/matrix.hpp"
#include "trimine/rng.hpp"

namespace trimine {

// Feed-forward embedding model: tanh hidden layers, a linear embedding layer,
// and a linear classifier head on top of the embedding. The embedding output
// is the "one-to-last" representation the classifier is trained through.
struct ModelParams {
  std::vector<std::size_t> dims;            // input, hidden..., embedding width
  std::vector<Matrix> weights;              // weights[l]: dims[l+1] x dims[l]
  std::vector<std::vector<double>> biases;  // biases[l]: dims[l+1]
  Matrix classifier_weight;                 // class_count x embedding width
  std::vector<double> classifier_bias;
  std::int32_t class_count = 0;

  std::size_t layer_count() const { return weights.size(); }
  std::size_t input_dim() const { return dims.front(); }
  std::size_t embedding_dim() const { return dims.back(); }

  void validate() const;
};

// Fan-in scaled uniform init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero
// biases. Deterministic under the rng seed.
ModelParams init_params(std::span<const std::size_t> dims, std::int32_t class_count,
                        Rng& rng);

enum class Head { kEmbedding, kClassifier };

// Per-layer activations kept for the backward pass. activations[0] is the
// input; activations[l + 1] the output of layer l (tanh for hidden layers,
// linear for the embedding layer).
struct ForwardCache {
  std::vector<Matrix> activations;
};

Matrix forward(const ModelParams& params, const Matrix& input, Head head);
Matrix forward(const ModelParams& params, const Matrix& input, Head head,
               ForwardCache& cache);

// Gradient container shaped exactly like ModelParams.
struct ParamGrads {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  Matrix classifier_weight;
  std::vector<double> classifier_bias;
};

ParamGrads zero_grads(const ModelParams& params);

// Backpropagates dL/dembedding to all layer parameters (classifier grads
// stay zero).
ParamGrads backward_from_embedding(const ModelParams& params, const ForwardCache& cache,
                                   const Matrix& grad_embedding);

// Backpropagates dL/dscores through the classifier head and the layers.
ParamGrads backward_from_scores(const ModelParams& params, const ForwardCache& cache,
                                const Matrix& grad_scores);

// Mean softmax cross-entropy over rows; optionally writes dL/dscores.
double softmax_cross_entropy(const Matrix& scores, std::span<const std::int32_t> labels,
                             Matrix* grad_scores = nullptr);

// Flat views over every parameter tensor, in a fixed order shared with
// ParamGrads, so optimizers can walk them in lockstep.
std::vector<std::span<double>> tensor_views(ModelParams& params);
std::vector<std::span<double>> tensor_views(ParamGrads& grads);
std::vector<std::span<const double>> tensor_views(const ParamGrads& grads);

}  // namespace trimine
