#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hwrisk/autodiff.hpp"

namespace hwrisk::nn {

enum class Activation { kLinear, kRelu };

// y = act(x W + b); W is in x out, b is 1 x out.
struct Dense {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::kLinear;

  static Dense create(ParameterSet& params, const std::string& name, std::size_t in,
                      std::size_t out, Activation act);
  Var operator()(Graph& g, ParameterSet& params, Var x) const;
};

// Gates packed as [input | forget | candidate | output] along columns of a
// single (in + hidden) x 4*hidden weight.
struct LstmCell {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t hidden = 0;

  static LstmCell create(ParameterSet& params, const std::string& name, std::size_t in,
                         std::size_t hidden);
  std::pair<Var, Var> operator()(Graph& g, ParameterSet& params, Var x, Var h, Var c) const;
};

// Scaled dot-product self-attention with learned query/key/value maps.
struct SelfAttention {
  std::size_t wq = 0;
  std::size_t wk = 0;
  std::size_t wv = 0;
  std::size_t dim = 0;
  std::size_t dk = 0;

  static SelfAttention create(ParameterSet& params, const std::string& name, std::size_t dim,
                              std::size_t dk);
  // One sequence stacked as rows: H is T x dim, result T x dk.
  Var sequence(Graph& g, ParameterSet& params, Var h) const;
  // Batched form: steps[t] is B x dim. Returns the attended context of the
  // last step (its query against all keys), B x dk.
  Var last_query(Graph& g, ParameterSet& params, std::span<const Var> steps) const;
};

// Plain-value entry points.
struct LstmWeights {
  Tensor2D weight;  // (in + hidden) x 4*hidden
  Tensor2D bias;    // 1 x 4*hidden
};

std::pair<Tensor2D, Tensor2D> lstm_cell(const Tensor2D& x, const Tensor2D& h_prev,
                                        const Tensor2D& c_prev, const LstmWeights& w);

struct AttentionWeights {
  Tensor2D wq;
  Tensor2D wk;
  Tensor2D wv;
};

Tensor2D attention_forward(const Tensor2D& h, const AttentionWeights& w);

// Glorot-uniform weights scaled by gain, zero biases.
void init_dense(ParameterSet& params, const Dense& layer, std::mt19937_64& rng, double gain);
void init_lstm(ParameterSet& params, const LstmCell& cell, std::mt19937_64& rng,
               double forget_bias);
void init_attention(ParameterSet& params, const SelfAttention& att, std::mt19937_64& rng);
void fill_uniform(Tensor2D& t, double limit, std::mt19937_64& rng);

}  // namespace hwrisk::nn
