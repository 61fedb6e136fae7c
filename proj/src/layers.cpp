#include "hwrisk/layers.hpp"

#include <cmath>

#include "hwrisk/errors.hpp"

namespace hwrisk::nn {

Dense Dense::create(ParameterSet& params, const std::string& name, std::size_t in,
                    std::size_t out, Activation act) {
  Dense d;
  d.weight = params.add(name + ".w", in, out);
  d.bias = params.add(name + ".b", 1, out);
  d.in = in;
  d.out = out;
  d.activation = act;
  return d;
}

Var Dense::operator()(Graph& g, ParameterSet& params, Var x) const {
  if (x.cols() != in) {
    throw ShapeMismatch("dense expects " + std::to_string(in) + " inputs, got " +
                        std::to_string(x.cols()));
  }
  Var y = add_row(matmul(x, g.param(params, weight)), g.param(params, bias));
  return activation == Activation::kRelu ? relu(y) : y;
}

LstmCell LstmCell::create(ParameterSet& params, const std::string& name, std::size_t in,
                          std::size_t hidden) {
  LstmCell c;
  c.weight = params.add(name + ".w", in + hidden, 4 * hidden);
  c.bias = params.add(name + ".b", 1, 4 * hidden);
  c.in = in;
  c.hidden = hidden;
  return c;
}

std::pair<Var, Var> LstmCell::operator()(Graph& g, ParameterSet& params, Var x, Var h,
                                         Var c) const {
  if (x.cols() != in || h.cols() != hidden || c.cols() != hidden || h.rows() != x.rows() ||
      c.rows() != x.rows()) {
    throw ShapeMismatch("lstm cell input/state shapes");
  }
  const Var parts[2] = {x, h};
  Var z = add_row(matmul(concat_cols(parts), g.param(params, weight)), g.param(params, bias));
  Var i_gate = sigmoid(slice_cols(z, 0, hidden));
  Var f_gate = sigmoid(slice_cols(z, hidden, hidden));
  Var g_cand = tanh(slice_cols(z, 2 * hidden, hidden));
  Var o_gate = sigmoid(slice_cols(z, 3 * hidden, hidden));
  Var c_next = f_gate * c + i_gate * g_cand;
  Var h_next = o_gate * tanh(c_next);
  return {h_next, c_next};
}

SelfAttention SelfAttention::create(ParameterSet& params, const std::string& name,
                                    std::size_t dim, std::size_t dk) {
  SelfAttention a;
  a.wq = params.add(name + ".wq", dim, dk);
  a.wk = params.add(name + ".wk", dim, dk);
  a.wv = params.add(name + ".wv", dim, dk);
  a.dim = dim;
  a.dk = dk;
  return a;
}

Var SelfAttention::sequence(Graph& g, ParameterSet& params, Var h) const {
  if (h.rows() == 0 || h.cols() != dim) throw ShapeMismatch("attention input shape");
  Var q = matmul(h, g.param(params, wq));
  Var k = matmul(h, g.param(params, wk));
  Var v = matmul(h, g.param(params, wv));
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
  return matmul(softmax_rows(scores), v);
}

Var SelfAttention::last_query(Graph& g, ParameterSet& params, std::span<const Var> steps) const {
  if (steps.empty()) throw ShapeMismatch("attention over an empty window");
  Var pq = g.param(params, wq);
  Var pk = g.param(params, wk);
  Var pv = g.param(params, wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  Var q = matmul(steps.back(), pq);
  std::vector<Var> scores;
  std::vector<Var> values;
  scores.reserve(steps.size());
  values.reserve(steps.size());
  for (Var s : steps) {
    if (s.cols() != dim) throw ShapeMismatch("attention step width");
    scores.push_back(scale(sum_cols(q * matmul(s, pk)), inv_sqrt));
    values.push_back(matmul(s, pv));
  }
  Var weights = softmax_rows(concat_cols(scores));
  Var out = mul_col(values[0], slice_cols(weights, 0, 1));
  for (std::size_t t = 1; t < values.size(); ++t) {
    out = out + mul_col(values[t], slice_cols(weights, t, 1));
  }
  return out;
}

std::pair<Tensor2D, Tensor2D> lstm_cell(const Tensor2D& x, const Tensor2D& h_prev,
                                        const Tensor2D& c_prev, const LstmWeights& w) {
  const std::size_t hidden = h_prev.cols();
  if (w.weight.rows() != x.cols() + hidden || w.weight.cols() != 4 * hidden ||
      w.bias.rows() != 1 || w.bias.cols() != 4 * hidden) {
    throw ShapeMismatch("lstm weights do not match input/hidden sizes");
  }
  ParameterSet ps;
  LstmCell cell = LstmCell::create(ps, "lstm", x.cols(), hidden);
  ps[cell.weight].value = w.weight;
  ps[cell.bias].value = w.bias;
  Graph g;
  auto [h, c] = cell(g, ps, g.constant(x), g.constant(h_prev), g.constant(c_prev));
  return {h.value(), c.value()};
}

Tensor2D attention_forward(const Tensor2D& h, const AttentionWeights& w) {
  if (w.wq.rows() != h.cols() || !w.wq.same_shape(w.wk) || w.wv.rows() != h.cols() ||
      w.wq.cols() == 0) {
    throw ShapeMismatch("attention weights do not match hidden width");
  }
  ParameterSet ps;
  SelfAttention att = SelfAttention::create(ps, "att", h.cols(), w.wq.cols());
  ps[att.wq].value = w.wq;
  ps[att.wk].value = w.wk;
  ps[att.wv].value = w.wv;  // value width may differ from the key width
  Graph g;
  return att.sequence(g, ps, g.constant(h)).value();
}

void fill_uniform(Tensor2D& t, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  for (double& v : t.values()) v = u(rng);
}

void init_dense(ParameterSet& params, const Dense& layer, std::mt19937_64& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
  fill_uniform(params[layer.weight].value, limit, rng);
  params[layer.bias].value.fill(0.0);
}

void init_lstm(ParameterSet& params, const LstmCell& cell, std::mt19937_64& rng,
               double forget_bias) {
  const double limit = std::sqrt(6.0 / static_cast<double>(cell.in + 2 * cell.hidden));
  fill_uniform(params[cell.weight].value, limit, rng);
  Tensor2D& b = params[cell.bias].value;
  b.fill(0.0);
  for (std::size_t j = cell.hidden; j < 2 * cell.hidden; ++j) b[j] = forget_bias;
}

void init_attention(ParameterSet& params, const SelfAttention& att, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(att.dim + att.dk));
  fill_uniform(params[att.wq].value, limit, rng);
  fill_uniform(params[att.wk].value, limit, rng);
  fill_uniform(params[att.wv].value, limit, rng);
}

}  // namespace hwrisk::nn
