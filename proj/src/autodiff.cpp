#include "hwrisk/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "hwrisk/errors.hpp"

namespace hwrisk::nn {

std::size_t ParameterSet::add(std::string name, std::size_t rows, std::size_t cols) {
  params_.push_back({std::move(name), Tensor2D(rows, cols), Tensor2D(rows, cols)});
  return params_.size() - 1;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (Parameter& p : params_) p.grad.fill(0.0);
}

std::vector<double> ParameterSet::flat_values() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const Parameter& p : params_) {
    out.insert(out.end(), p.value.storage().begin(), p.value.storage().end());
  }
  return out;
}

std::vector<double> ParameterSet::flat_grads() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const Parameter& p : params_) {
    out.insert(out.end(), p.grad.storage().begin(), p.grad.storage().end());
  }
  return out;
}

void ParameterSet::assign_values(std::span<const double> flat) {
  if (flat.size() != scalar_count()) {
    throw ShapeMismatch("flat parameter vector has " + std::to_string(flat.size()) +
                        " values, expected " + std::to_string(scalar_count()));
  }
  std::size_t k = 0;
  for (Parameter& p : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), p.value.size(),
                p.value.storage().begin());
    k += p.value.size();
  }
}

std::string ParameterSet::layout() const {
  std::ostringstream os;
  for (const Parameter& p : params_) {
    os << p.name << ':' << p.value.rows() << 'x' << p.value.cols() << ';';
  }
  return os.str();
}

const Tensor2D& Var::value() const {
  if (graph_ == nullptr) throw GraphNotEvaluated("empty variable");
  return graph_->node(id_).value;
}

double Var::scalar() const {
  const Tensor2D& v = value();
  if (v.size() != 1) throw ShapeMismatch("not a scalar");
  return v[0];
}

Var Graph::constant(Tensor2D value) { return emit(std::move(value), false, nullptr); }

Var Graph::param(ParameterSet& set, std::size_t index) {
  Parameter& p = set[index];
  if (!p.grad.same_shape(p.value)) p.grad = Tensor2D(p.value.rows(), p.value.cols());
  Var v = emit(p.value, true, nullptr);
  nodes_.back().bound = &p;
  return v;
}

Var Graph::emit(Tensor2D value, bool requires_grad,
                std::function<void(Graph&, std::size_t)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor2D& Graph::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor2D(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::note_branch(bool taken) {
  branch_hash_ = (branch_hash_ ^ (taken ? 0x9e3779b97f4a7c15ULL : 0x7f4a7c159e3779b9ULL)) *
                 1099511628211ULL;
}

void Graph::backward(Var loss) {
  if (!loss.valid() || loss.graph() != this) {
    throw GraphNotEvaluated("loss does not belong to this graph");
  }
  if (consumed_) throw GraphNotEvaluated("graph was already differentiated");
  if (loss.value().size() != 1) throw ShapeMismatch("backward needs a scalar loss");
  consumed_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_of(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.bound != nullptr) {
      n.bound->grad.mat() += n.grad.mat();
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw GraphNotEvaluated("operation on an empty variable");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  Graph& g = graph_of(a);
  if (b.graph() != &g) throw ShapeMismatch("operands belong to different graphs");
  return g;
}

bool needs(Graph& g, Var v) { return g.node(v.id()).requires_grad; }

void require_same_shape(const Tensor2D& a, const Tensor2D& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                        "x" + std::to_string(b.cols()));
  }
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  Graph& g = graph_of(a);
  const Tensor2D& x = a.value();
  Tensor2D y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return g.emit(std::move(y), needs(g, a), [ia, dfdx](Graph& gr, std::size_t self) {
    const Tensor2D& x = gr.node(ia).value;
    const Tensor2D& y = gr.node(self).value;
    const Tensor2D& dy = gr.node(self).grad;
    Tensor2D& dx = gr.grad_of(ia);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += dy[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor2D& A = a.value();
  const Tensor2D& B = b.value();
  if (A.cols() != B.rows()) {
    throw ShapeMismatch("matmul " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
                        " by " + std::to_string(B.rows()) + "x" + std::to_string(B.cols()));
  }
  Tensor2D C(A.rows(), B.cols());
  C.mat().noalias() = A.mat() * B.mat();
  const std::size_t ia = a.id(), ib = b.id();
  return g.emit(std::move(C), needs(g, a) || needs(g, b),
                [ia, ib](Graph& gr, std::size_t self) {
                  const Tensor2D& dC = gr.node(self).grad;
                  if (gr.node(ia).requires_grad) {
                    gr.grad_of(ia).mat().noalias() += dC.mat() * gr.node(ib).value.mat().transpose();
                  }
                  if (gr.node(ib).requires_grad) {
                    gr.grad_of(ib).mat().noalias() += gr.node(ia).value.mat().transpose() * dC.mat();
                  }
                });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor2D& x = a.value();
  Tensor2D y(x.cols(), x.rows());
  y.mat() = x.mat().transpose();
  const std::size_t ia = a.id();
  return g.emit(std::move(y), needs(g, a), [ia](Graph& gr, std::size_t self) {
    gr.grad_of(ia).mat() += gr.node(self).grad.mat().transpose();
  });
}

namespace {

template <typename Combine>
Var binary(Var a, Var b, const char* name, Combine combine, double sign_b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), name);
  Tensor2D y(a.value().rows(), a.value().cols());
  y.mat() = combine(a.value().mat(), b.value().mat());
  const std::size_t ia = a.id(), ib = b.id();
  return g.emit(std::move(y), needs(g, a) || needs(g, b),
                [ia, ib, sign_b](Graph& gr, std::size_t self) {
                  const Tensor2D& dy = gr.node(self).grad;
                  if (gr.node(ia).requires_grad) gr.grad_of(ia).mat() += dy.mat();
                  if (gr.node(ib).requires_grad) gr.grad_of(ib).mat() += sign_b * dy.mat();
                });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(a, b, "add", [](const auto& x, const auto& y) { return (x + y).eval(); }, 1.0);
}

Var sub(Var a, Var b) {
  return binary(a, b, "sub", [](const auto& x, const auto& y) { return (x - y).eval(); }, -1.0);
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor2D y(a.value().rows(), a.value().cols());
  y.mat() = a.value().mat().cwiseProduct(b.value().mat());
  const std::size_t ia = a.id(), ib = b.id();
  return g.emit(std::move(y), needs(g, a) || needs(g, b), [ia, ib](Graph& gr, std::size_t self) {
    const Tensor2D& dy = gr.node(self).grad;
    if (gr.node(ia).requires_grad) {
      gr.grad_of(ia).mat() += dy.mat().cwiseProduct(gr.node(ib).value.mat());
    }
    if (gr.node(ib).requires_grad) {
      gr.grad_of(ib).mat() += dy.mat().cwiseProduct(gr.node(ia).value.mat());
    }
  });
}

Var add_row(Var a, Var row) {
  Graph& g = graph_of(a, row);
  const Tensor2D& x = a.value();
  const Tensor2D& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) throw ShapeMismatch("add_row: bias shape");
  Tensor2D y = x;
  y.mat().rowwise() += r.mat().row(0);
  const std::size_t ia = a.id(), ir = row.id();
  return g.emit(std::move(y), needs(g, a) || needs(g, row), [ia, ir](Graph& gr, std::size_t self) {
    const Tensor2D& dy = gr.node(self).grad;
    if (gr.node(ia).requires_grad) gr.grad_of(ia).mat() += dy.mat();
    if (gr.node(ir).requires_grad) gr.grad_of(ir).mat() += dy.mat().colwise().sum();
  });
}

Var mul_col(Var a, Var col) {
  Graph& g = graph_of(a, col);
  const Tensor2D& x = a.value();
  const Tensor2D& c = col.value();
  if (c.cols() != 1 || c.rows() != x.rows()) throw ShapeMismatch("mul_col: column shape");
  Tensor2D y = x;
  for (std::size_t i = 0; i < x.rows(); ++i) y.mat().row(Eigen::Index(i)) *= c[i];
  const std::size_t ia = a.id(), ic = col.id();
  return g.emit(std::move(y), needs(g, a) || needs(g, col), [ia, ic](Graph& gr, std::size_t self) {
    const Tensor2D& dy = gr.node(self).grad;
    const Tensor2D& x = gr.node(ia).value;
    const Tensor2D& c = gr.node(ic).value;
    if (gr.node(ia).requires_grad) {
      Tensor2D& dx = gr.grad_of(ia);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        dx.mat().row(Eigen::Index(i)) += c[i] * dy.mat().row(Eigen::Index(i));
      }
    }
    if (gr.node(ic).requires_grad) {
      Tensor2D& dc = gr.grad_of(ic);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        dc[i] += dy.mat().row(Eigen::Index(i)).dot(x.mat().row(Eigen::Index(i)));
      }
    }
  });
}

Var broadcast_rows(Var row, std::size_t n) {
  Graph& g = graph_of(row);
  const Tensor2D& r = row.value();
  if (r.rows() != 1) throw ShapeMismatch("broadcast_rows needs a single row");
  Tensor2D y(n, r.cols());
  y.mat().rowwise() = r.mat().row(0);
  const std::size_t ir = row.id();
  return g.emit(std::move(y), needs(g, row), [ir](Graph& gr, std::size_t self) {
    gr.grad_of(ir).mat() += gr.node(self).grad.mat().colwise().sum();
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  Graph& g = graph_of(a);
  for (double x : a.value().values()) g.note_branch(x > 0.0);
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(a,
               [](double x) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var log_normal_cdf(Var a) {
  return unary(
      a, [](double x) { return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2)); },
      [](double x, double) {
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return pdf / (0.5 * std::erfc(-x / std::numbers::sqrt2));
      });
}

Var clip(Var a, double lo, double hi) {
  Graph& g = graph_of(a);
  for (double x : a.value().values()) {
    g.note_branch(x < lo);
    g.note_branch(x > hi);
  }
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

namespace {

Var select(Var a, Var b, bool take_min) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), take_min ? "minimum" : "maximum");
  const Tensor2D& x = a.value();
  const Tensor2D& z = b.value();
  Tensor2D y(x.rows(), x.cols());
  std::vector<char> from_a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    from_a[i] = take_min ? (x[i] <= z[i]) : (x[i] >= z[i]);
    y[i] = from_a[i] ? x[i] : z[i];
    g.note_branch(from_a[i] != 0);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return g.emit(std::move(y), needs(g, a) || needs(g, b),
                [ia, ib, from_a = std::move(from_a)](Graph& gr, std::size_t self) {
                  const Tensor2D& dy = gr.node(self).grad;
                  const bool ga = gr.node(ia).requires_grad;
                  const bool gb = gr.node(ib).requires_grad;
                  for (std::size_t i = 0; i < dy.size(); ++i) {
                    if (from_a[i]) {
                      if (ga) gr.grad_of(ia)[i] += dy[i];
                    } else if (gb) {
                      gr.grad_of(ib)[i] += dy[i];
                    }
                  }
                });
}

}  // namespace

Var minimum(Var a, Var b) { return select(a, b, true); }
Var maximum(Var a, Var b) { return select(a, b, false); }

Var sum_cols(Var a) {
  Graph& g = graph_of(a);
  const Tensor2D& x = a.value();
  Tensor2D y(x.rows(), 1);
  y.mat() = x.mat().rowwise().sum();
  const std::size_t ia = a.id();
  return g.emit(std::move(y), needs(g, a), [ia](Graph& gr, std::size_t self) {
    const Tensor2D& dy = gr.node(self).grad;
    Tensor2D& dx = gr.grad_of(ia);
    dx.mat().colwise() += dy.mat().col(0);
  });
}

Var sum_all(Var a) {
  Graph& g = graph_of(a);
  Tensor2D y(1, 1, a.value().mat().sum());
  const std::size_t ia = a.id();
  return g.emit(std::move(y), needs(g, a), [ia](Graph& gr, std::size_t self) {
    gr.grad_of(ia).mat().array() += gr.node(self).grad[0];
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeMismatch("mean of an empty tensor");
  return scale(sum_all(a), 1.0 / n);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  Graph& g = graph_of(parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool any = false;
  for (Var p : parts) {
    graph_of(parts[0], p);
    if (p.rows() != rows) throw ShapeMismatch("concat_cols row count");
    cols += p.cols();
    any = any || needs(g, p);
  }
  Tensor2D y(rows, cols);
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (id, offset)
  std::size_t off = 0;
  for (Var p : parts) {
    y.mat().middleCols(Eigen::Index(off), Eigen::Index(p.cols())) = p.value().mat();
    spans.emplace_back(p.id(), off);
    off += p.cols();
  }
  return g.emit(std::move(y), any, [spans = std::move(spans)](Graph& gr, std::size_t self) {
    const Tensor2D& dy = gr.node(self).grad;
    for (const auto& [id, offset] : spans) {
      if (!gr.node(id).requires_grad) continue;
      Tensor2D& dx = gr.grad_of(id);
      dx.mat() += dy.mat().middleCols(Eigen::Index(offset), Eigen::Index(dx.cols()));
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Graph& g = graph_of(a);
  const Tensor2D& x = a.value();
  if (start + count > x.cols()) throw ShapeMismatch("slice_cols out of range");
  Tensor2D y(x.rows(), count);
  y.mat() = x.mat().middleCols(Eigen::Index(start), Eigen::Index(count));
  const std::size_t ia = a.id();
  return g.emit(std::move(y), needs(g, a), [ia, start, count](Graph& gr, std::size_t self) {
    gr.grad_of(ia).mat().middleCols(Eigen::Index(start), Eigen::Index(count)) +=
        gr.node(self).grad.mat();
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  Graph& g = graph_of(a);
  const Tensor2D& x = a.value();
  if (start + count > x.rows()) throw ShapeMismatch("slice_rows out of range");
  Tensor2D y(count, x.cols());
  y.mat() = x.mat().middleRows(Eigen::Index(start), Eigen::Index(count));
  const std::size_t ia = a.id();
  return g.emit(std::move(y), needs(g, a), [ia, start, count](Graph& gr, std::size_t self) {
    gr.grad_of(ia).mat().middleRows(Eigen::Index(start), Eigen::Index(count)) +=
        gr.node(self).grad.mat();
  });
}

Var softmax_rows(Var a) {
  Graph& g = graph_of(a);
  const Tensor2D& x = a.value();
  Tensor2D y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.mat().row(Eigen::Index(r));
    const double m = row.maxCoeff();
    auto out = y.mat().row(Eigen::Index(r));
    out = (row.array() - m).exp().matrix();
    out /= out.sum();
  }
  const std::size_t ia = a.id();
  return g.emit(std::move(y), needs(g, a), [ia](Graph& gr, std::size_t self) {
    const Tensor2D& y = gr.node(self).value;
    const Tensor2D& dy = gr.node(self).grad;
    Tensor2D& dx = gr.grad_of(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const auto yr = y.mat().row(Eigen::Index(r));
      const auto gr_row = dy.mat().row(Eigen::Index(r));
      const double dot = yr.dot(gr_row);
      dx.mat().row(Eigen::Index(r)) += (yr.array() * (gr_row.array() - dot)).matrix();
    }
  });
}

Var log_softmax_rows(Var a) {
  Graph& g = graph_of(a);
  const Tensor2D& x = a.value();
  Tensor2D y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.mat().row(Eigen::Index(r));
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    y.mat().row(Eigen::Index(r)) = (row.array() - lse).matrix();
  }
  const std::size_t ia = a.id();
  return g.emit(std::move(y), needs(g, a), [ia](Graph& gr, std::size_t self) {
    const Tensor2D& y = gr.node(self).value;
    const Tensor2D& dy = gr.node(self).grad;
    Tensor2D& dx = gr.grad_of(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const auto gr_row = dy.mat().row(Eigen::Index(r));
      const double total = gr_row.sum();
      dx.mat().row(Eigen::Index(r)) +=
          (gr_row.array() - y.mat().row(Eigen::Index(r)).array().exp() * total).matrix();
    }
  });
}

Var pick_cols(Var a, std::span<const int> index) {
  Graph& g = graph_of(a);
  const Tensor2D& x = a.value();
  if (index.size() != x.rows()) throw ShapeMismatch("pick_cols index length");
  Tensor2D y(x.rows(), 1);
  std::vector<int> idx(index.begin(), index.end());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= x.cols()) {
      throw ShapeMismatch("pick_cols index out of range");
    }
    y[r] = x(r, static_cast<std::size_t>(idx[r]));
  }
  const std::size_t ia = a.id();
  return g.emit(std::move(y), needs(g, a), [ia, idx = std::move(idx)](Graph& gr, std::size_t self) {
    const Tensor2D& dy = gr.node(self).grad;
    Tensor2D& dx = gr.grad_of(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) dx(r, static_cast<std::size_t>(idx[r])) += dy[r];
  });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace hwrisk::nn
