#include "bsda/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "bsda/errors.hpp"
#include "bsda/random.hpp"

namespace bsda::num {

void init_uniform(Parameter& p, double bound, Rng& rng) {
  for (double& v : p.value.values()) v = rng.uniform(-bound, bound);
  p.zero_grad();
}

void init_normal(Parameter& p, double stddev, Rng& rng) {
  for (double& v : p.value.values()) v = stddev * rng.normal();
  p.zero_grad();
}

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, const Node&)> backprop, const char* op) {
  if (!value.all_finite()) throw NumericalError(std::string("non-finite value produced by ") + op);
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backprop)});
  return Var(nodes_.size() - 1);
}

Matrix& Tape::grad_of(std::size_t id) { return nodes_[id].grad; }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr, "constant"); }

Var Tape::parameter(Parameter& p) {
  Parameter* target = &p;
  return push(p.value, true,
              [target](Tape&, const Node& self) {
                auto dst = target->grad.values();
                auto src = self.grad.values();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
              },
              "parameter");
}

Var Tape::parameter(const Parameter& p) { return push(p.value, false, nullptr, "parameter"); }

Var Tape::embedding(Parameter& table, std::size_t index) {
  if (index >= table.value.rows())
    throw ShapeError("embedding index " + std::to_string(index) + " out of range for " + table.name);
  Parameter* target = &table;
  return push(Matrix::column(table.value.row(index)), true,
              [target, index](Tape&, const Node& self) {
                auto dst = target->grad.row(index);
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i];
              },
              "embedding");
}

Var Tape::embedding(const Parameter& table, std::size_t index) {
  if (index >= table.value.rows())
    throw ShapeError("embedding index " + std::to_string(index) + " out of range for " + table.name);
  return push(Matrix::column(table.value.row(index)), false, nullptr, "embedding");
}

Var Tape::matmul(Var a, Var b) {
  const auto ia = a.id(), ib = b.id();
  Matrix out = bsda::matmul(value(a), value(b));
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg,
              [ia, ib](Tape& t, const Node& self) {
                const Matrix& A = t.nodes_[ia].value;
                const Matrix& B = t.nodes_[ib].value;
                const Matrix& G = self.grad;
                if (t.nodes_[ia].requires_grad) {
                  Matrix& dA = t.grad_of(ia);
                  for (std::size_t i = 0; i < A.rows(); ++i)
                    for (std::size_t k = 0; k < A.cols(); ++k) {
                      double s = 0.0;
                      for (std::size_t j = 0; j < B.cols(); ++j) s += G(i, j) * B(k, j);
                      dA(i, k) += s;
                    }
                }
                if (t.nodes_[ib].requires_grad) {
                  Matrix& dB = t.grad_of(ib);
                  for (std::size_t i = 0; i < A.rows(); ++i)
                    for (std::size_t k = 0; k < A.cols(); ++k) {
                      const double aik = A(i, k);
                      for (std::size_t j = 0; j < B.cols(); ++j) dB(k, j) += aik * G(i, j);
                    }
                }
              },
              "matmul");
}

Var Tape::add(Var a, Var b) {
  if (!value(a).same_shape(value(b)))
    throw ShapeError("add: " + value(a).shape_string() + " + " + value(b).shape_string());
  Matrix out = value(a);
  const auto& vb = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const auto ia = a.id(), ib = b.id();
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [ia, ib](Tape& t, const Node& self) {
                for (auto id : {ia, ib}) {
                  if (!t.nodes_[id].requires_grad) continue;
                  auto& g = t.grad_of(id);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                }
              },
              "add");
}

Var Tape::mul(Var a, Var b) {
  if (!value(a).same_shape(value(b)))
    throw ShapeError("mul: " + value(a).shape_string() + " * " + value(b).shape_string());
  Matrix out = value(a);
  const auto& vb = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  const auto ia = a.id(), ib = b.id();
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [ia, ib](Tape& t, const Node& self) {
                const Matrix& A = t.nodes_[ia].value;
                const Matrix& B = t.nodes_[ib].value;
                if (t.nodes_[ia].requires_grad) {
                  auto& g = t.grad_of(ia);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B[i];
                }
                if (t.nodes_[ib].requires_grad) {
                  auto& g = t.grad_of(ib);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A[i];
                }
              },
              "mul");
}

Var Tape::scale(Var a, double factor) {
  Matrix out = value(a);
  for (double& v : out.values()) v *= factor;
  const auto ia = a.id();
  return push(std::move(out), requires_grad(a),
              [ia, factor](Tape& t, const Node& self) {
                auto& g = t.grad_of(ia);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
              },
              "scale");
}

Var Tape::tanh(Var a) {
  Matrix out = value(a);
  for (double& v : out.values()) v = std::tanh(v);
  const auto ia = a.id();
  return push(std::move(out), requires_grad(a),
              [ia](Tape& t, const Node& self) {
                auto& g = t.grad_of(ia);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
              },
              "tanh");
}

Var Tape::concat(std::span<const Var> parts) {
  std::size_t rows = 0;
  bool rg = false;
  for (auto p : parts) {
    if (value(p).cols() != 1) throw ShapeError("concat expects column vectors, got " + value(p).shape_string());
    rows += value(p).rows();
    rg = rg || requires_grad(p);
  }
  Matrix out(rows, 1);
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (auto p : parts) {
    const auto& v = value(p);
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.rows();
    ids.push_back(p.id());
  }
  return push(std::move(out), rg,
              [ids = std::move(ids)](Tape& t, const Node& self) {
                std::size_t off = 0;
                for (auto id : ids) {
                  const auto n = t.nodes_[id].value.rows();
                  if (t.nodes_[id].requires_grad) {
                    auto& g = t.grad_of(id);
                    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
                  }
                  off += n;
                }
              },
              "concat");
}

Var Tape::weighted_average(std::span<const Var> xs, std::span<const double> weights) {
  if (xs.empty() || xs.size() != weights.size()) throw ShapeError("weighted_average: inputs and weights differ in length");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw NumericalError("weighted_average: weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw NumericalError("weighted_average: weights sum to zero");

  Matrix out(value(xs[0]).rows(), value(xs[0]).cols());
  bool rg = false;
  std::vector<std::size_t> ids;
  std::vector<double> coef;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const auto& v = value(xs[j]);
    if (!v.same_shape(out)) throw ShapeError("weighted_average: shape mismatch");
    const double c = weights[j] / total;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * v[i];
    rg = rg || requires_grad(xs[j]);
    ids.push_back(xs[j].id());
    coef.push_back(c);
  }
  return push(std::move(out), rg,
              [ids = std::move(ids), coef = std::move(coef)](Tape& t, const Node& self) {
                for (std::size_t j = 0; j < ids.size(); ++j) {
                  if (!t.nodes_[ids[j]].requires_grad || coef[j] == 0.0) continue;
                  auto& g = t.grad_of(ids[j]);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += coef[j] * self.grad[i];
                }
              },
              "weighted_average");
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t target) {
  const auto& z = value(logits);
  if (z.cols() != 1) throw ShapeError("softmax_cross_entropy expects a column vector, got " + z.shape_string());
  if (target >= z.rows())
    throw ShapeError("softmax_cross_entropy target " + std::to_string(target) + " outside " + std::to_string(z.rows()) +
                     " classes");
  const double zmax = *std::max_element(z.values().begin(), z.values().end());
  std::vector<double> p(z.rows());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(z[i] - zmax));
  for (double& v : p) v /= s;
  const double loss = std::log(s) + zmax - z[target];
  const auto iz = logits.id();
  return push(Matrix(1, 1, loss), requires_grad(logits),
              [iz, target, p = std::move(p)](Tape& t, const Node& self) {
                auto& g = t.grad_of(iz);
                const double up = self.grad[0];
                for (std::size_t i = 0; i < p.size(); ++i) g[i] += up * (p[i] - (i == target ? 1.0 : 0.0));
              },
              "softmax_cross_entropy");
}

Var Tape::sum(std::span<const Var> scalars) {
  if (scalars.empty()) throw ShapeError("sum of nothing");
  double s = 0.0;
  bool rg = false;
  std::vector<std::size_t> ids;
  for (auto v : scalars) {
    if (value(v).size() != 1) throw ShapeError("sum expects scalars");
    s += value(v)[0];
    rg = rg || requires_grad(v);
    ids.push_back(v.id());
  }
  return push(Matrix(1, 1, s), rg,
              [ids = std::move(ids)](Tape& t, const Node& self) {
                for (auto id : ids)
                  if (t.nodes_[id].requires_grad) t.grad_of(id)[0] += self.grad[0];
              },
              "sum");
}

Var Tape::mean(std::span<const Var> scalars) {
  return scale(sum(scalars), 1.0 / static_cast<double>(scalars.size()));
}

void Tape::backward(Var scalar) {
  if (value(scalar).size() != 1) throw ShapeError("backward needs a scalar, got " + value(scalar).shape_string());
  backward_order_.clear();
  if (!requires_grad(scalar)) return;
  for (std::size_t i = 0; i <= scalar.id(); ++i) {
    auto& n = nodes_[i];
    if (n.requires_grad) n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  nodes_[scalar.id()].grad[0] = 1.0;
  for (std::size_t i = scalar.id() + 1; i-- > 0;) {
    const auto& n = nodes_[i];
    if (!n.requires_grad) continue;
    backward_order_.push_back(i);
    if (n.backprop) n.backprop(*this, n);
  }
}

double gradient_check(const std::function<Var(Tape&)>& loss, const ParameterRefs& params, double epsilon) {
  for (auto* p : params) p->zero_grad();
  std::vector<Matrix> analytic;
  {
    Tape tape;
    auto l = loss(tape);
    if (!std::isfinite(tape.value(l)[0])) throw NumericalError("gradient_check: non-finite loss");
    tape.backward(l);
    for (auto* p : params) analytic.push_back(p->grad);
  }
  auto evaluate = [&] {
    Tape tape;
    const double v = tape.value(loss(tape))[0];
    if (!std::isfinite(v)) throw NumericalError("gradient_check: non-finite loss");
    return v;
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto vals = params[k]->value.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + epsilon;
      const double up = evaluate();
      vals[i] = saved - epsilon;
      const double down = evaluate();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  for (auto* p : params) p->zero_grad();
  return worst;
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw UsageError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

void Optimizer::step(const ParameterRefs& params) {
  for (const auto* p : params)
    if (!p->grad.all_finite()) throw NumericalError("non-finite gradient in " + p->name);
  ++steps_;
  const auto& c = config_;
  const double t = static_cast<double>(steps_);
  for (auto* p : params) {
    auto v = p->value.values();
    auto g = p->grad.values();
    if (c.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c.learning_rate * g[i];
    } else {
      auto [it, inserted] = moments_.try_emplace(p);
      if (inserted) it->second = {Matrix(p->value.rows(), p->value.cols()), Matrix(p->value.rows(), p->value.cols())};
      auto m = it->second.first.values();
      auto s = it->second.second.values();
      const double bc1 = 1.0 - std::pow(c.beta1, t);
      const double bc2 = 1.0 - std::pow(c.beta2, t);
      for (std::size_t i = 0; i < v.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        s[i] = c.beta2 * s[i] + (1.0 - c.beta2) * g[i] * g[i];
        v[i] -= c.learning_rate * (m[i] / bc1) / (std::sqrt(s[i] / bc2) + c.epsilon);
      }
    }
    p->zero_grad();
  }
}

}  // namespace bsda::num
