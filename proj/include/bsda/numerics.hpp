#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bsda/matrix.hpp"

namespace bsda {
class Rng;
}

namespace bsda::num {

/// A trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParameterRefs = std::vector<Parameter*>;
using ConstParameterRefs = std::vector<const Parameter*>;

/// Uniform(-bound, bound) initialization.
void init_uniform(Parameter& p, double bound, Rng& rng);
void init_normal(Parameter& p, double stddev, Rng& rng);

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  explicit Var(std::size_t id) : id_(id) {}
  std::size_t id_ = SIZE_MAX;
};

/// Records operations as they execute; backward() replays them in exact
/// reverse order, accumulating gradients additively.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient flows back into p.grad.
  Var parameter(Parameter& p);
  /// Leaf over a frozen parameter; no gradient is kept.
  Var parameter(const Parameter& p);
  /// Row `index` of an embedding table, as a column vector.
  Var embedding(Parameter& table, std::size_t index);
  Var embedding(const Parameter& table, std::size_t index);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double factor);
  Var tanh(Var a);
  /// Vertical concatenation of column vectors.
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
  /// sum_j w_j x_j / sum_j w_j with constant, non-negative weights.
  Var weighted_average(std::span<const Var> xs, std::span<const double> weights);
  /// -log softmax(logits)[target]; logits is a column vector.
  Var softmax_cross_entropy(Var logits, std::size_t target);
  Var sum(std::span<const Var> scalars);
  Var mean(std::span<const Var> scalars);

  const Matrix& value(Var v) const { return nodes_.at(v.id()).value; }
  const Matrix& grad(Var v) const { return nodes_.at(v.id()).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(scalar)/d(scalar) = 1 and propagates to every parameter leaf.
  void backward(Var scalar);

  /// Node ids in the order backward() visited them on its last call.
  const std::vector<std::size_t>& last_backward_order() const { return backward_order_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&, const Node&)> backprop;
  };

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&, const Node&)> backprop, const char* op);
  Node& node(Var v) { return nodes_.at(v.id()); }
  Matrix& grad_of(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
};

/// max over parameter entries of |analytic - numeric| / max(1e-8, |analytic| + |numeric|),
/// numeric by central differences. `loss` builds a scalar on a fresh tape.
double gradient_check(const std::function<Var(Tape&)>& loss, const ParameterRefs& params, double epsilon = 1e-5);

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Applies the update rule, increments the step count and zeroes gradients.
/// Throws NumericalError on a non-finite gradient.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  void step(const ParameterRefs& params);
  std::uint64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::map<const Parameter*, std::pair<Matrix, Matrix>> moments_;
};

/// Binary checkpoint, little-endian throughout:
///   "BSDACKPT" | u32 version | u32 meta count | (str key, str value)* |
///   u32 tensor count | (str name, u64 rows, u64 cols, f64 values[rows*cols])*
/// where str = u32 byte length followed by bytes.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix& tensor(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

Checkpoint snapshot(const ConstParameterRefs& params, std::map<std::string, std::string> meta = {});
/// Copies tensors into params by name; shapes must match.
void restore(const Checkpoint& ckpt, const ParameterRefs& params);

}  // namespace bsda::num
