#pragma once

#include "sparseid/common.hpp"

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace sparseid {

/// Exponential linear unit with unit shape parameter.
[[nodiscard]] double elu(double z) noexcept;
[[nodiscard]] double elu_derivative(double z) noexcept;

enum class NetworkKind { Polynomial, FeedforwardElu };

/// Position of a weight in the network graph. `layer` counts weight matrices
/// from the input side, `source` and `target` are unit indices in the adjacent
/// layers.
struct EdgeInfo {
  int layer = 0;
  int source = 0;
  int target = 0;
};

/// A hidden unit (layer counted from 1 for the first hidden layer).
struct NeuronId {
  int layer = 0;
  int unit = 0;
  friend bool operator==(const NeuronId&, const NeuronId&) = default;
};

/// Error model f_net(x, u, a). Parameter vector layout is canonical:
///  - polynomial: gains row-major, output by output, monomials graded-lex with
///    the constant first;
///  - feedforward ELU: for every weight matrix its entries row-major (target
///    by target), followed by the biases of that layer when it feeds a hidden
///    layer. The output layer carries no bias.
/// Weights can be masked out; masked weights are exactly zero in every
/// evaluation regardless of the value stored in the parameter vector.
class ErrorNetwork {
 public:
  static ErrorNetwork polynomial(int n_inputs, int n_outputs, int degree);
  static ErrorNetwork feedforward_elu(std::vector<int> layer_sizes);

  [[nodiscard]] NetworkKind kind() const noexcept { return kind_; }
  [[nodiscard]] int n_inputs() const noexcept { return layers_.front(); }
  [[nodiscard]] int n_outputs() const noexcept { return layers_.back(); }
  [[nodiscard]] int n_params() const noexcept { return static_cast<int>(is_weight_.size()); }
  [[nodiscard]] int n_weights() const noexcept { return n_weights_; }
  [[nodiscard]] int n_active_weights() const noexcept { return n_active_; }
  /// Active weights plus the biases of hidden units that still reach an output.
  [[nodiscard]] int n_effective_params() const;
  /// Unit counts per layer, input first. For polynomial networks the middle
  /// entry is the monomial count.
  [[nodiscard]] const std::vector<int>& layer_sizes() const noexcept { return layers_; }
  [[nodiscard]] int degree() const noexcept { return degree_; }
  [[nodiscard]] const std::vector<std::vector<int>>& monomials() const noexcept { return monomials_; }

  [[nodiscard]] const Vec& params() const noexcept { return params_; }
  void set_params(const Vec& a);

  [[nodiscard]] bool is_weight(int index) const;
  [[nodiscard]] bool is_active(int index) const;
  [[nodiscard]] std::vector<int> active_weights() const;
  [[nodiscard]] EdgeInfo edge(int index) const;
  /// Total degree of the monomial a polynomial gain multiplies; -1 for ELU nets.
  [[nodiscard]] int monomial_degree(int index) const;
  [[nodiscard]] std::string describe_edge(int index) const;

  /// Clears the mask bit and zeroes the stored value of a weight. Returns the
  /// hidden units that are dead afterwards.
  std::vector<NeuronId> remove_edge(int index);
  [[nodiscard]] std::vector<NeuronId> dead_neurons() const;

  /// Mask over weights only, in canonical weight order; '1' means active.
  [[nodiscard]] std::string mask_bits() const;
  void set_mask_bits(const std::string& bits);

  /// out = f_net(input, a). Jacobians are optional and overwritten.
  void evaluate(const Vec& input, const Vec& a, Vec& out, Mat* jac_input, Mat* jac_params) const;

 private:
  ErrorNetwork() = default;
  [[nodiscard]] double weight(const Vec& a, int index) const {
    return mask_[static_cast<std::size_t>(index)] ? a[index] : 0.0;
  }
  void eval_polynomial(const Vec& input, const Vec& a, Vec& out, Mat* jac_input,
                       Mat* jac_params) const;
  void eval_elu(const Vec& input, const Vec& a, Vec& out, Mat* jac_input, Mat* jac_params) const;
  [[nodiscard]] std::vector<std::vector<bool>> contributing_units() const;

  NetworkKind kind_ = NetworkKind::Polynomial;
  std::vector<int> layers_;
  int degree_ = 0;
  std::vector<std::vector<int>> monomials_;
  // Per weight matrix: offset of the first weight and of the biases (-1 if none).
  std::vector<int> weight_offset_;
  std::vector<int> bias_offset_;
  std::vector<bool> is_weight_;
  std::vector<bool> mask_;
  int n_weights_ = 0;
  int n_active_ = 0;
  Vec params_;
};

/// Number of monomials of total degree <= d in n variables, C(n + d, d).
[[nodiscard]] long long monomial_count(int n_vars, int degree);
/// Exponent tuples in graded lexicographic order, constant first.
[[nodiscard]] std::vector<std::vector<int>> graded_lex_monomials(int n_vars, int degree);

/// Known time-varying network input u(t).
class ExogenousSignal {
 public:
  ExogenousSignal(int dim, std::function<Vec(double)> fn);
  /// Piecewise-linear through samples; held constant outside the sample range.
  static ExogenousSignal interpolated(std::vector<double> times, std::vector<Vec> values);

  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] Vec operator()(double t) const { return fn_(t); }
  [[nodiscard]] bool covers(double t0, double t1) const noexcept { return t0 >= lo_ && t1 <= hi_; }

 private:
  int dim_;
  std::function<Vec(double)> fn_;
  double lo_ = -std::numeric_limits<double>::infinity();
  double hi_ = std::numeric_limits<double>::infinity();
};

/// First-principle part f_phys(t, x) with its state Jacobian.
struct PhysicsModel {
  std::string name = "zero";
  std::map<std::string, double> constants;
  std::function<Vec(double, const Vec&)> f;
  std::function<Mat(double, const Vec&)> jac_x;
};

/// Builtin physics: "zero", "lorenz" (sigma, rho, beta), "vanderpol" (A, mu,
/// omega), "vanderpol-forcing" (A, omega; the oscillator without damping and
/// spring terms), "linear" (entries a<row><col>).
[[nodiscard]] PhysicsModel make_physics(const std::string& name, int n_x,
                                        const std::map<std::string, double>& constants = {});

/// Escape hatch for parametric terms that are not one of the builtin networks.
struct CallbackTerm {
  int n_params = 0;
  std::function<Vec(double, const Vec&, const Vec&)> f;
  std::function<Mat(double, const Vec&, const Vec&)> jac_x;
  std::function<Mat(double, const Vec&, const Vec&)> jac_a;
};

/// f(t, x, a) = f_phys(t, x) + f_net(x, u(t), a).
class SystemModel {
 public:
  SystemModel(int n_x, PhysicsModel physics);

  SystemModel& with_network(ErrorNetwork net);
  SystemModel& with_input(ExogenousSignal u);
  SystemModel& with_callback(CallbackTerm term);

  [[nodiscard]] int n_x() const noexcept { return n_x_; }
  [[nodiscard]] int n_params() const noexcept;
  [[nodiscard]] const PhysicsModel& physics() const noexcept { return physics_; }
  [[nodiscard]] const std::optional<ErrorNetwork>& network() const noexcept { return network_; }
  [[nodiscard]] std::optional<ErrorNetwork>& network() noexcept { return network_; }
  [[nodiscard]] const std::optional<ExogenousSignal>& input() const noexcept { return input_; }

  [[nodiscard]] Vec eval_f(double t, const Vec& x, const Vec& a) const;
  [[nodiscard]] Mat jac_f_x(double t, const Vec& x, const Vec& a) const;
  [[nodiscard]] Mat jac_f_a(double t, const Vec& x, const Vec& a) const;
  /// Fused evaluation used by the residual assembly; Jacobians optional.
  void evaluate(double t, const Vec& x, const Vec& a, Vec& f, Mat* fx, Mat* fa) const;

 private:
  void check_dims(const Vec& x, const Vec& a) const;

  int n_x_;
  PhysicsModel physics_;
  std::optional<ErrorNetwork> network_;
  std::optional<ExogenousSignal> input_;
  std::optional<CallbackTerm> callback_;
};

/// Measurement model y(t_m) ~ h(t_m, x). Builtin case selects state components,
/// with a possibly different selection at every measurement time.
class MeasurementMap {
 public:
  using Eval = std::function<Vec(int, const Vec&)>;
  using Jac = std::function<Mat(int, const Vec&)>;

  MeasurementMap(std::vector<double> times, std::vector<std::vector<int>> selections, int n_x);
  /// General h given per measurement index; `n_y` fixes the output sizes.
  MeasurementMap(std::vector<double> times, std::vector<int> n_y, Eval h, Jac jac);

  [[nodiscard]] int size() const noexcept { return static_cast<int>(times_.size()); }
  [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
  [[nodiscard]] int n_y(int i) const { return n_y_.at(static_cast<std::size_t>(i)); }
  /// Index of measurement time `t`; throws LookupError when t is not one.
  [[nodiscard]] int index_of(double t) const;

  [[nodiscard]] Vec eval(int i, const Vec& x) const;
  [[nodiscard]] Mat jac(int i, const Vec& x) const;
  [[nodiscard]] Vec eval_h(double t, const Vec& x) const { return eval(index_of(t), x); }
  [[nodiscard]] Mat jac_h_x(double t, const Vec& x) const { return jac(index_of(t), x); }

 private:
  std::vector<double> times_;
  std::vector<int> n_y_;
  std::vector<std::vector<int>> selections_;
  int n_x_ = 0;
  Eval h_;
  Jac jac_;
};

/// model.json schema:
///   { "format": "sparseid-model", "version": 1, "n_x": int,
///     "physics": { "name": str, "constants": { str: num } },
///     "network": null | { "kind": "polynomial" | "feedforward-elu",
///                         "layers": [int], "degree": int,
///                         "params": [num], "mask": "0101..." } }
[[nodiscard]] nlohmann::json model_to_json(const SystemModel& model);
[[nodiscard]] SystemModel model_from_json(const nlohmann::json& doc);

}  // namespace sparseid
