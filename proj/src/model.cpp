#include "sparseid/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <omp.h>
#include <sstream>

namespace sparseid {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  return std::max(1, omp_get_max_threads());
}

double elu(double z) noexcept { return z > 0.0 ? z : std::expm1(z); }

double elu_derivative(double z) noexcept { return z > 0.0 ? 1.0 : std::exp(z); }

long long monomial_count(int n_vars, int degree) {
  // C(n + d, d) computed incrementally to stay exact.
  long long c = 1;
  for (int k = 1; k <= degree; ++k) c = c * (n_vars + k) / k;
  return c;
}

namespace {

void exponents_of_degree(int n_vars, int degree, int var, std::vector<int>& cur,
                         std::vector<std::vector<int>>& out) {
  if (var == n_vars - 1) {
    cur[static_cast<std::size_t>(var)] = degree;
    out.push_back(cur);
    cur[static_cast<std::size_t>(var)] = 0;
    return;
  }
  for (int e = degree; e >= 0; --e) {
    cur[static_cast<std::size_t>(var)] = e;
    exponents_of_degree(n_vars, degree - e, var + 1, cur, out);
  }
  cur[static_cast<std::size_t>(var)] = 0;
}

double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

}  // namespace

std::vector<std::vector<int>> graded_lex_monomials(int n_vars, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(n_vars), 0);
  for (int d = 0; d <= degree; ++d) {
    if (n_vars == 0) {
      if (d == 0) out.emplace_back();
      continue;
    }
    exponents_of_degree(n_vars, d, 0, cur, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ErrorNetwork

ErrorNetwork ErrorNetwork::polynomial(int n_inputs, int n_outputs, int degree) {
  if (n_inputs < 1 || n_outputs < 1 || degree < 0) {
    throw ContractError("polynomial network needs inputs, outputs and degree >= 0");
  }
  ErrorNetwork net;
  net.kind_ = NetworkKind::Polynomial;
  net.degree_ = degree;
  net.monomials_ = graded_lex_monomials(n_inputs, degree);
  const int n_mono = static_cast<int>(net.monomials_.size());
  net.layers_ = {n_inputs, n_mono, n_outputs};
  net.weight_offset_ = {0};
  net.bias_offset_ = {-1};
  const int n = n_mono * n_outputs;
  net.is_weight_.assign(static_cast<std::size_t>(n), true);
  net.mask_.assign(static_cast<std::size_t>(n), true);
  net.n_weights_ = n;
  net.n_active_ = n;
  net.params_ = Vec::Zero(n);
  return net;
}

ErrorNetwork ErrorNetwork::feedforward_elu(std::vector<int> layer_sizes) {
  if (layer_sizes.size() < 2 ||
      std::any_of(layer_sizes.begin(), layer_sizes.end(), [](int s) { return s < 1; })) {
    throw ContractError("feedforward network needs at least input and output layers");
  }
  ErrorNetwork net;
  net.kind_ = NetworkKind::FeedforwardElu;
  net.layers_ = std::move(layer_sizes);
  const std::size_t n_mats = net.layers_.size() - 1;
  int offset = 0;
  for (std::size_t l = 0; l < n_mats; ++l) {
    const int n_w = net.layers_[l] * net.layers_[l + 1];
    net.weight_offset_.push_back(offset);
    net.is_weight_.insert(net.is_weight_.end(), static_cast<std::size_t>(n_w), true);
    offset += n_w;
    net.n_weights_ += n_w;
    if (l + 1 < n_mats) {
      net.bias_offset_.push_back(offset);
      net.is_weight_.insert(net.is_weight_.end(), static_cast<std::size_t>(net.layers_[l + 1]),
                            false);
      offset += net.layers_[l + 1];
    } else {
      net.bias_offset_.push_back(-1);
    }
  }
  net.mask_.assign(net.is_weight_.size(), true);
  net.n_active_ = net.n_weights_;
  net.params_ = Vec::Zero(offset);
  return net;
}

void ErrorNetwork::set_params(const Vec& a) {
  if (a.size() != n_params()) throw ContractError("parameter vector has wrong length");
  params_ = a;
  for (int i = 0; i < n_params(); ++i) {
    if (!mask_[static_cast<std::size_t>(i)]) params_[i] = 0.0;
  }
}

bool ErrorNetwork::is_weight(int index) const {
  if (index < 0 || index >= n_params()) throw LookupError("parameter index out of range");
  return is_weight_[static_cast<std::size_t>(index)];
}

bool ErrorNetwork::is_active(int index) const {
  if (index < 0 || index >= n_params()) throw LookupError("parameter index out of range");
  return mask_[static_cast<std::size_t>(index)];
}

std::vector<int> ErrorNetwork::active_weights() const {
  std::vector<int> out;
  for (int i = 0; i < n_params(); ++i) {
    if (is_weight_[static_cast<std::size_t>(i)] && mask_[static_cast<std::size_t>(i)]) {
      out.push_back(i);
    }
  }
  return out;
}

EdgeInfo ErrorNetwork::edge(int index) const {
  if (!is_weight(index)) throw InvalidCandidate("parameter " + std::to_string(index) + " is a bias");
  if (kind_ == NetworkKind::Polynomial) {
    const int n_mono = layers_[1];
    return {1, index % n_mono, index / n_mono};
  }
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    const int off = weight_offset_[l];
    const int n_in = layers_[l];
    if (index >= off && index < off + n_in * layers_[l + 1]) {
      const int local = index - off;
      return {static_cast<int>(l), local % n_in, local / n_in};
    }
  }
  throw LookupError("parameter index not found");
}

int ErrorNetwork::monomial_degree(int index) const {
  if (kind_ != NetworkKind::Polynomial) return -1;
  const EdgeInfo e = edge(index);
  const auto& ex = monomials_[static_cast<std::size_t>(e.source)];
  return std::accumulate(ex.begin(), ex.end(), 0);
}

std::string ErrorNetwork::describe_edge(int index) const {
  const EdgeInfo e = edge(index);
  std::ostringstream os;
  if (kind_ == NetworkKind::Polynomial) {
    os << "out" << e.target << ":";
    const auto& ex = monomials_[static_cast<std::size_t>(e.source)];
    bool any = false;
    for (std::size_t i = 0; i < ex.size(); ++i) {
      for (int k = 0; k < ex[i]; ++k) {
        os << (any ? "*" : "") << "in" << i;
        any = true;
      }
    }
    if (!any) os << "1";
  } else {
    os << "L" << e.layer << ":" << e.source << "->" << e.target;
  }
  return os.str();
}

std::vector<NeuronId> ErrorNetwork::remove_edge(int index) {
  if (!is_weight(index)) {
    throw InvalidCandidate("parameter " + std::to_string(index) + " is a bias, not an edge");
  }
  if (!mask_[static_cast<std::size_t>(index)]) {
    throw InvalidCandidate("edge " + std::to_string(index) + " was already removed");
  }
  mask_[static_cast<std::size_t>(index)] = false;
  params_[index] = 0.0;
  --n_active_;
  return dead_neurons();
}

std::vector<NeuronId> ErrorNetwork::dead_neurons() const {
  std::vector<NeuronId> dead;
  if (kind_ == NetworkKind::Polynomial) {
    const int n_mono = layers_[1];
    for (int k = 0; k < n_mono; ++k) {
      bool out_edge = false;
      for (int o = 0; o < layers_[2]; ++o) out_edge = out_edge || mask_[static_cast<std::size_t>(o * n_mono + k)];
      if (!out_edge) dead.push_back({1, k});
    }
    return dead;
  }
  for (std::size_t l = 1; l + 1 < layers_.size(); ++l) {
    const int n_in = layers_[l - 1];
    const int n_out = layers_[l + 1];
    for (int p = 0; p < layers_[l]; ++p) {
      bool incoming = false;
      for (int i = 0; i < n_in && !incoming; ++i) {
        incoming = mask_[static_cast<std::size_t>(weight_offset_[l - 1] + p * n_in + i)];
      }
      bool outgoing = false;
      for (int q = 0; q < n_out && !outgoing; ++q) {
        outgoing = mask_[static_cast<std::size_t>(weight_offset_[l] + q * layers_[l] + p)];
      }
      if (!incoming || !outgoing) dead.push_back({static_cast<int>(l), p});
    }
  }
  return dead;
}

std::vector<std::vector<bool>> ErrorNetwork::contributing_units() const {
  std::vector<std::vector<bool>> live(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    live[l].assign(static_cast<std::size_t>(layers_[l]), false);
  }
  live.back().assign(live.back().size(), true);
  for (std::size_t l = layers_.size() - 1; l-- > 0;) {
    const int n_in = layers_[l];
    for (int q = 0; q < layers_[l + 1]; ++q) {
      if (!live[l + 1][static_cast<std::size_t>(q)]) continue;
      for (int p = 0; p < n_in; ++p) {
        if (mask_[static_cast<std::size_t>(weight_offset_[l] + q * n_in + p)]) {
          live[l][static_cast<std::size_t>(p)] = true;
        }
      }
    }
  }
  return live;
}

int ErrorNetwork::n_effective_params() const {
  int p = n_active_;
  if (kind_ == NetworkKind::FeedforwardElu) {
    const auto live = contributing_units();
    for (std::size_t l = 1; l + 1 < layers_.size(); ++l) {
      p += static_cast<int>(std::count(live[l].begin(), live[l].end(), true));
    }
  }
  return p;
}

std::string ErrorNetwork::mask_bits() const {
  std::string bits;
  bits.reserve(static_cast<std::size_t>(n_weights_));
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (is_weight_[i]) bits.push_back(mask_[i] ? '1' : '0');
  }
  return bits;
}

void ErrorNetwork::set_mask_bits(const std::string& bits) {
  if (static_cast<int>(bits.size()) != n_weights_) throw ContractError("mask length mismatch");
  std::size_t k = 0;
  n_active_ = 0;
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (!is_weight_[i]) continue;
    const char c = bits[k++];
    if (c != '0' && c != '1') throw ContractError("mask must consist of '0' and '1'");
    mask_[i] = c == '1';
    if (mask_[i]) ++n_active_;
    else params_[static_cast<Index>(i)] = 0.0;
  }
}

void ErrorNetwork::evaluate(const Vec& input, const Vec& a, Vec& out, Mat* jac_input,
                            Mat* jac_params) const {
  if (input.size() != n_inputs()) throw ContractError("network input has wrong length");
  if (a.size() != n_params()) throw ContractError("network parameter vector has wrong length");
  if (kind_ == NetworkKind::Polynomial) eval_polynomial(input, a, out, jac_input, jac_params);
  else eval_elu(input, a, out, jac_input, jac_params);
}

void ErrorNetwork::eval_polynomial(const Vec& input, const Vec& a, Vec& out, Mat* jac_input,
                                   Mat* jac_params) const {
  const int n_in = layers_[0];
  const int n_mono = layers_[1];
  const int n_out = layers_[2];
  Vec m(n_mono);
  Mat dm = jac_input ? Mat::Zero(n_mono, n_in) : Mat();
  for (int k = 0; k < n_mono; ++k) {
    const auto& ex = monomials_[static_cast<std::size_t>(k)];
    double v = 1.0;
    for (int i = 0; i < n_in; ++i) v *= ipow(input[i], ex[static_cast<std::size_t>(i)]);
    m[k] = v;
    if (jac_input) {
      for (int i = 0; i < n_in; ++i) {
        const int e = ex[static_cast<std::size_t>(i)];
        if (e == 0) continue;
        double d = e * ipow(input[i], e - 1);
        for (int l = 0; l < n_in; ++l) {
          if (l != i) d *= ipow(input[l], ex[static_cast<std::size_t>(l)]);
        }
        dm(k, i) = d;
      }
    }
  }
  Mat w(n_out, n_mono);
  for (int o = 0; o < n_out; ++o) {
    for (int k = 0; k < n_mono; ++k) w(o, k) = weight(a, o * n_mono + k);
  }
  out = w * m;
  if (jac_input) *jac_input = w * dm;
  if (jac_params) {
    jac_params->setZero(n_out, n_params());
    for (int o = 0; o < n_out; ++o) {
      for (int k = 0; k < n_mono; ++k) {
        const int idx = o * n_mono + k;
        if (mask_[static_cast<std::size_t>(idx)]) (*jac_params)(o, idx) = m[k];
      }
    }
  }
}

void ErrorNetwork::eval_elu(const Vec& input, const Vec& a, Vec& out, Mat* jac_input,
                            Mat* jac_params) const {
  const std::size_t n_mats = layers_.size() - 1;
  std::vector<Mat> w(n_mats);
  std::vector<Vec> h(n_mats);   // h[l] feeds weight matrix l
  std::vector<Vec> dz(n_mats);  // elu'(z) of the layer produced by matrix l (hidden only)
  h[0] = input;
  for (std::size_t l = 0; l < n_mats; ++l) {
    const int n_in = layers_[l];
    const int n_o = layers_[l + 1];
    w[l].resize(n_o, n_in);
    for (int q = 0; q < n_o; ++q) {
      for (int p = 0; p < n_in; ++p) w[l](q, p) = weight(a, weight_offset_[l] + q * n_in + p);
    }
    Vec z = w[l] * h[l];
    if (bias_offset_[l] >= 0) z += a.segment(bias_offset_[l], n_o);
    if (l + 1 < n_mats) {
      h[l + 1] = z.unaryExpr([](double v) { return elu(v); });
      dz[l] = z.unaryExpr([](double v) { return elu_derivative(v); });
    } else {
      out = z;
    }
  }
  if (!jac_input && !jac_params) return;

  const int n_out = layers_.back();
  if (jac_params) jac_params->setZero(n_out, n_params());
  // d = d out / d z for the layer produced by matrix l, walking backwards.
  Mat d = Mat::Identity(n_out, n_out);
  for (std::size_t l = n_mats; l-- > 0;) {
    if (l + 1 < n_mats) d = d * dz[l].asDiagonal();
    if (jac_params) {
      const int n_in = layers_[l];
      for (int q = 0; q < layers_[l + 1]; ++q) {
        for (int p = 0; p < n_in; ++p) {
          const int idx = weight_offset_[l] + q * n_in + p;
          if (mask_[static_cast<std::size_t>(idx)]) jac_params->col(idx) = d.col(q) * h[l][p];
        }
        if (bias_offset_[l] >= 0) jac_params->col(bias_offset_[l] + q) = d.col(q);
      }
    }
    d = d * w[l];
  }
  if (jac_input) *jac_input = d;
}

// ---------------------------------------------------------------------------
// ExogenousSignal

ExogenousSignal::ExogenousSignal(int dim, std::function<Vec(double)> fn)
    : dim_(dim), fn_(std::move(fn)) {
  if (dim_ < 0 || !fn_) throw ContractError("exogenous signal needs a dimension and evaluator");
}

ExogenousSignal ExogenousSignal::interpolated(std::vector<double> times, std::vector<Vec> values) {
  if (times.empty() || times.size() != values.size()) {
    throw InvalidInput("interpolated signal needs matching, non-empty samples");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw InvalidInput("signal sample times must increase");
  }
  const int dim = static_cast<int>(values.front().size());
  auto fn = [times, values](double t) -> Vec {
    if (t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const auto hi = static_cast<std::size_t>(it - times.begin());
    const std::size_t lo = hi - 1;
    const double w = (t - times[lo]) / (times[hi] - times[lo]);
    return (1.0 - w) * values[lo] + w * values[hi];
  };
  ExogenousSignal s(dim, fn);
  s.lo_ = times.front();
  s.hi_ = times.back();
  return s;
}

// ---------------------------------------------------------------------------
// Physics

namespace {

double constant_or(const std::map<std::string, double>& c, const std::string& key, double dflt) {
  const auto it = c.find(key);
  return it == c.end() ? dflt : it->second;
}

void reject_unknown(const std::map<std::string, double>& c, std::initializer_list<const char*> known,
                    const std::string& model) {
  for (const auto& [k, v] : c) {
    if (std::none_of(known.begin(), known.end(), [&](const char* s) { return k == s; })) {
      throw ConfigError("unknown constant '" + k + "' for physics model " + model);
    }
  }
}

}  // namespace

PhysicsModel make_physics(const std::string& name, int n_x,
                          const std::map<std::string, double>& constants) {
  PhysicsModel pm;
  pm.name = name;
  if (name == "zero") {
    reject_unknown(constants, {}, name);
    pm.f = [n_x](double, const Vec&) { return Vec::Zero(n_x).eval(); };
    pm.jac_x = [n_x](double, const Vec&) { return Mat::Zero(n_x, n_x).eval(); };
    return pm;
  }
  if (name == "lorenz") {
    if (n_x != 3) throw ConfigError("lorenz physics needs n_x = 3");
    reject_unknown(constants, {"sigma", "rho", "beta"}, name);
    const double s = constant_or(constants, "sigma", 10.0);
    const double r = constant_or(constants, "rho", 28.0);
    const double b = constant_or(constants, "beta", 8.0 / 3.0);
    pm.constants = {{"sigma", s}, {"rho", r}, {"beta", b}};
    pm.f = [s, r, b](double, const Vec& x) {
      Vec d(3);
      d << s * (x[1] - x[0]), x[0] * (r - x[2]) - x[1], -b * x[2] + x[0] * x[1];
      return d;
    };
    pm.jac_x = [s, r, b](double, const Vec& x) {
      Mat j(3, 3);
      j << -s, s, 0.0, r - x[2], -1.0, -x[0], x[1], x[0], -b;
      return j;
    };
    return pm;
  }
  if (name == "vanderpol" || name == "vanderpol-forcing") {
    if (n_x != 2) throw ConfigError(name + " physics needs n_x = 2");
    const bool full = name == "vanderpol";
    if (full) reject_unknown(constants, {"A", "mu", "omega"}, name);
    else reject_unknown(constants, {"A", "omega"}, name);
    const double amp = constant_or(constants, "A", 1.0);
    const double mu = full ? constant_or(constants, "mu", 1.0) : 0.0;
    const double om = constant_or(constants, "omega", 0.2);
    pm.constants = {{"A", amp}, {"omega", om}};
    if (full) pm.constants["mu"] = mu;
    pm.f = [=](double t, const Vec& x) {
      Vec d(2);
      d << x[1], amp * std::sin(om * t);
      if (full) d[1] += -x[0] + mu * (1.0 - x[0] * x[0]) * x[1];
      return d;
    };
    pm.jac_x = [=](double, const Vec& x) {
      Mat j(2, 2);
      j << 0.0, 1.0, 0.0, 0.0;
      if (full) {
        j(1, 0) = -1.0 - 2.0 * mu * x[0] * x[1];
        j(1, 1) = mu * (1.0 - x[0] * x[0]);
      }
      return j;
    };
    return pm;
  }
  if (name == "linear") {
    Mat a = Mat::Zero(n_x, n_x);
    for (const auto& [k, v] : constants) {
      if (k.size() != 3 || k[0] != 'a' || !std::isdigit(k[1]) || !std::isdigit(k[2]) ||
          k[1] - '0' >= n_x || k[2] - '0' >= n_x) {
        throw ConfigError("linear physics constants are named a<row><col>, got '" + k + "'");
      }
      a(k[1] - '0', k[2] - '0') = v;
    }
    pm.constants = constants;
    pm.f = [a](double, const Vec& x) { return (a * x).eval(); };
    pm.jac_x = [a](double, const Vec&) { return a; };
    return pm;
  }
  throw ConfigError("unknown physics model '" + name + "'");
}

// ---------------------------------------------------------------------------
// SystemModel

SystemModel::SystemModel(int n_x, PhysicsModel physics) : n_x_(n_x), physics_(std::move(physics)) {
  if (n_x_ < 1) throw ContractError("state dimension must be positive");
  if (!physics_.f || !physics_.jac_x) throw ContractError("physics model needs f and jac_x");
}

SystemModel& SystemModel::with_network(ErrorNetwork net) {
  if (callback_) throw ContractError("model already has a callback term");
  if (net.n_outputs() != n_x_) throw ContractError("network outputs must equal n_x");
  const int n_u = input_ ? input_->dim() : 0;
  if (net.n_inputs() != n_x_ + n_u) throw ContractError("network inputs must equal n_x + n_u");
  network_ = std::move(net);
  return *this;
}

SystemModel& SystemModel::with_input(ExogenousSignal u) {
  if (network_ && network_->n_inputs() != n_x_ + u.dim()) {
    throw ContractError("network inputs must equal n_x + n_u");
  }
  input_ = std::move(u);
  return *this;
}

SystemModel& SystemModel::with_callback(CallbackTerm term) {
  if (network_) throw ContractError("model already has a network");
  if (!term.f || !term.jac_x || !term.jac_a) throw ContractError("callback term is incomplete");
  callback_ = std::move(term);
  return *this;
}

int SystemModel::n_params() const noexcept {
  if (network_) return network_->n_params();
  if (callback_) return callback_->n_params;
  return 0;
}

void SystemModel::check_dims(const Vec& x, const Vec& a) const {
  if (x.size() != n_x_) throw ContractError("state vector has wrong length");
  if (a.size() != n_params()) throw ContractError("parameter vector has wrong length");
}

void SystemModel::evaluate(double t, const Vec& x, const Vec& a, Vec& f, Mat* fx, Mat* fa) const {
  check_dims(x, a);
  f = physics_.f(t, x);
  if (fx) *fx = physics_.jac_x(t, x);
  if (network_) {
    Vec in;
    if (input_) {
      in.resize(network_->n_inputs());
      in << x, (*input_)(t);
    } else {
      in = x;
    }
    Vec out;
    Mat j_in;
    network_->evaluate(in, a, out, fx ? &j_in : nullptr, fa);
    f += out;
    if (fx) *fx += j_in.leftCols(n_x_);
  } else if (callback_) {
    f += callback_->f(t, x, a);
    if (fx) *fx += callback_->jac_x(t, x, a);
    if (fa) *fa = callback_->jac_a(t, x, a);
  } else if (fa) {
    fa->resize(n_x_, 0);
  }
  if (f.size() != n_x_) throw ContractError("model output has wrong length");
}

Vec SystemModel::eval_f(double t, const Vec& x, const Vec& a) const {
  Vec f;
  evaluate(t, x, a, f, nullptr, nullptr);
  return f;
}

Mat SystemModel::jac_f_x(double t, const Vec& x, const Vec& a) const {
  Vec f;
  Mat fx;
  evaluate(t, x, a, f, &fx, nullptr);
  return fx;
}

Mat SystemModel::jac_f_a(double t, const Vec& x, const Vec& a) const {
  Vec f;
  Mat fa;
  evaluate(t, x, a, f, nullptr, &fa);
  return fa;
}

// ---------------------------------------------------------------------------
// MeasurementMap

MeasurementMap::MeasurementMap(std::vector<double> times, std::vector<std::vector<int>> selections,
                               int n_x)
    : times_(std::move(times)), selections_(std::move(selections)), n_x_(n_x) {
  if (times_.size() != selections_.size()) throw ContractError("one selection per measurement time");
  for (const auto& sel : selections_) {
    if (sel.empty()) throw ContractError("every measurement needs at least one component");
    for (int c : sel) {
      if (c < 0 || c >= n_x_) throw ContractError("selected component outside the state");
    }
    n_y_.push_back(static_cast<int>(sel.size()));
  }
}

MeasurementMap::MeasurementMap(std::vector<double> times, std::vector<int> n_y, Eval h, Jac jac)
    : times_(std::move(times)), n_y_(std::move(n_y)), h_(std::move(h)), jac_(std::move(jac)) {
  if (times_.size() != n_y_.size()) throw ContractError("one output size per measurement time");
  if (!h_ || !jac_) throw ContractError("custom measurement map needs h and its Jacobian");
  for (int n : n_y_) {
    if (n < 1) throw ContractError("n_y must be at least one");
  }
}

int MeasurementMap::index_of(double t) const {
  if (times_.empty()) throw LookupError("no measurement times");
  const double tol = 1e-12 * std::max(1.0, std::abs(times_.back() - times_.front()));
  const auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
  if (it != times_.end() && std::abs(*it - t) <= tol) return static_cast<int>(it - times_.begin());
  throw LookupError("t = " + std::to_string(t) + " is not a measurement time");
}

Vec MeasurementMap::eval(int i, const Vec& x) const {
  if (h_) return h_(i, x);
  const auto& sel = selections_.at(static_cast<std::size_t>(i));
  if (x.size() != n_x_) throw ContractError("state vector has wrong length");
  Vec y(static_cast<Index>(sel.size()));
  for (std::size_t k = 0; k < sel.size(); ++k) y[static_cast<Index>(k)] = x[sel[k]];
  return y;
}

Mat MeasurementMap::jac(int i, const Vec& x) const {
  if (jac_) return jac_(i, x);
  const auto& sel = selections_.at(static_cast<std::size_t>(i));
  Mat j = Mat::Zero(static_cast<Index>(sel.size()), n_x_);
  for (std::size_t k = 0; k < sel.size(); ++k) j(static_cast<Index>(k), sel[k]) = 1.0;
  return j;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json model_to_json(const SystemModel& model) {
  nlohmann::json doc;
  doc["format"] = "sparseid-model";
  doc["version"] = 1;
  doc["n_x"] = model.n_x();
  doc["physics"] = {{"name", model.physics().name}, {"constants", model.physics().constants}};
  if (const auto& net = model.network()) {
    nlohmann::json n;
    n["kind"] = net->kind() == NetworkKind::Polynomial ? "polynomial" : "feedforward-elu";
    n["layers"] = net->layer_sizes();
    n["degree"] = net->degree();
    n["params"] = std::vector<double>(net->params().data(), net->params().data() + net->n_params());
    n["mask"] = net->mask_bits();
    doc["network"] = n;
  } else {
    doc["network"] = nullptr;
  }
  return doc;
}

SystemModel model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "sparseid-model") {
      throw ConfigError("not a sparseid model document");
    }
    const int n_x = doc.at("n_x").get<int>();
    const auto& phys = doc.at("physics");
    SystemModel model(n_x, make_physics(phys.at("name").get<std::string>(), n_x,
                                        phys.at("constants").get<std::map<std::string, double>>()));
    const auto& n = doc.at("network");
    if (!n.is_null()) {
      const std::string kind = n.at("kind").get<std::string>();
      const auto layers = n.at("layers").get<std::vector<int>>();
      ErrorNetwork net = [&] {
        if (kind == "polynomial") {
          if (layers.size() != 3) throw ConfigError("polynomial network has three layers");
          return ErrorNetwork::polynomial(layers[0], layers[2], n.at("degree").get<int>());
        }
        if (kind == "feedforward-elu") return ErrorNetwork::feedforward_elu(layers);
        throw ConfigError("unknown network kind '" + kind + "'");
      }();
      if (net.layer_sizes() != layers) throw ConfigError("layer sizes do not match the degree");
      const auto p = n.at("params").get<std::vector<double>>();
      if (static_cast<int>(p.size()) != net.n_params()) throw ConfigError("parameter count mismatch");
      net.set_params(Eigen::Map<const Vec>(p.data(), static_cast<Index>(p.size())));
      net.set_mask_bits(n.at("mask").get<std::string>());
      if (net.n_inputs() != n_x) throw ConfigError("serialized models cannot carry exogenous inputs");
      model.with_network(std::move(net));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model document: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("inconsistent model document: ") + e.what());
  }
}

}  // namespace sparseid
