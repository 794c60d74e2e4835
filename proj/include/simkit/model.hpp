#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "simkit/errors.hpp"

namespace simkit {

using State = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorField = std::function<State(const State&)>;
using JacobianField = std::function<Matrix(const State&)>;
using ScalarProfile = std::function<double(double)>;

/// Decomposition of the fast right-hand side as f_fast = G0 / eps + G1.
/// Both maps return vectors over the fast components only.
struct FastSplit {
  VectorField leading;
  VectorField correction;
};

/// A closed-form graph z_fast = h(z_slow) that ships with a built-in model.
struct ReferenceGraph {
  std::string name;
  ScalarProfile h;
  std::string note;
};

struct ModelDefinition {
  std::string name;
  std::string description;
  int dim = 0;
  std::vector<int> slow_idx;
  std::vector<int> fast_idx;
  double eps = 0.0;
  VectorField field;
  std::optional<JacobianField> jac;
  std::optional<FastSplit> fast_split;
  /// Throws SingularityError for states outside the model domain.
  std::function<void(const State&)> domain_check;
  std::vector<ReferenceGraph> reference_graphs;
  /// Set when the slow/fast labels no longer align with a timescale split
  /// (e.g. after a rotation of coordinates).
  bool mixed_coordinates = false;
};

/// Two-timescale vector field. Immutable once constructed.
class ModelSpec {
 public:
  explicit ModelSpec(ModelDefinition def) : def_(std::move(def)) { validate(); }

  const std::string& name() const noexcept { return def_.name; }
  const std::string& description() const noexcept { return def_.description; }
  int dim() const noexcept { return def_.dim; }
  const std::vector<int>& slow_idx() const noexcept { return def_.slow_idx; }
  const std::vector<int>& fast_idx() const noexcept { return def_.fast_idx; }
  double eps() const noexcept { return def_.eps; }
  bool has_jacobian() const noexcept { return def_.jac.has_value(); }
  bool has_fast_split() const noexcept { return def_.fast_split.has_value(); }
  bool mixed_coordinates() const noexcept { return def_.mixed_coordinates; }
  const ModelDefinition& definition() const noexcept { return def_; }
  const std::vector<ReferenceGraph>& reference_graphs() const noexcept {
    return def_.reference_graphs;
  }

  void check_domain(const State& z) const {
    if (def_.domain_check) def_.domain_check(z);
  }

 private:
  void validate() const {
    if (def_.dim <= 0) throw InvalidInput("model '" + def_.name + "': dimension must be positive");
    if (!(def_.eps > 0.0) || !std::isfinite(def_.eps))
      throw InvalidInput("model '" + def_.name + "': eps must be a positive finite number");
    if (!def_.field) throw InvalidInput("model '" + def_.name + "': missing vector field");
    std::vector<int> seen(static_cast<std::size_t>(def_.dim), 0);
    auto mark = [&](const std::vector<int>& idx) {
      for (int i : idx) {
        if (i < 0 || i >= def_.dim)
          throw InvalidInput("model '" + def_.name + "': index out of range");
        ++seen[static_cast<std::size_t>(i)];
      }
    };
    mark(def_.slow_idx);
    mark(def_.fast_idx);
    for (int count : seen)
      if (count != 1)
        throw InvalidInput("model '" + def_.name +
                           "': slow and fast indices must partition the state");
    if (def_.fast_split && (!def_.fast_split->leading || !def_.fast_split->correction))
      throw InvalidInput("model '" + def_.name + "': incomplete fast split");
  }

  ModelDefinition def_;
};

namespace detail {

inline void require_state(const ModelSpec& model, const State& z) {
  if (z.size() != model.dim())
    throw InvalidInput("state has length " + std::to_string(z.size()) + ", model '" +
                       model.name() + "' expects " + std::to_string(model.dim()));
  if (!z.allFinite()) throw DomainError("non-finite state passed to model '" + model.name() + "'");
}

}  // namespace detail

inline State eval_field(const ModelSpec& model, const State& z) {
  detail::require_state(model, z);
  model.check_domain(z);
  State v = model.definition().field(z);
  if (!v.allFinite()) throw DomainError("model '" + model.name() + "' produced a non-finite velocity");
  return v;
}

/// Step used by the central-difference Jacobian for coordinate value zi.
inline double jacobian_fd_step(double zi) { return std::max(1e-6, 1e-6 * std::abs(zi)); }

inline Matrix finite_difference_jacobian(const ModelSpec& model, const State& z) {
  detail::require_state(model, z);
  const int n = model.dim();
  Matrix jac(n, n);
  State zp = z;
  State zm = z;
  for (int i = 0; i < n; ++i) {
    const double step = jacobian_fd_step(z[i]);
    zp[i] = z[i] + step;
    zm[i] = z[i] - step;
    jac.col(i) = (eval_field(model, zp) - eval_field(model, zm)) / (2.0 * step);
    zp[i] = z[i];
    zm[i] = z[i];
  }
  return jac;
}

inline Matrix eval_jacobian(const ModelSpec& model, const State& z) {
  if (!model.has_jacobian()) return finite_difference_jacobian(model, z);
  detail::require_state(model, z);
  model.check_domain(z);
  Matrix jac = (*model.definition().jac)(z);
  if (!jac.allFinite()) throw DomainError("model '" + model.name() + "' produced a non-finite Jacobian");
  return jac;
}

/// Report string describing how eval_jacobian obtains derivatives.
inline std::string jacobian_method(const ModelSpec& model) {
  return model.has_jacobian() ? "analytic" : "central-difference h=max(1e-6,1e-6*|z_i|)";
}

/// Fast components of the field, in fast_idx order.
inline State fast_rhs(const ModelSpec& model, const State& z) {
  const State v = eval_field(model, z);
  State out(static_cast<Eigen::Index>(model.fast_idx().size()));
  for (std::size_t k = 0; k < model.fast_idx().size(); ++k) out[static_cast<Eigen::Index>(k)] = v[model.fast_idx()[k]];
  return out;
}

// ---------------------------------------------------------------------------
// Graph helpers for the one-slow/one-fast case.

inline int single_slow_index(const ModelSpec& model) {
  if (model.slow_idx().size() != 1)
    throw InvalidInput("operation requires exactly one slow variable (model '" + model.name() + "')");
  return model.slow_idx().front();
}

inline int single_fast_index(const ModelSpec& model) {
  if (model.fast_idx().size() != 1)
    throw InvalidInput("operation requires exactly one fast variable (model '" + model.name() + "')");
  return model.fast_idx().front();
}

/// The state sitting on the graph z_fast = h above slow coordinate s.
inline State graph_point(const ModelSpec& model, double s, double h) {
  if (model.dim() != 2)
    throw InvalidInput("graph operations require a two-dimensional model");
  State z(2);
  z[single_slow_index(model)] = s;
  z[single_fast_index(model)] = h;
  return z;
}

// ---------------------------------------------------------------------------
// Built-in models.

/// Davis-Skodje: z1' = -z1,
///   z2' = (-z2 + z1/(1+z1)) / eps - z1/(1+z1)^2.
/// The fast equation uses -z2 (the only reading with a graph z2(z1) that
/// solves the invariance equation); its invariant slow graph is z1/(1+z1).
inline ModelSpec davis_skodje(double eps) {
  ModelDefinition def;
  def.name = "davis-skodje";
  def.description = "Davis-Skodje two-timescale benchmark, domain z1 > -1";
  def.dim = 2;
  def.slow_idx = {0};
  def.fast_idx = {1};
  def.eps = eps;
  def.domain_check = [](const State& z) {
    if (!(z[0] > -1.0 + 1e-6))
      throw SingularityError("Davis-Skodje pole: z1 = " + std::to_string(z[0]) + " <= -1 + 1e-6");
  };
  def.field = [eps](const State& z) {
    const double a = 1.0 + z[0];
    State v(2);
    v[0] = -z[0];
    v[1] = (-z[1] + z[0] / a) / eps - z[0] / (a * a);
    return v;
  };
  def.jac = [eps](const State& z) {
    const double a = 1.0 + z[0];
    Matrix j(2, 2);
    j << -1.0, 0.0, 1.0 / (eps * a * a) - (1.0 - z[0]) / (a * a * a), -1.0 / eps;
    return j;
  };
  def.fast_split = FastSplit{
      [](const State& z) {
        State g(1);
        g[0] = -z[1] + z[0] / (1.0 + z[0]);
        return g;
      },
      [](const State& z) {
        const double a = 1.0 + z[0];
        State g(1);
        g[0] = -z[0] / (a * a);
        return g;
      }};
  def.reference_graphs = {
      {"oracle-sim", [](double s) { return s / (1.0 + s); },
       "z1/(1+z1): zero invariance defect under the implemented field"},
      {"paper-sim", [](double s) { return 1.0 / (1.0 + s); },
       "1/(1+z1): printed closed form; coincides with oracle-sim only at z1 = 1"},
  };
  return ModelSpec(std::move(def));
}

/// z1' = -z1, z2' = -z2/eps. Invariant slow graph z2 = 0.
inline ModelSpec linear_two_scale(double eps) {
  ModelDefinition def;
  def.name = "linear";
  def.description = "decoupled linear two-timescale system";
  def.dim = 2;
  def.slow_idx = {0};
  def.fast_idx = {1};
  def.eps = eps;
  def.field = [eps](const State& z) {
    State v(2);
    v[0] = -z[0];
    v[1] = -z[1] / eps;
    return v;
  };
  def.jac = [eps](const State&) {
    Matrix j(2, 2);
    j << -1.0, 0.0, 0.0, -1.0 / eps;
    return j;
  };
  def.fast_split = FastSplit{
      [](const State& z) {
        State g(1);
        g[0] = -z[1];
        return g;
      },
      [](const State&) { return State::Zero(1).eval(); }};
  def.reference_graphs = {{"oracle-sim", [](double) { return 0.0; }, "z2 = 0"}};
  return ModelSpec(std::move(def));
}

inline std::vector<std::string> model_names() { return {"davis-skodje", "linear"}; }

inline ModelSpec model_by_name(const std::string& name, double eps) {
  if (name == "davis-skodje") return davis_skodje(eps);
  if (name == "linear") return linear_two_scale(eps);
  throw InvalidInput("unknown model '" + name + "'");
}

inline const ReferenceGraph* find_reference_graph(const ModelSpec& model, const std::string& name) {
  for (const auto& g : model.reference_graphs())
    if (g.name == name) return &g;
  return nullptr;
}

}  // namespace simkit
