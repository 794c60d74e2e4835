#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "simkit/asymptotics.hpp"
#include "simkit/errors.hpp"
#include "simkit/grid.hpp"
#include "simkit/manifold.hpp"
#include "simkit/methods.hpp"
#include "simkit/variational.hpp"

namespace simkit {

struct CandidateScore {
  std::string provenance;
  double max_defect = 0.0;
  /// Slow coordinates of the variational samples.
  std::vector<double> sample_z1;
  /// |h(z1) - z2_0*(z1)| at each sample.
  std::vector<double> variational_gap;
  double max_variational_gap = 0.0;
};

struct SelectionReport {
  std::vector<CandidateScore> scores;
  std::size_t winner = 0;
  double defect_tol = 1e-6;
  double variational_tol = 1e-3;
  /// Sufficient-condition proxy: winner is invariant to defect_tol and agrees
  /// with the variational extremals to variational_tol.
  bool pass = false;
};

struct Selection {
  GraphManifold manifold;
  SelectionReport report;
};

/// Ranks candidates by max interior invariance defect and checks each one
/// against variational extremals at the grid quartiles. Candidates must share
/// the first candidate's grid.
inline Selection select_invariant_root(const ModelSpec& model, const std::vector<GraphManifold>& candidates,
                                       const VariationalSpec& vspec) {
  if (candidates.empty()) throw InvalidInput("select_invariant_root needs at least one candidate");
  const GraphManifold& first = candidates.front();
  validate(first);
  for (const GraphManifold& c : candidates) {
    validate(c);
    if (c.grid != first.grid) throw InvalidInput("candidates must share one grid");
  }

  const std::size_t n = first.size();
  const std::vector<std::size_t> picks = {n / 4, n / 2, (3 * n) / 4};
  std::vector<double> targets;
  for (std::size_t j : picks) {
    VariationalSpec spec = vspec;
    spec.anchor = SlowAnchor::initial;
    spec.z1_t0 = first.grid[j];
    targets.push_back(minimize_fast_ic(model, spec).z2_0);
  }

  SelectionReport rep;
  for (const GraphManifold& c : candidates) {
    CandidateScore s;
    s.provenance = c.provenance;
    s.max_defect = invariance_defect(model, c).max_abs;
    for (std::size_t k = 0; k < picks.size(); ++k) {
      s.sample_z1.push_back(c.grid[picks[k]]);
      s.variational_gap.push_back(std::abs(c.values[picks[k]] - targets[k]));
      s.max_variational_gap = std::max(s.max_variational_gap, s.variational_gap.back());
    }
    rep.scores.push_back(std::move(s));
  }
  for (std::size_t i = 1; i < rep.scores.size(); ++i)
    if (rep.scores[i].max_defect < rep.scores[rep.winner].max_defect) rep.winner = i;
  const CandidateScore& w = rep.scores[rep.winner];
  rep.pass = w.max_defect <= rep.defect_tol && w.max_variational_gap <= rep.variational_tol;
  return {candidates[rep.winner], std::move(rep)};
}

inline Selection select_invariant_root(const ModelSpec& model, const std::vector<GraphManifold>& candidates) {
  return select_invariant_root(model, candidates, default_variational_spec(model));
}

}  // namespace simkit
