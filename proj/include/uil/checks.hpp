#pragma once

#include <string>
#include <vector>

namespace uil {

// One property check: a named verdict plus the numbers behind it. The
// suite backs both the `check` CLI subcommand and the acceptance runner.
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// Reverse-mode gradients against central finite differences on the full
// objective (all four terms live) over two small graphs.
CheckResult check_gradient_consistency();

// cut_norm_exact against the brute-force enumeration oracle.
CheckResult check_cut_norm_oracle();

// Identity, permutation invariance, symmetry, triangle inequality of the
// exact cut distance.
CheckResult check_cut_distance_metric();

// Cut distance never exceeds the measure-normalized L2 distance.
CheckResult check_cut_l2_bound();

// Coarsening error stays under the weak-regularity bound.
CheckResult check_weak_regularity_bound();

// Graphs sampled from a step function and OR-ed with Bernoulli noise
// estimate back to the predicted mixture w + p(1-w).
CheckResult check_bernoulli_or_mixture();

// On generated multi-motif data: stable subgraphs carry far less
// cross-environment graphon distance than full graphs, environmental
// remainders carry almost all of it.
CheckResult check_stable_env_separation();

std::vector<CheckResult> run_property_suite();

}  // namespace uil
