#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sensched/mdp.hpp"

#include "json.hpp"

namespace sensched {

/// Mixed-radix enumeration of the truncated state space. AoI digits come
/// first (sensor 0 most significant), then channel states row-major.
struct StateIndexer {
  int sensors = 0;
  int channels = 0;
  int tau_cap = 0;
  int states = 0;
  long tau_count = 0;
  long csi_count = 0;
  long state_count = 0;

  /// Throws CapacityError when the full space exceeds 10^7 states.
  static StateIndexer make(const MdpSpec& spec);

  long tau_index(const Eigen::VectorXi& aoi) const;
  long csi_index(const Eigen::MatrixXi& csi) const;
  long index_of(const SystemState& state) const { return tau_index(state.aoi) * csi_count + csi_index(state.csi); }
  SystemState state_of(long index) const;
};

struct ValueIterationResult {
  StateIndexer indexer;
  std::vector<double> values;  // by state index
  std::vector<int> policy;     // canonical action index by state index
  double residual = 0.0;       // sup-norm Bellman residual of `values`
  int sweeps = 0;
};

/// Exact synchronous (Jacobi) value iteration on the truncated MDP.
/// Terminates once a sweep moves the value table by at most `tol` in
/// sup-norm; the returned policy is greedy with respect to the returned
/// values, breaking ties toward the lowest canonical action index.
ValueIterationResult value_iteration(const MdpSpec& spec, const ActionSpace& space,
                                     double tol);

/// One threshold-structure violation. `assigned` is the channel the policy
/// gives the sensor at the perturbed state (0 = idle); `expected` is the
/// channel held at the base state, i.e. the minimum acceptable assignment.
struct ThresholdViolation {
  SystemState state;
  int sensor = 0;
  std::string property;  // "i" or "ii"
  int assigned = 0;
  int expected = 0;
};

/// Certifies the two monotone-consistency properties of a policy over the
/// whole truncated state space:
///   (i)  improving a held channel's state keeps the assignment;
///   (ii) aging a scheduled sensor keeps it on an equal-or-better channel
///        (idling it counts as a violation).
/// An empty result certifies the policy as threshold-structured.
std::vector<ThresholdViolation> check_threshold_structure(
    const std::vector<int>& policy, const MdpSpec& spec, const ActionSpace& space);

nlohmann::json threshold_report_to_json(const std::vector<ThresholdViolation>& violations);

/// One row per state: AoI digits, channel states, the action index, and the
/// assign vector.
void write_policy_csv(std::ostream& out, const std::vector<int>& policy,
                      const MdpSpec& spec, const ActionSpace& space);

}  // namespace sensched
