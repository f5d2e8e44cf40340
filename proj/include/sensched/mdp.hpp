#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sensched/channel.hpp"
#include "sensched/estimation.hpp"
#include "sensched/rng.hpp"

namespace sensched {

/// MDP state: per-sensor AoI (saturated at the spec's cap) and the current
/// channel-state matrix.
struct SystemState {
  Eigen::VectorXi aoi;        // length N, entries in 1..tau_cap
  Eigen::MatrixXi csi;        // N x M, entries in 1..states

  bool operator==(const SystemState& other) const {
    return aoi == other.aoi && csi == other.csi;
  }
};

/// Channel assignment: assign(n) == 0 means sensor n idles, assign(n) == m
/// means sensor n transmits on channel m.
struct ScheduleAction {
  Eigen::VectorXi assign;

  bool operator==(const ScheduleAction& other) const { return assign == other.assign; }
};

/// True when every channel 1..M is used by exactly one sensor (each sensor
/// holds at most one channel by construction of the assign vector).
bool satisfies_schedule_constraint(const ScheduleAction& action, int sensors,
                                   int channels);

/// The canonical ordered action list. Order is lexicographic over the
/// (sensor on channel 1, sensor on channel 2, ...) arrangement, which fixes
/// the Q-network output indexing.
struct ActionSpace {
  int sensors = 0;
  int channels = 0;
  std::vector<ScheduleAction> actions;

  int size() const { return static_cast<int>(actions.size()); }
  const ScheduleAction& operator[](int i) const {
    return actions[static_cast<std::size_t>(i)];
  }
  /// Index of a valid action in canonical order; throws InvalidAction for
  /// assignments outside the space.
  int index_of(const ScheduleAction& action) const;

 private:
  friend ActionSpace enumerate_actions(int, int);
  std::unordered_map<std::uint64_t, int> index_;
};

/// All N!/(N-M)! injective channel assignments. Throws DomainError when
/// M > N or M < 1.
ActionSpace enumerate_actions(int sensors, int channels);

/// Full scheduling MDP specification. `mse` caches the per-sensor MSE as a
/// function of AoI so reward lookups and value iteration stay cheap.
struct MdpSpec {
  std::vector<ProcessModel> processes;
  ChannelModel channels;
  double gamma = 0.95;
  int tau_cap = 100;
  Matrix mse;  // N x tau_cap, row n holds mse_at_aoi(process n, tau, tau_cap)

  int sensors() const { return channels.sensors; }
  int channel_count() const { return channels.channels; }
};

MdpSpec make_mdp_spec(std::vector<ProcessModel> processes, ChannelModel channels,
                      double gamma, int tau_cap);

/// r(s) = -sum_n Tr(P_n at AoI tau_n); depends on the AoI only.
double reward(const MdpSpec& spec, const SystemState& state);

/// Start state: every AoI at 1, fresh channel draw.
SystemState initial_state(const MdpSpec& spec, Rng& rng);

/// One environment transition. Scheduled sensors reset their AoI to 1 with
/// probability 1 - drop_prob[h] and age otherwise; idle sensors age; ages
/// saturate at tau_cap; the channel matrix is redrawn. The returned reward
/// is r of the pre-transition state.
std::pair<SystemState, double> step(const MdpSpec& spec, const SystemState& state,
                                    const ScheduleAction& action, Rng& rng);

/// Per-sensor transition kernel Pr(tau_next | tau, H, a_n) for sensor n,
/// with the aged branch saturating at tau_cap.
double transition_probability(const MdpSpec& spec, int sensor, int tau,
                              const Eigen::MatrixXi& csi, int assigned_channel,
                              int tau_next);

}  // namespace sensched
