#include "sensched/mdp.hpp"

#include <algorithm>

#include "sensched/errors.hpp"

namespace sensched {

namespace {

std::uint64_t assign_key(const Eigen::VectorXi& assign, int channels) {
  std::uint64_t key = 0;
  for (long n = 0; n < assign.size(); ++n) {
    key = key * static_cast<std::uint64_t>(channels + 1) +
          static_cast<std::uint64_t>(assign(n));
  }
  return key;
}

}  // namespace

bool satisfies_schedule_constraint(const ScheduleAction& action, int sensors,
                                   int channels) {
  if (action.assign.size() != sensors) return false;
  std::vector<int> uses(static_cast<std::size_t>(channels), 0);
  for (int n = 0; n < sensors; ++n) {
    int m = action.assign(n);
    if (m < 0 || m > channels) return false;
    if (m > 0) ++uses[static_cast<std::size_t>(m - 1)];
  }
  return std::all_of(uses.begin(), uses.end(), [](int u) { return u == 1; });
}

int ActionSpace::index_of(const ScheduleAction& action) const {
  if (action.assign.size() != sensors) {
    throw InvalidAction("index_of: assign vector has wrong length");
  }
  auto it = index_.find(assign_key(action.assign, channels));
  if (it == index_.end()) {
    throw InvalidAction("index_of: not a valid schedule for this action space");
  }
  return it->second;
}

ActionSpace enumerate_actions(int sensors, int channels) {
  if (channels < 1 || channels > sensors) {
    throw DomainError("enumerate_actions: need 1 <= M <= N");
  }
  ActionSpace space;
  space.sensors = sensors;
  space.channels = channels;

  // Lexicographic recursion over which sensor serves channel 1, 2, ...
  Eigen::VectorXi assign = Eigen::VectorXi::Zero(sensors);
  std::vector<bool> taken(static_cast<std::size_t>(sensors), false);
  auto recurse = [&](auto&& self, int channel) -> void {
    if (channel > channels) {
      space.actions.push_back(ScheduleAction{assign});
      return;
    }
    for (int n = 0; n < sensors; ++n) {
      if (taken[static_cast<std::size_t>(n)]) continue;
      taken[static_cast<std::size_t>(n)] = true;
      assign(n) = channel;
      self(self, channel + 1);
      assign(n) = 0;
      taken[static_cast<std::size_t>(n)] = false;
    }
  };
  recurse(recurse, 1);

  space.index_.reserve(space.actions.size());
  for (int i = 0; i < space.size(); ++i) {
    space.index_.emplace(assign_key(space.actions[static_cast<std::size_t>(i)].assign,
                                    channels),
                         i);
  }
  return space;
}

MdpSpec make_mdp_spec(std::vector<ProcessModel> processes, ChannelModel channels,
                      double gamma, int tau_cap) {
  if (static_cast<int>(processes.size()) != channels.sensors) {
    throw DomainError("make_mdp_spec: process count must equal sensor count");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw DomainError("make_mdp_spec: discount factor must lie in [0, 1)");
  }
  if (tau_cap < 1) throw DomainError("make_mdp_spec: AoI cap must be >= 1");

  MdpSpec spec;
  spec.gamma = gamma;
  spec.tau_cap = tau_cap;
  spec.mse.resize(static_cast<long>(processes.size()), tau_cap);
  for (std::size_t n = 0; n < processes.size(); ++n) {
    spec.mse.row(static_cast<long>(n)) = mse_table(processes[n], tau_cap).transpose();
  }
  spec.processes = std::move(processes);
  spec.channels = std::move(channels);
  return spec;
}

double reward(const MdpSpec& spec, const SystemState& state) {
  double total = 0.0;
  for (int n = 0; n < spec.sensors(); ++n) {
    int tau = std::min(state.aoi(n), spec.tau_cap);
    total += spec.mse(n, tau - 1);
  }
  return -total;
}

SystemState initial_state(const MdpSpec& spec, Rng& rng) {
  SystemState s;
  s.aoi = Eigen::VectorXi::Ones(spec.sensors());
  s.csi = sample_channel_matrix(spec.channels, rng);
  return s;
}

std::pair<SystemState, double> step(const MdpSpec& spec, const SystemState& state,
                                    const ScheduleAction& action, Rng& rng) {
  if (!satisfies_schedule_constraint(action, spec.sensors(), spec.channel_count())) {
    throw InvalidAction("step: schedule violates the assignment constraint");
  }
  double reward_now = reward(spec, state);
  SystemState next;
  next.aoi.resize(spec.sensors());
  for (int n = 0; n < spec.sensors(); ++n) {
    int aged = std::min(state.aoi(n) + 1, spec.tau_cap);
    int m = action.assign(n);
    if (m > 0 && packet_delivered(spec.channels, state.csi(n, m - 1), rng)) {
      next.aoi(n) = 1;
    } else {
      next.aoi(n) = aged;
    }
  }
  next.csi = sample_channel_matrix(spec.channels, rng);
  return {std::move(next), reward_now};
}

double transition_probability(const MdpSpec& spec, int sensor, int tau,
                              const Eigen::MatrixXi& csi, int assigned_channel,
                              int tau_next) {
  if (sensor < 0 || sensor >= spec.sensors()) {
    throw DomainError("transition_probability: sensor index out of range");
  }
  if (tau < 1 || tau > spec.tau_cap || tau_next < 1 || tau_next > spec.tau_cap) {
    throw DomainError("transition_probability: AoI out of range");
  }
  if (assigned_channel < 0 || assigned_channel > spec.channel_count()) {
    throw DomainError("transition_probability: channel index out of range");
  }
  const int aged = std::min(tau + 1, spec.tau_cap);
  if (assigned_channel == 0) {
    return tau_next == aged ? 1.0 : 0.0;
  }
  const int h = csi(sensor, assigned_channel - 1);
  if (h < 1 || h > spec.channels.states) {
    throw DomainError("transition_probability: channel state out of range");
  }
  const double p_drop = spec.channels.drop_prob(h - 1);
  double prob = 0.0;
  if (tau_next == 1) prob += 1.0 - p_drop;
  if (tau_next == aged) prob += p_drop;  // coincides with 1 when tau_cap == 1
  return prob;
}

}  // namespace sensched
