#include "sensched/value_iteration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "sensched/errors.hpp"

namespace sensched {

namespace {
constexpr long kMaxStates = 10'000'000;
constexpr int kMaxSweeps = 200'000;
}  // namespace

StateIndexer StateIndexer::make(const MdpSpec& spec) {
  StateIndexer ix;
  ix.sensors = spec.sensors();
  ix.channels = spec.channel_count();
  ix.tau_cap = spec.tau_cap;
  ix.states = spec.channels.states;

  double total = 1.0;
  for (int n = 0; n < ix.sensors; ++n) total *= ix.tau_cap;
  for (int d = 0; d < ix.sensors * ix.channels; ++d) total *= ix.states;
  if (total > static_cast<double>(kMaxStates)) {
    throw CapacityError("state space exceeds the 1e7 enumeration bound");
  }
  ix.tau_count = 1;
  for (int n = 0; n < ix.sensors; ++n) ix.tau_count *= ix.tau_cap;
  ix.csi_count = 1;
  for (int d = 0; d < ix.sensors * ix.channels; ++d) ix.csi_count *= ix.states;
  ix.state_count = ix.tau_count * ix.csi_count;
  return ix;
}

long StateIndexer::tau_index(const Eigen::VectorXi& aoi) const {
  long idx = 0;
  for (int n = 0; n < sensors; ++n) idx = idx * tau_cap + (aoi(n) - 1);
  return idx;
}

long StateIndexer::csi_index(const Eigen::MatrixXi& csi) const {
  long idx = 0;
  for (int n = 0; n < sensors; ++n) {
    for (int m = 0; m < channels; ++m) idx = idx * states + (csi(n, m) - 1);
  }
  return idx;
}

SystemState StateIndexer::state_of(long index) const {
  SystemState s;
  s.aoi.resize(sensors);
  s.csi.resize(sensors, channels);
  long h_part = index % csi_count;
  long t_part = index / csi_count;
  for (int n = sensors - 1; n >= 0; --n) {
    s.aoi(n) = static_cast<int>(t_part % tau_cap) + 1;
    t_part /= tau_cap;
  }
  for (int n = sensors - 1; n >= 0; --n) {
    for (int m = channels - 1; m >= 0; --m) {
      s.csi(n, m) = static_cast<int>(h_part % states) + 1;
      h_part /= states;
    }
  }
  return s;
}

namespace {

// Probability of each full channel matrix, by csi index.
std::vector<double> channel_matrix_probabilities(const MdpSpec& spec,
                                                 const StateIndexer& ix) {
  std::vector<double> pr(static_cast<std::size_t>(ix.csi_count));
  for (long h = 0; h < ix.csi_count; ++h) {
    long rest = h;
    double p = 1.0;
    for (int d = ix.sensors * ix.channels - 1; d >= 0; --d) {
      int digit = static_cast<int>(rest % ix.states);
      rest /= ix.states;
      p *= spec.channels.dist(d, digit);
    }
    pr[static_cast<std::size_t>(h)] = p;
  }
  return pr;
}

struct SweepOutput {
  std::vector<double> values;
  std::vector<int> policy;
  double max_change = 0.0;
};

// One synchronous Bellman application T V, together with the greedy policy
// of V and the sup-norm change.
SweepOutput bellman_sweep(const MdpSpec& spec, const ActionSpace& space,
                          const StateIndexer& ix, const std::vector<double>& values,
                          const std::vector<double>& reward_by_tau,
                          const std::vector<double>& csi_prob) {
  // Expected continuation value over the fresh channel draw, per AoI index.
  std::vector<double> cont(static_cast<std::size_t>(ix.tau_count), 0.0);
  for (long t = 0; t < ix.tau_count; ++t) {
    double acc = 0.0;
    const double* v = values.data() + t * ix.csi_count;
    for (long h = 0; h < ix.csi_count; ++h) acc += csi_prob[static_cast<std::size_t>(h)] * v[h];
    cont[static_cast<std::size_t>(t)] = acc;
  }

  SweepOutput out;
  out.values.resize(values.size());
  out.policy.resize(values.size());

  std::vector<long> tau_stride(static_cast<std::size_t>(ix.sensors));
  long stride = 1;
  for (int n = ix.sensors - 1; n >= 0; --n) {
    tau_stride[static_cast<std::size_t>(n)] = stride;
    stride *= ix.tau_cap;
  }

  SystemState s;
  for (long idx = 0; idx < ix.state_count; ++idx) {
    s = ix.state_of(idx);
    const long tau_idx = idx / ix.csi_count;
    const double r = reward_by_tau[static_cast<std::size_t>(tau_idx)];

    // Aged AoI digit per sensor and the index with nobody delivering.
    long aged_base = 0;
    std::vector<int> aged_digit(static_cast<std::size_t>(ix.sensors));
    for (int n = 0; n < ix.sensors; ++n) {
      int aged = std::min(s.aoi(n) + 1, ix.tau_cap) - 1;
      aged_digit[static_cast<std::size_t>(n)] = aged;
      aged_base += aged * tau_stride[static_cast<std::size_t>(n)];
    }

    double best = -std::numeric_limits<double>::infinity();
    int best_action = 0;
    for (int ai = 0; ai < space.size(); ++ai) {
      const ScheduleAction& a = space[ai];
      // Scheduled sensors and their delivery probabilities.
      int sched_count = 0;
      int sched_sensor[64];
      double sched_succ[64];
      for (int n = 0; n < ix.sensors; ++n) {
        int m = a.assign(n);
        if (m > 0) {
          sched_sensor[sched_count] = n;
          sched_succ[sched_count] = 1.0 - spec.channels.drop_prob(s.csi(n, m - 1) - 1);
          ++sched_count;
        }
      }
      double expect = 0.0;
      for (int mask = 0; mask < (1 << sched_count); ++mask) {
        double p = 1.0;
        long t_next = aged_base;
        for (int b = 0; b < sched_count; ++b) {
          int n = sched_sensor[b];
          if (mask & (1 << b)) {
            p *= sched_succ[b];
            t_next -= aged_digit[static_cast<std::size_t>(n)] *
                      tau_stride[static_cast<std::size_t>(n)];  // AoI resets to 1
          } else {
            p *= 1.0 - sched_succ[b];
          }
        }
        if (p > 0.0) expect += p * cont[static_cast<std::size_t>(t_next)];
      }
      double q = r + spec.gamma * expect;
      if (q > best) {
        best = q;
        best_action = ai;
      }
    }
    out.values[static_cast<std::size_t>(idx)] = best;
    out.policy[static_cast<std::size_t>(idx)] = best_action;
    out.max_change = std::max(out.max_change,
                              std::abs(best - values[static_cast<std::size_t>(idx)]));
  }
  return out;
}

}  // namespace

ValueIterationResult value_iteration(const MdpSpec& spec, const ActionSpace& space,
                                     double tol) {
  if (space.sensors != spec.sensors() || space.channels != spec.channel_count()) {
    throw DomainError("value_iteration: action space does not match the spec");
  }
  StateIndexer ix = StateIndexer::make(spec);
  if (spec.channel_count() > 63) {
    throw CapacityError("value_iteration: too many channels for subset enumeration");
  }

  std::vector<double> reward_by_tau(static_cast<std::size_t>(ix.tau_count));
  {
    Eigen::VectorXi aoi(ix.sensors);
    for (long t = 0; t < ix.tau_count; ++t) {
      long rest = t;
      double total = 0.0;
      for (int n = ix.sensors - 1; n >= 0; --n) {
        int digit = static_cast<int>(rest % ix.tau_cap);
        rest /= ix.tau_cap;
        total += spec.mse(n, digit);
      }
      reward_by_tau[static_cast<std::size_t>(t)] = -total;
    }
  }
  std::vector<double> csi_prob = channel_matrix_probabilities(spec, ix);

  std::vector<double> values(static_cast<std::size_t>(ix.state_count), 0.0);
  int sweeps = 0;
  while (true) {
    SweepOutput out = bellman_sweep(spec, space, ix, values, reward_by_tau, csi_prob);
    ++sweeps;
    values = std::move(out.values);
    if (out.max_change <= tol) break;
    if (sweeps >= kMaxSweeps) {
      throw NonConvergence("value iteration did not reach tolerance");
    }
  }

  // Final application pins the residual of the returned table and the greedy
  // policy of those exact values.
  SweepOutput final_pass = bellman_sweep(spec, space, ix, values, reward_by_tau, csi_prob);
  ValueIterationResult result;
  result.indexer = ix;
  result.values = std::move(values);
  result.policy = std::move(final_pass.policy);
  result.residual = final_pass.max_change;
  result.sweeps = sweeps;
  return result;
}

std::vector<ThresholdViolation> check_threshold_structure(
    const std::vector<int>& policy, const MdpSpec& spec, const ActionSpace& space) {
  StateIndexer ix = StateIndexer::make(spec);
  if (static_cast<long>(policy.size()) != ix.state_count) {
    throw IncompletePolicy("policy table does not cover the truncated state space");
  }
  for (int p : policy) {
    if (p < 0 || p >= space.size()) {
      throw IncompletePolicy("policy table holds an out-of-range action index");
    }
  }

  std::vector<ThresholdViolation> violations;
  for (long idx = 0; idx < ix.state_count; ++idx) {
    SystemState s = ix.state_of(idx);
    const ScheduleAction& a = space[policy[static_cast<std::size_t>(idx)]];
    for (int n = 0; n < ix.sensors; ++n) {
      int m = a.assign(n);
      if (m == 0) continue;

      // (i) improving the held channel's state keeps the assignment
      for (int better = s.csi(n, m - 1) + 1; better <= ix.states; ++better) {
        SystemState up = s;
        up.csi(n, m - 1) = better;
        const ScheduleAction& pa = space[policy[static_cast<std::size_t>(ix.index_of(up))]];
        if (pa.assign(n) != m) {
          violations.push_back(ThresholdViolation{s, n, "i", pa.assign(n), m});
        }
      }

      // (ii) aging the scheduled sensor keeps an equal-or-better channel
      if (s.aoi(n) < ix.tau_cap) {
        SystemState older = s;
        older.aoi(n) += 1;
        const ScheduleAction& pa =
            space[policy[static_cast<std::size_t>(ix.index_of(older))]];
        int m2 = pa.assign(n);
        bool ok = m2 > 0 && s.csi(n, m2 - 1) >= s.csi(n, m - 1);
        if (!ok) {
          violations.push_back(ThresholdViolation{s, n, "ii", m2, m});
        }
      }
    }
  }
  return violations;
}

nlohmann::json threshold_report_to_json(const std::vector<ThresholdViolation>& violations) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : violations) {
    nlohmann::json state;
    state["tau"] = std::vector<int>(v.state.aoi.data(), v.state.aoi.data() + v.state.aoi.size());
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(v.state.csi.rows()));
    for (int n = 0; n < v.state.csi.rows(); ++n) {
      rows[static_cast<std::size_t>(n)].resize(static_cast<std::size_t>(v.state.csi.cols()));
      for (int m = 0; m < v.state.csi.cols(); ++m) {
        rows[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)] = v.state.csi(n, m);
      }
    }
    state["H"] = rows;
    arr.push_back({{"state", state},
                   {"sensor", v.sensor + 1},
                   {"property", v.property},
                   {"assigned", v.assigned},
                   {"expected", v.expected}});
  }
  return arr;
}

void write_policy_csv(std::ostream& out, const std::vector<int>& policy,
                      const MdpSpec& spec, const ActionSpace& space) {
  StateIndexer ix = StateIndexer::make(spec);
  if (static_cast<long>(policy.size()) != ix.state_count) {
    throw IncompletePolicy("policy table does not cover the truncated state space");
  }
  for (int n = 1; n <= ix.sensors; ++n) out << "tau_" << n << ",";
  for (int n = 1; n <= ix.sensors; ++n) {
    for (int m = 1; m <= ix.channels; ++m) out << "h_" << n << "_" << m << ",";
  }
  out << "action_index";
  for (int n = 1; n <= ix.sensors; ++n) out << ",assign_" << n;
  out << "\n";
  for (long idx = 0; idx < ix.state_count; ++idx) {
    SystemState s = ix.state_of(idx);
    for (int n = 0; n < ix.sensors; ++n) out << s.aoi(n) << ",";
    for (int n = 0; n < ix.sensors; ++n) {
      for (int m = 0; m < ix.channels; ++m) out << s.csi(n, m) << ",";
    }
    int ai = policy[static_cast<std::size_t>(idx)];
    out << ai;
    const ScheduleAction& a = space[ai];
    for (int n = 0; n < ix.sensors; ++n) out << "," << a.assign(n);
    out << "\n";
  }
}

}  // namespace sensched
