#include "sensched/dqn.hpp"

#include <chrono>
#include <cmath>

#include "sensched/errors.hpp"

namespace sensched {

Vector state_to_input(const SystemState& state, const MdpSpec& spec) {
  const int n_sensors = spec.sensors();
  const int n_channels = spec.channel_count();
  Vector x(n_sensors + n_sensors * n_channels);
  for (int n = 0; n < n_sensors; ++n) {
    x(n) = static_cast<double>(state.aoi(n)) / spec.tau_cap;
  }
  const int denom = spec.channels.states - 1;
  long at = n_sensors;
  for (int n = 0; n < n_sensors; ++n) {
    for (int m = 0; m < n_channels; ++m) {
      x(at++) = denom > 0 ? static_cast<double>(state.csi(n, m) - 1) / denom : 0.0;
    }
  }
  return x;
}

namespace {

int greedy_index(const Network& qnet, const SystemState& state, const MdpSpec& spec,
                 const ActionSpace& space) {
  Vector q = forward(qnet, state_to_input(state, spec));
  if (q.size() != space.size()) {
    throw ShapeError("greedy_action: network output does not match the action count");
  }
  int best = 0;
  for (int i = 1; i < space.size(); ++i) {
    if (q(i) > q(best)) best = i;  // strict: ties keep the lowest index
  }
  return best;
}

}  // namespace

ScheduleAction greedy_action(const Network& qnet, const SystemState& state,
                             const MdpSpec& spec, const ActionSpace& space) {
  return space[greedy_index(qnet, state, spec, space)];
}

Eigen::VectorXi se_channel_candidates(const ActionProposer& propose,
                                      const SystemState& state, double xi,
                                      const MdpSpec& spec, const ScheduleAction& greedy,
                                      Rng& rng) {
  const int n_sensors = spec.sensors();
  const int n_channels = spec.channel_count();
  Eigen::VectorXi cand(n_sensors);
  for (int n = 0; n < n_sensors; ++n) {
    if (state.aoi(n) <= 1) {
      // The AoI-decremented state does not exist; mirror the idle fallback.
      cand(n) = greedy.assign(n);
      continue;
    }
    SystemState fresher = state;
    fresher.aoi(n) -= 1;
    int proposal = propose(fresher).assign(n);
    if (proposal == 0) {
      cand(n) = greedy.assign(n);
      continue;
    }
    std::vector<int> better;
    for (int m = 1; m <= n_channels; ++m) {
      if (state.csi(n, m - 1) > state.csi(n, proposal - 1)) better.push_back(m);
    }
    if (!better.empty() && uniform_unit(rng) < xi) {
      cand(n) = better[static_cast<std::size_t>(
          uniform_below(rng, static_cast<int>(better.size())))];
    } else {
      cand(n) = proposal;
    }
  }
  return cand;
}

std::optional<ScheduleAction> complete_loose_candidate(Eigen::VectorXi candidate,
                                                       const MdpSpec& spec, Rng& rng) {
  const int n_sensors = spec.sensors();
  const int n_channels = spec.channel_count();
  std::vector<int> uses(static_cast<std::size_t>(n_channels), 0);
  for (int n = 0; n < n_sensors; ++n) {
    if (candidate(n) > 0) ++uses[static_cast<std::size_t>(candidate(n) - 1)];
  }
  for (int u : uses) {
    if (u > 1) return std::nullopt;
  }
  std::vector<int> idle_sensors;
  for (int n = 0; n < n_sensors; ++n) {
    if (candidate(n) == 0) idle_sensors.push_back(n);
  }
  shuffle_in_place(idle_sensors, rng);
  std::size_t next_idle = 0;
  for (int m = 1; m <= n_channels; ++m) {
    if (uses[static_cast<std::size_t>(m - 1)] == 0) {
      candidate(idle_sensors[next_idle++]) = m;
    }
  }
  return ScheduleAction{std::move(candidate)};
}

std::optional<ScheduleAction> apply_tight_check(const ActionProposer& propose,
                                                Eigen::VectorXi candidate,
                                                const SystemState& state,
                                                const MdpSpec& spec,
                                                const ScheduleAction& greedy) {
  for (int n = 0; n < spec.sensors(); ++n) {
    int m = candidate(n);
    if (m == 0) continue;
    if (state.csi(n, m - 1) <= 1) continue;  // vacuous at the bottom state
    SystemState worse = state;
    worse.csi(n, m - 1) -= 1;
    if (propose(worse).assign(n) != m) {
      candidate(n) = greedy.assign(n);
    }
  }
  ScheduleAction se{std::move(candidate)};
  if (satisfies_schedule_constraint(se, spec.sensors(), spec.channel_count())) {
    return se;
  }
  return std::nullopt;
}

SelectedAction loose_se_action(const Network& qnet, const SystemState& state,
                               const ExplorationSchedule& sched, const MdpSpec& spec,
                               const ActionSpace& space, Rng& rng) {
  ScheduleAction greedy = greedy_action(qnet, state, spec, space);
  if (uniform_unit(rng) < sched.epsilon) {
    return {space[uniform_below(rng, space.size())], std::nullopt, greedy};
  }
  ActionProposer propose = [&](const SystemState& st) {
    return greedy_action(qnet, st, spec, space);
  };
  Eigen::VectorXi cand = se_channel_candidates(propose, state, sched.xi, spec, greedy, rng);
  if (auto executed = complete_loose_candidate(std::move(cand), spec, rng)) {
    return {*executed, *executed, greedy};
  }
  return {greedy, std::nullopt, greedy};
}

SelectedAction tight_se_action(const Network& qnet, const SystemState& state,
                               const ExplorationSchedule& sched, const MdpSpec& spec,
                               const ActionSpace& space, Rng& rng) {
  ScheduleAction greedy = greedy_action(qnet, state, spec, space);
  if (uniform_unit(rng) < sched.epsilon) {
    return {space[uniform_below(rng, space.size())], std::nullopt, greedy};
  }
  ActionProposer propose = [&](const SystemState& st) {
    return greedy_action(qnet, st, spec, space);
  };
  Eigen::VectorXi cand = se_channel_candidates(propose, state, sched.xi, spec, greedy, rng);
  if (auto se = apply_tight_check(propose, std::move(cand), state, spec, greedy)) {
    return {*se, *se, greedy};
  }
  return {greedy, std::nullopt, greedy};
}

SelectedAction epsilon_greedy_action(const Network& qnet, const SystemState& state,
                                     const ExplorationSchedule& sched,
                                     const MdpSpec& spec, const ActionSpace& space,
                                     Rng& rng) {
  ScheduleAction greedy = greedy_action(qnet, state, spec, space);
  if (uniform_unit(rng) < sched.epsilon) {
    return {space[uniform_below(rng, space.size())], std::nullopt, greedy};
  }
  return {greedy, std::nullopt, greedy};
}

LossResult se_loss_and_grad(const std::vector<const TransitionRecord*>& batch,
                            const Network& qnet, const Network& target_net,
                            const MdpSpec& spec, const ActionSpace& space,
                            double alpha1) {
  if (batch.empty()) throw DomainError("se_loss_and_grad: empty batch");
  const int b = static_cast<int>(batch.size());
  const int in_dim = qnet.input_dim();
  Matrix x(in_dim, b), x_next(in_dim, b);
  for (int i = 0; i < b; ++i) {
    x.col(i) = state_to_input(batch[static_cast<std::size_t>(i)]->s, spec);
    x_next.col(i) = state_to_input(batch[static_cast<std::size_t>(i)]->s_next, spec);
  }
  Matrix q_next = forward(target_net, x_next);
  ForwardCache cache;
  Matrix q = forward(qnet, x, &cache);
  if (q.rows() != space.size()) {
    throw ShapeError("se_loss_and_grad: network output does not match the action count");
  }

  Matrix upstream = Matrix::Zero(q.rows(), b);
  const double inv_b = 1.0 / b;
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const TransitionRecord& rec = *batch[static_cast<std::size_t>(i)];
    const double y = rec.r + spec.gamma * q_next.col(i).maxCoeff();
    const int ia = space.index_of(rec.executed);
    const double td = y - q(ia, i);
    if (rec.se.has_value()) {
      const int ise = space.index_of(*rec.se);
      const int igr = space.index_of(rec.greedy);
      const double ad = q(ise, i) - q(igr, i);
      loss += alpha1 * td * td + (1.0 - alpha1) * ad * ad;
      upstream(ia, i) += -2.0 * alpha1 * td * inv_b;
      upstream(ise, i) += 2.0 * (1.0 - alpha1) * ad * inv_b;
      upstream(igr, i) += -2.0 * (1.0 - alpha1) * ad * inv_b;
    } else {
      loss += td * td;
      upstream(ia, i) += -2.0 * td * inv_b;
    }
  }
  loss *= inv_b;
  if (!std::isfinite(loss)) throw NonFiniteLoss("se_loss_and_grad: loss is not finite");
  BackwardResult bw = backward(qnet, cache, upstream);
  return {loss, std::move(bw.grads)};
}

DqnTrainResult train_se_dqn(const MdpSpec& spec, const DqnConfig& config,
                            std::uint64_t seed, const StageCallback& on_stage) {
  Rng rng(seed);
  const ActionSpace space = enumerate_actions(spec.sensors(), spec.channel_count());
  std::vector<int> dims;
  dims.push_back(spec.sensors() + spec.sensors() * spec.channel_count());
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(space.size());

  Network qnet = make_network(dims, OutputActivation::identity, rng);
  Network target = qnet;
  AdamState adam = make_adam(qnet, config.lr, config.lr_decay);
  ReplayMemory<TransitionRecord> replay(config.replay_capacity);
  ExplorationSchedule sched{config.eps_init, config.xi_init, config.eps_decay,
                            config.xi_decay, config.eps_min, config.xi_min};

  DqnTrainResult result;
  long global_step = 0;
  const int stage1_end = config.loose_episodes;
  const int stage2_end = config.loose_episodes + config.tight_episodes;

  for (int episode = 1; episode <= config.total_episodes(); ++episode) {
    const auto wall_start = std::chrono::steady_clock::now();
    adam.episode = episode - 1;
    SystemState s = initial_state(spec, rng);
    double reward_sum = 0.0;
    double loss_sum = 0.0;
    long loss_count = 0;

    for (int t = 0; t < config.steps_per_episode; ++t) {
      SelectedAction sel;
      if (episode <= stage1_end) {
        sel = loose_se_action(qnet, s, sched, spec, space, rng);
      } else if (episode <= stage2_end) {
        sel = tight_se_action(qnet, s, sched, spec, space, rng);
      } else {
        sel = epsilon_greedy_action(qnet, s, sched, spec, space, rng);
      }
      auto [s_next, r] = step(spec, s, sel.executed, rng);
      replay.push(TransitionRecord{s, sel.executed, sel.se, sel.greedy, r, s_next});
      if (replay.size() >= static_cast<std::size_t>(config.batch_size)) {
        auto batch = replay.sample(static_cast<std::size_t>(config.batch_size), rng);
        LossResult lr = se_loss_and_grad(batch, qnet, target, spec, space, config.alpha1);
        adam_step(adam, qnet, lr.grads);
        loss_sum += lr.loss;
        ++loss_count;
      }
      ++global_step;
      if (global_step % config.target_sync_period == 0) sync_target(target, qnet, 1.0);
      sched.decay_step();
      reward_sum += r;
      s = std::move(s_next);
    }

    const auto wall_end = std::chrono::steady_clock::now();
    EpisodeLog row;
    row.episode = episode;
    row.steps = config.steps_per_episode;
    row.epsilon = sched.epsilon;
    row.xi = sched.xi;
    row.avg_sum_mse = -reward_sum / config.steps_per_episode;
    row.loss_mean = loss_count > 0 ? loss_sum / loss_count : 0.0;
    row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(wall_end -
                                                                        wall_start)
                      .count();
    result.log.push_back(row);

    if (on_stage) {
      if (config.loose_episodes > 0 && episode == stage1_end) on_stage("loose", qnet);
      if (config.tight_episodes > 0 && episode == stage2_end) on_stage("tight", qnet);
    }
  }
  if (on_stage) on_stage("final", qnet);
  result.qnet = std::move(qnet);
  return result;
}

}  // namespace sensched
