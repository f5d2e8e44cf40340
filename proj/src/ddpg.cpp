#include "sensched/ddpg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sensched/errors.hpp"
#include "sensched/replay.hpp"

namespace sensched {

namespace {

Vector clamp_unit(Vector v) {
  return v.cwiseMax(-1.0).cwiseMin(1.0);
}

Vector explore_from(const Vector& actor_out, double sigma, Rng& rng) {
  Vector v = actor_out;
  for (long i = 0; i < v.size(); ++i) v(i) += sigma * gaussian(rng);
  return clamp_unit(std::move(v));
}

// Critic input layout: state features first, then the virtual action.
Matrix critic_input(const Matrix& features, const Matrix& actions) {
  Matrix u(features.rows() + actions.rows(), features.cols());
  u.topRows(features.rows()) = features;
  u.bottomRows(actions.rows()) = actions;
  return u;
}

}  // namespace

ScheduleAction map_virtual_to_schedule(const Vector& v, int channels) {
  const int n_sensors = static_cast<int>(v.size());
  if (channels < 1 || channels > n_sensors) {
    throw DomainError("map_virtual_to_schedule: need 1 <= M <= N");
  }
  std::vector<int> order(static_cast<std::size_t>(n_sensors));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return v(a) > v(b); });
  ScheduleAction action;
  action.assign = Eigen::VectorXi::Zero(n_sensors);
  for (int rank = 0; rank < channels; ++rank) {
    action.assign(order[static_cast<std::size_t>(rank)]) = rank + 1;
  }
  return action;
}

Vector canonical_virtual(const ScheduleAction& action, int channels) {
  const int n_sensors = static_cast<int>(action.assign.size());
  if (!satisfies_schedule_constraint(action, n_sensors, channels)) {
    throw InvalidAction("canonical_virtual: schedule violates the assignment constraint");
  }
  Vector v(n_sensors);
  const double spacing = 2.0 / n_sensors;
  const double lowest_scheduled = 1.0 - (channels - 1) * spacing;
  const int idle_count = n_sensors - channels;
  const double idle_step = idle_count > 0 ? (lowest_scheduled + 1.0) / idle_count : 0.0;
  int idle_seen = 0;
  for (int n = 0; n < n_sensors; ++n) {
    int m = action.assign(n);
    if (m > 0) {
      v(n) = 1.0 - (m - 1) * spacing;
    } else {
      ++idle_seen;
      v(n) = lowest_scheduled - idle_seen * idle_step;
    }
  }
  return v;
}

Vector actor_explore(const Network& actor, const SystemState& state, double sigma,
                     const MdpSpec& spec, Rng& rng) {
  return explore_from(forward(actor, state_to_input(state, spec)), sigma, rng);
}

SelectedVirtual se_action_ddpg(const Network& actor, const SystemState& state,
                               const ExplorationSchedule& sched, double noise_sigma,
                               SeStage stage, const MdpSpec& spec, Rng& rng) {
  const int channels = spec.channel_count();
  Vector actor_out = forward(actor, state_to_input(state, spec));
  if (uniform_unit(rng) < sched.epsilon) {
    return {explore_from(actor_out, noise_sigma, rng), std::nullopt, actor_out};
  }
  ScheduleAction greedy = map_virtual_to_schedule(actor_out, channels);
  ActionProposer propose = [&](const SystemState& st) {
    return map_virtual_to_schedule(forward(actor, state_to_input(st, spec)), channels);
  };
  Eigen::VectorXi cand = se_channel_candidates(propose, state, sched.xi, spec, greedy, rng);
  std::optional<ScheduleAction> se;
  if (stage == SeStage::loose) {
    se = complete_loose_candidate(std::move(cand), spec, rng);
  } else {
    se = apply_tight_check(propose, std::move(cand), state, spec, greedy);
  }
  if (se) {
    Vector encoded = canonical_virtual(*se, channels);
    return {encoded, encoded, actor_out};
  }
  return {actor_out, std::nullopt, actor_out};
}

LossResult critic_loss_and_grad(const std::vector<const DdpgTransition*>& batch,
                                const Network& critic, const Network& target_critic,
                                const Network& target_actor, const MdpSpec& spec,
                                double alpha1) {
  if (batch.empty()) throw DomainError("critic_loss_and_grad: empty batch");
  const int b = static_cast<int>(batch.size());
  const int n_sensors = spec.sensors();
  const int feat_dim = n_sensors + n_sensors * spec.channel_count();

  Matrix x(feat_dim, b), x_next(feat_dim, b), v(n_sensors, b), v_actor(n_sensors, b);
  for (int i = 0; i < b; ++i) {
    const DdpgTransition& rec = *batch[static_cast<std::size_t>(i)];
    x.col(i) = state_to_input(rec.s, spec);
    x_next.col(i) = state_to_input(rec.s_next, spec);
    v.col(i) = rec.v;
    v_actor.col(i) = rec.v_actor;
    if (rec.v_se.has_value() && *rec.v_se != rec.v) {
      throw DomainError("critic_loss_and_grad: SE action present but not executed");
    }
  }

  // Targets from the frozen networks.
  Matrix next_action = forward(target_actor, x_next);
  Matrix q_next = forward(target_critic, critic_input(x_next, next_action));

  ForwardCache cache_exec, cache_actor;
  Matrix q_exec = forward(critic, critic_input(x, v), &cache_exec);
  Matrix q_act = forward(critic, critic_input(x, v_actor), &cache_actor);

  Matrix up_exec = Matrix::Zero(1, b), up_act = Matrix::Zero(1, b);
  const double inv_b = 1.0 / b;
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const DdpgTransition& rec = *batch[static_cast<std::size_t>(i)];
    const double y = rec.r + spec.gamma * q_next(0, i);
    const double td = y - q_exec(0, i);
    if (rec.v_se.has_value()) {
      const double ad = q_exec(0, i) - q_act(0, i);  // Q(s, v_se) with v_se == v
      loss += alpha1 * td * td + (1.0 - alpha1) * ad * ad;
      up_exec(0, i) = (-2.0 * alpha1 * td + 2.0 * (1.0 - alpha1) * ad) * inv_b;
      up_act(0, i) = -2.0 * (1.0 - alpha1) * ad * inv_b;
    } else {
      loss += td * td;
      up_exec(0, i) = -2.0 * td * inv_b;
    }
  }
  loss *= inv_b;
  if (!std::isfinite(loss)) {
    throw NonFiniteLoss("critic_loss_and_grad: loss is not finite");
  }
  BackwardResult bw = backward(critic, cache_exec, up_exec);
  BackwardResult bw2 = backward(critic, cache_actor, up_act);
  accumulate(bw.grads, bw2.grads);
  return {loss, std::move(bw.grads)};
}

LossResult actor_loss_and_grad(const std::vector<const DdpgTransition*>& batch,
                               const Network& actor, const Network& critic,
                               const MdpSpec& spec, double alpha2,
                               bool literal_gradient) {
  if (batch.empty()) throw DomainError("actor_loss_and_grad: empty batch");
  const int b = static_cast<int>(batch.size());
  const int n_sensors = spec.sensors();
  const int feat_dim = n_sensors + n_sensors * spec.channel_count();

  Matrix x(feat_dim, b), v(n_sensors, b);
  std::vector<bool> se(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    const DdpgTransition& rec = *batch[static_cast<std::size_t>(i)];
    x.col(i) = state_to_input(rec.s, spec);
    v.col(i) = rec.v;
    se[static_cast<std::size_t>(i)] = rec.v_se.has_value();
  }

  ForwardCache cache_a, cache_c;
  Matrix mu = forward(actor, x, &cache_a);
  Matrix q = forward(critic, critic_input(x, mu), &cache_c);

  const double q_sign = literal_gradient ? 1.0 : -1.0;
  const double inv_b = 1.0 / b;
  Matrix up_c = Matrix::Zero(1, b);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    if (se[static_cast<std::size_t>(i)]) {
      const double gap = (v.col(i) - mu.col(i)).squaredNorm();
      loss += q_sign * alpha2 * q(0, i) + (1.0 - alpha2) * gap;
      up_c(0, i) = q_sign * alpha2 * inv_b;
    } else {
      loss += q_sign * q(0, i);
      up_c(0, i) = q_sign * inv_b;
    }
  }
  loss *= inv_b;
  if (!std::isfinite(loss)) {
    throw NonFiniteLoss("actor_loss_and_grad: loss is not finite");
  }

  // Chain through the critic's action input; the critic itself is frozen.
  BackwardResult bw_c = backward(critic, cache_c, up_c);
  Matrix upstream_actor = bw_c.input_grad.bottomRows(n_sensors);
  for (int i = 0; i < b; ++i) {
    if (se[static_cast<std::size_t>(i)]) {
      upstream_actor.col(i) +=
          2.0 * (1.0 - alpha2) * (mu.col(i) - v.col(i)) * inv_b;
    }
  }
  BackwardResult bw_a = backward(actor, cache_a, upstream_actor);
  return {loss, std::move(bw_a.grads)};
}

DdpgTrainResult train_se_ddpg(const MdpSpec& spec, const DdpgConfig& config,
                              std::uint64_t seed, const DdpgStageCallback& on_stage) {
  Rng rng(seed);
  const int n_sensors = spec.sensors();
  const int feat_dim = n_sensors + n_sensors * spec.channel_count();

  std::vector<int> adims{feat_dim};
  adims.insert(adims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  adims.push_back(n_sensors);
  std::vector<int> cdims{feat_dim + n_sensors};
  cdims.insert(cdims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  cdims.push_back(1);

  Network actor = make_network(adims, OutputActivation::tanh_squash, rng,
                               /*small_final_init=*/true);
  Network critic = make_network(cdims, OutputActivation::identity, rng);
  Network target_actor = actor;
  Network target_critic = critic;
  AdamState adam_actor = make_adam(actor, config.lr_actor, config.lr_decay);
  AdamState adam_critic = make_adam(critic, config.lr_critic, config.lr_decay);
  ReplayMemory<DdpgTransition> replay(config.replay_capacity);
  ExplorationSchedule sched{config.eps_init, config.xi_init, config.eps_decay,
                            config.xi_decay, config.eps_min, config.xi_min};
  double sigma = config.noise_sigma_init;

  DdpgTrainResult result;
  const int stage1_end = config.loose_episodes;
  const int stage2_end = config.loose_episodes + config.tight_episodes;

  for (int episode = 1; episode <= config.total_episodes(); ++episode) {
    const auto wall_start = std::chrono::steady_clock::now();
    adam_actor.episode = episode - 1;
    adam_critic.episode = episode - 1;
    SystemState s = initial_state(spec, rng);
    double reward_sum = 0.0;
    double actor_loss_sum = 0.0, critic_loss_sum = 0.0;
    long loss_count = 0;

    for (int t = 0; t < config.steps_per_episode; ++t) {
      SelectedVirtual sel;
      if (episode <= stage1_end) {
        sel = se_action_ddpg(actor, s, sched, sigma, SeStage::loose, spec, rng);
      } else if (episode <= stage2_end) {
        sel = se_action_ddpg(actor, s, sched, sigma, SeStage::tight, spec, rng);
      } else {
        Vector actor_out = forward(actor, state_to_input(s, spec));
        sel = {explore_from(actor_out, sigma, rng), std::nullopt, actor_out};
      }
      ScheduleAction a = map_virtual_to_schedule(sel.executed, spec.channel_count());
      auto [s_next, r] = step(spec, s, a, rng);
      replay.push(DdpgTransition{s, sel.executed, sel.se, sel.actor_out, r, s_next});

      if (replay.size() >= static_cast<std::size_t>(config.batch_size)) {
        auto batch = replay.sample(static_cast<std::size_t>(config.batch_size), rng);
        LossResult closs = critic_loss_and_grad(batch, critic, target_critic,
                                                target_actor, spec, config.alpha1);
        adam_step(adam_critic, critic, closs.grads);
        LossResult aloss = actor_loss_and_grad(batch, actor, critic, spec, config.alpha2,
                                               config.literal_actor_gradient);
        adam_step(adam_actor, actor, aloss.grads);
        critic_loss_sum += closs.loss;
        actor_loss_sum += aloss.loss;
        ++loss_count;
      }
      sync_target(target_actor, actor, config.delta);
      sync_target(target_critic, critic, config.delta);
      sigma = std::max(sigma * config.noise_sigma_decay, config.noise_sigma_min);
      sched.decay_step();
      reward_sum += r;
      s = std::move(s_next);
    }

    const auto wall_end = std::chrono::steady_clock::now();
    DdpgEpisodeLog row;
    row.episode = episode;
    row.steps = config.steps_per_episode;
    row.epsilon = sched.epsilon;
    row.xi = sched.xi;
    row.avg_sum_mse = -reward_sum / config.steps_per_episode;
    row.actor_loss_mean = loss_count > 0 ? actor_loss_sum / loss_count : 0.0;
    row.critic_loss_mean = loss_count > 0 ? critic_loss_sum / loss_count : 0.0;
    row.loss_mean = row.actor_loss_mean + row.critic_loss_mean;
    row.noise_sigma = sigma;
    row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(wall_end -
                                                                        wall_start)
                      .count();
    result.log.push_back(row);

    if (on_stage) {
      if (config.loose_episodes > 0 && episode == stage1_end) {
        on_stage("loose", actor, critic);
      }
      if (config.tight_episodes > 0 && episode == stage2_end) {
        on_stage("tight", actor, critic);
      }
    }
  }
  if (on_stage) on_stage("final", actor, critic);
  result.actor = std::move(actor);
  result.critic = std::move(critic);
  return result;
}

}  // namespace sensched
