#include "sensched/gradcheck.hpp"

#include <cmath>

#include "sensched/ddpg.hpp"
#include "sensched/dqn.hpp"
#include "sensched/experiment.hpp"

namespace sensched {

double directional_gradient_error(const std::function<double(const Vector&)>& f,
                                  const Vector& params, const Vector& analytic_grad,
                                  int directions, double eps, Rng& rng) {
  double worst = 0.0;
  for (int k = 0; k < directions; ++k) {
    Vector d(params.size());
    for (long i = 0; i < d.size(); ++i) d(i) = gaussian(rng);
    d /= d.norm();
    double fd = (f(params + eps * d) - f(params - eps * d)) / (2.0 * eps);
    double analytic = analytic_grad.dot(d);
    double scale = std::max({1e-12, std::abs(fd), std::abs(analytic)});
    worst = std::max(worst, std::abs(fd - analytic) / scale);
  }
  return worst;
}

namespace {

// Shared synthetic fixture: a small generated instance plus a short random
// rollout providing realistic states, rewards and successors.
struct Fixture {
  MdpSpec spec;
  ActionSpace space;
  std::vector<SystemState> states;  // length batch+1
  std::vector<double> rewards;      // reward of states[i]
};

Fixture make_fixture(std::uint64_t seed, int batch) {
  Fixture fx;
  GeneratedSystem sys =
      generate_system(seed, 3, 2, 3, default_drop_probabilities(3));
  fx.spec = make_mdp_spec(sys.processes, sys.channels, 0.95, 15);
  fx.space = enumerate_actions(3, 2);
  Rng rng(seed + 1);
  SystemState s = initial_state(fx.spec, rng);
  for (int i = 0; i <= batch; ++i) {
    fx.states.push_back(s);
    fx.rewards.push_back(reward(fx.spec, s));
    auto [next, r] = step(fx.spec, s,
                          fx.space[uniform_below(rng, fx.space.size())], rng);
    (void)r;
    s = std::move(next);
  }
  return fx;
}

}  // namespace

std::vector<LossGradCheck> run_loss_gradient_checks(std::uint64_t seed, int directions,
                                                    double tol) {
  constexpr int kBatch = 12;
  constexpr double kEps = 1e-5;
  const std::vector<int> hidden = {16, 16};
  Fixture fx = make_fixture(seed, kBatch);
  Rng rng(seed + 2);
  std::vector<LossGradCheck> out;

  // Q-network composite loss.
  {
    std::vector<int> dims{fx.spec.sensors() + fx.spec.sensors() * fx.spec.channel_count()};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(fx.space.size());
    Network qnet = make_network(dims, OutputActivation::identity, rng);
    Network target = make_network(dims, OutputActivation::identity, rng);

    std::vector<TransitionRecord> records;
    for (int i = 0; i < kBatch; ++i) {
      TransitionRecord rec;
      rec.s = fx.states[static_cast<std::size_t>(i)];
      rec.executed = fx.space[uniform_below(rng, fx.space.size())];
      rec.greedy = fx.space[uniform_below(rng, fx.space.size())];
      if (i % 2 == 0) rec.se = rec.executed;  // SE present only when executed
      rec.r = fx.rewards[static_cast<std::size_t>(i)];
      rec.s_next = fx.states[static_cast<std::size_t>(i) + 1];
      records.push_back(std::move(rec));
    }
    std::vector<const TransitionRecord*> batch;
    for (const auto& r : records) batch.push_back(&r);

    LossResult at = se_loss_and_grad(batch, qnet, target, fx.spec, fx.space, 0.5);
    auto loss_at = [&](const Vector& p) {
      Network probe = qnet;
      set_parameters(probe, p);
      return se_loss_and_grad(batch, probe, target, fx.spec, fx.space, 0.5).loss;
    };
    double err = directional_gradient_error(loss_at, flatten_parameters(qnet),
                                            flatten(at.grads, qnet), directions, kEps,
                                            rng);
    out.push_back({"se_dqn_loss", err, directions, err <= tol});
  }

  // Critic and actor losses share one set of DDPG records.
  {
    const int n = fx.spec.sensors();
    std::vector<int> adims{n + n * fx.spec.channel_count()};
    adims.insert(adims.end(), hidden.begin(), hidden.end());
    adims.push_back(n);
    std::vector<int> cdims{2 * n + n * fx.spec.channel_count()};
    cdims.insert(cdims.end(), hidden.begin(), hidden.end());
    cdims.push_back(1);
    Network actor = make_network(adims, OutputActivation::tanh_squash, rng, true);
    Network critic = make_network(cdims, OutputActivation::identity, rng);
    Network target_actor = make_network(adims, OutputActivation::tanh_squash, rng, true);
    Network target_critic = make_network(cdims, OutputActivation::identity, rng);

    std::vector<DdpgTransition> records;
    for (int i = 0; i < kBatch; ++i) {
      DdpgTransition rec;
      rec.s = fx.states[static_cast<std::size_t>(i)];
      if (i % 2 == 0) {
        rec.v = canonical_virtual(fx.space[uniform_below(rng, fx.space.size())],
                                  fx.spec.channel_count());
        rec.v_se = rec.v;
      } else {
        rec.v = Vector::NullaryExpr(n, [&](Eigen::Index) {
          return uniform_range(rng, -1.0, 1.0);
        });
      }
      rec.v_actor = Vector::NullaryExpr(n, [&](Eigen::Index) {
        return uniform_range(rng, -1.0, 1.0);
      });
      rec.r = fx.rewards[static_cast<std::size_t>(i)];
      rec.s_next = fx.states[static_cast<std::size_t>(i) + 1];
      records.push_back(std::move(rec));
    }
    std::vector<const DdpgTransition*> batch;
    for (const auto& r : records) batch.push_back(&r);

    LossResult at =
        critic_loss_and_grad(batch, critic, target_critic, target_actor, fx.spec, 0.5);
    auto critic_loss_at = [&](const Vector& p) {
      Network probe = critic;
      set_parameters(probe, p);
      return critic_loss_and_grad(batch, probe, target_critic, target_actor, fx.spec,
                                  0.5)
          .loss;
    };
    double cerr = directional_gradient_error(critic_loss_at, flatten_parameters(critic),
                                             flatten(at.grads, critic), directions,
                                             kEps, rng);
    out.push_back({"ddpg_critic_loss", cerr, directions, cerr <= tol});

    LossResult aat = actor_loss_and_grad(batch, actor, critic, fx.spec, 0.9, false);
    auto actor_loss_at = [&](const Vector& p) {
      Network probe = actor;
      set_parameters(probe, p);
      return actor_loss_and_grad(batch, probe, critic, fx.spec, 0.9, false).loss;
    };
    double aerr = directional_gradient_error(actor_loss_at, flatten_parameters(actor),
                                             flatten(aat.grads, actor), directions,
                                             kEps, rng);
    out.push_back({"se_ddpg_actor_loss", aerr, directions, aerr <= tol});
  }
  return out;
}

}  // namespace sensched
