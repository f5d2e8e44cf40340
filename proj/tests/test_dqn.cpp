#include "doctest.h"

#include <set>

#include "sensched/dqn.hpp"
#include "sensched/errors.hpp"
#include "sensched/experiment.hpp"
#include "sensched/replay.hpp"

using namespace sensched;

namespace {

MdpSpec small_spec(std::uint64_t seed, int sensors, int channels, int h_bar,
                   int tau_cap) {
  GeneratedSystem sys =
      generate_system(seed, sensors, channels, h_bar, default_drop_probabilities(h_bar));
  return make_mdp_spec(sys.processes, sys.channels, 0.95, tau_cap);
}

// Q-network whose output is a constant vector (zero weights, fixed biases),
// so the greedy action is state-independent and fully known.
Network bias_net(const MdpSpec& spec, const Vector& biases, Rng& rng) {
  int in = spec.sensors() + spec.sensors() * spec.channel_count();
  Network net = make_network({in, static_cast<int>(biases.size())},
                             OutputActivation::identity, rng);
  net.weights[0].setZero();
  net.biases[0] = biases;
  return net;
}

ScheduleAction action_of(std::initializer_list<int> assign) {
  ScheduleAction a;
  a.assign = Eigen::VectorXi(static_cast<long>(assign.size()));
  int i = 0;
  for (int v : assign) a.assign(i++) = v;
  return a;
}

SystemState state_of(std::initializer_list<int> aoi,
                     std::initializer_list<int> csi_rowmajor, int channels) {
  SystemState s;
  s.aoi = Eigen::VectorXi(static_cast<long>(aoi.size()));
  int i = 0;
  for (int v : aoi) s.aoi(i++) = v;
  s.csi = Eigen::MatrixXi(static_cast<long>(aoi.size()), channels);
  i = 0;
  for (int v : csi_rowmajor) {
    s.csi(i / channels, i % channels) = v;
    ++i;
  }
  return s;
}

}  // namespace

TEST_CASE("state_to_input normalizes AoI and channel states") {
  MdpSpec spec = small_spec(1, 2, 1, 5, 100);
  Vector x = state_to_input(state_of({3, 7}, {2, 5}, 1), spec);
  REQUIRE(x.size() == 4);
  CHECK(x(0) == doctest::Approx(0.03));
  CHECK(x(1) == doctest::Approx(0.07));
  CHECK(x(2) == doctest::Approx(0.25));
  CHECK(x(3) == doctest::Approx(1.0));

  Vector fresh = state_to_input(state_of({1, 1}, {1, 1}, 1), spec);
  CHECK(fresh(0) == doctest::Approx(0.01));
  CHECK(fresh(2) == 0.0);
  Vector capped = state_to_input(state_of({100, 100}, {5, 5}, 1), spec);
  CHECK(capped(0) == 1.0);
  CHECK(capped(3) == 1.0);
}

TEST_CASE("greedy_action: tie-break, one-hot, and exhaustive-scan agreement") {
  MdpSpec spec = small_spec(2, 3, 2, 5, 50);
  ActionSpace space = enumerate_actions(3, 2);
  Rng rng(3);

  Network flat = bias_net(spec, Vector::Zero(space.size()), rng);
  SystemState s = initial_state(spec, rng);
  CHECK(greedy_action(flat, s, spec, space) == space[0]);

  for (int j : {0, 2, 5}) {
    Vector b = Vector::Zero(space.size());
    b(j) = 7.0;
    Network hot = bias_net(spec, b, rng);
    CHECK(greedy_action(hot, s, spec, space) == space[j]);
  }

  Network random_net = make_network({spec.sensors() + spec.sensors() * 2, 16,
                                     space.size()},
                                    OutputActivation::identity, rng);
  for (int trial = 0; trial < 20; ++trial) {
    SystemState t = initial_state(spec, rng);
    Vector q = forward(random_net, state_to_input(t, spec));
    int best = 0;
    for (int i = 1; i < space.size(); ++i) {
      if (q(i) > q(best)) best = i;
    }
    CHECK(greedy_action(random_net, t, spec, space) == space[best]);
  }
}

TEST_CASE("se_channel_candidates follows the inference rules") {
  MdpSpec spec = small_spec(4, 2, 1, 5, 50);
  ScheduleAction greedy = action_of({0, 1});
  Rng rng(5);

  SUBCASE("fresh AoI falls back to the greedy component") {
    // Both sensors at AoI 1: no decremented state exists.
    SystemState s = state_of({1, 1}, {3, 3}, 1);
    auto propose = [](const SystemState&) { return action_of({1, 0}); };
    Eigen::VectorXi cand = se_channel_candidates(propose, s, 1.0, spec, greedy, rng);
    CHECK(cand(0) == greedy.assign(0));
    CHECK(cand(1) == greedy.assign(1));
  }

  SUBCASE("idle proposal falls back to the greedy component") {
    SystemState s = state_of({4, 4}, {3, 3}, 1);
    auto propose = [](const SystemState&) { return action_of({0, 1}); };
    Eigen::VectorXi cand = se_channel_candidates(propose, s, 1.0, spec, greedy, rng);
    CHECK(cand(0) == greedy.assign(0));  // proposal idles sensor 1
    CHECK(cand(1) == 1);                 // proposal schedules sensor 2
  }

  SUBCASE("proposal is kept when no better channel exists") {
    // Single channel: the better-channel set is always empty, xi irrelevant.
    SystemState s = state_of({4, 4}, {3, 3}, 1);
    auto propose = [](const SystemState&) { return action_of({1, 0}); };
    Eigen::VectorXi cand = se_channel_candidates(propose, s, 1.0, spec, greedy, rng);
    CHECK(cand(0) == 1);
  }

  SUBCASE("xi moves the candidate to a strictly better channel") {
    MdpSpec spec2 = small_spec(4, 2, 2, 5, 50);
    // Channel 2 is strictly better than the proposed channel 1 for sensor 1.
    SystemState s = state_of({4, 4}, {2, 5, 3, 3}, 2);
    auto propose = [](const SystemState&) { return action_of({1, 2}); };
    Eigen::VectorXi with_xi =
        se_channel_candidates(propose, s, 1.0, spec2, action_of({1, 2}), rng);
    CHECK(with_xi(0) == 2);  // the only strictly better channel
    Eigen::VectorXi without_xi =
        se_channel_candidates(propose, s, 0.0, spec2, action_of({1, 2}), rng);
    CHECK(without_xi(0) == 1);
  }

  SUBCASE("proposals are evaluated at the AoI-decremented state") {
    SystemState s = state_of({4, 7}, {3, 3}, 1);
    std::vector<Eigen::VectorXi> seen;
    auto propose = [&](const SystemState& st) {
      seen.push_back(st.aoi);
      return action_of({1, 0});
    };
    se_channel_candidates(propose, s, 0.0, spec, greedy, rng);
    REQUIRE(seen.size() == 2);
    CHECK(seen[0](0) == 3);  // sensor 1 decremented
    CHECK(seen[0](1) == 7);
    CHECK(seen[1](0) == 4);
    CHECK(seen[1](1) == 6);  // sensor 2 decremented
  }
}

TEST_CASE("complete_loose_candidate matches unused channels to idle sensors") {
  MdpSpec spec = small_spec(6, 3, 2, 5, 50);
  Rng rng(7);

  Eigen::VectorXi duplicate(3);
  duplicate << 1, 1, 0;
  CHECK_FALSE(complete_loose_candidate(duplicate, spec, rng).has_value());

  Eigen::VectorXi partial(3);
  partial << 0, 2, 0;  // channel 1 unused, sensors 1 and 3 idle
  for (int trial = 0; trial < 50; ++trial) {
    auto completed = complete_loose_candidate(partial, spec, rng);
    REQUIRE(completed.has_value());
    CHECK(satisfies_schedule_constraint(*completed, 3, 2));
    CHECK(completed->assign(1) == 2);
  }
}

TEST_CASE("apply_tight_check keeps consistent candidates and reverts the rest") {
  MdpSpec spec = small_spec(8, 2, 1, 5, 50);
  ScheduleAction greedy = action_of({0, 1});
  SystemState s = state_of({4, 4}, {3, 3}, 1);

  SUBCASE("agreement keeps the candidate") {
    Eigen::VectorXi cand(2);
    cand << 1, 0;
    auto propose = [](const SystemState&) { return action_of({1, 0}); };
    auto result = apply_tight_check(propose, cand, s, spec, greedy);
    REQUIRE(result.has_value());
    CHECK(*result == action_of({1, 0}));
  }

  SUBCASE("disagreement reverts to the greedy component") {
    Eigen::VectorXi cand(2);
    cand << 1, 0;
    std::vector<Eigen::MatrixXi> seen;
    auto propose = [&](const SystemState& st) {
      seen.push_back(st.csi);
      return action_of({0, 1});  // never assigns channel 1 to sensor 1
    };
    // greedy idles sensor 1, so the revert leaves the channel unused and the
    // exact constraint rejects the candidate.
    auto result = apply_tight_check(propose, cand, s, spec, greedy);
    REQUIRE(seen.size() == 1);
    CHECK(seen[0](0, 0) == 2);  // checked at the channel-decremented state
    CHECK_FALSE(result.has_value());
  }

  SUBCASE("a revert can repair a duplicate-channel candidate") {
    MdpSpec spec32 = small_spec(8, 3, 2, 5, 50);
    SystemState st;
    st.aoi = Eigen::VectorXi(3);
    st.aoi << 4, 4, 4;
    st.csi = Eigen::MatrixXi(3, 2);
    st.csi << 3, 3, 1, 3, 3, 3;  // sensor 2's channel-1 state is at the bottom
    Eigen::VectorXi cand(3);
    cand << 1, 1, 0;  // both want channel 1
    ScheduleAction g32 = action_of({2, 0, 0});
    auto propose = [](const SystemState&) { return action_of({0, 1, 0}); };
    // Sensor 1's check fails (reverts to greedy's channel 2); sensor 2's is
    // vacuous at the bottom state and keeps channel 1.
    auto result = apply_tight_check(propose, cand, st, spec32, g32);
    REQUIRE(result.has_value());
    CHECK(*result == action_of({2, 1, 0}));
  }

  SUBCASE("bottom channel state skips the check") {
    SystemState bottom = state_of({4, 4}, {1, 3}, 1);
    Eigen::VectorXi cand(2);
    cand << 1, 0;
    int calls = 0;
    auto propose = [&](const SystemState&) {
      ++calls;
      return action_of({0, 1});
    };
    auto result = apply_tight_check(propose, cand, bottom, spec, greedy);
    CHECK(calls == 0);
    REQUIRE(result.has_value());
    CHECK(*result == action_of({1, 0}));
  }

  SUBCASE("an unconstrainted result is rejected") {
    Eigen::VectorXi cand(2);
    cand << 0, 0;
    auto propose = [](const SystemState&) { return action_of({1, 0}); };
    CHECK_FALSE(apply_tight_check(propose, cand, s, spec, action_of({0, 0})).has_value());
  }
}

TEST_CASE("selection invariants over random nets and states") {
  MdpSpec spec = small_spec(9, 3, 2, 5, 50);
  ActionSpace space = enumerate_actions(3, 2);
  Rng rng(11);
  Network net = make_network({spec.sensors() * 3, 24, space.size()},
                             OutputActivation::identity, rng);
  ExplorationSchedule sched{0.3, 0.7, 0.999, 0.999, 0.01, 0.01};
  for (int trial = 0; trial < 2000; ++trial) {
    SystemState s = initial_state(spec, rng);
    s.aoi(0) = 1 + uniform_below(rng, 50);
    s.aoi(1) = 1 + uniform_below(rng, 50);
    s.aoi(2) = 1 + uniform_below(rng, 50);
    SelectedAction loose = loose_se_action(net, s, sched, spec, space, rng);
    SelectedAction tight = tight_se_action(net, s, sched, spec, space, rng);
    SelectedAction greedy = epsilon_greedy_action(net, s, sched, spec, space, rng);
    for (const SelectedAction* sel : {&loose, &tight, &greedy}) {
      CHECK(satisfies_schedule_constraint(sel->executed, 3, 2));
      if (sel->se.has_value()) CHECK(*sel->se == sel->executed);
    }
    CHECK_FALSE(greedy.se.has_value());
  }
}

TEST_CASE("pure exploration returns uniform valid actions without annotations") {
  MdpSpec spec = small_spec(10, 2, 1, 5, 50);
  ActionSpace space = enumerate_actions(2, 1);
  Rng rng(13);
  Network net = make_network({4, 8, 2}, OutputActivation::identity, rng);
  ExplorationSchedule sched{1.0, 1.0, 0.999, 0.999, 0.01, 0.01};
  int first = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    SystemState s = initial_state(spec, rng);
    SelectedAction sel = loose_se_action(net, s, sched, spec, space, rng);
    CHECK_FALSE(sel.se.has_value());
    first += sel.executed == space[0] ? 1 : 0;
  }
  CHECK(std::abs(static_cast<double>(first) / trials - 0.5) <= 0.02);
}

TEST_CASE("se loss degenerates to the TD loss") {
  MdpSpec spec = small_spec(14, 2, 1, 3, 20);
  ActionSpace space = enumerate_actions(2, 1);
  Rng rng(15);
  Network qnet = make_network({4, 12, 2}, OutputActivation::identity, rng);
  Network target = make_network({4, 12, 2}, OutputActivation::identity, rng);

  std::vector<TransitionRecord> records;
  SystemState s = initial_state(spec, rng);
  for (int i = 0; i < 16; ++i) {
    TransitionRecord rec;
    rec.s = s;
    rec.executed = space[uniform_below(rng, 2)];
    rec.greedy = space[uniform_below(rng, 2)];
    if (i % 3 == 0) rec.se = rec.executed;
    auto [next, r] = step(spec, s, rec.executed, rng);
    rec.r = r;
    rec.s_next = next;
    records.push_back(rec);
    s = next;
  }
  std::vector<const TransitionRecord*> batch;
  for (const auto& r : records) batch.push_back(&r);

  // Independent TD-only oracle.
  double td_loss = 0.0;
  for (const auto* rec : batch) {
    Vector qn = forward(target, state_to_input(rec->s_next, spec));
    double y = rec->r + spec.gamma * qn.maxCoeff();
    double td = y - forward(qnet, state_to_input(rec->s, spec))(space.index_of(rec->executed));
    td_loss += td * td;
  }
  td_loss /= static_cast<double>(batch.size());

  LossResult alpha_one = se_loss_and_grad(batch, qnet, target, spec, space, 1.0);
  CHECK(std::abs(alpha_one.loss - td_loss) <= 1e-12);

  // Without SE annotations alpha1 is irrelevant.
  std::vector<TransitionRecord> plain = records;
  for (auto& r : plain) r.se.reset();
  std::vector<const TransitionRecord*> plain_batch;
  for (const auto& r : plain) plain_batch.push_back(&r);
  LossResult l1 = se_loss_and_grad(plain_batch, qnet, target, spec, space, 0.25);
  LossResult l2 = se_loss_and_grad(plain_batch, qnet, target, spec, space, 0.9);
  CHECK(l1.loss == l2.loss);
  CHECK(std::abs(l1.loss - td_loss) <= 1e-12);
  CHECK_THROWS_AS(se_loss_and_grad({}, qnet, target, spec, space, 0.5), DomainError);
}

TEST_CASE("replay ring evicts the oldest records and samples distinct ones") {
  ReplayMemory<int> replay(10);
  for (int i = 0; i < 13; ++i) replay.push(i);
  CHECK(replay.size() == 10);
  CHECK(replay[0] == 3);  // 0..2 overwritten
  CHECK(replay[9] == 12);

  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    auto batch = replay.sample(4, rng);
    std::set<int> unique;
    for (const int* p : batch) {
      CHECK(*p >= 3);
      CHECK(*p <= 12);
      unique.insert(*p);
    }
    CHECK(unique.size() == 4);
  }
  CHECK_THROWS_AS(replay.sample(11, rng), DomainError);
}

TEST_CASE("exploration schedule decays multiplicatively to the floor") {
  ExplorationSchedule sched{1.0, 1.0, 0.999, 0.999, 0.01, 0.01};
  for (int k = 1; k <= 6000; ++k) {
    sched.decay_step();
    double expect = std::max(std::pow(0.999, k), 0.01);
    CHECK(sched.epsilon == doctest::Approx(expect).epsilon(1e-9));
  }
  CHECK(sched.epsilon == 0.01);
}

TEST_CASE("seeded training runs are reproducible") {
  MdpSpec spec = small_spec(18, 2, 1, 2, 10);
  DqnConfig config;
  config.loose_episodes = 1;
  config.tight_episodes = 1;
  config.conventional_episodes = 1;
  config.steps_per_episode = 40;
  config.batch_size = 8;
  config.replay_capacity = 64;
  config.hidden_dims = {12};
  config.target_sync_period = 20;

  DqnTrainResult a = train_se_dqn(spec, config, 99);
  DqnTrainResult b = train_se_dqn(spec, config, 99);
  CHECK(a.qnet == b.qnet);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].avg_sum_mse == b.log[i].avg_sum_mse);
    CHECK(a.log[i].loss_mean == b.log[i].loss_mean);
    CHECK(a.log[i].epsilon == b.log[i].epsilon);
    CHECK(a.log[i].xi == b.log[i].xi);
  }
}

TEST_CASE("conventional-only schedules never form SE records") {
  // With zero SE episodes the loss cannot depend on alpha1: identical runs.
  MdpSpec spec = small_spec(19, 2, 1, 2, 10);
  DqnConfig config;
  config.loose_episodes = 0;
  config.tight_episodes = 0;
  config.conventional_episodes = 2;
  config.steps_per_episode = 40;
  config.batch_size = 8;
  config.replay_capacity = 64;
  config.hidden_dims = {12};

  DqnConfig half = config;
  half.alpha1 = 0.5;
  DqnConfig one = config;
  one.alpha1 = 1.0;
  DqnTrainResult a = train_se_dqn(spec, half, 7);
  DqnTrainResult b = train_se_dqn(spec, one, 7);
  CHECK(a.qnet == b.qnet);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss_mean == b.log[i].loss_mean);
  }
}
