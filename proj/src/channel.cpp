#include "sensched/channel.hpp"

#include "sensched/errors.hpp"

namespace sensched {

Vector default_drop_probabilities(int states) {
  if (states < 1) throw DomainError("default_drop_probabilities: need at least one state");
  if (states == 5) {
    Vector p(5);
    p << 0.2, 0.15, 0.1, 0.05, 0.01;
    return p;
  }
  if (states == 1) return Vector::Constant(1, 0.2);
  Vector p(states);
  for (int i = 0; i < states; ++i) {
    p(i) = 0.2 - (0.2 - 0.01) * static_cast<double>(i) / (states - 1);
  }
  return p;
}

ChannelModel make_channel_model(int sensors, int channels, Vector drop_prob,
                                Matrix dist) {
  if (sensors < 1 || channels < 1) {
    throw DomainError("make_channel_model: sensor and channel counts must be positive");
  }
  if (channels > sensors) {
    throw DomainError("make_channel_model: more channels than sensors");
  }
  const int states = static_cast<int>(drop_prob.size());
  if (states < 1) throw DomainError("make_channel_model: empty drop probability vector");
  for (int i = 0; i < states; ++i) {
    if (!(drop_prob(i) >= 0.0 && drop_prob(i) <= 1.0)) {
      throw DomainError("make_channel_model: drop probabilities must lie in [0,1]");
    }
    if (i > 0 && drop_prob(i) > drop_prob(i - 1)) {
      throw DomainError("make_channel_model: drop probabilities must be nonincreasing");
    }
  }
  if (dist.rows() != static_cast<long>(sensors) * channels || dist.cols() != states) {
    throw ShapeError("make_channel_model: distribution table must be (N*M) x states");
  }
  for (long r = 0; r < dist.rows(); ++r) {
    if (dist.row(r).minCoeff() < 0.0) {
      throw DomainError("make_channel_model: negative probability entry");
    }
    if (std::abs(dist.row(r).sum() - 1.0) > 1e-12) {
      throw DomainError("make_channel_model: channel-state pmf does not sum to 1");
    }
  }

  ChannelModel model;
  model.sensors = sensors;
  model.channels = channels;
  model.states = states;
  model.drop_prob = std::move(drop_prob);
  model.cumulative.resize(dist.rows(), states);
  for (long r = 0; r < dist.rows(); ++r) {
    double acc = 0.0;
    for (int i = 0; i < states; ++i) {
      acc += dist(r, i);
      model.cumulative(r, i) = acc;
    }
    model.cumulative(r, states - 1) = 1.0;  // absorb round-off in the last bin
  }
  model.dist = std::move(dist);
  return model;
}

namespace {

// Inverse-CDF lookup over a precomputed cumulative row. Boundary ties go to
// the lower state; zero-probability states are never selected.
int sample_state(const ChannelModel& model, long row, double u) {
  for (int i = 0; i < model.states; ++i) {
    if (model.dist(row, i) > 0.0 && u <= model.cumulative(row, i)) return i + 1;
  }
  for (int i = model.states - 1; i >= 0; --i) {
    if (model.dist(row, i) > 0.0) return i + 1;
  }
  return model.states;  // unreachable for a valid pmf
}

}  // namespace

Eigen::MatrixXi sample_channel_matrix(const ChannelModel& model, Rng& rng) {
  Eigen::MatrixXi H(model.sensors, model.channels);
  for (int n = 0; n < model.sensors; ++n) {
    for (int m = 0; m < model.channels; ++m) {
      long row = static_cast<long>(n) * model.channels + m;
      H(n, m) = sample_state(model, row, uniform_unit(rng));
    }
  }
  return H;
}

bool packet_delivered(const ChannelModel& model, int h, Rng& rng) {
  if (h < 1 || h > model.states) {
    throw DomainError("packet_delivered: channel state out of range");
  }
  return uniform_unit(rng) < 1.0 - model.drop_prob(h - 1);
}

}  // namespace sensched
