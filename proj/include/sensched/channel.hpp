#pragma once

#include <Eigen/Dense>

#include "sensched/estimation.hpp"
#include "sensched/rng.hpp"

namespace sensched {

/// i.i.d. block-fading channel bank: N sensors, M channels (M <= N),
/// `states` quantized channel states per link, per-state packet drop
/// probabilities (nonincreasing in the state index), and one categorical
/// state distribution per (sensor, channel) pair.
///
/// Immutable after construction; the random source is always supplied by
/// the caller.
struct ChannelModel {
  int sensors = 0;     // N
  int channels = 0;    // M
  int states = 0;      // number of quantized channel states
  Vector drop_prob;    // length `states`, p_1 >= p_2 >= ... >= p_states
  Matrix dist;         // (N*M) x states; row n*M+m is the pmf for pair (n,m)
  Matrix cumulative;   // running row sums of dist, final column forced to 1
};

/// The evaluated five-state defaults (0.2, 0.15, 0.1, 0.05, 0.01); other
/// sizes interpolate evenly from 0.2 down to 0.01.
Vector default_drop_probabilities(int states);

/// Validates invariants (pmf rows sum to 1 within 1e-12, nonnegative
/// entries, nonincreasing drop probabilities, M <= N) and precomputes the
/// cumulative tables used for inverse-CDF sampling.
ChannelModel make_channel_model(int sensors, int channels, Vector drop_prob,
                                Matrix dist);

/// Draws a fresh N x M channel-state matrix, one independent categorical
/// sample per pair (block fading: one draw per decision slot). Entries are
/// in {1, ..., states}.
Eigen::MatrixXi sample_channel_matrix(const ChannelModel& model, Rng& rng);

/// Bernoulli packet outcome at channel state h: true with probability
/// 1 - drop_prob[h]. Throws DomainError for h outside {1..states}.
bool packet_delivered(const ChannelModel& model, int h, Rng& rng);

}  // namespace sensched
