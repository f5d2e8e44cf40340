#pragma once

#include <Eigen/Dense>

namespace sensched {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One sensor's LTI process: x' = A x + w, y = C x + v with
/// w ~ N(0, W), v ~ N(0, V). P_bar is the steady-state error covariance of
/// the sensor's local Kalman filter, cached at construction.
struct ProcessModel {
  Matrix A;
  Matrix C;
  Matrix W;
  Matrix V;
  Matrix P_bar;
};

/// Largest eigenvalue magnitude of a square matrix.
double spectral_radius(const Matrix& A);

/// Solves the stationary filtered Riccati equation
///   P = S - S C^T (C S C^T + V)^{-1} C S,  S = A P A^T + W
/// by plain fixed-point iteration from X0 = W (tolerance 1e-9, at most
/// 10000 sweeps). The result is symmetrized.
///
/// Throws NonConvergence when the iteration exhausts its budget or produces
/// non-finite entries, which signals an unstabilizable or ill-conditioned
/// system draw; callers generating random systems should redraw.
Matrix solve_steady_state_covariance(const Matrix& A, const Matrix& C,
                                     const Matrix& W, const Matrix& V);

/// Builds a ProcessModel, validating shapes and computing P_bar.
/// (A, C) observable and (A, sqrt(W)) controllable are caller-asserted;
/// only numeric convergence is checked here.
ProcessModel make_process_model(Matrix A, Matrix C, Matrix W, Matrix V);

/// Remote estimation error covariance after tau slots without a packet:
/// applies X -> A X A^T + W exactly tau times to P_bar. tau >= 1.
Matrix error_covariance_at_aoi(const ProcessModel& model, int tau);

/// Trace of the remote error covariance with the AoI saturated at tau_cap:
/// Tr(f^{min(tau, tau_cap)}(P_bar)).
double mse_at_aoi(const ProcessModel& model, int tau, int tau_cap);

/// Precomputed mse_at_aoi(model, tau, tau_cap) for tau = 1..tau_cap.
/// Entry tau-1 holds the value at AoI tau.
Vector mse_table(const ProcessModel& model, int tau_cap);

}  // namespace sensched
