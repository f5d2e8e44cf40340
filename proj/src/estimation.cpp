#include "sensched/estimation.hpp"

#include <Eigen/Eigenvalues>

#include "sensched/errors.hpp"

namespace sensched {

namespace {

constexpr double kRiccatiTol = 1e-9;
constexpr int kRiccatiMaxIter = 10000;

Matrix symmetrized(const Matrix& X) { return 0.5 * (X + X.transpose()); }

// One application of the filtered Riccati map, symmetrized to suppress
// round-off drift.
Matrix riccati_map(const Matrix& X, const Matrix& A, const Matrix& C,
                   const Matrix& W, const Matrix& V) {
  Matrix S = symmetrized(A * X * A.transpose() + W);
  Matrix innov = C * S * C.transpose() + V;
  Matrix gain = innov.ldlt().solve(C * S);  // (C S C^T + V)^{-1} C S
  return symmetrized(S - S * C.transpose() * gain);
}

}  // namespace

double spectral_radius(const Matrix& A) {
  Eigen::EigenSolver<Matrix> eig(A, /*computeEigenvectors=*/false);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix solve_steady_state_covariance(const Matrix& A, const Matrix& C,
                                     const Matrix& W, const Matrix& V) {
  const auto l = A.rows();
  if (A.cols() != l || W.rows() != l || W.cols() != l || C.cols() != l ||
      V.rows() != C.rows() || V.cols() != C.rows()) {
    throw ShapeError("solve_steady_state_covariance: inconsistent matrix shapes");
  }
  Matrix X = W;
  for (int it = 0; it < kRiccatiMaxIter; ++it) {
    Matrix next = riccati_map(X, A, C, W, V);
    if (!next.allFinite()) {
      throw NonConvergence("steady-state covariance iteration produced non-finite entries");
    }
    double diff = (next - X).norm();
    X = next;
    if (diff <= kRiccatiTol) return X;
  }
  throw NonConvergence("steady-state covariance iteration exceeded 10000 sweeps");
}

ProcessModel make_process_model(Matrix A, Matrix C, Matrix W, Matrix V) {
  Matrix P_bar = solve_steady_state_covariance(A, C, W, V);
  return ProcessModel{std::move(A), std::move(C), std::move(W), std::move(V),
                      std::move(P_bar)};
}

Matrix error_covariance_at_aoi(const ProcessModel& model, int tau) {
  if (tau < 1) throw DomainError("error_covariance_at_aoi: AoI must be >= 1");
  Matrix X = model.P_bar;
  for (int t = 0; t < tau; ++t) {
    X = symmetrized(model.A * X * model.A.transpose() + model.W);
  }
  return X;
}

double mse_at_aoi(const ProcessModel& model, int tau, int tau_cap) {
  if (tau < 1) throw DomainError("mse_at_aoi: AoI must be >= 1");
  if (tau_cap < 1) throw DomainError("mse_at_aoi: AoI cap must be >= 1");
  return error_covariance_at_aoi(model, std::min(tau, tau_cap)).trace();
}

Vector mse_table(const ProcessModel& model, int tau_cap) {
  if (tau_cap < 1) throw DomainError("mse_table: AoI cap must be >= 1");
  Vector table(tau_cap);
  Matrix X = model.P_bar;
  for (int tau = 1; tau <= tau_cap; ++tau) {
    X = symmetrized(model.A * X * model.A.transpose() + model.W);
    table(tau - 1) = X.trace();
  }
  return table;
}

}  // namespace sensched
