#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace kt {

struct SolveStats {
  int iterations = 0;
  bool converged = false;
  /// LSQR: final ||b - A x||; PCG: final relative residual.
  double residual = 0.0;
  /// LSQR: ||A^T r|| / (||A|| ||r||) at exit.
  double normal_residual = 0.0;
};

/// LSQR of Paige and Saunders for min ||A x - b||, started from x = 0 so the
/// iterate stays in range(A^T) (minimum-norm solution for consistent systems).
SolveStats lsqr(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& A,
                const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& At,
                const Eigen::VectorXd& b, Eigen::VectorXd& x, double atol = 1e-12,
                double btol = 1e-12, int max_iter = 2000);

/// Preconditioned conjugate gradients for a Hermitian positive semidefinite operator
/// on complex vectors. The right-hand side must lie in the range of A.
SolveStats pcg(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& A,
               const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& M,
               const Eigen::VectorXcd& b, Eigen::VectorXcd& x, double rtol = 1e-12,
               int max_iter = 2000);

/// Real-vector variant of pcg.
SolveStats pcg(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& A,
               const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& M,
               const Eigen::VectorXd& b, Eigen::VectorXd& x, double rtol = 1e-12,
               int max_iter = 2000);

}  // namespace kt
