#include "ktorus/linear_solvers.hpp"

#include <algorithm>

namespace kt {

SolveStats lsqr(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& A,
                const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& At,
                const Eigen::VectorXd& b, Eigen::VectorXd& x, double atol, double btol,
                int max_iter) {
  SolveStats st;
  Eigen::VectorXd u = b;
  double beta = u.norm();
  const double bnorm = beta;
  if (beta == 0.0) {
    x = At(b) * 0.0;
    st.converged = true;
    return st;
  }
  u /= beta;
  Eigen::VectorXd v = At(u);
  x = Eigen::VectorXd::Zero(v.size());
  double alpha = v.norm();
  if (alpha == 0.0) {
    st.converged = true;
    st.residual = bnorm;
    return st;
  }
  v /= alpha;
  Eigen::VectorXd w = v;
  double phibar = beta;
  double rhobar = alpha;
  double anorm2 = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    u = A(v) - alpha * u;
    beta = u.norm();
    if (beta > 0.0) u /= beta;
    anorm2 += alpha * alpha + beta * beta;
    v = At(u) - beta * v;
    alpha = v.norm();
    if (alpha > 0.0) v /= alpha;

    const double rho = std::hypot(rhobar, beta);
    const double c = rhobar / rho;
    const double s = beta / rho;
    const double theta = s * alpha;
    rhobar = -c * alpha;
    const double phi = c * phibar;
    phibar = s * phibar;

    x += (phi / rho) * w;
    w = v - (theta / rho) * w;

    st.iterations = it;
    const double rnorm = phibar;
    const double arnorm = phibar * alpha * std::abs(c);
    const double anorm = std::sqrt(anorm2);
    st.residual = rnorm;
    st.normal_residual = rnorm > 0.0 ? arnorm / (anorm * rnorm) : 0.0;
    if (rnorm <= btol * bnorm + atol * anorm * x.norm()) {
      st.converged = true;
      break;
    }
    if (st.normal_residual <= atol) {
      st.converged = true;
      break;
    }
    if (alpha == 0.0) {
      st.converged = true;
      break;
    }
  }
  return st;
}

namespace {

template <typename Vec>
SolveStats pcg_impl(const std::function<Vec(const Vec&)>& A, const std::function<Vec(const Vec&)>& M,
                    const Vec& b, Vec& x, double rtol, int max_iter) {
  SolveStats st;
  const double bnorm = b.norm();
  if (x.size() != b.size()) x = Vec::Zero(b.size());
  if (bnorm == 0.0) {
    x.setZero();
    st.converged = true;
    return st;
  }
  Vec r = b - A(x);
  Vec z = M(r);
  Vec p = z;
  auto rz = r.dot(z);
  for (int it = 1; it <= max_iter; ++it) {
    const Vec Ap = A(p);
    const auto pAp = p.dot(Ap);
    if (std::abs(pAp) == 0.0) break;
    const auto alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    st.iterations = it;
    st.residual = r.norm() / bnorm;
    if (st.residual <= rtol) {
      st.converged = true;
      break;
    }
    z = M(r);
    const auto rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return st;
}

}  // namespace

SolveStats pcg(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& A,
               const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& M,
               const Eigen::VectorXcd& b, Eigen::VectorXcd& x, double rtol, int max_iter) {
  return pcg_impl<Eigen::VectorXcd>(A, M, b, x, rtol, max_iter);
}

SolveStats pcg(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& A,
               const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& M,
               const Eigen::VectorXd& b, Eigen::VectorXd& x, double rtol, int max_iter) {
  return pcg_impl<Eigen::VectorXd>(A, M, b, x, rtol, max_iter);
}

}  // namespace kt
