#pragma once

// Gauss–Jacobi rules for the weight (1-x)^alpha (1+x)^beta on [-1, 1].
//
// Nodes come from the Golub–Welsch tridiagonal eigenproblem and are polished with
// Newton steps on the orthonormal recurrence; weights use the Christoffel formula
// w_i = 1 / sum_j p_j(x_i)^2, which keeps small endpoint weights accurate.

#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

#include "ntkbias/errors.hpp"

namespace ntkbias::detail {

struct JacobiRule {
  std::vector<double> nodes;    // ascending
  std::vector<double> weights;  // normalized: sum to 1
};

/// Recurrence of the monic Jacobi polynomials: x p_k = p_{k+1} + a_k p_k + b_k p_{k-1}.
struct JacobiRecurrence {
  std::vector<double> diag;     // a_0 .. a_{Q-1}
  std::vector<double> offdiag;  // sqrt(b_1) .. sqrt(b_Q)

  JacobiRecurrence(double alpha, double beta, int count) : diag(count), offdiag(count) {
    const double ab = alpha + beta;
    for (int k = 0; k < count; ++k) {
      if (k == 0) {
        diag[0] = (beta - alpha) / (ab + 2.0);
      } else {
        const double s = 2.0 * k + ab;
        diag[k] = (beta * beta - alpha * alpha) / (s * (s + 2.0));
      }
      const int j = k + 1;
      double b;
      if (j == 1) {
        b = 4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab));
      } else {
        const double s = 2.0 * j + ab;
        b = 4.0 * j * (j + alpha) * (j + beta) * (j + ab) / (s * s * (s + 1.0) * (s - 1.0));
      }
      offdiag[k] = std::sqrt(b);
    }
  }
};

/// Orthonormal (w.r.t. the normalized weight) polynomials p_0..p_{count-1} at x, plus
/// p_count and its derivative for Newton polishing.
struct OrthonormalEval {
  double sum_squares = 0.0;  // sum_{j<count} p_j(x)^2
  double top = 0.0;          // p_count(x)
  double top_derivative = 0.0;
};

inline OrthonormalEval eval_orthonormal(const JacobiRecurrence& rec, int count, double x) {
  OrthonormalEval out;
  double prev = 0.0, cur = 1.0;
  double dprev = 0.0, dcur = 0.0;
  for (int k = 0; k < count; ++k) {
    out.sum_squares += cur * cur;
    const double prev_off = k > 0 ? rec.offdiag[k - 1] : 0.0;
    const double next = ((x - rec.diag[k]) * cur - prev_off * prev) / rec.offdiag[k];
    const double dnext = (cur + (x - rec.diag[k]) * dcur - prev_off * dprev) / rec.offdiag[k];
    prev = cur;
    cur = next;
    dprev = dcur;
    dcur = dnext;
  }
  out.top = cur;
  out.top_derivative = dcur;
  return out;
}

inline JacobiRule gauss_jacobi(double alpha, double beta, int count) {
  if (count < 1) throw ParameterError("quadrature needs at least one node");
  if (!(alpha > -1.0 && beta > -1.0)) throw ParameterError("Jacobi exponents must exceed -1");

  const JacobiRecurrence rec(alpha, beta, count);
  Eigen::VectorXd diag(count);
  Eigen::VectorXd sub(std::max(count - 1, 0));
  for (int k = 0; k < count; ++k) diag[k] = rec.diag[k];
  for (int k = 0; k + 1 < count; ++k) sub[k] = rec.offdiag[k];

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("Golub-Welsch eigenproblem failed to converge");

  JacobiRule rule;
  rule.nodes.resize(count);
  rule.weights.resize(count);
  double total = 0.0;
  for (int i = 0; i < count; ++i) {
    double x = solver.eigenvalues()[i];
    for (int it = 0; it < 3; ++it) {
      const OrthonormalEval e = eval_orthonormal(rec, count, x);
      if (e.top_derivative == 0.0) break;
      const double step = e.top / e.top_derivative;
      x -= step;
      if (std::abs(step) < 1e-17) break;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / eval_orthonormal(rec, count, x).sum_squares;
    total += rule.weights[i];
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

}  // namespace ntkbias::detail
