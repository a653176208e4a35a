#include "factorlens/nonuniform.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <optional>
#include <cmath>
#include <numbers>

namespace factorlens {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_k(Index k, Index m, const char* who) {
  if (k < 0 || k > m - 1)
    throw ParameterError(std::string(who) + ": number of factors K=" +
                         std::to_string(k) + " must lie in [0, M-1] with M=" +
                         std::to_string(m));
}

double max_rel_change(const Vector& next, const Vector& current) {
  return ((next - current).array() / current.array()).abs().maxCoeff();
}

}  // namespace

// ---------------------------------------------------------------------------
// MRH

FactorModelEstimate mrh_from_eigen(const CovMatrix& sample_cov,
                                   const EigenSystem& eig, Index k) {
  check_k(k, sample_cov.m(), "MRH");
  FactorModelEstimate urm = urm_from_eigen(eig, UrmParams{k});
  const Vector f_diag = urm.loadings().rowwise().squaredNorm();
  // Nonnegative analytically; the max only absorbs rounding.
  Vector residual = (sample_cov.matrix().diagonal() - f_diag).cwiseMax(0.0);
  return FactorModelEstimate(urm.loadings(), std::move(residual), urm.warnings());
}

FactorModelEstimate mrh_fit(const CovMatrix& sample_cov, Index k) {
  check_k(k, sample_cov.m(), "MRH");
  return mrh_from_eigen(sample_cov, eigh_desc(sample_cov), k);
}

FactorModelEstimate mrh_fit(const Dataset& data, Index k) {
  return mrh_fit(sample_covariance(data), k);
}

// ---------------------------------------------------------------------------
// EM
//
// E-step (posterior of z given x under Sigma = W W^T + Psi):
//   Cz = (I + W^T Psi^-1 W)^-1,  beta = Cz W^T Psi^-1
//   E[z|x] = beta x,  E[z z^T|x] = Cz + beta x x^T beta^T
// M-step (sufficient statistic S):
//   W'   = S beta^T (Cz + beta S beta^T)^-1
//   Psi' = diag(S - W' beta S)

namespace {

struct EmState {
  Matrix w;
  Vector psi;
};

// One EM update; also returns the average log-likelihood of the *input* state.
double em_step(const Matrix& s, const EmState& cur, EmState& next) {
  const Index m = cur.psi.size();
  const Index k = cur.w.cols();
  const Vector psi_inv = cur.psi.cwiseInverse();
  const Matrix pw = psi_inv.asDiagonal() * cur.w;            // Psi^-1 W
  const Matrix core = Matrix::Identity(k, k) + cur.w.transpose() * pw;
  Eigen::LLT<Matrix> core_llt(core);
  const Matrix cz = core_llt.solve(Matrix::Identity(k, k));
  const Matrix s_pw = s * pw;                                 // S Psi^-1 W

  // Log-likelihood via the determinant lemma and Woodbury identity.
  const double log_det = cur.psi.array().log().sum() +
                         2.0 * core_llt.matrixLLT().diagonal().array().log().sum();
  const double trace = s.diagonal().cwiseProduct(psi_inv).sum() -
                       (cz * (pw.transpose() * s_pw)).trace();
  const double loglik = -0.5 * (static_cast<double>(m) * kLog2Pi + log_det + trace);

  const Matrix s_beta_t = s_pw * cz;                          // S beta^T
  const Matrix ezz = cz + cz * pw.transpose() * s_beta_t;     // Cz + beta S beta^T
  next.w = ezz.llt().solve(s_beta_t.transpose()).transpose();
  next.psi = s.diagonal() - next.w.cwiseProduct(s_beta_t).rowwise().sum();
  return loglik;
}

}  // namespace

EmResult em_fit(const CovMatrix& sample_cov, const EmParams& params,
                const std::optional<FactorModelEstimate>& init) {
  const Index m = sample_cov.m();
  check_k(params.k, m, "EM");
  if (params.max_iter < 1) throw ParameterError("EM: max_iter must be >= 1");
  if (!(params.rel_tol > 0.0)) throw ParameterError("EM: rel_tol must be > 0");

  const Matrix& s = sample_cov.matrix();
  const double floor = params.residual_floor * s.diagonal().mean();
  if (!(floor > 0.0))
    throw DegenerateInputError("EM: sample covariance has zero diagonal");

  EmState cur;
  if (init) {
    if (init->rank() != params.k || init->m() != m)
      throw ParameterError("EM: initial estimate has wrong shape");
    cur = {init->loadings(), init->residual()};
  } else {
    FactorModelEstimate start = mrh_fit(sample_cov, params.k);
    cur = {start.loadings(), start.residual()};
  }

  std::vector<std::string> warnings;
  bool floored = false;
  auto apply_floor = [&](Vector& psi) {
    for (Index i = 0; i < m; ++i) {
      if (!(psi(i) >= floor)) {
        psi(i) = floor;
        floored = true;
      }
    }
  };
  apply_floor(cur.psi);

  std::vector<double> trace;
  int iter = 0;
  bool converged = false;
  EmState next;
  while (iter < params.max_iter) {
    trace.push_back(em_step(s, cur, next));
    ++iter;
    apply_floor(next.psi);
    const double change = max_rel_change(next.psi, cur.psi);
    cur = std::move(next);
    if (change < params.rel_tol) {
      converged = true;
      break;
    }
  }
  EmState scratch;
  trace.push_back(em_step(s, cur, scratch));

  if (floored)
    warnings.push_back("EM: residual variance clamped at floor " + std::to_string(floor));
  if (!converged)
    warnings.push_back("EM: stopped at max_iter=" + std::to_string(params.max_iter));
  return EmResult{FactorModelEstimate(std::move(cur.w), std::move(cur.psi),
                                      std::move(warnings)),
                  iter, converged, std::move(trace)};
}

EmResult em_fit(const Dataset& data, const EmParams& params,
                const std::optional<FactorModelEstimate>& init) {
  return em_fit(sample_covariance(data), params, init);
}

// ---------------------------------------------------------------------------
// TM

GStepResult lemma1_gstep(const CovMatrix& sample_cov, const Vector& v,
                         double lambda_prime) {
  const Index m = sample_cov.m();
  if (v.size() != m || !(v.minCoeff() > 0.0))
    throw ParameterError("lemma1_gstep: V must be a positive diagonal of size M");
  const Vector root = v.cwiseSqrt();
  Matrix a = root.asDiagonal() * sample_cov.matrix() * root.asDiagonal();
  a.diagonal() -= lambda_prime * v;
  EigenSystem eig = eigh_desc(0.5 * (a + a.transpose()));

  Index k = 0;
  while (k < m && eig.values(k) > 1.0) ++k;
  const Vector root_inv = root.cwiseInverse();
  Matrix loadings(m, k);
  for (Index j = 0; j < k; ++j)
    loadings.col(j) = std::sqrt(eig.values(j) - 1.0) *
                      root_inv.cwiseProduct(eig.basis.col(j));
  return GStepResult{FactorModelEstimate(std::move(loadings), v.cwiseInverse()),
                     std::move(eig.values), std::move(eig.basis)};
}

double tm_objective(const CovMatrix& sample_cov, Index n, double lambda,
                    const Matrix& precision, const Vector& v) {
  auto ld = log_det_spd(precision);
  if (!ld) return kNegInf;
  const Index m = sample_cov.m();
  const double trace_g = v.sum() - precision.trace();
  return 0.5 * (-static_cast<double>(m) * kLog2Pi + *ld -
                precision.cwiseProduct(sample_cov.matrix()).sum()) -
         lambda / static_cast<double>(n) * trace_g;
}

namespace {

// Reduced objective phi(V) = max_G J(V, G) at u = log V. By the envelope
// theorem its gradient in u is v o (diag Sigma - diag S).
struct ReducedPoint {
  Vector u;
  GStepResult gs;
  double value;
  Vector grad;
  double stationarity;
};

ReducedPoint reduced_eval(const CovMatrix& sample_cov, Index n, double lambda,
                          Vector u) {
  const Vector v = u.array().exp();
  GStepResult gs = lemma1_gstep(sample_cov, v, 2.0 * lambda / static_cast<double>(n));
  const double value = tm_objective(sample_cov, n, lambda, *gs.estimate.inverse(), v);
  const Vector s_diag = sample_cov.matrix().diagonal();
  const Vector diff = gs.estimate.sigma().matrix().diagonal() - s_diag;
  const double stat = (diff.array() / s_diag.array()).abs().maxCoeff();
  Vector grad = v.cwiseProduct(diff);
  return ReducedPoint{std::move(u), std::move(gs), value, std::move(grad), stat};
}

}  // namespace

TmResult tm_fit(const CovMatrix& sample_cov, Index n, const TmParams& params) {
  const Index m = sample_cov.m();
  if (!(params.lambda >= 0.0) || !std::isfinite(params.lambda))
    throw ParameterError("TM: lambda must be finite and nonnegative");
  if (n < 1) throw ParameterError("TM: sample count N must be >= 1");
  if (params.max_sweeps < 1) throw ParameterError("TM: max_sweeps must be >= 1");
  const Matrix& s = sample_cov.matrix();
  if (!(s.diagonal().minCoeff() > 0.0))
    throw DegenerateInputError("TM: a variable has zero sample variance");

  Vector v0 = params.v_init ? *params.v_init : s.diagonal().cwiseInverse().eval();
  if (v0.size() != m || !(v0.minCoeff() > 0.0))
    throw ParameterError("TM: initial V must be positive with size M");

  // L-BFGS ascent on the reduced objective in log V; every accepted point is
  // an exact G-step, so the recorded objective never decreases.
  constexpr std::size_t kMemory = 20;
  constexpr double kMaxLogStep = 1.0;
  std::vector<Vector> hist_s, hist_y;
  std::vector<double> trace;
  ReducedPoint cur = reduced_eval(sample_cov, n, params.lambda, v0.array().log());
  for (int sweep = 1;; ++sweep) {
    trace.push_back(cur.value);
    if (cur.stationarity <= params.stationarity_tol) {
      Vector v = cur.u.array().exp();
      return TmResult{std::move(cur.gs.estimate), std::move(v), sweep,
                      cur.stationarity, std::move(trace)};
    }
    bool stalled = false;
    if (sweep < params.max_sweeps) {
      // Two-loop recursion on -phi.
      Vector q = -cur.grad;
      std::vector<double> alpha(hist_s.size());
      for (std::size_t i = hist_s.size(); i-- > 0;) {
        alpha[i] = hist_s[i].dot(q) / hist_y[i].dot(hist_s[i]);
        q -= alpha[i] * hist_y[i];
      }
      q *= hist_s.empty()
               ? 1.0 / std::max(1.0, cur.grad.cwiseAbs().maxCoeff())
               : hist_s.back().dot(hist_y.back()) / hist_y.back().squaredNorm();
      for (std::size_t i = 0; i < hist_s.size(); ++i)
        q += (alpha[i] - hist_y[i].dot(q) / hist_y[i].dot(hist_s[i])) * hist_s[i];
      Vector dir = -q;
      if (!(cur.grad.dot(dir) > 0.0)) {
        dir = cur.grad;
        hist_s.clear();
        hist_y.clear();
      }
      const double longest = dir.cwiseAbs().maxCoeff();
      if (longest > kMaxLogStep) dir *= kMaxLogStep / longest;
      const double slope = cur.grad.dot(dir);

      double step = 1.0;
      std::optional<ReducedPoint> next;
      for (int ls = 0; ls < 50; ++ls, step *= 0.5) {
        ReducedPoint trial = reduced_eval(sample_cov, n, params.lambda, cur.u + step * dir);
        if (trial.value >= cur.value + 1e-4 * step * slope) {
          next = std::move(trial);
          break;
        }
      }
      if (next) {
        Vector ds = next->u - cur.u;
        Vector dy = cur.grad - next->grad;
        if (ds.dot(dy) > 1e-12 * ds.norm() * dy.norm()) {
          hist_s.push_back(std::move(ds));
          hist_y.push_back(std::move(dy));
          if (hist_s.size() > kMemory) {
            hist_s.erase(hist_s.begin());
            hist_y.erase(hist_y.begin());
          }
        }
        cur = std::move(*next);
        continue;
      }
      stalled = true;
    }
    FactorModelEstimate best = std::move(cur.gs.estimate);
    best.add_warning("TM: not stationary after " + std::to_string(sweep) + " sweeps");
    throw ConvergenceError("TM: stationarity " + std::to_string(cur.stationarity) +
                               (stalled ? " with no ascent step available" : "") +
                               " above tolerance after " + std::to_string(sweep) +
                               " sweeps",
                           std::move(best));
  }
}

TmResult tm_fit(const Dataset& data, const TmParams& params) {
  return tm_fit(sample_covariance(data), data.n(), params);
}

// ---------------------------------------------------------------------------
// T-step
//
// min t^T C t subject to sum(log t) = 0 is solved through the unconstrained,
// strictly convex surrogate phi(t) = t^T C t - sum(log t): its minimizer
// satisfies t_i (C t)_i = 1/2 for every i, and any positive rescaling of it
// satisfies the constrained KKT conditions t_i (C t)_i = const. Rescaling to
// unit geometric mean then gives the constrained optimum.

ScalingMatrix tstep_solve_precision(const Matrix& precision,
                                    const CovMatrix& sample_cov,
                                    const std::optional<Vector>& init) {
  const Index m = sample_cov.m();
  if (precision.rows() != m || precision.cols() != m)
    throw InputError("tstep_solve: dimension mismatch");
  Matrix c = precision.cwiseProduct(sample_cov.matrix());
  c = 0.5 * (c + c.transpose()).eval();
  for (Index i = 0; i < m; ++i) {
    if (!(c(i, i) > 0.0))
      throw DegenerateInputError("tstep_solve: row " + std::to_string(i) +
                                 " of Sigma^-1 o S vanishes");
  }

  Vector t = init ? *init : Vector::Ones(m);
  if (t.size() != m || !(t.minCoeff() > 0.0)) t = Vector::Ones(m);
  t *= std::sqrt(static_cast<double>(m) / (2.0 * t.dot(c * t)));

  // phi is self-concordant (quadratic plus log barrier): the damped Newton
  // step 1 / (1 + delta) stays feasible and decreases phi, and full steps are
  // taken once the Newton decrement delta is below 1/4.
  double kkt = 0.0;
  constexpr int kMaxNewton = 200;
  int it = 0;
  for (; it < kMaxNewton; ++it) {
    const Vector grad = 2.0 * (c * t) - t.cwiseInverse();
    kkt = t.cwiseProduct(grad).cwiseAbs().maxCoeff();
    if (kkt <= 1e-12) break;
    Matrix h = 2.0 * c;
    h.diagonal() += t.cwiseInverse().cwiseAbs2();
    const Vector step = -h.llt().solve(grad);
    const double delta = std::sqrt(std::max(-grad.dot(step), 0.0));
    const Vector next = t + (delta < 0.25 ? 1.0 : 1.0 / (1.0 + delta)) * step;
    if (!(next.minCoeff() > 0.0)) break;
    if ((next - t).cwiseQuotient(t).cwiseAbs().maxCoeff() < 1e-15) {
      t = next;
      break;
    }
    t = next;
  }
  {
    const Vector grad = 2.0 * (c * t) - t.cwiseInverse();
    kkt = t.cwiseProduct(grad).cwiseAbs().maxCoeff();
  }
  if (kkt > 1e-8)
    throw ConvergenceError("tstep_solve: KKT residual " + std::to_string(kkt) +
                           " after " + std::to_string(it) + " Newton steps");
  t /= std::exp(t.array().log().mean());
  return ScalingMatrix{std::move(t)};
}

ScalingMatrix tstep_solve(const CovMatrix& sigma, const CovMatrix& sample_cov,
                          const std::optional<Vector>& init) {
  Eigen::LLT<Matrix> llt(sigma.matrix());
  if (llt.info() != Eigen::Success)
    throw DegenerateInputError("tstep_solve: Sigma is not positive definite");
  return tstep_solve_precision(llt.solve(Matrix::Identity(sigma.m(), sigma.m())),
                               sample_cov, init);
}

// ---------------------------------------------------------------------------
// STM

double stm_objective(const CovMatrix& sample_cov, Index n, double lambda,
                     const UtmSolution& utm, const Vector& t) {
  const Index m = sample_cov.m();
  const auto& precision = utm.estimate.inverse();
  if (!precision) return kNegInf;
  const double log_det = utm.eigenvalues.array().log().sum();
  const Matrix scaled = t.asDiagonal() * sample_cov.matrix() * t.asDiagonal();
  const double quad = precision->cwiseProduct(scaled).sum();
  const double trace_g = static_cast<double>(m) * utm.v_hat -
                         utm.eigenvalues.cwiseInverse().sum();
  return -0.5 * (static_cast<double>(m) * kLog2Pi + log_det + quad) -
         lambda / static_cast<double>(n) * trace_g;
}

StmResult stm_fit(const CovMatrix& sample_cov, Index n, const StmParams& params) {
  const Index m = sample_cov.m();
  if (!(params.lambda >= 0.0) || !std::isfinite(params.lambda))
    throw ParameterError("STM: lambda must be finite and nonnegative");
  if (!(params.rel_tol > 0.0)) throw ParameterError("STM: rel_tol must be > 0");
  if (params.max_sweeps < 1) throw ParameterError("STM: max_sweeps must be >= 1");

  Vector t = params.t_init ? *params.t_init : Vector::Ones(m);
  if (t.size() != m || !(t.minCoeff() > 0.0))
    throw ParameterError("STM: initial T must be positive with size M");

  std::vector<double> trace;
  auto assemble = [&](const UtmSolution& utm, const Vector& scale,
                      std::vector<std::string> warnings) {
    const Vector inv = scale.cwiseInverse();
    return FactorModelEstimate(inv.asDiagonal() * utm.estimate.loadings(),
                               utm.estimate.residual().cwiseProduct(inv.cwiseAbs2()),
                               std::move(warnings));
  };

  for (int sweep = 1;; ++sweep) {
    const CovMatrix scaled(t.asDiagonal() * sample_cov.matrix() * t.asDiagonal());
    UtmSolution utm = utm_fit(scaled, n, UtmParams{params.lambda});
    if (!utm.estimate.inverse())
      throw DegenerateInputError(
          "STM: UTM estimate of the rescaled data is singular (increase lambda)");
    Vector t_next = tstep_solve_precision(*utm.estimate.inverse(), sample_cov, t).diag;
    trace.push_back(stm_objective(sample_cov, n, params.lambda, utm, t_next));
    const double change = max_rel_change(t_next, t);
    t = std::move(t_next);
    if (change < params.rel_tol) {
      return StmResult{assemble(utm, t, {}), ScalingMatrix{t}, sweep, true,
                       std::move(trace)};
    }
    if (sweep >= params.max_sweeps) {
      throw ConvergenceError(
          "STM: scaling still changing by " + std::to_string(change) + " after " +
              std::to_string(sweep) + " sweeps",
          assemble(utm, t, {"STM: not converged"}));
    }
  }
}

StmResult stm_fit(const Dataset& data, const StmParams& params) {
  return stm_fit(sample_covariance(data), data.n(), params);
}

}  // namespace factorlens
