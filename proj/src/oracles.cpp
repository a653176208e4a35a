#include "factorlens/oracles.hpp"

#include "factorlens/parallel.hpp"
#include "factorlens/synth.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace factorlens {

// ---------------------------------------------------------------------------
// ADMM reference solver

namespace {

using EigSolver = Eigen::SelfAdjointEigenSolver<Matrix>;

Matrix psd_part(const Matrix& a) {
  EigSolver es(0.5 * (a + a.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
         es.eigenvectors().transpose();
}

double lambda_prime_of(double lambda, Index n) {
  return 2.0 * lambda / static_cast<double>(n);
}

}  // namespace

double sdp_kkt_residual(SdpFormulation formulation, const CovMatrix& sample_cov, Index n,
                        double lambda, const Matrix& sigma, const Matrix& g) {
  const Matrix& s = sample_cov.matrix();
  const double lp = lambda_prime_of(lambda, n);
  const double scale = s.diagonal().cwiseAbs().maxCoeff();
  const bool uniform = formulation == SdpFormulation::kUniform;

  // Stationarity in V.
  const Vector diff = sigma.diagonal() - s.diagonal();
  double r = uniform ? std::abs(diff.sum()) / s.trace() : diff.cwiseAbs().maxCoeff() / scale;

  // Dual feasibility: W = Sigma - S + lambda' I >= 0.
  Matrix w = sigma - s;
  w.diagonal().array() += lp;
  EigSolver wes(0.5 * (w + w.transpose()), Eigen::EigenvaluesOnly);
  r = std::max(r, std::max(0.0, -wes.eigenvalues().minCoeff()) / scale);

  // Primal feasibility: G >= 0 and Sigma^-1 + G = V of the required shape.
  const double gnorm = g.cwiseAbs().maxCoeff();
  if (gnorm > 0.0) {
    EigSolver ges(0.5 * (g + g.transpose()), Eigen::EigenvaluesOnly);
    r = std::max(r, std::max(0.0, -ges.eigenvalues().minCoeff()) / gnorm);
    // Complementarity G W = 0.
    r = std::max(r, (g * w).cwiseAbs().maxCoeff() / (gnorm * scale));
  }
  const Matrix v = sigma.inverse() + g;
  const double vnorm = v.diagonal().cwiseAbs().maxCoeff();
  Matrix off = v;
  off.diagonal().setZero();
  r = std::max(r, off.cwiseAbs().maxCoeff() / vnorm);
  if (uniform) {
    const double mean = v.diagonal().mean();
    r = std::max(r, (v.diagonal().array() - mean).abs().maxCoeff() / vnorm);
  }
  return r;
}

SdpSolution sdp_reference_solve(SdpFormulation formulation, const CovMatrix& sample_cov,
                                Index n, double lambda, const AdmmOptions& options) {
  const Index m = sample_cov.m();
  if (m > options.max_m)
    throw ParameterError("sdp_reference_solve: M = " + std::to_string(m) + " above max_m = " +
                         std::to_string(options.max_m));
  if (n < 1 || !(lambda >= 0.0)) throw ParameterError("sdp_reference_solve: need N >= 1, lambda >= 0");
  if (!(options.rho > 0.0) || !(options.relaxation > 0.0 && options.relaxation < 2.0))
    throw ParameterError("sdp_reference_solve: invalid ADMM options");

  // Work on S / c so that the fixed penalty is well scaled.
  const double c = sample_cov.matrix().diagonal().mean();
  if (!(c > 0.0)) throw DegenerateInputError("sdp_reference_solve: zero sample covariance");
  const Matrix s = sample_cov.matrix() / c;
  const double lp = lambda_prime_of(lambda, n) / c;
  const double rho = options.rho;
  const double alpha = options.relaxation;
  const bool uniform = formulation == SdpFormulation::kUniform;

  Matrix y = Matrix::Identity(m, m);
  Matrix vmat = Matrix::Identity(m, m);
  Matrix u1 = Matrix::Zero(m, m), u2 = Matrix::Zero(m, m);
  Matrix p(m, m), z(m, m);
  double r_pri = 0.0, r_dual = 0.0;
  int it = 0;
  for (; it < options.max_iter; ++it) {
    // P: argmin -log det P + tr(P S) + rho/2 |P - Y + U1|^2
    EigSolver es(rho * (y - u1) - s);
    const Vector& d = es.eigenvalues();
    const Vector pd = ((d.array() + (d.array().square() + 4.0 * rho).sqrt()) / (2.0 * rho)).matrix();
    p = es.eigenvectors() * pd.asDiagonal() * es.eigenvectors().transpose();
    // G: argmin lambda' tr G + rho/2 |G + Y - V + U2|^2 over G >= 0
    Matrix zt = vmat - y - u2;
    zt.diagonal().array() -= lp / rho;
    z = psd_part(zt);

    const Matrix p_hat = alpha * p + (1.0 - alpha) * y;
    const Matrix z_hat = alpha * z + (1.0 - alpha) * (vmat - y);

    // (Y, V): closed form. Off-diagonal Y = (a - b) / 2 with V = 0 there.
    const Matrix a = p_hat + u1;
    const Matrix b = z_hat + u2;
    const Matrix y_old = y, v_old = vmat;
    y = 0.5 * (a - b);
    vmat.setZero();
    if (uniform) {
      const double v = (a.diagonal() + b.diagonal()).mean();
      y.diagonal() = 0.5 * (a.diagonal() - b.diagonal()).array() + 0.5 * v;
      vmat.diagonal().setConstant(v);
    } else {
      y.diagonal() = a.diagonal();
      vmat.diagonal() = a.diagonal() + b.diagonal();
    }

    u1 += p_hat - y;
    u2 += z_hat + y - vmat;

    r_pri = std::sqrt((p - y).squaredNorm() + (z + y - vmat).squaredNorm());
    r_dual = rho * std::sqrt((y - y_old).squaredNorm() +
                             ((y - vmat) - (y_old - v_old)).squaredNorm());
    if (r_pri <= options.tol && r_dual <= options.tol) {
      ++it;
      break;
    }
  }
  if (!(r_pri <= options.tol && r_dual <= options.tol))
    throw OracleError("sdp_reference_solve: no convergence after " +
                      std::to_string(options.max_iter) + " iterations (primal " +
                      std::to_string(r_pri) + ", dual " + std::to_string(r_dual) + ")");
  Matrix sigma = c * p.inverse();
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  // G in original units: precision scales by 1 / c. Take G from the
  // structured side, V - Y, so that V - G equals the returned precision up to
  // the primal residual.
  const Matrix g = (vmat - p) / c;
  const double kkt = sdp_kkt_residual(formulation, sample_cov, n, lambda, sigma, g);
  if (!(kkt <= options.kkt_tol))
    throw OracleError("sdp_reference_solve: KKT residual " + std::to_string(kkt) +
                      " above " + std::to_string(options.kkt_tol));
  return SdpSolution{CovMatrix(std::move(sigma)), it, r_pri, r_dual, kkt};
}

// ---------------------------------------------------------------------------

OptimalEigenvalues optimal_eigenvalues(const Matrix& basis, const CovMatrix& sigma_star) {
  if (basis.rows() != sigma_star.m())
    throw InputError("optimal_eigenvalues: dimension mismatch");
  return OptimalEigenvalues{
      (basis.transpose() * sigma_star.matrix()).cwiseProduct(basis.transpose()).rowwise().sum()};
}

// ---------------------------------------------------------------------------
// Generic T-step reference

namespace {

// Nelder-Mead minimization with standard coefficients.
Vector nelder_mead(const std::function<double(const Vector&)>& f, Vector x0, double scale,
                   double tol, int max_iter) {
  const Index d = x0.size();
  std::vector<Vector> pts(static_cast<std::size_t>(d + 1), x0);
  for (Index i = 0; i < d; ++i) pts[static_cast<std::size_t>(i + 1)](i) += scale;
  std::vector<double> val(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) val[i] = f(pts[i]);
  std::vector<std::size_t> order(pts.size());
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return val[a] < val[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::abs(val[worst] - val[best]) <= tol * (1.0 + std::abs(val[best]))) {
      double spread = 0.0;
      for (const auto& p : pts) spread = std::max(spread, (p - pts[best]).cwiseAbs().maxCoeff());
      if (spread <= tol) break;
    }
    Vector centroid = Vector::Zero(d);
    for (std::size_t i : order)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(d);
    const Vector xr = centroid + (centroid - pts[worst]);
    const double fr = f(xr);
    if (fr < val[best]) {
      const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = f(xe);
      if (fe < fr) {
        pts[worst] = xe;
        val[worst] = fe;
      } else {
        pts[worst] = xr;
        val[worst] = fr;
      }
    } else if (fr < val[second]) {
      pts[worst] = xr;
      val[worst] = fr;
    } else {
      const bool outside = fr < val[worst];
      const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                : Vector(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = f(xc);
      if (fc < std::min(fr, val[worst])) {
        pts[worst] = xc;
        val[worst] = fc;
      } else {
        for (std::size_t i = 0; i < pts.size(); ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          val[i] = f(pts[i]);
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < val.size(); ++i)
    if (val[i] < val[best]) best = i;
  return pts[best];
}

}  // namespace

ScalingMatrix tstep_reference_solve(const CovMatrix& sigma, const CovMatrix& sample_cov) {
  const Index m = sample_cov.m();
  if (sigma.m() != m) throw InputError("tstep_reference_solve: dimension mismatch");
  if (m > 12) throw ParameterError("tstep_reference_solve: reference scale only (M <= 12)");
  const Matrix c = sigma.matrix().inverse().cwiseProduct(sample_cov.matrix());
  if (m == 1) return ScalingMatrix{Vector::Ones(1)};
  // Free log-scales u_1..u_{M-1}; u_M makes the sum zero.
  auto expand = [m](const Vector& u) {
    Vector t(m);
    t.head(m - 1) = u.array().exp().matrix();
    t(m - 1) = std::exp(-u.sum());
    return t;
  };
  auto f = [&](const Vector& u) {
    const Vector t = expand(u);
    return t.dot(c * t);
  };
  Vector u = Vector::Zero(m - 1);
  double scale = 0.5;
  for (int restart = 0; restart < 30; ++restart) {
    const Vector next = nelder_mead(f, u, scale, 1e-15, 20000);
    const double moved = (next - u).cwiseAbs().maxCoeff();
    u = next;
    scale = std::max(1e-4, std::min(0.5, 10.0 * moved));
    if (moved <= 1e-12) break;
  }
  return ScalingMatrix{expand(u)};
}

// ---------------------------------------------------------------------------
// Spiked model

void SpikedModel::validate() const {
  if (m < 1 || n < 1) throw ParameterError("spiked model: M and N must be >= 1");
  if (!(sigma2 > 0.0)) throw ParameterError("spiked model: sigma^2 must be > 0");
  if (static_cast<Index>(spikes.size()) > m)
    throw ParameterError("spiked model: more spikes than dimensions");
  for (std::size_t i = 0; i < spikes.size(); ++i) {
    if (!(spikes[i] > sigma2)) throw ParameterError("spiked model: spikes must exceed sigma^2");
    if (i > 0 && !(spikes[i] < spikes[i - 1]))
      throw ParameterError("spiked model: spikes must be strictly decreasing");
  }
}

Vector SpikedModel::population_diagonal() const {
  Vector d = Vector::Constant(m, sigma2);
  for (std::size_t i = 0; i < spikes.size(); ++i) d(static_cast<Index>(i)) = spikes[i];
  return d;
}

double SpikedModel::spike_location(std::size_t i) const {
  const double l = spikes.at(i);
  return l + rho() * l * sigma2 / (l - sigma2);
}

bool SpikedModel::supercritical(std::size_t i) const {
  return spikes.at(i) > (1.0 + std::sqrt(rho())) * sigma2;
}

MonteCarloStat mc_stat(const std::vector<double>& values) {
  if (values.empty()) throw ParameterError("mc_stat: no values");
  const double k = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= k;
  if (values.size() < 2) return MonteCarloStat{mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return MonteCarloStat{mean, std::sqrt(ss / (k - 1.0) / k)};
}

namespace {

// N x M samples of N(0, diag(d)).
Matrix diagonal_gaussian(const Vector& d, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const Vector root = d.cwiseSqrt();
  Matrix x(n, d.size());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d.size(); ++j) x(i, j) = root(j) * normal(rng);
  return x;
}

}  // namespace

Theorem2Report verify_theorem2(const SpikedModel& model, int trials, std::uint64_t seed,
                               double tol, double spike_rel_tol) {
  model.validate();
  if (model.spikes.empty()) throw ParameterError("leading-eigenvalue check: need a spike");
  if (!model.supercritical(0))
    throw ParameterError("leading-eigenvalue check: leading spike is not above (1 + sqrt(rho)) sigma^2");
  if (trials < 2) throw ParameterError("leading-eigenvalue check: need at least two trials");

  const Vector d = model.population_diagonal();
  const CovMatrix sigma_star(Matrix(d.asDiagonal()));
  Theorem2Report rep{};
  rep.offsets.resize(static_cast<std::size_t>(trials));
  rep.top_eigs.resize(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    const Dataset data(diagonal_gaussian(d, model.n, derive_seed(seed, static_cast<std::uint64_t>(t))));
    const EigenSystem eig = eigh_desc(sample_covariance(data));
    const double h1 = optimal_eigenvalues(Matrix(eig.basis.col(0)), sigma_star).h_star(0);
    rep.top_eigs[static_cast<std::size_t>(t)] = eig.values(0);
    rep.offsets[static_cast<std::size_t>(t)] = eig.values(0) - h1;
  }
  const double rs = model.rho() * model.sigma2;
  const double l = model.spikes.front();
  rep.offset = mc_stat(rep.offsets);
  rep.top_eig = mc_stat(rep.top_eigs);
  rep.tol = tol;
  rep.spike_rel_tol = spike_rel_tol;
  rep.bracket_lo = 2.0 * rs - tol;
  rep.bracket_hi = (2.0 + 2.0 * model.sigma2 / (l - model.sigma2)) * rs + tol;
  rep.spike_prediction = model.spike_location(0);
  rep.spike_rel_err = std::abs(rep.top_eig.mean - rep.spike_prediction) / rep.spike_prediction;
  rep.lambda_guidance_correction =
      2.0 * (static_cast<double>(model.m) * model.sigma2) / static_cast<double>(model.n);
  rep.offset_pass = rep.offset.mean >= rep.bracket_lo && rep.offset.mean <= rep.bracket_hi;
  rep.spike_pass = rep.spike_rel_err <= spike_rel_tol;
  return rep;
}

Prop1Report verify_prop1_trace(const SpikedModel& model, int trials, double epsilon,
                               std::uint64_t seed) {
  model.validate();
  if (trials < 1) throw ParameterError("trace check: need at least one trial");
  const Vector d = model.population_diagonal();
  const double tr_star = d.sum();
  Prop1Report rep{{}, epsilon, 0, 0.0};
  for (int t = 0; t < trials; ++t) {
    const Matrix x = diagonal_gaussian(d, model.n, derive_seed(seed, static_cast<std::uint64_t>(t)));
    const double ratio = x.squaredNorm() / static_cast<double>(model.n) / tr_star;
    rep.ratios.push_back(ratio);
    if (std::abs(ratio - 1.0) >= epsilon) ++rep.deviations;
  }
  rep.deviation_frequency = static_cast<double>(rep.deviations) / static_cast<double>(trials);
  return rep;
}

// ---------------------------------------------------------------------------
// Residual-bias closed forms

namespace {

Matrix bias_example(Index m, double r) {
  Matrix a = Matrix::Ones(m, m);
  a.diagonal().array() += 1.0;
  a(0, 0) += r - 1.0;
  return a;
}

void check_bias_args(Index m, double r, const char* who) {
  if (m < 2) throw ParameterError(std::string(who) + ": need M >= 2");
  if (!(r > 1.0) || !std::isfinite(r)) throw ParameterError(std::string(who) + ": need r > 1");
}

}  // namespace

Prop2Result prop2_eigvector_ratio(Index m, double r) {
  check_bias_args(m, r, "prop2");
  const double md = static_cast<double>(m);
  const double b = md + r + 1.0;
  const double q = 0.5 * (b + std::sqrt(b * b - 4.0 * (md * r + 1.0)));
  return Prop2Result{q, q - md};
}

Prop2Result prop2_numeric(Index m, double r) {
  check_bias_args(m, r, "prop2");
  const EigenSystem eig = eigh_desc(bias_example(m, r));
  return Prop2Result{eig.values(0), eig.basis(0, 0) / eig.basis(1, 0)};
}

double prop3_q_plus(Index m, double lambda_prime, double r) {
  const double md = static_cast<double>(m);
  const double b = (md - 1.0) * r + (r - 1.0) * lambda_prime + 1.0;
  const double c = lambda_prime * (md - 1.0) * (r - 1.0);
  return (b + std::sqrt(b * b - 4.0 * r * c)) / (2.0 * r);
}

Prop3Result prop3_idealized_tm(Index m, Index n, double lambda, double r) {
  check_bias_args(m, r, "prop3");
  if (n < 1 || !(lambda > 0.0)) throw ParameterError("prop3: need N >= 1 and lambda > 0");
  const double lp = lambda_prime_of(lambda, n);
  Vector v = Vector::Ones(m);
  v(0) = 1.0 / r;
  const GStepResult gs = lemma1_gstep(CovMatrix(bias_example(m, r)), v, lp);
  Prop3Result out;
  // Numerical rank: at lambda' = M the top value equals 1 exactly and rounding
  // can leave it a few ulps above.
  const double tol = 1e-12 * std::max(1.0, std::abs(gs.d(0)));
  out.rank = static_cast<Index>((gs.d.array() > 1.0 + tol).count());
  if (out.rank == 1) out.ratio = gs.estimate.loadings()(0, 0) / gs.estimate.loadings()(1, 0);
  out.q_plus = prop3_q_plus(m, lp, r);
  out.ratio_closed_form = r * (out.q_plus + 1.0 - static_cast<double>(m));
  return out;
}

// ---------------------------------------------------------------------------
// Verification harness

std::string to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::kPass: return "pass";
    case CheckStatus::kFail: return "fail";
    case CheckStatus::kInconclusive: return "inconclusive";
  }
  return "unknown";
}

const std::vector<std::string>& verify_sections() {
  static const std::vector<std::string> s{"theorem1", "lemma1", "theorem2",
                                          "prop1",    "prop2",  "prop3"};
  return s;
}

bool VerifyReport::any_fail() const {
  return std::any_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.status == CheckStatus::kFail; });
}

bool VerifyReport::any_inconclusive() const {
  return std::any_of(checks.begin(), checks.end(), [](const CheckResult& c) {
    return c.status == CheckStatus::kInconclusive;
  });
}

std::string VerifyReport::to_json() const {
  nlohmann::json j;
  j["schema"] = "factorlens.verify/1";
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks) {
    nlohmann::json cj{{"section", c.section}, {"name", c.name},
                      {"status", to_string(c.status)}, {"detail", c.detail}};
    cj["value"] = std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json(nullptr);
    cj["tolerance"] = c.tolerance;
    j["checks"].push_back(cj);
  }
  j["summary"] = any_fail() ? "fail" : (any_inconclusive() ? "inconclusive" : "pass");
  return j.dump(2);
}

namespace {

struct OracleInstance {
  CovMatrix s;
  Index n;
  double lambda;
};

// Random small instances with lambda evenly spaced from 0 to M tr(S) / N.
// N > M keeps S nonsingular so lambda = 0 is well posed.
std::vector<OracleInstance> oracle_instances(int count, Index max_m, std::uint64_t seed) {
  std::vector<OracleInstance> out;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    const Index m = 3 + static_cast<Index>(rng() % static_cast<std::uint64_t>(max_m - 2));
    const Index n = m + 2 + static_cast<Index>(rng() % static_cast<std::uint64_t>(40 - m - 1));
    SynthSpec spec;
    spec.m = m;
    spec.k_star = 1 + static_cast<Index>(rng() % 3);
    spec.sigma_f = 3.0;
    spec.n = n;
    spec.sigma_r = 0.5;
    spec.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const SynthSample smp = gen_nonuniform(spec);
    CovMatrix s = sample_covariance(smp.data);
    const double frac = count > 1 ? static_cast<double>(i) / (count - 1) : 0.5;
    const double lambda = frac * static_cast<double>(m) * s.trace() / static_cast<double>(n);
    out.push_back(OracleInstance{std::move(s), n, lambda});
  }
  return out;
}

void add(VerifyReport& rep, std::string section, std::string name, bool ok, double value,
         double tol, std::string detail = {}) {
  rep.checks.push_back(CheckResult{std::move(section), std::move(name),
                                   ok ? CheckStatus::kPass : CheckStatus::kFail, value, tol,
                                   std::move(detail)});
}

void add_inconclusive(VerifyReport& rep, std::string section, std::string name,
                      std::string detail) {
  rep.checks.push_back(CheckResult{std::move(section), std::move(name),
                                   CheckStatus::kInconclusive,
                                   std::numeric_limits<double>::quiet_NaN(), 0.0,
                                   std::move(detail)});
}

void oracle_agreement(VerifyReport& rep, const std::string& section, const std::string& name,
                      SdpFormulation form, int count, Index max_m, std::uint64_t seed,
                      int threads,
                      const std::function<Matrix(const OracleInstance&)>& fast) {
  const auto inst = oracle_instances(count, max_m, seed);
  if (inst.empty()) return;
  std::vector<double> errs(inst.size(), 0.0);
  std::vector<std::string> failures(inst.size());
  parallel_for(inst.size(), threads, [&](std::size_t i) {
    try {
      const SdpSolution ref = sdp_reference_solve(form, inst[i].s, inst[i].n, inst[i].lambda);
      errs[i] = rel_frobenius(fast(inst[i]), ref.sigma.matrix());
    } catch (const OracleError& e) {
      failures[i] = e.what();
    }
  });
  for (const auto& f : failures)
    if (!f.empty()) {
      add_inconclusive(rep, section, name, f);
      return;
    }
  const double worst = *std::max_element(errs.begin(), errs.end());
  add(rep, section, name, worst <= 1e-4, worst, 1e-4,
      std::to_string(inst.size()) + " instances, max relative Frobenius error");
}

void section_theorem1(VerifyReport& rep, const VerifyOptions& o, const VerifyHooks& h) {
  oracle_agreement(rep, "theorem1", "utm_matches_reference", SdpFormulation::kUniform,
                   o.oracle_instances, 15, derive_seed(o.seed, 1), o.threads,
                   [&](const OracleInstance& in) {
                     return h.utm(in.s, in.n, in.lambda).estimate.sigma().matrix();
                   });

  std::mt19937_64 rng(derive_seed(o.seed, 2));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst_trace = 0.0, worst_identity = 0.0;
  for (int i = 0; i < o.structure_spectra; ++i) {
    const Index m = 2 + static_cast<Index>(rng() % 29);
    const Index n = 1 + static_cast<Index>(rng() % 200);
    Vector s(m);
    for (Index j = 0; j < m; ++j) s(j) = std::exp(4.0 * unif(rng) - 2.0);
    std::sort(s.data(), s.data() + m, std::greater<double>());
    const Matrix basis = haar_frame(m, m, derive_seed(o.seed, 1000 + static_cast<std::uint64_t>(i)));
    const CovMatrix cov(basis * s.asDiagonal() * basis.transpose());
    const double lambda = unif(rng) * static_cast<double>(m) * s.sum() / static_cast<double>(n);
    const UtmSolution sol = h.utm(cov, n, lambda);
    worst_trace = std::max(worst_trace, std::abs(sol.estimate.sigma().trace() - cov.trace()) /
                                            cov.trace());
    const EigenSystem eig = eigh_desc(cov);
    const double flat = 1.0 / sol.v_hat;
    for (Index j = 0; j < m; ++j) {
      const double expect = std::max(eig.values(j) - sol.threshold, flat);
      worst_identity = std::max(worst_identity, std::abs(sol.eigenvalues(j) - expect) /
                                                    std::max(1.0, std::abs(expect)));
    }
    worst_identity = std::max(
        worst_identity, std::abs(sol.threshold - 2.0 * lambda / static_cast<double>(n)));
  }
  add(rep, "theorem1", "trace_preserved", worst_trace <= 1e-10, worst_trace, 1e-10,
      std::to_string(o.structure_spectra) + " random spectra");
  add(rep, "theorem1", "soft_threshold_identity", worst_identity <= 1e-12, worst_identity, 1e-12,
      "h_m = max(s_m - 2 lambda / N, 1 / v)");
}

void section_lemma1(VerifyReport& rep, const VerifyOptions& o, const VerifyHooks& h) {
  std::mt19937_64 rng(derive_seed(o.seed, 3));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < o.oracle_instances; ++i) {
    const Index m = 2 + static_cast<Index>(rng() % 14);
    const Matrix a = Matrix::NullaryExpr(m, m + 3, [&]() { return unif(rng) - 0.5; });
    const CovMatrix s(a * a.transpose());
    Vector v(m);
    for (Index j = 0; j < m; ++j) v(j) = std::exp(2.0 * unif(rng) - 1.0) * 4.0;
    const double lp = 0.2 * unif(rng);
    const GStepResult gs = h.gstep(s, v, lp);
    // Independent reconstruction: eigenvalues of V^1/2 Sigma V^1/2 are max(D, 1).
    const Vector root = v.cwiseSqrt();
    Matrix c = root.asDiagonal() * s.matrix() * root.asDiagonal();
    c.diagonal() -= lp * v;
    EigSolver es(c);
    const Matrix expect = root.cwiseInverse().asDiagonal() * es.eigenvectors() *
                          es.eigenvalues().cwiseMax(1.0).asDiagonal() *
                          es.eigenvectors().transpose() * root.cwiseInverse().asDiagonal();
    worst = std::max(worst, max_rel_diff(gs.estimate.sigma().matrix(), expect));
    worst = std::max(worst, max_rel_diff(gs.estimate.residual(), v.cwiseInverse()));
  }
  add(rep, "lemma1", "gstep_closed_form", worst <= 1e-10, worst, 1e-10,
      "Sigma = V^-1/2 U max(D, 1) U^T V^-1/2");

  oracle_agreement(rep, "lemma1", "tm_matches_reference", SdpFormulation::kDiagonal,
                   o.oracle_instances, 15, derive_seed(o.seed, 4), o.threads,
                   [&](const OracleInstance& in) {
                     return h.tm(in.s, in.n, in.lambda).sigma().matrix();
                   });
}

void section_theorem2(VerifyReport& rep, const VerifyOptions& o) {
  const SpikedModel model{400, 800, 1.0, {10.0}};
  const Theorem2Report r = verify_theorem2(model, o.theorem2_trials, derive_seed(o.seed, 5));
  add(rep, "theorem2", "offset_in_bracket", r.offset_pass, r.offset.mean, r.tol,
      "mean s_1 - h_1* = " + std::to_string(r.offset.mean) + " (se " +
          std::to_string(r.offset.se) + "), bracket [" + std::to_string(r.bracket_lo) + ", " +
          std::to_string(r.bracket_hi) + "]");
  add(rep, "theorem2", "spike_location", r.spike_pass, r.spike_rel_err, r.spike_rel_tol,
      "mean s_1 = " + std::to_string(r.top_eig.mean) + " vs " +
          std::to_string(r.spike_prediction));
  const double corr = 2.0 * model.rho() * model.sigma2;
  add(rep, "theorem2", "lambda_guidance_identity",
      std::abs(r.lambda_guidance_correction - corr) <= 1e-12, r.lambda_guidance_correction, 1e-12,
      "2 lambda / N at lambda = M sigma^2 equals 2 rho sigma^2");
}

void section_prop1(VerifyReport& rep, const VerifyOptions& o) {
  const SpikedModel model{1000, 10, 1.0, {10.0, 8.0, 6.0, 4.0, 2.0}};
  const Prop1Report r = verify_prop1_trace(model, o.prop1_trials, 0.1, derive_seed(o.seed, 6));
  add(rep, "prop1", "trace_ratio_concentrates", r.deviation_frequency <= 0.05,
      r.deviation_frequency, 0.05,
      std::to_string(r.deviations) + " of " + std::to_string(o.prop1_trials) +
          " trials with |ratio - 1| >= 0.1 at M=1000, N=10");
  std::vector<double> freq;
  for (Index m : {100, 300, 1000}) {
    SpikedModel mm = model;
    mm.m = m;
    freq.push_back(verify_prop1_trace(mm, o.prop1_trials, 0.1,
                                      derive_seed(o.seed, 7 + static_cast<std::uint64_t>(m)))
                       .deviation_frequency);
  }
  const bool mono = freq[1] <= freq[0] && freq[2] <= freq[1];
  add(rep, "prop1", "deviation_nonincreasing_in_m", mono, freq[2], 0.0,
      "frequencies at M=100,300,1000: " + std::to_string(freq[0]) + ", " +
          std::to_string(freq[1]) + ", " + std::to_string(freq[2]));
}

void section_prop2(VerifyReport& rep, const VerifyHooks& h) {
  double worst = 0.0;
  for (Index m : {2, 5, 20})
    for (double r : {2.0, 4.0, 16.0}) {
      const Prop2Result c = h.prop2(m, r);
      const Prop2Result nmr = prop2_numeric(m, r);
      worst = std::max({worst, std::abs(c.q - nmr.q) / nmr.q,
                        std::abs(c.ratio - nmr.ratio) / nmr.ratio});
    }
  add(rep, "prop2", "closed_form_matches_eigendecomposition", worst <= 1e-8, worst, 1e-8,
      "(M, r) in {2, 5, 20} x {2, 4, 16}");
  const double golden = h.prop2(2, 2.0).ratio;
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  add(rep, "prop2", "golden_ratio_case", std::abs(golden - phi) <= 1e-12,
      std::abs(golden - phi), 1e-12, "M=2, r=2 ratio is (1 + sqrt 5) / 2");
  bool mono = true;
  double prev = 0.0;
  for (double r : {2.0, 4.0, 8.0, 16.0}) {
    const double ratio = h.prop2(10, r).ratio;
    mono = mono && ratio > prev;
    prev = ratio;
  }
  add(rep, "prop2", "ratio_increasing_in_r", mono, prev, 0.0, "M=10, r in {2, 4, 8, 16}");
}

void section_prop3(VerifyReport& rep, const VerifyHooks& h) {
  bool transition = true;
  std::string detail;
  for (auto [m, n] : {std::pair<Index, Index>{3, 2}, {5, 4}}) {
    const double crit = static_cast<double>(m * n) / 2.0;
    for (double r : {2.0, 4.0, 16.0}) {
      const Index below = h.prop3(m, n, 0.9 * crit, r).rank;
      const Index above = h.prop3(m, n, 1.1 * crit, r).rank;
      if (below != 1 || above == 1) {
        transition = false;
        detail += "(M=" + std::to_string(m) + ", N=" + std::to_string(n) + ", r=" +
                  std::to_string(r) + "): ranks " + std::to_string(below) + "/" +
                  std::to_string(above) + " ";
      }
    }
  }
  add(rep, "prop3", "rank_transition_at_mn_over_2", transition, transition ? 1.0 : 0.0, 0.0,
      detail.empty() ? "rank 1 at 0.9 MN/2, not rank 1 at 1.1 MN/2" : detail);

  double worst = 0.0;
  bool all_rank1 = true;
  for (auto [m, n] : {std::pair<Index, Index>{3, 2}, {5, 4}})
    for (double frac : {0.1, 0.5, 0.9})
      for (double r : {2.0, 4.0, 8.0, 16.0}) {
        const Prop3Result p = h.prop3(m, n, frac * static_cast<double>(m * n) / 2.0, r);
        if (!p.ratio) {
          all_rank1 = false;
          continue;
        }
        worst = std::max(worst, std::abs(*p.ratio - p.ratio_closed_form) / p.ratio_closed_form);
      }
  add(rep, "prop3", "ratio_formula_matches_lemma1", all_rank1 && worst <= 1e-8, worst, 1e-8,
      "r (q_+ + 1 - M) vs loadings from the closed-form G-step");

  bool mono = true;
  for (auto [m, n] : {std::pair<Index, Index>{3, 2}, {5, 4}}) {
    double prev = 1.0;
    for (double r : {2.0, 4.0, 8.0, 16.0}) {
      const Prop3Result p = h.prop3(m, n, 0.5 * static_cast<double>(m * n) / 2.0, r);
      const double ratio = p.ratio.value_or(0.0);
      mono = mono && ratio > prev;
      prev = ratio;
    }
  }
  add(rep, "prop3", "ratio_above_one_and_increasing_in_r", mono, mono ? 1.0 : 0.0, 0.0,
      "r in {2, 4, 8, 16} at lambda = MN/4");

  const Prop3Result g = h.prop3(3, 2, 2.0, 4.0);
  const double q_expect = (15.0 + std::sqrt(33.0)) / 8.0;
  const double err = std::max(std::abs(g.q_plus - q_expect),
                              std::abs(g.ratio.value_or(0.0) - 4.0 * (q_expect - 2.0)));
  add(rep, "prop3", "worked_example", g.rank == 1 && err <= 1e-10, err, 1e-10,
      "M=3, N=2, r=4, lambda'=2: q_+ = (15 + sqrt 33) / 8");
}

}  // namespace

VerifyReport run_verification(const VerifyOptions& options, const VerifyHooks& hooks) {
  for (const auto& s : options.only)
    if (std::find(verify_sections().begin(), verify_sections().end(), s) ==
        verify_sections().end())
      throw ParameterError("verify: unknown section '" + s + "'");
  auto wanted = [&](const char* s) { return options.only.empty() || options.only.count(s); };
  VerifyReport rep;
  if (wanted("theorem1")) section_theorem1(rep, options, hooks);
  if (wanted("lemma1")) section_lemma1(rep, options, hooks);
  if (wanted("theorem2")) section_theorem2(rep, options);
  if (wanted("prop1")) section_prop1(rep, options);
  if (wanted("prop2")) section_prop2(rep, hooks);
  if (wanted("prop3")) section_prop3(rep, hooks);
  return rep;
}

}  // namespace factorlens
