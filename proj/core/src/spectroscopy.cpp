#include "atomforge/spectroscopy.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "atomforge/errors.hpp"
#include "atomforge/optics.hpp"

namespace atomforge::spectroscopy {

double lorentzian(double x, double width) {
  const double q = 2.0 * x / width;
  return 1.0 / (1.0 + q * q);
}

double blowout_survival(double detuning_mhz, double center_mhz, double width_mhz, double depth, double floor) {
  const double s = floor + (1.0 - floor) * (1.0 - depth * lorentzian(detuning_mhz - center_mhz, width_mhz));
  return std::clamp(s, 0.0, 1.0);
}

double mixture_survival(double detuning_mhz, const MixtureModel& m) {
  double trapped = 0.0;
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    trapped += m.weights[i] * blowout_survival(detuning_mhz, m.centers_mhz[i], m.width_mhz, m.depth, m.floor);
    total += m.weights[i];
  }
  return trapped + (1.0 - total);
}

namespace {

void check_curve(const SurvivalCurve& c, std::size_t min_points) {
  if (c.detunings_mhz.size() != c.survival.size())
    throw ModelError("survival curve: detuning and survival lengths differ");
  if (c.detunings_mhz.size() < min_points)
    throw ModelError(fmt::format("survival curve: need at least {} points, got {}", min_points, c.detunings_mhz.size()));
  for (std::size_t i = 1; i < c.detunings_mhz.size(); ++i)
    if (!(c.detunings_mhz[i] > c.detunings_mhz[i - 1]))
      throw ModelError("survival curve: detunings must be strictly increasing");
}

// Parameter vector: center, width, depth, baseline.
struct BlowoutModel {
  double floor;
  double value(double x, const Eigen::Vector4d& p) const {
    return p[3] * (floor + (1.0 - floor) * (1.0 - p[2] * lorentzian(x - p[0], p[1])));
  }
  Eigen::RowVector4d gradient(double x, const Eigen::Vector4d& p) const {
    const double q = 2.0 * (x - p[0]) / p[1];
    const double l = 1.0 / (1.0 + q * q);
    const double dl_dc = l * l * 2.0 * q * (2.0 / p[1]);
    const double dl_dw = l * l * 2.0 * q * q / p[1];
    const double a = p[3] * (1.0 - floor) * p[2];
    Eigen::RowVector4d g;
    g << -a * dl_dc, -a * dl_dw, -p[3] * (1.0 - floor) * l, floor + (1.0 - floor) * (1.0 - p[2] * l);
    return g;
  }
};

}  // namespace

BlowoutFit fit_blowout(const SurvivalCurve& curve, const BlowoutFitOptions& opt) {
  check_curve(curve, 8);
  const auto& x = curve.detunings_mhz;
  const auto& y = curve.survival;
  const auto n = static_cast<Eigen::Index>(x.size());

  BlowoutFit out;
  out.floor = opt.floor;

  const auto [min_it, max_it] = std::minmax_element(y.begin(), y.end());
  if (*max_it - *min_it < opt.min_contrast) return out;

  // Initial guess: baseline from the upper quartile, center at the minimum,
  // width from the half-depth crossings around it.
  std::vector<double> sorted = y;
  std::sort(sorted.begin(), sorted.end());
  const double baseline0 = sorted[(3 * sorted.size()) / 4];
  const auto imin = static_cast<std::size_t>(min_it - y.begin());
  const double half = 0.5 * (baseline0 + *min_it);
  std::size_t lo = imin;
  std::size_t hi = imin;
  while (lo > 0 && y[lo] < half) --lo;
  while (hi + 1 < y.size() && y[hi] < half) ++hi;
  const double span = x.back() - x.front();
  double width0 = std::max(x[hi] - x[lo], span / (2.0 * static_cast<double>(x.size())));
  const double depth0 = std::clamp((baseline0 - *min_it) / (baseline0 * (1.0 - opt.floor)), 0.05, 1.0);

  BlowoutModel model{opt.floor};
  Eigen::Vector4d p(x[imin], width0, depth0, baseline0);
  auto cost_of = [&](const Eigen::Vector4d& q) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = y[i] - model.value(x[i], q);
      c += r * r;
    }
    return c;
  };
  auto clamp_params = [&](Eigen::Vector4d& q) {
    q[1] = std::max(q[1], 1e-6 * span);
    q[2] = std::clamp(q[2], 0.0, 1.0);
    q[3] = std::max(q[3], 1e-9);
  };

  double cost = cost_of(p);
  double lambda = 1e-3;
  bool converged = false;
  Eigen::MatrixXd jac(n, 4);
  Eigen::VectorXd res(n);
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      jac.row(i) = model.gradient(x[i], p);
      res[i] = y[i] - model.value(x[i], p);
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d jtr = jac.transpose() * res;
    bool improved = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::Matrix4d a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      Eigen::Vector4d trial = p + a.ldlt().solve(jtr);
      clamp_params(trial);
      const double c = cost_of(trial);
      if (std::isfinite(c) && c <= cost) {
        const double rel = (cost - c) / std::max(cost, 1e-300);
        const double step = (trial - p).cwiseAbs().maxCoeff();
        p = trial;
        cost = c;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = true;
        if (rel < 1e-12 || step < 1e-10) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      // No downhill step at any damping: p sits at a minimum.
      converged = true;
    }
    if (converged) break;
  }
  if (!converged)
    throw ModelError(fmt::format("fit_blowout: no convergence after {} iterations", opt.max_iterations));

  for (Eigen::Index i = 0; i < n; ++i) jac.row(i) = model.gradient(x[i], p);
  const double dof = std::max<double>(1.0, static_cast<double>(n) - 4.0);
  const double sigma2 = cost / dof;
  const Eigen::Matrix4d jtj = jac.transpose() * jac;
  Eigen::Matrix4d cov = Eigen::Matrix4d::Constant(std::numeric_limits<double>::quiet_NaN());
  Eigen::FullPivLU<Eigen::Matrix4d> lu(jtj);
  if (lu.isInvertible()) cov = lu.inverse() * sigma2;

  out.center_mhz = p[0];
  out.width_mhz = p[1];
  out.depth = p[2];
  out.baseline = p[3];
  out.center_err = std::sqrt(cov(0, 0));
  out.width_err = std::sqrt(cov(1, 1));
  out.depth_err = std::sqrt(cov(2, 2));
  out.baseline_err = std::sqrt(cov(3, 3));
  out.residual_norm = std::sqrt(cost);
  out.iterations = iter + 1;
  out.has_dip = out.baseline * out.depth * (1.0 - out.floor) >= opt.min_contrast;
  return out;
}

MixtureFit fit_mixture(const SurvivalCurve& curve, const std::array<double, 3>& centers, double width, double depth,
                       double floor) {
  check_curve(curve, 3);
  MixtureFit out;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (std::abs(centers[i] - centers[j]) < 0.5 * width) out.identifiable = false;
  if (!out.identifiable) {
    out.weights.fill(std::numeric_limits<double>::quiet_NaN());
    out.weight_errs.fill(std::numeric_limits<double>::quiet_NaN());
    return out;
  }

  // Linear in the weights: y - 1 = sum_i w_i (b_i(x) - 1).
  const auto n = static_cast<Eigen::Index>(curve.detunings_mhz.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int i = 0; i < 3; ++i)
      a(r, i) = blowout_survival(curve.detunings_mhz[r], centers[i], width, depth, floor) - 1.0;
    b[r] = curve.survival[r] - 1.0;
  }

  // Convex QP in three variables: the optimum is the unconstrained minimizer
  // on one face of the feasible simplex, so enumerate every face.
  const Eigen::Matrix3d g = a.transpose() * a;
  const Eigen::Vector3d h = a.transpose() * b;
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  auto cost_of = [&](const Eigen::Vector3d& w) { return (a * w - b).squaredNorm(); };
  auto consider = [&](const Eigen::Vector3d& w) {
    if ((w.array() < -1e-12).any() || w.sum() > 1.0 + 1e-12) return;
    const double c = cost_of(w);
    if (c < best_cost) {
      best_cost = c;
      best = w.cwiseMax(0.0);
    }
  };
  for (int mask = 0; mask < 8; ++mask) {
    std::vector<int> free;
    for (int i = 0; i < 3; ++i)
      if (mask & (1 << i)) free.push_back(i);
    const auto k = static_cast<Eigen::Index>(free.size());
    if (k == 0) {
      consider(Eigen::Vector3d::Zero());
      continue;
    }
    Eigen::MatrixXd gs(k, k);
    Eigen::VectorXd hs(k);
    for (Eigen::Index r = 0; r < k; ++r) {
      hs[r] = h[free[r]];
      for (Eigen::Index c = 0; c < k; ++c) gs(r, c) = g(free[r], free[c]);
    }
    // Interior of the face.
    {
      Eigen::VectorXd ws = gs.ldlt().solve(hs);
      Eigen::Vector3d w = Eigen::Vector3d::Zero();
      for (Eigen::Index r = 0; r < k; ++r) w[free[r]] = ws[r];
      if (ws.allFinite()) consider(w);
    }
    // Same face with the sum constraint active (KKT system).
    {
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
      kkt.topLeftCorner(k, k) = gs;
      kkt.block(0, k, k, 1).setOnes();
      kkt.block(k, 0, 1, k).setOnes();
      Eigen::VectorXd rhs(k + 1);
      rhs.head(k) = hs;
      rhs[k] = 1.0;
      Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
      Eigen::Vector3d w = Eigen::Vector3d::Zero();
      for (Eigen::Index r = 0; r < k; ++r) w[free[r]] = sol[r];
      if (sol.allFinite()) consider(w);
    }
  }

  const double dof = std::max<double>(1.0, static_cast<double>(n) - 3.0);
  const double sigma2 = best_cost / dof;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(g);
  for (int i = 0; i < 3; ++i) {
    out.weights[i] = best[i];
    out.weight_errs[i] = lu.isInvertible() ? std::sqrt(sigma2 * lu.inverse()(i, i))
                                           : std::numeric_limits<double>::quiet_NaN();
  }
  out.residual_norm = std::sqrt(best_cost);
  return out;
}

// ---------------------------------------------------------------------------

TwoPhotonResponse two_photon_response(const DetuningPair& d, const TwoPhotonParams& p) {
  // The tweezer light shift moves the two-photon (7S) resonance; the D2 leg
  // is at the magic wavelength and does not move.
  const double d2_shift = optics::magic_d2_shift(1.0);
  const double two_photon_detuning = d.delta_852_mhz + d.delta_1470_mhz - p.light_shift_mhz;
  const double loss = p.loss_rate_per_ms * (lorentzian(d.delta_852_mhz - d2_shift, p.gamma_852_mhz) +
                                            lorentzian(d.delta_852_mhz - kHyperfineOffsetMhz - d2_shift, p.gamma_852_mhz));
  TwoPhotonResponse r;
  r.signal = p.amplitude * lorentzian(two_photon_detuning, p.gamma_two_photon_mhz);
  r.survival = std::exp(-loss * p.exposure_ms);
  r.detected = r.survival == 0.0 ? 0.0 : r.signal * r.survival;
  return r;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(std::max(n, 0)));
  if (n == 1) v[0] = lo;
  for (int i = 0; n > 1 && i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  return v;
}

TwoPhotonMap two_photon_map(const std::vector<double>& d852, const std::vector<double>& d1470,
                            const TwoPhotonParams& params) {
  TwoPhotonMap m;
  m.delta_852_mhz = d852;
  m.delta_1470_mhz = d1470;
  m.detected.reserve(d852.size() * d1470.size());
  for (double a : d852)
    for (double b : d1470) m.detected.push_back(two_photon_response({a, b}, params).detected);
  return m;
}

// ---------------------------------------------------------------------------

LifetimeData lifetime_curve(const std::vector<double>& hold_times_s, double tau_s, int n_atoms, Rng& rng) {
  if (!(tau_s > 0)) throw ModelError("lifetime_curve: tau must be > 0");
  if (n_atoms < 1) throw ModelError("lifetime_curve: n_atoms must be >= 1");
  LifetimeData d;
  d.hold_times_s = hold_times_s;
  d.n_atoms = n_atoms;
  for (double t : hold_times_s) {
    if (t < 0) throw ModelError("lifetime_curve: hold times must be >= 0");
    std::binomial_distribution<int> draw(n_atoms, std::exp(-t / tau_s));
    d.survivors.push_back(draw(rng));
  }
  return d;
}

LifetimeFit fit_lifetime(const LifetimeData& d) {
  if (d.hold_times_s.size() != d.survivors.size()) throw ModelError("fit_lifetime: length mismatch");
  const double n = d.n_atoms;
  std::vector<double> t;
  std::vector<double> y;
  bool any_nonzero = false;
  for (std::size_t i = 0; i < d.hold_times_s.size(); ++i) {
    if (d.hold_times_s[i] <= 0) continue;  // ln p = 0 there carries no rate information
    const double k = d.survivors[i];
    any_nonzero |= k > 0;
    const double p = std::clamp(k, 0.5, n - 0.5) / n;
    t.push_back(d.hold_times_s[i]);
    y.push_back(std::log(p));
  }
  if (t.empty()) throw ModelError("fit_lifetime: need at least one hold time > 0");
  if (!any_nonzero) throw ModelError("fit_lifetime: all counts are zero; lifetime not identifiable");

  // Slope through the origin; weights from the current model.
  double rate = 0.0;
  {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      num += -t[i] * y[i];
      den += t[i] * t[i];
    }
    rate = num / den;
  }
  double info = 0.0;
  for (int iter = 0; iter < 20; ++iter) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double p = std::clamp(std::exp(-rate * t[i]), 1e-12, 1.0 - 1e-12);
      const double w = n * p / (1.0 - p);
      num += -w * t[i] * y[i];
      den += w * t[i] * t[i];
    }
    const double next = num / den;
    info = den;
    const bool done = std::abs(next - rate) <= 1e-12 * std::abs(rate);
    rate = next;
    if (done) break;
  }
  if (!(rate > 0)) throw ModelError("fit_lifetime: non-positive decay rate");
  LifetimeFit out;
  out.tau_s = 1.0 / rate;
  out.tau_err_s = out.tau_s * out.tau_s / std::sqrt(info);
  return out;
}

}  // namespace atomforge::spectroscopy
