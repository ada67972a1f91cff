#pragma once

// Experiment drivers: wrapping growth on orthogonal stacks, sphere moment
// statistics, decision-boundary points and epsilon sweeps.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "certiprop/affine.hpp"
#include "certiprop/doubleton.hpp"
#include "certiprop/ibp.hpp"
#include "certiprop/oracle.hpp"
#include "certiprop/parallel.hpp"
#include "certiprop/random.hpp"

namespace certiprop::experiments {

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
// columns of Q multiplied by sign(R_ii).
inline Matrix haar_orthogonal(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("haar_orthogonal needs n >= 1");
  const CounterRng rng(seed, 0x4a11);
  const auto nn = static_cast<Eigen::Index>(n);
  Matrix g(nn, nn);
  for (Eigen::Index i = 0; i < nn; ++i)
    for (Eigen::Index j = 0; j < nn; ++j) g(i, j) = rng.normal(static_cast<std::uint64_t>(i * nn + j));
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(nn, nn);
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < nn; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

// E|V|_1 for V uniform on the unit sphere of R^n.
inline double expected_r(std::size_t n) {
  if (n < 2) throw ValidationError("E(R) closed form needs n >= 2");
  const double nd = static_cast<double>(n);
  if (n > 2000)
    return 2.0 * nd / (nd - 1.0) * std::exp(std::lgamma(nd / 2.0) - std::lgamma((nd - 1.0) / 2.0)) /
           std::sqrt(std::numbers::pi);
  // g(n) = Gamma(n/2) / (sqrt(pi) Gamma((n-1)/2)): g(2) = 1/pi, g(3) = 1/2,
  // g(m+2) = g(m) m / (m-1).
  long double g = n % 2 == 0 ? 1.0L / std::numbers::pi_v<long double> : 0.5L;
  for (std::size_t m = n % 2 == 0 ? 2 : 3; m < n; m += 2) g *= static_cast<long double>(m) / (m - 1);
  return static_cast<double>(2.0L * n / (n - 1) * g);
}

// E|V|_1^2 = 1 + n(n-1) E|V_1 V_2| with E|V_1 V_2| = 2 / (pi n).
inline double expected_r2(std::size_t n) {
  if (n < 2) throw ValidationError("E(R^2) closed form needs n >= 2");
  return 1.0 + 2.0 * (static_cast<double>(n) - 1.0) / std::numbers::pi;
}

// 1 + (2/pi)(n - 1/(n-2)), a commonly quoted closed form for E(R^2). It agrees
// with expected_r2 only at n = 3.
inline double expected_r2_printed(std::size_t n) {
  if (n < 3) throw ValidationError("printed E(R^2) form needs n >= 3");
  const double nd = static_cast<double>(n);
  return 1.0 + 2.0 / std::numbers::pi * (nd - 1.0 / (nd - 2.0));
}

inline double variance_r(std::size_t n) {
  const double e = expected_r(n);
  return expected_r2(n) - e * e;
}

struct LemmaStats {
  std::size_t n = 0;
  std::size_t samples = 0;
  double E_hat = 0, V_hat = 0;
  double E_closed = 0, V_closed = 0;
  double E_stderr = 0, V_stderr = 0;
};

// Monte-Carlo moments of R = |V|_1 over normalized Gaussian samples.
inline LemmaStats lemma_stats(std::size_t n, std::size_t n_samples, std::uint64_t seed, unsigned threads = 1) {
  if (n < 3) throw ValidationError("lemma_stats needs n >= 3");
  if (n_samples < 2) throw ValidationError("lemma_stats needs at least two samples");
  const CounterRng rng(seed, 0x1e33a);
  std::vector<double> r(n_samples);
  parallel_for(n_samples, threads, [&](std::size_t s) {
    double norm2 = 0, l1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = rng.normal(static_cast<std::uint64_t>(s) * n + i);
      norm2 += g * g;
      l1 += std::fabs(g);
    }
    r[s] = l1 / std::sqrt(norm2);
  });
  LemmaStats st;
  st.n = n;
  st.samples = n_samples;
  const double N = static_cast<double>(n_samples);
  double mean = 0;
  for (double v : r) mean += v;
  mean /= N;
  double m2 = 0, m4 = 0;
  for (double v : r) {
    const double d = (v - mean) * (v - mean);
    m2 += d;
    m4 += d * d;
  }
  m4 /= N;
  st.E_hat = mean;
  st.V_hat = m2 / (N - 1.0);
  st.E_stderr = std::sqrt(st.V_hat / N);
  st.V_stderr = std::sqrt(std::max(0.0, m4 - (m2 / N) * (m2 / N)) / N);
  st.E_closed = expected_r(n);
  st.V_closed = variance_r(n);
  return st;
}

// ---------------------------------------------------------------- wrapping

struct WrappingRow {
  std::size_t trial = 0;
  std::size_t layer = 0;  // 1-based
  std::string method;
  double width_ratio = 0;   // mean width after this layer / before it
  double excess_ratio = 0;  // mean width / mean width of the exact hull
};

struct WrappingStats {
  std::size_t n = 0, k = 0, trials = 0;
  // Per method, k entries averaged over trials.
  std::map<std::string, std::vector<double>> per_layer_ratio;
  std::map<std::string, std::vector<double>> excess_ratio;
  // Per method, k+1 entries: trial-mean of the mean coordinate width, layer 0 = input.
  std::map<std::string, std::vector<double>> mean_width;
  double predicted_ratio = 0;
  double E_R_closed = 0;
  double V_R_closed = 0;
  std::vector<WrappingRow> rows;
};

namespace detail {

inline double mean_width(const IntervalVector& v) {
  double s = 0;
  for (const auto& iv : v) s += iv.hi() - iv.lo();
  return s / static_cast<double>(v.dim());
}

}  // namespace detail

// k Haar-orthogonal layers applied to [-1, 1]^n by IBP, AA and DA. OPT is the
// exact hull of the composed map in long double.
inline WrappingStats run_wrapping(std::size_t n, std::size_t k, std::size_t trials, std::uint64_t seed,
                                  unsigned threads = 1) {
  if (n < 2) throw ValidationError("run_wrapping needs n >= 2");
  if (k < 1) throw ValidationError("run_wrapping needs k >= 1");
  if (trials < 1) throw ValidationError("run_wrapping needs at least one trial");
  static const std::vector<std::string> methods = {"IBP", "AA", "DA", "OPT"};
  const auto nn = static_cast<Eigen::Index>(n);
  const std::size_t nm = methods.size();
  // widths[trial][method][layer]
  std::vector<std::vector<std::vector<double>>> widths(trials, std::vector<std::vector<double>>(nm, std::vector<double>(k + 1)));

  parallel_for(trials, threads, [&](std::size_t t) {
    const InputRegion region(Vector::Zero(nn), Vector::Ones(nn));
    const Vector zero = Vector::Zero(nn);
    IntervalVector box = region.box();
    affine::SymbolContext ctx;
    affine::AffineVector forms = affine::aa_from_region(region, ctx);
    doubleton::Doubleton db = doubleton::db_from_region(region);
    using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    LMatrix prod = LMatrix::Identity(nn, nn);
    auto& w = widths[t];
    for (std::size_t m = 0; m < nm; ++m) w[m][0] = 2.0;
    for (std::size_t j = 1; j <= k; ++j) {
      const Matrix U = haar_orthogonal(n, splitmix64(seed) ^ (t * k + j));
      box = ibp::ibp_affine(U, zero, box);
      forms = affine::aa_affine(U, zero, forms, ctx, static_cast<int>(j));
      db = doubleton::db_affine(U, zero, db);
      prod = U.cast<long double>() * prod;
      w[0][j] = detail::mean_width(box);
      w[1][j] = detail::mean_width(affine::ranges(forms));
      w[2][j] = detail::mean_width(db.hull());
      w[3][j] = static_cast<double>(2.0L * prod.cwiseAbs().sum() / static_cast<long double>(n));
    }
  });

  WrappingStats st;
  st.n = n;
  st.k = k;
  st.trials = trials;
  st.predicted_ratio = std::sqrt(2.0 * static_cast<double>(n) / std::numbers::pi);
  st.E_R_closed = expected_r(n);
  st.V_R_closed = n >= 3 ? variance_r(n) : std::nan("");
  for (std::size_t m = 0; m < nm; ++m) {
    auto& ratio = st.per_layer_ratio[methods[m]];
    auto& excess = st.excess_ratio[methods[m]];
    auto& mw = st.mean_width[methods[m]];
    ratio.assign(k, 0.0);
    excess.assign(k, 0.0);
    mw.assign(k + 1, 0.0);
    for (std::size_t t = 0; t < trials; ++t)
      for (std::size_t j = 0; j <= k; ++j) mw[j] += widths[t][m][j] / static_cast<double>(trials);
    for (std::size_t t = 0; t < trials; ++t)
      for (std::size_t j = 1; j <= k; ++j) {
        const double g = widths[t][m][j] / widths[t][m][j - 1];
        const double e = widths[t][m][j] / widths[t][3][j];
        ratio[j - 1] += g / static_cast<double>(trials);
        excess[j - 1] += e / static_cast<double>(trials);
      }
  }
  for (std::size_t t = 0; t < trials; ++t)
    for (std::size_t m = 0; m < nm; ++m)
      for (std::size_t j = 1; j <= k; ++j)
        st.rows.push_back({t, j, methods[m], widths[t][m][j] / widths[t][m][j - 1], widths[t][m][j] / widths[t][3][j]});
  return st;
}

// ---------------------------------------------------------------- boundary points

struct BoundaryResult {
  std::vector<Vector> points;
  std::vector<std::pair<std::size_t, std::size_t>> segments;  // representative pairs that produced a point
  std::vector<std::pair<std::size_t, std::size_t>> skipped;   // pairs whose endpoints share a class
};

inline std::size_t predicted_class(const NetworkSpec& logits, const Vector& x) {
  return argmax(eval_point(logits, x));
}

// Bisection on every segment between two representatives of different
// predicted classes until the class flip is bracketed within tol in the
// segment parameter. The midpoint of the last bracket is returned.
inline BoundaryResult boundary_points(const NetworkSpec& spec, const std::vector<Vector>& reps, double tol = 1e-6) {
  if (reps.size() < 2) throw ValidationError("boundary_points needs at least two representatives");
  const NetworkSpec logits = strip_softmax(spec);
  BoundaryResult res;
  for (std::size_t a = 0; a < reps.size(); ++a)
    for (std::size_t b = a + 1; b < reps.size(); ++b) {
      const Vector& xa = reps[a];
      const Vector& xb = reps[b];
      require_dims(static_cast<std::size_t>(xa.size()) == spec.input_dim() &&
                       static_cast<std::size_t>(xb.size()) == spec.input_dim(),
                   "representative dimension");
      const std::size_t ca = predicted_class(logits, xa);
      if (ca == predicted_class(logits, xb)) {
        res.skipped.emplace_back(a, b);
        continue;
      }
      double lo = 0.0, hi = 1.0;
      while (hi - lo > tol) {
        const double t = 0.5 * (lo + hi);
        if (predicted_class(logits, (1.0 - t) * xa + t * xb) == ca) lo = t;
        else hi = t;
      }
      const double t = 0.5 * (lo + hi);
      res.points.push_back((1.0 - t) * xa + t * xb);
      res.segments.emplace_back(a, b);
    }
  if (res.points.empty()) throw ValidationError("boundary_points: all representatives share one predicted class");
  return res;
}

// First sample per class (in input order) whose prediction matches its label.
inline std::vector<Vector> select_representatives(const NetworkSpec& spec, const std::vector<Vector>& samples,
                                                  const std::vector<int>& labels) {
  require_dims(samples.size() == labels.size(), "samples vs labels");
  const NetworkSpec logits = strip_softmax(spec);
  std::map<int, Vector> first;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!first.count(labels[i]) && static_cast<int>(predicted_class(logits, samples[i])) == labels[i])
      first.emplace(labels[i], samples[i]);
  std::vector<Vector> out;
  for (auto& [label, x] : first) out.push_back(x);
  return out;
}

// Zeroes exactly round(fraction * dim) coordinates of every point, chosen by
// a per-point deterministic shuffle.
inline std::vector<Vector> mask_inputs(const std::vector<Vector>& points, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("mask fraction must lie in [0, 1]");
  std::vector<Vector> out = points;
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto dim = static_cast<std::size_t>(out[p].size());
    const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(dim)));
    const CounterRng rng(seed, 0x3a5c + p);
    std::vector<std::size_t> idx(dim);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = dim; i > 1; --i) std::swap(idx[i - 1], idx[rng.bits(i) % i]);
    for (std::size_t i = 0; i < count; ++i) out[p][static_cast<Eigen::Index>(idx[i])] = 0.0;
  }
  return out;
}

// ---------------------------------------------------------------- sweeps

inline std::vector<double> default_eps_grid() { return {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1}; }

struct SweepOptions {
  bool with_softmax = false;
  doubleton::Strategy strategy = doubleton::Strategy::Hybrid;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
  std::size_t condense_budget = 0;
  unsigned threads = 1;
};

struct SweepResult {
  std::vector<double> eps_grid;
  std::vector<Method> methods;
  // mean_max_diameter[m][e]
  std::vector<std::vector<double>> mean_max_diameter;
  std::size_t n_points = 0;
  std::map<std::string, std::string> metadata;
};

inline BoundReport run_method(Method m, const NetworkSpec& spec, const InputRegion& region, const SweepOptions& opt,
                              std::uint64_t seed) {
  switch (m) {
    case Method::IBP: return ibp::ibp_forward(spec, region, opt.with_softmax);
    case Method::AA: return affine::aa_forward(spec, region, opt.with_softmax, opt.condense_budget);
    case Method::DA: return doubleton::db_forward(spec, region, opt.strategy, opt.with_softmax);
    case Method::LB:
      return oracle::lb_sample(opt.with_softmax ? spec : strip_softmax(spec), region, opt.n_samples, seed);
    case Method::EXACT: return oracle::exact_hull_linear(opt.with_softmax ? spec : strip_softmax(spec), region);
  }
  throw ValidationError("unknown method");
}

// Per eps and method: mean over points of the max output width.
inline SweepResult run_sweep(const NetworkSpec& spec, const std::vector<Vector>& points,
                             const std::vector<double>& eps_grid, const std::vector<Method>& methods,
                             const SweepOptions& opt) {
  if (eps_grid.empty()) throw ValidationError("eps grid is empty");
  if (points.empty()) throw ValidationError("sweep needs at least one point");
  if (methods.empty()) throw ValidationError("sweep needs at least one method");
  for (double e : eps_grid)
    if (!(e >= 0) || !std::isfinite(e)) throw ValidationError("eps values must be finite and >= 0");
  const std::size_t ne = eps_grid.size(), np = points.size(), nm = methods.size();
  std::vector<double> cell(ne * np * nm);
  parallel_for(ne * np, opt.threads, [&](std::size_t task) {
    const std::size_t e = task / np, p = task % np;
    const InputRegion region = InputRegion::uniform(points[p], eps_grid[e]);
    for (std::size_t m = 0; m < nm; ++m)
      cell[task * nm + m] = run_method(methods[m], spec, region, opt, splitmix64(opt.seed) ^ task).max_width;
  });
  SweepResult res;
  res.eps_grid = eps_grid;
  res.methods = methods;
  res.n_points = np;
  res.mean_max_diameter.assign(nm, std::vector<double>(ne, 0.0));
  for (std::size_t e = 0; e < ne; ++e)
    for (std::size_t p = 0; p < np; ++p)
      for (std::size_t m = 0; m < nm; ++m)
        res.mean_max_diameter[m][e] += cell[(e * np + p) * nm + m] / static_cast<double>(np);
  res.metadata["points"] = std::to_string(np);
  res.metadata["softmax"] = opt.with_softmax ? "on" : "off";
  res.metadata["strategy"] = doubleton::strategy_name(opt.strategy);
  return res;
}

// ---------------------------------------------------------------- CSV

inline void write_metadata(std::ostream& os, const std::map<std::string, std::string>& meta) {
  for (const auto& [k, v] : meta) os << "# " << k << "=" << v << "\n";
}

inline void write_wrapping_csv(std::ostream& os, const WrappingStats& st, const std::map<std::string, std::string>& meta = {}) {
  using certiprop::detail::shortest;
  write_metadata(os, meta);
  os << "n,k,trial,layer,method,width_ratio,excess_ratio\n";
  for (const auto& r : st.rows)
    os << st.n << "," << st.k << "," << r.trial << "," << r.layer << "," << r.method << "," << shortest(r.width_ratio)
       << "," << shortest(r.excess_ratio) << "\n";
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& res, const std::map<std::string, std::string>& meta = {}) {
  using certiprop::detail::shortest;
  write_metadata(os, meta);
  os << "eps,method,mean_max_diameter\n";
  for (std::size_t e = 0; e < res.eps_grid.size(); ++e)
    for (std::size_t m = 0; m < res.methods.size(); ++m)
      os << shortest(res.eps_grid[e]) << "," << method_name(res.methods[m]) << ","
         << shortest(res.mean_max_diameter[m][e]) << "\n";
}

inline void write_lemma_csv(std::ostream& os, const std::vector<LemmaStats>& stats,
                            const std::map<std::string, std::string>& meta = {}) {
  using certiprop::detail::shortest;
  write_metadata(os, meta);
  os << "n,E_hat,E_closed,V_hat,V_closed,stderr,V_stderr\n";
  for (const auto& s : stats)
    os << s.n << "," << shortest(s.E_hat) << "," << shortest(s.E_closed) << "," << shortest(s.V_hat) << ","
       << shortest(s.V_closed) << "," << shortest(s.E_stderr) << "," << shortest(s.V_stderr) << "\n";
}

}  // namespace certiprop::experiments
