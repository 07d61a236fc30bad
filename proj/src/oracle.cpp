#include "rsmc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "rsmc/errors.hpp"

namespace rsmc {

namespace {

constexpr char kMagic[8] = {'R', 'S', 'M', 'C', 'G', 'R', 'D', '1'};

double log_sum_exp(const std::vector<double>& v) {
  double mx = -INFINITY;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double acc = 0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

// Integral over [a, b] of |c - (f0 + s (x - a))|.
double abs_linear_integral(double a, double b, double c, double f0, double f1) {
  const double u = c - f0, w = c - f1;
  if (b <= a) return 0;
  if ((u >= 0) == (w >= 0)) return 0.5 * (std::abs(u) + std::abs(w)) * (b - a);
  const double root = a + (b - a) * u / (u - w);
  return 0.5 * std::abs(u) * (root - a) + 0.5 * std::abs(w) * (b - root);
}

}  // namespace

GridOracle::GridOracle(GridSpec spec, std::vector<double> log_pmf, double log_z)
    : spec_(spec), log_pmf_(std::move(log_pmf)), log_z_(log_z) {}

std::vector<double> GridOracle::pmf() const {
  std::vector<double> p(log_pmf_.size());
  std::transform(log_pmf_.begin(), log_pmf_.end(), p.begin(), [](double l) { return std::exp(l); });
  return p;
}

std::optional<int> GridOracle::cell_index(const Vec& x) const {
  const double w = cell_width();
  const int i = static_cast<int>(std::floor((x[0] - spec_.lo) / w));
  const int j = static_cast<int>(std::floor((x[1] - spec_.lo) / w));
  if (x[0] < spec_.lo || x[1] < spec_.lo || i < 0 || j < 0 || i >= spec_.resolution || j >= spec_.resolution)
    return std::nullopt;
  return j * spec_.resolution + i;
}

Vec GridOracle::cell_center(int index) const {
  const double w = cell_width();
  Vec c(2);
  c[0] = spec_.lo + (index % spec_.resolution + 0.5) * w;
  c[1] = spec_.lo + (index / spec_.resolution + 0.5) * w;
  return c;
}

GridOracle GridOracle::coarsen(int factor) const {
  if (factor < 1 || spec_.resolution % factor != 0)
    throw DomainError("coarsening factor must divide the grid resolution");
  const int n = spec_.resolution, m = n / factor;
  std::vector<double> p(std::size_t(m) * m, 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) p[(j / factor) * m + i / factor] += std::exp(log_pmf_[j * n + i]);
  std::vector<double> lp(p.size());
  std::transform(p.begin(), p.end(), lp.begin(), [](double v) { return std::log(v); });
  return GridOracle({spec_.lo, spec_.hi, m}, std::move(lp), log_z_);
}

std::array<std::vector<double>, 2> GridOracle::marginals() const {
  const int n = spec_.resolution;
  std::array<std::vector<double>, 2> out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double p = std::exp(log_pmf_[j * n + i]);
      out[0][i] += p;
      out[1][j] += p;
    }
  return out;
}

void GridOracle::save(const std::string& path, std::uint64_t key) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write oracle cache '" + path + "'");
  f.write(kMagic, sizeof kMagic);
  f.write(reinterpret_cast<const char*>(&key), sizeof key);
  f.write(reinterpret_cast<const char*>(&spec_.lo), sizeof(double));
  f.write(reinterpret_cast<const char*>(&spec_.hi), sizeof(double));
  const std::int32_t res = spec_.resolution;
  f.write(reinterpret_cast<const char*>(&res), sizeof res);
  f.write(reinterpret_cast<const char*>(&log_z_), sizeof(double));
  f.write(reinterpret_cast<const char*>(log_pmf_.data()), std::streamsize(log_pmf_.size() * sizeof(double)));
  if (!f) throw std::runtime_error("failed writing oracle cache '" + path + "'");
}

std::optional<GridOracle> GridOracle::load(const std::string& path, std::uint64_t key) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  char magic[8];
  std::uint64_t stored = 0;
  GridSpec spec;
  std::int32_t res = 0;
  double log_z = 0;
  f.read(magic, sizeof magic);
  f.read(reinterpret_cast<char*>(&stored), sizeof stored);
  if (!f || std::memcmp(magic, kMagic, sizeof magic) != 0) return std::nullopt;
  if (key != 0 && stored != key) return std::nullopt;
  f.read(reinterpret_cast<char*>(&spec.lo), sizeof(double));
  f.read(reinterpret_cast<char*>(&spec.hi), sizeof(double));
  f.read(reinterpret_cast<char*>(&res), sizeof res);
  f.read(reinterpret_cast<char*>(&log_z), sizeof(double));
  if (!f || res < 1 || res > 100000) return std::nullopt;
  spec.resolution = res;
  std::vector<double> lp(std::size_t(res) * res);
  f.read(reinterpret_cast<char*>(lp.data()), std::streamsize(lp.size() * sizeof(double)));
  if (!f) return std::nullopt;
  return GridOracle(spec, std::move(lp), log_z);
}

GridOracle grid_normalize(const LogDensity& log_density, GridSpec spec, double outside_mass_bound) {
  if (spec.resolution < 1 || !(spec.hi > spec.lo)) throw DomainError("invalid grid bounds or resolution");
  const int n = spec.resolution;
  const double w = (spec.hi - spec.lo) / n;
  std::vector<double> lf(std::size_t(n) * n);
  Vec x(2);
  for (int j = 0; j < n; ++j) {
    x[1] = spec.lo + (j + 0.5) * w;
    for (int i = 0; i < n; ++i) {
      x[0] = spec.lo + (i + 0.5) * w;
      const double v = log_density(x);
      if (std::isnan(v) || v == INFINITY) throw OracleRefusal("density is not finite on the grid");
      lf[j * n + i] = v;
    }
  }
  const double log_mass = log_sum_exp(lf);
  if (!std::isfinite(log_mass)) throw OracleRefusal("density has no mass on the grid");
  const double log_z = log_mass + 2 * std::log(w);
  const double ratio = outside_mass_bound / std::exp(log_z);
  if (!(ratio <= kMaxOutsideMass)) {
    std::ostringstream msg;
    msg << "grid [" << spec.lo << ", " << spec.hi << "]^2 may miss " << ratio
        << " of the mass (limit " << kMaxOutsideMass << "); widen the bounds";
    throw OracleRefusal(msg.str());
  }
  for (double& v : lf) v -= log_mass;
  return GridOracle(spec, std::move(lf), log_z);
}

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::P0: return "p0";
    case TargetKind::P0Star: return "p0_star";
    case TargetKind::P1Posterior: return "p1_posterior";
  }
  return "?";
}

namespace {

double standard_normal_outside(double lo, double hi, int dim) {
  return std::min(1.0, dim * (standard_normal_cdf(lo) + 1.0 - standard_normal_cdf(hi)));
}

double tilt_factor(const TiltedTarget& target) {
  const auto sup = target.reward().upper_bound();
  if (!sup) throw OracleRefusal("reward is unbounded above; cannot bound mass outside the grid");
  return std::exp(*sup / target.temperature());
}

}  // namespace

GridOracle build_oracle(const TiltedTarget& target, TargetKind kind, GridSpec spec) {
  if (target.dim() != 2) throw DomainError("grid oracles are two-dimensional only");
  switch (kind) {
    case TargetKind::P0:
      return marginal_oracle(target.model(), 0.0, spec);
    case TargetKind::P0Star:
      return grid_normalize([&](const Vec& x) { return target.target_log_density_0(x); }, spec,
                            tilt_factor(target) * target.model().outside_mass_bound(spec.lo, spec.hi));
    case TargetKind::P1Posterior:
      return grid_normalize([&](const Vec& x) { return target.posterior_log_density_1(x); }, spec,
                            tilt_factor(target) * standard_normal_outside(spec.lo, spec.hi, 2));
  }
  throw DomainError("unknown oracle target");
}

GridOracle marginal_oracle(const GmmModel& model, double t, GridSpec spec) {
  if (model.dim() != 2) throw DomainError("grid oracles are two-dimensional only");
  const Coefficients c = model.interpolant().coefficients(t);
  std::vector<Vec> means;
  std::vector<double> vars;
  for (int i = 0; i < model.size(); ++i) {
    means.push_back(c.alpha * model.means()[i]);
    vars.push_back(c.alpha * c.alpha * model.variances()[i] + c.sigma * c.sigma);
  }
  const GmmModel pt(model.weights(), means, vars);
  return grid_normalize([&](const Vec& x) { return pt.log_density_t(x, 0.0); }, spec,
                        pt.outside_mass_bound(spec.lo, spec.hi));
}

std::uint64_t oracle_cache_key(const TiltedTarget& target, TargetKind kind, const GridSpec& spec) {
  std::ostringstream s;
  s.precision(17);
  const GmmModel& m = target.model();
  s << to_string(kind) << '|' << spec.lo << ',' << spec.hi << ',' << spec.resolution << '|';
  for (int i = 0; i < m.size(); ++i) {
    s << m.weights()[i] << ':' << m.variances()[i];
    for (int a = 0; a < m.dim(); ++a) s << ',' << m.means()[i][a];
    s << ';';
  }
  const RewardModel& r = target.reward();
  s << '|' << int(r.kind()) << ',' << r.temperature() << ',' << r.sharpness();
  for (const Vec& c : r.centers())
    for (int a = 0; a < c.size(); ++a) s << ',' << c[a];
  for (int a = 0; a < r.vector_param().size(); ++a) s << ',' << r.vector_param()[a];
  const Schedule& sch = target.schedule();
  s << '|' << sch.tweedie_delta;
  return fnv1a(s.str());
}

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw DomainError("TV between pmfs of different sizes");
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

std::vector<double> histogram(const std::vector<Vec>& samples, const GridOracle& oracle,
                              const std::vector<double>* weights, double* outside) {
  const int n = oracle.resolution();
  std::vector<double> h(std::size_t(n) * n, 0.0);
  double total = 0, out = 0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const double w = weights ? (*weights)[s] : 1.0;
    total += w;
    if (auto idx = oracle.cell_index(samples[s])) h[*idx] += w;
    else out += w;
  }
  if (total > 0) {
    for (double& v : h) v /= total;
    out /= total;
  }
  if (outside) *outside = out;
  return h;
}

double tv_distance(const std::vector<Vec>& samples, const GridOracle& oracle, const std::vector<double>* weights) {
  if (samples.empty()) throw DomainError("TV needs at least one sample");
  double outside = 0;
  const std::vector<double> h = histogram(samples, oracle, weights, &outside);
  return tv_distance(h, oracle.pmf()) + 0.5 * outside;
}

std::array<double, 2> w1_per_axis(const std::vector<Vec>& samples, const GridOracle& oracle,
                                  const std::vector<double>* weights) {
  if (samples.empty()) throw DomainError("W1 needs at least one sample");
  const auto marg = oracle.marginals();
  const double lo = oracle.spec().lo, w = oracle.cell_width();
  const int n = oracle.resolution();
  std::array<double, 2> out{};
  for (int axis = 0; axis < 2; ++axis) {
    std::vector<std::pair<double, double>> pts;
    double total = 0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const double wt = weights ? (*weights)[s] : 1.0;
      pts.emplace_back(samples[s][axis], wt);
      total += wt;
    }
    std::sort(pts.begin(), pts.end());
    // Oracle CDF is piecewise linear over cells; the empirical CDF is a step function.
    std::vector<double> knots;
    for (int i = 0; i <= n; ++i) knots.push_back(lo + i * w);
    for (auto& p : pts) knots.push_back(p.first);
    std::sort(knots.begin(), knots.end());
    std::vector<double> ocdf(n + 1, 0.0);
    for (int i = 0; i < n; ++i) ocdf[i + 1] = ocdf[i] + marg[axis][i];
    auto oracle_cdf = [&](double x) {
      if (x <= lo) return 0.0;
      const double u = (x - lo) / w;
      const int i = static_cast<int>(std::floor(u));
      if (i >= n) return 1.0;
      return ocdf[i] + (u - i) * marg[axis][i];
    };
    double acc = 0, emp = 0;
    std::size_t next = 0;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      const double a = knots[k], b = knots[k + 1];
      while (next < pts.size() && pts[next].first <= a) emp += pts[next++].second / total;
      acc += abs_linear_integral(a, b, emp, oracle_cdf(a), oracle_cdf(b));
    }
    out[axis] = acc;
  }
  return out;
}

std::vector<Vec> sample_from_grid(const GridOracle& oracle, int n, Rng& rng) {
  const std::vector<double> p = oracle.pmf();
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  const double w = oracle.cell_width();
  std::vector<Vec> out;
  out.reserve(std::max(n, 0));
  for (int s = 0; s < n; ++s) {
    const double u = rng.uniform() * cdf.back();
    const int idx = std::min<int>(static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()),
                                  static_cast<int>(p.size()) - 1);
    Vec x = oracle.cell_center(idx);
    x[0] += (rng.uniform() - 0.5) * w;
    x[1] += (rng.uniform() - 0.5) * w;
    out.push_back(x);
  }
  return out;
}

std::vector<Vec> sample_target_rejection(const TiltedTarget& target, TargetKind kind, int n, Rng& rng,
                                         RejectionStats* stats) {
  if (kind == TargetKind::P0) return target.model().sample_data(n, rng);
  const auto sup = target.reward().upper_bound();
  if (!sup) throw OracleRefusal("rejection sampling needs a reward bounded above");
  const double a = target.temperature();
  auto envelope = [&]() {
    return kind == TargetKind::P0Star ? target.model().sample_data(1, rng).front() : rng.normal_vector(target.dim());
  };
  auto value = [&](const Vec& x) {
    return kind == TargetKind::P0Star ? target.reward().value(x) : target.value_estimate(x, 1.0);
  };
  std::vector<Vec> out;
  if (n <= 0) return out;
  // Expected acceptance rate from a pilot batch, before committing to the main loop.
  constexpr int kPilot = 20000;
  double pilot = 0;
  for (int i = 0; i < kPilot; ++i) pilot += std::exp((value(envelope()) - *sup) / a);
  pilot /= kPilot;
  if (pilot < 1e-4) {
    std::ostringstream msg;
    msg << "rejection acceptance rate " << pilot << " is below 1e-4";
    throw OracleRefusal(msg.str());
  }
  RejectionStats st;
  out.reserve(n);
  while (static_cast<int>(out.size()) < n) {
    Vec x = envelope();
    ++st.trials;
    if (std::log(rng.uniform()) < (value(x) - *sup) / a) {
      ++st.accepted;
      out.push_back(std::move(x));
    }
  }
  if (stats) *stats = st;
  return out;
}

std::vector<Vec> sample_target(const TiltedTarget& target, TargetKind kind, int n, Rng& rng,
                               const GridOracle& fallback) {
  try {
    return sample_target_rejection(target, kind, n, rng);
  } catch (const OracleRefusal&) {
    if (target.dim() != 2) throw;
    return sample_from_grid(fallback, n, rng);
  }
}

Vec finite_diff_grad(const LogDensity& f, const Vec& x, double h) {
  if (!(h > 0)) throw DomainError("finite-difference step must be positive");
  Vec g(x.size());
  Vec xp = x;
  for (int i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

}  // namespace rsmc
