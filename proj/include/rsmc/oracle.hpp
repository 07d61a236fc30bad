#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rsmc/reward.hpp"
#include "rsmc/rng.hpp"

namespace rsmc {

struct GridSpec {
  double lo = -8.0;
  double hi = 8.0;
  int resolution = 400;
};

// Normalized cell masses of a 2D density on [lo, hi]^2, row-major with x as the fast axis.
class GridOracle {
 public:
  GridOracle() = default;
  GridOracle(GridSpec spec, std::vector<double> log_pmf, double log_z);

  const GridSpec& spec() const { return spec_; }
  int resolution() const { return spec_.resolution; }
  double cell_width() const { return (spec_.hi - spec_.lo) / spec_.resolution; }
  double cell_area() const { return cell_width() * cell_width(); }
  double log_z() const { return log_z_; }
  const std::vector<double>& log_pmf() const { return log_pmf_; }
  std::vector<double> pmf() const;
  std::optional<int> cell_index(const Vec& x) const;
  Vec cell_center(int index) const;

  // Sums factor x factor blocks of cells; resolution must be divisible by factor.
  GridOracle coarsen(int factor) const;
  // Per-axis marginal masses.
  std::array<std::vector<double>, 2> marginals() const;

  void save(const std::string& path, std::uint64_t key) const;
  // Returns nothing if the file is missing or was written under a different key.
  static std::optional<GridOracle> load(const std::string& path, std::uint64_t key);

 private:
  GridSpec spec_;
  std::vector<double> log_pmf_;
  double log_z_ = 0;
};

using LogDensity = std::function<double(const Vec&)>;

inline constexpr double kMaxOutsideMass = 1e-4;

// Midpoint quadrature. outside_mass_bound bounds the unnormalized mass outside the box; the oracle
// refuses when that bound exceeds kMaxOutsideMass of the total.
GridOracle grid_normalize(const LogDensity& log_density, GridSpec spec, double outside_mass_bound);

enum class TargetKind { P0, P0Star, P1Posterior };

std::string to_string(TargetKind kind);

// Ground-truth grids for p_0, p_0* (density p_0 exp(r / alpha)) and the t = 1 posterior.
GridOracle build_oracle(const TiltedTarget& target, TargetKind kind, GridSpec spec = {});
// Marginal p_t of the data model.
GridOracle marginal_oracle(const GmmModel& model, double t, GridSpec spec = {});

// Key over everything that determines an oracle's content.
std::uint64_t oracle_cache_key(const TiltedTarget& target, TargetKind kind, const GridSpec& spec);

double tv_distance(const std::vector<double>& p, const std::vector<double>& q);
// Histogram TV; samples outside the box count fully against the histogram.
double tv_distance(const std::vector<Vec>& samples, const GridOracle& oracle,
                   const std::vector<double>* weights = nullptr);
std::vector<double> histogram(const std::vector<Vec>& samples, const GridOracle& oracle,
                              const std::vector<double>* weights, double* outside = nullptr);

// Per-axis 1D Wasserstein-1 between the sample marginals and the oracle marginals.
std::array<double, 2> w1_per_axis(const std::vector<Vec>& samples, const GridOracle& oracle,
                                  const std::vector<double>* weights = nullptr);

std::vector<Vec> sample_from_grid(const GridOracle& oracle, int n, Rng& rng);

struct RejectionStats {
  long trials = 0;
  long accepted = 0;
  double rate() const { return trials ? double(accepted) / trials : 0.0; }
};

// Envelope p_0 (P0Star) or N(0, I) (P1Posterior) with bound exp(sup r / alpha). Refuses when the
// reward is unbounded or the estimated acceptance rate is below 1e-4.
std::vector<Vec> sample_target_rejection(const TiltedTarget& target, TargetKind kind, int n, Rng& rng,
                                         RejectionStats* stats = nullptr);
// Rejection when possible, otherwise inverse-CDF sampling from the grid oracle.
std::vector<Vec> sample_target(const TiltedTarget& target, TargetKind kind, int n, Rng& rng,
                               const GridOracle& fallback);

Vec finite_diff_grad(const LogDensity& f, const Vec& x, double h);

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf);
double standard_normal_cdf(double x);

}  // namespace rsmc
