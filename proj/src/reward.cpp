#include "rsmc/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rsmc/errors.hpp"

namespace rsmc {

namespace {

void check_temperature(double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("reward temperature must be positive");
}

}  // namespace

RewardModel RewardModel::mode_subset(std::vector<Vec> centers, double sharpness, double temperature) {
  check_temperature(temperature);
  if (centers.empty()) throw ConfigError("mode-subset reward needs at least one mode");
  if (!(sharpness > 0.0)) throw ConfigError("mode-subset sharpness must be positive");
  RewardModel r;
  r.kind_ = RewardKind::ModeSubset;
  r.dim_ = static_cast<int>(centers.front().size());
  for (const Vec& c : centers)
    if (c.size() != r.dim_) throw ConfigError("mode-subset centers differ in dimension");
  r.centers_ = std::move(centers);
  r.sharpness_ = sharpness;
  r.temperature_ = temperature;
  return r;
}

RewardModel RewardModel::mode_subset(const GmmModel& model, const std::vector<int>& modes, double sharpness,
                                     double temperature) {
  std::vector<Vec> centers;
  for (int i : modes) {
    if (i < 0 || i >= model.size()) throw ConfigError("mode-subset index " + std::to_string(i) + " out of range");
    centers.push_back(model.means()[i]);
  }
  return mode_subset(std::move(centers), sharpness, temperature);
}

RewardModel RewardModel::quadratic(Vec center, double temperature) {
  check_temperature(temperature);
  RewardModel r;
  r.kind_ = RewardKind::Quadratic;
  r.dim_ = static_cast<int>(center.size());
  r.param_ = std::move(center);
  r.temperature_ = temperature;
  return r;
}

RewardModel RewardModel::linear(Vec direction, double temperature) {
  check_temperature(temperature);
  RewardModel r;
  r.kind_ = RewardKind::Linear;
  r.dim_ = static_cast<int>(direction.size());
  r.param_ = std::move(direction);
  r.temperature_ = temperature;
  return r;
}

bool RewardModel::is_zero() const { return kind_ == RewardKind::Linear && param_.isZero(0.0); }

double RewardModel::value(const Vec& x0) const {
  switch (kind_) {
    case RewardKind::ModeSubset: {
      const double inv = 1.0 / (2 * sharpness_ * sharpness_);
      std::vector<double> e(centers_.size());
      for (std::size_t i = 0; i < centers_.size(); ++i) e[i] = -(x0 - centers_[i]).squaredNorm() * inv;
      const double mx = *std::max_element(e.begin(), e.end());
      double acc = 0;
      for (double v : e) acc += std::exp(v - mx);
      return mx + std::log(acc);
    }
    case RewardKind::Quadratic:
      return -0.5 * (x0 - param_).squaredNorm();
    case RewardKind::Linear:
      return param_.dot(x0);
  }
  return 0;
}

Vec RewardModel::grad(const Vec& x0) const {
  switch (kind_) {
    case RewardKind::ModeSubset: {
      const double s2 = sharpness_ * sharpness_;
      std::vector<double> e(centers_.size());
      for (std::size_t i = 0; i < centers_.size(); ++i) e[i] = -(x0 - centers_[i]).squaredNorm() / (2 * s2);
      const double mx = *std::max_element(e.begin(), e.end());
      double acc = 0;
      for (double& v : e) acc += (v = std::exp(v - mx));
      Vec g = Vec::Zero(x0.size());
      for (std::size_t i = 0; i < centers_.size(); ++i) g += (e[i] / acc) * (centers_[i] - x0);
      return g / s2;
    }
    case RewardKind::Quadratic:
      return param_ - x0;
    case RewardKind::Linear:
      return param_;
  }
  return Vec::Zero(x0.size());
}

std::optional<double> RewardModel::upper_bound() const {
  switch (kind_) {
    case RewardKind::ModeSubset: {
      // With i the nearest center and a = |x - mu_i|, every other center is at least
      // max(D_ij / 2, D_ij - a) away. Maximize over a on a grid plus a Lipschitz margin.
      const double s2 = 2 * sharpness_ * sharpness_;
      const int n = static_cast<int>(centers_.size());
      double best = -INFINITY;
      for (int i = 0; i < n; ++i) {
        std::vector<double> dist;
        for (int j = 0; j < n; ++j)
          if (j != i) dist.push_back((centers_[i] - centers_[j]).norm());
        const double a_max = dist.empty() ? 0.0 : 0.5 * *std::max_element(dist.begin(), dist.end());
        constexpr int kGrid = 2000;
        const double h = a_max / kGrid;
        // Each term is exp(-r^2 / (2 s^2)) with |dr/da| <= 1, so its slope is at most exp(-1/2) / s.
        const double margin = n * std::exp(-0.5) / sharpness_ * h / 2;
        double acc = 0;
        for (int g = 0; g <= kGrid; ++g) {
          const double a = g * h;
          double sum = std::exp(-a * a / s2);
          for (double d : dist) {
            const double r = std::max(0.5 * d, d - a);
            sum += std::exp(-r * r / s2);
          }
          acc = std::max(acc, sum);
        }
        best = std::max(best, std::log(acc + margin));
      }
      return best;
    }
    case RewardKind::Quadratic:
      return 0.0;
    case RewardKind::Linear:
      if (is_zero()) return 0.0;
      return std::nullopt;
  }
  return std::nullopt;
}

double standard_normal_log_density(const Vec& x) {
  return -0.5 * x.squaredNorm() - 0.5 * x.size() * std::log(2 * std::numbers::pi);
}

TiltedTarget::TiltedTarget(GmmModel model, Schedule schedule, RewardModel reward)
    : model_(std::move(model)), schedule_(schedule), reward_(std::move(reward)) {
  if (reward_.dim() != model_.dim()) throw ConfigError("reward dimension does not match the model");
  schedule_.validate();
}

double TiltedTarget::target_log_density_0(const Vec& x) const {
  return model_.log_density_t(x, 0.0) + reward_.value(x) / temperature();
}

double TiltedTarget::posterior_log_density_1(const Vec& x) const {
  return standard_normal_log_density(x) + value_estimate(x, 1.0) / temperature();
}

Vec TiltedTarget::posterior_grad_1(const Vec& x) const { return value_grad(x, 1.0) - x; }

double TiltedTarget::value_estimate(const Vec& x, double t) const {
  return reward_.value(model_.tweedie(x, schedule_.tweedie_time(t)));
}

Vec TiltedTarget::value_grad(const Vec& x, double t) const { return evaluate(x, t).value_grad; }

Evaluation TiltedTarget::evaluate(const Vec& x, double t) const {
  const GmmEval e = model_.evaluate(x, schedule_.tweedie_time(t));
  Evaluation out;
  out.x0 = GmmModel::tweedie(e, x);
  out.reward = reward_.value(out.x0);
  out.value_grad = GmmModel::tweedie_vjp(e, reward_.grad(out.x0)) / temperature();
  return out;
}

}  // namespace rsmc
