#pragma once

#include <optional>
#include <vector>

#include "rsmc/gmm.hpp"
#include "rsmc/schedule.hpp"

namespace rsmc {

enum class RewardKind { ModeSubset, Quadratic, Linear };

class RewardModel {
 public:
  // r(x) = log sum_{i in S} exp(-|x - mu_i|^2 / (2 sharpness^2)).
  static RewardModel mode_subset(std::vector<Vec> centers, double sharpness, double temperature);
  static RewardModel mode_subset(const GmmModel& model, const std::vector<int>& modes, double sharpness,
                                 double temperature);
  // r(x) = -|x - c|^2 / 2.
  static RewardModel quadratic(Vec center, double temperature);
  // r(x) = a^T x.
  static RewardModel linear(Vec direction, double temperature);
  static RewardModel zero(int dim, double temperature = 1.0) { return linear(Vec::Zero(dim), temperature); }

  RewardKind kind() const { return kind_; }
  double temperature() const { return temperature_; }
  int dim() const { return dim_; }
  bool is_zero() const;

  double value(const Vec& x0) const;
  Vec grad(const Vec& x0) const;
  // Rigorous sup_x r(x), or nothing when r is unbounded above.
  std::optional<double> upper_bound() const;

  const std::vector<Vec>& centers() const { return centers_; }
  double sharpness() const { return sharpness_; }
  const Vec& vector_param() const { return param_; }

 private:
  RewardModel() = default;

  RewardKind kind_ = RewardKind::Linear;
  int dim_ = 0;
  double temperature_ = 1.0;
  std::vector<Vec> centers_;
  double sharpness_ = 1.0;
  Vec param_;
};

// One model call: Tweedie estimate, its reward and the pulled-back gradient of r / alpha.
struct Evaluation {
  Vec x0;
  double reward = 0;
  Vec value_grad;
};

// The pretrained model, schedule and reward together; defines p_0*, the t = 1 posterior and V_t.
class TiltedTarget {
 public:
  TiltedTarget(GmmModel model, Schedule schedule, RewardModel reward);

  const GmmModel& model() const { return model_; }
  const Schedule& schedule() const { return schedule_; }
  const RewardModel& reward() const { return reward_; }
  int dim() const { return model_.dim(); }
  double temperature() const { return reward_.temperature(); }

  // log p_0(x) + r(x) / alpha.
  double target_log_density_0(const Vec& x) const;
  // log N(x; 0, I) + r(x_{0|1}) / alpha, Tweedie at the clamped time.
  double posterior_log_density_1(const Vec& x) const;
  Vec posterior_grad_1(const Vec& x) const;

  double value_estimate(const Vec& x, double t) const;
  Vec value_grad(const Vec& x, double t) const;
  Evaluation evaluate(const Vec& x, double t) const;

 private:
  GmmModel model_;
  Schedule schedule_;
  RewardModel reward_;
};

double standard_normal_log_density(const Vec& x);

}  // namespace rsmc
