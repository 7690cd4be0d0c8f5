#pragma once

// Second-order polynomial dynamic linear model (level + slope) fitted by a
// discount-factor Kalman filter:
//
//   y_t     = H θ_t + ε_t,      H = (1, 0)
//   θ_t     = M θ_{t-1} + ω_t,  M = [[1, 1], [0, 1]]
//
// The evolution covariance is never formed explicitly: the prior covariance
// is the propagated posterior inflated by 1/δ.

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace synchro {

enum class ObsVarMode {
  Fixed,      // R held at ModelSpec::obs_var
  Estimated,  // learned online from standardized one-step residuals
};

struct ModelSpec {
  double delta = 0.95;
  ObsVarMode obs_var_mode = ObsVarMode::Estimated;
  double obs_var = 1e-6;  // R in fixed mode; ignored by init_prior otherwise

  static Eigen::RowVector2d H() { return {1.0, 0.0}; }
  static Eigen::Matrix2d M() {
    Eigen::Matrix2d m;
    m << 1.0, 1.0, 0.0, 1.0;
    return m;
  }
  void validate() const;
};

struct GdlmState {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();  // (level, slope)
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
  double obs_var = 0.0;
  double dof = 1.0;  // degrees of freedom behind obs_var (estimated mode)
  std::size_t t = 0;

  double level() const { return mean(0); }
  double slope() const { return mean(1); }
};

struct StepResult {
  GdlmState state;
  double forecast = 0.0;            // H·a, the one-step prediction of y
  double residual = 0.0;            // y − forecast; 0 for a missing y
  double predictive_variance = 0.0;  // q
  bool observed = true;
};

struct ForecastResult {
  std::vector<double> means;
  std::vector<double> variances;
};

class EmptyWindow : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class NonFiniteObservation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};
class DegenerateVariance : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kVarianceFloor = 1e-12;

/// Median of the window (mean of the two middle values for even length).
double median(std::span<const double> values);

/// Prior at t = 0: level = window median, slope 0, covariance I. obs_var is
/// spec.obs_var in fixed mode and the window sample variance otherwise.
GdlmState init_prior(std::span<const double> window, const ModelSpec& spec);

/// One filter step. An empty `y` propagates the prior without an update.
StepResult filter_step(const GdlmState& state, const ModelSpec& spec, std::optional<double> y);

struct FilterRun {
  std::vector<StepResult> steps;  // one per observation
};

FilterRun filter(const GdlmState& prior, const ModelSpec& spec,
                 std::span<const std::optional<double>> ys);
FilterRun filter(const GdlmState& prior, const ModelSpec& spec, std::span<const double> ys);

/// Fixed-interval backward smoother over the filtered states.
std::vector<GdlmState> smooth(const std::vector<GdlmState>& filtered, const ModelSpec& spec);

ForecastResult forecast(const GdlmState& state, const ModelSpec& spec, std::size_t h);

/// Debug dump: t,y,level,slope,residual,pred_var per step.
void write_debug_csv(std::ostream& out, std::span<const std::optional<double>> ys,
                     const FilterRun& run);

}  // namespace synchro
