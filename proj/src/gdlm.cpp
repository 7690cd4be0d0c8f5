#include "synchro/gdlm.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "synchro/csv.hpp"

namespace synchro {
namespace {

Eigen::Matrix2d symmetrize(const Eigen::Matrix2d& c) { return 0.5 * (c + c.transpose()); }

}  // namespace

void ModelSpec::validate() const {
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (0, 1]");
  if (obs_var_mode == ObsVarMode::Fixed && !(obs_var >= 0.0)) {
    throw std::invalid_argument("fixed obs_var must be non-negative");
  }
}

double median(std::span<const double> values) {
  if (values.empty()) throw EmptyWindow("median of an empty window");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

GdlmState init_prior(std::span<const double> window, const ModelSpec& spec) {
  spec.validate();
  if (window.empty()) throw EmptyWindow("cannot initialize from an empty window");
  for (const double y : window) {
    if (!std::isfinite(y)) throw NonFiniteObservation("non-finite value in prior window");
  }
  GdlmState s;
  s.mean << median(window), 0.0;
  s.cov.setIdentity();
  if (spec.obs_var_mode == ObsVarMode::Fixed) {
    s.obs_var = spec.obs_var;
  } else {
    double mean = 0.0;
    for (const double y : window) mean += y;
    mean /= static_cast<double>(window.size());
    double ss = 0.0;
    for (const double y : window) ss += (y - mean) * (y - mean);
    const double var = window.size() > 1 ? ss / static_cast<double>(window.size() - 1) : 0.0;
    s.obs_var = std::max(var, kVarianceFloor);
  }
  s.dof = 1.0;
  s.t = 0;
  return s;
}

StepResult filter_step(const GdlmState& state, const ModelSpec& spec, std::optional<double> y) {
  if (y && !std::isfinite(*y)) throw NonFiniteObservation("observation is not finite");
  const Eigen::Matrix2d M = ModelSpec::M();
  const Eigen::Vector2d a = M * state.mean;
  const Eigen::Matrix2d P = symmetrize(M * state.cov * M.transpose() / spec.delta);

  StepResult r;
  r.forecast = a(0);
  const double q_raw = P(0, 0) + state.obs_var;
  if (!(q_raw > 0.0) && spec.obs_var_mode == ObsVarMode::Fixed && y) {
    throw DegenerateVariance("predictive variance is not positive");
  }
  const double q = std::max(q_raw, kVarianceFloor);
  r.predictive_variance = q;

  GdlmState next = state;
  next.t = state.t + 1;
  if (!y) {
    next.mean = a;
    next.cov = P;
    r.observed = false;
    r.state = next;
    return r;
  }

  const double e = *y - r.forecast;
  r.residual = e;
  const Eigen::Vector2d K = P.col(0) / q;
  next.mean = a + K * e;
  Eigen::Matrix2d C = P - K * K.transpose() * q;
  if (spec.obs_var_mode == ObsVarMode::Estimated) {
    // Conjugate variance learning: the scale estimate moves towards e²/q and
    // the posterior covariance is rescaled by the updated estimate.
    const double s_prev = state.obs_var;
    const double n = state.dof + 1.0;
    const double s_new = std::max(s_prev + (s_prev / n) * (e * e / q - 1.0), kVarianceFloor);
    C *= s_new / s_prev;
    next.obs_var = s_new;
    next.dof = n;
  }
  next.cov = symmetrize(C);
  r.state = next;
  return r;
}

FilterRun filter(const GdlmState& prior, const ModelSpec& spec,
                 std::span<const std::optional<double>> ys) {
  spec.validate();
  FilterRun run;
  run.steps.reserve(ys.size());
  const GdlmState* cur = &prior;
  for (const auto& y : ys) {
    run.steps.push_back(filter_step(*cur, spec, y));
    cur = &run.steps.back().state;
  }
  return run;
}

FilterRun filter(const GdlmState& prior, const ModelSpec& spec, std::span<const double> ys) {
  std::vector<std::optional<double>> opt(ys.begin(), ys.end());
  return filter(prior, spec, std::span<const std::optional<double>>(opt));
}

std::vector<GdlmState> smooth(const std::vector<GdlmState>& filtered, const ModelSpec& spec) {
  std::vector<GdlmState> out = filtered;
  if (filtered.size() <= 1) return out;
  const Eigen::Matrix2d M = ModelSpec::M();
  const std::size_t T = filtered.size() - 1;
  // Work with covariances divided by their own scale estimate; the final
  // scale multiplies every smoothed covariance. In fixed mode this is the
  // ordinary Rauch-Tung-Striebel recursion.
  const double s_final = filtered[T].obs_var;
  const bool scaled = spec.obs_var_mode == ObsVarMode::Estimated;
  auto unit_cov = [&](const GdlmState& s) -> Eigen::Matrix2d {
    return scaled ? Eigen::Matrix2d(s.cov / s.obs_var) : s.cov;
  };

  Eigen::Vector2d m_next = filtered[T].mean;
  Eigen::Matrix2d c_next = unit_cov(filtered[T]);
  for (std::size_t i = T; i-- > 0;) {
    const GdlmState& f = filtered[i];
    const Eigen::Matrix2d C = unit_cov(f);
    const Eigen::Vector2d a = M * f.mean;
    const Eigen::Matrix2d R = M * C * M.transpose() / spec.delta;
    const Eigen::Matrix2d B = C * M.transpose() * R.inverse();
    const Eigen::Vector2d m_s = f.mean + B * (m_next - a);
    const Eigen::Matrix2d c_s = symmetrize(C + B * (c_next - R) * B.transpose());
    out[i].mean = m_s;
    out[i].cov = scaled ? Eigen::Matrix2d(c_s * s_final) : c_s;
    out[i].obs_var = scaled ? s_final : f.obs_var;
    m_next = m_s;
    c_next = c_s;
  }
  return out;
}

ForecastResult forecast(const GdlmState& state, const ModelSpec& spec, std::size_t h) {
  if (h == 0) throw std::invalid_argument("forecast horizon must be at least 1");
  spec.validate();
  const Eigen::Matrix2d M = ModelSpec::M();
  ForecastResult r;
  r.means.reserve(h);
  r.variances.reserve(h);
  Eigen::Matrix2d P = state.cov;
  for (std::size_t k = 1; k <= h; ++k) {
    P = symmetrize(M * P * M.transpose() / spec.delta);
    r.means.push_back(state.level() + static_cast<double>(k) * state.slope());
    r.variances.push_back(std::max(P(0, 0) + state.obs_var, kVarianceFloor));
  }
  return r;
}

void write_debug_csv(std::ostream& out, std::span<const std::optional<double>> ys,
                     const FilterRun& run) {
  out << "t,y,level,slope,residual,pred_var\n";
  for (std::size_t i = 0; i < run.steps.size(); ++i) {
    const auto& s = run.steps[i];
    out << s.state.t << ',' << (i < ys.size() && ys[i] ? csv::format(*ys[i]) : std::string())
        << ',' << csv::format(s.state.level()) << ',' << csv::format(s.state.slope()) << ','
        << csv::format(s.residual) << ',' << csv::format(s.predictive_variance) << '\n';
  }
}

}  // namespace synchro
