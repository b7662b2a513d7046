#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mbps {

enum class Frequency { daily, weekly };

const char* to_string(Frequency f) noexcept;
Frequency parse_frequency(const std::string& s);
/// Step between consecutive calendar entries.
std::chrono::days step_of(Frequency f) noexcept;

/// Dense row-major n x m array. Row i is contiguous.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T init = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, init) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }
  bool operator==(const Grid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// n aligned count series sharing one calendar.
struct CountPanel {
  std::vector<std::string> labels;
  std::vector<std::chrono::sys_days> calendar;
  Frequency frequency = Frequency::weekly;
  Grid<std::int64_t> y;         // n x T_total
  Grid<std::int64_t> infected;  // n x T_total

  std::size_t n() const noexcept { return labels.size(); }
  std::size_t length() const noexcept { return calendar.size(); }
};

std::string format_date(std::chrono::sys_days d);
std::optional<std::chrono::sys_days> parse_date(const std::string& s);

struct Violation {
  enum class Kind { negative_count, non_finite, calendar_gap, calendar_order, shape };
  Kind kind;
  std::optional<std::size_t> series;
  std::optional<std::size_t> time;
  std::string message;
};

/// Report-only check of the panel invariants; empty iff the panel is valid.
std::vector<Violation> validate_panel(const CountPanel& panel);

/// Guard inside the log of the moving average.
inline constexpr double kZeroCountGuard = 0.5;

/// Log lagged trailing moving average of the infected counts.
/// Index t (0-based) is available iff t + 1 >= lag + ma_window.
struct CovariateSeries {
  std::vector<double> value;  // NaN where unavailable
  std::size_t first_available = 0;
  bool available(std::size_t t) const noexcept {
    return t >= first_available && t < value.size();
  }
};

CovariateSeries covariate_transform(std::span<const std::int64_t> infected,
                                    int ma_window, int lag);

/// Moving-average covariate evaluated for a target time as seen from a
/// forecast origin: the moving average index is capped at the origin so that
/// no infected count after the origin is ever read.
class InfectedCovariate {
 public:
  InfectedCovariate() = default;
  InfectedCovariate(std::span<const std::int64_t> infected, int ma_window, int lag);

  /// Ĩ for `target` using infected data up to `origin` only.
  double value(std::size_t target, std::size_t origin) const;
  /// Largest infected index read by value(target, origin).
  std::size_t source_index(std::size_t target, std::size_t origin) const;
  /// Earliest target for which value() is defined.
  std::size_t first_target() const noexcept { return first_target_; }
  int lag() const noexcept { return lag_; }
  int ma_window() const noexcept { return window_; }

 private:
  std::vector<double> log_ma_;  // log(max(guard, MA_t)); NaN before window fills
  std::size_t first_target_ = 0;
  int window_ = 1;
  int lag_ = 1;
};

/// Which covariate transforms enter x_it after the constant 1.
enum class CovariateTerm { itilde, itilde_sq, lag_y };

struct CovariateRecipe {
  std::vector<CovariateTerm> terms;
  std::size_t dim() const noexcept { return 1 + terms.size(); }
  bool uses_lag_y() const noexcept;
  static CovariateRecipe dglm_default();  // (1, Ĩ, Ĩ²)
  static CovariateRecipe fmpr_default();  // (1, Ĩ, Ĩ², y_{t-1})
  static CovariateRecipe parse(const std::string& spec);  // e.g. "itilde,itilde_sq"
};

/// x_it = (1, ...) built from a recipe. `itilde_center` is subtracted from Ĩ
/// before squaring; it reparametrises the same quadratic family.
std::vector<double> covariate_vector(const CovariateRecipe& recipe, double itilde,
                                     double itilde_center, double lag_y);

/// Per (series, agent, time) log-scale predictive moments for one horizon.
/// Time index t is local: panel time = offset + t.
struct AgentPredictive {
  std::size_t n = 0, J = 0, T = 0;
  int horizon = 1;
  std::size_t offset = 0;
  std::vector<std::string> agent_names;
  std::vector<double> m;   // [i][j][t]
  std::vector<double> s2;  // [i][j][t]
  std::vector<std::int64_t> info_index;  // max panel index of data used, -1 unknown

  AgentPredictive() = default;
  AgentPredictive(std::size_t n_, std::size_t J_, std::size_t T_, int horizon_,
                  std::size_t offset_ = 0);
  std::size_t at(std::size_t i, std::size_t j, std::size_t t) const noexcept {
    return (i * J + j) * T + t;
  }
  double& mean(std::size_t i, std::size_t j, std::size_t t) { return m[at(i, j, t)]; }
  double mean(std::size_t i, std::size_t j, std::size_t t) const { return m[at(i, j, t)]; }
  double& var(std::size_t i, std::size_t j, std::size_t t) { return s2[at(i, j, t)]; }
  double var(std::size_t i, std::size_t j, std::size_t t) const { return s2[at(i, j, t)]; }
  /// Throws InputError if any variance is non-positive or any moment non-finite.
  void check() const;
  /// Columns [t0, t0 + len) as a new object (offset shifted accordingly).
  AgentPredictive slice(std::size_t t0, std::size_t len) const;
  /// Series subset.
  AgentPredictive select_series(std::span<const std::size_t> series) const;
};

struct ThetaPrior {
  std::vector<double> mean;  // J + 1
  double cov_scale = 1.0;    // C0 = cov_scale * I
  static ThetaPrior equal_weights(std::size_t J);
};

struct SynthesisConfig {
  std::size_t K = 0;  // 0: use K = n
  double a0 = 0.01;
  double r = 1000.0;
  double delta_sigma = 0.95;
  double beta_tau = 0.95;
  std::optional<ThetaPrior> theta_prior;  // default: ThetaPrior::equal_weights(J)
  double gamma_prior_shape = 1.0;  // a_0 of the precision filter
  double gamma_prior_rate = 1.0;   // b_0 of the precision filter
  double tau2_init = 0.1;
  std::size_t n_iter = 2000;
  std::size_t n_burn = 2000;
  std::size_t thin = 2;
  std::uint64_t seed = 20240601;
  double variance_inflation = 1.0;
  double pg_normal_threshold = 170.0;
  std::size_t kmeans_groups = 8;
  std::size_t forecast_draws = 4000;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

}  // namespace mbps
