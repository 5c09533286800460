#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "probe/errors.hpp"

namespace probe::stats {

struct StatsConfig {
  double alpha = 0.05;
  /// Largest n_used for which the exact signed-rank distribution is used.
  std::size_t exact_threshold = 25;
};

enum class WilcoxonMethod { exact, normal_approx };
std::string_view to_string(WilcoxonMethod m);

struct WilcoxonResult {
  std::size_t n_used = 0;
  double w_plus = 0.0;
  double w_minus = 0.0;
  double z = 0.0;
  double p_two_sided = 1.0;
  WilcoxonMethod method = WilcoxonMethod::exact;
  bool all_zero = false;
  bool ties = false;
};

struct FriedmanResult {
  double chi2 = 0.0;
  std::size_t df = 0;
  double p = 1.0;
  std::size_t n_blocks = 0;
  std::size_t k_treatments = 0;
};

struct SummaryStats {
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  std::size_t n = 0;
};

/// Paired two-sided Wilcoxon signed-rank test on d = x - y.
///
/// Zero differences are dropped. Ties get average ranks. With no ties and
/// n_used <= cfg.exact_threshold the p-value comes from the exact null
/// distribution of W+; otherwise from the normal approximation with tie
/// corrected variance and a 0.5 continuity correction. z is the
/// continuity-corrected normal score in both branches.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                    const StatsConfig& cfg = {});

/// Friedman test over a blocks x treatments matrix (rows are blocks).
FriedmanResult friedman(const std::vector<std::vector<double>>& values);

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
std::vector<double> bh_adjust(std::span<const double> p_values);

/// r = |z| / sqrt(n).
double effect_size_r(double z, std::size_t n);

/// Upper tail of the chi-square distribution, Q(df/2, x/2).
double chi2_sf(double x, double df);

/// Upper tail of the standard normal distribution.
double normal_sf(double z);

/// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

SummaryStats summarize(std::span<const double> values);

/// Average ranks (1-based) of `values`; ties share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace probe::stats
