#include "probe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace probe::stats {

namespace {

constexpr double kEps = 1e-14;
constexpr int kMaxIter = 10000;

// Series for P(a, x); converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x), modified Lentz.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Number of sign assignments of ranks 1..n with positive-rank sum == s,
// for every s in [0, n(n+1)/2].
std::vector<std::uint64_t> signed_rank_counts(std::size_t n) {
  const std::size_t max_sum = n * (n + 1) / 2;
  std::vector<std::uint64_t> counts(max_sum + 1, 0);
  counts[0] = 1;
  for (std::size_t r = 1; r <= n; ++r) {
    for (std::size_t s = r * (r + 1) / 2; s >= r; --s) counts[s] += counts[s - r];
  }
  return counts;
}

}  // namespace

std::string_view to_string(WilcoxonMethod m) {
  return m == WilcoxonMethod::exact ? "exact" : "normal_approx";
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, const StatsConfig& cfg) {
  if (x.size() != y.size()) {
    throw DomainError("wilcoxon: length mismatch " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  if (x.empty()) throw DomainError("wilcoxon: empty input");

  std::vector<double> diffs;
  diffs.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diffs.push_back(d);
  }

  WilcoxonResult res;
  res.n_used = diffs.size();
  if (diffs.empty()) {
    res.all_zero = true;
    res.p_two_sided = 1.0;
    res.z = 0.0;
    return res;
  }

  std::vector<double> abs_d(diffs.size());
  std::transform(diffs.begin(), diffs.end(), abs_d.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(abs_d);
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    (diffs[i] > 0 ? res.w_plus : res.w_minus) += ranks[i];
  }

  // Tie groups among |d|.
  std::vector<double> sorted = abs_d;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    if (t > 1) {
      res.ties = true;
      tie_term += t * t * t - t;
    }
    i = j;
  }

  const double n = static_cast<double>(res.n_used);
  const double mean = n * (n + 1) / 4.0;
  const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
  const double dev = res.w_plus - mean;
  const double corrected = std::max(0.0, std::abs(dev) - 0.5);
  res.z = var > 0 ? std::copysign(corrected / std::sqrt(var), dev) : 0.0;

  if (!res.ties && res.n_used <= cfg.exact_threshold) {
    res.method = WilcoxonMethod::exact;
    const auto counts = signed_rank_counts(res.n_used);
    const auto w = static_cast<std::size_t>(std::llround(std::min(res.w_plus, res.w_minus)));
    std::uint64_t tail = 0;
    for (std::size_t s = 0; s <= w; ++s) tail += counts[s];
    const double total = std::ldexp(1.0, static_cast<int>(res.n_used));
    res.p_two_sided = std::min(1.0, 2.0 * static_cast<double>(tail) / total);
  } else {
    res.method = WilcoxonMethod::normal_approx;
    res.p_two_sided = std::min(1.0, 2.0 * normal_sf(std::abs(res.z)));
  }
  return res;
}

FriedmanResult friedman(const std::vector<std::vector<double>>& values) {
  if (values.size() < 2) throw DomainError("friedman: need at least 2 blocks");
  const std::size_t k = values.front().size();
  if (k < 2) throw DomainError("friedman: need at least 2 treatments");
  for (const auto& row : values) {
    if (row.size() != k) throw DomainError("friedman: ragged matrix");
  }

  FriedmanResult res;
  res.n_blocks = values.size();
  res.k_treatments = k;
  res.df = k - 1;

  std::vector<double> rank_sums(k, 0.0);
  double tie_term = 0.0;
  for (const auto& row : values) {
    const auto ranks = average_ranks(row);
    for (std::size_t j = 0; j < k; ++j) rank_sums[j] += ranks[j];
    std::vector<double> sorted = row;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < k;) {
      std::size_t j = i;
      while (j < k && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
  }

  const double n = static_cast<double>(res.n_blocks);
  const double kd = static_cast<double>(k);
  double ss = 0.0;
  for (double r : rank_sums) ss += r * r;
  const double numer = 12.0 / (n * kd * (kd + 1)) * ss - 3.0 * n * (kd + 1);
  const double denom = 1.0 - tie_term / (n * (kd * kd * kd - kd));
  if (denom <= 0.0) {
    // Every block fully tied: no treatment effect is observable.
    res.chi2 = 0.0;
    res.p = 1.0;
    return res;
  }
  res.chi2 = std::max(0.0, numer / denom);
  res.p = chi2_sf(res.chi2, static_cast<double>(res.df));
  return res;
}

std::vector<double> bh_adjust(std::span<const double> p_values) {
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("bh_adjust: p-value " + std::to_string(p) + " outside [0,1]");
  }
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> adjusted(m);
  double running = 1.0;
  for (std::size_t i = m; i-- > 0;) {
    const double scaled = p_values[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1);
    running = std::min(running, std::min(1.0, scaled));
    // p * m / m can round below p.
    adjusted[order[i]] = std::max(running, p_values[order[i]]);
  }
  return adjusted;
}

double effect_size_r(double z, std::size_t n) {
  if (n == 0) throw DomainError("effect_size_r: n must be >= 1");
  return std::abs(z) / std::sqrt(static_cast<double>(n));
}

double gamma_q(double a, double x) {
  if (!(a > 0)) throw DomainError("gamma_q: shape must be > 0");
  if (x < 0) throw DomainError("gamma_q: x must be >= 0");
  if (x == 0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi2_sf(double x, double df) {
  if (!(x >= 0)) throw DomainError("chi2_sf: x must be >= 0");
  if (!(df > 0)) throw DomainError("chi2_sf: df must be > 0");
  return gamma_q(df / 2.0, x / 2.0);
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) throw DomainError("summarize: empty sample");
  SummaryStats s;
  s.n = values.size();
  const double n = static_cast<double>(s.n);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1));
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = s.n / 2;
  s.median = s.n % 2 == 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2.0;
  return s;
}

}  // namespace probe::stats
