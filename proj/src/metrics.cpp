#include "ragutil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ragutil/error.hpp"

namespace ragutil {

double gain_value(int grade, Gain gain) {
  if (grade <= 0) return 0.0;
  return gain == Gain::Exponential ? std::exp2(static_cast<double>(grade)) - 1.0
                                   : static_cast<double>(grade);
}

std::optional<double> ndcg_at_k(const std::vector<std::string>& ranking,
                                const QrelStore::Judgments& judged, std::size_t k, Gain gain) {
  if (k == 0) throw UsageError("nDCG cutoff k must be >= 1");
  std::vector<int> grades;
  grades.reserve(judged.size());
  for (const auto& [_, g] : judged) grades.push_back(g);
  std::sort(grades.begin(), grades.end(), std::greater<>());

  double ideal = 0.0;
  for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) {
    ideal += gain_value(grades[i], gain) / std::log2(static_cast<double>(i) + 2.0);
  }
  if (!(ideal > 0.0)) return std::nullopt;

  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    auto it = judged.find(ranking[i]);
    if (it == judged.end()) continue;
    dcg += gain_value(it->second, gain) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / ideal;
}

double utility(double p_k, double p_zero) {
  if (!(p_zero > 0.0)) throw DataError("undefined relative gain (p_zero <= 0)");
  return (p_k - p_zero) / p_zero;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw DataError("mean of empty series");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

namespace {

void check_pair(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DataError("series lengths differ");
  if (xs.size() < 2) throw DataError("need at least 2 points");
}

}  // namespace

double pearson(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DataError("degenerate series (zero variance)");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw DataError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DataError("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw DataError("degrees of freedom must be > 0");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

SignificanceReport paired_t_test(std::span<const double> a, std::span<const double> b, double alpha) {
  check_pair(a, b);
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double md = mean(d);
  double ss = 0.0;
  for (double v : d) ss += (v - md) * (v - md);
  if (!(ss > 0.0)) throw DataError("degenerate: paired differences have zero variance");
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  SignificanceReport r;
  r.t_statistic = md / (sd / std::sqrt(static_cast<double>(n)));
  r.degrees_of_freedom = static_cast<int>(n - 1);
  r.p_value = student_t_two_sided(r.t_statistic, r.degrees_of_freedom);
  r.significant = r.p_value < alpha;
  return r;
}

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (!(sxx > 0.0)) throw DataError("linear fit needs var(xs) > 0");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

}  // namespace ragutil
