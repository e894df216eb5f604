#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ragutil/corpus.hpp"

namespace ragutil {

enum class Gain { Exponential, Linear };

// nDCG@k over graded judgments; unjudged documents contribute no gain. Returns
// nullopt when the query has no positively graded judgment, since the ideal DCG
// is then zero.
std::optional<double> ndcg_at_k(const std::vector<std::string>& ranking,
                                const QrelStore::Judgments& judged, std::size_t k,
                                Gain gain = Gain::Exponential);

double gain_value(int grade, Gain gain);

// Relative change over the 0-shot performance: (p_k - p_zero) / p_zero.
double utility(double p_k, double p_zero);

// Sample Pearson r; throws on length mismatch, n < 2 or a constant series.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct SignificanceReport {
  std::string method_a;
  std::string method_b;
  double t_statistic = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;  // two-sided
  bool significant = false;
};

// Paired Student t-test on a - b.
SignificanceReport paired_t_test(std::span<const double> a, std::span<const double> b,
                                 double alpha = 0.05);

// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

// Two-sided tail probability P(|T| >= |t|) for Student t with df degrees of freedom.
double student_t_two_sided(double t, double df);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys);

double mean(std::span<const double> xs);

}  // namespace ragutil
