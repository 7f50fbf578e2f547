#include "lever/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lever {

namespace {

[[noreturn]] void fail_domain(const std::string& what) { throw std::domain_error(what); }

}  // namespace

std::int64_t required_per_input(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) fail_domain("epsilon must lie in (0, 1)");
  const double eps_sq = epsilon * epsilon;
  auto enough = [eps_sq](std::int64_t n) { return 1.0 / (16.0 * static_cast<double>(n)) <= eps_sq; };
  // Floating division can land one off; settle the boundary by predicate.
  std::int64_t n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(1.0 / (16.0 * eps_sq))));
  while (!enough(n)) ++n;
  while (n > 1 && enough(n - 1)) --n;
  return n;
}

double bernoulli_kl(double a, double b) {
  if (!(a >= 0.0 && a <= 1.0)) fail_domain("KL needs a in [0, 1]");
  if (!(b > 0.0 && b < 1.0)) fail_domain("KL needs b in (0, 1)");
  double kl = 0.0;
  if (a > 0.0) kl += a * std::log(a / b);
  if (a < 1.0) kl += (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
  return kl;
}

double log_tail_bound(std::int64_t n, std::int64_t n_star, double p_x) {
  if (n < 1) fail_domain("tail bound needs n >= 1");
  if (!(p_x > 0.0 && p_x < 1.0)) fail_domain("tail bound needs p_x in (0, 1)");
  if (n_star < 0) fail_domain("tail bound needs n_star >= 0");
  const double rate = static_cast<double>(n_star) / static_cast<double>(n);
  if (rate > p_x)
    fail_domain("tail bound is valid only for n_star <= n * p_x");
  return -static_cast<double>(n) * bernoulli_kl(rate, p_x);
}

double tail_bound(std::int64_t n, std::int64_t n_star, double p_x) {
  return std::exp(log_tail_bound(n, n_star, p_x));
}

double log_binomial_tail_exact(std::int64_t n, std::int64_t k, double p) {
  if (n < 1) fail_domain("binomial tail needs n >= 1");
  if (!(p > 0.0 && p < 1.0)) fail_domain("binomial tail needs p in (0, 1)");
  if (k < 0) fail_domain("binomial tail needs k >= 0");
  k = std::min(k, n);

  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  const double lg_n1 = std::lgamma(static_cast<double>(n) + 1.0);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(k) + 1);
  for (std::int64_t j = 0; j <= k; ++j) {
    double lg_choose = lg_n1 - std::lgamma(static_cast<double>(j) + 1.0) -
                       std::lgamma(static_cast<double>(n - j) + 1.0);
    terms.push_back(lg_choose + static_cast<double>(j) * log_p +
                    static_cast<double>(n - j) * log_q);
  }
  double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return std::min(top + std::log(acc), 0.0);
}

double binomial_tail_exact(std::int64_t n, std::int64_t k, double p) {
  return std::exp(log_binomial_tail_exact(n, k, p));
}

std::int64_t total_budget(std::int64_t num_inputs, std::int64_t per_input) {
  if (num_inputs < 1 || per_input < 1) fail_domain("budget factors must be >= 1");
  return num_inputs * per_input;
}

BoundReport bound_report(double epsilon, std::int64_t num_inputs, std::int64_t budget) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) fail_domain("epsilon must lie in (0, 0.5)");
  if (num_inputs < 1) fail_domain("num_inputs must be >= 1");
  if (budget < 1) fail_domain("budget must be >= 1");

  BoundReport r;
  r.epsilon = epsilon;
  r.num_inputs = num_inputs;
  r.budget = budget;
  r.p_x = 1.0 / static_cast<double>(num_inputs);
  r.n_star = required_per_input(epsilon);
  r.budget_per_input = budget / num_inputs;

  r.formula_valid =
      static_cast<double>(r.n_star) / static_cast<double>(budget) <= r.p_x;
  r.tail_formula = r.formula_valid ? tail_bound(budget, r.n_star, r.p_x) : 1.0;
  r.tail_exact = binomial_tail_exact(budget, std::min(r.n_star, budget), r.p_x);
  r.union_formula = std::min(1.0, static_cast<double>(num_inputs) * r.tail_formula);
  r.union_exact = std::min(1.0, static_cast<double>(num_inputs) * r.tail_exact);
  return r;
}

}  // namespace lever
