#pragma once

#include <cstdint>

namespace lever {

// Sample-complexity accounting for the naive per-input estimator. With N_x
// observations of one input, the expected squared TV error is at most
// 1/(16·N_x), so hitting an expected error of epsilon needs
// N* = ceil(1/(16·epsilon²)) samples at that input. The budget for a whole
// world multiplies a per-input target by the input count, and the risk that
// sampling leaves some input short is controlled by a Chernoff bound on the
// binomial left tail, reported alongside the exact tail for comparison.

// Smallest integer N* with 1/(16·N*) <= epsilon². Requires 0 < epsilon < 1.
std::int64_t required_per_input(double epsilon);

// KL divergence between Bernoulli(a) and Bernoulli(b), in nats.
double bernoulli_kl(double a, double b);

// Chernoff bound on P(Bin(n, p_x) <= n_star): exp(-n·KL(n_star/n || p_x)).
// Valid only for 0 < p_x < 1 and 0 <= n_star <= n·p_x; throws
// std::domain_error outside that regime, where the inequality direction is
// not guaranteed.
double tail_bound(std::int64_t n, std::int64_t n_star, double p_x);
double log_tail_bound(std::int64_t n, std::int64_t n_star, double p_x);

// Exact left tail P(Bin(n, p) <= k), summed in log space via lgamma.
double binomial_tail_exact(std::int64_t n, std::int64_t k, double p);
double log_binomial_tail_exact(std::int64_t n, std::int64_t k, double p);

// per_input samples at each of num_inputs equally likely inputs.
std::int64_t total_budget(std::int64_t num_inputs, std::int64_t per_input);

struct BoundReport {
  double epsilon = 0.0;
  std::int64_t num_inputs = 0;
  std::int64_t budget = 0;
  double p_x = 0.0;               // uniform per-input probability
  std::int64_t n_star = 0;        // required_per_input(epsilon)
  std::int64_t budget_per_input = 0;  // floor(budget / num_inputs)
  bool formula_valid = false;     // n_star within the Chernoff regime
  double tail_formula = 1.0;      // Chernoff bound at (budget, n_star, p_x)
  double tail_exact = 1.0;        // exact binomial tail at the same point
  double union_formula = 1.0;     // min(1, num_inputs · tail_formula)
  double union_exact = 1.0;
};

// Assembles the full accounting for one query. Requires 0 < epsilon < 0.5,
// num_inputs >= 1 and budget >= 1; the per-input probability is uniform,
// p_x = 1/num_inputs. When n_star falls outside the Chernoff regime the
// formula columns degrade to the trivial bound 1 with formula_valid = false
// rather than throwing.
BoundReport bound_report(double epsilon, std::int64_t num_inputs, std::int64_t budget);

}  // namespace lever
