#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lever/sampler.hpp"
#include "lever/worldgen.hpp"

namespace lever {

// A fitted conditional model p(balance = L | visible input). Fit once, then
// predict freely; predict_left must be const and thread-safe.
class Estimator {
 public:
  virtual ~Estimator() = default;

  virtual std::string id() const = 0;
  virtual void fit(const Dataset& data) = 0;
  virtual double predict_left(const VisibleInput& x) const = 0;

  // Signed probability change between two inputs. The default subtracts the
  // two predictions; models with analytic structure override it to keep the
  // sign when both predictions saturate.
  virtual double predict_delta(const VisibleInput& x_new, const VisibleInput& x_base) const {
    return predict_left(x_new) - predict_left(x_base);
  }

  // Serialized fitted state, embedding the world; estimator_from_json is the
  // inverse and restores a ready predictor without refitting.
  virtual nlohmann::json to_json() const = 0;
};

// Fixed prediction, mainly a floor for metric sanity checks.
class ConstantModel final : public Estimator {
 public:
  explicit ConstantModel(double p_left = 0.5);
  std::string id() const override;
  void fit(const Dataset&) override {}
  double predict_left(const VisibleInput&) const override { return p_left_; }
  nlohmann::json to_json() const override;

 private:
  double p_left_;
};

// The generating conditional itself, as a ceiling reference.
class TrueModel final : public Estimator {
 public:
  TrueModel() = default;
  explicit TrueModel(WorldSpec world);
  std::string id() const override { return "truth"; }
  void fit(const Dataset& data) override;
  double predict_left(const VisibleInput& x) const override;
  double predict_delta(const VisibleInput& x_new, const VisibleInput& x_base) const override;
  nlohmann::json to_json() const override;

 private:
  WorldSpec world_;
};

// Per-input empirical frequency of L, falling back to 1/2 on inputs never
// seen in training.
class NaiveMle final : public Estimator {
 public:
  std::string id() const override { return "naive-mle"; }
  void fit(const Dataset& data) override;
  double predict_left(const VisibleInput& x) const override;
  nlohmann::json to_json() const override;

  std::size_t table_size() const { return cells_.size(); }

 private:
  struct Cell {
    std::int64_t left = 0;
    std::int64_t total = 0;
  };
  struct InputHash {
    std::size_t operator()(const VisibleInput& x) const;
  };

  WorldSpec world_;
  std::unordered_map<VisibleInput, Cell, InputHash> cells_;

  friend std::unique_ptr<Estimator> estimator_from_json(const nlohmann::json&);
};

struct LogRegOptions {
  int degree = 1;
  double l2 = 1e-4;  // ridge strength on weights; the intercept is free
  int max_iter = 100;
  double grad_tol = 1e-8;
};

// Logistic regression on the polynomial expansion of the visible variables:
// all monomials of total degree 1..degree over the visible input (sides
// enter as ±1), standardized per feature, plus an unpenalized intercept.
// Fit by damped Newton (IRLS) on mean log loss + (l2/2)·|w|².
class PolyLogReg final : public Estimator {
 public:
  explicit PolyLogReg(LogRegOptions opts = {});
  std::string id() const override;
  void fit(const Dataset& data) override;
  double predict_left(const VisibleInput& x) const override;
  nlohmann::json to_json() const override;

  bool converged() const { return converged_; }
  int iterations() const { return iterations_; }
  std::size_t feature_count() const { return combos_.size(); }

 private:
  Eigen::VectorXd features(const VisibleInput& x) const;

  LogRegOptions opts_;
  WorldSpec world_;
  std::vector<std::vector<int>> combos_;  // monomials as sorted variable indices
  Eigen::VectorXd theta_;                 // weights, then intercept last
  Eigen::VectorXd mean_, scale_;
  bool converged_ = false;
  bool degenerate_ = false;  // single-outcome training set, intercept-only fit
  int iterations_ = 0;

  friend std::unique_ptr<Estimator> estimator_from_json(const nlohmann::json&);
};

// Number of monomials over v variables with total degree in 1..degree.
std::int64_t poly_feature_count(int v, int degree);

// Monomial index multisets in canonical order: degree ascending, then
// lexicographic within a degree. (a, b) at degree 2: a, b, a², ab, b².
std::vector<std::vector<int>> monomial_index_sets(int v, int degree);

struct StructureOptions {
  enum class Mode { parametric, grid_em };
  Mode mode = Mode::parametric;
  double lo = -2.0;  // latent-mean search interval
  double hi = 8.0;
  double golden_width = 1e-6;
  double grid_step = 0.05;
  double em_tol = 1e-8;  // max pmf change between iterations
  int em_max_iter = 500;
};

// Maximum likelihood over the latent distance distribution with the lever
// mechanics taken as known: outcomes are deterministic given the latent
// draw, so a sample pins the latent to a half-line and the likelihood of a
// candidate distribution is the mass it puts there. Parametric mode searches
// the unit-variance Gaussian mean by golden section; grid mode runs EM over
// a discrete pmf on [lo, hi].
class StructureMle final : public Estimator {
 public:
  explicit StructureMle(StructureOptions opts = {});
  std::string id() const override;
  void fit(const Dataset& data) override;
  double predict_left(const VisibleInput& x) const override;
  double predict_delta(const VisibleInput& x_new, const VisibleInput& x_base) const override;
  nlohmann::json to_json() const override;

  double mu_hat() const { return mu_hat_; }
  const std::vector<double>& grid_points() const { return grid_points_; }
  const std::vector<double>& pmf() const { return pmf_; }
  const std::vector<double>& em_loglik_history() const { return em_loglik_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  StructureOptions opts_;
  WorldSpec world_;
  double mu_hat_ = 0.0;
  std::vector<double> grid_points_, pmf_;  // grid mode only
  std::vector<double> em_loglik_;
  std::vector<std::string> warnings_;

  friend std::unique_ptr<Estimator> estimator_from_json(const nlohmann::json&);
};

// Unfitted estimator from a config like {"type":"logreg","degree":3}.
// Types: naive, logreg (degree, l2), structure (mode: parametric|grid),
// constant (p), truth.
std::unique_ptr<Estimator> make_estimator(const nlohmann::json& config);

// Fitted estimator from the output of to_json().
std::unique_ptr<Estimator> estimator_from_json(const nlohmann::json& model);

}  // namespace lever
