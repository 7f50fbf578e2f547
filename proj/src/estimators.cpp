#include "lever/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "lever/normal.hpp"
#include "lever/sampler.hpp"

namespace lever {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + e^t) without overflow.
double log1pexp(double t) { return t > 33.0 ? t : std::log1p(std::exp(t)); }

}  // namespace

// ---------------------------------------------------------------------------
// constant / truth

ConstantModel::ConstantModel(double p_left) : p_left_(p_left) {
  if (!(p_left >= 0.0 && p_left <= 1.0)) fail("constant prediction must lie in [0, 1]");
}

std::string ConstantModel::id() const { return "constant-" + format_value(p_left_); }

nlohmann::json ConstantModel::to_json() const {
  return {{"type", "constant"}, {"p", p_left_}};
}

TrueModel::TrueModel(WorldSpec world) : world_(std::move(world)) {}

void TrueModel::fit(const Dataset& data) { world_ = data.world; }

double TrueModel::predict_left(const VisibleInput& x) const {
  return true_conditional(world_, x);
}

double TrueModel::predict_delta(const VisibleInput& x_new, const VisibleInput& x_base) const {
  return conditional_diff(world_, x_new, x_base, world_.latent.mean);
}

nlohmann::json TrueModel::to_json() const {
  return {{"type", "truth"}, {"world", world_to_json(world_)}};
}

// ---------------------------------------------------------------------------
// naive per-input frequencies

std::size_t NaiveMle::InputHash::operator()(const VisibleInput& x) const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double v : x) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 0x100000001b3ull;
  }
  return static_cast<std::size_t>(h);
}

void NaiveMle::fit(const Dataset& data) {
  world_ = data.world;
  cells_.clear();
  for (const Sample& s : data.samples) {
    Cell& cell = cells_[s.x];
    cell.total += 1;
    cell.left += s.y == Outcome::left ? 1 : 0;
  }
}

double NaiveMle::predict_left(const VisibleInput& x) const {
  auto it = cells_.find(x);
  if (it == cells_.end()) return 0.5;
  return static_cast<double>(it->second.left) / static_cast<double>(it->second.total);
}

nlohmann::json NaiveMle::to_json() const {
  std::vector<const VisibleInput*> keys;
  keys.reserve(cells_.size());
  for (const auto& [x, cell] : cells_) keys.push_back(&x);
  std::sort(keys.begin(), keys.end(),
            [](const VisibleInput* a, const VisibleInput* b) { return *a < *b; });
  nlohmann::json table = nlohmann::json::array();
  for (const VisibleInput* x : keys) {
    const Cell& cell = cells_.at(*x);
    table.push_back({{"x", *x}, {"n", cell.total}, {"left", cell.left}});
  }
  return {{"type", "naive"}, {"world", world_to_json(world_)}, {"cells", std::move(table)}};
}

// ---------------------------------------------------------------------------
// polynomial logistic regression

std::int64_t poly_feature_count(int v, int degree) {
  // C(v + degree, degree) - 1: every monomial up to the total degree except
  // the constant one, which lives in the intercept.
  std::int64_t num = 1;
  for (int k = 1; k <= degree; ++k) num = num * (v + k) / k;
  return num - 1;
}

std::vector<std::vector<int>> monomial_index_sets(int v, int degree) {
  if (v < 1 || degree < 1) fail("polynomial expansion needs v >= 1 and degree >= 1");
  std::vector<std::vector<int>> out;
  for (int k = 1; k <= degree; ++k) {
    std::vector<int> combo(k, 0);
    for (;;) {
      out.push_back(combo);
      int pos = k - 1;
      while (pos >= 0 && combo[pos] == v - 1) --pos;
      if (pos < 0) break;
      int next = combo[pos] + 1;
      for (int i = pos; i < k; ++i) combo[i] = next;
    }
  }
  return out;
}

PolyLogReg::PolyLogReg(LogRegOptions opts) : opts_(opts) {
  if (opts_.degree < 1) fail("logreg degree must be >= 1");
  if (opts_.l2 < 0.0) fail("logreg l2 must be >= 0");
}

std::string PolyLogReg::id() const { return "logreg-d" + std::to_string(opts_.degree); }

Eigen::VectorXd PolyLogReg::features(const VisibleInput& x) const {
  Eigen::VectorXd f(static_cast<Eigen::Index>(combos_.size()));
  for (std::size_t j = 0; j < combos_.size(); ++j) {
    double prod = 1.0;
    for (int idx : combos_[j]) prod *= x[static_cast<std::size_t>(idx)];
    f[static_cast<Eigen::Index>(j)] = prod;
  }
  return f;
}

void PolyLogReg::fit(const Dataset& data) {
  if (data.samples.empty()) fail("logreg needs a nonempty training set");
  world_ = data.world;
  combos_ = monomial_index_sets(static_cast<int>(world_.schema.size()), opts_.degree);

  const Eigen::Index n = static_cast<Eigen::Index>(data.samples.size());
  const Eigen::Index p = static_cast<Eigen::Index>(combos_.size());

  Eigen::VectorXd y(n);
  std::int64_t left = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = data.samples[static_cast<std::size_t>(i)].y == Outcome::left ? 1.0 : 0.0;
    left += y[i] > 0.5 ? 1 : 0;
  }

  degenerate_ = left == 0 || left == n;
  if (degenerate_) {
    // One-outcome training set: the unpenalized intercept would run away, so
    // fit it to the add-half smoothed frequency and keep the weights at zero.
    mean_ = Eigen::VectorXd::Zero(p);
    scale_ = Eigen::VectorXd::Ones(p);
    theta_ = Eigen::VectorXd::Zero(p + 1);
    double q = (static_cast<double>(left) + 0.5) / (static_cast<double>(n) + 1.0);
    theta_[p] = std::log(q / (1.0 - q));
    converged_ = true;
    iterations_ = 0;
    return;
  }

  Eigen::MatrixXd design(n, p + 1);
  for (Eigen::Index i = 0; i < n; ++i)
    design.row(i).head(p) = features(data.samples[static_cast<std::size_t>(i)].x);
  design.col(p).setOnes();

  mean_ = design.leftCols(p).colwise().mean();
  scale_.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double var = (design.col(j).array() - mean_[j]).square().sum() / static_cast<double>(n);
    scale_[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    design.col(j) = (design.col(j).array() - mean_[j]) / scale_[j];
  }

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p + 1, opts_.l2);
  penalty[p] = 0.0;

  auto objective = [&](const Eigen::VectorXd& theta, const Eigen::VectorXd& eta) {
    double nll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) nll += log1pexp(eta[i]) - y[i] * eta[i];
    double ridge = 0.5 * opts_.l2 * theta.head(p).squaredNorm();
    return nll / static_cast<double>(n) + ridge;
  };

  theta_ = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd eta = design * theta_;
  double obj = objective(theta_, eta);

  converged_ = false;
  iterations_ = 0;
  const Eigen::Index block = 8192;
  Eigen::VectorXd mu(n), w(n), grad(p + 1);
  Eigen::MatrixXd hess(p + 1, p + 1);

  for (int iter = 0; iter < opts_.max_iter; ++iter) {
    iterations_ = iter + 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = sigmoid(eta[i]);
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-12);
    }
    grad.noalias() = design.transpose() * (mu - y) / static_cast<double>(n);
    grad += penalty.cwiseProduct(theta_);
    if (grad.lpNorm<Eigen::Infinity>() <= opts_.grad_tol) {
      converged_ = true;
      break;
    }

    hess.setZero();
    for (Eigen::Index i0 = 0; i0 < n; i0 += block) {
      Eigen::Index b = std::min(block, n - i0);
      Eigen::MatrixXd scaled = w.segment(i0, b).asDiagonal() * design.middleRows(i0, b);
      hess.noalias() += design.middleRows(i0, b).transpose() * scaled;
    }
    hess /= static_cast<double>(n);
    hess += penalty.asDiagonal();
    hess.diagonal().array() += 1e-12;

    Eigen::VectorXd step = hess.ldlt().solve(grad);
    double stepsize = 1.0;
    bool accepted = false;
    for (int half = 0; half < 30; ++half) {
      Eigen::VectorXd cand = theta_ - stepsize * step;
      Eigen::VectorXd cand_eta = design * cand;
      double cand_obj = objective(cand, cand_eta);
      if (cand_obj <= obj) {
        theta_ = std::move(cand);
        eta = std::move(cand_eta);
        accepted = cand_obj < obj;
        obj = cand_obj;
        break;
      }
      stepsize *= 0.5;
    }
    if (!accepted) {
      converged_ = grad.lpNorm<Eigen::Infinity>() <= 1e2 * opts_.grad_tol;
      break;
    }
  }
}

double PolyLogReg::predict_left(const VisibleInput& x) const {
  if (theta_.size() == 0) fail("predict before fit");
  const Eigen::Index p = static_cast<Eigen::Index>(combos_.size());
  Eigen::VectorXd f = features(x);
  double eta = theta_[p];
  for (Eigen::Index j = 0; j < p; ++j) eta += theta_[j] * (f[j] - mean_[j]) / scale_[j];
  return sigmoid(eta);
}

nlohmann::json PolyLogReg::to_json() const {
  return {{"type", "logreg"},
          {"world", world_to_json(world_)},
          {"degree", opts_.degree},
          {"l2", opts_.l2},
          {"theta", std::vector<double>(theta_.begin(), theta_.end())},
          {"mean", std::vector<double>(mean_.begin(), mean_.end())},
          {"scale", std::vector<double>(scale_.begin(), scale_.end())},
          {"converged", converged_},
          {"degenerate", degenerate_},
          {"iterations", iterations_}};
}

// ---------------------------------------------------------------------------
// structure-aware maximum likelihood

StructureMle::StructureMle(StructureOptions opts) : opts_(opts) {
  if (!(opts_.lo < opts_.hi)) fail("structure search interval is empty");
  if (!(opts_.grid_step > 0.0)) fail("structure grid step must be positive");
}

std::string StructureMle::id() const {
  return opts_.mode == StructureOptions::Mode::parametric ? "structure-parametric"
                                                          : "structure-grid";
}

namespace {

// Per-sample constraint: the outcome pins the latent distance to a half-line
// through tau = -K/c, oriented by the signs of c and the outcome.
struct HalfLine {
  double a = 0.0;   // K / |c|
  double g = 0.0;   // sign of c
  bool left = false;

  bool operator<(const HalfLine& o) const {
    return std::tie(a, g, left) < std::tie(o.a, o.g, o.left);
  }
};

std::map<HalfLine, std::int64_t> bucket_samples(const WorldSpec& world, const Dataset& data,
                                                std::int64_t* dropped) {
  std::map<HalfLine, std::int64_t> buckets;
  for (const Sample& s : data.samples) {
    TorqueSplit split = torque_split(world, s.x);
    if (split.latent_coeff == 0.0) {
      // No latent influence: the sample carries no information about the
      // latent distribution.
      ++*dropped;
      continue;
    }
    HalfLine key;
    key.a = split.visible / std::abs(split.latent_coeff);
    key.g = split.latent_coeff > 0.0 ? 1.0 : -1.0;
    key.left = s.y == Outcome::left;
    buckets[key] += 1;
  }
  return buckets;
}

}  // namespace

void StructureMle::fit(const Dataset& data) {
  world_ = data.world;
  grid_points_.clear();
  pmf_.clear();
  em_loglik_.clear();
  warnings_.clear();

  if (opts_.mode == StructureOptions::Mode::parametric) {
    if (data.samples.empty()) {
      mu_hat_ = 0.5 * (opts_.lo + opts_.hi);
      warnings_.push_back("empty training set: latent mean defaulted to the interval midpoint");
      return;
    }
    std::int64_t dropped = 0;
    auto buckets = bucket_samples(world_, data, &dropped);
    if (dropped > 0) warnings_.push_back("samples without latent influence were ignored");

    // log-likelihood of mean m: sum over samples of log p(y | x; m), where
    // p(L | x; m) = Phi(g*m + a).
    auto loglik = [&buckets](double m) {
      double acc = 0.0;
      for (const auto& [key, count] : buckets) {
        double t = key.g * m + key.a;
        acc += static_cast<double>(count) * log_normal_cdf(key.left ? t : -t);
      }
      return acc;
    };

    constexpr double inv_phi = 0.61803398874989484820;
    double a = opts_.lo, b = opts_.hi;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = loglik(c), fd = loglik(d);
    while (b - a > opts_.golden_width) {
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - inv_phi * (b - a);
        fc = loglik(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + inv_phi * (b - a);
        fd = loglik(d);
      }
    }
    mu_hat_ = 0.5 * (a + b);
    return;
  }

  // grid EM over a discrete pmf on [lo, hi]
  const int g_count = static_cast<int>(std::floor((opts_.hi - opts_.lo) / opts_.grid_step + 0.5)) + 1;
  grid_points_.resize(static_cast<std::size_t>(g_count));
  for (int j = 0; j < g_count; ++j) grid_points_[static_cast<std::size_t>(j)] = opts_.lo + opts_.grid_step * j;
  pmf_.assign(static_cast<std::size_t>(g_count), 1.0 / g_count);

  if (data.samples.empty()) {
    mu_hat_ = 0.5 * (opts_.lo + opts_.hi);
    warnings_.push_back("empty training set: pmf left uniform");
    return;
  }

  std::int64_t dropped = 0;
  auto buckets = bucket_samples(world_, data, &dropped);
  if (dropped > 0) warnings_.push_back("samples without latent influence were ignored");

  // Constraint sets on the grid: for each bucket, the contiguous index range
  // where the outcome is consistent with the latent value.
  struct Range {
    int lo = 0, hi = -1;  // inclusive; empty when hi < lo
    std::int64_t count = 0;
  };
  std::vector<Range> ranges;
  bool saw_empty = false;
  for (const auto& [key, count] : buckets) {
    // Outcome L holds where g*d + a >= 0; the admissible set is a prefix or
    // suffix of the grid. Scan endpoints exactly rather than trusting
    // floating division for the boundary index.
    auto consistent = [&key, this](int j) {
      double margin = key.g * grid_points_[static_cast<std::size_t>(j)] + key.a;
      bool left = margin >= 0.0;
      return left == key.left;
    };
    Range r;
    r.count = count;
    if ((key.g > 0.0) == key.left) {  // suffix
      int j = 0;
      while (j < g_count && !consistent(j)) ++j;
      r.lo = j;
      r.hi = g_count - 1;
    } else {  // prefix
      int j = g_count - 1;
      while (j >= 0 && !consistent(j)) --j;
      r.lo = 0;
      r.hi = j;
    }
    if (r.hi < r.lo) {
      saw_empty = true;
      continue;
    }
    ranges.push_back(r);
  }
  if (saw_empty)
    warnings_.push_back("samples inconsistent with every grid point were skipped");

  std::vector<double> prefix(static_cast<std::size_t>(g_count) + 1, 0.0);
  std::vector<double> weight(static_cast<std::size_t>(g_count) + 1, 0.0);
  bool saw_zero_support = false;
  for (int iter = 0; iter < opts_.em_max_iter; ++iter) {
    prefix[0] = 0.0;
    for (int j = 0; j < g_count; ++j)
      prefix[static_cast<std::size_t>(j) + 1] = prefix[static_cast<std::size_t>(j)] + pmf_[static_cast<std::size_t>(j)];

    double loglik = 0.0;
    double used = 0.0;
    std::fill(weight.begin(), weight.end(), 0.0);
    bool zero_support = false;
    for (const Range& r : ranges) {
      double mass = prefix[static_cast<std::size_t>(r.hi) + 1] - prefix[static_cast<std::size_t>(r.lo)];
      if (mass <= 0.0) {
        zero_support = true;
        continue;
      }
      loglik += static_cast<double>(r.count) * std::log(mass);
      double add = static_cast<double>(r.count) / mass;
      weight[static_cast<std::size_t>(r.lo)] += add;
      weight[static_cast<std::size_t>(r.hi) + 1] -= add;
      used += static_cast<double>(r.count);
    }
    em_loglik_.push_back(loglik);
    if (zero_support && !saw_zero_support) {
      warnings_.push_back("samples whose constraint set lost all pmf mass were skipped");
      saw_zero_support = true;
    }
    if (used <= 0.0) {
      warnings_.push_back("no sample retained support: pmf left unchanged");
      break;
    }

    double acc = 0.0;
    double max_change = 0.0;
    std::vector<double> next(pmf_.size());
    for (int j = 0; j < g_count; ++j) {
      acc += weight[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(j)] = pmf_[static_cast<std::size_t>(j)] * acc / used;
    }
    double total = 0.0;
    for (double v : next) total += v;
    for (double& v : next) v /= total;
    for (std::size_t j = 0; j < next.size(); ++j)
      max_change = std::max(max_change, std::abs(next[j] - pmf_[j]));
    pmf_ = std::move(next);
    if (max_change < opts_.em_tol) break;
  }

  mu_hat_ = 0.0;
  for (std::size_t j = 0; j < pmf_.size(); ++j) mu_hat_ += grid_points_[j] * pmf_[j];
}

double StructureMle::predict_left(const VisibleInput& x) const {
  if (opts_.mode == StructureOptions::Mode::parametric)
    return conditional_given_mean(world_, x, mu_hat_);

  TorqueSplit split = torque_split(world_, x);
  if (split.latent_coeff == 0.0) return split.visible >= 0.0 ? 1.0 : 0.0;
  double p = 0.0;
  for (std::size_t j = 0; j < pmf_.size(); ++j)
    if (split.visible + split.latent_coeff * grid_points_[j] >= 0.0) p += pmf_[j];
  // The pmf is normalized only up to rounding, so the partial sum can poke a
  // few ulps past 1.
  return std::clamp(p, 0.0, 1.0);
}

double StructureMle::predict_delta(const VisibleInput& x_new, const VisibleInput& x_base) const {
  if (opts_.mode == StructureOptions::Mode::parametric)
    return conditional_diff(world_, x_new, x_base, mu_hat_);
  return predict_left(x_new) - predict_left(x_base);
}

nlohmann::json StructureMle::to_json() const {
  nlohmann::json j{{"type", "structure"},
                   {"world", world_to_json(world_)},
                   {"mode", opts_.mode == StructureOptions::Mode::parametric ? "parametric" : "grid"},
                   {"mu_hat", mu_hat_},
                   {"warnings", warnings_}};
  if (opts_.mode == StructureOptions::Mode::grid_em) {
    j["grid"] = {{"lo", opts_.lo}, {"hi", opts_.hi}, {"step", opts_.grid_step}};
    j["pmf"] = pmf_;
    j["em_iterations"] = em_loglik_.size();
  }
  return j;
}

// ---------------------------------------------------------------------------
// factories

std::unique_ptr<Estimator> make_estimator(const nlohmann::json& config) {
  const std::string type = config.at("type").get<std::string>();
  if (type == "naive") return std::make_unique<NaiveMle>();
  if (type == "constant") return std::make_unique<ConstantModel>(config.value("p", 0.5));
  if (type == "truth") return std::make_unique<TrueModel>();
  if (type == "logreg") {
    LogRegOptions opts;
    opts.degree = config.value("degree", 1);
    opts.l2 = config.value("l2", opts.l2);
    opts.max_iter = config.value("max_iter", opts.max_iter);
    return std::make_unique<PolyLogReg>(opts);
  }
  if (type == "structure") {
    StructureOptions opts;
    const std::string mode = config.value("mode", "parametric");
    if (mode == "parametric") opts.mode = StructureOptions::Mode::parametric;
    else if (mode == "grid") opts.mode = StructureOptions::Mode::grid_em;
    else fail("unknown structure mode: " + mode);
    return std::make_unique<StructureMle>(opts);
  }
  fail("unknown estimator type: " + type);
}

std::unique_ptr<Estimator> estimator_from_json(const nlohmann::json& model) {
  const std::string type = model.at("type").get<std::string>();
  if (type == "constant") return std::make_unique<ConstantModel>(model.at("p").get<double>());
  if (type == "truth")
    return std::make_unique<TrueModel>(world_from_json(model.at("world")));
  if (type == "naive") {
    auto est = std::make_unique<NaiveMle>();
    est->world_ = world_from_json(model.at("world"));
    for (const nlohmann::json& cell : model.at("cells")) {
      NaiveMle::Cell c;
      c.total = cell.at("n").get<std::int64_t>();
      c.left = cell.at("left").get<std::int64_t>();
      est->cells_[cell.at("x").get<VisibleInput>()] = c;
    }
    return est;
  }
  if (type == "logreg") {
    LogRegOptions opts;
    opts.degree = model.at("degree").get<int>();
    opts.l2 = model.at("l2").get<double>();
    auto est = std::make_unique<PolyLogReg>(opts);
    est->world_ = world_from_json(model.at("world"));
    est->combos_ = monomial_index_sets(static_cast<int>(est->world_.schema.size()), opts.degree);
    auto theta = model.at("theta").get<std::vector<double>>();
    auto mean = model.at("mean").get<std::vector<double>>();
    auto scale = model.at("scale").get<std::vector<double>>();
    if (theta.size() != est->combos_.size() + 1 || mean.size() != est->combos_.size() ||
        scale.size() != est->combos_.size())
      fail("logreg model does not match its world's feature count");
    est->theta_ = Eigen::Map<Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    est->mean_ = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    est->scale_ = Eigen::Map<Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    est->converged_ = model.value("converged", false);
    est->degenerate_ = model.value("degenerate", false);
    est->iterations_ = model.value("iterations", 0);
    return est;
  }
  if (type == "structure") {
    StructureOptions opts;
    opts.mode = model.at("mode").get<std::string>() == "parametric"
                    ? StructureOptions::Mode::parametric
                    : StructureOptions::Mode::grid_em;
    if (model.contains("grid")) {
      opts.lo = model["grid"].at("lo").get<double>();
      opts.hi = model["grid"].at("hi").get<double>();
      opts.grid_step = model["grid"].at("step").get<double>();
    }
    auto est = std::make_unique<StructureMle>(opts);
    est->world_ = world_from_json(model.at("world"));
    est->mu_hat_ = model.at("mu_hat").get<double>();
    if (opts.mode == StructureOptions::Mode::grid_em) {
      est->pmf_ = model.at("pmf").get<std::vector<double>>();
      est->grid_points_.resize(est->pmf_.size());
      for (std::size_t j = 0; j < est->pmf_.size(); ++j)
        est->grid_points_[j] = opts.lo + opts.grid_step * static_cast<double>(j);
    }
    return est;
  }
  fail("unknown estimator type: " + type);
}

}  // namespace lever
