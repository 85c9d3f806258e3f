#include "tradi/losses.hpp"
#include "tradi/oracles.hpp"
#include "tradi/runner.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace tradi::runner {

namespace {

struct GradientProbe {
  std::vector<nn::LayerSpec> specs;
  std::string loss;  // "mse", "nll", "ce"
  int batch = 7;
};

double loss_of(const nn::Network& net, const nn::ParamVector& params, const Matrix& x,
               const Vector& y, const std::vector<int>& labels, const std::string& loss,
               std::uint64_t seed) {
  const auto fwd = nn::forward(net, params, x, nn::ForwardMode::train, seed);
  if (loss == "mse") return losses::mse_loss(fwd.output.col(0), y).scalar;
  if (loss == "nll") {
    const auto heads = nn::regression_heads(fwd.output);
    return losses::gaussian_nll_loss(heads.mu, heads.sigma2, y).scalar;
  }
  return losses::cross_entropy_loss(fwd.output, labels).scalar;
}

Vector analytic_gradient(const nn::Network& net, const nn::ParamVector& params, const Matrix& x,
                         const Vector& y, const std::vector<int>& labels, const std::string& loss,
                         std::uint64_t seed) {
  const auto fwd = nn::forward(net, params, x, nn::ForwardMode::train, seed);
  Matrix output_grad;
  if (loss == "mse") {
    output_grad = losses::mse_loss(fwd.output.col(0), y).grad;
  } else if (loss == "nll") {
    const auto heads = nn::regression_heads(fwd.output);
    const auto lv = losses::gaussian_nll_loss(heads.mu, heads.sigma2, y);
    output_grad = nn::regression_heads_backward(fwd.output, lv.grad.col(0), lv.grad.col(1));
  } else {
    output_grad = losses::cross_entropy_loss(fwd.output, labels).grad;
  }
  return nn::backward(net, params, fwd.cache, output_grad).values;
}

VerifyCheck check_gradients(std::uint64_t seed, bool inject_fault) {
  const std::vector<GradientProbe> probes = {
      {{nn::dense(4, 1)}, "mse"},
      {{nn::dense(4, 8), nn::relu(8), nn::dense(8, 1)}, "mse"},
      {{nn::dense(4, 8), nn::relu(8), nn::dense(8, 2)}, "nll"},
      {{nn::dense(5, 16), nn::relu(16), nn::dropout(16, 0.2), nn::dense(16, 3)}, "ce"},
      {{nn::dense(6, 12), nn::relu(12), nn::batchnorm(12), nn::dense(12, 4)}, "ce"},
      {{nn::dense(3, 10), nn::batchnorm(10), nn::relu(10), nn::dense(10, 2)}, "nll"},
  };

  double worst = 0.0;
  std::string worst_at;
  bool first = true;
  for (const auto& probe : probes) {
    const auto net = nn::make_network(probe.specs);
    auto init = nn::init_weights(probe.specs, derive_seed(seed, 0x9d));
    auto rng = make_rng(derive_seed(seed, 0xda7a));
    std::normal_distribution<double> unit(0.0, 1.0);
    Matrix x(probe.batch, probe.specs.front().in_dim);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = unit(rng);
    Vector y(probe.batch);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = unit(rng);
    std::vector<int> labels(static_cast<std::size_t>(probe.batch));
    std::uniform_int_distribution<int> lab(0, probe.specs.back().out_dim - 1);
    for (auto& l : labels) l = lab(rng);

    const std::uint64_t fwd_seed = derive_seed(seed, 0x5eed);
    Vector analytic =
        analytic_gradient(net, init.params, x, y, labels, probe.loss, fwd_seed);
    if (inject_fault && first) analytic[0] += 1e-3;
    first = false;

    auto f = [&](const Vector& values) {
      nn::ParamVector p;
      p.values = values;
      p.layout = init.params.layout;
      return loss_of(net, p, x, y, labels, probe.loss, fwd_seed);
    };
    const Vector fd = oracles::fd_gradient(f, init.params.values, 1e-5);

    // |a - f| <= atol + rtol * |g| with rtol 1e-5; the absolute term covers
    // coordinates below the h^2 truncation noise of central differences
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      const double tol = 1e-9 + 1e-5 * std::max(std::abs(analytic[i]), std::abs(fd[i]));
      const double excess = std::abs(analytic[i] - fd[i]) / tol;
      if (excess > worst) {
        worst = excess;
        std::ostringstream os;
        os << probe.loss << " net, coordinate " << i;
        worst_at = os.str();
      }
    }
  }

  VerifyCheck check;
  check.name = "finite_difference_gradients";
  check.pass = worst < 1.0;
  std::ostringstream os;
  os << "worst error at " << worst << "x the 1e-5 tolerance (" << worst_at << ")";
  check.detail = os.str();
  return check;
}

VerifyCheck check_scalar_kalman(std::uint64_t seed) {
  tracker::TrackerHyper hyper;  // defaults
  const double lr = 0.05;

  Vector init_var(1);
  init_var[0] = 0.5;
  auto state = tracker::tracker_init(init_var, hyper);

  oracles::ScalarKalman mean_filter;   // x = mu, starts at 0
  oracles::ScalarKalman var_filter;
  var_filter.x = init_var[0];

  auto rng = make_rng(derive_seed(seed, 0x4a1));
  std::normal_distribution<double> unit(0.0, 1.0);

  double w = 0.7;
  double worst = 0.0;
  double min_sigma2 = 1e9;
  for (int t = 0; t < 50; ++t) {
    const double g = 0.3 * unit(rng);
    w -= lr * g;

    nn::ParamVector wv, gv;
    wv.values = Vector::Constant(1, w);
    gv.values = Vector::Constant(1, g);
    tracker::tracker_step(state, wv, gv, lr, hyper);

    mean_filter.predict(-lr * g, hyper.mean_state_noise);
    mean_filter.update(w, hyper.mean_obs_noise);
    const double mu_t = mean_filter.x;
    var_filter.predict(lr * lr * (g - mu_t) * (g - mu_t), hyper.var_state_noise);
    var_filter.update(w * w - mu_t * mu_t, hyper.var_obs_noise);

    worst = std::max({worst, std::abs(state.mu[0] - mean_filter.x),
                      std::abs(state.sigma2[0] - var_filter.x),
                      std::abs(state.p_mean - mean_filter.p),
                      std::abs(state.p_var - var_filter.p)});
    min_sigma2 = std::min(min_sigma2, state.sigma2[0]);
  }

  VerifyCheck check;
  check.name = "scalar_kalman_oracle";
  // the floor clamp must stay inactive for the textbook comparison to be fair
  check.pass = worst < 1e-12 && min_sigma2 > hyper.variance_floor;
  std::ostringstream os;
  os << "max trajectory deviation " << worst << ", min sigma2 " << min_sigma2;
  check.detail = os.str();
  return check;
}

VerifyCheck check_rff_convergence(std::uint64_t seed) {
  const std::vector<std::pair<double, double>> pairs = {
      {0.0, 1.0}, {0.3, -0.2}, {1.5, 1.0}, {-2.0, 2.0}, {0.5, 0.5}};
  const std::vector<int> sizes = {10, 100, 1000, 10000};

  std::vector<double> errors;
  for (int n : sizes) {
    double err = 0.0;
    int count = 0;
    for (int rep = 0; rep < 100; ++rep) {
      const auto proj = rff::rff_init(n, 1.0, derive_seed(seed, 0xc0 + rep * 17 + n));
      for (const auto& [a, b] : pairs) {
        const double approx = rff::feature_map(proj, a).dot(rff::feature_map(proj, b));
        const double exact = std::exp(-0.5 * (a - b) * (a - b));
        err += std::abs(approx - exact);
        ++count;
      }
    }
    errors.push_back(err / count);
  }

  bool monotone = true;
  for (std::size_t i = 1; i < errors.size(); ++i)
    if (errors[i] > errors[i - 1]) monotone = false;

  VerifyCheck check;
  check.name = "rff_kernel_convergence";
  check.pass = monotone && errors.back() < 0.05;
  std::ostringstream os;
  os << "mean abs errors";
  for (double e : errors) os << ' ' << e;
  check.detail = os.str();
  return check;
}

VerifyCheck check_rff_sample_covariance(std::uint64_t seed) {
  const int k = 10;
  auto rng = make_rng(derive_seed(seed, 0x5a));
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sig(0.3, 1.0);

  Vector w(k), sigma(k);
  for (int i = 0; i < k; ++i) {
    w[i] = unit(rng);
    sigma[i] = sig(rng);
  }
  const auto proj = rff::rff_init(10, 1.0, derive_seed(seed, 0x5b));
  const auto factor = rff::build_factor(proj, w, sigma);
  const Matrix expected = factor.r * factor.r.transpose();

  nn::ParamVector layout_like;
  layout_like.values = Vector::Zero(k);
  layout_like.layout = {{0, 0, static_cast<std::size_t>(k), k}};

  const int draws = 100000;
  Matrix cov = Matrix::Zero(k, k);
  auto draw_rng = make_rng(derive_seed(seed, 0x5c));
  const Vector mu = Vector::Zero(k);
  for (int d = 0; d < draws; ++d) {
    const auto s = sampler::sample_rff(mu, factor, layout_like, draw_rng);
    cov += s.params.values * s.params.values.transpose();
  }
  cov /= static_cast<double>(draws);

  const double dev = (cov - expected).cwiseAbs().maxCoeff();
  VerifyCheck check;
  check.name = "rff_sample_covariance";
  check.pass = dev < 0.02;
  std::ostringstream os;
  os << "max abs deviation from R R^T: " << dev;
  check.detail = os.str();
  return check;
}

metrics::PredictionDump random_dump(std::uint64_t seed, int n, bool with_ood) {
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::classification;
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, 4);
  std::bernoulli_distribution flag(0.4);
  for (int i = 0; i < n; ++i) {
    metrics::ClassificationRecord r;
    r.id = i;
    r.pred = cls(rng);
    r.label = cls(rng);
    // quantize so threshold ties occur
    r.confidence = std::round(conf(rng) * 20.0) / 20.0;
    r.in_dist = with_ood ? !flag(rng) : true;
    if (!r.in_dist) r.label = -1;
    dump.cls.push_back(r);
  }
  return dump;
}

VerifyCheck check_metric_brute_force(std::uint64_t seed) {
  double worst = 0.0;
  std::string note;

  // six-example hand dump
  metrics::PredictionDump hand;
  hand.task = metrics::TaskKind::classification;
  const double confs[6] = {0.95, 0.9, 0.8, 0.7, 0.6, 0.2};
  const bool oods[6] = {false, false, true, false, true, true};
  for (int i = 0; i < 6; ++i) {
    metrics::ClassificationRecord r;
    r.id = i;
    r.label = oods[i] ? -1 : 0;
    r.pred = 0;
    r.confidence = confs[i];
    r.in_dist = !oods[i];
    hand.cls.push_back(r);
  }

  std::vector<metrics::PredictionDump> dumps = {hand, random_dump(derive_seed(seed, 1), 200, true),
                                                random_dump(derive_seed(seed, 2), 333, true),
                                                random_dump(derive_seed(seed, 3), 150, true)};
  for (const auto& dump : dumps) {
    const auto fast = metrics::roc_metrics(dump);
    std::vector<double> conf;
    std::vector<bool> flags;
    for (const auto& r : dump.cls) {
      conf.push_back(r.confidence);
      flags.push_back(!r.in_dist);
    }
    const auto slow = oracles::brute_force_roc(conf, flags);
    worst = std::max({worst, std::abs(fast.auc - slow.auc), std::abs(fast.aupr - slow.aupr),
                      std::abs(fast.fpr_at_95_tpr - slow.fpr_at_95_tpr)});

    const double e1 = metrics::ece(dump, 15);
    const double e2 = oracles::brute_force_ece(dump, 15);
    worst = std::max(worst, std::abs(e1 - e2));

    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
    const auto avc = metrics::accuracy_vs_confidence(dump, grid);
    const auto avc_o = oracles::brute_force_accuracy_vs_confidence(dump, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (avc.points[i].support != avc_o.points[i].support) worst = std::max(worst, 1.0);
      if (avc.points[i].support > 0)
        worst = std::max(worst, std::abs(avc.points[i].value - avc_o.points[i].value));
    }
    for (bool precision : {false, true}) {
      const auto fastc = precision ? metrics::precision_calibration_curve(dump, 10)
                                   : metrics::calibration_curve(dump, 10);
      const auto slowc = oracles::brute_force_calibration(dump, 10, precision);
      for (std::size_t i = 0; i < fastc.points.size(); ++i) {
        if (fastc.points[i].support != slowc.points[i].support) worst = std::max(worst, 1.0);
        if (fastc.points[i].support > 0)
          worst = std::max(worst, std::abs(fastc.points[i].value - slowc.points[i].value));
      }
    }
  }

  VerifyCheck check;
  check.name = "metric_brute_force_equality";
  check.pass = worst < 1e-12;
  std::ostringstream os;
  os << "max deviation " << worst;
  check.detail = os.str();
  return check;
}

VerifyCheck check_mixture_quadrature(std::uint64_t seed) {
  auto rng = make_rng(derive_seed(seed, 0x31));
  std::uniform_real_distribution<double> mu_d(-3.0, 3.0);
  std::uniform_real_distribution<double> var_d(0.1, 2.0);

  double worst = 0.0;
  for (int m : {1, 3, 10}) {
    Vector mu(m), s2(m);
    for (int j = 0; j < m; ++j) {
      mu[j] = mu_d(rng);
      s2[j] = var_d(rng);
    }
    const double smax = std::sqrt(s2.maxCoeff());
    const double lo = mu.minCoeff() - 10.0 * smax;
    const double hi = mu.maxCoeff() + 10.0 * smax;
    const double integral = oracles::simpson(
        [&](double y) { return std::exp(-sampler::mixture_nll(mu, s2, y)); }, lo, hi);
    worst = std::max(worst, std::abs(integral - 1.0));
  }

  VerifyCheck check;
  check.name = "mixture_density_quadrature";
  check.pass = worst < 1e-4;
  std::ostringstream os;
  os << "max |integral - 1| = " << worst;
  check.detail = os.str();
  return check;
}

}  // namespace

VerifyReport verify_suite(bool inject_gradient_fault, std::uint64_t seed) {
  VerifyReport report;
  report.checks.push_back(check_gradients(seed, inject_gradient_fault));
  report.checks.push_back(check_scalar_kalman(seed));
  report.checks.push_back(check_rff_convergence(seed));
  report.checks.push_back(check_rff_sample_covariance(seed));
  report.checks.push_back(check_metric_brute_force(seed));
  report.checks.push_back(check_mixture_quadrature(seed));
  return report;
}

}  // namespace tradi::runner
