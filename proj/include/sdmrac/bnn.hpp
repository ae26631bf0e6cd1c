#ifndef SDMRAC_BNN_HPP
#define SDMRAC_BNN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdmrac/common.hpp"

namespace sdmrac {

enum class Activation { tanh, relu, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

inline void activate(VectorXd& z, Activation a) {
  switch (a) {
    case Activation::tanh: z = z.array().tanh(); break;
    case Activation::relu: z = z.array().max(0.0); break;
    case Activation::identity: break;
  }
}

// Derivative expressed through the pre-activation z and post-activation h.
inline VectorXd activation_slope(const VectorXd& z, const VectorXd& h, Activation a) {
  switch (a) {
    case Activation::tanh: return (1.0 - h.array().square()).matrix();
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::identity: return VectorXd::Ones(z.size());
  }
  return VectorXd::Ones(z.size());
}

inline MatrixXd softplus(const MatrixXd& rho) { return rho.unaryExpr([](double r) { return sdmrac::softplus(r); }); }
inline MatrixXd sigmoid(const MatrixXd& rho) { return rho.unaryExpr([](double r) { return sdmrac::sigmoid(r); }); }

}  // namespace detail

/// Mean-field Gaussian layer: weight std is softplus(rho).
struct VariationalLayer {
  MatrixXd mu;
  MatrixXd rho;
  VectorXd bias_mu;
  VectorXd bias_rho;
  Activation activation = Activation::tanh;

  Eigen::Index in() const { return mu.cols(); }
  Eigen::Index out() const { return mu.rows(); }
  Eigen::Index parameter_count() const { return mu.size() + bias_mu.size(); }

  bool finite() const {
    return mu.allFinite() && bias_mu.allFinite() && !rho.array().isNaN().any() &&
           !bias_rho.array().isNaN().any() && !(rho.array() == std::numeric_limits<double>::infinity()).any() &&
           !(bias_rho.array() == std::numeric_limits<double>::infinity()).any();
  }
};

/// One weight realization for a single layer.
struct LayerWeights {
  MatrixXd w;
  VectorXd b;
};
using WeightSample = std::vector<LayerWeights>;

/// Standard-normal draws matching a layer's shape (frozen reparameterization noise).
using LayerNoise = LayerWeights;
using NoiseSample = std::vector<LayerNoise>;

struct NetworkInit {
  double mu_std = 0.1;
  double rho = -3.0;
};

/// Multilayer perceptron with a factorized Gaussian posterior over every weight and bias. The
/// penultimate layer's output is the feature vector; the last layer maps features to outputs.
struct BayesianNetwork {
  std::vector<VariationalLayer> layers;
  double prior_std = 1.0;
  double likelihood_std = 0.1;
  /// Deterministic variant: every draw returns the means and rho is ignored.
  bool point_estimate = false;

  static BayesianNetwork make(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden,
                              Eigen::Index output_dim, Activation hidden_activation, Rng& rng,
                              const NetworkInit& init = {}) {
    detail::require(input_dim > 0 && output_dim > 0, "BayesianNetwork: empty input or output");
    detail::require(!hidden.empty(), "BayesianNetwork: at least one hidden layer is required");
    std::normal_distribution<double> normal(0.0, init.mu_std);
    BayesianNetwork net;
    Eigen::Index prev = input_dim;
    auto add = [&](Eigen::Index out, Activation act) {
      detail::require(out > 0, "BayesianNetwork: layer width must be positive");
      VariationalLayer layer;
      layer.mu = MatrixXd::NullaryExpr(out, prev, [&]() { return normal(rng); });
      layer.rho = MatrixXd::Constant(out, prev, init.rho);
      layer.bias_mu = VectorXd::NullaryExpr(out, [&]() { return normal(rng); });
      layer.bias_rho = VectorXd::Constant(out, init.rho);
      layer.activation = act;
      net.layers.push_back(std::move(layer));
      prev = out;
    };
    for (const auto width : hidden) add(width, hidden_activation);
    add(output_dim, Activation::identity);
    return net;
  }

  Eigen::Index input_dim() const { return layers.front().in(); }
  Eigen::Index output_dim() const { return layers.back().out(); }
  Eigen::Index feature_dim() const { return layers.back().in(); }
  std::size_t feature_layer_count() const { return layers.size() - 1; }

  Eigen::Index parameter_count() const {
    Eigen::Index c = 0;
    for (const auto& l : layers) c += l.parameter_count();
    return c;
  }

  bool finite() const {
    return std::all_of(layers.begin(), layers.end(), [](const auto& l) { return l.finite(); });
  }

  void validate() const {
    detail::require(layers.size() >= 2, "BayesianNetwork: needs a feature layer and an output layer");
    detail::require(prior_std > 0.0, "BayesianNetwork: prior_std must be positive");
    detail::require(likelihood_std > 0.0, "BayesianNetwork: likelihood_std must be positive");
    for (std::size_t i = 1; i < layers.size(); ++i) {
      detail::require(layers[i].in() == layers[i - 1].out(), "BayesianNetwork: layer sizes do not chain");
    }
  }
};

// ---------------------------------------------------------------------------
// Sampling

inline NoiseSample draw_noise(const BayesianNetwork& net, Rng& rng, std::size_t layer_count) {
  std::normal_distribution<double> normal;
  NoiseSample noise;
  noise.reserve(layer_count);
  for (std::size_t l = 0; l < layer_count; ++l) {
    const auto& layer = net.layers[l];
    LayerNoise n;
    n.w.resize(layer.out(), layer.in());
    for (Eigen::Index j = 0; j < n.w.cols(); ++j)
      for (Eigen::Index i = 0; i < n.w.rows(); ++i) n.w(i, j) = normal(rng);
    n.b.resize(layer.out());
    for (Eigen::Index i = 0; i < n.b.size(); ++i) n.b(i) = normal(rng);
    noise.push_back(std::move(n));
  }
  return noise;
}

inline NoiseSample draw_noise(const BayesianNetwork& net, Rng& rng) {
  return draw_noise(net, rng, net.layers.size());
}

/// theta = mu + softplus(rho) * eps, layer by layer for as many layers as `noise` covers.
inline WeightSample sample_weights(const BayesianNetwork& net, const NoiseSample& noise) {
  WeightSample theta;
  theta.reserve(noise.size());
  for (std::size_t l = 0; l < noise.size(); ++l) {
    const auto& layer = net.layers[l];
    if (net.point_estimate) {
      theta.push_back({layer.mu, layer.bias_mu});
      continue;
    }
    theta.push_back({layer.mu + detail::softplus(layer.rho).cwiseProduct(noise[l].w),
                     layer.bias_mu + detail::softplus(layer.bias_rho).cwiseProduct(noise[l].b)});
  }
  return theta;
}

inline WeightSample mean_weights(const BayesianNetwork& net, std::size_t layer_count) {
  WeightSample theta;
  for (std::size_t l = 0; l < layer_count; ++l) theta.push_back({net.layers[l].mu, net.layers[l].bias_mu});
  return theta;
}

inline WeightSample mean_weights(const BayesianNetwork& net) { return mean_weights(net, net.layers.size()); }

/// Full weight realization drawn from the posterior.
inline WeightSample sample_weights(const BayesianNetwork& net, Rng& rng) {
  if (net.point_estimate) return mean_weights(net);
  return sample_weights(net, draw_noise(net, rng));
}

/// Realization of the feature layers only (the output layer is left out).
inline WeightSample sample_feature_weights(const BayesianNetwork& net, Rng& rng) {
  if (net.point_estimate) return mean_weights(net, net.feature_layer_count());
  return sample_weights(net, draw_noise(net, rng, net.feature_layer_count()));
}

// ---------------------------------------------------------------------------
// Forward pass

struct ForwardResult {
  VectorXd features;
  VectorXd output;
};

/// Feature vector for a realization covering at least the feature layers.
inline VectorXd features(const BayesianNetwork& net, const WeightSample& theta, const VectorXd& x) {
  detail::require(theta.size() >= net.feature_layer_count(), "features: weight sample too short");
  detail::require(x.size() == net.input_dim(), "features: input dimension mismatch");
  VectorXd h = x;
  for (std::size_t l = 0; l < net.feature_layer_count(); ++l) {
    VectorXd z = theta[l].w * h + theta[l].b;
    detail::activate(z, net.layers[l].activation);
    h = std::move(z);
  }
  return h;
}

inline ForwardResult forward(const BayesianNetwork& net, const WeightSample& theta, const VectorXd& x) {
  detail::require(theta.size() == net.layers.size(), "forward: weight sample does not cover the network");
  ForwardResult r;
  r.features = features(net, theta, x);
  const auto& last = theta.back();
  detail::require(last.w.cols() == r.features.size(), "forward: weight sample shape mismatch");
  r.output = last.w * r.features + last.b;
  detail::activate(r.output, net.layers.back().activation);
  return r;
}

/// Draws feature vectors from a fixed network, caching the posterior standard deviations.
class FeatureSampler {
 public:
  explicit FeatureSampler(const BayesianNetwork& net) : net_(&net) {
    for (std::size_t l = 0; l < net.feature_layer_count(); ++l) {
      const auto& layer = net.layers[l];
      w_std_.push_back(net.point_estimate ? MatrixXd::Zero(layer.out(), layer.in()) : detail::softplus(layer.rho));
      b_std_.push_back(net.point_estimate ? VectorXd::Zero(layer.out()) : VectorXd(detail::softplus(layer.bias_rho)));
      theta_.push_back({layer.mu, layer.bias_mu});
    }
  }

  const BayesianNetwork& network() const { return *net_; }

  VectorXd sample(const VectorXd& x, Rng& rng) {
    if (!net_->point_estimate) {
      for (std::size_t l = 0; l < theta_.size(); ++l) {
        const auto& layer = net_->layers[l];
        auto& w = theta_[l].w;
        for (Eigen::Index j = 0; j < w.cols(); ++j)
          for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = layer.mu(i, j) + w_std_[l](i, j) * normal_(rng);
        auto& b = theta_[l].b;
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = layer.bias_mu(i) + b_std_[l](i) * normal_(rng);
      }
    }
    return features(*net_, theta_, x);
  }

  /// k x N matrix whose columns are features under N independent posterior draws.
  MatrixXd draws(const VectorXd& x, std::size_t count, Rng& rng) {
    detail::require(count >= 1, "feature_draws: at least one draw is required");
    MatrixXd out(net_->feature_dim(), static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) out.col(static_cast<Eigen::Index>(i)) = sample(x, rng);
    return out;
  }

 private:
  const BayesianNetwork* net_;
  std::vector<MatrixXd> w_std_;
  std::vector<VectorXd> b_std_;
  WeightSample theta_;
  std::normal_distribution<double> normal_;
};

/// k x N matrix whose columns are features under N independent posterior draws.
inline MatrixXd feature_draws(const BayesianNetwork& net, const VectorXd& x, std::size_t draws, Rng& rng) {
  detail::require(draws >= 1, "feature_draws: at least one draw is required");
  FeatureSampler sampler(net);
  return sampler.draws(x, draws, rng);
}

/// Empirical mean of the stochastic feature vector over N posterior draws.
inline VectorXd feature_mean(const BayesianNetwork& net, const VectorXd& x, std::size_t draws, Rng& rng) {
  if (draws == 0) throw std::invalid_argument("feature_mean: draw count must be at least 1");
  return feature_draws(net, x, draws, rng).rowwise().mean();
}

struct FeatureStats {
  VectorXd mean;
  MatrixXd covariance;
  VectorXd epistemic;
  VectorXd aleatoric;

  VectorXd total() const { return epistemic + aleatoric; }
};

inline FeatureStats feature_stats(const BayesianNetwork& net, const VectorXd& x, std::size_t draws, Rng& rng) {
  if (draws < 2) throw std::invalid_argument("feature_stats: at least two draws are required");
  const MatrixXd d = feature_draws(net, x, draws, rng);
  FeatureStats s;
  s.mean = d.rowwise().mean();
  const MatrixXd centered = d.colwise() - s.mean;
  s.covariance = centered * centered.transpose() / static_cast<double>(draws - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  s.epistemic = s.covariance.diagonal();
  s.aleatoric = VectorXd::Constant(net.feature_dim(), net.likelihood_std * net.likelihood_std);
  return s;
}

// ---------------------------------------------------------------------------
// Objective

/// KL(N(mu, softplus(rho)^2) || N(0, prior_std^2)) summed over every weight and bias.
inline double kl_divergence(const BayesianNetwork& net) {
  if (!(net.prior_std > 0.0)) throw std::invalid_argument("kl_divergence: prior_std must be positive");
  const double p2 = net.prior_std * net.prior_std;
  const double log_p = std::log(net.prior_std);
  double kl = 0.0;
  auto accumulate = [&](const MatrixXd& mu, const MatrixXd& rho) {
    for (Eigen::Index j = 0; j < mu.cols(); ++j) {
      for (Eigen::Index i = 0; i < mu.rows(); ++i) {
        const double s = softplus(rho(i, j));
        kl += log_p - std::log(s) + (s * s + mu(i, j) * mu(i, j)) / (2.0 * p2) - 0.5;
      }
    }
  };
  for (const auto& l : net.layers) {
    accumulate(l.mu, l.rho);
    accumulate(l.bias_mu, l.bias_rho);
  }
  return kl;
}

struct DataPoint {
  VectorXd x;
  VectorXd y;
};

/// Gradient container shaped like the network's variational parameters.
struct ParameterGrad {
  MatrixXd mu;
  MatrixXd rho;
  VectorXd bias_mu;
  VectorXd bias_rho;
};
using NetworkGrad = std::vector<ParameterGrad>;

inline NetworkGrad zero_grad(const BayesianNetwork& net) {
  NetworkGrad g;
  for (const auto& l : net.layers) {
    g.push_back({MatrixXd::Zero(l.out(), l.in()), MatrixXd::Zero(l.out(), l.in()), VectorXd::Zero(l.out()),
                 VectorXd::Zero(l.out())});
  }
  return g;
}

struct LossAndGrad {
  double loss = 0.0;
  NetworkGrad grad;
};

inline double gaussian_nll_constant(const BayesianNetwork& net) {
  return std::log(net.likelihood_std * std::sqrt(2.0 * std::numbers::pi));
}

/// Negative ELBO for fixed reparameterization noise:
///   (1/S) sum_s sum_batch NLL(y | f_{theta_s}(x)) + kl_weight * KL(q || prior).
/// Point-estimate networks drop the KL term and use the means directly.
inline LossAndGrad elbo_loss_and_grad(const BayesianNetwork& net, const std::vector<DataPoint>& batch,
                                      const std::vector<NoiseSample>& noise, double kl_weight,
                                      bool want_grad = true) {
  if (batch.empty()) throw std::invalid_argument("elbo_loss: empty batch");
  detail::require(!noise.empty(), "elbo_loss: at least one posterior draw is required");
  const double var = net.likelihood_std * net.likelihood_std;
  const double nll_const = gaussian_nll_constant(net);
  const auto S = static_cast<double>(noise.size());
  const std::size_t L = net.layers.size();

  LossAndGrad out;
  if (want_grad) out.grad = zero_grad(net);

  std::vector<MatrixXd> sp_w(L), sig_w(L);
  std::vector<VectorXd> sp_b(L), sig_b(L);
  if (!net.point_estimate) {
    for (std::size_t l = 0; l < L; ++l) {
      sp_w[l] = detail::softplus(net.layers[l].rho);
      sp_b[l] = detail::softplus(net.layers[l].bias_rho);
      sig_w[l] = detail::sigmoid(net.layers[l].rho);
      sig_b[l] = detail::sigmoid(net.layers[l].bias_rho);
    }
  }

  std::vector<VectorXd> z(L), h(L + 1);
  for (const auto& eps : noise) {
    WeightSample theta;
    if (net.point_estimate) {
      theta = mean_weights(net);
    } else {
      theta.reserve(L);
      for (std::size_t l = 0; l < L; ++l) {
        theta.push_back({net.layers[l].mu + sp_w[l].cwiseProduct(eps[l].w),
                         net.layers[l].bias_mu + sp_b[l].cwiseProduct(eps[l].b)});
      }
    }
    NetworkGrad dtheta;
    if (want_grad) {
      for (std::size_t l = 0; l < L; ++l)
        dtheta.push_back({MatrixXd::Zero(theta[l].w.rows(), theta[l].w.cols()), MatrixXd(),
                          VectorXd::Zero(theta[l].b.size()), VectorXd()});
    }
    for (const auto& pt : batch) {
      h[0] = pt.x;
      for (std::size_t l = 0; l < L; ++l) {
        z[l] = theta[l].w * h[l] + theta[l].b;
        h[l + 1] = z[l];
        detail::activate(h[l + 1], net.layers[l].activation);
      }
      const VectorXd resid = h[L] - pt.y;
      out.loss += (resid.squaredNorm() / (2.0 * var) + static_cast<double>(resid.size()) * nll_const) / S;
      if (!want_grad) continue;
      VectorXd delta = (resid / var).cwiseProduct(detail::activation_slope(z[L - 1], h[L], net.layers[L - 1].activation));
      for (std::size_t l = L; l-- > 0;) {
        dtheta[l].mu.noalias() += delta * h[l].transpose();
        dtheta[l].bias_mu += delta;
        if (l == 0) break;
        VectorXd back = theta[l].w.transpose() * delta;
        delta = back.cwiseProduct(detail::activation_slope(z[l - 1], h[l], net.layers[l - 1].activation));
      }
    }
    if (!want_grad) continue;
    for (std::size_t l = 0; l < L; ++l) {
      out.grad[l].mu += dtheta[l].mu / S;
      out.grad[l].bias_mu += dtheta[l].bias_mu / S;
      if (!net.point_estimate) {
        out.grad[l].rho += dtheta[l].mu.cwiseProduct(eps[l].w).cwiseProduct(sig_w[l]) / S;
        out.grad[l].bias_rho += dtheta[l].bias_mu.cwiseProduct(eps[l].b).cwiseProduct(sig_b[l]) / S;
      }
    }
  }

  if (!net.point_estimate && kl_weight != 0.0) {
    out.loss += kl_weight * kl_divergence(net);
    if (want_grad) {
      const double p2 = net.prior_std * net.prior_std;
      for (std::size_t l = 0; l < L; ++l) {
        const auto& layer = net.layers[l];
        out.grad[l].mu += kl_weight * layer.mu / p2;
        out.grad[l].bias_mu += kl_weight * layer.bias_mu / p2;
        const auto dkl_ds = [p2](const auto& s) { return (-s.array().inverse() + s.array() / p2).matrix(); };
        out.grad[l].rho += kl_weight * MatrixXd(dkl_ds(sp_w[l])).cwiseProduct(sig_w[l]);
        out.grad[l].bias_rho += kl_weight * VectorXd(dkl_ds(sp_b[l])).cwiseProduct(sig_b[l]);
      }
    }
  }
  return out;
}

inline double elbo_loss(const BayesianNetwork& net, const std::vector<DataPoint>& batch,
                        const std::vector<NoiseSample>& noise, double kl_weight) {
  return elbo_loss_and_grad(net, batch, noise, kl_weight, false).loss;
}

/// Negative ELBO estimated with `draws` fresh reparameterization samples.
inline double elbo_loss(const BayesianNetwork& net, const std::vector<DataPoint>& batch, std::size_t draws,
                        double kl_weight, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("elbo_loss: empty batch");
  if (draws == 0) throw std::invalid_argument("elbo_loss: draw count must be at least 1");
  std::vector<NoiseSample> noise;
  for (std::size_t s = 0; s < draws; ++s) noise.push_back(draw_noise(net, rng));
  return elbo_loss(net, batch, noise, kl_weight);
}

// ---------------------------------------------------------------------------
// Training

/// Immutable published network. sigma counts publications.
struct NetworkVersion {
  std::uint64_t sigma = 0;
  BayesianNetwork net;
};
using VersionPtr = std::shared_ptr<const NetworkVersion>;

struct TrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::size_t draws = 2;
  /// Defaults to 1 / (number of training points).
  std::optional<double> kl_weight;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::size_t aborted_epochs = 0;
  double initial_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  NetworkVersion version;
  TrainReport report;
};

namespace detail {

template <typename F>
void for_each_parameter(BayesianNetwork& net, NetworkGrad& velocity, const NetworkGrad& grad, F&& f) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    f(layer.mu, velocity[l].mu, grad[l].mu, false);
    f(layer.bias_mu, velocity[l].bias_mu, grad[l].bias_mu, false);
    if (!net.point_estimate) {
      f(layer.rho, velocity[l].rho, grad[l].rho, true);
      f(layer.bias_rho, velocity[l].bias_rho, grad[l].bias_rho, true);
    }
  }
}

}  // namespace detail

/// Minibatch SGD with momentum on the negative ELBO. Steps follow sigma_n^2 / B times the batch
/// objective; reported losses are per example (loss / B). Never mutates `from`; the result carries
/// sigma + 1.
inline TrainResult train(const NetworkVersion& from, const std::vector<DataPoint>& data,
                         const TrainOptions& opts, Rng& rng) {
  const BayesianNetwork& start = from.net;
  start.validate();
  detail::require(opts.batch_size >= 1, "train: batch_size must be positive");
  if (data.size() < opts.batch_size) {
    throw std::invalid_argument("train: buffer holds " + std::to_string(data.size()) +
                                " points, fewer than batch_size " + std::to_string(opts.batch_size));
  }
  detail::require(opts.draws >= 1, "train: draws must be positive");

  TrainResult result;
  result.version.sigma = from.sigma + 1;
  BayesianNetwork net = start;
  const double kl_weight = opts.kl_weight.value_or(1.0 / static_cast<double>(data.size()));
  const std::size_t draws = net.point_estimate ? 1 : opts.draws;
  // sigma_n^2 puts the data term on the squared-error scale, so the learning rate does not have to
  // absorb the likelihood precision.
  const auto step_scale_for = [&](std::size_t b) {
    return net.likelihood_std * net.likelihood_std / static_cast<double>(b);
  };

  auto draw_batch_noise = [&]() {
    std::vector<NoiseSample> noise;
    if (net.point_estimate) {
      noise.emplace_back();
      return noise;
    }
    for (std::size_t s = 0; s < draws; ++s) noise.push_back(draw_noise(net, rng));
    return noise;
  };

  NetworkGrad velocity = zero_grad(net);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<DataPoint> batch;
  batch.reserve(opts.batch_size);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    const BayesianNetwork epoch_start = net;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    bool aborted = false;
    for (std::size_t first = 0; first < order.size(); first += opts.batch_size) {
      batch.clear();
      const std::size_t last = std::min(order.size(), first + opts.batch_size);
      for (std::size_t i = first; i < last; ++i) batch.push_back(data[order[i]]);
      const auto noise = draw_batch_noise();
      const LossAndGrad lg = elbo_loss_and_grad(net, batch, noise, kl_weight);
      const double scale = 1.0 / static_cast<double>(batch.size());
      const double step_scale = step_scale_for(batch.size());
      if (!std::isfinite(lg.loss)) {
        aborted = true;
        break;
      }
      if (epoch == 0 && batches == 0) result.report.initial_loss = lg.loss * scale;
      epoch_loss += lg.loss * scale;
      ++batches;
      detail::for_each_parameter(net, velocity, lg.grad, [&](auto& param, auto& vel, const auto& g, bool) {
        vel = opts.momentum * vel - opts.learning_rate * step_scale * g;
        param += vel;
      });
      if (!net.finite()) {
        aborted = true;
        break;
      }
    }
    if (aborted) {
      net = epoch_start;
      velocity = zero_grad(net);
      ++result.report.aborted_epochs;
      result.report.epoch_loss.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    result.report.epoch_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1)));
  }
  result.version.net = std::move(net);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json to_json(const NetworkVersion& v) {
  using nlohmann::json;
  // JSON has no infinities; rho = -inf (a deterministic weight) is written as a string.
  const auto flatten = [](const MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        if (std::isfinite(v))
          out.push_back(v);
        else
          out.push_back(std::isnan(v) ? "nan" : v > 0 ? "inf" : "-inf");
      }
    return out;
  };
  json layers = json::array();
  for (const auto& l : v.net.layers) {
    layers.push_back({{"in", l.in()},
                      {"out", l.out()},
                      {"activation", to_string(l.activation)},
                      {"mu", flatten(l.mu)},
                      {"rho", flatten(l.rho)},
                      {"bias_mu", flatten(l.bias_mu)},
                      {"bias_rho", flatten(l.bias_rho)}});
  }
  return {{"format", "sdmrac-bnn-checkpoint"},
          {"version", 1},
          {"sigma", v.sigma},
          {"prior_std", v.net.prior_std},
          {"likelihood_std", v.net.likelihood_std},
          {"point_estimate", v.net.point_estimate},
          {"layers", layers}};
}

inline NetworkVersion version_from_json(const nlohmann::json& j) {
  detail::require(j.value("format", std::string()) == "sdmrac-bnn-checkpoint", "checkpoint: unknown format");
  NetworkVersion v;
  v.sigma = j.at("sigma").get<std::uint64_t>();
  v.net.prior_std = j.at("prior_std").get<double>();
  v.net.likelihood_std = j.at("likelihood_std").get<double>();
  v.net.point_estimate = j.value("point_estimate", false);
  for (const auto& jl : j.at("layers")) {
    const auto in = jl.at("in").get<Eigen::Index>();
    const auto out = jl.at("out").get<Eigen::Index>();
    const auto unflatten = [&](const char* key, Eigen::Index rows, Eigen::Index cols) {
      const auto& data = jl.at(key);
      detail::require(data.is_array() && static_cast<Eigen::Index>(data.size()) == rows * cols,
                      std::string("checkpoint: wrong element count for ") + key);
      const auto value = [](const nlohmann::json& e) {
        if (e.is_number()) return e.get<double>();
        const auto s = e.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        throw std::invalid_argument("checkpoint: bad number '" + s + "'");
      };
      MatrixXd m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = value(data[static_cast<std::size_t>(i * cols + c)]);
      return m;
    };
    VariationalLayer l;
    l.activation = activation_from_string(jl.at("activation").get<std::string>());
    l.mu = unflatten("mu", out, in);
    l.rho = unflatten("rho", out, in);
    l.bias_mu = unflatten("bias_mu", out, 1);
    l.bias_rho = unflatten("bias_rho", out, 1);
    v.net.layers.push_back(std::move(l));
  }
  v.net.validate();
  return v;
}

}  // namespace sdmrac

#endif  // SDMRAC_BNN_HPP
