#include "aptlab/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace aptlab {
namespace {

// log(c + mean(d^e)) with the largest distance factored out, so that d^e
// never overflows or underflows on its own:
//   mean(d^e) = M^e * mean((d/M)^e), M = max d.
double log_c_plus_mean_pow(std::span<const double> dists, double c, double e) {
  double max_d = 0.0;
  for (double d : dists) max_d = std::max(max_d, d);
  if (max_d == 0.0) return std::log(c);
  double scaled_sum = 0.0;
  for (double d : dists) scaled_sum += std::pow(d / max_d, e);
  const double log_mean =
      e * std::log(max_d) + std::log(scaled_sum / static_cast<double>(dists.size()));
  if (c == 0.0) return log_mean;
  const double log_c = std::log(c);
  const double hi = std::max(log_c, log_mean);
  const double lo = std::min(log_c, log_mean);
  return hi + std::log1p(std::exp(lo - hi));
}

void validate_config(const EntropyConfig& config) {
  if (config.k < 1)
    throw std::invalid_argument("EntropyConfig: k must be >= 1");
  if (config.c < 0.0)
    throw std::invalid_argument("EntropyConfig: c must be >= 0");
}

IndexBackend pick_backend(const EntropyConfig& config, int n) {
  if (config.backend) return *config.backend;
  return n >= 256 ? IndexBackend::kd_tree : IndexBackend::brute_force;
}

double exponent_for(const EntropyConfig& config, int dim) {
  return config.exponent_mode == ExponentMode::nz_power
             ? static_cast<double>(dim)
             : 1.0;
}

}  // namespace

double hypersphere_volume(double radius, int dim) {
  if (radius < 0.0)
    throw std::invalid_argument("hypersphere_volume: radius must be >= 0");
  if (dim < 1)
    throw std::invalid_argument("hypersphere_volume: dim must be >= 1");
  if (radius == 0.0) return 0.0;
  const double half_dim = 0.5 * static_cast<double>(dim);
  return std::exp(static_cast<double>(dim) * std::log(radius) +
                  half_dim * std::log(std::numbers::pi) -
                  std::lgamma(half_dim + 1.0));
}

double reward_from_knn_distances(std::span<const double> distances,
                                 const EntropyConfig& config, int dim) {
  return log_c_plus_mean_pow(distances, config.c, exponent_for(config, dim));
}

std::vector<double> intrinsic_rewards(const PointSet& batch_latents,
                                      const EntropyConfig& config) {
  validate_config(config);
  const int n = batch_latents.size();
  if (n < config.k + 1)
    throw std::invalid_argument(
        "intrinsic_rewards: batch must hold at least k+1 particles");
  if (!batch_latents.all_finite())
    throw std::invalid_argument("intrinsic_rewards: latents must be finite");

  const SpatialIndex index(batch_latents, pick_backend(config, n));
  const NeighborList neighbors =
      index.query(batch_latents, config.k, /*exclude_self=*/true);

  std::vector<double> rewards(n);
  std::vector<double> dists(config.k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < config.k; ++j) dists[j] = neighbors[i][j].distance;
    rewards[i] = reward_from_knn_distances(dists, config, batch_latents.dim());
  }
  return rewards;
}

double particle_entropy(const PointSet& points, const EntropyConfig& config) {
  validate_config(config);
  const int n = points.size();
  if (n < config.k + 1)
    throw std::invalid_argument(
        "particle_entropy: need at least k+1 particles");
  if (!points.all_finite())
    throw std::invalid_argument("particle_entropy: points must be finite");

  if (config.variant == EntropyVariant::averaged) {
    const std::vector<double> rewards = intrinsic_rewards(points, config);
    double sum = 0.0;
    for (double r : rewards) sum += r;
    return sum;
  }

  const double e = exponent_for(config, points.dim());
  const SpatialIndex index(points, pick_backend(config, n));
  const NeighborList neighbors =
      index.query(points, config.k, /*exclude_self=*/true);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double kth = neighbors[i][config.k - 1].distance;
    sum += e * std::log(kth);  // log(d^e); -inf when the k-th neighbor coincides
  }
  return sum;
}

std::vector<double> intrinsic_rewards_weighted(
    const PointSet& queries, std::span<const int> query_group,
    const PointSet& references, std::span<const std::int64_t> multiplicities,
    const EntropyConfig& config) {
  validate_config(config);
  if (queries.size() != static_cast<int>(query_group.size()))
    throw std::invalid_argument(
        "intrinsic_rewards_weighted: one group id per query required");
  if (queries.dim() != references.dim())
    throw std::invalid_argument("intrinsic_rewards_weighted: dimension mismatch");

  std::vector<double> rewards(queries.size());
  for (int i = 0; i < queries.size(); ++i) {
    const std::vector<double> dists = weighted_knn_distances(
        references, multiplicities, queries.point(i), config.k, query_group[i]);
    rewards[i] = reward_from_knn_distances(dists, config, queries.dim());
  }
  return rewards;
}

RewardNormalizer::RewardNormalizer(NormalizerMode mode, double ema_decay,
                                   double floor)
    : mode_(mode), ema_decay_(ema_decay), floor_(floor) {
  if (floor <= 0.0)
    throw std::invalid_argument("RewardNormalizer: floor must be positive");
  if (ema_decay < 0.0 || ema_decay >= 1.0)
    throw std::invalid_argument("RewardNormalizer: ema_decay must be in [0, 1)");
}

double RewardNormalizer::running_mean() const {
  if (mode_ == NormalizerMode::ema) return ema_;
  return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_);
}

void RewardNormalizer::reset() {
  count_ = 0;
  sum_ = 0.0;
  compensation_ = 0.0;
  ema_ = 0.0;
}

std::vector<double> RewardNormalizer::normalize(std::span<const double> raw) {
  for (double value : raw) {
    if (!std::isfinite(value))
      throw std::invalid_argument("RewardNormalizer: rewards must be finite");
    ++count_;
    if (mode_ == NormalizerMode::cumulative) {
      const double y = value - compensation_;
      const double t = sum_ + y;
      compensation_ = (t - sum_) - y;
      sum_ = t;
    } else {
      ema_ = count_ == 1 ? value : ema_decay_ * ema_ + (1.0 - ema_decay_) * value;
    }
  }
  const double scale = std::max(running_mean(), floor_);
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / scale;
  return out;
}

}  // namespace aptlab
