#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "aptlab/geometry.hpp"

namespace aptlab {

enum class EntropyVariant { kth_only, averaged };

// Exponent applied to neighbor distances: the latent dimension (faithful to
// the hypersphere-volume derivation) or plain distance. Large latent
// dimensions make distance^dim overflow in isolation; the implementation
// factors out the largest distance so either mode is usable at any dimension.
enum class ExponentMode { nz_power, plain };

struct EntropyConfig {
  int k = 5;
  double c = 1.0;  // stability constant inside the log
  EntropyVariant variant = EntropyVariant::averaged;
  ExponentMode exponent_mode = ExponentMode::nz_power;
  // Neighbor-search backend; unset picks by point count. Both backends are
  // exact, so the choice never changes results.
  std::optional<IndexBackend> backend;
};

// Volume of the n-ball: radius^dim * pi^(dim/2) / Gamma(dim/2 + 1).
double hypersphere_volume(double radius, int dim);

// Sum over particles of the chosen log-distance statistic, with the query's
// own index excluded from its neighbor set. Proportionality constants of the
// underlying estimator (1/n, the bias term b(k), and the pi/Gamma factor of
// the hypersphere volume) are intentionally dropped; hypersphere_volume
// exists so the volume formula stays testable on its own.
double particle_entropy(const PointSet& points, const EntropyConfig& config);

// Per-particle reward log(c + (1/k) * sum of d^e over the k nearest
// neighbors) computed within the batch itself. Summing the batch reproduces
// particle_entropy with the averaged variant exactly.
std::vector<double> intrinsic_rewards(const PointSet& batch_latents,
                                      const EntropyConfig& config);

// Same reward evaluated against an external reference multiset (distinct
// points with multiplicities), used when neighbors are searched over the
// whole replay buffer instead of the sampled batch. query_group[i] >= 0
// marks the reference group holding the query itself; one copy of it is
// excluded from the search.
std::vector<double> intrinsic_rewards_weighted(
    const PointSet& queries, std::span<const int> query_group,
    const PointSet& references, std::span<const std::int64_t> multiplicities,
    const EntropyConfig& config);

// Reward from precomputed ascending neighbor distances; shared kernel of the
// reward paths above.
double reward_from_knn_distances(std::span<const double> distances,
                                 const EntropyConfig& config, int dim);

enum class NormalizerMode { cumulative, ema };

// Divides raw rewards by a running estimate of their mean. The cumulative
// mode keeps the exact arithmetic mean of every value ever submitted
// (compensated summation); the optional EMA mode decays old values and is
// seeded with the first sample.
class RewardNormalizer {
 public:
  explicit RewardNormalizer(NormalizerMode mode = NormalizerMode::cumulative,
                            double ema_decay = 0.99, double floor = 1e-8);

  // Folds the batch into the running mean in submission order, then returns
  // raw / max(mean, floor).
  std::vector<double> normalize(std::span<const double> raw);

  double running_mean() const;
  std::int64_t count() const { return count_; }
  double floor() const { return floor_; }
  void reset();

 private:
  NormalizerMode mode_;
  double ema_decay_;
  double floor_;
  std::int64_t count_ = 0;
  double sum_ = 0.0;
  double compensation_ = 0.0;  // Kahan carry for cumulative mode
  double ema_ = 0.0;
};

}  // namespace aptlab
