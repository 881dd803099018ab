#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aptlab/geometry.hpp"
#include "aptlab/rng.hpp"

namespace aptlab {

struct DenseLayer {
  int in = 0, out = 0;
  std::vector<double> w;  // row-major [out][in]
  std::vector<double> b;  // [out]
};

struct LayerNormParams {
  std::vector<double> gain;
  std::vector<double> bias;
};

// Fully-connected encoder: hidden layers with ELU, a linear map to the
// latent, then layer normalization and tanh. Outputs therefore live in
// (-1, 1)^latent_dim.
struct EncoderParams {
  int input_dim = 0;
  std::vector<int> hidden;  // e.g. {64, 64}
  int latent_dim = 0;
  std::vector<DenseLayer> layers;  // hidden layers + final linear to latent
  LayerNormParams norm;

  static EncoderParams init(int input_dim, std::vector<int> hidden,
                            int latent_dim, Rng& rng);
};

// Two-layer projection head applied on top of the encoder for the
// contrastive loss: latent -> hidden (ELU) -> output (linear).
struct ProjectionParams {
  DenseLayer hidden_layer;
  DenseLayer output_layer;

  static ProjectionParams init(int latent_dim, int hidden_width,
                               int output_width, Rng& rng);
};

struct IdentityEncoder {};

// Fixed seeded linear map, scaled by 1/sqrt(input_dim); a no-training control.
struct RandomProjectionEncoder {
  int input_dim = 0, latent_dim = 0;
  std::vector<double> w;  // row-major [latent][input]

  static RandomProjectionEncoder init(int input_dim, int latent_dim, Rng& rng);
};

using Encoder = std::variant<IdentityEncoder, RandomProjectionEncoder, EncoderParams>;

int encoder_output_dim(const Encoder& encoder, int obs_dim);

// Deterministic given parameters; one latent row per observation row.
PointSet encode(const Encoder& encoder, const PointSet& observations);
PointSet encode(const EncoderParams& encoder, const PointSet& observations);

struct AugmentConfig {
  double gaussian_sigma = 0.1;  // i.i.d. noise per coordinate
  double coord_shift = 0.0;     // per-sample uniform shift in [-s, +s] per coordinate
};

PointSet augment(const PointSet& observations, const AugmentConfig& config,
                 Rng& rng);

// Loss and exact gradients (same shapes as the parameters).
struct ContrastiveResult {
  double loss = 0.0;
  EncoderParams encoder_grad;
  ProjectionParams projection_grad;
};

// Contrastive objective over two prepared views: logits are inner products
// of projected latents divided by the temperature, each anchor's denominator
// sums the 2(n-1) terms belonging to other samples, and anchors run over
// both views (2n terms, averaged).
ContrastiveResult contrastive_loss_and_grads_on_views(
    const EncoderParams& encoder, const ProjectionParams& projection,
    const PointSet& keys, const PointSet& queries, double temperature);

double contrastive_loss_on_views(const EncoderParams& encoder,
                                 const ProjectionParams& projection,
                                 const PointSet& keys, const PointSet& queries,
                                 double temperature);

// Forms the key/query views with `augment` and evaluates the objective.
ContrastiveResult contrastive_loss_and_grads(
    const EncoderParams& encoder, const ProjectionParams& projection,
    const PointSet& observations, double temperature,
    const AugmentConfig& config, Rng& rng);

struct AdamState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m, v;
};

// One Adam update on encoder and projection; returns the pre-update loss.
double train_step(EncoderParams& encoder, ProjectionParams& projection,
                  AdamState& optimizer, const PointSet& observations,
                  double temperature, const AugmentConfig& config, Rng& rng);

// Central-difference check of the analytic gradients with the augmentation
// noise frozen by `noise_seed`. Returns max over parameters of
// |g_fd - g| / max(|g_fd|, |g|, 1e-8).
double finite_difference_check(const EncoderParams& encoder,
                               const ProjectionParams& projection,
                               const PointSet& observations, double temperature,
                               const AugmentConfig& config,
                               std::uint64_t noise_seed, double epsilon = 1e-5);

// Parameter traversal in declaration order: per dense layer weights then
// biases, then norm gain and bias, then the projection layers. Checkpoints,
// Adam state, and gradient flattening all share this order.
std::vector<double*> parameter_refs(EncoderParams& encoder);
std::vector<double*> parameter_refs(EncoderParams& encoder,
                                    ProjectionParams& projection);
std::int64_t parameter_count(const EncoderParams& encoder,
                             const ProjectionParams& projection);

// Flat binary checkpoint: magic "APTR", u32 version, encoder kind tag and
// architecture descriptor, then little-endian 64-bit parameter floats in
// declaration order. Layout details live in the README.
void save_representation(const std::string& path, const Encoder& encoder,
                         const std::optional<ProjectionParams>& projection);
std::pair<Encoder, std::optional<ProjectionParams>> load_representation(
    const std::string& path);

}  // namespace aptlab
