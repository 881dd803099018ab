#include "aptlab/representation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace aptlab {
namespace {

constexpr double kVarianceFloor = 1e-6;
constexpr char kMagic[4] = {'A', 'P', 'T', 'R'};
constexpr std::uint32_t kVersion = 1;

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

DenseLayer init_dense(int in, int out, Rng& rng) {
  if (in < 1 || out < 1)
    throw std::invalid_argument("DenseLayer: widths must be positive");
  DenseLayer layer;
  layer.in = in;
  layer.out = out;
  layer.w.resize(static_cast<std::size_t>(in) * out);
  layer.b.assign(out, 0.0);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& v : layer.w) v = rng.uniform(-limit, limit);
  return layer;
}

DenseLayer zeros_like(const DenseLayer& layer) {
  DenseLayer z;
  z.in = layer.in;
  z.out = layer.out;
  z.w.assign(layer.w.size(), 0.0);
  z.b.assign(layer.b.size(), 0.0);
  return z;
}

void dense_forward(const DenseLayer& layer, std::span<const double> x,
                   std::vector<double>& out) {
  out.assign(layer.out, 0.0);
  for (int r = 0; r < layer.out; ++r) {
    const double* row = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
    double acc = layer.b[r];
    for (int c = 0; c < layer.in; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

// dW += dy (x) x, db += dy, dx = W^T dy
void dense_backward(const DenseLayer& layer, std::span<const double> x,
                    std::span<const double> dy, DenseLayer& grad,
                    std::vector<double>& dx) {
  for (int r = 0; r < layer.out; ++r) {
    double* grow = grad.w.data() + static_cast<std::size_t>(r) * layer.in;
    for (int c = 0; c < layer.in; ++c) grow[c] += dy[r] * x[c];
    grad.b[r] += dy[r];
  }
  dx.assign(layer.in, 0.0);
  for (int r = 0; r < layer.out; ++r) {
    const double* row = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
    for (int c = 0; c < layer.in; ++c) dx[c] += row[c] * dy[r];
  }
}

struct SampleTrace {
  std::vector<std::vector<double>> inputs;  // input fed to each dense layer
  std::vector<std::vector<double>> pre;     // pre-activation per dense layer
  std::vector<double> xhat;
  double inv_std = 0.0;
  bool floored = false;
  std::vector<double> z;         // encoder output (tanh)
  std::vector<double> proj_pre;  // projection hidden pre-activation
  std::vector<double> proj_act;  // projection hidden activation
  std::vector<double> p;         // projected vector
};

void encoder_forward(const EncoderParams& enc, std::span<const double> x,
                     SampleTrace& trace) {
  const std::size_t n_layers = enc.layers.size();
  trace.inputs.resize(n_layers);
  trace.pre.resize(n_layers);
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t l = 0; l < n_layers; ++l) {
    trace.inputs[l] = cur;
    dense_forward(enc.layers[l], cur, trace.pre[l]);
    if (l + 1 < n_layers) {
      cur.resize(trace.pre[l].size());
      for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = elu(trace.pre[l][i]);
    }
  }

  const std::vector<double>& u = trace.pre.back();
  const int d = enc.latent_dim;
  double mean = 0.0;
  for (double v : u) mean += v;
  mean /= d;
  double var = 0.0;
  for (double v : u) var += (v - mean) * (v - mean);
  var /= d;
  trace.floored = var < kVarianceFloor;
  trace.inv_std = 1.0 / std::sqrt(trace.floored ? kVarianceFloor : var);
  trace.xhat.resize(d);
  trace.z.resize(d);
  for (int i = 0; i < d; ++i) {
    trace.xhat[i] = (u[i] - mean) * trace.inv_std;
    trace.z[i] = std::tanh(enc.norm.gain[i] * trace.xhat[i] + enc.norm.bias[i]);
  }
}

void projection_forward(const ProjectionParams& proj, SampleTrace& trace) {
  dense_forward(proj.hidden_layer, trace.z, trace.proj_pre);
  trace.proj_act.resize(trace.proj_pre.size());
  for (std::size_t i = 0; i < trace.proj_pre.size(); ++i)
    trace.proj_act[i] = elu(trace.proj_pre[i]);
  dense_forward(proj.output_layer, trace.proj_act, trace.p);
}

// Backpropagates d(loss)/d(projected vector) through the projection and the
// encoder, accumulating parameter gradients.
void sample_backward(const EncoderParams& enc, const ProjectionParams& proj,
                     const SampleTrace& trace, std::span<const double> dp,
                     EncoderParams& enc_grad, ProjectionParams& proj_grad) {
  std::vector<double> dh;
  dense_backward(proj.output_layer, trace.proj_act, dp, proj_grad.output_layer,
                 dh);
  std::vector<double> da(dh.size());
  for (std::size_t i = 0; i < dh.size(); ++i)
    da[i] = dh[i] * elu_derivative(trace.proj_pre[i]);
  std::vector<double> dz;
  dense_backward(proj.hidden_layer, trace.z, da, proj_grad.hidden_layer, dz);

  const int d = enc.latent_dim;
  std::vector<double> dxhat(d);
  for (int i = 0; i < d; ++i) {
    const double dy = dz[i] * (1.0 - trace.z[i] * trace.z[i]);
    enc_grad.norm.gain[i] += dy * trace.xhat[i];
    enc_grad.norm.bias[i] += dy;
    dxhat[i] = dy * enc.norm.gain[i];
  }

  double mean_dx = 0.0, mean_dxx = 0.0;
  for (int i = 0; i < d; ++i) {
    mean_dx += dxhat[i];
    mean_dxx += dxhat[i] * trace.xhat[i];
  }
  mean_dx /= d;
  mean_dxx /= d;
  std::vector<double> du(d);
  for (int i = 0; i < d; ++i) {
    // On the variance floor the normalizer no longer depends on the inputs,
    // so its term drops out of the backward pass.
    const double centered = trace.floored
                                ? dxhat[i] - mean_dx
                                : dxhat[i] - mean_dx - trace.xhat[i] * mean_dxx;
    du[i] = centered * trace.inv_std;
  }

  std::vector<double> dcur = std::move(du);
  for (int l = static_cast<int>(enc.layers.size()) - 1; l >= 0; --l) {
    std::vector<double> da_l(dcur.size());
    if (l == static_cast<int>(enc.layers.size()) - 1) {
      da_l = dcur;  // final encoder layer is linear
    } else {
      for (std::size_t i = 0; i < dcur.size(); ++i)
        da_l[i] = dcur[i] * elu_derivative(trace.pre[l][i]);
    }
    std::vector<double> dx;
    dense_backward(enc.layers[l], trace.inputs[l], da_l, enc_grad.layers[l], dx);
    dcur = std::move(dx);
  }
}

EncoderParams grad_shell(const EncoderParams& enc) {
  EncoderParams g;
  g.input_dim = enc.input_dim;
  g.hidden = enc.hidden;
  g.latent_dim = enc.latent_dim;
  g.layers.reserve(enc.layers.size());
  for (const DenseLayer& layer : enc.layers) g.layers.push_back(zeros_like(layer));
  g.norm.gain.assign(enc.norm.gain.size(), 0.0);
  g.norm.bias.assign(enc.norm.bias.size(), 0.0);
  return g;
}

ProjectionParams grad_shell(const ProjectionParams& proj) {
  ProjectionParams g;
  g.hidden_layer = zeros_like(proj.hidden_layer);
  g.output_layer = zeros_like(proj.output_layer);
  return g;
}

void check_loss_inputs(const EncoderParams& enc, const PointSet& keys,
                       const PointSet& queries, double temperature) {
  if (keys.size() != queries.size())
    throw std::invalid_argument("contrastive loss: view sizes differ");
  if (keys.size() < 2)
    throw std::invalid_argument("contrastive loss: batch size must be >= 2");
  if (temperature <= 0.0)
    throw std::invalid_argument("contrastive loss: temperature must be positive");
  if (keys.dim() != enc.input_dim || queries.dim() != enc.input_dim)
    throw std::invalid_argument("contrastive loss: observation dim mismatch");
}

// Projected vectors for both views: rows 0..n-1 are the keys, rows n..2n-1
// the queries.
std::vector<SampleTrace> forward_views(const EncoderParams& enc,
                                       const ProjectionParams& proj,
                                       const PointSet& keys,
                                       const PointSet& queries) {
  const int n = keys.size();
  std::vector<SampleTrace> traces(2 * n);
  for (int i = 0; i < n; ++i) {
    encoder_forward(enc, keys.point(i), traces[i]);
    projection_forward(proj, traces[i]);
    encoder_forward(enc, queries.point(i), traces[n + i]);
    projection_forward(proj, traces[n + i]);
  }
  return traces;
}

// Loss over precomputed projections. Every anchor's denominator sums the
// 2(n-1) terms of other samples only; both views anchor in turn. Fills
// d(loss)/d(projection) rows when dP is non-null.
double loss_from_projections(const std::vector<const std::vector<double>*>& p,
                             int n, double temperature,
                             std::vector<std::vector<double>>* dP) {
  const int total = 2 * n;
  std::vector<std::vector<double>> logits(total, std::vector<double>(total, 0.0));
  for (int a = 0; a < total; ++a)
    for (int b = a + 1; b < total; ++b) {
      double dot = 0.0;
      for (std::size_t k = 0; k < p[a]->size(); ++k) dot += (*p[a])[k] * (*p[b])[k];
      logits[a][b] = logits[b][a] = dot / temperature;
    }

  const auto sample_of = [n](int row) { return row < n ? row : row - n; };
  double loss = 0.0;
  const double inv_anchors = 1.0 / static_cast<double>(total);
  std::vector<std::vector<double>> dlogits;
  if (dP) dlogits.assign(total, std::vector<double>(total, 0.0));

  for (int a = 0; a < total; ++a) {
    const int i = sample_of(a);
    const int pos = a < n ? n + i : i;
    double max_neg = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < total; ++b) {
      if (sample_of(b) == i) continue;
      max_neg = std::max(max_neg, logits[a][b]);
    }
    double denom = 0.0;
    for (int b = 0; b < total; ++b) {
      if (sample_of(b) == i) continue;
      denom += std::exp(logits[a][b] - max_neg);
    }
    const double lse = max_neg + std::log(denom);
    loss += (lse - logits[a][pos]) * inv_anchors;

    if (dP) {
      for (int b = 0; b < total; ++b) {
        if (sample_of(b) == i) continue;
        dlogits[a][b] += std::exp(logits[a][b] - lse) * inv_anchors;
      }
      dlogits[a][pos] -= inv_anchors;
    }
  }

  if (dP) {
    const int dim = static_cast<int>(p[0]->size());
    dP->assign(total, std::vector<double>(dim, 0.0));
    for (int a = 0; a < total; ++a)
      for (int b = 0; b < total; ++b) {
        const double coeff = dlogits[a][b];
        if (coeff == 0.0) continue;
        for (int k = 0; k < dim; ++k) {
          (*dP)[a][k] += coeff * (*p[b])[k] / temperature;
          (*dP)[b][k] += coeff * (*p[a])[k] / temperature;
        }
      }
  }
  return loss;
}

void append_layer_refs(DenseLayer& layer, std::vector<double*>& refs) {
  for (double& v : layer.w) refs.push_back(&v);
  for (double& v : layer.b) refs.push_back(&v);
}

}  // namespace

EncoderParams EncoderParams::init(int input_dim, std::vector<int> hidden,
                                  int latent_dim, Rng& rng) {
  if (input_dim < 1)
    throw std::invalid_argument("EncoderParams: input_dim must be >= 1");
  if (latent_dim < 1)
    throw std::invalid_argument("EncoderParams: latent_dim must be >= 1");
  for (int width : hidden)
    if (width < 1)
      throw std::invalid_argument("EncoderParams: hidden widths must be >= 1");

  EncoderParams enc;
  enc.input_dim = input_dim;
  enc.hidden = std::move(hidden);
  enc.latent_dim = latent_dim;
  int in = input_dim;
  for (int width : enc.hidden) {
    enc.layers.push_back(init_dense(in, width, rng));
    in = width;
  }
  enc.layers.push_back(init_dense(in, latent_dim, rng));
  enc.norm.gain.assign(latent_dim, 1.0);
  enc.norm.bias.assign(latent_dim, 0.0);
  return enc;
}

ProjectionParams ProjectionParams::init(int latent_dim, int hidden_width,
                                        int output_width, Rng& rng) {
  ProjectionParams proj;
  proj.hidden_layer = init_dense(latent_dim, hidden_width, rng);
  proj.output_layer = init_dense(hidden_width, output_width, rng);
  return proj;
}

RandomProjectionEncoder RandomProjectionEncoder::init(int input_dim,
                                                      int latent_dim, Rng& rng) {
  if (input_dim < 1 || latent_dim < 1)
    throw std::invalid_argument("RandomProjectionEncoder: dims must be >= 1");
  RandomProjectionEncoder rp;
  rp.input_dim = input_dim;
  rp.latent_dim = latent_dim;
  rp.w.resize(static_cast<std::size_t>(input_dim) * latent_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& v : rp.w) v = rng.normal() * scale;
  return rp;
}

int encoder_output_dim(const Encoder& encoder, int obs_dim) {
  return std::visit(
      [obs_dim](const auto& e) -> int {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, IdentityEncoder>)
          return obs_dim;
        else
          return e.latent_dim;
      },
      encoder);
}

PointSet encode(const EncoderParams& encoder, const PointSet& observations) {
  if (observations.dim() != encoder.input_dim)
    throw std::invalid_argument("encode: observation dim mismatch");
  PointSet out(encoder.latent_dim);
  out.reserve(observations.size());
  SampleTrace trace;
  for (int i = 0; i < observations.size(); ++i) {
    encoder_forward(encoder, observations.point(i), trace);
    out.push_back(trace.z);
  }
  return out;
}

PointSet encode(const Encoder& encoder, const PointSet& observations) {
  return std::visit(
      [&](const auto& e) -> PointSet {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, IdentityEncoder>) {
          return observations;
        } else if constexpr (std::is_same_v<T, RandomProjectionEncoder>) {
          if (observations.dim() != e.input_dim)
            throw std::invalid_argument("encode: observation dim mismatch");
          PointSet out(e.latent_dim);
          out.reserve(observations.size());
          std::vector<double> row(e.latent_dim);
          for (int i = 0; i < observations.size(); ++i) {
            const auto x = observations.point(i);
            for (int r = 0; r < e.latent_dim; ++r) {
              const double* wrow =
                  e.w.data() + static_cast<std::size_t>(r) * e.input_dim;
              double acc = 0.0;
              for (int c = 0; c < e.input_dim; ++c) acc += wrow[c] * x[c];
              row[r] = acc;
            }
            out.push_back(row);
          }
          return out;
        } else {
          return encode(e, observations);
        }
      },
      encoder);
}

PointSet augment(const PointSet& observations, const AugmentConfig& config,
                 Rng& rng) {
  if (config.gaussian_sigma < 0.0 || config.coord_shift < 0.0)
    throw std::invalid_argument("augment: noise scales must be >= 0");
  PointSet out = observations;
  for (int i = 0; i < out.size(); ++i) {
    auto p = out.point(i);
    if (config.gaussian_sigma > 0.0)
      for (double& v : p) v += config.gaussian_sigma * rng.normal();
    if (config.coord_shift > 0.0) {
      const double shift = rng.uniform(-config.coord_shift, config.coord_shift);
      for (double& v : p) v += shift;
    }
  }
  return out;
}

double contrastive_loss_on_views(const EncoderParams& encoder,
                                 const ProjectionParams& projection,
                                 const PointSet& keys, const PointSet& queries,
                                 double temperature) {
  check_loss_inputs(encoder, keys, queries, temperature);
  const std::vector<SampleTrace> traces =
      forward_views(encoder, projection, keys, queries);
  std::vector<const std::vector<double>*> p(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) p[i] = &traces[i].p;
  return loss_from_projections(p, keys.size(), temperature, nullptr);
}

ContrastiveResult contrastive_loss_and_grads_on_views(
    const EncoderParams& encoder, const ProjectionParams& projection,
    const PointSet& keys, const PointSet& queries, double temperature) {
  check_loss_inputs(encoder, keys, queries, temperature);
  const int n = keys.size();
  const std::vector<SampleTrace> traces =
      forward_views(encoder, projection, keys, queries);
  std::vector<const std::vector<double>*> p(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) p[i] = &traces[i].p;

  std::vector<std::vector<double>> dP;
  ContrastiveResult result;
  result.loss = loss_from_projections(p, n, temperature, &dP);
  result.encoder_grad = grad_shell(encoder);
  result.projection_grad = grad_shell(projection);
  for (std::size_t s = 0; s < traces.size(); ++s)
    sample_backward(encoder, projection, traces[s], dP[s], result.encoder_grad,
                    result.projection_grad);
  return result;
}

ContrastiveResult contrastive_loss_and_grads(
    const EncoderParams& encoder, const ProjectionParams& projection,
    const PointSet& observations, double temperature,
    const AugmentConfig& config, Rng& rng) {
  const PointSet keys = augment(observations, config, rng);
  const PointSet queries = augment(observations, config, rng);
  return contrastive_loss_and_grads_on_views(encoder, projection, keys, queries,
                                             temperature);
}

std::vector<double*> parameter_refs(EncoderParams& encoder) {
  std::vector<double*> refs;
  for (DenseLayer& layer : encoder.layers) append_layer_refs(layer, refs);
  for (double& v : encoder.norm.gain) refs.push_back(&v);
  for (double& v : encoder.norm.bias) refs.push_back(&v);
  return refs;
}

std::vector<double*> parameter_refs(EncoderParams& encoder,
                                    ProjectionParams& projection) {
  std::vector<double*> refs = parameter_refs(encoder);
  append_layer_refs(projection.hidden_layer, refs);
  append_layer_refs(projection.output_layer, refs);
  return refs;
}

std::int64_t parameter_count(const EncoderParams& encoder,
                             const ProjectionParams& projection) {
  std::int64_t count = 0;
  for (const DenseLayer& layer : encoder.layers)
    count += static_cast<std::int64_t>(layer.w.size() + layer.b.size());
  count += static_cast<std::int64_t>(encoder.norm.gain.size() +
                                     encoder.norm.bias.size());
  count += static_cast<std::int64_t>(
      projection.hidden_layer.w.size() + projection.hidden_layer.b.size() +
      projection.output_layer.w.size() + projection.output_layer.b.size());
  return count;
}

double train_step(EncoderParams& encoder, ProjectionParams& projection,
                  AdamState& optimizer, const PointSet& observations,
                  double temperature, const AugmentConfig& config, Rng& rng) {
  ContrastiveResult result = contrastive_loss_and_grads(
      encoder, projection, observations, temperature, config, rng);

  const std::vector<double*> params = parameter_refs(encoder, projection);
  const std::vector<double*> grads =
      parameter_refs(result.encoder_grad, result.projection_grad);
  if (optimizer.m.size() != params.size()) {
    optimizer.m.assign(params.size(), 0.0);
    optimizer.v.assign(params.size(), 0.0);
    optimizer.step = 0;
  }
  ++optimizer.step;
  const double bias1 =
      1.0 - std::pow(optimizer.beta1, static_cast<double>(optimizer.step));
  const double bias2 =
      1.0 - std::pow(optimizer.beta2, static_cast<double>(optimizer.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = *grads[i];
    optimizer.m[i] = optimizer.beta1 * optimizer.m[i] + (1.0 - optimizer.beta1) * g;
    optimizer.v[i] =
        optimizer.beta2 * optimizer.v[i] + (1.0 - optimizer.beta2) * g * g;
    const double m_hat = optimizer.m[i] / bias1;
    const double v_hat = optimizer.v[i] / bias2;
    *params[i] -=
        optimizer.learning_rate * m_hat / (std::sqrt(v_hat) + optimizer.epsilon);
  }
  return result.loss;
}

double finite_difference_check(const EncoderParams& encoder,
                               const ProjectionParams& projection,
                               const PointSet& observations, double temperature,
                               const AugmentConfig& config,
                               std::uint64_t noise_seed, double epsilon) {
  Rng rng(noise_seed);
  const PointSet keys = augment(observations, config, rng);
  const PointSet queries = augment(observations, config, rng);

  ContrastiveResult analytic = contrastive_loss_and_grads_on_views(
      encoder, projection, keys, queries, temperature);
  const std::vector<double*> analytic_refs =
      parameter_refs(analytic.encoder_grad, analytic.projection_grad);

  EncoderParams enc = encoder;
  ProjectionParams proj = projection;
  const std::vector<double*> params = parameter_refs(enc, proj);

  double max_rel_error = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + epsilon;
    const double plus =
        contrastive_loss_on_views(enc, proj, keys, queries, temperature);
    *params[i] = saved - epsilon;
    const double minus =
        contrastive_loss_on_views(enc, proj, keys, queries, temperature);
    *params[i] = saved;
    const double fd = (plus - minus) / (2.0 * epsilon);
    const double an = *analytic_refs[i];
    const double rel =
        std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
    max_rel_error = std::max(max_rel_error, rel);
  }
  return max_rel_error;
}

namespace {

void write_bytes(std::ofstream& out, const void* data, std::size_t size) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

void write_u8(std::ofstream& out, std::uint8_t v) { write_bytes(out, &v, 1); }

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, bytes, 4);
}

void write_i32(std::ofstream& out, std::int32_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
}

void write_f64(std::ofstream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  write_bytes(out, bytes, 8);
}

void read_bytes(std::ifstream& in, void* data, std::size_t size) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("checkpoint: unexpected end of file");
}

std::uint8_t read_u8(std::ifstream& in) {
  std::uint8_t v;
  read_bytes(in, &v, 1);
  return v;
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char bytes[4];
  read_bytes(in, bytes, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

std::int32_t read_i32(std::ifstream& in) {
  return static_cast<std::int32_t>(read_u32(in));
}

double read_f64(std::ifstream& in) {
  unsigned char bytes[8];
  read_bytes(in, bytes, 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void write_dense_params(std::ofstream& out, const DenseLayer& layer) {
  for (double v : layer.w) write_f64(out, v);
  for (double v : layer.b) write_f64(out, v);
}

void read_dense_params(std::ifstream& in, DenseLayer& layer) {
  for (double& v : layer.w) v = read_f64(in);
  for (double& v : layer.b) v = read_f64(in);
}

}  // namespace

void save_representation(const std::string& path, const Encoder& encoder,
                         const std::optional<ProjectionParams>& projection) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  write_bytes(out, kMagic, 4);
  write_u32(out, kVersion);
  write_u8(out, static_cast<std::uint8_t>(encoder.index()));
  write_u8(out, projection.has_value() ? 1 : 0);

  if (const auto* rp = std::get_if<RandomProjectionEncoder>(&encoder)) {
    write_i32(out, rp->input_dim);
    write_i32(out, rp->latent_dim);
  } else if (const auto* mlp = std::get_if<EncoderParams>(&encoder)) {
    write_i32(out, mlp->input_dim);
    write_i32(out, static_cast<std::int32_t>(mlp->hidden.size()));
    for (int width : mlp->hidden) write_i32(out, width);
    write_i32(out, mlp->latent_dim);
  }
  if (projection) {
    write_i32(out, projection->hidden_layer.in);
    write_i32(out, projection->hidden_layer.out);
    write_i32(out, projection->output_layer.out);
  }

  if (const auto* rp = std::get_if<RandomProjectionEncoder>(&encoder)) {
    for (double v : rp->w) write_f64(out, v);
  } else if (const auto* mlp = std::get_if<EncoderParams>(&encoder)) {
    for (const DenseLayer& layer : mlp->layers) write_dense_params(out, layer);
    for (double v : mlp->norm.gain) write_f64(out, v);
    for (double v : mlp->norm.bias) write_f64(out, v);
  }
  if (projection) {
    write_dense_params(out, projection->hidden_layer);
    write_dense_params(out, projection->output_layer);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<Encoder, std::optional<ProjectionParams>> load_representation(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  read_bytes(in, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (read_u32(in) != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  const std::uint8_t kind = read_u8(in);
  const bool has_projection = read_u8(in) != 0;

  Encoder encoder = IdentityEncoder{};
  if (kind == 1) {
    RandomProjectionEncoder rp;
    rp.input_dim = read_i32(in);
    rp.latent_dim = read_i32(in);
    if (rp.input_dim < 1 || rp.latent_dim < 1)
      throw std::runtime_error("checkpoint: invalid dimensions");
    rp.w.resize(static_cast<std::size_t>(rp.input_dim) * rp.latent_dim);
    encoder = std::move(rp);
  } else if (kind == 2) {
    EncoderParams mlp;
    mlp.input_dim = read_i32(in);
    const int n_hidden = read_i32(in);
    if (mlp.input_dim < 1 || n_hidden < 0 || n_hidden > 64)
      throw std::runtime_error("checkpoint: invalid architecture");
    mlp.hidden.resize(n_hidden);
    for (int& width : mlp.hidden) width = read_i32(in);
    mlp.latent_dim = read_i32(in);
    if (mlp.latent_dim < 1)
      throw std::runtime_error("checkpoint: invalid architecture");
    int layer_in = mlp.input_dim;
    for (int width : mlp.hidden) {
      if (width < 1) throw std::runtime_error("checkpoint: invalid architecture");
      DenseLayer layer;
      layer.in = layer_in;
      layer.out = width;
      layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
      layer.b.resize(layer.out);
      mlp.layers.push_back(std::move(layer));
      layer_in = width;
    }
    DenseLayer last;
    last.in = layer_in;
    last.out = mlp.latent_dim;
    last.w.resize(static_cast<std::size_t>(last.in) * last.out);
    last.b.resize(last.out);
    mlp.layers.push_back(std::move(last));
    mlp.norm.gain.resize(mlp.latent_dim);
    mlp.norm.bias.resize(mlp.latent_dim);
    encoder = std::move(mlp);
  } else if (kind != 0) {
    throw std::runtime_error("checkpoint: unknown encoder kind");
  }

  std::optional<ProjectionParams> projection;
  if (has_projection) {
    ProjectionParams proj;
    const int in_dim = read_i32(in);
    const int hidden = read_i32(in);
    const int out_dim = read_i32(in);
    if (in_dim < 1 || hidden < 1 || out_dim < 1)
      throw std::runtime_error("checkpoint: invalid projection shape");
    proj.hidden_layer.in = in_dim;
    proj.hidden_layer.out = hidden;
    proj.hidden_layer.w.resize(static_cast<std::size_t>(in_dim) * hidden);
    proj.hidden_layer.b.resize(hidden);
    proj.output_layer.in = hidden;
    proj.output_layer.out = out_dim;
    proj.output_layer.w.resize(static_cast<std::size_t>(hidden) * out_dim);
    proj.output_layer.b.resize(out_dim);
    projection = std::move(proj);
  }

  if (auto* rp = std::get_if<RandomProjectionEncoder>(&encoder)) {
    for (double& v : rp->w) v = read_f64(in);
  } else if (auto* mlp = std::get_if<EncoderParams>(&encoder)) {
    for (DenseLayer& layer : mlp->layers) read_dense_params(in, layer);
    for (double& v : mlp->norm.gain) v = read_f64(in);
    for (double& v : mlp->norm.bias) v = read_f64(in);
  }
  if (projection) {
    read_dense_params(in, projection->hidden_layer);
    read_dense_params(in, projection->output_layer);
  }
  return {std::move(encoder), std::move(projection)};
}

}  // namespace aptlab
