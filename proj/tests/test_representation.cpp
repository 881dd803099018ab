#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "aptlab/representation.hpp"
#include "aptlab/rng.hpp"
#include "oracles.hpp"

using namespace aptlab;

namespace {

// Straight-line reference for the contrastive objective on fixed views: the
// whole forward pass re-derived with plain loops, no shared code with the
// library beyond the parameter structs.
double reference_loss(const EncoderParams& enc, const ProjectionParams& proj,
                      const PointSet& keys, const PointSet& queries,
                      double tau) {
  const int n = keys.size();
  auto encode_one = [&](std::span<const double> x) {
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
      const DenseLayer& layer = enc.layers[l];
      std::vector<double> next(layer.out, 0.0);
      for (int r = 0; r < layer.out; ++r) {
        double acc = layer.b[r];
        for (int c = 0; c < layer.in; ++c)
          acc += layer.w[static_cast<std::size_t>(r) * layer.in + c] * cur[c];
        next[r] = acc;
      }
      if (l + 1 < enc.layers.size())
        for (double& v : next) v = v > 0.0 ? v : std::expm1(v);
      cur = next;
    }
    double mu = 0.0;
    for (double v : cur) mu += v;
    mu /= static_cast<double>(cur.size());
    double var = 0.0;
    for (double v : cur) var += (v - mu) * (v - mu);
    var /= static_cast<double>(cur.size());
    const double denom = std::sqrt(std::max(var, 1e-6));
    std::vector<double> z(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i)
      z[i] = std::tanh(enc.norm.gain[i] * (cur[i] - mu) / denom + enc.norm.bias[i]);
    // projection
    std::vector<double> h(proj.hidden_layer.out, 0.0);
    for (int r = 0; r < proj.hidden_layer.out; ++r) {
      double acc = proj.hidden_layer.b[r];
      for (int c = 0; c < proj.hidden_layer.in; ++c)
        acc += proj.hidden_layer.w[static_cast<std::size_t>(r) *
                                       proj.hidden_layer.in + c] * z[c];
      h[r] = acc > 0.0 ? acc : std::expm1(acc);
    }
    std::vector<double> p(proj.output_layer.out, 0.0);
    for (int r = 0; r < proj.output_layer.out; ++r) {
      double acc = proj.output_layer.b[r];
      for (int c = 0; c < proj.output_layer.in; ++c)
        acc += proj.output_layer.w[static_cast<std::size_t>(r) *
                                       proj.output_layer.in + c] * h[c];
      p[r] = acc;
    }
    return p;
  };

  std::vector<std::vector<double>> p(2 * n);
  for (int i = 0; i < n; ++i) {
    p[i] = encode_one(keys.point(i));
    p[n + i] = encode_one(queries.point(i));
  }
  auto dot = [&](int a, int b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < p[a].size(); ++k) acc += p[a][k] * p[b][k];
    return acc / tau;
  };

  double loss = 0.0;
  for (int a = 0; a < 2 * n; ++a) {
    const int i = a < n ? a : a - n;
    const int pos = a < n ? n + i : i;
    double denom = 0.0;
    for (int b = 0; b < 2 * n; ++b) {
      const int j = b < n ? b : b - n;
      if (j == i) continue;
      denom += std::exp(dot(a, b));
    }
    loss += std::log(denom) - dot(a, pos);
  }
  return loss / static_cast<double>(2 * n);
}

EncoderParams tiny_encoder(Rng& rng) {
  return EncoderParams::init(1, {2}, 2, rng);
}

EncoderParams zeroed(EncoderParams enc) {
  for (double* p : parameter_refs(enc)) *p = 0.0;
  return enc;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("identity encoder returns observations unchanged") {
  const PointSet obs(3, {1.0, 2.0, 3.0, -1.0, 0.0, 0.5});
  const Encoder enc = IdentityEncoder{};
  const PointSet out = encode(enc, obs);
  CHECK(out.values() == obs.values());
  CHECK(encoder_output_dim(enc, 3) == 3);
}

TEST_CASE("random projection encoder is deterministic per seed") {
  Rng a(42), b(42), c(43);
  const auto rp1 = RandomProjectionEncoder::init(4, 2, a);
  const auto rp2 = RandomProjectionEncoder::init(4, 2, b);
  const auto rp3 = RandomProjectionEncoder::init(4, 2, c);
  CHECK(rp1.w == rp2.w);
  CHECK(rp1.w != rp3.w);

  Rng data(7);
  const PointSet obs = oracles::random_points(6, 4, -1.0, 1.0, data);
  CHECK(encode(Encoder{rp1}, obs).values() == encode(Encoder{rp2}, obs).values());
}

TEST_CASE("trained encoder outputs stay strictly inside (-1, 1)") {
  Rng rng(11);
  const EncoderParams enc = EncoderParams::init(3, {8, 8}, 4, rng);
  const PointSet obs = oracles::random_points(32, 3, -5.0, 5.0, rng);
  const PointSet out = encode(enc, obs);
  for (double v : out.values()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("zero-width layers are rejected at construction") {
  Rng rng(1);
  CHECK_THROWS_AS(EncoderParams::init(3, {0}, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(EncoderParams::init(0, {4}, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(EncoderParams::init(3, {4}, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(ProjectionParams::init(2, 0, 3, rng), std::invalid_argument);
}

TEST_CASE("augment with zero scales is the identity") {
  Rng rng(5);
  const PointSet obs = oracles::random_points(10, 3, -1.0, 1.0, rng);
  const PointSet out = augment(obs, AugmentConfig{0.0, 0.0}, rng);
  CHECK(out.values() == obs.values());
}

TEST_CASE("augment is reproducible per seed and varies across seeds") {
  Rng data(5);
  const PointSet obs = oracles::random_points(10, 3, -1.0, 1.0, data);
  const AugmentConfig cfg{0.1, 0.05};
  Rng r1(9), r2(9), r3(10);
  const PointSet a = augment(obs, cfg, r1);
  const PointSet b = augment(obs, cfg, r2);
  const PointSet c = augment(obs, cfg, r3);
  CHECK(a.values() == b.values());
  CHECK(a.values() != c.values());
  CHECK(a.values() != obs.values());
}

TEST_CASE("all-identical projections give log(2(n-1)) per anchor") {
  Rng rng(3);
  // Zero parameters force every projected vector to the zero vector.
  const EncoderParams enc = zeroed(EncoderParams::init(2, {3}, 2, rng));
  ProjectionParams proj = ProjectionParams::init(2, 4, 3, rng);
  for (double& v : proj.hidden_layer.w) v = 0.0;
  for (double& v : proj.output_layer.w) v = 0.0;
  for (double& v : proj.hidden_layer.b) v = 0.0;
  for (double& v : proj.output_layer.b) v = 0.0;

  const PointSet obs2(2, {0.3, -0.7, 1.1, 0.9});
  const double loss2 =
      contrastive_loss_on_views(enc, proj, obs2, obs2, 0.1);
  CHECK(std::abs(loss2 - std::log(2.0)) <= 1e-9);

  const PointSet obs3(2, {0.3, -0.7, 1.1, 0.9, 0.0, 0.2});
  const double loss3 = contrastive_loss_on_views(enc, proj, obs3, obs3, 0.1);
  CHECK(std::abs(loss3 - std::log(4.0)) <= 1e-9);
}

TEST_CASE("loss matches the straight-line reference on a tiny network") {
  Rng rng(2024);
  const EncoderParams enc = tiny_encoder(rng);
  const ProjectionParams proj = ProjectionParams::init(2, 3, 2, rng);
  const PointSet obs(1, {0.4, -1.2});  // two fixed 1-D observations

  // sigma = 0: both views equal the observations, so the loss is
  // deterministic and the reference can be evaluated directly.
  const double lib = contrastive_loss_on_views(enc, proj, obs, obs, 0.1);
  const double ref = reference_loss(enc, proj, obs, obs, 0.1);
  CHECK(lib == doctest::Approx(ref).epsilon(1e-12));

  Rng noise(55);
  const PointSet keys = augment(obs, AugmentConfig{0.1, 0.0}, noise);
  const PointSet queries = augment(obs, AugmentConfig{0.1, 0.0}, noise);
  CHECK(contrastive_loss_on_views(enc, proj, keys, queries, 0.1) ==
        doctest::Approx(reference_loss(enc, proj, keys, queries, 0.1))
            .epsilon(1e-12));
}

TEST_CASE("loss is positive and finite at random initialization") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const EncoderParams enc = EncoderParams::init(3, {6}, 3, rng);
    const ProjectionParams proj = ProjectionParams::init(3, 8, 4, rng);
    const PointSet obs = oracles::random_points(8, 3, -1.0, 1.0, rng);
    Rng noise(seed + 100);
    const ContrastiveResult res = contrastive_loss_and_grads(
        enc, proj, obs, 0.1, AugmentConfig{0.1, 0.0}, noise);
    CHECK(res.loss > 0.0);
    CHECK(std::isfinite(res.loss));
  }
}

TEST_CASE("loss rejects undersized batches and bad temperatures") {
  Rng rng(8);
  const EncoderParams enc = tiny_encoder(rng);
  const ProjectionParams proj = ProjectionParams::init(2, 3, 2, rng);
  const PointSet one(1, {0.5});
  CHECK_THROWS_AS(contrastive_loss_on_views(enc, proj, one, one, 0.1),
                  std::invalid_argument);
  const PointSet two(1, {0.5, 1.0});
  CHECK_THROWS_AS(contrastive_loss_on_views(enc, proj, two, two, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(contrastive_loss_on_views(enc, proj, two, two, -1.0),
                  std::invalid_argument);
}

TEST_CASE("finite differences confirm the analytic gradients") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    const EncoderParams enc = EncoderParams::init(2, {4}, 3, rng);
    const ProjectionParams proj = ProjectionParams::init(3, 4, 3, rng);
    const PointSet obs = oracles::random_points(4, 2, -1.0, 1.0, rng);
    const double err = finite_difference_check(enc, proj, obs, 0.1,
                                               AugmentConfig{0.1, 0.0},
                                               seed * 17 + 5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("collapsed latents hit the variance floor without blowing up") {
  Rng rng(9);
  // Near-zero weights in the final encoder layer collapse the latent spread
  // far below the variance floor.
  EncoderParams enc = EncoderParams::init(2, {4}, 3, rng);
  for (double& v : enc.layers.back().w) v *= 1e-6;
  ProjectionParams proj = ProjectionParams::init(3, 4, 3, rng);
  const PointSet obs = oracles::random_points(8, 2, -1.0, 1.0, rng);

  Rng noise(77);
  const ContrastiveResult res = contrastive_loss_and_grads(
      enc, proj, obs, 0.1, AugmentConfig{0.05, 0.0}, noise);
  CHECK(std::isfinite(res.loss));
  EncoderParams eg = res.encoder_grad;
  ProjectionParams pg = res.projection_grad;
  for (double* g : parameter_refs(eg, pg)) CHECK(std::isfinite(*g));

  // Training climbs back out of the collapsed state.
  AdamState adam;
  Rng train_noise(78);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    const double loss = train_step(enc, proj, adam, obs, 0.1,
                                   AugmentConfig{0.05, 0.0}, train_noise);
    if (step == 0) first = loss;
    last = loss;
    REQUIRE(std::isfinite(loss));
  }
  CHECK(last < first);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  Rng rng(21);
  EncoderParams enc = EncoderParams::init(2, {4}, 2, rng);
  ProjectionParams proj = ProjectionParams::init(2, 4, 3, rng);
  const EncoderParams enc_before = enc;
  const ProjectionParams proj_before = proj;
  AdamState adam;
  adam.learning_rate = 0.0;
  const PointSet obs = oracles::random_points(8, 2, -1.0, 1.0, rng);
  Rng noise(1);
  const double loss =
      train_step(enc, proj, adam, obs, 0.1, AugmentConfig{0.1, 0.0}, noise);
  CHECK(loss > 0.0);
  for (std::size_t l = 0; l < enc.layers.size(); ++l)
    CHECK(enc.layers[l].w == enc_before.layers[l].w);
  CHECK(proj.output_layer.w == proj_before.output_layer.w);
}

TEST_CASE("training on a fixed batch reduces the loss") {
  Rng rng(77);
  EncoderParams enc = EncoderParams::init(2, {16}, 3, rng);
  ProjectionParams proj = ProjectionParams::init(3, 16, 8, rng);
  AdamState adam;
  const PointSet obs = oracles::random_points(16, 2, 0.0, 1.0, rng);
  Rng noise(123);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 500; ++step) {
    const double loss =
        train_step(enc, proj, adam, obs, 0.1, AugmentConfig{0.05, 0.0}, noise);
    if (step == 0) first = loss;
    last = loss;
    CHECK(std::isfinite(loss));
  }
  CHECK(last < first);
  // Regression fixture: the recorded run reached ~46% of its initial loss;
  // allow headroom while still catching optimizer regressions.
  CHECK(last < 0.8 * first);
}

TEST_CASE("training is bit-deterministic given the seeds") {
  auto run = [] {
    Rng rng(31);
    EncoderParams enc = EncoderParams::init(2, {8}, 3, rng);
    ProjectionParams proj = ProjectionParams::init(3, 8, 4, rng);
    AdamState adam;
    Rng data(32);
    const PointSet obs = oracles::random_points(12, 2, -1.0, 1.0, data);
    Rng noise(33);
    for (int step = 0; step < 50; ++step)
      train_step(enc, proj, adam, obs, 0.1, AugmentConfig{0.1, 0.0}, noise);
    std::vector<double> flat;
    for (double* p : parameter_refs(enc, proj)) flat.push_back(*p);
    return flat;
  };
  CHECK(run() == run());
}

TEST_CASE("permuting the batch permutes latents and preserves the loss") {
  Rng rng(64);
  const EncoderParams enc = EncoderParams::init(2, {6}, 3, rng);
  const ProjectionParams proj = ProjectionParams::init(3, 6, 4, rng);
  Rng data(65);
  const PointSet obs = oracles::random_points(6, 2, -1.0, 1.0, data);
  Rng noise(66);
  const PointSet keys = augment(obs, AugmentConfig{0.1, 0.0}, noise);
  const PointSet queries = augment(obs, AugmentConfig{0.1, 0.0}, noise);

  const std::vector<int> perm{3, 1, 5, 0, 4, 2};
  PointSet keys_p(2), queries_p(2);
  for (int i : perm) {
    keys_p.push_back(keys.point(i));
    queries_p.push_back(queries.point(i));
  }

  const PointSet z = encode(enc, keys);
  const PointSet z_p = encode(enc, keys_p);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto a = z_p.point(static_cast<int>(i));
    const auto b = z.point(perm[i]);
    for (int d = 0; d < z.dim(); ++d) CHECK(a[d] == b[d]);
  }

  const double base = contrastive_loss_on_views(enc, proj, keys, queries, 0.1);
  const double permuted =
      contrastive_loss_on_views(enc, proj, keys_p, queries_p, 0.1);
  CHECK(permuted == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("alignment after training on 2-D observations") {
  int aligned_seeds = 0;
  const int num_seeds = 10;
  for (int s = 0; s < num_seeds; ++s) {
    Rng rng(9000 + s);
    EncoderParams enc = EncoderParams::init(2, {32, 32}, 5, rng);
    ProjectionParams proj = ProjectionParams::init(5, 64, 32, rng);
    AdamState adam;
    const AugmentConfig cfg{0.1, 0.0};
    Rng data(9100 + s);
    const PointSet pool = oracles::random_points(128, 2, 0.0, 1.0, data);
    Rng noise(9200 + s);
    Rng pick(9300 + s);
    for (int step = 0; step < 2000; ++step) {
      PointSet batch(2);
      for (int i = 0; i < 16; ++i) batch.push_back(pool.point(pick.uniform_int(128)));
      train_step(enc, proj, adam, batch, 0.1, cfg, noise);
    }

    // Projected distance between views of the same state vs different states.
    Rng eval(9400 + s);
    const PointSet sample = oracles::random_points(64, 2, 0.0, 1.0, eval);
    const PointSet va = augment(sample, cfg, eval);
    const PointSet vb = augment(sample, cfg, eval);
    auto project = [&](const PointSet& x) {
      const PointSet z = encode(enc, x);
      PointSet p(proj.output_layer.out);
      std::vector<double> h(proj.hidden_layer.out), o(proj.output_layer.out);
      for (int i = 0; i < z.size(); ++i) {
        const auto zi = z.point(i);
        for (int r = 0; r < proj.hidden_layer.out; ++r) {
          double acc = proj.hidden_layer.b[r];
          for (int c = 0; c < proj.hidden_layer.in; ++c)
            acc += proj.hidden_layer.w[static_cast<std::size_t>(r) *
                                           proj.hidden_layer.in + c] * zi[c];
          h[r] = acc > 0.0 ? acc : std::expm1(acc);
        }
        for (int r = 0; r < proj.output_layer.out; ++r) {
          double acc = proj.output_layer.b[r];
          for (int c = 0; c < proj.output_layer.in; ++c)
            acc += proj.output_layer.w[static_cast<std::size_t>(r) *
                                           proj.output_layer.in + c] * h[c];
          o[r] = acc;
        }
        p.push_back(o);
      }
      return p;
    };
    const PointSet pa = project(va);
    const PointSet pb = project(vb);
    double same = 0.0, diff = 0.0;
    int diff_count = 0;
    for (int i = 0; i < pa.size(); ++i) {
      same += euclidean_distance(pa.point(i), pb.point(i));
      for (int j = 0; j < pb.size(); ++j) {
        if (j == i) continue;
        diff += euclidean_distance(pa.point(i), pb.point(j));
        ++diff_count;
      }
    }
    same /= pa.size();
    diff /= diff_count;
    if (same < diff) ++aligned_seeds;
  }
  CHECK(aligned_seeds >= 9);
}

TEST_CASE("checkpoints round-trip bitwise") {
  Rng rng(101);
  const EncoderParams enc = EncoderParams::init(3, {4, 5}, 2, rng);
  const ProjectionParams proj = ProjectionParams::init(2, 6, 4, rng);
  const std::string path = temp_path("aptlab_ckpt_test.bin");

  save_representation(path, Encoder{enc}, proj);
  const auto [loaded, loaded_proj] = load_representation(path);
  const auto* mlp = std::get_if<EncoderParams>(&loaded);
  REQUIRE(mlp != nullptr);
  CHECK(mlp->input_dim == enc.input_dim);
  CHECK(mlp->hidden == enc.hidden);
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    CHECK(mlp->layers[l].w == enc.layers[l].w);
    CHECK(mlp->layers[l].b == enc.layers[l].b);
  }
  CHECK(mlp->norm.gain == enc.norm.gain);
  REQUIRE(loaded_proj.has_value());
  CHECK(loaded_proj->hidden_layer.w == proj.hidden_layer.w);
  CHECK(loaded_proj->output_layer.w == proj.output_layer.w);

  // Identity and random-projection kinds round-trip as well.
  Rng rng2(5);
  const auto rp = RandomProjectionEncoder::init(4, 2, rng2);
  save_representation(path, Encoder{rp}, std::nullopt);
  const auto [loaded_rp, no_proj] = load_representation(path);
  CHECK(std::get<RandomProjectionEncoder>(loaded_rp).w == rp.w);
  CHECK(!no_proj.has_value());

  save_representation(path, Encoder{IdentityEncoder{}}, std::nullopt);
  CHECK(std::holds_alternative<IdentityEncoder>(load_representation(path).first));
  std::filesystem::remove(path);
}
