#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <doctest.h>

#include "sbnn/errors.hpp"
#include "sbnn/grid.hpp"
#include "sbnn/model.hpp"
#include "sbnn/rng.hpp"
#include "sbnn/tape.hpp"

using namespace sbnn;

namespace {

Grid unit_square(int per_axis) {
  return Grid({{0.0, 1.0}, {0.0, 1.0}}, {per_axis, per_axis});
}

Architecture make_arch(Variant v, std::vector<long> dims,
                       std::optional<Embedding> emb = std::nullopt) {
  Architecture a;
  a.variant = v;
  a.dims = std::move(dims);
  a.embedding = std::move(emb);
  return a;
}

/// Small architecture of each variant over the unit square, widths
/// kept tiny so finite differencing every hyperparameter is cheap.
std::vector<Architecture> small_archs() {
  const Embedding emb{unit_square(2), 1.0};  // 4 basis functions
  return {
      make_arch(Variant::kBnnIL, {2, 3, 1}),
      make_arch(Variant::kBnnIP, {2, 3, 1}),
      make_arch(Variant::kSbnnIL, {4, 3, 1}, emb),
      make_arch(Variant::kSbnnIP, {4, 3, 1}, emb),
      make_arch(Variant::kSbnnVL, {4, 3, 1}, emb),
      make_arch(Variant::kSbnnVP, {4, 3, 1}, emb),
  };
}

/// Hyperparameters with every block filled from one normal stream, so
/// no block sits at a special value like 0 or 1.
HyperParams random_hyper(const Architecture& arch, std::uint64_t seed) {
  SeededRng rng(seed, 77);
  HyperParams hp = init_hyperparams(arch, rng);
  Vec flat = flatten_hyper(hp);
  SeededRng fill(seed, 78);
  for (long i = 0; i < flat.size(); ++i) flat(i) = 0.5 * fill.normal();
  return unflatten_hyper(flat, arch);
}

double plain_objective(const HyperParams& hp, const Architecture& arch,
                       const ParamDraw& etas, const Mat& x0) {
  const ParamDraw draw = materialize_draw(hp, arch, etas);
  const Vec y = forward_field(draw, hp, arch, x0);
  return y.squaredNorm();
}

}  // namespace

TEST_CASE("variant names round-trip and reject unknowns") {
  const std::vector<Variant> all = {Variant::kBnnIL,  Variant::kBnnIP,
                                    Variant::kSbnnIL, Variant::kSbnnIP,
                                    Variant::kSbnnVL, Variant::kSbnnVP};
  for (Variant v : all) CHECK(variant_from_name(variant_name(v)) == v);
  CHECK(variant_name(Variant::kSbnnVL) == "SBNN-VL");
  CHECK_THROWS_AS(variant_from_name("SBNN-XX"), InvalidArgument);
  CHECK_THROWS_AS(variant_from_name("sbnn-il"), InvalidArgument);
}

TEST_CASE("parameter counts match the closed forms") {
  // Coordinate-fed network, three hidden layers of width 40.
  Architecture bnn = make_arch(Variant::kBnnIL, {2, 40, 40, 40, 1});
  CHECK(count_parameters(bnn).weights_biases == 3441);
  CHECK(count_parameters(bnn).hyper == 16);  // 4 blocks of 1 per layer

  bnn.variant = Variant::kBnnIP;
  CHECK(count_parameters(bnn).weights_biases == 3441);
  CHECK(count_parameters(bnn).hyper == 2 * 3441);

  // Basis-fed network with a 15 x 15 embedding.
  const Embedding emb{Grid({{0.0, 1.0}, {0.0, 1.0}}, {15, 15}), 1.0};
  Architecture sbnn = make_arch(Variant::kSbnnIL, {225, 40, 40, 40, 1}, emb);
  CHECK(count_parameters(sbnn).weights_biases == 12361);
  CHECK(count_parameters(sbnn).hyper == 16);

  sbnn.variant = Variant::kSbnnVL;
  CHECK(count_parameters(sbnn).hyper == 4 * 225 * 4);

  sbnn.variant = Variant::kSbnnVP;
  CHECK(count_parameters(sbnn).hyper == 2 * 225 * 12361);

  // The 8 x 8 embedding used throughout the small-scale tests.
  const Embedding emb8{Grid({{-4.0, 4.0}, {-4.0, 4.0}}, {8, 8}), 1.0};
  Architecture desk = make_arch(Variant::kSbnnIL, {64, 40, 40, 40, 1}, emb8);
  CHECK(count_parameters(desk).weights_biases == 5921);
}

TEST_CASE("architecture validation catches structural mistakes") {
  const Embedding emb{unit_square(2), 1.0};

  CHECK_NOTHROW(make_arch(Variant::kSbnnIL, {4, 3, 1}, emb).validate(2));
  CHECK_NOTHROW(make_arch(Variant::kBnnIP, {2, 3, 1}).validate(2));
  CHECK_NOTHROW(make_arch(Variant::kBnnIL, {1, 3, 1}).validate(1));

  // Spatial variant without its embedding.
  CHECK_THROWS_AS(make_arch(Variant::kSbnnIL, {4, 3, 1}).validate(2),
                  InvalidArgument);
  // Input width disagrees with the basis count.
  CHECK_THROWS_AS(make_arch(Variant::kSbnnVL, {5, 3, 1}, emb).validate(2),
                  InvalidArgument);
  // Coordinate-fed input width disagrees with the domain dimension.
  CHECK_THROWS_AS(make_arch(Variant::kBnnIL, {3, 3, 1}).validate(2),
                  InvalidArgument);
  // Coordinate-fed variants take no embedding.
  CHECK_THROWS_AS(make_arch(Variant::kBnnIL, {2, 3, 1}, emb).validate(2),
                  InvalidArgument);
  // Output must be scalar.
  CHECK_THROWS_AS(make_arch(Variant::kBnnIL, {2, 3, 2}).validate(2),
                  InvalidArgument);
  // Embedding dimension must match the domain.
  const Embedding emb1{Grid({{0.0, 1.0}}, {4}), 1.0};
  CHECK_THROWS_AS(make_arch(Variant::kSbnnIL, {4, 3, 1}, emb1).validate(2),
                  InvalidArgument);
  // Degenerate shapes.
  CHECK_THROWS_AS(make_arch(Variant::kBnnIL, {2}).validate(2), InvalidArgument);
  CHECK_THROWS_AS(make_arch(Variant::kBnnIL, {2, 0, 1}).validate(2),
                  InvalidArgument);
}

TEST_CASE("basis matrix evaluates the radial kernel") {
  Mat centroids(2, 2);
  centroids.col(0) << 0.0, 0.0;
  centroids.col(1) << 1.0, 0.0;
  Mat locs(2, 3);
  locs.col(0) << 0.0, 0.0;   // on centroid 0
  locs.col(1) << 1.0, 0.0;   // on centroid 1
  locs.col(2) << 0.0, 2.0;   // distance 2 from centroid 0

  const Mat phi = rbf_matrix(locs, centroids, 1.0);
  REQUIRE(phi.rows() == 3);
  REQUIRE(phi.cols() == 2);
  CHECK(phi(0, 0) == doctest::Approx(1.0));
  CHECK(phi(1, 1) == doctest::Approx(1.0));
  CHECK(phi(0, 1) == doctest::Approx(std::exp(-1.0)));  // distance 1
  CHECK(phi(2, 0) == doctest::Approx(std::exp(-4.0)));  // distance 2
  // Wider kernels decay slower.
  const Mat wide = rbf_matrix(locs, centroids, 2.0);
  CHECK(wide(2, 0) == doctest::Approx(std::exp(-1.0)));
  CHECK(wide(2, 0) > phi(2, 0));

  // Permuting the centroids permutes the columns and nothing else.
  Mat swapped(2, 2);
  swapped.col(0) = centroids.col(1);
  swapped.col(1) = centroids.col(0);
  const Mat phi_swapped = rbf_matrix(locs, swapped, 1.0);
  CHECK((phi_swapped.col(0) - phi.col(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((phi_swapped.col(1) - phi.col(0)).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(rbf_matrix(locs, centroids, 0.0), InvalidArgument);
  CHECK_THROWS_AS(rbf_matrix(Mat::Zero(1, 3), centroids, 1.0), InvalidArgument);
}

TEST_CASE("initial hyperparameters and block order") {
  SeededRng rng(11, 0);
  const Embedding emb{unit_square(2), 1.0};

  for (Variant v : {Variant::kBnnIL, Variant::kBnnIP}) {
    SeededRng r(11, 0);
    Architecture arch = make_arch(v, {2, 3, 1});
    HyperParams hp = init_hyperparams(arch, r);
    for (const Mat* b : hyper_blocks(std::as_const(hp))) CHECK(b->allFinite());
    for (std::size_t l = 0; l < hp.layers.size(); ++l) {
      CHECK(hp.layers[l].loc_w.isZero(0.0));
      CHECK(hp.layers[l].loc_b.isZero(0.0));
      CHECK((hp.layers[l].rawscale_w.array() == 1.0).all());
      CHECK((hp.layers[l].rawscale_b.array() == 1.0).all());
    }
  }

  // Varying variants start their scale coefficients at standard
  // normal draws, and the draw is a function of the rng state alone.
  Architecture vl = make_arch(Variant::kSbnnVL, {4, 3, 1}, emb);
  SeededRng r1(11, 5), r2(11, 5), r3(12, 5);
  HyperParams a = init_hyperparams(vl, r1);
  HyperParams b = init_hyperparams(vl, r2);
  HyperParams c = init_hyperparams(vl, r3);
  CHECK((flatten_hyper(a) - flatten_hyper(b)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((flatten_hyper(a) - flatten_hyper(c)).cwiseAbs().maxCoeff() > 0.0);
  CHECK(a.layers[0].loc_w.isZero(0.0));
  CHECK(a.layers[0].rawscale_w.cwiseAbs().maxCoeff() > 0.0);

  // Block shapes per variant.
  CHECK(a.layers[0].rawscale_w.rows() == 4);
  CHECK(a.layers[0].rawscale_w.cols() == 1);
  Architecture vp = make_arch(Variant::kSbnnVP, {4, 3, 1}, emb);
  SeededRng r4(11, 5);
  HyperParams d = init_hyperparams(vp, r4);
  CHECK(d.layers[0].rawscale_w.rows() == 4);
  CHECK(d.layers[0].rawscale_w.cols() == 12);  // 3 x 4 weights
  CHECK(d.layers[0].rawscale_b.cols() == 3);
  CHECK(d.layers[1].rawscale_w.cols() == 3);  // 1 x 3 weights
}

TEST_CASE("hyper and draw flattening round-trip") {
  for (const Architecture& arch : small_archs()) {
    CAPTURE(variant_name(arch.variant));
    HyperParams hp = random_hyper(arch, 21);
    const Vec flat = flatten_hyper(hp);
    CHECK(flat.size() == count_parameters(arch).hyper);
    const HyperParams back = unflatten_hyper(flat, arch);
    CHECK((flatten_hyper(back) - flat).cwiseAbs().maxCoeff() == 0.0);

    SeededRng rng(22, 0);
    const ParamDraw etas = sample_etas(arch, rng);
    const Vec dflat = flatten_draw(etas);
    CHECK(dflat.size() == count_parameters(arch).weights_biases);
    const ParamDraw dback = unflatten_draw(dflat, arch);
    CHECK((flatten_draw(dback) - dflat).cwiseAbs().maxCoeff() == 0.0);
  }

  const Architecture arch = make_arch(Variant::kBnnIL, {2, 3, 1});
  CHECK_THROWS_AS(unflatten_hyper(Vec::Zero(3), arch), InvalidArgument);
  CHECK_THROWS_AS(unflatten_draw(Vec::Zero(3), arch), InvalidArgument);
}

TEST_CASE("materialized weights follow the reparameterized prior") {
  // One spatially invariant per-layer block: theta = mu + softplus(gamma) eta.
  Architecture arch = make_arch(Variant::kBnnIL, {2, 1});
  SeededRng init(0, 0);
  HyperParams hp = init_hyperparams(arch, init);
  const double mu = 0.3, gamma = 0.7;
  hp.layers[0].loc_w(0, 0) = mu;
  hp.layers[0].rawscale_w(0, 0) = gamma;
  const double sigma = softplus(gamma);

  const long n = 10000;
  std::vector<double> draws(n);
  SeededRng base(99, 0);
  for (long i = 0; i < n; ++i) {
    SeededRng r = base.substream(i);
    draws[i] = sample_prior_params(hp, arch, r).layers[0].W(0, 0);
  }
  std::sort(draws.begin(), draws.end());

  // Kolmogorov-Smirnov distance against the implied normal law; the
  // bound is the 1% critical value 1.63 / sqrt(n).
  double ks = 0.0;
  for (long i = 0; i < n; ++i) {
    const double u = normal_cdf((draws[i] - mu) / sigma);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    ks = std::max(ks, std::max(std::abs(u - lo), std::abs(u - hi)));
  }
  CHECK(ks < 0.0163);
}

TEST_CASE("plain and taped field evaluations agree bit for bit") {
  const Grid grid = unit_square(4);
  for (const Architecture& arch : small_archs()) {
    CAPTURE(variant_name(arch.variant));
    arch.validate(2);
    const HyperParams hp = random_hyper(arch, 31);
    SeededRng rng(32, 0);
    const ParamDraw etas = sample_etas(arch, rng);
    const Mat x0 = embed_input(arch, grid.locations());

    const ParamDraw draw = materialize_draw(hp, arch, etas);
    const Vec plain = forward_field(draw, hp, arch, x0);
    CHECK(plain.allFinite());

    ad::Tape tape;
    const TapedHyper th = lift_hyper(tape, hp);
    const ad::Var out =
        taped_prior_field(tape, th, arch, tape.constant(x0), etas);
    const Mat& taped = tape.value(out);
    REQUIRE(taped.rows() == plain.size());
    REQUIRE(taped.cols() == 1);
    CHECK((taped.col(0).array() == plain.array()).all());

    if (!is_varying(arch.variant)) {
      ad::Tape tape2;
      const TapedDraw td = lift_draw(tape2, draw);
      const ad::Var out2 =
          taped_field_from_draw(tape2, td, arch, tape2.constant(x0));
      CHECK((tape2.value(out2).col(0).array() == plain.array()).all());
    }
  }
}

TEST_CASE("hyperparameter gradients match finite differences") {
  const Grid grid = unit_square(3);  // 9 locations keeps FD cheap
  for (const Architecture& arch : small_archs()) {
    CAPTURE(variant_name(arch.variant));
    const HyperParams hp = random_hyper(arch, 41);
    SeededRng rng(42, 0);
    const ParamDraw etas = sample_etas(arch, rng);
    const Mat x0 = embed_input(arch, grid.locations());

    ad::Tape tape;
    const TapedHyper th = lift_hyper(tape, hp);
    const ad::Var field =
        taped_prior_field(tape, th, arch, tape.constant(x0), etas);
    const ad::Var obj = tape.dotall(field, field);
    const std::vector<ad::Var> grads = tape.gradient(obj, hyper_vars(th));

    Vec flat = flatten_hyper(hp);
    long off = 0;
    std::size_t gi = 0;
    for (const Mat* block : hyper_blocks(hp)) {
      const Mat& g = tape.value(grads[gi++]);
      REQUIRE(g.rows() == block->rows());
      REQUIRE(g.cols() == block->cols());
      for (long j = 0; j < block->size(); ++j) {
        const double h = 1e-5;
        Vec bumped = flat;
        bumped(off + j) = flat(off + j) + h;
        const double up =
            plain_objective(unflatten_hyper(bumped, arch), arch, etas, x0);
        bumped(off + j) = flat(off + j) - h;
        const double dn =
            plain_objective(unflatten_hyper(bumped, arch), arch, etas, x0);
        const double fd = (up - dn) / (2.0 * h);
        const double ad = *(g.data() + j);
        CHECK(std::abs(ad - fd) <=
              5e-6 * (1.0 + std::max(std::abs(ad), std::abs(fd))));
      }
      off += block->size();
    }
  }
}

TEST_CASE("weight gradients match finite differences") {
  // The posterior sampler differentiates the field with respect to the
  // weights at fixed hyperparameters.
  const Grid grid = unit_square(3);
  const Architecture arch =
      make_arch(Variant::kSbnnIL, {4, 3, 1}, Embedding{unit_square(2), 1.0});
  const HyperParams hp = random_hyper(arch, 51);
  SeededRng rng(52, 0);
  const ParamDraw draw = sample_prior_params(hp, arch, rng);
  const Mat x0 = embed_input(arch, grid.locations());

  ad::Tape tape;
  const TapedDraw td = lift_draw(tape, draw);
  std::vector<ad::Var> wrt;
  for (const auto& tl : td.layers) {
    wrt.push_back(tl.W);
    wrt.push_back(tl.b);
  }
  const ad::Var field = taped_field_from_draw(tape, td, arch, tape.constant(x0));
  const ad::Var obj = tape.dotall(field, field);
  const std::vector<ad::Var> grads = tape.gradient(obj, wrt);

  Vec flat = flatten_draw(draw);
  const auto objective = [&](const Vec& v) {
    const ParamDraw d = unflatten_draw(v, arch);
    return forward_field(d, hp, arch, x0).squaredNorm();
  };
  long off = 0;
  std::size_t gi = 0;
  const auto check_block = [&](const Mat& g, long count) {
    REQUIRE(g.size() == count);
    for (long j = 0; j < count; ++j) {
      const double h = 1e-5;
      Vec bumped = flat;
      bumped(off + j) += h;
      const double up = objective(bumped);
      bumped(off + j) = flat(off + j) - h;
      const double dn = objective(bumped);
      const double fd = (up - dn) / (2.0 * h);
      const double ad = *(g.data() + j);
      CHECK(std::abs(ad - fd) <=
            5e-6 * (1.0 + std::max(std::abs(ad), std::abs(fd))));
    }
    off += count;
  };
  for (const auto& dl : draw.layers) {
    check_block(tape.value(grads[gi++]), dl.W.size());
    check_block(tape.value(grads[gi++]), dl.b.size());
  }

  ad::Tape tape2;
  const Architecture vl =
      make_arch(Variant::kSbnnVL, {4, 3, 1}, Embedding{unit_square(2), 1.0});
  const TapedDraw td2 = lift_draw(tape2, draw);
  CHECK_THROWS_AS(taped_field_from_draw(tape2, td2, vl, tape2.constant(x0)),
                  UnsupportedVariant);
}

TEST_CASE("shared draws make varying priors comonotone across space") {
  // theta(s) = mu(s) + sigma(s) eta with one eta for the whole domain.
  // Two consequences we can observe through a single-layer network:
  // with sigma forced to ~0 the field ignores eta entirely, and with
  // mu = 0 the field is linear in eta.
  const Grid grid = unit_square(4);
  const Embedding emb{unit_square(2), 1.0};
  for (Variant v : {Variant::kSbnnVL, Variant::kSbnnVP}) {
    CAPTURE(variant_name(v));
    const Architecture arch = make_arch(v, {4, 1}, emb);
    const Mat x0 = embed_input(arch, grid.locations());

    HyperParams hp = random_hyper(arch, 61);
    for (Mat* b : hyper_blocks(hp)) b->setConstant(-40.0);  // softplus ~ 4e-18
    hp.layers[0].loc_w = random_hyper(arch, 62).layers[0].loc_w;
    hp.layers[0].loc_b = random_hyper(arch, 63).layers[0].loc_b;

    SeededRng r1(64, 0), r2(64, 1);
    const ParamDraw eta1 = sample_etas(arch, r1);
    const ParamDraw eta2 = sample_etas(arch, r2);
    const Vec y1 = forward_field(eta1, hp, arch, x0);
    const Vec y2 = forward_field(eta2, hp, arch, x0);
    CHECK((y1 - y2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(y1.cwiseAbs().maxCoeff() > 1e-3);  // the mean part is alive

    // Zero means, free scales: double eta, double the field.
    HyperParams hp0 = random_hyper(arch, 65);
    hp0.layers[0].loc_w.setZero();
    hp0.layers[0].loc_b.setZero();
    ParamDraw eta_scaled = eta1;
    eta_scaled.layers[0].W *= 2.0;
    eta_scaled.layers[0].b *= 2.0;
    const Vec z1 = forward_field(eta1, hp0, arch, x0);
    const Vec z2 = forward_field(eta_scaled, hp0, arch, x0);
    CHECK((z2 - 2.0 * z1).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("prior moments broadcast the layer blocks") {
  const Embedding emb{unit_square(2), 1.0};
  Architecture il = make_arch(Variant::kSbnnIL, {4, 3, 1}, emb);
  HyperParams hp = random_hyper(il, 71);
  const PriorMoments pm = prior_moments(hp, il);
  REQUIRE(pm.layers.size() == 2);
  CHECK(pm.layers[0].mu_w.rows() == 3);
  CHECK(pm.layers[0].mu_w.cols() == 4);
  CHECK((pm.layers[0].mu_w.array() == hp.layers[0].loc_w(0, 0)).all());
  CHECK(pm.layers[0].sigma_w(1, 2) ==
        doctest::Approx(softplus(hp.layers[0].rawscale_w(0, 0))));
  CHECK((pm.layers[0].sigma_w.array() > 0.0).all());

  // Materialization must agree with the broadcast moments exactly.
  SeededRng rng(72, 0);
  const ParamDraw etas = sample_etas(il, rng);
  const ParamDraw draw = materialize_draw(hp, il, etas);
  for (std::size_t l = 0; l < draw.layers.size(); ++l) {
    // Multiply and add in separate statements: materialization rounds
    // the product before the shift, and a fused single expression
    // would let the compiler contract the two into an fma.
    const Mat prod_w = pm.layers[l].sigma_w.cwiseProduct(etas.layers[l].W);
    const Mat expect = pm.layers[l].mu_w + prod_w;
    CHECK((draw.layers[l].W - expect).cwiseAbs().maxCoeff() == 0.0);
    const Vec prod_b = pm.layers[l].sigma_b.cwiseProduct(etas.layers[l].b);
    const Vec expect_b = pm.layers[l].mu_b + prod_b;
    CHECK((draw.layers[l].b - expect_b).cwiseAbs().maxCoeff() == 0.0);
  }

  Architecture ip = il;
  ip.variant = Variant::kSbnnIP;
  HyperParams hip = random_hyper(ip, 73);
  const PriorMoments pmp = prior_moments(hip, ip);
  CHECK((pmp.layers[0].mu_w - hip.layers[0].loc_w).cwiseAbs().maxCoeff() == 0.0);

  Architecture vl = il;
  vl.variant = Variant::kSbnnVL;
  CHECK_THROWS_AS(prior_moments(random_hyper(vl, 74), vl), UnsupportedVariant);
}

TEST_CASE("prior field batches are reproducible with a prefix property") {
  const Grid grid = unit_square(4);
  const Embedding emb{unit_square(2), 1.0};
  const Architecture arch = make_arch(Variant::kSbnnIP, {4, 3, 1}, emb);
  const HyperParams hp = random_hyper(arch, 81);

  const FieldBatch b8 = sample_field(hp, arch, grid, 8, SeededRng(5, 3));
  const FieldBatch b8b = sample_field(hp, arch, grid, 8, SeededRng(5, 3));
  const FieldBatch b5 = sample_field(hp, arch, grid, 5, SeededRng(5, 3));
  const FieldBatch other = sample_field(hp, arch, grid, 8, SeededRng(5, 4));

  CHECK(b8.grid_signature == grid.signature());
  CHECK(b8.values.rows() == grid.n());
  CHECK((b8.values - b8b.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b8.values.leftCols(5) - b5.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b8.values - other.values).cwiseAbs().maxCoeff() > 0.0);
  CHECK(b8.values.allFinite());

  CHECK_THROWS_AS(sample_field(hp, arch, grid, 0, SeededRng(5, 3)),
                  InvalidArgument);
}

TEST_CASE("coordinate-fed networks see raw locations") {
  const Grid grid = unit_square(3);
  const Architecture arch = make_arch(Variant::kBnnIL, {2, 3, 1});
  const Mat x0 = embed_input(arch, grid.locations());
  CHECK(x0.rows() == grid.n());
  CHECK(x0.cols() == 2);
  CHECK((x0.transpose() - grid.locations()).cwiseAbs().maxCoeff() == 0.0);

  const Embedding emb{unit_square(2), 1.0};
  const Architecture sp = make_arch(Variant::kSbnnIL, {4, 3, 1}, emb);
  const Mat phi = embed_input(sp, grid.locations());
  CHECK(phi.rows() == grid.n());
  CHECK(phi.cols() == 4);
  CHECK((phi.array() > 0.0).all());
  CHECK((phi.array() <= 1.0).all());
}
