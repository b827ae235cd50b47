#include "sbnn/model.hpp"

#include <cmath>
#include <utility>

#include "sbnn/errors.hpp"

namespace sbnn {

namespace {

void fill_normal(Mat& m, SeededRng& rng) {
  // Column-major fill; every consumer of these draws relies on this
  // order staying fixed.
  for (long j = 0; j < m.cols(); ++j)
    for (long i = 0; i < m.rows(); ++i) m(i, j) = rng.normal();
}

/// Zero blocks of the right shapes for the variant.
HyperParams shaped_hyper(const Architecture& arch) {
  HyperParams hp;
  const long L = arch.depth();
  hp.layers.resize(static_cast<std::size_t>(L));
  for (long l = 0; l < L; ++l) {
    const long dprev = arch.dims[static_cast<std::size_t>(l)];
    const long dl = arch.dims[static_cast<std::size_t>(l + 1)];
    auto& hl = hp.layers[static_cast<std::size_t>(l)];
    switch (arch.variant) {
      case Variant::kBnnIL:
      case Variant::kSbnnIL:
        hl.loc_w = Mat::Zero(1, 1);
        hl.rawscale_w = Mat::Zero(1, 1);
        hl.loc_b = Mat::Zero(1, 1);
        hl.rawscale_b = Mat::Zero(1, 1);
        break;
      case Variant::kBnnIP:
      case Variant::kSbnnIP:
        hl.loc_w = Mat::Zero(dl, dprev);
        hl.rawscale_w = Mat::Zero(dl, dprev);
        hl.loc_b = Mat::Zero(dl, 1);
        hl.rawscale_b = Mat::Zero(dl, 1);
        break;
      case Variant::kSbnnVL: {
        const long k = arch.dims.front();
        hl.loc_w = Mat::Zero(k, 1);
        hl.rawscale_w = Mat::Zero(k, 1);
        hl.loc_b = Mat::Zero(k, 1);
        hl.rawscale_b = Mat::Zero(k, 1);
        break;
      }
      case Variant::kSbnnVP: {
        const long k = arch.dims.front();
        hl.loc_w = Mat::Zero(k, dl * dprev);
        hl.rawscale_w = Mat::Zero(k, dl * dprev);
        hl.loc_b = Mat::Zero(k, dl);
        hl.rawscale_b = Mat::Zero(k, dl);
        break;
      }
    }
  }
  return hp;
}

/// Row of vec(W) in storage (column-major) order, the layout the
/// batched per-row products read.
Mat vec_row(const Mat& w) {
  return Eigen::Map<const Mat>(w.data(), 1, w.size());
}

ad::Var taped_layer_invariant(ad::Tape& tape, ad::Var a, ad::Var w, ad::Var b,
                              double inv) {
  ad::Var t = tape.tanh(a);
  ad::Var z = tape.matmul(t, tape.transpose(w));
  z = tape.scale(z, inv);
  return tape.add_row_vec(z, tape.transpose(b));
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBnnIL: return "BNN-IL";
    case Variant::kBnnIP: return "BNN-IP";
    case Variant::kSbnnIL: return "SBNN-IL";
    case Variant::kSbnnIP: return "SBNN-IP";
    case Variant::kSbnnVL: return "SBNN-VL";
    case Variant::kSbnnVP: return "SBNN-VP";
  }
  throw InvalidArgument("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "BNN-IL") return Variant::kBnnIL;
  if (name == "BNN-IP") return Variant::kBnnIP;
  if (name == "SBNN-IL") return Variant::kSbnnIL;
  if (name == "SBNN-IP") return Variant::kSbnnIP;
  if (name == "SBNN-VL") return Variant::kSbnnVL;
  if (name == "SBNN-VP") return Variant::kSbnnVP;
  throw InvalidArgument("unknown model variant '" + name +
                        "' (expected BNN-IL, BNN-IP, SBNN-IL, SBNN-IP, "
                        "SBNN-VL, or SBNN-VP)");
}

Mat rbf_matrix(const Mat& locations, const Mat& centroids, double tau) {
  if (locations.rows() != centroids.rows())
    throw InvalidArgument("rbf_matrix: locations and centroids disagree on dimension");
  if (!(tau > 0.0)) throw InvalidArgument("rbf_matrix: tau must be positive");
  const long n = locations.cols();
  const long k = centroids.cols();
  Mat phi(n, k);
  const double inv_tau2 = 1.0 / (tau * tau);
  for (long c = 0; c < k; ++c)
    for (long i = 0; i < n; ++i) {
      const double d2 = (locations.col(i) - centroids.col(c)).squaredNorm();
      phi(i, c) = std::exp(-d2 * inv_tau2);
    }
  return phi;
}

void Architecture::validate(int space_dim) const {
  if (space_dim != 1 && space_dim != 2)
    throw InvalidArgument("architecture: spatial dimension must be 1 or 2");
  if (dims.size() < 2)
    throw InvalidArgument("architecture: need an input width and at least one layer");
  for (long d : dims)
    if (d <= 0) throw InvalidArgument("architecture: layer widths must be positive");
  if (dims.back() != 1)
    throw InvalidArgument("architecture: the field is scalar, output width must be 1");
  if (is_spatial(variant)) {
    if (!embedding)
      throw InvalidArgument("architecture: " + variant_name(variant) +
                            " requires a basis embedding");
    if (embedding->centroids.dim() != space_dim)
      throw InvalidArgument("architecture: embedding centroids have the wrong dimension");
    if (embedding->centroids.n() != dims.front())
      throw InvalidArgument("architecture: input width must equal the number of basis functions");
    if (!(embedding->tau > 0.0))
      throw InvalidArgument("architecture: embedding bandwidth must be positive");
  } else {
    if (dims.front() != space_dim)
      throw InvalidArgument("architecture: input width must equal the spatial dimension");
    if (embedding)
      throw InvalidArgument("architecture: " + variant_name(variant) +
                            " takes raw coordinates, not an embedding");
  }
}

ParameterCounts count_parameters(const Architecture& arch) {
  ParameterCounts out;
  const long L = arch.depth();
  for (long l = 0; l < L; ++l) {
    const long dprev = arch.dims[static_cast<std::size_t>(l)];
    const long dl = arch.dims[static_cast<std::size_t>(l + 1)];
    out.weights_biases += dl * dprev + dl;
  }
  switch (arch.variant) {
    case Variant::kBnnIL:
    case Variant::kSbnnIL:
      out.hyper = 4 * L;
      break;
    case Variant::kBnnIP:
    case Variant::kSbnnIP:
      out.hyper = 2 * out.weights_biases;
      break;
    case Variant::kSbnnVL:
      out.hyper = 4 * arch.dims.front() * L;
      break;
    case Variant::kSbnnVP:
      out.hyper = 2 * arch.dims.front() * out.weights_biases;
      break;
  }
  return out;
}

HyperParams init_hyperparams(const Architecture& arch, SeededRng& rng) {
  HyperParams hp = shaped_hyper(arch);
  for (auto& hl : hp.layers) {
    if (is_varying(arch.variant)) {
      fill_normal(hl.rawscale_w, rng);
      fill_normal(hl.rawscale_b, rng);
    } else {
      hl.rawscale_w.setOnes();
      hl.rawscale_b.setOnes();
    }
  }
  return hp;
}

std::vector<Mat*> hyper_blocks(HyperParams& hp) {
  std::vector<Mat*> out;
  out.reserve(hp.layers.size() * 4);
  for (auto& hl : hp.layers) {
    out.push_back(&hl.loc_w);
    out.push_back(&hl.rawscale_w);
    out.push_back(&hl.loc_b);
    out.push_back(&hl.rawscale_b);
  }
  return out;
}

std::vector<const Mat*> hyper_blocks(const HyperParams& hp) {
  std::vector<const Mat*> out;
  out.reserve(hp.layers.size() * 4);
  for (const auto& hl : hp.layers) {
    out.push_back(&hl.loc_w);
    out.push_back(&hl.rawscale_w);
    out.push_back(&hl.loc_b);
    out.push_back(&hl.rawscale_b);
  }
  return out;
}

Vec flatten_hyper(const HyperParams& hp) {
  long total = 0;
  const auto blocks = hyper_blocks(hp);
  for (const Mat* b : blocks) total += b->size();
  Vec out(total);
  long off = 0;
  for (const Mat* b : blocks) {
    Eigen::Map<Vec>(out.data() + off, b->size()) =
        Eigen::Map<const Vec>(b->data(), b->size());
    off += b->size();
  }
  return out;
}

HyperParams unflatten_hyper(const Vec& flat, const Architecture& arch) {
  HyperParams hp = shaped_hyper(arch);
  const auto blocks = hyper_blocks(hp);
  long total = 0;
  for (const Mat* b : blocks) total += b->size();
  if (flat.size() != total)
    throw InvalidArgument("unflatten_hyper: vector length does not match the architecture");
  long off = 0;
  for (Mat* b : hyper_blocks(hp)) {
    Eigen::Map<Vec>(b->data(), b->size()) =
        Eigen::Map<const Vec>(flat.data() + off, b->size());
    off += b->size();
  }
  return hp;
}

ParamDraw sample_etas(const Architecture& arch, SeededRng& rng) {
  ParamDraw d;
  const long L = arch.depth();
  d.layers.resize(static_cast<std::size_t>(L));
  for (long l = 0; l < L; ++l) {
    const long dprev = arch.dims[static_cast<std::size_t>(l)];
    const long dl = arch.dims[static_cast<std::size_t>(l + 1)];
    auto& dd = d.layers[static_cast<std::size_t>(l)];
    dd.W.resize(dl, dprev);
    fill_normal(dd.W, rng);
    dd.b.resize(dl);
    for (long i = 0; i < dl; ++i) dd.b(i) = rng.normal();
  }
  return d;
}

ParamDraw materialize_draw(const HyperParams& hp, const Architecture& arch,
                           const ParamDraw& etas) {
  if (is_varying(arch.variant)) return etas;  // combined with moments at evaluation
  if (hp.layers.size() != etas.layers.size())
    throw InvalidArgument("materialize_draw: depth mismatch");
  ParamDraw out;
  out.layers.resize(etas.layers.size());
  for (std::size_t l = 0; l < etas.layers.size(); ++l) {
    const auto& hl = hp.layers[l];
    const auto& el = etas.layers[l];
    auto& ol = out.layers[l];
    if (arch.variant == Variant::kBnnIL || arch.variant == Variant::kSbnnIL) {
      const double sp_w = mat_softplus(hl.rawscale_w)(0, 0);
      Mat tw = sp_w * el.W;
      ol.W = (tw.array() + hl.loc_w(0, 0)).matrix();
      const double sp_b = mat_softplus(hl.rawscale_b)(0, 0);
      Vec tb = sp_b * el.b;
      ol.b = (tb.array() + hl.loc_b(0, 0)).matrix();
    } else {
      Mat tw = mat_softplus(hl.rawscale_w).cwiseProduct(el.W);
      ol.W = hl.loc_w + tw;
      Mat tb = mat_softplus(hl.rawscale_b).cwiseProduct(el.b);
      ol.b = hl.loc_b + tb;
    }
  }
  return out;
}

ParamDraw sample_prior_params(const HyperParams& hp, const Architecture& arch,
                              SeededRng& rng) {
  return materialize_draw(hp, arch, sample_etas(arch, rng));
}

Mat embed_input(const Architecture& arch, const Mat& locations) {
  if (is_spatial(arch.variant)) {
    if (!arch.embedding)
      throw InvalidArgument("embed_input: spatial variant without an embedding");
    return rbf_matrix(locations, arch.embedding->centroids.locations(),
                      arch.embedding->tau);
  }
  return locations.transpose();
}

Vec forward_field(const ParamDraw& draw, const HyperParams& hp,
                  const Architecture& arch, const Mat& x0) {
  const long L = arch.depth();
  if (static_cast<long>(draw.layers.size()) != L)
    throw InvalidArgument("forward_field: draw depth does not match the architecture");
  if (x0.cols() != arch.dims.front())
    throw InvalidArgument("forward_field: input width does not match the architecture");

  // Each step below mirrors one taped op so taped and plain
  // evaluations agree to the bit.
  Mat a = x0;
  if (!is_varying(arch.variant)) {
    for (long l = 0; l < L; ++l) {
      const auto& dl = draw.layers[static_cast<std::size_t>(l)];
      const double inv =
          1.0 / std::sqrt(static_cast<double>(arch.dims[static_cast<std::size_t>(l)]));
      Mat t = mat_tanh(a);
      Mat wt = dl.W.transpose();
      Mat z;
      z.noalias() = t * wt;
      z = z * inv;
      a = z.rowwise() + dl.b.transpose();
    }
    return a.col(0);
  }

  if (static_cast<long>(hp.layers.size()) != L)
    throw InvalidArgument("forward_field: hyperparameter depth does not match the architecture");
  for (long l = 0; l < L; ++l) {
    const auto& hl = hp.layers[static_cast<std::size_t>(l)];
    const auto& el = draw.layers[static_cast<std::size_t>(l)];
    const long dprev = arch.dims[static_cast<std::size_t>(l)];
    const long dl = arch.dims[static_cast<std::size_t>(l + 1)];
    const double inv = 1.0 / std::sqrt(static_cast<double>(dprev));
    Mat t = mat_tanh(a);
    if (arch.variant == Variant::kSbnnVL) {
      Mat mw;
      mw.noalias() = x0 * hl.loc_w;
      Mat pw;
      pw.noalias() = x0 * hl.rawscale_w;
      Mat sw = mat_softplus(pw);
      Mat mb;
      mb.noalias() = x0 * hl.loc_b;
      Mat pb;
      pb.noalias() = x0 * hl.rawscale_b;
      Mat sb = mat_softplus(pb);
      const Mat ones_row = Mat::Ones(1, dl);
      Mat rs = t.rowwise().sum();
      Mat m1 = mw.cwiseProduct(rs);
      Mat t1;
      t1.noalias() = m1 * ones_row;
      Mat etw = el.W.transpose();
      Mat q;
      q.noalias() = t * etw;
      Mat t2 = q.array().colwise() * sw.col(0).array();
      Mat s12 = t1 + t2;
      Mat hw = s12 * inv;
      Mat hb1;
      hb1.noalias() = mb * ones_row;
      Mat ebt = el.b.transpose();
      Mat hb2;
      hb2.noalias() = sb * ebt;
      Mat hb = hb1 + hb2;
      a = hw + hb;
    } else {  // per-parameter varying
      Mat mw;
      mw.noalias() = x0 * hl.loc_w;
      Mat pw;
      pw.noalias() = x0 * hl.rawscale_w;
      Mat sw = mat_softplus(pw);
      Mat vw = vec_row(el.W);
      Mat mrw = sw.array().rowwise() * vw.row(0).array();
      Mat thw = mw + mrw;
      Mat mb;
      mb.noalias() = x0 * hl.loc_b;
      Mat pb;
      pb.noalias() = x0 * hl.rawscale_b;
      Mat sb = mat_softplus(pb);
      Mat vb = el.b.transpose();
      Mat mrb = sb.array().rowwise() * vb.row(0).array();
      Mat thb = mb + mrb;
      Mat hw_raw = rows_matvec_value(thw, t, dl, dprev);
      Mat hw = hw_raw * inv;
      a = hw + thb;
    }
  }
  return a.col(0);
}

FieldBatch sample_field(const HyperParams& hp, const Architecture& arch,
                        const Grid& grid, long n, const SeededRng& base) {
  if (n <= 0) throw InvalidArgument("sample_field: need a positive batch size");
  arch.validate(grid.dim());
  const Mat x0 = embed_input(arch, grid.locations());
  FieldBatch batch;
  batch.grid_signature = grid.signature();
  batch.values.resize(grid.n(), n);
  for (long i = 0; i < n; ++i) {
    SeededRng rng = base.substream(static_cast<std::uint64_t>(i));
    const ParamDraw draw = sample_prior_params(hp, arch, rng);
    batch.values.col(i) = forward_field(draw, hp, arch, x0);
  }
  return batch;
}

TapedHyper lift_hyper(ad::Tape& tape, const HyperParams& hp) {
  TapedHyper th;
  th.layers.resize(hp.layers.size());
  for (std::size_t l = 0; l < hp.layers.size(); ++l) {
    th.layers[l].loc_w = tape.leaf(hp.layers[l].loc_w);
    th.layers[l].rawscale_w = tape.leaf(hp.layers[l].rawscale_w);
    th.layers[l].loc_b = tape.leaf(hp.layers[l].loc_b);
    th.layers[l].rawscale_b = tape.leaf(hp.layers[l].rawscale_b);
  }
  return th;
}

std::vector<ad::Var> hyper_vars(const TapedHyper& th) {
  std::vector<ad::Var> out;
  out.reserve(th.layers.size() * 4);
  for (const auto& tl : th.layers) {
    out.push_back(tl.loc_w);
    out.push_back(tl.rawscale_w);
    out.push_back(tl.loc_b);
    out.push_back(tl.rawscale_b);
  }
  return out;
}

ad::Var taped_prior_field(ad::Tape& tape, const TapedHyper& th,
                          const Architecture& arch, ad::Var x0,
                          const ParamDraw& etas) {
  const long L = arch.depth();
  if (static_cast<long>(th.layers.size()) != L ||
      static_cast<long>(etas.layers.size()) != L)
    throw InvalidArgument("taped_prior_field: depth mismatch");
  ad::Var a = x0;
  for (long l = 0; l < L; ++l) {
    const auto& tl = th.layers[static_cast<std::size_t>(l)];
    const auto& el = etas.layers[static_cast<std::size_t>(l)];
    const long dprev = arch.dims[static_cast<std::size_t>(l)];
    const long dl = arch.dims[static_cast<std::size_t>(l + 1)];
    const double inv = 1.0 / std::sqrt(static_cast<double>(dprev));
    switch (arch.variant) {
      case Variant::kBnnIL:
      case Variant::kSbnnIL: {
        ad::Var w = tape.sadd(
            tl.loc_w, tape.smul(tape.softplus(tl.rawscale_w), tape.constant(el.W)));
        ad::Var b = tape.sadd(
            tl.loc_b, tape.smul(tape.softplus(tl.rawscale_b), tape.constant(el.b)));
        a = taped_layer_invariant(tape, a, w, b, inv);
        break;
      }
      case Variant::kBnnIP:
      case Variant::kSbnnIP: {
        ad::Var w = tape.add(
            tl.loc_w, tape.mul(tape.softplus(tl.rawscale_w), tape.constant(el.W)));
        ad::Var b = tape.add(
            tl.loc_b, tape.mul(tape.softplus(tl.rawscale_b), tape.constant(el.b)));
        a = taped_layer_invariant(tape, a, w, b, inv);
        break;
      }
      case Variant::kSbnnVL: {
        ad::Var mw = tape.matmul(x0, tl.loc_w);
        ad::Var sw = tape.softplus(tape.matmul(x0, tl.rawscale_w));
        ad::Var mb = tape.matmul(x0, tl.loc_b);
        ad::Var sb = tape.softplus(tape.matmul(x0, tl.rawscale_b));
        ad::Var t = tape.tanh(a);
        ad::Var ones_row = tape.constant(Mat::Ones(1, dl));
        ad::Var t1 = tape.matmul(tape.mul(mw, tape.row_sum(t)), ones_row);
        ad::Var t2 =
            tape.col_mul(sw, tape.matmul(t, tape.constant(el.W.transpose())));
        ad::Var hw = tape.scale(tape.add(t1, t2), inv);
        ad::Var hb = tape.add(tape.matmul(mb, ones_row),
                              tape.matmul(sb, tape.constant(el.b.transpose())));
        a = tape.add(hw, hb);
        break;
      }
      case Variant::kSbnnVP: {
        ad::Var mw = tape.matmul(x0, tl.loc_w);
        ad::Var sw = tape.softplus(tape.matmul(x0, tl.rawscale_w));
        ad::Var thw =
            tape.add(mw, tape.mul_row_vec(sw, tape.constant(vec_row(el.W))));
        ad::Var mb = tape.matmul(x0, tl.loc_b);
        ad::Var sb = tape.softplus(tape.matmul(x0, tl.rawscale_b));
        ad::Var thb =
            tape.add(mb, tape.mul_row_vec(sb, tape.constant(el.b.transpose())));
        ad::Var t = tape.tanh(a);
        ad::Var hw = tape.rows_matvec(thw, t, dl, dprev);
        a = tape.add(tape.scale(hw, inv), thb);
        break;
      }
    }
  }
  return a;
}

TapedDraw lift_draw(ad::Tape& tape, const ParamDraw& draw) {
  TapedDraw td;
  td.layers.resize(draw.layers.size());
  for (std::size_t l = 0; l < draw.layers.size(); ++l) {
    td.layers[l].W = tape.leaf(draw.layers[l].W);
    td.layers[l].b = tape.leaf(draw.layers[l].b);
  }
  return td;
}

ad::Var taped_field_from_draw(ad::Tape& tape, const TapedDraw& td,
                              const Architecture& arch, ad::Var x0) {
  if (is_varying(arch.variant))
    throw UnsupportedVariant(
        "taped_field_from_draw: " + variant_name(arch.variant) +
        " weights are location-dependent and cannot be lifted as free parameters");
  const long L = arch.depth();
  if (static_cast<long>(td.layers.size()) != L)
    throw InvalidArgument("taped_field_from_draw: depth mismatch");
  ad::Var a = x0;
  for (long l = 0; l < L; ++l) {
    const double inv =
        1.0 / std::sqrt(static_cast<double>(arch.dims[static_cast<std::size_t>(l)]));
    const auto& tl = td.layers[static_cast<std::size_t>(l)];
    a = taped_layer_invariant(tape, a, tl.W, tl.b, inv);
  }
  return a;
}

PriorMoments prior_moments(const HyperParams& hp, const Architecture& arch) {
  if (is_varying(arch.variant))
    throw UnsupportedVariant(
        "prior_moments: " + variant_name(arch.variant) +
        " priors vary over space and have no single moment per parameter");
  PriorMoments pm;
  const long L = arch.depth();
  pm.layers.resize(static_cast<std::size_t>(L));
  for (long l = 0; l < L; ++l) {
    const auto& hl = hp.layers[static_cast<std::size_t>(l)];
    auto& ml = pm.layers[static_cast<std::size_t>(l)];
    const long dprev = arch.dims[static_cast<std::size_t>(l)];
    const long dl = arch.dims[static_cast<std::size_t>(l + 1)];
    if (arch.variant == Variant::kBnnIL || arch.variant == Variant::kSbnnIL) {
      ml.mu_w = Mat::Constant(dl, dprev, hl.loc_w(0, 0));
      ml.sigma_w = Mat::Constant(dl, dprev, mat_softplus(hl.rawscale_w)(0, 0));
      ml.mu_b = Vec::Constant(dl, hl.loc_b(0, 0));
      ml.sigma_b = Vec::Constant(dl, mat_softplus(hl.rawscale_b)(0, 0));
    } else {
      ml.mu_w = hl.loc_w;
      ml.sigma_w = mat_softplus(hl.rawscale_w);
      ml.mu_b = hl.loc_b;
      ml.sigma_b = mat_softplus(hl.rawscale_b);
    }
  }
  return pm;
}

Vec flatten_draw(const ParamDraw& draw) {
  long total = 0;
  for (const auto& dl : draw.layers) total += dl.W.size() + dl.b.size();
  Vec out(total);
  long off = 0;
  for (const auto& dl : draw.layers) {
    Eigen::Map<Vec>(out.data() + off, dl.W.size()) =
        Eigen::Map<const Vec>(dl.W.data(), dl.W.size());
    off += dl.W.size();
    out.segment(off, dl.b.size()) = dl.b;
    off += dl.b.size();
  }
  return out;
}

ParamDraw unflatten_draw(const Vec& flat, const Architecture& arch) {
  ParamDraw d;
  const long L = arch.depth();
  d.layers.resize(static_cast<std::size_t>(L));
  long off = 0;
  for (long l = 0; l < L; ++l) {
    const long dprev = arch.dims[static_cast<std::size_t>(l)];
    const long dl = arch.dims[static_cast<std::size_t>(l + 1)];
    auto& dd = d.layers[static_cast<std::size_t>(l)];
    if (off + dl * dprev + dl > flat.size())
      throw InvalidArgument("unflatten_draw: vector too short for the architecture");
    dd.W = Eigen::Map<const Mat>(flat.data() + off, dl, dprev);
    off += dl * dprev;
    dd.b = flat.segment(off, dl);
    off += dl;
  }
  if (off != flat.size())
    throw InvalidArgument("unflatten_draw: vector length does not match the architecture");
  return d;
}

}  // namespace sbnn
