#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sbnn/grid.hpp"
#include "sbnn/math.hpp"
#include "sbnn/rng.hpp"
#include "sbnn/tape.hpp"
#include "sbnn/targets.hpp"

namespace sbnn {

/// The six network priors.  The first letter pair says how the input
/// is fed (BNN: raw coordinates; SBNN: radial-basis embedding), the
/// second how the weight priors vary: I = one (mu, gamma) shared
/// spatially, V = basis-expanded, spatially varying (alpha, beta);
/// L = one block per layer, P = one block per weight or bias.
enum class Variant {
  kBnnIL,
  kBnnIP,
  kSbnnIL,
  kSbnnIP,
  kSbnnVL,
  kSbnnVP,
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

inline bool is_spatial(Variant v) { return v != Variant::kBnnIL && v != Variant::kBnnIP; }
inline bool is_varying(Variant v) { return v == Variant::kSbnnVL || v == Variant::kSbnnVP; }
inline bool is_per_param(Variant v) { return v == Variant::kBnnIP || v == Variant::kSbnnIP || v == Variant::kSbnnVP; }

/// Radial-basis input embedding: unit k evaluates
/// exp(-(||s - centroid_k|| / tau)^2) at every location.
struct Embedding {
  Grid centroids;
  double tau = 1.0;
};

/// n x K matrix of basis evaluations for locations (d x n).
Mat rbf_matrix(const Mat& locations, const Mat& centroids, double tau);

struct Architecture {
  Variant variant = Variant::kSbnnIL;
  std::vector<long> dims;  ///< d_0 .. d_L; d_L must be 1
  std::optional<Embedding> embedding;

  long depth() const { return static_cast<long>(dims.size()) - 1; }

  /// Checks structural consistency against the spatial dimension of
  /// the domain (1 or 2): spatial variants need an embedding whose
  /// centroid count equals d_0; plain variants need d_0 == space_dim.
  void validate(int space_dim) const;
};

struct ParameterCounts {
  long weights_biases = 0;  ///< total weights + biases of the network
  long hyper = 0;           ///< calibrated hyperparameters
};
ParameterCounts count_parameters(const Architecture& arch);

/// Calibrated prior hyperparameters, four blocks per layer.  Block
/// shapes depend on the variant:
///   IL: 1 x 1                      (mu, gamma shared in the layer)
///   IP: d_l x d_{l-1} and d_l x 1  (per weight / per bias)
///   VL: K x 1                      (basis coefficients per layer)
///   VP: K x (d_l d_{l-1}), K x d_l (basis coefficients per parameter)
/// loc_* holds mu (I) or alpha (V); rawscale_* holds gamma or beta,
/// mapped through softplus wherever a scale is consumed.
struct HyperParams {
  struct Layer {
    Mat loc_w, rawscale_w, loc_b, rawscale_b;
  };
  std::vector<Layer> layers;
};

/// Calibration starting point: loc = 0 everywhere; rawscale = 1 for
/// spatially invariant variants and standard normal draws for the
/// varying ones.
HyperParams init_hyperparams(const Architecture& arch, SeededRng& rng);

/// Blocks in canonical order (per layer: loc_w, rawscale_w, loc_b,
/// rawscale_b), the order used by optimizers and the checkpoint
/// payload.
std::vector<Mat*> hyper_blocks(HyperParams& hp);
std::vector<const Mat*> hyper_blocks(const HyperParams& hp);

Vec flatten_hyper(const HyperParams& hp);
HyperParams unflatten_hyper(const Vec& flat, const Architecture& arch);

/// One weight realisation.  For I variants W/b hold the materialized
/// weights; for V variants they hold the shared standard normals eta
/// that forward_field combines with the location-dependent moments.
struct ParamDraw {
  struct Layer {
    Mat W;  ///< d_l x d_{l-1}
    Vec b;  ///< d_l
  };
  std::vector<Layer> layers;
};

/// Raw standard normal draws for every weight and bias (layer by
/// layer, weights column-major then biases).
ParamDraw sample_etas(const Architecture& arch, SeededRng& rng);

/// theta = loc + softplus(rawscale) * eta for the I variants; the V
/// variants pass eta through untouched.
ParamDraw materialize_draw(const HyperParams& hp, const Architecture& arch,
                           const ParamDraw& etas);

/// sample_etas + materialize_draw.
ParamDraw sample_prior_params(const HyperParams& hp, const Architecture& arch,
                              SeededRng& rng);

/// Network input for a location set (d x n): the basis matrix for
/// spatial variants, plain coordinates (n x d) otherwise.
Mat embed_input(const Architecture& arch, const Mat& locations);

/// Evaluates the field at the given locations.  `x0` is the embedded
/// input from embed_input (callers evaluating many draws on one
/// location set compute it once).
Vec forward_field(const ParamDraw& draw, const HyperParams& hp,
                  const Architecture& arch, const Mat& x0);

/// Draws n prior field realisations on the grid; replicate i consumes
/// base.substream(i).
FieldBatch sample_field(const HyperParams& hp, const Architecture& arch,
                        const Grid& grid, long n, const SeededRng& base);

// Taped forms.  The structure mirrors forward_field exactly so taped
// and plain values agree; the taped forms exist to expose gradients
// with respect to the hyperparameters (calibration) or the weights
// (posterior sampling).

struct TapedHyper {
  struct Layer {
    ad::Var loc_w, rawscale_w, loc_b, rawscale_b;
  };
  std::vector<Layer> layers;
};
TapedHyper lift_hyper(ad::Tape& tape, const HyperParams& hp);
std::vector<ad::Var> hyper_vars(const TapedHyper& th);

/// Field of one prior draw as a function of the hyperparameters:
/// etas stay constant, hyper blocks are leaves.  `x0` must be a
/// constant node holding embed_input's matrix.
ad::Var taped_prior_field(ad::Tape& tape, const TapedHyper& th,
                          const Architecture& arch, ad::Var x0,
                          const ParamDraw& etas);

struct TapedDraw {
  struct Layer {
    ad::Var W, b;
  };
  std::vector<Layer> layers;
};
TapedDraw lift_draw(ad::Tape& tape, const ParamDraw& draw);

/// Field as a function of the weights (leaves), hyperparameters and
/// moments fixed.  Only meaningful for the I variants, whose weights
/// are free parameters; V variants are rejected upstream.
ad::Var taped_field_from_draw(ad::Tape& tape, const TapedDraw& td,
                              const Architecture& arch, ad::Var x0);

/// Per-layer prior moments with scales mapped through softplus and
/// broadcast to full weight shape, for the I variants (used by
/// posterior sampling).
struct PriorMoments {
  struct Layer {
    Mat mu_w, sigma_w;  ///< d_l x d_{l-1}
    Vec mu_b, sigma_b;  ///< d_l
  };
  std::vector<Layer> layers;
};
PriorMoments prior_moments(const HyperParams& hp, const Architecture& arch);

/// Weight vector layout used by posterior sampling: per layer, W
/// column-major then b.
Vec flatten_draw(const ParamDraw& draw);
ParamDraw unflatten_draw(const Vec& flat, const Architecture& arch);

}  // namespace sbnn
