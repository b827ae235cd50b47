#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sbnn/calibration.hpp"
#include "sbnn/diagnostics.hpp"
#include "sbnn/grid.hpp"
#include "sbnn/math.hpp"
#include "sbnn/model.hpp"
#include "sbnn/sghmc.hpp"
#include "sbnn/targets.hpp"

namespace sbnn {

/// Realisation files carry a set of fields sampled on one grid.
///
/// Layout: a text header followed by a raw little-endian float64
/// payload.  Header lines, each terminated by '\n':
///
///   SBNNFLD 1
///   bounds <lo hi> [<lo hi>]
///   dims <n1> [<n2>]
///   count <N>
///   log <0|1>
///   meanfield <0|1>
///   end
///
/// Payload: the mean field (n doubles, present iff meanfield is 1)
/// followed by N records of n doubles each, in grid order.  `log 1`
/// marks values as being on log scale.
struct Realisations {
  std::vector<std::array<double, 2>> bounds;
  std::vector<int> dims;
  Mat values;  ///< n x N, one field per column
  bool log_scale = false;
  std::optional<Vec> mean_field;

  Grid make_grid() const { return Grid(bounds, dims); }
};

/// Parses a realisation file.  Throws FormatError on any header or
/// payload defect (the error records the offending line or record) and
/// IoError if the file cannot be opened.
Realisations read_realisations(const std::string& path);

/// Writes a realisation file atomically (temp file + rename).
void write_realisations(const std::string& path, const Grid& grid,
                        const Mat& values, bool log_scale = false,
                        const std::optional<Vec>& mean_field = std::nullopt);

/// Run configuration, stored as JSON with sections grid, model,
/// target, calibration, inference plus top-level output and seed.
/// Unknown keys anywhere are rejected; missing keys fall back to the
/// defaults below.  Thread counts are a runtime concern and are not
/// part of the file (the CLI --threads flag and the SBNN_THREADS
/// environment variable set them).
///
/// The model section gives the full layer width list d_0..d_L; for
/// spatial variants d_0 must equal the embedding centroid count and
/// the embedding centroids live on the domain rectangle.
struct RunConfig {
  std::vector<std::array<double, 2>> grid_bounds;
  std::vector<int> grid_dims;
  Architecture model;
  TargetSpec target;
  CalibConfig calibration;
  SghmcConfig inference;
  std::string dataset;  ///< observation CSV consumed by inference
  double noise_var = 0.001;
  Dataset::Transform transform = Dataset::Transform::kIdentity;
  std::string output_dir = ".";
  std::uint64_t seed = 0;

  Grid make_grid() const { return Grid(grid_bounds, grid_dims); }
};

/// Parses a configuration document.  Throws FormatError for malformed
/// JSON, unknown keys, or values of the wrong shape, and
/// InvalidArgument for values that parse but violate a constraint.
RunConfig parse_config(const std::string& text);

/// Reads a configuration file (IoError if it cannot be opened).
RunConfig load_config(const std::string& path);

/// Canonical JSON for a config: every field emitted, keys sorted, so
/// parse(serialize(parse(text))) round-trips to the same document.
std::string serialize_config(const RunConfig& config);

/// Calibrated prior in persistent form.
///
/// Layout: a text header (magic SBNNCKPT, format version, variant,
/// layer dims, embedding centroid dims/bounds/tau for spatial
/// variants, mean-field length, seed provenance, payload length)
/// followed by the hyperparameter payload as little-endian float64 in
/// hyper_blocks order (per layer: loc_w, rawscale_w, loc_b,
/// rawscale_b, column-major within a block) and the optional mean
/// field.  Saving, loading and saving again is byte-identical.
struct Checkpoint {
  Architecture arch;
  HyperParams hyper;
  std::optional<Vec> mean_field;  ///< centering field to re-add
  std::uint64_t seed = 0;         ///< seed the calibration ran under
};

/// Writes a checkpoint atomically.
void write_checkpoint(const std::string& path, const Checkpoint& ck);

/// Parses a checkpoint.  Throws FormatError on malformed headers,
/// unsupported versions, or a payload whose length disagrees with the
/// architecture's hyperparameter count; IoError if unreadable.
Checkpoint read_checkpoint(const std::string& path);

/// Shortest decimal string that parses back to exactly this double, so
/// writing, reading and writing again reproduces the bytes.
std::string format_double(double v);

/// Writes a whole text file atomically (temp file + rename).
void write_text_atomic(const std::string& path, const std::string& body);

/// Reads an observation CSV.  The header line must be "s1,value" or
/// "s1,s2,value" (it fixes the spatial dimension); each following
/// record holds the coordinates and the observed value.  noise_var
/// and the transform come from the run configuration, not the file.
/// Parse errors raise FormatError carrying the 0-based record index.
Dataset read_dataset_csv(const std::string& path, double noise_var,
                         Dataset::Transform transform);

/// Writes a dataset in the same CSV schema (atomic).
void write_dataset_csv(const std::string& path, const Dataset& data);

// CSV emitters for diagnostics and pipeline outputs.  All writes are
// atomic (temp file + rename) and numbers use shortest round-trip
// formatting, so identical inputs produce identical bytes.

/// Columns: lag,estimate,count; one row per reported bin.
void write_covariogram_csv(const std::string& path,
                           const CovariogramEstimate& est);

/// Columns: anchor_id,s1,s2,cov; grid.n() rows per anchor (s2 is 0
/// for 1-d grids).
void write_anchored_csv(const std::string& path,
                        const AnchoredCovariance& anc, const Grid& grid);

/// Columns: x,density.  Point-mass estimates are rejected: they have
/// no density curve to tabulate.
void write_kde_csv(const std::string& path, const Kde1d& kde);

/// Columns: x,y,density; rows sweep y fastest.  Point-mass estimates
/// are rejected.
void write_kde_csv(const std::string& path, const Kde2d& kde);

/// Columns: q,lag,prob; reported bins of every curve, curves in order.
void write_exceedance_csv(const std::string& path,
                          const std::vector<ExceedanceCurve>& curves);

/// Columns: metric,value; exactly the rows mape, rmspe, crps.
void write_scores_csv(const std::string& path, const ScoreReport& report);

/// Columns: outer_step,w1_estimate,grad_norm_mean,seconds; one row per
/// completed outer step.  The seconds column is wall time and is the
/// one output exempt from byte reproducibility.
void write_trace_csv(const std::string& path,
                     const std::vector<CalibTraceRow>& trace);

/// Columns: s1[,s2],mean,sd; one row per grid location.
void write_predictive_csv(const std::string& path, const Grid& grid,
                          const Vec& mean, const Vec& sd);

}  // namespace sbnn
