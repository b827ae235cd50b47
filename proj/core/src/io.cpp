#include "sbnn/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sbnn/errors.hpp"

namespace sbnn {
namespace {

std::string read_header_line(std::istream& in, const char* what,
                             long line_no) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(std::string(what) + ": truncated header at line " +
                          std::to_string(line_no),
                      line_no);
  }
  return line;
}

void finish_atomically(const std::string& tmp, const std::string& path) {
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("rename to '" + path + "' failed: " + ec.message());
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text_atomic(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream outf(tmp, std::ios::binary | std::ios::trunc);
    if (!outf) throw IoError("cannot open '" + tmp + "' for writing");
    outf.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!outf) throw IoError("write to '" + tmp + "' failed");
  }
  finish_atomically(tmp, path);
}

Realisations read_realisations(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "'");
  }

  Realisations out;
  long line_no = 0;

  {
    std::istringstream ls(read_header_line(in, "realisations", ++line_no));
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != "SBNNFLD") {
      throw FormatError("realisations: bad magic line", line_no);
    }
    if (version != 1) {
      throw FormatError(
          "realisations: unsupported version " + std::to_string(version),
          line_no);
    }
  }

  long count = -1;
  bool saw_bounds = false, saw_dims = false, saw_count = false;
  bool has_mean = false;
  for (;;) {
    std::istringstream ls(read_header_line(in, "realisations", ++line_no));
    std::string key;
    ls >> key;
    if (key == "end") break;
    if (key == "bounds") {
      double lo, hi;
      while (ls >> lo >> hi) out.bounds.push_back({lo, hi});
      saw_bounds = true;
    } else if (key == "dims") {
      int d;
      while (ls >> d) out.dims.push_back(d);
      saw_dims = true;
    } else if (key == "count") {
      if (!(ls >> count) || count < 0) {
        throw FormatError("realisations: bad count", line_no);
      }
      saw_count = true;
    } else if (key == "log") {
      int flag;
      if (!(ls >> flag) || (flag != 0 && flag != 1)) {
        throw FormatError("realisations: bad log flag", line_no);
      }
      out.log_scale = flag == 1;
    } else if (key == "meanfield") {
      int flag;
      if (!(ls >> flag) || (flag != 0 && flag != 1)) {
        throw FormatError("realisations: bad meanfield flag", line_no);
      }
      has_mean = flag == 1;
    } else {
      throw FormatError("realisations: unknown header key '" + key + "'",
                        line_no);
    }
  }
  if (!saw_bounds || !saw_dims || !saw_count) {
    throw FormatError("realisations: header is missing bounds, dims or count",
                      line_no);
  }
  if (out.bounds.size() != out.dims.size()) {
    throw FormatError("realisations: bounds and dims disagree on dimension",
                      line_no);
  }

  long n = 1;
  for (int d : out.dims) {
    if (d < 1) throw FormatError("realisations: non-positive dims", line_no);
    n *= d;
  }

  if (has_mean) {
    Vec mean(n);
    in.read(reinterpret_cast<char*>(mean.data()),
            static_cast<std::streamsize>(sizeof(double)) * n);
    if (!in) {
      throw FormatError("realisations: truncated mean field", -1);
    }
    out.mean_field = std::move(mean);
  }

  out.values.resize(n, count);
  for (long r = 0; r < count; ++r) {
    in.read(reinterpret_cast<char*>(out.values.col(r).data()),
            static_cast<std::streamsize>(sizeof(double)) * n);
    if (!in) {
      throw FormatError(
          "realisations: truncated payload at record " + std::to_string(r), r);
    }
    if (!out.values.col(r).allFinite()) {
      throw FormatError(
          "realisations: non-finite value in record " + std::to_string(r), r);
    }
  }
  return out;
}

void write_realisations(const std::string& path, const Grid& grid,
                        const Mat& values, bool log_scale,
                        const std::optional<Vec>& mean_field) {
  if (values.rows() != grid.n()) {
    throw InvalidArgument("realisations: values do not match the grid size");
  }
  if (mean_field && mean_field->size() != grid.n()) {
    throw InvalidArgument("realisations: mean field does not match the grid");
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream outf(tmp, std::ios::binary | std::ios::trunc);
    if (!outf) {
      throw IoError("cannot open '" + tmp + "' for writing");
    }
    outf << "SBNNFLD 1\n";
    outf << "bounds";
    char buf[64];
    for (const auto& b : grid.bounds()) {
      std::snprintf(buf, sizeof buf, " %.17g %.17g", b[0], b[1]);
      outf << buf;
    }
    outf << "\ndims";
    for (int d : grid.dims()) outf << ' ' << d;
    outf << "\ncount " << values.cols() << "\n";
    outf << "log " << (log_scale ? 1 : 0) << "\n";
    outf << "meanfield " << (mean_field ? 1 : 0) << "\n";
    outf << "end\n";
    if (mean_field) {
      outf.write(reinterpret_cast<const char*>(mean_field->data()),
                 static_cast<std::streamsize>(sizeof(double)) *
                     mean_field->size());
    }
    for (long r = 0; r < values.cols(); ++r) {
      outf.write(reinterpret_cast<const char*>(values.col(r).data()),
                 static_cast<std::streamsize>(sizeof(double)) * values.rows());
    }
    if (!outf) {
      throw IoError("write to '" + tmp + "' failed");
    }
  }
  finish_atomically(tmp, path);
}

// --- run configuration ---------------------------------------------------

namespace {

using Json = nlohmann::json;

std::string key_label(const std::string& where, const char* key) {
  return where.empty() ? std::string(key) : where + "." + key;
}

void check_keys(const Json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw FormatError("config: unknown key '" + item.key() + "' in " +
                        where);
    }
  }
}

const Json& object_section(const Json& root, const char* key) {
  const Json& section = root.at(key);
  if (!section.is_object()) {
    throw FormatError(std::string("config: ") + key + " must be an object");
  }
  return section;
}

double json_double(const Json& obj, const std::string& where, const char* key,
                   double fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number()) {
    throw FormatError("config: " + key_label(where, key) + " must be a number");
  }
  return v.get<double>();
}

long json_long(const Json& obj, const std::string& where, const char* key,
               long fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number_integer()) {
    throw FormatError("config: " + key_label(where, key) + " must be an integer");
  }
  return v.get<long>();
}

bool json_bool(const Json& obj, const std::string& where, const char* key,
               bool fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_boolean()) {
    throw FormatError("config: " + key_label(where, key) + " must be a boolean");
  }
  return v.get<bool>();
}

std::string json_string(const Json& obj, const std::string& where,
                        const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_string()) {
    throw FormatError("config: " + key_label(where, key) + " must be a string");
  }
  return v.get<std::string>();
}

std::uint64_t json_u64(const Json& obj, const std::string& where,
                       const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw FormatError("config: " + key_label(where, key) +
                      " must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

std::vector<int> json_int_array(const Json& obj, const std::string& where,
                                const char* key) {
  const Json& v = obj.at(key);
  if (!v.is_array()) {
    throw FormatError("config: " + key_label(where, key) +
                      " must be an array of integers");
  }
  std::vector<int> out;
  for (const Json& e : v) {
    if (!e.is_number_integer()) {
      throw FormatError("config: " + key_label(where, key) +
                        " must be an array of integers");
    }
    out.push_back(e.get<int>());
  }
  return out;
}

std::vector<long> json_long_array(const Json& obj, const std::string& where,
                                  const char* key) {
  const Json& v = obj.at(key);
  if (!v.is_array()) {
    throw FormatError("config: " + key_label(where, key) +
                      " must be an array of integers");
  }
  std::vector<long> out;
  for (const Json& e : v) {
    if (!e.is_number_integer()) {
      throw FormatError("config: " + key_label(where, key) +
                        " must be an array of integers");
    }
    out.push_back(e.get<long>());
  }
  return out;
}

Vec json_vec(const Json& obj, const std::string& where, const char* key) {
  const Json& v = obj.at(key);
  if (!v.is_array()) {
    throw FormatError("config: " + key_label(where, key) +
                      " must be an array of numbers");
  }
  Vec out(static_cast<long>(v.size()));
  long i = 0;
  for (const Json& e : v) {
    if (!e.is_number()) {
      throw FormatError("config: " + key_label(where, key) +
                        " must be an array of numbers");
    }
    out(i++) = e.get<double>();
  }
  return out;
}

const char* target_kind_name(TargetKind kind) {
  switch (kind) {
    case TargetKind::kStationarySqexpGp: return "sqexp";
    case TargetKind::kPaciorekGp: return "paciorek";
    case TargetKind::kLognormalMatern: return "lognormal";
    case TargetKind::kExternal: return "external";
  }
  throw InvalidArgument("target kind name: unknown kind");
}

TargetKind target_kind_from_name(const std::string& name) {
  if (name == "sqexp") return TargetKind::kStationarySqexpGp;
  if (name == "paciorek") return TargetKind::kPaciorekGp;
  if (name == "lognormal") return TargetKind::kLognormalMatern;
  if (name == "external") return TargetKind::kExternal;
  throw InvalidArgument("config: unknown target kind '" + name +
                        "' (expected sqexp, paciorek, lognormal, or "
                        "external)");
}

const char* transform_name(Dataset::Transform t) {
  return t == Dataset::Transform::kLog ? "log" : "identity";
}

Dataset::Transform transform_from_name(const std::string& name) {
  if (name == "identity") return Dataset::Transform::kIdentity;
  if (name == "log") return Dataset::Transform::kLog;
  throw InvalidArgument("config: unknown transform '" + name +
                        "' (expected identity or log)");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) {
    throw FormatError("config: document must be a JSON object");
  }
  check_keys(root, "the document",
             {"grid", "model", "target", "calibration", "inference", "output",
              "seed"});

  RunConfig out;

  if (!root.contains("grid")) {
    throw FormatError("config: missing grid section");
  }
  const Json& g = object_section(root, "grid");
  check_keys(g, "grid", {"bounds", "dims"});
  if (!g.contains("bounds") || !g.at("bounds").is_array()) {
    throw FormatError("config: grid.bounds must be an array of [lo, hi]"
                      " pairs");
  }
  for (const Json& b : g.at("bounds")) {
    if (!b.is_array() || b.size() != 2 || !b.at(0).is_number() ||
        !b.at(1).is_number()) {
      throw FormatError("config: grid.bounds must be an array of [lo, hi]"
                        " pairs");
    }
    out.grid_bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  }
  if (!g.contains("dims")) {
    throw FormatError("config: grid.dims is required");
  }
  out.grid_dims = json_int_array(g, "grid", "dims");
  const Grid grid = out.make_grid();
  const int space_dim = grid.dim();

  if (root.contains("model")) {
    const Json& m = object_section(root, "model");
    check_keys(m, "model", {"variant", "dims", "embedding_dims", "tau"});
    if (!m.contains("variant")) {
      throw FormatError("config: model.variant is required");
    }
    out.model.variant = variant_from_name(
        json_string(m, "model", "variant", ""));
    if (!m.contains("dims")) {
      throw FormatError("config: model.dims is required");
    }
    out.model.dims = json_long_array(m, "model", "dims");
    if (is_spatial(out.model.variant)) {
      if (!m.contains("embedding_dims") || !m.contains("tau")) {
        throw FormatError("config: spatial variants need "
                          "model.embedding_dims and model.tau");
      }
      const std::vector<int> edims = json_int_array(m, "model",
                                                    "embedding_dims");
      const double tau = json_double(m, "model", "tau", 1.0);
      out.model.embedding = Embedding{Grid(out.grid_bounds, edims), tau};
    } else if (m.contains("embedding_dims") || m.contains("tau")) {
      throw FormatError("config: " + variant_name(out.model.variant) +
                        " takes raw coordinates, not an embedding");
    }
    out.model.validate(space_dim);
  }

  if (root.contains("target")) {
    const Json& t = object_section(root, "target");
    check_keys(t, "target",
               {"kind", "length_scale", "kappa", "xi", "path", "log_on_load",
                "center"});
    out.target.kind = target_kind_from_name(
        json_string(t, "target", "kind", "sqexp"));
    out.target.length_scale =
        json_double(t, "target", "length_scale", out.target.length_scale);
    out.target.kappa = json_double(t, "target", "kappa", out.target.kappa);
    if (t.contains("xi")) out.target.xi = json_vec(t, "target", "xi");
    out.target.path = json_string(t, "target", "path", "");
    out.target.log_on_load = json_bool(t, "target", "log_on_load", false);
    out.target.center = json_bool(t, "target", "center", false);
    if (!(out.target.length_scale > 0.0) ||
        !std::isfinite(out.target.length_scale)) {
      throw InvalidArgument("config: target.length_scale must be positive");
    }
    if (out.target.kind == TargetKind::kExternal && out.target.path.empty()) {
      throw InvalidArgument("config: external targets need target.path");
    }
    if (out.target.kind == TargetKind::kPaciorekGp) {
      if (out.target.xi.size() == 0) {
        out.target.xi = Vec::Zero(space_dim);
      } else if (out.target.xi.size() != space_dim) {
        throw InvalidArgument(
            "config: target.xi must match the grid dimension");
      }
    }
  }

  if (root.contains("calibration")) {
    const Json& c = object_section(root, "calibration");
    check_keys(c, "calibration",
               {"batch", "inner_steps", "outer_steps", "zeta", "inner_lr",
                "outer_lr", "rmsprop_decay", "rmsprop_eps", "adagrad_eps",
                "trace_window", "critic_width", "checkpoint_every"});
    CalibConfig& cal = out.calibration;
    cal.batch = json_long(c, "calibration", "batch", cal.batch);
    cal.inner_steps = json_long(c, "calibration", "inner_steps",
                                cal.inner_steps);
    cal.outer_steps = json_long(c, "calibration", "outer_steps",
                                cal.outer_steps);
    cal.zeta = json_double(c, "calibration", "zeta", cal.zeta);
    cal.inner_lr = json_double(c, "calibration", "inner_lr", cal.inner_lr);
    cal.outer_lr = json_double(c, "calibration", "outer_lr", cal.outer_lr);
    cal.rmsprop_decay = json_double(c, "calibration", "rmsprop_decay",
                                    cal.rmsprop_decay);
    cal.rmsprop_eps = json_double(c, "calibration", "rmsprop_eps",
                                  cal.rmsprop_eps);
    cal.adagrad_eps = json_double(c, "calibration", "adagrad_eps",
                                  cal.adagrad_eps);
    cal.trace_window = json_long(c, "calibration", "trace_window",
                                 cal.trace_window);
    cal.critic_width = json_long(c, "calibration", "critic_width",
                                 cal.critic_width);
    cal.checkpoint_every = json_long(c, "calibration", "checkpoint_every",
                                     cal.checkpoint_every);
    cal.validate();
  }

  if (root.contains("inference")) {
    const Json& i = object_section(root, "inference");
    check_keys(i, "inference",
               {"chains", "iterations", "burn_in", "thin", "step_size",
                "friction", "minibatch", "dataset", "noise_var", "transform"});
    SghmcConfig& inf = out.inference;
    inf.chains = json_long(i, "inference", "chains", inf.chains);
    inf.iterations = json_long(i, "inference", "iterations", inf.iterations);
    inf.burn_in = json_long(i, "inference", "burn_in", inf.burn_in);
    inf.thin = json_long(i, "inference", "thin", inf.thin);
    inf.step_size = json_double(i, "inference", "step_size", inf.step_size);
    inf.friction = json_double(i, "inference", "friction", inf.friction);
    inf.minibatch = json_long(i, "inference", "minibatch", inf.minibatch);
    out.dataset = json_string(i, "inference", "dataset", "");
    out.noise_var = json_double(i, "inference", "noise_var", out.noise_var);
    out.transform = transform_from_name(
        json_string(i, "inference", "transform", "identity"));
    if (!(out.noise_var > 0.0) || !std::isfinite(out.noise_var)) {
      throw InvalidArgument("config: inference.noise_var must be positive");
    }
  }

  out.output_dir = json_string(root, "", "output", ".");
  out.seed = json_u64(root, "", "seed", 0);
  return out;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "'");
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const RunConfig& config) {
  Json root;
  {
    Json g;
    Json bounds = Json::array();
    for (const auto& b : config.grid_bounds) {
      bounds.push_back(Json::array({b[0], b[1]}));
    }
    g["bounds"] = bounds;
    g["dims"] = config.grid_dims;
    root["grid"] = g;
  }
  if (!config.model.dims.empty()) {
    Json m;
    m["variant"] = variant_name(config.model.variant);
    m["dims"] = config.model.dims;
    if (config.model.embedding) {
      m["embedding_dims"] = config.model.embedding->centroids.dims();
      m["tau"] = config.model.embedding->tau;
    }
    root["model"] = m;
  }
  {
    Json t;
    t["kind"] = target_kind_name(config.target.kind);
    t["length_scale"] = config.target.length_scale;
    t["kappa"] = config.target.kappa;
    t["xi"] = std::vector<double>(
        config.target.xi.data(),
        config.target.xi.data() + config.target.xi.size());
    t["path"] = config.target.path;
    t["log_on_load"] = config.target.log_on_load;
    t["center"] = config.target.center;
    root["target"] = t;
  }
  {
    const CalibConfig& cal = config.calibration;
    Json c;
    c["batch"] = cal.batch;
    c["inner_steps"] = cal.inner_steps;
    c["outer_steps"] = cal.outer_steps;
    c["zeta"] = cal.zeta;
    c["inner_lr"] = cal.inner_lr;
    c["outer_lr"] = cal.outer_lr;
    c["rmsprop_decay"] = cal.rmsprop_decay;
    c["rmsprop_eps"] = cal.rmsprop_eps;
    c["adagrad_eps"] = cal.adagrad_eps;
    c["trace_window"] = cal.trace_window;
    c["critic_width"] = cal.critic_width;
    c["checkpoint_every"] = cal.checkpoint_every;
    root["calibration"] = c;
  }
  {
    const SghmcConfig& inf = config.inference;
    Json i;
    i["chains"] = inf.chains;
    i["iterations"] = inf.iterations;
    i["burn_in"] = inf.burn_in;
    i["thin"] = inf.thin;
    i["step_size"] = inf.step_size;
    i["friction"] = inf.friction;
    i["minibatch"] = inf.minibatch;
    i["dataset"] = config.dataset;
    i["noise_var"] = config.noise_var;
    i["transform"] = transform_name(config.transform);
    root["inference"] = i;
  }
  root["output"] = config.output_dir;
  root["seed"] = config.seed;
  return root.dump(2) + "\n";
}

// --- checkpoints ----------------------------------------------------------

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  if (static_cast<long>(ck.hyper.layers.size()) != ck.arch.depth()) {
    throw InvalidArgument(
        "checkpoint: hyperparameter layers do not match the architecture");
  }
  const Vec payload = flatten_hyper(ck.hyper);
  const long expected = count_parameters(ck.arch).hyper;
  if (payload.size() != expected) {
    throw InvalidArgument(
        "checkpoint: hyperparameter count does not match the architecture");
  }

  std::string head;
  head += "SBNNCKPT 1\n";
  head += "variant " + variant_name(ck.arch.variant) + "\n";
  head += "dims";
  for (long d : ck.arch.dims) head += ' ' + std::to_string(d);
  head += '\n';
  if (ck.arch.embedding) {
    head += "embedding";
    for (int d : ck.arch.embedding->centroids.dims()) {
      head += ' ' + std::to_string(d);
    }
    head += '\n';
    head += "ebounds";
    for (const auto& b : ck.arch.embedding->centroids.bounds()) {
      head += ' ' + format_double(b[0]);
      head += ' ' + format_double(b[1]);
    }
    head += '\n';
    head += "tau " + format_double(ck.arch.embedding->tau) + '\n';
  }
  head += "meanfield " +
          std::to_string(ck.mean_field ? ck.mean_field->size() : 0) + '\n';
  head += "seed " + std::to_string(ck.seed) + '\n';
  head += "payload " + std::to_string(payload.size()) + '\n';
  head += "end\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream outf(tmp, std::ios::binary | std::ios::trunc);
    if (!outf) throw IoError("cannot open '" + tmp + "' for writing");
    outf.write(head.data(), static_cast<std::streamsize>(head.size()));
    outf.write(reinterpret_cast<const char*>(payload.data()),
               static_cast<std::streamsize>(sizeof(double)) * payload.size());
    if (ck.mean_field) {
      outf.write(reinterpret_cast<const char*>(ck.mean_field->data()),
                 static_cast<std::streamsize>(sizeof(double)) *
                     ck.mean_field->size());
    }
    if (!outf) throw IoError("write to '" + tmp + "' failed");
  }
  finish_atomically(tmp, path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "'");
  }
  long line_no = 0;

  {
    std::istringstream ls(read_header_line(in, "checkpoint", ++line_no));
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != "SBNNCKPT") {
      throw FormatError("checkpoint: bad magic line", line_no);
    }
    if (version != 1) {
      throw FormatError(
          "checkpoint: unsupported version " + std::to_string(version),
          line_no);
    }
  }

  bool saw_variant = false, saw_tau = false, saw_seed = false;
  Variant variant = Variant::kSbnnIL;
  std::vector<long> dims;
  std::vector<int> edims;
  std::vector<std::array<double, 2>> ebounds;
  double tau = 0.0;
  long mean_len = -1;
  std::uint64_t seed = 0;
  long payload_len = -1;
  for (;;) {
    std::istringstream ls(read_header_line(in, "checkpoint", ++line_no));
    std::string key;
    ls >> key;
    if (key == "end") break;
    if (key == "variant") {
      std::string name;
      if (!(ls >> name)) {
        throw FormatError("checkpoint: bad variant line", line_no);
      }
      try {
        variant = variant_from_name(name);
      } catch (const InvalidArgument& e) {
        throw FormatError("checkpoint: " + std::string(e.what()), line_no);
      }
      saw_variant = true;
    } else if (key == "dims") {
      long d;
      while (ls >> d) dims.push_back(d);
    } else if (key == "embedding") {
      int d;
      while (ls >> d) edims.push_back(d);
    } else if (key == "ebounds") {
      double lo, hi;
      while (ls >> lo >> hi) ebounds.push_back({lo, hi});
    } else if (key == "tau") {
      if (!(ls >> tau)) throw FormatError("checkpoint: bad tau", line_no);
      saw_tau = true;
    } else if (key == "meanfield") {
      if (!(ls >> mean_len) || mean_len < 0) {
        throw FormatError("checkpoint: bad meanfield length", line_no);
      }
    } else if (key == "seed") {
      if (!(ls >> seed)) throw FormatError("checkpoint: bad seed", line_no);
      saw_seed = true;
    } else if (key == "payload") {
      if (!(ls >> payload_len) || payload_len < 0) {
        throw FormatError("checkpoint: bad payload length", line_no);
      }
    } else {
      throw FormatError("checkpoint: unknown header key '" + key + "'",
                        line_no);
    }
  }
  if (!saw_variant || dims.empty() || mean_len < 0 || !saw_seed ||
      payload_len < 0) {
    throw FormatError(
        "checkpoint: header is missing variant, dims, meanfield, seed or "
        "payload",
        line_no);
  }

  Checkpoint out;
  out.arch.variant = variant;
  out.arch.dims = dims;
  out.seed = seed;
  if (is_spatial(variant)) {
    if (edims.empty() || ebounds.empty() || !saw_tau) {
      throw FormatError(
          "checkpoint: spatial variants need embedding, ebounds and tau",
          line_no);
    }
    try {
      out.arch.embedding = Embedding{Grid(ebounds, edims), tau};
    } catch (const InvalidArgument& e) {
      throw FormatError("checkpoint: " + std::string(e.what()), line_no);
    }
  } else if (!edims.empty() || !ebounds.empty() || saw_tau) {
    throw FormatError("checkpoint: " + variant_name(variant) +
                          " takes no embedding records",
                      line_no);
  }
  const int space_dim = out.arch.embedding
                            ? out.arch.embedding->centroids.dim()
                            : static_cast<int>(dims.front());
  try {
    out.arch.validate(space_dim);
  } catch (const InvalidArgument& e) {
    throw FormatError("checkpoint: " + std::string(e.what()));
  }

  const long expected = count_parameters(out.arch).hyper;
  if (payload_len != expected) {
    throw FormatError("checkpoint: payload holds " +
                      std::to_string(payload_len) +
                      " values, the architecture needs " +
                      std::to_string(expected));
  }

  Vec payload(payload_len);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(sizeof(double)) * payload_len);
  if (!in) throw FormatError("checkpoint: truncated payload");
  if (!payload.allFinite()) {
    throw FormatError("checkpoint: non-finite hyperparameter");
  }
  out.hyper = unflatten_hyper(payload, out.arch);

  if (mean_len > 0) {
    Vec mean(mean_len);
    in.read(reinterpret_cast<char*>(mean.data()),
            static_cast<std::streamsize>(sizeof(double)) * mean_len);
    if (!in) throw FormatError("checkpoint: truncated mean field");
    if (!mean.allFinite()) {
      throw FormatError("checkpoint: non-finite mean field");
    }
    out.mean_field = std::move(mean);
  }
  return out;
}

// --- observation datasets -------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_csv_double(const std::string& field, const char* what,
                        long record) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  double v = 0.0;
  const auto res = std::from_chars(begin, end, v);
  if (begin == end || res.ec != std::errc() || res.ptr != end) {
    throw FormatError(std::string(what) + ": bad number '" + field +
                          "' in record " + std::to_string(record),
                      record);
  }
  return v;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path, double noise_var,
                         Dataset::Transform transform) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("dataset: missing header line");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  int dim = 0;
  if (line == "s1,value") {
    dim = 1;
  } else if (line == "s1,s2,value") {
    dim = 2;
  } else {
    throw FormatError(
        "dataset: header must be 's1,value' or 's1,s2,value', got '" + line +
        "'");
  }

  std::vector<double> coords, values;
  long record = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> fields = split_csv(line);
    if (static_cast<long>(fields.size()) != dim + 1) {
      throw FormatError("dataset: record " + std::to_string(record) +
                            " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(dim + 1),
                        record);
    }
    for (int a = 0; a < dim; ++a) {
      const double v = parse_csv_double(fields[static_cast<std::size_t>(a)],
                                        "dataset", record);
      if (!std::isfinite(v)) {
        throw FormatError("dataset: non-finite coordinate in record " +
                              std::to_string(record),
                          record);
      }
      coords.push_back(v);
    }
    const double v = parse_csv_double(fields[static_cast<std::size_t>(dim)],
                                      "dataset", record);
    if (!std::isfinite(v)) {
      throw FormatError(
          "dataset: non-finite value in record " + std::to_string(record),
          record);
    }
    values.push_back(v);
    ++record;
  }

  const long m = static_cast<long>(values.size());
  Dataset out;
  out.locations.resize(dim, m);
  for (long i = 0; i < m; ++i) {
    for (int a = 0; a < dim; ++a) {
      out.locations(a, i) = coords[static_cast<std::size_t>(i * dim + a)];
    }
  }
  out.values = Eigen::Map<const Vec>(values.data(), m);
  out.noise_var = noise_var;
  out.transform = transform;
  return out;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  const long dim = data.locations.rows();
  if (dim != 1 && dim != 2) {
    throw InvalidArgument("dataset: locations must be 1-d or 2-d");
  }
  if (data.locations.cols() != data.values.size()) {
    throw InvalidArgument("dataset: locations and values disagree on size");
  }
  std::string body = dim == 1 ? "s1,value\n" : "s1,s2,value\n";
  for (long i = 0; i < data.values.size(); ++i) {
    body += format_double(data.locations(0, i));
    if (dim == 2) {
      body += ',';
      body += format_double(data.locations(1, i));
    }
    body += ',';
    body += format_double(data.values(i));
    body += '\n';
  }
  write_text_atomic(path, body);
}

// --- CSV emitters ---------------------------------------------------------

void write_covariogram_csv(const std::string& path,
                           const CovariogramEstimate& est) {
  if (est.lags.size() != est.estimates.size() ||
      est.lags.size() != static_cast<long>(est.pair_counts.size())) {
    throw InvalidArgument("covariogram: estimate components disagree on size");
  }
  std::string body = "lag,estimate,count\n";
  for (long b = 0; b < est.lags.size(); ++b) {
    body += format_double(est.lags(b));
    body += ',';
    body += format_double(est.estimates(b));
    body += ',';
    body += std::to_string(est.pair_counts[static_cast<std::size_t>(b)]);
    body += '\n';
  }
  write_text_atomic(path, body);
}

void write_anchored_csv(const std::string& path, const AnchoredCovariance& anc,
                        const Grid& grid) {
  if (anc.cov.rows() != grid.n()) {
    throw InvalidArgument("anchored: covariance rows do not match the grid");
  }
  if (anc.cov.cols() != static_cast<long>(anc.anchor_index.size())) {
    throw InvalidArgument("anchored: anchor count mismatch");
  }
  const Mat locations = grid.locations();
  std::string body = "anchor_id,s1,s2,cov\n";
  for (long a = 0; a < anc.cov.cols(); ++a) {
    for (long j = 0; j < grid.n(); ++j) {
      body += std::to_string(a);
      body += ',';
      body += format_double(locations(0, j));
      body += ',';
      body += format_double(grid.dim() >= 2 ? locations(1, j) : 0.0);
      body += ',';
      body += format_double(anc.cov(j, a));
      body += '\n';
    }
  }
  write_text_atomic(path, body);
}

void write_kde_csv(const std::string& path, const Kde1d& kde) {
  if (kde.point_mass) {
    throw InvalidArgument("kde: a point-mass estimate has no density curve");
  }
  std::string body = "x,density\n";
  for (long i = 0; i < kde.x.size(); ++i) {
    body += format_double(kde.x(i));
    body += ',';
    body += format_double(kde.density(i));
    body += '\n';
  }
  write_text_atomic(path, body);
}

void write_kde_csv(const std::string& path, const Kde2d& kde) {
  if (kde.point_mass) {
    throw InvalidArgument("kde: a point-mass estimate has no density curve");
  }
  std::string body = "x,y,density\n";
  for (long i = 0; i < kde.x.size(); ++i) {
    for (long j = 0; j < kde.y.size(); ++j) {
      body += format_double(kde.x(i));
      body += ',';
      body += format_double(kde.y(j));
      body += ',';
      body += format_double(kde.density(i, j));
      body += '\n';
    }
  }
  write_text_atomic(path, body);
}

void write_exceedance_csv(const std::string& path,
                          const std::vector<ExceedanceCurve>& curves) {
  std::string body = "q,lag,prob\n";
  for (const ExceedanceCurve& curve : curves) {
    for (long b = 0; b < curve.lags.size(); ++b) {
      body += format_double(curve.q);
      body += ',';
      body += format_double(curve.lags(b));
      body += ',';
      body += format_double(curve.probs(b));
      body += '\n';
    }
  }
  write_text_atomic(path, body);
}

void write_scores_csv(const std::string& path, const ScoreReport& report) {
  std::string body = "metric,value\n";
  body += "mape," + format_double(report.mape) + "\n";
  body += "rmspe," + format_double(report.rmspe) + "\n";
  body += "crps," + format_double(report.crps) + "\n";
  write_text_atomic(path, body);
}

void write_trace_csv(const std::string& path,
                     const std::vector<CalibTraceRow>& trace) {
  std::string body = "outer_step,w1_estimate,grad_norm_mean,seconds\n";
  for (const CalibTraceRow& row : trace) {
    body += std::to_string(row.outer_step);
    body += ',';
    body += format_double(row.w1_estimate);
    body += ',';
    body += format_double(row.grad_norm_mean);
    body += ',';
    body += format_double(row.seconds);
    body += '\n';
  }
  write_text_atomic(path, body);
}

void write_predictive_csv(const std::string& path, const Grid& grid,
                          const Vec& mean, const Vec& sd) {
  if (mean.size() != grid.n() || sd.size() != grid.n()) {
    throw InvalidArgument("predictive: fields do not match the grid");
  }
  const Mat locations = grid.locations();
  std::string body = grid.dim() == 1 ? "s1,mean,sd\n" : "s1,s2,mean,sd\n";
  for (long j = 0; j < grid.n(); ++j) {
    body += format_double(locations(0, j));
    if (grid.dim() >= 2) {
      body += ',';
      body += format_double(locations(1, j));
    }
    body += ',';
    body += format_double(mean(j));
    body += ',';
    body += format_double(sd(j));
    body += '\n';
  }
  write_text_atomic(path, body);
}

}  // namespace sbnn
