#pragma once

// JSON documents for distance tensors, embeddings and metric reports.
//
// Distance tensor:
//   { "format_version": 1, "T": int, "N": int, ["T_beta": int,]
//     "labels": [N strings], "alpha": [reals], ["beta": [reals],]
//     "data": [T slices, each N rows of N reals] }
// With two axes, T = T_alpha * T_beta and slices are ordered alpha-fastest.
//
// Embedding:
//   { "format_version": 1, "T", "d", "N", "labels", "alpha", ["beta",]
//     "coords": [T slices, each N rows of d reals],
//     "provenance": { "settings": {...}, "seed", "cost_trace", "converged",
//                     "stress_per_slice" } }
//
// Doubles are written in shortest round-trip form, so save/load is bit-exact.

#include <cmds/core.hpp>
#include <cmds/metrics.hpp>
#include <cmds/solver.hpp>

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace cmds {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

namespace detail {

inline const Json& require(const Json& doc, const char* key, const std::string& context) {
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, context + ": expected a JSON object");
  auto it = doc.find(key);
  if (it == doc.end()) throw Error(ErrorCode::ParseError, context + ": missing key \"" + key + "\"");
  return *it;
}

template <typename T>
T get_as(const Json& doc, const char* key, const std::string& context) {
  const Json& v = require(doc, key, context);
  try {
    return v.get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, context + ": key \"" + key + "\" has the wrong type (" + e.what() + ")");
  }
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& rows, Eigen::Index nrows, Eigen::Index ncols, const std::string& context) {
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != nrows)
    throw Error(ErrorCode::ParseError, context + ": expected " + std::to_string(nrows) + " rows");
  Matrix m(nrows, ncols);
  for (Eigen::Index i = 0; i < nrows; ++i) {
    const Json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != ncols)
      throw Error(ErrorCode::ParseError, context + ", row " + std::to_string(i) + ": expected " +
                                             std::to_string(ncols) + " entries");
    for (Eigen::Index j = 0; j < ncols; ++j) {
      const Json& v = row[static_cast<std::size_t>(j)];
      if (!v.is_number())
        throw Error(ErrorCode::ParseError, context + ", entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                               "): not a number");
      m(i, j) = v.get<double>();
    }
  }
  return m;
}

inline Json parse_text(const std::string& text, const std::string& context) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, context + ": " + e.what());
  }
}

inline void check_version(const Json& doc, const std::string& context) {
  const int version = get_as<int>(doc, "format_version", context);
  if (version != kFormatVersion)
    throw Error(ErrorCode::SchemaVersionMismatch,
                context + ": format_version " + std::to_string(version) + ", expected " + std::to_string(kFormatVersion));
}

/// Reads T, the grid axes and their consistency.
inline HyperparameterGrid grid_from_json(const Json& doc, const std::string& context, std::size_t& T) {
  T = get_as<std::size_t>(doc, "T", context);
  HyperparameterGrid grid;
  grid.alpha = get_as<std::vector<double>>(doc, "alpha", context);
  if (doc.contains("beta")) grid.beta = get_as<std::vector<double>>(doc, "beta", context);
  if (doc.contains("T_beta")) {
    const auto tb = get_as<std::size_t>(doc, "T_beta", context);
    if (tb != grid.size_beta())
      throw Error(ErrorCode::SchemaVersionMismatch,
                  context + ": T_beta = " + std::to_string(tb) + " but beta has " + std::to_string(grid.beta.size()) +
                      " values");
  }
  if (grid.slices() != T)
    throw Error(ErrorCode::SchemaVersionMismatch, context + ": T = " + std::to_string(T) + " but T_alpha * T_beta = " +
                                                      std::to_string(grid.size_alpha()) + " * " +
                                                      std::to_string(grid.size_beta()) + " = " +
                                                      std::to_string(grid.slices()));
  try {
    grid.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, context + ": " + e.what());
  }
  return grid;
}

inline void grid_to_json(Json& doc, const HyperparameterGrid& grid) {
  doc["alpha"] = grid.alpha;
  if (grid.two_axis()) {
    doc["T_beta"] = grid.beta.size();
    doc["beta"] = grid.beta;
  }
}

}  // namespace detail

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::InvalidArgument, "write failed for " + path);
}

inline std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

// --- distance tensors -------------------------------------------------------

inline Json to_json(const DistanceTensor& D) {
  Json doc;
  doc["format_version"] = kFormatVersion;
  doc["T"] = D.T();
  doc["N"] = D.N();
  doc["labels"] = D.labels;
  detail::grid_to_json(doc, D.grid);
  Json data = Json::array();
  for (const auto& s : D.slices) data.push_back(detail::matrix_to_json(s));
  doc["data"] = std::move(data);
  return doc;
}

inline DistanceTensor distance_tensor_from_json(const Json& doc, const std::string& context = "distance tensor") {
  detail::check_version(doc, context);
  std::size_t T = 0;
  HyperparameterGrid grid = detail::grid_from_json(doc, context, T);
  const auto N = detail::get_as<std::size_t>(doc, "N", context);
  auto labels = detail::get_as<std::vector<std::string>>(doc, "labels", context);
  if (labels.size() != N)
    throw Error(ErrorCode::ParseError, context + ": " + std::to_string(labels.size()) + " labels for N = " + std::to_string(N));
  const Json& data = detail::require(doc, "data", context);
  if (!data.is_array() || data.size() != T)
    throw Error(ErrorCode::SchemaVersionMismatch, context + ": \"data\" holds " +
                                                      std::to_string(data.is_array() ? data.size() : 0) +
                                                      " slices but T = " + std::to_string(T));
  std::vector<Matrix> slices;
  for (std::size_t k = 0; k < T; ++k)
    slices.push_back(detail::matrix_from_json(data[k], static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N),
                                              context + ", data slice " + std::to_string(k)));
  return validate_distance_tensor(std::move(slices), std::move(grid), std::move(labels));
}

inline DistanceTensor load_distance_tensor(const std::string& path) {
  return distance_tensor_from_json(detail::parse_text(read_file(path), path), path);
}

inline void save_distance_tensor(const std::string& path, const DistanceTensor& D) { write_file(path, dump(to_json(D))); }

// --- embeddings -------------------------------------------------------------

struct Provenance {
  SolverSettings settings;
  std::vector<double> cost_trace;
  bool converged = false;
  std::vector<double> stress_per_slice;
};

struct EmbeddingFile {
  EmbeddingCurves curves;
  std::vector<std::string> labels;
  Provenance provenance;
};

inline Json settings_to_json(const SolverSettings& s) {
  Json j;
  j["lambda"] = s.lambda;
  j["dim"] = s.dim;
  j["tol"] = s.tol;
  j["max_outer"] = s.max_outer;
  j["max_inner"] = s.max_inner;
  j["init"] = to_string(s.init);
  j["seed"] = s.seed;
  j["variant"] = to_string(s.variant.tag);
  if (s.variant.tag == Variant::lmds) {
    j["lmds_k"] = s.variant.lmds_k;
    if (s.variant.lmds_w) j["lmds_w"] = *s.variant.lmds_w;
    if (s.variant.lmds_d_inf) j["lmds_dinf"] = *s.variant.lmds_d_inf;
  }
  if (s.variant.tag == Variant::unfolding) j["groups"] = s.variant.groups;
  return j;
}

/// Settings from a (possibly partial) JSON object; absent keys keep defaults.
inline SolverSettings settings_from_json(const Json& j, SolverSettings s = {}) {
  const std::string ctx = "settings";
  if (!j.is_object()) throw Error(ErrorCode::ParseError, ctx + ": expected a JSON object");
  try {
    if (j.contains("lambda")) s.lambda = j.at("lambda").get<double>();
    if (j.contains("dim")) s.dim = j.at("dim").get<int>();
    if (j.contains("tol")) s.tol = j.at("tol").get<double>();
    if (j.contains("max_outer")) s.max_outer = j.at("max_outer").get<int>();
    if (j.contains("max_inner")) s.max_inner = j.at("max_inner").get<int>();
    if (j.contains("init")) s.init = parse_init(j.at("init").get<std::string>());
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("variant")) s.variant.tag = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("lmds_k")) s.variant.lmds_k = j.at("lmds_k").get<int>();
    if (j.contains("lmds_w")) s.variant.lmds_w = j.at("lmds_w").get<double>();
    if (j.contains("lmds_dinf")) s.variant.lmds_d_inf = j.at("lmds_dinf").get<double>();
    if (j.contains("groups")) s.variant.groups = j.at("groups").get<std::vector<int>>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, ctx + ": " + e.what());
  }
  s.validate();
  return s;
}

inline Json to_json(const EmbeddingFile& f) {
  const EmbeddingCurves& c = f.curves;
  Json doc;
  doc["format_version"] = kFormatVersion;
  doc["T"] = c.T();
  doc["d"] = c.dim();
  doc["N"] = c.N();
  doc["labels"] = f.labels;
  detail::grid_to_json(doc, c.grid);
  Json coords = Json::array();
  for (const auto& s : c.slices) coords.push_back(detail::matrix_to_json(s));
  doc["coords"] = std::move(coords);
  Json prov;
  prov["settings"] = settings_to_json(f.provenance.settings);
  prov["seed"] = f.provenance.settings.seed;
  prov["cost_trace"] = f.provenance.cost_trace;
  prov["converged"] = f.provenance.converged;
  prov["stress_per_slice"] = f.provenance.stress_per_slice;
  doc["provenance"] = std::move(prov);
  return doc;
}

inline EmbeddingFile embedding_from_json(const Json& doc, const std::string& context = "embedding") {
  detail::check_version(doc, context);
  std::size_t T = 0;
  EmbeddingFile f;
  f.curves.grid = detail::grid_from_json(doc, context, T);
  const auto N = detail::get_as<std::size_t>(doc, "N", context);
  const auto d = detail::get_as<std::size_t>(doc, "d", context);
  if (d < 1) throw Error(ErrorCode::ParseError, context + ": d must be >= 1");
  f.labels = detail::get_as<std::vector<std::string>>(doc, "labels", context);
  if (f.labels.size() != N)
    throw Error(ErrorCode::ParseError, context + ": " + std::to_string(f.labels.size()) + " labels for N = " + std::to_string(N));
  const Json& coords = detail::require(doc, "coords", context);
  if (!coords.is_array() || coords.size() != T)
    throw Error(ErrorCode::SchemaVersionMismatch, context + ": \"coords\" holds " +
                                                      std::to_string(coords.is_array() ? coords.size() : 0) +
                                                      " slices but T = " + std::to_string(T));
  for (std::size_t k = 0; k < T; ++k)
    f.curves.slices.push_back(detail::matrix_from_json(coords[k], static_cast<Eigen::Index>(N),
                                                       static_cast<Eigen::Index>(d),
                                                       context + ", coords slice " + std::to_string(k)));
  if (!f.curves.all_finite()) throw Error(ErrorCode::NonFiniteEntry, context + ": coordinates must be finite");
  const Json& prov = detail::require(doc, "provenance", context);
  f.provenance.settings = settings_from_json(detail::require(prov, "settings", context + ".provenance"));
  f.provenance.cost_trace = detail::get_as<std::vector<double>>(prov, "cost_trace", context + ".provenance");
  f.provenance.converged = detail::get_as<bool>(prov, "converged", context + ".provenance");
  f.provenance.stress_per_slice = detail::get_as<std::vector<double>>(prov, "stress_per_slice", context + ".provenance");
  return f;
}

inline EmbeddingFile load_embedding(const std::string& path) {
  return embedding_from_json(detail::parse_text(read_file(path), path), path);
}

inline void save_embedding(const std::string& path, const EmbeddingFile& f) { write_file(path, dump(to_json(f))); }

// --- solve and report -------------------------------------------------------

inline EmbeddingFile run_embedding(const DistanceTensor& D, const SolverSettings& settings) {
  const SolveResult r = cmds(D, settings);
  EmbeddingFile f;
  f.curves = r.curves;
  f.labels = D.labels;
  f.provenance.settings = settings;
  f.provenance.cost_trace = r.cost_trace;
  f.provenance.converged = r.converged;
  const Vector stress = stress_per_slice(r.curves, D);
  f.provenance.stress_per_slice.assign(stress.data(), stress.data() + stress.size());
  return f;
}

/// Per-slice stress, per-curve roughness and instability, and the total cost
/// under the embedding's recorded settings.
inline Json metrics_report(const EmbeddingFile& f, const DistanceTensor& D) {
  const EmbeddingCurves& c = f.curves;
  if (c.T() != D.T() || c.N() != D.N())
    throw Error(ErrorCode::ShapeMismatch, "embedding is " + std::to_string(c.T()) + " slices x " +
                                              std::to_string(c.N()) + " items, tensor is " + std::to_string(D.T()) +
                                              " x " + std::to_string(D.N()));
  const SolverSettings& s = f.provenance.settings;
  const Matrix M = roughness_for_grid(D.grid).M;
  const Vector stress = stress_per_slice(c, D);
  const Vector rough = roughness_per_curve(c, M);
  Json out;
  out["labels"] = D.labels;
  out["stress_per_slice"] = std::vector<double>(stress.data(), stress.data() + stress.size());
  out["roughness_per_curve"] = std::vector<double>(rough.data(), rough.data() + rough.size());
  if (c.T() >= 2) {
    const StabilityReport st = stability_vectors(c);
    out["instability"] = std::vector<double>(st.instability.data(), st.instability.data() + st.instability.size());
    Json disp = Json::array();
    for (const auto& m : st.displacements) disp.push_back(detail::matrix_to_json(m));
    out["displacements"] = std::move(disp);
  } else {
    out["instability"] = std::vector<double>(c.N(), 0.0);
    out["displacements"] = Json::array();
  }
  out["lambda"] = s.lambda;
  out["variant"] = to_string(s.variant.tag);
  double total = 0.0;
  if (s.variant.tag == Variant::raw) {
    total = total_cost(c, D, nullptr, s.lambda, M);
    out["stress_total"] = stress.sum();
  } else {
    const WeightTensor W = build_weights(D, s.variant);
    total = total_cost(c, D, &W, s.lambda, M);
    out["stress_total"] = weighted_stress_per_slice(c, D, W).sum();
  }
  out["roughness_total"] = rough.sum();
  out["total_cost"] = total;
  return out;
}

}  // namespace cmds
