#pragma once

// Shared plumbing for the kineflow tool: exit codes, strict JSON readers
// that report the path of the first offending field, configuration layering
// and atomic file output.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kineflow/error.hpp"
#include "kineflow/flow_analysis.hpp"
#include "kineflow/numerics.hpp"

namespace kineflow::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* kSchema = "kineflow/1";

enum Exit : int { ok = 0, usage = 2, input = 3, domain = 4 };

struct Failure : std::runtime_error {
  int exit_code;
  Failure(int code, const std::string& what) : std::runtime_error(what), exit_code(code) {}
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage:
      return usage;
    case ErrorCode::invalid_input:
    case ErrorCode::schema:
    case ErrorCode::missing_data:
    case ErrorCode::invalid_dimension:
      return input;
    default:
      return domain;
  }
}

// ---------------------------------------------------------------------------
// Strict JSON access.

[[noreturn]] inline void schema_fail(const std::string& path, const std::string& what) {
  throw Failure(input, "schema violation at " + (path.empty() ? std::string("/") : path) + ": " + what);
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure(input, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw Failure(input, path.string() + " is empty");
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Failure(input, path.string() + ": invalid JSON: " + e.what());
  }
}

inline const json& member(const json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) schema_fail(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) schema_fail(path + "/" + key, "missing field");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) schema_fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_fail(path, "not finite");
  return v;
}

inline long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) schema_fail(path, "expected an integer");
  return j.get<long>();
}

inline Vec vector_of(const json& j, const std::string& path, Eigen::Index n = -1) {
  if (!j.is_array()) schema_fail(path, "expected an array");
  if (n >= 0 && static_cast<Eigen::Index>(j.size()) != n) schema_fail(path, "expected " + std::to_string(n) + " entries");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], path + "/" + std::to_string(i));
  return v;
}

inline Vec2 vec2(const json& j, const std::string& path) {
  const Vec v = vector_of(j, path, 2);
  return Vec2(v[0], v[1]);
}

inline Vec3 vec3(const json& j, const std::string& path) {
  const Vec v = vector_of(j, path, 3);
  return Vec3(v[0], v[1], v[2]);
}

inline Mat matrix_of(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) schema_fail(path, "expected a non-empty array of rows");
  const json& first = j[0];
  if (!first.is_array() || first.empty()) schema_fail(path + "/0", "expected a non-empty row");
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(first.size()));
  for (std::size_t r = 0; r < j.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = vector_of(j[r], path + "/" + std::to_string(r), m.cols());
  return m;
}

/// Requires "schema": "kineflow/<major>" with major 1.
inline void check_schema(const json& root) {
  const json& s = member(root, "", "schema");
  if (!s.is_string()) schema_fail("/schema", "expected a string");
  const std::string v = s.get<std::string>();
  const std::string prefix = "kineflow/";
  if (v.rfind(prefix, 0) != 0) schema_fail("/schema", "not a kineflow document");
  const std::string major = v.substr(prefix.size(), v.find('.', prefix.size()) - prefix.size());
  if (major != "1") schema_fail("/schema", "unsupported major version " + major);
}

inline json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}
inline json to_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vec(m.row(r).transpose())));
  return a;
}

// ---------------------------------------------------------------------------
// Flow field documents.

inline flow::FlowField read_flow(const std::filesystem::path& path) {
  const json root = read_json_file(path);
  check_schema(root);
  flow::FlowField field;
  field.t = static_cast<int>(integer(member(root, "", "t"), "/t"));
  const json& samples = member(root, "", "samples");
  if (!samples.is_array()) schema_fail("/samples", "expected an array");
  if (samples.empty()) schema_fail("/samples", "no samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string p = "/samples/" + std::to_string(i);
    flow::FlowSample s;
    s.x = vec2(member(samples[i], p, "x"), p + "/x");
    s.v = vec2(member(samples[i], p, "v"), p + "/v");
    if (samples[i].contains("w")) s.w = number(samples[i]["w"], p + "/w");
    field.samples.push_back(s);
  }
  try {
    field.validate();
  } catch (const Error& e) {
    schema_fail("/samples/" + std::to_string(e.index()), e.what());
  }
  return field;
}

inline json flow_to_json(const flow::FlowField& field, const json& config) {
  json samples = json::array();
  for (const auto& s : field.samples) samples.push_back(json{{"x", to_json(s.x)}, {"v", to_json(s.v)}, {"w", s.w}});
  return json{{"schema", kSchema}, {"t", field.t}, {"samples", std::move(samples)}, {"config", config}};
}

// ---------------------------------------------------------------------------
// Configuration: defaults < file < flags.

struct Config {
  int k = 2;
  double nsigma = 3.0;
  double speed_floor = 1e-3;
  double condition_threshold = 1e6;
  double epsilon = 0.0;
  double dt = 1e-3;
  long steps = 1000;
  std::uint64_t seed = 0;
  double rank_tolerance = 1e-9;
  double classify_tolerance = 1e-9;

  json to_json() const {
    return json{{"k", k},
                {"nsigma", nsigma},
                {"speed_floor", speed_floor},
                {"condition_threshold", condition_threshold},
                {"epsilon", epsilon},
                {"dt", dt},
                {"steps", steps},
                {"seed", seed},
                {"rank_tolerance", rank_tolerance},
                {"classify_tolerance", classify_tolerance}};
  }

  /// Returns the first invalid key, if any.
  std::optional<std::string> invalid_key() const {
    if (k < 1) return "k";
    if (!(nsigma > 0) || !std::isfinite(nsigma)) return "nsigma";
    if (!(speed_floor > 0) || !std::isfinite(speed_floor)) return "speed_floor";
    if (!(condition_threshold > 1) || !std::isfinite(condition_threshold)) return "condition_threshold";
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) return "epsilon";
    if (!(dt > 0) || !std::isfinite(dt)) return "dt";
    if (steps < 1) return "steps";
    if (!(rank_tolerance > 0) || !std::isfinite(rank_tolerance)) return "rank_tolerance";
    if (!(classify_tolerance > 0) || !std::isfinite(classify_tolerance)) return "classify_tolerance";
    return std::nullopt;
  }
};

inline void apply_config_json(Config& c, const json& j) {
  if (!j.is_object()) schema_fail("", "config must be an object");
  for (const auto& [key, value] : j.items()) {
    const std::string p = "/" + key;
    if (key == "schema") {
      check_schema(j);
    } else if (key == "k") {
      c.k = static_cast<int>(integer(value, p));
    } else if (key == "nsigma") {
      c.nsigma = number(value, p);
    } else if (key == "speed_floor") {
      c.speed_floor = number(value, p);
    } else if (key == "condition_threshold") {
      c.condition_threshold = number(value, p);
    } else if (key == "epsilon") {
      c.epsilon = number(value, p);
    } else if (key == "dt") {
      c.dt = number(value, p);
    } else if (key == "steps") {
      c.steps = integer(value, p);
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) schema_fail(p, "expected a non-negative integer");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "rank_tolerance") {
      c.rank_tolerance = number(value, p);
    } else if (key == "classify_tolerance") {
      c.classify_tolerance = number(value, p);
    } else {
      schema_fail(p, "unknown config key");
    }
  }
}

struct ConfigFlags {
  std::string path;
  std::optional<int> k;
  std::optional<double> nsigma, speed_floor, condition_threshold, epsilon, dt;
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  std::optional<double> rank_tolerance, classify_tolerance;

  void attach(CLI::App& app) {
    app.add_option("--config", path, "JSON config file (default: $KINEFLOW_CONFIG)");
    app.add_option("--k", k, "number of kinematic clusters");
    app.add_option("--nsigma", nsigma, "outlier threshold in residual RMS units");
    app.add_option("--speed-floor", speed_floor, "background speed floor (px/frame)");
    app.add_option("--condition-threshold", condition_threshold, "parallel-pencil switch");
    app.add_option("--epsilon", epsilon, "Plummer softening (px)");
    app.add_option("--dt", dt, "integration step");
    app.add_option("--steps", steps, "integration steps");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--rank-tolerance", rank_tolerance, "relative eigenvalue rank tolerance");
    app.add_option("--classify-tolerance", classify_tolerance, "pencil classification tolerance");
  }

  bool explicit_dt() const { return dt.has_value(); }
  bool explicit_steps() const { return steps.has_value(); }

  Config resolve() const {
    Config c;
    std::string file = path;
    if (file.empty())
      if (const char* env = std::getenv("KINEFLOW_CONFIG"); env && *env) file = env;
    if (!file.empty()) {
      try {
        apply_config_json(c, read_json_file(file));
      } catch (const Failure& f) {
        throw Failure(input, "config " + file + ": " + f.what());
      }
      if (auto bad = c.invalid_key()) throw Failure(input, "config " + file + ": invalid value for '" + *bad + "'");
    }
    if (k) c.k = *k;
    if (nsigma) c.nsigma = *nsigma;
    if (speed_floor) c.speed_floor = *speed_floor;
    if (condition_threshold) c.condition_threshold = *condition_threshold;
    if (epsilon) c.epsilon = *epsilon;
    if (dt) c.dt = *dt;
    if (steps) c.steps = *steps;
    if (seed) c.seed = *seed;
    if (rank_tolerance) c.rank_tolerance = *rank_tolerance;
    if (classify_tolerance) c.classify_tolerance = *classify_tolerance;
    if (auto bad = c.invalid_key()) throw Failure(usage, "invalid value for --" + *bad);
    return c;
  }
};

// ---------------------------------------------------------------------------
// Output.

/// Writes via a temporary sibling and rename so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Failure(input, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Failure(input, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace kineflow::cli
