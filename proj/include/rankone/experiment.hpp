#pragma once

// Declarative experiment runner: one JSON spec in, CSV/JSON artifacts out.
// run() is pure; write_artifacts() does the file IO.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankone/construction.hpp"
#include "rankone/errors.hpp"
#include "rankone/estimators.hpp"
#include "rankone/family.hpp"
#include "rankone/joinings.hpp"
#include "rankone/operators.hpp"
#include "rankone/parallel.hpp"
#include "rankone/presets.hpp"
#include "rankone/symbolic.hpp"

#ifndef RANKONE_VERSION
#define RANKONE_VERSION "0.0.0"
#endif

namespace rankone {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = RANKONE_VERSION;
inline constexpr std::uint64_t kDefaultSeed = 1;
inline constexpr std::size_t kMaxNameSymbols = std::size_t{1} << 22;

struct RunOptions {
  std::optional<std::uint64_t> seed;       ///< overrides the spec's "seed"
  std::optional<std::string> k_policy;     ///< overrides the spec's "k_policy"
  unsigned threads = 1;
};

struct Artifact {
  std::string name;
  std::string content;
};

struct RunResult {
  std::vector<Artifact> artifacts;
  std::string summary;
};

// ---------------------------------------------------------------------------
// Spec reading

namespace spec {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorClass::kConfig, (path.empty() ? std::string("spec") : path) + ": " + what);
}

/// Typed access to one JSON object; finish() rejects keys never read.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_->contains(key); }

  const Json& raw(const std::string& key) const {
    used_.insert(key);
    if (!j_->contains(key)) fail(at(key), "missing");
    return (*j_)[key];
  }

  template <class T>
  T get(const std::string& key) const {
    return convert<T>(raw(key), at(key));
  }

  template <class T>
  T get(const std::string& key, T fallback) const {
    used_.insert(key);
    return has(key) ? convert<T>((*j_)[key], at(key)) : fallback;
  }

  Reader child(const std::string& key) const { return Reader(raw(key), at(key)); }

  std::string at(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [k, v] : j_->items()) {
      if (!used_.count(k)) fail(at(k), "unknown key");
    }
  }

  template <class T>
  static T convert(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<std::int64_t>() < 0) fail(path, "expected a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(path, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, "expected a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported spec field type");
    }
  }

 private:
  const Json* j_;
  std::string path_;
  mutable std::set<std::string> used_;
};

template <class T>
std::vector<T> list(const Json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(Reader::convert<T>(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

/// Integer, decimal number or "p/q" string.
inline Rational rational(const Json& v, const std::string& path) {
  if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
  if (v.is_number()) return Rational(v.get<double>());
  if (v.is_string()) {
    try {
      return Rational(v.get<std::string>());
    } catch (const std::exception&) {
      fail(path, "not a rational: " + v.get<std::string>());
    }
  }
  fail(path, "expected a number or \"p/q\" string");
}

}  // namespace spec

// ---------------------------------------------------------------------------
// Constructions

struct ResolvedConstruction {
  Construction construction;
  Json config;
};

namespace detail {

inline SpacerPlan spacer_plan(const spec::Reader& r, std::uint64_t seed, Json& cfg) {
  const std::string kind = r.get<std::string>("kind");
  cfg["kind"] = kind;
  if (kind == "flat") {
    const auto v = r.get<std::int64_t>("value", 0);
    cfg["value"] = v;
    return Flat{v};
  }
  if (kind == "pattern") {
    auto v = spec::list<std::int64_t>(r.raw("values"), r.at("values"));
    cfg["values"] = v;
    return Pattern{std::move(v)};
  }
  if (kind == "stochastic") {
    const auto b = r.get<std::int64_t>("bound", 1);
    const auto s = r.get<std::uint64_t>("seed", seed);
    cfg["bound"] = b;
    cfg["seed"] = s;
    return Stochastic{b, s};
  }
  if (kind == "katok") {
    const auto q = r.get<std::int64_t>("q");
    const auto b = r.get<std::int64_t>("bound", 1);
    const auto s = r.get<std::uint64_t>("seed", seed);
    cfg["q"] = q;
    cfg["bound"] = b;
    cfg["seed"] = s;
    return KatokMixed{q, b, s};
  }
  if (kind == "flat_then_stochastic") {
    const auto f = r.get<std::int64_t>("flat_columns");
    const auto v = r.get<std::int64_t>("flat_value", 1);
    const auto b = r.get<std::int64_t>("bound", 1);
    const auto s = r.get<std::uint64_t>("seed", seed);
    cfg["flat_columns"] = f;
    cfg["flat_value"] = v;
    cfg["bound"] = b;
    cfg["seed"] = s;
    return FlatThenStochastic{f, v, b, s};
  }
  spec::fail(r.at("kind"), "unknown spacer kind '" + kind + "'");
}

inline ResolvedConstruction resolve(const Json& node, const std::string& path,
                                    const Json& library, std::uint64_t seed, int depth);

inline ResolvedConstruction resolve_object(const spec::Reader& r, const Json& library,
                                           std::uint64_t seed, int depth) {
  const std::string preset = r.get<std::string>("preset");
  Json cfg;
  cfg["preset"] = preset;
  RealizeOptions ro;
  if (r.has("height_guard")) {
    const Json& g = r.raw("height_guard");
    if (g.is_number_unsigned() || g.is_number_integer()) {
      ro.height_guard = BigInt(g.get<std::int64_t>());
    } else if (g.is_string()) {
      try {
        ro.height_guard = BigInt(g.get<std::string>());
      } catch (const std::exception&) {
        spec::fail(r.at("height_guard"), "not an integer");
      }
    } else {
      spec::fail(r.at("height_guard"), "expected an integer");
    }
    cfg["height_guard"] = ro.height_guard->str();
  }

  auto done = [&](const ConstructionParams& p) {
    r.finish();
    return ResolvedConstruction{realize(p, ro), cfg};
  };

  if (preset == "paired") {
    if (depth > 0) spec::fail(r.path(), "paired constructions do not nest");
    auto base = resolve(r.raw("base"), r.at("base"), library, seed, depth + 1);
    const auto delta = r.get<std::int64_t>("delta", 0);
    cfg["base"] = base.config;
    cfg["delta"] = delta;
    r.finish();
    return ResolvedConstruction{
        pair_with_offset_one(base.construction,
                             presets::paired_cuts(base.construction, delta), ro),
        cfg};
  }
  if (preset == "custom") {
    ConstructionParams p;
    p.initial_height = r.get<std::int64_t>("initial_height", 1);
    cfg["initial_height"] = p.initial_height;
    const Json& st = r.raw("stages");
    if (!st.is_array()) spec::fail(r.at("stages"), "expected an array of stage plans");
    cfg["stages"] = Json::array();
    for (std::size_t i = 0; i < st.size(); ++i) {
      const spec::Reader sr(st[i], r.at("stages") + "[" + std::to_string(i) + "]");
      Json sc;
      StagePlan plan;
      plan.cuts = sr.get<std::int64_t>("cuts");
      sc["cuts"] = plan.cuts;
      Json spc;
      plan.spacers = spacer_plan(sr.child("spacers"), seed, spc);
      sc["spacers"] = spc;
      const auto repeat = sr.get<std::size_t>("repeat", 1);
      sc["repeat"] = repeat;
      sr.finish();
      for (std::size_t k = 0; k < repeat; ++k) p.stages.push_back(plan);
      cfg["stages"].push_back(sc);
    }
    p.max_stage = p.stages.size();
    return done(p);
  }

  const auto stages = r.get<std::size_t>("stages");
  cfg["stages"] = stages;
  if (preset == "odometer") {
    const auto cuts = r.get<std::int64_t>("cuts", 2);
    cfg["cuts"] = cuts;
    return done(presets::odometer(stages, cuts));
  }
  if (preset == "chacon") return done(presets::chacon(stages));
  if (preset == "ornstein") {
    presets::OrnsteinOptions o;
    o.cuts = r.get("cuts", o.cuts);
    o.epsilon = r.get("epsilon", o.epsilon);
    o.flat_value = r.get("flat_value", o.flat_value);
    o.bound = r.get("bound", o.bound);
    o.seed = r.get("seed", seed);
    cfg.update(Json{{"cuts", o.cuts}, {"epsilon", o.epsilon}, {"flat_value", o.flat_value},
                    {"bound", o.bound}, {"seed", o.seed}});
    return done(presets::ornstein(stages, o));
  }
  if (preset == "katok") {
    presets::KatokOptions o;
    o.q = r.get("q", o.q);
    o.q_factor = r.get("q_factor", o.q_factor);
    o.bound = r.get("bound", o.bound);
    o.seed = r.get("seed", seed);
    o.max_q = r.get("max_q", o.max_q);
    cfg.update(Json{{"q", o.q}, {"q_factor", o.q_factor}, {"bound", o.bound},
                    {"seed", o.seed}, {"max_q", o.max_q}});
    return done(presets::katok(stages, o));
  }
  if (preset == "cubic") {
    presets::CubicOptions o;
    o.epsilon = r.get("epsilon", o.epsilon);
    o.flat_value = r.get("flat_value", o.flat_value);
    o.bound = r.get("bound", o.bound);
    o.seed = r.get("seed", seed);
    o.factor = r.get("factor", o.factor);
    o.min_cuts = r.get("min_cuts", o.min_cuts);
    o.max_columns = r.get("max_columns", o.max_columns);
    cfg.update(Json{{"epsilon", o.epsilon}, {"flat_value", o.flat_value}, {"bound", o.bound},
                    {"seed", o.seed}, {"factor", o.factor}, {"min_cuts", o.min_cuts},
                    {"max_columns", o.max_columns}});
    return done(presets::cubic_regime(stages, o));
  }
  spec::fail(r.at("preset"), "unknown preset '" + preset + "'");
}

/// A construction is an inline object or the name of an entry in the
/// spec's "constructions" table.
inline ResolvedConstruction resolve(const Json& node, const std::string& path,
                                    const Json& library, std::uint64_t seed, int depth) {
  if (node.is_string()) {
    const auto name = node.get<std::string>();
    if (!library.is_object() || !library.contains(name)) {
      spec::fail(path, "unknown construction '" + name + "'");
    }
    auto out = resolve_object(spec::Reader(library[name], "constructions." + name), library,
                              seed, depth);
    out.config = Json{{"name", name}, {"definition", out.config}};
    return out;
  }
  return resolve_object(spec::Reader(node, path), library, seed, depth);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Top-stage policy

struct KPolicy {
  enum class Mode { kAuto, kMax, kFixed } mode = Mode::kAuto;
  std::size_t fixed = 0;

  static KPolicy parse(const std::string& s, const std::string& path) {
    if (s == "auto") return {};
    if (s == "max") return {Mode::kMax, 0};
    if (s.rfind("fixed:", 0) == 0) {
      try {
        std::size_t used = 0;
        const auto v = std::stoull(s.substr(6), &used);
        if (used == s.size() - 6) return {Mode::kFixed, static_cast<std::size_t>(v)};
      } catch (const std::exception&) {
      }
    }
    spec::fail(path, "k_policy must be auto, max or fixed:<K>, got '" + s + "'");
  }

  std::string str() const {
    switch (mode) {
      case Mode::kAuto: return "auto";
      case Mode::kMax: return "max";
      case Mode::kFixed: return "fixed:" + std::to_string(fixed);
    }
    return "auto";
  }

  /// K for base stage j and shift n; `automatic` is the policy-free default.
  std::size_t top(const Construction& c, std::size_t automatic) const {
    switch (mode) {
      case Mode::kAuto: return automatic;
      case Mode::kMax: return c.max_stage();
      case Mode::kFixed: return fixed;
    }
    return automatic;
  }

  std::optional<std::size_t> scan_top(const Construction& c) const {
    if (mode == Mode::kAuto) return std::nullopt;
    return top(c, 0);
  }
};

// ---------------------------------------------------------------------------
// Rendering

namespace render {

inline Json rational(const Rational& r) { return to_string(r); }

inline Json estimate(const EstimateReport& e) {
  Json j;
  j["quantity"] = e.quantity;
  j["value"] = e.value();
  j["exact"] = to_string(e.exact);
  j["raw"] = to_double(e.raw);
  j["raw_exact"] = to_string(e.raw);
  j["degenerate"] = e.degenerate;
  j["witness_time"] = e.witness_time ? Json(*e.witness_time) : Json(nullptr);
  j["scan_range"] = e.scan_range;
  j["family"] = e.family;
  j["caveat"] = e.caveat;
  return j;
}

inline Json mild(const MildMixingReport& m, const TestFamily& fam) {
  Json j;
  j["threshold"] = m.threshold;
  j["scan_range"] = m.scan_range;
  j["family"] = m.family;
  j["caveat"] = m.caveat;
  j["flagged"] = m.flagged();
  j["entries"] = Json::array();
  for (const auto& e : m.entries) {
    Json row;
    row["set"] = e.set;
    if (e.set < fam.sets.size()) row["levels"] = fam.sets[e.set].indices;
    row["sup"] = to_double(e.sup);
    row["sup_exact"] = to_string(e.sup);
    row["time"] = e.time;
    row["rigid_suspect"] = e.rigid_suspect;
    j["entries"].push_back(row);
  }
  return j;
}

inline Json joining(const Joining& v) {
  Json j;
  j["formula"] = to_string(v);
  Json d = Json::object();
  for (const auto& [z, w] : v.diag) d[std::to_string(z)] = to_string(w);
  j["diag"] = d;
  j["product"] = to_string(v.product);
  j["relative_product"] = v.relative_product;
  return j;
}

inline Json strip(const StripReport& s) {
  return Json{{"epsilon", s.epsilon},
              {"stage", s.stage},
              {"top_stage", s.top_stage},
              {"half_width", s.half_width},
              {"eta_d", to_double(s.eta_d)},
              {"eta_d_exact", to_string(s.eta_d)},
              {"eta_d_error_bound", to_double(s.eta_d_error)},
              {"beta_hat", to_double(s.beta_hat)},
              {"bound", to_double(s.bound)},
              {"bound_exact", to_string(s.bound)},
              {"margin", to_double(s.margin)},
              {"pass", s.pass},
              {"eta_u", to_double(s.eta_u)},
              {"eta_u_error_bound", to_double(s.eta_u_error)},
              {"mu_u_squared", to_double(s.mu_u_squared)},
              {"u_pass", s.u_pass}};
}

inline Json component(const ComponentReport& c) {
  Json w = Json::object();
  for (const auto& [k, a] : c.column_weights) w[std::to_string(k)] = a;
  return Json{{"epsilon", c.epsilon},
              {"stage", c.stage},
              {"family_stage", c.family_stage},
              {"top_stage", c.top_stage},
              {"half_width", c.half_width},
              {"eta_d", to_double(c.eta_d)},
              {"eta_d_exact", to_string(c.eta_d)},
              {"column_weights", w},
              {"product_weight", c.product_weight},
              {"component", c.component},
              {"alpha_hat", c.alpha_hat},
              {"beta_hat", c.beta_hat},
              {"bound", c.bound},
              {"holds", c.component >= c.bound}};
}

inline std::string csv_header(const Json& header) {
  return "# rankone " + header["version"].get<std::string>() + "\n# command: " +
         header["command"].get<std::string>() + "\n# config: " + header["config"].dump() + "\n";
}

inline std::string json_artifact(const Json& header, const Json& body) {
  Json doc;
  doc["header"] = header;
  for (const auto& [k, v] : body.items()) doc[k] = v;
  return doc.dump(2) + "\n";
}

}  // namespace render

// ---------------------------------------------------------------------------
// Runner

namespace detail {

inline const std::map<std::string, std::string>& command_aliases() {
  static const std::map<std::string, std::string> m{
      {"realize", "realize"},       {"name", "name"},
      {"correlate", "correlate"},   {"scan", "scan"},
      {"scan-weak-limits", "scan"}, {"estimate", "estimate"},
      {"audit", "audit"},           {"joining-audit", "audit"},
      {"product", "product"},       {"product-tower", "product"}};
  return m;
}

struct Context {
  const Json* library = nullptr;
  std::uint64_t seed = kDefaultSeed;
  KPolicy k;
  unsigned threads = 1;
};

inline LevelSet level_set(const spec::Reader& r, Json& cfg) {
  const auto stage = r.get<std::size_t>("stage");
  const bool has_levels = r.has("levels"), has_range = r.has("range");
  if (has_levels == has_range) spec::fail(r.path(), "give exactly one of levels or range");
  LevelSet s;
  if (has_levels) {
    s = LevelSet::of(stage, spec::list<std::int64_t>(r.raw("levels"), r.at("levels")));
  } else {
    const auto lr = spec::list<std::int64_t>(r.raw("range"), r.at("range"));
    if (lr.size() != 2 || lr[0] > lr[1]) spec::fail(r.at("range"), "expected [lo, hi)");
    s = LevelSet::range(stage, lr[0], lr[1]);
  }
  r.finish();
  cfg = Json{{"stage", stage}, {"levels", s.indices}};
  return s;
}

inline TestFamily family(const Construction& c, const spec::Reader& r, Json& cfg) {
  const auto stage = r.get<std::size_t>("stage");
  c.check_stage(stage);
  TestFamily fam;
  if (r.has("sets")) {
    const Json& sets = r.raw("sets");
    if (!sets.is_array()) spec::fail(r.at("sets"), "expected an array of level lists");
    fam.stage = stage;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      fam.sets.push_back(LevelSet::of(
          stage, spec::list<std::int64_t>(sets[i], r.at("sets") + "[" + std::to_string(i) + "]")));
    }
    fam.descriptor = "explicit(stage=" + std::to_string(stage) + ",sets=" +
                     std::to_string(fam.sets.size()) + ")";
    cfg = Json{{"stage", stage}, {"sets", sets}};
  } else {
    const auto cap = r.get<std::size_t>("cap", 64);
    fam = default_family(c, stage, cap);
    cfg = Json{{"stage", stage}, {"cap", cap}};
  }
  r.finish();
  check_family(c, fam);
  return fam;
}

/// Explicit list, {"from","to","step"} range, or {"random","from_stage","to_stage"}.
inline std::vector<std::int64_t> times(const Construction& c, const Json& node,
                                       const std::string& path, std::uint64_t seed, Json& cfg) {
  std::vector<std::int64_t> out;
  if (node.is_array()) {
    out = spec::list<std::int64_t>(node, path);
    cfg = node;
  } else {
    const spec::Reader r(node, path);
    if (r.has("random")) {
      const auto count = r.get<std::size_t>("random");
      const auto lo_stage = r.get<std::size_t>("from_stage");
      const auto hi_stage = r.get<std::size_t>("to_stage");
      const auto s = r.get<std::uint64_t>("seed", seed);
      c.check_stage(hi_stage);
      if (lo_stage >= hi_stage) spec::fail(path, "from_stage must be below to_stage");
      const auto lo = c.height_i64(lo_stage);
      const auto span = static_cast<std::uint64_t>(c.height_i64(hi_stage) - lo);
      std::mt19937_64 rng(s);
      for (std::size_t i = 0; i < count; ++i) {
        out.push_back(lo + static_cast<std::int64_t>(rng() % span));
      }
      cfg = Json{{"random", count}, {"from_stage", lo_stage}, {"to_stage", hi_stage},
                 {"seed", s}};
    } else {
      const auto from = r.get<std::int64_t>("from");
      const auto to = r.get<std::int64_t>("to");
      const auto step = r.get<std::int64_t>("step", 1);
      if (step < 1) spec::fail(r.at("step"), "step must be positive");
      if (to < from) spec::fail(path, "empty range");
      for (std::int64_t n = from; n <= to; n += step) out.push_back(n);
      cfg = Json{{"from", from}, {"to", to}, {"step", step}};
    }
    r.finish();
  }
  if (out.empty()) throw Error(ErrorClass::kEmptyRange, path + ": no times");
  return out;
}

inline Joining joining(const Json& node, const std::string& path) {
  const spec::Reader r(node, path);
  Joining v;
  if (r.has("diag")) {
    const Json& d = r.raw("diag");
    if (!d.is_object()) spec::fail(r.at("diag"), "expected {shift: weight}");
    for (const auto& [k, w] : d.items()) {
      std::int64_t z = 0;
      try {
        std::size_t used = 0;
        z = std::stoll(k, &used);
        if (used != k.size()) throw std::invalid_argument(k);
      } catch (const std::exception&) {
        spec::fail(r.at("diag"), "shift '" + k + "' is not an integer");
      }
      v.diag[z] += spec::rational(w, r.at("diag") + "." + k);
    }
  }
  if (r.has("product")) v.product = spec::rational(r.raw("product"), r.at("product"));
  r.finish();
  try {
    return normalized(std::move(v));
  } catch (const Error& e) {
    spec::fail(path, e.what());
  }
}

/// Largest stage below J_max whose Markov matrix fits.
inline std::size_t default_working_stage(const Construction& c) {
  std::size_t j = 0;
  for (std::size_t i = 0; i < c.max_stage(); ++i) {
    if (c.height(i) <= kMaxMatrixLevels) j = i;
  }
  return j;
}

inline std::string correlation_row(std::int64_t n, const Correlation& r) {
  return std::to_string(n) + "," + decimal(r.value) + "," + decimal(r.error_bound) + "," +
         std::to_string(r.top_stage) + "," + to_string(r.value) + "," +
         to_string(r.error_bound) + "\n";
}

struct Output {
  std::vector<Artifact> artifacts;
  std::ostringstream summary;
};

inline void run_realize(const Construction& c, const spec::Reader& p, const Json& header,
                        Output& out) {
  p.finish();
  std::string csv = render::csv_header(header);
  csv += "j,cuts,spacer_total,height,level_measure,coverage,level_measure_exact,coverage_exact\n";
  for (std::size_t j = 0; j <= c.max_stage(); ++j) {
    const bool planned = j < c.max_stage();
    csv += std::to_string(j) + "," + (planned ? std::to_string(c.cuts(j)) : "") + "," +
           (planned ? c.spacer_total(j).str() : "") + "," + c.height(j).str() + "," +
           decimal(c.level_measure(j)) + "," + decimal(c.coverage(j)) + "," +
           to_string(c.level_measure(j)) + "," + to_string(c.coverage(j)) + "\n";
  }
  out.artifacts.push_back({"realize.csv", csv});
  out.summary << "stages: " << c.max_stage() << "\nh_J: " << c.height(c.max_stage()).str()
              << "\n";
}

inline void run_name(const Construction& c, const spec::Reader& p, const Context& ctx,
                     Json& params, Output& out, const std::function<Json()>& header) {
  const auto j = p.get<std::size_t>("stage");
  c.check_stage(j);
  const auto K = p.has("top_stage") ? p.get<std::size_t>("top_stage")
                                    : ctx.k.top(c, std::min(j + 1, c.max_stage()));
  p.finish();
  params = Json{{"stage", j}, {"top_stage", K}};
  const auto nm = materialize_tower_name(c, j, K, static_cast<std::int64_t>(kMaxNameSymbols));
  Json body;
  body["base_stage"] = nm.base_stage;
  body["top_stage"] = nm.top_stage;
  body["length"] = nm.symbols.size();
  body["spacer_symbol"] = kSpacer;
  body["symbols"] = nm.symbols;
  out.artifacts.push_back({"name.json", render::json_artifact(header(), body)});
  out.summary << "name: stage " << j << " in stage " << K << ", " << nm.symbols.size()
              << " symbols\n";
}

inline void run_correlate(const Correlator& cor, const spec::Reader& p, const Context& ctx,
                          Json& params, Output& out, const std::function<Json()>& header) {
  const Construction& c = cor.construction();
  Json a_cfg, b_cfg, t_cfg;
  const LevelSet A = level_set(p.child("A"), a_cfg);
  const LevelSet B = level_set(p.child("B"), b_cfg);
  const auto ts = times(c, p.raw("times"), p.at("times"), ctx.seed, t_cfg);
  p.finish();
  params = Json{{"A", a_cfg}, {"B", b_cfg}, {"times", t_cfg}};
  const auto rows = parallel_map(ts.size(), ctx.threads, [&](std::size_t i) {
    const auto n = ts[i];
    return cor.correlation(A, B, n, ctx.k.top(c, default_top_stage(c, A.stage, n)));
  });
  std::string csv = render::csv_header(header());
  csv += "n,value,error_bound,K,value_exact,error_bound_exact\n";
  for (std::size_t i = 0; i < ts.size(); ++i) csv += correlation_row(ts[i], rows[i]);
  out.artifacts.push_back({"correlate.csv", csv});
  out.summary << "correlate: " << ts.size() << " rows\n";
}

inline void run_scan(const Correlator& cor, const spec::Reader& p, const Context& ctx,
                     Json& params, Output& out, const std::function<Json()>& header) {
  const Construction& c = cor.construction();
  const auto j = p.get<std::size_t>("stage", default_working_stage(c));
  const auto Z = p.get<std::int64_t>("Z", 2);
  Json t_cfg;
  const auto ts = times(c, p.raw("times"), p.at("times"), ctx.seed, t_cfg);
  p.finish();
  params = Json{{"stage", j}, {"Z", Z}, {"times", t_cfg}};
  const auto scan = weak_limit_scan(cor, j, ts, Z, ctx.k.scan_top(c), ctx.threads);
  const Json h = header();

  std::string csv = render::csv_header(h);
  csv += "n,K";
  for (const auto& l : scan.reports.front().labels) csv += ",c_" + l;
  csv += ",residual\n";
  for (const auto& r : scan.reports) {
    csv += std::to_string(r.time) + "," + std::to_string(r.top_stage);
    for (double x : r.coefficients) csv += "," + decimal(x);
    csv += "," + decimal(r.residual_norm) + "\n";
  }
  out.artifacts.push_back({"scan.csv", csv});

  double max_residual = 0.0;
  for (const auto& r : scan.reports) max_residual = std::max(max_residual, r.residual_norm);
  Json body{{"rigidity_time", scan.rigidity_time},
            {"rigidity_coefficient", scan.rigidity_coefficient},
            {"mixing_floor", scan.mixing_floor},
            {"max_residual", max_residual},
            {"times", ts.size()}};
  out.artifacts.push_back({"scan.json", render::json_artifact(h, body)});
  out.summary << "scan: " << ts.size() << " times, max I coefficient "
              << decimal(scan.rigidity_coefficient) << " at n=" << scan.rigidity_time
              << ", min Theta coefficient " << decimal(scan.mixing_floor) << "\n";
}

inline void run_estimate(const Correlator& cor, const spec::Reader& p, const Context& ctx,
                         Json& params, Output& out, const std::function<Json()>& header) {
  const Construction& c = cor.construction();
  const auto q = p.get<std::string>("quantity");
  params["quantity"] = q;
  Json body;
  ScanOptions so;
  so.top_stage = ctx.k.scan_top(c);
  so.threads = ctx.threads;

  if (q == "beta") {
    const auto form = p.get<std::string>("form", "tower");
    std::vector<std::size_t> stages;
    if (p.has("stages")) {
      stages = spec::list<std::size_t>(p.raw("stages"), p.at("stages"));
    } else {
      const std::size_t last = form == "tower" ? c.max_stage() : c.max_stage() - 1;
      for (std::size_t j = 0; j <= last && c.max_stage() > 0; ++j) stages.push_back(j);
      if (form == "tower" && c.max_stage() == 0) stages.push_back(0);
    }
    p.finish();
    params["form"] = form;
    params["stages"] = stages;
    body["reports"] = Json::array();
    for (auto j : stages) {
      EstimateReport e;
      if (form == "tower") {
        e = beta_lower_bound(c, j);
      } else if (form == "flat-part") {
        e = flat_part_coverage(c, j);
      } else if (form == "tensor-square") {
        e = tensor_square_block_coverage(c, j);
      } else {
        spec::fail(p.at("form"), "form must be tower, flat-part or tensor-square");
      }
      Json r = render::estimate(e);
      r["stage"] = j;
      body["reports"].push_back(r);
      out.summary << "beta[" << form << "] stage " << j << ": " << decimal(e.exact) << "\n";
    }
    out.artifacts.push_back({"estimate.json", render::json_artifact(header(), body)});
    return;
  }

  Json f_cfg, t_cfg;
  const TestFamily fam = family(c, p.child("family"), f_cfg);
  const auto ts = times(c, p.raw("times"), p.at("times"), ctx.seed, t_cfg);
  params["family"] = f_cfg;
  params["times"] = t_cfg;
  if (q == "alpha" || q == "rho") {
    p.finish();
    const auto e = q == "alpha" ? estimate_alpha(cor, fam, ts, so) : estimate_rho(cor, fam, ts, so);
    body["report"] = render::estimate(e);
    out.summary << q << ": " << decimal(e.exact) << " (" << e.caveat << ")\n";
  } else if (q == "mild") {
    const auto threshold = p.get<double>("threshold", kDefaultMildThreshold);
    p.finish();
    params["threshold"] = threshold;
    const auto m = mild_mixing_audit(cor, fam, ts, threshold, so);
    body["report"] = render::mild(m, fam);
    out.summary << "mild: " << m.flagged() << " of " << m.entries.size()
                << " sets flagged as rigid suspects\n";
  } else {
    spec::fail(p.at("quantity"), "quantity must be alpha, beta, rho or mild");
  }
  out.artifacts.push_back({"estimate.json", render::json_artifact(header(), body)});
}

inline void run_audit(const Correlator& cor, const spec::Reader& p, const Context& ctx,
                      Json& params, Output& out, const std::function<Json()>& header) {
  const Construction& c = cor.construction();
  const auto kind = p.get<std::string>("kind");
  if (kind != "strip" && kind != "component" && kind != "relative-product") {
    spec::fail(p.at("kind"), "kind must be strip, component or relative-product");
  }
  const auto j = p.get<std::size_t>("stage", default_working_stage(c));
  c.check_stage(j);
  const std::vector<double> epsilons =
      p.has("epsilons") ? spec::list<double>(p.raw("epsilons"), p.at("epsilons"))
                        : std::vector<double>{0.05, 0.1, 0.2, 0.4};
  for (double e : epsilons) {
    if (!(e > 0.0 && e <= 1.0)) spec::fail(p.at("epsilons"), "epsilon must lie in (0, 1]");
  }
  const Json& js = p.raw("joinings");
  if (!js.is_array() || js.empty()) spec::fail(p.at("joinings"), "expected a non-empty array");
  std::vector<std::pair<Joining, Joining>> pairs;
  for (std::size_t i = 0; i < js.size(); ++i) {
    const std::string path = p.at("joinings") + "[" + std::to_string(i) + "]";
    const spec::Reader jr(js[i], path);
    Joining nu = joining(jr.raw("nu"), jr.at("nu"));
    Joining nu2 = jr.has("nu_prime") ? joining(jr.raw("nu_prime"), jr.at("nu_prime")) : nu;
    jr.finish();
    pairs.emplace_back(std::move(nu), std::move(nu2));
  }
  ComponentOptions co;
  if (p.has("alpha")) co.alpha = p.get<double>("alpha");
  if (p.has("family_stage")) co.family_stage = p.get<std::size_t>("family_stage");
  co.family_cap = p.get("family_cap", co.family_cap);
  const auto Z = p.get<std::int64_t>("Z", 20);
  p.finish();
  params = Json{{"kind", kind}, {"stage", j}, {"epsilons", epsilons}, {"joinings", js}};
  if (kind == "component") {
    params["alpha"] = co.alpha ? Json(*co.alpha) : Json(nullptr);
    params["family_stage"] = co.family_stage ? Json(*co.family_stage) : Json(nullptr);
    params["family_cap"] = co.family_cap;
  }
  if (kind == "relative-product") params["Z"] = Z;

  Json rows = Json::array();
  std::size_t passed = 0, total = 0;
  for (const auto& [nu, nu2] : pairs) {
    const Joining eta = relative_product(nu, nu2);
    Json row{{"nu", render::joining(nu)}, {"nu_prime", render::joining(nu2)},
             {"eta", render::joining(eta)}};
    if (kind == "relative-product") {
      row["diagonal_component"] = to_string(diagonal_component(eta));
      const auto z = equivalent(eta, nu, Z);
      row["shift_equivalent_to_nu"] = z ? Json(*z) : Json(nullptr);
      out.summary << to_string(eta) << "\n";
    } else {
      row["epsilons"] = Json::array();
      for (double e : epsilons) {
        if (kind == "strip") {
          const auto K = ctx.k.top(c, strip_top_stage(c, j, eta, e));
          const auto s = strip_audit(cor, eta, j, e, K);
          row["epsilons"].push_back(render::strip(s));
          passed += s.pass;
        } else {
          const auto K = ctx.k.top(c, strip_top_stage(c, j, nu, e));
          const auto r = mu2_component_audit(cor, nu, j, e, K, co);
          row["epsilons"].push_back(render::component(r));
          passed += r.component >= r.bound;
        }
        ++total;
      }
    }
    rows.push_back(row);
  }
  Json body{{"kind", kind}, {"results", rows}};
  if (kind != "relative-product") {
    body["passed"] = passed;
    body["checked"] = total;
    out.summary << kind << ": " << passed << " of " << total << " checks pass\n";
  }
  out.artifacts.push_back({"audit.json", render::json_artifact(header(), body)});
}

inline void run_product(const std::vector<const Correlator*>& cors, const spec::Reader& p,
                        const Context& ctx, Json& params, Output& out,
                        const std::function<Json()>& header) {
  const std::size_t m = cors.size();
  Json body;
  bool any = false;
  ScanOptions so;
  so.threads = ctx.threads;

  if (p.has("tower_stages")) {
    any = true;
    if (m != 2) spec::fail(p.at("tower_stages"), "product towers need exactly two factors");
    const auto stages = spec::list<std::size_t>(p.raw("tower_stages"), p.at("tower_stages"));
    params["tower_stages"] = stages;
    body["towers"] = Json::array();
    for (auto j : stages) {
      const auto t = product_beta_tower(cors[0]->construction(), cors[1]->construction(), j);
      body["towers"].push_back(Json{{"stage", j},
                                    {"height", t.height},
                                    {"disjoint", t.disjoint},
                                    {"first_collision", t.first_collision},
                                    {"coverage", render::estimate(t.coverage)}});
      out.summary << "tower stage " << j << ": height " << t.height
                  << (t.disjoint ? ", disjoint" : ", collision") << ", coverage "
                  << decimal(t.coverage.exact) << "\n";
    }
  }

  auto families = [&](const spec::Reader& r, Json& cfg) {
    const Json& f = r.raw("families");
    if (!f.is_array() || f.size() != m) spec::fail(r.at("families"), "one family per factor");
    std::vector<TestFamily> out_f;
    cfg = Json::array();
    for (std::size_t i = 0; i < m; ++i) {
      Json fc;
      out_f.push_back(family(cors[i]->construction(),
                             spec::Reader(f[i], r.at("families") + "[" + std::to_string(i) + "]"),
                             fc));
      cfg.push_back(fc);
    }
    return out_f;
  };

  if (p.has("correlation")) {
    any = true;
    const auto r = p.child("correlation");
    const Json& as = r.raw("A");
    const Json& bs = r.raw("B");
    if (!as.is_array() || !bs.is_array() || as.size() != m || bs.size() != m) {
      spec::fail(r.path(), "A and B need one level set per factor");
    }
    std::vector<LevelSet> A, B;
    Json a_cfg = Json::array(), b_cfg = Json::array();
    for (std::size_t i = 0; i < m; ++i) {
      Json ac, bc;
      A.push_back(level_set(spec::Reader(as[i], r.at("A") + "[" + std::to_string(i) + "]"), ac));
      B.push_back(level_set(spec::Reader(bs[i], r.at("B") + "[" + std::to_string(i) + "]"), bc));
      a_cfg.push_back(ac);
      b_cfg.push_back(bc);
    }
    Json t_cfg;
    const auto ts = times(cors[0]->construction(), r.raw("times"), r.at("times"), ctx.seed, t_cfg);
    r.finish();
    params["correlation"] = Json{{"A", a_cfg}, {"B", b_cfg}, {"times", t_cfg}};
    body["correlation"] = Json::array();
    for (auto n : ts) {
      std::vector<std::size_t> K;
      for (std::size_t i = 0; i < m; ++i) {
        const Construction& c = cors[i]->construction();
        K.push_back(ctx.k.top(c, default_top_stage(c, A[i].stage, n)));
      }
      const auto v = product_correlation(cors, A, B, n, K);
      body["correlation"].push_back(Json{{"n", n},
                                         {"K", K},
                                         {"value", to_double(v.value)},
                                         {"error_bound", to_double(v.error_bound)},
                                         {"value_exact", to_string(v.value)},
                                         {"error_bound_exact", to_string(v.error_bound)}});
    }
    out.summary << "product correlation: " << ts.size() << " times\n";
  }

  if (p.has("alpha")) {
    any = true;
    const auto r = p.child("alpha");
    Json f_cfg, t_cfg;
    const auto fams = families(r, f_cfg);
    const auto ts = times(cors[0]->construction(), r.raw("times"), r.at("times"), ctx.seed, t_cfg);
    r.finish();
    params["alpha"] = Json{{"families", f_cfg}, {"times", t_cfg}};
    so.top_stage = ctx.k.scan_top(cors[0]->construction());
    const auto rep = product_alpha(cors, fams, std::vector<std::vector<std::int64_t>>(m, ts), so);
    Json a{{"grid", render::estimate(rep.grid)}};
    a["diagonal"] = rep.diagonal ? render::estimate(*rep.diagonal) : Json(nullptr);
    a["factors"] = Json::array();
    for (const auto& f : rep.factors) a["factors"].push_back(render::estimate(f));
    body["alpha"] = a;
    out.summary << "product alpha (grid): " << decimal(rep.grid.exact) << "\n";
  }

  if (p.has("mild")) {
    any = true;
    const auto r = p.child("mild");
    Json f_cfg, t_cfg;
    const auto fams = families(r, f_cfg);
    const auto ts = times(cors[0]->construction(), r.raw("times"), r.at("times"), ctx.seed, t_cfg);
    const auto threshold = r.get<double>("threshold", kDefaultMildThreshold);
    r.finish();
    params["mild"] = Json{{"families", f_cfg}, {"times", t_cfg}, {"threshold", threshold}};
    so.top_stage = ctx.k.scan_top(cors[0]->construction());
    const auto rep = product_mild_mixing_audit(cors, fams, ts, threshold, so);
    Json mj;
    mj["flagged"] = rep.product.flagged();
    mj["rectangles"] = rep.product.entries.size();
    mj["projection_consistent"] = rep.projection_consistent;
    mj["factors"] = Json::array();
    for (std::size_t i = 0; i < m; ++i) mj["factors"].push_back(render::mild(rep.factors[i], fams[i]));
    body["mild"] = mj;
    out.summary << "product mild: " << rep.product.flagged() << " of "
                << rep.product.entries.size() << " rectangles flagged\n";
  }
  p.finish();
  if (!any) spec::fail(p.path(), "give at least one of tower_stages, correlation, alpha, mild");
  out.artifacts.push_back({"product.json", render::json_artifact(header(), body)});
}

}  // namespace detail

/// Runs `command` on a parsed spec. Deterministic: identical (spec, options,
/// version) give byte-identical artifacts for any thread count.
inline RunResult run(const std::string& command, const Json& spec_json,
                     const RunOptions& opts = {}) {
  const auto& aliases = detail::command_aliases();
  const auto cmd_it = aliases.find(command);
  if (cmd_it == aliases.end()) spec::fail("", "unknown command '" + command + "'");
  const std::string cmd = cmd_it->second;

  const spec::Reader top(spec_json, "");
  if (top.has("experiment")) {
    const auto e = top.get<std::string>("experiment");
    const auto it = aliases.find(e);
    if (it == aliases.end() || it->second != cmd) {
      spec::fail("experiment", "spec is for '" + e + "', not '" + command + "'");
    }
  }

  detail::Context ctx;
  const auto spec_seed = top.get<std::uint64_t>("seed", kDefaultSeed);
  const auto spec_k = top.get<std::string>("k_policy", "auto");
  ctx.seed = opts.seed.value_or(spec_seed);
  ctx.k = KPolicy::parse(opts.k_policy.value_or(spec_k),
                         opts.k_policy ? "--k-policy" : "k_policy");
  ctx.threads = std::max(opts.threads, 1u);
  static const Json kEmpty = Json::object();
  ctx.library = top.has("constructions") ? &top.raw("constructions") : &kEmpty;
  const Json empty_params = Json::object();
  const spec::Reader params_reader(
      top.has("parameters") ? top.raw("parameters") : empty_params, "parameters");

  Json config;
  config["experiment"] = cmd;
  config["seed"] = ctx.seed;
  config["k_policy"] = ctx.k.str();

  std::vector<ResolvedConstruction> resolved;
  if (cmd == "product") {
    const Json& fs = top.raw("factors");
    if (!fs.is_array() || fs.empty()) spec::fail("factors", "expected a non-empty array");
    config["factors"] = Json::array();
    for (std::size_t i = 0; i < fs.size(); ++i) {
      resolved.push_back(detail::resolve(fs[i], "factors[" + std::to_string(i) + "]",
                                         *ctx.library, ctx.seed, 0));
      config["factors"].push_back(resolved.back().config);
    }
  } else {
    if (!top.has("construction")) spec::fail("construction", "missing");
    resolved.push_back(detail::resolve(top.raw("construction"), "construction", *ctx.library,
                                       ctx.seed, 0));
    config["construction"] = resolved.back().config;
  }
  top.finish();

  Json params = Json::object();
  auto header = [&]() {
    Json h;
    h["version"] = kVersion;
    h["command"] = cmd;
    config["parameters"] = params;
    h["config"] = config;
    return h;
  };

  detail::Output out;
  std::vector<std::unique_ptr<Correlator>> cors;
  for (const auto& r : resolved) cors.push_back(std::make_unique<Correlator>(r.construction));
  const Construction& c0 = resolved.front().construction;

  if (cmd == "realize") {
    detail::run_realize(c0, params_reader, header(), out);
  } else if (cmd == "name") {
    detail::run_name(c0, params_reader, ctx, params, out, header);
  } else if (cmd == "correlate") {
    detail::run_correlate(*cors[0], params_reader, ctx, params, out, header);
  } else if (cmd == "scan") {
    detail::run_scan(*cors[0], params_reader, ctx, params, out, header);
  } else if (cmd == "estimate") {
    detail::run_estimate(*cors[0], params_reader, ctx, params, out, header);
  } else if (cmd == "audit") {
    detail::run_audit(*cors[0], params_reader, ctx, params, out, header);
  } else {
    std::vector<const Correlator*> ptrs;
    for (const auto& p : cors) ptrs.push_back(p.get());
    detail::run_product(ptrs, params_reader, ctx, params, out, header);
  }

  RunResult result;
  result.artifacts = std::move(out.artifacts);
  result.summary = out.summary.str();
  return result;
}

inline Json load_spec(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorClass::kConfig, "cannot read spec file " + file.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorClass::kConfig, file.string() + ": " + e.what());
  }
}

inline void write_artifacts(const RunResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorClass::kConfig, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& a : r.artifacts) {
    std::ofstream f(dir / a.name, std::ios::binary);
    f << a.content;
    if (!f) throw Error(ErrorClass::kConfig, "cannot write " + (dir / a.name).string());
  }
}

}  // namespace rankone
