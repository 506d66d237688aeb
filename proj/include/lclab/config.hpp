#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lclab/errors.hpp"
#include "lclab/results.hpp"

namespace lclab {

enum class ExperimentKind {
  lightcone,
  kappa_sweep,
  rme_sweep,
  claim_fits,
  hs_validation,
  commutator_scaling,
  propagator_xcheck
};

inline const std::vector<ExperimentKind>& all_experiment_kinds() {
  static const std::vector<ExperimentKind> kinds{
      ExperimentKind::lightcone,     ExperimentKind::kappa_sweep,        ExperimentKind::rme_sweep,
      ExperimentKind::claim_fits,    ExperimentKind::hs_validation,      ExperimentKind::commutator_scaling,
      ExperimentKind::propagator_xcheck};
  return kinds;
}

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::lightcone: return "lightcone";
    case ExperimentKind::kappa_sweep: return "kappa_sweep";
    case ExperimentKind::rme_sweep: return "rme_sweep";
    case ExperimentKind::claim_fits: return "claim_fits";
    case ExperimentKind::hs_validation: return "hs_validation";
    case ExperimentKind::commutator_scaling: return "commutator_scaling";
    case ExperimentKind::propagator_xcheck: return "propagator_xcheck";
  }
  return "?";
}

inline std::optional<ExperimentKind> find_experiment_kind(const std::string& s) {
  for (auto k : all_experiment_kinds())
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::string describe(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::lightcone:
      return "propagate a localized state and measure leakage outside the moving region, front speed and a control run";
    case ExperimentKind::kappa_sweep: return "maximal speed kappa against the energy cutoff on the free lattice";
    case ExperimentKind::rme_sweep: return "recursive monotonicity margins over a (t, s) grid with a fitted constant";
    case ExperimentKind::claim_fits: return "decay of the two localization claims over an s sweep";
    case ExperimentKind::hs_validation: return "almost analytic contour calculus against exact spectral calculus";
    case ExperimentKind::commutator_scaling: return "commutator expansion remainders against the scale s";
    case ExperimentKind::propagator_xcheck: return "rk4 and Trotter propagators against the superoperator exponential";
  }
  return "";
}

enum class ValueType { integer, real, optional_real, boolean, text, choice, real_list };

inline std::string to_string(ValueType t) {
  switch (t) {
    case ValueType::integer: return "integer";
    case ValueType::real: return "real";
    case ValueType::optional_real: return "real or auto";
    case ValueType::boolean: return "boolean";
    case ValueType::text: return "text";
    case ValueType::choice: return "choice";
    case ValueType::real_list: return "list of reals";
  }
  return "?";
}

/// One configuration key: type, per-kind defaults (the key applies to exactly
/// those kinds), allowed choices and a numeric range applied elementwise.
struct KeySpec {
  std::string key;
  ValueType type = ValueType::real;
  std::string doc;
  std::map<ExperimentKind, std::string> defaults;
  std::vector<std::string> choices;
  std::optional<double> min;
  bool min_exclusive = false;
  std::optional<double> max;
  bool max_exclusive = false;

  bool applies_to(ExperimentKind k) const { return defaults.count(k) > 0; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::map<ExperimentKind, std::string> for_kinds(std::initializer_list<ExperimentKind> kinds,
                                                       const std::string& value) {
  std::map<ExperimentKind, std::string> m;
  for (auto k : kinds) m[k] = value;
  return m;
}

inline std::map<ExperimentKind, std::string> for_all(const std::string& value) {
  std::map<ExperimentKind, std::string> m;
  for (auto k : all_experiment_kinds()) m[k] = value;
  return m;
}

inline std::vector<KeySpec> build_registry() {
  using K = ExperimentKind;
  using V = ValueType;
  const auto L = K::lightcone, KS = K::kappa_sweep, R = K::rme_sweep, C = K::claim_fits, H = K::hs_validation,
             M = K::commutator_scaling, P = K::propagator_xcheck;
  std::vector<KeySpec> r;
  auto add = [&](std::string key, V type, std::string doc, std::map<K, std::string> defaults) -> KeySpec& {
    KeySpec s;
    s.key = std::move(key);
    s.type = type;
    s.doc = std::move(doc);
    s.defaults = std::move(defaults);
    r.push_back(std::move(s));
    return r.back();
  };
  auto positive = [](KeySpec& s) {
    s.min = 0.0;
    s.min_exclusive = true;
  };
  auto nonnegative = [](KeySpec& s) { s.min = 0.0; };

  // Run control.
  add("output.dir", V::text, "directory receiving results.csv, summary.txt and config.resolved", for_all("out"));
  nonnegative(add("run.seed", V::integer, "seed of the pseudo-random generator", for_all("1")));
  add("run.threads", V::integer, "worker threads for independent jobs", for_all("1")).min = 1.0;

  // Grid and Hamiltonian.
  {
    auto& s = add("grid.dimension", V::integer, "spatial dimension (1 or 2)", for_kinds({L, R, C}, "1"));
    s.min = 1.0;
    s.max = 2.0;
  }
  positive(add("grid.halfwidth", V::real, "box half width L; the grid covers [-L, L]",
               {{L, "32"}, {KS, "16"}, {R, "12"}, {C, "16"}, {H, "10"}, {M, "10"}, {P, "4"}}));
  add("grid.points", V::integer, "points per axis N",
      {{L, "96"}, {KS, "256"}, {R, "48"}, {C, "64"}, {H, "32"}, {M, "64"}, {P, "16"}})
      .min = 8.0;
  {
    auto& s = add("potential.kind", V::choice, "potential family",
                  {{L, "gaussian_well"}, {KS, "zero"}, {R, "gaussian_well"}, {C, "gaussian_well"},
                   {H, "gaussian_well"}, {M, "gaussian_well"}, {P, "gaussian_well"}});
    s.choices = {"zero", "gaussian_well", "power_decay"};
  }
  nonnegative(add("potential.amplitude", V::real, "potential amplitude C", for_all("1")));
  positive(add("potential.width", V::real, "gaussian_well width", for_all("2")));
  positive(add("potential.decay", V::real, "power_decay exponent rho", for_all("1")));
  add("potential.center_x", V::real, "potential center, first axis",
      {{L, "10"}, {KS, "0"}, {R, "10"}, {C, "10"}, {H, "0"}, {M, "0"}, {P, "0"}});
  add("potential.center_y", V::real, "potential center, second axis", for_kinds({L, R, C}, "0"));

  // Jump operators.
  {
    auto& s = add("jumps.recipe", V::choice, "jump operator family",
                  {{L, "local_dephasing"}, {KS, "none"}, {R, "local_dephasing"}, {C, "local_dephasing"},
                   {P, "local_dephasing"}});
    s.choices = {"none", "local_dephasing", "smoothed_hopping"};
  }
  nonnegative(add("jumps.strength", V::real, "jump amplitude", for_kinds({L, KS, R, C, P}, "0.1")));
  {
    auto& s = add("jumps.count", V::integer, "number of jump operators", for_kinds({L, KS, R, C, P}, "4"));
    s.min = 1.0;
    s.max = 16.0;
  }
  positive(add("jumps.radius", V::real, "bump window radius of each jump", for_kinds({L, KS, R, C, P}, "2")));
  positive(add("jumps.displacement", V::real, "hopping distance (smoothed_hopping)",
               for_kinds({L, KS, R, C, P}, "1")));
  positive(add("jumps.kernel_width", V::real, "hopping kernel radius (smoothed_hopping)",
               for_kinds({L, KS, R, C, P}, "1")));

  // Region, distance and energy window.
  add("region.lo", V::real, "lower end of X (a square box in 2D)", {{L, "-4"}, {KS, "-2"}, {R, "-4"}, {C, "-4"}});
  add("region.hi", V::real, "upper end of X", {{L, "4"}, {KS, "2"}, {R, "4"}, {C, "4"}});
  positive(add("distance.eps0", V::real, "smoothing scale of the distance function", for_kinds({L, KS, R, C}, "0.5")));
  add("energy.value", V::real, "energy cutoff E", for_kinds({L, R, C}, "4"));
  positive(add("energy.width", V::real, "cutoff transition width", for_kinds({L, R, C}, "2")));

  // Speeds and expansion order.
  add("expansion.order", V::integer, "order n of the estimates", for_kinds({L, R, C}, "2")).min = 1.0;
  positive(add("speed.c", V::optional_real, "light-cone speed c, or auto for c_factor * kappa",
               for_kinds({L, R, C}, "auto")));
  {
    auto& s = add("speed.c_factor", V::real, "c / kappa when speed.c is auto",
                  {{L, "1.2"}, {R, "2"}, {C, "1.2"}});
    s.min = 1.0;
    s.min_exclusive = true;
  }
  positive(add("speed.v", V::optional_real, "ASTLO speed v in (kappa, c), or auto for the midpoint",
               for_kinds({L, R, C}, "auto")));

  // Light-cone experiment.
  positive(add("time.horizon", V::real, "final time T", {{L, "8"}, {P, "1"}}));
  add("time.samples", V::integer, "snapshots on [0, T] including both ends", {{L, "33"}, {P, "5"}}).min = 2.0;
  {
    auto& s = add("state.initial", V::choice, "initial state inside X", for_kinds({L}, "packet"));
    s.choices = {"packet", "box_ground_state"};
  }
  add("state.center", V::real, "packet center", for_kinds({L}, "0"));
  positive(add("state.width", V::real, "packet Gaussian width", for_kinds({L}, "1")));
  add("state.momentum", V::real, "packet momentum", for_kinds({L}, "0"));
  {
    auto& s = add("checks.front_threshold", V::real, "mass fraction left outside the front radius",
                  for_kinds({L}, "0.001"));
    positive(s);
    s.max = 1.0;
    s.max_exclusive = true;
  }
  nonnegative(add("checks.edge_width", V::real, "width of the boundary layer", for_kinds({L}, "2")));
  positive(add("checks.boundary_tolerance", V::real, "allowed mass in the boundary layer", for_kinds({L}, "1e-6")));
  {
    auto& s = add("checks.control_factor", V::real, "control speed as a fraction of the front speed",
                  for_kinds({L}, "0.3"));
    positive(s);
    s.max = 1.0;
    s.max_exclusive = true;
  }
  positive(add("checks.min_control_growth", V::real, "required growth of the control leakage",
               for_kinds({L}, "10")));
  nonnegative(add("checks.supersonic_tolerance", V::real, "allowed relative excess of the front speed over kappa",
                  for_kinds({L}, "0.1")));
  {
    auto& s = add("checks.fit_fraction", V::real, "trailing fraction of the samples used for fits",
                  for_kinds({L}, "0.5"));
    positive(s);
    s.max = 1.0;
  }
  add("checks.min_fit_points", V::integer, "minimum number of points in the fit window", for_kinds({L}, "8")).min =
      2.0;
  {
    auto& s = add("propagator.method", V::choice, "time stepping scheme", for_kinds({L}, "rk4"));
    s.choices = {"rk4", "trotter", "superop_exact"};
  }
  positive(add("propagator.dt", V::real, "time step", {{L, "0.01"}, {P, "0.001"}}));
  positive(add("propagator.tolerance", V::real, "trace and positivity drift tolerance", for_kinds({L, P}, "1e-8")));
  add("diagnostics.enabled", V::boolean, "also run the claims and the RME margin on the same setup",
      for_kinds({L}, "true"));
  positive(add("diagnostics.s_values", V::real_list, "s values of the diagnostics", for_kinds({L}, "8, 16, 32, 64")));
  {
    auto& s = add("diagnostics.t_ratios", V::real_list, "t / s ratios of the RME diagnostic",
                  for_kinds({L}, "0, 0.2, 0.4, 0.6, 0.8"));
    s.min = 0.0;
    s.max = 1.0;
    s.max_exclusive = true;
  }

  // kappa sweep.
  positive(add("sweep.energy_min", V::real, "smallest energy of the sweep", for_kinds({KS}, "4")));
  positive(add("sweep.energy_max", V::real, "largest energy of the sweep", for_kinds({KS}, "64")));
  add("sweep.count", V::integer, "number of log-spaced energies", for_kinds({KS}, "5")).min = 2.0;
  positive(add("sweep.width_ratio", V::real, "cutoff width as a fraction of the energy", for_kinds({KS}, "0.5")));
  positive(add("sweep.max_slope", V::real, "largest accepted slope of log kappa against log(1 + E)",
               for_kinds({KS}, "0.6")));

  // RME sweep.
  positive(add("rme.s_values", V::real_list, "s values of the grid", for_kinds({R}, "8, 16, 32, 64")));
  {
    auto& s = add("rme.t_ratios", V::real_list, "t / s ratios of the grid", for_kinds({R}, "0, 0.2, 0.4, 0.6, 0.8"));
    s.min = 0.0;
    s.max = 1.0;
    s.max_exclusive = true;
  }
  positive(add("rme.holdout_s", V::real, "the held-out check fits C on s <= holdout_s and tests the rest",
               for_kinds({R}, "16")));
  positive(add("rme.tolerance", V::real, "accepted negative margin", for_kinds({R}, "1e-8")));
  add("rme.min_points", V::integer, "minimum size of the (t, s) grid", for_kinds({R}, "20")).min = 1.0;

  // Claims.
  positive(add("claims.s_values", V::real_list, "s values of the sweep", for_kinds({C}, "8, 16, 32, 64, 128")));
  {
    auto& s = add("claims.t_ratio", V::real, "t / s for the second claim", for_kinds({C}, "0"));
    s.min = 0.0;
    s.max = 1.0;
    s.max_exclusive = true;
  }

  // HS validation.
  {
    auto& s = add("hs.max_p", V::integer, "largest derivative order p", for_kinds({H}, "2"));
    s.min = 0.0;
    s.max = 4.0;
  }
  {
    auto& s = add("hs.levels", V::integer, "quadrature refinement levels", for_kinds({H}, "3"));
    s.min = 1.0;
    s.max = 4.0;
  }
  positive(add("hs.tolerance", V::real, "accepted error at the default resolution", for_kinds({H}, "1e-6")));
  nonnegative(add("hs.floor", V::real, "errors below this count as converged", for_kinds({H}, "1e-11")));
  add("hs.cutoff_energy", V::real, "energy of the cutoff member of the family", for_kinds({H}, "4"));
  positive(add("hs.cutoff_width", V::real, "width of the cutoff member", for_kinds({H}, "2")));

  // Commutator scaling.
  {
    auto& s = add("commutator.max_order", V::integer, "orders n = 1..max_order", for_kinds({M}, "2"));
    s.min = 1.0;
    s.max = 6.0;
  }
  positive(add("commutator.s_values", V::real_list, "s values of the sweep", for_kinds({M}, "4, 8, 16, 32, 64")));
  add("commutator.alpha", V::real, "shift alpha in f((phi - alpha)/s)", for_kinds({M}, "0"));
  positive(add("commutator.width", V::real, "half width w of the test function", for_kinds({M}, "16")));
  add("commutator.slope_margin", V::real, "accepted slope is -(n+1) + margin", for_kinds({M}, "0.3"));
  positive(add("commutator.stability", V::real, "accepted relative spread of the fitted c", for_kinds({M}, "0.2")));

  // Propagator cross-check.
  add("xcheck.trotter_base", V::integer, "coarsest Trotter step count", for_kinds({P}, "400")).min = 1.0;
  add("xcheck.trotter_levels", V::integer, "Trotter step counts base * 2^i", for_kinds({P}, "5")).min = 2.0;
  positive(add("xcheck.oracle_tolerance", V::real, "accepted trace distance to the oracle", for_kinds({P}, "1e-5")));
  positive(add("xcheck.slope_margin", V::real, "accepted deviation of the Trotter slope from -1",
               for_kinds({P}, "0.2")));
  return r;
}

}  // namespace detail

inline const std::vector<KeySpec>& config_registry() {
  static const std::vector<KeySpec> r = detail::build_registry();
  return r;
}

inline const KeySpec* find_key(const std::string& key) {
  for (const auto& s : config_registry())
    if (s.key == key) return &s;
  return nullptr;
}

/// Environment variable overriding a key: LCLAB_ + key with dots as underscores, upper case.
inline std::string environment_name(const std::string& key) {
  std::string out = "LCLAB_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_environment(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

inline std::optional<std::string> no_environment(const std::string&) { return std::nullopt; }

/// A fully resolved experiment configuration: the kind plus one canonical
/// value per key that applies to it.
class ExperimentConfig {
 public:
  static ExperimentConfig defaults(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind_ = kind;
    for (const auto& s : config_registry())
      if (s.applies_to(kind)) c.values_[s.key] = canonical(s, s.defaults.at(kind), "default");
    return c;
  }

  ExperimentKind kind() const { return kind_; }
  const std::map<std::string, std::string>& values() const { return values_; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  /// Sets a key from raw text. `where` locates the source in error messages.
  void set(const std::string& key, const std::string& raw, const std::string& where = "") {
    const std::string at = where.empty() ? "" : where + ": ";
    const KeySpec* spec = find_key(key);
    if (!spec) throw ParseError(at + "unknown key '" + key + "'");
    if (!spec->applies_to(kind_))
      throw ParseError(at + "key '" + key + "' does not apply to kind '" + to_string(kind_) + "'");
    values_[key] = canonical(*spec, detail::trim(raw), at);
  }

  long long integer(const std::string& key) const {
    long long v = 0;
    parse_integer(raw(key), v);
    return v;
  }
  int integer32(const std::string& key) const { return static_cast<int>(integer(key)); }
  double real(const std::string& key) const {
    double v = 0.0;
    parse_real(raw(key), v);
    return v;
  }
  std::optional<double> optional_real(const std::string& key) const {
    if (raw(key) == "auto") return std::nullopt;
    return real(key);
  }
  bool boolean(const std::string& key) const { return raw(key) == "true"; }
  const std::string& text(const std::string& key) const { return raw(key); }
  std::vector<double> real_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(raw(key))) {
      double v = 0.0;
      parse_real(item, v);
      out.push_back(v);
    }
    return out;
  }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end())
      throw InvalidArgument("config: key '" + key + "' is not set for kind '" + to_string(kind_) + "'");
    return it->second;
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s + ",") {
      if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    return out;
  }

 private:
  static std::string canonical(const KeySpec& spec, const std::string& v, const std::string& at) {
    auto bad = [&](const std::string& what) {
      return ParseError(at + "key '" + spec.key + "': " + what + " (got '" + v + "')");
    };
    switch (spec.type) {
      case ValueType::integer: {
        long long x = 0;
        if (!parse_integer(v, x)) throw bad("expected an integer");
        return std::to_string(x);
      }
      case ValueType::real: {
        double x = 0.0;
        if (!parse_real(v, x) || !std::isfinite(x)) throw bad("expected a finite real");
        return format_real(x);
      }
      case ValueType::optional_real: {
        if (v == "auto") return v;
        double x = 0.0;
        if (!parse_real(v, x) || !std::isfinite(x)) throw bad("expected a finite real or auto");
        return format_real(x);
      }
      case ValueType::boolean: {
        std::string l;
        for (char c : v) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (l == "true" || l == "yes" || l == "on" || l == "1") return "true";
        if (l == "false" || l == "no" || l == "off" || l == "0") return "false";
        throw bad("expected true or false");
      }
      case ValueType::text: {
        if (v.empty()) throw bad("expected a nonempty value");
        return v;
      }
      case ValueType::choice: {
        if (std::find(spec.choices.begin(), spec.choices.end(), v) == spec.choices.end()) {
          std::string opts;
          for (const auto& c : spec.choices) opts += (opts.empty() ? "" : ", ") + c;
          throw bad("expected one of " + opts);
        }
        return v;
      }
      case ValueType::real_list: {
        const auto items = split_list(v);
        if (items.empty()) throw bad("expected at least one real");
        std::string out;
        for (const auto& item : items) {
          double x = 0.0;
          if (!parse_real(item, x) || !std::isfinite(x)) throw bad("list entry '" + item + "' is not a finite real");
          out += (out.empty() ? "" : ", ") + format_real(x);
        }
        return out;
      }
    }
    return v;
  }

  ExperimentKind kind_ = ExperimentKind::lightcone;
  std::map<std::string, std::string> values_;
};

/// Every violated constraint, as readable messages; empty when valid.
inline std::vector<std::string> config_violations(const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  auto check_range = [&](const KeySpec& s, double x) {
    if (s.min && (x < *s.min || (s.min_exclusive && x == *s.min)))
      out.push_back(s.key + " must be " + (s.min_exclusive ? "> " : ">= ") + format_real(*s.min) + " (got " +
                    format_real(x) + ")");
    if (s.max && (x > *s.max || (s.max_exclusive && x == *s.max)))
      out.push_back(s.key + " must be " + (s.max_exclusive ? "< " : "<= ") + format_real(*s.max) + " (got " +
                    format_real(x) + ")");
  };
  for (const auto& [key, value] : cfg.values()) {
    const KeySpec* s = find_key(key);
    if (!s) continue;
    switch (s->type) {
      case ValueType::integer: check_range(*s, static_cast<double>(cfg.integer(key))); break;
      case ValueType::real: check_range(*s, cfg.real(key)); break;
      case ValueType::optional_real:
        if (auto x = cfg.optional_real(key)) check_range(*s, *x);
        break;
      case ValueType::real_list:
        for (double x : cfg.real_list(key)) check_range(*s, x);
        break;
      default: break;
    }
  }

  const ExperimentKind k = cfg.kind();
  if (cfg.has("region.lo") && cfg.has("region.hi") && !(cfg.real("region.lo") < cfg.real("region.hi")))
    out.push_back("region.lo must be < region.hi");
  if (cfg.has("region.hi") && cfg.has("grid.halfwidth") &&
      (cfg.real("region.hi") > cfg.real("grid.halfwidth") || cfg.real("region.lo") < -cfg.real("grid.halfwidth")))
    out.push_back("region must lie inside [-grid.halfwidth, grid.halfwidth]");
  if (cfg.has("speed.c") && cfg.has("speed.v")) {
    const auto c = cfg.optional_real("speed.c");
    const auto v = cfg.optional_real("speed.v");
    if (c && v && !(*v < *c)) out.push_back("v must be < c (speed.v = " + format_real(*v) + ", speed.c = " +
                                            format_real(*c) + ")");
  }
  if (cfg.has("grid.points")) {
    const long long n = cfg.integer("grid.points");
    const long long d = cfg.has("grid.dimension") ? cfg.integer("grid.dimension") : 1;
    const long long cap = d == 1 ? 256 : 32 * 32;
    if (d >= 1 && d <= 2 && (d == 1 ? n : n * n) > cap)
      out.push_back("grid.points gives " + std::to_string(d == 1 ? n : n * n) + " sites, above the cap of " +
                    std::to_string(cap));
  }
  if (k == ExperimentKind::lightcone) {
    const double samples = static_cast<double>(cfg.integer("time.samples"));
    const auto window = static_cast<long long>(std::ceil(cfg.real("checks.fit_fraction") * (samples - 1.0)));
    if (window < cfg.integer("checks.min_fit_points"))
      out.push_back("checks.min_fit_points exceeds the fit window of " + std::to_string(window) +
                    " samples; raise time.samples or checks.fit_fraction");
  }
  if (k == ExperimentKind::kappa_sweep && !(cfg.real("sweep.energy_min") < cfg.real("sweep.energy_max")))
    out.push_back("sweep.energy_min must be < sweep.energy_max");
  if (k == ExperimentKind::rme_sweep) {
    const auto s = cfg.real_list("rme.s_values");
    const double h = cfg.real("rme.holdout_s");
    const bool below = std::any_of(s.begin(), s.end(), [&](double x) { return x <= h; });
    const bool above = std::any_of(s.begin(), s.end(), [&](double x) { return x > h; });
    if (!below || !above) out.push_back("rme.holdout_s must split rme.s_values into two nonempty sets");
  }
  if ((k == ExperimentKind::claim_fits || k == ExperimentKind::commutator_scaling) &&
      cfg.real_list(k == ExperimentKind::claim_fits ? "claims.s_values" : "commutator.s_values").size() < 2)
    out.push_back("the s sweep needs at least two values");
  if (k == ExperimentKind::propagator_xcheck && cfg.integer("grid.points") * cfg.integer("grid.points") > 4096)
    out.push_back("grid.points must be <= 64 for the superoperator oracle");
  return out;
}

inline void validate_config(const ExperimentConfig& cfg) {
  const auto v = config_violations(cfg);
  if (v.empty()) return;
  std::string msg = "invalid configuration (" + std::to_string(v.size()) + " violation" + (v.size() == 1 ? "" : "s") +
                    "):";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ValidationError(msg);
}

/// Overrides every key that has a matching LCLAB_* variable.
inline void apply_environment(ExperimentConfig& cfg, const EnvLookup& env) {
  for (const auto& s : config_registry()) {
    if (!s.applies_to(cfg.kind())) continue;
    const std::string name = environment_name(s.key);
    if (auto v = env(name)) cfg.set(s.key, *v, "environment " + name);
  }
}

/// Parses the flat key = value format. '#' starts a comment; `kind` is required.
/// Environment overrides are applied before validation.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<config>",
                                          const EnvLookup& env = no_environment) {
  struct Entry {
    std::string key, value;
    int line;
  };
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto where = [&](int l) { return origin + ":" + std::to_string(l); };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where(lineno) + ": empty key");
    for (char c : key)
      if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_' ||
            c == '.'))
        throw ParseError(where(lineno) + ": invalid character in key '" + key + "'");
    if (!seen.insert(key).second) throw ParseError(where(lineno) + ": duplicate key '" + key + "'");
    entries.push_back({key, value, lineno});
  }
  const auto kind_entry = std::find_if(entries.begin(), entries.end(), [](const Entry& e) { return e.key == "kind"; });
  if (kind_entry == entries.end()) throw ParseError(origin + ": missing required key 'kind'");
  const auto kind = find_experiment_kind(kind_entry->value);
  if (!kind) throw ParseError(where(kind_entry->line) + ": unknown kind '" + kind_entry->value + "'");
  ExperimentConfig cfg = ExperimentConfig::defaults(*kind);
  for (const auto& e : entries)
    if (e.key != "kind") cfg.set(e.key, e.value, where(e.line));
  apply_environment(cfg, env);
  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path, const EnvLookup& env = no_environment) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open configuration file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path, env);
}

/// Canonical text: kind first, then every key in sorted order.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out = "kind = " + to_string(cfg.kind()) + "\n";
  for (const auto& [key, value] : cfg.values()) out += key + " = " + value + "\n";
  return out;
}

/// Hash of the canonical text without the keys that cannot change the
/// numbers (output location and thread count).
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::string text = "kind = " + to_string(cfg.kind()) + "\n";
  for (const auto& [key, value] : cfg.values())
    if (key != "output.dir" && key != "run.threads") text += key + " = " + value + "\n";
  return fnv1a_hex(text);
}

}  // namespace lclab
