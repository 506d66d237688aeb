#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lclab/commutators.hpp"
#include "lclab/config.hpp"
#include "lclab/errors.hpp"
#include "lclab/fit.hpp"
#include "lclab/geometry.hpp"
#include "lclab/lattice.hpp"
#include "lclab/lightcone.hpp"
#include "lclab/lindblad.hpp"
#include "lclab/linalg.hpp"
#include "lclab/parallel.hpp"
#include "lclab/results.hpp"
#include "lclab/spectral.hpp"

namespace lclab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Everything a run produces: the CSV table, summary values and the in-run checks.
struct RunOutcome {
  ResultTable table;
  std::vector<std::pair<std::string, std::string>> summary;
  std::vector<CheckResult> checks;

  void note(const std::string& key, double value) { summary.emplace_back(key, format_real(value)); }
  void note(const std::string& key, const std::string& value) { summary.emplace_back(key, value); }
  void check(const std::string& name, bool passed, const std::string& detail) {
    checks.push_back({name, passed, detail});
  }
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
      if (!c.passed) out.push_back(c.name + ": " + c.detail);
    return out;
  }
  const std::string* find(const std::string& key) const {
    for (const auto& kv : summary)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }
  const CheckResult* find_check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

namespace detail {

inline Grid grid_from(const ExperimentConfig& cfg) {
  const int dim = cfg.has("grid.dimension") ? cfg.integer32("grid.dimension") : 1;
  return Grid(dim, cfg.real("grid.halfwidth"), cfg.integer32("grid.points"));
}

inline PotentialSpec potential_from(const ExperimentConfig& cfg) {
  PotentialSpec p;
  p.kind = potential_kind_from_string(cfg.text("potential.kind"));
  p.amplitude = cfg.real("potential.amplitude");
  p.width = cfg.real("potential.width");
  p.decay = cfg.real("potential.decay");
  p.center = {cfg.real("potential.center_x"), cfg.has("potential.center_y") ? cfg.real("potential.center_y") : 0.0};
  return p;
}

inline JumpOptions jump_options_from(const ExperimentConfig& cfg) {
  JumpOptions o;
  o.count = cfg.integer32("jumps.count");
  o.radius = cfg.real("jumps.radius");
  o.displacement = cfg.real("jumps.displacement");
  o.kernel_width = cfg.real("jumps.kernel_width");
  return o;
}

inline std::string pass_text(bool ok) { return ok ? "PASS" : "FAIL"; }

inline std::string list_text(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + format_real(x);
  return out;
}

}  // namespace detail

/// Light-cone setup fields shared by the lightcone, rme_sweep and claim_fits kinds.
inline LightconeConfig lightcone_config(const ExperimentConfig& cfg) {
  LightconeConfig lc;
  lc.dimension = cfg.integer32("grid.dimension");
  lc.halfwidth = cfg.real("grid.halfwidth");
  lc.points = cfg.integer32("grid.points");
  lc.potential = detail::potential_from(cfg);
  lc.jumps = jump_recipe_from_string(cfg.text("jumps.recipe"));
  lc.jump_strength = cfg.real("jumps.strength");
  lc.jump_options = detail::jump_options_from(cfg);
  lc.region = {{cfg.real("region.lo"), cfg.real("region.hi")}};
  lc.eps0 = cfg.real("distance.eps0");
  lc.energy = cfg.real("energy.value");
  lc.cutoff_width = cfg.real("energy.width");
  lc.n = cfg.integer32("expansion.order");
  lc.c = cfg.optional_real("speed.c");
  lc.c_factor = cfg.real("speed.c_factor");
  lc.v = cfg.optional_real("speed.v");
  lc.threads = cfg.integer32("run.threads");
  if (cfg.kind() != ExperimentKind::lightcone) return lc;
  lc.horizon = cfg.real("time.horizon");
  lc.time_samples = cfg.integer32("time.samples");
  lc.initial = initial_state_from_string(cfg.text("state.initial"));
  lc.packet_center = cfg.real("state.center");
  lc.packet_width = cfg.real("state.width");
  lc.packet_momentum = cfg.real("state.momentum");
  lc.front_threshold = cfg.real("checks.front_threshold");
  lc.edge_width = cfg.real("checks.edge_width");
  lc.boundary_tolerance = cfg.real("checks.boundary_tolerance");
  lc.control_factor = cfg.real("checks.control_factor");
  lc.supersonic_tolerance = cfg.real("checks.supersonic_tolerance");
  lc.fit_fraction = cfg.real("checks.fit_fraction");
  lc.min_fit_points = cfg.integer32("checks.min_fit_points");
  lc.method = propagator_method_from_string(cfg.text("propagator.method"));
  lc.dt = cfg.real("propagator.dt");
  lc.propagation_tolerance = cfg.real("propagator.tolerance");
  lc.diagnostics = cfg.boolean("diagnostics.enabled");
  lc.s_values = cfg.real_list("diagnostics.s_values");
  lc.t_ratios = cfg.real_list("diagnostics.t_ratios");
  return lc;
}

inline RunOutcome run_lightcone(const ExperimentConfig& cfg) {
  const LightconeConfig lc = lightcone_config(cfg);
  const LightconeReport rep = run_lightcone_experiment(lc, false);
  RunOutcome out;
  out.table = ResultTable({{"t", ColumnType::real},
                           {"leakage", ColumnType::real},
                           {"leakage_full_cutoff", ColumnType::real},
                           {"control_leakage", ColumnType::real},
                           {"radius", ColumnType::real},
                           {"energy_mass", ColumnType::real},
                           {"outside_window", ColumnType::real},
                           {"boundary_mass", ColumnType::real}});
  for (std::size_t i = 0; i < rep.times.size(); ++i)
    out.table.add_row({rep.times[i], rep.leakage[i], rep.leakage_full_cutoff[i], rep.control_leakage[i], rep.radius[i],
                       rep.energy_mass[i], rep.outside_window[i], rep.boundary_mass[i]});
  out.table.set_metadata("n", std::to_string(lc.n));
  out.table.set_metadata("kappa", format_real(rep.kappa));
  out.table.set_metadata("c", format_real(rep.c));
  out.table.set_metadata("control_c", format_real(rep.control_c));

  out.note("kappa", rep.kappa);
  out.note("c", rep.c);
  out.note("v", rep.v);
  out.note("delta", rep.delta);
  out.note("front_speed", rep.front_speed);
  out.note("decay_exponent", rep.decay_exponent);
  out.note("control_c", rep.control_c);
  out.note("control_growth", rep.control_growth);
  out.note("initial_leakage", rep.leakage.front());
  out.note("initial_bound", rep.initial_bound);
  out.note("max_boundary_mass", rep.max_boundary_mass);
  out.note("dual_residual", rep.dual_residual);

  const double tol = lc.supersonic_tolerance;
  out.check("front_speed", rep.front_speed <= rep.kappa * (1.0 + tol),
            "front speed " + format_real(rep.front_speed) + " vs kappa " + format_real(rep.kappa) + " * " +
                format_real(1.0 + tol));
  out.check("boundary_mass", rep.max_boundary_mass <= lc.boundary_tolerance,
            "max boundary mass " + format_real(rep.max_boundary_mass));
  out.check("tail_nonincreasing", rep.tail_nonincreasing, "leakage over the fit window rises by more than 1e-6");
  const double min_growth = cfg.real("checks.min_control_growth");
  out.check("control_growth", rep.control_growth >= min_growth,
            "control leakage grows by " + format_real(rep.control_growth) + ", need " + format_real(min_growth));
  out.check("heaviside", rep.heaviside_ok, "comparison of the sharp and smooth cutoffs");
  const bool in_range = std::all_of(rep.leakage.begin(), rep.leakage.end(),
                                    [](double p) { return p >= 0.0 && p <= 1.0 + 1e-8; });
  out.check("leakage_range", in_range, "P(t) must lie in [0, 1 + 1e-8]");
  out.check("initial_leakage", rep.leakage.front() <= rep.initial_bound + 1e-12,
            "P(0) = " + format_real(rep.leakage.front()) + " vs bound " + format_real(rep.initial_bound));
  out.check("dual_consistency", rep.dual_residual <= 1e-10, "gamma vs L'(phi) residual " + format_real(rep.dual_residual));
  if (rep.claim1 && rep.claim2) {
    out.note("claim1_slope", rep.claim1->slope);
    out.note("claim2_slope", rep.claim2->slope);
    const double min_margin = *std::min_element(rep.rme_margins.begin(), rep.rme_margins.end());
    out.note("rme_constant", rep.rme_constant);
    out.note("rme_min_margin", min_margin);
    out.note("rme_points", static_cast<double>(rep.rme_points.size()));
    out.check("claim1", rep.claim1->passed, "slope " + format_real(rep.claim1->slope));
    out.check("claim2", rep.claim2->passed, "slope " + format_real(rep.claim2->slope));
    out.check("rme_margin", min_margin >= -1e-8, "min margin " + format_real(min_margin));
  }
  return out;
}

inline RunOutcome run_kappa_sweep(const ExperimentConfig& cfg) {
  const Grid grid(1, cfg.real("grid.halfwidth"), cfg.integer32("grid.points"));
  const HermitianOperator h = build_hamiltonian(grid, detail::potential_from(cfg));
  const SpectralDecomposition dec = decompose(h);
  const JumpFamily jumps = make_jumps(grid, jump_recipe_from_string(cfg.text("jumps.recipe")),
                                      cfg.real("jumps.strength"), detail::jump_options_from(cfg));
  const VNLGenerator gen(h, jumps.jumps);
  const RegionSpec region = RegionSpec::intervals({{cfg.real("region.lo"), cfg.real("region.hi")}});
  region.check_inside(grid);
  const SmoothedDistance dist(region, cfg.real("distance.eps0"));
  RealVector dvals(grid.sites());
  for (int s = 0; s < grid.sites(); ++s) dvals(s) = dist(grid.point(s)[0]);
  const HermitianOperator dop = HermitianOperator::diagonal(dvals, "d_X");

  const int count = cfg.integer32("sweep.count");
  const double e0 = cfg.real("sweep.energy_min"), e1 = cfg.real("sweep.energy_max");
  const double ratio = cfg.real("sweep.width_ratio");
  std::vector<double> energies(static_cast<std::size_t>(count)), kappas(energies.size()), residuals(energies.size());
  for (int i = 0; i < count; ++i)
    energies[static_cast<std::size_t>(i)] = e0 * std::pow(e1 / e0, static_cast<double>(i) / (count - 1));
  parallel_for(energies.size(), cfg.integer32("run.threads"), [&](std::size_t i) {
    const double e = energies[i];
    const HermitianOperator g = apply_function_exact(dec, SmoothCutoff(e, ratio * e).function(), "g(H)");
    const VelocityOperator vel = velocity_operator(gen, localized_distance(g, dop));
    kappas[i] = vel.kappa;
    residuals[i] = vel.dual_residual;
  });

  RunOutcome out;
  out.table = ResultTable({{"E", ColumnType::real}, {"kappa", ColumnType::real}, {"slope_so_far", ColumnType::real}});
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    lx.push_back(std::log(1.0 + energies[i]));
    ly.push_back(std::log(kappas[i]));
    const double slope = i == 0 ? std::nan("") : linear_fit(lx, ly).slope;
    out.table.add_row({energies[i], kappas[i], slope});
  }
  const double slope = linear_fit(lx, ly).slope;
  const double max_slope = cfg.real("sweep.max_slope");
  out.table.set_metadata("guide_slope", "0.5");
  out.note("slope", slope);
  out.note("max_slope", max_slope);
  out.note("kappa_min", *std::min_element(kappas.begin(), kappas.end()));
  out.note("kappa_max", *std::max_element(kappas.begin(), kappas.end()));
  const double worst_residual = *std::max_element(residuals.begin(), residuals.end());
  out.note("dual_residual", worst_residual);
  out.check("kappa_slope", slope <= max_slope, "slope " + format_real(slope) + ", limit " + format_real(max_slope));
  out.check("dual_consistency", worst_residual <= 1e-10, "gamma vs L'(phi) residual " + format_real(worst_residual));
  return out;
}

inline RunOutcome run_rme_sweep(const ExperimentConfig& cfg) {
  const LightconeConfig lc = lightcone_config(cfg);
  const LightconeSetup st = build_lightcone_setup(lc);
  const RmeSetup rme = make_rme_setup(st.generator, st.dxe.op, st.chi, st.v, lc.n);
  const std::vector<RmePoint> points = rme_grid(cfg.real_list("rme.s_values"), cfg.real_list("rme.t_ratios"));
  const double tol = cfg.real("rme.tolerance");
  const double holdout = cfg.real("rme.holdout_s");

  std::vector<double> slack(points.size());
  parallel_for(points.size(), cfg.integer32("run.threads"),
               [&](std::size_t i) { slack[i] = min_eigenvalue(rme_slack(rme, points[i].t, points[i].s)); });
  std::vector<RmePoint> fit_points;
  std::vector<double> fit_slack;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (points[i].s <= holdout) {
      fit_points.push_back(points[i]);
      fit_slack.push_back(slack[i]);
    }
  const double c_all = rme_constant_for(rme, points, slack);
  const double c_fit = rme_constant_for(rme, fit_points, fit_slack);
  auto margin = [&](std::size_t i, double c) { return slack[i] + c * rme.constants.mu / std::pow(points[i].s, lc.n + 1); };

  RunOutcome out;
  out.table = ResultTable({{"t", ColumnType::real},
                           {"s", ColumnType::real},
                           {"margin", ColumnType::real},
                           {"holdout_margin", ColumnType::real},
                           {"set", ColumnType::text}});
  double min_all = kInf, min_holdout = kInf;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const bool held = points[i].s > holdout;
    const double m = margin(i, c_all), mh = margin(i, c_fit);
    min_all = std::min(min_all, m);
    if (held) min_holdout = std::min(min_holdout, mh);
    out.table.add_row({points[i].t, points[i].s, m, mh, std::string(held ? "holdout" : "fit")});
  }
  out.table.set_metadata("n", std::to_string(lc.n));
  out.table.set_metadata("kappa", format_real(st.kappa));
  out.note("kappa", st.kappa);
  out.note("c", st.c);
  out.note("v", st.v);
  out.note("delta", st.delta);
  out.note("mu", rme.constants.mu);
  for (int k = 1; k <= lc.n + 1; ++k) out.note("M_" + std::to_string(k), rme.constants.M(k));
  for (int k = 2; k <= lc.n; ++k)
    out.note("lambda_" + std::to_string(k), rme.majorants.lambda[static_cast<std::size_t>(k - 2)]);
  out.note("rme_constant", c_all);
  out.note("min_margin", min_all);
  out.note("points", static_cast<double>(points.size()));
  out.note("holdout_constant", c_fit);
  out.note("holdout_min_margin", min_holdout);
  const auto min_points = static_cast<std::size_t>(cfg.integer("rme.min_points"));
  out.check("rme_margin", min_all >= -tol && points.size() >= min_points,
            "min margin " + format_real(min_all) + " over " + std::to_string(points.size()) + " points");
  out.check("rme_holdout", min_holdout >= -tol,
            "C fitted on s <= " + format_real(holdout) + " gives min held-out margin " + format_real(min_holdout));
  return out;
}

inline RunOutcome run_claim_fits(const ExperimentConfig& cfg) {
  const LightconeConfig lc = lightcone_config(cfg);
  const LightconeSetup st = build_lightcone_setup(lc);
  const std::vector<double> s = cfg.real_list("claims.s_values");
  const ClaimFit c1 = claim1_fit(st.dxe.op, st.region_mask, st.chi.function(), s, lc.n);
  const ClaimFit c2 = claim2_check(decompose(st.dxe.op), st.g_tilde, st.distance_values, st.chi.function(),
                                   st.aux.chi_tilde, st.v, cfg.real("claims.t_ratio"), s, lc.n);
  RunOutcome out;
  out.table = ResultTable({{"claim", ColumnType::text}, {"s", ColumnType::real}, {"value", ColumnType::real}});
  for (std::size_t i = 0; i < s.size(); ++i) out.table.add_row({std::string("claim1"), s[i], c1.values[i]});
  for (std::size_t i = 0; i < s.size(); ++i) out.table.add_row({std::string("claim2"), s[i], c2.values[i]});
  out.table.set_metadata("n", std::to_string(lc.n));
  out.note("kappa", st.kappa);
  out.note("c", st.c);
  out.note("v", st.v);
  out.note("claim1_slope", c1.slope);
  out.note("claim1_max", c1.max_value);
  out.note("claim2_slope", c2.slope);
  out.note("claim2_max", c2.max_value);
  const std::string limit = format_real(-lc.n + 0.5);
  out.check("claim1", c1.passed, "slope " + format_real(c1.slope) + ", limit " + limit);
  out.check("claim2", c2.passed, "slope " + format_real(c2.slope) + ", limit " + limit + " (or max deficit <= 1e-10)");
  return out;
}

/// The built-in family of the HS check: a cutoff made compact below the
/// spectrum, the plain cutoff (p >= 1), a bump and a plateau.
struct HsFamilyMember {
  std::string name;
  ScalarFunction f;
  int min_p = 0;
};

inline std::vector<HsFamilyMember> hs_family(double energy, double width, double spectrum_bottom) {
  const SmoothCutoff g(energy, width);
  const double floor = std::min(spectrum_bottom, energy - width) - 0.5;
  return {{"cutoff_compact", g.compactified(floor, 1.0), 0},
          {"cutoff", g.function(), 1},
          {"bump", functions::bump(energy - width, 1.5 * width), 0},
          {"plateau", functions::plateau(energy - 2.0 * width, energy - 0.5 * width, 0.5 * width), 0}};
}

/// nu used for order p: the extension keeps nu + 1 - p >= 1 powers of y to spare.
inline int hs_nu(int p) { return std::max(3, p + 2); }

inline RunOutcome run_hs_validation(const ExperimentConfig& cfg) {
  const Grid grid(1, cfg.real("grid.halfwidth"), cfg.integer32("grid.points"));
  const SpectralDecomposition dec = decompose(build_hamiltonian(grid, detail::potential_from(cfg)));
  const auto family = hs_family(cfg.real("hs.cutoff_energy"), cfg.real("hs.cutoff_width"), dec.eigenvalues(0));
  const int max_p = cfg.integer32("hs.max_p"), levels = cfg.integer32("hs.levels");
  struct Job {
    std::size_t member;
    int p;
    int level;
    double error = 0.0;
  };
  std::vector<Job> jobs;
  for (std::size_t m = 0; m < family.size(); ++m)
    for (int p = family[m].min_p; p <= max_p; ++p)
      for (int l = 0; l < levels; ++l) jobs.push_back({m, p, l});
  parallel_for(jobs.size(), cfg.integer32("run.threads"), [&](std::size_t i) {
    Job& j = jobs[i];
    const ScalarFunction& f = family[j.member].f;
    const AlmostAnalyticExtension ext(f, hs_nu(j.p));
    const HermitianOperator approx = hs_apply(ext, dec, j.p, HsQuadrature{}.refined(j.level));
    double fact = 1.0;
    for (int k = 2; k <= j.p; ++k) fact *= k;
    const HermitianOperator exact = apply_function_exact(dec, [&](double x) { return f.derivative(x, j.p) / fact; });
    j.error = operator_norm(approx.matrix() - exact.matrix());
  });

  RunOutcome out;
  out.table = ResultTable({{"function", ColumnType::text},
                           {"p", ColumnType::integer},
                           {"nu", ColumnType::integer},
                           {"level", ColumnType::integer},
                           {"error", ColumnType::real}});
  const double tol = cfg.real("hs.tolerance"), floor = cfg.real("hs.floor");
  double worst_default = 0.0;
  bool monotone = true;
  std::string monotone_detail = "errors decrease under refinement";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Job& j = jobs[i];
    out.table.add_row({family[j.member].name, static_cast<long long>(j.p), static_cast<long long>(hs_nu(j.p)),
                       static_cast<long long>(j.level), j.error});
    if (j.level == 0) worst_default = std::max(worst_default, j.error);
    if (j.level > 0 && j.error > jobs[i - 1].error && j.error > floor) {
      monotone = false;
      monotone_detail = family[j.member].name + " p=" + std::to_string(j.p) + " level " + std::to_string(j.level) +
                        ": " + format_real(j.error) + " > " + format_real(jobs[i - 1].error);
    }
  }
  out.note("worst_default_error", worst_default);
  out.note("tolerance", tol);
  out.check("hs_default", worst_default <= tol, "worst error at default resolution " + format_real(worst_default));
  out.check("hs_monotone", monotone, monotone_detail);
  return out;
}

/// Test function of the commutator check: a bump of half width w centred at
/// w/2, so no low derivative vanishes on a lattice much narrower than w.
inline ScalarFunction commutator_test_function(double w) { return functions::bump(0.5 * w, w); }

inline RunOutcome run_commutator_scaling(const ExperimentConfig& cfg) {
  const Grid grid(1, cfg.real("grid.halfwidth"), cfg.integer32("grid.points"));
  const HermitianOperator h = build_hamiltonian(grid, detail::potential_from(cfg));
  RealVector x(grid.sites());
  for (int s = 0; s < grid.sites(); ++s) x(s) = grid.axis_coordinate(s);
  const HermitianOperator phi = HermitianOperator::diagonal(x, "x");
  const SpectralDecomposition phi_dec = decompose(phi);
  const ScalarFunction f = commutator_test_function(cfg.real("commutator.width"));
  const std::vector<double> s_values = cfg.real_list("commutator.s_values");
  const int max_n = cfg.integer32("commutator.max_order");
  const double alpha = cfg.real("commutator.alpha");

  struct Job {
    int n;
    double s;
    CommutatorExpansion e;
  };
  std::vector<Job> jobs;
  for (int n = 1; n <= max_n; ++n)
    for (double s : s_values) jobs.push_back({n, s, {}});
  parallel_for(jobs.size(), cfg.integer32("run.threads"),
               [&](std::size_t i) { jobs[i].e = commutator_expansion(h.matrix(), phi_dec, f, jobs[i].s, alpha, jobs[i].n); });

  RunOutcome out;
  out.table = ResultTable({{"n", ColumnType::integer},
                           {"s", ColumnType::real},
                           {"left_error", ColumnType::real},
                           {"right_error", ColumnType::real},
                           {"rem_sum", ColumnType::real},
                           {"top_norm", ColumnType::real},
                           {"c", ColumnType::real}});
  const double margin = cfg.real("commutator.slope_margin"), stability = cfg.real("commutator.stability");
  for (int n = 1; n <= max_n; ++n) {
    std::vector<double> s, left, right, c;
    for (const auto& j : jobs) {
      if (j.n != n) continue;
      const double rem = j.e.rem_left_norm + j.e.rem_right_norm;
      const double ci = j.e.top_norm > 0.0 ? rem / j.e.top_norm : 0.0;
      out.table.add_row({static_cast<long long>(n), j.s, j.e.left_error, j.e.right_error, rem, j.e.top_norm, ci});
      s.push_back(j.s);
      left.push_back(j.e.left_error);
      right.push_back(j.e.right_error);
      c.push_back(ci);
    }
    const double sl = loglog_slope(s, left), sr = loglog_slope(s, right);
    const double cmax = *std::max_element(c.begin(), c.end()), cmin = *std::min_element(c.begin(), c.end());
    const double spread = cmax + cmin > 0.0 ? (cmax - cmin) / (cmax + cmin) : 0.0;
    const std::string tag = "_n" + std::to_string(n);
    out.note("slope_left" + tag, sl);
    out.note("slope_right" + tag, sr);
    out.note("c" + tag, cmax);
    out.note("c_spread" + tag, spread);
    const double limit = -(n + 1) + margin;
    out.check("commutator_slope" + tag, sl <= limit && sr <= limit,
              "slopes " + format_real(sl) + " and " + format_real(sr) + ", limit " + format_real(limit));
    out.check("commutator_constant" + tag, spread <= stability,
              "c in [" + format_real(cmin) + ", " + format_real(cmax) + "], relative spread " + format_real(spread));
  }
  return out;
}

/// Random density matrix G G* / Tr(G G*) with complex Gaussian G.
inline Matrix random_density_matrix(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = Complex(normal(rng), normal(rng));
  Matrix rho = g * g.adjoint();
  rho = hermitian_part(rho);
  return rho / rho.trace().real();
}

inline Matrix random_hermitian(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = Complex(normal(rng), normal(rng));
  return hermitian_part(g);
}

inline RunOutcome run_propagator_xcheck(const ExperimentConfig& cfg) {
  const Grid grid(1, cfg.real("grid.halfwidth"), cfg.integer32("grid.points"));
  const HermitianOperator h = build_hamiltonian(grid, detail::potential_from(cfg));
  const JumpFamily jumps = make_jumps(grid, jump_recipe_from_string(cfg.text("jumps.recipe")),
                                      cfg.real("jumps.strength"), detail::jump_options_from(cfg));
  const VNLGenerator gen(h, jumps.jumps);
  std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.integer("run.seed")));
  const DensityMatrix rho0(random_density_matrix(gen.dim(), rng));
  const Matrix observable = random_hermitian(gen.dim(), rng);
  const double horizon = cfg.real("time.horizon");
  const int base = cfg.integer32("xcheck.trotter_base"), levels = cfg.integer32("xcheck.trotter_levels");
  const int finest = base << (levels - 1);

  PropagatorConfig pc;
  pc.samples = cfg.integer32("time.samples");
  pc.dt = cfg.real("propagator.dt");
  pc.tolerance = cfg.real("propagator.tolerance");
  struct Run {
    std::string method;
    long long steps;
    PropagatorConfig pc;
    std::vector<Snapshot<Matrix>> snaps;
  };
  std::vector<Run> runs;
  {
    PropagatorConfig o = pc;
    o.method = PropagatorMethod::superop_exact;
    runs.push_back({"superop_exact", 0, o, {}});
    PropagatorConfig r = pc;
    r.method = PropagatorMethod::rk4;
    runs.push_back({"rk4", std::llround(horizon / pc.dt), r, {}});
    PropagatorConfig t = pc;
    t.method = PropagatorMethod::trotter;
    t.n_steps = finest;
    runs.push_back({"trotter", finest, t, {}});
    for (int i = 0; i < levels; ++i) {
      PropagatorConfig s = pc;
      s.method = PropagatorMethod::trotter;
      s.n_steps = base << i;
      s.samples = 2;
      runs.push_back({"trotter_sweep", base << i, s, {}});
    }
  }
  parallel_for(runs.size(), cfg.integer32("run.threads"),
               [&](std::size_t i) { runs[i].snaps = propagate_unchecked(gen, rho0.matrix(), horizon, runs[i].pc); });
  const auto& oracle = runs.front().snaps;
  auto oracle_at = [&](double t) -> const Matrix& {
    for (const auto& s : oracle)
      if (std::abs(s.t - t) <= 1e-12 * std::max(1.0, horizon)) return s.state;
    throw InvalidArgument("propagator_xcheck: no oracle snapshot at t = " + format_real(t));
  };

  RunOutcome out;
  out.table = ResultTable({{"method", ColumnType::text},
                           {"steps", ColumnType::integer},
                           {"t", ColumnType::real},
                           {"trace_error", ColumnType::real},
                           {"min_eig", ColumnType::real},
                           {"oracle_distance", ColumnType::real}});
  double worst_trace = 0.0, trotter_trace = 0.0, worst_eig = kInf, worst_rk4 = 0.0, worst_trotter = 0.0;
  std::vector<double> sweep_steps, sweep_err;
  for (const auto& r : runs) {
    for (const auto& sn : r.snaps) {
      const double tr = std::abs(sn.state.trace() - Complex(1.0, 0.0));
      const double me = min_eigenvalue(hermitian_part(sn.state));
      const double dist = trace_norm(sn.state - oracle_at(sn.t));
      out.table.add_row({r.method, r.steps, sn.t, tr, me, dist});
      // The Lie splitting loses trace at first order in the step; only the
      // exact and Runge-Kutta flows preserve it to rounding.
      if (r.method == "superop_exact" || r.method == "rk4") worst_trace = std::max(worst_trace, tr);
      worst_eig = std::min(worst_eig, me);
      if (r.method == "rk4") worst_rk4 = std::max(worst_rk4, dist);
      if (r.method == "trotter") {
        worst_trotter = std::max(worst_trotter, dist);
        trotter_trace = std::max(trotter_trace, tr);
      }
      if (r.method == "trotter_sweep" && sn.t > 0.0) {
        sweep_steps.push_back(static_cast<double>(r.steps));
        sweep_err.push_back(dist);
      }
    }
  }
  const double slope = loglog_slope(sweep_steps, sweep_err);

  // Flow-level duality: Tr(beta'_T(A) rho_0) = Tr(A rho_T).
  PropagatorConfig dc = pc;
  dc.method = PropagatorMethod::rk4;
  dc.samples = 2;
  const Matrix a_t = dual_propagate(gen, observable, horizon, dc).back().state;
  const Matrix rho_t = propagate(gen, rho0, horizon, dc).back().state.matrix();
  const double duality = std::abs((a_t * rho0.matrix()).trace() - (observable * rho_t).trace());

  const double tol = cfg.real("xcheck.oracle_tolerance"), slope_margin = cfg.real("xcheck.slope_margin");
  out.note("max_trace_error", worst_trace);
  out.note("trotter_trace_error", trotter_trace);
  out.note("min_eigenvalue", worst_eig);
  out.note("rk4_oracle_distance", worst_rk4);
  out.note("trotter_oracle_distance", worst_trotter);
  out.note("trotter_slope", slope);
  out.note("flow_duality_error", duality);
  out.check("trace", worst_trace <= 1e-8, "max |Tr rho_t - 1| = " + format_real(worst_trace));
  out.check("positivity", worst_eig >= -1e-6, "min eigenvalue " + format_real(worst_eig));
  out.check("rk4_oracle", worst_rk4 <= tol, "trace distance " + format_real(worst_rk4));
  out.check("trotter_oracle", worst_trotter <= tol, "trace distance " + format_real(worst_trotter));
  out.check("trotter_slope", std::abs(slope + 1.0) <= slope_margin, "slope " + format_real(slope));
  out.check("flow_duality", duality <= 1e-8, "|Tr(A_T rho_0) - Tr(A rho_T)| = " + format_real(duality));
  return out;
}

inline RunOutcome run_experiment(const ExperimentConfig& cfg) {
  RunOutcome out;
  switch (cfg.kind()) {
    case ExperimentKind::lightcone: out = run_lightcone(cfg); break;
    case ExperimentKind::kappa_sweep: out = run_kappa_sweep(cfg); break;
    case ExperimentKind::rme_sweep: out = run_rme_sweep(cfg); break;
    case ExperimentKind::claim_fits: out = run_claim_fits(cfg); break;
    case ExperimentKind::hs_validation: out = run_hs_validation(cfg); break;
    case ExperimentKind::commutator_scaling: out = run_commutator_scaling(cfg); break;
    case ExperimentKind::propagator_xcheck: out = run_propagator_xcheck(cfg); break;
  }
  out.table.set_metadata("artifact", std::string("lclab ") + kArtifactVersion);
  out.table.set_metadata("kind", to_string(cfg.kind()));
  out.table.set_metadata("config_hash", config_hash(cfg));
  out.table.set_metadata("seed", std::to_string(cfg.integer("run.seed")));
  // A wall-clock stamp would break byte-identical reruns, so one is written
  // only when the caller pins it through SOURCE_DATE_EPOCH.
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    long long secs = 0;
    if (parse_integer(epoch, secs)) {
      const std::time_t tt = static_cast<std::time_t>(secs);
      std::tm tm{};
      gmtime_r(&tt, &tm);
      char buf[32];
      std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
      out.table.set_metadata("timestamp", buf);
    }
  }
  return out;
}

inline std::string summary_text(const ExperimentConfig& cfg, const RunOutcome& out) {
  std::string s = "kind = " + to_string(cfg.kind()) + "\n";
  s += "config_hash = " + config_hash(cfg) + "\n";
  for (const auto& [k, v] : out.summary) s += k + " = " + v + "\n";
  for (const auto& c : out.checks) s += "check." + c.name + " = " + detail::pass_text(c.passed) + "\n";
  s += std::string("status = ") + (out.passed() ? "ok" : "failed") + "\n";
  return s;
}

/// Writes results.csv, summary.txt and config.resolved under `dir`.
inline void write_outputs(const ExperimentConfig& cfg, const RunOutcome& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidArgument("cannot write " + (dir / name).string());
    f << text;
    if (!f) throw InvalidArgument("failed writing " + (dir / name).string());
  };
  write("results.csv", out.table.to_csv());
  write("summary.txt", summary_text(cfg, out));
  write("config.resolved", serialize_config(cfg));
}

}  // namespace lclab
