#pragma once

#include "lqbridge/csv.hpp"
#include "lqbridge/oracle.hpp"
#include "lqbridge/sinkhorn.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace lqbridge {

inline constexpr const char* kVersion = "0.1.0";

// Configuration problems are reported with their own exception type so the
// CLI can map them to exit code 2 (vs. 1 for check/validation failures).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
  std::string task;  // check | kernel-slice | distance | bridge | validate
  LtvSystem system;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 1;
  nlohmann::json params;  // task-specific parameters
  std::string raw_text;   // exact config bytes (hashed into the manifest)
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j,
                                           const std::string& key,
                                           const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ConfigError("schema error: missing field '" + key + "' in " + where);
  }
  return *it;
}

inline Matrix parse_matrix(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw ConfigError("schema error: " + where + " must be a 2-D array");
  }
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.front().size());
  Matrix M(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) {
      throw ConfigError("schema error: ragged rows in " + where);
    }
    for (int c = 0; c < cols; ++c) M(r, c) = j[r][c].get<double>();
  }
  return M;
}

inline Vector parse_vector(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) {
    throw ConfigError("schema error: " + where + " must be an array");
  }
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

// Coefficient trajectory: a constant matrix (2-D array) or a tabulated object
// {"times": [...], "values": [matrix, ...], "interpolation": "linear"|"cubic"}.
inline MatrixTrajectory parse_trajectory(const nlohmann::json& j,
                                         const std::string& where) {
  if (j.is_array()) return MatrixTrajectory::constant(parse_matrix(j, where));
  if (!j.is_object()) {
    throw ConfigError("schema error: " + where +
                      " must be a matrix or a tabulated object");
  }
  std::vector<double> times;
  for (const auto& t : require_field(j, "times", where)) {
    times.push_back(t.get<double>());
  }
  std::vector<Matrix> values;
  for (const auto& v : require_field(j, "values", where)) {
    values.push_back(parse_matrix(v, where + ".values"));
  }
  Interpolation interp = Interpolation::Linear;
  if (j.value("interpolation", "linear") == std::string("cubic")) {
    interp = Interpolation::Cubic;
  }
  return MatrixTrajectory::tabulated(std::move(times), std::move(values),
                                     interp);
}

inline LtvSystem parse_system(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("schema error: 'system' must be an object");
  const double t0 = j.value("t0", 0.0);
  const double t1 = j.value("t1", 1.0);
  if (j.contains("builtin")) {
    const std::string name = j["builtin"].get<std::string>();
    if (name == "heat") return heat_system(j.value("n", 1), t0, t1);
    if (name == "diagonal") {
      return diagonal_system(
          parse_vector(require_field(j, "D", "system"), "system.D"), t0, t1);
    }
    if (name == "linear_example") return linear_example_system(t0, t1);
    throw ConfigError("schema error: unknown builtin system '" + name + "'");
  }
  try {
    MatrixTrajectory A = parse_trajectory(require_field(j, "A", "system"), "system.A");
    MatrixTrajectory B = parse_trajectory(require_field(j, "B", "system"), "system.B");
    const int n = A.rows();
    const int m = B.cols();
    MatrixTrajectory Q = j.contains("Q")
                             ? parse_trajectory(j["Q"], "system.Q")
                             : MatrixTrajectory::zero(n, n);
    return make_ltv_system(n, m, std::move(A), std::move(B), std::move(Q), t0,
                           t1, j.value("name", std::string()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("schema error in 'system': ") + e.what());
  }
}

inline Density parse_density(const nlohmann::json& j, const std::string& where) {
  const std::string type = require_field(j, "type", where).get<std::string>();
  if (type == "gaussian_mixture") {
    std::vector<GaussianComponent> comps;
    for (const auto& c : require_field(j, "components", where)) {
      GaussianComponent g;
      g.w = c.value("weight", 1.0);
      g.m = parse_vector(require_field(c, "mean", where), where + ".mean");
      g.Sigma = parse_matrix(require_field(c, "cov", where), where + ".cov");
      comps.push_back(std::move(g));
    }
    try {
      return Density::mixture(std::move(comps));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("schema error in " + where + ": " + e.what());
    }
  }
  if (type == "grid") {
    const Vector lo = parse_vector(require_field(j, "lo", where), where);
    const Vector hi = parse_vector(require_field(j, "hi", where), where);
    std::vector<int> res;
    for (const auto& r : require_field(j, "res", where)) res.push_back(r.get<int>());
    const Vector vals = parse_vector(require_field(j, "values", where), where);
    try {
      return Density::grid(GridSpec::make(lo, hi, res), vals);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("schema error in " + where + ": " + e.what());
    }
  }
  throw ConfigError("schema error: unknown density type '" + type + "' in " +
                    where);
}

// FNV-1a over the raw config bytes; stable fingerprint for the run manifest.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  ScenarioConfig cfg;
  cfg.raw_text = json_text;
  cfg.task = detail::require_field(j, "task", "config").get<std::string>();
  static const char* kTasks[] = {"check", "kernel-slice", "distance", "bridge",
                                 "validate"};
  bool known = false;
  for (const char* t : kTasks) known = known || cfg.task == t;
  if (!known) throw ConfigError("schema error: unknown task '" + cfg.task + "'");
  cfg.system = detail::parse_system(detail::require_field(j, "system", "config"));
  cfg.out_dir = j.value("out_dir", std::string("."));
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.threads = j.value("threads", 1);
  if (cfg.threads < 1) throw ConfigError("schema error: threads must be >= 1");
  cfg.params = j.value("params", nlohmann::json::object());
  for (const auto& [key, val] : cfg.params.items()) {
    if (key.size() >= 3 && key.substr(key.size() - 3) == "tol" &&
        !(val.is_number() && val.get<double>() > 0.0)) {
      throw ConfigError("schema error: tolerance '" + key + "' must be > 0");
    }
  }
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str());
}

// ---------------------------------------------------------------------------
// Task runners
// ---------------------------------------------------------------------------

namespace detail {

inline std::string out_path(const ScenarioConfig& cfg, const std::string& name) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

inline void write_manifest(const ScenarioConfig& cfg,
                           const std::vector<std::string>& artifacts,
                           double wall_seconds) {
  nlohmann::json m;
  m["task"] = cfg.task;
  m["config_hash"] = fnv1a_hex(cfg.raw_text);
  m["version"] = kVersion;
  m["seed"] = cfg.seed;
  m["threads"] = cfg.threads;
  m["wall_time_seconds"] = wall_seconds;
  m["artifacts"] = artifacts;
  std::ofstream f(out_path(cfg, "run_manifest.json"), std::ios::binary);
  f << m.dump(2) << "\n";
}

inline int run_check(const ScenarioConfig& cfg,
                     std::vector<std::string>* artifacts) {
  const double tol = cfg.params.value("tol", 1e-9);
  const AssumptionReport rep = check_assumptions(cfg.system, tol);
  CsvTable t;
  t.columns = {"check", "observed", "verdict"};
  t.add_row({std::string("gramian_min_eig"), rep.gramian_min_eig,
             std::string(rep.controllable ? "pass" : "fail")});
  t.add_row({std::string("q_psd_on_scan"), rep.q_psd_ok ? 1.0 : 0.0,
             std::string(rep.q_psd_ok ? "pass" : "fail")});
  t.add_row({std::string("q_pd_witness"),
             rep.q_pd_witness ? *rep.q_pd_witness
                              : std::numeric_limits<double>::quiet_NaN(),
             std::string(rep.q_pd_witness ? "present" : "absent")});
  const std::string path = out_path(cfg, "check_report.csv");
  emit_csv(t, path);
  artifacts->push_back(path);
  std::cout << "assumption check: controllable="
            << (rep.controllable ? "yes" : "no")
            << " (min Gramian eig " << rep.gramian_min_eig << "), Q PSD="
            << (rep.q_psd_ok ? "yes" : "no") << ", strict-PD witness="
            << (rep.q_pd_witness ? std::to_string(*rep.q_pd_witness) : "none")
            << "\n";
  return (rep.controllable && rep.q_psd_ok) ? 0 : 1;
}

inline int run_kernel_slice(const ScenarioConfig& cfg,
                            std::vector<std::string>* artifacts) {
  const double t = require_field(cfg.params, "t", "params").get<double>();
  const Vector x = parse_vector(require_field(cfg.params, "x", "params"),
                                "params.x");
  const auto& gj = require_field(cfg.params, "grid", "params");
  const Vector lo = parse_vector(require_field(gj, "lo", "params.grid"),
                                 "params.grid.lo");
  const Vector hi = parse_vector(require_field(gj, "hi", "params.grid"),
                                 "params.grid.hi");
  std::vector<int> res;
  for (const auto& r : require_field(gj, "res", "params.grid")) {
    res.push_back(r.get<int>());
  }
  const GridSpec grid = GridSpec::make(lo, hi, res);
  if (grid.dim() != cfg.system.n || x.size() != cfg.system.n) {
    throw ConfigError("schema error: slice grid/x dimension mismatch");
  }

  const KernelEvaluator K = make_kernel(cfg.system, cfg.system.t0, t);
  CsvTable table;
  for (int a = 0; a < grid.dim(); ++a) {
    table.columns.push_back("y" + std::to_string(a));
  }
  table.columns.push_back("kappa");
  for (int i = 0; i < grid.total(); ++i) {
    const Vector y = grid.point(i);
    std::vector<CsvCell> row;
    for (int a = 0; a < grid.dim(); ++a) row.push_back(y[a]);
    row.push_back(K(x, y));
    table.add_row(std::move(row));
  }
  const std::string csv_path = out_path(cfg, "kernel_slice.csv");
  emit_csv(table, csv_path);
  artifacts->push_back(csv_path);

  nlohmann::json meta;
  meta["a"] = K.a;
  meta["log_c"] = K.log_c;
  switch (K.case_tag) {
    case KernelCase::Heat: meta["case_tag"] = "heat"; break;
    case KernelCase::Linear: meta["case_tag"] = "linear"; break;
    case KernelCase::Diagonal: meta["case_tag"] = "diagonal"; break;
    default: meta["case_tag"] = "general"; break;
  }
  meta["t0"] = K.t0();
  meta["t"] = K.t();
  meta["resolution"] = res;
  const std::string meta_path = out_path(cfg, "kernel_slice.json");
  std::ofstream mf(meta_path, std::ios::binary);
  mf << meta.dump(2) << "\n";
  artifacts->push_back(meta_path);
  std::cout << "kernel slice: " << grid.total() << " points, a=" << K.a << "\n";
  return 0;
}

inline int run_distance(const ScenarioConfig& cfg,
                        std::vector<std::string>* artifacts) {
  const double t = require_field(cfg.params, "t", "params").get<double>();
  const ClosedLoopSystem cl = closed_loop(cfg.system, t);
  const DistanceForm M = distance_form(cl);
  const int n = cfg.system.n;

  CsvTable table;
  for (int a = 0; a < n; ++a) table.columns.push_back("x" + std::to_string(a));
  for (int a = 0; a < n; ++a) table.columns.push_back("y" + std::to_string(a));
  table.columns.push_back("half_dist_sq");
  for (const auto& pair : require_field(cfg.params, "pairs", "params")) {
    const Vector x = parse_vector(require_field(pair, "x", "params.pairs"),
                                  "params.pairs.x");
    const Vector y = parse_vector(require_field(pair, "y", "params.pairs"),
                                  "params.pairs.y");
    std::vector<CsvCell> row;
    for (int a = 0; a < n; ++a) row.push_back(x[a]);
    for (int a = 0; a < n; ++a) row.push_back(y[a]);
    row.push_back(squared_distance(M, x, y));
    table.add_row(std::move(row));
  }
  const std::string csv_path = out_path(cfg, "distance.csv");
  emit_csv(table, csv_path);
  artifacts->push_back(csv_path);

  if (cfg.params.value("dump_riccati", false)) {
    CsvTable rt;
    rt.columns.push_back("tau");
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        rt.columns.push_back("pi_" + std::to_string(r) + std::to_string(c));
      }
    }
    for (std::size_t k = 0; k < cl.pi->grid.size(); ++k) {
      std::vector<CsvCell> row;
      row.push_back(cl.pi->grid[k]);
      const Matrix& P = cl.pi->values[k];
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) row.push_back(P(r, c));
      }
      rt.add_row(std::move(row));
    }
    const std::string rp = out_path(cfg, "riccati.csv");
    emit_csv(rt, rp);
    artifacts->push_back(rp);
  }

  nlohmann::json meta;
  auto dump_mat = [](const Matrix& A) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < A.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < A.cols(); ++c) row.push_back(A(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  meta["M11"] = dump_mat(M.M11);
  meta["M12"] = dump_mat(M.M12);
  meta["M22"] = dump_mat(M.M22);
  meta["strictly_pd"] = M.strictly_pd;
  const std::string meta_path = out_path(cfg, "distance.json");
  std::ofstream mf(meta_path, std::ios::binary);
  mf << meta.dump(2) << "\n";
  artifacts->push_back(meta_path);
  std::cout << "distance form over [" << M.t0 << ", " << M.t << "]: "
            << table.rows.size() << " pairs\n";
  return 0;
}

inline int run_bridge(const ScenarioConfig& cfg,
                      std::vector<std::string>* artifacts) {
  const Density rho0 = parse_density(
      require_field(cfg.params, "rho0", "params"), "params.rho0");
  const Density rho1 = parse_density(
      require_field(cfg.params, "rho1", "params"), "params.rho1");
  const double tol = cfg.params.value("tol", 1e-9);
  const int max_iter = cfg.params.value("max_iter", 500);
  const int res = cfg.params.value("grid_res", 256);
  const int slices = cfg.params.value("time_slices", 11);
  const LtvSystem& sys = cfg.system;

  const KernelEvaluator K = make_kernel(sys, sys.t0, sys.t1);
  const SinkhornState st = sinkhorn_solve(K, rho0, rho1, tol, max_iter, res);

  CsvTable trace;
  trace.columns = {"iteration", "hilbert_gap", "residual0", "residual1"};
  for (std::size_t k = 0; k < st.hilbert_gaps.size(); ++k) {
    trace.add_row({static_cast<double>(k + 1), st.hilbert_gaps[k],
                   st.residual_trace0[k], st.residual_trace1[k]});
  }
  const std::string tp = out_path(cfg, "convergence_trace.csv");
  emit_csv(trace, tp);
  artifacts->push_back(tp);

  KernelFamily family(sys, sys.t0, sys.t1);
  const int n = sys.n;
  for (int s = 0; s < slices; ++s) {
    const double t = sys.t0 + (sys.t1 - sys.t0) * s / (slices - 1);
    const auto [phihat_t, phi_t] = propagate_potentials(family, st, t, rho0, rho1);
    const GridSpec& g = phihat_t.grid();
    CsvTable marg;
    for (int a = 0; a < n; ++a) marg.columns.push_back("x" + std::to_string(a));
    marg.columns.push_back("rho");
    CsvTable ctrl;
    for (int a = 0; a < n; ++a) ctrl.columns.push_back("x" + std::to_string(a));
    for (int a = 0; a < sys.m; ++a) ctrl.columns.push_back("u" + std::to_string(a));
    const Matrix Bt = sys.B(t).transpose();
    for (int i = 0; i < g.total(); ++i) {
      const Vector x = g.point(i);
      std::vector<CsvCell> mrow, crow;
      for (int a = 0; a < n; ++a) mrow.push_back(x[a]);
      mrow.push_back(std::exp(phihat_t.log_value(x) + phi_t.log_value(x)));
      marg.add_row(std::move(mrow));
      // u = B' grad log phi via the grid interpolant (central differences).
      Vector grad(n);
      for (int a = 0; a < n; ++a) {
        const double h = 0.5 * g.step(a);
        Vector xp = x, xm = x;
        xp[a] = std::min(xp[a] + h, g.hi[a]);
        xm[a] = std::max(xm[a] - h, g.lo[a]);
        grad[a] = (phi_t.log_value(xp) - phi_t.log_value(xm)) / (xp[a] - xm[a]);
      }
      const Vector u = Bt * grad;
      for (int a = 0; a < n; ++a) crow.push_back(x[a]);
      for (int a = 0; a < sys.m; ++a) crow.push_back(u[a]);
      ctrl.add_row(std::move(crow));
    }
    char tag[16];
    std::snprintf(tag, sizeof(tag), "%03d", s);
    const std::string mp = out_path(cfg, std::string("marginal_") + tag + ".csv");
    const std::string cp = out_path(cfg, std::string("control_") + tag + ".csv");
    emit_csv(marg, mp);
    emit_csv(ctrl, cp);
    artifacts->push_back(mp);
    artifacts->push_back(cp);
  }

  std::cout << "bridge: " << st.iterations << " iterations, converged="
            << (st.converged ? "yes" : "no") << ", marginal residuals ("
            << st.marginal_residual0 << ", " << st.marginal_residual1 << ")\n";
  return st.converged ? 0 : 1;
}

struct ValidationRow {
  std::string check;
  std::string configuration;
  double observed;
  double expected;
  double tolerance;
  bool pass;
};

inline int run_validate(const ScenarioConfig& cfg,
                        std::vector<std::string>* artifacts) {
  const LtvSystem& sys = cfg.system;
  std::vector<ValidationRow> rows;
  auto add = [&](std::string check, std::string config, double obs, double exp,
                 double tol) {
    rows.push_back({std::move(check), std::move(config), obs, exp, tol,
                    std::abs(obs - exp) <= tol});
  };

  const double t = sys.t1;
  const double span = t - sys.t0;
  const ClosedLoopSystem cl = closed_loop(sys, t);
  const DistanceForm M = distance_form(cl);
  SplitMix64 rng(cfg.seed);
  auto rand_vec = [&](int n) {
    Vector v(n);
    for (int a = 0; a < n; ++a) v[a] = rng.normal();
    return v;
  };

  // Distance vs direct-transcription BVP.
  for (int k = 0; k < 3; ++k) {
    const Vector x = rand_vec(sys.n), y = rand_vec(sys.n);
    const double d2 = squared_distance(M, x, y);
    const OcpSolution ocp = solve_bvp_ocp(sys, x, y, sys.t0, t, 512);
    add("bvp_cost_vs_distance", "pair " + std::to_string(k), ocp.eta, d2,
        1e-4 * std::max(1.0, std::abs(d2)));
  }

  // Riccati cross-method.
  {
    const Matrix pi_rk4 = cl.pi->at_time(sys.t0);
    const Matrix pi_lft =
        riccati_via_hamiltonian(sys, Matrix::Zero(sys.n, sys.n), t, sys.t0);
    add("riccati_cross_method", "K1 = 0", (pi_rk4 - pi_lft).norm(), 0.0, 1e-7);
  }

  // Hamiltonian-sweep distance form vs Riccati/Gramian route.
  {
    const DistanceForm Mh = distance_form_via_hamiltonian(sys, sys.t0, t);
    add("distance_blocks_cross_method", "full horizon",
        (M.full() - Mh.full()).norm(), 0.0, 1e-6);
  }

  // PDE residual second-order decay.
  {
    const Vector x = rand_vec(sys.n), y = rand_vec(sys.n);
    const KernelEvaluator K = make_kernel(sys, sys.t0, t);
    const double r1 = pde_residual(K, sys, t, x, y, 2e-3);
    const double r2 = pde_residual(K, sys, t, x, y, 1e-3);
    add("pde_residual_order", "h 2e-3 -> 1e-3", r1 / r2, 4.0, 0.5);
  }

  // Feynman-Kac vs kernel quadrature (phi1 == 1).
  {
    const Vector x = Vector::Zero(sys.n);
    const MixturePotential one = MixturePotential::constant(sys.n, 1.0);
    const KernelEvaluator K = make_kernel(sys, sys.t0, t);
    const MixturePotential back = transform_backward(K, one);
    const double exact = std::exp(back.log_value(x));
    const FkEstimate est =
        feynman_kac(sys, [&](const Vector& v) { return 1.0; }, sys.t0, x, t,
                    20000, span / 1000.0, cfg.seed + 1, cfg.threads);
    add("feynman_kac_survival", "20000 paths", est.mean, exact,
        3.0 * std::max(est.std_error, 1e-12));
  }

  // Delta limit of the kernel transform.
  {
    const MixturePotential f(sys.n, {MixturePotential::conic_gaussian(
                                        1.0, Vector::Zero(sys.n),
                                        Matrix::Identity(sys.n, sys.n))});
    const Vector x = 0.3 * Vector::Ones(sys.n);
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (double dt : {1e-1, 1e-2, 1e-3}) {
      LtvSystem sub = sys;
      sub.t1 = sys.t0 + dt;
      const KernelEvaluator K = make_kernel(sub, sub.t0, sub.t1);
      const MixturePotential img = transform_backward(K, f);
      const double err = std::abs(std::exp(img.log_value(x)) -
                                  std::exp(f.log_value(x)));
      monotone = monotone && (err < prev);
      prev = err;
    }
    add("delta_limit_monotone", "dt 1e-1,1e-2,1e-3", monotone ? 1.0 : 0.0, 1.0,
        0.5);
  }

  CsvTable table;
  table.columns = {"check", "configuration", "observed", "expected",
                   "tolerance", "verdict"};
  bool all_pass = true;
  for (const ValidationRow& r : rows) {
    all_pass = all_pass && r.pass;
    table.add_row({r.check, r.configuration, r.observed, r.expected,
                   r.tolerance, std::string(r.pass ? "pass" : "fail")});
    std::cout << (r.pass ? "pass" : "FAIL") << "  " << r.check << " ("
              << r.configuration << "): observed " << r.observed
              << ", expected " << r.expected << " +- " << r.tolerance << "\n";
  }
  const std::string path = out_path(cfg, "validation_report.csv");
  emit_csv(table, path);
  artifacts->push_back(path);
  return all_pass ? 0 : 1;
}

}  // namespace detail

// Executes the configured task and writes its artifacts plus a run manifest.
// Returns the process exit status: 0 success, 1 check/validation failure.
// Configuration problems throw ConfigError (mapped to exit 2 by the CLI).
inline int run(const ScenarioConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> artifacts;
  int status = 2;
  if (cfg.task == "check") {
    status = detail::run_check(cfg, &artifacts);
  } else if (cfg.task == "kernel-slice") {
    status = detail::run_kernel_slice(cfg, &artifacts);
  } else if (cfg.task == "distance") {
    status = detail::run_distance(cfg, &artifacts);
  } else if (cfg.task == "bridge") {
    status = detail::run_bridge(cfg, &artifacts);
  } else if (cfg.task == "validate") {
    status = detail::run_validate(cfg, &artifacts);
  } else {
    throw ConfigError("unknown task '" + cfg.task + "'");
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  detail::write_manifest(cfg, artifacts, wall);
  return status;
}

}  // namespace lqbridge
