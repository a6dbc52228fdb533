#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pinchlab/error.hpp"
#include "pinchlab/geodesy.hpp"
#include "pinchlab/hypersurface.hpp"
#include "pinchlab/lab.hpp"
#include "pinchlab/pinching.hpp"
#include "pinchlab/spectra.hpp"
#include "pinchlab/spheremap.hpp"

using namespace pinchlab;
using ojson = nlohmann::ordered_json;

namespace {

struct CommonOptions {
  std::string mesh;
  std::string json_out;
  std::string csv_dir;
  std::uint64_t seed = 1;
  bool oracle_dense = false;
  double tol_solver = 1e-10;
  double tol_shift = -0.01;
  std::vector<std::string> tol_checks;
};

void add_common(CLI::App* sub, CommonOptions& o, bool with_mesh = true) {
  if (with_mesh) sub->add_option("--mesh", o.mesh, "Mesh file (.off or intrinsic .json); default unit icosphere, 5 subdivisions");
  sub->add_option("--json", o.json_out, "Write the JSON result here");
  sub->add_option("--csv-dir", o.csv_dir, "Write CSV tables into this directory");
  sub->add_option("--seed", o.seed, "Random seed");
  sub->add_flag("--oracle-dense", o.oracle_dense, "Use the dense eigensolver");
  sub->add_option("--tol-solver", o.tol_solver, "Relative residual tolerance of the eigensolver");
  sub->add_option("--tol-shift", o.tol_shift, "Shift of the shift-invert eigensolver");
  sub->add_option("--tol-check", o.tol_checks, "Override a check threshold, NAME=VALUE (repeatable)");
}

SimplicialSurface load_or_default(const CommonOptions& o) {
  if (o.mesh.empty()) return generate_icosphere(1.0, 5);
  return load_mesh(o.mesh);
}

Spectrum solve(const CommonOptions& o, const OperatorPencil& P, int k) {
  if (o.oracle_dense) return solve_dense(P, k);
  SolveOptions options;
  options.tol = o.tol_solver;
  options.shift = o.tol_shift;
  return solve_smallest(P, k, options);
}

// Smallest spectrum reaching above the band.
Spectrum spectrum_above(const CommonOptions& o, const OperatorPencil& P, const ProjectionSpec& band) {
  int k = 12;
  for (;;) {
    Spectrum S = solve(o, P, std::min(k, P.dimension()));
    if (S.eigenvalues.back() > band.high() || S.size() == P.dimension()) return S;
    k *= 2;
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

void emit(const CommonOptions& o, const ojson& j) {
  std::cout << j.dump(2) << '\n';
  if (!o.json_out.empty()) write_text(o.json_out, j.dump(2) + "\n");
}

void emit_csv(const CommonOptions& o, const std::string& name, const std::string& csv) {
  if (o.csv_dir.empty()) return;
  std::filesystem::create_directories(o.csv_dir);
  write_text((std::filesystem::path(o.csv_dir) / name).string(), csv);
}

ojson parsed(const std::string& text) { return ojson::parse(text); }

FunctionField z_band_function(const SimplicialSurface& m, const Spectrum& S) {
  const auto z = FunctionField::from_positions(m, [](const Vec3& p) { return p.z(); });
  return normalize_band_function(project_band(ProjectionSpec(2, 0.25), S, z));
}

ExperimentConfig config_from(const CommonOptions& o, const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  if (!o.mesh.empty()) c.mesh_path = o.mesh;
  c.seed = o.seed;
  c.oracle_dense = o.oracle_dense;
  c.solver_tol = o.tol_solver;
  c.solver_shift = o.tol_shift;
  c.csv_dir = o.csv_dir;
  for (const auto& item : o.tol_checks) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--tol-check expects NAME=VALUE, got '" + item + "'");
    c.tolerances[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
  }
  return c;
}

void print_report(const ExperimentReport& r) {
  std::cout << "criterion " << r.criterion << " (" << r.experiment << "): " << (r.pass ? "PASS" : "FAIL") << '\n';
  for (const auto& c : r.checks)
    std::cout << "  " << (c.pass ? "ok   " : "FAIL ") << c.name << " = " << c.value << ' ' << c.relation << ' '
              << c.threshold << (c.detail.empty() ? "" : "  [" + c.detail + "]") << '\n';
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pinching and eigenfunction experiments on simplicial surfaces"};
  app.require_subcommand(1);

  // gen
  GeneratorSpec gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a surface mesh");
  gen_cmd->add_option("kind", gen.kind, "icosphere | ellipsoid | torus | perturbed")
      ->required()
      ->check(CLI::IsMember({"icosphere", "ellipsoid", "torus", "perturbed"}));
  gen_cmd->add_option("--radius", gen.radius);
  gen_cmd->add_option("--subdiv", gen.subdivisions);
  gen_cmd->add_option("--a", gen.a);
  gen_cmd->add_option("--b", gen.b);
  gen_cmd->add_option("--c", gen.c);
  gen_cmd->add_option("--l1", gen.length1);
  gen_cmd->add_option("--l2", gen.length2);
  gen_cmd->add_option("--n1", gen.n1);
  gen_cmd->add_option("--n2", gen.n2);
  gen_cmd->add_option("--amplitude", gen.amplitude);
  gen_cmd->add_option("--frequency", gen.frequency);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen_out, "Output path (.off, or .json for intrinsic meshes)")->required();

  CommonOptions spec_o, pinch_o, omega_o, map_o, susp_o, hyp_o, gh_o, exc_o, rep_o;

  std::string op = "laplace";
  int spec_k = 10;
  auto* spec_cmd = app.add_subcommand("spectrum", "Smallest eigenpairs of the Laplacian or the bundle Laplacian");
  add_common(spec_cmd, spec_o);
  spec_cmd->add_option("--op", op)->check(CLI::IsMember({"laplace", "bundle"}));
  spec_cmd->add_option("-k", spec_k)->check(CLI::PositiveNumber);

  int pinch_n = 2;
  double pinch_delta = 0.25;
  auto* pinch_cmd = app.add_subcommand("pinch", "Pinching of the eigenfunctions in the band [n - sqrt(delta), n + sqrt(delta)]");
  add_common(pinch_cmd, pinch_o);
  pinch_cmd->add_option("--n", pinch_n);
  pinch_cmd->add_option("--delta", pinch_delta);

  int omega_k_value = 1;
  auto* omega_cmd = app.add_subcommand("omega", "Omega_k in the truncated eigenbasis");
  add_common(omega_cmd, omega_o);
  omega_cmd->add_option("-k", omega_k_value)->check(CLI::PositiveNumber);

  double map_delta = 0.25;
  int map_samples = 40;
  double map_spacing = 2.0;
  auto* map_cmd = app.add_subcommand("sphere-map", "Eigenfunction map into S^2 and its quality");
  add_common(map_cmd, map_o);
  map_cmd->add_option("--delta", map_delta);
  map_cmd->add_option("--samples", map_samples);
  map_cmd->add_option("--net-spacing", map_spacing, "Net spacing in degrees");

  int susp_samples = 48;
  auto* susp_cmd = app.add_subcommand("suspension-fit", "Distortion of the suspension map between antipodal poles");
  add_common(susp_cmd, susp_o);
  susp_cmd->add_option("--samples", susp_samples);

  double hyp_k = 0.0;
  auto* hyp_cmd = app.add_subcommand("hypersurface", "Shape operator, umbilicity and eigenvalue bounds");
  add_common(hyp_cmd, hyp_o);
  hyp_cmd->add_option("--ricci-k", hyp_k, "Ricci lower-bound constant for the Cheng-Zhou check");

  std::string gh_a, gh_b;
  auto* gh_cmd = app.add_subcommand("gh-oracle", "Exact Gromov-Hausdorff distance of two small metric spaces");
  add_common(gh_cmd, gh_o, false);
  gh_cmd->add_option("FILE_A", gh_a)->required()->check(CLI::ExistingFile);
  gh_cmd->add_option("FILE_B", gh_b)->required()->check(CLI::ExistingFile);

  int exc_p = -1, exc_q = -1;
  auto* exc_cmd = app.add_subcommand("excess", "Largest excess d(p,x) + d(q,x) - d(p,q) over all vertices");
  add_common(exc_cmd, exc_o);
  exc_cmd->add_option("--p", exc_p)->required();
  exc_cmd->add_option("--q", exc_q)->required();

  auto* rep_cmd = app.add_subcommand("report", "Run every experiment and bundle the reports");
  add_common(rep_cmd, rep_o);

  std::string run_config;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment from a JSON config");
  run_cmd->add_option("CONFIG", run_config)->required();

  std::string exp_name;
  CommonOptions exp_o;
  auto* exp_cmd = app.add_subcommand("experiment", "Run one named experiment");
  add_common(exp_cmd, exp_o);
  exp_cmd->add_option("NAME", exp_name)->required()->check(CLI::IsMember(experiment_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*gen_cmd) {
      const SimplicialSurface m = gen.generate();
      save_mesh(m, gen_out);
      std::cout << gen.key() << ": " << m.num_vertices() << " vertices, " << m.num_faces() << " faces -> " << gen_out
                << '\n';
      return kExitPass;
    }

    if (*spec_cmd) {
      const SimplicialSurface m = load_or_default(spec_o);
      const OperatorPencil P = op == "bundle" ? assemble_bundle_laplacian(TransportAtlas(m)) : assemble_laplacian(m);
      const Spectrum S = solve(spec_o, P, spec_k);
      std::ostringstream csv;
      csv.precision(17);
      csv << "index,eigenvalue,residual\n";
      for (int i = 0; i < S.size(); ++i) csv << i << ',' << S.eigenvalues[i] << ',' << S.residuals[i] << '\n';
      std::cout << csv.str();
      emit_csv(spec_o, "spectrum.csv", csv.str());
      if (!spec_o.json_out.empty()) write_text(spec_o.json_out, ojson{{"schema", 1}, {"op", op}, {"spectrum", parsed(to_json(S))}}.dump(2) + "\n");
      return kExitPass;
    }

    if (*pinch_cmd) {
      const SimplicialSurface m = load_or_default(pinch_o);
      const OperatorSet ops(m);
      const ProjectionSpec band(pinch_n, pinch_delta);
      const Spectrum S = spectrum_above(pinch_o, ops.laplacian, band);
      std::vector<FunctionField> fields;
      std::vector<std::string> names;
      for (int j : band_indices(band, S)) {
        fields.push_back(S.eigenfunction(j));
        names.push_back("phi_" + std::to_string(j));
      }
      if (fields.empty()) throw Rejected("no eigenvalue in the band");
      const PinchReport r = certify_subspace_pinching(fields, ops, names, &S, band);
      emit(pinch_o, ojson{{"schema", 1}, {"pinching", parsed(to_json(r))}});
      emit_csv(pinch_o, "pinch.csv", to_csv(r));
      return kExitPass;
    }

    if (*omega_cmd) {
      const SimplicialSurface m = load_or_default(omega_o);
      const OperatorSet ops(m);
      const Spectrum S = solve(omega_o, ops.laplacian, std::min(ops.laplacian.dimension(), std::max(61, 20 * omega_k_value + 1)));
      const OmegaResult r = omega_k(ops, S, omega_k_value);
      emit(omega_o, ojson{{"schema", 1},
                          {"omega", ojson{{"k", r.k},
                                          {"sup_inf", r.value},
                                          {"inf_sup", r.inf_sup},
                                          {"basis_size", r.basis_size},
                                          {"converged", r.converged}}}});
      return kExitPass;
    }

    if (*map_cmd) {
      const SimplicialSurface m = load_or_default(map_o);
      const ProjectionSpec band(2, map_delta);
      const Spectrum S = spectrum_above(map_o, assemble_laplacian(m), band);
      SphereMapReport rep = build_sphere_map(m, S, band);
      const DistanceEngine engine(m);
      map_quality(engine, rep, map_samples, map_spacing);
      emit(map_o, ojson{{"schema", 1}, {"sphere_map", parsed(to_json(rep))}});
      emit_csv(map_o, "sphere_net.csv", net_csv(rep));
      return kExitPass;
    }

    if (*susp_cmd) {
      const SimplicialSurface m = load_or_default(susp_o);
      const OperatorSet ops(m);
      const Spectrum S = spectrum_above(susp_o, ops.laplacian, ProjectionSpec(2, 0.25));
      const DistanceEngine engine(m);
      const PoleDecomposition dec = locate_poles(engine, ops.atlas, z_band_function(m, S));
      if (!dec.success || dec.pairs.empty()) throw Rejected("pole decomposition failed: " + dec.diagnostic);
      SuspensionOptions options;
      options.samples = susp_samples;
      const SuspensionFit fit = suspension_fit(engine, dec, 0, options);
      emit(susp_o, ojson{{"schema", 1}, {"poles", dec.poles}, {"suspension", parsed(to_json(fit))}});
      return kExitPass;
    }

    if (*hyp_cmd) {
      const SimplicialSurface m = load_or_default(hyp_o);
      const OperatorSet ops(m);
      const ShapeField shape = shape_operator(m);
      const Spectrum B = solve(hyp_o, ops.bundle, 6);
      const Spectrum L = solve(hyp_o, ops.laplacian, 10);
      const UmbilicEigenBound ub = umbilic_eigen_bound_check(m, shape, ops.bundle, B);
      const ChengZhouReilly cz = cheng_zhou_and_reilly_check(m, shape, L, hyp_k);
      emit(hyp_o, ojson{{"schema", 1},
                        {"hypersurface", ojson{{"umbilicity", parsed(to_json(umbilicity_report(m, shape)))},
                                               {"eigen_bound", parsed(to_json(ub))},
                                               {"cheng_zhou_reilly", parsed(to_json(cz))}}}});
      emit_csv(hyp_o, "shape.csv", shape_csv(shape));
      return ub.pass && cz.cz_pass && cz.reilly_pass ? kExitPass : kExitFail;
    }

    if (*gh_cmd) {
      const auto A = FiniteMetricSpace::load(gh_a);
      const auto B = FiniteMetricSpace::load(gh_b);
      const double value = gh_bruteforce(A, B);
      emit(gh_o, ojson{{"schema", 1}, {"gh", ojson{{"a", gh_a}, {"b", gh_b}, {"distance", value}}}});
      return kExitPass;
    }

    if (*exc_cmd) {
      const SimplicialSurface m = load_or_default(exc_o);
      if (exc_p < 0 || exc_p >= m.num_vertices() || exc_q < 0 || exc_q >= m.num_vertices())
        throw InvalidArgument("--p and --q must be vertex indices");
      const DistanceEngine engine(m);
      const DistanceField dp = engine.from(exc_p), dq = engine.from(exc_q);
      double worst = -1.0;
      int arg = 0;
      for (int x = 0; x < m.num_vertices(); ++x) {
        const double e = excess(dp, dq, x);
        if (e > worst) {
          worst = e;
          arg = x;
        }
      }
      emit(exc_o, ojson{{"schema", 1},
                        {"excess", ojson{{"p", exc_p},
                                         {"q", exc_q},
                                         {"distance", dp[exc_q]},
                                         {"max_excess", worst},
                                         {"argmax", arg}}}});
      return kExitPass;
    }

    if (*rep_cmd || *exp_cmd || *run_cmd) {
      std::vector<ExperimentConfig> configs;
      if (*run_cmd) {
        configs.push_back(load_config(run_config));
      } else if (*exp_cmd) {
        ExperimentConfig c = config_from(exp_o, exp_name);
        c.json_out = exp_o.json_out;
        configs.push_back(c);
      } else {
        for (const auto& name : experiment_names()) {
          ExperimentConfig c = config_from(rep_o, name);
          if (!rep_o.csv_dir.empty()) c.csv_dir = (std::filesystem::path(rep_o.csv_dir) / name).string();
          configs.push_back(c);
        }
      }
      bool all = true;
      ojson bundle = ojson::array();
      for (const auto& c : configs) {
        const ExperimentReport r = run_experiment(c);
        print_report(r);
        all = all && r.pass;
        if (*rep_cmd) bundle.push_back(ojson::parse(report_json(r, c)));
      }
      if (*rep_cmd && !rep_o.json_out.empty())
        write_text(rep_o.json_out, ojson{{"schema", 1}, {"reports", bundle}}.dump(2) + "\n");
      return all ? kExitPass : kExitFail;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}
