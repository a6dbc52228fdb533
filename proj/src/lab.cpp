#include "pinchlab/lab.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pinchlab/error.hpp"
#include "pinchlab/geodesy.hpp"
#include "pinchlab/hypersurface.hpp"
#include "pinchlab/operators.hpp"
#include "pinchlab/pinching.hpp"
#include "pinchlab/spectra.hpp"
#include "pinchlab/spheremap.hpp"

#ifndef PINCHLAB_DATA_DIR
#define PINCHLAB_DATA_DIR "data"
#endif

namespace pinchlab {

using ojson = nlohmann::ordered_json;

SimplicialSurface GeneratorSpec::generate() const {
  if (kind == "icosphere") return generate_icosphere(radius, subdivisions);
  if (kind == "ellipsoid") return generate_ellipsoid(a, b, c, subdivisions);
  if (kind == "torus") return generate_flat_torus(length1, length2, n1, n2);
  if (kind == "perturbed") return generate_perturbed_sphere(amplitude, frequency, seed, subdivisions);
  throw InvalidArgument("unknown generator '" + kind + "'");
}

std::string GeneratorSpec::key() const {
  std::ostringstream s;
  s.precision(17);
  s << kind;
  if (kind == "icosphere") s << ":r=" << radius << ":s=" << subdivisions;
  else if (kind == "ellipsoid") s << ":a=" << a << ":b=" << b << ":c=" << c << ":s=" << subdivisions;
  else if (kind == "torus") s << ":l1=" << length1 << ":l2=" << length2 << ":n1=" << n1 << ":n2=" << n2;
  else if (kind == "perturbed")
    s << ":amp=" << amplitude << ":freq=" << frequency << ":seed=" << seed << ":s=" << subdivisions;
  return s.str();
}

namespace {

GeneratorSpec icosphere(double radius, int subdivisions) {
  GeneratorSpec g;
  g.radius = radius;
  g.subdivisions = subdivisions;
  return g;
}

GeneratorSpec ellipsoid(double a, double b, double c, int subdivisions) {
  GeneratorSpec g;
  g.kind = "ellipsoid";
  g.a = a;
  g.b = b;
  g.c = c;
  g.subdivisions = subdivisions;
  return g;
}

GeneratorSpec torus(double l1, double l2, int n1, int n2) {
  GeneratorSpec g;
  g.kind = "torus";
  g.length1 = l1;
  g.length2 = l2;
  g.n1 = n1;
  g.n2 = n2;
  return g;
}

GeneratorSpec perturbed(double amplitude, int frequency, std::uint64_t seed, int subdivisions) {
  GeneratorSpec g;
  g.kind = "perturbed";
  g.amplitude = amplitude;
  g.frequency = frequency;
  g.seed = seed;
  g.subdivisions = subdivisions;
  return g;
}

ojson generator_json(const GeneratorSpec& g) {
  ojson j{{"generator", g.kind}};
  if (g.kind == "icosphere") {
    j["radius"] = g.radius;
    j["subdivisions"] = g.subdivisions;
  } else if (g.kind == "ellipsoid") {
    j["a"] = g.a;
    j["b"] = g.b;
    j["c"] = g.c;
    j["subdivisions"] = g.subdivisions;
  } else if (g.kind == "torus") {
    j["length1"] = g.length1;
    j["length2"] = g.length2;
    j["n1"] = g.n1;
    j["n2"] = g.n2;
  } else {
    j["amplitude"] = g.amplitude;
    j["frequency"] = g.frequency;
    j["seed"] = g.seed;
    j["subdivisions"] = g.subdivisions;
  }
  return j;
}

GeneratorSpec parse_generator(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("config: \"mesh\" must be an object");
  GeneratorSpec g;
  g.kind = j.at("generator").get<std::string>();
  static const std::map<std::string, std::vector<std::string>> allowed{
      {"icosphere", {"radius", "subdivisions"}},
      {"ellipsoid", {"a", "b", "c", "subdivisions"}},
      {"torus", {"length1", "length2", "n1", "n2"}},
      {"perturbed", {"amplitude", "frequency", "seed", "subdivisions"}}};
  const auto it = allowed.find(g.kind);
  if (it == allowed.end()) throw FormatError("config: unknown generator '" + g.kind + "'");
  for (const auto& [key, value] : j.items()) {
    if (key == "generator") continue;
    if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
      throw FormatError("config: generator '" + g.kind + "' has no parameter '" + key + "'");
  }
  g.radius = j.value("radius", g.radius);
  g.a = j.value("a", g.a);
  g.b = j.value("b", g.b);
  g.c = j.value("c", g.c);
  g.subdivisions = j.value("subdivisions", g.subdivisions);
  g.length1 = j.value("length1", g.length1);
  g.length2 = j.value("length2", g.length2);
  g.n1 = j.value("n1", g.n1);
  g.n2 = j.value("n2", g.n2);
  g.amplitude = j.value("amplitude", g.amplitude);
  g.frequency = j.value("frequency", g.frequency);
  g.seed = j.value("seed", g.seed);
  return g;
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config: top level must be an object");
  static const std::vector<std::string> keys{"experiment", "mesh",  "mesh_path", "solver",  "oracle_dense",
                                             "tolerances", "seed",  "json",      "csv_dir", "data_dir"};
  for (const auto& [key, value] : j.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw FormatError("config: unknown key '" + key + "'");
  ExperimentConfig c;
  try {
    c.experiment = j.at("experiment").get<std::string>();
    if (j.contains("mesh")) c.mesh = parse_generator(j["mesh"]);
    if (j.contains("mesh_path")) c.mesh_path = j["mesh_path"].get<std::string>();
    if (c.mesh && c.mesh_path) throw FormatError("config: give either \"mesh\" or \"mesh_path\", not both");
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      for (const auto& [key, value] : s.items())
        if (key != "tol" && key != "shift") throw FormatError("config: unknown solver key '" + key + "'");
      c.solver_tol = s.value("tol", c.solver_tol);
      c.solver_shift = s.value("shift", c.solver_shift);
    }
    c.oracle_dense = j.value("oracle_dense", c.oracle_dense);
    if (j.contains("tolerances"))
      for (const auto& [key, value] : j["tolerances"].items()) c.tolerances[key] = value.get<double>();
    c.seed = j.value("seed", c.seed);
    c.json_out = j.value("json", c.json_out);
    c.csv_dir = j.value("csv_dir", c.csv_dir);
    c.data_dir = j.value("data_dir", c.data_dir);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

namespace {

ojson config_json(const ExperimentConfig& c) {
  ojson j{{"experiment", c.experiment}};
  if (c.mesh) j["mesh"] = generator_json(*c.mesh);
  if (c.mesh_path) j["mesh_path"] = *c.mesh_path;
  j["solver"] = ojson{{"tol", c.solver_tol}, {"shift", c.solver_shift}};
  j["oracle_dense"] = c.oracle_dense;
  j["tolerances"] = ojson::object();
  for (const auto& [k, v] : c.tolerances) j["tolerances"][k] = v;
  j["seed"] = c.seed;
  if (!c.json_out.empty()) j["json"] = c.json_out;
  if (!c.csv_dir.empty()) j["csv_dir"] = c.csv_dir;
  if (!c.data_dir.empty()) j["data_dir"] = c.data_dir;
  return j;
}

} // namespace

std::string to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

namespace {

// ---------------------------------------------------------------------------
// Shared state between experiments of one process.

struct SurfaceEntry {
  std::unique_ptr<SimplicialSurface> mesh;
  std::unique_ptr<OperatorSet> ops;
  std::unique_ptr<DistanceEngine> engine;
  std::map<std::string, Spectrum> spectra;
  std::unique_ptr<PoleDecomposition> poles;
};

std::map<std::string, SurfaceEntry>& surface_cache() {
  static std::map<std::string, SurfaceEntry> cache;
  return cache;
}

SurfaceEntry& entry_for(const std::string& key, const std::function<SimplicialSurface()>& make) {
  auto& cache = surface_cache();
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, SurfaceEntry{}).first;
    it->second.mesh = std::make_unique<SimplicialSurface>(make());
  }
  return it->second;
}

SurfaceEntry& entry_for(const GeneratorSpec& g) {
  return entry_for(g.key(), [&] { return g.generate(); });
}

OperatorSet& ops_of(SurfaceEntry& e) {
  if (!e.ops) e.ops = std::make_unique<OperatorSet>(*e.mesh);
  return *e.ops;
}

DistanceEngine& engine_of(SurfaceEntry& e) {
  if (!e.engine) e.engine = std::make_unique<DistanceEngine>(*e.mesh);
  return *e.engine;
}

Spectrum solve(const ExperimentConfig& cfg, const OperatorPencil& P, int k) {
  if (cfg.oracle_dense && P.dimension() <= kDenseLimit) return solve_dense(P, k);
  SolveOptions options;
  options.tol = cfg.solver_tol;
  options.shift = cfg.solver_shift;
  return solve_smallest(P, k, options);
}

std::string spectrum_key(const ExperimentConfig& cfg, const std::string& op, int k) {
  std::ostringstream s;
  s.precision(17);
  s << op << '|' << k << '|' << cfg.solver_tol << '|' << cfg.solver_shift << '|' << cfg.oracle_dense;
  return s.str();
}

const Spectrum& spectrum_of(const ExperimentConfig& cfg, SurfaceEntry& e, const std::string& op, int k) {
  const std::string key = spectrum_key(cfg, op, k);
  auto it = e.spectra.find(key);
  if (it != e.spectra.end()) return it->second;
  OperatorSet& ops = ops_of(e);
  const OperatorPencil& P = op == "bundle" ? ops.bundle : ops.laplacian;
  return e.spectra.emplace(key, solve(cfg, P, k)).first->second;
}

// ---------------------------------------------------------------------------
// Experiment context.

class Context {
public:
  Context(const ExperimentConfig& cfg, ExperimentReport& report) : cfg(cfg), report_(report) {}

  const ExperimentConfig& cfg;
  ojson data = ojson::object();

  void check(const std::string& name, double value, double threshold, const std::string& relation,
             const std::string& detail = {}) {
    CheckResult c;
    c.name = name;
    c.value = value;
    const auto it = cfg.tolerances.find(name);
    c.threshold = it != cfg.tolerances.end() ? it->second : threshold;
    c.relation = relation;
    if (relation == "<=") c.pass = value <= c.threshold;
    else if (relation == ">=") c.pass = value >= c.threshold;
    else if (relation == "==") c.pass = value == c.threshold;
    else c.pass = value != 0.0 && !std::isnan(value);
    c.detail = detail;
    report_.checks.push_back(std::move(c));
  }

  void flag(const std::string& name, bool ok, const std::string& detail = {}) {
    check(name, ok ? 1.0 : 0.0, 1.0, "flag", detail);
  }

  void timing(const std::string& name, double seconds, double limit) {
    check(name, seconds, limit, "<=");
    report_.checks.back().timing = true;
  }

  void table(const std::string& file, std::string csv) { report_.tables[file] = std::move(csv); }

  SurfaceEntry& primary(const GeneratorSpec& fallback) {
    if (cfg.mesh_path) {
      const std::string path = *cfg.mesh_path;
      data["mesh"] = ojson{{"path", path}};
      return entry_for("file:" + path, [&] { return load_mesh(path); });
    }
    const GeneratorSpec g = cfg.mesh.value_or(fallback);
    data["mesh"] = generator_json(g);
    return entry_for(g);
  }

  std::string data_dir() const { return cfg.data_dir.empty() ? std::string(PINCHLAB_DATA_DIR) : cfg.data_dir; }

private:
  ExperimentReport& report_;
};

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string csv_number(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

ojson parsed(const std::string& text) { return ojson::parse(text); }

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

// Radius for which the icosphere oracle values are scaled; 1 for other generators.
double sphere_radius(const ExperimentConfig& cfg) {
  return cfg.mesh && cfg.mesh->kind == "icosphere" ? cfg.mesh->radius : 1.0;
}

const PoleDecomposition& poles_of(SurfaceEntry& e, const Spectrum& laplace) {
  if (!e.poles) {
    const SimplicialSurface& m = *e.mesh;
    const auto z = FunctionField::from_positions(m, [](const Vec3& p) { return p.z(); });
    const FunctionField f1 = normalize_band_function(project_band(ProjectionSpec(2, 0.25), laplace, z));
    e.poles = std::make_unique<PoleDecomposition>(locate_poles(engine_of(e), ops_of(e).atlas, f1));
  }
  return *e.poles;
}

// ---------------------------------------------------------------------------
// 1. Sphere spectrum.

void sphere_baseline(Context& ctx) {
  SurfaceEntry& e = ctx.primary(icosphere(1.0, 5));
  const SimplicialSurface& m = *e.mesh;
  const double r = sphere_radius(ctx.cfg);
  const std::vector<double> unit{0, 2, 2, 2, 6, 6, 6, 6, 6, 12};

  const double t0 = now_seconds();
  const OperatorPencil P = assemble_laplacian(m);
  Spectrum S = solve(ctx.cfg, P, 10);
  const double elapsed = now_seconds() - t0;
  const LambdaCertificate cert = certify_lambda_k(S, P, 10);

  std::ostringstream csv;
  csv << "index,eigenvalue,expected,relative_error,residual\n";
  for (int i = 0; i < 10; ++i) {
    const double expected = unit[i] / (r * r);
    const double lambda = S.eigenvalues[i];
    if (i == 0) {
      ctx.check("lambda_0_abs", std::abs(lambda), 0.01 / (r * r), "<=");
    } else {
      const double rel = std::abs(lambda - expected) / expected;
      ctx.check("lambda_" + std::to_string(i) + "_rel_error", rel, 0.01, "<=");
    }
    csv << i << ',' << csv_number(lambda) << ',' << csv_number(expected) << ','
        << csv_number(i == 0 ? std::abs(lambda) : std::abs(lambda - expected) / expected) << ','
        << csv_number(S.residuals[i]) << '\n';
  }
  ctx.timing("runtime_seconds", elapsed, 30.0);
  ctx.table("eigenvalues.csv", csv.str());
  ctx.data["spectrum"] = parsed(to_json(S));
  ctx.data["expected"] = unit;
  ctx.data["radius"] = r;
  ctx.data["certificate"] = ojson{{"lambda_10", cert.lambda_k}, {"rayleigh_ritz", cert.upper_bound}};
  ctx.data["negative_cotangent_weights"] = P.negative_weights;
  e.spectra.emplace(spectrum_key(ctx.cfg, "laplace", 10), std::move(S));
}

// ---------------------------------------------------------------------------
// 2. Bundle near-kernel.

void obata_kernel_experiment(Context& ctx) {
  std::map<int, std::vector<double>> levels;
  for (int s = 4; s <= 6; ++s) levels[s] = spectrum_of(ctx.cfg, entry_for(icosphere(1.0, s)), "bundle", 6).eigenvalues;
  const auto& s5 = levels[5];
  for (int i = 0; i < 3; ++i) {
    const std::string tag = std::to_string(i + 1);
    ctx.check("lambda_" + tag + "_s5", s5[i], 0.05, "<=");
    ctx.check("shrink_lambda_" + tag + "_s4_s6", levels[4][i] / levels[6][i], 2.0, ">=");
  }
  ctx.check("lambda_4_s5", s5[3], 0.5, ">=");

  SurfaceEntry& e5 = entry_for(icosphere(1.0, 5));
  const auto kernel = obata_kernel(spectrum_of(ctx.cfg, e5, "bundle", 6), 0.05);
  ctx.check("kernel_dimension", static_cast<double>(kernel.size()), 3.0, "==");

  // Calibration of the iterative solver against the dense oracle on a coarser sphere.
  SurfaceEntry& e3 = entry_for(icosphere(1.0, 3));
  const Spectrum dense = solve_dense(ops_of(e3).bundle, 6);
  const Spectrum& iterative = spectrum_of(ctx.cfg, e3, "bundle", 6);
  double agreement = 0.0;
  for (int i = 0; i < 6; ++i)
    agreement = std::max(agreement, std::abs(dense.eigenvalues[i] - iterative.eigenvalues[i]) /
                                        std::max(1.0, std::abs(dense.eigenvalues[i])));
  ctx.check("dense_agreement_s3", agreement, 1e-8, "<=");
  ctx.check("dense_lambda_4_s3", dense.eigenvalues[3], 0.5, ">=");

  std::ostringstream csv;
  csv << "subdivisions,index,eigenvalue\n";
  ojson table = ojson::object();
  for (const auto& [s, values] : levels) {
    table["s" + std::to_string(s)] = values;
    for (std::size_t i = 0; i < values.size(); ++i) csv << s << ',' << i + 1 << ',' << csv_number(values[i]) << '\n';
  }
  ctx.table("bundle_eigenvalues.csv", csv.str());
  ctx.data["bundle_eigenvalues"] = table;
  ctx.data["dense_s3"] = dense.eigenvalues;
  ctx.data["kernel_threshold"] = 0.05;
}

// ---------------------------------------------------------------------------
// 3. The section e.

void section_e(Context& ctx) {
  std::vector<std::pair<std::string, GeneratorSpec>> meshes{
      {"icosphere_r1_s3", icosphere(1.0, 3)},
      {"icosphere_r2_s3", icosphere(2.0, 3)},
      {"ellipsoid_1_1_1.3_s3", ellipsoid(1.0, 1.0, 1.3, 3)},
      {"ellipsoid_1_1.2_1.5_s3", ellipsoid(1.0, 1.2, 1.5, 3)},
      {"torus_2pi_24x24", torus(2 * M_PI, 2 * M_PI, 24, 24)},
      {"torus_3x5_10x16", torus(3.0, 5.0, 10, 16)},
      {"perturbed_0.1_3_s3", perturbed(0.1, 3, ctx.cfg.seed, 3)}};
  if (ctx.cfg.mesh) meshes.emplace_back("configured", *ctx.cfg.mesh);

  std::ostringstream csv;
  csv << "mesh,vertices,rayleigh_quotient,error\n";
  ojson rows = ojson::array();
  auto run = [&](const std::string& label, SurfaceEntry& e) {
    const SimplicialSurface& m = *e.mesh;
    const ESection S(TangentField::zero(m), FunctionField::constant(m, 1.0));
    const double rq = ops_of(e).bundle.rayleigh_quotient(S.to_vector());
    const double err = std::abs(rq - 2.0);
    ctx.check("rq_error_" + label, err, 1e-9, "<=");
    csv << label << ',' << m.num_vertices() << ',' << csv_number(rq) << ',' << csv_number(err) << '\n';
    rows.push_back(ojson{{"mesh", label}, {"rayleigh_quotient", rq}, {"error", err}});
  };
  for (const auto& [label, g] : meshes) run(label, entry_for(g));
  if (ctx.cfg.mesh_path) {
    const std::string path = *ctx.cfg.mesh_path;
    run("configured", entry_for("file:" + path, [&] { return load_mesh(path); }));
  }
  ctx.table("section_e.csv", csv.str());
  ctx.data["meshes"] = rows;
}

// ---------------------------------------------------------------------------
// 4. Bundle route versus Bochner route.

void energy_crossval(Context& ctx) {
  SurfaceEntry& e = ctx.primary(icosphere(1.0, 5));
  const SimplicialSurface& m = *e.mesh;
  OperatorSet& ops = ops_of(e);
  std::mt19937_64 rng(ctx.cfg.seed);
  std::uniform_real_distribution<double> coefficient(-1.0, 1.0);

  std::ostringstream csv;
  csv << "index,norm_f,bochner,bundle,relative_difference,clamp_warning\n";
  double worst = 0.0;
  int clamps = 0;
  for (int i = 0; i < 50; ++i) {
    std::array<double, 10> c{};
    for (double& x : c) x = coefficient(rng);
    const auto f = FunctionField::from_positions(m, [&](const Vec3& p) {
      const double x = p.x(), y = p.y(), z = p.z();
      return c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * x + c[5] * y * y + c[6] * z * z + c[7] * x * y +
             c[8] * y * z + c[9] * z * x;
    });
    const double norm = std::sqrt(ops.laplacian.mass_norm_squared(f.values()));
    const BochnerNorm b = ops.bochner(f);
    const double bundle = ops.bundle_norm(f);
    const double rel = std::abs(bundle - b.value) / norm;
    worst = std::max(worst, rel);
    clamps += b.clamp_warning ? 1 : 0;
    csv << i << ',' << csv_number(norm) << ',' << csv_number(b.value) << ',' << csv_number(bundle) << ','
        << csv_number(rel) << ',' << (b.clamp_warning ? 1 : 0) << '\n';
  }
  ctx.check("max_relative_difference", worst, 0.03, "<=");
  ctx.table("crossval.csv", csv.str());
  ctx.data["fields"] = 50;
  ctx.data["family"] = "quadratic polynomials in the ambient coordinates, coefficients uniform in [-1, 1]";
  ctx.data["clamp_warnings"] = clamps;
}

// ---------------------------------------------------------------------------
// 5. Ellipsoid sweep.

void ellipsoid_sweep(Context& ctx) {
  const std::vector<double> ts{0.0, 0.05, 0.1, 0.2};
  const ProjectionSpec band(2, 0.25);
  std::vector<double> deltas, ghs;
  double worst_degree = 0.0;
  std::ostringstream csv;
  csv << "t,delta,delta_bundle,band_multiplicity,eps_dist,eps_dens,gh_upper,degree\n";
  ojson rows = ojson::array();
  for (double t : ts) {
    SurfaceEntry& e = entry_for(ellipsoid(1.0, 1.0, 1.0 + t, 5));
    const Spectrum& S = spectrum_of(ctx.cfg, e, "laplace", 10);
    SphereMapReport rep = build_sphere_map(*e.mesh, S, band);
    map_quality(engine_of(e), rep);
    const PinchReport pr = certify_subspace_pinching(rep.band, ops_of(e), {}, &S, band);
    deltas.push_back(pr.delta);
    ghs.push_back(rep.gh_upper);
    const double dd = std::min(std::abs(rep.degree - 1.0), std::abs(rep.degree + 1.0));
    worst_degree = std::max(worst_degree, dd);
    csv << csv_number(t) << ',' << csv_number(pr.delta) << ',' << csv_number(pr.delta_bundle) << ','
        << rep.band_multiplicity << ',' << csv_number(rep.eps_dist) << ',' << csv_number(rep.eps_dens) << ','
        << csv_number(rep.gh_upper) << ',' << csv_number(rep.degree) << '\n';
    std::ostringstream name;
    name << "sphere_net_t" << t << ".csv";
    ctx.table(name.str(), net_csv(rep));
    rows.push_back(ojson{{"t", t}, {"pinching", parsed(to_json(pr))}, {"sphere_map", parsed(to_json(rep))}});
  }
  double delta_step = std::numeric_limits<double>::infinity(), gh_step = delta_step;
  for (std::size_t i = 1; i < ts.size(); ++i) {
    delta_step = std::min(delta_step, deltas[i] - deltas[i - 1]);
    gh_step = std::min(gh_step, ghs[i] - ghs[i - 1]);
  }
  ctx.check("delta_min_increment", delta_step, 0.0, ">=");
  ctx.check("gh_upper_t0", ghs[0], 0.08, "<=");
  ctx.check("gh_upper_min_increment", gh_step, 0.0, ">=");
  ctx.check("degree_max_defect", worst_degree, 0.01, "<=");
  ctx.table("sweep.csv", csv.str());
  ctx.data["sweep"] = rows;
}

// ---------------------------------------------------------------------------
// 6. Almost-cosine profile and excess.

void cosine_excess(Context& ctx) {
  SurfaceEntry& e = ctx.primary(icosphere(1.0, 5));
  const Spectrum& S = spectrum_of(ctx.cfg, e, "laplace", 10);
  const PoleDecomposition& dec = poles_of(e, S);
  const bool two = dec.success && dec.poles.size() == 2;
  ctx.flag("two_poles_located", two, dec.diagnostic);
  ctx.check("profile_sup_deviation", dec.profile_deviation, 0.05, "<=");
  ojson poles{{"success", dec.success},   {"diagnostic", dec.diagnostic},
              {"vertices", dec.poles},    {"profile_deviation", dec.profile_deviation},
              {"coverage", dec.coverage}, {"shell_sizes", dec.shell_sizes}};
  if (!dec.pairs.empty()) poles["pair_distance"] = dec.pairs[0].distance;
  ctx.data["poles"] = poles;
  if (two) {
    const DiameterCheck dc = diameter_and_excess_check(engine_of(e), dec);
    ctx.check("diameter_error", std::abs(dc.diameter - M_PI), 0.05, "<=");
    ctx.check("max_excess", dc.max_excess, 0.05, "<=");
    ctx.data["excess"] = ojson{{"diameter", dc.diameter}, {"max_excess", dc.max_excess}};
  } else {
    ctx.check("diameter_error", nan(), 0.05, "<=", "no pole pair");
    ctx.check("max_excess", nan(), 0.05, "<=", "no pole pair");
  }
  const FunctionField f1 = normalize_band_function(project_band(
      ProjectionSpec(2, 0.25), S, FunctionField::from_positions(*e.mesh, [](const Vec3& p) { return p.z(); })));
  const SegmentDiagnostics sd = segment_diagnostics(engine_of(e), f1, 200, 0.2, ctx.cfg.seed);
  ctx.data["segment"] = ojson{{"pairs", sd.pairs},
                              {"sources", sd.sources},
                              {"fraction_good_pairs", sd.fraction_good_pairs},
                              {"q_fraction", sd.q_fraction},
                              {"max_integral", sd.max_integral},
                              {"threshold", 0.2}};
}

// ---------------------------------------------------------------------------
// 7. Flat torus.

void torus_noncollapse(Context& ctx) {
  SurfaceEntry& e = entry_for(torus(2 * M_PI, 2 * M_PI, 48, 48));
  const Spectrum& B = spectrum_of(ctx.cfg, e, "bundle", 4);
  ctx.check("lambda_1_bundle", B.eigenvalues[0], 0.3, ">=");

  const Spectrum& L = spectrum_of(ctx.cfg, e, "laplace", 61);
  ojson omegas = ojson::array();
  for (int k = 1; k <= 3; ++k) {
    const OmegaResult o = omega_k(ops_of(e), L, k);
    ctx.check("omega_" + std::to_string(k), o.value, 1e-3, "<=");
    omegas.push_back(ojson{{"k", k}, {"value", o.value}, {"inf_sup", o.inf_sup}, {"basis_size", o.basis_size}});
  }
  const ProjectionSpec band(2, 0.25);
  bool rejected = false;
  std::string reason;
  try {
    build_sphere_map(*e.mesh, L, band);
  } catch (const Rejected& err) {
    rejected = true;
    reason = err.what();
  }
  const int multiplicity = static_cast<int>(band_indices(band, L).size());
  if (!rejected) {
    std::ostringstream msg;
    msg << "band [" << band.low() << ", " << band.high() << "] holds " << multiplicity << " eigenpairs";
    reason = msg.str();
  }
  ctx.flag("sphere_map_rejected", rejected, reason);

  // Dense oracle on a coarser torus of the same shape.
  SurfaceEntry& coarse = entry_for(torus(2 * M_PI, 2 * M_PI, 24, 24));
  const Spectrum dense = solve_dense(ops_of(coarse).bundle, 4);
  const Spectrum& iterative = spectrum_of(ctx.cfg, coarse, "bundle", 4);
  double agreement = 0.0;
  for (int i = 0; i < 4; ++i)
    agreement = std::max(agreement, std::abs(dense.eigenvalues[i] - iterative.eigenvalues[i]) /
                                        std::max(1.0, std::abs(dense.eigenvalues[i])));
  ctx.check("dense_agreement_24x24", agreement, 1e-8, "<=");
  ctx.check("dense_lambda_1_bundle_24x24", dense.eigenvalues[0], 0.3, ">=");
  const Spectrum dense_laplace = solve_dense(ops_of(coarse).laplacian, 14);

  ctx.data["bundle_eigenvalues"] = B.eigenvalues;
  ctx.data["laplace_eigenvalues_head"] =
      std::vector<double>(L.eigenvalues.begin(), L.eigenvalues.begin() + std::min(L.size(), 12));
  ctx.data["omega"] = omegas;
  ctx.data["band_multiplicity"] = multiplicity;
  ctx.data["dense_laplace_24x24"] = dense_laplace.eigenvalues;
  ctx.data["dense_band_multiplicity_24x24"] = band_indices(band, dense_laplace).size();
  ctx.data["sphere_map"] = ojson{{"rejected", rejected}, {"reason", reason}};
  ctx.data["dense_bundle_24x24"] = dense.eigenvalues;
}

// ---------------------------------------------------------------------------
// 8. Omega on the sphere.

void omega_sphere(Context& ctx) {
  SurfaceEntry& e = ctx.primary(icosphere(1.0, 5));
  const Spectrum& L = spectrum_of(ctx.cfg, e, "laplace", 61);
  std::ostringstream csv;
  csv << "k,sup_inf,inf_sup,basis_size,converged\n";
  ojson rows = ojson::array();
  for (int k = 1; k <= 3; ++k) {
    const OmegaResult o = omega_k(ops_of(e), L, k);
    ctx.check("omega_" + std::to_string(k) + "_rel_error", std::abs(o.value - 0.5) / 0.5, 0.03, "<=");
    csv << k << ',' << csv_number(o.value) << ',' << csv_number(o.inf_sup) << ',' << o.basis_size << ','
        << (o.converged ? 1 : 0) << '\n';
    ojson history = ojson::array();
    for (const auto& [size, value] : o.history) history.push_back(ojson{{"basis_size", size}, {"value", value}});
    rows.push_back(ojson{{"k", k},
                         {"sup_inf", o.value},
                         {"inf_sup", o.inf_sup},
                         {"basis_size", o.basis_size},
                         {"converged", o.converged},
                         {"history", history}});
  }
  ctx.table("omega.csv", csv.str());
  ctx.data["omega"] = rows;
}

// ---------------------------------------------------------------------------
// 9. Umbilicity.

void umbilicity(Context& ctx) {
  const std::vector<std::pair<std::string, GeneratorSpec>> meshes{{"unit_sphere", icosphere(1.0, 5)},
                                                                  {"radius_2", icosphere(2.0, 5)},
                                                                  {"ellipsoid_1.2", ellipsoid(1.0, 1.0, 1.2, 5)},
                                                                  {"ellipsoid_1.5", ellipsoid(1.0, 1.0, 1.5, 5)}};
  ojson rows = ojson::object();
  for (const auto& [label, g] : meshes) {
    SurfaceEntry& e = entry_for(g);
    const SimplicialSurface& m = *e.mesh;
    const ShapeField shape = shape_operator(m);
    const UmbilicityReport u = umbilicity_report(m, shape);
    const UmbilicEigenBound ub =
        umbilic_eigen_bound_check(m, shape, ops_of(e).bundle, spectrum_of(ctx.cfg, e, "bundle", 6));
    const ChengZhouReilly cz = cheng_zhou_and_reilly_check(m, shape, spectrum_of(ctx.cfg, e, "laplace", 10), 0.0);
    const double bound = ub.rhs * (1.0 + ub.relative_budget) + ub.absolute_budget;
    ctx.check("umbilic_bound_" + label, std::max(ub.lhs, ub.rayleigh_max), bound, "<=",
              "max of lambda_3 and the coordinate-section Rayleigh quotient");
    ctx.check("cheng_zhou_" + label, cz.cz_lhs, cz.cz_rhs * (1.0 + cz.budget), "<=");
    ctx.check("reilly_" + label, cz.reilly_lhs, cz.reilly_rhs * (1.0 + cz.budget), "<=");
    ctx.check("pythagoras_residual_" + label, u.pythagoras_residual, 1e-10, "<=");
    if (label == "unit_sphere") ctx.check("reilly_gap_unit_sphere", cz.reilly_gap, 0.03, "<=");
    rows[label] = ojson{{"umbilicity", parsed(to_json(u))},
                        {"eigen_bound", parsed(to_json(ub))},
                        {"cheng_zhou_reilly", parsed(to_json(cz))}};
    ctx.table("shape_" + label + ".csv", shape_csv(shape));
  }
  ctx.data["hypersurface"] = rows;
}

// ---------------------------------------------------------------------------
// 10. Gromov-Hausdorff oracle.

void gh_oracle(Context& ctx) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(ctx.data_dir()) / "gh";
  std::ifstream in(dir / "corpus.json");
  if (!in) throw FormatError("cannot read GH corpus in '" + dir.string() + "'");
  nlohmann::json corpus;
  try {
    corpus = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("GH corpus: ") + err.what());
  }
  std::ostringstream csv;
  csv << "case,points_a,points_b,expected,computed\n";
  ojson rows = ojson::array();
  double asymmetry = 0.0;
  int largest = 0;
  for (const auto& c : corpus.at("cases")) {
    const std::string name = c.at("name").get<std::string>();
    const auto A = FiniteMetricSpace::load((dir / c.at("a").get<std::string>()).string());
    const auto B = FiniteMetricSpace::load((dir / c.at("b").get<std::string>()).string());
    const double expected = c.at("expected").get<double>();
    const double value = gh_bruteforce(A, B);
    asymmetry = std::max(asymmetry, std::abs(value - gh_bruteforce(B, A)));
    largest = std::max({largest, A.size(), B.size()});
    ctx.check("gh_" + name, value, expected, "==");
    csv << name << ',' << A.size() << ',' << B.size() << ',' << csv_number(expected) << ',' << csv_number(value)
        << '\n';
    rows.push_back(ojson{{"name", name}, {"expected", expected}, {"computed", value}});
  }
  ctx.check("gh_symmetry", asymmetry, 0.0, "==");
  ctx.check("corpus_max_points", largest, 5.0, "<=");

  const auto& sk = corpus.at("skeleton");
  const auto A = FiniteMetricSpace::load((dir / sk.at("a").get<std::string>()).string());
  const auto B = FiniteMetricSpace::load((dir / sk.at("b").get<std::string>()).string());
  const double oracle = gh_bruteforce(A, B);
  SurfaceEntry& e = entry_for(icosphere(1.0, 5));
  SphereMapReport rep = build_sphere_map(*e.mesh, spectrum_of(ctx.cfg, e, "laplace", 10), ProjectionSpec(2, 0.25));
  map_quality(engine_of(e), rep);
  ctx.check("gh_upper_dominates_skeleton", rep.gh_upper - oracle, 0.0, ">=");
  ctx.table("gh_corpus.csv", csv.str());
  ctx.data["gh"] = ojson{{"corpus", rows},
                         {"skeleton", ojson{{"oracle", oracle}, {"gh_upper", rep.gh_upper}, {"points", A.size()}}}};
}

// ---------------------------------------------------------------------------
// 11. Spherical suspension.

FiniteMetricSpace random_metric(std::mt19937_64& rng, int size, bool spherical) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(size, size);
  if (spherical) {
    std::normal_distribution<double> normal;
    std::vector<Eigen::Vector3d> p(size);
    for (auto& x : p) {
      do x = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
      while (x.norm() < 1e-6);
      x.normalize();
    }
    for (int i = 0; i < size; ++i)
      for (int j = i + 1; j < size; ++j) d(i, j) = d(j, i) = std::acos(std::clamp(p[i].dot(p[j]), -1.0, 1.0));
  } else {
    for (int i = 0; i < size; ++i)
      for (int j = i + 1; j < size; ++j) d(i, j) = d(j, i) = 0.1 + 2.4 * uniform(rng);
    for (int k = 0; k < size; ++k)
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
  }
  return FiniteMetricSpace(d);
}

int triangle_violations(const FiniteMetricSpace& X) {
  const int n = X.size();
  const double slack = 1e-12 * std::max(1.0, X.diameter());
  int bad = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        if (X(i, k) > X(i, j) + X(j, k) + slack) ++bad;
  return bad;
}

void suspension(Context& ctx) {
  std::mt19937_64 rng(ctx.cfg.seed);
  std::uniform_real_distribution<double> level(0.05, M_PI - 0.05);
  int failures = 0, violations = 0, total_points = 0;
  std::string first_failure;
  for (int c = 0; c < 200; ++c) {
    const FiniteMetricSpace Z = random_metric(rng, 2 + c % 5, c % 2 == 0);
    std::vector<double> levels{0.0};
    std::vector<double> interior;
    for (int i = 0; i <= c % 3; ++i) interior.push_back(level(rng));
    std::sort(interior.begin(), interior.end());
    interior.erase(std::unique(interior.begin(), interior.end()), interior.end());
    levels.insert(levels.end(), interior.begin(), interior.end());
    levels.push_back(M_PI);
    try {
      const FiniteMetricSpace X = spherical_suspension(Z, levels);
      violations += triangle_violations(X);
      total_points += X.size();
    } catch (const Error& err) {
      if (first_failure.empty()) first_failure = err.what();
      ++failures;
    }
  }
  ctx.check("suspension_validation_failures", failures, 0.0, "==", first_failure);
  ctx.check("triangle_violations", violations, 0.0, "==");

  SurfaceEntry& e = ctx.primary(icosphere(1.0, 5));
  const PoleDecomposition& dec = poles_of(e, spectrum_of(ctx.cfg, e, "laplace", 10));
  ojson fit_json;
  if (dec.success && !dec.pairs.empty()) {
    const SuspensionFit fit = suspension_fit(engine_of(e), dec, 0);
    ctx.check("suspension_distortion", fit.distortion, 0.1, "<=");
    fit_json = parsed(to_json(fit));
  } else {
    ctx.check("suspension_distortion", nan(), 0.1, "<=", "no pole pair: " + dec.diagnostic);
  }
  ctx.data["suspension"] =
      ojson{{"random_spaces", 200}, {"suspension_points", total_points}, {"fit", fit_json}};
}

// ---------------------------------------------------------------------------
// 12. Continuity under refinement.

void eigen_continuity(Context& ctx) {
  std::vector<std::vector<double>> lambda;
  for (int s = 3; s <= 6; ++s) lambda.push_back(spectrum_of(ctx.cfg, entry_for(icosphere(1.0, s)), "bundle", 6).eigenvalues);
  std::ostringstream csv;
  csv << "index,s3,s4,s5,s6,diff_34,diff_45,diff_56\n";
  ojson rows = ojson::array();
  for (int i = 0; i < 6; ++i) {
    std::vector<double> diff;
    for (int l = 0; l + 1 < 4; ++l) diff.push_back(std::abs(lambda[l + 1][i] - lambda[l][i]));
    const double ratio = std::min(diff[0] / diff[1], diff[1] / diff[2]);
    ctx.check("shrink_lambda_" + std::to_string(i + 1), ratio, 2.0, ">=");
    csv << i + 1;
    for (int l = 0; l < 4; ++l) csv << ',' << csv_number(lambda[l][i]);
    for (double d : diff) csv << ',' << csv_number(d);
    csv << '\n';
    rows.push_back(ojson{{"index", i + 1},
                         {"values", {lambda[0][i], lambda[1][i], lambda[2][i], lambda[3][i]}},
                         {"differences", diff},
                         {"min_ratio", ratio}});
  }
  ctx.table("continuity.csv", csv.str());
  ctx.data["continuity"] = rows;
}

struct ExperimentEntry {
  const char* name;
  void (*run)(Context&);
};

const std::vector<ExperimentEntry>& registry() {
  static const std::vector<ExperimentEntry> r{
      {"sphere-baseline", sphere_baseline}, {"obata-kernel", obata_kernel_experiment},
      {"section-e", section_e},             {"energy-crossval", energy_crossval},
      {"ellipsoid-sweep", ellipsoid_sweep}, {"cosine-excess", cosine_excess},
      {"torus-noncollapse", torus_noncollapse}, {"omega-sphere", omega_sphere},
      {"umbilicity", umbilicity},           {"gh-oracle", gh_oracle},
      {"suspension", suspension},           {"eigen-continuity", eigen_continuity}};
  return r;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

} // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& e : registry()) n.emplace_back(e.name);
    return n;
  }();
  return names;
}

int criterion_of(const std::string& experiment) {
  const auto& names = experiment_names();
  const auto it = std::find(names.begin(), names.end(), experiment);
  if (it == names.end()) throw InvalidArgument("unknown experiment '" + experiment + "'");
  return static_cast<int>(it - names.begin()) + 1;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  const int criterion = criterion_of(config.experiment);
  ExperimentReport report;
  report.experiment = config.experiment;
  report.criterion = criterion;
  Context ctx(config, report);
  const double t0 = now_seconds();
  registry()[criterion - 1].run(ctx);
  report.elapsed_seconds = now_seconds() - t0;
  report.data = ctx.data.dump();
  report.pass = !report.checks.empty() &&
                std::all_of(report.checks.begin(), report.checks.end(), [](const CheckResult& c) { return c.pass; });

  if (!config.json_out.empty()) write_file(config.json_out, report_json(report, config));
  if (!config.csv_dir.empty()) {
    std::filesystem::create_directories(config.csv_dir);
    for (const auto& [name, csv] : report.tables) write_file(std::filesystem::path(config.csv_dir) / name, csv);
  }
  return report;
}

std::string report_json(const ExperimentReport& report, const ExperimentConfig& config) {
  ojson checks = ojson::array();
  ojson timings = ojson::object();
  for (const auto& c : report.checks) {
    ojson j{{"name", c.name}};
    if (c.timing) {
      j["value"] = nullptr;
      timings[c.name] = c.value;
    } else {
      j["value"] = c.value;
    }
    j["threshold"] = c.threshold;
    j["relation"] = c.relation;
    j["pass"] = c.pass;
    if (!c.detail.empty()) j["detail"] = c.detail;
    checks.push_back(std::move(j));
  }
  ojson out{{"schema", 1},
            {"experiment", report.experiment},
            {"criterion", report.criterion},
            {"pass", report.pass},
            {"checks", checks},
            {"data", ojson::parse(report.data)},
            {"config", config_json(config)},
            {"timestamp",
             ojson{{"utc", utc_now()}, {"elapsed_seconds", report.elapsed_seconds}, {"timings", timings}}}};
  return out.dump(2) + "\n";
}

void clear_experiment_cache() { surface_cache().clear(); }

} // namespace pinchlab
