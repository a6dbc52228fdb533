#include "pinchlab/pinching.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "pinchlab/error.hpp"

namespace pinchlab {

namespace {

double largest_generalized(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(0.5 * (A + A.transpose()),
                                                                0.5 * (B + B.transpose()));
  if (ges.info() != Eigen::Success) throw ConsistencyError("Gram matrix is not positive definite");
  return ges.eigenvalues().maxCoeff();
}

} // namespace

OperatorSet::OperatorSet(const SimplicialSurface& m)
    : surface(&m),
      atlas(m),
      curvature(gaussian_curvature(m)),
      laplacian(assemble_laplacian(m)),
      bundle(assemble_bundle_laplacian(atlas)),
      curvature_form(curvature_gradient_form(m, curvature.K)) {}

ESection OperatorSet::section_of(const FunctionField& f) const { return s_of_f(f, gradient(atlas, f)); }

BochnerNorm OperatorSet::bochner(const FunctionField& f) const {
  return pinching_norm_bochner(laplacian, curvature_form, f, n);
}

double OperatorSet::bundle_norm(const FunctionField& f) const { return pinching_norm_bundle(bundle, section_of(f)); }

ObataFit estimate_obata_constant(const FunctionField& f, const OperatorSet& ops) {
  const FunctionField f0 = f - FunctionField::constant(f.surface(), mean_value(f));
  const double norm0 = ops.laplacian.mass_norm_squared(f0.values());
  if (!(norm0 > 1e-24 * std::max(1.0, ops.laplacian.mass_norm_squared(f.values()))))
    throw InvalidArgument("Obata constant of a constant function");
  const Eigen::VectorXd lap = ops.laplacian.weak_apply(f0.values());
  ObataFit fit;
  fit.c = ops.laplacian.quadratic_form(f0.values()) / (ops.n * norm0);
  const double lap_norm = std::sqrt(ops.laplacian.mass_norm_squared(lap));
  const Eigen::VectorXd r = lap - ops.n * fit.c * f0.values();
  fit.residual = lap_norm > 0 ? std::sqrt(ops.laplacian.mass_norm_squared(r)) / lap_norm : 0.0;
  fit.positive = fit.c > 0.0;
  return fit;
}

PinchReport certify_subspace_pinching(const std::vector<FunctionField>& fields, const OperatorSet& ops,
                                      const std::vector<std::string>& names, const Spectrum* spectrum,
                                      const std::optional<ProjectionSpec>& band) {
  if (fields.empty()) throw InvalidArgument("empty subspace");
  const SimplicialSurface& m = *ops.surface;
  const int r = static_cast<int>(fields.size());
  const double vol = m.total_volume();
  const OperatorPencil& L = ops.laplacian;

  PinchReport rep;
  rep.n = ops.n;
  Eigen::MatrixXd F(m.num_vertices(), r);
  Eigen::MatrixXd SF(ops.bundle.dimension(), r);
  for (int j = 0; j < r; ++j) {
    const FunctionField& f = fields[j];
    if (&f.surface() != &m) throw InvalidArgument("field lives on a different surface");
    PinchRecord rec;
    rec.name = j < static_cast<int>(names.size()) ? names[j] : "f" + std::to_string(j);
    rec.norm_f = std::sqrt(L.mass_norm_squared(f.values()));
    if (!(rec.norm_f > 0.0)) throw InvalidArgument("zero field in subspace");
    rec.norm_laplacian = std::sqrt(L.mass_norm_squared(L.weak_apply(f.values())));
    const BochnerNorm b = ops.bochner(f);
    const ESection S = ops.section_of(f);
    rec.pinch_bochner = b.value;
    rec.bochner_clamp = b.clamp;
    rep.clamp_warning = rep.clamp_warning || b.clamp_warning;
    rec.pinch_bundle = pinching_norm_bundle(ops.bundle, S);
    rec.ratio_to_f = rec.pinch_bochner / rec.norm_f;
    rec.ratio_to_laplacian = rec.norm_laplacian > 0 ? rec.pinch_bochner / rec.norm_laplacian : 0.0;
    try {
      const ObataFit fit = estimate_obata_constant(f, ops);
      rec.obata_c = fit.c;
      rec.obata_residual = fit.residual;
    } catch (const InvalidArgument&) {
      rec.obata_c = 0.0;
      rec.obata_residual = 0.0;
    }
    rep.records.push_back(rec);
    F.col(j) = f.values() / rec.norm_f;
    SF.col(j) = S.to_vector() / rec.norm_f;
  }

  const Eigen::MatrixXd G = F.transpose() * (L.mass.asDiagonal() * F) / vol;
  rep.gram_determinant = G.determinant();
  if (!(rep.gram_determinant > 1e-10)) throw InvalidArgument("subspace fields are linearly dependent");

  const Eigen::MatrixXd KF = L.stiffness * F;
  const Eigen::MatrixXd LF = L.mass.cwiseInverse().asDiagonal() * KF;
  const Eigen::MatrixXd A = (LF.transpose() * (L.mass.asDiagonal() * LF) -
                             F.transpose() * (ops.curvature_form * F) - 2.0 * F.transpose() * KF) / vol +
                            ops.n * G;
  const Eigen::MatrixXd AB = SF.transpose() * (ops.bundle.stiffness * SF) / vol;
  const Eigen::MatrixXd MB = SF.transpose() * (ops.bundle.mass.asDiagonal() * SF) / vol;
  if (r == 1) {
    rep.delta = rep.records[0].ratio_to_f;
    rep.delta_bundle = rep.records[0].pinch_bundle / rep.records[0].norm_f;
  } else {
    rep.delta = std::sqrt(std::max(largest_generalized(A, G), 0.0));
    rep.delta_bundle = std::sqrt(std::max(largest_generalized(AB, G), 0.0));
  }
  rep.max_f_over_section = largest_generalized(G, MB);
  rep.section_rayleigh_max = largest_generalized(AB, MB);

  double num = 0.0, den = 0.0;
  for (int j = 0; j < r; ++j) {
    const Eigen::VectorXd f0 = F.col(j).array() - mean_value(FunctionField(m, F.col(j)));
    num += L.quadratic_form(f0);
    den += L.mass_norm_squared(f0);
  }
  rep.obata_c = den > 0 ? num / (ops.n * den) : 0.0;

  if (spectrum && band) rep.band_multiplicity = static_cast<int>(band_indices(*band, *spectrum).size());
  return rep;
}

std::string pinch_csv_header() {
  return "name,norm_f,norm_laplacian,pinch_bochner,pinch_bundle,bochner_clamp,ratio_to_f,"
         "ratio_to_laplacian,obata_c,obata_residual";
}

std::string to_csv(const PinchReport& rep) {
  std::ostringstream out;
  out << std::setprecision(17) << pinch_csv_header() << '\n';
  for (const auto& r : rep.records)
    out << r.name << ',' << r.norm_f << ',' << r.norm_laplacian << ',' << r.pinch_bochner << ','
        << r.pinch_bundle << ',' << r.bochner_clamp << ',' << r.ratio_to_f << ',' << r.ratio_to_laplacian
        << ',' << r.obata_c << ',' << r.obata_residual << '\n';
  return out.str();
}

std::string to_json(const PinchReport& rep) {
  nlohmann::json j;
  j["n"] = rep.n;
  j["delta"] = rep.delta;
  j["delta_bundle"] = rep.delta_bundle;
  j["max_f_over_section"] = rep.max_f_over_section;
  j["section_rayleigh_max"] = rep.section_rayleigh_max;
  j["gram_determinant"] = rep.gram_determinant;
  j["band_multiplicity"] = rep.band_multiplicity;
  j["obata_c"] = rep.obata_c;
  j["clamp_warning"] = rep.clamp_warning;
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : rep.records)
    recs.push_back({{"name", r.name},
                    {"norm_f", r.norm_f},
                    {"norm_laplacian", r.norm_laplacian},
                    {"pinch_bochner", r.pinch_bochner},
                    {"pinch_bundle", r.pinch_bundle},
                    {"bochner_clamp", r.bochner_clamp},
                    {"ratio_to_f", r.ratio_to_f},
                    {"ratio_to_laplacian", r.ratio_to_laplacian},
                    {"obata_c", r.obata_c},
                    {"obata_residual", r.obata_residual}});
  return j.dump();
}

OmegaResult omega_k(const OperatorSet& ops, const Spectrum& S, int k) {
  if (S.domain != PencilDomain::Function) throw InvalidArgument("Omega_k needs a function spectrum");
  if (k < 1) throw InvalidArgument("Omega_k: k must be positive");
  const double top = S.eigenvalues.empty() ? 1.0 : std::max(1.0, std::abs(S.eigenvalues.back()));
  std::vector<int> idx;
  for (int j = 0; j < S.size(); ++j)
    if (S.eigenvalues[j] > 1e-8 * top) idx.push_back(j);
  const int available = static_cast<int>(idx.size());
  const int m0 = std::max(30, 5 * k);
  if (available < m0)
    throw InvalidArgument("Omega_" + std::to_string(k) + " needs " + std::to_string(m0) +
                          " mean-zero eigenpairs, spectrum has " + std::to_string(available));

  const double vol = ops.surface->total_volume();
  OmegaResult out;
  out.k = k;
  for (int mm = m0; mm <= available; mm *= 2) {
    Eigen::MatrixXd Phi(S.vectors.rows(), mm);
    Eigen::VectorXd lam(mm);
    for (int i = 0; i < mm; ++i) {
      Phi.col(i) = S.vectors.col(idx[i]);
      lam[i] = S.eigenvalues[idx[i]];
    }
    Eigen::MatrixXd Q1 = Phi.transpose() * (ops.curvature_form * Phi) / vol;
    const Eigen::VectorXd inv = lam.cwiseInverse();
    Eigen::MatrixXd C = inv.asDiagonal() * Q1 * inv.asDiagonal();
    C = 0.5 * (C + C.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    const double value = es.eigenvalues()[mm - k];
    const double previous = out.history.empty() ? 0.0 : out.value;
    out.history.emplace_back(mm, value);
    out.value = value;
    out.inf_sup = es.eigenvalues()[k - 1];
    out.basis_size = mm;
    if (out.history.size() > 1 && std::abs(value - previous) <= 0.005 * std::abs(value)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

OmegaIdentity bochner_omega_identity_check(const FunctionField& f, const OperatorSet& ops) {
  const FunctionField f0 = f - FunctionField::constant(f.surface(), mean_value(f));
  const OperatorPencil& L = ops.laplacian;
  const Eigen::VectorXd lap = L.weak_apply(f0.values());
  const double lap_sq = L.mass_norm_squared(lap);
  if (!(lap_sq > 0.0)) throw InvalidArgument("identity check needs a nonconstant function");
  const double bundle = ops.bundle_norm(f0);
  const Eigen::VectorXd trace_part = lap - ops.n * f0.values();
  OmegaIdentity out;
  out.left = bundle * bundle - L.mass_norm_squared(trace_part) / ops.n;
  out.right = (ops.n - 1.0) / ops.n * lap_sq -
              f0.values().dot(ops.curvature_form * f0.values()) / ops.surface->total_volume();
  out.residual = std::abs(out.left - out.right) / lap_sq;
  return out;
}

std::vector<FunctionField> obata_kernel(const Spectrum& S, double threshold) {
  if (S.domain != PencilDomain::ESection) throw InvalidArgument("Obata kernel needs a bundle spectrum");
  const SimplicialSurface& m = *S.surface;
  std::vector<Eigen::VectorXd> basis;
  auto inner = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.cwiseProduct(b).dot(m.vertex_areas()) / m.total_volume();
  };
  for (int j = 0; j < S.size() && S.eigenvalues[j] <= threshold; ++j) {
    Eigen::VectorXd f = S.eigensection(j).scalar.values();
    const double before = std::sqrt(inner(f, f));
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) f -= inner(f, b) * b;
    const double after = std::sqrt(inner(f, f));
    if (after > 1e-8 * std::max(before, 1e-300)) basis.push_back(f / after);
  }
  std::vector<FunctionField> out;
  for (auto& b : basis) out.emplace_back(m, std::move(b));
  return out;
}

} // namespace pinchlab
