#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "sflow/parameter_scan.hpp"
#include "sflow/spectral_flow.hpp"

namespace sflow {

/// Family of (semi-)Riemannian metrics over a finite-dimensional parameter
/// chart.  The metric callback must be pure; scans evaluate it concurrently.
struct MetricFamily {
    int manifold_dim = 0;   // m <= 4 (the split-spheres product needs 4)
    int param_dim = 0;
    std::string name;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd& lambda, const Eigen::VectorXd& x)> metric;
    int signature_index = 0;  // nu: negative directions of the metric, constant over the family
    std::vector<std::array<double, 2>> chart_bounds;  // per coordinate
    Eigen::VectorXd default_lambda;
    Eigen::VectorXd aux;  // registry metadata (e.g. split-spheres a, b, p, q)
};

/// Registry names: "euclidean", "round_sphere(radius)",
/// "ellipsoid_revolution(c)", "flat_torus", "split_spheres(a, b, p, q)".
MetricFamily geometry_registry(const std::string& spec);

/// Christoffel symbols Gamma^k_{ij} by central differences of the metric.
struct Christoffel {
    std::vector<Eigen::MatrixXd> gamma;  // gamma[k](i, j), symmetric in (i, j)
    Eigen::VectorXd apply(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
};
Christoffel christoffel(const MetricFamily& g, const Eigen::VectorXd& lambda,
                        const Eigen::VectorXd& x, double h = 1e-5);

/// Curvature tensor R^l_{ijk} (convention R(e_i, e_j) e_k = R^l_{ijk} e_l,
/// R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y]; round spheres get positive
/// sectional curvature).  Assembled from nested central differences; the
/// antisymmetry and first-Bianchi defects are checked internally.
class CurvatureTensor {
public:
    CurvatureTensor(int m, std::vector<double> components);
    int dim() const { return m_; }
    double up(int l, int i, int j, int k) const { return r_[((size_t(i) * m_ + j) * m_ + k) * m_ + l]; }
    Eigen::VectorXd apply(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                          const Eigen::VectorXd& w) const;  // R(u, v) w
    double consistency_defect() const { return defect_; }   // relative antisymmetry + Bianchi

private:
    int m_;
    std::vector<double> r_;
    double defect_ = 0.0;
};

CurvatureTensor riemann_curvature(const MetricFamily& g, const Eigen::VectorXd& lambda,
                                  const Eigen::VectorXd& x, double h = 2e-4);

/// g(R(u, w) w, u) / (|u|^2 |w|^2 - g(u, w)^2).
double sectional_curvature(const MetricFamily& g, const Eigen::VectorXd& lambda,
                           const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& w, double h = 2e-4);

/// Geodesic through (p, v) on [0, 1] with a g-orthonormal parallel frame,
/// integrated jointly by fixed-step RK4.  The frame is orthonormalized at
/// t = 0 only; transport keeps it orthonormal up to integrator error.
struct GeodesicRecord {
    Eigen::VectorXd lambda, p, v;
    int steps = 0;
    std::vector<double> ts;
    std::vector<Eigen::VectorXd> xs, vs;
    std::vector<Eigen::MatrixXd> frames;  // columns = frame vectors
    std::vector<int> frame_signs;         // eps_i = g(E_i, E_i)
    double speed2 = 0.0;                  // g(v, v) at t = 0 (conserved)
    double energy_drift = 0.0;            // max_t |g(v,v) - speed2|
};

/// steps = 0 picks ~400 integration steps per unit of |g(v,v)|^(1/2).
GeodesicRecord geodesic_shoot(const MetricFamily& g, const Eigen::VectorXd& lambda,
                              const Eigen::VectorXd& p, const Eigen::VectorXd& v,
                              int steps = 0);

/// Discrete residuals of a stored record (5-point stencils): geodesic
/// equation defect, frame-transport defect, and frame Gram drift.
struct RecordResiduals {
    double geodesic = 0.0;
    double frame_parallel = 0.0;
    double frame_gram = 0.0;
};
RecordResiduals verify_record(const GeodesicRecord& rec, const MetricFamily& g,
                              const Eigen::VectorXd& lambda);

struct ConjugateInstant {
    double t = 0.0;
    int multiplicity = 0;
    int sign_contribution = 0;  // +mult for Riemannian; from the FEM flow when nu > 0
};

struct IndexRecord {
    std::vector<ConjugateInstant> conjugate_instants;
    int morse_index = -1;        // Riemannian only: sum of multiplicities in (0,1)
    int spectral_index = 0;
    bool spectral_index_valid = false;
    int fem_mesh = 0;
    bool degenerate = false;     // t = 1 conjugate
};

struct ConjugateOptions {
    double t_tol = 1e-6;   // bisection width for instants
    int s_stride = 1;      // tidal-matrix sampling stride over the record
};

/// Conjugate instants from the matrix Jacobi equation in the parallel frame:
/// J(0) = 0, J'(0) = I on the transverse space; instants are rank drops
/// located by determinant sign change (odd multiplicity) or singular-value
/// dips (even), bisected to t_tol.  Signs are only filled for nu = 0; the
/// semi-Riemannian signs come from the FEM spectral flow, never from the ODE.
IndexRecord conjugate_points(const GeodesicRecord& rec, const MetricFamily& g,
                             const Eigen::VectorXd& lambda, const ConjugateOptions& options = {});

/// Second variation of the energy functional at the sub-geodesic t -> rec(s t),
/// assembled on piecewise-linear hats vanishing at the ends: in the parallel
/// frame the form reads  int u'^T E u' - s^2 u^T S(s t) u  with E = diag(eps).
/// Returns the dense matrix on (transverse dim) * (mesh_n - 1) unknowns,
/// node-major, so the E block structure is visible.
SymmetricMatrix second_variation_fem(const GeodesicRecord& rec, const MetricFamily& g,
                                     const Eigen::VectorXd& lambda, double s, int mesh_n);

struct SpectralIndexOptions {
    int mesh_n = 200;
    double gap = 1e-8;
    SflOptions sfl{.n_init = 32};
    ConjugateOptions conj;
};

/// Spectral index: minus the spectral flow of the operator path
/// s -> second variation of the sub-geodesic family, s in [s_0, 1], with s_0
/// below the first conjugate instant (the form is block-definite there).
/// Riemannian consistency (index == conjugate count) is integer-exact.
IndexRecord spectral_index(const GeodesicRecord& rec, const MetricFamily& g,
                           const Eigen::VectorXd& lambda,
                           const SpectralIndexOptions& options = {});

/// Trivial branch of geodesics over a chart: node coordinates -> (lambda, p, v).
struct TrivialBranchSpec {
    std::function<void(const Eigen::VectorXd& node, Eigen::VectorXd* lambda,
                       Eigen::VectorXd* p, Eigen::VectorXd* v)> at;
};

/// Branch presets: "sphere_tm" (chart |v|, angle), "ellipsoid" (chart c, L),
/// "flat_torus" (chart v_x, v_y), "split_spheres" (chart L, unused).
TrivialBranchSpec branch_registry(const std::string& name, const MetricFamily& g);

struct GeodesicScanOptions {
    ScanOptions scan;
    int steps_per_unit = 150;  // integration steps per unit speed at scan accuracy
    int min_steps = 200;
    int s_stride = 2;
    int fem_mesh = 96;         // only used for nu > 0 scans
};

/// Per-node spectral index and end-degeneracy of the trivial branch; edge
/// labels are index differences (the endpoint reduction of the connecting
/// path); masks, components and labels delegate to the scan machinery.
/// Nodes where the branch fails (chart exit) are excluded and counted.
ScanResult geodesic_family_scan(const MetricFamily& g, const TrivialBranchSpec& branch,
                                const ParameterChart& chart,
                                const GeodesicScanOptions& options = {});

/// Standard equator branch data for split_spheres(a, b, p, q) at scale L.
void split_spheres_branch(const MetricFamily& g, double L, Eigen::VectorXd* p,
                          Eigen::VectorXd* v);

}  // namespace sflow
