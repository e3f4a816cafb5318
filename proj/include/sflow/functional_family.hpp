#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sflow/spectral_flow.hpp"

namespace sflow {

/// Parameterized C2 functional on a truncated Hilbert space with trivial
/// branch at 0: f_lambda(0) is critical for every lambda.  Gradients and
/// Hessians may be analytic; otherwise central finite differences are used.
/// Callbacks must be pure and reentrant (scans evaluate them concurrently).
struct FunctionalFamily {
    int galerkin_dim = 0;
    int param_dim = 0;
    std::string name;
    std::function<double(const Eigen::VectorXd& lambda, const Eigen::VectorXd& u)> eval;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> grad;  // optional
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> hess;  // optional

    /// Hessian family representation: dense Galerkin matrices, or a
    /// sign-compact window model (strongly indefinite families).
    PathKind hessian_kind = PathKind::dense;
    std::function<SignCompactOperator(const Eigen::VectorXd& lambda)> window_hessian;  // sign_compact only
};

/// Gradient of f_lambda at u (analytic if provided, else central differences).
Eigen::VectorXd family_gradient(const FunctionalFamily& f, const Eigen::VectorXd& lambda,
                                const Eigen::VectorXd& u);

/// Hessian of f_lambda at the trivial branch point 0.  Finite-difference
/// Hessians are checked for symmetry (NonSymmetricHessian) before
/// symmetrization; the trivial-branch residual ||grad f_lambda(0)|| <= 1e-10
/// is verified on every call.
SymmetricMatrix hessian_at_zero(const FunctionalFamily& f, const Eigen::VectorXd& lambda);

/// Window form of the Hessian at 0 for sign-compact families.
SignCompactOperator window_hessian_at_zero(const FunctionalFamily& f,
                                           const Eigen::VectorXd& lambda);

/// The operator path t -> Hessian of f at gamma(t); kind follows the family.
OperatorPath hessian_path(const FunctionalFamily& f,
                          std::function<Eigen::VectorXd(double)> gamma,
                          double endpoint_gap = 1e-8);

struct NewtonOptions {
    int max_iter = 100;
    double tol = 1e-11;
};

struct NewtonResult {
    Eigen::VectorXd u;
    double grad_residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton for critical points of f_lambda: halving line search on
/// ||grad f||, gradient-descent fallback when the Hessian is singular.
/// Never throws on non-convergence; the best iterate is returned.
NewtonResult newton_critical_point(const FunctionalFamily& f, const Eigen::VectorXd& lambda,
                                   const Eigen::VectorXd& u0, const NewtonOptions& options = {});

struct BifurcationWitness {
    Eigen::VectorXd lambda;
    Eigen::VectorXd u;
    double grad_residual = 0.0;
    double radius = 0.0;
};

struct BifurcationRecord {
    double t_star = 0.0;
    Eigen::VectorXd lambda_star;
    int kernel_dim = 0;
    std::vector<BifurcationWitness> witnesses;  // norms decreasing toward 0
    std::vector<double> radius_schedule;
};

struct RejectedCandidate {
    double t_star = 0.0;
    Eigen::VectorXd lambda_star;
    int kernel_dim = 0;
    std::string reason;  // "degenerate-but-no-branch"
};

struct BifurcationScanOptions {
    int n_scan = 256;
    std::vector<double> radii = {1e-2, 1e-3, 1e-4};  // decreasing, factor-10 spacing
    double gap = 1e-8;
    double kernel_tol = 1e-4;       // eigenvalue magnitude counted as kernel
    double witness_tol = 1e-9;      // accepted gradient residual
    double flank_scale = 0.25;      // parameter offset per radius: flank_scale * r^2
    int random_seeds = 8;           // extra perturbed seeds per kernel direction
    std::uint64_t seed = 0;
    NewtonOptions newton;
};

struct BifurcationScanReport {
    std::vector<BifurcationRecord> records;  // sorted by t_star
    std::vector<RejectedCandidate> rejected;
};

/// Scan-then-bisect bifurcation detection on a parameter path: locate
/// degeneracy instants of the Hessian family (bisected to 1e-6 in t), then
/// certify each by a norm-decreasing sequence of nontrivial critical points
/// seeded along the kernel directions, one per radius.  Candidates without a
/// full witness sequence are reported, not returned as records.
BifurcationScanReport find_bifurcation_on_path(const FunctionalFamily& f,
                                               std::function<Eigen::VectorXd(double)> gamma,
                                               const BifurcationScanOptions& options = {});

/// Built-in families: "krasnoselskii", "torus_demo", "positive_definite".
FunctionalFamily family_registry(const std::string& name);

}  // namespace sflow
