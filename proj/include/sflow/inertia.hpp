#pragma once

#include <Eigen/Dense>
#include <memory>

#include "sflow/operator_core.hpp"

namespace sflow {

/// Eigenvalue counting (spectrum slicing) for one symmetric matrix.
///
/// Narrow-band matrices (FEM assemblies are block tridiagonal) are sliced by
/// shifted banded LDLT in O(n) per query; general dense matrices are reduced
/// once to tridiagonal form by Householder reflections and then sliced with
/// the classical Sturm recursion, also O(n) per query.  Counts use the
/// safeguarded pivot convention, so results are deterministic.
class InertiaProbe {
public:
    explicit InertiaProbe(const SymmetricMatrix& a);

    int dim() const { return n_; }

    /// Number of eigenvalues strictly below c (up to the pivot safeguard).
    int count_below(double c) const;

    /// Number of negative eigenvalues.
    int negatives() const { return count_below(0.0); }

    /// Number of eigenvalues in the open-ish interval (lo, hi].
    int count_in(double lo, double hi) const { return count_below(hi) - count_below(lo); }

    /// Smallest eigenvalue magnitude, bisected to ~2% relative accuracy.
    double min_abs() const;

    /// Gershgorin bound on eigenvalue magnitudes.
    double norm_bound() const { return norm_bound_; }

    /// Frobenius distance between the source matrices of two probes built
    /// from structurally matching inputs (used as a Weyl bound on eigenvalue
    /// movement between path samples).
    static double frobenius_distance(const InertiaProbe& a, const InertiaProbe& b);

private:
    bool banded_ = false;
    int n_ = 0;
    int halfbw_ = 0;
    Eigen::MatrixXd band_;            // (halfbw_+1) x n lower band when banded_
    Eigen::VectorXd diag_, subdiag_;  // tridiagonal reduction otherwise
    std::shared_ptr<const Eigen::MatrixXd> source_;  // kept for dense inputs
    double norm_bound_ = 0.0;
    double pivmin_ = 0.0;

    int count_below_banded(double c) const;
    int count_below_tridiag(double c) const;
};

}  // namespace sflow
