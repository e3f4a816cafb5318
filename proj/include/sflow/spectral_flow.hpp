#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sflow/inertia.hpp"
#include "sflow/operator_core.hpp"

namespace sflow {

enum class PathKind { dense, sign_compact };

/// Continuous family t in [0,1] -> selfadjoint operator with invertible
/// endpoints (an admissible path).  Paths are represented by samplers, not
/// sample arrays, so adaptive refinement can query arbitrary t; use
/// sampled_dense_path / sampled_window_path to wrap measured data.
///
/// Orientation conventions, fixed across the library:
///   dense paths        sfl = morse(L_0) - morse(L_1)   (negative directions lost),
///   sign-compact paths sfl = relative_morse_index_sc(L_0, L_1)
///                                                      (negative window directions gained,
///                                                       the Krasnosel'skii orientation).
class OperatorPath {
public:
    using DenseSampler = std::function<SymmetricMatrix(double)>;
    using WindowSampler = std::function<SignCompactOperator(double)>;

    static OperatorPath dense(DenseSampler sampler, double endpoint_gap = 1e-8);
    static OperatorPath sign_compact(WindowSampler sampler, double endpoint_gap = 1e-8);

    PathKind kind() const { return kind_; }
    double endpoint_gap() const { return endpoint_gap_; }

    SymmetricMatrix dense_at(double t) const;
    SignCompactOperator window_at(double t) const;

    /// The matrix the flow machinery watches: the dense operator itself, or
    /// the window part of J + K.  For sign-compact paths the J pattern and
    /// tail flags are checked against the t = 0 reference on every call.
    SymmetricMatrix matrix_at(double t) const;

    /// Reference window data (sign-compact paths only).
    const SignCompactOperator& window_reference() const;

private:
    OperatorPath() = default;
    void validate_endpoints() const;

    PathKind kind_ = PathKind::dense;
    DenseSampler dense_;
    WindowSampler window_;
    std::optional<SignCompactOperator> window_ref_;
    double endpoint_gap_ = 1e-8;
};

struct Crossing {
    double t;
    int direction;  // +1 or -1, in the path-kind orientation
    int multiplicity;
};

enum class SflMethod { crossings, endpoint };

struct SflResult {
    int value = 0;
    std::vector<Crossing> crossings;
    int refinement_depth = 0;
    SflMethod method = SflMethod::crossings;
};

struct SflOptions {
    int n_init = 64;            // initial number of grid cells (>= 2 samples)
    double gap = 1e-8;          // degeneracy certificate
    double guard_factor = 10.0; // refine when an eigenvalue magnitude dips below guard_factor*gap
    int depth_cap = 40;         // bisection depth limit per cell
    double t_tol = 1e-8;        // crossing isolation width
};

/// Spectral flow by eigenvalue-crossing tracking: samples the path on a grid,
/// adaptively bisects cells whose Morse count changes or whose eigenvalues
/// dip below the guard band, and sums the signed jumps of isolated crossings.
/// The net value telescopes, so it always equals the endpoint reduction of
/// the path's kind.  Throws UnresolvedCrossing on degenerate arcs.
SflResult sfl_crossings(const OperatorPath& path, const SflOptions& options = {});

/// Spectral flow by endpoint relative Morse index (sign-compact paths only).
SflResult sfl_endpoint(const OperatorPath& path);

/// Reparameterized concatenation; endpoint operators must match within
/// match_tol.  Sign-compact operands are padded to a common window.
OperatorPath concatenate(const OperatorPath& p1, const OperatorPath& p2,
                         double match_tol = 1e-8);

/// t -> p(1 - t); spectral flow negates.
OperatorPath reverse_path(const OperatorPath& p);

/// Cogredient path t -> M(t)^T L(t) M(t) (window-local for sign-compact
/// paths); spectral flow is preserved for invertible M.
OperatorPath congruent_path(const OperatorPath& p,
                            std::function<Eigen::MatrixXd(double)> m);

struct HomotopyReport {
    bool consistent = false;
    int value = 0;
    std::vector<int> slice_values;
    double min_endpoint_margin = 0.0;
    double max_endpoint_margin = 0.0;
};

/// Checks sfl(h(s, .)) over n_s sampled slices; all slices of a homotopy with
/// invertible ends must agree.  Slices whose endpoints fail the gap raise
/// EndpointDegenerateInHomotopy.
HomotopyReport homotopy_check(const std::function<OperatorPath(double)>& slice_at, int n_s,
                              const SflOptions& options = {});

/// Piecewise-linear interpolation through (t, operator) samples covering [0,1].
OperatorPath sampled_dense_path(std::vector<std::pair<double, SymmetricMatrix>> samples,
                                double endpoint_gap = 1e-8);
OperatorPath sampled_window_path(std::vector<std::pair<double, SignCompactOperator>> samples,
                                 double endpoint_gap = 1e-8);

/// The Krasnosel'skii family gamma_n: t -> id + t K_n with
/// K_n = -2 (projection on the first n basis vectors), modeled on a plus-tail
/// window of dimension window_dim (>= n).
OperatorPath krasnoselskii_path(int n, int window_dim = 0, double endpoint_gap = 1e-8);

}  // namespace sflow
