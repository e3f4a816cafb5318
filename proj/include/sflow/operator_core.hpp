#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sflow/errors.hpp"

namespace sflow {

/// Dense selfadjoint operator on a finite Galerkin space. Entries are
/// symmetrized at construction, so the stored matrix is exactly symmetric.
class SymmetricMatrix {
public:
    explicit SymmetricMatrix(Eigen::MatrixXd entries);

    int dim() const { return static_cast<int>(entries_.rows()); }
    const Eigen::MatrixXd& entries() const { return entries_; }
    double operator()(int i, int j) const { return entries_(i, j); }

    static SymmetricMatrix identity(int n);
    static SymmetricMatrix diagonal(const Eigen::VectorXd& d);
    static SymmetricMatrix zero(int n);

private:
    Eigen::MatrixXd entries_;
};

/// Eigendecomposition with ascending eigenvalues, orthonormal eigenvectors
/// (columns), and the attained residual max_k ||A v_k - lambda_k v_k||.
struct Spectrum {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
    double residual = 0.0;
};

/// Model of a Fredholm operator J + K: a fixed sign operator J (diagonal of
/// +-1 on a finite window, followed by identity tails on one or both sides)
/// plus a symmetric perturbation supported on the window.  All arithmetic is
/// window-local: outside the window the operator acts as +-identity, and
/// because both operators of a pair agree with J there, the tails contribute
/// nothing to relative Morse indices (block-diagonal spectral subspaces).
class SignCompactOperator {
public:
    SignCompactOperator(std::vector<int> j_window, SymmetricMatrix k_window,
                        bool tail_plus, bool tail_minus);

    int window_dim() const { return static_cast<int>(j_window_.size()); }
    const std::vector<int>& j_window() const { return j_window_; }
    const SymmetricMatrix& k_window() const { return k_window_; }
    bool tail_plus() const { return tail_plus_; }
    bool tail_minus() const { return tail_minus_; }

    /// The window part of J + K as a dense matrix.
    SymmetricMatrix window_operator() const;

    /// Enlarge the window to new_dim; K is padded with zeros and the new J
    /// entries are taken from j_extension (values for indices window_dim..new_dim).
    SignCompactOperator padded(int new_dim, const std::vector<int>& j_extension) const;

private:
    std::vector<int> j_window_;
    SymmetricMatrix k_window_;
    bool tail_plus_;
    bool tail_minus_;
};

enum class EssentialClass { essentially_positive, essentially_negative, strongly_indefinite };

const char* to_string(EssentialClass c);

/// Dense symmetric eigendecomposition.  Deterministic output: eigenvalues
/// ascending; each eigenvector is flipped so that its component of largest
/// magnitude (first such index on ties) is positive.  Throws
/// EigendecompositionFailure if the residual exceeds tol * ||A||.
Spectrum eigendecompose(const SymmetricMatrix& a, double tol = 1e-10);

/// Number of negative eigenvalues.  Requires min |eigenvalue| >= gap as an
/// invertibility certificate, else DegenerateOperator.
int morse_index(const SymmetricMatrix& a, double gap = 1e-8);

/// Relative Morse index of an invertible pair:
///   dim(E_-(S) cap E_+(T)) - dim(E_+(S) cap E_-(T)),
/// computed via ranks of stacked orthonormal bases.  In finite dimension this
/// equals morse_index(S) - morse_index(T).
int relative_morse_index(const SymmetricMatrix& s, const SymmetricMatrix& t, double gap = 1e-8);

/// Window relative Morse index of a sign-compact pair sharing the same J,
/// oriented as the flow from S to T: a window eigenvalue moving from + to -
/// contributes +1.  Equals dim(E_+(S) cap E_-(T)) - dim(E_-(S) cap E_+(T))
/// on the common window; the tails cancel exactly (see SignCompactOperator).
int relative_morse_index_sc(const SignCompactOperator& s, const SignCompactOperator& t,
                            double gap = 1e-8);

/// Essential spectrum classification from the tail flags; the compact window
/// perturbation K cannot move it.
EssentialClass classify_essential(const SignCompactOperator& s);

/// Pads two sign-compact operators to a common window, checking that their
/// sign data is consistent with a single J.  Throws MismatchedJ otherwise.
std::pair<SignCompactOperator, SignCompactOperator> pad_common(const SignCompactOperator& s,
                                                               const SignCompactOperator& t);

/// dim(span(U) cap span(V)) for matrices with orthonormal columns,
/// via dim U + dim V - rank [U V] with the given singular-value cutoff.
int intersection_dimension(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v,
                           double sv_cutoff = 1e-8);

}  // namespace sflow
