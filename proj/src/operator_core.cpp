#include "sflow/operator_core.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>

namespace sflow {

SymmetricMatrix::SymmetricMatrix(Eigen::MatrixXd entries) {
    if (entries.rows() != entries.cols() || entries.rows() == 0)
        throw DimensionMismatch("SymmetricMatrix: entries must be square and non-empty");
    if (!entries.allFinite())
        throw Error("SymmetricMatrix: entries must be finite");
    entries_ = 0.5 * (entries + entries.transpose()).eval();
}

SymmetricMatrix SymmetricMatrix::identity(int n) {
    return SymmetricMatrix(Eigen::MatrixXd::Identity(n, n));
}

SymmetricMatrix SymmetricMatrix::diagonal(const Eigen::VectorXd& d) {
    return SymmetricMatrix(Eigen::MatrixXd(d.asDiagonal()));
}

SymmetricMatrix SymmetricMatrix::zero(int n) {
    return SymmetricMatrix(Eigen::MatrixXd::Zero(n, n));
}

SignCompactOperator::SignCompactOperator(std::vector<int> j_window, SymmetricMatrix k_window,
                                         bool tail_plus, bool tail_minus)
    : j_window_(std::move(j_window)),
      k_window_(std::move(k_window)),
      tail_plus_(tail_plus),
      tail_minus_(tail_minus) {
    if (j_window_.empty())
        throw DimensionMismatch("SignCompactOperator: empty window");
    if (static_cast<int>(j_window_.size()) != k_window_.dim())
        throw DimensionMismatch("SignCompactOperator: J window and K window sizes differ");
    for (int s : j_window_)
        if (s != 1 && s != -1) throw Error("SignCompactOperator: J window entries must be +-1");
    if (!tail_plus_ && !tail_minus_)
        throw Error("SignCompactOperator: at least one tail must be present");
}

SymmetricMatrix SignCompactOperator::window_operator() const {
    Eigen::MatrixXd m = k_window_.entries();
    for (int i = 0; i < window_dim(); ++i) m(i, i) += j_window_[i];
    return SymmetricMatrix(std::move(m));
}

SignCompactOperator SignCompactOperator::padded(int new_dim,
                                                const std::vector<int>& j_extension) const {
    const int w = window_dim();
    if (new_dim < w) throw DimensionMismatch("padded: new window smaller than current");
    if (static_cast<int>(j_extension.size()) != new_dim - w)
        throw DimensionMismatch("padded: extension length mismatch");
    std::vector<int> j = j_window_;
    j.insert(j.end(), j_extension.begin(), j_extension.end());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(new_dim, new_dim);
    k.topLeftCorner(w, w) = k_window_.entries();
    return SignCompactOperator(std::move(j), SymmetricMatrix(std::move(k)), tail_plus_, tail_minus_);
}

const char* to_string(EssentialClass c) {
    switch (c) {
        case EssentialClass::essentially_positive: return "essentially_positive";
        case EssentialClass::essentially_negative: return "essentially_negative";
        case EssentialClass::strongly_indefinite: return "strongly_indefinite";
    }
    return "?";
}

Spectrum eigendecompose(const SymmetricMatrix& a, double tol) {
    if (tol <= 0.0) throw Error("eigendecompose: tol must be positive");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a.entries());
    if (solver.info() != Eigen::Success)
        throw EigendecompositionFailure(std::numeric_limits<double>::infinity(), tol);

    Spectrum spec;
    spec.eigenvalues = solver.eigenvalues();
    spec.eigenvectors = solver.eigenvectors();

    // Sign convention: component of largest magnitude made positive.
    const int n = a.dim();
    for (int k = 0; k < n; ++k) {
        int imax = 0;
        double vmax = 0.0;
        for (int i = 0; i < n; ++i) {
            double v = std::abs(spec.eigenvectors(i, k));
            if (v > vmax) {
                vmax = v;
                imax = i;
            }
        }
        if (spec.eigenvectors(imax, k) < 0.0) spec.eigenvectors.col(k) *= -1.0;
    }

    double residual = 0.0;
    for (int k = 0; k < n; ++k) {
        double r = (a.entries() * spec.eigenvectors.col(k) -
                    spec.eigenvalues[k] * spec.eigenvectors.col(k))
                       .norm();
        residual = std::max(residual, r);
    }
    spec.residual = residual;

    const double norm = std::max(spec.eigenvalues.cwiseAbs().maxCoeff(), 0.0);
    if (residual > tol * std::max(norm, 1e-300))
        throw EigendecompositionFailure(residual, tol * norm);
    return spec;
}

namespace {

Eigen::VectorXd eigenvalues_only(const SymmetricMatrix& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a.entries(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw EigendecompositionFailure(std::numeric_limits<double>::infinity(), 0.0);
    return solver.eigenvalues();
}

void require_invertible(const char* where, const Eigen::VectorXd& eigenvalues, double gap) {
    double min_abs = eigenvalues.cwiseAbs().minCoeff();
    if (min_abs < gap) throw DegenerateOperator(where, min_abs, gap);
}

}  // namespace

int morse_index(const SymmetricMatrix& a, double gap) {
    Eigen::VectorXd ev = eigenvalues_only(a);
    require_invertible("morse_index", ev, gap);
    int count = 0;
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] < 0.0) ++count;
    return count;
}

int intersection_dimension(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, double sv_cutoff) {
    const int du = static_cast<int>(u.cols());
    const int dv = static_cast<int>(v.cols());
    if (du == 0 || dv == 0) return 0;
    Eigen::MatrixXd stacked(u.rows(), du + dv);
    stacked << u, v;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > sv_cutoff) ++rank;
    return du + dv - rank;
}

int relative_morse_index(const SymmetricMatrix& s, const SymmetricMatrix& t, double gap) {
    if (s.dim() != t.dim())
        throw DimensionMismatch("relative_morse_index: operators of different dimension");
    Spectrum ss = eigendecompose(s);
    Spectrum st = eigendecompose(t);
    require_invertible("relative_morse_index (S)", ss.eigenvalues, gap);
    require_invertible("relative_morse_index (T)", st.eigenvalues, gap);

    auto split = [](const Spectrum& sp, bool negative) {
        std::vector<int> idx;
        for (int i = 0; i < sp.eigenvalues.size(); ++i)
            if ((sp.eigenvalues[i] < 0.0) == negative) idx.push_back(i);
        Eigen::MatrixXd basis(sp.eigenvectors.rows(), idx.size());
        for (size_t k = 0; k < idx.size(); ++k) basis.col(k) = sp.eigenvectors.col(idx[k]);
        return basis;
    };

    Eigen::MatrixXd s_neg = split(ss, true);
    Eigen::MatrixXd s_pos = split(ss, false);
    Eigen::MatrixXd t_neg = split(st, true);
    Eigen::MatrixXd t_pos = split(st, false);

    return intersection_dimension(s_neg, t_pos) - intersection_dimension(s_pos, t_neg);
}

std::pair<SignCompactOperator, SignCompactOperator> pad_common(const SignCompactOperator& s,
                                                               const SignCompactOperator& t) {
    if (s.tail_plus() != t.tail_plus() || s.tail_minus() != t.tail_minus())
        throw MismatchedJ("pad_common: tail flags differ");
    const int ws = s.window_dim();
    const int wt = t.window_dim();
    const int m = std::min(ws, wt);
    const int big = std::max(ws, wt);
    for (int i = 0; i < m; ++i)
        if (s.j_window()[i] != t.j_window()[i])
            throw MismatchedJ("pad_common: J window sign patterns differ");

    // Extension entries of the longer window must be realizable by the
    // shorter operator's tails: beyond its window the shorter one is exactly
    // its tail signs, so a +1 needs a plus tail and a -1 a minus tail.
    const SignCompactOperator& longer = (ws >= wt) ? s : t;
    std::vector<int> ext(longer.j_window().begin() + m, longer.j_window().end());
    for (int sign : ext) {
        if (sign == 1 && !s.tail_plus())
            throw MismatchedJ("pad_common: +1 extension without a plus tail");
        if (sign == -1 && !s.tail_minus())
            throw MismatchedJ("pad_common: -1 extension without a minus tail");
    }

    SignCompactOperator ps = (ws == big) ? s : s.padded(big, ext);
    SignCompactOperator pt = (wt == big) ? t : t.padded(big, ext);
    return {std::move(ps), std::move(pt)};
}

int relative_morse_index_sc(const SignCompactOperator& s, const SignCompactOperator& t,
                            double gap) {
    auto [ps, pt] = pad_common(s, t);
    // Flow orientation from S to T: negative window directions gained count +1,
    // so this is the plain relative Morse index with the arguments exchanged.
    return relative_morse_index(pt.window_operator(), ps.window_operator(), gap);
}

EssentialClass classify_essential(const SignCompactOperator& s) {
    if (s.tail_plus() && s.tail_minus()) return EssentialClass::strongly_indefinite;
    return s.tail_plus() ? EssentialClass::essentially_positive
                         : EssentialClass::essentially_negative;
}

}  // namespace sflow
