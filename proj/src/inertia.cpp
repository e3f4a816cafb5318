#include "sflow/inertia.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace sflow {

namespace {
constexpr int kBandLimit = 8;  // use banded slicing up to this half-bandwidth
}

InertiaProbe::InertiaProbe(const SymmetricMatrix& a) {
    const Eigen::MatrixXd& m = a.entries();
    n_ = a.dim();

    norm_bound_ = 0.0;
    for (int i = 0; i < n_; ++i) norm_bound_ = std::max(norm_bound_, m.row(i).cwiseAbs().sum());
    pivmin_ = 1e-30 * std::max(1.0, norm_bound_);

    int hb = 0;
    for (int j = 0; j < n_ && hb <= kBandLimit; ++j)
        for (int i = j + hb + 1; i < n_; ++i)
            if (m(i, j) != 0.0) hb = i - j;

    if (hb <= kBandLimit) {
        banded_ = true;
        halfbw_ = hb;
        band_ = Eigen::MatrixXd::Zero(halfbw_ + 1, n_);
        for (int j = 0; j < n_; ++j)
            for (int r = 0; r <= halfbw_ && j + r < n_; ++r) band_(r, j) = m(j + r, j);
    } else {
        Eigen::Tridiagonalization<Eigen::MatrixXd> tri(m);
        diag_ = tri.matrixT().diagonal();
        subdiag_ = tri.matrixT().diagonal(-1);
        source_ = std::make_shared<Eigen::MatrixXd>(m);
    }
}

int InertiaProbe::count_below_tridiag(double c) const {
    int count = 0;
    double q = diag_[0] - c;
    if (std::abs(q) < pivmin_) q = -pivmin_;
    if (q < 0.0) ++count;
    for (int i = 1; i < n_; ++i) {
        q = diag_[i] - c - subdiag_[i - 1] * subdiag_[i - 1] / q;
        if (std::abs(q) < pivmin_) q = -pivmin_;
        if (q < 0.0) ++count;
    }
    return count;
}

int InertiaProbe::count_below_banded(double c) const {
    // Unpivoted banded LDLT of A - cI with the pivot safeguard; the inertia
    // of D equals the inertia of the shifted matrix (Sylvester).
    Eigen::MatrixXd b = band_;
    b.row(0).array() -= c;
    int count = 0;
    for (int j = 0; j < n_; ++j) {
        double d = b(0, j);
        if (std::abs(d) < pivmin_) d = (d < 0.0) ? -pivmin_ : pivmin_;
        if (d < 0.0) ++count;
        const int reach = std::min(halfbw_, n_ - 1 - j);
        for (int r1 = 1; r1 <= reach; ++r1) {
            const double l1 = b(r1, j) / d;
            for (int r2 = r1; r2 <= reach; ++r2) b(r2 - r1, j + r1) -= l1 * b(r2, j);
        }
    }
    return count;
}

int InertiaProbe::count_below(double c) const {
    return banded_ ? count_below_banded(c) : count_below_tridiag(c);
}

double InertiaProbe::min_abs() const {
    double hi = std::max(norm_bound_, pivmin_);
    if (count_in(-hi, hi) == 0) return hi;  // empty spectrum window cannot happen; guard
    double lo = 0.0;
    for (int it = 0; it < 80 && hi - lo > 0.02 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (count_in(-mid, mid) > 0)
            hi = mid;
        else
            lo = mid;
    }
    return lo;
}

double InertiaProbe::frobenius_distance(const InertiaProbe& a, const InertiaProbe& b) {
    if (a.n_ != b.n_) throw DimensionMismatch("frobenius_distance: probe dimensions differ");
    if (a.banded_ && b.banded_) {
        const int hb = std::max(a.halfbw_, b.halfbw_);
        double sum = 0.0;
        for (int j = 0; j < a.n_; ++j)
            for (int r = 0; r <= hb && j + r < a.n_; ++r) {
                double da = (r <= a.halfbw_) ? a.band_(r, j) : 0.0;
                double db = (r <= b.halfbw_) ? b.band_(r, j) : 0.0;
                double diff = da - db;
                sum += (r == 0) ? diff * diff : 2.0 * diff * diff;
            }
        return std::sqrt(sum);
    }
    if (a.source_ && b.source_) return (*a.source_ - *b.source_).norm();
    throw Error("frobenius_distance: probes have incompatible storage");
}

}  // namespace sflow
