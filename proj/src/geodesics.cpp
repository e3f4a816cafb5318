#include "sflow/geodesics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "sflow/parallel.hpp"

namespace sflow {

namespace {

Eigen::MatrixXd metric_at(const MetricFamily& g, const Eigen::VectorXd& lambda,
                          const Eigen::VectorXd& x) {
    Eigen::MatrixXd m = g.metric(lambda, x);
    if (m.rows() != g.manifold_dim || m.cols() != g.manifold_dim)
        throw DimensionMismatch("metric callback returned wrong size");
    if (!m.allFinite()) throw SingularMetric("metric not finite at sample point");
    return 0.5 * (m + m.transpose()).eval();
}

Eigen::MatrixXd metric_inverse(const Eigen::MatrixXd& m) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    const double scale = m.cwiseAbs().maxCoeff();
    if (std::abs(lu.determinant()) < 1e-12 * std::max(1.0, std::pow(scale, m.rows())))
        throw SingularMetric("metric not invertible");
    return lu.inverse();
}

}  // namespace

Eigen::VectorXd Christoffel::apply(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    const int m = static_cast<int>(gamma.size());
    Eigen::VectorXd w(m);
    for (int k = 0; k < m; ++k) w[k] = u.dot(gamma[k] * v);
    return w;
}

Christoffel christoffel(const MetricFamily& g, const Eigen::VectorXd& lambda,
                        const Eigen::VectorXd& x, double h) {
    const int m = g.manifold_dim;
    Eigen::MatrixXd ginv = metric_inverse(metric_at(g, lambda, x));

    std::vector<Eigen::MatrixXd> dg(m);
    Eigen::VectorXd xp = x, xm = x;
    for (int l = 0; l < m; ++l) {
        xp[l] += h;
        xm[l] -= h;
        dg[l] = (metric_at(g, lambda, xp) - metric_at(g, lambda, xm)) / (2.0 * h);
        xp[l] = x[l];
        xm[l] = x[l];
    }

    Christoffel out;
    out.gamma.assign(m, Eigen::MatrixXd::Zero(m, m));
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
                double sum = 0.0;
                for (int l = 0; l < m; ++l)
                    sum += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                out.gamma[k](i, j) = 0.5 * sum;
                out.gamma[k](j, i) = 0.5 * sum;
            }
    return out;
}

CurvatureTensor::CurvatureTensor(int m, std::vector<double> components)
    : m_(m), r_(std::move(components)) {
    double max_abs = 0.0;
    for (double v : r_) max_abs = std::max(max_abs, std::abs(v));
    double viol = 0.0;
    for (int i = 0; i < m_; ++i)
        for (int j = 0; j < m_; ++j)
            for (int k = 0; k < m_; ++k)
                for (int l = 0; l < m_; ++l) {
                    viol = std::max(viol, std::abs(up(l, i, j, k) + up(l, j, i, k)));
                    viol = std::max(
                        viol, std::abs(up(l, i, j, k) + up(l, j, k, i) + up(l, k, i, j)));
                }
    defect_ = viol / std::max(1.0, max_abs);
}

Eigen::VectorXd CurvatureTensor::apply(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                       const Eigen::VectorXd& w) const {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m_);
    for (int i = 0; i < m_; ++i) {
        if (u[i] == 0.0) continue;
        for (int j = 0; j < m_; ++j) {
            if (v[j] == 0.0) continue;
            const double uv = u[i] * v[j];
            for (int k = 0; k < m_; ++k) {
                if (w[k] == 0.0) continue;
                const double uvw = uv * w[k];
                for (int l = 0; l < m_; ++l) z[l] += up(l, i, j, k) * uvw;
            }
        }
    }
    return z;
}

CurvatureTensor riemann_curvature(const MetricFamily& g, const Eigen::VectorXd& lambda,
                                  const Eigen::VectorXd& x, double h) {
    const int m = g.manifold_dim;
    Christoffel c0 = christoffel(g, lambda, x);
    std::vector<Christoffel> cp(m), cm(m);
    Eigen::VectorXd xp = x, xm = x;
    for (int i = 0; i < m; ++i) {
        xp[i] += h;
        xm[i] -= h;
        cp[i] = christoffel(g, lambda, xp);
        cm[i] = christoffel(g, lambda, xm);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    // dgamma[i][k](j, l) = d_i Gamma^k_{jl}
    auto dgamma = [&](int i, int k, int j, int l) {
        return (cp[i].gamma[k](j, l) - cm[i].gamma[k](j, l)) / (2.0 * h);
    };

    std::vector<double> r(size_t(m) * m * m * m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k)
                for (int l = 0; l < m; ++l) {
                    double v = dgamma(i, l, j, k) - dgamma(j, l, i, k);
                    for (int mm = 0; mm < m; ++mm)
                        v += c0.gamma[l](i, mm) * c0.gamma[mm](j, k) -
                             c0.gamma[l](j, mm) * c0.gamma[mm](i, k);
                    r[((size_t(i) * m + j) * m + k) * m + l] = v;
                }
    return CurvatureTensor(m, std::move(r));
}

double sectional_curvature(const MetricFamily& g, const Eigen::VectorXd& lambda,
                           const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& w, double h) {
    Eigen::MatrixXd gm = metric_at(g, lambda, x);
    CurvatureTensor r = riemann_curvature(g, lambda, x, h);
    const double num = r.apply(u, w, w).dot(gm * u);
    const double uu = u.dot(gm * u), ww = w.dot(gm * w), uw = u.dot(gm * w);
    const double denom = uu * ww - uw * uw;
    if (std::abs(denom) < 1e-14) throw Error("sectional_curvature: degenerate plane");
    return num / denom;
}

namespace {

struct FrameBuild {
    Eigen::MatrixXd frame;  // columns
    std::vector<int> signs;
};

FrameBuild initial_frame(const Eigen::MatrixXd& g0, const Eigen::VectorXd& v, double speed2) {
    const int m = static_cast<int>(g0.rows());
    FrameBuild out;
    out.frame.resize(m, m);
    int have = 0;

    const double vnorm = v.norm();
    if (vnorm > 1e-14) {
        if (std::abs(speed2) < 1e-10 * std::max(1.0, vnorm * vnorm))
            throw TangentialDegeneracy("initial velocity is null; no transverse frame");
        out.frame.col(0) = v / std::sqrt(std::abs(speed2));
        out.signs.push_back(speed2 > 0.0 ? 1 : -1);
        have = 1;
    }

    for (int cand = 0; cand < m && have < m; ++cand) {
        Eigen::VectorXd w = Eigen::VectorXd::Unit(m, cand);
        for (int j = 0; j < have; ++j) {
            const double proj = w.dot(g0 * out.frame.col(j));
            w -= out.signs[j] * proj * out.frame.col(j);
        }
        const double ww = w.dot(g0 * w);
        if (std::abs(ww) < 1e-8) continue;  // degenerate against current span
        out.frame.col(have) = w / std::sqrt(std::abs(ww));
        out.signs.push_back(ww > 0.0 ? 1 : -1);
        ++have;
    }
    if (have < m)
        throw TangentialDegeneracy("could not complete a g-orthonormal frame");
    return out;
}

}  // namespace

GeodesicRecord geodesic_shoot(const MetricFamily& g, const Eigen::VectorXd& lambda,
                              const Eigen::VectorXd& p, const Eigen::VectorXd& v, int steps) {
    const int m = g.manifold_dim;
    if (p.size() != m || v.size() != m)
        throw DimensionMismatch("geodesic_shoot: point/velocity dimension");
    if (lambda.size() != g.param_dim)
        throw DimensionMismatch("geodesic_shoot: parameter dimension");

    Eigen::MatrixXd g0 = metric_at(g, lambda, p);
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g0, Eigen::EigenvaluesOnly);
        int neg = 0;
        for (int i = 0; i < m; ++i)
            if (es.eigenvalues()[i] < 0.0) ++neg;
        if (es.eigenvalues().cwiseAbs().minCoeff() < 1e-10)
            throw SingularMetric("metric degenerate at the start point");
        if (neg != g.signature_index)
            throw SingularMetric("metric signature does not match the family index");
    }

    GeodesicRecord rec;
    rec.lambda = lambda;
    rec.p = p;
    rec.v = v;
    rec.speed2 = v.dot(g0 * v);

    if (steps <= 0) {
        const double scale = std::sqrt(std::abs(rec.speed2));
        steps = std::clamp(int(std::ceil(400.0 * std::max(scale, 0.5))), 200, 100000);
    }
    rec.steps = steps;

    FrameBuild fb = initial_frame(g0, v, rec.speed2);
    rec.frame_signs = fb.signs;

    const double h = 1.0 / steps;
    Eigen::VectorXd x = p, vel = v;
    Eigen::MatrixXd frame = fb.frame;

    auto in_chart = [&](const Eigen::VectorXd& y) {
        for (int k = 0; k < m; ++k)
            if (y[k] < g.chart_bounds[k][0] || y[k] > g.chart_bounds[k][1]) return false;
        return true;
    };
    if (!in_chart(x)) throw ChartExit(0.0, "start point outside chart");

    rec.ts.reserve(steps + 1);
    rec.xs.reserve(steps + 1);
    rec.vs.reserve(steps + 1);
    rec.frames.reserve(steps + 1);
    rec.ts.push_back(0.0);
    rec.xs.push_back(x);
    rec.vs.push_back(vel);
    rec.frames.push_back(frame);

    struct Deriv {
        Eigen::VectorXd dx, dv;
        Eigen::MatrixXd dframe;
    };
    auto rhs = [&](const Eigen::VectorXd& xx, const Eigen::VectorXd& vv,
                   const Eigen::MatrixXd& ff) {
        Christoffel c = christoffel(g, lambda, xx);
        Deriv d;
        d.dx = vv;
        d.dv = -c.apply(vv, vv);
        d.dframe.resize(m, m);
        for (int col = 0; col < m; ++col) d.dframe.col(col) = -c.apply(vv, ff.col(col));
        return d;
    };

    for (int i = 0; i < steps; ++i) {
        Deriv k1 = rhs(x, vel, frame);
        Deriv k2 = rhs(x + 0.5 * h * k1.dx, vel + 0.5 * h * k1.dv, frame + 0.5 * h * k1.dframe);
        Deriv k3 = rhs(x + 0.5 * h * k2.dx, vel + 0.5 * h * k2.dv, frame + 0.5 * h * k2.dframe);
        Deriv k4 = rhs(x + h * k3.dx, vel + h * k3.dv, frame + h * k3.dframe);
        x += (h / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
        vel += (h / 6.0) * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
        frame += (h / 6.0) * (k1.dframe + 2.0 * k2.dframe + 2.0 * k3.dframe + k4.dframe);
        const double t = double(i + 1) * h;
        if (!x.allFinite() || !in_chart(x)) throw ChartExit(t, "trajectory left the chart");
        rec.ts.push_back(t);
        rec.xs.push_back(x);
        rec.vs.push_back(vel);
        rec.frames.push_back(frame);
    }

    double drift = 0.0;
    for (size_t i = 0; i < rec.xs.size(); ++i) {
        Eigen::MatrixXd gi = metric_at(g, lambda, rec.xs[i]);
        drift = std::max(drift, std::abs(rec.vs[i].dot(gi * rec.vs[i]) - rec.speed2));
    }
    rec.energy_drift = drift;
    return rec;
}

RecordResiduals verify_record(const GeodesicRecord& rec, const MetricFamily& g,
                              const Eigen::VectorXd& lambda) {
    RecordResiduals out;
    const int n = static_cast<int>(rec.xs.size());
    if (n < 5) return out;
    const double h = rec.ts[1] - rec.ts[0];
    const int m = static_cast<int>(rec.p.size());
    Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) eps(i, i) = rec.frame_signs[i];

    for (int i = 2; i < n - 2; ++i) {
        Christoffel c = christoffel(g, lambda, rec.xs[i]);
        Eigen::VectorXd acc = (-rec.xs[i + 2] + 16.0 * rec.xs[i + 1] - 30.0 * rec.xs[i] +
                               16.0 * rec.xs[i - 1] - rec.xs[i - 2]) /
                              (12.0 * h * h);
        out.geodesic = std::max(out.geodesic,
                                (acc + c.apply(rec.vs[i], rec.vs[i])).cwiseAbs().maxCoeff());

        Eigen::MatrixXd dframe = (rec.frames[i - 2] - 8.0 * rec.frames[i - 1] +
                                  8.0 * rec.frames[i + 1] - rec.frames[i + 2]) /
                                 (12.0 * h);
        for (int col = 0; col < m; ++col) {
            Eigen::VectorXd defect = dframe.col(col) + c.apply(rec.vs[i], rec.frames[i].col(col));
            out.frame_parallel = std::max(out.frame_parallel, defect.cwiseAbs().maxCoeff());
        }
        Eigen::MatrixXd gi = metric_at(g, lambda, rec.xs[i]);
        Eigen::MatrixXd gram = rec.frames[i].transpose() * gi * rec.frames[i];
        out.frame_gram = std::max(out.frame_gram, (gram - eps).cwiseAbs().maxCoeff());
    }
    return out;
}

namespace {

/// Tidal data along a record: frame signs of the transverse columns and the
/// matrices S_ab(t) = g(R(E_a, v) v, E_b) on a strided sample grid.
struct TransverseData {
    int tdim = 0;
    std::vector<int> eps;
    std::vector<double> ts;
    std::vector<Eigen::MatrixXd> S;

    Eigen::MatrixXd interpolate(double t) const {
        if (t <= ts.front()) return S.front();
        if (t >= ts.back()) return S.back();
        auto hi = std::upper_bound(ts.begin(), ts.end(), t);
        size_t j = hi - ts.begin();
        const double w = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
        return (1.0 - w) * S[j - 1] + w * S[j];
    }
};

TransverseData build_transverse(const GeodesicRecord& rec, const MetricFamily& g,
                                const Eigen::VectorXd& lambda, int stride) {
    const int m = static_cast<int>(rec.p.size());
    const bool has_tangent = rec.v.norm() > 1e-14;
    const int first = has_tangent ? 1 : 0;

    TransverseData td;
    td.tdim = m - first;
    for (int a = first; a < m; ++a) td.eps.push_back(rec.frame_signs[a]);

    std::vector<int> idx;
    const int n = static_cast<int>(rec.xs.size());
    for (int i = 0; i < n; i += std::max(1, stride)) idx.push_back(i);
    if (idx.back() != n - 1) idx.push_back(n - 1);

    td.ts.resize(idx.size());
    td.S.resize(idx.size());
    parallel_for(static_cast<int>(idx.size()), [&](int k) {
        const int i = idx[k];
        td.ts[k] = rec.ts[i];
        CurvatureTensor r = riemann_curvature(g, lambda, rec.xs[i]);
        Eigen::MatrixXd gi = metric_at(g, lambda, rec.xs[i]);
        Eigen::MatrixXd s(td.tdim, td.tdim);
        for (int a = 0; a < td.tdim; ++a) {
            Eigen::VectorXd z = r.apply(rec.frames[i].col(first + a), rec.vs[i], rec.vs[i]);
            for (int b = 0; b < td.tdim; ++b) s(a, b) = z.dot(gi * rec.frames[i].col(first + b));
        }
        td.S[k] = 0.5 * (s + s.transpose());
    });
    return td;
}

/// Matrix Jacobi solution U'' = -E S(t) U, U(0) = 0, U'(0) = I, stored on the
/// tidal sample grid.
struct JacobiSolution {
    std::vector<double> ts;
    std::vector<Eigen::MatrixXd> U, Up;
};

JacobiSolution integrate_jacobi(const TransverseData& td) {
    const int d = td.tdim;
    Eigen::VectorXd eps(d);
    for (int i = 0; i < d; ++i) eps[i] = td.eps[i];

    auto accel = [&](double t, const Eigen::MatrixXd& u) {
        return ((-eps).asDiagonal() * (td.interpolate(t) * u)).eval();
    };

    JacobiSolution sol;
    sol.ts = td.ts;
    sol.U.reserve(td.ts.size());
    sol.Up.reserve(td.ts.size());
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd up = Eigen::MatrixXd::Identity(d, d);
    sol.U.push_back(u);
    sol.Up.push_back(up);
    for (size_t i = 1; i < td.ts.size(); ++i) {
        const double h = td.ts[i] - td.ts[i - 1];
        const double t = td.ts[i - 1];
        Eigen::MatrixXd k1u = up, k1v = accel(t, u);
        Eigen::MatrixXd k2u = up + 0.5 * h * k1v, k2v = accel(t + 0.5 * h, u + 0.5 * h * k1u);
        Eigen::MatrixXd k3u = up + 0.5 * h * k2v, k3v = accel(t + 0.5 * h, u + 0.5 * h * k2u);
        Eigen::MatrixXd k4u = up + h * k3v, k4v = accel(t + h, u + h * k3u);
        u += (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        up += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        sol.U.push_back(u);
        sol.Up.push_back(up);
    }
    return sol;
}

/// (U, U') at arbitrary t by a short RK4 hop from the nearest stored sample.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jacobi_at(const TransverseData& td,
                                                      const JacobiSolution& sol, double t) {
    auto hi = std::upper_bound(sol.ts.begin(), sol.ts.end(), t);
    size_t j = (hi == sol.ts.begin()) ? 0 : (hi - sol.ts.begin() - 1);
    Eigen::MatrixXd u = sol.U[j], up = sol.Up[j];
    double t0 = sol.ts[j];
    if (t <= t0) return {u, up};

    const int d = td.tdim;
    Eigen::VectorXd eps(d);
    for (int i = 0; i < d; ++i) eps[i] = td.eps[i];
    auto accel = [&](double tt, const Eigen::MatrixXd& uu) {
        return ((-eps).asDiagonal() * (td.interpolate(tt) * uu)).eval();
    };
    const int sub = 4;
    const double h = (t - t0) / sub;
    for (int s = 0; s < sub; ++s) {
        Eigen::MatrixXd k1u = up, k1v = accel(t0, u);
        Eigen::MatrixXd k2u = up + 0.5 * h * k1v, k2v = accel(t0 + 0.5 * h, u + 0.5 * h * k1u);
        Eigen::MatrixXd k3u = up + 0.5 * h * k2v, k3v = accel(t0 + 0.5 * h, u + 0.5 * h * k2u);
        Eigen::MatrixXd k4u = up + h * k3v, k4v = accel(t0 + h, u + h * k3u);
        u += (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        up += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        t0 += h;
    }
    return {u, up};
}

double sigma_min(const Eigen::MatrixXd& u) {
    if (u.rows() == 1) return std::abs(u(0, 0));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(u);
    return svd.singularValues().minCoeff();
}

int kernel_count(const Eigen::MatrixXd& u, double threshold) {
    if (u.rows() == 1) return std::abs(u(0, 0)) <= threshold ? 1 : 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(u);
    int c = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] <= threshold) ++c;
    return c;
}

struct JacobiAnalysis {
    std::vector<ConjugateInstant> instants;  // interior, sorted
    bool end_degenerate = false;
    double end_sigma_min = 0.0;
    int end_kernel = 0;
};

JacobiAnalysis analyze_jacobi(const TransverseData& td, const JacobiSolution& sol,
                              double t_tol) {
    JacobiAnalysis out;
    const size_t n = sol.ts.size();

    auto threshold_at = [&](const Eigen::MatrixXd& u, const Eigen::MatrixXd& up) {
        return std::max(1e-12, 100.0 * t_tol * (up.norm() + u.norm()));
    };

    std::vector<double> dets(n), sig(n);
    for (size_t i = 0; i < n; ++i) {
        dets[i] = sol.U[i].determinant();
        sig[i] = sigma_min(sol.U[i]);
    }

    std::vector<double> found;
    for (size_t i = 1; i + 1 < n; ++i) {
        // Odd-multiplicity instants: determinant sign change over a cell.
        if (dets[i] * dets[i + 1] < 0.0) {
            double lo = sol.ts[i], hi = sol.ts[i + 1];
            double dlo = dets[i];
            while (hi - lo > t_tol) {
                double mid = 0.5 * (lo + hi);
                double dm = jacobi_at(td, sol, mid).first.determinant();
                if (dm == 0.0 || dm * dlo > 0.0) {
                    lo = mid;
                    dlo = (dm == 0.0) ? dlo : dm;
                } else {
                    hi = mid;
                }
            }
            found.push_back(0.5 * (lo + hi));
        }
    }
    // Even-multiplicity dips without a determinant sign change.
    for (size_t i = 1; i + 1 < n; ++i) {
        if (!(sig[i] < sig[i - 1] && sig[i] <= sig[i + 1])) continue;
        const double local_scale = std::max(sol.U[i].norm(), sol.Up[i].norm());
        if (sig[i] > 1e-4 * std::max(1.0, local_scale)) continue;
        bool near_found = false;
        for (double f : found)
            if (std::abs(f - sol.ts[i]) <= sol.ts[i + 1] - sol.ts[i - 1]) near_found = true;
        if (near_found) continue;
        double lo = sol.ts[i - 1], hi = sol.ts[i + 1];
        while (hi - lo > t_tol) {  // ternary reduction on sigma_min
            double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
            if (sigma_min(jacobi_at(td, sol, m1).first) <
                sigma_min(jacobi_at(td, sol, m2).first))
                hi = m2;
            else
                lo = m1;
        }
        double t_star = 0.5 * (lo + hi);
        auto [u, up] = jacobi_at(td, sol, t_star);
        if (sigma_min(u) <= threshold_at(u, up)) found.push_back(t_star);
    }
    std::sort(found.begin(), found.end());

    const double end_window = 1e-4;
    for (double t_star : found) {
        auto [u, up] = jacobi_at(td, sol, t_star);
        int mult = kernel_count(u, threshold_at(u, up));
        if (mult == 0) mult = 1;
        if (t_star >= 1.0 - end_window) {
            out.end_degenerate = true;
            continue;
        }
        out.instants.push_back(ConjugateInstant{t_star, mult, 0});
    }

    const Eigen::MatrixXd& u1 = sol.U.back();
    const Eigen::MatrixXd& up1 = sol.Up.back();
    out.end_sigma_min = sigma_min(u1);
    const double end_threshold = 1e-4 * std::max(1.0, std::max(u1.norm(), up1.norm()));
    out.end_kernel = kernel_count(u1, end_threshold);
    if (out.end_sigma_min <= end_threshold) out.end_degenerate = true;
    return out;
}

SymmetricMatrix assemble_fem(const TransverseData& td, double s, int mesh_n) {
    if (mesh_n < 16) throw ConfigError("second_variation_fem: mesh_n must be >= 16");
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("second_variation_fem: s must be in (0, 1]");
    const int d = td.tdim;
    const int n = d * (mesh_n - 1);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) e(i, i) = td.eps[i];

    const double h = 1.0 / mesh_n;
    const double gauss[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    for (int el = 0; el < mesh_n; ++el) {
        const double t0 = el * h;
        for (double gp : gauss) {
            const double t = t0 + gp * h;
            const double w = 0.5 * h;
            const Eigen::MatrixXd sm = s * s * td.interpolate(s * t);
            // Hat supports: node el (value 1-gp, slope -1/h), node el+1 (gp, 1/h).
            const int nodes[2] = {el, el + 1};
            const double val[2] = {1.0 - gp, gp};
            const double slope[2] = {-1.0 / h, 1.0 / h};
            for (int i = 0; i < 2; ++i) {
                if (nodes[i] < 1 || nodes[i] > mesh_n - 1) continue;
                for (int j = 0; j < 2; ++j) {
                    if (nodes[j] < 1 || nodes[j] > mesh_n - 1) continue;
                    a.block((nodes[i] - 1) * d, (nodes[j] - 1) * d, d, d) +=
                        w * (slope[i] * slope[j] * e - val[i] * val[j] * sm);
                }
            }
        }
    }
    return SymmetricMatrix(std::move(a));
}

}  // namespace

IndexRecord conjugate_points(const GeodesicRecord& rec, const MetricFamily& g,
                             const Eigen::VectorXd& lambda, const ConjugateOptions& options) {
    TransverseData td = build_transverse(rec, g, lambda, options.s_stride);
    JacobiSolution sol = integrate_jacobi(td);
    JacobiAnalysis ja = analyze_jacobi(td, sol, options.t_tol);

    IndexRecord out;
    out.conjugate_instants = ja.instants;
    out.degenerate = ja.end_degenerate;
    if (g.signature_index == 0) {
        int total = 0;
        for (auto& ci : out.conjugate_instants) {
            ci.sign_contribution = ci.multiplicity;
            total += ci.multiplicity;
        }
        out.morse_index = total;
        out.spectral_index = total;
        out.spectral_index_valid = !out.degenerate;
    }
    return out;
}

SymmetricMatrix second_variation_fem(const GeodesicRecord& rec, const MetricFamily& g,
                                     const Eigen::VectorXd& lambda, double s, int mesh_n) {
    return assemble_fem(build_transverse(rec, g, lambda, 1), s, mesh_n);
}

IndexRecord spectral_index(const GeodesicRecord& rec, const MetricFamily& g,
                           const Eigen::VectorXd& lambda, const SpectralIndexOptions& options) {
    TransverseData td = build_transverse(rec, g, lambda, options.conj.s_stride);
    JacobiSolution sol = integrate_jacobi(td);
    JacobiAnalysis ja = analyze_jacobi(td, sol, options.conj.t_tol);

    IndexRecord out;
    out.conjugate_instants = ja.instants;
    out.degenerate = ja.end_degenerate;
    out.fem_mesh = options.mesh_n;
    if (out.degenerate) return out;  // index undefined at a conjugate endpoint

    double s0 = 0.05;
    if (!ja.instants.empty()) s0 = std::min(0.05, 0.5 * ja.instants.front().t);
    for (int tries = 0; tries < 5; ++tries) {
        InertiaProbe probe(assemble_fem(td, s0, options.mesh_n));
        if (probe.count_in(-options.gap, options.gap) == 0) break;
        s0 *= 0.5;  // the form is block-definite for small s; back off further
        if (tries == 4)
            throw DegenerateOperator("spectral_index: no invertible start slice", 0.0,
                                     options.gap);
    }

    const double span = 1.0 - s0;
    OperatorPath path = OperatorPath::dense(
        [&td, s0, span, &options](double u) {
            return assemble_fem(td, s0 + u * span, options.mesh_n);
        },
        options.gap);
    SflOptions sfl_options = options.sfl;
    sfl_options.gap = options.gap;
    SflResult flow = sfl_crossings(path, sfl_options);

    out.spectral_index = -flow.value;
    out.spectral_index_valid = true;

    if (g.signature_index == 0) {
        int total = 0;
        for (auto& ci : out.conjugate_instants) {
            ci.sign_contribution = ci.multiplicity;
            total += ci.multiplicity;
        }
        out.morse_index = total;
    } else {
        // Attach flow directions to the matching conjugate instants; the ODE
        // alone does not determine semi-Riemannian signs.
        for (const Crossing& c : flow.crossings) {
            const double s_star = s0 + c.t * span;
            ConjugateInstant* best = nullptr;
            double best_dist = 0.02;
            for (auto& ci : out.conjugate_instants) {
                const double dist = std::abs(ci.t - s_star);
                if (dist < best_dist) {
                    best_dist = dist;
                    best = &ci;
                }
            }
            if (best) best->sign_contribution += -c.direction * c.multiplicity;
        }
    }
    return out;
}

MetricFamily geometry_registry(const std::string& spec) {
    std::string name = spec;
    std::vector<double> args;
    auto open = spec.find('(');
    if (open != std::string::npos) {
        if (spec.back() != ')') throw UnknownGeometry(spec);
        name = spec.substr(0, open);
        std::string inside = spec.substr(open + 1, spec.size() - open - 2);
        size_t pos = 0;
        while (pos < inside.size()) {
            size_t comma = inside.find(',', pos);
            if (comma == std::string::npos) comma = inside.size();
            args.push_back(std::stod(inside.substr(pos, comma - pos)));
            pos = comma + 1;
        }
    }
    const double big = 1e300;

    if (name == "euclidean") {
        MetricFamily g;
        g.manifold_dim = 2;
        g.name = name;
        g.metric = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return Eigen::MatrixXd::Identity(2, 2).eval();
        };
        g.chart_bounds = {{-big, big}, {-big, big}};
        return g;
    }
    if (name == "round_sphere") {
        const double r = args.empty() ? 1.0 : args[0];
        if (r <= 0.0) throw UnknownGeometry(spec);
        MetricFamily g;
        g.manifold_dim = 2;
        g.name = name;
        g.metric = [r](const Eigen::VectorXd&, const Eigen::VectorXd& x) {
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
            m(0, 0) = r * r;
            m(1, 1) = r * r * std::sin(x[0]) * std::sin(x[0]);
            return m;
        };
        g.chart_bounds = {{0.15, M_PI - 0.15}, {-big, big}};
        g.aux = Eigen::VectorXd::Constant(1, r);
        return g;
    }
    if (name == "ellipsoid_revolution") {
        MetricFamily g;
        g.manifold_dim = 2;
        g.param_dim = 1;
        g.name = name;
        g.metric = [](const Eigen::VectorXd& lambda, const Eigen::VectorXd& x) {
            const double c = lambda[0];
            const double st = std::sin(x[0]), ct = std::cos(x[0]);
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
            m(0, 0) = ct * ct + c * c * st * st;
            m(1, 1) = st * st;
            return m;
        };
        g.chart_bounds = {{0.15, M_PI - 0.15}, {-big, big}};
        g.default_lambda = Eigen::VectorXd::Constant(1, args.empty() ? 1.0 : args[0]);
        return g;
    }
    if (name == "flat_torus") {
        MetricFamily g;
        g.manifold_dim = 2;
        g.name = name;
        g.metric = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return Eigen::MatrixXd::Identity(2, 2).eval();
        };
        g.chart_bounds = {{-big, big}, {-big, big}};
        return g;
    }
    if (name == "split_spheres") {
        if (args.size() != 4) throw UnknownGeometry(spec + " (needs a, b, p, q)");
        const double a = args[0], b = args[1];
        if (a <= 0.0 || b <= 0.0) throw UnknownGeometry(spec);
        const double ra2 = 1.0 / a, rb2 = 1.0 / b;
        MetricFamily g;
        g.manifold_dim = 4;
        g.name = name;
        g.signature_index = 2;
        g.metric = [ra2, rb2](const Eigen::VectorXd&, const Eigen::VectorXd& x) {
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
            m(0, 0) = ra2;
            m(1, 1) = ra2 * std::sin(x[0]) * std::sin(x[0]);
            m(2, 2) = -rb2;
            m(3, 3) = -rb2 * std::sin(x[2]) * std::sin(x[2]);
            return m;
        };
        g.chart_bounds = {{0.15, M_PI - 0.15}, {-big, big}, {0.15, M_PI - 0.15}, {-big, big}};
        g.aux = Eigen::Vector4d(args[0], args[1], args[2], args[3]);
        return g;
    }
    throw UnknownGeometry(spec);
}

void split_spheres_branch(const MetricFamily& g, double L, Eigen::VectorXd* p,
                          Eigen::VectorXd* v) {
    if (g.name != "split_spheres" || g.aux.size() != 4)
        throw ConfigError("split_spheres_branch: not a split_spheres geometry");
    const double a = g.aux[0], b = g.aux[1], pw = g.aux[2], qw = g.aux[3];
    *p = (Eigen::VectorXd(4) << M_PI / 2.0, 0.0, M_PI / 2.0, 0.0).finished();
    // Chart angular rates giving physical factor speeds pw*L and qw*L.
    *v = (Eigen::VectorXd(4) << 0.0, pw * L * std::sqrt(a), 0.0, qw * L * std::sqrt(b))
             .finished();
}

TrivialBranchSpec branch_registry(const std::string& name, const MetricFamily& g) {
    if (name == "sphere_tm") {
        return TrivialBranchSpec{[](const Eigen::VectorXd& node, Eigen::VectorXd* lambda,
                                    Eigen::VectorXd* p, Eigen::VectorXd* v) {
            *lambda = Eigen::VectorXd();
            *p = Eigen::Vector2d(M_PI / 2.0, 0.0);
            *v = Eigen::Vector2d(node[0] * std::cos(node[1]), node[0] * std::sin(node[1]));
        }};
    }
    if (name == "ellipsoid") {
        return TrivialBranchSpec{[](const Eigen::VectorXd& node, Eigen::VectorXd* lambda,
                                    Eigen::VectorXd* p, Eigen::VectorXd* v) {
            *lambda = Eigen::VectorXd::Constant(1, node[0]);
            *p = Eigen::Vector2d(M_PI / 2.0, 0.0);
            *v = Eigen::Vector2d(0.0, node[1]);
        }};
    }
    if (name == "flat_torus") {
        return TrivialBranchSpec{[](const Eigen::VectorXd& node, Eigen::VectorXd* lambda,
                                    Eigen::VectorXd* p, Eigen::VectorXd* v) {
            *lambda = Eigen::VectorXd();
            *p = Eigen::Vector2d(M_PI, M_PI);
            *v = Eigen::Vector2d(node[0], node[1]);
        }};
    }
    if (name == "split_spheres") {
        MetricFamily geom = g;
        return TrivialBranchSpec{[geom](const Eigen::VectorXd& node, Eigen::VectorXd* lambda,
                                        Eigen::VectorXd* p, Eigen::VectorXd* v) {
            *lambda = Eigen::VectorXd();
            split_spheres_branch(geom, node[0], p, v);
        }};
    }
    throw UnknownFamily("branch " + name);
}

ScanResult geodesic_family_scan(const MetricFamily& g, const TrivialBranchSpec& branch,
                                const ParameterChart& chart,
                                const GeodesicScanOptions& options) {
    const int n = chart.node_count();
    GridData grid;
    grid.degeneracy.assign(n, 0.0);
    grid.kernel_dims.assign(n, 0);
    grid.morse.assign(n, 0);
    grid.failed.assign(n, 0);
    std::vector<unsigned char> end_degenerate(n, 0);

    struct BranchNode {
        bool ok = false;
        int index = 0;
        double degeneracy = 0.0;
        int kernel = 0;
        bool end_degenerate = false;
    };
    auto eval_branch = [&](const Eigen::VectorXd& coords) {
        BranchNode out;
        Eigen::VectorXd lambda, p, v;
        branch.at(coords, &lambda, &p, &v);
        try {
            const double scale = [&] {
                Eigen::MatrixXd g0 = metric_at(g, lambda, p);
                return std::sqrt(std::abs(v.dot(g0 * v)));
            }();
            const int steps = std::max(options.min_steps,
                                       int(std::ceil(options.steps_per_unit * scale)));
            GeodesicRecord rec = geodesic_shoot(g, lambda, p, v, steps);
            ConjugateOptions conj;
            conj.s_stride = options.s_stride;
            if (g.signature_index == 0) {
                TransverseData td = build_transverse(rec, g, lambda, options.s_stride);
                JacobiSolution sol = integrate_jacobi(td);
                JacobiAnalysis ja = analyze_jacobi(td, sol, conj.t_tol);
                int total = 0;
                for (const auto& ci : ja.instants) total += ci.multiplicity;
                out.index = total;
                out.degeneracy = ja.end_degenerate ? 0.0 : ja.end_sigma_min;
                out.kernel = ja.end_degenerate ? ja.end_kernel : 0;
                out.end_degenerate = ja.end_degenerate;
            } else {
                SpectralIndexOptions sio;
                sio.mesh_n = options.fem_mesh;
                sio.conj = conj;
                IndexRecord rec_idx = spectral_index(rec, g, lambda, sio);
                out.index = rec_idx.spectral_index;
                out.degeneracy = rec_idx.degenerate ? 0.0 : 1.0;
                out.kernel = rec_idx.degenerate ? 1 : 0;
                out.end_degenerate = rec_idx.degenerate;
            }
            out.ok = true;
        } catch (const ChartExit&) {
        } catch (const TangentialDegeneracy&) {
        } catch (const SingularMetric&) {
        }
        return out;
    };

    parallel_for(n, [&](int id) {
        BranchNode node = eval_branch(chart.coords(id));
        if (!node.ok) {
            grid.failed[id] = 1;
            return;
        }
        grid.morse[id] = node.index;
        grid.degeneracy[id] = node.degeneracy;
        grid.kernel_dims[id] = node.kernel;
        end_degenerate[id] = node.end_degenerate ? 1 : 0;
    });

    // Edge labels: index differences (endpoint reduction of the connecting
    // path, oriented so labels grow with the index).  Seam edges re-evaluate
    // the branch at the unrolled coordinate past hi.
    for (int id = 0; id < n; ++id) {
        for (int axis = 0; axis < chart.dim(); ++axis) {
            bool wraps = false;
            int v = chart.neighbor_up(id, axis, &wraps);
            if (v < 0) continue;
            const int e = chart.edge_id(id, axis);
            if (grid.failed[id] || grid.failed[v]) {
                grid.skipped_edges.push_back(e);
                continue;
            }
            int far_index = grid.morse[v];
            bool far_degenerate = end_degenerate[v];
            if (wraps) {
                BranchNode far = eval_branch(chart.edge_target_coords(e));
                if (!far.ok) {
                    grid.skipped_edges.push_back(e);
                    continue;
                }
                far_index = far.index;
                far_degenerate = far.end_degenerate;
            }
            if (end_degenerate[id] || far_degenerate) {
                grid.skipped_edges.push_back(e);
                continue;
            }
            grid.edge_sfl[e] = far_index - grid.morse[id];
        }
    }

    return run_grid_analysis(chart, std::move(grid), options.scan);
}

}  // namespace sflow
