#include "sflow/functional_family.hpp"

#include <cmath>
#include <random>

namespace sflow {

namespace {

constexpr double kTrivialBranchTol = 1e-10;

double fd_step(const Eigen::VectorXd& u) {
    return std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, u.norm());
}

}  // namespace

Eigen::VectorXd family_gradient(const FunctionalFamily& f, const Eigen::VectorXd& lambda,
                                const Eigen::VectorXd& u) {
    if (f.grad) return f.grad(lambda, u);
    const int n = f.galerkin_dim;
    const double h = std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, u.norm());
    Eigen::VectorXd g(n);
    Eigen::VectorXd up = u, um = u;
    for (int i = 0; i < n; ++i) {
        up[i] += h;
        um[i] -= h;
        g[i] = (f.eval(lambda, up) - f.eval(lambda, um)) / (2.0 * h);
        up[i] = u[i];
        um[i] = u[i];
    }
    return g;
}

namespace {

Eigen::MatrixXd hessian_raw(const FunctionalFamily& f, const Eigen::VectorXd& lambda,
                            const Eigen::VectorXd& u) {
    const int n = f.galerkin_dim;
    if (f.hess) return f.hess(lambda, u);
    const double h = fd_step(u);
    Eigen::MatrixXd hm(n, n);
    if (f.grad) {
        Eigen::VectorXd up = u, um = u;
        for (int i = 0; i < n; ++i) {
            up[i] += h;
            um[i] -= h;
            hm.col(i) = (f.grad(lambda, up) - f.grad(lambda, um)) / (2.0 * h);
            up[i] = u[i];
            um[i] = u[i];
        }
    } else {
        Eigen::VectorXd w = u;
        auto at = [&](int i, double di, int j, double dj) {
            w[i] += di;
            w[j] += dj;
            double v = f.eval(lambda, w);
            w[i] = u[i];
            w[j] = u[j];
            return v;
        };
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) {
                double v = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) +
                            at(i, -h, j, -h)) /
                           (4.0 * h * h);
                hm(i, j) = v;
                hm(j, i) = v;
            }
    }
    return hm;
}

}  // namespace

SymmetricMatrix hessian_at_zero(const FunctionalFamily& f, const Eigen::VectorXd& lambda) {
    if (lambda.size() != f.param_dim)
        throw DimensionMismatch("hessian_at_zero: parameter dimension mismatch");
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(f.galerkin_dim);
    const double branch_residual = family_gradient(f, lambda, zero).norm();
    if (branch_residual > kTrivialBranchTol) throw TrivialBranchViolation(branch_residual);

    Eigen::MatrixXd hm = hessian_raw(f, lambda, zero);
    const double asym = (hm - hm.transpose()).norm();
    if (asym > 1e-6) throw NonSymmetricHessian(asym);
    return SymmetricMatrix(std::move(hm));
}

SignCompactOperator window_hessian_at_zero(const FunctionalFamily& f,
                                           const Eigen::VectorXd& lambda) {
    if (f.hessian_kind != PathKind::sign_compact || !f.window_hessian)
        throw ConfigError("window_hessian_at_zero: family has no window Hessian");
    if (lambda.size() != f.param_dim)
        throw DimensionMismatch("window_hessian_at_zero: parameter dimension mismatch");
    return f.window_hessian(lambda);
}

OperatorPath hessian_path(const FunctionalFamily& f,
                          std::function<Eigen::VectorXd(double)> gamma, double endpoint_gap) {
    if (f.hessian_kind == PathKind::sign_compact)
        return OperatorPath::sign_compact(
            [f, gamma](double t) { return window_hessian_at_zero(f, gamma(t)); }, endpoint_gap);
    return OperatorPath::dense([f, gamma](double t) { return hessian_at_zero(f, gamma(t)); },
                               endpoint_gap);
}

NewtonResult newton_critical_point(const FunctionalFamily& f, const Eigen::VectorXd& lambda,
                                   const Eigen::VectorXd& u0, const NewtonOptions& options) {
    NewtonResult best;
    Eigen::VectorXd u = u0;
    double res = family_gradient(f, lambda, u).norm();
    best.u = u;
    best.grad_residual = res;

    for (int it = 0; it < options.max_iter; ++it) {
        if (res <= options.tol) {
            best.u = u;
            best.grad_residual = res;
            best.iterations = it;
            best.converged = true;
            return best;
        }
        Eigen::VectorXd g = family_gradient(f, lambda, u);
        Eigen::MatrixXd h = hessian_raw(f, lambda, u);
        h = 0.5 * (h + h.transpose()).eval();

        Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
        Eigen::VectorXd direction;
        if (lu.isInvertible())
            direction = lu.solve(-g);
        else
            direction = -g;  // singular Hessian fallback

        auto try_direction = [&](const Eigen::VectorXd& d) -> bool {
            double alpha = 1.0;
            for (int k = 0; k < 30; ++k, alpha *= 0.5) {
                Eigen::VectorXd candidate = u + alpha * d;
                double cres = family_gradient(f, lambda, candidate).norm();
                if (cres < res && candidate.allFinite()) {
                    u = std::move(candidate);
                    res = cres;
                    return true;
                }
            }
            return false;
        };

        bool moved = try_direction(direction);
        if (!moved && direction != -g) moved = try_direction(-g);
        if (!moved) break;  // stalled
        if (res < best.grad_residual) {
            best.u = u;
            best.grad_residual = res;
        }
        best.iterations = it + 1;
    }
    best.converged = best.grad_residual <= options.tol;
    return best;
}

namespace {

SymmetricMatrix flow_matrix(const FunctionalFamily& f, const Eigen::VectorXd& lambda) {
    if (f.hessian_kind == PathKind::sign_compact)
        return window_hessian_at_zero(f, lambda).window_operator();
    return hessian_at_zero(f, lambda);
}

}  // namespace

BifurcationScanReport find_bifurcation_on_path(const FunctionalFamily& f,
                                               std::function<Eigen::VectorXd(double)> gamma,
                                               const BifurcationScanOptions& options) {
    for (size_t i = 1; i < options.radii.size(); ++i)
        if (options.radii[i] >= options.radii[i - 1])
            throw ConfigError("find_bifurcation_on_path: radii must be decreasing");

    BifurcationScanReport report;
    const int cells = std::max(options.n_scan, 8);
    std::vector<int> mu(cells + 1);
    for (int i = 0; i <= cells; ++i)
        mu[i] = InertiaProbe(flow_matrix(f, gamma(double(i) / cells))).negatives();

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (int cell = 0; cell < cells; ++cell) {
        if (mu[cell + 1] == mu[cell]) continue;

        // Isolate the degeneracy instant; the smallest witness radius needs
        // the flank parameter accurate well below flank_scale * r^2.
        double lo = double(cell) / cells, hi = double(cell + 1) / cells;
        int mu_lo = mu[cell];
        while (hi - lo > 1e-12) {
            double mid = 0.5 * (lo + hi);
            int m = InertiaProbe(flow_matrix(f, gamma(mid))).negatives();
            if (m == mu_lo)
                lo = mid;
            else
                hi = mid;
        }
        const double t_star = 0.5 * (lo + hi);
        const Eigen::VectorXd lambda_star = gamma(t_star);

        // Kernel directions of the truncated Hessian at the candidate.
        Spectrum spec = eigendecompose(hessian_at_zero(f, lambda_star));
        std::vector<int> kernel_idx;
        for (int i = 0; i < spec.eigenvalues.size(); ++i)
            if (std::abs(spec.eigenvalues[i]) <= options.kernel_tol) kernel_idx.push_back(i);
        const int kernel_dim = static_cast<int>(kernel_idx.size());

        // Parameter speed along gamma near the candidate.
        const double dprobe = 1e-4;
        const double speed =
            (gamma(std::min(1.0, t_star + dprobe)) - gamma(std::max(0.0, t_star - dprobe)))
                .norm() /
            (std::min(1.0, t_star + dprobe) - std::max(0.0, t_star - dprobe));

        BifurcationRecord record;
        record.t_star = t_star;
        record.lambda_star = lambda_star;
        record.kernel_dim = kernel_dim;
        record.radius_schedule = options.radii;

        bool complete = true;
        for (double r : options.radii) {
            const double dt = options.flank_scale * r * r / std::max(speed, 1e-12);
            // Near the candidate every point within the radius is almost
            // critical; the witness Newton must resolve residuals well below
            // that scale or the raw seed would pass as a solution.
            NewtonOptions newton = options.newton;
            newton.tol = std::min(newton.tol, 0.01 * options.flank_scale * r * r * r);
            std::optional<BifurcationWitness> found;
            for (double side : {+1.0, -1.0}) {
                if (found) break;
                const double t_flank = std::clamp(t_star + side * dt, 0.0, 1.0);
                const Eigen::VectorXd lambda_flank = gamma(t_flank);
                for (int ki = 0; ki < kernel_dim && !found; ++ki) {
                    Eigen::VectorXd w = spec.eigenvectors.col(kernel_idx[ki]);
                    for (int s = 0; s <= options.random_seeds && !found; ++s) {
                        Eigen::VectorXd dir = w;
                        if (s > 0) {
                            Eigen::VectorXd xi(f.galerkin_dim);
                            for (int i = 0; i < f.galerkin_dim; ++i) xi[i] = gauss(rng);
                            dir = (w + 0.1 * xi).normalized();
                        }
                        NewtonResult nr =
                            newton_critical_point(f, lambda_flank, r * dir, newton);
                        if (nr.converged && nr.grad_residual <= options.witness_tol &&
                            nr.u.norm() >= 1e-3 * r && nr.u.norm() <= r)
                            found = BifurcationWitness{lambda_flank, nr.u, nr.grad_residual, r};
                    }
                }
            }
            if (!found) {
                complete = false;
                break;
            }
            record.witnesses.push_back(std::move(*found));
        }

        // A record needs the full norm-decreasing sequence.
        for (size_t i = 1; complete && i < record.witnesses.size(); ++i)
            if (record.witnesses[i].u.norm() >= record.witnesses[i - 1].u.norm())
                complete = false;

        if (complete && !record.witnesses.empty())
            report.records.push_back(std::move(record));
        else
            report.rejected.push_back(RejectedCandidate{t_star, lambda_star, kernel_dim,
                                                        "degenerate-but-no-branch"});
    }
    return report;
}

FunctionalFamily family_registry(const std::string& name) {
    if (name == "krasnoselskii") {
        // f(lambda, u) = 1/2 <(I - lambda K) u, u> + 1/4 |u|^4,
        // K = diag(1, 1/2, 1/3, 1/4); bifurcation at the characteristic values 1..4.
        Eigen::VectorXd k(4);
        k << 1.0, 1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0;
        FunctionalFamily f;
        f.galerkin_dim = 4;
        f.param_dim = 1;
        f.name = name;
        f.eval = [k](const Eigen::VectorXd& lambda, const Eigen::VectorXd& u) {
            double q = 0.0;
            for (int i = 0; i < 4; ++i) q += (1.0 - lambda[0] * k[i]) * u[i] * u[i];
            return 0.5 * q + 0.25 * std::pow(u.squaredNorm(), 2);
        };
        f.grad = [k](const Eigen::VectorXd& lambda, const Eigen::VectorXd& u) {
            Eigen::VectorXd g = u.squaredNorm() * u;
            for (int i = 0; i < 4; ++i) g[i] += (1.0 - lambda[0] * k[i]) * u[i];
            return g;
        };
        f.hess = [k](const Eigen::VectorXd& lambda, const Eigen::VectorXd& u) {
            Eigen::MatrixXd h = u.squaredNorm() * Eigen::MatrixXd::Identity(4, 4) +
                                2.0 * u * u.transpose();
            for (int i = 0; i < 4; ++i) h(i, i) += 1.0 - lambda[0] * k[i];
            return h;
        };
        return f;
    }
    if (name == "torus_demo") {
        // f(theta1, theta2, u) = 1/2 cos(pi theta1) u_0^2 + 1/2 sum_i>0 s_i u_i^2 + 1/4 |u|^4
        // on a strongly indefinite J (window sign +1 at index 0, both tails);
        // independent of theta2.  Degenerate exactly at theta1 = 1/2 (mod 2).
        const Eigen::VectorXd signs = (Eigen::VectorXd(5) << 1.0, 1.0, -1.0, 1.0, -1.0).finished();
        FunctionalFamily f;
        f.galerkin_dim = 5;
        f.param_dim = 2;
        f.name = name;
        auto diag = [signs](const Eigen::VectorXd& lambda) {
            Eigen::VectorXd d = signs;
            d[0] = std::cos(M_PI * lambda[0]);
            return d;
        };
        f.eval = [diag](const Eigen::VectorXd& lambda, const Eigen::VectorXd& u) {
            return 0.5 * diag(lambda).cwiseProduct(u).dot(u) +
                   0.25 * std::pow(u.squaredNorm(), 2);
        };
        f.grad = [diag](const Eigen::VectorXd& lambda, const Eigen::VectorXd& u) {
            return (diag(lambda).cwiseProduct(u) + u.squaredNorm() * u).eval();
        };
        f.hess = [diag](const Eigen::VectorXd& lambda, const Eigen::VectorXd& u) {
            Eigen::MatrixXd h = Eigen::MatrixXd(diag(lambda).asDiagonal());
            h += u.squaredNorm() * Eigen::MatrixXd::Identity(5, 5) + 2.0 * u * u.transpose();
            return h;
        };
        f.hessian_kind = PathKind::sign_compact;
        f.window_hessian = [](const Eigen::VectorXd& lambda) {
            Eigen::MatrixXd k(1, 1);
            k(0, 0) = std::cos(M_PI * lambda[0]) - 1.0;
            return SignCompactOperator({1}, SymmetricMatrix(std::move(k)), true, true);
        };
        return f;
    }
    if (name == "positive_definite") {
        // f(lambda, u) = 1/2 (1 + lambda^2) |u|^2 + 1/4 |u|^4; Sigma(L) is empty.
        FunctionalFamily f;
        f.galerkin_dim = 4;
        f.param_dim = 1;
        f.name = name;
        f.eval = [](const Eigen::VectorXd& lambda, const Eigen::VectorXd& u) {
            return 0.5 * (1.0 + lambda[0] * lambda[0]) * u.squaredNorm() +
                   0.25 * std::pow(u.squaredNorm(), 2);
        };
        f.grad = [](const Eigen::VectorXd& lambda, const Eigen::VectorXd& u) {
            return ((1.0 + lambda[0] * lambda[0] + u.squaredNorm()) * u).eval();
        };
        f.hess = [](const Eigen::VectorXd& lambda, const Eigen::VectorXd& u) {
            Eigen::MatrixXd h = (1.0 + lambda[0] * lambda[0] + u.squaredNorm()) *
                                Eigen::MatrixXd::Identity(4, 4);
            h += 2.0 * u * u.transpose();
            return h;
        };
        return f;
    }
    throw UnknownFamily(name);
}

}  // namespace sflow
