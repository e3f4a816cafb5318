#include "sflow/spectral_flow.hpp"

#include <algorithm>
#include <cmath>

namespace sflow {

OperatorPath OperatorPath::dense(DenseSampler sampler, double endpoint_gap) {
    OperatorPath p;
    p.kind_ = PathKind::dense;
    p.dense_ = std::move(sampler);
    p.endpoint_gap_ = endpoint_gap;
    p.validate_endpoints();
    return p;
}

OperatorPath OperatorPath::sign_compact(WindowSampler sampler, double endpoint_gap) {
    OperatorPath p;
    p.kind_ = PathKind::sign_compact;
    p.window_ = std::move(sampler);
    p.endpoint_gap_ = endpoint_gap;
    p.window_ref_ = p.window_(0.0);
    p.validate_endpoints();
    return p;
}

void OperatorPath::validate_endpoints() const {
    for (double t : {0.0, 1.0}) {
        InertiaProbe probe(matrix_at(t));
        if (probe.count_in(-endpoint_gap_, endpoint_gap_) > 0)
            throw DegenerateOperator("OperatorPath endpoint t=" + std::to_string(t),
                                     probe.min_abs(), endpoint_gap_);
    }
}

SymmetricMatrix OperatorPath::dense_at(double t) const {
    if (kind_ != PathKind::dense) throw ConfigError("dense_at: not a dense path");
    return dense_(t);
}

SignCompactOperator OperatorPath::window_at(double t) const {
    if (kind_ != PathKind::sign_compact)
        throw ConfigError("window_at: not a sign-compact path");
    SignCompactOperator op = window_(t);
    const SignCompactOperator& ref = *window_ref_;
    if (op.j_window() != ref.j_window() || op.tail_plus() != ref.tail_plus() ||
        op.tail_minus() != ref.tail_minus())
        throw MismatchedJ("OperatorPath: J pattern or tails vary along the path (t=" +
                          std::to_string(t) + ")");
    return op;
}

SymmetricMatrix OperatorPath::matrix_at(double t) const {
    if (kind_ == PathKind::dense) return dense_(t);
    return window_at(t).window_operator();
}

const SignCompactOperator& OperatorPath::window_reference() const {
    if (!window_ref_) throw ConfigError("window_reference: not a sign-compact path");
    return *window_ref_;
}

namespace {

struct Sample {
    double t;
    int mu;
    InertiaProbe probe;
};

class CrossingScan {
public:
    CrossingScan(const OperatorPath& path, const SflOptions& opt) : path_(path), opt_(opt) {}

    SflResult run() {
        const int cells = std::max(opt_.n_init, 2);
        std::vector<Sample> grid;
        grid.reserve(cells + 1);
        for (int i = 0; i <= cells; ++i) grid.push_back(sample(double(i) / cells));
        for (int i = 0; i < cells; ++i) resolve(grid[i], grid[i + 1], 0);

        std::sort(crossings_.begin(), crossings_.end(),
                  [](const Crossing& a, const Crossing& b) { return a.t < b.t; });
        SflResult res;
        res.crossings = std::move(crossings_);
        res.refinement_depth = max_depth_;
        res.method = SflMethod::crossings;
        for (const Crossing& c : res.crossings) res.value += c.direction * c.multiplicity;
        return res;
    }

private:
    Sample sample(double t) const {
        InertiaProbe probe(path_.matrix_at(t));
        return Sample{t, probe.negatives(), std::move(probe)};
    }

    void record(double t, int jump) {
        const int sign = (path_.kind() == PathKind::dense) ? -1 : +1;
        const int contribution = sign * jump;
        crossings_.push_back(Crossing{t, contribution > 0 ? +1 : -1, std::abs(jump)});
    }

    void resolve(const Sample& a, const Sample& b, int depth) {
        max_depth_ = std::max(max_depth_, depth);
        const double width = b.t - a.t;
        const int jump = b.mu - a.mu;

        if (jump != 0) {
            if (width <= opt_.t_tol) {
                record(0.5 * (a.t + b.t), jump);
                return;
            }
            if (depth >= opt_.depth_cap) throw UnresolvedCrossing(a.t, b.t);
            split(a, b, depth);
            return;
        }

        const double guard = opt_.guard_factor * opt_.gap;
        const double radius =
            std::max(guard, 1.5 * InertiaProbe::frobenius_distance(a.probe, b.probe));
        const bool active_a = a.probe.count_in(-radius, radius) > 0;
        const bool active_b = b.probe.count_in(-radius, radius) > 0;
        if (!active_a && !active_b) return;

        const bool deg_a = a.probe.count_in(-opt_.gap, opt_.gap) > 0;
        const bool deg_b = b.probe.count_in(-opt_.gap, opt_.gap) > 0;
        const double arc_floor = std::max(100.0 * opt_.t_tol, 1e-6);
        if (deg_a && deg_b && width >= arc_floor) throw UnresolvedCrossing(a.t, b.t);
        if (width <= opt_.t_tol) return;
        if (depth >= opt_.depth_cap) {
            if (deg_a && deg_b) throw UnresolvedCrossing(a.t, b.t);
            return;
        }
        split(a, b, depth);
    }

    void split(const Sample& a, const Sample& b, int depth) {
        Sample mid = sample(0.5 * (a.t + b.t));
        resolve(a, mid, depth + 1);
        resolve(mid, b, depth + 1);
    }

    const OperatorPath& path_;
    const SflOptions& opt_;
    std::vector<Crossing> crossings_;
    int max_depth_ = 0;
};

}  // namespace

SflResult sfl_crossings(const OperatorPath& path, const SflOptions& options) {
    if (options.n_init < 2) throw ConfigError("sfl_crossings: n_init must be >= 2");
    return CrossingScan(path, options).run();
}

SflResult sfl_endpoint(const OperatorPath& path) {
    if (path.kind() != PathKind::sign_compact)
        throw ConfigError("sfl_endpoint: path must be of sign_compact kind");
    SflResult res;
    res.method = SflMethod::endpoint;
    res.value = relative_morse_index_sc(path.window_at(0.0), path.window_at(1.0),
                                        path.endpoint_gap());
    return res;
}

namespace {

double dense_mismatch(const SymmetricMatrix& a, const SymmetricMatrix& b) {
    return (a.entries() - b.entries()).cwiseAbs().maxCoeff() /
           (1.0 + std::max(a.entries().cwiseAbs().maxCoeff(), b.entries().cwiseAbs().maxCoeff()));
}

}  // namespace

OperatorPath concatenate(const OperatorPath& p1, const OperatorPath& p2, double match_tol) {
    if (p1.kind() != p2.kind()) throw EndpointMismatch("concatenate: path kinds differ");

    if (p1.kind() == PathKind::dense) {
        SymmetricMatrix end = p1.dense_at(1.0);
        SymmetricMatrix start = p2.dense_at(0.0);
        if (end.dim() != start.dim())
            throw EndpointMismatch("concatenate: dimensions differ at the junction");
        if (dense_mismatch(end, start) > match_tol)
            throw EndpointMismatch("concatenate: operators differ at the junction");
        auto s1 = [p1](double t) { return p1.dense_at(t); };
        auto s2 = [p2](double t) { return p2.dense_at(t); };
        return OperatorPath::dense(
            [s1, s2](double t) { return t < 0.5 ? s1(2.0 * t) : s2(2.0 * t - 1.0); },
            std::min(p1.endpoint_gap(), p2.endpoint_gap()));
    }

    // Pad both operands to the common window determined at the junction.
    SignCompactOperator end = p1.window_at(1.0);
    SignCompactOperator start = p2.window_at(0.0);
    auto [pe, ps] = pad_common(end, start);
    if (dense_mismatch(pe.window_operator(), ps.window_operator()) > match_tol)
        throw EndpointMismatch("concatenate: window operators differ at the junction");

    const int target = pe.window_dim();
    std::vector<int> full_j = pe.j_window();
    auto pad_sampler = [target, full_j](const OperatorPath& p) {
        return [target, full_j, p](double t) {
            SignCompactOperator op = p.window_at(t);
            if (op.window_dim() == target) return op;
            std::vector<int> ext(full_j.begin() + op.window_dim(), full_j.end());
            return op.padded(target, ext);
        };
    };
    auto s1 = pad_sampler(p1);
    auto s2 = pad_sampler(p2);
    return OperatorPath::sign_compact(
        [s1, s2](double t) { return t < 0.5 ? s1(2.0 * t) : s2(2.0 * t - 1.0); },
        std::min(p1.endpoint_gap(), p2.endpoint_gap()));
}

OperatorPath reverse_path(const OperatorPath& p) {
    if (p.kind() == PathKind::dense)
        return OperatorPath::dense([p](double t) { return p.dense_at(1.0 - t); },
                                   p.endpoint_gap());
    return OperatorPath::sign_compact([p](double t) { return p.window_at(1.0 - t); },
                                      p.endpoint_gap());
}

OperatorPath congruent_path(const OperatorPath& p, std::function<Eigen::MatrixXd(double)> m) {
    if (p.kind() == PathKind::dense) {
        return OperatorPath::dense(
            [p, m](double t) {
                Eigen::MatrixXd mt = m(t);
                return SymmetricMatrix(mt.transpose() * p.dense_at(t).entries() * mt);
            },
            p.endpoint_gap());
    }
    return OperatorPath::sign_compact(
        [p, m](double t) {
            SignCompactOperator op = p.window_at(t);
            Eigen::MatrixXd mt = m(t);
            Eigen::MatrixXd congr = mt.transpose() * op.window_operator().entries() * mt;
            for (int i = 0; i < op.window_dim(); ++i) congr(i, i) -= op.j_window()[i];
            return SignCompactOperator(op.j_window(), SymmetricMatrix(congr), op.tail_plus(),
                                       op.tail_minus());
        },
        p.endpoint_gap());
}

HomotopyReport homotopy_check(const std::function<OperatorPath(double)>& slice_at, int n_s,
                              const SflOptions& options) {
    if (n_s < 2) throw ConfigError("homotopy_check: n_s must be >= 2");
    HomotopyReport report;
    report.min_endpoint_margin = std::numeric_limits<double>::infinity();
    report.max_endpoint_margin = 0.0;
    for (int j = 0; j < n_s; ++j) {
        const double s = double(j) / (n_s - 1);
        std::optional<OperatorPath> slice;
        try {
            slice = slice_at(s);
        } catch (const DegenerateOperator& e) {
            throw EndpointDegenerateInHomotopy(s, e.what());
        }
        for (double t : {0.0, 1.0}) {
            double margin = InertiaProbe(slice->matrix_at(t)).min_abs();
            report.min_endpoint_margin = std::min(report.min_endpoint_margin, margin);
            report.max_endpoint_margin = std::max(report.max_endpoint_margin, margin);
        }
        report.slice_values.push_back(sfl_crossings(*slice, options).value);
    }
    report.value = report.slice_values.front();
    report.consistent = std::all_of(report.slice_values.begin(), report.slice_values.end(),
                                    [&](int v) { return v == report.value; });
    return report;
}

namespace {

template <typename Op, typename Lerp>
std::function<Op(double)> interpolating_sampler(std::vector<std::pair<double, Op>> samples,
                                                Lerp lerp) {
    if (samples.size() < 2) throw ConfigError("sampled path: need at least two samples");
    std::sort(samples.begin(), samples.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (std::abs(samples.front().first) > 1e-12 || std::abs(samples.back().first - 1.0) > 1e-12)
        throw ConfigError("sampled path: samples must cover [0, 1]");
    return [samples = std::move(samples), lerp](double t) {
        auto hi = std::lower_bound(samples.begin(), samples.end(), t,
                                   [](const auto& s, double v) { return s.first < v; });
        if (hi == samples.begin()) return samples.front().second;
        if (hi == samples.end()) return samples.back().second;
        auto lo = std::prev(hi);
        const double span = hi->first - lo->first;
        const double w = span > 0.0 ? (t - lo->first) / span : 0.0;
        return lerp(lo->second, hi->second, w);
    };
}

}  // namespace

OperatorPath sampled_dense_path(std::vector<std::pair<double, SymmetricMatrix>> samples,
                                double endpoint_gap) {
    auto lerp = [](const SymmetricMatrix& a, const SymmetricMatrix& b, double w) {
        return SymmetricMatrix((1.0 - w) * a.entries() + w * b.entries());
    };
    return OperatorPath::dense(interpolating_sampler(std::move(samples), lerp), endpoint_gap);
}

OperatorPath sampled_window_path(std::vector<std::pair<double, SignCompactOperator>> samples,
                                 double endpoint_gap) {
    auto lerp = [](const SignCompactOperator& a, const SignCompactOperator& b, double w) {
        auto [pa, pb] = pad_common(a, b);
        SymmetricMatrix k((1.0 - w) * pa.k_window().entries() + w * pb.k_window().entries());
        return SignCompactOperator(pa.j_window(), std::move(k), pa.tail_plus(), pa.tail_minus());
    };
    return OperatorPath::sign_compact(interpolating_sampler(std::move(samples), lerp),
                                      endpoint_gap);
}

OperatorPath krasnoselskii_path(int n, int window_dim, double endpoint_gap) {
    if (n < 1) throw ConfigError("krasnoselskii_path: n must be >= 1");
    const int w = window_dim > 0 ? window_dim : n;
    if (w < n) throw ConfigError("krasnoselskii_path: window_dim must be >= n");
    std::vector<int> j(w, 1);
    return OperatorPath::sign_compact(
        [n, w, j](double t) {
            Eigen::MatrixXd k = Eigen::MatrixXd::Zero(w, w);
            for (int i = 0; i < n; ++i) k(i, i) = -2.0 * t;
            return SignCompactOperator(j, SymmetricMatrix(std::move(k)), true, false);
        },
        endpoint_gap);
}

}  // namespace sflow
