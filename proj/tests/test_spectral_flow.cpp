#include <doctest.h>

#include <random>

#include "sflow/spectral_flow.hpp"

using namespace sflow;

namespace {

OperatorPath single_downward_crossing() {
    return OperatorPath::dense([](double t) {
        return SymmetricMatrix::diagonal(Eigen::Vector2d(1.0 - 2.0 * t, 1.0));
    });
}

Eigen::MatrixXd random_window(int n, double scale, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::MatrixXd b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b(i, j) = dist(rng);
    b = 0.5 * (b + b.transpose()).eval();
    const double norm = b.cwiseAbs().rowwise().sum().maxCoeff();
    if (norm > 0.0) b *= scale / norm;
    return b;
}

}  // namespace

TEST_CASE("dense single crossing: value, location, direction") {
    SflResult r = sfl_crossings(single_downward_crossing());
    CHECK(r.value == -1);
    REQUIRE(r.crossings.size() == 1);
    CHECK(r.crossings[0].t == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.crossings[0].direction == -1);
    CHECK(r.crossings[0].multiplicity == 1);
}

TEST_CASE("gamma_n flow equals n by both methods") {
    for (int n : {1, 3, 8}) {
        OperatorPath path = krasnoselskii_path(n);
        SflResult by_crossings = sfl_crossings(path);
        SflResult by_endpoint = sfl_endpoint(path);
        CHECK(by_crossings.value == n);
        CHECK(by_endpoint.value == n);
        int total = 0;
        for (const Crossing& c : by_crossings.crossings) total += c.direction * c.multiplicity;
        CHECK(total == by_crossings.value);
        REQUIRE(by_crossings.crossings.size() == 1);
        CHECK(by_crossings.crossings[0].t == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(by_crossings.crossings[0].multiplicity == n);
    }
}

TEST_CASE("constant invertible paths have zero flow") {
    OperatorPath dense = OperatorPath::dense(
        [](double) { return SymmetricMatrix::diagonal(Eigen::Vector3d(1.0, -2.0, 0.5)); });
    CHECK(sfl_crossings(dense).value == 0);
    CHECK(sfl_crossings(dense).crossings.empty());

    OperatorPath window = OperatorPath::sign_compact([](double) {
        return SignCompactOperator({1, -1}, SymmetricMatrix::zero(2), true, true);
    });
    CHECK(sfl_crossings(window).value == 0);
    CHECK(sfl_endpoint(window).value == 0);
}

TEST_CASE("reversal negates the flow") {
    OperatorPath gamma3 = krasnoselskii_path(3);
    OperatorPath reversed = reverse_path(gamma3);
    CHECK(sfl_endpoint(reversed).value == -3);
    CHECK(sfl_crossings(reversed).value == -3);
    OperatorPath twice = reverse_path(reversed);
    for (double t : {0.0, 0.25, 0.7, 1.0})
        CHECK((twice.matrix_at(t).entries() - gamma3.matrix_at(t).entries()).norm() == 0.0);
}

TEST_CASE("concatenation is additive") {
    OperatorPath gamma2 = krasnoselskii_path(2, 4);

    // Constant tail at the endpoint leaves the flow unchanged.
    SignCompactOperator end = gamma2.window_at(1.0);
    OperatorPath constant = OperatorPath::sign_compact([end](double) { return end; });
    CHECK(sfl_endpoint(concatenate(gamma2, constant)).value == 2);

    // gamma_m followed by the continuation to gamma_n reaches n in total.
    const int m = 2, n = 4;
    OperatorPath continuation = OperatorPath::sign_compact([=](double t) {
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < m; ++i) k(i, i) = -2.0;
        for (int i = m; i < n; ++i) k(i, i) = -2.0 * t;
        return SignCompactOperator(std::vector<int>(n, 1), SymmetricMatrix(k), true, false);
    });
    OperatorPath joined = concatenate(gamma2, continuation);
    SflResult r = sfl_crossings(joined);
    CHECK(r.value == n);
    CHECK(sfl_crossings(gamma2).value + sfl_crossings(continuation).value == n);
    CHECK(sfl_endpoint(joined).value == n);

    // p * reverse(p) cancels.
    CHECK(sfl_crossings(concatenate(gamma2, reverse_path(gamma2))).value == 0);

    OperatorPath gamma3 = krasnoselskii_path(3, 4);
    CHECK_THROWS_AS(concatenate(gamma3, continuation), EndpointMismatch);
}

TEST_CASE("homotopy slices share one flow value") {
    // Constant in s.
    HomotopyReport constant = homotopy_check(
        [](double) { return krasnoselskii_path(2); }, 7);
    CHECK(constant.consistent);
    CHECK(constant.value == 2);

    // id + t K_n + s t (1 - t) B with a small random symmetric window B.
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        const int n = 3;
        Eigen::MatrixXd b = random_window(n, 0.5, rng);
        HomotopyReport rep = homotopy_check(
            [&](double s) {
                return OperatorPath::sign_compact([=](double t) {
                    Eigen::MatrixXd k = -2.0 * t * Eigen::MatrixXd::Identity(n, n) +
                                        s * t * (1.0 - t) * b;
                    return SignCompactOperator(std::vector<int>(n, 1), SymmetricMatrix(k),
                                               true, false);
                });
            },
            9);
        CHECK(rep.consistent);
        CHECK(rep.value == n);
        CHECK(rep.min_endpoint_margin > 0.1);
    }

    // Linear interpolation between two reparameterizations of one dense path.
    auto base = [](double t) {
        return SymmetricMatrix::diagonal(Eigen::Vector2d(1.0 - 2.0 * t, 1.0));
    };
    HomotopyReport reparam = homotopy_check(
        [&](double s) {
            return OperatorPath::dense([=](double t) {
                const double warped = t + 0.3 * s * t * (1.0 - t);
                return base(warped);
            });
        },
        9);
    CHECK(reparam.consistent);
    CHECK(reparam.value == -1);
}

TEST_CASE("cogredience preserves the flow") {
    std::mt19937_64 rng(17);
    OperatorPath gamma3 = krasnoselskii_path(3);
    Eigen::MatrixXd a = random_window(3, 0.3, rng);
    Eigen::MatrixXd b = random_window(3, 0.3, rng);
    auto m = [a, b](double t) {
        return (Eigen::MatrixXd::Identity(3, 3) + std::sin(M_PI * t) * a + t * b).eval();
    };
    CHECK(sfl_crossings(congruent_path(gamma3, m)).value == 3);

    OperatorPath dense = single_downward_crossing();
    Eigen::MatrixXd c = random_window(2, 0.3, rng);
    auto m2 = [c](double t) { return (Eigen::MatrixXd::Identity(2, 2) + t * c).eval(); };
    CHECK(sfl_crossings(congruent_path(dense, m2)).value == -1);
}

TEST_CASE("degenerate arcs raise UnresolvedCrossing") {
    OperatorPath arc = OperatorPath::dense([](double t) {
        double f;
        if (t < 0.3)
            f = 1.0 - t / 0.3;
        else if (t < 0.6)
            f = 0.0;
        else
            f = -(t - 0.6) / 0.4;
        return SymmetricMatrix::diagonal(Eigen::Vector2d(f, 1.0));
    });
    CHECK_THROWS_AS(sfl_crossings(arc), UnresolvedCrossing);
}

TEST_CASE("window paths must keep J and tails constant") {
    auto make_bad = [] {
        return OperatorPath::sign_compact([](double t) {
            std::vector<int> j{t < 0.5 ? 1 : -1, 1};
            Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 2);
            k(0, 0) = t < 0.5 ? 0.0 : 2.0;  // keep the window operator continuous-ish
            return SignCompactOperator(j, SymmetricMatrix(k), true, true);
        });
    };
    CHECK_THROWS_AS((void)make_bad(), MismatchedJ);
}

TEST_CASE("path endpoints must be invertible") {
    CHECK_THROWS_AS(OperatorPath::dense([](double t) {
                        return SymmetricMatrix::diagonal(Eigen::Vector2d(t, 1.0));
                    }),
                    DegenerateOperator);
}

TEST_CASE("sampled dense paths interpolate linearly") {
    std::vector<std::pair<double, SymmetricMatrix>> samples;
    samples.emplace_back(0.0, SymmetricMatrix::diagonal(Eigen::Vector2d(1.0, 1.0)));
    samples.emplace_back(0.5, SymmetricMatrix::diagonal(Eigen::Vector2d(0.2, 1.0)));
    samples.emplace_back(1.0, SymmetricMatrix::diagonal(Eigen::Vector2d(-1.0, 1.0)));
    OperatorPath path = sampled_dense_path(std::move(samples));
    CHECK(path.matrix_at(0.25)(0, 0) == doctest::Approx(0.6));
    SflResult r = sfl_crossings(path);
    CHECK(r.value == -1);
    // Zero of the piecewise-linear eigenvalue: 0.5 + 0.5 * 0.2 / 1.2.
    CHECK(r.crossings[0].t == doctest::Approx(0.5 + 0.1 / 1.2).epsilon(1e-5));
}
