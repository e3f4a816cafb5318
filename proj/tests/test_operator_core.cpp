#include <doctest.h>

#include <random>

#include "sflow/operator_core.hpp"

using namespace sflow;

namespace {

SymmetricMatrix random_symmetric(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = dist(rng);
    return SymmetricMatrix(std::move(m));
}

// Morse count straight from eigenvalue signs; the independent oracle for the
// relative index tests.
int sign_count_oracle(const SymmetricMatrix& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.entries(), Eigen::EigenvaluesOnly);
    int c = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()[i] < 0.0) ++c;
    return c;
}

SignCompactOperator plus_window(int dim, const Eigen::MatrixXd& k) {
    return SignCompactOperator(std::vector<int>(dim, 1), SymmetricMatrix(k), true, false);
}

}  // namespace

TEST_CASE("eigendecompose on diagonal and off-diagonal inputs") {
    Spectrum s = eigendecompose(SymmetricMatrix::diagonal(Eigen::Vector2d(2.0, -1.0)));
    CHECK(s.eigenvalues[0] == doctest::Approx(-1.0));
    CHECK(s.eigenvalues[1] == doctest::Approx(2.0));

    Eigen::MatrixXd swap(2, 2);
    swap << 0.0, 1.0, 1.0, 0.0;
    Spectrum t = eigendecompose(SymmetricMatrix(swap));
    CHECK(t.eigenvalues[0] == doctest::Approx(-1.0));
    CHECK(t.eigenvalues[1] == doctest::Approx(1.0));
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(t.eigenvectors(0, 0) == doctest::Approx(r));
    CHECK(t.eigenvectors(1, 0) == doctest::Approx(-r));
    CHECK(t.eigenvectors(0, 1) == doctest::Approx(r));
    CHECK(t.eigenvectors(1, 1) == doctest::Approx(r));
}

TEST_CASE("eigendecompose reconstruction and orthonormality on random 8x8") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        SymmetricMatrix a = random_symmetric(8, rng);
        Spectrum s = eigendecompose(a);
        Eigen::MatrixXd recon = s.eigenvectors * s.eigenvalues.asDiagonal() *
                                s.eigenvectors.transpose();
        const double norm = s.eigenvalues.cwiseAbs().maxCoeff();
        CHECK((recon - a.entries()).norm() <= 1e-10 * norm);
        Eigen::MatrixXd gram = s.eigenvectors.transpose() * s.eigenvectors;
        CHECK((gram - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-10);
        for (int k = 0; k < 8; ++k)
            CHECK((a.entries() * s.eigenvectors.col(k) -
                   s.eigenvalues[k] * s.eigenvectors.col(k))
                      .norm() <= s.residual + 1e-300);
    }
}

TEST_CASE("morse_index basics") {
    CHECK(morse_index(SymmetricMatrix::diagonal(Eigen::Vector3d(-1.0, -2.0, 3.0))) == 2);
    CHECK(morse_index(SymmetricMatrix::identity(5)) == 0);

    // id + K_n with K_n = -2 (projection on the first n basis vectors),
    // embedded in dimension 2n: eigenvalue -1 with multiplicity n.
    const int n = 3;
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) m(i, i) -= 2.0;
    CHECK(morse_index(SymmetricMatrix(m)) == n);

    CHECK_THROWS_AS(morse_index(SymmetricMatrix::diagonal(Eigen::Vector2d(1e-12, 1.0))),
                    DegenerateOperator);
}

TEST_CASE("relative_morse_index examples and oracle agreement") {
    SymmetricMatrix s = SymmetricMatrix::diagonal(Eigen::Vector2d(-1.0, 1.0));
    SymmetricMatrix t = SymmetricMatrix::identity(2);
    CHECK(relative_morse_index(s, t) == 1);
    CHECK(relative_morse_index(s, s) == 0);

    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dims(2, 12);
    int done = 0;
    while (done < 100) {
        const int n = dims(rng);
        SymmetricMatrix a = random_symmetric(n, rng);
        SymmetricMatrix b = random_symmetric(n, rng);
        try {
            const int rel = relative_morse_index(a, b, 1e-6);
            CHECK(rel == sign_count_oracle(a) - sign_count_oracle(b));
            CHECK(relative_morse_index(b, a, 1e-6) == -rel);
            ++done;
        } catch (const DegenerateOperator&) {
            // resample
        }
    }

    CHECK_THROWS_AS(relative_morse_index(s, SymmetricMatrix::identity(3)), DimensionMismatch);
}

TEST_CASE("relative_morse_index_sc window examples") {
    // K = 0 on both sides.
    SignCompactOperator id2 = plus_window(2, Eigen::MatrixXd::Zero(2, 2));
    CHECK(relative_morse_index_sc(id2, id2) == 0);

    // J = diag(+,-) with both tails; T lifts the negative window eigenvalue.
    std::vector<int> j{1, -1};
    SignCompactOperator s(j, SymmetricMatrix::zero(2), true, true);
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 2);
    k(1, 1) = 2.0;
    SignCompactOperator t(j, SymmetricMatrix(k), true, true);
    CHECK(relative_morse_index_sc(s, t) == -1);
    CHECK(relative_morse_index_sc(t, s) == 1);

    // Krasnosel'skii endpoints: K_0 = 0, K_1 = K_n on a plus-tail identity J.
    for (int n : {1, 2, 5}) {
        Eigen::MatrixXd kn = -2.0 * Eigen::MatrixXd::Identity(n, n);
        CHECK(relative_morse_index_sc(plus_window(n, Eigen::MatrixXd::Zero(n, n)),
                                      plus_window(n, kn)) == n);
    }
}

TEST_CASE("relative_morse_index_sc invariant under window enlargement") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> dist(-0.4, 0.4);
    std::vector<int> j{1, -1, 1};
    auto rand_k = [&](int n) {
        Eigen::MatrixXd k(n, n);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < n; ++c) k(i, c) = dist(rng);
        return SymmetricMatrix(k);
    };
    SignCompactOperator s(j, rand_k(3), true, true);
    SignCompactOperator t(j, rand_k(3), true, true);
    const int base = relative_morse_index_sc(s, t);
    SignCompactOperator s_pad = s.padded(5, {1, -1});
    SignCompactOperator t_pad = t.padded(5, {1, -1});
    CHECK(relative_morse_index_sc(s_pad, t_pad) == base);
    // Mixed window sizes pad internally.
    CHECK(relative_morse_index_sc(s, t_pad) == base);
}

TEST_CASE("pad_common rejects inconsistent sign data") {
    SignCompactOperator a({1, -1}, SymmetricMatrix::zero(2), true, true);
    SignCompactOperator b({1, 1}, SymmetricMatrix::zero(2), true, true);
    CHECK_THROWS_AS(pad_common(a, b), MismatchedJ);

    SignCompactOperator c({1}, SymmetricMatrix::zero(1), true, false);
    SignCompactOperator d({1, -1}, SymmetricMatrix::zero(2), true, false);
    CHECK_THROWS_AS(pad_common(c, d), MismatchedJ);  // -1 extension without a minus tail

    SignCompactOperator e({1}, SymmetricMatrix::zero(1), true, false);
    SignCompactOperator f({1}, SymmetricMatrix::zero(1), true, true);
    CHECK_THROWS_AS(pad_common(e, f), MismatchedJ);  // tail flags differ
}

TEST_CASE("classify_essential follows the tails, not the window") {
    SignCompactOperator plus({1}, SymmetricMatrix::zero(1), true, false);
    SignCompactOperator minus({1}, SymmetricMatrix::zero(1), false, true);
    SignCompactOperator both({1}, SymmetricMatrix::zero(1), true, true);
    CHECK(classify_essential(plus) == EssentialClass::essentially_positive);
    CHECK(classify_essential(minus) == EssentialClass::essentially_negative);
    CHECK(classify_essential(both) == EssentialClass::strongly_indefinite);

    Eigen::MatrixXd k(1, 1);
    k << -17.0;
    SignCompactOperator perturbed({1}, SymmetricMatrix(k), true, false);
    CHECK(classify_essential(perturbed) == classify_essential(plus));
}

TEST_CASE("intersection_dimension on known subspaces") {
    Eigen::MatrixXd u(3, 2);
    u << 1, 0, 0, 1, 0, 0;
    Eigen::MatrixXd v(3, 2);
    v << 1, 0, 0, 0, 0, 1;
    CHECK(intersection_dimension(u, v) == 1);
    CHECK(intersection_dimension(u, u) == 2);
}
