#include <doctest.h>

#include <random>

#include "sflow/serialization.hpp"

using namespace sflow;

TEST_CASE("symmetric matrix CSV and JSON round trips are exact") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    Eigen::MatrixXd m(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) m(i, j) = dist(rng);
    SymmetricMatrix a(m);

    SymmetricMatrix from_csv = symmetric_from_csv(to_csv(a));
    CHECK((from_csv.entries() - a.entries()).cwiseAbs().maxCoeff() == 0.0);

    SymmetricMatrix from_json = symmetric_from_json(to_json(a));
    CHECK((from_json.entries() - a.entries()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sign compact operator JSON round trip") {
    Eigen::MatrixXd k(2, 2);
    k << 0.25, -1.5, -1.5, 3.0;
    SignCompactOperator op({1, -1}, SymmetricMatrix(k), true, false);
    SignCompactOperator back = sign_compact_from_json(to_json(op));
    CHECK(back.j_window() == op.j_window());
    CHECK(back.tail_plus());
    CHECK_FALSE(back.tail_minus());
    CHECK((back.k_window().entries() - op.k_window().entries()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("path files load as sampled paths") {
    json file = {
        {"kind", "sign_compact"},
        {"interpolation", "linear"},
        {"samples", json::array()},
    };
    for (double t : {0.0, 0.5, 1.0}) {
        Eigen::MatrixXd k = -2.0 * t * Eigen::MatrixXd::Identity(3, 3);
        SignCompactOperator op({1, 1, 1}, SymmetricMatrix(k), true, false);
        file["samples"].push_back({{"t", t}, {"operator", to_json(op)}});
    }
    OperatorPath path = path_from_json(file);
    CHECK(sfl_endpoint(path).value == 3);
    CHECK(sfl_crossings(path).value == 3);

    json bad = file;
    bad["interpolation"] = "spline";
    CHECK_THROWS_AS(path_from_json(bad), ConfigError);
}

TEST_CASE("grid CSV carries the axis header") {
    ParameterChart chart({AxisSpec{0.0, 1.0, 8, true, std::nullopt}});
    std::vector<double> values(8, 0.5);
    std::string csv = grid_csv(chart, values);
    CHECK(csv.rfind("# axis0=0:1:8:1", 0) == 0);
    CHECK(csv.find("0.5") != std::string::npos);
}

TEST_CASE("scan config parsing") {
    json cfg = {{"family", "torus_demo"},
                {"bounds", json::array({json::array({0.0, 1.0}), json::array({0.0, 1.0})})},
                {"resolution", json::array({16, 16})},
                {"identify", json::array({true, true})},
                {"mode", "fast"},
                {"basepoint", json::array({0.01, 0.01})}};
    ScanConfig parsed = scan_config_from_json(cfg);
    CHECK(parsed.family == "torus_demo");
    CHECK(parsed.chart.dim() == 2);
    CHECK(parsed.chart.axes()[0].identify);
    CHECK(parsed.options.basepoint.has_value());

    json bad = cfg;
    bad["mode"] = "???";
    CHECK_THROWS_AS(scan_config_from_json(bad), ConfigError);
}
