#pragma once

#include <stdexcept>
#include <string>

namespace sflow {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// An operator required to be invertible has an eigenvalue inside the gap.
class DegenerateOperator : public Error {
public:
    DegenerateOperator(const std::string& where, double min_abs_eig, double gap)
        : Error(where + ": operator degenerate, min |eigenvalue| " +
                std::to_string(min_abs_eig) + " < gap " + std::to_string(gap)),
          min_abs_eig(min_abs_eig), gap(gap) {}
    double min_abs_eig;
    double gap;
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

/// Two sign-compact operators do not share the same underlying sign operator.
class MismatchedJ : public Error {
public:
    explicit MismatchedJ(const std::string& what) : Error(what) {}
};

class EigendecompositionFailure : public Error {
public:
    EigendecompositionFailure(double residual, double bound)
        : Error("eigendecomposition residual " + std::to_string(residual) +
                " exceeds bound " + std::to_string(bound)),
          residual(residual) {}
    double residual;
};

/// Crossing isolation hit the bisection depth cap; signals a degenerate arc.
class UnresolvedCrossing : public Error {
public:
    UnresolvedCrossing(double t_lo, double t_hi)
        : Error("unresolved crossing in [" + std::to_string(t_lo) + ", " +
                std::to_string(t_hi) + "]"),
          t_lo(t_lo), t_hi(t_hi) {}
    double t_lo;
    double t_hi;
};

class EndpointMismatch : public Error {
public:
    explicit EndpointMismatch(const std::string& what) : Error(what) {}
};

class EndpointDegenerateInHomotopy : public Error {
public:
    EndpointDegenerateInHomotopy(double s, const std::string& what)
        : Error("slice s=" + std::to_string(s) + ": " + what), s(s) {}
    double s;
};

class NonSymmetricHessian : public Error {
public:
    explicit NonSymmetricHessian(double asymmetry)
        : Error("finite-difference Hessian asymmetry " + std::to_string(asymmetry) +
                " exceeds 1e-6"),
          asymmetry(asymmetry) {}
    double asymmetry;
};

class TrivialBranchViolation : public Error {
public:
    explicit TrivialBranchViolation(double residual)
        : Error("gradient at 0 has norm " + std::to_string(residual) +
                "; the family must keep 0 critical"),
          residual(residual) {}
    double residual;
};

class UnknownFamily : public Error {
public:
    explicit UnknownFamily(const std::string& name) : Error("unknown family: " + name) {}
};

class UnknownGeometry : public Error {
public:
    explicit UnknownGeometry(const std::string& name) : Error("unknown geometry: " + name) {}
};

class MaskedBasepoint : public Error {
public:
    explicit MaskedBasepoint(const std::string& what) : Error(what) {}
};

class SeamMismatch : public Error {
public:
    explicit SeamMismatch(const std::string& what) : Error(what) {}
};

/// Geodesic trajectory left the chart; carries the exit time.
class ChartExit : public Error {
public:
    ChartExit(double t_exit, const std::string& what)
        : Error("chart exit at t=" + std::to_string(t_exit) + ": " + what), t_exit(t_exit) {}
    double t_exit;
};

class SingularMetric : public Error {
public:
    explicit SingularMetric(const std::string& what) : Error(what) {}
};

/// The transverse reduction along a geodesic failed (non-spacelike direction).
class TangentialDegeneracy : public Error {
public:
    explicit TangentialDegeneracy(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace sflow
