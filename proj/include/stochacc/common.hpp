#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace stochacc {

using Real = double;

template <int D>
using Vec = Eigen::Matrix<Real, D, 1>;

template <int D>
using Mat = Eigen::Matrix<Real, D, D>;

inline constexpr Real kPi = 3.14159265358979323846;
inline constexpr Real kTwoPi = 2.0 * kPi;

/// Surface area of the unit sphere S^{d-1} embedded in R^d.
inline Real sphere_area(int d) {
    switch (d) {
        case 1: return 2.0;          // S^0 = {-1,+1}, counting measure
        case 2: return kTwoPi;       // circle
        case 3: return 4.0 * kPi;    // 2-sphere
        default: throw std::invalid_argument("sphere_area: unsupported dimension");
    }
}

/// Volume of the ball of radius 1/2 in R^{d-1} (the impact-parameter domain).
inline Real impact_ball_volume(int d) {
    switch (d) {
        case 1: return 1.0;          // zero-dimensional ball, a single point
        case 2: return 1.0;          // interval [-1/2, 1/2]
        case 3: return kPi / 4.0;    // disk of radius 1/2
        default: throw std::invalid_argument("impact_ball_volume: unsupported dimension");
    }
}

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what) {}
};

struct InvalidRadius : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HorizonViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuadratureFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RegimeViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NegativeD2 : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Compensated (Kahan) accumulator for torus phases kept reduced mod 1.
/// Increments are reduced with fmod (exact) before compensated addition, so
/// the phase stays accurate over millions of events even when raw omega*tau
/// would be many orders of magnitude above the torus scale.
class TorusPhase {
  public:
    TorusPhase() = default;
    explicit TorusPhase(Real value) : value_(wrap(value)) {}

    void advance(Real delta) {
        // fmod is exact but slow; most event-to-event increments are sub-unit
        Real d = (delta > -1.0 && delta < 1.0) ? delta : std::fmod(delta, 1.0);
        Real y = d - carry_;
        Real t = value_ + y;
        carry_ = (t - value_) - y;
        value_ = wrap(t);
    }

    Real value() const { return value_; }

    static Real wrap(Real x) {
        Real r = x - std::floor(x);
        return (r >= 1.0) ? r - 1.0 : r;
    }

  private:
    Real value_ = 0.0;
    Real carry_ = 0.0;
};

}  // namespace stochacc
