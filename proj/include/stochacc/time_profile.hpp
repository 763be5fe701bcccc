#pragma once

#include <cmath>
#include <functional>

#include "stochacc/common.hpp"

namespace stochacc {

/// Phase point on the m-torus, m <= 2. The second component is unused for m=1.
using Phase = Vec<2>;

/// Time profile f driving the scatterer height: the instantaneous height of
/// scatterer N is c_N * f(phi0_N + omega * tau). The frequency vector omega
/// is kept at unit norm; f3 uses omega = (1, sqrt 2)/|(1, sqrt 2)| so the
/// drive is quasi-periodic.
class TimeProfile {
  public:
    enum class Kind { f1, f2, f3, constant, custom };

    static TimeProfile f1() { return TimeProfile(Kind::f1, 1, Phase(1.0, 0.0), 0.0); }
    static TimeProfile f2() { return TimeProfile(Kind::f2, 1, Phase(1.0, 0.0), 0.0); }
    static TimeProfile f3() {
        const Real n = std::sqrt(3.0);
        return TimeProfile(Kind::f3, 2, Phase(1.0 / n, std::sqrt(2.0) / n), 0.0);
    }
    static TimeProfile constant(Real value) {
        return TimeProfile(Kind::constant, 1, Phase(1.0, 0.0), value);
    }
    static TimeProfile custom(int m, Phase omega, std::function<Real(Phase)> f,
                              std::function<Real(Phase)> df,
                              std::function<Real(Phase)> d2f = nullptr) {
        TimeProfile p(Kind::custom, m, omega / omega.norm(), 0.0);
        p.f_ = std::move(f);
        p.df_ = std::move(df);
        p.d2f_ = std::move(d2f);
        return p;
    }

    Kind kind() const { return kind_; }
    int torus_dim() const { return m_; }
    const Phase& omega() const { return omega_; }
    bool is_static() const { return kind_ == Kind::constant; }

    Real eval(const Phase& phi) const {
        switch (kind_) {
            case Kind::f1: return std::cos(kTwoPi * phi[0]);
            case Kind::f2: {
                Real c = std::cos(kTwoPi * phi[0]);
                return 1.0 + c * c;
            }
            case Kind::f3: return std::cos(kTwoPi * phi[0]) + std::cos(kTwoPi * phi[1]);
            case Kind::constant: return value_;
            case Kind::custom: return f_(phi);
        }
        return 0.0;
    }

    /// Phase derivative along the drive, (omega . grad_phi) f.
    Real deriv(const Phase& phi) const {
        switch (kind_) {
            case Kind::f1: return -kTwoPi * std::sin(kTwoPi * phi[0]);
            case Kind::f2: return -kPi * 2.0 * std::sin(2.0 * kTwoPi * phi[0]);
            case Kind::f3:
                return -kTwoPi * (omega_[0] * std::sin(kTwoPi * phi[0]) +
                                  omega_[1] * std::sin(kTwoPi * phi[1]));
            case Kind::constant: return 0.0;
            case Kind::custom: return df_(phi);
        }
        return 0.0;
    }

    /// Second phase derivative (omega . grad_phi)^2 f.
    Real deriv2(const Phase& phi) const {
        switch (kind_) {
            case Kind::f1: return -kTwoPi * kTwoPi * std::cos(kTwoPi * phi[0]);
            case Kind::f2: return -2.0 * kTwoPi * kPi * std::cos(2.0 * kTwoPi * phi[0]);
            case Kind::f3:
                return -kTwoPi * kTwoPi *
                       (omega_[0] * omega_[0] * std::cos(kTwoPi * phi[0]) +
                        omega_[1] * omega_[1] * std::cos(kTwoPi * phi[1]));
            case Kind::constant: return 0.0;
            case Kind::custom:
                if (!d2f_) throw std::runtime_error("custom profile lacks second derivative");
                return d2f_(phi);
        }
        return 0.0;
    }

    Phase at(const Phase& phi0, Real tau) const {
        Phase p;
        p[0] = TorusPhase::wrap(phi0[0] + omega_[0] * tau);
        p[1] = (m_ == 2) ? TorusPhase::wrap(phi0[1] + omega_[1] * tau) : 0.0;
        return p;
    }

  private:
    TimeProfile(Kind k, int m, Phase omega, Real value)
        : kind_(k), m_(m), omega_(omega), value_(value) {}

    Kind kind_;
    int m_;
    Phase omega_;
    Real value_;
    std::function<Real(Phase)> f_, df_, d2f_;
};

/// Clock carrying omega*tau on the torus with compensated accumulation, so
/// phases remain accurate over millions of collisions.
class PhaseClock {
  public:
    explicit PhaseClock(const TimeProfile& profile)
        : omega_(profile.omega()), m_(profile.torus_dim()) {}

    void advance(Real dtau) {
        theta_[0].advance(omega_[0] * dtau);
        if (m_ == 2) theta_[1].advance(omega_[1] * dtau);
    }

    /// Site phase now, given the site's initial phase.
    Phase at(const Phase& phi0) const {
        Phase p;
        p[0] = TorusPhase::wrap(phi0[0] + theta_[0].value());
        p[1] = (m_ == 2) ? TorusPhase::wrap(phi0[1] + theta_[1].value()) : 0.0;
        return p;
    }

  private:
    Phase omega_;
    int m_;
    TorusPhase theta_[2];
};

}  // namespace stochacc
