#pragma once

#include <stdexcept>

#include "errors.hpp"
#include "linalg.hpp"

namespace stochinv {

/// Classical fourth-order Runge-Kutta step for y' = field(t, y).
/// Y needs Y + Y and double * Y, plus an all_finite overload.
template <typename Field, typename Y>
Y rk4_step(Field&& field, double t, const Y& y, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be positive");
    const double half = 0.5 * dt;
    const Y k1 = field(t, y);
    const Y k2 = field(t + half, Y(y + half * k1));
    const Y k3 = field(t + half, Y(y + half * k2));
    const Y k4 = field(t + dt, Y(y + dt * k3));
    Y next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!all_finite(next)) {
        throw NumericalError("rk4_step: non-finite state at t = " + std::to_string(t + dt));
    }
    return next;
}

}  // namespace stochinv
