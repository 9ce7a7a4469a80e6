#pragma once

#include "patchtrack/core.hpp"
#include "patchtrack/geometry.hpp"

namespace patchtrack {

/// One analysis step: integrate for tau with `substeps` fixed RK4 steps.
struct FlowSpec {
    double tau = 1.0;
    int substeps = 20;

    void validate() const {
        if (!(tau > 0.0)) throw ConfigError("flow tau must be positive");
        if (substeps < 1) throw ConfigError("flow substeps must be at least 1");
    }
};

/// Classical fixed-step RK4 over [t0, t0+tau]. When a domain is supplied the
/// terminal point is wrapped on periodic axes; non-periodic exits are returned
/// raw so callers can detect escape.
template <typename Field>
Vec2 rk4_flow(const Field& field, Vec2 p, double t0, const FlowSpec& spec,
              const Domain* domain = nullptr) {
    const double h = spec.tau / spec.substeps;
    for (int s = 0; s < spec.substeps; ++s) {
        const double t = t0 + s * h;
        const Vec2 k1 = field(p, t);
        const Vec2 k2 = field(p + 0.5 * h * k1, t + 0.5 * h);
        const Vec2 k3 = field(p + 0.5 * h * k2, t + 0.5 * h);
        const Vec2 k4 = field(p + h * k3, t + h);
        p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!finite(p)) throw NumericError("non-finite state during advection");
    }
    if (domain) p = domain->wrap(p);
    return p;
}

}  // namespace patchtrack
