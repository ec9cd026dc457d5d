"""Compare long-run energy and constraint behaviour of several pendulum integrators."""

import numpy as np

from constrained_symplectic.diagnostics import (constraint_violation_series, energy_series,
                                                projected_explicit_euler_step)
from constrained_symplectic.models import pendulum
from constrained_symplectic.stepper import integrate


def main(steps=20_000, h=0.01):
    md = pendulum(theta0=1.0)
    for method in ("euler_a", "euler_b", "midpoint", "rattle", projected_explicit_euler_step):
        tr = integrate(method, md.sys, md.cs, md.q0, md.p0, h, steps)
        e = energy_series(md.sys, tr)
        v = constraint_violation_series(md.cs, tr, md.sys)
        name = method if isinstance(method, str) else "projected explicit Euler"
        print(f"{name:>26s}  max |dE| {e.max_deviation:.3e}  slope {e.drift_slope:+.2e}"
              f"  max |phi| {v.max_phi:.1e}  final E {e.values[-1]:+.6f}")
    print("initial energy", f"{md.sys.energy(md.q0, md.p0):+.6f}")


if __name__ == "__main__":
    main()
