"""Observed convergence orders and symplecticity defects on the pendulum."""

from constrained_symplectic.diagnostics import (convergence_order, projected_explicit_euler_step,
                                                symplecticity_defect)
from constrained_symplectic.models import pendulum


def main():
    md = pendulum()
    h_list = [0.02, 0.01, 0.005, 0.0025]
    for method in ("euler_a", "euler_b", "midpoint", "rattle"):
        res = convergence_order(method, md, (md.q0, md.p0), h_list, 1.0)
        defect = symplecticity_defect(md.charted, method, [0.5, 0.5], 0.01)
        print(f"{method:>9s}  order {res.slope:.3f}  symplectic defect {defect:.1e}")
    control = symplecticity_defect(md.charted, projected_explicit_euler_step, [0.3, 4.0], 0.01)
    print(f"projected explicit Euler defect {control:.1e}")


if __name__ == "__main__":
    main()
