"""A robust Not gate from one and a half singular periods.

Searches the (p2, pe) plane on a coarse grid, polishes the best cells and
checks that both robustness integrals vanish at the final time.

    python3 demos/not_gate.py
"""

from __future__ import annotations

import numpy as np

from pulseforge import verify
from pulseforge.shooting import solve_not_gate


def main() -> None:
    report = solve_not_gate(np.linspace(-2.2, -1.2, 21), np.linspace(-0.3, 0.3, 13))
    for name, status in sorted(report.branches.items()):
        print(f"{name:>16}: {status}")
    best = report.best
    print(f"optimum ({best.uf_class}): p1={best.adj.p1:.5f} p2={best.adj.p2:.5f} pe={best.adj.pe:+.1e} t_f={best.t_f:.4f}")
    print(f"gate fidelity: 1-F = {best.infidelity:.1e}")

    traj = verify.integrate(best.protocol)
    f_abs, e_abs = verify.check_robustness_conditions(traj)
    print(f"|F(t_f)| = {f_abs:.1e}, |E(t_f)| = {e_abs:.1e}")

    sweep = verify.robustness_sweep(best.protocol, 0.2, 21, target="not-gate")
    print(f"quadratic coefficient {sweep.fitted_quadratic_coeff:.1e} (pi-pulse {verify.PI_PULSE_QUADRATIC:.4f})")


if __name__ == "__main__":
    main()
