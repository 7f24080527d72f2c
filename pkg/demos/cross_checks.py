"""The robust transfer seen through two other formulations.

The Euler-angle (RIO) chart turns the singular flow into a second-order
equation for theta(gamma); the geometric model replaces the qubit by a
planar curve whose closure encodes the robustness condition.

    python3 demos/cross_checks.py
"""

from __future__ import annotations

from pulseforge.appendix_models import bang_singular_bang, geometric_report, rio_report
from pulseforge.shooting import solve_complete_transfer


def main() -> None:
    best = solve_complete_transfer().best
    rio = rio_report(best.protocol, best.adj)
    print("Euler chart")
    for key in ("residual_max", "detuning_max_error", "theta_max_error", "theta_start", "theta_end"):
        print(f"  {key:>18}: {rio[key]:.3e}")
    if rio["truncated"]:
        print(f"  stopped: {rio['reason']}")

    print("geometric model")
    seq = bang_singular_bang(1.5)
    for kind, t in seq.arcs:
        print(f"  {kind:>9} for {t:.4f}")
    geo = geometric_report(1.5)
    print(f"  closure {geo['closure']:.1e}, max |H| {geo['hamiltonian_max']:.1e}, duration {geo['duration']:.4f}")


if __name__ == "__main__":
    main()
