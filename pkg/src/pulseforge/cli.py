"""``pulseforge`` command line: solve, verify, export, validate, elliptic eval.

Exit codes: 0 success, 1 usage or I/O error, 2 no verified candidate (or a
failed validation check).

Solvers work in units of the Rabi bound (``omega0 = 1``). Waveform files are
in physical units: ``export`` writes ``t / omega0``, ``delta * omega0`` and
``omega * omega0``; ``verify`` undoes the same scaling when reading.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import appendix_models, elliptic, shooting, verify
from .errors import PulseForgeError
from .protocol import ControlProtocol
from .rspace import AdjointParams

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_SOLUTION = 2

BOUND_FLAG = "detuning-exceeds-bound"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    omega0: float = 1.0
    delta0: float = 1.5
    step: float = verify.DEFAULT_STEP
    scan_step: float = shooting.SCAN_STEP
    p1_bracket: tuple[float, float] = shooting.DEFAULT_P1_BRACKET
    beta_grid: list | None = None
    beta_scan: tuple[float, float] = (0.15 * math.pi, 0.35 * math.pi)
    n_beta: int = 41
    p2_grid: list | None = None
    pe_grid: list | None = None
    ts_grid: list | None = None
    delta_regular: float | None = None
    refine: bool = True
    max_candidates: int = 20
    output_path: str | None = None

    def validate(self):
        if not (self.omega0 > 0 and self.delta0 > 0 and self.step > 0 and self.scan_step > 0):
            raise UsageError("omega0, delta0, step and scan_step must be positive")
        lo, hi = self.p1_bracket
        if not lo < hi:
            raise UsageError("p1 bracket must satisfy lo < hi")


def _grid(value, name):
    """A grid is a list of numbers or ``{"start", "stop", "num"}``."""
    if value is None:
        return None
    if isinstance(value, dict):
        try:
            return np.linspace(float(value["start"]), float(value["stop"]), int(value["num"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad {name}: {exc}") from exc
    try:
        arr = np.asarray(value, dtype=float).ravel()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad {name}: {exc}") from exc
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} must be a nonempty list of finite numbers")
    return arr


def _linspace_flag(vals):
    if vals is None:
        return None
    start, stop, num = vals
    if num != int(num) or num < 1:
        raise UsageError("grid point count must be a positive integer")
    return {"start": start, "stop": stop, "num": int(num)}


def load_config(args) -> RunConfig:
    """Defaults, then the ``--config`` JSON document, then explicit flags."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        for k, v in doc.items():
            if k == "output":
                k = "output_path"
            if k not in known:
                raise UsageError(f"unknown config key {k!r}")
            setattr(cfg, k, v)
    flag_map = {
        "omega0": "omega0",
        "delta0": "delta0",
        "step": "step",
        "scan_step": "scan_step",
        "p1_bracket": "p1_bracket",
        "beta_scan": "beta_scan",
        "n_beta": "n_beta",
        "delta_regular": "delta_regular",
        "max_candidates": "max_candidates",
        "output": "output_path",
    }
    for flag, attr in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, attr, v)
    for flag in ("beta_grid", "p2_grid", "pe_grid", "ts_grid"):
        v = _linspace_flag(getattr(args, flag, None))
        if v is not None:
            setattr(cfg, flag, v)
    if getattr(args, "no_refine", False):
        cfg.refine = False
    try:
        cfg.omega0, cfg.delta0 = float(cfg.omega0), float(cfg.delta0)
        cfg.step, cfg.scan_step = float(cfg.step), float(cfg.scan_step)
        cfg.p1_bracket = tuple(float(x) for x in cfg.p1_bracket)
        cfg.beta_scan = tuple(float(x) for x in cfg.beta_scan)
        cfg.n_beta = int(cfg.n_beta)
        cfg.max_candidates = int(cfg.max_candidates)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config value: {exc}") from exc
    if len(cfg.p1_bracket) != 2 or len(cfg.beta_scan) != 2:
        raise UsageError("brackets take two values")
    cfg.validate()
    return cfg


def _clean(obj):
    # JSON has no NaN/inf; map them to null so reports stay standard.
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dumps(doc) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


def _emit(text: str, path):
    if path:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise UsageError(f"cannot write {path}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _apply_bound(cands, delta0):
    for c in cands:
        c.protocol.delta0 = delta0
        over = not c.protocol.within_bounds()
        c.flags = [f for f in c.flags if f != BOUND_FLAG]
        if over:
            c.flags.append(BOUND_FLAG)


def _units(cfg):
    return {"omega0": cfg.omega0, "delta0": cfg.delta0, "time_unit": "1/omega0", "control_unit": "omega0"}


def cmd_solve(args) -> int:
    cfg = load_config(args)
    common = dict(scan_step=cfg.scan_step, verify_step=cfg.step)
    if args.scenario == "concat":
        ts = _grid(cfg.ts_grid, "ts_grid")
        p2 = _grid(cfg.p2_grid, "p2_grid")
        ts = np.linspace(0.0, 0.5, 50) if ts is None else ts
        p2 = np.linspace(-1.6, -0.6, 50) if p2 is None else p2
        dreg = -cfg.delta0 if cfg.delta_regular is None else float(cfg.delta_regular)
        maps = shooting.solve_concat(ts, p2, dreg, cfg.p1_bracket, ridge=cfg.refine, **common)
        _apply_bound(maps.ridge, cfg.delta0)
        best = maps.time_optimal(5.0, "ridge")
        opt = None
        if best is not None:
            opt = next(c for c in maps.ridge if c.t_s == best[0] and c.adj.p2 == best[1])
        doc = {
            "scenario": "concat",
            "units": _units(cfg),
            "maps": maps.to_dict(),
            "optimum": None if opt is None else opt.to_dict(),
            "n_verified": sum(c.verified for c in maps.ridge),
        }
        _emit(dumps(doc), cfg.output_path)
        return EXIT_OK if opt is not None and opt.verified else EXIT_NO_SOLUTION

    if args.scenario == "transfer":
        rep = shooting.solve_complete_transfer(
            _grid(cfg.beta_grid, "beta_grid"), cfg.p1_bracket, refine=cfg.refine, **common
        )
    elif args.scenario == "half-transfer":
        lo, hi = cfg.p1_bracket
        rep = shooting.solve_half_transfer(
            np.arange(lo, hi + 0.5 * shooting.P1_STEP, shooting.P1_STEP),
            cfg.beta_scan,
            n_beta=cfg.n_beta,
            refine=cfg.refine,
            **common,
        )
    else:
        rep = shooting.solve_not_gate(
            _grid(cfg.p2_grid, "p2_grid"),
            _grid(cfg.pe_grid, "pe_grid"),
            cfg.p1_bracket,
            refine=cfg.refine,
            **common,
        )
    _apply_bound(rep.candidates, cfg.delta0)
    doc = rep.to_dict(max_candidates=cfg.max_candidates)
    doc["units"] = _units(cfg)
    _emit(dumps(doc), cfg.output_path)
    return EXIT_OK if rep.verified else EXIT_NO_SOLUTION


def _read_candidate(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read candidate {path}: {exc}") from exc
    if isinstance(doc, dict) and "optimum" in doc:
        doc = doc["optimum"]
    if not isinstance(doc, dict) or "protocol" not in doc:
        raise UsageError("candidate JSON needs a 'protocol' entry (or a report with an optimum)")
    return doc


def _protocol_from(doc) -> ControlProtocol:
    try:
        return ControlProtocol.from_dict(doc["protocol"])
    except PulseForgeError as exc:
        raise UsageError(f"invalid candidate: {exc}") from exc


def cmd_export(args) -> int:
    if not args.rate > 0:
        raise UsageError("--rate must be positive")
    doc = _read_candidate(args.candidate)
    prot = _protocol_from(doc)
    omega0 = float(args.omega0) if args.omega0 is not None else prot.omega0
    if not omega0 > 0:
        raise UsageError("omega0 must be positive")
    # rate is given in physical time
    rows = prot.sample(args.rate * omega0)
    if rows.size and not prot.within_bounds():
        print(f"warning: |delta| exceeds delta0 = {prot.delta0} on this protocol", file=sys.stderr)
    lines = ["t,delta,omega"]
    for t, d, o in rows:
        # adding 0.0 turns -0.0 into 0.0
        lines.append(f"{t / omega0 + 0.0:.15g},{d * omega0 + 0.0:.15g},{o * omega0 + 0.0:.15g}")
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def read_waveform(path):
    try:
        with open(path) as fh:
            header = fh.readline().strip()
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read waveform {path}: {exc}") from exc
    if header.replace(" ", "") != "t,delta,omega":
        raise UsageError(f"waveform header must be 't,delta,omega', got {header!r}")
    if data.size == 0:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    if data.shape[1] != 3:
        raise UsageError("waveform rows need three columns")
    return data[:, 0], data[:, 1], data[:, 2]


def cmd_verify(args) -> int:
    cfg = load_config(args)
    t, d, o = read_waveform(args.waveform)
    w0 = cfg.omega0
    try:
        prot = ControlProtocol.from_waveform(t * w0, d / w0, o / w0, delta0=cfg.delta0)
        res = verify.robustness_sweep(prot, args.alpha_max, args.n, target=args.target, h=cfg.step)
    except (PulseForgeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    out = args.output or cfg.output_path
    if out:
        try:
            verify.write_sweep_csv(out, res)
        except OSError as exc:
            raise UsageError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write("alpha,infidelity\n")
        for a, v in zip(res.alphas, res.infidelities):
            sys.stdout.write(f"{a:.15g},{v:.15g}\n")
    # keep stdout a clean CSV when the sweep goes there
    stream = sys.stdout if out else sys.stderr
    print(f"nominal_infidelity {res.nominal:.15g}", file=stream)
    print(f"quadratic_coeff {res.fitted_quadratic_coeff:.15g}", file=stream)
    print(f"loglog_slope {res.fitted_loglog_slope:.15g}", file=stream)
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.model == "geometric":
        rep = appendix_models.geometric_report(args.delta0 if args.delta0 is not None else 1.5)
        ok = rep["closure"] < 1e-6 and rep["hamiltonian_max"] < 1e-9 and rep["phase_mismatch"] < 1e-12
    else:
        if args.candidate:
            doc = _read_candidate(args.candidate)
            prot = _protocol_from(doc)
            try:
                adj = AdjointParams(float(doc["p1"]), float(doc["p2"]), float(doc.get("pe", 0.0)))
            except (KeyError, TypeError, ValueError) as exc:
                raise UsageError(f"candidate needs p1 and p2: {exc}") from exc
        else:
            best = shooting.solve_complete_transfer().best
            if best is None or not best.verified:
                return EXIT_NO_SOLUTION
            prot, adj = best.protocol, best.adj
        rep = appendix_models.rio_report(prot, adj, h=args.step)
        ok = rep["residual_max"] < 1e-5 and rep["theta_max_error"] < 1e-4
    rep["passed"] = bool(ok)
    _emit(dumps(rep), args.output)
    return EXIT_OK if ok else EXIT_NO_SOLUTION


_FUNCS = {
    "sn": lambda u, m: elliptic.jacobi(u, m).sn,
    "cn": lambda u, m: elliptic.jacobi(u, m).cn,
    "dn": lambda u, m: elliptic.jacobi(u, m).dn,
    "sd": elliptic.sd,
    "nd": elliptic.nd,
    "K": lambda u, m: elliptic.complete_k(m),
    "E": lambda u, m: elliptic.complete_e(m) if u is None else elliptic.incomplete_e(u, m),
    "PiMM": elliptic.pi_mm,
}


def cmd_elliptic(args) -> int:
    if args.fn not in ("K", "E") and args.u is None:
        raise UsageError(f"{args.fn} needs --u")
    try:
        val = float(_FUNCS[args.fn](args.u, args.m))
    except (PulseForgeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    print(f"{val:.15g}")
    return EXIT_OK


def _add_common(p):
    p.add_argument("--config", help="JSON config document; explicit flags override it")
    p.add_argument("--output", "-o", help="output path (default: stdout)")
    p.add_argument("--omega0", type=float)
    p.add_argument("--delta0", type=float)
    p.add_argument("--step", type=float, help="verification step")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pulseforge", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    el = sub.add_parser("elliptic", help="special-function evaluation")
    el_sub = el.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ev = el_sub.add_parser("eval")
    ev.add_argument("--fn", required=True, choices=sorted(_FUNCS))
    ev.add_argument("--u", type=float)
    ev.add_argument("--m", type=float, required=True)
    ev.set_defaults(func=cmd_elliptic)

    so = sub.add_parser("solve", help="shooting search for one scenario")
    so.add_argument("scenario", choices=["transfer", "half-transfer", "gate-not", "concat"])
    _add_common(so)
    so.add_argument("--p1-bracket", nargs=2, type=float, metavar=("LO", "HI"))
    so.add_argument("--scan-step", type=float, help="integration step of the scan")
    so.add_argument("--beta-grid", nargs=3, type=float, metavar=("START", "STOP", "NUM"))
    so.add_argument("--beta-scan", nargs=2, type=float, metavar=("LO", "HI"))
    so.add_argument("--n-beta", type=int)
    so.add_argument("--p2-grid", nargs=3, type=float, metavar=("START", "STOP", "NUM"))
    so.add_argument("--pe-grid", nargs=3, type=float, metavar=("START", "STOP", "NUM"))
    so.add_argument("--ts-grid", nargs=3, type=float, metavar=("START", "STOP", "NUM"))
    so.add_argument("--delta-regular", type=float)
    so.add_argument("--max-candidates", type=int)
    so.add_argument("--no-refine", action="store_true")
    so.set_defaults(func=cmd_solve)

    ve = sub.add_parser("verify", help="alpha sweep of a waveform CSV")
    ve.add_argument("waveform")
    _add_common(ve)
    ve.add_argument("--alpha-max", type=float, default=0.2)
    ve.add_argument("--n", type=int, default=21)
    ve.add_argument("--target", choices=["excited", "not-gate", "nominal"], default="excited")
    ve.set_defaults(func=cmd_verify)

    ex = sub.add_parser("export", help="sample a candidate to t,delta,omega CSV")
    ex.add_argument("candidate")
    ex.add_argument("--rate", type=float, default=1e-3)
    ex.add_argument("--omega0", type=float)
    ex.add_argument("--output", "-o")
    ex.set_defaults(func=cmd_export)

    va = sub.add_parser("validate", help="cross-formulation checks")
    va.add_argument("model", choices=["rio", "geometric"])
    va.add_argument("--candidate", help="transfer candidate JSON (rio only)")
    va.add_argument("--delta0", type=float)
    va.add_argument("--step", type=float, default=1e-4)
    va.add_argument("--output", "-o")
    va.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pulseforge: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
