"""Command-line driver: ``nbody-index cc|index|verify|sweep|plotdata``.

Exit codes: 0 success (or verdict consistent with the classification),
1 verdict mismatch or runtime failure, 2 usage/parse error or an
inconclusive verdict.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import central_config as ccm
from . import index_engine as ie
from . import mcgehee as mg
from . import nbody_core as core
from . import symplectic as sm
from .errors import NBodyIndexError, NoConvergenceError

log = logging.getLogger("nbody_index")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad configuration or input file (exit code 2)."""


# ------------------------------------------------------------ serialization


def _fmt(obj: Any, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_fmt(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_fmt(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _fmt(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".16e") if math.isfinite(x) else "null"
    return json.dumps(obj)


def dumps(obj: Any) -> str:
    """JSON text with every float written as %.16e (round-trips doubles)."""
    return _fmt(obj) + "\n"


def write_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def _read_structured(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {p}: {exc}") from exc
    try:
        return json.loads(text) if p.suffix.lower() == ".json" else core._loads_toml(text)
    except Exception as exc:  # toml and json decoders raise their own types
        raise UsageError(f"{p}: parse error: {exc}") from exc


def cc_to_record(cc: ccm.CentralConfiguration) -> dict:
    cls = cc.classification
    rec = {
        "b": cc.b_value,
        "residual_norm": cc.residual_norm,
        "iterations": cc.iterations,
        "spectrum": list(cc.spectrum),
        "classification": {"tag": cls.tag.value, "margin": None if cls.vacuous else cls.margin, "vacuous": cls.vacuous},
    }
    if cc.system is not None:
        rec["system"] = {"masses": list(cc.system.masses), "dim": cc.system.dim_d}
        rec["shape"] = core.configuration_to_record(cc.shape)
    return rec


def cc_from_record(rec: dict, tol_margin: float = ccm.TOL_MARGIN) -> ccm.CentralConfiguration:
    try:
        b = float(rec["b"])
        spectrum = tuple(float(x) for x in rec["spectrum"])
        system = shape = chart = None
        if "system" in rec:
            system = core.MassSystem(tuple(rec["system"]["masses"]), int(rec["system"]["dim"]))
            shape = core.configuration_from_record(rec["shape"])
            chart = core.make_chart(system, shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed central-configuration record: {exc}") from exc
    return ccm.CentralConfiguration(
        system=system,
        shape=shape,
        b_value=b,
        residual_norm=float(rec.get("residual_norm", 0.0)),
        spectrum=spectrum,
        classification=ccm.classify_values(spectrum[0] if spectrum else None, b, tol_margin),
        iterations=int(rec.get("iterations", 0)),
        chart=chart,
    )


# ------------------------------------------------------------------ config


@dataclass
class RunConfig:
    source: dict
    h0: float = -1.0
    start: str | tuple[float, float | None] = "apex"
    horizons: list[float] = field(default_factory=lambda: [5.0, 10.0, 20.0, 50.0])
    T_fractions: list[float] = field(default_factory=lambda: [0.3, 0.6, 0.9])
    T_grid: list[float] | None = None
    tau_grid: list[float] | None = None
    mesh: int = 64
    tol_cc: float = ccm.TOL_CC
    tol_margin: float = ccm.TOL_MARGIN
    base: Path = Path(".")

    def __post_init__(self):
        if not self.horizons:
            raise UsageError("horizons list is empty")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])) or self.horizons[0] <= 0:
            raise UsageError(f"horizons must be positive and strictly increasing: {self.horizons}")
        if self.mesh < 8:
            raise UsageError(f"galerkin mesh must be at least 8, got {self.mesh}")


def _floats(value, name: str) -> list[float]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{name}: expected a list of numbers, got {value!r}") from exc


def load_run_config(path: str | Path) -> RunConfig:
    data = _read_structured(path)
    orbit = data.get("orbit", {})
    start: Any = "apex"
    if "r0" in orbit:
        start = (float(orbit["r0"]), float(orbit["v0"]) if "v0" in orbit else None)
    elif orbit.get("start", "apex") != "apex":
        raise UsageError(f"orbit.start must be 'apex' or give r0, got {orbit.get('start')!r}")
    gal = data.get("galerkin", {})
    tol = data.get("tolerances", {})
    try:
        return RunConfig(
            source={k: data[k] for k in ("preset", "system", "guess", "cc", "synthetic") if k in data},
            h0=float(orbit.get("h0", -1.0)),
            start=start,
            horizons=_floats(data.get("index", {}).get("horizons", [5, 10, 20, 50]), "index.horizons"),
            T_fractions=_floats(gal.get("T_fraction", [0.3, 0.6, 0.9]), "galerkin.T_fraction"),
            T_grid=_floats(gal["T"], "galerkin.T") if "T" in gal else None,
            tau_grid=_floats(gal["tau"], "galerkin.tau") if "tau" in gal else None,
            mesh=int(gal.get("mesh", 64)),
            tol_cc=float(tol.get("cc", ccm.TOL_CC)),
            tol_margin=float(tol.get("margin", ccm.TOL_MARGIN)),
            base=Path(path).parent,
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _system_from(entry, base: Path) -> core.MassSystem:
    if isinstance(entry, str):
        try:
            return core.load_system(base / entry)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    try:
        return core.MassSystem(tuple(float(m) for m in entry["masses"]), int(entry.get("dim", entry.get("dim_d"))))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed [system] table: {exc}") from exc


def _guess_from(entry, base: Path) -> np.ndarray:
    if isinstance(entry, str):
        entry = _read_structured(base / entry)
    try:
        if "n" in entry:
            return core.configuration_from_record(entry)
        return np.asarray(entry["coords"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed guess: {exc}") from exc


def resolve_cc(cfg: RunConfig) -> ccm.CentralConfiguration:
    src = cfg.source
    if "cc" in src:
        return cc_from_record(_read_structured(cfg.base / src["cc"]), cfg.tol_margin)
    if "synthetic" in src:
        syn = src["synthetic"]
        try:
            return ccm.synthetic_cc(float(syn["b"]), _floats(syn.get("spectrum", []), "synthetic.spectrum"), cfg.tol_margin)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"malformed [synthetic] table: {exc}") from exc
    if "preset" in src:
        try:
            sys_, guess = ccm.preset(src["preset"])
        except KeyError as exc:
            raise UsageError(str(exc)) from exc
    elif "system" in src and "guess" in src:
        sys_, guess = _system_from(src["system"], cfg.base), _guess_from(src["guess"], cfg.base)
    else:
        raise UsageError("config needs one of: preset, system+guess, cc, synthetic")
    return ccm.find_cc(sys_, guess, tol=cfg.tol_cc, tol_margin=cfg.tol_margin)


def build_orbit(cfg: RunConfig, cc: ccm.CentralConfiguration) -> mg.HomotheticOrbit:
    try:
        if cfg.start == "apex":
            return mg.HomotheticOrbit.default(cc, cfg.h0)
        r0, v0 = cfg.start
        if v0 is None:
            return mg.HomotheticOrbit.from_radius(cc, cfg.h0, r0)
        return mg.HomotheticOrbit(cc, cfg.h0, r0, v0)
    except ValueError as exc:
        raise UsageError(f"invalid orbit start: {exc}") from exc


# ---------------------------------------------------------------- commands


def _print_cc(cc: ccm.CentralConfiguration) -> None:
    cls = cc.classification
    margin = "inf (empty spectrum)" if cls.vacuous else f"{cls.margin:.6e}"
    print(f"classification: {cls.tag.value}  margin lambda_1 + b/8 = {margin}")
    print(f"b = {cc.b_value:.12g}  spectrum = [{', '.join(f'{x:.10g}' for x in cc.spectrum)}]")


def cmd_cc(args) -> int:
    if args.action == "classify":
        if not args.cc:
            raise UsageError("cc classify needs --cc FILE")
        cc = cc_from_record(_read_structured(args.cc))
        _print_cc(cc)
        return EXIT_OK
    if args.preset:
        try:
            sys_, guess = ccm.preset(args.preset)
        except KeyError as exc:
            raise UsageError(str(exc)) from exc
    elif args.system and args.guess:
        try:
            sys_ = core.load_system(args.system)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        guess = _guess_from(args.guess, Path("."))
    elif args.config:
        cfg = load_run_config(args.config)
        cc = resolve_cc(cfg)
        return _finish_cc(cc, args.out)
    else:
        raise UsageError("cc find needs --preset, --system with --guess, or --config")
    try:
        cc = ccm.find_cc(sys_, guess)
    except NoConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("residual trace: " + ", ".join(f"{x:.3e}" for x in exc.trace), file=sys.stderr)
        return EXIT_FAIL
    return _finish_cc(cc, args.out)


def _finish_cc(cc, out) -> int:
    _print_cc(cc)
    if out:
        write_json(cc_to_record(cc), out)
    return EXIT_OK


def _galerkin_rows(cfg: RunConfig, orbit: mg.HomotheticOrbit) -> list[ie.TheoremRow]:
    if cfg.tau_grid is not None:
        return ie.index_theorem_check(orbit, tau_grid=cfg.tau_grid, m=cfg.mesh)
    if cfg.T_grid is not None:
        return ie.index_theorem_check(orbit, cfg.T_grid, m=cfg.mesh)
    rp = mg.reduced_flow(orbit, max(cfg.horizons))
    Tp = mg.collision_time(rp)
    return ie.index_theorem_check(orbit, [f * Tp for f in cfg.T_fractions], m=cfg.mesh)


def _report(cfg: RunConfig, with_galerkin: bool):
    cc = resolve_cc(cfg)
    orbit = build_orbit(cfg, cc)
    rep = ie.theorem_a_verdict(orbit, cfg.horizons)
    rows = []
    if with_galerkin:
        rows = _galerkin_rows(cfg, orbit)
        for r in rows:
            rep.galerkin_index[(r.T, cfg.mesh)] = r.galerkin
    out = rep.to_json()
    out["identity_check"] = [
        {"T": r.T, "tau": r.tau, "galerkin": r.galerkin, "maslov": r.maslov, "n_star": r.n_star, "pass": r.passed}
        for r in rows
    ]
    if cc.classification.vacuous:
        out["notes"] = ["empty spectrum: classified NonSpiralStrict (no eigenvalue to violate the bound)"]
    return rep, rows, out


def cmd_index(args) -> int:
    cfg = load_run_config(args.orbit)
    if args.horizons:
        cfg = RunConfig(**{**cfg.__dict__, "horizons": _floats(args.horizons, "--horizons")})
    rep, _, out = _report(cfg, with_galerkin=args.galerkin)
    if args.out:
        write_json(out, args.out)
    print(f"mu_total at tau = {rep.tau_horizons}: {rep.mu_total}  (n* = {rep.orbit.n_star})")
    print(f"verdict: {rep.verdict.value}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_run_config(args.orbit)
    rep, rows, out = _report(cfg, with_galerkin=True)
    if args.out:
        write_json(out, args.out)
    for r in rows:
        print(f"T={r.T:.12g} tau={r.tau:.6g}: galerkin {r.galerkin} + n* {r.n_star} vs maslov {r.maslov}: "
              f"{'PASS' if r.passed else 'FAIL'}")
    print(f"mu_total: {rep.mu_total}")
    print(f"verdict: {rep.verdict.value} (predicted {rep.predicted.value})")
    if rep.verdict is ie.Verdict.INCONCLUSIVE:
        return EXIT_USAGE
    if not rep.consistent or not all(r.passed for r in rows):
        return EXIT_FAIL
    return EXIT_OK


def _grid(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError("grid must be 'start:stop:count' or a comma list")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        return [float(x) for x in np.linspace(a, b, n)]
    return _floats(text, "--grid")


def cmd_sweep(args) -> int:
    try:
        family, guess = ccm.FAMILIES[args.family]
    except KeyError:
        raise UsageError(f"unknown family {args.family!r}; choose from {sorted(ccm.FAMILIES)}") from None
    rows = ccm.spiral_sweep(family, guess, _grid(args.grid))
    records = []
    for row in rows:
        rec = {"parameter": row.parameter, "converged": row.converged}
        if row.converged:
            rec.update(lambda_1=row.lambda_1, neg_b_over_8=row.neg_b_over_8,
                       tag=row.classification.tag.value, margin=row.classification.margin)
            print(f"{row.parameter:.6g}: lambda_1={row.lambda_1:.8g} -b/8={row.neg_b_over_8:.8g} {row.classification.tag.value}")
        else:
            rec["error"] = row.error
            print(f"{row.parameter:.6g}: failed ({row.error})")
        records.append(rec)
    if args.out:
        write_json({"family": args.family, "rows": records}, args.out)
    return EXIT_OK


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(x) + 0.0, ".16e") if isinstance(x, (float, np.floating)) else x for x in row])


def cmd_plotdata(args) -> int:
    path = Path(args.report)
    if not path.exists():
        print(f"error: report {path} not found", file=sys.stderr)
        return EXIT_FAIL
    rep = _read_structured(path)
    try:
        horizons = [float(x) for x in rep["horizons"]]
        mu = [int(x) for x in rep["mu_total"]]
        o = rep["orbit"]
        cc = ccm.synthetic_cc(float(o["b"]), [float(x) for x in rep["spectrum"]])
        orbit = mg.HomotheticOrbit(cc, float(o["h0"]), float(o["r0"]), float(o["v0"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: not a report: {exc}") from exc
    if not horizons:
        raise UsageError("report has an empty horizons list; nothing to plot")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tau_max = max(horizons)
    rp = mg.reduced_flow(orbit, tau_max)
    taus = np.linspace(0.0, tau_max, args.samples)
    y = rp.samples(args.samples)
    _write_csv(outdir / "reduced_path.csv", ["tau", "v", "r", "t_phys", "energy_residual"], y)

    coeffs = [("B1", lambda t: mg.block_B1(float(rp.v(t)), orbit.b))]
    for i, lam in enumerate(cc.spectrum):
        coeffs.append((f"lambda_{i + 1}", lambda t, l=lam: mg.block_Blambda(float(rp.v(t)), l)))
    cols = []
    for _, coeff in coeffs:
        p = sm.integrate_linear(coeff, (0.0, tau_max))
        # lower entry of the orthonormalized frame of gamma L_D: same zeros as c
        cols.append([float(p.frame(t)[1, 0]) for t in taus])
    _write_csv(outdir / "det_c.csv", ["tau"] + [f"c_{name}" for name, _ in coeffs],
               [[t, *vals] for t, *vals in zip(taus, *cols)])
    _write_csv(outdir / "mu_series.csv", ["horizon", "mu_total"], list(zip(horizons, mu)))
    print(f"wrote reduced_path.csv, det_c.csv, mu_series.csv to {outdir}")
    return EXIT_OK


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nbody-index", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cc", help="find or classify a central configuration")
    c.add_argument("action", choices=["find", "classify"])
    c.add_argument("--preset", choices=sorted(ccm.PRESETS))
    c.add_argument("--system", help="masses file (TOML or JSON)")
    c.add_argument("--guess", help="initial configuration file")
    c.add_argument("--config", help="run configuration file")
    c.add_argument("--cc", help="cc.json to classify")
    c.add_argument("--out", help="write cc.json here")
    c.set_defaults(func=cmd_cc)

    i = sub.add_parser("index", help="geometrical index along a homothetic orbit")
    i.add_argument("action", choices=["compute"])
    i.add_argument("--orbit", required=True, help="run configuration (TOML)")
    i.add_argument("--horizons", help="comma-separated tau horizons")
    i.add_argument("--galerkin", action="store_true", help="also run the Galerkin identity check")
    i.add_argument("--out")
    i.set_defaults(func=cmd_index)

    v = sub.add_parser("verify", help="check the collision Morse-index alternative")
    v.add_argument("action", choices=["theorem-a"])
    v.add_argument("--orbit", required=True)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="classify central configurations along a mass family")
    s.add_argument("--family", required=True)
    s.add_argument("--grid", required=True, help="start:stop:count or comma list")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("plotdata", help="CSV series from a report")
    d.add_argument("--report", required=True)
    d.add_argument("--outdir", required=True)
    d.add_argument("--samples", type=int, default=401)
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("residual trace: " + ", ".join(f"{x:.3e}" for x in exc.trace), file=sys.stderr)
        return EXIT_FAIL
    except NBodyIndexError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
