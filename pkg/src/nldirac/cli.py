"""Command-line driver: spectra, cone solutions, phase sweeps, propagation runs,
and self-checks, all emitted as plot-ready CSV.

Exit codes: 0 success, 1 numerical failure, 2 usage error.  Angles are in
radians, the nonlinearity is given as g/B, and values accept a trailing
``pi`` (e.g. ``--radius 0.02pi``).  A flat key=value config file can prefill
any flag of a subcommand; explicit flags win.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import band, dynamics, phases
from .model import ModelParams, Momentum

APPENDIX_G_OVER_B = (-2.5, -2.0, 1.0, 2.0, 2.5)
APPENDIX_B = 2.0
APPENDIX_P = 2.0


def scaled_float(text: str) -> float:
    """Float literal with an optional trailing 'pi' multiplier."""
    s = text.strip().lower()
    factor = 1.0
    if s.endswith("pi"):
        s = s[:-2].strip()
        factor = math.pi
        if s in ("", "+", "-"):
            s += "1"
    try:
        return float(s) * factor
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def grid_spec(text: str) -> tuple[float, int]:
    """Parse 'EXTENT:N' (e.g. '0.1pi:201') into (extent, points)."""
    try:
        extent_s, n_s = text.split(":")
        extent = scaled_float(extent_s)
        n = int(n_s)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise argparse.ArgumentTypeError(f"expected EXTENT:N, got {text!r}") from exc
    if extent <= 0.0 or n < 2:
        raise argparse.ArgumentTypeError(f"grid needs positive extent and N >= 2, got {text!r}")
    return extent, n


def float_list(text: str) -> list[float]:
    try:
        return [scaled_float(tok) for tok in text.split(",") if tok.strip()]
    except argparse.ArgumentTypeError as exc:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from exc


def load_config(path: str) -> dict[str, str]:
    """Flat key=value file; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill still-at-None flags from the config file (flags win)."""
    if getattr(args, "config", None) is None:
        return
    try:
        conf = load_config(args.config)
    except (OSError, ValueError) as exc:
        parser.error(str(exc))
    converters: dict[str, Callable[[str], object]] = {
        "B": scaled_float, "p": scaled_float, "g": scaled_float,
        "radius": scaled_float, "eps": scaled_float, "dt": scaled_float,
        "g_min": scaled_float, "g_max": scaled_float,
        "steps": int, "numeric_steps": int, "workers": int, "seed": int,
        "points": int, "intervals": int,
        "grid": grid_spec, "section": grid_spec,
        "p_list": float_list,
        "out": str, "orientation": str, "schedule": str, "suite": str,
        "numeric": lambda s: s.lower() in ("1", "true", "yes", "on"),
        "appendix_panels": lambda s: s.lower() in ("1", "true", "yes", "on"),
    }
    for key, raw in conf.items():
        if not hasattr(args, key):
            parser.error(f"config key {key!r} is not a flag of this subcommand")
        if getattr(args, key) is None:
            conv = converters.get(key, str)
            try:
                setattr(args, key, conv(raw))
            except Exception as exc:
                parser.error(f"config key {key!r}: {exc}")


def resolve(args: argparse.Namespace, name: str, default):
    v = getattr(args, name, None)
    return default if v is None else v


def fmt(v: float) -> str:
    return f"{v:.17g}"


def _tag(v: float) -> str:
    """Compact value tag for file names (2.5 -> '2.5', -2.0 -> '-2')."""
    s = f"{v:g}"
    return s


def add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--B", type=scaled_float, default=None, help="energy scale B (default 1)")
    sp.add_argument("--p", type=scaled_float, default=None, help="nonlinearity power")
    sp.add_argument("--g", type=scaled_float, default=None, help="nonlinearity strength in units of B")
    sp.add_argument("--radius", type=scaled_float, default=None, help="loop radius in k space (default 0.02pi)")
    sp.add_argument("--eps", type=scaled_float, default=None, help="adiabatic rate (default 1e-3*B)")
    sp.add_argument("--dt", type=scaled_float, default=None, help="integrator step (default 1e-3/B)")
    sp.add_argument("--out", type=str, default=None, help="output directory (default 'out')")
    sp.add_argument("--workers", type=int, default=None, help="parallel workers for sweep cells")
    sp.add_argument("--config", type=str, default=None, help="flat key=value config file")
    sp.add_argument("--seed", type=int, default=None, help="seed for randomized checks")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nldirac", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="band-structure tables over k grids or sections")
    add_common(sp)
    sp.add_argument("--grid", type=grid_spec, default=None, help="square k grid EXTENT:N")
    sp.add_argument("--section", type=grid_spec, default=None, help="k1=0 section EXTENT:N")
    sp.add_argument("--intervals", type=int, default=None, help="bracketing intervals in x (default 2000)")
    sp.add_argument("--appendix-panels", action="store_true", default=None,
                    help="preset: p=2, B=2, five g/B values on the k1=0 section")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("cone", help="degeneracy-point existence, imbalance, and energy")
    add_common(sp)
    sp.set_defaults(func=cmd_cone)

    sp = sub.add_parser("sweep", help="phase sweeps over the nonlinearity strength")
    add_common(sp)
    sp.add_argument("--p-list", type=float_list, default=None,
                    help="comma-separated powers (default 0.5,1,1.5,2,2.5,3)")
    sp.add_argument("--g-min", type=scaled_float, default=None, help="g/B range start (default -4)")
    sp.add_argument("--g-max", type=scaled_float, default=None, help="g/B range end (default 4)")
    sp.add_argument("--steps", type=int, default=None, help="analytic grid points (default 161)")
    sp.add_argument("--numeric", action="store_true", default=None,
                    help="also propagate numeric points")
    sp.add_argument("--numeric-steps", type=int, default=None, help="numeric grid points (default 17)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("evolve", help="propagate both interferometer arms and report phases")
    add_common(sp)
    sp.add_argument("--orientation", type=str, default=None, choices=("both", "east", "west"))
    sp.add_argument("--schedule", type=str, default=None, choices=("constant", "smooth"))
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("check", help="run the invariant suites and report pass/fail")
    add_common(sp)
    sp.add_argument("--suite", action="append", default=None,
                    help="restrict to named suites (repeatable); default all")
    sp.set_defaults(func=cmd_check)
    return ap


def _model(args: argparse.Namespace, p: float | None = None, g_over_b: float | None = None) -> ModelParams:
    B = resolve(args, "B", 1.0)
    pv = p if p is not None else resolve(args, "p", None)
    gv = g_over_b if g_over_b is not None else resolve(args, "g", None)
    if pv is None or gv is None:
        raise SystemExit2("--p and --g are required")
    return ModelParams(B=B, g=gv * B, p=pv)


class SystemExit2(Exception):
    """Usage error raised past argparse (mapped to exit code 2)."""


def _path_spec(args: argparse.Namespace, B: float, orientation: str = "east") -> dynamics.PathSpec:
    return dynamics.PathSpec(
        radius=resolve(args, "radius", 0.02 * math.pi),
        orientation=orientation,
        epsilon=resolve(args, "eps", 1e-3 * B),
        dt=resolve(args, "dt", 1e-3 / B),
        schedule=resolve(args, "schedule", "constant"),
    )


def cmd_spectrum(args: argparse.Namespace) -> int:
    outdir = Path(resolve(args, "out", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    intervals = resolve(args, "intervals", band.SCAN_INTERVALS)

    if resolve(args, "appendix_panels", False):
        cases = [(APPENDIX_P, gb, resolve(args, "B", APPENDIX_B)) for gb in APPENDIX_G_OVER_B]
        section = resolve(args, "section", None) or (0.1 * math.pi, 201)
        grids = [("section", section)] * len(cases)
    else:
        p = resolve(args, "p", None)
        g = resolve(args, "g", None)
        if p is None or g is None:
            raise SystemExit2("spectrum needs --p and --g (or --appendix-panels)")
        cases = [(p, g, resolve(args, "B", 1.0))]
        if args.grid is not None:
            grids = [("grid", args.grid)]
        else:
            grids = [("section", resolve(args, "section", None) or (0.1 * math.pi, 201))]

    failures = 0
    for (p, gb, B), (kind, (extent, npts)) in zip(cases, grids):
        params = ModelParams(B=B, g=gb * B, p=p)
        ks = np.linspace(-extent, extent, npts)
        if kind == "grid":
            kpath = [Momentum(k1, k2) for k1 in ks for k2 in ks]
        else:
            kpath = [Momentum(0.0, k2) for k2 in ks]
        name = outdir / f"spectrum_p{_tag(p)}_gB{_tag(gb)}.csv"
        try:
            rows = band.spectrum_slice(kpath, params, intervals=intervals)
        except band.RootSearchError as exc:
            print(f"error: {name.name}: {exc}", file=sys.stderr)
            failures += 1
            continue
        with open(name, "w") as fp:
            band.write_spectrum_csv(rows, fp)
        print(f"wrote {name}")
    return 1 if failures else 0


def cmd_cone(args: argparse.Namespace) -> int:
    params = _model(args)
    cone = band.solve_x0(params)
    print("p,g_over_B,exists,x0,E0")
    print(f"{fmt(params.p)},{fmt(params.g / params.B)},{int(cone.exists)},{fmt(cone.x0)},{fmt(cone.E0)}")
    return 0


def _sweep_numeric_cell(p: float, gb: float, B: float, args: argparse.Namespace):
    params = ModelParams(B=B, g=gb * B, p=p)
    spec = _path_spec(args, B)
    try:
        br = dynamics.ab_phase_numeric(params, spec)
        cone = band.solve_x0(params)
        return (p, gb, cone.x0, br, "")
    except (dynamics.AdiabaticityError, dynamics.ContinuationError, band.RootSearchError, ValueError) as exc:
        return (p, gb, math.nan, None, f"{type(exc).__name__}: {exc}")


def cmd_sweep(args: argparse.Namespace) -> int:
    outdir = Path(resolve(args, "out", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    B = resolve(args, "B", 1.0)
    p_list = resolve(args, "p_list", [0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    g_min = resolve(args, "g_min", -4.0)
    g_max = resolve(args, "g_max", 4.0)
    steps = resolve(args, "steps", 161)
    if steps < 2 or not (math.isfinite(g_min) and math.isfinite(g_max)):
        raise SystemExit2("sweep needs a finite g range and steps >= 2")

    g_grid = np.linspace(g_min, g_max, steps)
    all_rows = []
    for p in p_list:
        rows = phases.phase_sweep_rows([p], g_grid, B=B)
        all_rows.extend(rows)
        with open(outdir / f"sweep_p{_tag(p)}.csv", "w") as fp:
            phases.write_phase_csv(rows, fp)
    with open(outdir / "sweep_all.csv", "w") as fp:
        phases.write_phase_csv(all_rows, fp)
    print(f"wrote {outdir}/sweep_all.csv ({len(all_rows)} analytic rows)")

    failures = 0
    if resolve(args, "numeric", False):
        nsteps = resolve(args, "numeric_steps", 17)
        g_num = np.linspace(g_min, g_max, nsteps)
        cells = [(p, gb) for p in p_list for gb in g_num]
        workers = resolve(args, "workers", 1)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(lambda c: _sweep_numeric_cell(c[0], c[1], B, args), cells))
        else:
            results = [_sweep_numeric_cell(p, gb, B, args) for p, gb in cells]
        results.sort(key=lambda r: (r[0], r[1]))
        num_rows = []
        errs = []
        for p, gb, x0, br, err in results:
            if br is None:
                failures += 1
                br = phases.PhaseBreakdown(theta_B=math.nan, delta_theta_D=math.nan)
            num_rows.append((p, gb, x0, br))
            errs.append([err])
        for p in p_list:
            sel = [i for i, r in enumerate(num_rows) if r[0] == p]
            with open(outdir / f"sweep_numeric_p{_tag(p)}.csv", "w") as fp:
                phases.write_phase_csv([num_rows[i] for i in sel], fp,
                                       extra_header=["error"], extra_values=[errs[i] for i in sel])
        with open(outdir / "sweep_numeric_all.csv", "w") as fp:
            phases.write_phase_csv(num_rows, fp, extra_header=["error"], extra_values=errs)
        print(f"wrote {outdir}/sweep_numeric_all.csv ({len(num_rows)} numeric rows, {failures} failed)")
    return 1 if failures else 0


def cmd_evolve(args: argparse.Namespace) -> int:
    params = _model(args)
    outdir = Path(resolve(args, "out", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    orientation = resolve(args, "orientation", "both")
    spec = _path_spec(args, params.B)

    try:
        if orientation in ("east", "west"):
            res = dynamics.evolve(replace(spec, orientation=orientation), params)
            with open(outdir / f"trace_{orientation}.csv", "w") as fp:
                dynamics.write_trace_csv(res.trace, fp)
            print(
                f"theta_total={fmt(res.theta_total)} overlap={fmt(res.overlap_final)} "
                f"norm_drift={fmt(res.max_norm_deviation)}"
            )
            return 0
        br, res_e, res_w = dynamics.ab_phase_detailed(params, spec)
        for tag, res in (("east", res_e), ("west", res_w)):
            with open(outdir / f"trace_{tag}.csv", "w") as fp:
                dynamics.write_trace_csv(res.trace, fp)
        drift = max(res_e.max_norm_deviation, res_w.max_norm_deviation)
        print(
            f"theta_AB_num={fmt(br.theta_AB)} theta_AB_mod={fmt(br.theta_AB_mod)} "
            f"theta_B_num={fmt(br.theta_B)} delta_theta_D_num={fmt(br.delta_theta_D)} "
            f"overlap_east={fmt(res_e.overlap_final)} overlap_west={fmt(res_w.overlap_final)} "
            f"norm_drift={fmt(drift)}"
        )
        return 0
    except dynamics.AdiabaticityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        tail = exc.trace.overlap[-8:]
        print(f"overlap tail: {np.array2string(tail, precision=6)}", file=sys.stderr)
        return 1
    except (dynamics.ContinuationError, band.RootSearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# check suites


def _check_eigen(rng: np.random.Generator, args) -> tuple[bool, str]:
    worst_res = 0.0
    worst_gauge = 0.0
    for _ in range(40):
        p = rng.uniform(0.3, 3.0)
        g = rng.uniform(-5.0, 5.0)
        params = ModelParams(B=1.0, g=g, p=p)
        k = Momentum(rng.uniform(-0.1, 0.1) * math.pi, rng.uniform(-0.1, 0.1) * math.pi)
        from .model import gamma as gamma_fn
        gam = gamma_fn(k, params)
        for sol in band.solve_all_x(k, params):
            worst_res = max(worst_res, sol.residual)
            if abs(gam) > 1e-9 and abs(sol.x) < 1.0 - 1e-9:
                base = -math.atan2(gam.imag, gam.real)
                d = min(phases.angle_distance(sol.phi, base), phases.angle_distance(sol.phi, base + math.pi))
                worst_gauge = max(worst_gauge, d)
    ok = worst_res <= 1e-10 and worst_gauge <= 1e-10
    return ok, f"max residual {worst_res:.2e}, max gauge defect {worst_gauge:.2e}"


def _check_oddness(rng: np.random.Generator, args) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(200):
        p = rng.uniform(0.3, 3.0)
        g = rng.uniform(2.0, 10.0)
        xp = band.solve_x0(ModelParams(B=1.0, g=g, p=p)).x0
        xm = band.solve_x0(ModelParams(B=1.0, g=-g, p=p)).x0
        worst = max(worst, abs(xp + xm))
    return worst <= 1e-12, f"max |x0(g) + x0(-g)| = {worst:.2e}"


def _check_regime(rng: np.random.Generator, args) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(200):
        p = rng.uniform(0.25, 3.0)
        if rng.uniform() < 0.2:
            p = 1.0
        g = rng.uniform(2.0001, 8.0) * (1.0 if rng.uniform() < 0.5 else -1.0)
        params = ModelParams(B=1.0, g=g, p=p)
        cone = band.solve_x0(params)
        worst = max(worst, abs(phases.dyn_phase_diff_leading(cone, params)
                               - phases.dyn_phase_diff_regime(cone, params)))
    return worst <= 1e-9, f"max |leading - regime| = {worst:.2e}"


def _check_phases(rng: np.random.Generator, args) -> tuple[bool, str]:
    worst = 0.0
    for g in np.linspace(2.05, 6.0, 40):
        params = ModelParams(B=1.0, g=g, p=1.0)
        br = phases.ab_phase_leading(band.solve_x0(params), params)
        worst = max(worst, phases.angle_distance(br.theta_AB, math.pi))
    for g in np.linspace(-1.95, 1.95, 41):
        for p in (0.5, 1.0, 2.0):
            params = ModelParams(B=1.0, g=g, p=p)
            br = phases.ab_phase_leading(band.solve_x0(params), params)
            worst = max(worst, phases.angle_distance(br.theta_AB, 0.0))
    return worst <= 1e-9, f"max plateau defect = {worst:.2e}"


def _check_norm(rng: np.random.Generator, args) -> tuple[bool, str]:
    params = ModelParams(B=1.0, g=4.0, p=1.0)
    spec = dynamics.PathSpec(radius=0.02 * math.pi, epsilon=4e-3, dt=1e-3)
    res = dynamics.evolve(spec, params)
    return res.max_norm_deviation < 1e-10, f"max |norm - 1| = {res.max_norm_deviation:.2e}"


def _check_order(rng: np.random.Generator, args) -> tuple[bool, str]:
    params = ModelParams(B=1.0, g=4.0, p=1.0)
    dts = (1e-2, 5e-3, 2.5e-3)
    thetas = []
    for dt in dts + (2.5e-4,):
        spec = dynamics.PathSpec(radius=0.02 * math.pi, epsilon=1e-2, dt=dt)
        res = dynamics.evolve(spec, params, n_samples=4096)
        thetas.append(res.theta_total)
    ref = thetas[-1]
    errs = [abs(t - ref) for t in thetas[:-1]]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    return 1.8 <= slope <= 2.2, f"phase-error order {slope:.3f}"


def _check_deviation(rng: np.random.Generator, args) -> tuple[bool, str]:
    params = ModelParams(B=1.0, g=4.0, p=1.0)
    spec = dynamics.PathSpec(radius=0.02 * math.pi, epsilon=1e-3, dt=1e-3)
    dev1 = dynamics.deviation_check(spec, params, 0.5 * spec.duration)
    spec2 = replace(spec, epsilon=0.5e-3)
    dev2 = dynamics.deviation_check(spec2, params, 0.5 * spec2.duration)
    ok = dev1.relative_error < 0.1 and dev2.relative_error < dev1.relative_error
    return ok, f"rel err {dev1.relative_error:.4f} -> {dev2.relative_error:.4f} at eps/2"


CHECK_SUITES: dict[str, Callable] = {
    "eigen": _check_eigen,
    "oddness": _check_oddness,
    "regime": _check_regime,
    "phases": _check_phases,
    "norm": _check_norm,
    "order": _check_order,
    "deviation": _check_deviation,
}


def cmd_check(args: argparse.Namespace) -> int:
    names = resolve(args, "suite", None) or list(CHECK_SUITES)
    unknown = [n for n in names if n not in CHECK_SUITES]
    if unknown:
        raise SystemExit2(f"unknown suites: {', '.join(unknown)} (have: {', '.join(CHECK_SUITES)})")
    seed = resolve(args, "seed", 12345)
    failures = 0
    for name in names:
        rng = np.random.default_rng(seed)
        try:
            ok, detail = CHECK_SUITES[name](rng, args)
        except Exception as exc:  # a crashed suite is a failed suite
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        print(f"[{'PASS' if ok else 'FAIL'}] {name:10s} {detail}")
        failures += 0 if ok else 1
    return 1 if failures else 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    apply_config(args, parser)
    try:
        return args.func(args)
    except SystemExit2 as exc:
        parser.error(str(exc))  # exits with code 2
        return 2
    except (band.RootSearchError, dynamics.ContinuationError, dynamics.AdiabaticityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
