"""Command-line front end for the cat-state repeater toolkit.

One subcommand per protocol stage — ``grow``, ``connect``, ``swap``,
``optimize`` — plus ``reproduce`` bundles that regenerate the headline
figure/table data sets with one call.  Commands emit CSV and JSON files
only (no plotting); every file starts with a ``#``-commented run manifest
(JSON files embed the same manifest as a ``"manifest"`` object since JSON
has no comments).  All numbers are formatted locale-independently with 12
significant digits, and every command is deterministic under ``--seed``;
omitting the seed draws one from system entropy and records it.  Output
paths inside manifests are written relative to ``--out`` so reruns into
different directories stay byte-identical.

A flat ``key=value`` config file can pre-load any subcommand's options via
``--config FILE`` (keys are the long option names without the dashes);
explicit command-line flags override file values.

Exit codes: 0 on success, 2 on a validation error, 3 when the requested
constraint is infeasible.

``--threads N`` caps BLAS parallelism; it is translated into environment
variables before the numerical libraries load, which is why every heavy
import in this module happens inside a command body.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def fmt(value) -> str:
    """Locale-independent scalar formatting: 12 significant digits."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("catrepeater")
    except Exception:
        return "unknown"


@dataclass(frozen=True)
class RunManifest:
    """Provenance block embedded in every output file.

    Wall-clock duration is reported on stdout but deliberately kept out of
    the file headers: reruns under the same seed must be byte-identical.
    """

    subcommand: str
    config: tuple[tuple[str, str], ...]
    seed: int
    version: str
    outputs: tuple[str, ...]

    def header_lines(self) -> list[str]:
        cfg = " ".join(f"{key}={val}" for key, val in self.config)
        lines = [
            f"# catrepeater {self.version} {self.subcommand}",
            f"# seed: {self.seed}",
            f"# config: {cfg}",
        ]
        lines.extend(f"# output: {name}" for name in self.outputs)
        return lines

    def as_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config": dict(self.config),
            "seed": self.seed,
            "version": self.version,
            "outputs": list(self.outputs),
        }


def _manifest(args: argparse.Namespace, seed: int, outputs: list[str]) -> RunManifest:
    skip = {"func", "command", "threads", "config", "seed", "out"}
    entries = []
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None or callable(value):
            continue
        if isinstance(value, (list, tuple)):
            entries.append((key, ",".join(fmt(v) for v in value)))
        else:
            entries.append((key, fmt(value)))
    return RunManifest(
        subcommand=args.command,
        config=tuple(entries),
        seed=seed,
        version=_version(),
        outputs=tuple(outputs),
    )


def _write_csv(path: str, manifest: RunManifest, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in manifest.header_lines():
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _round12(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {key: _round12(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(val) for val in obj]
    if hasattr(obj, "item"):  # numpy scalars
        return _round12(obj.item())
    return obj


def _write_json(path: str, manifest: RunManifest, payload: dict) -> None:
    body = {"manifest": manifest.as_dict()}
    body.update(_round12(payload))
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _progress(tag: str):
    return lambda msg: print(f"  [{tag}] {msg}", file=sys.stderr, flush=True)


def _progress_counter(tag: str):
    # growth scans report (subtrees done, subtrees total) instead of text
    return lambda done, total: print(
        f"  [{tag}] {done}/{total}", file=sys.stderr, flush=True
    )


# ---------------------------------------------------------------------------
# stage commands
# ---------------------------------------------------------------------------


def cmd_grow(args: argparse.Namespace, seed: int) -> list[str]:
    if not 1 <= args.m <= 5:
        raise ValueError("growth depth m must lie in 1..5")
    if not 0.0 <= args.floor < 1.0:
        raise ValueError("fidelity floor must lie in [0, 1)")
    from catrepeater.growth import delta_grid, optimize_schedule

    grid = delta_grid(points=9 if args.quick else 25)
    scan = optimize_schedule(args.m, args.floor, grid, progress=_progress_counter("grow"))
    names = [f"grow_pareto_m{args.m}.csv", f"grow_uniform_m{args.m}.csv"]
    manifest = _manifest(args, seed, names)
    columns = (
        ["m"]
        + [f"delta_{k}" for k in range(1, args.m + 1)]
        + [f"p_{k}" for k in range(1, args.m + 1)]
        + ["fidelity", "rate"]
    )

    def rows(results):
        for g in results:
            yield [args.m, *g.schedule.deltas, *g.schedule.probs, g.fidelity, g.rate]

    _write_csv(os.path.join(args.out, names[0]), manifest, columns, rows(scan.pareto))
    _write_csv(os.path.join(args.out, names[1]), manifest, columns, rows(scan.uniform))
    return names


def cmd_connect(args: argparse.Namespace, seed: int) -> list[str]:
    if not 1 <= args.m <= 3:
        raise ValueError("connection stage covers m = 1..3")
    if args.r is None and not args.scan_r and not args.scan_growth:
        raise ValueError("choose --r VALUE, --scan-r, or --scan-growth")
    if not 0.0 < args.eta <= 1.0:
        raise ValueError("detector/channel efficiency must lie in (0, 1]")
    from catrepeater.connect import (
        connect,
        fit_fidelity_quadratic,
        fit_fidelity_slope,
        fit_growth_exponential,
        scan_growth_imperfection,
        slope_calibration_scan,
    )
    from catrepeater.growth import delta_grid, optimize_schedule
    from catrepeater.targets import ideal_grown

    names: list[str] = []
    scan_rows: list[list] = []
    fits: list[dict] = []
    grown = ideal_grown(args.m)

    if args.scan_r:
        results = slope_calibration_scan(grown, grown, args.m, u_max=0.07)
        scan_rows += [
            [args.m, res.r, res.eta, res.p_connect, res.p_c_noloss, res.fidelity]
            for res in results
        ]
        points = [(res.p_connect / res.eta, res.fidelity) for res in results]
        b_lin, r_squared = fit_fidelity_slope(points)
        a_quad, b_quad, _ = fit_fidelity_quadratic(points)
        fits.append(
            {
                "m": args.m,
                "n": 0,
                "a": a_quad,
                "b": b_lin,
                "b_quadratic": b_quad,
                "r_squared": r_squared,
            }
        )
    if args.r is not None:
        res = connect(grown, grown, args.r, args.eta, level=args.m)
        scan_rows.append(
            [args.m, res.r, res.eta, res.p_connect, res.p_c_noloss, res.fidelity]
        )
    if scan_rows:
        names.append(f"connect_scan_m{args.m}.csv")
    if fits:
        names.append(f"connect_fits_m{args.m}.json")

    growth_rows: list[list] = []
    if args.scan_growth:
        grid = delta_grid(points=9 if args.quick else 25)
        frontier = optimize_schedule(
            args.m, 0.0, grid, progress=_progress_counter("connect")
        ).pareto
        curve = scan_growth_imperfection(frontier, args.m)
        growth_rows = [[args.m, rate, fid] for rate, fid in curve]
        c_fit, d_fit, rms = fit_growth_exponential(curve)
        fits.append({"m": args.m, "n": 0, "c": c_fit, "d": d_fit, "rms": rms})
        names.append(f"connect_growth_m{args.m}.csv")
        if f"connect_fits_m{args.m}.json" not in names:
            names.append(f"connect_fits_m{args.m}.json")

    manifest = _manifest(args, seed, names)
    if scan_rows:
        _write_csv(
            os.path.join(args.out, f"connect_scan_m{args.m}.csv"),
            manifest,
            ["m", "r", "eta", "p_connect", "p_c_noloss", "fidelity"],
            scan_rows,
        )
    if growth_rows:
        _write_csv(
            os.path.join(args.out, f"connect_growth_m{args.m}.csv"),
            manifest,
            ["m", "R_growth", "fidelity"],
            growth_rows,
        )
    if fits:
        _write_json(
            os.path.join(args.out, f"connect_fits_m{args.m}.json"),
            manifest,
            {"fits": fits},
        )
    return names


def cmd_swap(args: argparse.Namespace, seed: int) -> list[str]:
    if not 1 <= args.m <= 3:
        raise ValueError("swap stage covers m = 1..3")
    if not 1 <= args.levels <= 4:
        raise ValueError("nesting is capped at 4 levels")
    if args.samples < 2:
        raise ValueError("need at least two samples for a standard error")
    import numpy as np

    from catrepeater.swap import (
        nested_swap,
        success_probability,
        swap_once,
        target_fidelity,
    )
    from catrepeater.targets import psi_m

    rng = np.random.default_rng(seed)
    seg = psi_m(args.m)
    p_level1 = success_probability(seg, seg, args.delta)
    if p_level1 < 5e-3:
        raise ValueError(
            f"acceptance probability {p_level1:.2e} at delta={args.delta} is too "
            "small to sample"
        )

    rows: list[list] = []
    finals: list[float] = []
    if args.levels == 1:
        # level 1 records the raw accept/reject stream; fidelity and the
        # optimal theta_p are only defined for accepted attempts
        accepted = attempts = 0
        while accepted < args.samples:
            attempts += 1
            if attempts > 400 * args.samples:
                raise ValueError(
                    "acceptance came in far below the exact marginal estimate"
                )
            out = swap_once(seg, seg, args.delta, rng)
            if out.accepted:
                fid, theta = target_fidelity(out.state, args.m, (out.x0,))
                rows.append([1, out.x0, out.p0, 1, fid, theta])
                finals.append(fid)
                accepted += 1
            else:
                rows.append([1, out.x0, out.p0, 0, math.nan, math.nan])
        p_success = p_level1
    else:
        # deeper chains resample internally, so only accepted outcomes
        # surface here; acceptance is reported per level instead
        level_probs = np.zeros(args.levels)
        for _ in range(args.samples):
            _, fid, records = nested_swap(seg, args.levels, args.delta, args.m, rng)
            for rec in records:
                rows.append(
                    [rec.level, rec.outcome.x0, rec.outcome.p0, 1, rec.fidelity, rec.theta_p]
                )
            finals.append(fid)
            level_probs += [rec.p_accept for rec in records]
        p_success = float(np.prod(level_probs / args.samples))

    finals_arr = np.asarray(finals)
    summary = {
        "m": args.m,
        "n": args.levels,
        "delta": args.delta,
        "mean_fidelity": float(finals_arr.mean()),
        "sem": float(finals_arr.std(ddof=1) / math.sqrt(len(finals))),
        "p_success": p_success,
    }
    names = ["swap_samples.csv", "swap_summary.json"]
    manifest = _manifest(args, seed, names)
    _write_csv(
        os.path.join(args.out, names[0]),
        manifest,
        ["level", "x0", "p0", "accepted", "fidelity", "theta_star"],
        rows,
    )
    _write_json(os.path.join(args.out, names[1]), manifest, summary)
    return names


def _parse_int_list(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ValueError(f"expected a comma-separated integer list, got {text!r}") from exc


def cmd_optimize(args: argparse.Namespace, seed: int) -> list[str]:
    import numpy as np

    from catrepeater.repeater import optimize, total_rate  # noqa: F401

    res = optimize(
        args.L,
        args.rrep,
        args.floor,
        rng=np.random.default_rng(seed),
        quick=args.quick,
        levels=_parse_int_list(args.levels),
        depths=_parse_int_list(args.depths),
        progress=_progress("optimize"),
    )
    cfg = res.config
    payload = {
        "L": args.L,
        "r_rep": args.rrep,
        "config": {
            "n": cfg.n,
            "m": cfg.m,
            "deltas": list(cfg.deltas),
            "r": cfg.r,
            "delta_swap": cfg.delta_swap,
            "p_pair": cfg.p_pair,
            "rep_rate": cfg.rep_rate,
        },
        "rate_pairs_per_min": res.rate,
        "F": res.fidelity,
        "sem": res.sem,
        "seed": seed,
        "grid_trace": list(res.trace),
    }
    names = ["optimize_result.json"]
    manifest = _manifest(args, seed, names)
    _write_json(os.path.join(args.out, names[0]), manifest, payload)
    print(
        f"best: {res.rate:.6g} pairs/min at F={res.fidelity:.4f}±{res.sem:.4f} "
        f"(n={cfg.n}, m={cfg.m})"
    )
    return names


# ---------------------------------------------------------------------------
# figure/table reproduction bundles
# ---------------------------------------------------------------------------


def _reproduce_fig3(args, seed: int) -> list[str]:
    from catrepeater.growth import delta_grid, optimize_schedule

    if not 1 <= args.max_m <= 5:
        raise ValueError("--max-m must lie in 1..5")
    grid = delta_grid(points=9 if args.quick else 25)
    rows = []
    for m in range(1, args.max_m + 1):
        scan = optimize_schedule(m, 0.0, grid, progress=_progress_counter(f"fig3 m={m}"))
        rows += [["optimal", m, g.rate, g.fidelity] for g in scan.pareto]
        rows += [["uniform", m, g.rate, g.fidelity] for g in scan.uniform]
    names = ["fig3_growth.csv"]
    manifest = _manifest(args, seed, names)
    _write_csv(
        os.path.join(args.out, names[0]),
        manifest,
        ["curve", "m", "rate", "fidelity"],
        rows,
    )
    return names


def _reproduce_fig4(args, seed: int) -> list[str]:
    import numpy as np

    from catrepeater.connect import connect
    from catrepeater.targets import ideal_grown

    rows = []
    say = _progress("fig4")
    for m in (1, 2, 3):
        grown = ideal_grown(m)
        for eta in (1.0, 0.5, 0.25):
            say(f"m={m} eta={eta}")
            probe = connect(grown, grown, 1e-3, eta, level=m)
            r_hi = min(0.4, 0.1 / (probe.p_connect / 1e-3))
            for r in np.geomspace(1e-4, r_hi, 10):
                res = connect(grown, grown, float(r), eta, level=m)
                rows.append(
                    [m, res.r, res.eta, res.p_connect, res.p_c_noloss, res.fidelity]
                )
    names = ["fig4_connect.csv"]
    manifest = _manifest(args, seed, names)
    _write_csv(
        os.path.join(args.out, names[0]),
        manifest,
        ["m", "r", "eta", "p_connect", "p_c_noloss", "fidelity"],
        rows,
    )
    return names


def _reproduce_fig5(args, seed: int) -> list[str]:
    import numpy as np

    # the fused-swap object is the package-internal way to reach the exact
    # outcome densities; it is private API shared across the test suite too
    from catrepeater.swap import _FusedSwap, target_fidelity
    from catrepeater.targets import mu_peak, psi_m

    m = args.m
    seg = psi_m(m)
    fused = _FusedSwap(seg, seg)
    period = math.pi / (math.sqrt(2.0) * mu_peak(m))
    p0_grid = np.linspace(0.0, 2.0 * period, 41)
    x0_values = (0.0, 0.3, 0.6)
    say = _progress("fig5")

    fid_rows = []
    for x0 in x0_values:
        say(f"x0={x0}")
        for p0 in p0_grid:
            state = fused.conditional_state(x0, float(p0))
            fid, theta = target_fidelity(state, m, (x0,))
            fid_rows.append([m, x0, float(p0), fid, theta])

    dens_rows = []
    x_span = math.sqrt(2.0) * mu_peak(m) + 4.0
    for x in np.linspace(-x_span, x_span, 201):
        dens_rows.append(["x_marginal", math.nan, float(x), float(fused.x_density(x))])
    for x0 in x0_values:
        density = fused.p_density(x0)
        for p0 in p0_grid:
            dens_rows.append(["p_conditional", x0, float(p0), float(density(p0))])

    names = [f"fig5_fidelity_m{m}.csv", f"fig5_densities_m{m}.csv"]
    manifest = _manifest(args, seed, names)
    _write_csv(
        os.path.join(args.out, names[0]),
        manifest,
        ["m", "x0", "p0", "fidelity", "theta_star"],
        fid_rows,
    )
    _write_csv(
        os.path.join(args.out, names[1]),
        manifest,
        ["kind", "x0", "coordinate", "density"],
        dens_rows,
    )
    return names


def _reproduce_fig6(args, seed: int) -> list[str]:
    import numpy as np

    from catrepeater.repeater import PREVIOUS_PROTOCOL_RATE, optimize

    lengths = [float(part) for part in args.lengths.split(",") if part.strip()]
    if not lengths or any(L <= 0 for L in lengths):
        raise ValueError("--lengths needs a comma-separated list of positive km values")
    rows = []
    rng = np.random.default_rng(seed)
    for L in lengths:
        res = optimize(
            L,
            args.rrep,
            args.floor,
            rng=rng,
            quick=args.quick,
            progress=_progress(f"fig6 L={L:g}"),
        )
        rows.append(
            [L, res.rate, res.fidelity, res.sem, res.config.n, res.config.m]
        )
    names = ["fig6_rate.csv", "fig6_literature.csv"]
    manifest = _manifest(args, seed, names)
    _write_csv(
        os.path.join(args.out, names[0]),
        manifest,
        ["L_km", "rate_pairs_per_min", "fidelity", "sem", "n", "m"],
        rows,
    )
    _write_csv(
        os.path.join(args.out, names[1]),
        manifest,
        ["L_km", "rate_pairs_per_min", "source"],
        [[1000.0, PREVIOUS_PROTOCOL_RATE, "previous cat-state protocol (literature value)"]],
    )
    return names


def _reproduce_tab_d(args, seed: int) -> list[str]:
    from catrepeater.connect import (
        fit_fidelity_quadratic,
        fit_fidelity_slope,
        fit_growth_exponential,
        scan_growth_imperfection,
        slope_calibration_scan,
    )
    from catrepeater.growth import delta_grid, optimize_schedule
    from catrepeater.repeater import load_fit_tables
    from catrepeater.targets import ideal_grown

    fits = load_fit_tables()
    say = _progress("tabD")
    rows = []

    def compare(key: str, m: int, fitted: float):
        published = fits.entry(key, 0, m)
        rel = (fitted - published) / published if published != 0.0 else math.nan
        rows.append([key, 0, m, published, fitted, rel, fitted - published])

    grid = delta_grid(points=9 if args.quick else 25)
    for m in (1, 2, 3):
        say(f"connection slopes m={m}")
        grown = ideal_grown(m)
        points = [
            (res.p_connect / res.eta, res.fidelity)
            for res in slope_calibration_scan(grown, grown, m, u_max=0.07)
        ]
        b_lin, _ = fit_fidelity_slope(points)
        a_quad, _, _ = fit_fidelity_quadratic(points)
        compare("a", m, a_quad)
        compare("b", m, b_lin)
        say(f"growth exponential m={m}")
        frontier = optimize_schedule(m, 0.0, grid).pareto
        c_fit, d_fit, _ = fit_growth_exponential(scan_growth_imperfection(frontier, m))
        compare("c", m, c_fit)
        compare("d", m, d_fit)

    names = ["tabD_report.csv"]
    manifest = _manifest(args, seed, names)
    _write_csv(
        os.path.join(args.out, names[0]),
        manifest,
        ["quantity", "n", "m", "published", "fitted", "rel_deviation", "abs_deviation"],
        rows,
    )
    return names


_REPRODUCERS = {
    "fig3": _reproduce_fig3,
    "fig4": _reproduce_fig4,
    "fig5": _reproduce_fig5,
    "fig6": _reproduce_fig6,
    "tabD": _reproduce_tab_d,
}


def cmd_reproduce(args: argparse.Namespace, seed: int) -> list[str]:
    return _REPRODUCERS[args.figure](args, seed)


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser, *, quick: bool = False) -> None:
    sub.add_argument("--out", default=".", help="output directory (default: .)")
    sub.add_argument(
        "--seed",
        type=int,
        default=None,
        help="root RNG seed; omitted = drawn from system entropy and recorded",
    )
    sub.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap BLAS threads (default: all cores)",
    )
    sub.add_argument(
        "--config",
        default=None,
        help="flat key=value file pre-loading these options; flags override it",
    )
    if quick:
        sub.add_argument(
            "--quick", action="store_true", help="coarse grids for CI-sized runs"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catrepeater",
        description="Phase-space simulator and rate optimizer for a cat-state "
        "quantum repeater (distances in km, rates in Hz, output rates in pairs/min).",
    )
    parser.add_argument("--version", action="version", version=f"catrepeater {_version()}")
    subs = parser.add_subparsers(dest="command", required=True)

    grow = subs.add_parser(
        "grow", help="scan growth schedules; emit Pareto and uniform-Δ CSVs"
    )
    grow.add_argument("--m", type=int, required=True, help="growth depth (1..5)")
    grow.add_argument(
        "--floor", type=float, default=0.0, help="discard schedules below this fidelity"
    )
    _add_common(grow, quick=True)
    grow.set_defaults(func=cmd_grow)

    conn = subs.add_parser(
        "connect", help="entanglement generation: r scans, fits, growth-imperfection curve"
    )
    conn.add_argument("--m", type=int, required=True, help="growth depth (1..3)")
    conn.add_argument("--r", type=float, default=None, help="single tap reflectivity")
    conn.add_argument(
        "--scan-r", action="store_true", help="reflectivity scan sized for the slope fit"
    )
    conn.add_argument(
        "--scan-growth",
        action="store_true",
        help="fidelity vs growth rate along the Pareto frontier (r → 0)",
    )
    conn.add_argument("--eta", type=float, default=1.0, help="channel×detector efficiency")
    _add_common(conn, quick=True)
    conn.set_defaults(func=cmd_connect)

    swap = subs.add_parser(
        "swap", help="dual-homodyne swapping: per-sample records and a summary"
    )
    swap.add_argument("--m", type=int, required=True, help="growth depth (1..3)")
    swap.add_argument("--delta", type=float, required=True, help="x̂ acceptance half-width")
    swap.add_argument("--samples", type=int, default=100, help="accepted samples")
    swap.add_argument("--levels", type=int, default=1, help="nesting levels (1..4)")
    _add_common(swap)
    swap.set_defaults(func=cmd_swap)

    opt = subs.add_parser(
        "optimize", help="maximize pairs/min at a fidelity floor for one link length"
    )
    opt.add_argument("--L", type=float, required=True, help="total link length in km")
    opt.add_argument("--rrep", type=float, required=True, help="source repetition rate in Hz")
    opt.add_argument("--floor", type=float, default=0.8, help="fidelity floor (default 0.8)")
    opt.add_argument(
        "--levels", default=None, help="restrict swap levels, e.g. 0,1,2 (default all)"
    )
    opt.add_argument(
        "--depths", default=None, help="restrict growth depths, e.g. 2,3 (default all)"
    )
    _add_common(opt, quick=True)
    opt.set_defaults(func=cmd_optimize)

    rep = subs.add_parser(
        "reproduce", help="regenerate a figure/table data set with stock parameters"
    )
    rep.add_argument("figure", choices=sorted(_REPRODUCERS), help="which artifact")
    rep.add_argument("--m", type=int, default=1, help="growth depth (fig5)")
    rep.add_argument("--max-m", type=int, default=4, help="deepest growth curve (fig3)")
    rep.add_argument("--rrep", type=float, default=1e6, help="source rate in Hz (fig6)")
    rep.add_argument("--floor", type=float, default=0.8, help="fidelity floor (fig6)")
    rep.add_argument(
        "--lengths",
        default="250,500,1000,2000",
        help="comma-separated link lengths in km (fig6)",
    )
    _add_common(rep, quick=True)
    rep.set_defaults(func=cmd_reproduce)

    return parser


def _expand_config_file(argv: list[str]) -> list[str]:
    """Splice `--config FILE` key=value pairs in right after the subcommand.

    Later occurrences win in argparse, so explicit flags override the file.
    """
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv  # argparse will report the missing value
    path = argv[idx + 1]
    try:
        text = open(path).read()
    except OSError as exc:
        raise ValueError(f"cannot read config file {path}: {exc}") from exc
    file_args: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        file_args.extend([f"--{key}", value])
    sub_at = next(
        (k for k, token in enumerate(argv) if not token.startswith("-")), None
    )
    if sub_at is None:
        return argv
    return argv[: sub_at + 1] + file_args + argv[sub_at + 1 :]


def main(argv: list[str] | None = None) -> int:
    raw_argv = list(sys.argv[1:] if argv is None else argv)
    try:
        full_argv = _expand_config_file(raw_argv)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser()
    args = parser.parse_args(full_argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be at least 1", file=sys.stderr)
            return 2
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    seed = args.seed if args.seed is not None else int.from_bytes(os.urandom(4), "big")
    os.makedirs(args.out, exist_ok=True)
    started = time.monotonic()
    try:
        outputs = args.func(args, seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    duration = time.monotonic() - started
    for name in outputs:
        print(f"wrote {os.path.join(args.out, name)}")
    print(f"done in {duration:.1f}s (seed {seed})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
