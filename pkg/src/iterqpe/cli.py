"""Command-line front end: ``iterqpe simulate|sweep|spectrum|samplesize``.

Exit codes: 0 success, 1 configuration error, 2 numeric failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import platform
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    estimate_adaptive,
    estimate_repetitive,
    hoeffding_samples,
    moving_average,
    scaling_fit,
    scheme_samples,
)
from .channel import build_evolution, channel_spectrum
from .config import RunConfig, load_matrix, sweep_axis
from .errors import ConfigError, IterQPEError
from .sampler import RepetitiveScheme, default_workers, run_scheme

log = logging.getLogger("iterqpe")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
OUT_DIR_ENV = "ITERQPE_OUT_DIR"
DEFAULT_SMOOTH_WINDOW = 5


# ------------------------------------------------------------------ output


def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the target directory and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(obj, complex):
        return {"real": obj.real, "imag": obj.imag}
    return obj


def write_json(path: Path, doc: dict) -> None:
    atomic_write(path, json.dumps(_clean(doc), indent=2, sort_keys=False) + "\n")


def histogram_csv(grid, counts) -> str:
    rows = ["xi,count"]
    for x, c in zip(grid, counts):
        c = float(c)
        rows.append(f"{float(x)!r},{int(c) if c.is_integer() else repr(c)}")
    return "\n".join(rows) + "\n"


def gnuplot_script(csv_name: str, title: str, xlabel: str) -> str:
    return (
        "set datafile separator ','\n"
        f"set title '{title}'\n"
        f"set xlabel '{xlabel}'\n"
        "set ylabel 'counts'\n"
        f"plot '{csv_name}' every ::1 using 1:2 with impulses lw 2 notitle\n"
    )


def sweep_gnuplot(csv_name: str, axis: str) -> str:
    return (
        "set datafile separator ','\n"
        "set logscale xy\n"
        f"set xlabel '{axis}'\n"
        "set ylabel 'Delta'\n"
        f"plot '{csv_name}' every ::1 using 4:6 with linespoints title 'mean error'\n"
    )


# --------------------------------------------------------------- pipeline


def _scheme_summary(scheme) -> dict:
    if isinstance(scheme, RepetitiveScheme):
        return {"kind": "repetitive", "m": scheme.m, "tau": scheme.settings.tau, "phi": scheme.settings.phi,
                "total_time": scheme.total_time}
    return {"kind": "adaptive", "m": scheme.m, "tau0": scheme.tau0, "taus": scheme.taus,
            "total_time": scheme.total_time}


def run_point(cfg: RunConfig, spec: dict, seed: int, workers: int) -> tuple:
    """Simulate and analyse one configuration point.  Returns ``(result, histogram)``."""
    started = time.perf_counter()
    v = cfg.operator()
    noise = cfg.noise(v)
    scheme = cfg.scheme(v, spec)
    init = cfg.initial_state()
    n = cfg.n_samples
    batch = run_scheme(v, noise, scheme, n, init, seed, workers=workers)
    hist = batch.histogram()
    analysis = cfg.section("analysis")
    warnings = []
    estimates = None
    if n == 0:
        warnings.append("n_samples is 0: histogram is empty and no estimate is made")
    elif analysis.get("estimate", True):
        n_peaks = analysis.get("n_peaks", v.n_distinct)
        kw = dict(truth=v.eigenvalues, n_peaks=n_peaks, strict=False)
        if "refine" in analysis:
            kw["refine"] = analysis["refine"]
        if isinstance(scheme, RepetitiveScheme):
            res = estimate_repetitive(hist, scheme.settings.tau, scheme.settings.phi, **kw)
        else:
            res = estimate_adaptive(hist, scheme.tau0, spec.get("signed", False), **kw)
        if res.n_peaks < n_peaks:
            warnings.append(f"resolved {res.n_peaks} of {n_peaks} peaks")
        estimates = {
            "values": res.estimates,
            "weights": res.weights,
            "locations": res.locations,
            "delta": res.delta,
            "matching": list(res.matching),
        }
    channel = None
    if analysis.get("spectrum", False) and isinstance(scheme, RepetitiveScheme):
        sp = channel_spectrum(build_evolution(v, noise, scheme.settings.tau).superop(),
                              analysis.get("s_hint", v.n_distinct))
        channel = _spectrum_doc(sp)
    for w in warnings:
        log.warning(w)
    echo = copy.deepcopy(cfg.raw)
    echo["scheme"] = copy.deepcopy(spec)
    echo.setdefault("sampling", {})["seed"] = seed
    echo["sampling"]["n_samples"] = n
    echo["sampling"].pop("repeats", None)
    result = {
        "config": echo,
        "fingerprint": batch.fingerprint,
        "scheme": _scheme_summary(scheme),
        "truth": {"eigenvalues": v.eigenvalues, "weights": v.weights(init.density(v))},
        "histogram": {"n": n, "bins": int(hist.grid.size)},
        "estimates": estimates,
        "delta": None if estimates is None else estimates["delta"],
        "channel": channel,
        "warnings": warnings,
        "metadata": {
            "seed": seed,
            "workers": workers,
            "wall_clock_s": time.perf_counter() - started,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    return result, hist


def _spectrum_doc(sp) -> dict:
    return {
        "eigenvalues": [{"real": z.real, "imag": z.imag, "modulus": abs(z), "class": c}
                        for z, c in zip(sp.eigenvalues, sp.classes)],
        "s_hint": sp.s_hint,
        "window": {"m_low": sp.m_low, "m_high": sp.m_high, "empty": sp.window_empty},
        "counts": {k: sp.count(k) for k in ("fixed", "rotating", "metastable", "decaying")},
    }


def _persist_point(out: Path, name: str, result: dict, hist, plots: bool) -> None:
    csv_name = f"{name}_hist.csv"
    result["histogram"]["file"] = csv_name
    atomic_write(out / csv_name, histogram_csv(hist.grid, hist.counts))
    write_json(out / f"{name}.json", result)
    if plots:
        xlabel = "f0" if result["scheme"]["kind"] == "repetitive" else "a"
        atomic_write(out / f"{name}.gp", gnuplot_script(csv_name, name, xlabel))


# --------------------------------------------------------------- commands


def _out_dir(args, cfg: RunConfig | None) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    if cfg is not None and "directory" in cfg.section("output"):
        return Path(cfg.section("output")["directory"])
    return Path(os.environ.get(OUT_DIR_ENV, "results"))


def _name(cfg: RunConfig, path: str) -> str:
    return cfg.section("output").get("name", Path(path).stem)


def _plots(args, cfg: RunConfig) -> bool:
    return bool(args.emit_plots or cfg.section("output").get("plots", False))


def _seed(args, cfg: RunConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config)
    if cfg.has_sweep:
        raise ConfigError("simulate takes a single point; use sweep for configurations with sweep markers")
    if len(cfg.schemes) != 1:
        raise ConfigError("simulate takes exactly one scheme")
    result, hist = run_point(cfg, cfg.schemes[0], _seed(args, cfg), args.workers)
    result["command"] = "simulate"
    name = _name(cfg, args.config)
    out = _out_dir(args, cfg)
    _persist_point(out, name, result, hist, _plots(args, cfg))
    est = result["estimates"]
    if est is not None:
        print(f"estimates {' '.join(repr(float(x)) for x in est['values'])}")
        print(f"delta {est['delta']!r}")
    print(f"wrote {out / (name + '.json')}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = RunConfig.load(args.config)
    if cfg.has_sweep:
        axis, values, points = sweep_axis(cfg.raw)
    else:
        axis, values, points = "point", [0], [cfg.raw]
    name = _name(cfg, args.config)
    out = _out_dir(args, cfg)
    plots = _plots(args, cfg)
    seed0 = _seed(args, cfg)
    analysis = cfg.section("analysis")
    window = analysis.get("smooth_window", DEFAULT_SMOOTH_WINDOW)
    rows = []
    for k, (value, doc) in enumerate(zip(values, points)):
        point = RunConfig(doc, cfg.base_dir)
        for spec in point.schemes:
            # in a scheme list each entry may sweep its own copy of the axis
            own = spec.get(axis, value) if isinstance(spec.get(axis), (int, float)) else value
            deltas = []
            for r in range(point.repeats):
                result, hist = run_point(point, spec, seed0 + r, args.workers)
                result["command"] = "sweep"
                result["sweep"] = {"axis": axis, "value": own, "index": k, "repeat": r}
                _persist_point(out, f"{name}_p{k}_{spec['kind']}_r{r}", result, hist, plots)
                deltas.append(result["delta"])
            good = [d for d in deltas if d is not None]
            rows.append({
                "scheme": spec["kind"],
                "axis": axis,
                "value": own,
                "t": result["scheme"]["total_time"],
                "m": result["scheme"]["m"],
                "delta_mean": float(np.mean(good)) if good else None,
                "delta_std": float(np.std(good)) if good else None,
                "deltas": deltas,
            })
    summary = {"axis": axis, "rows": rows, "fits": {}, "minima": {},
               "metadata": {"smooth_window": window, "seed": seed0, "workers": args.workers,
                            "version": __version__}}
    for kind in dict.fromkeys(r["scheme"] for r in rows):
        sub = [r for r in rows if r["scheme"] == kind and r["delta_mean"]]
        if not sub:
            continue
        smooth = moving_average([r["delta_mean"] for r in sub], window)
        for r, sm in zip(sub, smooth):
            r["delta_smoothed"] = float(sm)
        best = min(sub, key=lambda r: r["delta_mean"])
        summary["minima"][kind] = {"value": best["value"], "delta": best["delta_mean"]}
        if analysis.get("fit", False) and len(sub) >= 3:
            slope, intercept = scaling_fit([(r["t"], r["delta_mean"]) for r in sub])
            summary["fits"][kind] = {"slope": slope, "intercept": intercept}
            print(f"slope {kind} {slope!r}")
        print(f"min {kind} {axis}={best['value']!r} delta={best['delta_mean']!r}")
    header = "scheme,axis,value,t,m,delta_mean,delta_std,delta_smoothed"
    lines = [header]
    for r in rows:
        lines.append(",".join(str(x) for x in (
            r["scheme"], r["axis"], repr(r["value"]), repr(float(r["t"])), r["m"],
            repr(r["delta_mean"]), repr(r["delta_std"]), repr(r.get("delta_smoothed")))))
    atomic_write(out / f"{name}_summary.csv", "\n".join(lines) + "\n")
    write_json(out / f"{name}_summary.json", summary)
    if plots:
        atomic_write(out / f"{name}_summary.gp", sweep_gnuplot(f"{name}_summary.csv", axis))
    print(f"wrote {out / (name + '_summary.json')}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = RunConfig.load(args.config)
    analysis = cfg.section("analysis")
    if "superop_file" in analysis:
        path = cfg._path(analysis["superop_file"])
        if not path.exists():
            raise ConfigError(f"analysis.superop_file {path} does not exist")
        superop = load_matrix(path)
        s_hint = analysis.get("s_hint", 1)
    else:
        spec = cfg.schemes[0]
        if spec["kind"] != "repetitive":
            raise ConfigError("spectrum analysis needs a repetitive scheme (one fixed channel)")
        v = cfg.operator()
        superop = build_evolution(v, cfg.noise(v), spec.get("tau", 0.2)).superop()
        s_hint = analysis.get("s_hint", v.n_distinct)
    sp = channel_spectrum(superop, s_hint)
    doc = {"command": "spectrum", "config": cfg.raw, **_spectrum_doc(sp)}
    name = _name(cfg, args.config)
    out = _out_dir(args, cfg)
    rows = ["index,real,imag,modulus,class"]
    for i, (z, c) in enumerate(zip(sp.eigenvalues, sp.classes)):
        rows.append(f"{i},{float(z.real)!r},{float(z.imag)!r},{float(abs(z))!r},{c}")
    atomic_write(out / f"{name}_spectrum.csv", "\n".join(rows) + "\n")
    write_json(out / f"{name}_spectrum.json", doc)
    print(f"counts {' '.join(f'{k}={v}' for k, v in doc['counts'].items())}")
    print(f"window {float(sp.m_low)!r} {float(sp.m_high)!r}{' (empty)' if sp.window_empty else ''}")
    return EXIT_OK


def cmd_samplesize(args) -> int:
    printed = False
    if args.delta is not None:
        print(f"hoeffding {hoeffding_samples(args.delta, args.eps)}")
        printed = True
    if args.eta is not None:
        if args.scheme is None:
            raise ConfigError("--eta requires --scheme")
        kw = {"eps": args.eps}
        if args.m is not None:
            kw["m"] = args.m
        if args.t is not None:
            kw["t"] = args.t
        if args.tau is not None:
            kw["tau"] = args.tau
        if args.tau0 is not None:
            kw["tau0"] = args.tau0
        print(f"{args.scheme} {scheme_samples(args.eta, args.scheme, **kw)}")
        printed = True
    if not printed:
        raise ConfigError("give --delta and/or --eta")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override sampling.seed")
    common.add_argument("--workers", type=int, default=default_workers(), help="worker processes")
    common.add_argument("--out-dir", default=None, help=f"output directory (default: config, then ${OUT_DIR_ENV})")
    common.add_argument("--emit-plots", action="store_true", help="also write gnuplot scripts")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="iterqpe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("simulate", cmd_simulate, "run one configuration"),
        ("sweep", cmd_sweep, "run every point of a sweep axis"),
        ("spectrum", cmd_spectrum, "channel eigenvalues and metastable window"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("config")
        p.set_defaults(func=fn)
    p = sub.add_parser("samplesize", parents=[common], help="Hoeffding sample counts")
    p.add_argument("--delta", type=float, help="frequency tolerance")
    p.add_argument("--eps", type=float, default=0.05, help="failure probability")
    p.add_argument("--eta", type=float, help="target eigenvalue error")
    p.add_argument("--scheme", choices=["repetitive", "adaptive"])
    p.add_argument("--m", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--tau0", type=float)
    p.set_defaults(func=cmd_samplesize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IterQPEError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
