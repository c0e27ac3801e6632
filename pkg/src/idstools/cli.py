"""Command-line runner: ``idstools --config exp.json [--out DIR] [--seed S] [--threads T]``.

Outputs land in ``<out>/<command>-<seed>/``. Files are written to a scratch
directory first and moved into place only after the whole run succeeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
import tempfile
import time
from pathlib import Path
from typing import Any

from . import __version__, ergodic
from .config import ExperimentConfig, build_colouring, parse_config
from .errors import ConfigError, NumericalError, ResourceCapError
from .lattice import GroupChoice, estimate_frequencies, origin_cube

log = logging.getLogger("idstools")

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_NUMERICAL = 0, 2, 3, 4


def _f(x: float) -> str:
    return format(float(x), ".17g")


class _Writer:
    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, str] = {}

    def text(self, name: str, body: str):
        data = body.encode()
        (self.root / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()


def _curve(w: _Writer, side: int, curve: ergodic.IdsCurve):
    w.text(f"curve-M{side}.csv", curve.to_csv())


def _jumps_csv(jl) -> str:
    return "lambda,height\n" + "".join(f"{_f(j.location)},{_f(j.height)}\n" for j in jl)


def _execute(cfg: ExperimentConfig, w: _Writer) -> dict[str, Any]:
    """Run the estimator for ``cfg.command``; returns the measured results for the manifest."""
    cmd = cfg.command
    res: dict[str, Any] = {}
    timings: dict[str, float] = {}
    res["wall_seconds"] = timings

    if cmd == "frequencies":
        model = cfg.model() if (cfg.combinatorial or cfg.quantum) else None
        if cfg.colouring is not None:
            col = build_colouring(cfg.colouring, cfg.d, cfg.seed, "$.colouring")
        elif isinstance(model, ergodic.CombinatorialModel):
            col = model.colouring
        else:
            col = model.bc.colouring
        t0 = time.perf_counter()
        table = estimate_frequencies(col, origin_cube(cfg.d, cfg.window_side), cfg.pattern_side,
                                     GroupChoice(cfg.group), workers=cfg.threads)
        timings["frequencies"] = time.perf_counter() - t0
        w.text("frequencies.csv", "pattern,count\n" + "".join(ln + "\n" for ln in table.to_lines()))
        res["distinct_patterns"] = len(table)
        res["windows"] = table.total
        if model is not None:
            t0 = time.perf_counter()
            curve = ergodic.pattern_estimator(model, table, cfg.window)
            timings["pattern_estimator"] = time.perf_counter() - t0
            _curve(w, cfg.pattern_side, curve)
        return res

    model = cfg.model()
    if cmd in ("ids-comb", "ids-quantum", "ids-lengths"):
        for side in cfg.sides:
            t0 = time.perf_counter()
            curve = ergodic.finite_volume_ids(model, cfg.seed, side, cfg.window)
            timings[f"M{side}"] = time.perf_counter() - t0
            _curve(w, side, curve)
        return res

    if cmd == "converge":
        rep = ergodic.convergence_report(model, cfg.sides, cfg.seed, cfg.window, cfg.weighted)
        # repeated sides give identical curves and would share a file name
        for side, curve in dict(zip(rep.sides, rep.curves)).items():
            _curve(w, side, curve)
        w.text("report.csv", rep.to_csv())
        res["distances"] = rep.distances
        if cfg.weighted:
            res["weighted_distances"] = rep.weighted
        timings.update({f"M{r.side}": r.seconds for r in rep.rows})
        return res

    if cmd == "jumps":
        jl = []
        for side in cfg.sides:
            t0 = time.perf_counter()
            curve = ergodic.finite_volume_ids(model, cfg.seed, side, cfg.window)
            timings[f"M{side}"] = time.perf_counter() - t0
            _curve(w, side, curve)
            jl = ergodic.detect_jumps(curve, cfg.min_height)
        # the jump table belongs to the largest side
        w.text("jumps.csv", _jumps_csv(jl))
        res["jumps"] = [[j.location, j.height] for j in jl]
        return res

    if cmd == "shubin":
        t0 = time.perf_counter()
        curve = ergodic.shubin_pastur_mc(model, cfg.cell, cfg.r_buf, cfg.samples, cfg.seed, cfg.window)
        timings["shubin"] = time.perf_counter() - t0
        _curve(w, cfg.cell, curve)
        return res

    raise ConfigError(f"$.command: unknown command {cmd!r}")


def run(cfg: ExperimentConfig, out: str | Path | None = None) -> dict[str, Any]:
    """Execute ``cfg`` and write outputs plus ``manifest.json``; returns the manifest."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    final = out / f"{cfg.command}-{'none' if cfg.seed is None else cfg.seed}"
    scratch = Path(tempfile.mkdtemp(prefix=".partial-", dir=out))
    try:
        w = _Writer(scratch)
        t0 = time.perf_counter()
        results = _execute(cfg, w)
        manifest = {
            "version": __version__,
            "config": cfg.echo(),
            "files": dict(sorted(w.files.items())),
            "results": results,
            "total_seconds": time.perf_counter() - t0,
        }
        (scratch / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if final.exists():
            shutil.rmtree(final)
        scratch.rename(final)
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    manifest["directory"] = str(final)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idstools", description="Integrated density of states experiments.")
    p.add_argument("--config", required=True, help="JSON experiment file")
    p.add_argument("--out", default=None, help="output root (default: config 'out' or ./results)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="worker hint; never changes results")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config, args.seed, args.threads)
        manifest = run(cfg, args.out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except ResourceCapError as exc:
        log.error("resource cap: %s", exc)
        return EXIT_CAP
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    log.info("wrote %s", manifest["directory"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
