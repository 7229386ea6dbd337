"""Command-line entry point: ``emsniff {full-scan,sniff,attack,budget}``.

Every report embeds the scenario, the seed and the parsed flags, so a run
can be replayed from its own output. Exit status: 0 success, 2 key not
disclosed within the trace cap, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, budget, containers, pipeline
from .attack import DEFAULT_STRIDE
from .calibrate import calibrate
from .device import PRESETS, config_to_dict, load_scenario
from .search import SearchParams, effective_step_mm

EXIT_OK, EXIT_ERROR, EXIT_NOT_DISCLOSED = 0, 1, 2

log = logging.getLogger("emsniff")


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; status 2 means "not disclosed"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _cell(text: str) -> tuple[int, int]:
    try:
        i, j = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected i,j, got {text!r}") from None
    return i, j


def _scenario(args):
    cfg = load_scenario(args.scenario)
    if getattr(args, "grid", None):
        cfg = cfg.with_resolution(args.grid)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _flags(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _envelope(args, cfg, body: dict) -> dict:
    return {"tool": f"emsniff {__version__}", "command": args.command, "seed": cfg.seed,
            "flags": _flags(args), "scenario": config_to_dict(cfg), **body}


def _emit(args, report: dict, name: str = "report.json") -> None:
    text = json.dumps(_jsonable(report), indent=2)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n")
        print(f"wrote {out / name}")
    else:
        print(text)


# -- commands -------------------------------------------------------------------

def cmd_full_scan(args) -> int:
    cfg = _scenario(args)
    backend, close = (None, lambda: None)
    if args.backend != "sim":
        backend, close = pipeline.make_backend(cfg, cfg.seed, args.backend)
    try:
        res = pipeline.full_scan(cfg, args.measure, args.traces_per_measure, cfg.seed, args.jobs,
                                 args.stride, backend)
    finally:
        close()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        containers.write_heatmap_csv(out / "heatmap.csv", res.values)
        containers.write_heatmap_pgm(out / "heatmap.pgm", res.values)
    summary = res.summary()
    summary["true_snr_max"] = float(cfg.snr_map().max())
    _emit(args, _envelope(args, cfg, {"summary": summary}))
    return EXIT_OK


def _search_params(args) -> SearchParams:
    return SearchParams(
        initial_grid_size=args.init_grid,
        step_size_cells=args.step_cells,
        max_iterations=args.max_iterations,
        no_improve_limit=args.no_improve,
        measure=args.measure,
    )


def cmd_sniff(args) -> int:
    cfg = _scenario(args)
    params = _search_params(args)
    backend, close = pipeline.make_backend(cfg, cfg.seed, args.backend)
    try:
        res = pipeline.sniff(cfg, params, args.traces_per_measure, args.cema_cap, cfg.seed, backend, args.stride)
    finally:
        close()
    body = res.to_dict()
    body["effective_step_mm"] = effective_step_mm(params.step_size_cells, cfg.n, cfg.geometry.side_length_mm)
    body["true_snr_at_best"] = float(cfg.snr_map()[res.search.best_cell])
    body["true_snr_max"] = float(cfg.snr_map().max())
    _emit(args, _envelope(args, cfg, body))
    if not res.attack.disclosed:
        log.warning("key not disclosed within %d traces", args.cema_cap)
        return EXIT_NOT_DISCLOSED
    return EXIT_OK


def _write_trajectories(path: Path, result) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["byte_index", "traces"] + [f"k{h:02x}" for h in range(256)])
        for t in result.trajectories:
            for row in t.to_rows():
                w.writerow([t.byte_index, row[0]] + [repr(v) for v in row[1:]])


def cmd_attack(args) -> int:
    cfg = _scenario(args)
    cfg.geometry.check(args.cell)
    backend, close = pipeline.make_backend(cfg, cfg.seed, args.backend)
    try:
        if args.traces:
            res = pipeline.attack_fixed(backend, cfg.key_bytes, args.cell, args.traces, cfg.seed, args.stride)
        else:
            res = pipeline.attack_until_disclosed(backend, cfg.key_bytes, args.cell, cfg.seed, args.cema_cap,
                                                  args.stride)
    finally:
        close()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_trajectories(out / "trajectories.csv", res)
    body = {"cell": list(args.cell), "true_snr": float(cfg.snr_map()[args.cell]), "attack": res.to_dict()}
    _emit(args, _envelope(args, cfg, body))
    return EXIT_OK if res.disclosed else EXIT_NOT_DISCLOSED


def cmd_budget(args) -> int:
    inputs = None
    if args.constants:
        consts = budget.read_constants(args.constants)
    else:
        if args.fit_inputs:
            inputs = budget.read_fit_inputs(args.fit_inputs)
        else:
            snrs = np.logspace(math.log10(args.calib_min), math.log10(args.calib_max), args.calib_points)
            inputs = calibrate(snrs, repeats=args.calib_repeats, seed=args.seed or 0)
        consts = budget.fit_constants(inputs["mtd"], inputs["tvla_cost"], inputs["snr_cost"],
                                      inputs.get("attack_cost"))
    crv = budget.curve(args.grid, consts, args.snr_min, args.snr_max, args.points)
    cross = budget.crossover_snr(args.grid, consts)
    lo = args.snr_min
    report = {
        "tool": f"emsniff {__version__}",
        "command": args.command,
        "seed": args.seed,
        "flags": _flags(args),
        "constants": consts.to_dict(),
        "grid_resolution": args.grid,
        "crossover_snr": cross,
        "ratio_exh_over_tvla_at_snr_min": budget.n_exh(args.grid, lo, consts) / budget.n_scn_tvla(args.grid, lo, consts),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        crv.write_csv(out / "curve.csv")
        budget.write_fit_report(out / "fit_report.json", consts, inputs)
    _emit(args, report, "budget.json")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="emsniff", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, measures=("amplitude", "tvla", "snr")):
        sp.add_argument("--scenario", default="aes8bit",
                        help=f"scenario JSON file or preset ({', '.join(PRESETS)})")
        sp.add_argument("--grid", type=int, help="rescan the scenario at N x N")
        sp.add_argument("--seed", type=int, help="master seed (default: the scenario's)")
        sp.add_argument("--backend", default="sim", help="sim or gcode:<path>")
        sp.add_argument("--out", help="output directory (default: report to stdout)")
        sp.add_argument("--stride", type=int, default=DEFAULT_STRIDE, help="CEMA checkpoint stride")
        if measures:
            sp.add_argument("--measure", choices=measures, default="snr")

    sp = sub.add_parser("full-scan", help="measure every cell")
    common(sp, ("amplitude", "tvla", "snr", pipeline.MTD_MEASURE))
    sp.add_argument("--traces-per-measure", type=int, help="traces per cell")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_full_scan)

    sp = sub.add_parser("sniff", help="search for a leaky cell, then attack it")
    common(sp)
    sp.add_argument("--init-grid", type=int, default=2, help="M for the M x M first phase")
    sp.add_argument("--step-cells", type=float, default=2.8)
    sp.add_argument("--no-improve", type=int, help="default ceil(N/3)")
    sp.add_argument("--max-iterations", type=int, default=100)
    sp.add_argument("--traces-per-measure", type=int)
    sp.add_argument("--cema-cap", type=int, default=100_000)
    sp.set_defaults(func=cmd_sniff)

    sp = sub.add_parser("attack", help="CEMA at a fixed cell")
    common(sp, None)
    sp.add_argument("--cell", type=_cell, required=True, help="i,j")
    sp.add_argument("--traces", type=int, help="fixed trace count (default: until disclosed)")
    sp.add_argument("--cema-cap", type=int, default=100_000)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("budget", help="trace-budget curves")
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--constants", help="constants JSON (or a fit report)")
    src.add_argument("--fit-inputs", help="JSON {mtd, tvla_cost, snr_cost}: {snr: traces}")
    sp.add_argument("--grid", type=int, default=10)
    sp.add_argument("--snr-min", type=float, default=1e-3)
    sp.add_argument("--snr-max", type=float, default=1.0)
    sp.add_argument("--points", type=int, default=50)
    sp.add_argument("--calib-min", type=float, default=0.01)
    sp.add_argument("--calib-max", type=float, default=1.0)
    sp.add_argument("--calib-points", type=int, default=5)
    sp.add_argument("--calib-repeats", type=int, default=5)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_budget)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"emsniff: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
