"""Command-line front end.

Commands: gen-lut, simulate, sweep, tradeoff, lut-inspect. Every command
writing outputs also writes a manifest that can be passed back as
``--config`` to reproduce them.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .channel import TabulatedBler, lattice
from .config import build_oracle, build_table, load_config, session_config, snr_grid
from .errors import (
    ConfigError,
    EmptyCandidates,
    LinkAdaptationError,
    MissingGridRow,
    NonConvergence,
    NonTermination,
    ParseError,
)
from .lut import Lut, brute_force_optimal, build_lut, classify_qos, initialize_exploratory
from .simulator import Mode, is_nonincreasing, run_session, run_sweep, tradeoff_csv, tradeoff_curve

log = logging.getLogger("nbiot_la")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONTERMINATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_manifest(out: Path, command: str, cfg: dict, outputs: list[str]) -> Path:
    manifest = {
        "manifest_version": 1,
        "tool": "nbiot-la",
        "version": __version__,
        "command": command,
        "output_dir": str(out),
        "base_seed": cfg["session"]["seed"],
        "outputs": outputs,
        "config": cfg,
    }
    path = out / f"manifest-{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _apply_overrides(cfg: dict, args) -> dict:
    session, strategy = cfg["session"], cfg["strategy"]
    pairs = [
        ("seed", session, "seed"),
        ("snr", session, "true_snr"),
        ("blocks", session, "n_blocks"),
        ("mode", session, "mode"),
        ("bler_t", session, "bler_t"),
        ("snr_noise_std", session, "snr_noise_std"),
        ("strategy", strategy, "name"),
        ("realizations", cfg["sweep"], "realizations"),
        ("lut", cfg["lut"], "path"),
        ("method", cfg["lut"], "method"),
    ]
    for attr, section, key in pairs:
        value = getattr(args, attr, None)
        if value is not None:
            section[key] = value
    return cfg


def _load_lut(cfg: dict, oracle, table) -> Lut:
    """LUT from ``lut.path``, or pre-calculated from the oracle when no path is set."""
    lut_cfg = cfg["lut"]
    if lut_cfg["path"] is not None:
        path = Path(lut_cfg["path"])
        if not path.exists():
            raise UsageError(f"LUT file {path} not found (needed by the luts strategy)")
        return Lut.load(path, lut_cfg["snr_step_db"], table)
    lut, _ = build_lut(oracle, lut_cfg["tbs"], snr_grid(lut_cfg), lut_cfg["bler_targets"],
                       lut_cfg["snr_step_db"], table)
    return lut


def _oracle_gaps(oracle, lut_cfg: dict, itbs_max: int) -> list[tuple[int, int, int]]:
    if not isinstance(oracle, TabulatedBler):
        return []
    return [
        (tbs, p.itbs, p.nr)
        for tbs in lut_cfg["tbs"]
        for p in lattice(itbs_max)
        if not oracle.has_curve(tbs, p)
    ]


def cmd_gen_lut(cfg: dict, out: Path) -> int:
    oracle, table = build_oracle(cfg), build_table(cfg)
    lut_cfg = cfg["lut"]
    itbs_max = cfg["session"]["itbs_max"]
    gaps = _oracle_gaps(oracle, lut_cfg, itbs_max)
    if gaps:
        print("oracle has no BLER curve for (tbs, itbs, nr):", file=sys.stderr)
        for gap in gaps:
            print(f"  {gap}", file=sys.stderr)
        return EXIT_DATA
    grid = snr_grid(lut_cfg)
    if not grid or not lut_cfg["tbs"] or not lut_cfg["bler_targets"]:
        log.warning("empty LUT grid; writing an empty LUT")
    if lut_cfg["method"] == "brute-force":
        lut, unreachable = build_lut(oracle, lut_cfg["tbs"], grid, lut_cfg["bler_targets"],
                                     lut_cfg["snr_step_db"], table)
    elif lut_cfg["method"] == "exploratory":
        lut = Lut(lut_cfg["snr_step_db"], table)
        keys, unreachable = [], []
        probe = Lut(lut_cfg["snr_step_db"], table)
        for tbs in lut_cfg["tbs"]:
            for snr in grid:
                for bler_t in lut_cfg["bler_targets"]:
                    key = probe.key(tbs, snr, bler_t)
                    try:
                        brute_force_optimal(oracle, tbs, key.snr_q, bler_t, table, itbs_max)
                        keys.append(key)
                    except EmptyCandidates:
                        unreachable.append(key)
        stream = [(k.tbs, k.snr_q, k.bler_t) for k in keys] * lut_cfg["exploratory_repeats"]
        st = cfg["strategy"]
        fallback = st["name"] if st["name"] != "luts" else "itbs-nr"
        initialize_exploratory(lut, oracle, stream, fallback, seed=cfg["session"]["seed"],
                               target_keys=keys, itbs_max=itbs_max, window=st["window"],
                               min_samples=st["min_samples"], tolerance=st["tolerance"], fixed_nr=st["fixed_nr"])
    else:
        raise UsageError(f"unknown lut.method {lut_cfg['method']!r}")
    for key in unreachable:
        log.warning("target BLER %s unreachable at tbs=%s snr=%s", key.bler_t, key.tbs, key.snr_q)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "lut.csv"
    text = lut.dumps()
    path.write_text(text)
    _write_manifest(out, "gen-lut", cfg, [path.name])
    print(f"wrote {len(lut)} rows ({len(text.encode())} bytes) to {path}")
    return EXIT_OK


def cmd_simulate(cfg: dict, out: Path) -> int:
    oracle, table = build_oracle(cfg), build_table(cfg)
    scfg = session_config(cfg)
    lut = _load_lut(cfg, oracle, table) if scfg.strategy == "luts" else None
    result = run_session(scfg, oracle, lut, table)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trace.csv"
    path.write_text(result.trace_csv())
    _write_manifest(out, "simulate", cfg, [path.name])
    print(f"strategy={scfg.strategy} mode={scfg.mode} snr={scfg.true_snr} "
          f"losses={result.losses_pct:.2f}% total_rus={result.total_rus} "
          f"retransmissions={result.retransmissions} performance={result.performance:.6g}")
    return EXIT_OK


def cmd_sweep(cfg: dict, out: Path, jobs: int = 1) -> int:
    oracle, table = build_oracle(cfg), build_table(cfg)
    sweep = cfg["sweep"]
    base = session_config(cfg)
    lut = _load_lut(cfg, oracle, table) if "luts" in sweep["strategies"] else None
    out.mkdir(parents=True, exist_ok=True)
    outputs, failures = [], []
    for mode in sweep["modes"]:
        mode = Mode.parse(mode).value
        name = f"sweep_{mode}.csv"
        try:
            result = run_sweep(replace(base, mode=mode), sweep["snrs"],
                               sweep["strategies"], sweep["realizations"], oracle, lut, table, jobs)
        except LinkAdaptationError as exc:
            failures.append((mode, exc))
            continue
        (out / name).write_text(result.to_csv())
        outputs.append(name)
        print(f"[{mode}] {'snr':>6} {'strategy':<8} {'losses%':>9} {'RUs':>12} {'P':>12}")
        for (snr, strategy), m in sorted(result.cells.items()):
            print(f"[{mode}] {snr:>6} {strategy:<8} {m['losses_pct'].mean:>9.3f} "
                  f"{m['total_rus'].mean:>12.1f} {m['performance'].mean:>12.4g}")
    _write_manifest(out, "sweep", cfg, outputs)
    for mode, exc in failures:
        print(f"sweep failed in {mode} mode: {exc}", file=sys.stderr)
    if failures:
        raise failures[0][1]
    return EXIT_OK


def cmd_tradeoff(cfg: dict, out: Path) -> int:
    oracle, table = build_oracle(cfg), build_table(cfg)
    tcfg = cfg["tradeoff"]
    session = cfg["session"]
    points = []
    for mode in tcfg["modes"]:
        curve = tradeoff_curve(oracle, session["tbs"], tcfg["snrs"], tcfg["loss_grid"], mode, table,
                               session["itbs_max"], session["harq_discount"], tcfg["max_attempts"],
                               tcfg["loss_tolerance"])
        points.extend(curve)
        for snr in tcfg["snrs"]:
            reach = [p.rus for p in curve if p.snr == float(snr) and p.reachable]
            missing = sum(1 for p in curve if p.snr == float(snr) and not p.reachable)
            if missing:
                log.warning("%s mode, snr=%s: %d loss levels unreachable", mode, snr, missing)
            if reach and not is_nonincreasing(reach):
                log.warning("%s mode, snr=%s: curve not monotone", mode, snr)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "tradeoff.csv"
    path.write_text(tradeoff_csv(points))
    _write_manifest(out, "tradeoff", cfg, [path.name])
    print(f"wrote {len(points)} points to {path}")
    return EXIT_OK


def cmd_lut_inspect(cfg: dict, args) -> int:
    table = build_table(cfg)
    path = cfg["lut"]["path"]
    if path is None:
        raise UsageError("lut-inspect needs --lut or lut.path")
    if not Path(path).exists():
        raise UsageError(f"LUT file {path} not found")
    lut = Lut.load(path, cfg["lut"]["snr_step_db"], table)
    print(f"{'tbs':>5} {'snr_db':>7} {'bler_t':>9} {'qos':<5} {'itbs':>4} {'nr':>4} {'rus':>5} {'bler':>10}")
    shown = 0
    for key, entry in lut:
        if args.tbs is not None and key.tbs != args.tbs:
            continue
        if args.snr_min is not None and key.snr_q < args.snr_min:
            continue
        if args.snr_max is not None and key.snr_q > args.snr_max:
            continue
        print(f"{key.tbs:>5} {key.snr_q:>7g} {key.bler_t:>9.5g} {classify_qos(key.bler_t).value:<5} "
              f"{entry.itbs:>4} {entry.nr:>4} {entry.rus:>5} {entry.bler:>10.4g}")
        shown += 1
    print(f"{shown} of {len(lut)} rows")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nbiot-la", description="NB-IoT NPUSCH link-adaptation simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, outputs=True):
        p.add_argument("--config", help="JSON config or run manifest (default: $NBIOT_LA_CONFIG)")
        p.add_argument("--seed", type=int)
        p.add_argument("--lut", help="LUT CSV path")
        if outputs:
            p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = common(sub.add_parser("gen-lut", help="build a LUT from the configured oracle"))
    p.add_argument("--method", choices=["brute-force", "exploratory"])

    p = common(sub.add_parser("simulate", help="run one session and write its trace"))
    p.add_argument("--strategy")
    p.add_argument("--snr", type=float)
    p.add_argument("--blocks", type=int)
    p.add_argument("--mode", choices=["unack", "ack"])
    p.add_argument("--bler-t", type=float, dest="bler_t")
    p.add_argument("--snr-noise-std", type=float, dest="snr_noise_std")

    p = common(sub.add_parser("sweep", help="reference-protocol sweep over SNRs and strategies"))
    p.add_argument("--realizations", type=int)
    p.add_argument("--jobs", type=int, default=1)

    common(sub.add_parser("tradeoff", help="RU cost vs block-loss curves"))

    p = common(sub.add_parser("lut-inspect", help="print LUT rows"), outputs=False)
    p.add_argument("--tbs", type=int)
    p.add_argument("--snr-min", type=float, dest="snr_min")
    p.add_argument("--snr-max", type=float, dest="snr_max")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "gen-lut":
            return cmd_gen_lut(cfg, Path(args.out))
        if args.command == "simulate":
            return cmd_simulate(cfg, Path(args.out))
        if args.command == "sweep":
            return cmd_sweep(cfg, Path(args.out), args.jobs)
        if args.command == "tradeoff":
            return cmd_tradeoff(cfg, Path(args.out))
        return cmd_lut_inspect(cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"nbiot-la: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonTermination, NonConvergence) as exc:
        print(f"nbiot-la: {exc}", file=sys.stderr)
        return EXIT_NONTERMINATION
    except (ParseError, MissingGridRow, EmptyCandidates, LinkAdaptationError, OSError) as exc:
        print(f"nbiot-la: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
