"""Command line front end: construct, calibrate, budget, simulate."""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import ebn0_to_sigma
from .construction import CRC16_CCITT_FALSE, CodeSpec, CRCDef, construct, profile_for
from .errors import ConfigurationError
from .harness import SimConfig, emit_report, run_calibration, run_fer_sweep
from .pruning import (Dynamic, MaxRatioBaseline, Off, llr_budget, load_budget, load_static_table,
                      save_budget)

log = logging.getLogger("polarprune")


def parse_crc(text):
    """'ccitt16', 'none', or 'poly:init:xorout' with the polynomial's leading term included."""
    text = text.strip().lower()
    if text == "ccitt16":
        return CRC16_CCITT_FALSE
    if text == "none":
        return None
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--crc expects ccitt16, none or poly:init:xorout")
    try:
        poly, init, xor_out = (int(p, 0) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad CRC field: {exc}") from None
    width = poly.bit_length() - 1
    if width < 1:
        raise argparse.ArgumentTypeError("CRC polynomial needs degree >= 1")
    mask = (1 << width) - 1
    if init > mask or xor_out > mask:
        raise argparse.ArgumentTypeError("CRC init/xorout wider than the polynomial")
    return CRCDef(poly=poly & mask, width=width, init=init, xor_out=xor_out)


def parse_range(text):
    """'start:step:stop' (inclusive) or a single value."""
    parts = [float(p) for p in text.split(":")]
    if len(parts) == 1:
        return (parts[0],)
    if len(parts) != 3 or parts[1] <= 0:
        raise argparse.ArgumentTypeError("--ebn0 expects start:step:stop with step > 0")
    start, step, stop = parts
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + k * step, 10) for k in range(max(count, 0)))


def _code_args(p):
    p.add_argument("--n", type=int, default=10, help="log2 of the block length")
    p.add_argument("--k", type=int, default=512, help="information bits including CRC")
    p.add_argument("--crc", type=parse_crc, default=CRC16_CCITT_FALSE,
                   help="ccitt16 | none | poly:init:xorout")
    p.add_argument("--design-ebn0", type=float, default=1.5,
                   help="Eb/N0 (dB) for the Gaussian-approximation construction")
    p.add_argument("--code", type=Path, help="CodeSpec JSON from 'construct' (overrides --n/--k)")


def _load_code(args):
    if args.code is not None:
        return CodeSpec.from_json(json.loads(args.code.read_text()))
    spec, _ = construct(args.n, args.k, design_ebn0_db=args.design_ebn0, crc=args.crc)
    return spec


def _write(text, out):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)


def cmd_construct(args):
    spec = _load_code(args)
    _write(json.dumps(spec.to_json(), indent=1), args.out)
    log.info("N=%d K=%d digest %s", spec.N, spec.K, spec.digest())


def cmd_budget(args):
    spec = _load_code(args)
    p_llr = args.p_llr if args.p_llr is not None else 1e-9 / spec.N
    budgets = llr_budget(profile_for(spec), p_llr)
    if args.out is None:
        doc = {"code_hash": spec.digest(), "p_llr": p_llr, "l": budgets.tolist()}
        _write(json.dumps(doc, indent=1), None)
    else:
        save_budget(args.out, budgets, code_hash=spec.digest(), p_llr=p_llr)


def cmd_calibrate(args):
    spec = _load_code(args)
    if len(args.ebn0) != 1:
        raise ConfigurationError("calibration runs at a single Eb/N0")
    if args.out is None:
        raise ConfigurationError("calibrate needs --out")
    table, n_correct, _ = run_calibration(spec, args.ebn0[0], args.list_size, args.max_frames,
                                          args.seed, out_path=args.out,
                                          use_crc=spec.crc is not None)
    log.info("calibrated on %d correct frames out of %d", n_correct, args.max_frames)


def build_policy(args, spec):
    prune = args.prune
    if prune == "off":
        return Off()
    if prune.startswith("static:"):
        sigma = ebn0_to_sigma(args.ebn0[0], spec.rate) if len(args.ebn0) == 1 else None
        table, _ = load_static_table(prune[len("static:"):], code_hash=spec.digest(),
                                     L=args.list_size, sigma=sigma)
        return table
    if prune == "dynamic" or prune.startswith("dynamic:"):
        if args.p_tol is None:
            raise ConfigurationError("dynamic pruning needs --p-tol")
        if prune.startswith("dynamic:"):
            budgets, doc = load_budget(prune[len("dynamic:"):], code_hash=spec.digest())
            p_llr = doc["p_llr"]
        else:
            p_llr = args.p_llr if args.p_llr is not None else 1e-9 / spec.N
            budgets = llr_budget(profile_for(spec), p_llr)
        return Dynamic(args.p_tol, budgets, p_llr)
    if prune.startswith("baseline:"):
        return MaxRatioBaseline(float(prune[len("baseline:"):]))
    raise ConfigurationError(f"unknown --prune value {prune!r}")


def cmd_simulate(args):
    spec = _load_code(args)
    cfg = SimConfig(spec=spec, decoder=args.decoder, list_size=args.list_size,
                    prune=build_policy(args, spec), ebn0_db=args.ebn0, master_seed=args.seed,
                    max_frames=args.max_frames, min_frame_errors=args.min_errors,
                    workers=args.workers)
    stats = run_fer_sweep(cfg)
    for s in stats:
        log.info("%.2f dB: %d frames, %d errors, FER %.3e, recursions %.1f", s.ebn0_db,
                 s.frames, s.frame_errors, s.fer, s.mean_metric_recursions)
    if args.out is None:
        text, _ = emit_report(stats)
        _write(text, None)
    else:
        out = Path(args.out)
        emit_report(stats, csv_path=out, json_path=out.with_suffix(".json"))


def build_parser():
    ap = argparse.ArgumentParser(prog="polarprune", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", help="emit a CodeSpec as JSON")
    _code_args(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("budget", help="emit per-index LLR budgets")
    _code_args(p)
    p.add_argument("--p-llr", type=float, help="default 1e-9/N")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("calibrate", help="Monte Carlo static threshold table")
    _code_args(p)
    p.add_argument("--list-size", type=int, default=32)
    p.add_argument("--ebn0", type=parse_range, default=(1.5,))
    p.add_argument("--max-frames", type=int, default=100_000, help="frames simulated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="FER / complexity sweep to CSV and JSON")
    _code_args(p)
    p.add_argument("--decoder", choices=("sc", "scl", "cascl"), default="cascl")
    p.add_argument("--list-size", type=int, default=32)
    p.add_argument("--prune", default="off",
                   help="off | static:<file> | dynamic[:<budget file>] | baseline:<beta>")
    p.add_argument("--p-tol", type=float)
    p.add_argument("--p-llr", type=float, help="default 1e-9/N")
    p.add_argument("--ebn0", type=parse_range, default=(1.0, 1.25, 1.5, 1.75, 2.0))
    p.add_argument("--max-frames", type=int, default=100_000)
    p.add_argument("--min-errors", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, help="CSV path; JSON goes next to it")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ConfigurationError, OSError) as exc:
        print(f"polarprune: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
