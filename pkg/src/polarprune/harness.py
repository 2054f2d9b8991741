"""Seeded Monte Carlo FER / complexity sweeps and report emission."""
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import BIAWGN, ebn0_to_sigma, frame_streams, transmit
from .codec import assemble_source, make_info_bits, polar_encode
from .decoder import ListDecoder, decode_sc
from .errors import ConfigurationError
from .pruning import Off, calibrate_static, save_static_table

DECODERS = ("sc", "scl", "cascl")
CSV_FIELDS = ("ebn0_db", "frames", "frame_errors", "fer", "fer_ci95", "mean_metric_recursions",
              "mean_path_copies", "mean_pruned_paths", "mean_pde")


def make_frame(spec, channel, master_seed, frame_index):
    """Payload, source word and channel observation of one frame."""
    rng_payload, rng_noise = frame_streams(master_seed, frame_index)
    payload = rng_payload.integers(0, 2, spec.payload_length, dtype=np.uint8)
    u = assemble_source(spec, make_info_bits(spec, payload))
    obs = transmit(polar_encode(u), channel, rng_noise)
    return payload, u, obs


@dataclass
class SimConfig:
    spec: object
    decoder: str = "cascl"
    list_size: int = 8
    prune: object = field(default_factory=Off)
    ebn0_db: tuple = (1.5,)
    master_seed: int | list = 0
    max_frames: int = 10_000
    min_frame_errors: int = 100
    workers: int = 1
    batch_size: int = 200
    keep_frames: bool = False

    def validate(self):
        if self.decoder not in DECODERS:
            raise ConfigurationError(f"decoder must be one of {DECODERS}")
        if self.decoder == "cascl" and self.spec.crc is None:
            raise ConfigurationError("CA-SCL needs a code with a CRC")
        if self.decoder == "sc" and self.prune.kind != 0:
            raise ConfigurationError("pruning applies to list decoders only")
        if self.max_frames < 1 or self.min_frame_errors < 1:
            raise ConfigurationError("max_frames and min_frame_errors must be >= 1")
        if self.list_size < 1 or self.workers < 1 or self.batch_size < 1:
            raise ConfigurationError("list_size, workers and batch_size must be >= 1")


@dataclass
class PointStats:
    ebn0_db: float
    frames: int
    frame_errors: int
    sum_metric_recursions: int
    sum_path_copies: int
    sum_sort_operations: int
    sum_pruned_paths: int
    sum_pde: float
    frame_errors_mask: np.ndarray | None = None
    frame_counters: np.ndarray | None = None

    @property
    def fer(self):
        return self.frame_errors / self.frames

    @property
    def fer_ci95(self):
        p = self.fer
        return 1.96 * math.sqrt(p * (1.0 - p) / self.frames)

    @property
    def mean_metric_recursions(self):
        return self.sum_metric_recursions / self.frames

    @property
    def mean_path_copies(self):
        return self.sum_path_copies / self.frames

    @property
    def mean_sort_operations(self):
        return self.sum_sort_operations / self.frames

    @property
    def mean_pruned_paths(self):
        return self.sum_pruned_paths / self.frames

    @property
    def mean_pde(self):
        return self.sum_pde / self.frames

    def row(self):
        return {k: getattr(self, k) for k in CSV_FIELDS}


def _run_batch(spec, decoder, L, prune, sigma, seed, start, stop):
    """Per-frame (error, counters, pde) for frames [start, stop)."""
    channel = BIAWGN(sigma)
    count = stop - start
    errors = np.zeros(count, dtype=np.bool_)
    counters = np.zeros((count, 4), dtype=np.int64)
    pde = np.zeros(count)
    dec = None
    if decoder != "sc":
        dec = ListDecoder(spec, L, prune, use_crc=decoder == "cascl")
    for j, f in enumerate(range(start, stop)):
        payload, _, obs = make_frame(spec, channel, seed, f)
        out = decode_sc(spec, obs) if dec is None else dec.decode(obs.llr)
        errors[j] = not np.array_equal(out.payload, payload)
        counters[j] = out.counters.as_tuple()
        pde[j] = out.pde
    return errors, counters, pde


def _point_seed(master_seed, point_index):
    # master_seed may itself be an entropy list, e.g. [seed, run]
    base = [int(v) for v in np.atleast_1d(master_seed)]
    return base + [int(point_index)]


def run_point(config, ebn0_db, point_index=0, executor=None):
    sigma = ebn0_to_sigma(ebn0_db, config.spec.rate)
    seed = _point_seed(config.master_seed, point_index)
    args = (config.spec, config.decoder, config.list_size, config.prune, sigma, seed)
    starts = list(range(0, config.max_frames, config.batch_size))
    errs, ctrs, pdes = [], [], []
    n_err = 0

    def consume(result):
        nonlocal n_err
        e, c, p = result
        # cut at the exact frame that reaches the error target
        cum = n_err + np.cumsum(e)
        hit = np.flatnonzero(cum >= config.min_frame_errors)
        if len(hit):
            stop = hit[0] + 1
            e, c, p = e[:stop], c[:stop], p[:stop]
        errs.append(e)
        ctrs.append(c)
        pdes.append(p)
        n_err += int(e.sum())
        return n_err >= config.min_frame_errors

    if executor is None:
        for s in starts:
            if consume(_run_batch(*args, s, min(s + config.batch_size, config.max_frames))):
                break
    else:
        window = 2 * config.workers
        pending = []
        it = iter(starts)
        done = False
        for s in it:
            pending.append(executor.submit(_run_batch, *args, s,
                                           min(s + config.batch_size, config.max_frames)))
            if len(pending) >= window:
                break
        while pending and not done:
            fut = pending.pop(0)
            done = consume(fut.result())
            if not done:
                s = next(it, None)
                if s is not None:
                    pending.append(executor.submit(_run_batch, *args, s,
                                                   min(s + config.batch_size, config.max_frames)))
        for fut in pending:
            fut.cancel()

    e = np.concatenate(errs)
    c = np.concatenate(ctrs)
    p = np.concatenate(pdes)
    stats = PointStats(
        ebn0_db=float(ebn0_db), frames=len(e), frame_errors=int(e.sum()),
        sum_metric_recursions=int(c[:, 0].sum()), sum_path_copies=int(c[:, 1].sum()),
        sum_sort_operations=int(c[:, 2].sum()), sum_pruned_paths=int(c[:, 3].sum()),
        sum_pde=float(math.fsum(p)),
    )
    if config.keep_frames:
        stats.frame_errors_mask = e
        stats.frame_counters = c
    return stats


def run_fer_sweep(config):
    """One PointStats per Eb/N0 value; identical for any worker count."""
    config.validate()
    if config.workers == 1:
        return [run_point(config, eb, k) for k, eb in enumerate(config.ebn0_db)]
    with ProcessPoolExecutor(max_workers=config.workers) as ex:
        return [run_point(config, eb, k, ex) for k, eb in enumerate(config.ebn0_db)]


def run_calibration(spec, ebn0_db, L, n_frames, seed, out_path=None, use_crc=True):
    """Calibrate a static table at one Eb/N0 and optionally write it to ``out_path``."""
    sigma = ebn0_to_sigma(ebn0_db, spec.rate)
    table, n_correct = calibrate_static(spec, BIAWGN(sigma), L, n_frames, seed, use_crc=use_crc)
    doc = None
    if out_path is not None:
        doc = save_static_table(out_path, table.alpha, code_hash=spec.digest(), L=L,
                                sigma=sigma, n_frames=n_frames)
    return table, n_correct, doc


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def report_csv(stats):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for s in stats:
        row = s.row()
        w.writerow([_fmt(row[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def report_json(stats):
    return json.dumps({"fields": list(CSV_FIELDS), "points": [s.row() for s in stats]},
                      indent=1, sort_keys=False)


def emit_report(stats, csv_path=None, json_path=None):
    """Write the sweep as CSV and/or JSON; returns the (csv, json) texts."""
    text_csv, text_json = report_csv(stats), report_json(stats)
    if csv_path is not None:
        with open(csv_path, "w") as fh:
            fh.write(text_csv)
    if json_path is not None:
        with open(json_path, "w") as fh:
            fh.write(text_json)
    return text_csv, text_json
