"""FER and complexity of pruned vs standard CA-SCL at one Eb/N0.

Runs the unpruned decoder until it collects ``--errors`` frame errors, then
replays exactly those frames through the pruned decoders (static table and
dynamic budgets), so every row sees the same noise.
"""
import argparse
import tempfile

from polarprune import Dynamic, Off, SimConfig, construct, llr_budget, run_calibration
from polarprune.harness import run_point


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--k", type=int, default=512)
    ap.add_argument("--ebn0", type=float, default=1.5)
    ap.add_argument("--list-size", type=int, default=32)
    ap.add_argument("--errors", type=int, default=50)
    ap.add_argument("--calib-frames", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    spec, profile = construct(args.n, args.k)
    L = args.list_size

    def point(prune, max_frames, min_errors, lsize=L):
        cfg = SimConfig(spec, "cascl", lsize, prune, (args.ebn0,), args.seed, max_frames,
                        min_errors)
        return run_point(cfg, args.ebn0)

    std = point(Off(), 10**7, args.errors)
    frames = std.frames
    print(f"{frames} frames at {args.ebn0} dB, standard FER {std.fer:.3e}")

    with tempfile.NamedTemporaryFile(suffix=".json") as fh:
        table, n_ok, _ = run_calibration(spec, args.ebn0, L, args.calib_frames, args.seed + 1,
                                         out_path=fh.name)
    budgets = llr_budget(profile, 1e-9 / spec.N)
    rows = [("standard", std), ("standard L=8", point(Off(), frames, frames + 1, 8)),
            (f"static ({n_ok} calib frames)", point(table, frames, frames + 1))]
    for scale in (0.1, 1.0):
        p_tol = scale * std.fer
        rows.append((f"dynamic P_tol={p_tol:.1e}", point(Dynamic(p_tol, budgets), frames,
                                                         frames + 1)))

    base = std.mean_metric_recursions
    print(f"{'policy':<30}{'FER':>11}{'recursions':>12}{'ratio':>8}{'copies':>9}")
    for name, s in rows:
        print(f"{name:<30}{s.fer:>11.3e}{s.mean_metric_recursions:>12.0f}"
              f"{s.mean_metric_recursions / base:>8.3f}{s.mean_path_copies:>9.1f}")


if __name__ == "__main__":
    main()
