"""Command line front-end.

Subcommands: gen-screens, stats, run, sweep, monte-carlo. Every
subcommand takes --config (JSON file of ExperimentConfig keys), --seed
(override), --decoder and --out, and exits 0 on success or 1 with a
diagnostic on any module error.
"""

import argparse
from dataclasses import replace
import json
import os
import sys

import numpy as np

from . import harness, screens


def _load_config(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    cfg = harness.ExperimentConfig.from_dict(data)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "decoder", None):
        cfg = replace(cfg, decoder=args.decoder)
    return cfg


def _add_common(parser):
    parser.add_argument("--config", help="JSON file with experiment config keys")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument(
        "--decoder", choices=["mmse", "sic", "both"], default=None
    )
    parser.add_argument("--out", default=".", help="output directory")


def cmd_gen_screens(args):
    cfg = _load_config(args)
    out = harness.ensure_out_dir(args.out)
    base = cfg.screen_config()
    for i in range(args.count):
        seed = screens.sub_seed(base.seed, i)
        sc = replace(base, seed=seed)
        screen = screens.generate_screen(sc)
        screens.write_screen(os.path.join(out, f"screen_{i:04d}.phs"), screen, sc)
    print(f"wrote {args.count} screens to {out}")
    return 0


def cmd_stats(args):
    cfg = _load_config(args)
    out = harness.ensure_out_dir(args.out)
    batch = screens.batch_generate(cfg.screen_config(), args.count)
    pitch = batch[0].pitch
    length = batch[0].physical_length
    seps = np.unique(
        np.round(np.geomspace(5, 0.2 * length / pitch, 12)).astype(int)
    ) * pitch
    rs, d_emp = screens.structure_function(batch, seps)
    d_ref = screens.kolmogorov_structure_function(rs, cfg.fried)
    lines = ["r_m,d_phi,d_phi_kolmogorov,ratio"]
    for r, de, dr in zip(rs, d_emp, d_ref):
        lines.append(f"{r:.10e},{de:.10e},{dr:.10e},{de / dr:.10e}")
    with open(os.path.join(out, "structure_function.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    stats = harness.scintillation_stats(batch, cfg)
    payload = {
        "screens": args.count,
        "fried": cfg.fried,
        "scintillation_index": stats["scintillation_index"],
        "lognormal_mu": stats["lognormal_mu"],
        "lognormal_sigma": stats["lognormal_sigma"],
        "ks_distance": stats["ks_distance"],
    }
    with open(os.path.join(out, "scintillation.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"sigma_I^2 = {stats['scintillation_index']:.4g}, "
        f"KS = {stats['ks_distance']:.3f}"
    )
    return 0


def cmd_run(args):
    cfg = _load_config(args)
    out = harness.ensure_out_dir(args.out)
    reports = harness.run_realization(cfg, realization=args.realization)
    harness.write_run_csv(os.path.join(out, "run.csv"), reports)
    for name in sorted(reports):
        rep = reports[name]
        tag = "<" if rep.error_free else "="
        print(
            f"{name}: avg BER {tag} {rep.ber_bound:.4e}, "
            f"EVM {rep.evm_avg:.2f}%, outage {int(rep.outage)}"
        )
    return 0


def cmd_sweep(args):
    cfg = _load_config(args)
    if args.osnr:
        cfg = replace(cfg, osnr_grid=tuple(args.osnr))
    out = harness.ensure_out_dir(args.out)
    rows = harness.sweep_osnr(cfg)
    harness.write_sweep_csv(os.path.join(out, "sweep.csv"), rows)
    for row in rows:
        print(
            f"OSNR {row['osnr_db']:5.1f} dB {row['decoder']:>4}: "
            f"avg BER {row['ber_bound']:.4e}"
        )
    return 0


def cmd_monte_carlo(args):
    cfg = _load_config(args)
    if args.count is not None:
        cfg = replace(cfg, realizations=args.count)
    out = harness.ensure_out_dir(args.out)
    summary = harness.monte_carlo(cfg)
    harness.write_run_csv(os.path.join(out, "realizations.csv"), summary.reports)
    harness.write_summary(os.path.join(out, "summary.json"), summary)
    harness.write_histogram_csv(os.path.join(out, "histogram.csv"), summary.histogram)
    for name in sorted(summary.averages):
        print(
            f"{name}: ensemble BER {summary.averages[name]:.4e}, "
            f"outage {summary.outage_probability[name]:.3f}"
        )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mdmfso",
        description="Mode-division-multiplexed FSO link simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-screens", help="write turbulence screens to disk")
    _add_common(p)
    p.add_argument("--count", type=int, default=10)
    p.set_defaults(func=cmd_gen_screens)

    p = sub.add_parser("stats", help="structure function and scintillation")
    _add_common(p)
    p.add_argument("--count", type=int, default=120)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("run", help="single link realization")
    _add_common(p)
    p.add_argument("--realization", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="BER vs OSNR on a fixed channel")
    _add_common(p)
    p.add_argument("--osnr", type=float, nargs="+", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("monte-carlo", help="turbulence ensemble")
    _add_common(p)
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(func=cmd_monte_carlo)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
