"""Command line entry point: ``cfpilot run|sweep|overhead|report``."""
import argparse
import itertools
import os
import sys

from . import airlink
from .config import load_config, parse_overrides
from .errors import InfeasibleError, InvalidConfig
from .harness import (load_records, output_root, relative_runtimes, report,
                      run_scenario, write_results)


def _print_summary(name, s):
    f = s["final_sum_mse"]
    line = f"{name}: {s['algorithm']} sum-MSE {f['mean']:.4f} +/- {f['std']:.4f} (n={s['replicas']})"
    if "sum_se_ul" in s:
        line += f"  SE UL {s['sum_se_ul']['mean']:.2f} DL {s['sum_se_dl']['mean']:.2f}"
    line += f"  runtime {s['runtime_s']['mean']:.3f}s"
    print(line)


def cmd_run(args):
    cfg = load_config(args.config)
    if args.replicas:
        cfg = cfg.with_overrides(replicas=args.replicas)
    records = run_scenario(cfg)
    directory = write_results(cfg, records, args.out)
    _print_summary(cfg.name, report(records, cfg.ma_window))
    print(f"results in {directory}")
    return 0


def _parse_vary(items):
    grid = []
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise InvalidConfig(key or "<vary>", "expected key=v1,v2,...")
        grid.append((key.strip(), [v.strip() for v in values.split(",")]))
    return grid


def cmd_sweep(args):
    base = load_config(args.config)
    if args.replicas:
        base = base.with_overrides(replicas=args.replicas)
    grid = _parse_vary(args.vary)
    keys = [k for k, _ in grid]
    root = args.out or os.path.join(output_root(base), base.name)
    rows = []
    for combo in itertools.product(*[v for _, v in grid]):
        kw = parse_overrides(dict(zip(keys, combo)))
        label = ",".join(f"{k}={v}" for k, v in zip(keys, combo))
        cfg = base.with_overrides(name=f"{base.name}[{label}]", **kw)
        records = run_scenario(cfg)
        write_results(cfg, records, os.path.join(root, label.replace(",", "_")))
        s = report(records, cfg.ma_window)
        _print_summary(label, s)
        rows.append((combo, s))
    # relative runtimes along the first varied key, per remaining combination
    if grid and len(grid[0][1]) > 1:
        rest = {}
        for combo, s in rows:
            try:
                p = float(combo[0])
            except ValueError:
                continue
            rest.setdefault(combo[1:], []).append((p, s["runtime_s"]["mean"]))
        for others, pts in rest.items():
            rel = relative_runtimes(pts)
            tag = ",".join(f"{k}={v}" for k, v in zip(keys[1:], others))
            print(f"relative runtime vs {keys[0]} {tag}: "
                  + ", ".join(f"{p:g}:{r:.2f}" for p, r in rel))
    return 0


def cmd_overhead(args):
    cfg = load_config(args.config)
    du, ru = airlink.overhead_table(cfg.pilot_length, cfg.num_users, cfg.num_rus, cfg.num_dus,
                                    cfg.cluster_size, cfg.fronthaul_bits, cfg.rt_per_near_rt)
    print(f"T_p={cfg.pilot_length} K={cfg.num_users} M={cfg.num_rus} U={cfg.num_dus} "
          f"cluster={cfg.cluster_size} B={cfg.fronthaul_bits} N_n={cfg.rt_per_near_rt}")
    print(f"DU-based: {du} bits per near-RT loop")
    print(f"RU-based: {ru} bits per near-RT loop")
    return 0


def cmd_report(args):
    found = False
    for dirpath, _, files in sorted(os.walk(args.dir)):
        if "summary.json" in files and "sum_mse.csv" in files:
            summary, records = load_records(dirpath)
            window = summary["config"]["ma_window"]
            _print_summary(os.path.relpath(dirpath, args.dir), report(records, window))
            found = True
    if not found:
        print(f"no results under {args.dir}", file=sys.stderr)
        return 1
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="cfpilot", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run every replica of a scenario")
    r.add_argument("config")
    r.add_argument("--replicas", type=int, help="override the replica count")
    r.add_argument("--out", help="result directory (default: <output_dir>/<name>)")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="run a scenario over a grid of overrides")
    s.add_argument("config")
    s.add_argument("--vary", action="append", required=True, metavar="KEY=V1,V2,...")
    s.add_argument("--replicas", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    o = sub.add_parser("overhead", help="signalling bits per near-RT loop")
    o.add_argument("config")
    o.set_defaults(func=cmd_overhead)
    rp = sub.add_parser("report", help="summarise result directories")
    rp.add_argument("dir")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as e:
        print(f"invalid config ({e.field}): {e}", file=sys.stderr)
        return 2
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return 3
