"""Experiment orchestration, statistics and result files.

One replica = one random user drop on the shared RU layout, one channel
trajectory and one run of the chosen algorithm. Every random consumer draws
from its own named stream so replicas and algorithms see common random numbers.
"""
from concurrent.futures import ProcessPoolExecutor
import csv
import io
import json
import math
import os
import time

import numpy as np

from . import airlink, baselines
from .agents import GameConfig, PilotGame, RunRecord
from .channel import (ChannelProcess, FadingParams, ShadowingParams, make_track)
from .codesearch import CodebookSearch
from .config import ScenarioConfig
from .errors import InsufficientSamplesError, InvalidInput
from .rng import stream
from .topology import Geometry, build_topology, default_hotspots, place_rus

KMH = 1.0 / 3.6
OUTPUT_ENV = "CFPILOT_OUTPUT_DIR"
BASELINES = ("ra", "es", "tabu", "hungarian")


# ---------------------------------------------------------------------------
# scenario construction


def geometry_of(cfg):
    return Geometry(cfg.area_width_m, cfg.area_height_m, cfg.ru_height_m, cfg.user_height_m)


def hotspots_of(cfg, geometry):
    if cfg.hotspots == 4:
        return default_hotspots(geometry)
    rng = stream(cfg.master_seed, 0, "hotspots")
    return rng.uniform([0, 0], [geometry.width, geometry.height], size=(cfg.hotspots, 2))


def ru_layout(cfg):
    """RU positions shared by every replica of a scenario."""
    geometry = geometry_of(cfg)
    rng = stream(cfg.master_seed, 0, "ru_layout")
    return place_rus(geometry, cfg.num_rus, cfg.num_dus, cfg.placement, rng,
                     hotspots_of(cfg, geometry), cfg.hotspot_spread_m)


def build_replica(cfg, replica, ru_pos=None):
    """Topology, mobility and channel process for one replica."""
    geometry = geometry_of(cfg)
    ru_pos = ru_layout(cfg) if ru_pos is None else ru_pos
    topo = build_topology(geometry, cfg.num_rus, cfg.num_dus, cfg.num_users, cfg.cluster_size,
                          cfg.placement, stream(cfg.master_seed, replica, "users"), ru_pos=ru_pos,
                          hotspots=hotspots_of(cfg, geometry))
    rng_mob = stream(cfg.master_seed, replica, "mobility")
    v = rng_mob.uniform(cfg.velocity_min_kmh, cfg.velocity_max_kmh, size=topo.K) * KMH
    track = make_track(topo.user_pos, v, cfg.rt_loops, cfg.T_e, geometry, rng_mob)
    fading = FadingParams(cfg.f_c, cfg.T_e, cfg.fading, cfg.rician_kappa,
                          cfg.scatter_velocity_kmh * KMH)
    shadow = ShadowingParams(cfg.shadowing_var_db2, cfg.shadowing_var_db2 > 0)
    chan = ChannelProcess(topo, track, fading, stream(cfg.master_seed, replica, "channel"),
                          cfg.rt_loops, shadow)
    return topo, track, chan


def game_config(cfg):
    return GameConfig(
        N=cfg.rt_loops, N_n=cfg.rt_per_near_rt, L=cfg.virtual_experiences,
        Gamma=cfg.epsilon_scale, gamma=cfg.discount, memory_size=cfg.replay_size,
        batch_size=cfg.batch_size, lr=cfg.learning_rate, train_every=cfg.train_every,
        sync_every=cfg.sync_every, train_batches=cfg.train_batches, sigma_sq=cfg.sigma_sq,
        message_passing=cfg.algorithm != "drl", P_f=cfg.fronthaul_fail_prob,
        P_d=cfg.interdu_fail_prob, calibration_loops=cfg.calibration_loops,
        p_max_quantile=cfg.reward_quantile,
    )


# ---------------------------------------------------------------------------
# algorithms


def solve_baseline(cfg, oracle, rng):
    """Centralised assignment on ``oracle``; returns (pilots, seconds)."""
    t0 = time.perf_counter()
    K, T_p = oracle.K, oracle.T_p
    if cfg.algorithm == "ra":
        pilots = baselines.pa_random(K, T_p, rng)
    elif cfg.algorithm == "es":
        pilots = baselines.pa_exhaustive(oracle, cfg.es_budget)
    elif cfg.algorithm == "tabu":
        n_iter = None if cfg.tabu_iters < 0 else cfg.tabu_iters
        tenure = None if cfg.tabu_tenure < 0 else cfg.tabu_tenure
        pilots = baselines.pa_tabu(oracle, n_iter, tenure, rng)
    elif cfg.algorithm == "hungarian":
        pilots = baselines.pa_hungarian(oracle, cfg.hg_max_sweeps)
    else:
        raise InvalidInput(f"{cfg.algorithm!r} is not a baseline")
    return np.asarray(pilots, dtype=int), time.perf_counter() - t0


def _run_baseline(cfg, replica, topo, chan):
    rng = stream(cfg.master_seed, replica, "baseline")
    beta0 = chan.state.beta
    if cfg.pathloss_mode == "estimated":
        beta_or = baselines.estimate_pathloss(beta0, cfg.pathloss_measurements, cfg.sigma_sq,
                                              stream(cfg.master_seed, replica, "pathloss"))
    else:
        beta_or = beta0
    oracle = baselines.OracleInputs(beta_or, topo.cluster_mask, cfg.sigma_sq, cfg.pilot_length)
    pilots, t_pa = solve_baseline(cfg, oracle, rng)
    codebook = airlink.make_codebook(cfg.pilot_length, cfg.codebook)
    X = codebook[:, pilots]
    # frozen assignment, evaluated under the evolving large-scale gains
    curve = np.empty(cfg.rt_loops)
    t_env = 0.0
    mask = topo.cluster_mask
    if chan.static:
        curve[:] = airlink.sum_mse(X, beta0, mask, cfg.sigma_sq)
    else:
        for i in range(cfg.rt_loops):
            if i > 0:
                t1 = time.perf_counter()
                chan.step()
                t_env += time.perf_counter() - t1
                if i % cfg.rt_per_near_rt == 0:
                    topo = topo.with_user_positions(chan.state.user_pos)
                    mask = topo.cluster_mask
            curve[i] = airlink.sum_mse(X, chan.state.beta, mask, cfg.sigma_sq)
    n_loops = cfg.near_rt_loops
    U = topo.U
    return RunRecord(
        sum_mse=curve, rewards=np.zeros((0, U)), actions=np.zeros((0, U), dtype=int),
        observations=np.zeros((0, U)), runtime={"pa": t_pa, "env": t_env},
        final_pilots=pilots, codebooks=[codebook] * U,
    ), topo, X, n_loops


def _run_learning(cfg, replica, topo, chan):
    rngs = {"env": stream(cfg.master_seed, replica, "noise"),
            "links": stream(cfg.master_seed, replica, "links")}
    for u in range(topo.U):
        rngs[f"agent{u}"] = stream(cfg.master_seed, replica, f"agent{u}")
    codebooks = [airlink.make_codebook(cfg.pilot_length, cfg.codebook) for _ in range(topo.U)]
    cs = None
    if cfg.algorithm == "drl_msg_cbs":
        cs = CodebookSearch(topo.U, cfg.rt_loops, cfg.rt_per_near_rt,
                            stream(cfg.master_seed, replica, "codesearch"),
                            N_cs=cfg.cs_stable_loops, N_s=cfg.cs_window_loops)
    game = PilotGame(topo, chan, codebooks, game_config(cfg), rngs, codesearch=cs)
    rec = game.run()
    return rec, game.topology, game.pilot_matrix()


def run_replica(cfg, replica, ru_pos=None):
    topo, _, chan = build_replica(cfg, replica, ru_pos)
    if cfg.algorithm in BASELINES:
        rec, topo, X, _ = _run_baseline(cfg, replica, topo, chan)
    else:
        rec, topo, X = _run_learning(cfg, replica, topo, chan)
    rec.replica = replica
    rec.algorithm = cfg.algorithm
    if cfg.se_samples > 0:
        rng = stream(cfg.master_seed, replica, "se")
        try:
            ul, dl = airlink.sinr_monte_carlo(X, chan.state.beta, topo.cluster_mask,
                                              cfg.sigma_sq, rng, n_mc=cfg.se_samples)
            rec.sum_se = (float(airlink.spectral_efficiency(ul).sum()),
                          float(airlink.spectral_efficiency(dl).sum()))
        except InsufficientSamplesError:
            rec.sum_se = (float("nan"), float("nan"))
    return rec


def _replica_job(args):
    cfg, r, ru_pos = args
    return run_replica(cfg, r, ru_pos)


def run_scenario(cfg, replicas=None):
    """All replicas of ``cfg`` (or the given replica indices), in order."""
    if not isinstance(cfg, ScenarioConfig):
        raise InvalidInput("run_scenario expects a ScenarioConfig")
    idx = list(range(cfg.replicas)) if replicas is None else list(replicas)
    ru_pos = ru_layout(cfg)
    jobs = [(cfg, r, ru_pos) for r in idx]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(_replica_job, jobs))
    return [_replica_job(j) for j in jobs]


# ---------------------------------------------------------------------------
# statistics


def moving_average(series, window=500):
    """Trailing mean; the first ``window - 1`` points average what exists so far."""
    if window < 1:
        raise ValueError("window must be at least 1")
    x = np.asarray(series, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    n = np.arange(1, len(x) + 1)
    lo = np.maximum(0, n - window)
    return (c[n] - c[lo]) / (n - lo)


def pa_runtime(rec):
    """PA compute time: everything except channel generation."""
    return float(sum(v for k, v in rec.runtime.items() if k != "env"))


def final_sum_mse(rec, window=500):
    return float(moving_average(rec.sum_mse, window)[-1])


def _mean_std(vals):
    a = np.asarray(vals, dtype=float)
    if len(a) == 0:
        return float("nan"), float("nan"), float("nan")
    std = float(a.std(ddof=1)) if len(a) > 1 else 0.0
    return float(a.mean()), std, std / math.sqrt(len(a))


def report(records, window=500):
    """Mean, std and standard error of the headline metrics over replicas."""
    records = list(records)
    if not records:
        raise InvalidInput("report needs at least one record")
    finals = [final_sum_mse(r, window) for r in records]
    out = {"replicas": len(records), "algorithm": records[0].algorithm}
    m, s, se = _mean_std(finals)
    out["final_sum_mse"] = {"mean": m, "std": s, "se": se}
    se_recs = [r.sum_se for r in records if r.sum_se is not None]
    if se_recs:
        ul, dl = zip(*se_recs)
        for key, vals in (("sum_se_ul", ul), ("sum_se_dl", dl)):
            m, s, se = _mean_std(vals)
            out[key] = {"mean": m, "std": s, "se": se}
    m, s, se = _mean_std([pa_runtime(r) for r in records])
    out["runtime_s"] = {"mean": m, "std": s, "se": se}
    return out


def relative_runtimes(points):
    """``[(param, runtime)]`` -> runtimes divided by the one at the smallest param."""
    points = sorted(points)
    if not points:
        raise InvalidInput("no runtime points")
    base = points[0][1]
    return [(p, t / base if base > 0 else float("nan")) for p, t in points]


# ---------------------------------------------------------------------------
# files


def output_root(cfg):
    return os.environ.get(OUTPUT_ENV) or cfg.output_dir


def curve_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replica", "rt_loop", "sum_mse"])
    for rec in records:
        for i, v in enumerate(rec.sum_mse):
            w.writerow([rec.replica, i, repr(float(v))])
    return buf.getvalue()


def rewards_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replica", "near_rt_loop", "agent", "action", "observation", "reward"])
    for rec in records:
        n, U = rec.rewards.shape
        for ell in range(n):
            for u in range(U):
                w.writerow([rec.replica, ell, u, int(rec.actions[ell, u]),
                            repr(float(rec.observations[ell, u])), repr(float(rec.rewards[ell, u]))])
    return buf.getvalue()


def cs_events_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["loop", "event", "run", "agent", "eta", "r_old", "r_new"]
    w.writerow(["replica"] + cols)
    for rec in records:
        for ev in rec.cs_events:
            w.writerow([rec.replica] + [_fmt(ev.get(c, "")) for c in cols])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return " ".join(str(x) for x in v)
    return v


def write_results(cfg, records, directory=None):
    """Write CSVs and ``summary.json``; returns the directory used."""
    directory = directory or os.path.join(output_root(cfg), cfg.name)
    os.makedirs(directory, exist_ok=True)
    files = {"sum_mse.csv": curve_csv(records), "rewards.csv": rewards_csv(records),
             "cs_events.csv": cs_events_csv(records)}
    for fname, text in files.items():
        with open(os.path.join(directory, fname), "w", newline="") as fh:
            fh.write(text)
    summary = {
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "summary": report(records, cfg.ma_window),
        "per_replica": [
            {"replica": r.replica, "final_sum_mse": final_sum_mse(r, cfg.ma_window),
             "runtime": r.runtime, "sum_se": r.sum_se}
            for r in records
        ],
    }
    with open(os.path.join(directory, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return directory


def load_records(directory):
    """Rebuild minimal records (curve, runtime, SE) from a result directory."""
    with open(os.path.join(directory, "summary.json")) as fh:
        summary = json.load(fh)
    curves = {}
    with open(os.path.join(directory, "sum_mse.csv")) as fh:
        for row in csv.DictReader(fh):
            curves.setdefault(int(row["replica"]), []).append(float(row["sum_mse"]))
    algo = summary["config"]["algorithm"]
    out = []
    for item in summary["per_replica"]:
        r = item["replica"]
        rec = RunRecord(sum_mse=np.array(curves[r]), rewards=np.zeros((0, 0)),
                        actions=np.zeros((0, 0), dtype=int), observations=np.zeros((0, 0)),
                        runtime=item["runtime"], replica=r, algorithm=algo,
                        sum_se=tuple(item["sum_se"]) if item["sum_se"] else None)
        out.append(rec)
    return summary, out
