"""Scenario configuration: flat ``key = value`` text with units in the key names.

Example::

    # 96 x 24 stationary scenario
    num_rus = 96
    num_users = 24
    snr_db = 50
    algorithm = drl_msg_cbs

Lines starting with ``#`` are comments. Unknown keys are rejected.
"""
import configparser
from dataclasses import dataclass, fields, asdict, replace
import hashlib
import json
import math
import os

from .errors import InvalidConfig

ALGORITHMS = ("ra", "es", "tabu", "hungarian", "drl", "drl_msg", "drl_msg_cbs")
PATHLOSS_MODES = ("true", "estimated")
FADING_KINDS = ("rayleigh_gauss_markov", "rician")
PLACEMENTS = ("uniform", "balanced", "clustered")
CODEBOOKS = ("canonical", "dft")
_SECTION = "scenario"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    # geometry
    area_width_m: float = 100.0
    area_height_m: float = 150.0
    ru_height_m: float = 10.0
    user_height_m: float = 1.5
    placement: str = "balanced"
    hotspots: int = 4
    hotspot_spread_m: float = 15.0
    # sizes
    num_rus: int = 96
    num_dus: int = 4
    num_users: int = 24
    pilot_length: int = 4
    cluster_size: int = 8
    # timing
    rt_loops: int = 10000
    rt_per_near_rt: int = 10
    virtual_experiences: int = 9
    te_ms: float = 1.0
    carrier_ghz: float = 2.0
    # radio
    snr_db: float = 50.0
    fading: str = "rayleigh_gauss_markov"
    rician_kappa: float = 0.0
    shadowing_var_db2: float = 0.0
    velocity_min_kmh: float = 0.0
    velocity_max_kmh: float = 0.0
    scatter_velocity_kmh: float = 0.0
    fronthaul_fail_prob: float = 0.0
    interdu_fail_prob: float = 0.0
    # algorithm
    algorithm: str = "drl_msg"
    pathloss_mode: str = "true"
    pathloss_measurements: int = 10
    codebook: str = "canonical"
    es_budget: int = 2 ** 24
    tabu_iters: int = -1            # -1: 50 * K
    tabu_tenure: int = -1           # -1: K / 2
    hg_max_sweeps: int = 10
    # learning
    epsilon_scale: float = 15.0
    discount: float = 0.5
    learning_rate: float = 0.001
    replay_size: int = 1000
    batch_size: int = 128
    train_every: int = 200
    sync_every: int = 400
    train_batches: int = 32
    calibration_loops: int = 20
    reward_quantile: float = 95.0
    cs_stable_loops: int = 100
    cs_window_loops: int = 5
    # experiment
    replicas: int = 50
    master_seed: int = 0
    workers: int = 1
    ma_window: int = 500
    se_samples: int = 2000
    fronthaul_bits: int = 8
    output_dir: str = "results"

    def __post_init__(self):
        self.validate()

    # -- derived -------------------------------------------------------------

    @property
    def sigma_sq(self):
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def f_c(self):
        return self.carrier_ghz * 1e9

    @property
    def T_e(self):
        return self.te_ms * 1e-3

    @property
    def near_rt_loops(self):
        return self.rt_loops // self.rt_per_near_rt

    # -- validation ----------------------------------------------------------

    def validate(self):
        positive = ("area_width_m", "area_height_m", "ru_height_m", "user_height_m",
                    "num_rus", "num_dus", "num_users", "pilot_length", "cluster_size",
                    "rt_loops", "rt_per_near_rt", "te_ms", "carrier_ghz", "replicas",
                    "learning_rate", "replay_size", "batch_size", "train_every", "sync_every",
                    "train_batches", "calibration_loops", "cs_stable_loops", "cs_window_loops",
                    "workers", "ma_window", "pathloss_measurements", "es_budget", "fronthaul_bits",
                    "hotspots", "hotspot_spread_m")
        for f in positive:
            v = getattr(self, f)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidConfig(f, f"must be positive, got {v!r}")
        non_negative = ("virtual_experiences", "rician_kappa", "shadowing_var_db2",
                        "velocity_min_kmh", "velocity_max_kmh", "scatter_velocity_kmh", "epsilon_scale", "se_samples",
                        "hg_max_sweeps", "master_seed")
        for f in non_negative:
            v = getattr(self, f)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidConfig(f, f"must be non-negative, got {v!r}")
        for f in ("fronthaul_fail_prob", "interdu_fail_prob"):
            v = getattr(self, f)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(f, f"probability must lie in [0, 1], got {v!r}")
        if not 0.0 <= self.discount < 1.0:
            raise InvalidConfig("discount", "must lie in [0, 1)")
        if not 0.0 < self.reward_quantile <= 100.0:
            raise InvalidConfig("reward_quantile", "must lie in (0, 100]")
        if not math.isfinite(self.snr_db):
            raise InvalidConfig("snr_db", "must be finite")
        if self.velocity_max_kmh < self.velocity_min_kmh:
            raise InvalidConfig("velocity_max_kmh", "must be at least velocity_min_kmh")
        if self.cluster_size > self.num_rus:
            raise InvalidConfig("cluster_size", "cannot exceed num_rus")
        if self.rt_loops % self.rt_per_near_rt:
            raise InvalidConfig("rt_loops", "must be a multiple of rt_per_near_rt")
        if self.batch_size > self.replay_size:
            raise InvalidConfig("batch_size", "cannot exceed replay_size")
        for f, allowed in (("algorithm", ALGORITHMS), ("pathloss_mode", PATHLOSS_MODES),
                           ("fading", FADING_KINDS), ("placement", PLACEMENTS),
                           ("codebook", CODEBOOKS)):
            if getattr(self, f) not in allowed:
                raise InvalidConfig(f, f"{getattr(self, f)!r} not in {allowed}")

    # -- (de)serialisation ---------------------------------------------------

    def to_dict(self):
        return asdict(self)

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())

    def content_hash(self):
        """sha256 over the canonical config text, excluding the output location."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        text = json.dumps(d, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, **kw):
        return replace(self, **kw)


_FIELDS = {f.name: f for f in fields(ScenarioConfig)}


def _coerce(key, raw):
    if key == "velocity_kmh":
        return raw
    default = _FIELDS[key].default
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise InvalidConfig(key, f"cannot parse {raw!r} as {type(default).__name__}") from None
    return raw.strip()


def parse_overrides(pairs):
    """``{"key": "text"}`` -> typed keyword arguments for ``ScenarioConfig``."""
    out = {}
    for key, raw in pairs.items():
        key = key.strip()
        if key == "velocity_kmh":
            lo, _, hi = str(raw).partition(":")
            out["velocity_min_kmh"] = _coerce("velocity_min_kmh", lo)
            out["velocity_max_kmh"] = _coerce("velocity_max_kmh", hi or lo)
            continue
        if key not in _FIELDS:
            raise InvalidConfig(key, "unknown configuration key")
        out[key] = _coerce(key, str(raw))
    return out


def loads_config(text, name=None, **overrides):
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as e:
        raise InvalidConfig("<file>", str(e)) from None
    kw = parse_overrides(dict(cp[_SECTION]))
    if name is not None and "name" not in kw:
        kw["name"] = name
    kw.update(overrides)
    return ScenarioConfig(**kw)


def load_config(path, **overrides):
    with open(path) as fh:
        text = fh.read()
    name = os.path.splitext(os.path.basename(path))[0]
    return loads_config(text, name=name, **overrides)
