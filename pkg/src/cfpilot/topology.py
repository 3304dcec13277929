"""Geometric layout of RUs and users and the membership sets derived from it.

The area is split into ``U`` equal-width vertical strips; every RU inside
strip ``u`` attaches to DU ``u``. Users are served by their ``cluster_size``
nearest RUs and paired with the DU owning most of their cluster.

All indices are 0-based.
"""
from dataclasses import dataclass, field
import json

import numpy as np

from .errors import InvalidConfig

PLACEMENTS = ("uniform", "balanced", "clustered")


@dataclass(frozen=True)
class Geometry:
    width: float = 100.0
    height: float = 150.0
    ru_height: float = 10.0
    user_height: float = 1.5

    def __post_init__(self):
        for name in ("width", "height", "ru_height", "user_height"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(name, "must be positive")

    def strip_of(self, x, U):
        """DU index owning horizontal coordinate(s) ``x``."""
        idx = np.floor(np.asarray(x) / (self.width / U)).astype(int)
        return np.clip(idx, 0, U - 1)

    def strip_bounds(self, u, U):
        w = self.width / U
        return (u * w, 0.0, (u + 1) * w, self.height)


@dataclass(frozen=True, eq=False)
class Topology:
    geometry: Geometry
    U: int
    ru_pos: np.ndarray
    user_pos: np.ndarray
    cluster_size: int
    ru_du: np.ndarray
    clusters: tuple
    serving_du: np.ndarray
    _mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mask = np.zeros((len(self.user_pos), len(self.ru_pos)), dtype=bool)
        for k, cl in enumerate(self.clusters):
            mask[k, list(cl)] = True
        object.__setattr__(self, "_mask", mask)

    @property
    def M(self):
        return len(self.ru_pos)

    @property
    def K(self):
        return len(self.user_pos)

    @property
    def M_du(self):
        return [tuple(int(m) for m in np.flatnonzero(self.ru_du == u)) for u in range(self.U)]

    @property
    def K_du(self):
        return [tuple(int(k) for k in np.flatnonzero(self.serving_du == u)) for u in range(self.U)]

    @property
    def M_ue(self):
        return list(self.clusters)

    @property
    def K_ru(self):
        return [tuple(int(k) for k in np.flatnonzero(self._mask[:, m])) for m in range(self.M)]

    @property
    def cluster_mask(self):
        """Boolean K x M matrix, True where RU m serves user k."""
        return self._mask.copy()

    def du_region(self, u):
        return self.geometry.strip_bounds(u, self.U)

    def with_user_positions(self, user_pos, keep_serving_du=True):
        """Re-cluster users at new positions.

        The serving DU is kept by default so agents keep owning the same users.
        """
        user_pos = np.asarray(user_pos, dtype=float)
        clusters = tuple(form_cluster(p, self.ru_pos, self.cluster_size) for p in user_pos)
        if keep_serving_du:
            serving = self.serving_du
        else:
            serving = np.array([assign_serving_du(c, self.M_du) for c in clusters], dtype=int)
        return Topology(self.geometry, self.U, self.ru_pos, user_pos, self.cluster_size,
                        self.ru_du, clusters, serving)

    def to_dict(self):
        g = self.geometry
        return {
            "geometry": {"width": g.width, "height": g.height,
                         "ru_height": g.ru_height, "user_height": g.user_height},
            "U": self.U,
            "cluster_size": self.cluster_size,
            "ru_pos": self.ru_pos.tolist(),
            "user_pos": self.user_pos.tolist(),
            "ru_du": self.ru_du.tolist(),
            "clusters": [list(c) for c in self.clusters],
            "serving_du": self.serving_du.tolist(),
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d):
        return cls(Geometry(**d["geometry"]), int(d["U"]),
                   np.asarray(d["ru_pos"], dtype=float), np.asarray(d["user_pos"], dtype=float),
                   int(d["cluster_size"]), np.asarray(d["ru_du"], dtype=int),
                   tuple(tuple(int(m) for m in c) for c in d["clusters"]),
                   np.asarray(d["serving_du"], dtype=int))

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))

    def check(self):
        """Raise AssertionError if any membership invariant is broken."""
        M, K = self.M, self.K
        assert sorted(m for g in self.M_du for m in g) == list(range(M))
        assert sorted(k for g in self.K_du for k in g) == list(range(K))
        K_ru = self.K_ru
        for k, cl in enumerate(self.clusters):
            assert len(cl) == self.cluster_size
            for m in range(M):
                assert (m in cl) == (k in K_ru[m])


def form_cluster(user_pos, ru_pos, cluster_size):
    """Indices of the ``cluster_size`` RUs nearest to ``user_pos``.

    Ties go to the lower RU index; the result is sorted ascending.
    """
    ru_pos = np.asarray(ru_pos, dtype=float)
    if cluster_size > len(ru_pos):
        raise InvalidConfig("cluster_size", f"{cluster_size} exceeds number of RUs {len(ru_pos)}")
    d = np.linalg.norm(ru_pos - np.asarray(user_pos, dtype=float), axis=1)
    order = np.lexsort((np.arange(len(d)), d))
    return tuple(sorted(int(m) for m in order[:cluster_size]))


def assign_serving_du(cluster, M_du):
    """DU holding the most RUs of ``cluster``; lowest index wins ties."""
    counts = [len(set(cluster) & set(group)) for group in M_du]
    return int(np.argmax(counts))


def default_hotspots(geometry):
    w, h = geometry.width, geometry.height
    return np.array([[0.25 * w, 0.25 * h], [0.75 * w, 0.3 * h],
                     [0.3 * w, 0.75 * h], [0.7 * w, 0.8 * h]])


def _sample_clustered(n, geometry, rng, hotspots, spread):
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        centers = hotspots[rng.integers(len(hotspots), size=n - filled)]
        pts = centers + spread * rng.standard_normal((n - filled, 2))
        ok = ((pts[:, 0] >= 0) & (pts[:, 0] <= geometry.width)
              & (pts[:, 1] >= 0) & (pts[:, 1] <= geometry.height))
        pts = pts[ok]
        out[filled:filled + len(pts)] = pts
        filled += len(pts)
    return out


def place_rus(geometry, M, U, placement, rng, hotspots=None, spread=15.0):
    if placement == "uniform":
        return rng.uniform([0, 0], [geometry.width, geometry.height], size=(M, 2))
    if placement == "balanced":
        if M % U:
            raise InvalidConfig("M", f"balanced placement needs M divisible by U (M={M}, U={U})")
        per = M // U
        pts = []
        for u in range(U):
            x0, y0, x1, y1 = geometry.strip_bounds(u, U)
            # keep strictly inside the strip so strip_of() maps back to u
            x = rng.uniform(x0, x1, size=per)
            x = np.minimum(x, np.nextafter(x1, x0))
            pts.append(np.column_stack([x, rng.uniform(y0, y1, size=per)]))
        return np.vstack(pts)
    if placement == "clustered":
        hs = default_hotspots(geometry) if hotspots is None else np.asarray(hotspots, float)
        return _sample_clustered(M, geometry, rng, hs, spread)
    raise InvalidConfig("placement", f"unknown placement {placement!r}")


def place_users(geometry, K, placement, rng, hotspots=None, spread=15.0):
    if placement == "clustered":
        hs = default_hotspots(geometry) if hotspots is None else np.asarray(hotspots, float)
        return _sample_clustered(K, geometry, rng, hs, spread)
    return rng.uniform([0, 0], [geometry.width, geometry.height], size=(K, 2))


def topology_from_positions(geometry, ru_pos, user_pos, U, cluster_size):
    ru_pos = np.asarray(ru_pos, dtype=float)
    user_pos = np.asarray(user_pos, dtype=float)
    M, K = len(ru_pos), len(user_pos)
    if M == 0:
        raise InvalidConfig("M", "need at least one RU")
    if K == 0:
        raise InvalidConfig("K", "need at least one user")
    if U < 1:
        raise InvalidConfig("U", "need at least one DU")
    if cluster_size > M:
        raise InvalidConfig("cluster_size", f"{cluster_size} exceeds number of RUs {M}")
    if cluster_size < 1:
        raise InvalidConfig("cluster_size", "must be at least 1")
    ru_du = geometry.strip_of(ru_pos[:, 0], U)
    M_du = [tuple(np.flatnonzero(ru_du == u)) for u in range(U)]
    clusters = tuple(form_cluster(p, ru_pos, cluster_size) for p in user_pos)
    serving = np.array([assign_serving_du(c, M_du) for c in clusters], dtype=int)
    return Topology(geometry, U, ru_pos, user_pos, cluster_size, ru_du, clusters, serving)


def build_topology(geometry, M, U, K, cluster_size, placement="balanced", rng=None,
                   ru_pos=None, hotspots=None):
    """Random layout. Pass ``ru_pos`` to keep a fixed RU topology and redraw users only."""
    if M <= 0:
        raise InvalidConfig("M", "need at least one RU")
    if K <= 0:
        raise InvalidConfig("K", "need at least one user")
    if cluster_size > M:
        raise InvalidConfig("cluster_size", f"{cluster_size} exceeds number of RUs {M}")
    if placement not in PLACEMENTS:
        raise InvalidConfig("placement", f"unknown placement {placement!r}")
    rng = np.random.default_rng() if rng is None else rng
    if ru_pos is None:
        ru_pos = place_rus(geometry, M, U, placement, rng, hotspots)
    user_pos = place_users(geometry, K, placement, rng, hotspots)
    return topology_from_positions(geometry, ru_pos, user_pos, U, cluster_size)
