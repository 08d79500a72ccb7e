"""Construction of the reservoir coupling matrices.

Five internal topologies are supported: a general fixed in-degree random
graph, an in-degree-1 graph with a single connected component (which then
necessarily contains exactly one directed cycle), the same graph with its
cycle cut, a plain ring with identical weights, and an open chain. All
weight patterns are rescaled so the spectral radius hits the requested
target; the cut variants are rescaled before cutting and end up nilpotent,
with spectral radius exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _weak_components

GENERAL = "general"
K1_CYCLE = "k1_cycle"
K1_CUT_CYCLE = "k1_cut_cycle"
CYCLE = "cycle"
LINE = "line"
TOPOLOGIES = (GENERAL, K1_CYCLE, K1_CUT_CYCLE, CYCLE, LINE)

# Search box for the five construction hyperparameters.
HYPERPARAMETER_BOUNDS = {
    "gamma": (7.0, 11.0),
    "sigma": (0.1, 1.0),
    "rho_in": (0.3, 1.5),
    "k": (1, 5),
    "rho_r": (0.3, 1.5),
}

_K1_RETRY_CAP = 1000


class ConstructionError(RuntimeError):
    """Raised when a weight matrix cannot be built as specified."""


@dataclass(frozen=True)
class HyperParams:
    """The construction 5-tuple plus its topology tag.

    k is pinned to 1 for the in-degree-1 topologies and carried as 1 (it is
    ignored) for the ring and chain.
    """

    gamma: float
    sigma: float
    rho_in: float
    k: int
    rho_r: float
    topology: str = GENERAL

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")
        if not self.rho_in > 0:
            raise ValueError("rho_in must be positive")
        if self.rho_r < 0:
            raise ValueError("rho_r must be non-negative")
        if self.topology != GENERAL:
            object.__setattr__(self, "k", 1)
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 1):
            raise ValueError("k must be a positive integer")
        object.__setattr__(self, "k", int(self.k))

    def in_bounds(self) -> bool:
        for name in ("gamma", "sigma", "rho_in", "rho_r"):
            lo, hi = HYPERPARAMETER_BOUNDS[name]
            if not lo <= getattr(self, name) <= hi:
                return False
        if self.topology == GENERAL:
            lo, hi = HYPERPARAMETER_BOUNDS["k"]
            if not lo <= self.k <= hi:
                return False
        return True


@dataclass
class Reservoir:
    """A concrete network realization, ready to be driven and trained."""

    n: int
    w_r: np.ndarray
    w_in: np.ndarray
    gamma: float
    fout_split: int
    seed: int
    topology: str = GENERAL
    hp: HyperParams | None = None
    _csr: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def w_r_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, indices, data) of the coupling matrix, cached."""
        if self._csr is None:
            m = sp.csr_matrix(self.w_r)
            self._csr = (m.indptr.astype(np.int64), m.indices.astype(np.int64),
                         m.data.astype(np.float64))
        return self._csr


def build_w_in(n: int, d: int, sigma: float, rho_in: float,
               rng: np.random.Generator) -> np.ndarray:
    """Input coupling: each entry present with probability sigma, weights
    drawn from Normal(0, rho_in^2)."""
    if not 0.0 <= sigma <= 1.0:
        raise ValueError("sigma must lie in [0, 1]")
    if not rho_in > 0:
        raise ValueError("rho_in must be positive")
    mask = rng.random((n, d)) < sigma
    weights = rng.normal(0.0, rho_in, size=(n, d))
    return np.where(mask, weights, 0.0)


def spectral_radius(m: np.ndarray) -> float:
    """Largest absolute eigenvalue, via the dense LAPACK QR eigensolver."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    try:
        vals = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise ConstructionError(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.max(np.abs(vals))) if vals.size else 0.0


def connected_components(pattern: np.ndarray) -> int:
    """Number of weakly connected components of the directed graph."""
    adj = sp.csr_matrix(np.asarray(pattern) != 0)
    ncomp, _ = _weak_components(adj, directed=True, connection="weak")
    return int(ncomp)


def _draw_excluding_self(rng: np.random.Generator, n: int, i: int, k: int) -> np.ndarray:
    """k distinct nodes other than i, uniform without replacement."""
    picks = rng.choice(n - 1, size=k, replace=False)
    return np.where(picks >= i, picks + 1, picks)


def _k1_predecessors(rng: np.random.Generator, n: int) -> np.ndarray:
    picks = rng.integers(0, n - 1, size=n)
    return np.where(picks >= np.arange(n), picks + 1, picks)


def _k1_cycle_nodes(pred: np.ndarray) -> list[int]:
    """Nodes of the unique directed cycle of a single-component k=1 graph."""
    x = 0
    for _ in range(pred.size):
        x = pred[x]
    cycle = [int(x)]
    y = int(pred[x])
    while y != x:
        cycle.append(y)
        y = int(pred[y])
    return cycle


def cycle_product_radius(w_r: np.ndarray, pred: np.ndarray) -> float:
    """Analytic spectral radius of a k=1 matrix: the geometric mean of the
    cycle edge magnitudes. Tree edges do not contribute."""
    cycle = _k1_cycle_nodes(pred)
    weights = np.array([abs(w_r[c, pred[c]]) for c in cycle])
    return float(np.exp(np.mean(np.log(weights))))


def _rescale(w: np.ndarray, rho_r: float) -> np.ndarray:
    sr = spectral_radius(w)
    if sr == 0.0:
        raise ConstructionError("raw weight pattern has zero spectral radius")
    return w * (rho_r / sr)


def build_w_r(hp: HyperParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Internal coupling matrix for the requested topology.

    Entry (i, j) is the weight of the edge j -> i, so every row holds one
    node's inputs. The self edge is excluded from the in-degree draw. The
    raw pattern is rescaled to spectral radius rho_r; for the cut-cycle and
    chain topologies the rescaling happens before the cycle edge is removed.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    if hp.topology == GENERAL and hp.k > n - 1:
        raise ValueError(f"in-degree k={hp.k} impossible with n={n} and no self edges")

    if hp.topology == GENERAL:
        w = np.zeros((n, n))
        for i in range(n):
            w[i, _draw_excluding_self(rng, n, i, hp.k)] = rng.standard_normal(hp.k)
        return _rescale(w, hp.rho_r)

    if hp.topology in (K1_CYCLE, K1_CUT_CYCLE):
        for _ in range(_K1_RETRY_CAP):
            pred = _k1_predecessors(rng, n)
            pattern = np.zeros((n, n))
            pattern[np.arange(n), pred] = 1.0
            if connected_components(pattern) == 1:
                break
        else:
            raise ConstructionError(
                f"no single-component k=1 graph found in {_K1_RETRY_CAP} draws")
        w = np.zeros((n, n))
        w[np.arange(n), pred] = rng.standard_normal(n)
        w = _rescale(w, hp.rho_r)
        analytic = cycle_product_radius(w, pred)
        if abs(analytic - hp.rho_r) > 1e-8 * max(hp.rho_r, 1e-30):
            raise ConstructionError(
                f"cycle-product radius {analytic} disagrees with target {hp.rho_r}")
        if hp.topology == K1_CUT_CYCLE:
            cycle = _k1_cycle_nodes(pred)
            cut = cycle[rng.integers(0, len(cycle))]
            w[cut, pred[cut]] = 0.0
        return w

    # Ring with one shared weight; the chain is the ring rescaled then cut.
    w0 = rng.standard_normal()
    w = np.zeros((n, n))
    rows = (np.arange(n) + 1) % n
    w[rows, np.arange(n)] = w0
    w = _rescale(w, hp.rho_r)
    if hp.topology == LINE:
        w[0, n - 1] = 0.0
    return w


def build_reservoir(hp: HyperParams, n: int = 100, seed: int = 0) -> Reservoir:
    """Random reservoir realization: input coupling first, then the internal
    matrix, from a single seeded stream."""
    rng = np.random.default_rng(seed)
    w_in = build_w_in(n, 3, hp.sigma, hp.rho_in, rng)
    w_r = build_w_r(hp, n, rng)
    return Reservoir(n=n, w_r=w_r, w_in=w_in, gamma=hp.gamma,
                     fout_split=n // 2, seed=seed, topology=hp.topology, hp=hp)
