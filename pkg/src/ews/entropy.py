"""Conditional density and windowed conditional-entropy estimation.

The conditional density of a residual given a univariate conditioner is a
Gaussian kernel density whose sample weights come from a regression forest
grown on ``(conditioner -> residual)``. Entropy contributions are integrated
with composite Simpson on a fixed grid and summed over the window's
conditioners. Output sign: ``H = -sum integral f ln f``, so larger means more
uncertainty.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit

from .core import derive_seed
from .forest import fit_forest, weight_matrix

VARIANTS = ("baseline", "llf", "rank", "llf_rank")
BANDWIDTH_FLOOR = 1e-6


def pseudo_observations(series, delta) -> np.ndarray:
    """Trailing-window pseudo-observations.

    ``u[t] = (1/delta) * #{s in 1..delta : x[t-s] <= x[t]}`` for
    ``t >= delta``; the returned vector has ``len(series) - delta`` entries,
    the first one belonging to ``t = delta``.
    """
    x = np.asarray(series, dtype=float)
    if len(x) <= delta:
        raise ValueError("series must be longer than delta")
    lagged = np.lib.stride_tricks.sliding_window_view(x[:-1], delta)
    return (lagged <= x[delta:, None]).sum(axis=1) / delta


def window_ranks(x) -> np.ndarray:
    """Within-window empirical CDF: ``#{j : x_j <= x_i} / n``, in ``(0, 1]``."""
    x = np.asarray(x, dtype=float)
    s = np.sort(x)
    return np.searchsorted(s, x, side="right") / len(x)


def simpson_weights(n, dx) -> np.ndarray:
    """Composite Simpson weights for ``n`` (odd) equally spaced nodes."""
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number >= 3 of nodes")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * dx / 3.0


def neg_f_log_f(f):
    """Pointwise ``-f ln f`` with the ``0 ln 0 = 0`` limit."""
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    pos = f > 0
    out[pos] = -f[pos] * np.log(f[pos])
    return out


def effective_sample_size(weights):
    w = np.atleast_2d(weights)
    return 1.0 / np.sum(w * w, axis=1)


def silverman_bandwidth(values, weights) -> np.ndarray:
    """Silverman's rule per weight row, on the weight-effective sample size.

    ``h = 0.9 * min(sd, IQR / 1.34) * n_eff ** -0.2`` with weighted moments
    and quantiles. Degenerate spreads fall back to the non-zero one, then to
    ``1e-6 * (1 + |mean|)``.
    """
    x = np.asarray(values, dtype=float)
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    W = W / W.sum(axis=1, keepdims=True)
    mean = W @ x
    var = np.maximum(W @ (x * x) - mean ** 2, 0.0)
    sd = np.sqrt(var)

    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    cw = np.cumsum(W[:, order], axis=1)
    q25 = xs[np.argmax(cw >= 0.25 - 1e-12, axis=1)]
    q75 = xs[np.argmax(cw >= 0.75 - 1e-12, axis=1)]
    iqr = (q75 - q25) / 1.34

    spread = np.minimum(sd, iqr)
    spread = np.where(spread > 0, spread, np.maximum(sd, iqr))
    h = 0.9 * spread * effective_sample_size(W) ** -0.2
    return np.maximum(h, BANDWIDTH_FLOOR * (1.0 + np.abs(mean)))


KERNEL_CUTOFF = 9.0  # kernel tails beyond this many bandwidths are dropped


@njit(cache=True)
def _add_kernel(row, grid, mu, scale, inv, uniform):
    """Add ``scale * phi((grid - mu) * inv)`` to ``row``.

    On a uniform grid the Gaussian is advanced by the exact recurrence
    ``g_{k+1} = g_k * r_k``, ``r_{k+1} = r_k * exp(-dz^2)``, touching only
    nodes within ``KERNEL_CUTOFF`` bandwidths of ``mu``.
    """
    G = grid.shape[0]
    if not uniform:
        for g in range(G):
            z = (grid[g] - mu) * inv
            row[g] += scale * np.exp(-0.5 * z * z)
        return
    dx = grid[1] - grid[0]
    reach = KERNEL_CUTOFF / inv
    first = max(0, int(np.ceil((mu - reach - grid[0]) / dx)))
    last = min(G - 1, int(np.floor((mu + reach - grid[0]) / dx)))
    if first > last:
        return
    dz = dx * inv
    z = (grid[0] + first * dx - mu) * inv
    val = np.exp(-0.5 * z * z)
    ratio = np.exp(-z * dz - 0.5 * dz * dz)
    step = np.exp(-dz * dz)
    for g in range(first, last + 1):
        row[g] += scale * val
        val *= ratio
        ratio *= step


@njit(cache=True)
def _kde_rows(grid, x, W, h, reflect, lo, hi):
    nq, n = W.shape
    G = grid.shape[0]
    F = np.zeros((nq, G))
    c = 1.0 / np.sqrt(2.0 * np.pi)
    uniform = G >= 2
    if uniform:
        dx = (grid[G - 1] - grid[0]) / (G - 1)
        for g in range(G):
            if abs(grid[g] - (grid[0] + g * dx)) > 1e-9 * (1.0 + abs(grid[g])):
                uniform = False
                break
    for q in range(nq):
        inv = 1.0 / h[q]
        row = F[q]
        for i in range(n):
            w = W[q, i]
            if w <= 0.0:
                continue
            scale = w * c * inv
            _add_kernel(row, grid, x[i], scale, inv, uniform)
            if reflect:
                _add_kernel(row, grid, 2.0 * lo - x[i], scale, inv, uniform)
                _add_kernel(row, grid, 2.0 * hi - x[i], scale, inv, uniform)
    return F


@dataclass
class ConditionalDensity:
    """Weighted kernel density of residuals for one conditioning value.

    ``bounded`` densities live on ``support`` and use reflection at both
    ends so they keep unit mass.
    """

    support: tuple
    sample: np.ndarray
    weights: np.ndarray
    bandwidth: float
    bounded: bool = False

    def __call__(self, eps):
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        lo, hi = self.support
        return _kde_rows(eps, self.sample, self.weights[None, :],
                         np.array([self.bandwidth]), self.bounded, lo, hi)[0]

    def grid(self, quad_points=201):
        return np.linspace(self.support[0], self.support[1], quad_points)

    def integral(self, quad_points=201):
        g = self.grid(quad_points)
        return float(simpson_weights(quad_points, g[1] - g[0]) @ self(g))

    def entropy(self, quad_points=201):
        """``-integral f ln f`` by composite Simpson on ``quad_points`` nodes."""
        g = self.grid(quad_points)
        return float(simpson_weights(quad_points, g[1] - g[0])
                     @ neg_f_log_f(self(g)))


def level_support(sample, bandwidth):
    h = float(np.max(bandwidth))
    return (float(np.min(sample)) - 3 * h, float(np.max(sample)) + 3 * h)


def weighted_kde(sample, weights, support=None, bandwidth=None, bounded=False):
    """Build a :class:`ConditionalDensity` from explicit sample weights."""
    x = np.asarray(sample, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    h = float(silverman_bandwidth(x, w)[0]) if bandwidth is None else bandwidth
    if support is None:
        support = (0.0, 1.0) if bounded else level_support(x, h)
    return ConditionalDensity(tuple(support), x, w, h, bounded)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    min_leaf: int = 5
    mtry: int | None = None
    honest: bool = True
    ridge: float = 0.01


def conditional_density(train_e, train_cond, query_cond, forest=None,
                        support=None, bounded=False, params=ForestParams(),
                        seed=0) -> ConditionalDensity:
    """Forest-weighted conditional density of ``e`` at one conditioner value.

    ``forest`` may be a fitted model on ``train_cond -> train_e``; otherwise
    one is grown from ``params`` and ``seed``.
    """
    e = np.asarray(train_e, dtype=float)
    if forest is None:
        forest = fit_forest(train_cond, e, n_trees=params.n_trees,
                            min_leaf=params.min_leaf, mtry=params.mtry,
                            honest=params.honest, seed=seed)
    w = weight_matrix(forest, np.atleast_1d(query_cond))[0]
    return weighted_kde(e, w, support=support, bounded=bounded)


def entropy_terms(e, W, bounded=False, quad_points=201, support=None):
    """Per-row entropy ``-integral f ln f`` for each weight row of ``W``.

    Returns ``(terms, grid, densities)``.
    """
    e = np.asarray(e, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    W = W / W.sum(axis=1, keepdims=True)
    h = silverman_bandwidth(e, W)
    if support is None:
        support = (0.0, 1.0) if bounded else level_support(e, h)
    lo, hi = support
    grid = np.linspace(lo, hi, quad_points)
    F = _kde_rows(grid, e, np.ascontiguousarray(W), h, bounded, lo, hi)
    terms = neg_f_log_f(F) @ simpson_weights(quad_points, grid[1] - grid[0])
    return terms, grid, F


def conditional_entropy(e, cond, bounded=False, quad_points=201,
                        params=ForestParams(), seed=0, weights=None):
    """Window entropy: sum over conditioners of ``-integral f(.|c) ln f(.|c)``.

    Conditioners are the window's own ``cond`` values. ``weights`` overrides
    the forest (rows = conditioners, columns = samples).
    """
    e = np.asarray(e, dtype=float)
    if weights is None:
        forest = fit_forest(cond, e, n_trees=params.n_trees,
                            min_leaf=params.min_leaf, mtry=params.mtry,
                            honest=params.honest, seed=seed)
        weights = weight_matrix(forest, cond)
    terms, _, _ = entropy_terms(e, weights, bounded=bounded,
                                quad_points=quad_points)
    return float(terms.sum())


@dataclass
class EntropySeries:
    """Ordered window entropies; ``window_index`` holds inclusive bounds."""

    values: np.ndarray
    window_index: list
    variant: str
    info: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != len(self.window_index):
            raise ValueError("one entropy value per window required")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def __len__(self):
        return len(self.values)

    @property
    def window_end(self):
        return np.array([t1 for _, t1 in self.window_index], dtype=int)

    def to_csv(self, path) -> Path:
        """One row per window; selected lag orders ``k``/``l`` when known."""
        path = Path(path)
        orders = len(self.info) == len(self) and all(
            "k" in d and "l" in d for d in self.info)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window_start", "window_end", "H", "variant"]
                       + (["k", "l"] if orders else []))
            for i, ((t0, t1), h) in enumerate(zip(self.window_index,
                                                  self.values)):
                row = [t0, t1, repr(float(h)), self.variant]
                if orders:
                    row += [self.info[i]["k"], self.info[i]["l"]]
                w.writerow(row)
        return path

    @classmethod
    def from_csv(cls, path) -> "EntropySeries":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        variants = {r["variant"] for r in rows}
        if len(variants) > 1:
            raise ValueError("mixed variants in entropy file")
        info = [{"k": int(r["k"]), "l": int(r["l"])} for r in rows] \
            if rows and "k" in rows[0] else []
        return cls(
            values=np.array([float(r["H"]) for r in rows]),
            window_index=[(int(r["window_start"]), int(r["window_end"]))
                          for r in rows],
            variant=variants.pop() if variants else "baseline",
            info=info,
        )


def window_entropy(windows, e, cond, variant="baseline", quad_points=201,
                   params=ForestParams(), seed=0,
                   conditioner: Callable | None = None) -> EntropySeries:
    """Entropy over fixed global ``e``/``cond`` series, one value per window.

    For rank variants both series are mapped to within-window pseudo
    observations and the density lives on ``[0, 1]``. For LLF variants
    ``conditioner(t0, t1)`` must return the window's conditioning values
    (``cond`` is ignored); the pipeline module wires this to
    :func:`ews.forest.llf_predict`.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if quad_points < 51 or quad_points % 2 == 0:
        raise ValueError("quad_points must be odd and >= 51")
    e = np.asarray(e, dtype=float)
    bounded = variant in ("rank", "llf_rank")
    values = []
    for w, (t0, t1) in enumerate(windows):
        ew = e[t0:t1 + 1]
        if variant in ("llf", "llf_rank"):
            if conditioner is None:
                raise ValueError("LLF variants need a conditioner callable")
            cw = np.asarray(conditioner(t0, t1), dtype=float)
        else:
            cw = np.asarray(cond, dtype=float)[t0:t1 + 1]
        if bounded:
            ew, cw = window_ranks(ew), window_ranks(cw)
        values.append(conditional_entropy(ew, cw, bounded, quad_points,
                                          params, seed=derive_seed(seed, w)))
    return EntropySeries(np.array(values), list(windows), variant)
