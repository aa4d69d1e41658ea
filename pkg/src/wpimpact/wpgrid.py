"""Smoothed home win-probability surface over (elapsed seconds, lead).

Each unit cell ``(t, l)`` records how many games passed through that state
(``N``) and how many of them the home team won (``n``).  The estimate at
``(T, L)`` pools the counts over the window ``[T-h_t, T+h_t] x [L-h_l, L+h_l]``
and adds Beta pseudo-games: ten per in-bounds cell, all wins when the cell's
lead exceeds the threshold, all losses below the negative threshold, and an
even split otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import optimize, stats

from .errors import ValidationError

REGULATION_SEC = 2880
OVERTIME_SEC = 300


@dataclass(frozen=True)
class GridAxes:
    max_ot: int = 5
    max_lead: int = 60

    @property
    def t_max(self) -> int:
        return REGULATION_SEC + OVERTIME_SEC * self.max_ot

    @property
    def leads(self) -> np.ndarray:
        return np.arange(-self.max_lead, self.max_lead + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.t_max + 1, 2 * self.max_lead + 1

    def lead_col(self, lead):
        return np.clip(lead, -self.max_lead, self.max_lead) + self.max_lead


@dataclass(frozen=True)
class PriorConfig:
    """Pseudo-games added to every unit cell of the smoothing window."""

    per_cell: int = 10
    threshold: int = 20


@dataclass
class CountGrid:
    axes: GridAxes
    N: np.ndarray
    n: np.ndarray

    @classmethod
    def empty(cls, axes: GridAxes = GridAxes()) -> CountGrid:
        return cls(axes, np.zeros(axes.shape, dtype=np.int64), np.zeros(axes.shape, dtype=np.int64))

    def __add__(self, other: CountGrid) -> CountGrid:
        if self.axes != other.axes:
            raise ValueError("cannot add count grids with different axes")
        return CountGrid(self.axes, self.N + other.N, self.n + other.n)


def accumulate_counts(logs: Iterable, axes: GridAxes = GridAxes()) -> CountGrid:
    """Count game states: one visit per game per second of play, leads clamped."""
    grid = CountGrid.empty(axes)
    for log in logs:
        if log.end_sec > axes.t_max:
            raise ValidationError(f"game {log.game_id} lasts {log.end_sec}s, beyond the grid's "
                                  f"{axes.t_max}s (max_ot={axes.max_ot})")
        lead = log.lead_series()
        t = np.arange(lead.size)
        cols = axes.lead_col(lead)
        np.add.at(grid.N, (t, cols), 1)
        if log.home_won:
            np.add.at(grid.n, (t, cols), 1)
    return grid


def _box_sum(a: np.ndarray, h_t: int, h_l: int) -> np.ndarray:
    """Sum of ``a`` over the in-bounds (2h_t+1) x (2h_l+1) window around every cell."""
    nt, nl = a.shape
    c = np.zeros((nt + 1, nl + 1), dtype=a.dtype)
    c[1:, 1:] = a.cumsum(0).cumsum(1)
    t0 = np.clip(np.arange(nt) - h_t, 0, nt)
    t1 = np.clip(np.arange(nt) + h_t + 1, 0, nt)
    l0 = np.clip(np.arange(nl) - h_l, 0, nl)
    l1 = np.clip(np.arange(nl) + h_l + 1, 0, nl)
    return (c[t1][:, l1] - c[t0][:, l1] - c[t1][:, l0] + c[t0][:, l0])


def _cell_pseudo(axes: GridAxes, prior: PriorConfig) -> tuple[np.ndarray, np.ndarray]:
    leads = axes.leads
    wins = np.where(leads > prior.threshold, prior.per_cell,
                    np.where(leads < -prior.threshold, 0, prior.per_cell / 2))
    wins = np.broadcast_to(wins, axes.shape).astype(float)
    return wins, prior.per_cell - wins


def prior_counts(axes: GridAxes = GridAxes(), h_t: int = 3, h_l: int = 2,
                 prior: PriorConfig = PriorConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Pseudo-wins and pseudo-losses for every window on the grid."""
    wins, losses = _cell_pseudo(axes, prior)
    return _box_sum(wins, h_t, h_l), _box_sum(losses, h_t, h_l)


def pseudo_counts(T: int, L: int, h_t: int = 3, h_l: int = 2, axes: GridAxes = GridAxes(),
                  prior: PriorConfig = PriorConfig()) -> tuple[float, float]:
    """Pseudo-wins and pseudo-losses for the window centred at ``(T, L)``."""
    _check_point(T, L, axes)
    alpha = beta = 0.0
    half = prior.per_cell / 2
    n_t = min(T + h_t, axes.t_max) - max(T - h_t, 0) + 1
    for ell in range(max(L - h_l, -axes.max_lead), min(L + h_l, axes.max_lead) + 1):
        if ell > prior.threshold:
            alpha += n_t * prior.per_cell
        elif ell < -prior.threshold:
            beta += n_t * prior.per_cell
        else:
            alpha += n_t * half
            beta += n_t * half
    return alpha, beta


def window_counts(grid: CountGrid, T: int, L: int, h_t: int = 3, h_l: int = 2) -> tuple[int, int]:
    """Home wins and games pooled over the in-bounds window around ``(T, L)``."""
    ax = grid.axes
    _check_point(T, L, ax)
    ts = slice(max(T - h_t, 0), min(T + h_t, ax.t_max) + 1)
    c = L + ax.max_lead
    ls = slice(max(c - h_l, 0), min(c + h_l, 2 * ax.max_lead) + 1)
    return int(grid.n[ts, ls].sum()), int(grid.N[ts, ls].sum())


def estimate_cell(n_w, N_w, alpha, beta):
    """Beta posterior mean and standard deviation; works elementwise on arrays."""
    n_w, N_w, alpha, beta = (np.asarray(x, dtype=float) for x in (n_w, N_w, alpha, beta))
    if np.any(alpha + beta <= 0):
        raise ValueError("degenerate prior: alpha + beta must be positive")
    a = n_w + alpha
    b = N_w - n_w + beta
    s = a + b
    mean = a / s
    sd = np.sqrt(a * b / (s * s * (s + 1.0)))
    if mean.ndim == 0:
        return float(mean), float(sd)
    return mean, sd


def _check_point(T, L, axes):
    if not 0 <= T <= axes.t_max:
        raise ValidationError(f"T={T} outside grid [0, {axes.t_max}]")
    if not -axes.max_lead <= L <= axes.max_lead:
        raise ValidationError(f"L={L} outside grid [-{axes.max_lead}, {axes.max_lead}]")


@dataclass
class WinProbGrid:
    axes: GridAxes
    N: np.ndarray
    n: np.ndarray
    phat: np.ndarray
    psd: np.ndarray
    h_t: int = 3
    h_l: int = 2
    prior: PriorConfig = field(default_factory=PriorConfig)

    def lookup(self, T, L):
        """Posterior mean win probability; leads beyond the axis clamp."""
        T = np.asarray(T)
        if np.any(T < 0) or np.any(T > self.axes.t_max):
            raise ValidationError(f"elapsed second outside grid [0, {self.axes.t_max}]")
        out = self.phat[T, self.axes.lead_col(np.asarray(L))]
        return float(out) if out.ndim == 0 else out

    def lookup_sd(self, T, L):
        out = self.psd[np.asarray(T), self.axes.lead_col(np.asarray(L))]
        return float(out) if out.ndim == 0 else out

    def empirical(self) -> np.ndarray:
        """Raw per-cell win fraction (NaN where no games were observed)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.N > 0, self.n / np.maximum(self.N, 1), np.nan)


def build_grid(counts: CountGrid, h_t: int = 3, h_l: int = 2,
               prior: PriorConfig = PriorConfig()) -> WinProbGrid:
    if h_t < 1 or h_l < 1:
        raise ValidationError("window half-widths must be positive integers")
    n_w = _box_sum(counts.n, h_t, h_l)
    N_w = _box_sum(counts.N, h_t, h_l)
    alpha, beta = prior_counts(counts.axes, h_t, h_l, prior)
    phat, psd = estimate_cell(n_w, N_w, alpha, beta)
    return WinProbGrid(counts.axes, counts.N.copy(), counts.n.copy(), phat, psd, h_t, h_l, prior)


GRID_COLUMNS = ("T", "L", "N", "n", "phat", "psd")


def write_grid(grid: WinProbGrid, path) -> None:
    ax = grid.axes
    T, Lc = np.meshgrid(np.arange(ax.shape[0]), np.arange(ax.shape[1]), indexing="ij")
    meta = (f"# h_t={grid.h_t} h_l={grid.h_l} per_cell={grid.prior.per_cell} "
            f"threshold={grid.prior.threshold} max_ot={ax.max_ot} max_lead={ax.max_lead}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(meta + "\n")
        fh.write(",".join(GRID_COLUMNS) + "\n")
        rows = np.column_stack([T.ravel(), (Lc - ax.max_lead).ravel(), grid.N.ravel(),
                                grid.n.ravel()])
        for (t, l, N, n), p, s in zip(rows.tolist(), grid.phat.ravel().tolist(),
                                      grid.psd.ravel().tolist()):
            fh.write(f"{t},{l},{N},{n},{p!r},{s!r}\n")


def read_grid(path) -> WinProbGrid:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        meta = {}
        if first.startswith("#"):
            meta = dict(kv.split("=") for kv in first[1:].split())
            header = fh.readline().strip()
        else:
            header = first
        if tuple(header.split(",")) != GRID_COLUMNS:
            raise ValidationError(f"{path}: grid header must be {','.join(GRID_COLUMNS)}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    axes = GridAxes(int(meta.get("max_ot", 5)), int(meta.get("max_lead", 60)))
    if data.shape[0] != axes.shape[0] * axes.shape[1]:
        raise ValidationError(f"{path}: expected {axes.shape[0] * axes.shape[1]} cells, "
                              f"got {data.shape[0]}")
    t = data[:, 0].astype(int)
    c = data[:, 1].astype(int) + axes.max_lead
    arrays = [np.zeros(axes.shape, dtype=np.int64), np.zeros(axes.shape, dtype=np.int64),
              np.full(axes.shape, np.nan), np.full(axes.shape, np.nan)]
    for arr, col in zip(arrays, range(2, 6)):
        arr[t, c] = data[:, col]
    prior = PriorConfig(int(meta.get("per_cell", 10)), int(meta.get("threshold", 20)))
    return WinProbGrid(axes, *arrays, h_t=int(meta.get("h_t", 3)), h_l=int(meta.get("h_l", 2)),
                       prior=prior)


# ---------------------------------------------------------------------------
# probit comparator

@dataclass(frozen=True)
class ProbitBaseline:
    """Brownian-motion probit model: lead drifts by ``drift`` points per game
    with volatility ``volatility`` points per root game."""

    drift: float
    volatility: float

    def __post_init__(self):
        if not self.volatility > 0:
            raise ValueError("volatility must be positive")

    @classmethod
    def fit(cls, logs: Iterable, regulation_sec: int = REGULATION_SEC,
            period_sec: int = 720) -> ProbitBaseline:
        """Maximum likelihood on the margins at the ends of the first three periods."""
        leads, fracs, won = [], [], []
        for log in logs:
            lead = log.lead_series()
            for k in (1, 2, 3):
                t = k * period_sec
                leads.append(lead[t])
                fracs.append(1.0 - t / regulation_sec)
                won.append(log.home_won)
        if not leads:
            raise ValidationError("no games to fit the probit baseline")
        return cls.fit_arrays(leads, fracs, won)

    @classmethod
    def fit_arrays(cls, leads, fracs, won) -> ProbitBaseline:
        leads = np.asarray(leads, dtype=float)
        fracs = np.asarray(fracs, dtype=float)
        sign = np.where(np.asarray(won, dtype=bool), 1.0, -1.0)

        def nll(params):
            mu, log_sig = params
            z = (leads + mu * fracs) / (math.exp(log_sig) * np.sqrt(fracs))
            return -stats.norm.logcdf(sign * z).sum()

        res = optimize.minimize(nll, x0=[0.0, math.log(12.0)], method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
        return cls(float(res.x[0]), float(math.exp(res.x[1])))


def probit_wp(lead, frac_remaining, baseline: ProbitBaseline):
    f = np.asarray(frac_remaining, dtype=float)
    if np.any(f <= 0) or np.any(f > 1):
        raise ValueError("fraction of game remaining must lie in (0, 1]")
    z = (np.asarray(lead, float) + baseline.drift * f) / (baseline.volatility * np.sqrt(f))
    out = stats.norm.cdf(z)
    return float(out) if np.ndim(out) == 0 else out
