"""Posterior summaries of player, team and lineup effects."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .errors import ValidationError
from .pbp import TEAM_PREFIX


@dataclass(frozen=True)
class ImpactSummary:
    name: str
    post_mean: float
    post_sd: float
    impact_score: float
    frac_positive: float


@dataclass(frozen=True)
class RankEntry:
    name: str
    avg_rank: float
    p_next: float | None


@dataclass(frozen=True)
class TeamRanking:
    team: str
    entries: tuple[RankEntry, ...]


@dataclass(frozen=True)
class LeverageProfile:
    player: str
    n_shifts: int
    mean_start_wp: float
    mean_duration_sec: float

    def features(self) -> np.ndarray:
        return np.array([self.n_shifts, self.mean_start_wp, self.mean_duration_sec], dtype=float)


def exceedance_prob(draws, a: str, b: str) -> float:
    """Share of posterior draws in which coefficient ``a`` strictly exceeds ``b``."""
    return float(np.mean(draws[a] > draws[b]))


def summarize(samples, name: str = "") -> ImpactSummary:
    """Mean, SD (divisor S-1), mean/SD ratio and share of positive draws."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValidationError(f"{name or 'samples'}: need at least two draws")
    sd = float(np.std(x, ddof=1))
    mean = float(np.mean(x))
    if np.ptp(x) == 0 or not sd > 0:
        raise ValidationError(f"{name or 'samples'}: zero posterior variance, impact score undefined")
    return ImpactSummary(name, mean, sd, mean / sd, float(np.mean(x > 0)))


def impact_score(draws, name: str) -> ImpactSummary:
    return summarize(draws[name], name)


def impact_scores(draws, names=None) -> list[ImpactSummary]:
    """Impact summaries sorted by descending score."""
    if names is None:
        names = [n for n in draws.names if not n.startswith(TEAM_PREFIX)]
    out = [impact_score(draws, n) for n in names]
    return sorted(out, key=lambda s: (-s.impact_score, s.name))


def impact_ranking(draws, roster: Sequence[str], team: str = "") -> TeamRanking:
    """Average within-roster rank over draws (rank 1 = largest effect)."""
    roster = list(roster)
    if len(roster) < 2:
        raise ValidationError("impact ranking needs a roster of at least two players")
    if len(set(roster)) != len(roster):
        raise ValidationError("roster contains duplicates")
    vals = np.column_stack([draws[p] for p in roster])
    order = np.argsort(-vals, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(vals.shape[0])[:, None]
    ranks[rows, order] = np.arange(1, len(roster) + 1)
    avg = ranks.mean(axis=0)
    idx = sorted(range(len(roster)), key=lambda j: (avg[j], j))
    entries = []
    for pos, j in enumerate(idx):
        nxt = idx[pos + 1] if pos + 1 < len(idx) else None
        p_next = float(np.mean(vals[:, j] > vals[:, nxt])) if nxt is not None else None
        entries.append(RankEntry(roster[j], float(avg[j]), p_next))
    return TeamRanking(team, tuple(entries))


def rosters(shifts) -> dict[str, list[str]]:
    """Players seen on court for each team, sorted."""
    out: dict[str, set] = defaultdict(set)
    for s in shifts:
        out[s.home_team].update(s.home_players)
        out[s.away_team].update(s.away_players)
    return {t: sorted(p) for t, p in sorted(out.items())}


def leverage_profiles(shifts) -> list[LeverageProfile]:
    """Shift count, team-perspective starting win probability and mean shift length."""
    if not shifts:
        raise ValidationError("leverage profiles need at least one shift")
    acc = defaultdict(lambda: [0, 0.0, 0.0])
    for s in shifts:
        for players, wp in ((s.home_players, s.wp_start), (s.away_players, 1.0 - s.wp_start)):
            for p in players:
                a = acc[p]
                a[0] += 1
                a[1] += wp
                a[2] += s.end_sec - s.start_sec
    return [LeverageProfile(p, k, w / k, d / k) for p, (k, w, d) in sorted(acc.items())]


def _profile_precision(profiles) -> tuple[np.ndarray, np.ndarray]:
    F = np.vstack([p.features() for p in profiles])
    cov = np.cov(F, rowvar=False)
    if np.linalg.cond(cov) > 1e12:
        cov = cov + 1e-8 * np.trace(cov) / 3 * np.eye(3)
    try:
        prec = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        raise ValidationError("leverage profile covariance is singular") from None
    if not np.all(np.isfinite(prec)):
        raise ValidationError("leverage profile covariance is singular")
    return F, prec


def mahalanobis_matrix(profiles) -> np.ndarray:
    F, prec = _profile_precision(profiles)
    D = F[:, None, :] - F[None, :, :]
    d2 = np.einsum("ijk,kl,ijl->ij", D, prec, D)
    return np.sqrt(np.maximum(d2, 0.0))


def similar_players(profiles, player: str, k: int = 4) -> list[tuple[str, float]]:
    """The ``k`` profiles nearest to ``player`` in Mahalanobis distance."""
    profiles = list(profiles)
    if len(profiles) < 3:
        raise ValidationError("need at least three leverage profiles")
    names = [p.player for p in profiles]
    if player not in names:
        raise ValidationError(f"no leverage profile for {player!r}")
    F, prec = _profile_precision(profiles)
    i = names.index(player)
    D = F - F[i]
    dist = np.sqrt(np.maximum(np.einsum("ik,kl,il->i", D, prec, D), 0.0))
    order = [j for j in np.argsort(dist, kind="stable") if j != i]
    return [(names[j], float(dist[j])) for j in order[:k]]


@dataclass(frozen=True)
class LineupEffect:
    players: tuple[str, ...]
    samples: np.ndarray
    summary: ImpactSummary


def lineup_samples(draws, players: Sequence[str]) -> np.ndarray:
    players = tuple(players)
    if len(players) != 5:
        raise ValidationError(f"a lineup needs five players, got {len(players)}")
    if len(set(players)) != 5:
        raise ValidationError(f"lineup has duplicate players: {players}")
    return draws.coef[:, [draws.index(p) for p in players]].sum(axis=1)


def lineup_effect(draws, players: Sequence[str]) -> LineupEffect:
    samples = lineup_samples(draws, players)
    return LineupEffect(tuple(players), samples, summarize(samples, "-".join(players)))


@dataclass(frozen=True)
class MatchupPrediction:
    samples: np.ndarray
    deterministic: np.ndarray
    mean: float
    p_positive: float
    quantiles: dict


def matchup_predict(draws, home_players, home_team, away_players, away_team, rng=None, z=None,
                    probs=(0.025, 0.25, 0.5, 0.75, 0.975)) -> MatchupPrediction:
    """Posterior predictive change in home win probability for one shift.

    Per draw: mu + sum(home) - sum(away) + tau_home - tau_away + sigma * z.
    Pass ``z`` to fix the standard normal sequence.
    """
    det = (draws.mu + lineup_samples(draws, home_players) - lineup_samples(draws, away_players)
           + draws[TEAM_PREFIX + home_team] - draws[TEAM_PREFIX + away_team])
    if z is None:
        rng = np.random.default_rng() if rng is None else rng
        z = rng.standard_normal(draws.S)
    z = np.asarray(z, dtype=float)
    if z.shape != (draws.S,):
        raise ValidationError(f"need one normal deviate per draw ({draws.S})")
    samples = det + np.sqrt(draws.sigma2) * z
    q = dict(zip(probs, np.quantile(samples, probs).tolist()))
    return MatchupPrediction(samples, det, float(samples.mean()), float(np.mean(samples > 0)), q)


class PermTestResult(NamedTuple):
    observed: float
    p_value: float
    null: np.ndarray


def perm_test_corr(x, y, n_perm: int = 10_000, rng=None, batch: int = 2000) -> PermTestResult:
    """Pearson correlation with a two-sided permutation p-value.

    The p-value is the share of permutations of ``y`` whose absolute
    correlation with ``x`` reaches the observed absolute correlation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValidationError("need two equal-length series of at least three values")
    xc, yc = x - x.mean(), y - y.mean()
    nx, ny = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if nx == 0 or ny == 0:
        raise ValidationError("correlation undefined for a constant series")
    xs, ys = xc / nx, yc / ny
    observed = float(xs @ ys)
    rng = np.random.default_rng() if rng is None else rng
    thresh = abs(observed) * (1 - 1e-12)
    hits = 0
    null = np.empty(n_perm)
    done = 0
    while done < n_perm:
        m = min(batch, n_perm - done)
        perm = rng.permuted(np.broadcast_to(ys, (m, ys.size)), axis=1)
        r = perm @ xs
        null[done:done + m] = r
        hits += int(np.sum(np.abs(r) >= thresh))
        done += m
    return PermTestResult(observed, hits / n_perm, null)


def kde_curve(samples, n_points: int = 512, pad: float = 3.0):
    """Gaussian-kernel density on a regular grid (Silverman bandwidth)."""
    x = np.asarray(samples, dtype=float)
    kde = stats.gaussian_kde(x, bw_method="silverman")
    bw = kde.factor * x.std(ddof=1)
    grid = np.linspace(x.min() - pad * bw, x.max() + pad * bw, n_points)
    return grid, kde(grid)
