"""Synthetic seasons with known player and team effects.

Scoring is a per-second Bernoulli process.  During a stretch with a fixed
ten-man lineup the net effect

    e = mu + sum(theta_home) - sum(theta_away) + tau_home - tau_away + sigma * xi

(``xi`` standard normal, drawn once per stretch) tilts the per-second
scoring chances to ``q (1 + kappa e)`` for the home team and
``q (1 - kappa e)`` for the away team.  ``kappa`` defaults to 5, which makes
a net effect of ``e`` move the home win probability by roughly ``e`` over a
typical 90-second shift.
"""

from __future__ import annotations

import csv
import datetime as dt
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .pbp import DEFAULT_SCHEMA, GameEvent, GameLog, TEAM_PREFIX, log_from_events

POINT_VALUES = np.array([1, 2, 3])
POINT_PROBS = np.array([0.15, 0.65, 0.20])


@dataclass(frozen=True)
class SimConfig:
    n_teams: int = 4
    roster_size: int = 10
    n_games: int = 300
    mu: float = 0.0
    player_scale: float = 0.01
    team_scale: float = 0.0
    sigma: float = 0.05
    shifts_per_game: float = 31.0
    points_per_game: float = 100.0
    kappa: float = 5.0
    max_ot: int = 5
    season: int = 2014
    seed: int = 0
    # Explicit overrides: player id -> effect, team id -> effect.
    player_effects: dict = field(default_factory=dict)
    team_effects: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.n_teams < 2:
            raise ValidationError("need at least two teams")
        if self.roster_size < 5:
            raise ValidationError("roster_size must be at least 5")
        if self.shifts_per_game < DEFAULT_SCHEMA.regulation_periods:
            raise ValidationError("expected shifts per game must be at least the number of periods")
        if self.n_games < 1:
            raise ValidationError("n_games must be positive")


def team_ids(cfg: SimConfig) -> list[str]:
    return [f"T{t:02d}" for t in range(cfg.n_teams)]


def roster_ids(team: str, cfg: SimConfig) -> list[str]:
    return [f"{team}P{j:02d}" for j in range(cfg.roster_size)]


def true_effects(cfg: SimConfig) -> dict[str, float]:
    """Ground truth: evenly spaced within each roster (shuffled), plus team effects."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7919]))
    truth = {"mu": cfg.mu, "sigma": cfg.sigma}
    teams = team_ids(cfg)
    team_vals = np.linspace(-cfg.team_scale, cfg.team_scale, cfg.n_teams)
    for team, tv in zip(teams, rng.permutation(team_vals)):
        vals = rng.permutation(np.linspace(-cfg.player_scale, cfg.player_scale, cfg.roster_size))
        for pid, v in zip(roster_ids(team, cfg), vals):
            truth[pid] = float(cfg.player_effects.get(pid, v))
        truth[TEAM_PREFIX + team] = float(cfg.team_effects.get(team, tv))
    return truth


def _schedule(cfg: SimConfig):
    teams = team_ids(cfg)
    pairs = list(itertools.combinations(teams, 2))
    start = dt.date(cfg.season - 1, 10, 29)
    per_day = max(1, cfg.n_teams // 2)
    for g in range(cfg.n_games):
        a, b = pairs[g % len(pairs)]
        home, away = (a, b) if (g // len(pairs)) % 2 == 0 else (b, a)
        yield g, start + dt.timedelta(days=g // per_day), home, away


def generate_season(cfg: SimConfig) -> tuple[list[GameLog], dict[str, float]]:
    """Simulate ``cfg.n_games`` validated games and return them with the truth record."""
    cfg.validate()
    truth = true_effects(cfg)
    seeds = np.random.SeedSequence([cfg.seed, cfg.season]).spawn(cfg.n_games)
    logs = []
    for (g, date, home, away), ss in zip(_schedule(cfg), seeds):
        logs.append(_simulate_game(f"{cfg.season}-{g:05d}", date, home, away, cfg, truth,
                                   np.random.default_rng(ss)))
    return logs, truth


def generate_seasons(cfg: SimConfig, seasons) -> tuple[list[GameLog], dict[str, float]]:
    logs, truth = [], None
    for season in seasons:
        season_logs, truth = generate_season(replace(cfg, season=season))
        logs.extend(season_logs)
    return logs, truth


def _simulate_game(game_id, date, home, away, cfg, truth, rng) -> GameLog:
    schema = DEFAULT_SCHEMA
    q = cfg.points_per_game / (schema.regulation_sec * float(POINT_VALUES @ POINT_PROBS))
    sub_rate = (cfg.shifts_per_game - schema.regulation_periods) / schema.regulation_sec
    rosters = {"home": roster_ids(home, cfg), "away": roster_ids(away, cfg)}
    on = {side: list(rng.choice(rosters[side], 5, replace=False)) for side in ("home", "away")}
    team_term = cfg.mu + truth[TEAM_PREFIX + home] - truth[TEAM_PREFIX + away]

    events: list[GameEvent] = [GameEvent(game_id, 1, 0, "period_start", "none")]
    for side in ("home", "away"):
        for pid in sorted(on[side]):
            events.append(GameEvent(game_id, 1, 0, "substitution", side, player_in=pid))
    score = [0, 0]

    def substitute(period, t):
        r = rng.random()
        sides = ("home",) if r < 0.4 else ("away",) if r < 0.8 else ("home", "away")
        for side in sides:
            bench = [p for p in rosters[side] if p not in on[side]]
            if not bench:
                continue
            k = min(len(bench), 1 if rng.random() < 0.6 else 2)
            outs = rng.choice(on[side], k, replace=False)
            ins = rng.choice(bench, k, replace=False)
            for p_out, p_in in zip(outs, ins):
                on[side][on[side].index(p_out)] = p_in
                events.append(GameEvent(game_id, period, t, "substitution", side,
                                        player_in=str(p_in), player_out=str(p_out),
                                        home_score=score[0], away_score=score[1]))

    period = 0
    while True:
        period += 1
        a, b = schema.period_bounds(period)
        if period > 1:
            events.append(GameEvent(game_id, period, a, "period_start", "none",
                                    home_score=score[0], away_score=score[1]))
            if rng.random() < 0.5:
                substitute(period, a)
        k = rng.poisson(sub_rate * (b - a))
        cuts = np.unique(rng.integers(a + 1, b, size=k)) if b - a > 1 else np.array([], int)
        bounds = [a, *cuts.tolist(), b]
        for s0, s1 in zip(bounds[:-1], bounds[1:]):
            if s0 != a:
                substitute(period, s0)
            e = team_term + sum(truth[p] for p in on["home"]) - sum(truth[p] for p in on["away"])
            e += cfg.sigma * rng.standard_normal()
            tilt = float(np.clip(cfg.kappa * e, -0.95, 0.95))
            secs = np.arange(s0 + 1, s1 + 1)
            hits_h = rng.random(secs.size) < q * (1 + tilt)
            hits_a = rng.random(secs.size) < q * (1 - tilt)
            pts_h = rng.choice(POINT_VALUES, secs.size, p=POINT_PROBS)
            pts_a = rng.choice(POINT_VALUES, secs.size, p=POINT_PROBS)
            for i in np.flatnonzero(hits_h | hits_a):
                for side, hit, pts, j in (("home", hits_h, pts_h, 0), ("away", hits_a, pts_a, 1)):
                    if hit[i]:
                        score[j] += int(pts[i])
                        events.append(GameEvent(game_id, period, int(secs[i]), "score", side,
                                                points=int(pts[i]), home_score=score[0],
                                                away_score=score[1]))
        regulation_over = period >= schema.regulation_periods
        last_ot = period >= schema.regulation_periods + cfg.max_ot
        if regulation_over and score[0] == score[1] and last_ot:
            side = "home" if rng.random() < 0.5 else "away"
            score[0 if side == "home" else 1] += 1
            events.append(GameEvent(game_id, period, b, "score", side, points=1,
                                    home_score=score[0], away_score=score[1]))
        events.append(GameEvent(game_id, period, b, "period_end", "none",
                                home_score=score[0], away_score=score[1]))
        if regulation_over and score[0] != score[1]:
            events.append(GameEvent(game_id, period, b, "game_end", "none",
                                    home_score=score[0], away_score=score[1]))
            break
    return log_from_events(game_id, date, home, away, events)


def write_truth(truth: dict[str, float], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("coefficient", "value"))
        for k, v in truth.items():
            w.writerow((k, repr(float(v))))


def read_truth(path) -> dict[str, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {rec["coefficient"]: float(rec["value"]) for rec in csv.DictReader(fh)}
