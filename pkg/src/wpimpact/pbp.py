"""Play-by-play parsing, lineup reconstruction and shift segmentation.

Event files are plain CSV with the columns listed in ``EVENT_COLUMNS``.  Each
game opens with ten ``substitution`` rows at ``elapsed_sec == 0`` whose
``player_out`` is empty; these declare the starters.  Every later substitution
swaps one on-court player for one bench player on the same side.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

EVENT_COLUMNS = (
    "game_id", "date", "period", "elapsed_sec", "event_kind", "team_side",
    "player_in", "player_out", "points", "home_score", "away_score",
    "home_team", "away_team",
)
EVENT_KINDS = ("period_start", "period_end", "substitution", "score", "game_end")
SIDES = ("home", "away", "none")
TEAM_PREFIX = "team:"


@dataclass(frozen=True)
class EventSchema:
    """Period lengths used to validate clocks and place period boundaries."""

    regulation_periods: int = 4
    period_sec: int = 720
    overtime_sec: int = 300

    @property
    def regulation_sec(self) -> int:
        return self.regulation_periods * self.period_sec

    def period_bounds(self, period: int) -> tuple[int, int]:
        if period < 1:
            raise ValueError(f"period must be >= 1, got {period}")
        if period <= self.regulation_periods:
            start = (period - 1) * self.period_sec
            return start, start + self.period_sec
        k = period - self.regulation_periods
        start = self.regulation_sec + (k - 1) * self.overtime_sec
        return start, start + self.overtime_sec


DEFAULT_SCHEMA = EventSchema()


@dataclass(frozen=True)
class GameEvent:
    game_id: str
    period: int
    elapsed_sec: int
    event_kind: str
    team_side: str
    player_in: str | None = None
    player_out: str | None = None
    points: int = 0
    home_score: int = 0
    away_score: int = 0
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class GameLog:
    game_id: str
    date: dt.date
    home_team: str
    away_team: str
    events: tuple[GameEvent, ...]
    home_won: bool
    starters: tuple[tuple[str, ...], tuple[str, ...]]
    end_sec: int
    n_periods: int

    @property
    def season(self) -> int:
        return season_of(self.date)

    @property
    def final_score(self) -> tuple[int, int]:
        last = self.events[-1]
        return last.home_score, last.away_score

    def lead_series(self) -> np.ndarray:
        """Home lead at every second ``0..end_sec``.

        The state at second ``t`` includes every score recorded at or before
        ``t``.
        """
        delta = np.zeros(self.end_sec + 2, dtype=np.int64)
        for ev in self.events:
            if ev.event_kind == "score":
                delta[ev.elapsed_sec] += ev.points if ev.team_side == "home" else -ev.points
        return np.cumsum(delta)[: self.end_sec + 1]

    def players(self) -> tuple[set[str], set[str]]:
        home, away = set(self.starters[0]), set(self.starters[1])
        for ev in self.events:
            if ev.event_kind == "substitution" and ev.player_in:
                (home if ev.team_side == "home" else away).add(ev.player_in)
        return home, away


def season_of(date: dt.date) -> int:
    """Season label, named by the calendar year in which it ends (Aug-Jul)."""
    return date.year + 1 if date.month >= 8 else date.year


def parse_season_range(text: str) -> set[int]:
    """Parse ``"2007-2013"``, ``"2014"`` or ``"2009,2011"`` into season labels."""
    seasons: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            if hi < lo:
                raise ValidationError(f"season range {part!r} is not well ordered")
            seasons.update(range(lo, hi + 1))
        else:
            seasons.add(int(part))
    if not seasons:
        raise ValidationError(f"empty season selection {text!r}")
    return seasons


def filter_logs(logs: Iterable[GameLog], seasons=None, on_or_before: dt.date | None = None,
                after: dt.date | None = None) -> list[GameLog]:
    out = []
    for log in logs:
        if seasons is not None and log.season not in seasons:
            continue
        if on_or_before is not None and log.date > on_or_before:
            continue
        if after is not None and log.date <= after:
            continue
        out.append(log)
    return out


# ---------------------------------------------------------------------------
# parsing

def _int_field(value: str, name: str, line: int, minimum: int | None = None) -> int:
    try:
        out = int(value)
    except ValueError:
        raise ValidationError(f"column {name!r} is not an integer: {value!r}", line) from None
    if minimum is not None and out < minimum:
        raise ValidationError(f"column {name!r} must be >= {minimum}, got {out}", line)
    return out


def _parse_row(row: Sequence[str], line: int):
    if len(row) != len(EVENT_COLUMNS):
        raise ValidationError(f"expected {len(EVENT_COLUMNS)} columns, got {len(row)}", line)
    rec = dict(zip(EVENT_COLUMNS, (c.strip() for c in row)))
    if not rec["game_id"]:
        raise ValidationError("empty game_id", line)
    try:
        date = dt.date.fromisoformat(rec["date"])
    except ValueError:
        raise ValidationError(f"bad date {rec['date']!r} (expected YYYY-MM-DD)", line) from None
    kind = rec["event_kind"]
    if kind not in EVENT_KINDS:
        raise ValidationError(f"unknown event_kind {kind!r}", line)
    side = rec["team_side"] or "none"
    if side not in SIDES:
        raise ValidationError(f"unknown team_side {side!r}", line)
    points = _int_field(rec["points"], "points", line, 0) if rec["points"] else 0
    ev = GameEvent(
        game_id=rec["game_id"],
        period=_int_field(rec["period"], "period", line, 1),
        elapsed_sec=_int_field(rec["elapsed_sec"], "elapsed_sec", line, 0),
        event_kind=kind,
        team_side=side,
        player_in=rec["player_in"] or None,
        player_out=rec["player_out"] or None,
        points=points,
        home_score=_int_field(rec["home_score"], "home_score", line, 0),
        away_score=_int_field(rec["away_score"], "away_score", line, 0),
        line=line,
    )
    for pid in (ev.player_in, ev.player_out):
        if pid is not None and pid.startswith(TEAM_PREFIX):
            raise ValidationError(f"player id may not start with {TEAM_PREFIX!r}: {pid!r}", line)
    return ev, date, rec["home_team"], rec["away_team"]


def parse_events(stream, schema: EventSchema = DEFAULT_SCHEMA) -> list[GameLog]:
    """Parse an event CSV (text or binary stream) into validated game logs.

    Games are returned in order of first appearance.  Raises
    ``ValidationError`` carrying the offending line number.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, io.BufferedIOBase) or "b" in getattr(stream, "mode", ""):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValidationError("empty event file", 1) from None
    if tuple(header) != EVENT_COLUMNS:
        missing = [c for c in EVENT_COLUMNS if c not in header]
        detail = f"missing columns {missing}" if missing else "columns out of order"
        raise ValidationError(f"bad header: {detail}; expected {','.join(EVENT_COLUMNS)}", 1)

    games: OrderedDict[str, list] = OrderedDict()
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        parsed = _parse_row(row, line)
        games.setdefault(parsed[0].game_id, []).append(parsed)
    return [_build_log(gid, rows, schema) for gid, rows in games.items()]


def read_events(path, schema: EventSchema = DEFAULT_SCHEMA) -> list[GameLog]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_events(fh, schema)


def log_from_events(game_id: str, date: dt.date, home_team: str, away_team: str,
                    events: Sequence[GameEvent], schema: EventSchema = DEFAULT_SCHEMA) -> GameLog:
    """Validate an in-memory event sequence exactly as the CSV reader would."""
    return _build_log(game_id, [(ev, date, home_team, away_team) for ev in events], schema)


def _build_log(game_id: str, rows, schema: EventSchema) -> GameLog:
    first_ev, date, home_team, away_team = rows[0]
    if not home_team or not away_team or home_team == away_team:
        raise ValidationError(f"game {game_id}: invalid teams {home_team!r}/{away_team!r}",
                              first_ev.line)
    on_court = {"home": set(), "away": set()}
    starters_done = False
    prev_t, prev_period = 0, 1
    prev_scores = (0, 0)
    game_end = None
    last_period = 1
    events = []
    for ev, d, ht, at in rows:
        line = ev.line
        if game_end is not None:
            raise ValidationError(f"game {game_id}: event after game_end", line)
        if (d, ht, at) != (date, home_team, away_team):
            raise ValidationError(f"game {game_id}: date/team columns change within game", line)
        if ev.elapsed_sec < prev_t:
            raise ValidationError(
                f"game {game_id}: non-monotone clock ({ev.elapsed_sec} after {prev_t})", line)
        if ev.period < prev_period:
            raise ValidationError(f"game {game_id}: period decreases", line)
        lo, hi = schema.period_bounds(ev.period)
        if not lo <= ev.elapsed_sec <= hi:
            raise ValidationError(
                f"game {game_id}: elapsed_sec {ev.elapsed_sec} outside period {ev.period} "
                f"[{lo}, {hi}]", line)
        prev_t, prev_period = ev.elapsed_sec, ev.period
        last_period = max(last_period, ev.period)

        scores = (ev.home_score, ev.away_score)
        if ev.event_kind == "score":
            if ev.team_side == "none" or ev.points < 1:
                raise ValidationError(f"game {game_id}: score event needs a side and points >= 1",
                                      line)
            expect = (prev_scores[0] + ev.points, prev_scores[1]) if ev.team_side == "home" \
                else (prev_scores[0], prev_scores[1] + ev.points)
            if scores != expect:
                raise ValidationError(
                    f"game {game_id}: running score {scores} inconsistent with previous "
                    f"{prev_scores} plus {ev.points} for {ev.team_side}", line)
        elif scores != prev_scores:
            raise ValidationError(f"game {game_id}: running score changed on a "
                                  f"{ev.event_kind} event", line)
        prev_scores = scores

        starter_decl = ev.event_kind == "substitution" and ev.player_out is None
        preamble = ev.event_kind == "period_start" and ev.elapsed_sec == 0
        if not starters_done and not (starter_decl or preamble):
            _close_starters(game_id, on_court, line)
            starters_done = True
            starters = (tuple(sorted(on_court["home"])), tuple(sorted(on_court["away"])))

        if ev.event_kind == "substitution":
            side = ev.team_side
            if side == "none":
                raise ValidationError(f"game {game_id}: substitution without team_side", line)
            if ev.player_in is None:
                raise ValidationError(f"game {game_id}: substitution without player_in", line)
            if ev.player_in in on_court["home"] | on_court["away"]:
                raise ValidationError(f"game {game_id}: player_in already on court: "
                                      f"{ev.player_in}", line)
            if starter_decl:
                if starters_done or ev.elapsed_sec != 0:
                    raise ValidationError(
                        f"game {game_id}: substitution without player_out outside the starter "
                        "declaration", line)
                on_court[side].add(ev.player_in)
                if len(on_court[side]) > 5:
                    raise ValidationError(f"game {game_id}: lineup inconsistency, more than 5 "
                                          f"{side} starters", line)
            else:
                if ev.player_out not in on_court[side]:
                    raise ValidationError(f"game {game_id}: player_out not on court: "
                                          f"{ev.player_out}", line)
                on_court[side].remove(ev.player_out)
                on_court[side].add(ev.player_in)
        if ev.event_kind == "period_end" and ev.elapsed_sec != schema.period_bounds(ev.period)[1]:
            raise ValidationError(f"game {game_id}: period_end at {ev.elapsed_sec} does not match "
                                  f"period {ev.period} length", line)
        if ev.event_kind == "game_end":
            if ev.elapsed_sec != schema.period_bounds(ev.period)[1]:
                raise ValidationError(f"game {game_id}: game_end at {ev.elapsed_sec} is not the end "
                                      f"of period {ev.period}", line)
            game_end = ev
        events.append(ev)

    if game_end is None:
        raise ValidationError(f"game {game_id}: missing game_end event", rows[-1][0].line)
    if prev_scores[0] == prev_scores[1]:
        raise ValidationError(f"game {game_id}: final score is tied", game_end.line)
    return GameLog(
        game_id=game_id, date=date, home_team=home_team, away_team=away_team,
        events=tuple(events), home_won=prev_scores[0] > prev_scores[1],
        starters=starters, end_sec=game_end.elapsed_sec, n_periods=last_period,
    )


def _close_starters(game_id, on_court, line) -> bool:
    for side in ("home", "away"):
        if len(on_court[side]) != 5:
            raise ValidationError(f"game {game_id}: lineup inconsistency, {len(on_court[side])} "
                                  f"{side} starters (need 5)", line)
    return True


def write_events(logs: Iterable[GameLog], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(EVENT_COLUMNS)
    for log in logs:
        for ev in log.events:
            writer.writerow([
                log.game_id, log.date.isoformat(), ev.period, ev.elapsed_sec, ev.event_kind,
                ev.team_side, ev.player_in or "", ev.player_out or "", ev.points,
                ev.home_score, ev.away_score, log.home_team, log.away_team,
            ])


# ---------------------------------------------------------------------------
# shifts

@dataclass(frozen=True)
class Shift:
    game_id: str
    index: int
    start_sec: int
    end_sec: int
    home_players: tuple[str, ...]
    away_players: tuple[str, ...]
    lead_start: int
    lead_end: int
    home_team: str = ""
    away_team: str = ""
    date: dt.date | None = None
    wp_start: float = float("nan")
    wp_end: float = float("nan")

    @property
    def y(self) -> float:
        return self.wp_end - self.wp_start

    @property
    def duration(self) -> int:
        return self.end_sec - self.start_sec


def segment_shifts(log: GameLog, grid=None, schema: EventSchema = DEFAULT_SCHEMA) -> list[Shift]:
    """Split a game into maximal intervals with a fixed set of ten players.

    Boundaries fall at every second carrying a substitution and at every
    period boundary; simultaneous substitutions share one boundary.  When a
    win-probability grid is given, start and end probabilities are attached.
    """
    period_ends = {schema.period_bounds(p)[1] for p in range(1, log.n_periods)}
    subs_at: dict[int, list[GameEvent]] = {}
    for ev in log.events:
        if ev.event_kind == "substitution" and ev.player_out is not None:
            subs_at.setdefault(ev.elapsed_sec, []).append(ev)
    cuts = {0, log.end_sec} | period_ends | {t for t in subs_at if 0 < t < log.end_sec}
    cuts = sorted(cuts)
    lead = log.lead_series()

    home, away = set(log.starters[0]), set(log.starters[1])
    for ev in subs_at.get(0, ()):
        _swap(home if ev.team_side == "home" else away, ev)
    shifts = []
    for i, (a, b) in enumerate(zip(cuts[:-1], cuts[1:])):
        if i > 0:
            for ev in subs_at.get(a, ()):
                _swap(home if ev.team_side == "home" else away, ev)
        shifts.append(Shift(
            game_id=log.game_id, index=i, start_sec=a, end_sec=b,
            home_players=tuple(sorted(home)), away_players=tuple(sorted(away)),
            lead_start=int(lead[a]), lead_end=int(lead[b]),
            home_team=log.home_team, away_team=log.away_team, date=log.date,
        ))
    if grid is not None:
        shifts = attach_winprob(shifts, grid)
    return shifts


def _swap(lineup: set, ev: GameEvent) -> None:
    lineup.discard(ev.player_out)
    lineup.add(ev.player_in)


def attach_winprob(shifts: Sequence[Shift], grid) -> list[Shift]:
    return [replace(s, wp_start=float(grid.lookup(s.start_sec, s.lead_start)),
                    wp_end=float(grid.lookup(s.end_sec, s.lead_end))) for s in shifts]


SHIFT_COLUMNS = ("game_id", "date", "index", "start_sec", "end_sec", "home_team", "away_team",
                 "home_players", "away_players", "lead_start", "lead_end", "wp_start", "wp_end",
                 "y")


def write_shifts(shifts: Iterable[Shift], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SHIFT_COLUMNS)
        for s in shifts:
            writer.writerow([
                s.game_id, s.date.isoformat() if s.date else "", s.index, s.start_sec, s.end_sec,
                s.home_team, s.away_team, ";".join(s.home_players), ";".join(s.away_players),
                s.lead_start, s.lead_end, repr(s.wp_start), repr(s.wp_end), repr(s.y),
            ])


def read_shifts(path) -> list[Shift]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(SHIFT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for rec in reader:
            out.append(Shift(
                game_id=rec["game_id"], index=int(rec["index"]),
                start_sec=int(rec["start_sec"]), end_sec=int(rec["end_sec"]),
                home_players=tuple(rec["home_players"].split(";")),
                away_players=tuple(rec["away_players"].split(";")),
                lead_start=int(rec["lead_start"]), lead_end=int(rec["lead_end"]),
                home_team=rec["home_team"], away_team=rec["away_team"],
                date=dt.date.fromisoformat(rec["date"]) if rec["date"] else None,
                wp_start=float(rec["wp_start"]), wp_end=float(rec["wp_end"]),
            ))
    return out


# ---------------------------------------------------------------------------
# regression dataset

@dataclass
class RegressionDataset:
    """Signed indicator design for the shift-level regression.

    ``X`` holds player columns followed by team columns.  ``intercept`` is
    the per-row multiplier of the league-wide intercept; it is all ones
    unless rows have been reweighted.  ``wp_start``/``wp_end`` are optional
    per-row metadata used by the diagnostics.
    """

    y: np.ndarray
    X: sp.csr_matrix
    player_names: tuple[str, ...]
    team_names: tuple[str, ...]
    intercept: np.ndarray | None = None
    wp_start: np.ndarray | None = None
    wp_end: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = sp.csr_matrix(self.X, dtype=float)
        if self.intercept is None:
            self.intercept = np.ones_like(self.y)
        if self.X.shape != (self.y.size, len(self.player_names) + len(self.team_names)):
            raise ValidationError(f"design shape {self.X.shape} does not match {self.y.size} rows "
                                  f"and {len(self.coef_names)} columns")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def coef_names(self) -> tuple[str, ...]:
        return self.player_names + tuple(TEAM_PREFIX + t for t in self.team_names)

    @property
    def player_index(self) -> dict[str, int]:
        return {name: j for j, name in enumerate(self.player_names)}

    @property
    def team_index(self) -> dict[str, int]:
        off = len(self.player_names)
        return {name: off + k for k, name in enumerate(self.team_names)}

    def with_response(self, y) -> RegressionDataset:
        return replace(self, y=np.asarray(y, dtype=float).copy())


def build_dataset(shifts: Sequence[Shift], grid=None) -> RegressionDataset:
    """Assemble the signed player/team design and win-probability responses.

    Home players and the home team get +1, away players and the away team
    -1.  With ``grid`` the responses are recomputed from grid lookups,
    otherwise the probabilities already attached to the shifts are used.
    """
    if not shifts:
        raise ValidationError("cannot build a dataset from an empty shift list")
    if grid is not None:
        shifts = attach_winprob(shifts, grid)
    players = sorted({p for s in shifts for p in s.home_players + s.away_players})
    teams = sorted({t for s in shifts for t in (s.home_team, s.away_team)})
    pidx = {p: j for j, p in enumerate(players)}
    tidx = {t: len(players) + k for k, t in enumerate(teams)}

    n = len(shifts)
    rows = np.repeat(np.arange(n), 12)
    cols = np.empty(12 * n, dtype=np.int64)
    vals = np.tile(np.array([1.0] * 5 + [-1.0] * 5 + [1.0, -1.0]), n)
    wp0 = np.empty(n)
    wp1 = np.empty(n)
    for i, s in enumerate(shifts):
        if len(s.home_players) != 5 or len(s.away_players) != 5:
            raise ValidationError(f"shift {s.game_id}#{s.index} does not have 5 players per side")
        cols[12 * i:12 * i + 12] = [pidx[p] for p in s.home_players] + \
            [pidx[p] for p in s.away_players] + [tidx[s.home_team], tidx[s.away_team]]
        wp0[i], wp1[i] = s.wp_start, s.wp_end
    if not (np.all(np.isfinite(wp0)) and np.all(np.isfinite(wp1))):
        raise ValidationError("shifts carry no win probabilities; pass a grid")
    X = sp.csr_matrix((vals, (rows, cols)), shape=(n, len(players) + len(teams)))
    return RegressionDataset(y=wp1 - wp0, X=X, player_names=tuple(players),
                             team_names=tuple(teams), wp_start=wp0, wp_end=wp1)


def write_dataset(ds: RegressionDataset, path) -> None:
    header = ",".join(("y",) + ds.coef_names)
    data = np.column_stack([ds.y, ds.X.toarray()])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_dataset(path, shifts: Sequence[Shift] | None = None) -> RegressionDataset:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "y":
            raise ValidationError(f"{path}: first column must be 'y'")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    names = header[1:]
    players = tuple(n for n in names if not n.startswith(TEAM_PREFIX))
    teams = tuple(n[len(TEAM_PREFIX):] for n in names if n.startswith(TEAM_PREFIX))
    if names != list(players) + [TEAM_PREFIX + t for t in teams]:
        raise ValidationError(f"{path}: player columns must precede team columns")
    if data.shape[1] != len(header):
        raise ValidationError(f"{path}: row width {data.shape[1]} != header width {len(header)}")
    ds = RegressionDataset(y=data[:, 0], X=sp.csr_matrix(data[:, 1:]),
                           player_names=players, team_names=teams)
    if shifts is not None:
        if len(shifts) != ds.n:
            raise ValidationError(f"{len(shifts)} shifts do not match {ds.n} dataset rows")
        ds.wp_start = np.array([s.wp_start for s in shifts])
        ds.wp_end = np.array([s.wp_end for s in shifts])
    return ds
