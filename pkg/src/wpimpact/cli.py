"""Command line pipeline: simulate -> ingest -> winprob -> build -> fit -> report.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines (keys are
flag names without the leading dashes); explicit flags override the file.
Exit status is 0 on success, 2 on validation errors and 3 on numerical
failures.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import logging
import sys
import zlib
from collections import Counter
from pathlib import Path

import numpy as np
from scipy import linalg

from . import diagnostics as diag
from . import metrics
from .blasso import ModelSpec, gibbs_fit, read_draws, write_draws
from .errors import NumericalError, ValidationError
from .pbp import (TEAM_PREFIX, build_dataset, filter_logs, parse_season_range, read_dataset,
                  read_events, read_shifts, segment_shifts, write_dataset, write_events,
                  write_shifts)
from .simgen import SimConfig, generate_seasons, write_truth
from .wpgrid import ProbitBaseline, accumulate_counts, build_grid, read_grid, write_grid

log = logging.getLogger("wpimpact")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def derive_seed(seed: int, label: str) -> int:
    """Stable per-stage seed derived from the top-level seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad date {text!r}, expected YYYY-MM-DD") from None


def _csv_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    log.info("wrote %s", path)
    return path


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path, what):
    if path is None:
        raise ValidationError(f"--{what} is required")
    if not Path(path).exists():
        raise ValidationError(f"{what} file not found: {path}")
    return path


def _shifts_path(args):
    if getattr(args, "shifts", None):
        return args.shifts
    if getattr(args, "dataset", None):
        p = Path(args.dataset)
        return str(p.with_name(p.stem + "_shifts.csv"))
    return None


def _sampler_spec(args, label):
    return ModelSpec(r=args.r, delta=args.delta, burn_in=args.burn_in, thin=args.thin,
                     n_keep=args.keep, seed=derive_seed(args.seed, label))


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args):
    out = _out(args)
    seasons = sorted(parse_season_range(args.seasons))
    cfg = SimConfig(n_teams=args.teams, roster_size=args.roster, n_games=args.games,
                    mu=args.mu, player_scale=args.player_scale, team_scale=args.team_scale,
                    sigma=args.sigma, shifts_per_game=args.shifts_per_game,
                    seed=derive_seed(args.seed, "simulate"))
    logs, truth = generate_seasons(cfg, seasons)
    events = Path(args.events) if args.events else out / "events.csv"
    with open(events, "w", newline="", encoding="utf-8") as fh:
        write_events(logs, fh)
    write_truth(truth, out / "truth.csv")
    print(f"simulated {len(logs)} games over seasons {seasons[0]}-{seasons[-1]} -> {events}")


def cmd_ingest(args):
    logs = read_events(_require(args.events, "events"))
    rows = []
    for lg in logs:
        h, a = lg.final_score
        rows.append((lg.game_id, lg.date.isoformat(), lg.season, lg.home_team, lg.away_team, h, a,
                     int(lg.home_won), lg.n_periods, len(segment_shifts(lg))))
    seasons = Counter(r[2] for r in rows)
    print(f"{len(logs)} games; seasons " + ", ".join(f"{s}: {k}" for s, k in sorted(seasons.items())))
    if rows:
        print(f"mean shifts per game {np.mean([r[-1] for r in rows]):.2f}; "
              f"home win fraction {np.mean([r[7] for r in rows]):.3f}")
    if args.out_dir:
        _write_csv(_out(args) / "ingest_summary.csv",
                   ("game_id", "date", "season", "home_team", "away_team", "home_score",
                    "away_score", "home_won", "n_periods", "n_shifts"), rows)


def cmd_winprob(args):
    logs = read_events(_require(args.events, "events"))
    seasons = parse_season_range(args.train_seasons) if args.train_seasons else None
    logs = filter_logs(logs, seasons=seasons, on_or_before=args.before_date)
    if not logs:
        raise ValidationError("no games left to estimate win probability")
    grid = build_grid(accumulate_counts(logs), h_t=args.ht, h_l=args.hl)
    if args.grid is None:
        raise ValidationError("--grid is required")
    write_grid(grid, args.grid)
    print(f"win-probability grid from {len(logs)} games -> {args.grid}; "
          f"max posterior SD {np.nanmax(grid.psd):.4f}")
    if args.out_dir:
        out = _out(args)
        if args.probit:
            base = ProbitBaseline.fit(logs)
            _write_csv(out / "probit.csv", ("drift", "volatility"), [(base.drift, base.volatility)])
        if not args.no_figures:
            from . import plotting
            plotting.winprob_surface(grid, out / "winprob.png")


def cmd_build(args):
    logs = read_events(_require(args.events, "events"))
    grid = read_grid(_require(args.grid, "grid"))
    seasons = parse_season_range(args.apply_season) if args.apply_season else None
    logs = filter_logs(logs, seasons=seasons, on_or_before=args.before_date)
    shifts = [s for lg in logs for s in segment_shifts(lg, grid)]
    ds = build_dataset(shifts)
    if args.dataset is None:
        raise ValidationError("--dataset is required")
    write_dataset(ds, args.dataset)
    write_shifts(shifts, _shifts_path(args))
    print(f"{ds.n} shifts from {len(logs)} games, {len(ds.player_names)} players, "
          f"{len(ds.team_names)} teams -> {args.dataset}")


def cmd_fit(args):
    ds = read_dataset(_require(args.dataset, "dataset"))
    spec = _sampler_spec(args, "fit")
    draws = gibbs_fit(ds, spec, progress=lambda i, n: log.info("iteration %d/%d", i, n))
    if args.draws is None:
        raise ValidationError("--draws is required")
    write_draws(draws, args.draws)
    print(f"{draws.S} posterior draws of {len(draws.names)} coefficients -> {args.draws}")


def cmd_report(args):
    draws = read_draws(_require(args.draws, "draws"))
    shifts = read_shifts(_require(_shifts_path(args), "shifts"))
    out = _out(args)
    requested = args.players or []
    for p in requested:
        if p not in draws:
            raise ValidationError(f"player {p!r} not found in draws file {args.draws}")

    profiles = {p.player: p for p in metrics.leverage_profiles(shifts)}
    players = [n for n in draws.names if not n.startswith(TEAM_PREFIX)]
    players = [p for p in players if profiles.get(p) and profiles[p].n_shifts >= args.min_shifts]
    scores = metrics.impact_scores(draws, players)
    _write_csv(out / "impact_scores.csv",
               ("player", "mean", "sd", "score", "frac_positive", "n_shifts"),
               [(s.name, s.post_mean, s.post_sd, s.impact_score, s.frac_positive,
                 profiles[s.name].n_shifts) for s in scores])

    teams = [n for n in draws.names if n.startswith(TEAM_PREFIX)]
    team_rows = [metrics.impact_score(draws, t) for t in teams]
    _write_csv(out / "team_effects.csv", ("team", "mean", "sd", "score", "frac_positive"),
               [(s.name[len(TEAM_PREFIX):], s.post_mean, s.post_sd, s.impact_score,
                 s.frac_positive) for s in team_rows])

    for team, roster in metrics.rosters(shifts).items():
        roster = [p for p in roster if p in players]
        if len(roster) < 2:
            continue
        ranking = metrics.impact_ranking(draws, roster, team)
        _write_csv(out / f"rankings_{team}.csv", ("rank", "player", "avg_rank", "p_next"),
                   [(i + 1, e.name, e.avg_rank, "" if e.p_next is None else e.p_next)
                    for i, e in enumerate(ranking.entries)])

    prof_list = [profiles[p] for p in sorted(profiles)]
    _write_csv(out / "leverage_profiles.csv",
               ("player", "n_shifts", "mean_start_wp", "mean_duration_sec"),
               [(p.player, p.n_shifts, p.mean_start_wp, p.mean_duration_sec) for p in prof_list])
    focus = requested or [s.name for s in scores[: args.top]]
    for p in focus:
        if p not in profiles:
            raise ValidationError(f"player {p!r} has no shifts in {_shifts_path(args)}")
        near = metrics.similar_players(prof_list, p, args.similar_k)
        _write_csv(out / f"similar_{p}.csv", ("rank", "player", "distance", "p_exceeds"),
                   [(i + 1, q, d, metrics.exceedance_prob(draws, p, q) if q in draws else "")
                    for i, (q, d) in enumerate(near)])

    kde_rows, curves = [], {}
    for p in focus:
        x, d = metrics.kde_curve(draws[p])
        curves[p] = (x, d)
        kde_rows.extend((p, xi, di) for xi, di in zip(x.tolist(), d.tolist()))
    _write_csv(out / "kde_players.csv", ("player", "x", "density"), kde_rows)

    lineup_counts = Counter()
    for s in shifts:
        lineup_counts[(s.home_team, s.home_players)] += 1
        lineup_counts[(s.away_team, s.away_players)] += 1
    lineup_rows = []
    for (team, five), k in lineup_counts.items():
        if k < args.lineup_min_shifts or not all(p in draws for p in five):
            continue
        eff = metrics.lineup_effect(draws, five)
        sm = eff.summary
        lineup_rows.append((team, ";".join(five), k, sm.post_mean, sm.post_sd, sm.impact_score,
                            sm.frac_positive))
    lineup_rows.sort(key=lambda r: -r[5])
    _write_csv(out / "lineup_effects.csv",
               ("team", "players", "n_shifts", "mean", "sd", "score", "frac_positive"), lineup_rows)

    if args.external:
        ext = _read_external(args.external)
        joined = [(s.name, s.impact_score, ext[s.name]) for s in scores if s.name in ext]
        _write_csv(out / "external_join.csv", ("player", "impact_score", "external"), joined)
        if joined and not args.no_figures:
            from . import plotting
            plotting.scatter([r[2] for r in joined], [r[1] for r in joined],
                             out / "external_scatter.png", "external metric", "impact score")

    if not args.no_figures:
        from . import plotting
        plotting.densities(curves, out / "player_densities.png")
        plotting.boxplots({t[len(TEAM_PREFIX):]: draws[t] for t in teams}, out / "team_effects.png")
        for p in focus:
            near = [q for q, _ in metrics.similar_players(prof_list, p, args.similar_k) if q in draws]
            plotting.boxplots({q: draws[q] for q in [p] + near}, out / f"similar_{p}.png")
    print(f"report for {len(scores)} players and {len(teams)} teams -> {out}")


def _read_external(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise ValidationError(f"{path}: external metric file needs columns player,value")
        return {row[0]: float(row[1]) for row in reader if row}


def cmd_matchup(args):
    draws = read_draws(_require(args.draws, "draws"))
    for flag in ("home", "away", "home_team", "away_team"):
        if not getattr(args, flag):
            raise ValidationError(f"--{flag.replace('_', '-')} is required")
    for p in args.home + args.away:
        if p not in draws:
            raise ValidationError(f"player {p!r} not found in draws file {args.draws}")
    for t in (args.home_team, args.away_team):
        if TEAM_PREFIX + t not in draws:
            raise ValidationError(f"team {t!r} not found in draws file {args.draws}")
    rng = np.random.default_rng(derive_seed(args.seed, "matchup"))
    pred = metrics.matchup_predict(draws, args.home, args.home_team, args.away, args.away_team,
                                   rng=rng)
    out = _out(args)
    _write_csv(out / "matchup_samples.csv", ("draw", "deterministic", "sample"),
               [(i, d, s) for i, (d, s) in enumerate(zip(pred.deterministic.tolist(),
                                                         pred.samples.tolist()))])
    _write_csv(out / "matchup_summary.csv", ("statistic", "value"),
               [("mean", pred.mean), ("p_positive", pred.p_positive)]
               + [(f"q{q:g}", v) for q, v in pred.quantiles.items()])
    if not args.no_figures:
        from . import plotting
        plotting.densities({"predictive": metrics.kde_curve(pred.samples)},
                           out / "matchup_density.png", xlabel="change in home win probability")
    print(f"matchup mean {pred.mean:.4f}, P(>0) {pred.p_positive:.3f}")


def cmd_diagnose(args):
    shifts = read_shifts(_require(_shifts_path(args), "shifts"))
    ds = read_dataset(_require(args.dataset, "dataset"), shifts)
    out = _out(args)
    edges = diag.default_bins(args.bins)

    y1 = ds.y
    ac = diag.acf(y1, args.max_lag)
    _write_csv(out / "acf.csv", ("lag", "value"), [(i + 1, v) for i, v in enumerate(ac.tolist())])
    b = diag.binned_sd(y1, ds.wp_start, edges)
    _write_csv(out / "binned_sd.csv", ("bin_lo", "bin_hi", "count", "sd"),
               [(lo, hi, int(c), "" if np.isnan(s) else s)
                for lo, hi, c, s in zip(edges[:-1].tolist(), edges[1:].tolist(), b.counts, b.sd)])
    durations = np.array([s.end_sec - s.start_sec for s in shifts])
    _write_csv(out / "duration_y.csv", ("duration_sec", "y"), zip(durations.tolist(), y1.tolist()))

    tags = list(diag.TAGS)
    targets = dict(diag.REWEIGHT_TARGETS)
    if args.target_sd is not None:
        targets["custom"] = args.target_sd
        tags.append("custom")
    variants = {}
    for tag in tags:
        if tag == "custom":
            vds, w = diag.reweight_dataset(ds, edges, args.target_sd)
        else:
            vds, _ = diag.response_variant(ds, tag, edges)
        variants[tag] = vds
        counts, hedges = diag.histogram_counts(vds.y, bins=args.hist_bins)
        _write_csv(out / f"hist_{tag}.csv", ("bin_lo", "bin_hi", "count"),
                   zip(hedges[:-1].tolist(), hedges[1:].tolist(), counts.tolist()))

    fits = {"y1": read_draws(args.draws)} if args.draws else {}
    for tag in args.refit or []:
        if tag not in variants:
            raise ValidationError(f"unknown response variant {tag!r}")
        fits[tag] = gibbs_fit(variants[tag], _sampler_spec(args, f"diagnose-{tag}"))
    for tag, draws in fits.items():
        res = diag.residual_diagnostics(variants[tag], draws)
        suffix = "" if tag == "y1" else f"_{tag}"
        _write_csv(out / f"residuals{suffix}.csv", ("fitted", "residual"),
                   zip(res.fitted.tolist(), res.residuals.tolist()))
        _write_csv(out / f"qq{suffix}.csv", ("theoretical", "residual", "studentized"),
                   zip(res.qq_theoretical.tolist(), res.qq_sample.tolist(),
                       res.qq_studentized.tolist()))
        if not args.no_figures:
            from . import plotting
            plotting.scatter(res.fitted, res.residuals, out / f"residuals{suffix}.png",
                             "fitted", "residual")
            plotting.scatter(res.qq_theoretical, res.qq_studentized, out / f"qq{suffix}.png",
                             "normal quantile", "studentized residual", diagonal=True)
    if not args.no_figures:
        from . import plotting
        plotting.acf_plot(ac, out / "acf.png", n=y1.size)
        plotting.binned_sd_plot(b, out / "binned_sd.png")
        for tag, vds in variants.items():
            plotting.histogram(vds.y, out / f"hist_{tag}.png", tag, bins=args.hist_bins)
        plotting.scatter(durations, y1, out / "duration_y.png", "shift duration (s)",
                         "change in win probability")
    print(f"lag-1 autocorrelation {ac[0]:.3f}; diagnostics -> {out}")


def _read_scores(path):
    with open(_require(path, "scores"), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"player", "score"} <= set(reader.fieldnames or ()):
            raise ValidationError(f"{path}: needs columns player and score")
        return {r["player"]: float(r["score"]) for r in reader}


def cmd_permtest(args):
    a, b = _read_scores(args.scores_a), _read_scores(args.scores_b)
    common = sorted(set(a) & set(b))
    if len(common) < 3:
        raise ValidationError(f"only {len(common)} players in common between score files")
    x = np.array([a[p] for p in common])
    y = np.array([b[p] for p in common])
    rng = np.random.default_rng(derive_seed(args.seed, "permtest"))
    res = metrics.perm_test_corr(x, y, args.n_perm, rng)
    out = _out(args)
    _write_csv(out / "permtest.csv", ("n_players", "observed_corr", "p_value", "n_perm"),
               [(len(common), res.observed, res.p_value, args.n_perm)])
    counts, edges = np.histogram(res.null, bins=60)
    _write_csv(out / "permtest_null.csv", ("bin_lo", "bin_hi", "count"),
               zip(edges[:-1].tolist(), edges[1:].tolist(), counts.tolist()))
    if not args.no_figures:
        from . import plotting
        plotting.histogram(res.null, out / "permtest_null.png", "correlation under independence",
                           bins=60, mark=res.observed)
        plotting.scatter(x, y, out / "permtest_scatter.png", "impact score (a)",
                         "impact score (b)")
    print(f"{len(common)} players; correlation {res.observed:.3f}, p = {res.p_value:.5f}")


# ---------------------------------------------------------------------------
# argument handling

def _add_common(p):
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_sampler(p):
    p.add_argument("--burn-in", type=int, default=2000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--keep", type=int, default=1000)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--delta", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wpimpact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic event file with known effects")
    _add_common(p)
    p.add_argument("--events")
    p.add_argument("--seasons", default="2014")
    p.add_argument("--games", type=int, default=300)
    p.add_argument("--teams", type=int, default=4)
    p.add_argument("--roster", type=int, default=10)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--player-scale", type=float, default=0.01)
    p.add_argument("--team-scale", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--shifts-per-game", type=float, default=31.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="validate an event file and summarize its games")
    _add_common(p)
    p.set_defaults(out_dir=None)
    p.add_argument("--events")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("winprob", help="estimate the win-probability grid")
    _add_common(p)
    p.add_argument("--events")
    p.add_argument("--grid")
    p.add_argument("--train-seasons")
    p.add_argument("--before-date", type=_date)
    p.add_argument("--ht", type=int, default=3)
    p.add_argument("--hl", type=int, default=2)
    p.add_argument("--probit", action="store_true", help="also fit the probit comparator")
    p.set_defaults(func=cmd_winprob)

    p = sub.add_parser("build", help="segment shifts and write the regression dataset")
    _add_common(p)
    p.add_argument("--events")
    p.add_argument("--grid")
    p.add_argument("--dataset")
    p.add_argument("--shifts")
    p.add_argument("--apply-season")
    p.add_argument("--before-date", type=_date)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    _add_common(p)
    _add_sampler(p)
    p.add_argument("--dataset")
    p.add_argument("--draws")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="impact scores, rankings, similarity and lineups")
    _add_common(p)
    p.add_argument("--draws")
    p.add_argument("--shifts")
    p.add_argument("--dataset", help="locates the companion shifts file")
    p.add_argument("--players", type=_csv_list)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--similar-k", type=int, default=4)
    p.add_argument("--min-shifts", type=int, default=1)
    p.add_argument("--lineup-min-shifts", type=int, default=1)
    p.add_argument("--external", help="CSV of player,value to join with impact scores")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("matchup", help="posterior predictive for two lineups")
    _add_common(p)
    p.add_argument("--draws")
    p.add_argument("--home", type=_csv_list)
    p.add_argument("--away", type=_csv_list)
    p.add_argument("--home-team")
    p.add_argument("--away-team")
    p.set_defaults(func=cmd_matchup)

    p = sub.add_parser("diagnose", help="residual, autocorrelation and reweighting diagnostics")
    _add_common(p)
    _add_sampler(p)
    p.add_argument("--dataset")
    p.add_argument("--shifts")
    p.add_argument("--draws")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--target-sd", type=float)
    p.add_argument("--max-lag", type=int, default=20)
    p.add_argument("--hist-bins", type=int, default=60)
    p.add_argument("--refit", type=_csv_list, help="response variants to refit, e.g. y2,y5")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("permtest", help="permutation test of correlation between score files")
    _add_common(p)
    p.add_argument("--scores-a")
    p.add_argument("--scores-b")
    p.add_argument("--n-perm", type=int, default=10_000)
    p.set_defaults(func=cmd_permtest)
    return parser


def _read_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}: expected key=value", i)
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        cfg = _read_config(args.config)
        defaults = {}
        for key, raw in cfg.items():
            if key not in known or key in ("config", "func"):
                raise ValidationError(f"{args.config}: unknown key {key!r} for {args.command}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = action.type(raw) if action.type else raw
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
