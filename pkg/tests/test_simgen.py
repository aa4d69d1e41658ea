import io
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from wpimpact.errors import ValidationError
from wpimpact.pbp import parse_events, segment_shifts, write_events
from wpimpact.simgen import SimConfig, generate_season, read_truth, true_effects, write_truth


def test_shift_rate_calibration():
    logs, _ = generate_season(SimConfig(n_games=200, seed=1))
    per_game = np.mean([len(segment_shifts(g)) for g in logs])
    assert 28 <= per_game <= 34


def test_null_home_win_fraction():
    logs, _ = generate_season(SimConfig(n_games=1000, player_scale=0.0, seed=2,
                                        shifts_per_game=8))
    frac = np.mean([g.home_won for g in logs])
    assert abs(frac - 0.5) < 3 * np.sqrt(0.25 / 1000)


def test_same_seed_same_logs():
    cfg = SimConfig(n_games=5, seed=3)
    assert generate_season(cfg) == generate_season(cfg)
    assert generate_season(cfg)[0] != generate_season(replace(cfg, seed=4))[0]


def test_logs_pass_validation_after_round_trip():
    logs, _ = generate_season(SimConfig(n_games=30, seed=5, sigma=0.2, player_scale=0.05))
    buf = io.StringIO()
    write_events(logs, buf)
    assert parse_events(buf.getvalue().encode()) == logs
    assert all(g.final_score[0] != g.final_score[1] for g in logs)


def _win_fraction(effect, n_games, seed):
    cfg = SimConfig(n_teams=2, roster_size=5, n_games=n_games, player_scale=0.0, sigma=0.0,
                    shifts_per_game=4, seed=seed, player_effects={"T00P00": effect})
    logs, _ = generate_season(cfg)
    wins = sum((g.home_team == "T00") == g.home_won for g in logs)
    return wins, len(logs)


def test_player_effect_raises_team_win_fraction():
    lo_w, n = _win_fraction(0.003, 2000, 6)
    hi_w, _ = _win_fraction(0.01, 2000, 7)
    assert stats.binomtest(lo_w, n, 0.5, alternative="greater").pvalue < 0.01
    # one-sided two-proportion test between the two effect levels
    p1, p2 = lo_w / n, hi_w / n
    pool = (lo_w + hi_w) / (2 * n)
    z = (p2 - p1) / np.sqrt(2 * pool * (1 - pool) / n)
    assert stats.norm.sf(z) < 0.01


def test_truth_layout_and_round_trip(tmp_path):
    cfg = SimConfig(n_teams=3, roster_size=6, team_scale=0.02)
    truth = true_effects(cfg)
    players = [k for k in truth if k.startswith("T0") and "P" in k]
    assert len(players) == 18
    vals = sorted(truth[p] for p in players if p.startswith("T01"))
    np.testing.assert_allclose(vals, np.linspace(-0.01, 0.01, 6))
    assert sorted(truth[f"team:T0{k}"] for k in range(3)) == pytest.approx([-0.02, 0, 0.02])
    write_truth(truth, tmp_path / "t.csv")
    assert read_truth(tmp_path / "t.csv") == truth


@pytest.mark.parametrize("kw", [dict(n_teams=1), dict(roster_size=4), dict(shifts_per_game=3),
                                dict(n_games=0)])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        generate_season(SimConfig(**kw))


def test_season_dates_and_labels():
    logs, _ = generate_season(SimConfig(n_games=10, season=2012))
    assert all(g.season == 2012 for g in logs)
    assert str(logs[0].date) == "2011-10-29"
