import numpy as np
import pytest

from churnlab.eventlog import EventKind, EventLog, PlayerEvent, daily_bins
from churnlab.features import (
    AGGREGATE_COLUMNS, GAME_MODES, TEMPORAL_COLUMNS, Dataset, apply_scaler, aggregate_features, featurize,
    fit_scaler, flat_feature_names, flatten, temporal_features, temporal_matrix,
)
from churnlab.labeling import ChurnConfig, ChurnLabel, ConfigError, Sample
from churnlab.synth import PlayerProfile

K = EventKind


def _profile(pid="a", install=0, **kw):
    shares = np.zeros(len(GAME_MODES))
    shares[:2] = (0.25, 0.75)
    base = dict(player_id=pid, archetype="casual", install_day=install, platform="ios", acquisition="organic",
                fb_connected=True, skill=0.5, progression=tuple(shares))
    return PlayerProfile(**{**base, **kw})


def _day(pid, day, starts, done, fail, moves=(), points=(), sessions=1, purchase=False):
    ev = [PlayerEvent(pid, day, K.SESSION_START) for _ in range(sessions)]
    ev += [PlayerEvent(pid, day, K.MISSION_START) for _ in range(starts)]
    ev += [PlayerEvent(pid, day, K.MISSION_COMPLETE, m, p) for m, p in zip(moves[:done], points[:done])]
    ev += [PlayerEvent(pid, day, K.MISSION_FAIL, m, p) for m, p in zip(moves[done:done + fail], points[done:done + fail])]
    if purchase:
        ev.append(PlayerEvent(pid, day, K.PURCHASE))
    return ev


def test_layout_sizes():
    assert len(TEMPORAL_COLUMNS) == 10 and len(AGGREGATE_COLUMNS) == 36
    assert len(set(AGGREGATE_COLUMNS)) == 36


def test_temporal_matrix_by_hand():
    # sessions, started, completed, failed, moves, points, purchases
    counts = np.array([[2, 4, 1, 2, 60, 400, 1], [0, 0, 0, 0, 0, 0, 0]])
    m = temporal_matrix(counts)
    np.testing.assert_allclose(m[0], [1, 2, 4, 60, 100, 15, 1, 0.25, 2, 1])
    np.testing.assert_array_equal(m[1], 0)


def test_temporal_features_from_bins():
    events = _day("a", 10, 3, 2, 1, moves=(10, 20, 30), points=(100, 200, 0), purchase=True)
    log = EventLog.from_events(events)
    m = temporal_features(daily_bins(log, "a", 0, 14))
    assert m.shape == (14, 10)
    np.testing.assert_allclose(m[10], [1, 1, 3, 60, 100, 20, 2, 2 / 3, 1, 1])
    assert not np.delete(m, 10, axis=0).any()
    with pytest.raises(ValueError):
        temporal_features(daily_bins(log, "a", 0, 13))


def test_flatten_is_day_major_and_names_count_days_back():
    t = np.arange(14 * 10, dtype=float).reshape(14, 10)
    flat = flatten(t)
    np.testing.assert_array_equal(flat[:10], t[0])
    names = flat_feature_names()
    assert len(names) == 140
    assert names[0] == "activity_14" and names[-10] == "activity_1" and names[-1] == "converted_1"
    both = flatten(t, np.ones(36), include_aggregate=True)
    assert both.shape == (176,)


def test_aggregate_features_by_hand():
    t = 100
    events = (
        _day("a", 10, 2, 2, 0, moves=(5, 5), points=(50, 50), purchase=True)  # outside lookback
        + _day("a", 90, 4, 1, 2, moves=(10, 20, 40), points=(200, 100, 0), sessions=2)
        + _day("a", 95, 1, 1, 0, moves=(60,), points=(100,), purchase=True)
        + _day("a", 100, 5, 5, 0, moves=(1,) * 5, points=(1,) * 5)  # on the prediction date: ignored
    )
    log = EventLog.from_events(events)
    agg = dict(zip(AGGREGATE_COLUMNS, aggregate_features(log, _profile(install=5), t, lookback_days=30)))
    moves, sessions, started = 130, 3, 5
    minutes = (6 * moves + 30 * sessions) / 60
    assert agg["fb_connected"] == 1
    assert agg["monthssinceinstall"] == pytest.approx(95 / 30.44)
    assert agg["num_activedays"] == 2
    assert agg["maxlvl"] == 1 + 4  # lifetime completions before t
    assert agg["minutesplayed_sum"] == pytest.approx(minutes)
    assert agg["minutes_perday_avg"] == pytest.approx(minutes / 2)
    assert agg["gamestarted_sum"] == sessions and agg["levelstarted_sum"] == started
    assert agg["completionrate"] == pytest.approx(2 / 5)
    assert agg["abandonedrate"] == pytest.approx(1 / 5)
    coins = 10 * 2 + 5 * (moves // 50)
    assert agg["coinsused"] == coins and agg["coinused_perlevel"] == pytest.approx(coins / 5)
    assert agg["coinsreceived"] == pytest.approx(400 / 100)
    assert agg["continuesused_perlevel"] == pytest.approx(2 / 5)
    assert agg["boostersused_perlevel"] == pytest.approx(2 / 5)
    assert agg["transaction_sum"] == 1 and agg["sum_spend"] == pytest.approx(4.99)
    assert agg["total_spend"] == pytest.approx(2 * 4.99)
    assert agg["progressionrate"] == pytest.approx(2 / 2)
    assert agg["daily"] == pytest.approx(0.25 * 4) and agg["main"] == pytest.approx(0.75 * 4)
    assert agg["platform_ios"] == 1 and agg["acquisition_organic"] == 1
    assert sum(agg[f"platform_{p}"] for p in ("android", "fireos", "ios", "kindle")) == 1


def test_aggregate_rejects_unknown_category():
    log = EventLog.from_events(_day("a", 1, 0, 0, 0))
    with pytest.raises(ConfigError):
        aggregate_features(log, _profile(platform="palm"), 10)


def test_featurize_uses_the_window_before_the_prediction_date():
    events = _day("a", 20, 1, 1, 0, moves=(9,), points=(10,)) + _day("a", 33, 2, 0, 0)
    log = EventLog.from_events(events)
    samples = [Sample("a", 34, ChurnLabel.NONCHURNER), Sample("a", 21, ChurnLabel.CHURNER)]
    data = featurize(log, {"a": _profile()}, samples)
    assert len(data) == 2 and data.label.tolist() == [0, 1]
    # day 33 is the most recent row for the first sample, day 20 for the second
    assert data.temporal[0, -1, 2] == 2 and data.temporal[0, 0, 2] == 1
    assert data.temporal[1, -1, 3] == 9
    with pytest.raises(KeyError):
        featurize(log, {}, samples)


def test_dataset_round_trip(tmp_path, small_dataset):
    path = small_dataset.save(tmp_path / "ds", {"config_hash": "abc"})
    back = Dataset.load(path)
    for name in ("player_id", "prediction_date", "temporal", "aggregate", "label"):
        np.testing.assert_array_equal(getattr(back, name), getattr(small_dataset, name))
    assert back.meta == {"config_hash": "abc"}
    sub = small_dataset.subset([3, 1])
    assert sub[0].player_id == small_dataset[3].player_id


def test_scaler_standardizes_and_passes_constants_through(small_dataset):
    data = small_dataset.subset(np.arange(len(small_dataset)))
    data.aggregate[:, 5] = 3.0
    s = fit_scaler(data)
    scaled = apply_scaler(s, data)
    flat_t = scaled.temporal.reshape(-1, 10)
    moving = data.temporal.reshape(-1, 10).std(axis=0) > 0
    np.testing.assert_allclose(flat_t[:, moving].mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(flat_t[:, moving].std(axis=0), 1, atol=1e-9)
    const = data.aggregate.std(axis=0) == 0
    assert const[5]
    np.testing.assert_array_equal(scaled.aggregate[:, const], data.aggregate[:, const])


def test_churn_config_observation_days_feed_the_matrix():
    events = _day("a", 5, 1, 0, 0)
    log = EventLog.from_events(events)
    data = featurize(log, {"a": _profile()}, [Sample("a", 7, ChurnLabel.CHURNER)], ChurnConfig(observation_days=7, sampling_spacing_days=8))
    assert data.temporal.shape == (1, 7, 10)
