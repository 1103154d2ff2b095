import numpy as np
import pytest

from churnlab.evaluation import roc_auc
from churnlab.eventlog import ingest
from churnlab.labeling import ChurnConfig, build_samples, sampling_dates
from churnlab.synth import (
    ARCHETYPES, SynthConfig, decline_churn_probability, export, generate, player_rng, read_profiles, simulate_player,
)


@pytest.fixture(scope="module")
def population():
    cfg = SynthConfig(player_count=3000, seed=1)
    log, profiles, traces = generate(cfg, with_traces=True)
    return cfg, log, profiles, traces


def test_same_seed_same_log_other_seed_differs():
    cfg = SynthConfig(player_count=50, seed=9)
    a, pa = generate(cfg)
    b, pb = generate(cfg)
    c, _ = generate(SynthConfig(player_count=50, seed=10))
    assert a == b and pa == pb
    assert a != c


def test_players_are_independent_streams():
    # player i does not depend on how many players are generated
    small, _ = generate(SynthConfig(player_count=5, seed=3))
    big, _ = generate(SynthConfig(player_count=20, seed=3))
    for pid in small.player_ids:
        assert list(small.events(pid)) == list(big.events(pid))
    x = player_rng(3, 0).random(4)
    assert not np.array_equal(x, player_rng(3, 1).random(4))


def test_empty_population():
    log, profiles = generate(SynthConfig(player_count=0))
    assert len(log) == 0 and profiles == []


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(archetype_weights={"newbie": 1.0})
    with pytest.raises(ValueError):
        SynthConfig(weekly_amplitude=1.5)
    with pytest.raises(ValueError):
        SynthConfig(day_span=40)
    with pytest.raises(ValueError):
        SynthConfig.from_dict({"players": 3})


def test_events_respect_install_and_churn(population):
    cfg, log, profiles, traces = population
    for tr in traces[:300]:
        days = log.days_of(tr.profile.player_id)
        if days.size == 0:
            continue
        assert days.min() == tr.profile.install_day
        assert days.max() < cfg.day_span
        if tr.churn_day is not None:
            assert days.max() <= tr.churn_day


def test_mission_bookkeeping(population):
    _, log, _, _ = population
    from churnlab.eventlog import daily_counts
    for pid in log.player_ids[:200]:
        table = daily_counts(log, pid, 0, 365)
        started, done, failed = table[:, 1], table[:, 2], table[:, 3]
        assert np.all(done + failed <= started)
        active = table.any(axis=1)
        assert np.all(table[active, 0] >= 1)  # every active day has a session


def test_weekly_periodicity(population):
    cfg, log, _, _ = population
    active = np.zeros(cfg.day_span)
    for pid in log.player_ids:
        active[np.unique(log.days_of(pid))] += 1
    x = active[100:320]
    t = np.arange(x.size)
    x = x - np.polyval(np.polyfit(t, x, 2), t)
    ac = lambda k: np.corrcoef(x[k:], x[:-k])[0, 1]  # noqa: E731
    assert ac(7) > ac(3)
    assert ac(7) > 0.3


def test_archetype_mix(population):
    _, _, profiles, _ = population
    counts = {a: sum(p.archetype == a for p in profiles) for a in ARCHETYPES}
    weights = SynthConfig().archetype_weights
    for a in ARCHETYPES:
        assert counts[a] / len(profiles) == pytest.approx(weights[a], abs=0.03)


def test_decline_churn_probability():
    cfg = SynthConfig()
    # full decline: 1 - prod(1 - h * k / L)
    h = 0.5
    ref = 1 - np.prod(1 - h * np.arange(1, 11) / 10)
    assert decline_churn_probability(h, 1, cfg) == pytest.approx(ref)
    assert decline_churn_probability(h, 10, cfg) == pytest.approx(h)


def test_aggregates_carry_signal_beyond_the_decline(population):
    """A Bayes classifier that also knows the archetype beats one that only
    sees the latent decline state, so context is worth modelling."""
    cfg, log, _, traces = population
    cc = ChurnConfig()
    samples = build_samples(log, sampling_dates(202, cc), cc, cfg.day_span)
    tr = {t.profile.player_id: t for t in traces}
    y = np.array([s.label.value == "churner" for s in samples], dtype=int)
    phase = np.array([tr[s.player_id].decline_phase[s.prediction_date - 1] for s in samples])
    gone = np.array([(tr[s.player_id].churn_day or 10**9) < s.prediction_date for s in samples])
    arch = np.array([ARCHETYPES.index(tr[s.player_id].profile.archetype) for s in samples])
    decline_key = 2 * phase + gone
    full_key = 100 * arch + decline_key
    fit = np.random.default_rng(0).random(y.size) < 0.5

    def held_out_scores(key):
        table = {k: y[fit & (key == k)].mean() for k in np.unique(key[fit])}
        return np.array([table.get(k, y[fit].mean()) for k in key[~fit]])

    auc_decline = roc_auc(held_out_scores(decline_key), y[~fit])
    auc_full = roc_auc(held_out_scores(full_key), y[~fit])
    assert auc_full > auc_decline + 0.02


def test_export_round_trip(tmp_path):
    cfg = SynthConfig(player_count=30, seed=2)
    log, profiles = generate(cfg)
    events_path, prof_path = export(log, profiles, tmp_path)
    assert ingest(events_path).log == log
    back = read_profiles(prof_path)
    assert [back[p.player_id] for p in profiles] == profiles


def test_trace_matches_generated_events():
    cfg = SynthConfig(player_count=1, seed=4)
    trace, counts = simulate_player(cfg, 0)
    log, _ = generate(cfg)
    assert np.array_equal(np.unique(log.day), counts["day"])
