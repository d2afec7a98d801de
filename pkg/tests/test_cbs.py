import numpy as np
import pytest

from fockscatter.cbs import (
    CbsExperimentConfig,
    MIN_REALIZATIONS_FOR_CI,
    format_cbs_records,
    onset_scan,
    run_cbs_experiment,
)
from fockscatter.model import DisorderSpec

RING = {"L": 3, "geometry": "ring", "J": 1.0, "U": 0.8}


def _config(realizations=12, times=(0.0, 0.6), threads=1, seed=17, **model_extra):
    mc = dict(RING, **model_extra)
    return CbsExperimentConfig(
        model_config=mc,
        disorder=DisorderSpec(width=1.0, master_seed=seed,
                              realization_count=realizations),
        n_i=(1, 1, 1),
        times=times,
        mc_samples=32,
        master_seed=seed,
        threads=threads,
    )


def test_zero_time_ratio_is_one():
    res = run_cbs_experiment(_config())
    s = res.return_stats[0]
    assert s.exact_mean == pytest.approx(1.0, abs=1e-12)
    assert s.classical_mean == pytest.approx(1.0, abs=1e-12)
    assert s.ratio == pytest.approx(1.0, abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        _config(times=(1.0, 0.5))
    with pytest.raises(ValueError):
        CbsExperimentConfig(
            model_config=RING,
            disorder=DisorderSpec(width=1.0, master_seed=0, realization_count=2),
            n_i=(1, 1, 1), times=(1.0,), mc_samples=0, master_seed=0)


def test_few_realizations_refuse_confidence_intervals():
    res = run_cbs_experiment(_config(realizations=MIN_REALIZATIONS_FOR_CI - 1))
    s = res.return_stats[1]
    assert np.isfinite(s.ratio)
    assert np.isnan(s.ci_low) and np.isnan(s.ci_high)


def test_enough_realizations_give_bracketing_intervals():
    res = run_cbs_experiment(_config(realizations=12))
    s = res.return_stats[1]
    assert s.ci_low <= s.ratio <= s.ci_high


def test_thread_count_does_not_change_results():
    a = run_cbs_experiment(_config(threads=1))
    b = run_cbs_experiment(_config(threads=2))
    assert np.array_equal(a.exact_return_per_realization,
                          b.exact_return_per_realization)
    assert np.array_equal(a.classical_return_per_realization,
                          b.classical_return_per_realization)
    assert [s.ratio for s in a.return_stats] == [s.ratio for s in b.return_stats]


def test_realizations_are_stable_under_ensemble_growth():
    # realization r depends only on (master_seed, r), not on the total count
    small = run_cbs_experiment(_config(realizations=4))
    large = run_cbs_experiment(_config(realizations=8))
    assert np.array_equal(small.exact_return_per_realization,
                          large.exact_return_per_realization[:4])


def test_trs_flag():
    assert run_cbs_experiment(_config(realizations=2)).is_trs
    broken = run_cbs_experiment(_config(realizations=2, flux=np.pi / 8))
    assert not broken.is_trs


def test_classical_return_is_shell_probability():
    res = run_cbs_experiment(_config())
    assert np.all(res.classical_return_per_realization >= 0.0)
    assert np.all(res.classical_return_per_realization <= 1.0)


def test_transfer_states_exclude_return_state():
    res = run_cbs_experiment(_config())
    for states in res.transfer_states:
        assert (1, 1, 1) not in states


def test_onset_scan_reports_first_crossing():
    scan = onset_scan(_config(), threshold=0.5)
    # ratio at t=0 is exactly 1 > 0.5, so the crossing is the first time
    assert scan.crossing_time == 0.0
    assert scan.return_ratios[0] == pytest.approx(1.0, abs=1e-12)
    none_found = onset_scan(_config(), threshold=1e9)
    assert none_found.crossing_time is None


def test_format_cbs_records():
    res = run_cbs_experiment(_config())
    text = format_cbs_records(res)
    lines = text.splitlines()
    assert lines[0].startswith("# t\tclass\t")
    assert len(lines) == 1 + 2 * len(res.times)
    fields = lines[1].split("\t")
    assert fields[1] == "return"
    assert int(fields[7]) == res.realization_count
