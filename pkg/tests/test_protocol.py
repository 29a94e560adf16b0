import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnbuffer import ModelParams, protocol
from mnbuffer.errors import ParameterError
from mnbuffer.pulses import GaussPulse

TAU_1NS = 1000.0


def _c1po(params, tau, **kw):
    spec = protocol.design_protocol(params, tau=tau, **kw)
    return protocol.run(spec, params)


def test_ideal_storage_band():
    params = ModelParams()
    spec = protocol.design_protocol(params, losses=False)
    table = protocol.sweep_tau(spec, params, np.linspace(0.0, 2000.0, 9))
    assert table.c1po.min() >= 0.95


@pytest.mark.parametrize("rate", ["kappa", "gamma_X", "gamma_D"])
def test_c1po_non_increasing_in_loss_rates(rate):
    base = ModelParams()
    worse = dataclasses.replace(base, **{rate: 2 * getattr(base, rate)})
    assert _c1po(worse, TAU_1NS).c1po <= _c1po(base, TAU_1NS).c1po


@pytest.mark.parametrize("tau", [0.0, 15.5, 500.0, 2000.0])
def test_two_photon_results_bounded_by_ideal_counterparts(tau):
    params = ModelParams()
    two = _c1po(params, tau, initial_photons=2)
    ideal_one = _c1po(params, tau, initial_photons=1, losses=False)
    ideal_two = _c1po(params, tau, initial_photons=2, losses=False)
    assert two.c1po <= ideal_one.c1po
    assert two.c2po <= ideal_two.c2po


def test_empty_grid_gives_empty_table():
    params = ModelParams()
    table = protocol.sweep_tau(protocol.design_protocol(params), params, [])
    assert len(table) == 0
    assert table.rows().shape == (0, 3)


def test_sweep_matches_individual_runs():
    params = ModelParams()
    spec = protocol.design_protocol(params)
    taus = [0.0, 23.5, 400.0, 3000.0]
    table = protocol.sweep_tau(spec, params, taus)
    threaded = protocol.sweep_tau(spec, params, taus, workers=2)
    for k, tau in enumerate(taus):
        single = protocol.run(spec.with_tau(tau), params)
        assert table.c1po[k] == pytest.approx(single.c1po, abs=1e-8)
        assert table.c2po[k] == pytest.approx(single.c2po, abs=1e-8)
    assert np.array_equal(table.rows(), threaded.rows())


@pytest.mark.parametrize("photons, tau", [(1, 23.5), (1, 300.0), (2, 15.5)])
def test_truncation_consistency(photons, tau):
    params = ModelParams()
    spec = protocol.design_protocol(params, tau=tau, initial_photons=photons)
    small = protocol.run(spec, params)
    big = protocol.run(dataclasses.replace(spec, n_max=spec.cutoff + 1), params)
    n = spec.cutoff
    assert np.array_equal(small.series.times, big.series.times)
    assert np.max(np.abs(small.series.photons[:, :n] - big.series.photons[:, :n])) < 1e-6
    assert small.c1po == pytest.approx(big.c1po, abs=1e-6)


def test_default_cutoff_has_margin():
    params = ModelParams()
    assert protocol.design_protocol(params).cutoff == 3
    assert protocol.design_protocol(params, initial_photons=2).cutoff == 3
    assert protocol.design_protocol(params, initial_photons=3).cutoff == 4


def test_short_horizon_rejected():
    params = ModelParams()
    spec = protocol.design_protocol(params, horizon=60.0)
    with pytest.raises(ParameterError, match="vacuum Rabi"):
        protocol.run(spec, params)
    ok = spec.read.end + 5 * protocol.vacuum_rabi_period(params)
    assert dataclasses.replace(spec, horizon=ok).resolved_horizon(params) == ok


def test_invalid_inputs():
    params = ModelParams()
    with pytest.raises(ParameterError):
        protocol.design_protocol(params, initial_photons=0)
    with pytest.raises(ParameterError):
        protocol.design_protocol(params, tau=-1.0)
    with pytest.raises(ParameterError):
        protocol.sweep_tau(protocol.design_protocol(params), params, [10.0, 5.0])
    with pytest.raises(ParameterError):
        protocol.design_protocol(params, shape="gauss")


def test_timing_metadata_records_convention():
    params = ModelParams()
    res = _c1po(params, 23.5)
    t = res.timing
    assert t["tau_convention"].startswith("rect")
    spec = protocol.design_protocol(params, tau=23.5)
    assert t["read_start_ps"] - (t["write_start_ps"] + spec.write.t_acs) == pytest.approx(23.5)
    gauss = protocol.design_protocol(params, shape="gauss", gauss=(33.77 * np.pi, 7.14, 15.01), tau=10.0)
    assert isinstance(gauss.read, GaussPulse)
    assert gauss.read.t0 - gauss.write.t0 == pytest.approx(10.0 + 2 * 7.14)


def test_write_only_run_has_no_readout_metrics():
    params = ModelParams()
    res = protocol.run(protocol.design_protocol(params, readout=False), params)
    assert res.c1po is None and res.c2po is None
    assert 0.0 <= res.max_dark_after_write <= 1.0


@settings(max_examples=6)
@given(st.floats(0.0, 3000.0), st.booleans(), st.integers(1, 2))
def test_metrics_in_unit_interval(tau, losses, photons):
    params = ModelParams()
    res = _c1po(params, tau, losses=losses, initial_photons=photons)
    for m in (res.c1po, res.c2po, res.max_dark_after_write):
        assert 0.0 <= m <= 1.0


def test_refined_max_picks_parabola_vertex():
    t = np.linspace(0.0, 1.0, 11)
    y = 0.9 - (t - 0.43) ** 2
    tm, ym = protocol.refined_max(t, y, 0.0, 1.0)
    assert tm == pytest.approx(0.43, abs=1e-12)
    assert ym == pytest.approx(0.9, abs=1e-12)
    with pytest.raises(ParameterError):
        protocol.refined_max(t, y, 2.0, 3.0)
