import csv
import math

import numpy as np
import pytest
from scipy.special import jv

from sturmlog.dynamics import (LatticeState, TransportRecord, build_box, dense_propagate,
                               energy, evolve, fit_log_scaling, fit_power_scaling, moment,
                               propagate, survival, time_average, time_grid, transport_run,
                               write_records_csv)
from sturmlog.errors import (BoundaryContamination, CoverageGap, DegenerateFit,
                             ValidationError)
from sturmlog.sturmian import PotentialSpec


def test_build_box_layout(fib1):
    op = build_box(fib1, 8)
    assert op.size == 17 and op.offset == -8
    H = op.dense()
    assert np.allclose(H, H.T)
    assert np.all(np.diag(H, 1) == 1.0)
    assert set(np.diag(H).tolist()) <= {0.0, 1.0}
    assert op.spectral_radius_bound == 3.0
    x = np.random.default_rng(1).standard_normal(op.size)
    assert np.allclose(op.apply(x), H @ x)
    with pytest.raises(ValidationError):
        build_box(fib1, 2)


def test_delta_state(fib1):
    op = build_box(fib1, 8)
    s = LatticeState.delta(op, 3)
    assert s.norm == 1.0 and s.amplitudes[11] == 1.0
    assert moment(s, 2.0) == 9.0
    with pytest.raises(ValidationError):
        LatticeState.delta(op, 9)
    with pytest.raises(ValidationError):
        moment(s, 0.0)


def test_chebyshev_matches_dense(fib1):
    op = build_box(fib1, 256)
    s0 = LatticeState.delta(op)
    for t in (0.5, 7.0, 60.0):
        a = propagate(op, s0, t)
        b = dense_propagate(op, s0, t)
        assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-12
        assert a.time == t


def test_time_reversal_and_conservation(fib1):
    op = build_box(fib1, 512)
    s0 = LatticeState.delta(op)
    s = propagate(op, s0, 100.0)
    back = propagate(op, s, -100.0)
    assert np.max(np.abs(back.amplitudes - s0.amplitudes)) < 1e-12
    assert abs(s.norm - 1) < 1e-12
    assert abs(energy(op, s) - energy(op, s0)) < 1e-12


def test_free_motion(free):
    op = build_box(free, 4096)
    s0 = LatticeState.delta(op)
    s = propagate(op, s0, 3.0)
    # free lattice: <X^2>(t) = 2 t^2, survival J0(2t)^2
    assert moment(s, 2.0) == pytest.approx(18.0, abs=1e-10)
    assert survival(propagate(op, s0, 2.0), s0) == pytest.approx(jv(0, 4.0) ** 2, abs=1e-12)


def test_evolve_steps_and_contamination(free):
    op = build_box(free, 64)
    s0 = LatticeState.delta(op)
    states = evolve(op, s0, 1.0, 5)
    assert len(states) == 6 and states[-1].time == 5.0
    with pytest.raises(BoundaryContamination) as exc:
        evolve(op, s0, 2.0, 100)
    assert 0 < exc.value.time < 200
    assert len(exc.value.states) >= 1
    with pytest.raises(ValidationError):
        evolve(op, s0, -1.0, 2)


def test_time_average_examples():
    t = np.linspace(0, 10, 101)
    assert time_average(np.column_stack([t, np.full_like(t, 3.0)]), 10) == pytest.approx(3.0)
    assert time_average(np.column_stack([t, t]), 10) == pytest.approx(5.0)
    # T between samples: interpolated
    assert time_average(np.column_stack([t, t]), 9.95) == pytest.approx(9.95 / 2)
    t = np.linspace(0, 2 * math.pi, 1001)
    assert abs(time_average(np.column_stack([t, np.cos(t)]), 2 * math.pi)) < 1e-10


def test_time_average_coverage():
    t = np.array([0.0, 1.0, 2.0])
    with pytest.raises(CoverageGap):
        time_average(np.column_stack([t, t]), 5.0)
    with pytest.raises(CoverageGap):
        time_average(np.column_stack([t + 1, t]), 2.0)
    t = np.array([0.0, 0.1, 5.0])
    with pytest.raises(CoverageGap):
        time_average(np.column_stack([t, t]), 5.0)


def test_time_grid():
    g = time_grid(1000.0, 10.0, 8)
    assert g[0] == 0.0 and g[-1] == 1000.0
    assert np.all(np.diff(g) > 0)
    for T in (10.0, 100.0, 1000.0):
        assert T in g
        assert np.max(np.diff(g[g <= T])) <= 0.3 * T


def _synthetic(kappa):
    T = np.logspace(1, 5, 13)
    return [TransportRecord(T=float(x), survival_avg=2.0 * math.log(x) ** -kappa,
                            moment_avg={2.0: 0.5 * math.log(x) ** kappa}) for x in T]


def test_fit_log_scaling_synthetic():
    recs = _synthetic(4.0)
    f = fit_log_scaling(recs, 2.0, "moment")
    assert f.kappa_hat == pytest.approx(4.0, abs=1e-10)
    assert f.D_hat == pytest.approx(0.5)
    g = fit_log_scaling(recs, 2.0, "survival")
    assert g.kappa_hat == pytest.approx(4.0, abs=1e-10)
    assert fit_power_scaling(recs).residual > 0
    with pytest.raises(DegenerateFit):
        fit_log_scaling(recs[:5])
    with pytest.raises(DegenerateFit):
        fit_log_scaling([r for r in recs if r.T < 500] * 2)  # under three decades


def test_transport_run_and_csv(fib1, tmp_path):
    op = build_box(fib1, 512)
    run = transport_run(op, None, [10.0, 30.0, 100.0], moments=(1.0, 2.0), points_per_decade=16)
    assert len(run.records) == 3
    assert run.times[0] == 0.0
    for r in run.records:
        assert 0 < r.survival_avg <= 1
        assert r.moment_avg[1.0] > 0 and r.moment_avg[2.0] > r.moment_avg[1.0]
    path = tmp_path / "transport.csv"
    write_records_csv(run.records, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["T", "survival_avg", "moment_avg[m=1]", "moment_avg[m=2]"]
    assert float(rows[1][0]) == 10.0


def test_transport_run_contamination(free):
    op = build_box(free, 32)
    with pytest.raises(BoundaryContamination):
        transport_run(op, None, [100.0])


def test_constant_potential_only_phases():
    # V = c shifts the energy: moments are those of the free lattice
    a = build_box(PotentialSpec.constant(0.7), 256)
    b = build_box(PotentialSpec.free(), 256)
    sa = propagate(a, LatticeState.delta(a), 5.0)
    sb = propagate(b, LatticeState.delta(b), 5.0)
    assert moment(sa, 2.0) == pytest.approx(moment(sb, 2.0), rel=1e-12)
