import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st

from crashlab.crashsim import CrashTrace, RomModel, build_rom, integrate
from crashlab.doe import DesignPoint
from crashlab.errors import InconsistentTrace, UndefinedMetric
from crashlab.forming import FormingOutcome
from crashlab.metrics import (
    crush_load_efficiency,
    deceleration_from_velocity,
    energy_absorbed,
    extract_metrics,
    intrusion,
    peak_deceleration,
)

V0 = 9.7222


def synthetic(force, mass=100.0, dt=1e-5, displacement=None, velocity=None,
              ke=None, ie=None, diss=None):
    force = np.asarray(force, dtype=float)
    n = len(force)
    zeros = np.zeros(n)
    return CrashTrace(
        dt_out=dt, duration=dt * (n - 1), mass=mass, force=force,
        displacement=zeros if displacement is None else np.asarray(displacement, float),
        velocity=zeros if velocity is None else np.asarray(velocity, float),
        kinetic_energy=zeros if ke is None else np.asarray(ke, float),
        internal_energy=zeros if ie is None else np.asarray(ie, float),
        dissipated_energy=zeros if diss is None else np.asarray(diss, float),
    )


def arrest_trace(mass=100.0, v0=V0, n=1001, dt=1e-5):
    """Constant force bringing the mass to rest exactly at the last sample."""
    t = np.arange(n) * dt
    T = t[-1]
    decel = v0 / T
    v = v0 - decel * t
    x = v0 * t - 0.5 * decel * t * t
    ke = 0.5 * mass * v * v
    diss = 0.5 * mass * v0 * v0 - ke
    force = np.full(n, mass * decel)
    force[0] = 0.0
    return synthetic(force, mass, dt, x, v, ke, np.zeros(n), diss)


def elastic_trace():
    rom = RomModel(mass=105.0, k_elastic=1e8, characteristic_length=0.254,
                   yield_force=math.inf, hardening_multiplier=1.3, hardening_exponent=0.64,
                   damage_onset=math.inf, damage_ultimate=math.inf, ultimate_damage=0.99,
                   damping_beta=0.0)
    return rom, integrate(rom, v0=V0)


def test_cle_constant_force():
    assert crush_load_efficiency(synthetic([0, 5, 5, 5, 5, 0, 0])) == 1.0


def test_cle_triangle():
    ramp = np.concatenate([np.arange(0, 101), np.arange(99, -1, -1)]).astype(float)
    # positive samples 1..100..1: mean is 100^2 / 199, peak 100
    assert crush_load_efficiency(synthetic(ramp)) == pytest.approx(100.0 / 199.0)
    fine = np.concatenate([np.linspace(0, 1, 5001), np.linspace(1, 0, 5001)[1:]])
    assert crush_load_efficiency(synthetic(fine)) == pytest.approx(0.5, rel=1e-3)


def test_cle_all_zero_is_undefined():
    with pytest.raises(UndefinedMetric):
        crush_load_efficiency(synthetic(np.zeros(10)))


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 1e6)), min_size=2, max_size=50)
       .filter(lambda f: max(f) > 0),
       st.floats(1e-3, 1e3))
@example([87381.33910703534] * 3, 1.0)  # mean rounds one ulp above the peak
def test_cle_scale_invariant_and_bounded(force, lam):
    tr = synthetic(force)
    cle = crush_load_efficiency(tr)
    assert 0.0 < cle <= 1.0
    assert crush_load_efficiency(synthetic(np.asarray(force) * lam)) == pytest.approx(cle, rel=1e-9)


def test_full_arrest_energy():
    tr = arrest_trace()
    assert energy_absorbed(tr) == pytest.approx(0.5 * 100 * V0 ** 2, rel=1e-6)
    assert energy_absorbed(tr) == pytest.approx(4726.06, abs=0.01)
    assert peak_deceleration(tr) == pytest.approx(972.22, rel=1e-6)
    assert deceleration_from_velocity(tr) == pytest.approx(972.22, rel=1e-6)


def test_zero_velocity_trace():
    tr = synthetic(np.zeros(11))
    assert energy_absorbed(tr) == 0.0
    assert intrusion(tr) == 0.0
    assert peak_deceleration(tr) == 0.0


def test_inconsistent_energy_channels():
    tr = arrest_trace()
    tr.dissipated_energy = tr.dissipated_energy * 0.5
    with pytest.raises(InconsistentTrace):
        energy_absorbed(tr)


def test_intrusion_is_max_displacement():
    tr = synthetic(np.zeros(4), displacement=[0, 0.010, 0.019, 0.012])
    assert intrusion(tr) == pytest.approx(19.0)


def test_elastic_case_metrics():
    rom, tr = elastic_trace()
    m, k = rom.mass, rom.k_elastic
    omega = math.sqrt(k / m)
    e0 = 0.5 * m * V0 ** 2
    assert intrusion(tr) == pytest.approx(V0 * math.sqrt(m / k) * 1000.0, rel=1e-3)
    assert peak_deceleration(tr) == pytest.approx(V0 * omega, rel=1e-3)
    # Smooth trace: force/mass agrees with differentiated velocity.
    assert deceleration_from_velocity(tr) == pytest.approx(peak_deceleration(tr), rel=0.02)
    # Bounce: EA equals the peak strain energy and the kinetic energy comes back.
    assert energy_absorbed(tr) == pytest.approx(e0, rel=1e-3)
    assert energy_absorbed(tr) == pytest.approx(tr.internal_energy.max(), rel=1e-4)
    assert tr.kinetic_energy[-1] == pytest.approx(e0, rel=1e-4)


def test_trailing_free_flight_does_not_change_peaks():
    _, tr = elastic_trace()
    n = 200
    extended = synthetic(
        np.concatenate([tr.force, np.zeros(n)]), tr.mass, tr.dt_out,
        np.concatenate([tr.displacement, tr.displacement[-1] + tr.velocity[-1] * tr.dt_out * np.arange(1, n + 1)]),
        np.concatenate([tr.velocity, np.full(n, tr.velocity[-1])]),
        np.concatenate([tr.kinetic_energy, np.full(n, tr.kinetic_energy[-1])]),
        np.concatenate([tr.internal_energy, np.zeros(n)]),
        np.concatenate([tr.dissipated_energy, np.full(n, tr.dissipated_energy[-1])]),
    )
    assert intrusion(extended) == intrusion(tr)
    assert peak_deceleration(extended) == peak_deceleration(tr)
    assert crush_load_efficiency(extended) == crush_load_efficiency(tr)


def test_metrics_on_simulated_point():
    p = DesignPoint(8, 0.25, "A", 5.0, 300.0, 120.0, 20.0)
    f = FormingOutcome(True, 1.0, 1.0, 105.0)
    tr = integrate(build_rom(p, f))
    m = extract_metrics(tr)
    assert 0.0 < m.cle <= 1.0
    assert 0.0 < m.ea <= tr.initial_energy
    assert m.intrusion > 0 and m.deceleration > 0
