"""Crashworthiness targets extracted from an impact trace."""

from __future__ import annotations

import numpy as np

from .crashsim import ENERGY_TOLERANCE, CrashMetrics, CrashTrace
from .errors import InconsistentTrace, InvalidArgument, UndefinedMetric


def crush_load_efficiency(tr: CrashTrace) -> float:
    """Mean contact force over peak force.

    The mean runs over samples with positive force only, so the value does
    not depend on how long the free flight after separation is recorded.
    """
    force = np.asarray(tr.force, dtype=float)
    peak = float(force.max()) if force.size else 0.0
    if not peak > 0.0:
        raise UndefinedMetric("crush load efficiency is undefined for a trace with no contact force")
    # The mean cannot exceed the peak; clip the ulp that summation can add.
    return min(1.0, float(force[force > 0.0].mean() / peak))


def energy_absorbed(tr: CrashTrace) -> float:
    """Loss of kinetic energy, cross-checked against the internal + dissipated rise."""
    ke = np.asarray(tr.kinetic_energy, dtype=float)
    e0 = float(ke[0])
    from_ke = e0 - float(ke.min())
    from_work = float(np.max(np.asarray(tr.internal_energy) + np.asarray(tr.dissipated_energy)))
    if abs(from_ke - from_work) > ENERGY_TOLERANCE * max(e0, 0.0) + 1e-12:
        raise InconsistentTrace(
            f"kinetic-energy loss {from_ke:.9g} J disagrees with absorbed work {from_work:.9g} J"
        )
    return from_ke


def intrusion(tr: CrashTrace) -> float:
    """Largest indentation in mm, elastic part included."""
    return 1000.0 * float(np.max(tr.displacement))


def peak_deceleration(tr: CrashTrace) -> float:
    if len(tr.force) < 2:
        raise InvalidArgument("peak deceleration needs at least two samples")
    return float(np.max(tr.force)) / tr.mass


def deceleration_from_velocity(tr: CrashTrace) -> float:
    """Peak of -dv/dt by central differences; only used to cross-check force/mass."""
    v = np.asarray(tr.velocity, dtype=float)
    if v.size < 3:
        raise InvalidArgument("need at least three samples for central differences")
    dvdt = np.gradient(v, tr.dt_out)
    return float(max(0.0, np.max(-dvdt)))


def contact_duration(tr: CrashTrace) -> float:
    """Time from first touch until the indentation first returns to zero.

    The return crossing is located by linear interpolation between output
    samples.  Returns the full trace duration if contact never ends.
    """
    x = np.asarray(tr.displacement, dtype=float)
    inside = np.nonzero(x > 0.0)[0]
    if inside.size == 0:
        return 0.0
    start = inside[0]
    after = np.nonzero(x[start:] <= 0.0)[0]
    if after.size == 0:
        return tr.duration
    j = start + after[0]
    frac = x[j - 1] / (x[j - 1] - x[j])
    return (j - 1 + frac) * tr.dt_out


def extract_metrics(tr: CrashTrace) -> CrashMetrics:
    return CrashMetrics(
        cle=crush_load_efficiency(tr),
        ea=energy_absorbed(tr),
        intrusion=intrusion(tr),
        deceleration=peak_deceleration(tr),
    )
