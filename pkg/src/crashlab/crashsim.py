"""Single-degree-of-freedom side-pole impact model and the closed-form reference.

The formed enclosure plus its 100 kg payload is a lumped mass striking a
rigid pole.  The wall resists through a compression-only elasto-plastic law
with power hardening and linear damage softening, plus stiffness-
proportional contact damping.  Integration is explicit central difference
(velocity Verlet form) on a sub-step of the output cadence.

All internal quantities are SI.  Material cards keep the usual crash-code
units (kg/mm^3, GPa) and are converted in :func:`build_rom`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .doe import DEFAULT_SPACE, DesignPoint, ParameterSpace
from .errors import ContractViolation, InvalidArgument, SingularInput, SolverError
from .forming import FormingOutcome, ToolGeometry

GPA_TO_PA = 1e9
MM_TO_M = 1e-3
KG_PER_MM3_TO_KG_PER_M3 = 1e9
MS_TO_S = 1e-3
KMH_TO_MPS = 1.0 / 3.6

DEFAULT_V0 = 35.0 * KMH_TO_MPS  # 9.7222 m/s
DEFAULT_DURATION = 1e-2  # s
DEFAULT_DT_OUT = 1e-5  # s

ENERGY_TOLERANCE = 1e-4  # relative to the initial kinetic energy


@dataclass(frozen=True)
class MaterialCard:
    """Orthotropic ply and progressive-damage constants of the enclosure."""

    density: float = 1.8e-6  # kg/mm^3
    E1: float = 125.0  # GPa
    E2: float = 8.0  # GPa
    G12: float = 7.0  # GPa
    nu12: float = 0.33
    yield_stress: float = 0.02  # GPa
    hardening_multiplier: float = 1.3
    hardening_exponent: float = 0.64
    tensile_initial_strain: float = 0.012
    tensile_ultimate_strain: float = 0.014
    ultimate_damage: float = 0.99

    def __post_init__(self):
        if not (self.E1 > 0 and self.E2 > 0 and self.G12 > 0):
            raise InvalidArgument("moduli must be positive")
        if not 0.0 < self.nu12 < 0.5:
            raise InvalidArgument(f"nu12 must lie in (0, 0.5), got {self.nu12}")
        if self.density <= 0 or self.yield_stress <= 0:
            raise InvalidArgument("density and yield stress must be positive")
        if not 0.0 <= self.ultimate_damage < 1.0:
            raise InvalidArgument("ultimate_damage must lie in [0, 1)")
        if not 0.0 < self.tensile_initial_strain < self.tensile_ultimate_strain:
            raise InvalidArgument("damage onset strain must be below the ultimate strain")


@dataclass(frozen=True)
class SolverConstants:
    """Reduced-order model constants that have no counterpart in the material card.

    ``width_factor`` is the effective load-bearing width (m) of wall engaged
    by the pole.  It lumps the side walls, ribs and lid into the single
    degree of freedom and was set so that thick stacks arrest the payload
    while thin ones break through.  ``damping_beta`` is given in
    milliseconds, the time unit of the crash deck it comes from.
    ``friction`` is kept for completeness; a normal-impact model has no
    tangential motion for it to act on.
    """

    payload_mass: float = 100.0  # kg
    characteristic_length: float = 0.254  # m, pole diameter
    width_factor: float = 20.0  # m
    damping_beta: float = 0.01  # ms
    friction: float = 0.2
    courant: float = 0.01  # fraction of the critical step

    @property
    def damping_beta_s(self) -> float:
        return self.damping_beta * MS_TO_S


@dataclass(frozen=True)
class RomModel:
    mass: float  # kg
    k_elastic: float  # N/m
    characteristic_length: float  # m
    yield_force: float  # N, math.inf disables plasticity
    hardening_multiplier: float
    hardening_exponent: float
    damage_onset: float  # m of peak indentation, math.inf disables damage
    damage_ultimate: float  # m
    ultimate_damage: float
    damping_beta: float  # s

    def __post_init__(self):
        if not self.mass > 0:
            raise InvalidArgument("mass must be positive")
        if not self.k_elastic > 0:
            raise InvalidArgument("k_elastic must be positive")
        if self.damping_beta < 0:
            raise InvalidArgument("damping_beta must be nonnegative")
        if math.isfinite(self.damage_onset) and not self.damage_ultimate > self.damage_onset:
            raise InvalidArgument("damage_ultimate must exceed damage_onset")

    @property
    def omega(self) -> float:
        return math.sqrt(self.k_elastic / self.mass)


@dataclass
class CrashTrace:
    dt_out: float
    duration: float
    mass: float
    force: np.ndarray  # N
    displacement: np.ndarray  # m, positive into the wall
    velocity: np.ndarray  # m/s, positive towards the pole
    kinetic_energy: np.ndarray  # J
    internal_energy: np.ndarray  # J
    dissipated_energy: np.ndarray  # J
    dt_int: float = field(default=0.0)

    @property
    def time(self) -> np.ndarray:
        return np.arange(len(self.force)) * self.dt_out

    @property
    def initial_energy(self) -> float:
        return float(self.kinetic_energy[0])

    def energy_error(self) -> np.ndarray:
        total = self.kinetic_energy + self.internal_energy + self.dissipated_energy
        return total - self.initial_energy


@dataclass(frozen=True)
class CrashMetrics:
    cle: float
    ea: float  # J
    intrusion: float  # mm
    deceleration: float  # m/s^2

    def as_dict(self) -> dict[str, float]:
        return {"cle": self.cle, "ea": self.ea, "intrusion": self.intrusion,
                "decel": self.deceleration}


# -- laminate stiffness --------------------------------------------------------

def reduced_stiffness(mat: MaterialCard) -> np.ndarray:
    """Plane-stress reduced stiffness [Q] of one ply (GPa), Voigt order 11, 22, 12."""
    nu21 = mat.nu12 * mat.E2 / mat.E1
    denom = 1.0 - mat.nu12 * nu21
    q11 = mat.E1 / denom
    q22 = mat.E2 / denom
    q12 = mat.nu12 * mat.E2 / denom
    return np.array([[q11, q12, 0.0], [q12, q22, 0.0], [0.0, 0.0, mat.G12]])


def rotated_stiffness(q: np.ndarray, angle_deg: float) -> np.ndarray:
    """Transformed reduced stiffness of a ply rotated by ``angle_deg``."""
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    c2, s2 = c * c, s * s
    q11, q12, q22, q66 = q[0, 0], q[0, 1], q[1, 1], q[2, 2]
    b11 = q11 * c2 * c2 + 2 * (q12 + 2 * q66) * s2 * c2 + q22 * s2 * s2
    b22 = q11 * s2 * s2 + 2 * (q12 + 2 * q66) * s2 * c2 + q22 * c2 * c2
    b12 = (q11 + q22 - 4 * q66) * s2 * c2 + q12 * (s2 * s2 + c2 * c2)
    b66 = (q11 + q22 - 2 * q12 - 2 * q66) * s2 * c2 + q66 * (s2 * s2 + c2 * c2)
    b16 = (q11 - q12 - 2 * q66) * s * c2 * c + (q12 - q22 + 2 * q66) * s2 * s * c
    b26 = (q11 - q12 - 2 * q66) * s2 * s * c + (q12 - q22 + 2 * q66) * s * c2 * c
    return np.array([[b11, b12, b16], [b12, b22, b26], [b16, b26, b66]])


def layup_modulus(angles, mat: MaterialCard) -> float:
    """Effective in-plane modulus (GPa) of equal-thickness plies at ``angles``.

    The stack is treated as symmetric, so only the averaged membrane
    stiffness matters; the returned value is its compliance-based Young's
    modulus along the 0-degree axis.
    """
    q = reduced_stiffness(mat)
    a = sum(rotated_stiffness(q, th) for th in angles) / len(angles)
    return float(1.0 / np.linalg.inv(a)[0, 0])


def laminate_modulus(p: DesignPoint, mat: MaterialCard = MaterialCard(),
                     space: ParameterSpace = DEFAULT_SPACE) -> float:
    return layup_modulus(space.angles(p.orientation), mat)


# -- model assembly --------------------------------------------------------------

def enclosure_mass(p: DesignPoint, mat: MaterialCard, geom: ToolGeometry) -> float:
    """Mass (kg) of the formed shell: density x sheet area x stack thickness."""
    return mat.density * geom.sheet_area * p.n_layers * p.thickness


def build_rom(
    p: DesignPoint,
    f: FormingOutcome,
    mat: MaterialCard = MaterialCard(),
    geom: ToolGeometry = ToolGeometry(),
    consts: SolverConstants = SolverConstants(),
    space: ParameterSpace = DEFAULT_SPACE,
) -> RomModel:
    if not f.feasible:
        raise ContractViolation("cannot build a crash model for a part that failed to form")
    length = consts.characteristic_length
    stack = p.n_layers * p.thickness * MM_TO_M
    modulus = laminate_modulus(p, mat, space) * GPA_TO_PA
    k = f.knockdown * modulus * stack * consts.width_factor / length
    yield_disp = mat.yield_stress / laminate_modulus(p, mat, space) * length
    return RomModel(
        mass=enclosure_mass(p, mat, geom) + consts.payload_mass,
        k_elastic=k,
        characteristic_length=length,
        yield_force=k * yield_disp,
        hardening_multiplier=mat.hardening_multiplier,
        hardening_exponent=mat.hardening_exponent,
        damage_onset=mat.tensile_initial_strain * length,
        damage_ultimate=mat.tensile_ultimate_strain * length,
        ultimate_damage=mat.ultimate_damage,
        damping_beta=consts.damping_beta_s,
    )


# -- time integration ----------------------------------------------------------

def stable_step(rom: RomModel) -> float:
    """Critical central-difference step including stiffness-proportional damping."""
    omega = rom.omega
    zeta = 0.5 * rom.damping_beta * omega
    return 2.0 / omega * (math.sqrt(1.0 + zeta * zeta) - zeta)


def _plastic_increment(k, e_trial, xp, fy, h, expo, length):
    """Solve k (e_trial - dp) = fy (1 + h ((xp + dp)/L)^expo) for dp > 0.

    The residual is convex and decreasing in dp, so a Newton iterate taken
    from the right of the root lands left of it and then climbs
    monotonically; bisection covers the infinite slope at xp + dp = 0.
    """

    def residual(dp):
        return k * (e_trial - dp) - fy * (1.0 + h * ((xp + dp) / length) ** expo)

    lo = 0.0
    hi = e_trial - fy * (1.0 + h * (xp / length) ** expo) / k
    dp = hi
    for _ in range(60):
        g = residual(dp)
        if g > 0.0:
            lo = dp
        else:
            hi = dp
        strain = (xp + dp) / length
        if strain > 0.0:
            slope = -k - fy * h * expo / length * strain ** (expo - 1.0)
            step = dp - g / slope
        else:
            step = -1.0
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if abs(step - dp) <= 1e-14 * (xp + e_trial) or hi - lo <= 1e-15 * length:
            return step
        dp = step
    return dp


def integrate(
    rom: RomModel,
    v0: float = DEFAULT_V0,
    duration: float = DEFAULT_DURATION,
    dt_out: float = DEFAULT_DT_OUT,
    courant: float = SolverConstants.courant,
    check_energy: bool = True,
) -> CrashTrace:
    """March the impact from first touch with speed ``v0`` for ``duration`` seconds.

    Raises SolverError if the energy balance drifts beyond 1e-4 of the
    initial kinetic energy at any output sample.
    """
    if not duration > 0 or not dt_out > 0:
        raise InvalidArgument("duration and dt_out must be positive")
    if v0 < 0:
        raise InvalidArgument("impact speed must be nonnegative")
    if not 0 < courant <= 0.5:
        raise InvalidArgument("courant fraction must lie in (0, 0.5]")
    ratio = duration / dt_out
    n_out = int(round(ratio))
    if abs(ratio - n_out) > 1e-6 * max(1.0, ratio):
        raise InvalidArgument("duration must be a whole number of output steps")
    n_out += 1

    n_sub = max(2, math.ceil(dt_out / (courant * stable_step(rom))))
    dt = dt_out / n_sub

    m = rom.mass
    k = rom.k_elastic
    length = rom.characteristic_length
    fy = rom.yield_force
    h = rom.hardening_multiplier
    expo = rom.hardening_exponent
    x_d0 = rom.damage_onset
    x_du = rom.damage_ultimate
    d_ult = rom.ultimate_damage
    beta = rom.damping_beta
    plastic = math.isfinite(fy)
    damaging = math.isfinite(x_d0)

    force = np.zeros(n_out)
    disp = np.zeros(n_out)
    vel = np.zeros(n_out)
    ke = np.zeros(n_out)
    ie = np.zeros(n_out)
    diss = np.zeros(n_out)

    e0 = 0.5 * m * v0 * v0
    x = 0.0
    v = float(v0)
    xp = 0.0  # permanent indentation
    dmg = 0.0
    peak = 0.0  # largest indentation reached, drives damage
    f_tot = 0.0
    f_spr = 0.0
    ie_now = 0.0
    w_total = 0.0  # work done by the contact force on the mass
    w_spring = 0.0
    w_plastic = 0.0
    w_damage = 0.0

    vel[0] = v
    ke[0] = e0
    for i in range(1, n_out):
        for _ in range(n_sub):
            v_half = v - 0.5 * dt * f_tot / m
            x_new = x + dt * v_half

            if damaging and x_new > peak:
                peak = x_new
                if peak <= x_d0:
                    dmg = 0.0
                elif peak >= x_du:
                    dmg = d_ult
                else:
                    dmg = d_ult * (peak - x_d0) / (x_du - x_d0)
            elif x_new > peak:
                peak = x_new

            e_trial = x_new - xp
            dxp = 0.0
            if e_trial > 0.0:
                if plastic and k * e_trial > fy * (1.0 + h * (xp / length) ** expo):
                    dxp = _plastic_increment(k, e_trial, xp, fy, h, expo, length)
                    xp += dxp
                e_new = x_new - xp
                f_spr_new = (1.0 - dmg) * k * e_new
                f_tot_new = f_spr_new + beta * (1.0 - dmg) * k * v_half
                if f_tot_new < 0.0:
                    f_tot_new = 0.0
                ie_new = 0.5 * (1.0 - dmg) * k * e_new * e_new
            else:
                e_new = 0.0
                f_spr_new = 0.0
                f_tot_new = 0.0
                ie_new = 0.0

            dx = x_new - x
            f_spr_mid = 0.5 * (f_spr + f_spr_new)
            w_total += 0.5 * (f_tot + f_tot_new) * dx
            w_spring += f_spr_mid * dx
            w_plastic += f_spr_mid * dxp
            # Remainder of the spring work that is neither stored nor plastic:
            # energy released by stiffness loss.
            w_damage += f_spr_mid * (dx - dxp) - (ie_new - ie_now)

            v = v_half - 0.5 * dt * f_tot_new / m
            x = x_new
            f_tot = f_tot_new
            f_spr = f_spr_new
            ie_now = ie_new

        force[i] = f_tot
        disp[i] = x
        vel[i] = v
        ke[i] = 0.5 * m * v * v
        ie[i] = ie_now
        diss[i] = w_plastic + w_damage + (w_total - w_spring)

    trace = CrashTrace(
        dt_out=dt_out, duration=duration, mass=m, force=force, displacement=disp,
        velocity=vel, kinetic_energy=ke, internal_energy=ie, dissipated_energy=diss,
        dt_int=dt,
    )
    if check_energy and e0 > 0:
        drift = np.max(np.abs(trace.energy_error()))
        if drift > ENERGY_TOLERANCE * e0:
            raise SolverError(
                f"energy balance violated: drift {drift:.6g} J exceeds "
                f"{ENERGY_TOLERANCE:g} of E0 = {e0:.6g} J"
            )
    return trace


def simulate_point(
    p: DesignPoint,
    f: FormingOutcome,
    mat: MaterialCard = MaterialCard(),
    geom: ToolGeometry = ToolGeometry(),
    consts: SolverConstants = SolverConstants(),
    v0: float = DEFAULT_V0,
    duration: float = DEFAULT_DURATION,
    dt_out: float = DEFAULT_DT_OUT,
    space: ParameterSpace = DEFAULT_SPACE,
) -> CrashTrace:
    rom = build_rom(p, f, mat, geom, consts, space)
    return integrate(rom, v0=v0, duration=duration, dt_out=dt_out, courant=consts.courant)


# -- trace files -----------------------------------------------------------------

TRACE_COLUMNS = ("t_s", "force_N", "disp_m", "vel_mps", "ke_J", "ie_J", "diss_J")


def write_trace(trace: CrashTrace, sink: IO[str], digits: int = 9) -> None:
    fmt = f".{digits}g"
    sink.write(f"# mass_kg={trace.mass!r} dt_out_s={trace.dt_out!r} duration_s={trace.duration!r}\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    columns = (trace.time, trace.force, trace.displacement, trace.velocity,
               trace.kinetic_energy, trace.internal_energy, trace.dissipated_energy)
    for row in zip(*columns):
        writer.writerow([format(float(v), fmt) for v in row])


def read_trace(source: IO[str]) -> CrashTrace:
    meta = {}
    rows = []
    for line in source:
        if line.startswith("#"):
            for token in line[1:].split():
                key, _, value = token.partition("=")
                meta[key] = float(value)
            continue
        if line.startswith("t_s"):
            continue
        if line.strip():
            rows.append([float(c) for c in line.split(",")])
    data = np.array(rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))
    return CrashTrace(
        dt_out=meta["dt_out_s"], duration=meta["duration_s"], mass=meta["mass_kg"],
        force=data[:, 1], displacement=data[:, 2], velocity=data[:, 3],
        kinetic_energy=data[:, 4], internal_energy=data[:, 5], dissipated_energy=data[:, 6],
    )


# -- closed-form reference -------------------------------------------------------

def reference_oracle(p: DesignPoint) -> CrashMetrics:
    """Evaluate the four closed-form response fits at ``p``.

    a = layer count, b = ply thickness (mm), c = layer temperature,
    d = punch/die temperature.
    """
    s = p.symbols()
    a, b, c, d = s["a"], s["b"], s["c"], s["d"]
    pole = -1088.0 + 8.0 * c + d
    if abs(pole) <= 1e-12 * 1088.0:
        raise SingularInput(f"CLE expression is singular at c={c}, d={d} (8c + d = 1088)")
    cle = (-297024.0 + 2184.0 * c + 273.0 * d - 272.0 * a * a + 2.0 * c * a * a) / (490.0 * pole)
    ea = 1303.0 + 8.0 * a * a * b ** 3 * (-33.0 + (3.0 + a) * b * a)
    intrusion = -0.692 * a * b + 0.390 * a + 1.819 * b + 17.116
    decel = 136.585 * a - 1874.219 * b + 10032.0
    return CrashMetrics(cle=cle, ea=ea, intrusion=intrusion, deceleration=decel)
