"""Characteristic dynamics inside the plug S^1 x [-delta, delta] x [-T, T].

The characteristic field of d(H dtheta - f dt) is

    X = f'_x d/dtheta + (-H'_t) d/dx + H'_x d/dt,

whose (x, t)-part is the Hamiltonian field of H.  Orbits are integrated with
an adaptive Dormand-Prince pair (compiled kernel when the profile belongs to
the closed family, a pure-Python loop for arbitrary profiles).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _pykernels, kernels
from .errors import IntegrationError, InvalidParameterError
from .smooth_fields import NONDEGENERACY_FLOOR, PlugProfile

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PlugPoint:
    theta: float
    x: float
    t: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)


@dataclass
class Orbit:
    """Sampled integral curve; ``samples`` columns are (time, theta_unreduced, x, t)."""

    samples: np.ndarray
    kind: str  # traversing | trapped_forward | trapped_backward | periodic | x_face_defect
    entry: PlugPoint | None = None
    exit: PlugPoint | None = None
    limit: str | None = None  # p_plus | p_minus
    steps: int = 0
    rtol: float = 1e-10
    final: tuple[float, float, float] = (0.0, 0.0, 0.0)
    elapsed: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "theta_unreduced", "x", "t"])
        for row in self.samples:
            w.writerow([f"{v:.12g}" for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class CharacteristicField:
    profile: PlugProfile

    def __call__(self, theta, x, t):
        v = self.profile.evaluate(x, t)
        return np.stack(np.broadcast_arrays(v["fx"], -v["Ht"], v["Hx"]), axis=-1)

    def hamiltonian_part(self, x, t):
        v = self.profile.evaluate(x, t)
        return np.stack([-v["Ht"], v["Hx"]], axis=-1)


def characteristic_field(profile: PlugProfile) -> CharacteristicField:
    return CharacteristicField(profile)


def _run(field_: CharacteristicField, theta, x, t, direction, budget, rtol, atol, record):
    prof = field_.profile
    if prof.vector is not None:
        return kernels.orbit(prof.vector, theta, x, t, float(direction), budget, rtol, atol, record)

    def rhs(y):
        v = prof.evaluate(np.array([y[1]]), np.array([y[2]]))
        return [direction * float(v["fx"][0]), -direction * float(v["Ht"][0]), direction * float(v["Hx"][0])]

    status, elapsed, y, nsteps, samples = _pykernels.integrate(
        rhs, (theta, x, t), 2, prof.t_half, prof.delta, budget, rtol, atol, record
    )
    arr = np.asarray(samples, dtype=float) if record else None
    return status, elapsed, y[0], y[1], y[2], nsteps, arr


def _core_name(profile: PlugProfile, t: float) -> str:
    return "p_plus" if abs(t - profile.p_plus[1]) <= abs(t - profile.p_minus[1]) else "p_minus"


def integrate_orbit(
    field_: CharacteristicField,
    seed: PlugPoint,
    direction: int = 1,
    budget: float | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    record: bool = True,
) -> Orbit:
    prof = field_.profile
    if direction not in (1, -1):
        raise InvalidParameterError("direction must be +1 or -1")
    if budget is None:
        budget = 100.0 * 2.0 * prof.t_half
    if not budget > 0:
        raise InvalidParameterError("budget must be positive")
    if abs(seed.x) > prof.delta or abs(seed.t) > prof.t_half:
        raise InvalidParameterError("seed outside the plug")

    status, elapsed, th, x, t, nsteps, samples = _run(
        field_, seed.theta, seed.x, seed.t, direction, budget, rtol, atol, record
    )
    if samples is None:
        samples = np.array([[0.0, seed.theta, seed.x, seed.t], [elapsed, th, x, t]])
    orb = Orbit(samples, "", steps=int(nsteps), rtol=rtol, final=(th, x, t), elapsed=elapsed)

    if status == kernels.UNDERFLOW:
        raise IntegrationError("step size underflow", last_state=(th, x, t))
    if status == kernels.X_FACE:
        orb.kind = "x_face_defect"
        return orb
    if status in (kernels.EXIT_TOP, kernels.EXIT_BOTTOM):
        orb.kind = "traversing"
        start = PlugPoint(seed.theta, seed.x, seed.t)
        end = PlugPoint(th, x, t)
        orb.entry, orb.exit = (start, end) if direction > 0 else (end, start)
        return orb

    # budget exhausted
    g = field_.hamiltonian_part(np.array([seed.x]), np.array([seed.t]))[0]
    drift = math.hypot(x - seed.x, t - seed.t)
    if np.hypot(*g) == 0.0 or drift < 1e-10:
        orb.kind = "periodic"
        orb.limit = _core_name(prof, seed.t)
        return orb
    orb.kind = "trapped_forward" if direction > 0 else "trapped_backward"
    orb.limit = _core_name(prof, t)
    return orb


def trapping_distance(orbit: Orbit, profile: PlugProfile) -> float:
    """|t - t(p)| at the end of a trapped orbit, p its limiting core."""
    core = profile.p_plus if orbit.limit == "p_plus" else profile.p_minus
    return abs(orbit.final[2] - core[1])


def exit_map(field_: CharacteristicField, entry: tuple[float, float], rtol=1e-10, atol=1e-10, budget=None):
    """(theta, x) on the bottom face -> (theta, x) on the top face, or None if trapped."""
    prof = field_.profile
    orb = integrate_orbit(field_, PlugPoint(entry[0], entry[1], -prof.t_half), 1, budget, rtol, atol, record=False)
    if orb.kind != "traversing":
        return None
    th, x, _ = orb.final
    return th % TWO_PI, x


def exit_map_batch(field_: CharacteristicField, thetas, xs, rtol=1e-10, atol=1e-10, budget=None):
    """Vectorised exit map; returns (theta_exit_unreduced, x_exit, traversed mask)."""
    prof = field_.profile
    if budget is None:
        budget = 100.0 * 2.0 * prof.t_half
    thetas = np.asarray(thetas, dtype=float).ravel()
    xs = np.asarray(xs, dtype=float).ravel()
    if prof.vector is not None:
        status, _, out, _ = kernels.orbit_batch(
            prof.vector, thetas, xs, np.full(xs.size, -prof.t_half), 1.0, budget, rtol, atol
        )
        return out[:, 0], out[:, 1], status == kernels.EXIT_TOP
    th_out, x_out, ok = np.empty(xs.size), np.empty(xs.size), np.zeros(xs.size, bool)
    for i in range(xs.size):
        orb = integrate_orbit(field_, PlugPoint(thetas[i], xs[i], -prof.t_half), 1, budget, rtol, atol, False)
        th_out[i], x_out[i] = orb.final[0], orb.final[1]
        ok[i] = orb.kind == "traversing"
    return th_out, x_out, ok


def angle_gap(a, b):
    """Distance between angles on the circle."""
    d = np.mod(np.asarray(a) - np.asarray(b) + math.pi, TWO_PI) - math.pi
    return np.abs(d)


def find_trapped(field_: CharacteristicField, n_seeds: int = 64, budget: float | None = None) -> list[PlugPoint]:
    """Bottom-face entries whose orbits never leave within the budget.

    A trapped orbit must end on a core, so its entry level H(x, -T) = x equals a
    critical level.  Sign changes of x - H(p) on the seed grid are bisected and
    each candidate is confirmed by a long integration.
    """
    if n_seeds < 1:
        raise InvalidParameterError("n_seeds must be >= 1")
    prof = field_.profile
    if budget is None:
        budget = 100.0 * 2.0 * prof.t_half
    cores = [prof.p_plus, prof.p_minus]
    core_vals = prof.evaluate(np.array([c[0] for c in cores]), np.array([c[1] for c in cores]))
    levels = sorted(set(float(v) for v in core_vals["H"]))
    xs = np.linspace(-prof.delta, prof.delta, n_seeds + 2)[1:-1]
    bottom = np.full(xs.size, -prof.t_half)
    entry_level = prof.evaluate(xs, bottom)["H"]
    candidates = []
    for lev in levels:
        g = entry_level - lev
        for i in np.flatnonzero(g == 0.0):
            candidates.append(float(xs[i]))
        for i in np.flatnonzero(g[:-1] * g[1:] < 0):
            lo, hi = float(xs[i]), float(xs[i + 1])
            glo = g[i]
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                gm = float(prof.evaluate(np.array([mid]), np.array([-prof.t_half]))["H"][0]) - lev
                if gm == 0.0:
                    lo = hi = mid
                    break
                if (gm < 0) == (glo < 0):
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-15:
                    break
            candidates.append(0.5 * (lo + hi))
    trapped = []
    for x0 in sorted(set(candidates)):
        orb = integrate_orbit(field_, PlugPoint(0.0, x0, -prof.t_half), 1, budget, record=False)
        if orb.kind == "trapped_forward":
            trapped.append(PlugPoint(0.0, x0, -prof.t_half))
    return trapped


@dataclass
class ObstructionReport:
    winding_sign_plus: int
    winding_sign_minus: int
    fx_plus: float
    fx_minus: float
    opposite: bool
    defect: str | None = None
    notes: list[str] = field(default_factory=list)


def stability_obstruction(profile: PlugProfile) -> ObstructionReport:
    """Signs of f'_x at the two cores, i.e. the winding directions of the periodic leaves."""
    c = np.array([profile.p_plus, profile.p_minus])
    fx = profile.evaluate(c[:, 0], c[:, 1])["fx"]
    signs = [0 if abs(v) < NONDEGENERACY_FLOOR else int(np.sign(v)) for v in fx]
    defect = None
    if 0 in signs:
        defect = "f'_x vanishes at a core (degenerate core)"
    rep = ObstructionReport(signs[0], signs[1], float(fx[0]), float(fx[1]), signs[0] * signs[1] == -1, defect)
    if not rep.opposite and defect is None:
        rep.notes.append("periodic leaves wind in the same direction")
    return rep
