"""Bump calculus and the plug functions (H, f) on the rectangle [-delta, delta] x [-T, T].

The profile family used throughout is

    H(x, t) = x - B(x) c(t),      B(x) = int_0^x b,
    f(x, t) = A x b~(x) s(t),

with b~ a bump centred at x = 0, c = bump(t - tau) + bump(t + tau) and
s = bump(t - tau) - bump(t + tau).  b is a unit bump at 0 flanked by two
negative lobes of half its mass, so B has compact support and H = x near the
x-faces, while b <= 1 with equality only at x = 0.  Every boundary,
monotonicity and parity condition holds exactly by construction; the grid
checks below only confirm it.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from . import _closed_forms as cf
from .errors import ConfigError, ConstructionError, InvalidParameterError

Array = np.ndarray

# |f'_x(p)| must exceed this for p to count as a non-degenerate core
NONDEGENERACY_FLOOR = 1e-6
# argmax of v * bump(v) on [0, 1]
_XB_ARGMAX = (math.sqrt(6.0) - math.sqrt(2.0)) / 2.0


@dataclass(frozen=True)
class ScalarField1:
    """One-variable field with derivative."""

    eval: Callable[[Array], Array]
    deriv: Callable[[Array], Array]
    center: float = 0.0
    radius: float = 1.0

    def __call__(self, u):
        return self.eval(u)


def build_bump(center: float, radius: float) -> ScalarField1:
    """Standard bump exp(1 - 1/(1 - v^2)), v = (u - center)/radius."""
    if not radius > 0:
        raise InvalidParameterError(f"bump radius must be positive, got {radius}")
    c, r = float(center), float(radius)
    return ScalarField1(
        eval=lambda u: cf.std_bump((np.asarray(u, dtype=float) - c) / r),
        deriv=lambda u: cf.std_bump_d1((np.asarray(u, dtype=float) - c) / r) / r,
        center=c,
        radius=r,
    )


@dataclass(frozen=True)
class ScalarField2:
    """Field on the rectangle with analytic partial derivatives."""

    eval: Callable[[Array, Array], Array]
    d_x: Callable[[Array, Array], Array]
    d_t: Callable[[Array, Array], Array]
    delta: float
    t_half: float

    def __call__(self, x, t):
        return self.eval(x, t)


@dataclass(frozen=True)
class PlugParams:
    delta: float = 0.5
    t_half: float = 1.0
    y_half: float = 0.3
    tau: float = 0.5
    collar: float = 0.1
    amp: float = 0.1

    def __post_init__(self):
        for name in ("delta", "t_half", "y_half", "collar", "amp"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if not 0 < self.tau < self.t_half - self.collar:
            raise InvalidParameterError("need 0 < tau < t_half - collar")
        if not self.collar < min(self.delta, self.t_half) / 4:
            raise InvalidParameterError("collar must be below min(delta, t_half)/4")
        if not self.amp < self.y_half:
            raise InvalidParameterError("amp must be below y_half")

    def bump_radii(self) -> tuple[float, float]:
        """(x-radius of b and b~, t-radius of the c and s bumps)."""
        rx = 0.9 * (self.delta - self.collar)
        rt = 0.9 * min(self.tau, self.t_half - self.collar - self.tau)
        return rx, rt


@dataclass(frozen=True)
class PlugProfile:
    params: PlugParams
    H: ScalarField2
    f: ScalarField2
    p_plus: tuple[float, float]
    p_minus: tuple[float, float]
    # parameter vector of the closed family; None for hand-modified profiles
    vector: Array | None = field(default=None, compare=False)
    label: str = "plug"

    @property
    def delta(self) -> float:
        return self.params.delta

    @property
    def t_half(self) -> float:
        return self.params.t_half

    def evaluate(self, x, t) -> dict[str, Array]:
        if self.vector is not None:
            return cf.evaluate(self.vector, x, t)
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        return {
            "H": self.H.eval(x, t),
            "Hx": self.H.d_x(x, t),
            "Ht": self.H.d_t(x, t),
            "f": self.f.eval(x, t),
            "fx": self.f.d_x(x, t),
            "ft": self.f.d_t(x, t),
        }

    def with_fields(self, H: ScalarField2 | None = None, f: ScalarField2 | None = None, label=None):
        """Copy with H and/or f swapped out; the copy leaves the closed family."""
        return replace(
            self,
            H=H if H is not None else self.H,
            f=f if f is not None else self.f,
            vector=None,
            label=label or self.label + "*",
        )


def _fields_from_vector(vec: Array, delta: float, t_half: float) -> tuple[ScalarField2, ScalarField2]:
    vec = np.array(vec, dtype=float)
    vec.setflags(write=False)

    def getter(key):
        return lambda x, t: cf.evaluate(vec, x, t)[key]

    H = ScalarField2(getter("H"), getter("Hx"), getter("Ht"), delta, t_half)
    f = ScalarField2(getter("f"), getter("fx"), getter("ft"), delta, t_half)
    return H, f


def profile_from_vector(params: PlugParams, vec: Array, label: str = "plug") -> PlugProfile:
    vec = np.array(vec, dtype=float)
    vec.setflags(write=False)
    H, f = _fields_from_vector(vec, params.delta, params.t_half)
    tc = vec[cf.TAU] / vec[cf.LAM]
    return PlugProfile(params, H, f, (0.0, tc), (0.0, -tc), vec, label)


def base_vector(params: PlugParams, parity: float = -1.0, h_on: float = 1.0) -> Array:
    rx, rt = params.bump_radii()
    vec = np.zeros(cf.NPARAM)
    vec[cf.AMP] = params.amp
    vec[cf.RB] = rx
    vec[cf.RBT] = rx
    vec[cf.TAU] = params.tau
    vec[cf.RC] = rt
    vec[cf.RS] = rt
    vec[cf.PARITY] = parity
    vec[cf.H_ON] = h_on
    vec[cf.LAM] = 1.0
    vec[cf.MU] = 1.0
    vec[cf.DELTA] = params.delta
    vec[cf.THALF] = params.t_half
    return vec


def analytic_f_bound(vec: Array) -> float:
    """Closed-form sup|f| of an unscaled, undeformed family member."""
    rbt = vec[cf.RBT]
    return abs(vec[cf.AMP]) * rbt * _XB_ARGMAX * float(cf.std_bump(_XB_ARGMAX))


def build_plug_profile(params: PlugParams | None = None, *, parity: float = -1.0) -> PlugProfile:
    """Concrete (H, f) pair of the closed family.

    ``parity=+1`` produces an even s(t); that breaks the parity condition and
    exists only to exercise the failure paths.
    """
    params = params or PlugParams()
    vec = base_vector(params, parity=parity)
    bound = analytic_f_bound(vec)
    if bound >= params.y_half:
        raise ConstructionError(f"sup|f| = {bound:.6g} is not below a = {params.y_half}", attained=bound)
    return profile_from_vector(params, vec, label="default" if parity < 0 else "even-s")


def degenerate_profile(params: PlugParams | None = None) -> PlugProfile:
    """H = x, f = 0: the trivial plug."""
    params = params or PlugParams()
    vec = base_vector(params, h_on=0.0)
    vec[cf.AMP] = 0.0
    return profile_from_vector(params, vec, label="degenerate")


def invert_H(profile: PlugProfile, level, t, iters: int = 60) -> Array:
    """x with H(x, t) = level; H(., t) is monotone and fixes the x-faces."""
    d = profile.delta
    level, t = np.broadcast_arrays(np.clip(np.asarray(level, dtype=float), -d, d), np.asarray(t, dtype=float))
    lo, hi = np.full(level.shape, -d), np.full(level.shape, d)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = profile.H.eval(mid, t) < level
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# grid checks


@dataclass
class ConditionRow:
    condition: str
    residual: float
    x: float
    t: float
    passed: bool
    tolerance: float


@dataclass
class ConditionReport:
    rows: list[ConditionRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def __getitem__(self, name: str) -> ConditionRow:
        for r in self.rows:
            if r.condition == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["condition", "residual", "x", "t", "pass"])
        for r in self.rows:
            w.writerow([r.condition, f"{r.residual:.6e}", f"{r.x:.9g}", f"{r.t:.9g}", int(r.passed)])
        return buf.getvalue()

    def __str__(self):
        lines = [f"{'condition':<16}{'residual':>14}{'x':>12}{'t':>12}  pass"]
        for r in self.rows:
            lines.append(f"{r.condition:<16}{r.residual:14.3e}{r.x:12.5f}{r.t:12.5f}  {'yes' if r.passed else 'NO'}")
        return "\n".join(lines)


def _grid(profile: PlugProfile, n: int) -> tuple[Array, Array]:
    xs = np.linspace(-profile.delta, profile.delta, n)
    ts = np.linspace(-profile.t_half, profile.t_half, n)
    return np.meshgrid(xs, ts, indexing="ij")


def _worst(res: Array, X: Array, T: Array) -> tuple[float, float, float]:
    k = int(np.argmax(res))
    return float(res.flat[k]), float(X.flat[k]), float(T.flat[k])


def check_plug_conditions(
    profile: PlugProfile, grid: int = 200, tol: float = 1e-10, exact_tol: float = 1e-12
) -> ConditionReport:
    if grid < 16:
        raise InvalidParameterError("grid must be at least 16x16")
    p = profile.params
    X, T = _grid(profile, grid)
    v = profile.evaluate(X, T)
    rows = []

    collar = (np.abs(X) >= p.delta - p.collar) | (np.abs(T) >= p.t_half - p.collar)
    res = np.where(collar, np.maximum(np.abs(v["H"] - X), np.abs(v["f"])), 0.0)
    r, x0, t0 = _worst(res, X, T)
    rows.append(ConditionRow("P1_collar", r, x0, t0, r <= exact_tol, exact_tol))

    over = np.maximum(np.abs(v["H"]) - p.delta, np.abs(v["f"]) - p.y_half)
    r, x0, t0 = _worst(np.maximum(over, 0.0), X, T)
    strict = bool(np.max(np.abs(v["f"])) < p.y_half)
    rows.append(ConditionRow("P1_bounds", r, x0, t0, r <= tol and strict, tol))

    r, x0, t0 = _worst(np.maximum(-v["Hx"], 0.0), X, T)
    rows.append(ConditionRow("P2", r, x0, t0, r <= exact_tol, exact_tol))

    # critical points: gradient of H vanishes at the cores, f'_x does not,
    # and nowhere else on the grid does H'_x drop to the tolerance
    cores = np.array([profile.p_plus, profile.p_minus])
    vc = profile.evaluate(cores[:, 0], cores[:, 1])
    grad = np.hypot(vc["Hx"], vc["Ht"])
    gap = np.maximum(NONDEGENERACY_FLOOR - np.abs(vc["fx"]), 0.0)
    crit = (v["Hx"] <= tol)
    locus = 0.0
    if np.any(crit):
        pts = np.stack([X[crit], T[crit]], axis=1)
        d = np.min(np.linalg.norm(pts[:, None, :] - cores[None, :, :], axis=2), axis=1)
        allowed = 1e-4 * max(p.delta, p.t_half)
        locus = float(np.max(np.maximum(d - allowed, 0.0)))
    per_core = np.maximum(grad, gap)
    k = int(np.argmax(per_core))
    r = max(float(per_core[k]), locus)
    rows.append(ConditionRow("P3", r, float(cores[k, 0]), float(cores[k, 1]), r <= tol, tol))

    vm = profile.evaluate(X, -T)
    res = np.maximum(np.abs(vm["H"] - v["H"]), np.abs(vm["f"] + v["f"]))
    r, x0, t0 = _worst(res, X, T)
    rows.append(ConditionRow("P4", r, x0, t0, r <= exact_tol, exact_tol))

    both = np.maximum(np.abs(v["fx"]), np.abs(v["Hx"]))
    both_c = np.maximum(np.abs(vc["fx"]), np.abs(vc["Hx"]))
    k = int(np.argmin(both))
    lo, xl, tl = float(both.flat[k]), float(X.flat[k]), float(T.flat[k])
    kc = int(np.argmin(both_c))
    if both_c[kc] < lo:
        lo, xl, tl = float(both_c[kc]), float(cores[kc, 0]), float(cores[kc, 1])
    r = max(NONDEGENERACY_FLOOR - lo, 0.0)
    rows.append(ConditionRow("nondegenerate", r, xl, tl, r <= tol, tol))
    return ConditionReport(rows)


def sup_norm(fld: ScalarField2, grid: int = 200, refine: bool = True) -> float:
    """Max of |field| on a grid, polished by a bounded local maximisation."""
    if grid < 16:
        raise InvalidParameterError("grid must be at least 16x16")
    xs = np.linspace(-fld.delta, fld.delta, grid)
    ts = np.linspace(-fld.t_half, fld.t_half, grid)
    X, T = np.meshgrid(xs, ts, indexing="ij")
    vals = np.abs(fld.eval(X, T))
    k = int(np.argmax(vals))
    best = float(vals.flat[k])
    if not refine or best == 0.0:
        return best

    def neg_abs(z):
        x, t = np.array([z[0]]), np.array([z[1]])
        v = float(fld.eval(x, t)[0])
        sgn = 1.0 if v >= 0 else -1.0
        g = np.array([float(fld.d_x(x, t)[0]), float(fld.d_t(x, t)[0])])
        return -abs(v), -sgn * g

    res = minimize(
        neg_abs,
        x0=[X.flat[k], T.flat[k]],
        jac=True,
        method="L-BFGS-B",
        bounds=[(-fld.delta, fld.delta), (-fld.t_half, fld.t_half)],
        options={"ftol": 1e-15, "gtol": 1e-13},
    )
    return max(best, float(-res.fun))


# ---------------------------------------------------------------------------
# serialisation

_PARAM_KEYS = ("delta", "t_half", "y_half", "tau", "collar", "amp")


def params_to_ini(params: PlugParams, section: str = "plug") -> str:
    cp = configparser.ConfigParser()
    cp[section] = {k: repr(float(getattr(params, k))) for k in _PARAM_KEYS}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def params_from_section(sec) -> PlugParams:
    defaults = PlugParams()
    kw = {}
    for k in _PARAM_KEYS:
        try:
            kw[k] = float(sec.get(k, getattr(defaults, k)))
        except ValueError as exc:
            raise ConfigError(f"bad value for {k}: {sec.get(k)!r}") from exc
    return PlugParams(**kw)


def params_from_ini(text: str, section: str = "plug") -> PlugParams:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if section not in cp:
        raise ConfigError(f"missing [{section}] section")
    return params_from_section(cp[section])
