"""The round sphere, its plugged perturbation M and their characteristic foliations.

Coordinates on R^4 are (p1, q1, p2, q2) with z1 = p1 + i q1, z2 = p2 + i q2.
Leaves of S^3 are Hopf circles e^{i phi} z.  M agrees with S^3 outside the two
plug boxes; inside a box it is the image of j under the pole chart.

Leaves are traced in two ways:

* hybrid: exact Hopf arcs between boxes, plug characteristics (integrated in
  plug coordinates) inside them.  The charts are exactly symplectic, so this
  is the true foliation up to integrator error.
* ambient: the Hamiltonian flow of the defining function with Newton
  re-projection after every step.  Slower; used as an independent check.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._closed_forms import plateau, smooth_step
from .errors import AssemblyError, DomainError, InvalidParameterError, SingularLevelError
from .plug_dynamics import PlugPoint, characteristic_field, integrate_orbit
from .plug_embedding import (
    PlugChart,
    build_pole_chart,
    chart_extents_for,
    displaced_neighborhood_check,
)
from .smooth_fields import (
    PlugParams,
    PlugProfile,
    build_plug_profile,
    degenerate_profile,
    invert_H,
    profile_from_vector,
    sup_norm,
)

TWO_PI = 2.0 * math.pi
HIT_THRESHOLD = 1e-4
DEFAULT_BUDGET = 50 * TWO_PI


def to_complex(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.stack([z[..., 0] + 1j * z[..., 1], z[..., 2] + 1j * z[..., 3]], axis=-1)


def from_complex(c) -> np.ndarray:
    c = np.asarray(c)
    return np.stack([c[..., 0].real, c[..., 0].imag, c[..., 1].real, c[..., 1].imag], axis=-1)


def hopf_rotate(z, phi) -> np.ndarray:
    """e^{i phi} z."""
    return from_complex(to_complex(z) * np.exp(1j * np.asarray(phi))[..., None])


def q_function(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return 0.5 * (np.sum(z * z, axis=-1) - 1.0)


def hamiltonian_vector(grad) -> np.ndarray:
    """X_G from dG, with i_X omega = -dG for omega = dp1^dq1 + dp2^dq2."""
    g = np.asarray(grad, dtype=float)
    return np.stack([-g[..., 1], g[..., 0], -g[..., 3], g[..., 2]], axis=-1)


# ---------------------------------------------------------------------------
# leaves


@dataclass
class Leaf:
    """Traced characteristic.

    ``pieces`` holds ("arc", z0, length, direction) for Hopf arcs and
    ("poly", points) for polylines.
    """

    seed: np.ndarray
    pieces: list = field(default_factory=list)
    arc_used: float = 0.0
    closed: bool = False
    trapped: str | None = None
    direction: int = 1

    def polyline(self, per_radian: int = 32) -> np.ndarray:
        out = [self.seed[None, :]]
        for pc in self.pieces:
            if pc[0] == "arc":
                _, z0, length, d = pc
                n = max(2, int(per_radian * length) + 1)
                out.append(hopf_rotate(np.broadcast_to(z0, (n, 4)), d * np.linspace(0.0, length, n)))
            else:
                out.append(pc[1])
        return np.concatenate(out, axis=0)

    def distance_to(self, p) -> float:
        p = np.asarray(p, dtype=float)
        best = float(np.linalg.norm(self.seed - p))
        for pc in self.pieces:
            if pc[0] == "arc":
                best = min(best, float(arc_distance(pc[1], pc[2], pc[3], p)))
            else:
                best = min(best, polyline_distance(pc[1], p))
        return best


def arc_distance(z0, length, direction, p):
    """min over phi in [0, length] of |e^{i d phi} z0 - p| in closed form (vectorised over p)."""
    z0c = to_complex(z0)
    pc = to_complex(p)
    c = np.sum(z0c * np.conj(pc), axis=-1)
    base = np.sum(np.abs(z0c) ** 2, axis=-1) + np.sum(np.abs(pc) ** 2, axis=-1)
    phi_star = np.mod(-direction * np.angle(c), TWO_PI)
    inside = phi_star <= length
    ends = np.maximum(np.real(c), np.real(c * np.exp(1j * direction * length)))
    best = np.where(inside, np.abs(c), ends)
    return np.sqrt(np.maximum(base - 2.0 * best, 0.0))


def polyline_distance(pts: np.ndarray, p: np.ndarray) -> float:
    if len(pts) == 1:
        return float(np.linalg.norm(pts[0] - p))
    a, b = pts[:-1], pts[1:]
    ab = b - a
    L2 = np.sum(ab * ab, axis=1)
    s = np.clip(np.sum((p - a) * ab, axis=1) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    return float(np.min(np.linalg.norm(a + s[:, None] * ab - p, axis=1)))


def hopf_leaf(z, n_samples: int = 256) -> Leaf:
    z = np.asarray(z, dtype=float)
    if abs(float(np.dot(z, z)) - 1.0) > 1e-10:
        raise DomainError("seed is not on the unit sphere")
    leaf = Leaf(z.copy(), [("arc", z.copy(), TWO_PI, 1)], TWO_PI, closed=True)
    leaf.samples = hopf_rotate(np.broadcast_to(z, (n_samples, 4)), np.linspace(0, TWO_PI, n_samples, endpoint=False))
    return leaf


# ---------------------------------------------------------------------------
# the translation Hamiltonian


@dataclass(frozen=True)
class TranslationMap:
    eps: float
    r_in: float
    r_out: float
    width: float

    @property
    def w(self) -> np.ndarray:
        return np.array([0.0, self.eps, 0.0, 0.0])

    def cutoff(self, r):
        r = np.asarray(r, dtype=float)
        lo = smooth_step((r - (self.r_in - self.width)) / self.width)
        hi = smooth_step(((self.r_out + self.width) - r) / self.width)
        return lo * hi

    def hamiltonian(self, z):
        z = np.asarray(z, dtype=float)
        return self.eps * self.cutoff(np.linalg.norm(z, axis=-1)) * z[..., 0]

    def vector_field(self, z, h: float = 1e-6):
        z = np.asarray(z, dtype=float)
        g = np.zeros_like(z)
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            g[..., k] = (self.hamiltonian(z + e) - self.hamiltonian(z - e)) / (2 * h)
        return hamiltonian_vector(g)

    def in_core(self, z):
        r = np.linalg.norm(np.asarray(z, dtype=float), axis=-1)
        return (r >= self.r_in + self.eps) & (r <= self.r_out - self.eps)

    def __call__(self, z):
        """Time-one map; exact translation where the whole path stays where the cutoff is 1."""
        z = np.asarray(z, dtype=float)
        if np.all(self.in_core(z)):
            return z + self.w
        from scipy.integrate import solve_ivp

        flat = np.atleast_2d(z)
        out = np.empty_like(flat)
        for i, zi in enumerate(flat):
            sol = solve_ivp(lambda _, y: self.vector_field(y), (0.0, 1.0), zi, rtol=1e-11, atol=1e-12)
            out[i] = sol.y[:, -1]
        return out.reshape(z.shape)


def translation_hamiltonian(eps: float, shell: tuple[float, float] | None = None, width: float | None = None) -> TranslationMap:
    """F = eps * chi(|z|) * p1 with chi = 1 on the shell [r_in, r_out]."""
    if eps < 0:
        raise InvalidParameterError("eps must be non-negative")
    if eps >= 1:
        raise InvalidParameterError("shell cannot contain both spheres away from the origin for eps >= 1")
    if width is None:
        width = min(0.05, (1.0 - eps) / 4.0)
    if shell is None:
        shell = (1.0 - eps - width, 1.0 + eps + width)
    r_in, r_out = shell
    if r_in > 1.0 - eps or r_out < 1.0 + eps:
        raise InvalidParameterError(f"shell {shell} too thin for eps = {eps}: need [1 - eps, 1 + eps] inside")
    if r_in - width <= 0:
        raise InvalidParameterError("cutoff reaches the origin")
    return TranslationMap(float(eps), float(r_in), float(r_out), float(width))


# ---------------------------------------------------------------------------
# leafwise intersections of the round sphere


@dataclass
class LeafwiseHit:
    z: np.ndarray
    image: np.ndarray
    residual: float
    leaf: Leaf | None = None


@dataclass
class DegenerateCase:
    eps: float
    reason: str = "eps = 0: the map is the identity and every point is a leafwise intersection"


def z_pm(eps: float) -> np.ndarray:
    r = math.sqrt(1.0 - eps * eps / 4.0)
    return np.array([[r, -eps / 2, 0.0, 0.0], [-r, -eps / 2, 0.0, 0.0]])


def slice_candidates(eps: float, resolution: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Latitude/longitude grid on S^3 cap {q1 = eps/2}; returns (points, (alpha, beta) grid)."""
    n_a = max(3, int(round(math.sqrt(resolution))))
    n_b = max(4, int(round(resolution / n_a)))
    r = math.sqrt(1.0 - eps * eps / 4.0)
    al = np.linspace(0.0, math.pi, n_a)
    be = np.linspace(0.0, TWO_PI, n_b, endpoint=False)
    A, Bt = np.meshgrid(al[1:-1], be, indexing="ij")
    A = np.concatenate([[0.0], A.ravel(), [math.pi]])
    Bt = np.concatenate([[0.0], Bt.ravel(), [0.0]])
    y = np.stack([r * np.cos(A), np.full(A.shape, eps / 2), r * np.sin(A) * np.cos(Bt), r * np.sin(A) * np.sin(Bt)], 1)
    return y, np.stack([A, Bt], 1)


def hopf_circle_distance(y, p) -> np.ndarray:
    """Distance from p to the full Hopf circle of y (vectorised)."""
    return arc_distance(y, TWO_PI, 1, p)


def _cluster(points: np.ndarray, tol: float) -> list[np.ndarray]:
    reps: list[np.ndarray] = []
    for p in points:
        if not any(np.linalg.norm(p - q) < tol for q in reps):
            reps.append(p)
    return reps


def sphere_leafwise_oracle(eps: float, resolution: int = 10_000, tol: float = 1e-6):
    """Leafwise intersections of S^3 and S^3 + w: the analytic pair, cross-checked by grid search."""
    if eps == 0:
        return DegenerateCase(0.0)
    if not 0 < eps < 2:
        raise InvalidParameterError("need 0 < eps < 2")
    w = np.array([0.0, eps, 0.0, 0.0])
    y, _ = slice_candidates(eps, resolution)
    d = hopf_circle_distance(y, y - w)
    found = _cluster(y[d < tol] - w, 1e-3)
    analytic = z_pm(eps)
    hits = []
    for z in analytic:
        res = float(hopf_circle_distance(z, z + w))
        hits.append(LeafwiseHit(z, z + w, res, hopf_leaf(z)))
    extra = [p for p in found if min(np.linalg.norm(p - a) for a in analytic) > tol]
    if extra or len(found) != 2:
        raise AssertionError(f"grid search disagrees with the analytic pair: {len(found)} clusters")
    return hits


# ---------------------------------------------------------------------------
# the perturbed hypersurface


def sphere_plug_params(eps: float, delta_prime: float = 0.04, t_half: float = 1.0, tau: float = 0.5):
    """Plug parameters, kappa and chart extents sized for translation eps."""
    extents = chart_extents_for(eps, delta_prime)
    d_p, t_p, a_p = extents
    kappa = 0.9 * t_p / t_half
    delta = 0.9 * d_p
    y_half = 0.9 * kappa * a_p
    params = PlugParams(delta=delta, t_half=t_half, y_half=y_half, tau=tau, collar=0.2 * delta, amp=y_half / 3.0)
    return params, kappa, extents


@dataclass
class HypersurfaceModel:
    epsilon: float
    profile: PlugProfile
    charts: tuple[PlugChart, PlugChart]
    kappa: float
    f_bound: float
    rho0: float = 0.3
    notes: list[str] = field(default_factory=list)
    # plug-coordinate half-extents of the box in t and y; default to the profile's own
    t_box: float | None = None
    y_box: float | None = None

    @property
    def box_t(self) -> float:
        return self.t_box if self.t_box is not None else self.profile.t_half

    @property
    def box_y(self) -> float:
        return self.y_box if self.y_box is not None else self.profile.params.y_half

    @property
    def w(self) -> np.ndarray:
        return np.array([0.0, self.epsilon, 0.0, 0.0])

    def rebuild_spec(self):
        return (self.epsilon, self.profile.params, self.profile.vector, self.kappa,
                self.charts[0].delta_p, self.charts[0].t_p, self.charts[0].a_p, self.rho0, self.profile.label,
                self.t_box, self.y_box)

    # -- plug coordinates -------------------------------------------------
    def box_mask(self, chart: PlugChart, c: np.ndarray, z: np.ndarray) -> np.ndarray:
        front = chart.sign * z[..., 0] > 0
        return (
            front
            & (np.abs(c[..., 1]) < self.profile.delta)
            & (np.abs(c[..., 2]) < self.kappa * self.box_t)
            & (np.abs(c[..., 3]) < chart.a_p)
        )

    def plug_image(self, chart: PlugChart, theta, x, t) -> np.ndarray:
        """R^4 image of plug points under chart o j."""
        v = self.profile.evaluate(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        return chart.forward_plug(theta, v["H"], t, -v["f"])

    def _inverse_H(self, v, t):
        return invert_H(self.profile, v, t)

    def curve_distance(self, xq, yq, t):
        """Signed distance in the chart (x', y') plane to {(H(x,t), -f(x,t)/kappa)}.

        Returns (distance, foot x, unit normal (nx, ny), d distance / d t).
        """
        k = self.kappa
        r = np.abs(yq) + self.f_bound / k + 1e-12
        lo = self._inverse_H(xq - r, t)
        hi = self._inverse_H(xq + r, t)
        n = 33
        X = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, n)[None, :]
        tt = np.broadcast_to(t[:, None], X.shape)

        def d2(xs, ts):
            v = self.profile.evaluate(xs, ts)
            return (v["H"] - xq[:, None] if xs.ndim == 2 else v["H"] - xq) ** 2 + (
                (-v["f"] / k - (yq[:, None] if xs.ndim == 2 else yq)) ** 2
            )

        D = d2(X, tt)
        i = np.argmin(D, axis=1)
        rows = np.arange(len(i))
        a = X[rows, np.maximum(i - 1, 0)]
        b = X[rows, np.minimum(i + 1, n - 1)]
        g = (math.sqrt(5.0) - 1.0) / 2.0
        c1 = b - g * (b - a)
        c2 = a + g * (b - a)
        f1 = d2(c1, t)
        f2 = d2(c2, t)
        for _ in range(60):
            left = f1 < f2
            b = np.where(left, c2, b)
            a = np.where(left, a, c1)
            c2n = np.where(left, c1, a + g * (b - a))
            c1n = np.where(left, b - g * (b - a), c2)
            c1, c2 = c1n, c2n
            f1 = d2(c1, t)
            f2 = d2(c2, t)
        xs = 0.5 * (a + b)
        v = self.profile.evaluate(xs, t)
        tx, ty = v["Hx"], -v["fx"] / k
        nrm = np.hypot(tx, ty)
        nx, ny = -ty / nrm, tx / nrm
        dist = (xq - v["H"]) * nx + (yq + v["f"] / k) * ny
        ddt = -(v["Ht"] * nx - v["ft"] / k * ny)
        return dist, xs, (nx, ny), ddt

    # -- defining function --------------------------------------------------
    def _box_terms(self, chart, c, mask):
        xq, tq, yq = c[mask, 1], c[mask, 2], c[mask, 3]
        t = tq / self.kappa
        sd, _, (nx, ny), ddt = self.curve_distance(xq, yq, t)
        chi, dchi = plateau(yq, chart.a_p / 2.0)
        return xq, yq, sd, nx, ny, ddt, chi, dchi

    def phi(self, z) -> np.ndarray:
        """Defining function of M: Q outside the boxes, blended signed distance inside."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = q_function(z)
        for chart in self.charts:
            c = chart.inverse(z)
            m = self.box_mask(chart, c, z)
            if np.any(m):
                _, yq, sd, *_rest, chi, _ = self._box_terms(chart, c, m)
                out[m] = yq + chi * (sd - yq)
        return out

    def grad(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = z.copy()
        for chart in self.charts:
            c = chart.inverse(z)
            m = self.box_mask(chart, c, z)
            if not np.any(m):
                continue
            _, yq, sd, nx, ny, ddt, chi, dchi = self._box_terms(chart, c, m)
            gc = np.zeros((int(m.sum()), 4))
            gc[:, 1] = chi * nx
            gc[:, 2] = chi * ddt / self.kappa
            gc[:, 3] = 1.0 + chi * (ny - 1.0) + dchi * (sd - yq)
            J = _forward_jacobian(chart, c[m])
            out[m] = np.linalg.solve(np.transpose(J, (0, 2, 1)), gc[..., None])[..., 0]
        return out

    def in_box(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        res = np.zeros(len(z), dtype=bool)
        for chart in self.charts:
            res |= self.box_mask(chart, chart.inverse(z), z)
        return res


def _forward_jacobian(chart: PlugChart, coords: np.ndarray, h: float = 1e-6) -> np.ndarray:
    cols = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        cols.append((chart.forward(*(coords + e).T) - chart.forward(*(coords - e).T)) / (2 * h))
    return np.stack(cols, axis=-1)


def assemble_M(eps: float, profile: PlugProfile | None = None, charts=None, kappa: float | None = None,
               rho0: float = 0.3, delta_prime: float = 0.04, check: bool = True, t_box: float | None = None,
               y_box: float | None = None) -> HypersurfaceModel:
    """Replace both polar plug slices of S^3 by the image of j."""
    if not eps > 0:
        raise InvalidParameterError("eps must be positive")
    params, k_default, extents = sphere_plug_params(eps, delta_prime)
    if profile is None:
        profile = build_plug_profile(params)
    if kappa is None:
        kappa = k_default
    if charts is None:
        charts = tuple(build_pole_chart(p, rho0, kappa, extents, plug=profile.params) for p in ("north", "south"))
    for ch in charts:
        if not kappa * (t_box or profile.t_half) < ch.t_p or not profile.delta < ch.delta_p:
            raise AssemblyError("plug box does not fit the chart")
    f_bound = sup_norm(profile.f, grid=120)
    if f_bound / kappa >= charts[0].a_p / 2:
        raise AssemblyError(f"plug height {f_bound / kappa:.3g} exceeds the blending plateau {charts[0].a_p / 2:.3g}")
    model = HypersurfaceModel(float(eps), profile, tuple(charts), float(kappa), float(f_bound), rho0,
                              t_box=t_box, y_box=y_box)
    if check:
        for ch in charts:
            rep = displaced_neighborhood_check(ch, eps)
            if not rep.passed:
                raise AssemblyError(f"{ch.pole} chart is not displaced for eps = {eps}: {rep}")
            flipped = displaced_neighborhood_check(ch, -eps)
            if not flipped.passed:
                raise AssemblyError(f"{ch.pole} chart meets S^3 - w for eps = {eps}")
    return model


def model_from_spec(spec) -> HypersurfaceModel:
    eps, params, vector, kappa, d_p, t_p, a_p, rho0, label, t_box, y_box = spec
    prof = profile_from_vector(params, vector, label) if vector is not None else degenerate_profile(params)
    charts = tuple(build_pole_chart(p, rho0, kappa, (d_p, t_p, a_p)) for p in ("north", "south"))
    return assemble_M(eps, prof, charts, kappa, rho0, check=False, t_box=t_box, y_box=y_box)


def sphere_model(eps: float, degenerate: bool = False, **kw) -> HypersurfaceModel:
    params, _, _ = sphere_plug_params(eps, kw.get("delta_prime", 0.04))
    prof = degenerate_profile(params) if degenerate else build_plug_profile(params)
    return assemble_M(eps, prof, **kw)


# ---------------------------------------------------------------------------
# leaf tracing


def _next_box(model: HypersurfaceModel, z: np.ndarray, direction: int):
    """(phase advance, chart) to the next box entry along the Hopf circle of z, or None."""
    best = None
    kT = model.kappa * model.box_t
    for chart in model.charts:
        c = chart.inverse(z[None, :])[0]
        if abs(c[1]) >= model.profile.delta:
            continue
        if direction > 0:
            dphi = (-kT - c[2]) % TWO_PI
        else:
            dphi = (c[2] - kT) % TWO_PI
        if best is None or dphi < best[0]:
            best = (dphi, chart)
    return best


def trace_leaf(model: HypersurfaceModel, seed, arc_budget: float = DEFAULT_BUDGET, direction: int = 1,
               mode: str = "hybrid", rtol: float = 1e-10, plug_budget: float = 200.0, **ambient_kw) -> Leaf:
    seed = np.asarray(seed, dtype=float)
    if abs(float(model.phi(seed)[0])) > 1e-8:
        raise DomainError("seed is not on M")
    if mode == "ambient":
        return _trace_ambient(model, seed, arc_budget, direction, **ambient_kw)
    if mode != "hybrid":
        raise InvalidParameterError("mode must be 'hybrid' or 'ambient'")
    prof = model.profile
    field_ = characteristic_field(prof)
    leaf = Leaf(seed.copy(), direction=direction)
    z = seed.copy()
    crossed = 0

    if model.in_box(seed)[0]:
        chart = next(ch for ch in model.charts if model.box_mask(ch, ch.inverse(seed[None]), seed[None])[0])
        c = chart.inverse_plug(seed[None])[0]
        _, xs, _, _ = model.curve_distance(np.array([c[1]]), np.array([c[3] / model.kappa]), np.array([c[2]]))
        z, done = _plug_pass(model, chart, field_, leaf, c[0], float(xs[0]), float(c[2]), direction, plug_budget, rtol)
        if done:
            return leaf
        crossed = 1

    while leaf.arc_used < arc_budget:
        nxt = _next_box(model, z, direction)
        remaining = arc_budget - leaf.arc_used
        if nxt is None:
            length = min(TWO_PI, remaining)
            _close_or_add(leaf, z, length, direction, seed, closing=bool(crossed))
            leaf.closed = leaf.closed or length >= TWO_PI - 1e-15
            return leaf
        dphi, chart = nxt
        if _close_or_add(leaf, z, min(dphi, remaining), direction, seed, closing=bool(crossed)):
            return leaf
        if dphi > remaining:
            return leaf
        entry = hopf_rotate(z, direction * dphi)
        c = chart.inverse_plug(entry[None])[0]
        # outside the support of the plug the orbit is a Hopf arc, so start at the box face
        z, done = _plug_pass(model, chart, field_, leaf, c[0], c[1], -direction * model.box_t, direction,
                             plug_budget, rtol)
        crossed += 1
        if done:
            return leaf
    return leaf


def _close_or_add(leaf: Leaf, z, length, direction, seed, closing: bool) -> bool:
    """Append an arc; stop it at the seed if the seed lies on it."""
    zc, sc = to_complex(z), to_complex(seed)
    c = np.sum(sc * np.conj(zc))
    phi_s = (np.angle(c) * direction) % TWO_PI
    on_circle = abs(abs(c) - 1.0) < 1e-12 and float(arc_distance(z, TWO_PI, direction, seed)) < 1e-6
    if closing and on_circle and 0 < phi_s <= length:
        leaf.pieces.append(("arc", np.array(z, dtype=float), float(phi_s), direction))
        leaf.arc_used += float(phi_s)
        leaf.closed = True
        return True
    leaf.pieces.append(("arc", np.array(z, dtype=float), float(length), direction))
    leaf.arc_used += float(length)
    return False


def _plug_pass(model, chart, field_, leaf, theta, x, t, direction, plug_budget, rtol):
    prof = model.profile
    orb = integrate_orbit(field_, PlugPoint(theta, x, t), direction, plug_budget, rtol, rtol, record=True)
    s = orb.samples
    pts = model.plug_image(chart, s[:, 1], s[:, 2], s[:, 3])
    leaf.pieces.append(("poly", pts))
    leaf.arc_used += float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    if orb.kind == "traversing":
        th, xe, _ = orb.final
        z = chart.forward_plug(th, xe, direction * prof.t_half, 0.0)
        return z, False
    leaf.trapped = chart.pole
    return None, True


def _trace_ambient(model: HypersurfaceModel, seed, arc_budget, direction, step: float = 2e-3,
                   scale: float = 1.0, stop=None, max_steps: int = 200_000) -> Leaf:
    """RK4 on the unit-speed Hamiltonian field of scale * Phi_M with Newton re-projection."""

    def vel(p):
        g = scale * model.grad(p)
        n = np.linalg.norm(g, axis=1)
        if np.any(n < 1e-8):
            raise SingularLevelError("gradient of the defining function vanishes")
        return direction * hamiltonian_vector(g) / n[:, None]

    p = seed[None, :].copy()
    pts = [p[0].copy()]
    used = 0.0
    for _ in range(max_steps):
        if used >= arc_budget:
            break
        h = min(step, arc_budget - used)
        k1 = vel(p)
        k2 = vel(p + 0.5 * h * k1)
        k3 = vel(p + 0.5 * h * k2)
        k4 = vel(p + h * k3)
        p = p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        for _ in range(3):
            g = model.grad(p)
            p = p - (model.phi(p) / np.sum(g * g, axis=1))[:, None] * g
        used += h
        pts.append(p[0].copy())
        if stop is not None and stop(p[0]):
            break
    arr = np.array(pts)
    leaf = Leaf(seed.copy(), [("poly", arr)], used, direction=direction)
    if np.linalg.norm(arr[-1] - seed) < 1e-6 and used > 10 * step:
        leaf.closed = True
    return leaf


# ---------------------------------------------------------------------------
# leafwise search


@dataclass
class SearchResult:
    eps: float
    hits: list[LeafwiseHit]
    n_candidates: int
    n_traced: int
    clearances: np.ndarray
    candidates: np.ndarray
    traced_mask: np.ndarray
    resolution: int
    arc_budget: float
    elapsed: float
    off_level: float
    notes: list[str] = field(default_factory=list)

    @property
    def min_clearance(self) -> float:
        miss = self.clearances >= HIT_THRESHOLD
        return float(self.clearances[miss].min()) if np.any(miss) else float("nan")

    @property
    def argmin_clearance(self) -> np.ndarray:
        miss = np.flatnonzero(self.clearances >= HIT_THRESHOLD)
        return self.candidates[miss[np.argmin(self.clearances[miss])]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "p1", "q1", "p2", "q2", "clearance", "traced"])
        for i, (y, c, t) in enumerate(zip(self.candidates, self.clearances, self.traced_mask)):
            w.writerow([i, *(f"{v:.12g}" for v in y), f"{c:.6e}", int(t)])
        return buf.getvalue()

    def summary(self) -> str:
        return (f"eps={self.eps:g} candidates={self.n_candidates} traced={self.n_traced} hits={len(self.hits)} "
                f"min_clearance={self.min_clearance:.4e} elapsed={self.elapsed:.2f}s")


_WORKER_MODEL: dict = {}


def _trace_chunk(args):
    spec, ys, budget, eps = args
    key = repr(spec[:2]) + repr(spec[3:])
    if key not in _WORKER_MODEL:
        _WORKER_MODEL.clear()
        _WORKER_MODEL[key] = model_from_spec(spec)
    return _trace_candidates(_WORKER_MODEL[key], ys, budget, eps)


def _trace_candidates(model, ys, budget, eps):
    w = np.array([0.0, eps, 0.0, 0.0])
    out = []
    for y in ys:
        z = y - w
        best = math.inf
        for d in (1, -1):
            leaf = trace_leaf(model, y, budget, d)
            best = min(best, leaf.distance_to(z))
        out.append(best)
    return out


def leafwise_search(model: HypersurfaceModel, eps: float | None = None, resolution: int = 10_000,
                    arc_budget: float = DEFAULT_BUDGET, hit_threshold: float = HIT_THRESHOLD,
                    workers: int = 1):
    """Candidates y on M and M + w, leaf through y traced both ways, distance to z = y - w."""
    eps = model.epsilon if eps is None else eps
    if eps == 0:
        return DegenerateCase(0.0)
    t0 = time.perf_counter()
    w = np.array([0.0, eps, 0.0, 0.0])
    ys, _ = slice_candidates(eps, resolution)
    off = float(max(np.max(np.abs(model.phi(ys))), np.max(np.abs(model.phi(ys - w)))))
    crossing = np.zeros(len(ys), dtype=bool)
    for chart in model.charts:
        crossing |= np.abs(chart.inverse(ys)[:, 1]) < model.profile.delta
    clear = hopf_circle_distance(ys, ys - w)
    idx = np.flatnonzero(crossing)
    if len(idx):
        if workers > 1:
            chunks = np.array_split(idx, workers * 4)
            spec = model.rebuild_spec()
            with ProcessPoolExecutor(workers) as ex:
                parts = list(ex.map(_trace_chunk, [(spec, ys[c], arc_budget, eps) for c in chunks if len(c)]))
            vals = np.concatenate([np.asarray(p, dtype=float) for p in parts])
        else:
            vals = np.asarray(_trace_candidates(model, ys[idx], arc_budget, eps))
        clear[idx] = vals
    hits = []
    for i in np.flatnonzero(clear < hit_threshold):
        z = ys[i] - w
        hits.append(LeafwiseHit(z, ys[i], float(clear[i])))
    reps = _cluster(np.array([h.z for h in hits]), 1e-3) if hits else []
    hits = [next(h for h in hits if np.linalg.norm(h.z - r) < 1e-3) for r in reps]
    res = SearchResult(eps, hits, len(ys), len(idx), clear, ys, crossing, resolution, arc_budget,
                       time.perf_counter() - t0, off)
    return res


# ---------------------------------------------------------------------------
# convergence diagnostics


def shrinking_plug_models(eps0: float = 0.2, n: int = 5, delta_prime: float = 0.04, max_halvings: int = 12):
    """Models M_k for eps_k = eps0 / 2^k carrying plugs from one Hamiltonian-diffeomorphic sequence.

    Stage k has support T / 2^k and sup|f_k| = sup|f_0| / 2^k; the conformal factor kappa and the
    plug shape stay fixed while the chart box shrinks with eps_k.
    """
    from .moser_solver import plug_sequence

    if n < 1:
        raise InvalidParameterError("need at least one model")
    params, kappa, _ = sphere_plug_params(eps0, delta_prime)
    base = build_plug_profile(params)
    f0 = sup_norm(base.f)
    targets = [(f0 / 2**k, params.t_half / 2**k) for k in range(n)]
    seq = plug_sequence(base, targets, with_maps=False, max_halvings=max_halvings)
    models = []
    for k, st in enumerate(seq.stages):
        eps = eps0 / 2**k
        extents = chart_extents_for(eps, delta_prime)
        charts = tuple(build_pole_chart(p, 0.3, kappa, extents) for p in ("north", "south"))
        models.append(assemble_M(eps, st.profile, charts, kappa, t_box=st.t_target,
                                 y_box=params.y_half * st.sup_target / f0))
    return models, seq


def plug_height(model: HypersurfaceModel, n: int = 24) -> float:
    """R^4 displacement from lifting the chart slice y' = 0 to the top of the plug box."""
    ch = model.charts[0]
    a = model.box_y / model.kappa
    kT = model.kappa * model.box_t
    g = np.meshgrid(np.linspace(0, TWO_PI, n, endpoint=False), np.linspace(-ch.delta_p, ch.delta_p, n),
                    np.linspace(-kT, kT, n), indexing="ij")
    th, x, t = (v.ravel() for v in g)
    out = 0.0
    for sgn in (1.0, -1.0):
        out = max(out, float(np.max(np.linalg.norm(ch.forward(th, x, t, sgn * a) - ch.forward(th, x, t, 0.0), axis=1))))
    return out


def hausdorff_to_sphere(model: HypersurfaceModel, n: int = 40, n_theta: int = 24) -> float:
    prof = model.profile
    d, T, k = prof.delta, prof.t_half, model.kappa
    xs = np.linspace(-d, d, 4 * n)
    ts = np.linspace(-T, T, 4 * n)
    X, Tt = np.meshgrid(xs, ts, indexing="ij")
    y = -prof.f.eval(X, Tt) / k
    sup_up = float(np.max(np.abs(np.sqrt(1.0 + 2.0 * y) - 1.0)))
    if model.f_bound > 0:
        fmax = model.f_bound / k
        sup_up = max(sup_up, abs(math.sqrt(1.0 + 2.0 * fmax) - 1.0), abs(math.sqrt(1.0 - 2.0 * fmax) - 1.0))
    best_down = 0.0
    for ch in model.charts:
        th = np.linspace(0, TWO_PI, n_theta, endpoint=False)
        G = np.meshgrid(th, np.linspace(-d, d, n), np.linspace(-T, T, n), indexing="ij")
        th_, xp, tp = (v.ravel() for v in G)
        s = ch.forward(th_, xp, k * tp, 0.0)
        xf = model._inverse_H(xp, tp)
        start = np.stack([th_, xf, tp], 1)
        best = _nearest_on_M(model, ch, s, start)
        best_down = max(best_down, float(np.max(best)))
    return max(sup_up, best_down)


def _nearest_on_M(model, chart, s, start, iters: int = 8, h: float = 1e-7):
    """Gauss-Newton on |chart(j(theta, x, t)) - s| from the given plug coordinates."""
    u = start.copy()

    def res(u_):
        return model.plug_image(chart, u_[:, 0], u_[:, 1], u_[:, 2]) - s

    r = res(u)
    cur = np.linalg.norm(r, axis=1)
    d, T = model.profile.delta, model.profile.t_half
    for _ in range(iters):
        J = np.stack([(res(u + h * e) - res(u - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
        JT = np.transpose(J, (0, 2, 1))
        A = JT @ J + 1e-14 * np.eye(3)
        step = np.linalg.solve(A, (JT @ r[..., None]))[..., 0]
        un = u - step
        un[:, 1] = np.clip(un[:, 1], -d, d)
        un[:, 2] = np.clip(un[:, 2], -T, T)
        rn = res(un)
        nn = np.linalg.norm(rn, axis=1)
        better = nn < cur
        u[better], r[better], cur[better] = un[better], rn[better], nn[better]
    return cur


def band_circle(chart: PlugChart, n: int = 256) -> np.ndarray:
    th = np.linspace(0, TWO_PI, n, endpoint=False)
    return chart.forward(th, np.zeros(n), np.zeros(n), np.zeros(n))


def core_circle(model: HypersurfaceModel, n: int = 256, core: str = "p_plus") -> np.ndarray:
    """L = image of S^1 x {p} under chart o j."""
    th = np.linspace(0, TWO_PI, n, endpoint=False)
    p = model.profile.p_plus if core == "p_plus" else model.profile.p_minus
    return model.plug_image(model.charts[0], th, np.full(n, p[0]), np.full(n, p[1]))


def tangent_angles(curve: np.ndarray) -> np.ndarray:
    """Angle (degrees) between the tangent of a closed sampled curve and the Hopf direction i z."""
    n = len(curve)
    h = TWO_PI / n
    tan = (np.roll(curve, -1, axis=0) - np.roll(curve, 1, axis=0)) / (2 * h)
    hop = hamiltonian_vector(curve)
    cosang = np.abs(np.sum(tan * hop, axis=1)) / (np.linalg.norm(tan, axis=1) * np.linalg.norm(hop, axis=1))
    return np.degrees(np.arccos(np.clip(cosang, 0.0, 1.0)))


@dataclass
class ConvergenceRow:
    k: int
    eps: float
    hausdorff: float
    height: float
    l_distance: float
    l_derivative_distance: float
    min_tangent_angle: float


def convergence_metrics(models: list[HypersurfaceModel], n: int = 256) -> list[ConvergenceRow]:
    if len(models) < 2:
        raise InvalidParameterError("need at least two models")
    rows = []
    for k, m in enumerate(models):
        limit = band_circle(m.charts[0], n)
        L = core_circle(m, n)
        h = TWO_PI / n
        dL = (np.roll(L, -1, 0) - np.roll(L, 1, 0)) / (2 * h)
        dlim = (np.roll(limit, -1, 0) - np.roll(limit, 1, 0)) / (2 * h)
        rows.append(
            ConvergenceRow(
                k,
                m.epsilon,
                hausdorff_to_sphere(m),
                plug_height(m),
                float(np.max(np.linalg.norm(L - limit, axis=1))),
                float(np.max(np.linalg.norm(dL - dlim, axis=1))),
                float(min(tangent_angles(limit).min(), tangent_angles(L).min())),
            )
        )
    return rows


def point_set_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    ta, tb = cKDTree(a), cKDTree(b)
    return float(max(tb.query(a)[0].max(), ta.query(b)[0].max()))
