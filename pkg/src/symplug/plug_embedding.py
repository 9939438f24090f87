"""The graph embedding j of the plug into the box B and the pole charts of S^3.

Chart construction
------------------
Near the North Pole the band is the annulus

    (p2, q2) = (rho0 - rho cos(theta), -rho sin(theta)),  rho^2 = rho0^2 + 2x,

inside the plane {z1 = 1}; it passes through the pole at theta = 0, x = 0 and
pulls dp2 ^ dq2 back to dx ^ dtheta.  The remaining two coordinates are the
Hopf phase t and the level y of Q(z) = (|z|^2 - 1)/2:

    z = e^{i t} (sqrt(1 + 2y - |w|^2), w),    w = p2 + i q2.

Q is exactly y and the pull-back of the standard form is exactly
dx ^ dtheta + dy ^ dt, so no numerical correction is needed.  The South chart
is the North chart followed by the rotation z1 -> -z1, which is symplectic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChartExtentError, InvalidParameterError
from .smooth_fields import PlugParams, PlugProfile

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BPoint:
    theta: float
    x: float
    t: float
    y: float


def embed(profile: PlugProfile, theta, x, t) -> np.ndarray:
    """Vectorised j(theta, x, t) = (theta, H, t, -f); last axis ordered (theta, x, t, y)."""
    theta, x, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (theta, x, t)))
    return np.stack([theta, profile.H.eval(x, t), t, -profile.f.eval(x, t)], axis=-1)


def plug_embedding_j(profile: PlugProfile, p) -> BPoint:
    v = embed(profile, np.array([p.theta]), np.array([p.x]), np.array([p.t]))[0]
    return BPoint(float(v[0]), float(v[1]), float(v[2]), float(v[3]))


def _sigma(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """dx^dtheta + dy^dt on vectors with components (theta, x, t, y)."""
    return u[..., 1] * v[..., 0] - u[..., 0] * v[..., 1] + u[..., 3] * v[..., 2] - u[..., 2] * v[..., 3]


def pullback_residual(profile: PlugProfile, grid=(50, 50, 8), h: float = 1e-5) -> float:
    """max |j*sigma - omega| over coordinate bivectors, j differentiated by central differences."""
    nx, nt, nth = grid
    if min(nx, nt, nth) < 2 or nx * nt * nth < 16**3 // 8:
        raise InvalidParameterError("grid too small")
    d, T = profile.delta, profile.t_half
    xs = np.linspace(-d + h, d - h, nx)
    ts = np.linspace(-T + h, T - h, nt)
    ths = np.linspace(0.0, TWO_PI, nth, endpoint=False)
    TH, X, TT = np.meshgrid(ths, xs, ts, indexing="ij")

    def partial(k):
        e = [np.zeros_like(X) for _ in range(3)]
        e[k] += h
        plus = embed(profile, TH + e[0], X + e[1], TT + e[2])
        minus = embed(profile, TH - e[0], X - e[1], TT - e[2])
        return (plus - minus) / (2 * h)

    j_th, j_x, j_t = partial(0), partial(1), partial(2)
    Hx = profile.H.d_x(X, TT)
    Ht = profile.H.d_t(X, TT)
    fx = profile.f.d_x(X, TT)
    res = np.maximum.reduce(
        [
            np.abs(_sigma(j_th, j_x) - (-Hx)),
            np.abs(_sigma(j_th, j_t) - (-Ht)),
            np.abs(_sigma(j_x, j_t) - (-fx)),
        ]
    )
    return float(res.max())


@dataclass
class InjectivityReport:
    min_minor: float
    rank_deficient: list[tuple[float, float]]
    min_ratio: float
    n_points: int
    n_pairs: int

    @property
    def passed(self) -> bool:
        return not self.rank_deficient and self.min_ratio > 0


def injectivity_check(profile: PlugProfile, n_pairs: int = 1000, n_points: int = 10_000, seed: int = 0,
                      rank_tol: float = 1e-9) -> InjectivityReport:
    """Rank of dj from its 3x3 minors plus a random-pair distance ratio."""
    if n_pairs < 1000:
        raise InvalidParameterError("n_pairs must be at least 1000")
    rng = np.random.default_rng(seed)
    d, T = profile.delta, profile.t_half
    x = np.concatenate([rng.uniform(-d, d, n_points), [profile.p_plus[0], profile.p_minus[0]]])
    t = np.concatenate([rng.uniform(-T, T, n_points), [profile.p_plus[1], profile.p_minus[1]]])
    Hx, Ht = profile.H.d_x(x, t), profile.H.d_t(x, t)
    fx, ft = profile.f.d_x(x, t), profile.f.d_t(x, t)
    # rows theta, x_B, t_B, y ; columns theta, x, t
    J = np.zeros((x.size, 4, 3))
    J[:, 0, 0] = 1.0
    J[:, 1, 1], J[:, 1, 2] = Hx, Ht
    J[:, 2, 2] = 1.0
    J[:, 3, 1], J[:, 3, 2] = -fx, -ft
    minors = np.stack([np.abs(np.linalg.det(J[:, rows, :])) for rows in ([0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3])], 1)
    best = minors.max(axis=1)
    bad = np.flatnonzero(best <= rank_tol)
    witnesses = [(float(x[i]), float(t[i])) for i in bad]

    th = rng.uniform(0, TWO_PI, (2, n_pairs))
    xp = rng.uniform(-d, d, (2, n_pairs))
    tp = rng.uniform(-T, T, (2, n_pairs))

    def lift(th_, x_, t_):
        e = embed(profile, th_, x_, t_)
        return np.stack([np.cos(e[..., 0]), np.sin(e[..., 0]), e[..., 1], e[..., 2], e[..., 3]], -1)

    dom = np.sqrt((np.cos(th[0]) - np.cos(th[1])) ** 2 + (np.sin(th[0]) - np.sin(th[1])) ** 2
                  + (xp[0] - xp[1]) ** 2 + (tp[0] - tp[1]) ** 2)
    img = np.linalg.norm(lift(th[0], xp[0], tp[0]) - lift(th[1], xp[1], tp[1]), axis=-1)
    ratio = float(np.min(img / np.maximum(dom, 1e-300)))
    return InjectivityReport(float(best.min()), witnesses, ratio, x.size, n_pairs)


# ---------------------------------------------------------------------------
# pole charts


@dataclass(frozen=True)
class PlugChart:
    pole: str  # "north" | "south"
    rho0: float
    kappa: float
    delta_p: float
    t_p: float
    a_p: float

    @property
    def sign(self) -> float:
        return 1.0 if self.pole == "north" else -1.0

    def band(self, theta, x):
        rho = np.sqrt(self.rho0**2 + 2.0 * np.asarray(x, dtype=float))
        return self.rho0 - rho * np.cos(theta), -rho * np.sin(theta)

    def forward(self, theta, x, t, y) -> np.ndarray:
        """Chart coordinates (theta, x', t', y') -> R^4 as (p1, q1, p2, q2)."""
        theta, x, t, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (theta, x, t, y)))
        p2, q2 = self.band(theta, x)
        r1 = np.sqrt(1.0 + 2.0 * y - p2 * p2 - q2 * q2)
        c, s = np.cos(t), np.sin(t)
        z = np.stack([r1 * c, r1 * s, p2 * c - q2 * s, p2 * s + q2 * c], axis=-1)
        z[..., 0] *= self.sign
        z[..., 1] *= self.sign
        return z

    def forward_plug(self, theta, x, t, y) -> np.ndarray:
        """Plug-box coordinates with the kappa scaling (t, y) -> (kappa t, y/kappa)."""
        return self.forward(theta, x, self.kappa * np.asarray(t), np.asarray(y) / self.kappa)

    def inverse(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        p1, q1 = self.sign * z[..., 0], self.sign * z[..., 1]
        p2, q2 = z[..., 2], z[..., 3]
        t = np.arctan2(q1, p1)
        c, s = np.cos(t), np.sin(t)
        u2 = p2 * c + q2 * s
        v2 = -p2 * s + q2 * c
        a, b = self.rho0 - u2, -v2
        theta = np.mod(np.arctan2(b, a), TWO_PI)
        x = 0.5 * (a * a + b * b - self.rho0**2)
        y = 0.5 * (np.sum(z * z, axis=-1) - 1.0)
        return np.stack([theta, x, t, y], axis=-1)

    def inverse_plug(self, z) -> np.ndarray:
        c = self.inverse(z)
        c[..., 2] /= self.kappa
        c[..., 3] *= self.kappa
        return c

    def contains(self, z, shrink: float = 0.0) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        c = self.inverse(z)
        front = self.sign * z[..., 0] > 0
        return (
            front
            & (np.abs(c[..., 1]) < self.delta_p - shrink)
            & (np.abs(c[..., 2]) < self.t_p - shrink)
            & (np.abs(c[..., 3]) < self.a_p - shrink)
        )

    def pullback_matrix(self, coords, h: float = 1e-6) -> np.ndarray:
        """Pull-back of dp1^dq1 + dp2^dq2 as a 4x4 matrix in (theta, x', t', y') by central differences."""
        coords = np.asarray(coords, dtype=float)
        cols = []
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            cols.append((self.forward(*(coords + e).T) - self.forward(*(coords - e).T)) / (2 * h))
        J = np.stack(cols, axis=-1)  # (..., 4 R^4 comps, 4 chart dirs)
        Om = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)
        return np.einsum("...ai,ab,...bj->...ij", J, Om, J)


# sigma' = dx'^dtheta + dy'^dt' in (theta, x', t', y') order
SIGMA_PRIME = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)


def build_pole_chart(pole: str = "north", rho0: float = 0.3, kappa: float = 1.0,
                     extents: tuple[float, float, float] = (0.04, 0.05, 0.0025),
                     plug: PlugParams | None = None) -> PlugChart:
    if pole not in ("north", "south"):
        raise InvalidParameterError("pole must be 'north' or 'south'")
    delta_p, t_p, a_p = extents
    if min(rho0, kappa, delta_p, t_p, a_p) <= 0:
        raise InvalidParameterError("chart parameters must be positive")
    if rho0**2 - 2 * delta_p <= 0:
        raise ChartExtentError(f"band radius collapses: rho0^2 = {rho0**2:.4g} <= 2 delta' = {2 * delta_p:.4g}")
    reach = rho0 + math.sqrt(rho0**2 + 2 * delta_p)
    if reach**2 >= 1 - 2 * a_p:
        raise ChartExtentError(f"band leaves the valid range: |w| reaches {reach:.4g}, need < {math.sqrt(1 - 2 * a_p):.4g}")
    if t_p >= math.pi / 2:
        raise ChartExtentError("t-extent must stay below pi/2")
    if plug is not None:
        if not kappa * plug.t_half < t_p:
            raise ChartExtentError(f"kappa*T = {kappa * plug.t_half:.4g} must be below T' = {t_p:.4g}")
        if not plug.y_half / kappa < a_p:
            raise ChartExtentError(f"a/kappa = {plug.y_half / kappa:.4g} must be below a' = {a_p:.4g}")
        if not plug.delta < delta_p:
            raise ChartExtentError("plug delta must be below delta'")
    return PlugChart(pole, float(rho0), float(kappa), float(delta_p), float(t_p), float(a_p))


def chart_extents_for(eps: float, delta_p: float = 0.04) -> tuple[float, float, float]:
    """(delta', T', a') for translation size eps: T' = eps/4, a' = eps^2/16, delta' fixed."""
    return delta_p, eps / 4.0, eps * eps / 16.0


@dataclass
class DisplacementReport:
    eps: float
    q1_width: float
    overlap_witness: tuple | None
    shifted_sphere_margin: float
    sphere_shift_sign_constant: bool
    z_pm_outside: bool
    z_pm_distance: float
    shell_ok: bool | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        ok = (
            self.overlap_witness is None
            and self.sphere_shift_sign_constant
            and self.shifted_sphere_margin > 0
            and self.z_pm_outside
        )
        return ok and self.shell_ok is not False


def _chart_samples(chart: PlugChart, n_theta=48, n_x=9, n_t=17, n_y=5) -> np.ndarray:
    th = np.linspace(0, TWO_PI, n_theta, endpoint=False)
    xs = np.linspace(-chart.delta_p, chart.delta_p, n_x)
    ts = np.linspace(-chart.t_p, chart.t_p, n_t)
    ys = np.linspace(-chart.a_p, chart.a_p, n_y)
    g = np.meshgrid(th, xs, ts, ys, indexing="ij")
    return chart.forward(*(a.ravel() for a in g))


def displaced_neighborhood_check(chart: PlugChart, eps: float, shell=None, samples=None) -> DisplacementReport:
    """Sampled certificates that U misses U + w, S^3 + w and z_pm."""
    z = _chart_samples(chart) if samples is None else samples
    w = np.array([0.0, eps, 0.0, 0.0])
    q1 = z[:, 1]
    width = float(q1.max() - q1.min())
    inside = chart.contains(z + w)
    witness = None
    if np.any(inside):
        k = int(np.flatnonzero(inside)[0])
        witness = tuple(float(v) for v in z[k])
    g = np.sum((z - w) ** 2, axis=1) - 1.0
    const = bool(np.all(g > 0) or np.all(g < 0))
    margin = float(np.min(np.abs(g))) if const else -float(np.min(np.abs(g)))
    zpm = np.array([[s * math.sqrt(max(1 - eps * eps / 4, 0.0)), -eps / 2, 0.0, 0.0] for s in (1.0, -1.0)])
    outside = not bool(np.any(chart.contains(zpm)))
    dist = float(np.min(np.linalg.norm(z[:, None, :] - zpm[None, :, :], axis=2)))
    rep = DisplacementReport(eps, width, witness, margin, const, outside, dist)
    if shell is not None:
        r_in, r_out = shell
        ok = True
        for tau in np.linspace(0, 1, 11):
            r = np.linalg.norm(z + tau * w, axis=1)
            ok &= bool(np.all((r >= r_in) & (r <= r_out)))
        rep.shell_ok = ok
    if width >= eps:
        rep.notes.append("q1-extent of U is not below eps")
    return rep
