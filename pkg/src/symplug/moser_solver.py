"""Hamiltonian isotopies between plugs: shrinking f, Moser's method and the hyperbolic rescale.

Shrinking family
    f_s = (1 - s (1 - beta)) f_0, beta = m + (1 - m) P(x) [P(t - tau) + P(t + tau)]
    with P a plateau (1 near 0).  beta = 1 on the neighbourhoods W of the cores,
    so d f_s / ds = (beta - 1) f_0 vanishes there (the constant c(s) is 0).

Transport
    The isotopy psi_s(theta, x, t) = (theta + G_s, x, t), G_s = int_0^s g, with
    L_{xi_H} g_s = F_s = d/ds (d f_s / dx) and g_s = 0 on the bottom face.  It is
    solved by integrating backwards along xi_H (compiled kernel); orbits that
    stall at a core are continued from the cross-section t = t_core - offset at
    the same H-level, where g is constant on levels because F = 0 on W.

Moser Hamiltonian
    Along Q_s = j_s psi_s(P) one needs dK_s = g_s dx + (d f_s / ds) dt.  The
    pull-back of that form to P is closed (it is the transport equation) and its
    primitive k_s is accumulated along the same characteristics.  Q_s is a graph
    over (theta, x_B, t), so K_s(theta, x_B, t, y) = k_s(H^{-1}(x_B, t), t) times
    cut-offs in y and near the boundary.

Rescale
    The flow of G = -kappa y t b is (t, y) -> (e^{-kappa} t, e^{kappa} y) where
    b = 1, sending (H, f) to (H(x, e^k t), e^k f(x, e^k t)).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import RectBivariateSpline

from . import _closed_forms as cf
from . import kernels
from .errors import (
    IntegrationError,
    ExactnessError,
    InfeasibleTargetError,
    InvalidParameterError,
    RefinementRequired,
    TransportError,
)
from .plug_dynamics import PlugPoint, characteristic_field, integrate_orbit
from .smooth_fields import (
    ConditionReport,
    PlugProfile,
    check_plug_conditions,
    invert_H,
    profile_from_vector,
    sup_norm,
)

STALL_TOL = 1e-7
SIMPSON_NODES = 17


# ---------------------------------------------------------------------------
# shrinking family


@dataclass
class DeformationFamily:
    base: PlugProfile
    m: float
    w_radius: float
    target: float
    f0_norm: float
    # d f_s/ds and F_s do not depend on s for this family
    source_depends_on_s: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def vector(self, s: float) -> np.ndarray:
        v = np.array(self.base.vector, dtype=float)
        v[cf.FAM_ON] = 1.0
        v[cf.FAM_S] = s
        v[cf.FAM_M] = self.m
        v[cf.FAM_RW] = self.w_radius
        return v

    def profile(self, s: float) -> PlugProfile:
        return profile_from_vector(self.base.params, self.vector(s), label=f"{self.base.label}[s={s:g}]")

    def evaluate(self, s: float, x, t):
        return cf.evaluate(self.vector(s), x, t)

    def source(self, s, x, t):
        return self.evaluate(s, x, t)["F"]

    def ds_f(self, s, x, t):
        return self.evaluate(s, x, t)["fs"]

    def beta(self, x, t):
        lam = self.base.vector[cf.LAM]
        tau = self.base.vector[cf.TAU]
        px, _ = cf.plateau(x, self.w_radius)
        pa, _ = cf.plateau(lam * np.asarray(t) - tau, self.w_radius)
        pb, _ = cf.plateau(lam * np.asarray(t) + tau, self.w_radius)
        return self.m + (1.0 - self.m) * px * (pa + pb)

    def in_w(self, x, t):
        """Points of W (where beta = 1 and the source vanishes)."""
        return self.beta(x, t) >= 1.0 - 1e-15

    @property
    def gamma_offset(self) -> float:
        return 0.5 * self.w_radius / self.base.vector[cf.LAM]

    def check_conditions(self, s_values=(0.0, 0.5, 1.0), grid: int = 200) -> dict[float, ConditionReport]:
        return {s: check_plug_conditions(self.profile(s), grid=grid) for s in s_values}


def family_sup(family: DeformationFamily, s: float = 1.0, grid: int = 200, local: int = 201) -> float:
    """sup |f_s| from a global grid plus dense grids on the two 2r_W boxes around the cores."""
    prof = family.profile(s)
    best = sup_norm(prof.f, grid=grid)
    r = 2.0 * family.w_radius
    for core in (prof.p_plus, prof.p_minus):
        xs = np.linspace(-r, r, local)
        ts = np.linspace(core[1] - r / family.base.vector[cf.LAM], core[1] + r / family.base.vector[cf.LAM], local)
        X, T = np.meshgrid(xs, ts, indexing="ij")
        best = max(best, float(np.max(np.abs(prof.f.eval(X, T)))))
    return best


def _w_floor(base: PlugProfile, radius: float, n: int = 201) -> float:
    lam = base.vector[cf.LAM]
    r = 2.0 * radius
    out = 0.0
    for core in (base.p_plus, base.p_minus):
        X, T = np.meshgrid(np.linspace(-r, r, n), np.linspace(core[1] - r / lam, core[1] + r / lam, n), indexing="ij")
        out = max(out, float(np.max(np.abs(base.f.eval(X, T)))))
    return out


def _w_cap(base: PlugProfile) -> float:
    p = base.params
    return 0.25 * min(p.delta - p.collar, p.tau, p.t_half - p.collar - p.tau)


def build_shrinking_family(profile: PlugProfile, target_sup: float, w_radius: float | None = None,
                           max_halvings: int = 8) -> DeformationFamily:
    if profile.vector is None:
        raise InvalidParameterError("shrinking families need a profile of the closed family")
    if profile.vector[cf.FAM_ON] != 0.0:
        raise InvalidParameterError("profile is already a family member")
    if not target_sup > 0:
        raise InvalidParameterError("target must be positive")
    f0 = sup_norm(profile.f)
    cap = _w_cap(profile)
    if target_sup >= f0:
        return DeformationFamily(profile, 1.0, cap, target_sup, f0)
    m = target_sup / (2.0 * f0)
    if w_radius is not None:
        floor = _w_floor(profile, w_radius)
        if floor > target_sup:
            raise InfeasibleTargetError(
                f"target {target_sup:.4g} is below sup|f0| = {floor:.4g} on the W neighbourhoods", floor=floor
            )
        fam = DeformationFamily(profile, m, float(w_radius), target_sup, f0)
        got = family_sup(fam)
        if got > target_sup:
            raise InfeasibleTargetError(f"sup|f1| = {got:.4g} exceeds the target", floor=floor)
        return fam
    # largest admissible W: the transport solution gets steep near the separatrices when W is small
    r = cap
    for _ in range(max_halvings + 1):
        if _w_floor(profile, r) <= target_sup:
            fam = DeformationFamily(profile, m, r, target_sup, f0)
            if family_sup(fam) <= target_sup:
                return fam
        r *= 0.5
    floor = _w_floor(profile, r)
    raise InfeasibleTargetError(f"no W radius down to {r:.3g} reaches target {target_sup:.4g}", floor=floor)


# ---------------------------------------------------------------------------
# transport


def transport_values(family: DeformationFamily, s: float, x, t, rtol: float = 1e-12, budget: float = 1e4,
                     stall_tol: float = STALL_TOL):
    """(g_s, k_s, status) at arbitrary points by backward characteristics."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast(x, t).shape
    xb, tb = np.broadcast_to(x, shape).ravel(), np.broadcast_to(t, shape).ravel()
    g = np.zeros(xb.size)
    k = np.zeros(xb.size)
    st = np.zeros(xb.size, dtype=np.int64)
    inner = np.abs(xb) < family.base.delta
    if np.any(inner):
        gi, ki, si = kernels.transport(family.vector(s), xb[inner], tb[inner], family.gamma_offset, stall_tol,
                                       rtol, rtol, budget)
        g[inner], k[inner], st[inner] = gi, ki, si
    bad = np.flatnonzero((st == kernels.T_SIDEWAYS) | (st == kernels.T_FAILED))
    if len(bad):
        i = bad[0]
        raise TransportError(f"characteristic left the domain sideways (status {st[i]})", witness=(xb[i], tb[i]))
    return g.reshape(shape), k.reshape(shape), st.reshape(shape)


@dataclass
class TransportSolution:
    s: float
    xs: np.ndarray
    ts: np.ndarray
    g: np.ndarray
    k: np.ndarray
    status: np.ndarray
    gamma_offset: float
    mirrored: bool

    def __post_init__(self):
        self._sg = RectBivariateSpline(self.xs, self.ts, self.g)
        self._sk = RectBivariateSpline(self.xs, self.ts, self.k)

    def __call__(self, x, t, dx: int = 0, dt: int = 0):
        return self._sg(x, t, dx=dx, dy=dt, grid=False)

    def k_at(self, x, t, dx: int = 0, dt: int = 0):
        return self._sk(x, t, dx=dx, dy=dt, grid=False)

    @property
    def n_extended(self) -> int:
        return int(np.sum(self.status == kernels.T_EXTENDED))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "t", "g", "k", "status"])
        for i, x in enumerate(self.xs):
            for j, t in enumerate(self.ts):
                w.writerow([f"{x:.10g}", f"{t:.10g}", f"{self.g[i, j]:.12e}", f"{self.k[i, j]:.12e}", int(self.status[i, j])])
        return buf.getvalue()


def solve_transport(family: DeformationFamily, s: float = 1.0, grid=(65, 65), rtol: float = 1e-12,
                    symmetric: bool = False) -> TransportSolution:
    """g_s and k_s on a grid of Pi.  ``symmetric`` solves t <= 0 only and mirrors (g and k are even in t)."""
    if not 0.0 <= s <= 1.0:
        raise InvalidParameterError("s must lie in [0, 1]")
    nx, nt = grid
    if symmetric and nt % 2 == 0:
        raise InvalidParameterError("symmetric solve needs an odd number of t nodes")
    xs = np.linspace(-family.base.delta, family.base.delta, nx)
    ts = np.linspace(-family.base.t_half, family.base.t_half, nt)
    tsolve = ts[: nt // 2 + 1] if symmetric else ts
    X, T = np.meshgrid(xs, tsolve, indexing="ij")
    g, k, st = transport_values(family, s, X, T, rtol)
    if symmetric:
        g = np.concatenate([g, g[:, -2::-1]], axis=1)
        k = np.concatenate([k, k[:, -2::-1]], axis=1)
        st = np.concatenate([st, st[:, -2::-1]], axis=1)
    return TransportSolution(s, xs, ts, g, k, st, family.gamma_offset, symmetric)


def transport_residual(family: DeformationFamily, s: float, x, t, h: float = 1e-5, rtol: float = 1e-12) -> np.ndarray:
    """|L_{xi_H} g_s - F_s| by central differences of directly computed g."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    pts_x = np.concatenate([x + h, x - h, x, x])
    pts_t = np.concatenate([t, t, t + h, t - h])
    g, _, _ = transport_values(family, s, pts_x, pts_t, rtol)
    n = x.size
    gx = (g[:n] - g[n:2 * n]) / (2 * h)
    gt = (g[2 * n:3 * n] - g[3 * n:]) / (2 * h)
    v = family.evaluate(s, x, t)
    return np.abs(v["Hx"] * gt - v["Ht"] * gx - v["F"])


# ---------------------------------------------------------------------------
# isotopy psi_s


def simpson_weights(n: int) -> np.ndarray:
    if n < 3 or n % 2 == 0:
        raise InvalidParameterError("Simpson needs an odd number >= 3 of nodes")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * (n - 1))


@dataclass
class Isotopy:
    family: DeformationFamily
    s: float
    nodes: int = SIMPSON_NODES
    rtol: float = 1e-12
    tol: float = 1e-10
    g_override: object = None

    def g_at(self, sigma: float, x, t):
        if self.g_override is not None:
            return self.g_override(sigma, x, t)
        fam = self.family
        key_s = sigma if fam.source_depends_on_s else None
        key = (key_s, np.asarray(x).tobytes(), np.asarray(t).tobytes(), self.rtol)
        if key not in fam._cache:
            if len(fam._cache) > 16:
                fam._cache.clear()
            fam._cache[key] = transport_values(fam, sigma, x, t, self.rtol)[0]
        return fam._cache[key]

    def G(self, x, t):
        """G_s = int_0^s g_sigma d sigma by composite Simpson with a Richardson check."""
        if self.s == 0.0:
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)
        sig = np.linspace(0.0, self.s, self.nodes)
        vals = [self.g_at(float(q), x, t) for q in sig]
        fine = self.s * sum(w * v for w, v in zip(simpson_weights(self.nodes), vals))
        coarse = self.s * sum(w * v for w, v in zip(simpson_weights((self.nodes + 1) // 2), vals[::2]))
        err = float(np.max(np.abs(fine - coarse))) / 15.0 if np.size(fine) else 0.0
        if err > self.tol:
            raise RefinementRequired(f"Richardson estimate {err:.3g} above {self.tol:.1g}; use more s nodes")
        return fine

    def __call__(self, theta, x, t):
        theta = np.asarray(theta, dtype=float)
        return np.stack(np.broadcast_arrays(theta + self.G(x, t), np.asarray(x, float), np.asarray(t, float)), -1)


def isotopy_psi(family: DeformationFamily, s: float, nodes: int = SIMPSON_NODES, **kw) -> Isotopy:
    if not 0.0 <= s <= 1.0:
        raise InvalidParameterError("s must lie in [0, 1]")
    return Isotopy(family, float(s), nodes, **kw)


def _omega_matrix(v):
    Hx, Ht, fx = v["Hx"], v["Ht"], v["fx"]
    z = np.zeros_like(Hx)
    return np.stack(
        [np.stack([z, -Hx, -Ht], -1), np.stack([Hx, z, -fx], -1), np.stack([Ht, fx, z], -1)], -2
    )


@dataclass
class MoserReport:
    s: float
    residual: float
    infinitesimal_residual: float
    where: tuple[float, float]
    grid: int


def verify_moser(family: DeformationFamily, s: float, grid: int = 64, h: float = 1e-5, rtol: float = 1e-12,
                 g_override=None) -> MoserReport:
    """max |psi_s^* omega_s - omega_0| on a grid of Pi, psi_s differentiated by central differences."""
    d, T = family.base.delta, family.base.t_half
    xs = np.linspace(-d, d, grid + 2)[1:-1]
    ts = np.linspace(-T, T, grid + 2)[1:-1]
    X, Tt = (a.ravel() for a in np.meshgrid(xs, ts, indexing="ij"))
    psi = isotopy_psi(family, s, rtol=rtol, g_override=g_override)
    px = np.concatenate([X + h, X - h, X, X])
    pt = np.concatenate([Tt, Tt, Tt + h, Tt - h])
    Gall = psi.G(px, pt)
    n = X.size
    Gx = (Gall[:n] - Gall[n:2 * n]) / (2 * h)
    Gt = (Gall[2 * n:3 * n] - Gall[3 * n:]) / (2 * h)
    J = np.zeros((n, 3, 3))
    J[:, 0, 0] = 1.0
    J[:, 0, 1] = Gx
    J[:, 0, 2] = Gt
    J[:, 1, 1] = 1.0
    J[:, 2, 2] = 1.0
    Om_s = _omega_matrix(family.evaluate(s, X, Tt))
    Om_0 = _omega_matrix(family.evaluate(0.0, X, Tt))
    pull = np.einsum("nai,nab,nbj->nij", J, Om_s, J)
    res = np.abs(pull - Om_0).max(axis=(1, 2))
    i = int(np.argmax(res))
    # infinitesimal form: (d/ds of the pull-back) = L_Z omega_s - dF^dt coefficient, by the g used above
    if g_override is None:
        gvals = psi.g_at(s, px, pt)
    else:
        gvals = g_override(s, px, pt)
    gx = (gvals[:n] - gvals[n:2 * n]) / (2 * h)
    gt = (gvals[2 * n:3 * n] - gvals[3 * n:]) / (2 * h)
    v = family.evaluate(s, X, Tt)
    inf_res = float(np.max(np.abs(v["Hx"] * gt - v["Ht"] * gx - v["F"])))
    return MoserReport(s, float(res[i]), inf_res, (float(X[i]), float(Tt[i])), grid)


# ---------------------------------------------------------------------------
# Moser Hamiltonian on B


def hamiltonian_field_B(grad) -> np.ndarray:
    """xi_K on B = (theta, x, t, y) for sigma = dx^dtheta + dy^dt and i_xi sigma = -dK."""
    g = np.asarray(grad, dtype=float)
    return np.stack([g[..., 1], -g[..., 0], g[..., 3], -g[..., 2]], axis=-1)


def _fd_grad(fun, P, h: float = 1e-6):
    cols = []
    for e in np.eye(4):
        cols.append((fun(P + h * e) - fun(P - h * e)) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass
class MoserHamiltonian:
    family: DeformationFamily
    solution: TransportSolution
    y_inner: float
    y_outer: float

    def _boundary_cut(self, xb, t):
        p = self.family.base.params
        cx, _ = cf.box_cutoff(xb, p.delta - p.collar, p.delta - 0.5 * p.collar)
        ct, _ = cf.box_cutoff(t, p.t_half - p.collar, p.t_half - 0.5 * p.collar)
        return cx * ct

    def K(self, P, s: float | None = None):
        """K_s at points P = (theta, x_B, t, y) of B (s-independent for this family)."""
        P = np.asarray(P, dtype=float)
        xb, t, y = P[..., 1], P[..., 2], P[..., 3]
        x = invert_H(self.family.base, xb, t)
        cy, _ = cf.box_cutoff(y, self.y_inner, self.y_outer)
        return self.solution.k_at(x, t) * cy * self._boundary_cut(xb, t)

    def field(self, P, s: float | None = None):
        return hamiltonian_field_B(_fd_grad(lambda q: self.K(q, s), P))

    def flow(self, P, s0: float = 0.0, s1: float = 1.0, steps: int = 8):
        """Time-(s1 - s0) map of the s-dependent Hamiltonian K_s by RK4."""
        P = np.array(P, dtype=float)
        h = (s1 - s0) / steps
        s = s0
        for _ in range(steps):
            k1 = self.field(P, s)
            k2 = self.field(P + 0.5 * h * k1, s + 0.5 * h)
            k3 = self.field(P + 0.5 * h * k2, s + 0.5 * h)
            k4 = self.field(P + h * k3, s + h)
            P = P + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            s += h
        return P

    def embedded(self, s: float, theta, x, t, rtol: float = 1e-12):
        """j_s psi_s (theta, x, t) in B."""
        psi = isotopy_psi(self.family, s, rtol=rtol)
        th = psi(theta, x, t)[..., 0]
        v = self.family.evaluate(s, x, t)
        return np.stack([th, v["H"], np.asarray(t, float) + 0 * th, -v["f"]], -1)

    def circle_integrals(self, s: float = 1.0, n_circles: int = 64, n_nodes: int = 256, seed: int = 0,
                         h: float = 1e-6):
        """Integrals over the circles S^1 x {(x, t)} of Q_s; these generate H_1 so they decide exactness."""
        rng = np.random.default_rng(seed)
        p = self.family.base.params
        xs = rng.uniform(-p.delta, p.delta, n_circles)
        ts = rng.uniform(-p.t_half, p.t_half, n_circles)
        th = np.linspace(0.0, 2 * math.pi, n_nodes, endpoint=False)
        out = np.empty(n_circles)
        # psi_s shifts theta by G_s(x, t), constant along each circle
        G = isotopy_psi(self.family, s).G(xs, ts)
        gv, _, _ = transport_values(self.family, s, xs, ts)
        fs = self.family.ds_f(s, xs, ts)
        for i in range(n_circles):
            X = np.full(n_nodes, xs[i])
            T = np.full(n_nodes, ts[i])

            def emb(theta):
                v = self.family.evaluate(s, X, T)
                return np.stack([theta + G[i], v["H"], T, -v["f"]], -1)

            tangent = (emb(th + h) - emb(th - h)) / (2 * h)
            out[i] = float(np.sum(gv[i] * tangent[:, 1] + fs[i] * tangent[:, 2]) * (2 * math.pi / n_nodes))
        return out, list(zip(xs, ts))

    def loop_integrals(self, s: float = 1.0, n_loops: int = 16, n_nodes: int = 2048, seed: int = 0,
                       rtol: float = 1e-12):
        """Integrals of g dH + (d f_s/ds) dt over circles in Pi (closedness of the form)."""
        rng = np.random.default_rng(seed)
        p = self.family.base.params
        prof = self.family.base
        loops = []
        for core in (prof.p_plus, prof.p_minus):
            for r in (0.05, 0.2):
                loops.append((core[0], core[1], r))
        while len(loops) < n_loops:
            r = rng.uniform(0.02, 0.2)
            cx = rng.uniform(-p.delta + r, p.delta - r)
            ct = rng.uniform(-p.t_half + r, p.t_half - r)
            loops.append((cx, ct, r))
        phi = np.linspace(0.0, 2 * math.pi, n_nodes, endpoint=False)
        out = np.empty(len(loops))
        for i, (cx, ct, r) in enumerate(loops):
            x = cx + r * np.cos(phi)
            t = ct + r * np.sin(phi)
            dx, dt = -r * np.sin(phi), r * np.cos(phi)
            g, _, _ = transport_values(self.family, s, x, t, rtol)
            v = self.family.evaluate(s, x, t)
            integrand = g * (v["Hx"] * dx + v["Ht"] * dt) + v["fs"] * dt
            out[i] = float(np.sum(integrand) * (2 * math.pi / n_nodes))
        return out, loops

    def image_check(self, s: float = 1.0, n: int = 32, steps: int = 4, n_theta: int = 4):
        """Hausdorff distance between the K-flow of j(P) and j_s psi_s(P) on an n x n x n_theta sample.

        Both sets are graphs y = y(theta, x_B, t) over the same domain (the flow moves theta
        and y only, and theta-shifts preserve S^1-invariant sets), so the distance is bounded
        by the largest offset in (x_B, t, y) between the flowed sample and the target graph.
        Also returns the pointwise parametrisation error.
        """
        p = self.family.base.params
        xs = np.linspace(-p.delta, p.delta, n)
        ts = np.linspace(-p.t_half, p.t_half, n)
        ths = np.linspace(0.0, 2 * math.pi, n_theta, endpoint=False)
        TH, X, T = (a.ravel() for a in np.meshgrid(ths, xs, ts, indexing="ij"))
        start = self.embedded(0.0, TH, X, T)
        moved = self.flow(start, 0.0, s, steps)
        xq = invert_H(self.family.base, moved[:, 1], moved[:, 2])
        graph_y = -self.family.evaluate(s, xq, moved[:, 2])["f"]
        offset = np.max(np.abs(np.column_stack([moved[:, 1] - start[:, 1], moved[:, 2] - start[:, 2],
                                                moved[:, 3] - graph_y])))
        target = self.embedded(s, TH, X, T)
        diff = moved - target
        diff[:, 0] = np.angle(np.exp(1j * diff[:, 0]))
        return float(offset), float(np.max(np.linalg.norm(diff, axis=1)))


def moser_hamiltonian(family: DeformationFamily, s: float = 1.0, grid=(321, 321), y_width: float | None = None,
                      check_loops: bool = False, loop_tol: float = 1e-8) -> MoserHamiltonian:
    p = family.base.params
    sol = solve_transport(family, s, grid, symmetric=True)
    if y_width is None:
        y_width = 0.5 * p.y_half
    mh = MoserHamiltonian(family, sol, y_width, min(2.0 * y_width, 0.95 * p.y_half))
    if check_loops:
        vals, where = mh.circle_integrals(s)
        worst = int(np.argmax(np.abs(vals)))
        if abs(vals[worst]) > loop_tol:
            raise ExactnessError(f"circle integral {vals[worst]:.3g} over S^1 x {where[worst]}")
    return mh


# ---------------------------------------------------------------------------
# hyperbolic rescale


def rescale_vector(vec, kappa: float) -> np.ndarray:
    v = np.array(vec, dtype=float)
    v[cf.LAM] *= math.exp(kappa)
    v[cf.MU] *= math.exp(kappa)
    return v


@dataclass
class RescaleResult:
    profile: PlugProfile
    kappa: float
    identity_residual: float
    f_norm: float
    f_hat_norm: float
    support_half_width: float
    support_bound: float
    conditions: ConditionReport | None
    conjugacy_residual: float | None = None
    flow_residual: float | None = None
    notes: list[str] = field(default_factory=list)


def support_half_width(profile: PlugProfile) -> float:
    """Closed-form half-width in t of supp(H - x) and supp f for the closed family."""
    v = profile.vector
    return float((v[cf.TAU] + max(v[cf.RC], v[cf.RS])) / v[cf.LAM])


def scanned_support(profile: PlugProfile, n: int = 801) -> float:
    xs = np.linspace(-profile.delta, profile.delta, 101)
    ts = np.linspace(-profile.t_half, profile.t_half, n)
    X, T = np.meshgrid(xs, ts, indexing="ij")
    v = profile.evaluate(X, T)
    live = (np.abs(v["H"] - X) > 0) | (np.abs(v["f"]) > 0)
    cols = np.flatnonzero(live.any(axis=0))
    return float(np.max(np.abs(ts[cols]))) if len(cols) else 0.0


def hyperbolic_rescale(profile: PlugProfile, kappa: float, a_prime: float | None = None, check: bool = True,
                       conjugacy: bool = False, flow: bool = False) -> RescaleResult:
    if profile.vector is None:
        raise InvalidParameterError("rescale needs a profile of the closed family")
    if kappa < 0:
        raise InvalidParameterError("kappa must be non-negative")
    p = profile.params
    if a_prime is None:
        a_prime = 0.9 * p.y_half
    fn = sup_norm(profile.f)
    if kappa > 0 and not math.exp(kappa) * fn < a_prime:
        kmax = math.log(a_prime / fn) if fn > 0 else math.inf
        raise InvalidParameterError(f"need e^kappa sup|f| < a' = {a_prime:g}; admissible kappa < {kmax:.6g}")
    vec = rescale_vector(profile.vector, kappa)
    hat = profile_from_vector(p, vec, label=f"{profile.label}[k={kappa:g}]")
    lam = math.exp(kappa)
    xs = np.linspace(-p.delta, p.delta, 101)
    ts = np.linspace(-p.t_half, p.t_half, 101)
    X, T = np.meshgrid(xs, ts, indexing="ij")
    a = hat.evaluate(X, T)
    b = profile.evaluate(X, lam * T)
    ident = max(float(np.max(np.abs(a["H"] - b["H"]))), float(np.max(np.abs(a["f"] - lam * b["f"]))))
    res = RescaleResult(
        hat, kappa, ident, fn, sup_norm(hat.f), support_half_width(hat), math.exp(-kappa) * p.t_half,
        check_plug_conditions(hat) if check else None,
    )
    if conjugacy:
        res.conjugacy_residual = conjugacy_residual(profile, hat, kappa)
    if flow:
        res.flow_residual = rescale_flow_residual(profile, kappa, a_prime)
    return res


def conjugacy_residual(profile: PlugProfile, hat: PlugProfile, kappa: float, n: int = 24, seed: int = 0) -> float:
    """Orbits of (H_hat, f_hat) versus images of (H, f) orbits under t -> e^{-kappa} t."""
    rng = np.random.default_rng(seed)
    lam = math.exp(kappa)
    p = profile.params
    fo, fh = characteristic_field(profile), characteristic_field(hat)
    worst = 0.0
    compared = 0
    for _ in range(n):
        th = rng.uniform(0, 2 * math.pi)
        x = rng.uniform(-0.8 * p.delta, 0.8 * p.delta)
        that = rng.uniform(-0.5, 0.0) * p.t_half / lam
        S = 0.3 * p.t_half / lam
        a = integrate_orbit(fh, PlugPoint(th, x, that), 1, S, 1e-12, 1e-12, record=False)
        b = integrate_orbit(fo, PlugPoint(th, x, lam * that), 1, lam * S, 1e-12, 1e-12, record=False)
        if a.kind not in ("trapped_forward", "periodic") or b.kind not in ("trapped_forward", "periodic"):
            continue  # one of the two reached a face before the common time
        ta, xa, tta = a.final
        tb, xb, ttb = b.final
        d = max(abs(math.remainder(ta - tb, 2 * math.pi)), abs(xa - xb), abs(tta - ttb / lam))
        worst = max(worst, d)
        compared += 1
    if compared == 0:
        raise IntegrationError("no orbit pair stayed inside the plug for the comparison time")
    return worst


def rescale_generator(kappa: float, params, a_prime: float, support: float):
    """G = -kappa y t b with b = 1 on the inner box and 0 near the boundary of B."""
    d, T, a, c = params.delta, params.t_half, params.y_half, params.collar

    def cut(P):
        bx, dbx = cf.box_cutoff(P[..., 1], d - c, d - 0.5 * c)
        bt, dbt = cf.box_cutoff(P[..., 2], max(support, T - c), T - 0.5 * c)
        by, dby = cf.box_cutoff(P[..., 3], a_prime, 0.5 * (a_prime + a))
        return bx, dbx, bt, dbt, by, dby

    def G(P):
        P = np.asarray(P, dtype=float)
        bx, _, bt, _, by, _ = cut(P)
        return -kappa * P[..., 3] * P[..., 2] * bx * bt * by

    def field(P):
        P = np.asarray(P, dtype=float)
        bx, dbx, bt, dbt, by, dby = cut(P)
        t, y = P[..., 2], P[..., 3]
        b = bx * bt * by
        gth = np.zeros_like(t)
        gx = -kappa * y * t * dbx * bt * by
        gt = -kappa * y * (b + t * bx * dbt * by)
        gy = -kappa * t * (b + y * bx * bt * dby)
        return hamiltonian_field_B(np.stack([gth, gx, gt, gy], -1))

    return G, field


def rescale_flow(P, kappa: float, params, a_prime: float, support: float, steps: int = 64):
    _, fld = rescale_generator(kappa, params, a_prime, support)
    P = np.array(P, dtype=float)
    h = 1.0 / steps
    for _ in range(steps):
        k1 = fld(P)
        k2 = fld(P + 0.5 * h * k1)
        k3 = fld(P + 0.5 * h * k2)
        k4 = fld(P + h * k3)
        P = P + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return P


def rescale_flow_residual(profile: PlugProfile, kappa: float, a_prime: float, n: int = 24) -> float:
    """Flow of G applied to the graph of j versus the graph of j_hat (scipy integration)."""
    p = profile.params
    lam = math.exp(kappa)
    supp = support_half_width(profile)
    _, fld = rescale_generator(kappa, p, a_prime, supp)
    # inside the inner box b = 1 along the whole flow line
    xs = np.linspace(-(p.delta - p.collar), p.delta - p.collar, n)
    ts = np.linspace(-supp, supp, n)
    X, T = (a.ravel() for a in np.meshgrid(xs, ts, indexing="ij"))
    v = profile.evaluate(X, T)
    P0 = np.stack([np.zeros_like(X), v["H"], T, -v["f"]], -1)
    sol = solve_ivp(lambda _, y: fld(y.reshape(-1, 4)).ravel(), (0.0, 1.0), P0.ravel(), rtol=1e-12, atol=1e-14)
    P1 = sol.y[:, -1].reshape(-1, 4)
    hat = profile_from_vector(p, rescale_vector(profile.vector, kappa))
    vh = hat.evaluate(X, T / lam)
    Q = np.stack([np.zeros_like(X), vh["H"], T / lam, -vh["f"]], -1)
    return float(np.max(np.abs(P1 - Q)))


# ---------------------------------------------------------------------------
# plug sequence


@dataclass
class SequenceStage:
    k: int
    sup_target: float
    t_target: float
    family: DeformationFamily
    kappa: float
    profile: PlugProfile
    f_norm: float
    support: float
    moser: MoserHamiltonian | None = None
    moser_residual: float | None = None

    def eta(self, P):
        """eta_k: flow of K (norm shrink) followed by the hyperbolic rescale; identity outside B."""
        P = np.asarray(P, dtype=float)
        if self.moser is not None and self.family.m < 1.0:
            P = self.moser.flow(P)
        if self.kappa > 0:
            p = self.family.base.params
            P = rescale_flow(P, self.kappa, p, 0.9 * p.y_half, support_half_width(self.family.base))
        return P


@dataclass
class PlugSequence:
    base: PlugProfile
    stages: list[SequenceStage]

    def collar_residual(self, n: int = 2000, seed: int = 0) -> float:
        """max |eta_k(P) - P| over random points in the boundary collar of B."""
        rng = np.random.default_rng(seed)
        p = self.base.params
        c = 0.5 * p.collar
        P = np.column_stack([
            rng.uniform(0, 2 * math.pi, n),
            rng.uniform(-p.delta, p.delta, n),
            rng.uniform(-p.t_half, p.t_half, n),
            rng.uniform(-p.y_half, p.y_half, n),
        ])
        side = rng.integers(0, 3, n)
        sgn = rng.choice([-1.0, 1.0], n)
        P[side == 0, 1] = sgn[side == 0] * rng.uniform(p.delta - c, p.delta, int(np.sum(side == 0)))
        P[side == 1, 2] = sgn[side == 1] * rng.uniform(p.t_half - c, p.t_half, int(np.sum(side == 1)))
        P[side == 2, 3] = sgn[side == 2] * rng.uniform(0.97 * p.y_half, p.y_half, int(np.sum(side == 2)))
        worst = 0.0
        for st in self.stages:
            worst = max(worst, float(np.max(np.abs(st.eta(P) - P))))
        return worst

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "sup_target", "f_norm", "t_target", "support", "kappa", "w_radius", "moser_residual"])
        for s in self.stages:
            w.writerow([s.k, f"{s.sup_target:.6g}", f"{s.f_norm:.6g}", f"{s.t_target:.6g}", f"{s.support:.6g}",
                        f"{s.kappa:.6g}", f"{s.family.w_radius:.4g}",
                        "" if s.moser_residual is None else f"{s.moser_residual:.3e}"])
        return buf.getvalue()


def plug_sequence(profile: PlugProfile, targets, with_maps: bool = True, verify_grid: int | None = None,
                  max_halvings: int = 8) -> PlugSequence:
    """Plugs with sup|f_k| <= sup_k and supp(H_k - x) within |t| <= T_k, Hamiltonian diffeomorphic to the base."""
    targets = [(float(a), float(b)) for a, b in targets]
    if not targets:
        raise InvalidParameterError("need at least one target")
    for (a0, b0), (a1, b1) in zip(targets, targets[1:]):
        if a1 > a0 or b1 > b0:
            raise InvalidParameterError("targets must be non-increasing")
    T = profile.t_half
    stages = []
    for k, (sup_k, t_k) in enumerate(targets):
        try:
            if not 0 < t_k <= T:
                raise InvalidParameterError("support target must lie in (0, T]")
            kappa = math.log(T / t_k)
            fam = build_shrinking_family(profile, sup_k * math.exp(-kappa) * (1 - 1e-9), max_halvings=max_halvings)
            shrunk = fam.profile(1.0) if fam.m < 1.0 else profile
            if kappa > 0:
                vec = rescale_vector(shrunk.vector, kappa)
                prof_k = profile_from_vector(profile.params, vec, label=f"{profile.label}[k={k}]")
            else:
                prof_k = shrunk
            fn = family_sup(fam) * math.exp(kappa) if fam.m < 1.0 else sup_norm(prof_k.f)
            stage = SequenceStage(k, sup_k, t_k, fam, kappa, prof_k, fn, support_half_width(prof_k))
            if with_maps and fam.m < 1.0:
                stage.moser = moser_hamiltonian(fam)
                if verify_grid:
                    stage.moser_residual = verify_moser(fam, 1.0, grid=verify_grid).residual
            stages.append(stage)
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage index
            raise type(exc)(f"stage {k}: {exc}") from exc
    return PlugSequence(profile, stages)
