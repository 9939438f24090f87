"""Vectorised closed forms shared by the field objects and the kernels.

A plug profile of the built-in family is described by a flat float64 vector
(layout below) so the same numbers can be handed to the compiled kernels.
"""
from __future__ import annotations

import numpy as np

# parameter vector layout
AMP, RB, RBT, TAU, RC, RS, PARITY, H_ON, LAM, MU, FAM_ON, FAM_S, FAM_M, FAM_RW, DELTA, THALF = range(16)
NPARAM = 16

# tabulated antiderivative of the standard bump on [0, 1]
PANELS = 512
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def std_bump(v):
    """exp(1 - 1/(1 - v^2)) on |v| < 1, zero elsewhere."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    inside = np.abs(v) < 1.0
    q = 1.0 - v[inside] ** 2
    out[inside] = np.exp(1.0 - 1.0 / q)
    return out


def std_bump_d1(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    inside = np.abs(v) < 1.0
    vi = v[inside]
    q = 1.0 - vi**2
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * vi / q**2)
    return out


def std_bump_d2(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    inside = np.abs(v) < 1.0
    vi = v[inside]
    q = 1.0 - vi**2
    g1 = -2.0 * vi / q**2
    g2 = -2.0 / q**2 - 8.0 * vi**2 / q**3
    out[inside] = np.exp(1.0 - 1.0 / q) * (g1 * g1 + g2)
    return out


def _panel_integrals() -> np.ndarray:
    edges = np.linspace(0.0, 1.0, PANELS + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    vals = std_bump(mid[:, None] + half[:, None] * GL_NODES[None, :])
    return (vals @ GL_WEIGHTS) * half


CUMULATIVE = np.concatenate([[0.0], np.cumsum(_panel_integrals())])


def std_bump_integral(v):
    """Odd antiderivative of std_bump vanishing at 0 (constant beyond |v| = 1)."""
    v = np.asarray(v, dtype=float)
    a = np.minimum(np.abs(v), 1.0)
    k = np.minimum((a * PANELS).astype(np.int64), PANELS - 1)
    left = k / PANELS
    half = 0.5 * (a - left)
    mid = left + half
    nodes = mid[..., None] + half[..., None] * GL_NODES
    partial = (std_bump(nodes) @ GL_WEIGHTS) * half
    return np.sign(v) * (CUMULATIVE[k] + partial)


def smooth_step(v):
    """C-infinity step: 0 for v <= 0, 1 for v >= 1."""
    v = np.asarray(v, dtype=float)
    return _step_parts(v)[0]


def _step_parts(v):
    vc = np.clip(v, 1e-3, None)
    wc = np.clip(1.0 - v, 1e-3, None)
    # exp(-1/v) underflows long before v = 1e-3, so the clip changes nothing
    e0 = np.where(v > 1e-3, np.exp(-1.0 / vc), 0.0)
    e1 = np.where(v < 1.0 - 1e-3, np.exp(-1.0 / wc), 0.0)
    de0 = e0 / vc**2
    de1 = e1 / wc**2
    den = e0 + e1
    val = e0 / den
    dval = (de0 * e1 + e0 * de1) / den**2
    return val, dval


def plateau(u, radius):
    """Equal to 1 on |u| <= radius, 0 on |u| >= 2*radius; returns value and derivative."""
    u = np.asarray(u, dtype=float)
    arg = (2.0 * radius - np.abs(u)) / radius
    val, dval = _step_parts(arg)
    return val, dval * (-np.sign(u) / radius)


def core_profile(x, support):
    """(B, b) with b = B' a unit bump at 0 flanked by two negative half-mass lobes.

    The lobes make B = int_0^x b vanish identically for |x| >= support while
    b <= 1 keeps equality only at x = 0.
    """
    r = support / 3.0
    B = r * (std_bump_integral(x / r) - 0.5 * (std_bump_integral((x - 2 * r) / r) + std_bump_integral((x + 2 * r) / r)))
    b = std_bump(x / r) - 0.5 * (std_bump((x - 2 * r) / r) + std_bump((x + 2 * r) / r))
    return B, b


def evaluate(p: np.ndarray, x, t) -> dict[str, np.ndarray]:
    """All quantities of the family at (x, t).

    Keys: H, Hx, Ht, f, fx, ft, F (source of the transport equation, the
    s-derivative of f_x) and fs (the s-derivative of f).
    """
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    lam, mu = p[LAM], p[MU]
    tt = lam * t
    rb, rbt, rc, rs, tau = p[RB], p[RBT], p[RC], p[RS], p[TAU]

    B, b = core_profile(x, rb)
    c = std_bump((tt - tau) / rc) + std_bump((tt + tau) / rc)
    dc = (std_bump_d1((tt - tau) / rc) + std_bump_d1((tt + tau) / rc)) / rc
    h_on = p[H_ON]
    H = x - h_on * B * c
    Hx = 1.0 - h_on * b * c
    Ht = -h_on * B * dc * lam

    bt = std_bump(x / rbt)
    dbt = std_bump_d1(x / rbt) / rbt
    s = std_bump((tt - tau) / rs) + p[PARITY] * std_bump((tt + tau) / rs)
    ds = (std_bump_d1((tt - tau) / rs) + p[PARITY] * std_bump_d1((tt + tau) / rs)) / rs
    amp = p[AMP]
    f0 = amp * x * bt * s
    f0x = amp * (bt + x * dbt) * s
    f0t = amp * x * bt * ds * lam

    if p[FAM_ON] != 0.0:
        rw, m, sv = p[FAM_RW], p[FAM_M], p[FAM_S]
        px, dpx = plateau(x, rw)
        pa, dpa = plateau(tt - tau, rw)
        pb, dpb = plateau(tt + tau, rw)
        w = px * (pa + pb)
        beta = m + (1.0 - m) * w
        beta_x = (1.0 - m) * dpx * (pa + pb)
        beta_t = (1.0 - m) * px * (dpa + dpb) * lam
        scale = 1.0 - sv * (1.0 - beta)
        f = scale * f0
        fx = scale * f0x + sv * beta_x * f0
        ft = scale * f0t + sv * beta_t * f0
        F = (beta - 1.0) * f0x + beta_x * f0
        fs = (beta - 1.0) * f0
    else:
        f, fx, ft = f0, f0x, f0t
        F = np.zeros_like(f0)
        fs = np.zeros_like(f0)

    return {
        "H": H,
        "Hx": Hx,
        "Ht": Ht,
        "f": mu * f,
        "fx": mu * fx,
        "ft": mu * ft,
        "F": mu * F,
        "fs": mu * fs,
    }


def box_cutoff(u, inner, outer):
    """1 on |u| <= inner, 0 on |u| >= outer, smooth in between; returns value and derivative."""
    u = np.asarray(u, dtype=float)
    width = outer - inner
    val, dval = _step_parts((outer - np.abs(u)) / width)
    return val, dval * (-np.sign(u) / width)
