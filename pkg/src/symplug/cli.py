"""Command line front end: scenario runs with text reports, CSV tables and SVG plots.

    symplug plug-check | exit-map | leafwise | theorem1 | theorem3 | moser | rescale
            [--config PATH] [--out DIR] [--seed N] [--parallel N] [--tol-scale X]

Every subcommand writes report.txt into --out and exits with status 1 iff a check failed.
"""
from __future__ import annotations

import argparse
import configparser
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, SymplugError
from .kernels import BACKEND

DEFAULT_EPS = tuple(0.2 / 2**k for k in range(5))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    params: object
    parity: float = -1.0
    eps: tuple[float, ...] = DEFAULT_EPS
    delta_prime: float = 0.04
    resolution: int = 10_000
    arc_budget: float = 50 * 2 * math.pi
    hit_threshold: float = 1e-4
    clearance: float = 1e-2
    double_check: bool = False
    n_orbits: int = 1000
    exit_tol: float = 1e-6
    moser_target: float = 0.01
    moser_s: tuple[float, ...] = (0.25, 0.5, 1.0)
    moser_grid: int = 64
    moser_tol: float = 1e-5
    sequence: tuple[tuple[float, float], ...] = ((0.05, 0.5), (0.01, 0.25))
    kappa: float = math.log(2.0)
    t3_eps0: float = 0.2
    t3_n: int = 5
    out: Path = Path("symplug-out")
    seed: int = 0
    parallel: int = 1
    tol_scale: float = 1.0

    def tol(self, value: float) -> float:
        return value * self.tol_scale


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {sec[key]!r}") from exc


def load_config(path: str | None = None, **overrides) -> ScenarioConfig:
    from .smooth_fields import PlugParams, params_from_section

    cp = configparser.ConfigParser()
    if path is not None:
        if not cp.read(path):
            raise ConfigError(f"cannot read config {path}")
    params = params_from_section(cp["plug"]) if "plug" in cp else PlugParams()
    sph = cp["sphere"] if "sphere" in cp else None
    mos = cp["moser"] if "moser" in cp else None
    res = cp["rescale"] if "rescale" in cp else None
    t3 = cp["theorem3"] if "theorem3" in cp else None
    dyn = cp["dynamics"] if "dynamics" in cp else None
    cfg = ScenarioConfig(params)
    if "plug" in cp and "parity" in cp["plug"]:
        word = cp["plug"]["parity"].strip().lower()
        if word not in ("odd", "even"):
            raise ConfigError(f"parity must be odd or even, got {word!r}")
        cfg.parity = -1.0 if word == "odd" else 1.0
    cfg.eps = _get(sph, "eps", _floats, cfg.eps)
    if not cfg.eps:
        raise ConfigError("eps list is empty")
    cfg.delta_prime = _get(sph, "delta_prime", float, cfg.delta_prime)
    cfg.resolution = _get(sph, "resolution", int, cfg.resolution)
    cfg.arc_budget = _get(sph, "arc_budget", float, cfg.arc_budget)
    cfg.hit_threshold = _get(sph, "hit_threshold", float, cfg.hit_threshold)
    cfg.clearance = _get(sph, "clearance", float, cfg.clearance)
    cfg.double_check = _get(sph, "double_check", lambda v: v.strip().lower() in ("1", "yes", "true", "on"),
                            cfg.double_check)
    cfg.n_orbits = _get(dyn, "n_orbits", int, cfg.n_orbits)
    cfg.exit_tol = _get(dyn, "exit_tol", float, cfg.exit_tol)
    cfg.moser_target = _get(mos, "target", float, cfg.moser_target)
    cfg.moser_s = _get(mos, "s", _floats, cfg.moser_s)
    cfg.moser_grid = _get(mos, "grid", int, cfg.moser_grid)
    cfg.moser_tol = _get(mos, "tol", float, cfg.moser_tol)
    if mos is not None and "sequence" in mos:
        vals = _floats(mos["sequence"])
        if len(vals) % 2:
            raise ConfigError("sequence needs (sup, T) pairs")
        cfg.sequence = tuple(zip(vals[::2], vals[1::2]))
    cfg.kappa = _get(res, "kappa", float, cfg.kappa)
    cfg.t3_eps0 = _get(t3, "eps0", float, cfg.t3_eps0)
    cfg.t3_n = _get(t3, "n", int, cfg.t3_n)
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    cfg.out = Path(cfg.out)
    if cfg.tol_scale <= 0:
        raise ConfigError("tol-scale must be positive")
    return cfg


# ---------------------------------------------------------------------------
# reporting


@dataclass
class Check:
    name: str
    passed: bool
    value: float | str
    threshold: str = ""
    detail: str = ""


@dataclass
class RunReport:
    command: str
    seed: int
    checks: list[Check] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    tables: dict[str, str] = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name, passed, value, threshold="", detail=""):
        if any(c.name == name for c in self.checks):
            raise ValueError(f"duplicate check {name}")
        self.checks.append(Check(name, bool(passed), value, threshold, detail))

    def error(self, name, exc):
        self.check(name, False, type(exc).__name__, "", str(exc))

    def render(self) -> str:
        out = [
            f"symplug {__version__} {self.command}",
            f"python {platform.python_version()} numpy {np.__version__} kernels={BACKEND} seed={self.seed}",
            "",
        ]
        w = max([len(c.name) for c in self.checks] + [10])
        for c in self.checks:
            val = c.value if isinstance(c.value, str) else f"{c.value:.4e}"
            out.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{w}}  {val:>12}  {c.threshold}  {c.detail}".rstrip())
        if self.lines:
            out += [""] + self.lines
        if self.timings:
            out.append("")
            out += [f"time {k}: {v:.2f}s" for k, v in self.timings.items()]
        out += ["", f"overall: {'PASS' if self.passed else 'FAIL'}"]
        return "\n".join(out) + "\n"

    def write(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.tables.items():
            (out / name).write_text(text)
        (out / "report.txt").write_text(self.render())


class _Timer:
    def __init__(self, report: RunReport, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.name] = time.perf_counter() - self.t0
        return False


def _svg(path: Path, draw):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 5))
    draw(ax)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)


def _profile(cfg):
    from .smooth_fields import build_plug_profile

    return build_plug_profile(cfg.params, parity=cfg.parity)


# ---------------------------------------------------------------------------
# subcommands


def cmd_plug_check(cfg: ScenarioConfig) -> RunReport:
    from .plug_dynamics import characteristic_field, find_trapped, integrate_orbit, stability_obstruction, trapping_distance
    from .plug_embedding import injectivity_check, pullback_residual
    from .smooth_fields import check_plug_conditions

    rep = RunReport("plug-check", cfg.seed)
    prof = _profile(cfg)
    with _Timer(rep, "conditions"):
        cond = check_plug_conditions(prof, tol=cfg.tol(1e-10), exact_tol=cfg.tol(1e-12))
    for row in cond.rows:
        rep.check(f"condition {row.condition}", row.passed, row.residual, f"<= {row.tolerance:g}")
    rep.tables["conditions.csv"] = cond.to_csv()
    with _Timer(rep, "pullback"):
        pb = pullback_residual(prof)
    rep.check("pullback j*sigma = omega", pb < cfg.tol(1e-6), pb, f"< {cfg.tol(1e-6):g}")
    inj = injectivity_check(prof, seed=cfg.seed)
    rep.check("embedding injective", inj.passed, inj.min_minor, "min 3x3 minor > 0", f"pair ratio {inj.min_ratio:.3g}")
    obs = stability_obstruction(prof)
    rep.check("opposite winding at cores", obs.opposite, f"{obs.winding_sign_plus:+d}/{obs.winding_sign_minus:+d}")
    fld = characteristic_field(prof)
    with _Timer(rep, "trapped"):
        trapped = find_trapped(fld)
    rep.check("trapped entries found", len(trapped) > 0, f"{len(trapped)}")
    worst = 0.0
    for p in trapped:
        orb = integrate_orbit(fld, p, 1, 100 * 2 * prof.t_half, record=False)
        worst = max(worst, trapping_distance(orb, prof) if orb.kind == "trapped_forward" else math.inf)
    if trapped:
        rep.check("trapped orbits converge to a core", worst < 1e-3, worst, "< 1e-3")

    def draw(ax):
        xs = np.linspace(-prof.delta, prof.delta, 201)
        ts = np.linspace(-prof.t_half, prof.t_half, 201)
        X, T = np.meshgrid(xs, ts, indexing="ij")
        v = prof.evaluate(X, T)
        ax.contour(T, X, v["H"], levels=41, linewidths=0.6)
        ax.contourf(T, X, v["f"], levels=21, cmap="RdBu", alpha=0.4)
        for c in (prof.p_plus, prof.p_minus):
            ax.plot(c[1], c[0], "k*")
        ax.set_xlabel("t")
        ax.set_ylabel("x")
        ax.set_title("level sets of H over f")

    _svg(cfg.out / "phase_portrait.svg", draw)
    return rep


def _exit_sample(prof, n, seed, rtol=1e-10):
    from .plug_dynamics import angle_gap, characteristic_field, exit_map_batch

    rng = np.random.default_rng(seed)
    fld = characteristic_field(prof)
    th = rng.uniform(0, 2 * math.pi, 4 * n)
    xs = rng.uniform(-prof.delta, prof.delta, 4 * n)
    th_e, x_e, ok = exit_map_batch(fld, th, xs, rtol, rtol)
    idx = np.flatnonzero(ok)[:n]
    err = angle_gap(th_e[idx], th[idx]) + np.abs(x_e[idx] - xs[idx])
    return th[idx], xs[idx], th_e[idx], x_e[idx], err


def cmd_exit_map(cfg: ScenarioConfig) -> RunReport:
    rep = RunReport("exit-map", cfg.seed)
    prof = _profile(cfg)
    with _Timer(rep, "orbits"):
        th, xs, th_e, x_e, err = _exit_sample(prof, cfg.n_orbits, cfg.seed)
    tol = cfg.tol(cfg.exit_tol)
    rep.check("traversing orbits sampled", len(err) == cfg.n_orbits, f"{len(err)}", f"== {cfg.n_orbits}")
    rep.check("exit equals entrance", float(err.max()) < tol if len(err) else False,
              float(err.max()) if len(err) else math.nan, f"< {tol:g}")
    rows = ["theta_in,x_in,theta_out,x_out,error"] + [
        f"{a:.12g},{b:.12g},{c:.12g},{d:.12g},{e:.3e}" for a, b, c, d, e in zip(th, xs, th_e, x_e, err)
    ]
    rep.tables["exit_map.csv"] = "\n".join(rows) + "\n"

    def draw(ax):
        ax.semilogy(xs, np.maximum(err, 1e-17), ".", ms=2)
        ax.set_xlabel("entry x")
        ax.set_ylabel("|d theta| + |d x|")

    _svg(cfg.out / "exit_error.svg", draw)
    return rep


def _slice_plot(path, res, eps):
    def draw(ax):
        c = res.candidates
        sc = ax.scatter(c[:, 0], c[:, 2], c=np.log10(np.maximum(res.clearances, 1e-17)), s=2, cmap="viridis")
        ax.figure.colorbar(sc, ax=ax, label="log10 clearance")
        ax.set_xlabel("p1")
        ax.set_ylabel("p2")
        ax.set_title(f"candidates on q1 = {eps / 2:g}")

    _svg(path, draw)


def _leafwise_one(cfg, rep, eps, double: bool):
    from .sphere_lab import DegenerateCase, leafwise_search, sphere_leafwise_oracle, sphere_model

    tag = f"eps={eps:g}"
    with _Timer(rep, f"oracle {tag}"):
        try:
            oracle = sphere_leafwise_oracle(eps)
        except (SymplugError, AssertionError) as exc:
            rep.error(f"{tag} sphere oracle", exc)
            oracle = None
    if isinstance(oracle, DegenerateCase):
        rep.check(f"{tag} degenerate case reported", True, "identity", detail=oracle.reason)
        return
    if oracle is not None:
        rep.check(f"{tag} sphere hits", len(oracle) == 2, f"{len(oracle)}", "== 2")
    try:
        model = sphere_model(eps, delta_prime=cfg.delta_prime)
    except SymplugError as exc:
        rep.error(f"{tag} assembly", exc)
        return
    with _Timer(rep, f"search {tag}"):
        res = leafwise_search(model, resolution=cfg.resolution, arc_budget=cfg.arc_budget,
                              hit_threshold=cfg.hit_threshold, workers=cfg.parallel)
    rep.lines.append(res.summary())
    rep.check(f"{tag} perturbed hits", len(res.hits) == 0, f"{len(res.hits)}", "== 0")
    clr = cfg.clearance / cfg.tol_scale
    rep.check(f"{tag} min clearance", res.min_clearance > clr, res.min_clearance, f"> {clr:g}",
              f"at {np.array2string(res.argmin_clearance, precision=4)}")
    rep.tables[f"leafwise_eps{eps:g}.csv"] = res.to_csv()
    _slice_plot(cfg.out / f"slice_eps{eps:g}.svg", res, eps)
    if double:
        with _Timer(rep, f"search x2 {tag}"):
            res2 = leafwise_search(model, resolution=2 * cfg.resolution, arc_budget=2 * cfg.arc_budget,
                                   hit_threshold=cfg.hit_threshold, workers=cfg.parallel)
        rep.lines.append("doubled: " + res2.summary())
        rep.check(f"{tag} stable under doubling", len(res2.hits) == len(res.hits), f"{len(res2.hits)}",
                  f"== {len(res.hits)}")


def cmd_leafwise(cfg: ScenarioConfig) -> RunReport:
    rep = RunReport("leafwise", cfg.seed)
    for eps in cfg.eps:
        _leafwise_one(cfg, rep, eps, False)
    return rep


def cmd_theorem1(cfg: ScenarioConfig) -> RunReport:
    rep = RunReport("theorem1", cfg.seed)
    for eps in cfg.eps:
        _leafwise_one(cfg, rep, eps, cfg.double_check)
    return rep


def cmd_theorem3(cfg: ScenarioConfig) -> RunReport:
    from .sphere_lab import band_circle, convergence_metrics, core_circle, shrinking_plug_models

    rep = RunReport("theorem3", cfg.seed)
    try:
        with _Timer(rep, "models"):
            models, seq = shrinking_plug_models(cfg.t3_eps0, cfg.t3_n, cfg.delta_prime)
    except SymplugError as exc:
        rep.error("model sequence", exc)
        return rep
    rep.tables["plug_sequence.csv"] = seq.to_csv()
    if len(models) < 2:
        rep.check("convergence metrics", True, "single model", detail="nothing to compare")
        return rep
    with _Timer(rep, "metrics"):
        rows = convergence_metrics(models)
    hd = [r.hausdorff for r in rows]
    ld = [r.l_distance for r in rows]
    rep.check("Hausdorff(M_k, S^3) strictly decreasing", all(b < a for a, b in zip(hd, hd[1:])), hd[-1])
    rep.check("Hausdorff within plug height", all(r.hausdorff <= r.height for r in rows),
              max(r.hausdorff / r.height for r in rows), "ratio <= 1")
    rep.check("L_k distance to limit decreasing", all(b < a for a, b in zip(ld, ld[1:])), ld[-1])
    ang = min(r.min_tangent_angle for r in rows)
    rep.check("limit circle transverse to Hopf", ang > 10.0, ang, "> 10 deg")
    lines = ["k,eps,hausdorff,height,l_distance,l_derivative_distance,min_tangent_angle"]
    lines += [f"{r.k},{r.eps:.6g},{r.hausdorff:.6e},{r.height:.6e},{r.l_distance:.6e},{r.l_derivative_distance:.6e},"
              f"{r.min_tangent_angle:.4f}" for r in rows]
    rep.tables["convergence.csv"] = "\n".join(lines) + "\n"

    def draw(ax):
        lim = band_circle(models[-1].charts[0])
        ax.plot(lim[:, 2], lim[:, 3], "k-", lw=1.5, label="limit circle")
        for m in models:
            L = core_circle(m)
            ax.plot(L[:, 2], L[:, 3], lw=0.8, label=f"L, eps={m.epsilon:g}")
        ax.set_xlabel("p2")
        ax.set_ylabel("q2")
        ax.legend(fontsize=7)

    _svg(cfg.out / "core_circles.svg", draw)
    return rep


def cmd_moser(cfg: ScenarioConfig) -> RunReport:
    from . import moser_solver as ms
    from .errors import InfeasibleTargetError

    rep = RunReport("moser", cfg.seed)
    prof = _profile(cfg)
    p = prof.params
    try:
        fam = ms.build_shrinking_family(prof, cfg.moser_target)
    except InfeasibleTargetError as exc:
        rep.check("shrinking family", False, "infeasible", detail=f"floor sup|f0| on W = {exc.floor:.4g}")
        return rep
    got = ms.family_sup(fam)
    rep.check("sup|f_1| within target", got <= cfg.moser_target, got, f"<= {cfg.moser_target:g}",
              f"m={fam.m:.4g} W radius={fam.w_radius:.4g}")
    tol = cfg.tol(cfg.moser_tol)
    for s in cfg.moser_s:
        with _Timer(rep, f"moser s={s:g}"):
            try:
                r = ms.verify_moser(fam, s, grid=cfg.moser_grid)
            except SymplugError as exc:
                rep.error(f"psi*omega_s = omega_0 at s={s:g}", exc)
                continue
        rep.check(f"psi*omega_s = omega_0 at s={s:g}", r.residual < tol, r.residual, f"< {tol:g}",
                  f"worst at {r.where[0]:.4f},{r.where[1]:.4f}")
    with _Timer(rep, "transport"):
        sol = ms.solve_transport(fam, 1.0, (65, 65))
        mirror, _, _ = ms.transport_values(fam, 1.0, sol.xs[:, None], -sol.ts[None, :], rtol=1e-13)
    ev = float(np.max(np.abs(sol.g - mirror)))
    rep.check("g even in t", ev <= cfg.tol(1e-8), ev, f"<= {cfg.tol(1e-8):g}")
    col = (np.abs(sol.xs)[:, None] >= p.delta - p.collar) | (np.abs(sol.ts)[None, :] >= p.t_half - p.collar)
    cv = float(np.max(np.abs(sol.g[col])))
    rep.check("g vanishes on the collar", cv <= cfg.tol(1e-10), cv, f"<= {cfg.tol(1e-10):g}")
    rep.tables["transport_g.csv"] = sol.to_csv()
    for s in cfg.moser_s:
        with _Timer(rep, f"moser hamiltonian s={s:g}"):
            mh = ms.moser_hamiltonian(fam, s)
            circ, _ = mh.circle_integrals(s, seed=cfg.seed)
            img, param_err = mh.image_check(s)
        worst = float(np.max(np.abs(circ)))
        rep.check(f"circle integrals vanish at s={s:g}", worst < cfg.tol(1e-8), worst, f"< {cfg.tol(1e-8):g}")
        rep.check(f"K-flow image matches j_s psi_s at s={s:g}", img < cfg.tol(1e-4), img, f"< {cfg.tol(1e-4):g}",
                  f"pointwise {param_err:.3g}")
    with _Timer(rep, "sequence"):
        try:
            seq = ms.plug_sequence(prof, cfg.sequence)
        except SymplugError as exc:
            rep.error("plug sequence", exc)
            return rep
    for st in seq.stages:
        scanned = ms.scanned_support(st.profile)
        rep.check(f"stage {st.k} sup|f_k| <= {st.sup_target:g}", st.f_norm <= st.sup_target, st.f_norm)
        rep.check(f"stage {st.k} support within T_k = {st.t_target:g}",
                  max(st.support, scanned) <= st.t_target, max(st.support, scanned))
    cr = seq.collar_residual(seed=cfg.seed)
    rep.check("eta_k = id on the collar", cr <= cfg.tol(1e-9), cr, f"<= {cfg.tol(1e-9):g}")
    rep.tables["plug_sequence.csv"] = seq.to_csv()

    def draw(ax):
        X, T = np.meshgrid(sol.xs, sol.ts, indexing="ij")
        cs = ax.contourf(T, X, sol.g, levels=31, cmap="viridis")
        ax.figure.colorbar(cs, ax=ax, label="g")
        ax.set_xlabel("t")
        ax.set_ylabel("x")

    _svg(cfg.out / "transport_g.svg", draw)
    return rep


def cmd_rescale(cfg: ScenarioConfig) -> RunReport:
    from . import moser_solver as ms

    rep = RunReport("rescale", cfg.seed)
    prof = _profile(cfg)
    try:
        r = ms.hyperbolic_rescale(prof, cfg.kappa, conjugacy=True, flow=True)
    except SymplugError as exc:
        rep.error("rescale precondition", exc)
        return rep
    lam = math.exp(cfg.kappa)
    rep.check("H_hat, f_hat closed forms", r.identity_residual <= cfg.tol(1e-12), r.identity_residual,
              f"<= {cfg.tol(1e-12):g}")
    rep.check("sup|f_hat| = e^kappa sup|f|", abs(r.f_hat_norm - lam * r.f_norm) <= 1e-12 * lam * r.f_norm,
              r.f_hat_norm, f"e^k|f| = {lam * r.f_norm:.6g}")
    scanned = ms.scanned_support(r.profile)
    rep.check("support within e^-kappa T", max(r.support_half_width, scanned) <= r.support_bound,
              max(r.support_half_width, scanned), f"<= {r.support_bound:g}")
    if r.conditions is not None:
        rep.check("rescaled plug conditions", r.conditions.passed, max(row.residual for row in r.conditions.rows))
    rep.check("characteristic conjugacy", r.conjugacy_residual <= cfg.tol(1e-6), r.conjugacy_residual,
              f"<= {cfg.tol(1e-6):g}")
    rep.check("flow of G carries graph to graph", r.flow_residual <= cfg.tol(1e-8), r.flow_residual,
              f"<= {cfg.tol(1e-8):g}")
    return rep


COMMANDS = {
    "plug-check": cmd_plug_check,
    "exit-map": cmd_exit_map,
    "leafwise": cmd_leafwise,
    "theorem1": cmd_theorem1,
    "theorem3": cmd_theorem3,
    "moser": cmd_moser,
    "rescale": cmd_rescale,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symplug", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"symplug {__version__} ({BACKEND} kernels)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file with [plug] [sphere] [dynamics] [moser] [rescale] [theorem3]")
        sp.add_argument("--out", help="output directory (default symplug-out)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--parallel", type=int, help="worker processes for the leafwise search")
        sp.add_argument("--tol-scale", type=float, dest="tol_scale", help="multiply every tolerance by this")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed, parallel=args.parallel, tol_scale=args.tol_scale)
    except (ConfigError, SymplugError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    rep = COMMANDS[args.command](cfg)
    rep.write(cfg.out)
    print(rep.render(), end="")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
