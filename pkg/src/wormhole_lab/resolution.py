"""Soliton-resolution diagnostics.

Local energy of the perturbation, radiation matching against the linear
flow, exterior projections onto P(R) = span{(r^-3, 0), (0, r^-3)}, the flat
5d exterior-energy check, and the static observables lambda and mu.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .evolution import EvolutionConfig, EvolutionResult, evolve
from .geometry import FieldState, bracket, energy_psi, integrate_cells
from .harmonic import shoot_harmonic, solve_prescribed
from .numerics import RadialGrid, cell_integrals, derivative


class ResolutionError(ValueError):
    pass


class ResolutionWarning(UserWarning):
    pass


# --------------------------------------------------------------------------- helpers

def _uniform_spacing(r: np.ndarray) -> float:
    r = np.asarray(r, dtype=float)
    if r.size < 6:
        raise ResolutionError("need at least 6 samples")
    d = np.diff(r)
    h = float(d[0])
    if h <= 0 or np.max(np.abs(d - h)) > 1e-9 * max(1.0, abs(r[-1])):
        raise ResolutionError("samples must sit on a uniform increasing grid")
    return h


def _cumulative_from_right(values: np.ndarray, r: np.ndarray, chart: str = "r") -> np.ndarray:
    """C_i = int_{r_i}^{r_end} values dr by the fourth-order cell rule.

    With ``chart="s"`` the rule runs in s = 1/r on the integrand values * r^2.
    That integrand is constant for the r^-2 decay of the plane P(R), so
    projections of P(R) data are exact to roundoff.
    """
    out = np.zeros_like(r, dtype=float)
    if chart == "s":
        cells = cell_integrals((values * r * r)[::-1], 1.0 / r[::-1])
        out[:-1] = np.cumsum(cells)[::-1]
    else:
        cells = cell_integrals(values, r)
        out[:-1] = np.cumsum(cells[::-1])[::-1]
    return out


def _integral_from(values: np.ndarray, r: np.ndarray, a: float, chart: str = "r") -> float:
    """int_a^{r_end} values dr for r_0 <= a <= r_end, off-node a by spline."""
    cum = _cumulative_from_right(values, r, chart)
    if a <= r[0]:
        return float(cum[0])
    if a >= r[-1]:
        return 0.0
    i = int(np.searchsorted(r, a))
    if abs(r[i] - a) < 1e-12 * max(1.0, abs(a)):
        return float(cum[i])
    if chart == "s":
        return float(_spline_in_s(r, cum, i, a))
    lo, hi = max(0, i - 4), min(r.size, i + 4)
    return float(CubicSpline(r[lo:hi], cum[lo:hi])(a))


def _spline_in_s(r, values, i, a):
    """Local cubic spline of ``values`` in s = 1/r evaluated at s = 1/a."""
    lo, hi = max(0, i - 4), min(r.size, i + 4)
    return CubicSpline(1.0 / r[lo:hi][::-1], values[lo:hi][::-1])(1.0 / a)


def _series_harmonic(series: EvolutionResult, harmonic):
    n = series.degree
    hm = harmonic if harmonic is not None else series.config.harmonic
    if n > 0 and hm is None:
        raise ResolutionError(f"degree {n} series needs the harmonic map Q_{n}")
    return hm


def _q_profile(series: EvolutionResult, harmonic) -> np.ndarray:
    r = series.config.grid.r()
    if series.degree == 0:
        return np.zeros_like(r)
    return harmonic(r)[0]


def _window_node(r: np.ndarray, A: float) -> float:
    """Largest grid node magnitude not exceeding A (the grid is symmetric)."""
    inside = r[(r >= -A - 1e-9) & (r <= A + 1e-9)]
    return float(np.max(np.abs(inside))) if inside.size else 0.0


# --------------------------------------------------------------------------- local energy

@dataclass
class DecayCurve:
    times: np.ndarray
    energies: np.ndarray
    A: float

    @property
    def peak(self) -> float:
        return float(np.max(self.energies))

    @property
    def peak_time(self) -> float:
        return float(self.times[int(np.argmax(self.energies))])

    def at(self, t: float) -> float:
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.energies[k])

    def decay_factor(self, t: float) -> float:
        """Post-transient peak over the value at time t (peak taken on [0, t])."""
        keep = self.times <= t + 1e-9
        peak = float(np.max(self.energies[keep]))
        val = self.at(t)
        return math.inf if val == 0.0 else peak / val


def local_energy(series: EvolutionResult, A: float, harmonic=None) -> DecayCurve:
    """Energy of (psi - Q_n, psi_t) on |r| <= A at every snapshot.

    The pair is measured with the degree-0 wave-map energy density, so the
    static series gives the discrete O(h^4) motion of Q_n.
    """
    if series.formulation != "psi":
        raise ResolutionError("local_energy needs a psi-form series")
    grid = series.config.grid
    r = grid.r()
    if A < 0 or A > min(-r[0], r[-1]) + 1e-12:
        raise ResolutionError(f"A = {A} lies outside the grid")
    hm = _series_harmonic(series, harmonic)
    Q = _q_profile(series, hm)
    a = _window_node(r, A)
    out = np.zeros(series.times.size)
    if a > 0:
        for k, (f, v) in enumerate(zip(series.fields, series.velocities)):
            out[k] = energy_psi(FieldState(grid, f - Q, v, "psi", 0), -a, a)
    return DecayCurve(series.times.copy(), out, a)


# --------------------------------------------------------------------------- radiation

def h0_norm(grid: RadialGrid, f, g, A: Optional[float] = None) -> float:
    """sqrt(int (f_r^2 + g^2) <r>^2 dr) over the grid or over |r| <= A."""
    r = grid.r()
    h = grid.spacing
    dens = (derivative(np.asarray(f, float), h, 1) ** 2 + np.asarray(g, float) ** 2) * (r * r + 1.0)
    if A is None:
        return math.sqrt(max(integrate_cells(dens, r), 0.0))
    a = _window_node(r, A)
    return math.sqrt(max(integrate_cells(dens, r, -a, a), 0.0)) if a > 0 else 0.0


@dataclass
class RadiationMatch:
    T_match: float
    times: np.ndarray
    mismatch: np.ndarray
    radiation_norm: float
    window: float
    linear: EvolutionResult = field(repr=False)

    @property
    def max_mismatch(self) -> float:
        return float(np.max(self.mismatch))

    @property
    def relative(self) -> float:
        """Worst window mismatch as a fraction of the radiation norm."""
        if self.radiation_norm == 0.0:
            return 0.0 if self.max_mismatch == 0.0 else math.inf
        return self.max_mismatch / self.radiation_norm


def extract_radiation(series: EvolutionResult, T_match: float, window: float = 10.0,
                      harmonic=None, margin_cells: int = 10) -> RadiationMatch:
    """Match the series against a linear radiation field from T_match on.

    phi_L solves the linear psi equation with data (psi - Q_n, psi_t) at
    T_match.  Reported: ||psi - Q_n - phi_L||_{H_0(|r| <= window)} at the
    series snapshots in [T_match, T_final], and the full-grid H_0 norm of
    the radiation data.  The window must stay outside the influence cone of
    the grid edges for the whole series.
    """
    if series.formulation != "psi":
        raise ResolutionError("extract_radiation needs a psi-form series")
    times = series.times
    T_final = float(times[-1])
    k0 = int(np.argmin(np.abs(times - T_match)))
    dt = series.config.dt
    if not (times[0] - 1e-9 <= T_match <= T_final + 1e-9) or abs(times[k0] - T_match) > 0.5 * dt:
        raise ResolutionError(f"T_match = {T_match} is not a snapshot time of the series")
    grid = series.config.grid
    r = grid.r()
    edge = min(-r[0], r[-1]) - margin_cells * grid.spacing
    elapsed = T_final - float(times[0])
    if window + elapsed > edge:
        raise ResolutionError(
            f"window |r| <= {window} meets the boundary influence cone by t = {T_final} "
            f"(needs window + {elapsed:g} <= {edge:g})")
    hm = _series_harmonic(series, harmonic)
    Q = _q_profile(series, hm)
    t0 = float(times[k0])
    data = FieldState(grid, series.fields[k0] - Q, series.velocities[k0].copy(), "psi", 0, t0)
    rem = T_final - t0
    stride = max(1, int(round((times[1] - times[0]) / dt))) if times.size > 1 else 1
    cfg = replace(series.config, formulation="linear-psi", T_final=max(rem, dt), harmonic=None,
                  stride=stride, snapshot_every=None)
    lin = evolve(cfg, data)
    rad = h0_norm(grid, data.field, data.velocity)
    out_t, out_m = [], []
    for k in range(k0, times.size):
        j = int(np.argmin(np.abs(lin.times - times[k])))
        if abs(lin.times[j] - times[k]) > 1e-9 * max(1.0, times[k]):
            continue
        df = series.fields[k] - Q - lin.fields[j]
        dv = series.velocities[k] - lin.velocities[j]
        out_t.append(float(times[k]))
        out_m.append(h0_norm(grid, df, dv, window))
    return RadiationMatch(t0, np.array(out_t), np.array(out_m), rad, window, lin)


# --------------------------------------------------------------------------- exterior projections

@dataclass
class ExteriorProjection:
    """pi_R and pi_R^perp of a pair on r >= R, with squared norms.

    A pair is (r, f, g) samples on a uniform grid; beyond the last sample it
    continues as (tail[0] r^-3, tail[1] r^-3) (zero by default).  Norms are
    squared H(r >= R; r^4 dr) norms.  ``*_formula`` are the closed forms,
    ``*_quadrature`` integrate the projected samples.
    """

    R: float
    r: np.ndarray
    coefficients: tuple
    parallel: tuple
    perp: tuple
    tail: tuple
    total: float
    parallel_formula: float
    parallel_quadrature: float
    perp_formula: float
    perp_quadrature: float

    @property
    def pythagoras_defect(self) -> float:
        s = self.parallel_quadrature + self.perp_quadrature
        return abs(self.total - s) / max(self.total, 1e-300)

    @property
    def formula_defect(self) -> float:
        return abs(self.parallel_formula - self.parallel_quadrature) / max(self.parallel_formula, 1e-300)

    def parallel_pair(self):
        a, b = self.coefficients
        return (self.r, self.parallel[0], self.parallel[1]), (a, b)

    def perp_pair(self):
        a, b = self.coefficients
        return (self.r, self.perp[0], self.perp[1]), (self.tail[0] - a, self.tail[1] - b)


def _restrict(r, f, g, R):
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if r.shape != f.shape or r.shape != g.shape:
        raise ResolutionError("pair samples must share the node array")
    if R <= 0:
        raise ResolutionError("R must be positive")
    if not (r[0] - 1e-12 <= R < r[-1]):
        raise ResolutionError(f"R = {R} is outside the sample range [{r[0]}, {r[-1]}]")
    h = _uniform_spacing(r)
    keep = r >= R - 8.5 * h * (1.0 + 1e-9)
    return r[keep], f[keep], g[keep], h


def _pair_parts(r, f, g, h, R, tail):
    """(int f_r^2 r^4, int g^2 r^4, int r g, f(R)) on [R, inf) by quadrature."""
    ta, tb = tail
    r_end = r[-1]
    fr = derivative(f, h, 1)
    grad = _integral_from(fr**2 * r**4, r, R, "s") + 3.0 * ta**2 / r_end**3
    kin = _integral_from(g**2 * r**4, r, R, "s") + tb**2 / r_end
    mom = _integral_from(r * g, r, R, "s") + tb / r_end
    fR = float(f[0])
    if r[0] < R:
        # r^3 f is constant on P(R), so interpolating it keeps projections exact there
        fR = float(_spline_in_s(r, f * r**3, int(np.searchsorted(r, R)), R)) / R**3
    return grad, kin, mom, fR


def project_exterior(pair, R: float, tail: Sequence[float] = (0.0, 0.0)) -> ExteriorProjection:
    """Orthogonal projection onto P(R) in H(r >= R; r^4 dr).

    pi_R(f, 0) = R^3 f(R) r^-3 and pi_R(0, g) = R (int_R^inf g rho drho) r^-3,
    so ||pi_R||^2 = 3 R^3 f(R)^2 + R (int_R^inf r g dr)^2.
    """
    r, f, g, h = _restrict(*pair, R)
    tail = (float(tail[0]), float(tail[1]))
    grad, kin, mom, fR = _pair_parts(r, f, g, h, R, tail)
    a = R**3 * fR
    b = R * mom
    fp, gp = a * r**-3, b * r**-3
    fq, gq = f - fp, g - gp
    par_formula = 3.0 * R**3 * fR**2 + R * mom**2
    perp_formula = grad - 3.0 * R**3 * fR**2 + kin - R * mom**2
    pg, pk, _, _ = _pair_parts(r, fp, gp, h, R, (a, b))
    qg, qk, _, _ = _pair_parts(r, fq, gq, h, R, (tail[0] - a, tail[1] - b))
    return ExteriorProjection(
        R, r, (a, b), (fp, gp), (fq, gq), tail, grad + kin,
        par_formula, pg + pk, perp_formula, qg + qk,
    )


# --------------------------------------------------------------------------- exterior energy

@dataclass
class ChannelReport:
    R: float
    norm_parallel: float
    norm_perp: float
    norm_total: float
    times: np.ndarray
    exterior_forward: np.ndarray
    exterior_backward: np.ndarray
    inf_forward: float
    inf_backward: float
    ratio: float
    projection: ExteriorProjection = field(repr=False)

    @property
    def channel_energy(self) -> float:
        return max(self.inf_forward, self.inf_backward)

    @property
    def initial_exterior(self) -> float:
        return float(self.exterior_forward[0])


def exterior_energy(v, vt, r, h, R_t: float, r_out: Optional[float] = None) -> float:
    """int_{R_t <= r <= r_out} (v_t^2 + v_r^2) r^4 dr on the staggered flat grid."""
    ext = np.concatenate([v[1::-1], v])
    vr = derivative(ext, h, 1)[2:]
    dens = (vt**2 + vr**2) * r**4
    out = _integral_from(dens, r, R_t)
    if r_out is not None:
        out -= _integral_from(dens, r, r_out)
    return out


def _flat_run(grid, f, g, T, dt_snap, order, cfl):
    cfg = EvolutionConfig(grid, T, formulation="flat-radial", d=5, order=order, cfl=cfl)
    stride = max(1, int(round(dt_snap / cfg.dt)))
    cfg = replace(cfg, stride=stride)
    return evolve(cfg, FieldState(grid, f, g, "psi", 0))


def exterior_energy_check(data, R: float, t_grid: Optional[Sequence[float]] = None,
                          order: int = 4, cfl: float = 0.5, margin_cells: int = 20) -> ChannelReport:
    """Exterior energy of flat 5d radial free waves against 1/2 ||pi_R^perp||^2.

    ``data`` is (grid, f, g) on a :func:`flat_radial_grid`.  Both time
    directions are evolved ((f, -g) forward stands in for t < 0).  The inf
    over t is the min over ``t_grid`` (default: 41 points on [0, 4R]).
    """
    grid, f, g = data
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    r = grid.r()
    h = grid.spacing
    if t_grid is None:
        t_grid = np.linspace(0.0, 4.0 * R, 41)
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    t_max = float(t_grid[-1])
    if t_max < 4.0 * R:
        warnings.warn(f"t_grid ends at {t_max:g} < 4R = {4 * R:g}; the inf over t may not be reached",
                      ResolutionWarning, stacklevel=2)
    live = np.nonzero((np.abs(f) > 0) | (np.abs(g) > 0))[0]
    support = float(r[live[-1]]) if live.size else 0.0
    if support + t_max > r[-1] - margin_cells * h:
        raise ResolutionError(
            f"grid edge {r[-1]:g} is reached by the data support {support:g} before t = {t_max:g}")
    proj = project_exterior((r, f, g), R)
    steps = np.diff(t_grid)
    dt_snap = float(np.min(steps[steps > 0])) if np.any(steps > 0) else max(t_max, h)
    curves = []
    for sgn in (1.0, -1.0):
        if t_max > 0:
            res = _flat_run(grid, f, sgn * g, t_max, dt_snap, order, cfl)
            times, fields, vels = res.times, res.fields, res.velocities
        else:
            times, fields, vels = np.zeros(1), f[None, :], (sgn * g)[None, :]
        vals = []
        for t in t_grid:
            k = int(np.argmin(np.abs(times - t)))
            vals.append(exterior_energy(fields[k], vels[k], r, h, R + float(times[k])))
        curves.append(np.array(vals))
    inf_f, inf_b = float(np.min(curves[0])), float(np.min(curves[1]))
    half = 0.5 * proj.perp_formula
    ratio = max(inf_f, inf_b) / half if half > 0 else math.inf
    return ChannelReport(R, proj.parallel_formula, proj.perp_formula, proj.total, t_grid,
                         curves[0], curves[1], inf_f, inf_b, ratio, proj)


def smooth_step(x) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def plane_data(grid: RadialGrid, R: float, alpha: float, beta: float, cutoff: float,
               cutoff_width: Optional[float] = None):
    """(alpha r^-3, beta r^-3) on [R/2, cutoff], switched on over [R/4, R/2] and off past cutoff.

    The inner switch sits well inside r = R so that its outgoing front
    trails the cone r = R + t by R/2; a front exactly on the cone would leak
    its discrete precursor into the exterior region.
    """
    r = grid.r()
    w = cutoff_width if cutoff_width is not None else 0.5 * cutoff
    chi = smooth_step((r - 0.25 * R) / (0.25 * R)) * (1.0 - smooth_step((r - cutoff) / w))
    base = chi * r**-3
    return grid, alpha * base, beta * base


def seeded_bump_data(grid: RadialGrid, R: float, seed: int):
    """Random smooth compact (f, g) straddling r = R, fixed by ``seed``."""
    from .evolution import smooth_bump
    rng = np.random.default_rng(seed)
    r = grid.r()
    f = np.zeros_like(r)
    g = np.zeros_like(r)
    for _ in range(2):
        c = rng.uniform(0.5 * R, 2.5 * R)
        w = rng.uniform(0.3 * R, 1.0 * R)
        f += rng.normal() * smooth_bump(r, c, w)
        c = rng.uniform(0.5 * R, 2.5 * R)
        w = rng.uniform(0.3 * R, 1.0 * R)
        g += rng.normal() * smooth_bump(r, c, w) / R
    return grid, f, g


# --------------------------------------------------------------------------- lambda, mu

@dataclass
class Observables:
    r: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    tail: float
    r_min: float

    @property
    def mu_tail_bound(self) -> np.ndarray:
        """Bound on the part of mu carried by rho beyond the last sample."""
        return self.r * self.tail


def _unpack_u(state):
    if isinstance(state, FieldState):
        if state.formulation != "u":
            raise ResolutionError("lambda_mu needs a u-form state")
        return state.r, state.field, state.velocity
    r, u, ut = state
    return np.asarray(r, float), np.asarray(u, float), np.asarray(ut, float)


def lambda_mu(state, r_min: float, tail_warn: float = 0.01) -> Observables:
    """lambda = r^3 u_e and mu = r int_r^inf d_t u_e rho drho for r >= r_min.

    u_e = (r^2 + 1) u / r^2.  mu is integrated inward from the outer sample.
    The neglected tail int_{r_end}^inf is bounded by 2 r_end |d_t u_e(r_end)| r_end,
    which covers any finite-energy decay d_t u_e = O(rho^{-5/2}).
    """
    if not r_min > 0:
        raise ResolutionError("r_min must be positive")
    r, u, ut = _unpack_u(state)
    keep = r >= r_min
    r, u, ut = r[keep], u[keep], ut[keep]
    if r.size < 4:
        raise ResolutionError("fewer than 4 samples beyond r_min")
    fac = (r * r + 1.0) / (r * r)
    ue, uet = fac * u, fac * ut
    lam = r**3 * ue
    integrand = uet * r
    cum = _cumulative_from_right(integrand, r)
    tail = 2.0 * abs(integrand[-1]) * r[-1]
    mu = r * cum
    scale = float(np.max(np.abs(mu))) if mu.size else 0.0
    bound = float(np.max(r * tail))
    if bound > tail_warn * scale and bound > 0:
        warnings.warn(f"mu tail estimate {bound:.3e} exceeds {tail_warn:.0%} of max|mu| = {scale:.3e}",
                      ResolutionWarning, stacklevel=2)
    return Observables(r, lam, mu, tail, r_min)


def fit_lambda_limit(obs: Observables, window: Sequence[float]) -> tuple:
    """Least-squares lambda(r) = a + c / r on the window; returns (a, c, rms)."""
    m = (obs.r >= window[0]) & (obs.r <= window[1])
    if np.count_nonzero(m) < 3:
        raise ResolutionError("fit window holds fewer than 3 samples")
    A = np.column_stack([np.ones(np.count_nonzero(m)), 1.0 / obs.r[m]])
    coef, *_ = np.linalg.lstsq(A, obs.lam[m], rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - obs.lam[m]) ** 2)))
    return float(coef[0]), float(coef[1]), rms


# --------------------------------------------------------------------------- static comparison

@dataclass
class StaticComparison:
    n: int
    alpha: float
    alpha_n: float
    r: np.ndarray
    U: np.ndarray
    solution: object = field(repr=False)

    def state(self):
        """(r, U, 0) triple accepted by :func:`lambda_mu`."""
        return self.r, self.U, np.zeros_like(self.U)


def build_static_comparison(n: int, alpha: float, harmonic=None, r: Optional[np.ndarray] = None,
                            **prescribed) -> StaticComparison:
    """U_+ = <r>^-1 (Q_{alpha - alpha_n} - Q_n) on r > 0.

    Q_{alpha - alpha_n} = n pi + (alpha - alpha_n) r^-2 + O(r^-4) comes from
    :func:`solve_prescribed` with k = n; alpha = 0 reproduces Q_n.
    """
    if n < 1:
        raise ResolutionError("static comparison needs degree n >= 1")
    hm = harmonic if harmonic is not None else shoot_harmonic(n)
    if r is None:
        r = 0.05 * np.arange(1, 4001)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ResolutionError("U_+ is sampled on r > 0")
    sol = solve_prescribed(n, alpha - hm.alpha_n, **prescribed)
    U = (sol(r)[0] - hm(r)[0]) / bracket(r)
    return StaticComparison(n, float(alpha), float(hm.alpha_n), r, U, sol)


# --------------------------------------------------------------------------- reports

@dataclass
class ResolutionReport:
    checks: list = field(default_factory=list)

    def add(self, name: str, value: float, passed: bool, detail: str = "") -> None:
        self.checks.append((name, float(value), bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(c[2] for c in self.checks)

    def to_text(self) -> str:
        lines = ["# wormhole-lab resolution v1"]
        for name, value, ok, detail in self.checks:
            lines.append(f"{'PASS' if ok else 'FAIL'} {name} = {value:.6e}" + (f"  ({detail})" if detail else ""))
        return "\n".join(lines) + "\n"
