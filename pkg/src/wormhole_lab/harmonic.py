"""Degree-n harmonic maps of the wormhole into S^3.

Static corotational maps solve

    F'' + 2r/(r^2+1) F' - sin(2F)/(r^2+1) = 0,    F(-inf) = 0, F(inf) = n*pi,

or, in the chart x = arcsinh r,  F'' + tanh(x) F' - sin(2F) = 0.

Q_n is found by shooting from F(0) = n*pi/2 with slope alpha.  The auxiliary
quantity aux_Q = (r^2+1) F'^2/2 - sin^2 F decreases along r >= 0, so a shot
whose aux_Q turns negative before F reaches n*pi can never reach it
(undershoot), while reaching n*pi is an overshoot.  The connecting slope
alpha* is the common boundary of the two sets.

On the far side of r = 10 the shot is continued in the x chart with the
deviation w = F - n*pi as state variable, so the decaying tail keeps full
relative precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import (
    EPS,
    NumericsError,
    ToleranceSpec,
    Trajectory,
    bisect_interval,
    cell_integrals,
    derivative,
    integrate_ivp,
)

R_SWITCH = 10.0
X_SWITCH = math.asinh(R_SWITCH)
X_MAX_DEFAULT = 12.0
R_TAIL = 400.0
FIT_WINDOW = (50.0, 400.0)

UNDERSHOOT = "Undershoot"
OVERSHOOT = "Overshoot"
INCONCLUSIVE = "Inconclusive"


class HarmonicError(NumericsError):
    pass


def ode_rhs(coordinate: str, state, position: float) -> np.ndarray:
    """Right-hand side (F', F'') of the static equation in the r or x chart."""
    F, Fp = state[0], state[1]
    if coordinate == "r":
        w = 1.0 / (position * position + 1.0)
        return np.array([Fp, -2.0 * position * w * Fp + np.sin(2.0 * F) * w])
    if coordinate == "x":
        return np.array([Fp, -np.tanh(position) * Fp + np.sin(2.0 * F)])
    raise ValueError(f"unknown coordinate {coordinate!r}")


def aux_Q(r, F, Fp):
    """(r^2+1) F'^2 / 2 - sin^2 F, with F' the r-derivative."""
    r = np.asarray(r, dtype=float)
    return (r * r + 1.0) * np.asarray(Fp) ** 2 / 2.0 - np.sin(F) ** 2


def aux_Q_identity_defect(r, F, Fp) -> float:
    """Largest gap between aux_Q increments and -int r F'^2 dr along a path.

    ``r`` must be increasing; the integral uses the fourth-order cell rule.
    """
    r = np.asarray(r, dtype=float)
    Q = aux_Q(r, F, Fp)
    integral = np.concatenate([[0.0], np.cumsum(cell_integrals(r * np.asarray(Fp) ** 2, r))])
    return float(np.max(np.abs((Q - Q[0]) + integral)))


def _rhs_r(t, y):
    w = 1.0 / (t * t + 1.0)
    return np.array([y[1], -2.0 * t * w * y[1] + math.sin(2.0 * y[0]) * w])


def _rhs_x_dev(t, y):
    # y = (w, p) with w = F - k*pi; sin 2F = sin 2w.
    return np.array([y[1], -math.tanh(t) * y[1] + math.sin(2.0 * y[0])])


def _tail_tol(tol: ToleranceSpec) -> ToleranceSpec:
    # The deviation variable is small; control it relative to its own size.
    return ToleranceSpec(tol.abs_tol * 1e-8, tol.rel_tol, tol.max_steps)


@dataclass
class ShotResult:
    alpha: float
    classification: str
    exit_radius: float
    confident: bool = True
    trajectory_r: Optional[Trajectory] = field(default=None, repr=False)
    trajectory_x: Optional[Trajectory] = field(default=None, repr=False)


def classify_shot(n: int, alpha: float, x_max: float = X_MAX_DEFAULT,
                  tol: ToleranceSpec = ToleranceSpec(), keep: bool = False) -> ShotResult:
    """Integrate from (F, F')(0) = (n pi/2, alpha) and classify the outcome.

    Overshoot when F reaches n pi, Undershoot when aux_Q < 0 with F < n pi,
    Inconclusive when neither happens before x = x_max.
    """
    if n < 1:
        raise ValueError("shooting needs n >= 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    target = n * math.pi
    verdict = {}

    def stop_r(t, y):
        if y[0] >= target:
            verdict["c"] = OVERSHOOT
        elif (t * t + 1.0) * y[1] ** 2 / 2.0 - math.sin(y[0]) ** 2 < 0.0:
            verdict["c"] = UNDERSHOOT
        return "c" in verdict

    y0 = np.array([n * math.pi / 2.0, alpha])
    if stop_r(0.0, y0):
        return ShotResult(alpha, verdict["c"], 0.0)
    tr = integrate_ivp(_rhs_r, y0, (0.0, R_SWITCH), tol, dense=keep, terminate=stop_r)
    if "c" in verdict:
        return ShotResult(alpha, verdict["c"], tr.t_final, True, tr if keep else None)

    def stop_x(t, y):
        if y[0] >= 0.0:
            verdict["c"] = OVERSHOOT
        elif y[1] ** 2 / 2.0 - math.sin(y[0]) ** 2 < 0.0:
            verdict["c"] = UNDERSHOOT
        return "c" in verdict

    F10, Fp10 = tr.y_final
    yx = np.array([F10 - target, math.sqrt(R_SWITCH**2 + 1.0) * Fp10])
    trx = integrate_ivp(_rhs_x_dev, yx, (X_SWITCH, x_max), _tail_tol(tol), dense=keep, terminate=stop_x)
    rx = math.sinh(trx.t_final)
    if "c" in verdict:
        return ShotResult(alpha, verdict["c"], rx, True, tr if keep else None, trx if keep else None)
    return ShotResult(alpha, INCONCLUSIVE, rx, False, tr if keep else None, trx if keep else None)


def _decide(n, alpha, x_max, tol, record):
    """Undershoot predicate with R_max escalation and a flagged fallback."""
    x = x_max
    for _ in range(3):
        shot = classify_shot(n, alpha, x, tol)
        if shot.classification != INCONCLUSIVE:
            return shot.classification == UNDERSHOOT
        x *= 2.0
    # Still undecided: fall back on the sign of w + aux_Q at the last radius.
    shot = classify_shot(n, alpha, x, tol, keep=True)
    w, p = shot.trajectory_x.y_final
    record.append(alpha)
    return (w + p * p / 2.0 - math.sin(w) ** 2) < 0.0


@dataclass
class HarmonicMap:
    """The shot solution Q_n with its diagnostics.

    Calling the object returns (Q, Q') at arbitrary r.  Inside |r| <= R_TAIL
    the values come from the shot's dense output; beyond that from the
    two-term tail n pi - a r^-2 - b r^-4 fitted on FIT_WINDOW.
    """

    degree: int
    alpha_star: float
    bracket: tuple
    r: np.ndarray
    Q: np.ndarray
    Qprime: np.ndarray
    alpha_n: float
    tail_b: float
    residual: float
    symmetry_defect: float
    low_confidence: int = 0
    _tr: Optional[Trajectory] = field(default=None, repr=False)
    _trx: Optional[Trajectory] = field(default=None, repr=False)
    r_tail: float = R_TAIL

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        s = np.abs(r)
        Q = np.empty_like(s)
        Qp = np.empty_like(s)
        if self.degree == 0:
            Q[...] = 0.0
            Qp[...] = 0.0
            return Q, Qp
        npi = self.degree * math.pi
        inner = s <= R_SWITCH
        mid = (s > R_SWITCH) & (s <= self.r_tail)
        outer = s > self.r_tail
        if np.any(inner):
            y = self._tr(s[inner])
            Q[inner], Qp[inner] = y[:, 0], y[:, 1]
        if np.any(mid):
            xs = np.arcsinh(s[mid])
            y = self._trx(xs)
            Q[mid] = npi + y[:, 0]
            Qp[mid] = y[:, 1] / np.sqrt(s[mid] ** 2 + 1.0)
        if np.any(outer):
            so = s[outer]
            Q[outer] = npi - self.alpha_n / so**2 - self.tail_b / so**4
            Qp[outer] = 2.0 * self.alpha_n / so**3 + 4.0 * self.tail_b / so**5
        neg = r < 0
        Q[neg] = npi - Q[neg]
        return Q, Qp

    def deviation(self, r):
        """n pi - Q_n(r) for r > 0, computed without cancellation in the tail."""
        s = np.asarray(r, dtype=float)
        out = np.empty_like(s)
        npi = self.degree * math.pi
        mid = (s > R_SWITCH) & (s <= self.r_tail)
        inner = s <= R_SWITCH
        outer = s > self.r_tail
        if np.any(inner):
            out[inner] = npi - self._tr(s[inner])[:, 0]
        if np.any(mid):
            out[mid] = -self._trx(np.arcsinh(s[mid]))[:, 0]
        if np.any(outer):
            so = s[outer]
            out[outer] = self.alpha_n / so**2 + self.tail_b / so**4
        return out


def _bracket_up(n, seed, factor, decide):
    """Walk a seed until it undershoots, then grow it until it overshoots."""
    lo = seed
    for _ in range(200):
        if decide(lo):
            break
        lo /= factor
    else:
        raise HarmonicError("no undershooting slope found")
    hi = lo
    for _ in range(200):
        hi *= factor
        if not decide(hi):
            return lo, hi
        lo = hi
    raise HarmonicError("no overshooting slope found")


def _bracket_down(n, start, factor, decide):
    hi = start
    for _ in range(200):
        if not decide(hi):
            break
        hi *= factor
    else:
        raise HarmonicError("no overshooting slope found")
    lo = hi
    for _ in range(200):
        lo /= factor
        if decide(lo):
            return lo, hi
        hi = lo
    raise HarmonicError("no undershooting slope found")


BRACKET_SCHEMES = {
    "double-up": lambda n, d: _bracket_up(n, 0.05, 2.0, d),
    "halve-down": lambda n, d: _bracket_down(n, 20.0 * n, 2.0, d),
    "golden-up": lambda n, d: _bracket_up(n, 0.37, 1.618, d),
}


def find_alpha_star(n: int, width_tol: Optional[float] = None, tol: ToleranceSpec = ToleranceSpec(),
                    scheme: str = "double-up", x_max: float = X_MAX_DEFAULT):
    """Bracket and bisect the connecting slope.  Returns (lo, hi, low_confidence_count)."""
    record: list = []
    decide = lambda a: _decide(n, a, x_max, tol, record)
    lo, hi = BRACKET_SCHEMES[scheme](n, decide)
    if width_tol is None:
        width_tol = 4 * EPS * hi
    lo, hi = bisect_interval(decide, (lo, hi), width_tol)
    return lo, hi, len(record)


def _fit_tail(r, dev, window):
    keep = (r >= window[0]) & (r <= window[1])
    rr, dd = r[keep], dev[keep]
    if rr.size < 3:
        raise HarmonicError("ill-conditioned window: fewer than 3 samples")
    A = np.column_stack([rr**-2, rr**-4])
    scale = np.abs(A).max(axis=0)
    cond = np.linalg.cond(A / scale)
    if not np.isfinite(cond) or cond > 1e10:
        raise HarmonicError("ill-conditioned window for the r^-2, r^-4 fit")
    coef, *_ = np.linalg.lstsq(A / scale, dd, rcond=None)
    coef = coef / scale
    res = float(np.sqrt(np.mean((A @ coef - dd) ** 2)))
    return float(coef[0]), float(coef[1]), res


def default_samples(r_max: float = 50.0, h: float = 0.05) -> np.ndarray:
    m = int(round(r_max / h))
    return h * np.arange(-m, m + 1)


def shoot_harmonic(n: int, width_tol: Optional[float] = None, tol: ToleranceSpec = ToleranceSpec(),
                   scheme: str = "double-up", x_max: float = X_MAX_DEFAULT,
                   samples: Optional[np.ndarray] = None) -> HarmonicMap:
    """Construct Q_n by shooting.

    ``width_tol`` defaults to a few ulps of alpha*: the tail of the shot is
    only trustworthy out to radius ~ (width)^(-1/3), and the asymptotic fit
    on [50, 400] needs that radius.
    """
    if n < 0:
        raise ValueError("degree must be nonnegative")
    r_samples = default_samples() if samples is None else np.asarray(samples, dtype=float)
    if n == 0:
        z = np.zeros_like(r_samples)
        return HarmonicMap(0, 0.0, (0.0, 0.0), r_samples, z, z.copy(), 0.0, 0.0, 0.0, 0.0)
    lo, hi, lowconf = find_alpha_star(n, width_tol, tol, scheme, x_max)
    alpha = 0.5 * (lo + hi)
    target = n * math.pi
    y0 = np.array([target / 2.0, alpha])
    tr = integrate_ivp(_rhs_r, y0, (0.0, R_SWITCH), tol)
    F10, Fp10 = tr.y_final
    yx = np.array([F10 - target, math.sqrt(R_SWITCH**2 + 1.0) * Fp10])
    x_tail = math.asinh(R_TAIL)
    trx = integrate_ivp(_rhs_x_dev, yx, (X_SWITCH, x_tail + 0.05), _tail_tol(tol))
    if np.any(trx.y[:, 0] >= 0.0) or np.any(trx.y[:, 1] <= 0.0):
        raise HarmonicError("undecidable shot; increase R_max")
    # Independent integration towards negative r, for the symmetry audit.
    trn = integrate_ivp(_rhs_r, y0, (0.0, -R_SWITCH), tol)
    s_chk = np.linspace(0.0, R_SWITCH, 401)
    sym = float(np.max(np.abs(tr(s_chk)[:, 0] + trn(-s_chk)[:, 0] - target)))
    hm = HarmonicMap(n, alpha, (lo, hi), r_samples, None, None, 0.0, 0.0, 0.0, sym, lowconf, tr, trx)
    rr = np.geomspace(FIT_WINDOW[0] / 2.0, R_TAIL, 600)
    a, b, res = _fit_tail(rr, hm.deviation(rr), FIT_WINDOW)
    hm.alpha_n, hm.tail_b, hm.residual = a, b, res
    hm.Q, hm.Qprime = hm(r_samples)
    return hm


def extract_alpha_n(hm: HarmonicMap, window=FIT_WINDOW, n_points: int = 400):
    """Fit n pi - Q_n = a r^-2 + b r^-4 on ``window``; returns (a, rms residual)."""
    if window[0] <= 0 or window[1] <= window[0]:
        raise HarmonicError("ill-conditioned window")
    if window[1] > hm.r_tail:
        raise HarmonicError(f"window extends beyond the shot range r <= {hm.r_tail}")
    rr = np.geomspace(window[0], window[1], n_points)
    a, _, res = _fit_tail(rr, hm.deviation(rr), window)
    return a, res


def ode_residual(hm_or_Q, h: float, r_max: float = 20.0) -> float:
    """Sup of the fourth-order finite-difference residual of the static ODE."""
    m = int(round(r_max / h))
    r = h * np.arange(-m, m + 1)
    Q = hm_or_Q(r)[0]
    Qp = derivative(Q, h, 1)
    Qpp = derivative(Q, h, 2)
    res = Qpp + 2 * r / (r * r + 1) * Qp - np.sin(2 * Q) / (r * r + 1)
    return float(np.max(np.abs(res)))


@dataclass
class UniquenessReport:
    degree: int
    alphas: dict
    spread: float
    tolerance: float
    min_slope: float
    passed: bool


def uniqueness_probe(n: int, width_tol: Optional[float] = None, tol: ToleranceSpec = ToleranceSpec()) -> UniquenessReport:
    """Shoot from three different bracketing schemes and compare alpha*.

    Also checks that p = dF/dx stays strictly positive along the orbit.
    """
    if n == 0:
        return UniquenessReport(0, {"trivial": 0.0}, 0.0, 0.0, 0.0, True)
    alphas = {}
    for name in BRACKET_SCHEMES:
        lo, hi, _ = find_alpha_star(n, width_tol, tol, name)
        alphas[name] = 0.5 * (lo + hi)
    vals = np.array(list(alphas.values()))
    spread = float(vals.max() - vals.min())
    wt = width_tol if width_tol is not None else 1e-12 * max(1.0, float(vals.max()))
    hm = shoot_harmonic(n, width_tol, tol, samples=np.linspace(0.0, 50.0, 2001))
    # p = <r> dQ/dr in the x chart
    p = np.sqrt(hm.r**2 + 1.0) * hm.Qprime
    min_p = float(p.min())
    passed = spread <= 2 * wt and min_p > 0
    if not passed:
        raise HarmonicError(f"uniqueness probe failed: spread {spread:.3e}, min p {min_p:.3e}")
    return UniquenessReport(n, alphas, spread, 2 * wt, min_p, passed)


@dataclass
class PrescribedSolution:
    """F_alpha = k pi + alpha r^-2 + O(r^-4), built by Picard iteration."""

    k: int
    alpha: float
    x_start: float
    x_grid: np.ndarray
    F_grid: np.ndarray
    Fx_grid: np.ndarray
    ratios: list
    iterations: int
    _inner: Optional[Trajectory] = field(default=None, repr=False)

    def __call__(self, r):
        """(F, dF/dr) at r; valid for r > sinh(x_min) of the continuation."""
        r = np.asarray(r, dtype=float)
        x = np.arcsinh(r)
        F = np.empty_like(x)
        Fx = np.empty_like(x)
        grid = x >= self.x_start
        if np.any(grid):
            F[grid], Fx[grid] = self._grid_eval(x[grid])
        if np.any(~grid):
            y = self._inner(x[~grid])
            F[~grid] = self.k * math.pi + y[:, 0]
            Fx[~grid] = y[:, 1]
        return F, Fx / np.sqrt(r * r + 1.0)

    def _grid_eval(self, x):
        from scipy.interpolate import CubicHermiteSpline
        dev = self.F_grid - self.k * math.pi
        sp = CubicHermiteSpline(self.x_grid, dev, self.Fx_grid)
        return self.k * math.pi + sp(x), sp(x, 1)


def _picard_nonlinearity(x, G, Gp):
    e = np.exp(-x / 2.0)
    z = 2.0 * e * G
    # e^{x/2}[sin z - z] computed stably for small z
    small = np.abs(z) < 1e-3
    s = np.where(small, -z**3 / 6.0 + z**5 / 120.0 - z**7 / 5040.0, np.sin(z) - z)
    one_minus_tanh = 2.0 / (np.exp(2.0 * x) + 1.0)
    return s / e + one_minus_tanh * (Gp - G / 2.0)


def solve_prescribed(k: int, alpha: float, x_start: float = 4.0, x_end: Optional[float] = None,
                     h: float = 0.005, x_min: float = -X_SWITCH, tol: ToleranceSpec = ToleranceSpec(),
                     max_iter: int = 200) -> PrescribedSolution:
    """Solution with prescribed asymptotics F = k pi + alpha r^-2 + O(r^-4).

    ``alpha`` is the r^-2 coefficient.  Since r^-2 = 4 e^{-2x}(1 + O(e^{-2x}))
    the x-chart data is a = 4 alpha.  G = e^{x/2}(F - k pi) solves
    G'' - (9/4) G = N(x, G, G') and is obtained on [x_start, x_end] as the
    fixed point of the variation-of-constants map

        G = a e^{-3x/2} + (1/3) int_x^inf [e^{3(y-x)/2} - e^{-3(y-x)/2}] N dy.

    The result is continued to x < x_start by integrating the x-chart ODE.
    """
    if x_end is None:
        x_end = x_start + 20.0
    m = int(round((x_end - x_start) / h))
    x = x_start + h * np.arange(m + 1)
    a = 4.0 * alpha
    base = np.exp(-1.5 * x)
    G = a * base
    Gp = -1.5 * a * base
    ratios = []
    prev_diff = None
    it = 0
    ep = np.exp(1.5 * (x - x_start))   # e^{3(y - x_start)/2}, scaled to avoid overflow
    em = np.exp(-1.5 * (x - x_start))
    for it in range(1, max_iter + 1):
        N = _picard_nonlinearity(x, G, Gp)
        Ip = _tail_cumulative(ep * N, x)     # int_x^inf e^{3(y-xs)/2} N dy
        Im = _tail_cumulative(em * N, x)
        # e^{3(y-x)/2} = ep(y)/ep(x), e^{-3(y-x)/2} = em(y)/em(x)
        G_new = a * base + (Ip / ep - Im / em) / 3.0
        Gp_new = -1.5 * a * base - 0.5 * (Ip / ep + Im / em)
        diff = float(np.max(np.exp(1.5 * x) * (np.abs(G_new - G) + np.abs(Gp_new - Gp))))
        G, Gp = G_new, Gp_new
        if prev_diff is not None and prev_diff > 0:
            ratios.append(diff / prev_diff)
        norm = float(np.max(np.exp(1.5 * x) * (np.abs(G) + np.abs(Gp))))
        if diff <= 1e-15 * max(norm, 1e-300):
            break
        if ratios and ratios[-1] >= 0.5 and diff > 1e-12 * norm:
            raise HarmonicError("x_start too small: Picard iteration not contracting")
        prev_diff = diff
    else:
        raise HarmonicError("x_start too small: Picard iteration did not converge")
    e = np.exp(-x / 2.0)
    Fdev = e * G
    Fx = e * (Gp - G / 2.0)
    F_grid = k * math.pi + Fdev
    inner = integrate_ivp(_rhs_x_dev, np.array([Fdev[0], Fx[0]]), (x_start, x_min), _tail_tol(tol))
    return PrescribedSolution(k, alpha, x_start, x, F_grid, Fx, ratios, it, inner)


def _tail_cumulative(values, x):
    """int_{x_i}^{x_end} values dy for every node, fourth-order cell rule."""
    cells = cell_integrals(values, x)
    out = np.zeros_like(values)
    out[:-1] = np.cumsum(cells[::-1])[::-1]
    return out


def save_csv(hm: HarmonicMap, path) -> None:
    """Write r, Q, Qprime with a versioned header."""
    with open(path, "w", newline="\n") as fh:
        fh.write("# wormhole-lab harmonic v1\n")
        fh.write(f"# n={hm.degree} alpha_star={hm.alpha_star!r} alpha_n={hm.alpha_n!r}\n")
        fh.write("r,Q,Qprime\n")
        for r, q, qp in zip(hm.r, hm.Q, hm.Qprime):
            fh.write(f"{r:.17g},{q:.17g},{qp:.17g}\n")


def load_csv(path) -> dict:
    """Read a harmonic-map CSV written by :func:`save_csv`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "# wormhole-lab harmonic v1":
        raise ValueError(f"{path}: unknown or missing harmonic CSV version header")
    meta = dict(tok.split("=", 1) for tok in lines[1][1:].split())
    if lines[2].strip() != "r,Q,Qprime":
        raise ValueError(f"{path}: line 3: expected column header 'r,Q,Qprime'")
    rows = []
    for i, line in enumerate(lines[3:], start=4):
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"{path}: line {i}: expected 3 columns")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValueError(f"{path}: line {i}: {exc}") from None
    data = np.array(rows)
    return {"n": int(meta["n"]), "alpha_star": float(meta["alpha_star"]), "alpha_n": float(meta["alpha_n"]),
            "r": data[:, 0], "Q": data[:, 1], "Qprime": data[:, 2]}
