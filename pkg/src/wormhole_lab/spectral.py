"""Scattering theory for even Schrodinger operators H = -d^2/dr^2 + U on the line.

Potentials
----------
free_wormhole(d)   U = d(d-4)/4 r^2 <r>^-4 + d/2 <r>^-2, the conjugate of the
                   radial Laplacian on R x S^d: -Lap_g = <r>^{-d/2} H <r>^{d/2}
linearized(n)      U = 2 <r>^-2 + V,  V = <r>^-4 - 4 <r>^-2 sin^2 Q_n, the
                   conjugate <r>^2 (-Lap_g + V) <r>^-2 of the u equation on R x S^4
custom             any callable, with a declared inverse-square tail nu(nu+1)/r^2

Conventions
-----------
f_+(r, lam) ~ e^{i lam r} as r -> +inf, and f_-(r) = f_+(-r) for even U.
W(lam) = f_+' f_- - f_+ f_-' = 2 f_+(0) f_+'(0).
theta(0) = 1, theta'(0) = 0, phi(0) = 0, phi'(0) = 1 at energy lam^2.

The weights are

    omega_1 = (lam/pi) Im[W(f_+, phi) / W(f_+, theta)],
    omega_2 = -(lam/pi) Im[W(f_+, theta) / W(f_+, phi)],

and since Im(f_+' conj f_+) = lam exactly (a Wronskian with the conjugate
solution) they reduce to omega_1 = lam^2 / (pi |f_+'(0)|^2) and
omega_2 = lam^2 / (pi |f_+(0)|^2), which stay accurate as lam -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import FieldState, bracket
from .numerics import (
    NumericsError,
    RadialGrid,
    ToleranceSpec,
    derivative,
    fit_power_law,
    integrate_ivp,
)

SPECTRAL_TOL = ToleranceSpec(1e-12, 1e-12, max_steps=400000)
MATCH_RADII = (30.0, 60.0)
WRONSKIAN_POINTS = (0.0, 1.0, 2.5, 5.0)


class SpectralError(NumericsError):
    pass


# --------------------------------------------------------------------------- potentials

@dataclass
class LinePotential:
    """U_total(r) with its large-r expansion sum_k tail[k] r^-k."""

    kind: str
    U: Callable[[np.ndarray], np.ndarray]
    nu: float
    tail: dict
    even: bool = True
    params: dict = field(default_factory=dict)
    tail_exponent: float = float("nan")

    def __call__(self, r):
        return self.U(np.asarray(r, dtype=float))

    @property
    def inverse_square(self) -> float:
        return self.nu * (self.nu + 1.0)


def _free_tail(d: int, terms: int = 12) -> dict:
    A, B = d * (d - 4) / 4.0, d / 2.0
    return {2 + 2 * m: (-1) ** m * (A * (m + 1) + B) for m in range(terms)}


def _linearized_tail(hm) -> dict:
    a, b = hm.alpha_n, hm.tail_b
    return {2: 2.0, 4: -1.0, 6: -4.0 * a * a, 8: 1.0 + 4.0 * a * a - 8.0 * a * b}


def _tabulated(U, r_max: float, h: float):
    """Even U through a cubic spline of its exact values on [0, r_max]; exact beyond."""
    from scipy.interpolate import CubicSpline

    nodes = np.linspace(0.0, r_max, int(round(r_max / h)) + 1)
    spl = CubicSpline(nodes, U(nodes), bc_type=((1, 0.0), "not-a-knot"))

    def Ut(r):
        s = np.abs(r)
        if s.ndim == 0:
            return spl(s) if s <= r_max else U(s)
        out = spl(np.minimum(s, r_max))
        far = s > r_max
        if np.any(far):
            out[far] = U(s[far])
        return out

    Ut.exact = U
    return Ut


def _verify_tail(pot: LinePotential) -> float:
    """Check U - nu(nu+1)/r^2 = O(r^-3) on large-r samples; returns the fitted decay exponent."""
    r = np.geomspace(100.0, 2000.0, 40)
    rest = np.empty_like(r)
    for sgn in (1.0, -1.0) if not pot.even else (1.0,):
        rest = np.abs(pot(sgn * r) - pot.inverse_square / r**2)
        scaled = rest * r**3
        if scaled[-1] > 1.01 * scaled[0] + 1e-12:
            raise SpectralError(f"tail verification failed: U - {pot.inverse_square:g}/r^2 is not O(r^-3)")
    keep = rest > 1e-13 * pot.inverse_square / r**2 + 1e-300
    if np.count_nonzero(keep) >= 3:
        return fit_power_law(r[keep], rest[keep]).exponent
    return -math.inf


def build_potential(kind: str, d: Optional[int] = None, harmonic=None, n: Optional[int] = None,
                    U: Optional[Callable] = None, nu: float = 0.0, tail: Optional[dict] = None,
                    even: bool = True) -> LinePotential:
    """Construct one of the potentials listed in the module docstring."""
    if kind == "free_wormhole":
        if d is None or d < 2:
            raise SpectralError("free_wormhole needs a dimension d >= 2")
        A, B = d * (d - 4) / 4.0, d / 2.0

        def Uf(r):
            w = 1.0 / (r * r + 1.0)
            return A * r * r * w * w + B * w

        nu_d = (d - 2) / 2.0
        pot = LinePotential("free_wormhole", Uf, nu_d, _free_tail(d), True, {"d": d})
    elif kind == "linearized":
        if harmonic is None:
            raise SpectralError("linearized potential needs the harmonic map of degree n")
        hm = harmonic
        deg = hm.degree if n is None else n
        if deg != hm.degree:
            raise SpectralError("harmonic map degree does not match n")

        def Ul(r):
            s = np.abs(r)
            w = 1.0 / (s * s + 1.0)
            if deg == 0:
                sin2 = np.zeros_like(s)
            else:
                # sin^2 Q = sin^2 (n pi - Q), evaluated from the deviation to keep the tail exact
                sin2 = np.sin(hm.deviation(s)) ** 2
            return 2.0 * w + w * w - 4.0 * w * sin2

        Ul = _tabulated(Ul, 60.0, 1e-3)
        tl = _linearized_tail(hm) if deg > 0 else {2 + 2 * m: (-1) ** m * (2.0 - m) for m in range(12)}
        pot = LinePotential("linearized", Ul, 1.0, tl, True, {"n": deg})
    elif kind == "custom":
        if U is None:
            raise SpectralError("custom potential needs a callable U")
        tl = dict(tail) if tail else {}
        if nu and 2 not in tl:
            tl[2] = nu * (nu + 1.0)
        pot = LinePotential("custom", U, float(nu), tl, even, {})
    else:
        raise SpectralError(f"unknown potential kind {kind!r}")
    pot.tail_exponent = _verify_tail(pot)
    return pot


def r_infinity(lam) -> np.ndarray:
    return np.maximum(50.0, 30.0 / np.abs(np.asarray(lam, dtype=float)))


# --------------------------------------------------------------------------- asymptotic initial data

def _jost_series(pot: LinePotential, lam: np.ndarray, R: np.ndarray, side: int = 1, tol: float = 1e-13):
    """f and f' at r = side*R from e^{i lam r} sum_p a_p r^-p.

    The coefficients follow from m'' + 2 i lam m' = U m for m = e^{-i lam r} f:
    a_p = [p(p-1) a_{p-1} - sum_{k=2}^{p+1} u_k a_{p+1-k}] / (2 i lam p).
    For f_- at -R we use the reflected variable, which flips odd tail terms.
    """
    lam = np.asarray(lam, dtype=float)
    tail = {k: (v if side > 0 else v * (-1) ** k) for k, v in pot.tail.items()}
    kmax = max(tail) if tail else 0
    # b_p = a_p R^-p, recursed directly so that small lam cannot overflow
    terms = [np.ones_like(lam, dtype=complex)]
    for p in range(1, 60):
        s = p * (p - 1) * terms[p - 1] / R
        for k in range(2, min(p + 1, kmax) + 1):
            s = s - tail.get(k, 0.0) * terms[p + 1 - k] * R ** (1.0 - k)
        terms.append(s / (2j * lam * p))
    dterms = [-p * b / R for p, b in enumerate(terms)]
    terms = np.array(terms)
    mags = np.abs(terms)
    # optimal truncation: stop at the smallest term
    cut = np.argmin(np.where(np.arange(len(terms))[:, None] > 0, mags, np.inf), axis=0)
    smallest = mags[cut, np.arange(lam.size)]
    use = np.arange(len(terms))[:, None] <= cut[None, :]
    m = np.sum(np.where(use, terms, 0), axis=0)
    mp = np.sum(np.where(use, np.array(dterms), 0), axis=0)
    if kmax == 0:
        smallest = np.zeros_like(smallest)
    if np.any(smallest > tol):
        bad = float(np.max(R[smallest > tol]))
        raise SpectralError(f"R_infinity too small for requested accuracy; try R_infinity >= {2 * bad:.3g}")
    # f = e^{i lam r} m in the reflected variable rho = side*r
    rho = R
    e = np.exp(1j * lam * rho)
    f = e * m
    fp_rho = e * (1j * lam * m + mp)
    return f, side * fp_rho


# --------------------------------------------------------------------------- Jost solutions

@dataclass
class JostSolution:
    lam: float
    side: str
    r: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    R_infinity: float


def _integrate_complex(pot, lam, f0, fp0, span, tol, t_eval=None, dense=False, stretch=None):
    """Integrate f'' = (U - lam^2) f for complex f, batched over columns.

    The unknown is the modulated m = e^{-i lam r} f, which obeys
    m'' + 2 i lam m' = U m and is slowly varying where U is small, so steps
    are limited by stability (lam h ~ 1) rather than by resolving the
    oscillation.  With ``stretch = (r_end, R)`` the independent variable is
    s in [1, 0] with r = r_end + (R - r_end) s, so columns with different
    starting radii share one integration.  Returns (f, f') at the end point,
    or at ``t_eval`` (as arrays with a leading sample axis).
    """
    lam = np.asarray(lam, dtype=float)
    if stretch is None:
        r0 = np.full(lam.shape, float(span[0]))
    else:
        r0 = np.asarray(stretch[1], dtype=float) * np.ones(lam.shape)
    e0 = np.exp(-1j * lam * r0)
    m0 = e0 * f0
    mp0 = e0 * (fp0 - 1j * lam * f0)
    y0 = np.stack([m0.real, m0.imag, mp0.real, mp0.imag]).astype(float)
    two_lam = 2.0 * lam

    def field(r, y):
        q = pot(r)
        # m'' = U m - 2 i lam m'
        return (q * y[0] + two_lam * y[3], q * y[1] - two_lam * y[2])

    if stretch is None:
        def rhs(t, y):
            a, b = field(np.asarray(t), y)
            return np.stack([y[2], y[3], a, b])
    else:
        r_end, R = stretch
        L = np.asarray(R, dtype=float) - r_end

        def rhs(s, y):
            a, b = field(r_end + L * s, y)
            return np.stack([L * y[2], L * y[3], L * a, L * b])

    tr = integrate_ivp(rhs, y0, span, tol, t_eval=t_eval, dense=dense)

    def unmodulate(y, r):
        m = y[..., 0, :] + 1j * y[..., 1, :]
        mp = y[..., 2, :] + 1j * y[..., 3, :]
        e = np.exp(1j * lam * r)
        return e * m, e * (1j * lam * m + mp)

    if t_eval is not None:
        return unmodulate(tr.y_eval, np.asarray(t_eval)[:, None])
    if stretch is None:
        return unmodulate(tr.y_final, float(span[1]))
    return unmodulate(tr.y_final, stretch[0])


def _jost_at(pot, lam, r_stop, tol=SPECTRAL_TOL):
    """f_+ and f_+' at r = r_stop for every lam, via the stretched variable."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    # starting further out than R_infinity only improves the series
    R = np.maximum(r_infinity(lam), abs(r_stop) + 20.0)
    f0, fp0 = _jost_series(pot, lam, R, 1)
    f, fp = _integrate_complex(pot, lam, f0, fp0, (1.0, 0.0), tol, stretch=(r_stop, R))
    return f, fp, R


def compute_jost(pot: LinePotential, lam: float, side: str = "+", r_samples: Optional[np.ndarray] = None,
                 tol: ToleranceSpec = SPECTRAL_TOL) -> JostSolution:
    """Jost solution f_side(., lam) sampled at ``r_samples`` (default [-10, 10])."""
    if lam == 0:
        raise SpectralError("lambda must be nonzero")
    r = np.linspace(-10.0, 10.0, 2001) if r_samples is None else np.asarray(r_samples, dtype=float)
    R = float(r_infinity(lam))
    if np.max(np.abs(r)) >= R:
        raise SpectralError(f"samples reach R_infinity = {R:g}")
    sgn = 1 if side == "+" else -1
    if side not in ("+", "-"):
        raise SpectralError("side must be '+' or '-'")
    # integrate from the side's infinity towards the far end of the samples
    start_r = sgn * R
    f0, fp0 = _jost_series(pot, np.array([lam]), np.array([R]), sgn)
    order = np.argsort(-sgn * r)
    rs = r[order]
    fs, fps = _integrate_complex(pot, np.array([lam]), f0, fp0, (start_r, float(rs[-1])), tol, t_eval=rs)
    f = np.empty(r.size, dtype=complex)
    fp = np.empty(r.size, dtype=complex)
    f[order] = fs[:, 0]
    fp[order] = fps[:, 0]
    return JostSolution(float(lam), side, r, f, fp, R)


def jost_residual(sol: JostSolution, pot: LinePotential) -> float:
    """sup |f'' - (U - lam^2) f| / sup |f|, with f'' from sixth-order central differences of f'.

    The two rows of the solution (values and derivatives) come out of the
    integrator independently, so this measures how well they fit together
    as a solution.  The two nodes nearest each end are skipped.
    """
    h = np.diff(sol.r)
    if sol.r.size < 13 or not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise SpectralError("residual needs at least 13 uniformly spaced samples")
    g = sol.fp
    c = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / (60.0 * h[0])
    fpp = sum(ck * g[k:g.size - 6 + k] for k, ck in enumerate(c))
    inner = slice(3, sol.r.size - 3)
    res = fpp - (pot(sol.r[inner]) - sol.lam**2) * sol.f[inner]
    return float(np.max(np.abs(res)) / np.max(np.abs(sol.f)))


def _jost_points(pot, lam, points, tol=SPECTRAL_TOL):
    """f_+, f_+' at +/- points for a batch of lam (first row for +points, second for -points)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    pts = np.asarray(points, dtype=float)
    top = float(pts.max()) + 1.0
    f_top, fp_top, _ = _jost_at(pot, lam, top, tol)
    grid = np.concatenate([pts[::-1], -pts[pts > 0]])  # descending
    grid = np.unique(grid)[::-1]
    f, fp = _integrate_complex(pot, lam, f_top, fp_top, (top, float(grid[-1])), tol, t_eval=grid)
    return grid, f, fp


def wronskian(pot: LinePotential, lam, points: Sequence[float] = WRONSKIAN_POINTS, rel_tol: float = 1e-8,
              tol: ToleranceSpec = SPECTRAL_TOL, return_spread: bool = False):
    """W(lam) = f_+' f_- - f_+ f_-' evaluated at several points and averaged.

    Raises if the standard deviation across points exceeds ``rel_tol`` |W|.
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam_arr <= 0):
        raise SpectralError("lambda must be positive")
    if pot.even:
        grid, f, fp = _jost_points(pot, lam_arr, points, tol)
        vals = []
        for p in points:
            i = int(np.argmin(np.abs(grid - p)))
            j = int(np.argmin(np.abs(grid + p)))
            # f_-(p) = f_+(-p), f_-'(p) = -f_+'(-p)
            vals.append(fp[i] * f[j] + f[i] * fp[j])
        vals = np.array(vals)
    else:
        vals = []
        for k, l in enumerate(lam_arr):
            pts = np.asarray(points, dtype=float)
            fpl = compute_jost(pot, l, "+", pts, tol)
            fmi = compute_jost(pot, l, "-", pts, tol)
            vals.append(fpl.fp * fmi.f - fpl.f * fmi.fp)
        vals = np.array(vals).T
    W = vals.mean(axis=0)
    spread = vals.std(axis=0) / np.abs(W)
    if np.any(spread > rel_tol):
        k = int(np.argmax(spread))
        raise SpectralError(f"Wronskian not constant at lambda={lam_arr[k]:g}: relative spread {spread[k]:.2e}")
    out = W if np.ndim(lam) else W[0]
    if return_spread:
        return out, (spread if np.ndim(lam) else spread[0])
    return out


def jost_at_origin(pot: LinePotential, lam, tol: ToleranceSpec = SPECTRAL_TOL):
    """(f_+(0, lam), f_+'(0, lam)) for a batch of lam."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    f0, fp0, _ = _jost_at(pot, lam, 0.0, tol)
    return f0, fp0


# --------------------------------------------------------------------------- weights

def spectral_weights(pot: LinePotential, lam, method: str = "identity", neg_tol: float = 1e-12,
                     tol: ToleranceSpec = SPECTRAL_TOL):
    """(omega_1, omega_2) at each lam.

    ``method="identity"`` uses Im(f_+' conj f_+) = lam; ``method="direct"``
    forms Im of the Wronskian ratios literally (loses accuracy like lam^3
    at small lam but is an independent route for moderate lam).
    """
    if not pot.even:
        raise SpectralError("spectral weights are implemented for even potentials")
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam_arr <= 0):
        raise SpectralError("lambda must be positive")
    f0, fp0 = jost_at_origin(pot, lam_arr, tol)
    if method == "identity":
        w1 = lam_arr**2 / (math.pi * np.abs(fp0) ** 2)
        w2 = lam_arr**2 / (math.pi * np.abs(f0) ** 2)
    elif method == "direct":
        # W(f_+, phi) = f_+(0), W(f_+, theta) = -f_+'(0)
        w1 = lam_arr / math.pi * np.imag(f0 / -fp0)
        w2 = -lam_arr / math.pi * np.imag(-fp0 / f0)
    else:
        raise SpectralError(f"unknown method {method!r}")
    if np.any(w1 < -neg_tol) or np.any(w2 < -neg_tol):
        raise SpectralError("negative spectral weight")
    if np.ndim(lam) == 0:
        return float(w1[0]), float(w2[0])
    return w1, w2


# --------------------------------------------------------------------------- zero energy

def _frobenius(pot: LinePotential, sigma: float, c0: float, r, terms: int = 24, free_coef: float = 0.0):
    """Zero-energy solution r^sigma sum_j c_j r^-j of -f'' + U f = 0 near infinity."""
    u2 = pot.tail.get(2, 0.0)
    c = [c0]
    for s in range(1, terms):
        rhs = sum(pot.tail.get(k, 0.0) * c[s + 2 - k] for k in range(3, s + 3) if s + 2 - k >= 0)
        lhs = (sigma - s) * (sigma - s - 1) - u2
        if abs(lhs) < 1e-12:
            if abs(rhs) > 1e-12:
                raise SpectralError("logarithmic zero-energy asymptotics are not supported")
            c.append(free_coef)
        else:
            c.append(rhs / lhs)
    r = np.asarray(r, dtype=float)
    f = sum(cj * r ** (sigma - j) for j, cj in enumerate(c))
    fp = sum(cj * (sigma - j) * r ** (sigma - j - 1) for j, cj in enumerate(c))
    return f, fp


def growing_mode(pot, r):
    """u_0^+ ~ r^{nu+1}/(2 nu + 1), with the free coefficient at the resonant order set to 0."""
    return _frobenius(pot, pot.nu + 1.0, 1.0 / (2.0 * pot.nu + 1.0), r)


def decaying_mode(pot, r):
    """u_1^+ ~ r^-nu."""
    return _frobenius(pot, -pot.nu, 1.0, r)


def _wr(f, fp, g, gp):
    return f * gp - fp * g


@dataclass
class ZeroEnergySolutions:
    theta0: Callable
    phi0: Callable
    a0: float
    a1: float
    b0: float
    b1: float
    match_radii: tuple
    disagreement: float

    @property
    def wronskian_identity(self) -> float:
        return self.a0 * self.b1 - self.a1 * self.b0


def match_growth(pot, r_start, y_start, radii=MATCH_RADII, tol: ToleranceSpec = SPECTRAL_TOL, threshold=0.01):
    """Integrate -f'' + U f = 0 from (r_start, y_start) and decompose f = c0 u_0^+ + c1 u_1^+.

    Returns (c0, c1, relative disagreement between the two radii, trajectory).
    """
    def rhs(t, y):
        return np.array([y[1], pot(np.asarray(t)) * y[0]])

    tr = integrate_ivp(rhs, np.asarray(y_start, dtype=float), (r_start, max(radii)), tol)
    cs = []
    for R in radii:
        f, fp = tr(R)
        u0, u0p = growing_mode(pot, R)
        u1, u1p = decaying_mode(pot, R)
        # W(u1, u0) = 1
        cs.append((_wr(u1, u1p, f, fp), _wr(f, fp, u0, u0p)))
    cs = np.array(cs)
    scale = np.maximum(np.abs(cs).max(axis=0), 1e-300)
    dis = float(np.max(np.abs(cs[0] - cs[1]) / np.maximum(scale, 1e-6 * np.abs(cs).max())))
    if dis > threshold:
        raise SpectralError(f"matching radii disagree by {dis:.2%}")
    return float(cs[-1, 0]), float(cs[-1, 1]), dis, tr


def zero_energy_solutions(pot: LinePotential, radii=MATCH_RADII, tol: ToleranceSpec = SPECTRAL_TOL) -> ZeroEnergySolutions:
    """theta_0, phi_0 from r = 0 and their growth coefficients against u_0^+, u_1^+."""
    a0, a1, da, trp = match_growth(pot, 0.0, [0.0, 1.0], radii, tol)
    b0, b1, db, trt = match_growth(pot, 0.0, [1.0, 0.0], radii, tol)
    return ZeroEnergySolutions(trt, trp, a0, a1, b0, b1, tuple(radii), max(da, db))


def count_negative_eigenvalues(pot: LinePotential, L: Optional[float] = None, tol: ToleranceSpec = SPECTRAL_TOL) -> int:
    """Zeros of the zero-energy solution that decays (or stays bounded) at -inf."""
    L = 60.0 if L is None else L
    if pot.nu > 0:
        u1, u1p = decaying_mode(pot, L) if pot.even else (L ** -pot.nu, -pot.nu * L ** (-pot.nu - 1))
        y0 = np.array([u1, -u1p])    # u(r) = u_1(-r)
    else:
        y0 = np.array([1.0, 0.0])

    def rhs(t, y):
        return np.array([y[1], pot(np.asarray(t)) * y[0]])

    # a step cap keeps narrow wells from being stepped over
    tr = integrate_ivp(rhs, y0, (-L, L), tol, max_step=0.1)
    s = np.linspace(-L, L, int(200 * L) + 1)
    f = tr(s)[:, 0]
    f = np.concatenate([f, tr.y[:, 0]])
    order = np.argsort(np.concatenate([s, tr.t]))
    f = f[order]
    sign = np.sign(f[np.abs(f) > 0])
    return int(np.count_nonzero(sign[1:] != sign[:-1]))


@dataclass
class GroundstateCheck:
    degree: int
    residual: float
    min_value: float


def verify_groundstate(n: int, harmonic, h: float = 0.05, r_max: float = 20.0) -> GroundstateCheck:
    """Residual of (H - <r>^-4)(<r>^2 Q_n') = 0 and positivity of <r>^2 Q_n'."""
    if n < 1:
        raise SpectralError("the groundstate check needs n >= 1")
    pot = build_potential("linearized", harmonic=harmonic)
    m = int(round(r_max / h))
    r = h * np.arange(-m, m + 1)
    g = (r * r + 1.0) * harmonic(r)[1]
    if not np.all(g > 0):
        raise SpectralError("<r>^2 Q_n' is not positive: harmonic map defect")
    res = -derivative(g, h, 2) + (pot(r) - bracket(r) ** -4) * g
    inner = slice(2, -2)
    return GroundstateCheck(n, float(np.max(np.abs(res[inner]))), float(g.min()))


@dataclass
class ResonanceReport:
    a0: float
    b0: float
    a1: float
    b1: float
    negative_eigenvalue_count: int
    groundstate_residual: float
    margin: float

    def to_text(self) -> str:
        lines = [f"{k}={getattr(self, k)!r}" for k in
                 ("a0", "b0", "a1", "b1", "negative_eigenvalue_count", "groundstate_residual", "margin")]
        return "# wormhole-lab resonance v1\n" + "\n".join(lines) + "\n"


def resonance_report(pot: LinePotential, harmonic=None) -> ResonanceReport:
    z = zero_energy_solutions(pot)
    count = count_negative_eigenvalues(pot)
    gs = float("nan")
    if harmonic is not None and harmonic.degree >= 1:
        gs = verify_groundstate(harmonic.degree, harmonic).residual
    return ResonanceReport(z.a0, z.b0, z.a1, z.b1, count, gs, min(abs(z.a0), abs(z.b0)))


# --------------------------------------------------------------------------- distorted Fourier transform

def lambda_panels(lam_max: float = 20.0, nodes: int = 12, low: float = 1e-3, width: float = 0.5,
                  low_nodes: int = 24):
    """Gauss-Legendre nodes and weights on [0, lam_max].

    Panels: [0, low], geometric doublings from low to 1 (``low_nodes`` each,
    the weights of potentials with an inverse-square tail are least smooth
    there), then uniform panels of ``width`` with ``nodes`` each.
    """
    edges = [0.0, low]
    while edges[-1] * 2 < 1.0:
        edges.append(edges[-1] * 2)
    edges.append(1.0)
    k = int(math.ceil((lam_max - 1.0) / width - 1e-9))
    edges += list(1.0 + width * np.arange(1, k + 1))
    edges[-1] = max(edges[-1], lam_max)
    rules = {k: np.polynomial.legendre.leggauss(k) for k in {nodes, low_nodes}}
    lam, wt = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = rules[low_nodes if b <= 1.0 else nodes]
        lam.append(0.5 * (b - a) * x + 0.5 * (a + b))
        wt.append(0.5 * (b - a) * w)
    return np.concatenate(lam), np.concatenate(wt)


def log_lambda_grid(lo: float = 1e-3, hi: float = 1e2, per_decade: int = 60) -> np.ndarray:
    """Logarithmic sampling grid used for spectral tables."""
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.geomspace(lo, hi, n)


def fundamental_from_jost(pot: LinePotential, lam, r: np.ndarray, tol: ToleranceSpec = SPECTRAL_TOL):
    """theta, phi at r >= 0 rebuilt from f_+ alone.

    On r >= 0 the pair f_+, conj f_+ is a basis, and the conserved
    Im(f_+' conj f_+) = lam gives

        theta(r) = -Im(conj f_+'(0) f_+(r)) / lam,   phi(r) = Im(conj f_+(0) f_+(r)) / lam.

    Cheap at large lam because f_+ is integrated in the modulated variable;
    at small lam the imaginary parts cancel like lam^3, so use it for lam >= 1.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.diff(r) <= 0):
        raise SpectralError("fundamental system is sampled on increasing r >= 0")
    top = float(r[-1])
    f_top, fp_top, _ = _jost_at(pot, lam, top + 1.0, tol)
    pts = np.concatenate([r[::-1], [0.0]]) if r[0] > 0 else r[::-1]
    f, fp = _integrate_complex(pot, lam, f_top, fp_top, (top + 1.0, 0.0), tol, t_eval=pts)
    f0, fp0 = f[-1], fp[-1]
    fr = f[: r.size][::-1]
    theta = -np.imag(np.conj(fp0) * fr) / lam
    phi = np.imag(np.conj(f0) * fr) / lam
    return theta, phi


def _direct_fundamental(pot, lam, r, tol):
    lam2 = lam * lam
    y0 = np.zeros((4, lam.size))
    y0[0] = 1.0
    y0[3] = 1.0

    def rhs(t, y):
        q = pot(np.asarray(t)) - lam2
        return np.stack([y[1], q * y[0], y[3], q * y[2]])

    out = np.empty((r.size, 4, lam.size))
    start = 0
    if r[0] == 0.0:
        out[0] = y0
        start = 1
    if start < r.size:
        tr = integrate_ivp(rhs, y0, (0.0, float(r[-1])), tol, t_eval=r[start:], dense=False)
        out[start:] = tr.y_eval
    return out[:, 0], out[:, 2]


def fundamental_system(pot: LinePotential, lam, r: np.ndarray, tol: ToleranceSpec = SPECTRAL_TOL,
                       method: str = "auto", switch: float = 1.0):
    """theta(r, lam^2), phi(r, lam^2) at r >= 0 for a batch of lam; arrays (len(r), len(lam)).

    ``method="direct"`` integrates from r = 0 with the defining data;
    ``"jost"`` uses ``fundamental_from_jost``; ``"auto"`` takes the direct
    route below ``switch`` and the Jost route above it.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.diff(r) <= 0):
        raise SpectralError("fundamental system is sampled on increasing r >= 0")
    if method == "direct":
        return _direct_fundamental(pot, lam, r, tol)
    if method == "jost":
        return fundamental_from_jost(pot, lam, r, tol)
    if method != "auto":
        raise SpectralError(f"unknown method {method!r}")
    th = np.empty((r.size, lam.size))
    ph = np.empty((r.size, lam.size))
    lo = lam < switch
    if np.any(lo):
        th[:, lo], ph[:, lo] = _direct_fundamental(pot, lam[lo], r, tol)
    if np.any(~lo):
        th[:, ~lo], ph[:, ~lo] = fundamental_from_jost(pot, lam[~lo], r, tol)
    return th, ph


@dataclass
class SpectralMeasure:
    """Quadrature in lam with the weights, and the basis sampled on a grid."""

    potential: LinePotential
    lam: np.ndarray
    dlam: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    grid: RadialGrid
    theta: np.ndarray    # (len(grid), len(lam)), full line by parity
    phi: np.ndarray
    normalization: str = "theta(0)=1, theta'(0)=0, phi(0)=0, phi'(0)=1"


def spectral_measure(pot: LinePotential, grid: RadialGrid, lam_max: float = 20.0, nodes: int = 12,
                     low_nodes: int = 24, tol: ToleranceSpec = SPECTRAL_TOL) -> SpectralMeasure:
    """Weights on Gauss-Legendre panels and theta, phi on a symmetric uniform grid."""
    if not pot.even:
        raise SpectralError("the distorted transform is implemented for even potentials")
    r = grid.r()
    if grid.spacing is None or not np.allclose(r, -r[::-1], atol=1e-12):
        raise SpectralError("the transform needs a uniform grid symmetric about r = 0")
    lam, dlam = lambda_panels(lam_max, nodes, low_nodes=low_nodes)
    w1, w2 = spectral_weights(pot, lam, tol=tol)
    mid = r.size // 2
    rp = r[mid:]
    th, ph = fundamental_system(pot, lam, np.abs(rp), tol)
    theta = np.concatenate([th[:0:-1], th])
    phi = np.concatenate([-ph[:0:-1], ph])
    return SpectralMeasure(pot, lam, dlam, w1, w2, grid, theta, phi)


def _trap_weights(grid: RadialGrid) -> np.ndarray:
    w = np.full(grid.size, grid.spacing)
    w[0] = w[-1] = 0.5 * grid.spacing
    return w


def fourier_forward(measure: SpectralMeasure, f: np.ndarray, check: bool = False, rel_tol: float = 1e-6):
    """(fhat_1, fhat_2) = (int theta f dr, int phi f dr) at the measure's lam nodes."""
    f = np.asarray(f)
    if f.shape[0] != measure.grid.size:
        raise SpectralError("data must be sampled on the measure's grid")
    w = _trap_weights(measure.grid)
    wf = (w * f.T).T if f.ndim > 1 else w * f
    F1 = measure.theta.T @ wf
    F2 = measure.phi.T @ wf
    if check:
        defect = plancherel_defect(measure, f, (F1, F2))
        if defect > rel_tol:
            raise SpectralError(f"Plancherel mismatch {defect:.2e}; refine the lambda grid "
                                f"(more nodes per panel or larger lam_max than {measure.lam.max():.3g})")
    return F1, F2


def fourier_inverse(measure: SpectralMeasure, F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    """f(r) = int theta F1 omega_1 dlam + int phi F2 omega_2 dlam."""
    a = measure.dlam * measure.omega1
    b = measure.dlam * measure.omega2
    if np.ndim(F1) > 1:
        return measure.theta @ (a[:, None] * F1) + measure.phi @ (b[:, None] * F2)
    return measure.theta @ (a * F1) + measure.phi @ (b * F2)


def plancherel_defect(measure: SpectralMeasure, f: np.ndarray, transforms=None) -> float:
    F1, F2 = fourier_forward(measure, f) if transforms is None else transforms
    w = _trap_weights(measure.grid)
    lhs = float(np.sum(w * np.abs(f) ** 2))
    rhs = float(np.sum(measure.dlam * (np.abs(F1) ** 2 * measure.omega1 + np.abs(F2) ** 2 * measure.omega2)))
    return abs(lhs - rhs) / lhs


def basis_bound(pot: LinePotential, lam: np.ndarray, r: np.ndarray) -> float:
    """sup over samples of (1 + lam^2 <r>^2)/(lam^2 <r>^2) [theta^2 omega_1 + phi^2 omega_2]."""
    w1, w2 = spectral_weights(pot, lam)
    th, ph = fundamental_system(pot, lam, r)
    L2 = (lam[None, :] * bracket(r)[:, None]) ** 2
    val = (1 + L2) / L2 * (th**2 * w1[None, :] + ph**2 * w2[None, :])
    return float(val.max())


# --------------------------------------------------------------------------- free waves

def evolve_free_wave(measure: SpectralMeasure, data: FieldState, t: float) -> FieldState:
    """Radial free wave on R x S^d at time t, through the distorted transform.

    ``measure`` must be built from free_wormhole(d) on the data grid.  With
    w = <r>^{d/2} v one has w_tt + H w = 0, so in the transform
    w(t) = cos(lam t) w_0 + sin(lam t)/lam w_1.
    """
    pot = measure.potential
    if pot.kind != "free_wormhole":
        raise SpectralError("evolve_free_wave needs a free_wormhole measure")
    d = pot.params["d"]
    r = measure.grid.r()
    if data.grid.size != r.size:
        raise SpectralError("data grid does not match the measure grid")
    wgt = bracket(r) ** (d / 2.0)
    A1, A2 = fourier_forward(measure, wgt * data.field)
    B1, B2 = fourier_forward(measure, wgt * data.velocity)
    lam = measure.lam
    c, s = np.cos(lam * t), np.sin(lam * t)
    w = fourier_inverse(measure, c * A1 + s / lam * B1, c * A2 + s / lam * B2)
    wt = fourier_inverse(measure, -lam * s * A1 + c * B1, -lam * s * A2 + c * B2)
    return FieldState(data.grid, w / wgt, wt / wgt, "u", data.degree, data.time + t)


def free_wave_energy(state: FieldState, d: int) -> float:
    """int (v_t^2 + v_r^2) <r>^d dr; trapezoid on the grid."""
    r = state.r
    h = state.grid.spacing
    dens = (state.velocity**2 + derivative(state.field, h, 1) ** 2) * bracket(r) ** d
    w = np.full(r.size, h)
    w[0] = w[-1] = h / 2
    return float(np.sum(w * dens))


# --------------------------------------------------------------------------- dispersive probe

def lp_bump(x) -> np.ndarray:
    """Littlewood-Paley bump exp(1 - 1/(1 - s^2)), s = log2 x, supported in (1/2, 2)."""
    x = np.asarray(x, dtype=float)
    s = np.log2(np.where(x > 0, x, 1e-300))
    out = np.zeros_like(x)
    m = np.abs(s) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


LP_BUMP_DESCRIPTION = "phi(x) = exp(1 - 1/(1 - log2(x)^2)) on (1/2, 2), zero elsewhere"


@dataclass
class DispersiveResult:
    d: int
    j: int
    t: np.ndarray
    sup: np.ndarray
    exponent: float
    prefactor: float
    residual: float
    plateau: float
    window: tuple
    source: float
    nodes: int


def dispersive_probe(d: int, j: int, t_samples: Optional[np.ndarray] = None, fit_window: Optional[tuple] = None,
                     source: float = 1.0, pot: Optional[LinePotential] = None,
                     tol: ToleranceSpec = SPECTRAL_TOL, min_decades: float = 1.0) -> DispersiveResult:
    """sup_r |e^{it sqrt(-Lap)} phi(2^-j sqrt(-Lap)) f| on R x S^d for a radial point source.

    f is the radial unit mass on the sphere r = s, s = source * 2^-j, with
    L^1 norm 1 in the measure <r>^d dr.  In the conjugated variable
    w = <r>^{d/2} v its transforms are theta(s) <s>^{-d/2} and phi(s) <s>^{-d/2},
    so

        v(t, r) = <r>^{-d/2} <s>^{-d/2} int e^{i t lam} phi(2^-j lam)
                  [theta(r) theta(s) omega_1 + phi(r) phi(s) omega_2] dlam.

    The sup is taken over both ends of the wormhole, on windows of half-width
    20 * 2^-j around the core and around |r| = t +/- s, outside which the
    frequency-localized field is negligible.  The decay exponent is fit over
    ``fit_window`` (default 128..1280 times 2^-j, where the outgoing shell
    dominates), which must span ``min_decades`` decades of the positive
    samples (one by default).
    """
    pot = pot if pot is not None else build_potential("free_wormhole", d=d)
    scale = 2.0**j
    win = fit_window if fit_window is not None else (128.0 / scale, 1280.0 / scale)
    if t_samples is None:
        t_samples = np.concatenate([[0.0], np.geomspace(1.0 / scale, win[0], 14, endpoint=False),
                                    np.geomspace(win[0], win[1], 21)])
    t_samples = np.asarray(t_samples, dtype=float)
    inside = t_samples[(t_samples >= win[0] * (1 - 1e-12)) & (t_samples <= win[1] * (1 + 1e-12)) & (t_samples > 0)]
    if inside.size < 3 or inside.max() < 10.0**min_decades * inside.min() * (1 - 1e-9):
        raise SpectralError(f"insufficient decade coverage for the decay fit (need {min_decades:g})")
    a, b = scale / 2.0, 2.0 * scale
    t_max = float(np.abs(t_samples).max())
    # enough Gauss-Legendre nodes to resolve e^{i t lam} across the band
    nodes = int(max(128, math.ceil(1.3 * (b - a) * t_max / math.pi) + 64))
    x, w = np.polynomial.legendre.leggauss(nodes)
    lam = 0.5 * (b - a) * x + 0.5 * (a + b)
    dl = 0.5 * (b - a) * w
    w1, w2 = spectral_weights(pot, lam, tol=tol)
    s = source / scale
    half = 20.0 / scale
    h = 0.05 / scale
    pieces = [np.arange(0.0, s + half, h)]
    for t in np.abs(t_samples):
        for c in (t + s, abs(t - s)):
            pieces.append(np.arange(max(0.0, c - half), c + half, h))
    r = np.unique(np.round(np.concatenate(pieces) / h)) * h
    th, ph = fundamental_system(pot, lam, r, tol, method="jost")
    ths, phs = fundamental_system(pot, lam, np.array([s]), tol, method="jost")
    amp = dl * lp_bump(lam / scale) * bracket(s) ** (-d / 2.0)
    phase = np.exp(1j * np.outer(lam, t_samples))
    even = th @ ((amp * w1 * ths[0])[:, None] * phase)
    odd = ph @ ((amp * w2 * phs[0])[:, None] * phase)
    wr = (bracket(r) ** (-d / 2.0))[:, None]
    # theta is even and phi odd, so the other end of the wormhole is even - odd
    sup = np.maximum(np.max(np.abs(even + odd) * wr, axis=0), np.max(np.abs(even - odd) * wr, axis=0))
    fit = fit_power_law(t_samples[t_samples > 0], sup[t_samples > 0], win)
    plateau = float(sup[np.argmin(np.abs(t_samples))])
    return DispersiveResult(d, j, t_samples, sup, -fit.exponent, fit.prefactor, fit.residual, plateau,
                            tuple(win), s, nodes)


# --------------------------------------------------------------------------- tables

SPECTRAL_HEADER = "# wormhole-lab spectral v1"


def write_spectral_table(path, lam, W, w1, w2) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(SPECTRAL_HEADER + "\n")
        fh.write("lambda,re_W,im_W,omega1,omega2\n")
        for row in zip(lam, np.real(W), np.imag(W), w1, w2):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_spectral_table(path) -> dict:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != SPECTRAL_HEADER:
        raise ValueError(f"{path}: unknown or missing spectral CSV version header")
    if lines[1].strip() != "lambda,re_W,im_W,omega1,omega2":
        raise ValueError(f"{path}: line 2: unexpected column header")
    rows = []
    for i, line in enumerate(lines[2:], start=3):
        try:
            vals = [float(v) for v in line.split(",")]
        except ValueError as exc:
            raise ValueError(f"{path}: line {i}: {exc}") from None
        if len(vals) != 5:
            raise ValueError(f"{path}: line {i}: expected 5 columns")
        rows.append(vals)
    a = np.array(rows)
    return {"lambda": a[:, 0], "W": a[:, 1] + 1j * a[:, 2], "omega1": a[:, 3], "omega2": a[:, 4]}
