"""Shared numerical kernels.

Adaptive Dormand-Prince integration with dense output, bracketed bisection,
fourth-order quadrature, finite-difference stencils, cubic interpolation and
log-log power-law fitting.  Every routine is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

EPS = np.finfo(float).eps


class NumericsError(RuntimeError):
    """Raised when a kernel cannot honour its contract."""


class IntegrationError(NumericsError):
    """Integrator failure carrying the last accepted point."""

    def __init__(self, message: str, t_last: float, y_last: np.ndarray):
        super().__init__(f"{message} at t={t_last:.6g}")
        self.reason = message
        self.t_last = t_last
        self.y_last = y_last


@dataclass(frozen=True)
class RadialGrid:
    """Nodes on the line, in the r chart or the x = arcsinh r chart."""

    coordinate: str
    nodes: np.ndarray
    spacing: Optional[float] = None

    def __post_init__(self):
        if self.coordinate not in ("r", "x"):
            raise ValueError(f"unknown coordinate {self.coordinate!r}")
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a grid needs at least 3 nodes")
        gaps = np.diff(nodes)
        if np.any(gaps <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if self.spacing is not None:
            # 1e-12 relative to the spacing, plus the rounding of a + i*h itself.
            slack = 1e-12 * self.spacing + 4 * EPS * np.max(np.abs(nodes))
            if np.max(np.abs(gaps - self.spacing)) >= slack:
                raise ValueError("nodes are not uniform with the declared spacing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, a: float, b: float, h: float, coordinate: str = "r") -> "RadialGrid":
        n = int(round((b - a) / h))
        nodes = a + h * np.arange(n + 1)
        return cls(coordinate, nodes, h)

    @property
    def size(self) -> int:
        return self.nodes.size

    def r(self) -> np.ndarray:
        """Node positions in the r chart."""
        return self.nodes if self.coordinate == "r" else np.sinh(self.nodes)


@dataclass(frozen=True)
class ToleranceSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_steps: int = 200_000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.max_steps > 0):
            raise ValueError("tolerances and max_steps must be positive")


# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_A_ROWS = [np.array(row) for row in _A]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Quartic continuous extension of the pair, columns multiply theta, theta^2, ...
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class Trajectory:
    """Accepted steps of an adaptive integration.

    ``t`` and ``y`` hold the step endpoints.  When the trajectory was built
    with dense output it can be evaluated anywhere inside the integrated span
    by calling it.
    """

    t: np.ndarray
    y: np.ndarray
    t_eval: Optional[np.ndarray] = None
    y_eval: Optional[np.ndarray] = None
    status: str = "completed"
    nfev: int = 0
    _dense: Optional[np.ndarray] = field(default=None, repr=False)
    _hermite: bool = False

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]

    def __call__(self, s) -> np.ndarray:
        if self._dense is None:
            raise NumericsError("trajectory was integrated without dense output")
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        forward = self.t[-1] >= self.t[0]
        tt = self.t if forward else self.t[::-1]
        lo, hi = tt[0], tt[-1]
        span = hi - lo
        if np.any(s < lo - 1e-12 * max(1.0, abs(span))) or np.any(s > hi + 1e-12 * max(1.0, abs(span))):
            raise NumericsError("dense output queried outside the integrated span")
        idx = np.searchsorted(tt, s, side="right") - 1
        idx = np.clip(idx, 0, len(tt) - 2)
        if not forward:
            idx = len(self.t) - 2 - idx
        t0 = self.t[idx]
        h = self.t[idx + 1] - t0
        theta = (s - t0) / h
        coef = self._dense[idx]
        if self._hermite:
            y0, y1, f0, f1 = coef[..., 0], coef[..., 1], coef[..., 2], coef[..., 3]
            th = theta.reshape((-1,) + (1,) * (y0.ndim - 1))
            hh = h.reshape(th.shape)
            h00 = 2 * th**3 - 3 * th**2 + 1
            h10 = th**3 - 2 * th**2 + th
            h01 = -2 * th**3 + 3 * th**2
            h11 = th**3 - th**2
            out = h00 * y0 + h10 * hh * f0 + h01 * y1 + h11 * hh * f1
        else:
            powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
            y0 = self.y[idx]
            out = y0 + np.einsum("n...k,nk->n...", coef, powers)
        return out[0] if scalar else out


def _initial_step(rhs, t0, y0, f0, direction, atol, rtol, order=5):
    scale = atol + np.abs(y0) * rtol
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = rhs(t0 + h0 * direction, y1)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / (order + 1))
    return min(100 * h0, h1)


def integrate_ivp(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    span: Sequence[float],
    tol: ToleranceSpec = ToleranceSpec(),
    t_eval: Optional[Sequence[float]] = None,
    dense: bool = True,
    dense_kind: str = "quartic",
    terminate: Optional[Callable[[float, np.ndarray], bool]] = None,
    max_step: float = np.inf,
    first_step: Optional[float] = None,
) -> Trajectory:
    """Integrate y' = rhs(t, y) over ``span`` with the Dormand-Prince 5(4) pair.

    The state may be an array of any shape.  Each accepted step satisfies
    ``|err_i| <= abs_tol + rel_tol*|y_i|`` componentwise (max norm), so every
    column of a batched state is controlled on its own.

    Parameters
    ----------
    t_eval : points where the solution is recorded through the continuous
        extension.  Works with ``dense=False``, which keeps memory flat for
        large batched states.
    dense_kind : ``"quartic"`` (the pair's native continuous extension) or
        ``"hermite"`` (cubic Hermite on step endpoints and slopes).
    terminate : called after every accepted step; returning True ends the
        integration with ``status="terminated"``.
    """
    if dense_kind not in ("quartic", "hermite"):
        raise ValueError("dense_kind must be 'quartic' or 'hermite'")
    t0, t1 = float(span[0]), float(span[1])
    y = np.array(y0, dtype=float)
    atol, rtol = tol.abs_tol, tol.rel_tol
    direction = 1.0 if t1 >= t0 else -1.0
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) * direction < 0):
            raise ValueError("t_eval must be ordered along the integration direction")
        y_eval = np.empty((t_eval.size,) + y.shape)
        k_eval = 0
    if t0 == t1:
        traj = Trajectory(np.array([t0]), y[None].copy())
        if t_eval is not None:
            y_eval[:] = y
            traj.t_eval, traj.y_eval = t_eval, y_eval
        return traj

    f = np.asarray(rhs(t0, y), dtype=float)
    nfev = 1
    if not np.all(np.isfinite(f)) or not np.all(np.isfinite(y)):
        raise IntegrationError("blow-up detected", t0, y)
    h = first_step if first_step else _initial_step(rhs, t0, y, f, direction, atol, rtol)
    nfev += 1
    h = min(h, max_step, abs(t1 - t0))
    if y.ndim == 1 and y.size <= SMALL_STATE and t_eval is None:
        return _integrate_small(rhs, y, f, t0, t1, h, direction, tol, dense, dense_kind, terminate, max_step, nfev)

    # with atol > 0 the error ratio is finite unless the state is
    quiet = atol > 0
    ts, ys, dens = [t0], [y.copy()], []
    t = t0
    K = np.empty((7,) + y.shape)
    K2 = K.reshape(7, -1)
    shape = y.shape
    steps = 0
    status = "completed"
    while (t1 - t) * direction > 0:
        if steps >= tol.max_steps:
            raise IntegrationError("integration stalled", t, y)
        if h < 16 * EPS * max(1.0, abs(t)):
            raise IntegrationError("integration stalled", t, y)
        h = min(h, abs(t1 - t))
        hs = h * direction
        K[0] = f
        for s in range(1, 7):
            dy = (_A_ROWS[s] @ K2[:s]).reshape(shape)
            K[s] = rhs(t + _C[s] * hs, y + hs * dy)
        nfev += 6
        y_new = y + hs * (_B[:6] @ K2[:6]).reshape(shape)
        err = hs * (_E @ K2).reshape(shape)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        if not err.size:
            err_norm = 0.0
        elif quiet:
            err_norm = float((np.abs(err) / scale).max())
        else:
            with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
                err_norm = float((np.abs(err) / scale).max())
        if not math.isfinite(err_norm):
            if not np.isfinite(y_new).all() and h < 1e-8 * max(1.0, abs(t)):
                raise IntegrationError("blow-up detected", t, y)
            h *= 0.2
            continue
        if err_norm <= 1.0:
            t_new = t + hs
            if (t1 - t_new) * direction < 1e-14 * max(1.0, abs(t1)):
                t_new = t1
            if not np.isfinite(y_new).all():
                raise IntegrationError("blow-up detected", t, y)
            if dense or t_eval is not None:
                if dense_kind == "hermite":
                    coef = np.stack([y, y_new, K[0].copy(), K[6].copy()], axis=0)
                else:
                    coef = hs * (K2.T @ _P).reshape(shape + (4,))
            if t_eval is not None:
                while k_eval < t_eval.size and (t_new - t_eval[k_eval]) * direction >= -1e-14 * max(1.0, abs(t_new)):
                    theta = (t_eval[k_eval] - t) / hs
                    if dense_kind == "hermite":
                        hy0, hy1, hf0, hf1 = coef
                        y_eval[k_eval] = ((2 * theta**3 - 3 * theta**2 + 1) * hy0
                                          + (theta**3 - 2 * theta**2 + theta) * hs * hf0
                                          + (-2 * theta**3 + 3 * theta**2) * hy1
                                          + (theta**3 - theta**2) * hs * hf1)
                    else:
                        y_eval[k_eval] = y + coef @ np.array([theta, theta**2, theta**3, theta**4])
                    k_eval += 1
            if dense:
                dens.append(coef)
            t, y = t_new, y_new
            f = K[6].copy()
            ts.append(t)
            ys.append(y.copy())
            steps += 1
            factor = 10.0 if err_norm == 0 else min(10.0, 0.9 * err_norm ** -0.2)
            h = min(h * factor, max_step)
            if terminate is not None and terminate(t, y):
                status = "terminated"
                break
        else:
            h *= max(0.2, 0.9 * err_norm ** -0.2)

    traj = Trajectory(np.array(ts), np.array(ys), status=status, nfev=nfev)
    if dense and dens:
        if dense_kind == "hermite":
            traj._dense = np.moveaxis(np.array(dens), 1, -1)
            traj._hermite = True
        else:
            traj._dense = np.array(dens)
    if t_eval is not None:
        traj.t_eval = t_eval[:k_eval]
        traj.y_eval = y_eval[:k_eval]
    return traj


SMALL_STATE = 4
_AF = [[float(a) for a in row] for row in _A]
_BF = [float(b) for b in _B[:6]]
_EF = [float(e) for e in _E]
_CF = [float(c) for c in _C]


def _integrate_small(rhs, y, f, t0, t1, h, direction, tol, dense, dense_kind, terminate, max_step, nfev):
    """The Dormand-Prince loop of :func:`integrate_ivp` on Python floats.

    Per-step numpy overhead dominates for states of a few components (the
    shooting problems), so stages and the error estimate are formed with
    scalar arithmetic; only the right-hand side sees arrays.
    """
    atol, rtol = tol.abs_tol, tol.rel_tol
    m = y.size
    yl = y.tolist()
    fl = f.tolist()
    ts, ys, dens = [t0], [yl], []
    t = t0
    steps = 0
    status = "completed"
    rng = range(m)
    while (t1 - t) * direction > 0:
        if steps >= tol.max_steps:
            raise IntegrationError("integration stalled", t, np.array(yl))
        if h < 16 * EPS * max(1.0, abs(t)):
            raise IntegrationError("integration stalled", t, np.array(yl))
        h = min(h, abs(t1 - t))
        hs = h * direction
        K = [fl]
        for st in range(1, 7):
            row = _AF[st]
            ys_ = [yl[i] + hs * sum(row[q] * K[q][i] for q in range(st)) for i in rng]
            K.append(np.asarray(rhs(t + _CF[st] * hs, np.array(ys_)), dtype=float).tolist())
        nfev += 6
        y_new = [yl[i] + hs * sum(_BF[q] * K[q][i] for q in range(6)) for i in rng]
        err_norm = 0.0
        finite = True
        for i in rng:
            e = hs * sum(_EF[q] * K[q][i] for q in range(7))
            sc = atol + rtol * max(abs(yl[i]), abs(y_new[i]))
            v = abs(e) / sc
            if not v <= err_norm:
                err_norm = v
            finite = finite and math.isfinite(y_new[i])
        if not math.isfinite(err_norm):
            if not finite and h < 1e-8 * max(1.0, abs(t)):
                raise IntegrationError("blow-up detected", t, np.array(yl))
            h *= 0.2
            continue
        if err_norm <= 1.0:
            t_new = t + hs
            if (t1 - t_new) * direction < 1e-14 * max(1.0, abs(t1)):
                t_new = t1
            if not finite:
                raise IntegrationError("blow-up detected", t, np.array(yl))
            if dense:
                if dense_kind == "hermite":
                    dens.append(np.array([yl, y_new, K[0], K[6]]))
                else:
                    dens.append(hs * (np.array(K).T @ _P))
            t, yl = t_new, y_new
            fl = K[6]
            ts.append(t)
            ys.append(yl)
            steps += 1
            factor = 10.0 if err_norm == 0 else min(10.0, 0.9 * err_norm ** -0.2)
            h = min(h * factor, max_step)
            if terminate is not None and terminate(t, np.array(yl)):
                status = "terminated"
                break
        else:
            h *= max(0.2, 0.9 * err_norm ** -0.2)
    traj = Trajectory(np.array(ts), np.array(ys), status=status, nfev=nfev)
    if dense and dens:
        if dense_kind == "hermite":
            traj._dense = np.moveaxis(np.array(dens), 1, -1)
            traj._hermite = True
        else:
            traj._dense = np.array(dens)
    return traj


def bisect_interval(
    predicate: Callable[[float], bool],
    bracket: Sequence[float],
    width_tol: Optional[float] = None,
    max_iter: int = 2000,
) -> tuple[float, float]:
    """Shrink ``bracket`` keeping predicate True on the left and False on the right.

    Returns the final (left, right) pair.  Stops early once the midpoint is no
    longer representable strictly inside the bracket.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise NumericsError("bracket not straddling: left endpoint must be below right")
    if width_tol is None:
        width_tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if not predicate(lo) or predicate(hi):
        raise NumericsError("bracket not straddling")
    for _ in range(max_iter):
        if hi - lo < width_tol:
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def bisect(predicate: Callable[[float], bool], bracket: Sequence[float], width_tol: Optional[float] = None) -> float:
    """Midpoint of the final bisection bracket; see :func:`bisect_interval`."""
    lo, hi = bisect_interval(predicate, bracket, width_tol)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    zero_width: bool = False


def cell_weights(nodes: np.ndarray) -> np.ndarray:
    """Per-cell integration weights exact for cubics.

    Row i integrates the cubic through the four nodes nearest to cell
    [nodes[i], nodes[i+1]] (centred where possible, one-sided at the ends).
    Returns an array of shape (n-1, 4) together with the stencil start index
    implied by ``_cell_start``.  Summing cell integrals gives a fourth-order
    rule that is exactly additive over grid-aligned subintervals.
    """
    x = np.asarray(nodes, dtype=float)
    n = x.size
    if n < 4:
        raise NumericsError("need at least 4 nodes for the fourth-order rule")
    start = _cell_start(n)
    pts = x[start[:, None] + np.arange(4)]
    a, b = x[:-1], x[1:]
    # Integrate Lagrange basis polynomials over [a, b] via monomial moments.
    shift = pts - a[:, None]
    width = (b - a)[:, None]
    V = shift[:, None, :] ** np.arange(4)[None, :, None]  # (cells, power, node)
    moments = width ** (np.arange(4) + 1) / (np.arange(4) + 1)
    return np.linalg.solve(V, moments[..., None])[..., 0]


def _cell_start(n: int) -> np.ndarray:
    return np.clip(np.arange(n - 1) - 1, 0, n - 4)


def cell_integrals(values: np.ndarray, nodes: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Fourth-order integral of ``values`` over every grid cell (last axis)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    w = cell_weights(nodes) if weights is None else weights
    start = _cell_start(n)
    idx = start[:, None] + np.arange(4)
    return np.sum(values[..., idx] * w, axis=-1)


def quadrature(integrand, interval: Sequence[float] = None, nodes: Optional[np.ndarray] = None,
               rtol: float = 1e-12, max_level: int = 20) -> QuadResult:
    """Composite fourth-order quadrature with a Richardson error estimate.

    ``integrand`` is either a callable (sampled on doubling uniform grids over
    ``interval`` until the estimate falls below ``rtol``) or an array of
    samples at ``nodes``.
    """
    if callable(integrand):
        a, b = float(interval[0]), float(interval[1])
        if a == b:
            return QuadResult(0.0, 0.0, True)
        prev = None
        n = 8
        for _ in range(max_level):
            x = np.linspace(a, b, n + 1)
            val = float(np.sum(cell_integrals(integrand(x), x)))
            if prev is not None:
                err = abs(val - prev) / 15.0
                if err <= rtol * max(abs(val), 1e-300) or err == 0.0:
                    return QuadResult(val, err)
            prev = val
            n *= 2
        return QuadResult(val, err)
    y = np.asarray(integrand, dtype=float)
    x = np.asarray(nodes, dtype=float)
    if interval is not None:
        mask = (x >= interval[0] - 1e-12) & (x <= interval[1] + 1e-12)
        x, y = x[mask], y[mask]
    if x.size < 2 or x[-1] == x[0]:
        return QuadResult(0.0, 0.0, True)
    if x.size < 4:
        val = float(trapezoid(y, x))
        return QuadResult(val, abs(val))
    val = float(np.sum(cell_integrals(y, x)))
    if x.size >= 8:
        xc, yc = x[::2], y[::2]
        coarse = float(np.sum(cell_integrals(yc, xc)))
        tail = 0.0
        if xc[-1] != x[-1]:
            tail = float(np.sum(cell_integrals(y[-4:], x[-4:])[-1:]))
        err = abs(val - coarse - tail) / 15.0
    else:
        err = abs(val - float(trapezoid(y, x)))
    return QuadResult(val, err)


_D1_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2_CENTRAL = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
# One-sided fourth-order rows for the first two and last two nodes.
_D1_EDGE = np.array([
    [-25.0, 48.0, -36.0, 16.0, -3.0, 0.0],
    [-3.0, -10.0, 18.0, -6.0, 1.0, 0.0],
]) / 12.0
_D2_EDGE = np.array([
    [45.0, -154.0, 214.0, -156.0, 61.0, -10.0],
    [10.0, -15.0, -4.0, 14.0, -6.0, 1.0],
]) / 12.0


def derivative(values: np.ndarray, h: float, order: int = 1, accuracy: int = 4) -> np.ndarray:
    """Finite-difference derivative along the last axis on a uniform grid.

    Centred stencils in the interior, one-sided ones of the same accuracy at
    the two nodes nearest each edge.
    """
    y = np.asarray(values, dtype=float)
    n = y.shape[-1]
    out = np.empty_like(y)
    if accuracy == 2:
        if order == 1:
            out[..., 1:-1] = (y[..., 2:] - y[..., :-2]) / (2 * h)
            out[..., 0] = (-3 * y[..., 0] + 4 * y[..., 1] - y[..., 2]) / (2 * h)
            out[..., -1] = (3 * y[..., -1] - 4 * y[..., -2] + y[..., -3]) / (2 * h)
        else:
            out[..., 1:-1] = (y[..., 2:] - 2 * y[..., 1:-1] + y[..., :-2]) / h**2
            out[..., 0] = (2 * y[..., 0] - 5 * y[..., 1] + 4 * y[..., 2] - y[..., 3]) / h**2
            out[..., -1] = (2 * y[..., -1] - 5 * y[..., -2] + 4 * y[..., -3] - y[..., -4]) / h**2
        return out
    if accuracy != 4:
        raise ValueError("accuracy must be 2 or 4")
    if n < 6:
        raise NumericsError("need at least 6 nodes for fourth-order stencils")
    if order == 1:
        c, edge, sign, p = _D1_CENTRAL, _D1_EDGE, -1.0, h
    elif order == 2:
        c, edge, sign, p = _D2_CENTRAL, _D2_EDGE, 1.0, h * h
    else:
        raise ValueError("order must be 1 or 2")
    out[..., 2:-2] = (c[0] * y[..., :-4] + c[1] * y[..., 1:-3] + c[2] * y[..., 2:-2]
                      + c[3] * y[..., 3:-1] + c[4] * y[..., 4:])
    for i in range(2):
        out[..., i] = y[..., :6] @ edge[i]
        out[..., n - 1 - i] = sign * (y[..., ::-1][..., :6] @ edge[i])
    return out / p


def interpolate(nodes: np.ndarray, values: np.ndarray, points) -> np.ndarray:
    """Not-a-knot cubic spline through (nodes, values) evaluated at points."""
    return CubicSpline(np.asarray(nodes), np.asarray(values), axis=-1)(points)


@dataclass(frozen=True)
class PowerFit:
    exponent: float
    prefactor: float
    residual: float
    n_points: int


def fit_power_law(x, y, window: Optional[Sequence[float]] = None) -> PowerFit:
    """Least-squares fit of log y = log c + p log x.

    Points with y <= 100 machine epsilon are discarded before fitting; the
    residual is the RMS misfit in log y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is not None:
        keep = (x >= window[0]) & (x <= window[1])
        x, y = x[keep], y[keep]
    if np.any(x <= 0) or np.any(y < 0):
        raise NumericsError("power-law fit needs positive data")
    keep = y > 100 * EPS
    x, y = x[keep], y[keep]
    if x.size < 3:
        raise NumericsError("insufficient data")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (p, logc), *_ = np.linalg.lstsq(A, ly, rcond=None)
    misfit = ly - (p * lx + logc)
    return PowerFit(float(p), float(np.exp(logc)), float(np.sqrt(np.mean(misfit**2))), int(x.size))
