"""Method-of-lines evolution of corotational wave maps and related waves.

Formulations
------------
psi         psi_tt = psi_rr + 2r/(r^2+1) psi_r - sin(2 psi)/(r^2+1)
u           u_tt = u_rr + 4r/(r^2+1) u_r - V u + F(r,u) + G(r,u)
linear-psi  phi_tt = phi_rr + 2r/(r^2+1) phi_r - 2 phi/(r^2+1)
flat-radial v_tt = v_rr + (d-1)/r v_r,  on r_i = (i + 1/2) h, even through r = 0

Space uses centred stencils (fourth order by default), time uses classical
RK4.  The default boundary is causal truncation: the outermost two nodes are
frozen and the domain is taken large enough that nothing they do reaches the
observation region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .geometry import (
    FieldState,
    bracket,
    energy_psi,
    energy_u,
    integrate_cells,
    u_potential,
)
from .numerics import NumericsError, RadialGrid, cell_integrals, derivative

FORMULATIONS = ("psi", "u", "linear-psi", "flat-radial")
CFL = 0.5


class EvolutionError(NumericsError):
    pass


def _d1(y, h, order):
    """Centred first derivative on nodes 2..n-3 (order 4) or 1..n-2 (order 2)."""
    if order == 4:
        return (y[:-4] - 8.0 * y[1:-3] + 8.0 * y[3:-1] - y[4:]) / (12.0 * h)
    return (y[2:] - y[:-2]) / (2.0 * h)


def _d2(y, h, order):
    if order == 4:
        return (-y[:-4] + 16.0 * y[1:-3] - 30.0 * y[2:-2] + 16.0 * y[3:-1] - y[4:]) / (12.0 * h * h)
    return (y[2:] - 2.0 * y[1:-1] + y[:-2]) / (h * h)


def _pad(order):
    return 2 if order == 4 else 1


def rhs_psi(state: FieldState, order: int = 4) -> np.ndarray:
    """Acceleration of the wave-map equation; zero on the edge nodes."""
    return _acc_psi(state.field, state.r, state.grid.spacing, order)


def _acc_psi(psi, r, h, order):
    p = _pad(order)
    acc = np.zeros_like(psi)
    ri = r[p:-p]
    w = 1.0 / (ri * ri + 1.0)
    acc[p:-p] = _d2(psi, h, order) + 2.0 * ri * w * _d1(psi, h, order) - np.sin(2.0 * psi[p:-p]) * w
    return acc


def rhs_linear_psi(state: FieldState, order: int = 4) -> np.ndarray:
    """Acceleration of the linear equation with potential 2/(r^2+1)."""
    return _acc_linear(state.field, state.r, state.grid.spacing, order)


def _acc_linear(phi, r, h, order):
    p = _pad(order)
    acc = np.zeros_like(phi)
    ri = r[p:-p]
    w = 1.0 / (ri * ri + 1.0)
    acc[p:-p] = _d2(phi, h, order) + 2.0 * ri * w * _d1(phi, h, order) - 2.0 * w * phi[p:-p]
    return acc


def u_nonlinearity(r, u, Q):
    """(F, G) of the u equation, exact trigonometric forms."""
    br = bracket(r)
    phi = br * u
    F = 2.0 * br**-3 * np.sin(phi) ** 2 * np.sin(2.0 * Q)
    G = br**-3 * (2.0 * phi - np.sin(2.0 * phi)) * np.cos(2.0 * Q)
    return F, G


def rhs_u(state: FieldState, V: np.ndarray, Q: np.ndarray, order: int = 4) -> np.ndarray:
    """u_rr + 4r/(r^2+1) u_r - V u + F + G on interior nodes."""
    return _acc_u(state.field, state.r, state.grid.spacing, order, V, Q)


def _acc_u(u, r, h, order, V, Q):
    p = _pad(order)
    acc = np.zeros_like(u)
    ri = r[p:-p]
    ui = u[p:-p]
    F, G = u_nonlinearity(ri, ui, Q[p:-p])
    acc[p:-p] = _d2(u, h, order) + 4.0 * ri / (ri * ri + 1.0) * _d1(u, h, order) - V[p:-p] * ui + F + G
    return acc


def flat_radial_grid(r_max: float, h: float) -> RadialGrid:
    """Staggered nodes r_i = (i + 1/2) h, i = 0..N-1."""
    n = int(round(r_max / h))
    return RadialGrid("r", h * (np.arange(n) + 0.5), h)


def rhs_flat_radial(d: int, state: FieldState, order: int = 4) -> np.ndarray:
    """v_rr + (d-1)/r v_r with the even reflection v(-r) = v(r) at the origin."""
    return _acc_flat(state.field, state.r, state.grid.spacing, order, d)


def _acc_flat(v, r, h, order, d):
    p = _pad(order)
    # ghost nodes -r_0, -r_1 mirror r_0, r_1
    ext = np.concatenate([v[p - 1::-1], v])
    rr = np.concatenate([-r[p - 1::-1], r])
    acc = np.zeros_like(v)
    inner = slice(p, ext.size - p)
    acc_ext = np.zeros_like(ext)
    acc_ext[inner] = _d2(ext, h, order) + (d - 1) / rr[inner] * _d1(ext, h, order)
    acc[:-p] = acc_ext[p:-p]
    return acc


@dataclass
class EvolutionConfig:
    grid: RadialGrid
    T_final: float
    dt: Optional[float] = None
    order: int = 4
    boundary: str = "causal-truncation"
    formulation: str = "psi"
    stride: int = 1
    d: int = 5
    cfl: float = CFL
    harmonic: Optional[Callable] = None
    snapshot_every: Optional[float] = None

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise EvolutionError(f"unknown formulation {self.formulation!r}")
        if self.order not in (2, 4):
            raise EvolutionError("scheme order must be 2 or 4")
        if self.boundary not in ("causal-truncation", "sommerfeld"):
            raise EvolutionError(f"unknown boundary {self.boundary!r}")
        h = self.grid.spacing
        if h is None:
            raise EvolutionError("evolution needs a uniform grid")
        if self.dt is None:
            self.dt = self.cfl * h
        if self.dt > self.cfl * h * (1 + 1e-12):
            raise EvolutionError(f"CFL violation: dt={self.dt} exceeds {self.cfl}*h={self.cfl * h}")
        if self.formulation == "u" and self.harmonic is None:
            raise EvolutionError("u formulation needs the harmonic map")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T_final / self.dt - 1e-9))


@dataclass
class EnergyTrace:
    times: np.ndarray
    energies: np.ndarray

    @property
    def drift(self) -> np.ndarray:
        e0 = self.energies[0]
        return np.abs(self.energies - e0) / max(abs(e0), 1e-300)

    @property
    def max_drift(self) -> float:
        return float(self.drift.max())


@dataclass
class EvolutionResult:
    config: EvolutionConfig
    times: np.ndarray
    fields: np.ndarray
    velocities: np.ndarray
    energy: EnergyTrace
    formulation: str
    degree: int

    def state(self, k: int) -> FieldState:
        form = "psi" if self.formulation in ("psi", "linear-psi", "flat-radial") else "u"
        return FieldState(self.config.grid, self.fields[k], self.velocities[k], form, self.degree, float(self.times[k]))

    @property
    def final(self) -> FieldState:
        return self.state(-1)


def flat_energy(v, vt, r, h, d) -> float:
    """1/2 int (v_t^2 + v_r^2) r^(d-1) dr on the staggered grid."""
    ext = np.concatenate([v[1::-1], v])
    vr = derivative(ext, h, 1)[2:]
    dens = 0.5 * (vt**2 + vr**2) * r ** (d - 1)
    # the first half cell [0, h/2] is added from the node value, density ~ r^(d-1)
    return float(np.sum(cell_integrals(dens, r)) + dens[0] * (h / 2) / d)


def linear_energy(phi, phit, r, h) -> float:
    w = r * r + 1.0
    dens = 0.5 * (phit**2 + derivative(phi, h, 1) ** 2 + 2.0 * phi**2 / w) * w
    return float(np.sum(cell_integrals(dens, r)))


def _make_acc(config: EvolutionConfig, degree: int):
    grid = config.grid
    r = grid.r()
    h = grid.spacing
    o = config.order
    f = config.formulation
    if f == "psi":
        return lambda y: _acc_psi(y, r, h, o)
    if f == "linear-psi":
        return lambda y: _acc_linear(y, r, h, o)
    if f == "flat-radial":
        return lambda y: _acc_flat(y, r, h, o, config.d)
    V = u_potential(r, config.harmonic)
    Q = config.harmonic(r)[0]
    return lambda y: _acc_u(y, r, h, o, V, Q)


def _energy_fn(config: EvolutionConfig, degree: int):
    grid = config.grid
    r = grid.r()
    h = grid.spacing
    f = config.formulation
    if f == "psi":
        return lambda y, v: energy_psi(FieldState(grid, y, v, "psi", degree))
    if f == "linear-psi":
        return lambda y, v: linear_energy(y, v, r, h)
    if f == "flat-radial":
        return lambda y, v: flat_energy(y, v, r, h, config.d)
    return lambda y, v: energy_u(FieldState(grid, y, v, "u", degree), config.harmonic)


def evolve(config: EvolutionConfig, initial: FieldState, energy_every: int = 0) -> EvolutionResult:
    """RK4 method-of-lines integration from ``initial`` to ``config.T_final``.

    Snapshots are kept every ``config.stride`` steps (or every
    ``config.snapshot_every`` time units).  Energy is evaluated at every
    snapshot, or every ``energy_every`` steps when that is given.
    """
    if initial.grid.size != config.grid.size or not np.array_equal(initial.grid.nodes, config.grid.nodes):
        raise EvolutionError("initial data must live on the configuration grid")
    acc = _make_acc(config, initial.degree)
    energy = _energy_fn(config, initial.degree)
    dt = config.dt
    nsteps = config.n_steps
    stride = config.stride
    if config.snapshot_every is not None:
        stride = max(1, int(round(config.snapshot_every / dt)))
    y = initial.field.copy()
    v = initial.velocity.copy()
    p = _pad(config.order)
    fixed = np.zeros(y.size, dtype=bool)
    if config.formulation == "flat-radial":
        fixed[-p:] = True
    else:
        fixed[:p] = True
        fixed[-p:] = True
    v[fixed] = 0.0 if config.boundary == "causal-truncation" else v[fixed]
    sommerfeld = config.boundary == "sommerfeld"
    r = config.grid.r()
    h = config.grid.spacing
    limits = _far_limits(config, initial)

    def som_velocity(yy):
        # outgoing condition (d_t + d_r)(r (psi - limit)) = 0 at the right edge, mirrored at the left
        out = np.zeros_like(yy)
        idx = np.where(fixed)[0]
        for i in idx:
            sgn = 1.0 if r[i] > 0 else -1.0
            lim = limits[1] if sgn > 0 else limits[0]
            j = np.array([i, i - int(sgn), i - 2 * int(sgn)])
            dr = sgn * (3 * yy[j[0]] - 4 * yy[j[1]] + yy[j[2]]) / (2 * h)
            out[i] = -sgn * dr - (yy[i] - lim) / abs(r[i])
        return out

    times = [initial.time]
    fields = [y.copy()]
    vels = [v.copy()]
    en_t = [initial.time]
    en = [energy(y, v)]
    t = initial.time
    for k in range(1, nsteps + 1):
        h_step = min(dt, config.T_final + initial.time - t)
        k1y, k1v = v, acc(y)
        y2, v2 = y + 0.5 * h_step * k1y, v + 0.5 * h_step * k1v
        k2y, k2v = v2, acc(y2)
        y3, v3 = y + 0.5 * h_step * k2y, v + 0.5 * h_step * k2v
        k3y, k3v = v3, acc(y3)
        y4, v4 = y + h_step * k3y, v + h_step * k3v
        k4y, k4v = v4, acc(y4)
        if sommerfeld:
            sv = [som_velocity(z) for z in (y, y2, y3, y4)]
            k1y, k2y, k3y, k4y = [np.where(fixed, s, kk) for s, kk in zip(sv, (k1y, k2y, k3y, k4y))]
        y = y + h_step / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        v = v + h_step / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if sommerfeld:
            v[fixed] = som_velocity(y)[fixed]
        t = t + h_step
        if not np.all(np.isfinite(y)):
            raise EvolutionError(f"blow-up detected at t={t:.6g}")
        snap = (k % stride == 0) or k == nsteps
        if snap:
            times.append(t)
            fields.append(y.copy())
            vels.append(v.copy())
        if (energy_every and k % energy_every == 0) or (not energy_every and snap) or k == nsteps:
            en_t.append(t)
            en.append(energy(y, v))
    trace = EnergyTrace(np.array(en_t), np.array(en))
    return EvolutionResult(config, np.array(times), np.array(fields), np.array(vels), trace,
                           config.formulation, initial.degree)


def _far_limits(config, initial):
    if config.formulation == "psi":
        return (0.0, initial.degree * math.pi)
    return (0.0, 0.0)


def evolve_energy_only(config: EvolutionConfig, initial: FieldState, energy_every: int):
    """Evolution that keeps only the initial and final snapshot."""
    cfg = replace(config, stride=config.n_steps + 1, snapshot_every=None)
    return evolve(cfg, initial, energy_every=energy_every)


# --------------------------------------------------------------------------- data

def smooth_bump(r, center: float, width: float) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1 - s^2)) for |s| < 1, s = (r - center)/width."""
    s = (np.asarray(r, dtype=float) - center) / width
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


def smooth_bump_dr(r, center: float, width: float) -> np.ndarray:
    s = (np.asarray(r, dtype=float) - center) / width
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    sm = s[m]
    out[m] = np.exp(1.0 - 1.0 / (1.0 - sm**2)) * (-2.0 * sm / (1.0 - sm**2) ** 2) / width
    return out


FAMILIES = ("harmonic-plus-bump", "interpolating-profile", "radiation-only")
SHAPES = ("compact", "gaussian")


def bump_profile(r, center: float, width: float, shape: str = "compact") -> np.ndarray:
    """Compact bump of half-width ``width``, or a Gaussian with standard deviation ``width``."""
    if shape == "compact":
        return smooth_bump(r, center, width)
    if shape == "gaussian":
        s = (np.asarray(r, dtype=float) - center) / width
        return np.exp(-0.5 * s * s)
    raise EvolutionError(f"unknown bump shape {shape!r}")


def make_initial_data(family: str, grid: RadialGrid, degree: int = 0, harmonic=None,
                      amplitude: float = 0.1, center: float = 0.0, width: float = 3.0,
                      velocity_amplitude: float = 0.0, seed: Optional[int] = None,
                      boundary_tol: float = 1e-3 * math.pi, shape: str = "compact") -> FieldState:
    """Smooth psi-form data of degree ``degree``.

    harmonic-plus-bump      (Q_n + A b, B b)  with b a compact bump
    interpolating-profile   (n pi (1 + tanh((r - c)/w))/2, B b)
    radiation-only          (A b, B b) for n = 0

    With a seed, the bump centre and width are drawn from a fixed generator:
    centre uniform in [-2, 2], width uniform in [1.5, 3].  ``shape`` picks the
    compact bump (default) or a Gaussian envelope; the Gaussian reaches the
    asymptotic convergence regime at much coarser h.
    """
    if family not in FAMILIES:
        raise EvolutionError(f"unknown data family {family!r}")
    if seed is not None:
        rng = np.random.default_rng(seed)
        center = float(rng.uniform(-2.0, 2.0))
        width = float(rng.uniform(1.5, 3.0))
    r = grid.r()
    b = bump_profile(r, center, width, shape)
    if family == "harmonic-plus-bump":
        if harmonic is None and degree > 0:
            raise EvolutionError("harmonic-plus-bump needs the harmonic map")
        Q = harmonic(r)[0] if degree > 0 else np.zeros_like(r)
        psi = Q + amplitude * b
    elif family == "interpolating-profile":
        psi = degree * math.pi * 0.5 * (1.0 + np.tanh((r - center) / width))
    else:
        if degree != 0:
            raise EvolutionError("radiation-only data is for degree 0")
        psi = amplitude * b
    vel = velocity_amplitude * b
    st = FieldState(grid, psi, vel, "psi", degree)
    if not st.boundary_consistent(boundary_tol):
        raise EvolutionError("data violates the degree limits at the grid ends")
    return st


# --------------------------------------------------------------------------- convergence

@dataclass
class ConvergenceReport:
    order: float
    errors: tuple
    indeterminate: bool


def convergence_order(make_config: Callable[[float], EvolutionConfig], make_data: Callable[[RadialGrid], FieldState],
                      h: float, norm: str = "max") -> ConvergenceReport:
    """Richardson order from runs at h, h/2, h/4 compared on the coarse nodes."""
    finals = []
    for k in range(3):
        cfg = make_config(h / 2**k)
        data = make_data(cfg.grid)
        res = evolve(replace(cfg, stride=cfg.n_steps + 1), data)
        finals.append((cfg.grid.r(), res.fields[-1]))
    r0 = finals[0][0]
    sampled = []
    for rk, fk in finals:
        idx = np.searchsorted(rk, r0 - 1e-9)
        if not np.allclose(rk[idx], r0, atol=1e-9):
            raise EvolutionError("grids are not nested")
        sampled.append(fk[idx])
    e1 = float(np.max(np.abs(sampled[0] - sampled[1])))
    e2 = float(np.max(np.abs(sampled[1] - sampled[2])))
    if e1 < 1e-13 or e2 < 1e-14:
        return ConvergenceReport(float("nan"), (e1, e2), True)
    return ConvergenceReport(math.log2(e1 / e2), (e1, e2), False)


def finite_speed_excess(result: EvolutionResult, support: float, background, margin_cells: int = 5) -> float:
    """Largest |field - background| outside |r| <= support + t + margin over all snapshots.

    ``background`` is either one profile or a series aligned with the
    snapshots, e.g. the evolution of the unperturbed data on the same grid
    (a discrete static solution is only static to O(h^4)).
    """
    r = result.config.grid.r()
    h = result.config.grid.spacing
    bg = np.asarray(background, dtype=float)
    if bg.ndim == 1:
        bg = np.broadcast_to(bg, result.fields.shape)
    if bg.shape != result.fields.shape:
        raise EvolutionError("background series does not match the snapshots")
    worst = 0.0
    for t, f, b in zip(result.times, result.fields, bg):
        out = np.abs(r) > support + (t - result.times[0]) + margin_cells * h
        if np.any(out):
            worst = max(worst, float(np.max(np.abs(f[out] - b[out]))))
    return worst
