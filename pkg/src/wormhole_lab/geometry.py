"""Wormhole metric quantities, energies, weighted norms and the psi <-> u map.

The wormhole is R x S^d with metric dr^2 + <r>^2 dOmega^2, <r> = sqrt(r^2+1).
Corotational maps psi(t, r) carry the energy

    E(psi) = 1/2 int [psi_t^2 + psi_r^2 + 2 sin^2(psi)/(r^2+1)] (r^2+1) dr.

Writing psi = Q_n + <r> u turns the problem into a wave equation on the
five-dimensional wormhole R x S^4 with potential

    V = <r>^-4 + 2 <r>^-2 (cos 2Q_n - 1)

and energy 1/2 int (u_t^2 + u_r^2 + V u^2)(r^2+1)^2 dr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .numerics import RadialGrid, cell_integrals, cell_weights, derivative

BOUNDARY_TOL = 1e-3 * math.pi


class GeometryError(ValueError):
    pass


def bracket(r):
    """Japanese bracket <r> = sqrt(r^2 + 1)."""
    r = np.asarray(r, dtype=float)
    return np.sqrt(r * r + 1.0)


@dataclass(frozen=True)
class FieldState:
    grid: RadialGrid
    field: np.ndarray
    velocity: np.ndarray
    formulation: str = "psi"
    degree: int = 0
    time: float = 0.0

    def __post_init__(self):
        if self.formulation not in ("psi", "u"):
            raise GeometryError(f"unknown formulation {self.formulation!r}")
        f = np.asarray(self.field, dtype=float)
        v = np.asarray(self.velocity, dtype=float)
        if f.shape != (self.grid.size,) or v.shape != (self.grid.size,):
            raise GeometryError("field and velocity must match the grid size")
        if self.degree < 0:
            raise GeometryError("degree must be nonnegative")
        object.__setattr__(self, "field", f)
        object.__setattr__(self, "velocity", v)

    @property
    def r(self) -> np.ndarray:
        return self.grid.r()

    def boundary_consistent(self, tol: float = BOUNDARY_TOL) -> bool:
        """Diagnostic: psi near 0 at the left edge and near n pi at the right."""
        if self.formulation != "psi":
            return True
        return (abs(self.field[0]) < tol) and (abs(self.field[-1] - self.degree * math.pi) < tol)


@dataclass(frozen=True)
class NormSpec:
    r0: float = -math.inf
    k: int = 1

    def __post_init__(self):
        if self.k not in (1, 2):
            raise GeometryError("weight exponent k must be 1 or 2")


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise GeometryError("non-finite samples")


def _spacing(grid: RadialGrid) -> float:
    if grid.spacing is None or grid.coordinate != "r":
        raise GeometryError("energies need a uniform grid in the r chart")
    return grid.spacing


def _cells_between(r: np.ndarray, a: Optional[float], b: Optional[float]) -> slice:
    """Cell index range covering [a, b]; a and b must sit on grid nodes."""
    lo = 0 if a is None else _node_index(r, a)
    hi = r.size - 1 if b is None else _node_index(r, b)
    return slice(lo, hi)


def _node_index(r: np.ndarray, value: float) -> int:
    if value <= r[0]:
        return 0
    if value >= r[-1]:
        return r.size - 1
    i = int(np.argmin(np.abs(r - value)))
    if abs(r[i] - value) > 1e-9 * max(1.0, abs(value)):
        raise GeometryError(f"{value} is not a grid node")
    return i


def integrate_cells(density: np.ndarray, r: np.ndarray, a: Optional[float] = None, b: Optional[float] = None) -> float:
    """Fourth-order integral of nodal ``density`` over grid-aligned [a, b]."""
    cells = cell_integrals(density, r)
    return float(np.sum(cells[_cells_between(r, a, b)]))


def energy_density_psi(state: FieldState) -> np.ndarray:
    h = _spacing(state.grid)
    r = state.r
    psi_r = derivative(state.field, h, 1)
    w = r * r + 1.0
    return 0.5 * (state.velocity**2 + psi_r**2 + 2.0 * np.sin(state.field) ** 2 / w) * w


def energy_psi(state: FieldState, a: Optional[float] = None, b: Optional[float] = None) -> float:
    """Wave-map energy over the grid, or over grid-aligned [a, b]."""
    if state.formulation != "psi":
        raise GeometryError("energy_psi needs a psi-form state")
    _check_finite(state.field, state.velocity)
    return integrate_cells(energy_density_psi(state), state.r, a, b)


def u_potential(r, harmonic) -> np.ndarray:
    """V = <r>^-4 + 2 <r>^-2 (cos 2Q - 1), written as -4 <r>^-2 sin^2 Q."""
    r = np.asarray(r, dtype=float)
    Q = harmonic(r)[0]
    w = 1.0 / (r * r + 1.0)
    return w * w - 4.0 * w * np.sin(Q) ** 2


def energy_u(state: FieldState, harmonic, a: Optional[float] = None, b: Optional[float] = None) -> float:
    """1/2 int (u_t^2 + u_r^2 + V u^2)(r^2+1)^2 dr for a u-form state."""
    if state.formulation != "u":
        raise GeometryError("energy_u needs a u-form state")
    _check_finite(state.field, state.velocity)
    h = _spacing(state.grid)
    r = state.r
    V = u_potential(r, harmonic)
    u_r = derivative(state.field, h, 1)
    dens = 0.5 * (state.velocity**2 + u_r**2 + V * state.field**2) * (r * r + 1.0) ** 2
    return integrate_cells(dens, r, a, b)


def weighted_norm(pair, spec: NormSpec = NormSpec()) -> float:
    """sqrt(int_{r >= r0} (|d_r f|^2 + |g|^2)(r^2+1)^k dr)."""
    grid, f, g = _unpack(pair)
    h = _spacing(grid)
    r = grid.r()
    if math.isfinite(spec.r0) and not (r[0] <= spec.r0 <= r[-1]):
        raise GeometryError("r0 outside the grid")
    _check_finite(f, g)
    dens = (derivative(f, h, 1) ** 2 + g**2) * (r * r + 1.0) ** spec.k
    a = None if not math.isfinite(spec.r0) else spec.r0
    if a is not None:
        a = float(r[np.searchsorted(r, a - 1e-12)])
    return math.sqrt(max(integrate_cells(dens, r, a, None), 0.0))


def _unpack(pair):
    if isinstance(pair, FieldState):
        return pair.grid, pair.field, pair.velocity
    grid, f, g = pair
    return grid, np.asarray(f, dtype=float), np.asarray(g, dtype=float)


def psi_to_u(state: FieldState, harmonic) -> FieldState:
    """u = <r>^-1 (psi - Q_n), u_t = <r>^-1 psi_t."""
    if state.formulation != "psi":
        raise GeometryError("psi_to_u needs a psi-form state")
    r = state.r
    Q = harmonic(r)[0]
    w = bracket(r)
    return replace(state, field=(state.field - Q) / w, velocity=state.velocity / w, formulation="u")


def u_to_psi(state: FieldState, harmonic) -> FieldState:
    """Inverse of :func:`psi_to_u`."""
    if state.formulation != "u":
        raise GeometryError("u_to_psi needs a u-form state")
    r = state.r
    Q = harmonic(r)[0]
    w = bracket(r)
    return replace(state, field=Q + w * state.field, velocity=w * state.velocity, formulation="psi")


@dataclass(frozen=True)
class StraussReport:
    constant: float
    gradient_norm: float
    worst_radius: float


def strauss_check(pair) -> StraussReport:
    """Smallest C with |u(r)| <= C <r>^{-3/2} ||d_r u||_{L^2((r^2+1)^2 dr)} on the grid."""
    grid, u, _ = _unpack(pair)
    h = _spacing(grid)
    r = grid.r()
    grad = math.sqrt(max(integrate_cells(derivative(u, h, 1) ** 2 * (r * r + 1.0) ** 2, r), 0.0))
    lhs = np.abs(u) * bracket(r) ** 1.5
    if grad == 0.0:
        return StraussReport(0.0, 0.0, float(r[0]))
    i = int(np.argmax(lhs))
    return StraussReport(float(lhs[i] / grad), grad, float(r[i]))
