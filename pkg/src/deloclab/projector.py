"""Spectral-projector states F = Pi_h(., x0) / ||Pi_h(., x0)|| for a window [E, 2E]."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .diagnostics import DichotomyReport, dichotomy_check
from .eigensolver import SpectrumSlice
from .grid import ScalarField, dirichlet_form
from .scales import ScaleSet


class ProjectorError(ValueError):
    pass


@dataclass(frozen=True)
class WindowWeight:
    E: float
    h: Callable[[float], float] = field(compare=False)
    sup: float = 1.0

    def __call__(self, lam: float) -> float:
        if not self.E <= lam <= 2 * self.E:
            return 0.0
        return float(self.h(lam))


def default_window_weight(E: float) -> WindowWeight:
    """Smooth bump on (E, 2E) peaking at 3E/2 with value 1."""
    if not 0 < E < 0.5:
        raise ProjectorError("default window weight needs 0 < E < 1/2")

    def h(lam):
        u = (2 * lam - 3 * E) / E
        if abs(u) >= 1:
            return 0.0
        return math.exp(1 - 1 / (1 - u * u))

    return WindowWeight(E, h, 1.0)


def constant_window_weight(E: float, value: float = 1.0) -> WindowWeight:
    """h = value on [E, 2E].  Not continuous at the edges; used for exact-sum tests."""
    return WindowWeight(E, lambda lam: value, abs(value))


@dataclass
class ProjectorState:
    x0: tuple[int, ...]
    F: ScalarField = field(repr=False)
    F_tilde: ScalarField = field(repr=False)
    eigenvalues: list[float]
    coefficients: list[float]
    max_residual: float


def build_projector_state(sl: SpectrumSlice, weight: WindowWeight, x0) -> ProjectorState:
    """F = sum h(lam) conj(Psi(x0)) Psi / D and F~ = sum lam h(lam) conj(Psi(x0)) Psi / D.

    D = (sum h(lam)^2 |Psi(x0)|^2)^(1/2) = ||Pi_h(., x0)||_2 by orthonormality,
    so ||F||_2 = 1 and mu_h = |F|^2 dmu is a probability measure.
    """
    if not sl.pairs:
        raise ProjectorError("empty spectral window")
    x0 = tuple(int(c) for c in x0)
    amps = []
    for p in sl.pairs:
        amps.append(weight(p.lam) * np.conj(p.psi.values[x0]))
    den = math.sqrt(sum(abs(a) ** 2 for a in amps))
    if den == 0.0:
        raise ProjectorError(f"degenerate center {x0}: all weighted amplitudes vanish")
    coeffs = [a / den for a in amps]
    grid = sl.pairs[0].psi.grid
    F = np.zeros(grid.counts, dtype=np.result_type(*(p.psi.values for p in sl.pairs)))
    Ft = np.zeros_like(F)
    for c, p in zip(coeffs, sl.pairs):
        if c == 0:
            continue
        F = F + c * p.psi.values
        Ft = Ft + (p.lam * c) * p.psi.values
    return ProjectorState(x0, ScalarField(grid, F), ScalarField(grid, Ft),
                          [p.lam for p in sl.pairs], [float(np.real(c)) for c in coeffs],
                          max(p.residual for p in sl.pairs))


@dataclass
class ProjectorBounds:
    F_norm: float
    F_tilde_norm: float
    potential_mass: float
    gradient_energy: float
    bound_F_tilde: float
    bound_energy: float

    @property
    def margins(self) -> dict:
        return {
            "F_tilde": self.bound_F_tilde - self.F_tilde_norm,
            "potential": self.bound_energy - self.potential_mass,
            "gradient": self.bound_energy - self.gradient_energy,
        }

    @property
    def ok(self) -> bool:
        return all(m >= 0 for m in self.margins.values())


def projector_bounds(state: ProjectorState, E: float, weight: WindowWeight, V: ScalarField) -> ProjectorBounds:
    """||F~|| <= 2 ||h|| E, int V|F|^2 <= 2 ||h|| E, int |grad F|^2 <= 2 ||h|| E."""
    dv = state.F.grid.volume_element
    dens = np.abs(state.F.values) ** 2
    return ProjectorBounds(
        F_norm=state.F.norm(),
        F_tilde_norm=state.F_tilde.norm(),
        potential_mass=float(np.sum(V.values * dens) * dv),
        gradient_energy=dirichlet_form(state.F),
        bound_F_tilde=2 * weight.sup * E,
        bound_energy=2 * weight.sup * E,
    )


def projector_dichotomy(state: ProjectorState, E: float, scales: ScaleSet) -> DichotomyReport:
    return dichotomy_check(state.F, E, scales, kind="projector")
