"""Scale arithmetic for the delocalization dichotomy.

For energy E, exponent eta in (0, 1/(4-d)) and c_V = c1 (1 + sup V^(1/2))^(-1/2):

    ell = c_V E^(-1/4 + eta (1 - d/4))        (inner ball)
    r   = ell E^(-eta) = c_V E^(-1/4 - d eta/4)  (outer ball)

and the admissible energies are
[(2 c_V / L)^(4/(1+d eta)), min(c_V^(4/(1+d eta)), c2^(2/(d eta)))].
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ScaleError(ValueError):
    pass


def eta_max(d: int) -> float:
    return 1.0 / (4 - d)


def check_eta(eta: float, d: int):
    if d not in (1, 2, 3):
        raise ScaleError(f"dimension must be 1, 2 or 3, got {d}")
    if not 0 < eta < eta_max(d):
        raise ScaleError(f"eta={eta} outside (0, 1/(4-d)) = (0, {eta_max(d):.6g}) for d={d}")


def compute_cV(c1: float, v_sup: float) -> float:
    if not c1 > 0:
        raise ScaleError("c1 must be positive")
    return c1 * (1.0 + math.sqrt(v_sup)) ** -0.5


def compute_scales(E: float, eta: float, d: int, c_V: float) -> tuple[float, float]:
    if not 0 < E < 1:
        raise ScaleError(f"energy must lie in (0, 1), got {E}")
    check_eta(eta, d)
    ell = c_V * E ** (-0.25 + eta * (1 - d / 4))
    r = ell * E**-eta
    direct = c_V * E ** (-0.25 - d * eta / 4)
    assert abs(r - direct) <= 1e-12 * direct, (r, direct)
    return ell, r


def energy_window(L: float, d: int, eta: float, c_V: float, c2: float = 1.0) -> tuple[float, float, bool]:
    """(E_min, E_max, nonempty)."""
    check_eta(eta, d)
    p = 4.0 / (1 + d * eta)
    e_min = (2 * c_V / L) ** p
    e_max = min(c_V**p, c2 ** (2.0 / (d * eta)))
    return e_min, e_max, e_min < e_max


@dataclass(frozen=True)
class ScaleSet:
    E: float
    eta: float
    d: int
    c1: float
    c2: float
    c_V: float
    ell: float
    r: float
    window: tuple[float, float]
    L: float

    @property
    def in_window(self) -> bool:
        return self.window[0] <= self.E <= self.window[1]

    def as_dict(self) -> dict:
        return {
            "E": self.E, "eta": self.eta, "d": self.d, "c1": self.c1, "c2": self.c2,
            "c_V": self.c_V, "ell": self.ell, "r": self.r,
            "window": list(self.window), "L": self.L,
        }


def make_scale_set(E, eta, d, L, v_sup, c1=1.0, c2=1.0) -> ScaleSet:
    c_V = compute_cV(c1, v_sup)
    ell, r = compute_scales(E, eta, d, c_V)
    lo, hi, _ = energy_window(L, d, eta, c_V, c2)
    return ScaleSet(E, eta, d, c1, c2, c_V, ell, r, (lo, hi), L)


@dataclass(frozen=True)
class DecayModel:
    """Decay profile delta: [1, inf) -> [0, 1/2] in units of r / ell_loc.

    exponential(C, beta): tail bound C e^(-beta r); delta(s) = C e^(-log(2C) s),
        ell_loc = log(2C) / beta, delta^-1(E) = -log(E/C) / log(2C).
    algebraic(C, alpha): delta(s) = C s^(-alpha), delta^-1(E) = (C/E)^(1/alpha).
    """

    kind: str
    C: float
    rate: float

    def __post_init__(self):
        if self.kind not in ("exponential", "algebraic"):
            raise ScaleError(f"unknown decay kind {self.kind!r}")
        if not (self.C > 0 and self.rate > 0):
            raise ScaleError("decay parameters must be positive")
        if self.kind == "exponential" and not self.C > 0.5:
            raise ScaleError("exponential decay needs C > 1/2 to be decreasing")
        if self.delta(1.0) > 0.5 + 1e-15:
            raise ScaleError(f"delta(1) = {self.delta(1.0):g} exceeds 1/2")

    def delta(self, s: float) -> float:
        if self.kind == "exponential":
            return self.C * math.exp(-math.log(2 * self.C) * s)
        return self.C * s**-self.rate

    def delta_inv(self, E: float) -> float:
        if not 0 < E < self.delta(1.0):
            raise ScaleError(f"delta^-1 undefined at E={E}: need 0 < E < delta(1) = {self.delta(1.0):g}")
        if self.kind == "exponential":
            return -math.log(E / self.C) / math.log(2 * self.C)
        return (self.C / E) ** (1.0 / self.rate)

    @property
    def ell_loc(self) -> float | None:
        if self.kind == "exponential":
            return math.log(2 * self.C) / self.rate
        return None


def loc_length_lower_bound(E: float, eta: float, d: int, c_V: float, model: DecayModel) -> float:
    """c_V E^(-1/4+eta(1-d/4)) min(1, E^(-eta) / delta^-1(E))."""
    ell, _ = compute_scales(E, eta, d, c_V)
    return ell * min(1.0, E**-eta / model.delta_inv(E))


def blowup_threshold(d: int, eta: float) -> float:
    return 4.0 / (1 + d * eta)


def blowup_condition(d: int, eta: float, alpha: float) -> bool:
    """Algebraic decay exponent alpha forces ell_loc -> infinity iff alpha > 4/(1+d eta)."""
    if not alpha > 0:
        raise ScaleError("alpha must be positive")
    return alpha > blowup_threshold(d, eta)


def limiting_exponent(d: int) -> float:
    """Threshold as eta -> 1/(4-d): 4/(1 + d/(4-d)) = 4 - d."""
    return blowup_threshold(d, eta_max(d))
