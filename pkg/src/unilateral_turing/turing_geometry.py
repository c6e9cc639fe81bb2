"""Classical Turing geometry: hyperbolas C_j, the envelope C_E and region labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigenbasis import SpectralBasis

ENVELOPE_RTOL = 1e-9


class TruncationError(RuntimeError):
    """Modes beyond the truncation could exceed the computed envelope."""


@dataclass(frozen=True)
class ReactionMatrix:
    """Jacobian of the kinetics at the equilibrium."""

    b11: float
    b12: float
    b21: float
    b22: float

    def __post_init__(self):
        b11, b12, b21, b22 = (float(v) for v in (self.b11, self.b12, self.b21, self.b22))
        problems = []
        if not b11 > 0:
            problems.append("b11 > 0")
        if not b22 < 0:
            problems.append("b22 < 0")
        if not b12 * b21 < 0:
            problems.append("b12*b21 < 0")
        if not b11 + b22 < 0:
            problems.append("trace < 0")
        if not b11 * b22 - b12 * b21 > 0:
            problems.append("det > 0")
        if problems:
            raise ValueError("reaction matrix violates Turing conditions: " + ", ".join(problems))

    @classmethod
    def from_sequence(cls, values) -> ReactionMatrix:
        b = np.asarray(values, dtype=float).ravel()
        if b.size != 4:
            raise ValueError("reaction matrix needs 4 entries (b11, b12, b21, b22)")
        return cls(*b)

    @property
    def product(self) -> float:
        return self.b12 * self.b21

    @property
    def trace(self) -> float:
        return self.b11 + self.b22

    @property
    def det(self) -> float:
        return self.b11 * self.b22 - self.b12 * self.b21

    def as_array(self) -> np.ndarray:
        return np.array([[self.b11, self.b12], [self.b21, self.b22]])


@dataclass(frozen=True)
class DiffusionPoint:
    d1: float
    d2: float

    def __post_init__(self):
        if not (self.d1 > 0 and self.d2 > 0):
            raise ValueError("diffusion coefficients must be positive")


@dataclass(frozen=True)
class RegionLabel:
    tag: str
    on_curves: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.tag not in ("instability", "stability", "envelope"):
            raise ValueError(f"unknown region {self.tag!r}")
        if (self.tag == "envelope") != bool(self.on_curves):
            raise ValueError("on_curves must be non-empty exactly for envelope points")


def classify_kinetics(B: ReactionMatrix) -> str:
    if B.b12 < 0 < B.b21:
        return "activator_inhibitor"
    return "substrate_depletion"


def modal_gain(d2: float, B: ReactionMatrix, kappa):
    """``c(kappa) = b11 + b12 b21 / (d2 kappa - b22)``."""
    return B.b11 + B.product / (d2 * np.asarray(kappa, dtype=float) - B.b22)


def hyperbola_value(kappa, d2: float, B: ReactionMatrix):
    """d1-coordinate of the hyperbola for eigenvalue ``kappa`` (> 0) at ``d2``."""
    kappa = np.asarray(kappa, dtype=float)
    return modal_gain(d2, B, kappa) / kappa


def hyperbola_d1(j: int, d2: float, B: ReactionMatrix, basis: SpectralBasis) -> float:
    if not 0 <= j < basis.n_modes:
        raise IndexError(f"mode {j} outside basis of {basis.n_modes}")
    kappa = basis.kappa[j]
    if kappa <= 0:
        raise ValueError("the constant Neumann mode has no hyperbola")
    return float(hyperbola_value(kappa, d2, B))


def tail_bound(B: ReactionMatrix, basis: SpectralBasis) -> float:
    """Upper bound on every hyperbola value for modes beyond the truncation."""
    return (B.b11 + abs(B.product) / (-B.b22)) / basis.next_kappa


def d1_eigenvalues(d2: float, B: ReactionMatrix, basis: SpectralBasis) -> np.ndarray:
    """Hyperbola values for every retained mode; NaN for the constant mode."""
    out = np.full(basis.n_modes, np.nan)
    pos = basis.kappa > 0
    out[pos] = hyperbola_value(basis.kappa[pos], d2, B)
    return out


def envelope_d1max(d2: float, B: ReactionMatrix, basis: SpectralBasis,
                   rtol: float = ENVELOPE_RTOL) -> tuple[float, tuple[int, ...]]:
    """Maximal hyperbola value at ``d2`` and every mode attaining it."""
    if not d2 > 0:
        raise ValueError("d2 must be positive")
    values = d1_eigenvalues(d2, B, basis)
    best = float(np.nanmax(values))
    bound = tail_bound(B, basis)
    if not bound < best:
        raise TruncationError(
            f"d2={d2:g}: truncated modes may reach {bound:.3e} >= envelope {best:.3e}; "
            "increase n_modes")
    hits = np.flatnonzero(np.abs(values - best) <= rtol * abs(best))
    return best, tuple(int(j) for j in hits)


def classify_point(p: DiffusionPoint, B: ReactionMatrix, basis: SpectralBasis,
                   rtol: float = ENVELOPE_RTOL) -> RegionLabel:
    d1max, argmax = envelope_d1max(p.d2, B, basis, rtol)
    if abs(p.d1 - d1max) <= rtol * abs(d1max):
        return RegionLabel("envelope", frozenset(argmax))
    if p.d1 < d1max:
        return RegionLabel("instability")
    return RegionLabel("stability")


def operator_eigenvalues(d2: float, B: ReactionMatrix, basis: SpectralBasis) -> np.ndarray:
    """Diagonal of the reduced operator ``S_{d2}`` in the eigenbasis.

    With Dirichlet faces this is ``c_j / kappa_j``; in the pure Neumann
    case ``c_j / (kappa_j + 1)``.  Either way it equals ``mu_j c_j``.
    """
    return basis.mu * modal_gain(d2, B, basis.kappa)


@dataclass(frozen=True)
class SpectrumEntry:
    j: int
    kappa: float
    d1: float | None
    operator_eigenvalue: float


def spectrum_S(d2: float, B: ReactionMatrix, basis: SpectralBasis) -> list[SpectrumEntry]:
    lam = operator_eigenvalues(d2, B, basis)
    d1 = d1_eigenvalues(d2, B, basis)
    return [SpectrumEntry(j, float(basis.kappa[j]),
                          None if math.isnan(d1[j]) else float(d1[j]), float(lam[j]))
            for j in range(basis.n_modes)]


def hyperbola_intersection(kappa_a: float, kappa_b: float, B: ReactionMatrix) -> float | None:
    """``d2`` where the hyperbolas of ``kappa_a != kappa_b`` cross in the positive quadrant.

    Equating the two hyperbola values and dividing by ``kappa_b - kappa_a``
    leaves ``b11 ka kb x^2 - (ka + kb) det x + b22 det = 0``, which has exactly
    one positive root.
    """
    if kappa_a <= 0 or kappa_b <= 0 or kappa_a == kappa_b:
        return None
    qa = B.b11 * kappa_a * kappa_b
    qb = -(kappa_a + kappa_b) * B.det
    qc = B.b22 * B.det
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        return None
    roots = [r for r in ((-qb + math.sqrt(disc)) / (2 * qa), (-qb - math.sqrt(disc)) / (2 * qa))
             if r > 0]
    for r in roots:
        if hyperbola_value(kappa_a, r, B) > 0:
            return float(r)
    return None


def first_two_kappas(basis: SpectralBasis) -> tuple[float, float]:
    """The two smallest distinct positive eigenvalues."""
    distinct = [float(basis.kappa[g[0]]) for g in basis.groups if basis.kappa[g[0]] > 0]
    if len(distinct) < 2:
        raise ValueError("basis has fewer than two distinct positive eigenvalues")
    return distinct[0], distinct[1]
