"""Positively homogeneous unilateral operators and the maximal eigenvalue ``d1^{MAX,beta}``.

All vectors are coefficient vectors in the H^1_D-orthonormal eigenbasis.
For a grid function ``u = sum c_j e_j`` the unilateral operator is

    (beta(u), phi) = int (s_+ u^+ - s_- u^-) phi,

so ``beta(u) = M(u) c`` with the sign-dependent weighted mass matrix
``M(u) = E^T diag(q (s_+ [u > 0] + s_- [u < 0])) E``.  The same matrix is a
generalized Jacobian of ``beta`` and drives the semismooth Newton polish in
:func:`maximize_rayleigh`.

The reduced problem for fixed ``d2`` is ``S u - beta(u) = d1 (I - L) u`` with
``L = 0`` when a Dirichlet face exists and ``L = A`` for pure Neumann data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import norm, qmc

from .eigenbasis import SpectralBasis, represent_boundary_density, represent_density
from .turing_geometry import (
    ReactionMatrix,
    d1_eigenvalues,
    envelope_d1max,
    modal_gain,
    operator_eigenvalues,
)

log = logging.getLogger(__name__)

INTERIOR = "interior"
BOUNDARY = "boundary"


@dataclass(frozen=True, eq=False)
class SourceSinkProfile:
    """Non-negative ``s_-`` (source below equilibrium) and ``s_+`` (sink above) on the grid."""

    s_minus: np.ndarray
    s_plus: np.ndarray
    placement: str = INTERIOR

    def __post_init__(self):
        if self.placement not in (INTERIOR, BOUNDARY):
            raise ValueError(f"placement must be {INTERIOR!r} or {BOUNDARY!r}")
        sm = np.asarray(self.s_minus, dtype=float).ravel()
        sp = np.asarray(self.s_plus, dtype=float).ravel()
        if sm.shape != sp.shape:
            raise ValueError("s_minus and s_plus must live on the same grid")
        for name, s in (("s_minus", sm), ("s_plus", sp)):
            if not np.all(np.isfinite(s)):
                raise ValueError(f"{name} must be bounded")
            if np.any(s < 0):
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "s_minus", sm)
        object.__setattr__(self, "s_plus", sp)

    @classmethod
    def constant(cls, basis: SpectralBasis, s_minus: float = 0.0, s_plus: float = 0.0,
                 placement: str = INTERIOR) -> SourceSinkProfile:
        n = basis.values.shape[0]
        return cls(np.full(n, float(s_minus)), np.full(n, float(s_plus)), placement)

    @classmethod
    def zero(cls, basis: SpectralBasis) -> SourceSinkProfile:
        return cls.constant(basis)

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.s_minus) or np.any(self.s_plus))

    @property
    def sup_norms(self) -> tuple[float, float]:
        return float(self.s_minus.max(initial=0.0)), float(self.s_plus.max(initial=0.0))

    def check(self, basis: SpectralBasis) -> None:
        if self.s_minus.size != basis.values.shape[0]:
            raise ValueError("profile grid does not match the basis grid")
        if self.placement == BOUNDARY and not basis.boundary.neumann_faces(basis.domain):
            raise ValueError("boundary unilateral terms need a non-empty Neumann boundary")


class GalerkinVector:
    """Coefficients in the truncated eigenbasis with a cached grid evaluation."""

    __slots__ = ("coeffs", "basis", "__dict__")

    def __init__(self, coeffs, basis: SpectralBasis):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (basis.n_modes,):
            raise ValueError(f"expected {basis.n_modes} coefficients, got {coeffs.shape}")
        coeffs.setflags(write=False)
        self.coeffs = coeffs
        self.basis = basis

    @classmethod
    def mode(cls, j: int, basis: SpectralBasis, scale: float = 1.0) -> GalerkinVector:
        c = np.zeros(basis.n_modes)
        c[j] = scale
        return cls(c, basis)

    @cached_property
    def values(self) -> np.ndarray:
        return self.basis.values @ self.coeffs

    @property
    def positive_part(self) -> np.ndarray:
        return np.maximum(self.values, 0.0)

    @property
    def negative_part(self) -> np.ndarray:
        return np.maximum(-self.values, 0.0)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __mul__(self, t: float) -> GalerkinVector:
        return GalerkinVector(t * self.coeffs, self.basis)

    __rmul__ = __mul__

    def __add__(self, other: GalerkinVector) -> GalerkinVector:
        return GalerkinVector(self.coeffs + other.coeffs, self.basis)

    def __sub__(self, other: GalerkinVector) -> GalerkinVector:
        return GalerkinVector(self.coeffs - other.coeffs, self.basis)

    def __repr__(self):
        return f"GalerkinVector({np.array2string(self.coeffs, threshold=8)})"


def _coeffs(u, basis: SpectralBasis) -> np.ndarray:
    if isinstance(u, GalerkinVector):
        return u.coeffs
    c = np.asarray(u, dtype=float)
    if c.shape != (basis.n_modes,):
        raise ValueError(f"expected {basis.n_modes} coefficients, got {c.shape}")
    return c


class UnilateralOperator:
    """Array-level kernel for ``beta`` / ``beta_N`` on a fixed basis and profile."""

    def __init__(self, profile: SourceSinkProfile, basis: SpectralBasis):
        profile.check(basis)
        self.profile = profile
        self.basis = basis
        q = basis.weights if profile.placement == INTERIOR else basis.boundary_weights
        support = q > 0
        self.zero = profile.is_zero or not np.any(
            support & ((profile.s_plus > 0) | (profile.s_minus > 0)))
        # restrict to the quadrature support: boundary terms touch few points
        self._E = basis.values[support]
        self._qp = (q * profile.s_plus)[support]
        self._qm = (q * profile.s_minus)[support]

    def weights(self, c: np.ndarray) -> np.ndarray:
        u = self._E @ c
        return np.where(u > 0, self._qp, 0.0) + np.where(u < 0, self._qm, 0.0), u

    def apply(self, c: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros_like(c)
        w, u = self.weights(c)
        return self._E.T @ (w * u)

    def form(self, c: np.ndarray) -> float:
        """``(beta(u), u) = int s_+ (u^+)^2 + s_- (u^-)^2``."""
        if self.zero:
            return 0.0
        w, u = self.weights(c)
        return float(np.dot(w, u * u))

    def jacobian(self, c: np.ndarray) -> np.ndarray:
        n = c.size
        if self.zero:
            return np.zeros((n, n))
        w, _ = self.weights(c)
        return self._E.T @ (w[:, None] * self._E)


def beta_apply(u, profile: SourceSinkProfile, basis: SpectralBasis) -> GalerkinVector:
    """Representer of ``phi -> int (s_+ u^+ - s_- u^-) phi``."""
    if profile.placement != INTERIOR:
        raise ValueError("beta_apply needs an interior profile; use beta_boundary_apply")
    c = _coeffs(u, basis)
    u_grid = basis.values @ c
    density = profile.s_plus * np.maximum(u_grid, 0) - profile.s_minus * np.maximum(-u_grid, 0)
    return GalerkinVector(represent_density(density, basis), basis)


def beta_boundary_apply(u, profile: SourceSinkProfile, basis: SpectralBasis) -> GalerkinVector:
    """Representer of ``phi -> int_{Gamma_N} (s_+ u^+ - s_- u^-) phi dGamma``."""
    if profile.placement != BOUNDARY:
        raise ValueError("beta_boundary_apply needs a boundary profile")
    if not basis.boundary.neumann_faces(basis.domain):
        raise ValueError("Gamma_N is empty")
    c = _coeffs(u, basis)
    u_grid = basis.values @ c
    density = profile.s_plus * np.maximum(u_grid, 0) - profile.s_minus * np.maximum(-u_grid, 0)
    return GalerkinVector(represent_boundary_density(density, basis), basis)


def unilateral_apply(u, profile: SourceSinkProfile, basis: SpectralBasis) -> GalerkinVector:
    if profile.placement == INTERIOR:
        return beta_apply(u, profile, basis)
    return beta_boundary_apply(u, profile, basis)


def s_apply(u, d2: float, B: ReactionMatrix, basis: SpectralBasis) -> GalerkinVector:
    """Reduced operator ``S_{d2}``; diagonal in the eigenbasis."""
    if not d2 > 0:
        raise ValueError("d2 must be positive")
    c = _coeffs(u, basis)
    return GalerkinVector(operator_eigenvalues(d2, B, basis) * c, basis)


def denominator_weights(basis: SpectralBasis) -> np.ndarray:
    """Diagonal of ``I - L``: ones, or ``1 - mu_j`` in the pure Neumann case."""
    if basis.pure_neumann:
        return 1.0 - basis.mu
    return np.ones(basis.n_modes)


class RayleighProblem:
    """Quotient ``((S u, u) - (beta(u), u)) / ((I - L) u, u)`` for fixed ``d2``."""

    def __init__(self, d2: float, profile: SourceSinkProfile, B: ReactionMatrix,
                 basis: SpectralBasis):
        if not d2 > 0:
            raise ValueError("d2 must be positive")
        self.d2 = d2
        self.B = B
        self.basis = basis
        self.profile = profile
        self.beta = UnilateralOperator(profile, basis)
        self.lam = operator_eigenvalues(d2, B, basis)
        self.D = denominator_weights(basis)

    def numerator(self, c: np.ndarray) -> float:
        return float(np.dot(self.lam * c, c)) - self.beta.form(c)

    def denominator(self, c: np.ndarray) -> float:
        return float(np.dot(self.D * c, c))

    def quotient(self, c: np.ndarray) -> float:
        den = self.denominator(c)
        if not den > 1e-14 * max(float(np.dot(c, c)), 1e-300):
            raise ValueError("quotient undefined: input is zero or lies in Ker(I - L)")
        return self.numerator(c) / den

    def gradient(self, c: np.ndarray, value: float) -> np.ndarray:
        return 2.0 * (self.lam * c - self.beta.apply(c) - value * self.D * c) / self.denominator(c)

    def residual(self, c: np.ndarray, value: float) -> float:
        r = self.lam * c - self.beta.apply(c) - value * self.D * c
        return float(np.linalg.norm(r) / np.linalg.norm(c))

    def normalize(self, c: np.ndarray) -> np.ndarray:
        return c / math.sqrt(self.denominator(c))


def rayleigh_quotient(u, d2: float, profile: SourceSinkProfile, B: ReactionMatrix,
                      basis: SpectralBasis) -> float:
    c = _coeffs(u, basis)
    if not np.any(c):
        raise ValueError("quotient undefined for u = 0")
    return RayleighProblem(d2, profile, B, basis).quotient(c)


@dataclass
class MaximizerOptions:
    n_eigen_starts: int = 8
    n_random_starts: int = 24
    seed: int = 0
    max_iter: int = 10_000
    screen_iter: int = 60
    n_polish: int = 4
    value_rtol: float = 1e-10
    stall_window: int = 5
    residual_tol: float = 1e-6
    newton_switch: float = 1e-2
    newton_max_iter: int = 50
    distinct_overlap: float = 0.99


@dataclass
class MaximizerResult:
    value: float
    maximizer: GalerkinVector
    residual: float
    restarts_used: int
    converged: bool
    existence: bool = True
    iterations: int = 0
    distinct_maximizers: list = field(default_factory=list)


def _start_vectors(problem: RayleighProblem, opts: MaximizerOptions,
                   warm: list[np.ndarray] | None) -> list[np.ndarray]:
    basis = problem.basis
    n = basis.n_modes
    d1 = d1_eigenvalues(problem.d2, problem.B, basis)
    order = [int(j) for j in np.argsort(-np.nan_to_num(d1, nan=-np.inf))]
    starts = [np.asarray(w, dtype=float).copy() for w in (warm or [])]
    for j in order[:opts.n_eigen_starts]:
        for sign in (1.0, -1.0):
            e = np.zeros(n)
            e[j] = sign
            starts.append(e)
    rng = np.random.default_rng(opts.seed)
    scale = 1.0 / np.sqrt(basis.kappa + 1.0)
    for _ in range(opts.n_random_starts):
        starts.append(rng.standard_normal(n) * scale)
    return [s for s in starts if problem.denominator(s) > 1e-12]


def _ascend(problem: RayleighProblem, c: np.ndarray, max_iter: int, opts: MaximizerOptions,
            polish: bool) -> tuple[np.ndarray, float, int, bool]:
    """Projected gradient ascent with backtracking on ``((I-L)u, u) = 1``."""
    c = problem.normalize(c)
    value = problem.quotient(c)
    step = 1.0
    history = [value]
    it = 0
    for it in range(1, max_iter + 1):
        g = problem.gradient(c, value)
        gg = float(np.dot(g, g))
        if gg == 0.0:
            break
        while True:
            trial = problem.normalize(c + step * g)
            try:
                tval = problem.quotient(trial)
            except ValueError:
                tval = -np.inf
            if tval >= value + 1e-4 * step * gg or step < 1e-14:
                break
            step *= 0.5
        if tval < value:
            break
        c, value = trial, tval
        step = min(step * 2.0, 1e6)
        history.append(value)
        if polish and problem.residual(c, value) < opts.newton_switch:
            break
        if len(history) > opts.stall_window:
            old = history[-1 - opts.stall_window]
            if abs(value - old) <= opts.value_rtol * max(abs(value), 1e-300):
                if not polish or problem.residual(c, value) < opts.residual_tol:
                    return c, value, it, True
                break
    return c, value, it, False


def _newton(problem: RayleighProblem, c: np.ndarray, value: float,
            opts: MaximizerOptions) -> tuple[np.ndarray, float]:
    """Semismooth Newton on ``S u - beta(u) = lam (I-L) u`` with ``((I-L)u, u) = 1``."""
    n = c.size
    lam = value
    D = problem.D
    for _ in range(opts.newton_max_iter):
        r = problem.lam * c - problem.beta.apply(c) - lam * D * c
        g = 0.5 * (1.0 - float(np.dot(D * c, c)))
        if np.linalg.norm(r) < 1e-14 and abs(g) < 1e-15:
            break
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = np.diag(problem.lam - lam * D) - problem.beta.jacobian(c)
        J[:n, n] = -D * c
        J[n, :n] = -D * c
        try:
            delta = np.linalg.solve(J, -np.concatenate([r, [g]]))
        except np.linalg.LinAlgError:
            break
        c = c + delta[:n]
        lam = lam + delta[n]
        if np.linalg.norm(delta) < 1e-15:
            break
    c = problem.normalize(c)
    return c, problem.quotient(c)


def maximize_rayleigh(d2: float, profile: SourceSinkProfile, B: ReactionMatrix,
                      basis: SpectralBasis, opts: MaximizerOptions | None = None,
                      warm_starts: list | None = None) -> MaximizerResult:
    """Multi-start maximization of the unilateral Rayleigh quotient.

    Every start gets a short ascent; the best few distinct candidates are
    ascended to stationarity and then polished by semismooth Newton.
    """
    opts = opts or MaximizerOptions()
    problem = RayleighProblem(d2, profile, B, basis)
    starts = _start_vectors(problem, opts,
                            [_coeffs(w, basis) for w in warm_starts] if warm_starts else None)
    existence = any(problem.numerator(s) > 0 for s in starts)

    screened = []
    for s in starts:
        c, value, _, _ = _ascend(problem, s, opts.screen_iter, opts, polish=False)
        screened.append((value, c))
    screened.sort(key=lambda t: -t[0])
    candidates: list[np.ndarray] = []
    for value, c in screened:
        if len(candidates) >= opts.n_polish:
            break
        if all(_overlap(c, other) < 0.9999 for other in candidates):
            candidates.append(c)

    finished = []
    total_iter = 0
    for c in candidates:
        c, value, it, conv = _ascend(problem, c, opts.max_iter, opts, polish=True)
        total_iter += it
        if not conv:
            nc, nval = _newton(problem, c, value, opts)
            tol = 1e-9 * max(abs(value), 1.0)
            if (np.all(np.isfinite(nc)) and nval >= value - tol
                    and problem.residual(nc, nval) < problem.residual(c, value)):
                c, value = nc, nval
            if problem.residual(c, value) >= opts.residual_tol:
                c, value, it, _ = _ascend(problem, c, opts.max_iter, opts, polish=False)
                total_iter += it
        finished.append((value, c, problem.residual(c, value)))
    finished.sort(key=lambda t: -t[0])
    best_value, best_c, best_res = finished[0]
    existence = existence or best_value > 0

    distinct = []
    for value, c, res in finished:
        if value >= best_value - 1e-8 * max(abs(best_value), 1.0) and res < opts.residual_tol:
            if all(_overlap(c, o.coeffs) < opts.distinct_overlap for o in distinct):
                distinct.append(GalerkinVector(c, basis))
    converged = bool(best_res < opts.residual_tol and best_value > 0)
    if not existence or best_value <= 0:
        log.info("d2=%g: no positive eigenvalue (best quotient %.3e)", d2, best_value)
    return MaximizerResult(
        value=float(best_value),
        maximizer=GalerkinVector(best_c, basis),
        residual=float(best_res),
        restarts_used=len(starts),
        converged=converged,
        existence=bool(existence and best_value > 0),
        iterations=total_iter,
        distinct_maximizers=distinct,
    )


def _overlap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def verify_eigenrelation(result: MaximizerResult, d2: float, profile: SourceSinkProfile,
                         B: ReactionMatrix, basis: SpectralBasis) -> float:
    """``||S u - beta(u) - lambda (I - L) u|| / ||u||`` at the reported maximizer."""
    c = result.maximizer.coeffs
    lhs = s_apply(c, d2, B, basis).coeffs - unilateral_apply(c, profile, basis).coeffs
    return float(np.linalg.norm(lhs - result.value * denominator_weights(basis) * c)
                 / np.linalg.norm(c))


@dataclass(frozen=True)
class SignCheck:
    violated: bool
    norm: float
    direction: np.ndarray


def _sphere_directions(k: int, n: int) -> np.ndarray:
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        t = 2 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(t), np.sin(t)])
    pts = qmc.Halton(d=k, scramble=False).random(n + 1)[1:]
    g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def check_sign_condition(coeffs, profile: SourceSinkProfile, basis: SpectralBasis,
                         group=None, n_directions: int = 256,
                         tol_rel: float = 1e-8) -> SignCheck:
    """Is ``s_- e^- - s_+ e^+`` identically zero (on Omega, or on Gamma_N)?

    ``coeffs`` is either a full coefficient vector, or, with ``group`` given,
    a combination over the indices in ``group``.  With ``group`` given and
    ``coeffs=None`` the unit sphere of combinations is sampled and the
    smallest norm found is reported (a heuristic over ``n_directions``).
    """
    if group is not None:
        group = [int(j) for j in group]
        if coeffs is None:
            dirs = _sphere_directions(len(group), n_directions)
        else:
            dirs = np.atleast_2d(np.asarray(coeffs, dtype=float))
            if dirs.shape[1] != len(group):
                raise ValueError("coeffs must match the group size")
        full = np.zeros((dirs.shape[0], basis.n_modes))
        full[:, group] = dirs
    else:
        full = np.atleast_2d(_coeffs(coeffs, basis))
    if not np.any(full):
        raise ValueError("coefficients must not all vanish")
    q = basis.weights if profile.placement == INTERIOR else basis.boundary_weights
    best = None
    for c in full:
        e = basis.values @ c
        defect = profile.s_minus * np.maximum(-e, 0) - profile.s_plus * np.maximum(e, 0)
        size = math.sqrt(max(float(np.dot(q, defect**2)), 0.0))
        scale = math.sqrt(float(np.dot(basis.weights, e**2)))
        if best is None or size < best[0]:
            best = (size, scale, c)
    size, scale, c = best
    return SignCheck(violated=size <= tol_rel * scale, norm=size, direction=c)


def tau_bound(d2: float, B: ReactionMatrix, basis: SpectralBasis) -> float:
    """``b11 + b12 b21 / (d2 kappa_{j0} - b22)`` at the envelope mode ``j0``."""
    _, argmax = envelope_d1max(d2, B, basis)
    return float(modal_gain(d2, B, basis.kappa[argmax[0]]))


@dataclass(frozen=True)
class DirectionalCheck:
    t: np.ndarray
    deviations: np.ndarray
    noise: np.ndarray | None = None

    @property
    def final(self) -> float:
        return float(self.deviations[-1])

    @property
    def max(self) -> float:
        return float(self.deviations.max())

    def decreasing(self, floor: float = 1e-12) -> bool:
        """Non-increasing sequence, ignoring wiggles below rounding level.

        Each step may rise by ``floor`` plus the estimated rounding error of
        the difference quotient at that ``t``, which grows like 1/t.
        """
        d = self.deviations
        slack = floor if self.noise is None else floor + self.noise[1:]
        return bool(np.all(d[1:] <= d[:-1] + slack))


def directional_derivative_check(u0, h, profile: SourceSinkProfile, basis: SpectralBasis,
                                 t_sequence) -> DirectionalCheck:
    """Deviation of ``(1/t)(beta(u0 + t h) - beta(u0), u0)`` from ``(beta(u0), h)``."""
    op = UnilateralOperator(profile, basis)
    c0 = _coeffs(u0, basis)
    hc = _coeffs(h, basis)
    b0 = op.apply(c0)
    target = float(np.dot(b0, hc))
    ts = np.asarray(t_sequence, dtype=float)
    dev = np.array([abs(float(np.dot(op.apply(c0 + t * hc) - b0, c0)) / t - target) for t in ts])
    # size of the sums behind (beta(u0), u0) with all signs taken positive
    if op.zero:
        magnitude = 0.0
    else:
        w, u = op.weights(c0)
        magnitude = float(np.abs(c0) @ (np.abs(op._E.T) @ np.abs(w * u)))
    noise = 64 * np.finfo(float).eps * magnitude / ts
    return DirectionalCheck(ts, dev, noise)


def sign_change_lemma_check(coeffs, basis: SpectralBasis, noise: float = 1e-12) -> bool:
    """Does a combination of non-principal modes take both signs on the grid?"""
    c = _coeffs(coeffs, basis)
    if not np.any(c):
        raise ValueError("combination must be non-zero")
    j0 = 1
    if np.any(c[:j0]):
        raise ValueError("combination must not involve the principal mode")
    u = basis.values @ c
    floor = noise * max(float(np.abs(u).max()), 1.0)
    return bool(u.max() > floor and u.min() < -floor)
