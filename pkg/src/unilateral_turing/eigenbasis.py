"""Analytic Laplacian eigenbases on intervals and rectangles.

Eigenfunctions are normalized in the working Hilbert space ``H^1_D``:

* at least one Dirichlet face: ``(u, v) = int grad u . grad v``, so
  ``||e_j||_{L2}^2 = 1 / kappa_j``;
* pure Neumann: ``(u, v) = int grad u . grad v + u v``, so
  ``||e_j||_{L2}^2 = 1 / (kappa_j + 1)``.

In both cases ``(A e_j, e_j) = int e_j^2 = mu_j`` is the diagonal of the
compact operator ``A`` and every coefficient vector lives in an orthonormal
frame, i.e. inner products are plain dot products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

INTERVAL_FACES = ("left", "right")
RECTANGLE_FACES = ("left", "right", "bottom", "top")

DEFAULT_RESOLUTION = {"interval": 512, "rectangle": 128}
DEFAULT_MODES = {"interval": 64, "rectangle": 100}
MIN_POINTS_PER_WAVELENGTH = 8
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    lengths: tuple[float, ...]
    grid_resolution: int | None = None

    def __post_init__(self):
        if self.kind not in DEFAULT_RESOLUTION:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        expected = 1 if self.kind == "interval" else 2
        if len(lengths) != expected:
            raise ValueError(f"{self.kind} needs {expected} length(s), got {len(lengths)}")
        if any(not (v > 0 and math.isfinite(v)) for v in lengths):
            raise ValueError("domain lengths must be positive and finite")
        object.__setattr__(self, "lengths", lengths)
        res = self.grid_resolution
        if res is None:
            res = DEFAULT_RESOLUTION[self.kind]
        if int(res) != res or res < 16:
            raise ValueError("grid_resolution must be an integer >= 16")
        object.__setattr__(self, "grid_resolution", int(res))

    @classmethod
    def interval(cls, length: float = math.pi, grid_resolution: int | None = None) -> DomainSpec:
        return cls("interval", (length,), grid_resolution)

    @classmethod
    def rectangle(cls, lx: float = math.pi, ly: float = math.pi,
                  grid_resolution: int | None = None) -> DomainSpec:
        return cls("rectangle", (lx, ly), grid_resolution)

    @property
    def ndim(self) -> int:
        return len(self.lengths)

    @property
    def faces(self) -> tuple[str, ...]:
        return INTERVAL_FACES if self.kind == "interval" else RECTANGLE_FACES

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.grid_resolution,) * self.ndim

    def axes(self) -> list[np.ndarray]:
        n = self.grid_resolution
        return [np.linspace(0.0, L, n) for L in self.lengths]

    def coordinates(self) -> list[np.ndarray]:
        """Flattened coordinate arrays, one per axis (``indexing='ij'``)."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return [g.ravel() for g in grids]


@dataclass(frozen=True)
class BoundarySpec:
    """Face -> ``"dirichlet"`` or ``"neumann"``.

    Faces are ``left``/``right`` (x axis) and, for rectangles,
    ``bottom``/``top`` (y axis).  Unlisted faces default to Neumann.
    """

    faces: Mapping[str, str]

    def __post_init__(self):
        if not self.faces:
            raise ValueError("at least one boundary face must be specified")
        clean = {}
        for face, cond in self.faces.items():
            if face not in RECTANGLE_FACES:
                raise ValueError(f"unknown boundary face {face!r}")
            cond = str(cond).lower()
            if cond not in (DIRICHLET, NEUMANN):
                raise ValueError(f"face {face!r}: condition must be dirichlet or neumann")
            clean[face] = cond
        object.__setattr__(self, "faces", dict(sorted(clean.items())))

    @classmethod
    def uniform(cls, condition: str, domain: DomainSpec) -> BoundarySpec:
        return cls({face: condition for face in domain.faces})

    def condition(self, face: str) -> str:
        return self.faces.get(face, NEUMANN)

    def resolved(self, domain: DomainSpec) -> dict[str, str]:
        extra = set(self.faces) - set(domain.faces)
        if extra:
            raise ValueError(f"faces {sorted(extra)} do not exist on a {domain.kind}")
        return {face: self.condition(face) for face in domain.faces}

    def dirichlet_faces(self, domain: DomainSpec) -> list[str]:
        return [f for f, c in self.resolved(domain).items() if c == DIRICHLET]

    def neumann_faces(self, domain: DomainSpec) -> list[str]:
        return [f for f, c in self.resolved(domain).items() if c == NEUMANN]

    def __hash__(self):
        return hash(tuple(self.faces.items()))


@dataclass(frozen=True)
class EigenPair:
    index: int
    kappa: float
    mode_numbers: tuple[int, ...]
    values: np.ndarray


class _AxisFamily:
    """1D eigenfunctions for one axis with given end conditions.

    ``kappa = (pi / (2 L))**2 * q**2`` with the integer wave index ``q``
    (even for equal end conditions, odd for mixed ones).
    """

    def __init__(self, length: float, left: str, right: str):
        self.length = length
        self.left = left
        self.right = right
        self.kind = {
            (NEUMANN, NEUMANN): "cos",
            (DIRICHLET, DIRICHLET): "sin",
            (DIRICHLET, NEUMANN): "sin",
            (NEUMANN, DIRICHLET): "cos",
        }[(left, right)]
        self.mixed = left != right
        self.first = 1 if (left, right) == (DIRICHLET, DIRICHLET) else 0

    def wave_index(self, m: int) -> int:
        """Integer ``q`` for mode number ``m`` (``m >= self.first``)."""
        return 2 * m + 1 if self.mixed else 2 * m

    def unit_kappa(self) -> float:
        return (math.pi / (2.0 * self.length)) ** 2

    def kappa(self, m: int) -> float:
        return self.unit_kappa() * self.wave_index(m) ** 2

    def evaluate(self, m: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """L2-normalized profile and its derivative at ``x``."""
        L = self.length
        k = self.wave_index(m) * math.pi / (2.0 * L)
        if self.kind == "cos":
            if k == 0.0:
                return np.full_like(x, 1.0 / math.sqrt(L)), np.zeros_like(x)
            c = math.sqrt(2.0 / L)
            return c * np.cos(k * x), -c * k * np.sin(k * x)
        c = math.sqrt(2.0 / L)
        return c * np.sin(k * x), c * k * np.cos(k * x)


def _trapezoid_weights(n: int, length: float) -> np.ndarray:
    h = length / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def quadrature_weights(domain: DomainSpec) -> np.ndarray:
    """Flattened composite-trapezoid weights on the domain grid."""
    n = domain.grid_resolution
    w = _trapezoid_weights(n, domain.lengths[0])
    for L in domain.lengths[1:]:
        w = np.multiply.outer(w, _trapezoid_weights(n, L))
    return w.ravel()


def integrate(f, domain: DomainSpec) -> float:
    """Composite trapezoid integral of a grid function (or scalar) over the domain."""
    w = quadrature_weights(domain)
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return float(f) * float(w.sum())
    return float(np.dot(w, f.reshape(-1)))


def _axis_families(domain: DomainSpec, boundary: BoundarySpec) -> list[_AxisFamily]:
    conds = boundary.resolved(domain)
    fams = [_AxisFamily(domain.lengths[0], conds["left"], conds["right"])]
    if domain.kind == "rectangle":
        fams.append(_AxisFamily(domain.lengths[1], conds["bottom"], conds["top"]))
    return fams


def _sorted_modes(fams: list[_AxisFamily], count: int) -> list[tuple[float, tuple[int, ...]]]:
    if len(fams) == 1:
        f = fams[0]
        return [(f.kappa(m + f.first), (m + f.first,)) for m in range(count)]
    fx, fy = fams
    cands = []
    for a in range(fx.first, fx.first + count):
        for b in range(fy.first, fy.first + count):
            qx, qy = fx.wave_index(a), fy.wave_index(b)
            if fx.length == fy.length:
                # integer sum before scaling keeps degenerate pairs exactly tied
                kappa = fx.unit_kappa() * (qx * qx + qy * qy)
            else:
                kappa = fx.unit_kappa() * qx * qx + fy.unit_kappa() * qy * qy
            cands.append((kappa, (a, b)))
    cands.sort()
    return cands[:count]


def _group_ties(kappa: np.ndarray, rtol: float) -> tuple[tuple[int, ...], ...]:
    groups: list[list[int]] = []
    for j, k in enumerate(kappa):
        if groups and abs(k - kappa[groups[-1][0]]) <= rtol * max(abs(k), 1e-300):
            groups[-1].append(j)
        else:
            groups.append([j])
    return tuple(tuple(g) for g in groups)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    domain: DomainSpec
    boundary: BoundarySpec
    kappa: np.ndarray
    mode_numbers: tuple[tuple[int, ...], ...]
    values: np.ndarray          # (n_points, n_modes), H-normalized e_j on the grid
    gradients: tuple[np.ndarray, ...]  # per axis, same shape as values
    weights: np.ndarray         # quadrature weights, (n_points,)
    mu: np.ndarray              # (A e_j, e_j)
    next_kappa: float           # first eigenvalue beyond the truncation
    groups: tuple[tuple[int, ...], ...]
    boundary_weights: np.ndarray = field(repr=False)  # Gamma_N quadrature on the grid

    @property
    def n_modes(self) -> int:
        return self.kappa.size

    @property
    def pure_neumann(self) -> bool:
        return not self.boundary.dirichlet_faces(self.domain)

    @property
    def inner_product_mode(self) -> str:
        return "full_sobolev" if self.pure_neumann else "gradient_only"

    @property
    def mass_diagonal(self) -> np.ndarray:
        return self.mu

    @property
    def pairs(self) -> list[EigenPair]:
        shape = self.domain.grid_shape
        return [EigenPair(j, float(self.kappa[j]), self.mode_numbers[j],
                          self.values[:, j].reshape(shape))
                for j in range(self.n_modes)]

    @property
    def l2_values(self) -> np.ndarray:
        """Grid values of the L2-normalized eigenfunctions."""
        return self.values / np.sqrt(self.mu)

    def group_of(self, j: int) -> tuple[int, ...]:
        for g in self.groups:
            if j in g:
                return g
        raise IndexError(j)

    def first_nonconstant(self) -> int:
        return 1 if self.pure_neumann else 0

    def evaluate(self, coeffs) -> np.ndarray:
        """Grid values (flattened) of ``sum_j c_j e_j``."""
        coeffs = _as_coeffs(coeffs, self.n_modes)
        return self.values @ coeffs

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, np.asarray(f, dtype=float).reshape(-1)))

    def gram_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature ``(int grad e_i . grad e_j, int e_i e_j)`` matrices."""
        W = self.weights[:, None]
        stiff = sum(g.T @ (W * g) for g in self.gradients)
        mass = self.values.T @ (W * self.values)
        return stiff, mass

    def eigen_residual(self) -> float:
        """Max relative defect of ``int grad e_j . grad phi = kappa_j int e_j phi``."""
        stiff, mass = self.gram_matrices()
        defect = stiff - self.kappa[:, None] * mass
        scale = max(np.abs(stiff).max(), 1.0)
        return float(np.abs(defect).max() / scale)

    def orthonormality_defect(self) -> float:
        stiff, mass = self.gram_matrices()
        gram = stiff + mass if self.pure_neumann else stiff
        return float(np.abs(gram - np.eye(self.n_modes)).max())

    def sobolev_norms(self, coeffs) -> dict[str, float]:
        """Both the gradient-only and the full first-order norm of ``u``."""
        coeffs = _as_coeffs(coeffs, self.n_modes)
        grad2 = float(np.sum(self.kappa * self.mu * coeffs**2))
        l2 = float(np.sum(self.mu * coeffs**2))
        return {"gradient_only": math.sqrt(grad2), "full_sobolev": math.sqrt(grad2 + l2),
                "l2": math.sqrt(l2)}


def _as_coeffs(coeffs, n: int) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (n,):
        raise ValueError(f"expected {n} coefficients, got shape {coeffs.shape}")
    return coeffs


def max_modes(domain: DomainSpec, boundary: BoundarySpec) -> int:
    """Largest per-axis mode count resolved with 8 points per wavelength."""
    # wavelength 4L/q over spacing L/(n-1): need q <= (n-1)/2
    qmax = (domain.grid_resolution - 1) // 2
    counts = []
    for fam in _axis_families(domain, boundary):
        counts.append(qmax // 2 + 1 if not fam.mixed else (qmax - 1) // 2 + 1)
        counts[-1] -= fam.first
    return min(counts)


def _boundary_weights(domain: DomainSpec, boundary: BoundarySpec) -> np.ndarray:
    n = domain.grid_resolution
    shape = domain.grid_shape
    bw = np.zeros(shape)
    conds = boundary.resolved(domain)
    if domain.kind == "interval":
        if conds["left"] == NEUMANN:
            bw[0] += 1.0
        if conds["right"] == NEUMANN:
            bw[-1] += 1.0
        return bw.ravel()
    wx = _trapezoid_weights(n, domain.lengths[0])
    wy = _trapezoid_weights(n, domain.lengths[1])
    if conds["left"] == NEUMANN:
        bw[0, :] += wy
    if conds["right"] == NEUMANN:
        bw[-1, :] += wy
    if conds["bottom"] == NEUMANN:
        bw[:, 0] += wx
    if conds["top"] == NEUMANN:
        bw[:, -1] += wx
    return bw.ravel()


def build_basis(domain: DomainSpec, boundary: BoundarySpec, n_modes: int | None = None) -> SpectralBasis:
    """First ``n_modes`` eigenpairs of ``-Laplace`` sorted by ``kappa``.

    Ties are broken by lexicographic mode numbers.
    """
    if n_modes is None:
        n_modes = DEFAULT_MODES[domain.kind]
    if n_modes < 2:
        raise ValueError("n_modes must be >= 2")
    fams = _axis_families(domain, boundary)
    cap = max_modes(domain, boundary)
    ranked = _sorted_modes(fams, n_modes + 1)
    needed = max(m - fam.first + 1 for _, modes in ranked[:n_modes]
                 for fam, m in zip(fams, modes))
    if needed > cap:
        raise ValueError(
            f"n_modes={n_modes} needs {needed} modes per axis, but grid resolution "
            f"{domain.grid_resolution} resolves only {cap} (8 points per wavelength)")

    coords = domain.coordinates()
    values = np.empty((coords[0].size, n_modes))
    grads = [np.empty_like(values) for _ in fams]
    kappa = np.empty(n_modes)
    for j, (k, modes) in enumerate(ranked[:n_modes]):
        kappa[j] = k
        profiles = [fam.evaluate(m, x) for fam, m, x in zip(fams, modes, coords)]
        prod = np.ones_like(coords[0])
        for p, _ in profiles:
            prod = prod * p
        values[:, j] = prod
        for axis in range(len(fams)):
            g = np.ones_like(coords[0])
            for other, (p, dp) in enumerate(profiles):
                g = g * (dp if other == axis else p)
            grads[axis][:, j] = g

    pure_neumann = not boundary.dirichlet_faces(domain)
    mu = 1.0 / (kappa + 1.0) if pure_neumann else 1.0 / kappa
    scale = np.sqrt(mu)
    values *= scale
    for g in grads:
        g *= scale
    return SpectralBasis(
        domain=domain,
        boundary=boundary,
        kappa=kappa,
        mode_numbers=tuple(m for _, m in ranked[:n_modes]),
        values=values,
        gradients=tuple(grads),
        weights=quadrature_weights(domain),
        mu=mu,
        next_kappa=float(ranked[n_modes][0]),
        groups=_group_ties(kappa, TIE_RTOL),
        boundary_weights=_boundary_weights(domain, boundary),
    )


def inner_product(u, v, basis: SpectralBasis) -> float:
    """``H^1_D`` inner product of two coefficient vectors (orthonormal frame)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape != (basis.n_modes,):
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape} (basis has {basis.n_modes})")
    return float(np.dot(u, v))


def project(f, basis: SpectralBasis) -> np.ndarray:
    """Coefficients ``c`` of a grid function: ``f ~ sum_j c_j e_j``.

    For ``f`` in ``H^1_D``, ``(f, e_j)_H = (kappa_j [+1]) int f e_j = int f e_j / mu_j``;
    that identity is what is computed here.
    """
    f = np.asarray(f, dtype=float).reshape(-1)
    return (basis.values.T @ (basis.weights * f)) / basis.mu


def represent_density(w, basis: SpectralBasis) -> np.ndarray:
    """Coefficients of the representer of ``phi -> int w phi`` in ``H^1_D``.

    ``(r, e_j)_H = int w e_j``; for ``w = u`` this is ``A u`` with
    coefficients ``mu_j c_j``.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    return basis.values.T @ (basis.weights * w)


def represent_boundary_density(w, basis: SpectralBasis) -> np.ndarray:
    """Representer of ``phi -> int_{Gamma_N} w phi dGamma``."""
    w = np.asarray(w, dtype=float).reshape(-1)
    return basis.values.T @ (basis.boundary_weights * w)


def evaluate(coeffs, basis: SpectralBasis) -> np.ndarray:
    return basis.evaluate(coeffs)


def multiplicity_groups(basis: SpectralBasis, indices: Iterable[int]) -> list[int]:
    """All indices sharing an eigenvalue with any of ``indices``, sorted."""
    out: set[int] = set()
    for j in indices:
        out.update(basis.group_of(j))
    return sorted(out)
