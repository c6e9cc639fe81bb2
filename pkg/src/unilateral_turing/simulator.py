"""Spectral time integration of the reaction-diffusion system with unilateral terms.

The state is held as L2 coefficients of ``u`` and ``v`` in the Laplacian
eigenbasis, so boundary conditions are built in.  Diffusion is integrated
exactly; reaction and unilateral terms are explicit on the quadrature grid
(exponential time differencing, second order).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .eigenbasis import SpectralBasis
from .turing_geometry import DiffusionPoint, ReactionMatrix
from .unilateral import INTERIOR, SourceSinkProfile

STABILITY_LIMIT = 0.1
CLASSIFICATIONS = ("grows", "decays", "neutral")


class SimulationError(RuntimeError):
    """The integration produced non-finite values."""


@dataclass(frozen=True)
class ReactionKinetics:
    """Kinetics ``B (u, v) + (n1, n2)`` with polynomial higher-order terms.

    ``n1`` and ``n2`` are sequences of monomials ``(coef, pu, pv)`` standing
    for ``coef * u**pu * v**pv``; each needs total degree at least two.
    ``B`` is usually a :class:`ReactionMatrix`, but any 2x2 array is accepted
    so that degenerate cases such as pure diffusion can be simulated.
    """

    B: ReactionMatrix | np.ndarray
    n1: tuple = ((-1.0, 3, 0),)
    n2: tuple = ()
    epsilon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "n1", _monomials(self.n1, "n1"))
        object.__setattr__(self, "n2", _monomials(self.n2, "n2"))
        m = self.matrix
        if m.shape != (2, 2) or not np.all(np.isfinite(m)):
            raise ValueError("B must be a finite 2x2 matrix")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError("smoothing epsilon must be finite and >= 0")

    @classmethod
    def linear(cls, B, epsilon: float = 1.0) -> ReactionKinetics:
        return cls(B, n1=(), n2=(), epsilon=epsilon)

    @property
    def matrix(self) -> np.ndarray:
        if isinstance(self.B, ReactionMatrix):
            return self.B.as_array()
        return np.asarray(self.B, dtype=float)

    def higher_order(self, u, v) -> tuple[np.ndarray, np.ndarray]:
        return _poly(self.n1, u, v), _poly(self.n2, u, v)

    def reaction(self, u, v) -> tuple[np.ndarray, np.ndarray]:
        """``(f(u, v), g(u, v))`` without unilateral terms."""
        m = self.matrix
        h1, h2 = self.higher_order(u, v)
        return m[0, 0] * u + m[0, 1] * v + h1, m[1, 0] * u + m[1, 1] * v + h2

    def jacobian_at_zero(self, h: float = 1e-6) -> np.ndarray:
        """Central-difference Jacobian of the higher-order part at the origin."""
        jac = np.zeros((2, 2))
        for k, (du, dv) in enumerate(((h, 0.0), (0.0, h))):
            p = np.array(self.higher_order(np.array(du), np.array(dv)), dtype=float)
            q = np.array(self.higher_order(np.array(-du), np.array(-dv)), dtype=float)
            jac[:, k] = (p - q) / (2 * h)
        return jac


def _monomials(terms, name) -> tuple:
    out = []
    for term in terms:
        if len(term) != 3:
            raise ValueError(f"{name}: monomials are (coef, pu, pv) triples")
        coef, pu, pv = float(term[0]), int(term[1]), int(term[2])
        if pu < 0 or pv < 0 or pu != term[1] or pv != term[2]:
            raise ValueError(f"{name}: exponents must be non-negative integers")
        if pu + pv < 2:
            raise ValueError(f"{name}: only terms of degree >= 2 are allowed")
        if not math.isfinite(coef):
            raise ValueError(f"{name}: coefficient must be finite")
        out.append((coef, pu, pv))
    return tuple(out)


def _poly(terms, u, v):
    out = np.zeros(np.broadcast(u, v).shape)
    for coef, pu, pv in terms:
        out = out + coef * u ** pu * v ** pv
    return out


def unilateral_terms(u, profile: SourceSinkProfile, epsilon: float) -> np.ndarray:
    """``s- u-/(1 + eps u-) - s+ u+/(1 + eps u+)`` on the grid."""
    up = np.maximum(u, 0.0)
    um = np.maximum(-u, 0.0)
    return profile.s_minus * um / (1.0 + epsilon * um) - profile.s_plus * up / (1.0 + epsilon * up)


@dataclass(frozen=True, eq=False)
class SimState:
    """L2 coefficients of ``u`` and ``v`` with their grid values."""

    cu: np.ndarray
    cv: np.ndarray
    t: float
    dt: float
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    @classmethod
    def from_coefficients(cls, cu, cv, basis: SpectralBasis, t: float = 0.0,
                          dt: float = 0.01) -> SimState:
        cu = np.array(cu, dtype=float)
        cv = np.array(cv, dtype=float)
        if cu.shape != (basis.n_modes,) or cv.shape != (basis.n_modes,):
            raise ValueError(f"coefficients must have length {basis.n_modes}")
        if not dt > 0:
            raise ValueError("dt must be positive")
        phi = basis.l2_values
        return cls(cu, cv, float(t), float(dt), phi @ cu, phi @ cv)

    @classmethod
    def zero(cls, basis: SpectralBasis, dt: float = 0.01) -> SimState:
        z = np.zeros(basis.n_modes)
        return cls.from_coefficients(z, z, basis, dt=dt)

    def amplitude(self, j: int) -> float:
        return float(math.hypot(self.cu[j], self.cv[j]))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.cu)) and np.all(np.isfinite(self.cv)))


def _phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``exp(z)``, ``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    e = np.exp(z)
    phi1 = np.where(small, 1 + z / 2 + z * z / 6 + z ** 3 / 24, np.expm1(zs) / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z * z / 24 + z ** 3 / 120,
                    (np.expm1(zs) - zs) / (zs * zs))
    return e, phi1, phi2


class _Integrator:
    """Precomputed ETD2RK factors for one (point, dt, basis)."""

    def __init__(self, kinetics: ReactionKinetics, profile: SourceSinkProfile,
                 d: DiffusionPoint, basis: SpectralBasis, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        bound = float(np.linalg.norm(kinetics.matrix, 2)) * dt
        if bound > STABILITY_LIMIT:
            raise ValueError(f"dt={dt:g} too large: ||B|| dt = {bound:.3g} exceeds "
                             f"{STABILITY_LIMIT}")
        if profile.placement != INTERIOR:
            raise ValueError("the simulator supports interior unilateral terms only")
        profile.check(basis)
        self.kinetics = kinetics
        self.profile = profile
        self.basis = basis
        self.dt = dt
        self.phi = basis.l2_values
        self.proj = (basis.weights[:, None] * self.phi).T
        self.B = kinetics.matrix
        self.nonlinear = bool(kinetics.n1 or kinetics.n2) or not profile.is_zero
        self.factors = [_phi_functions(-dk * basis.kappa * dt) for dk in (d.d1, d.d2)]

    def rhs(self, cu, cv):
        B = self.B
        fu = B[0, 0] * cu + B[0, 1] * cv
        fv = B[1, 0] * cu + B[1, 1] * cv
        if self.nonlinear:
            u = self.phi @ cu
            v = self.phi @ cv
            h1, h2 = self.kinetics.higher_order(u, v)
            if not self.profile.is_zero:
                h1 = h1 + unilateral_terms(u, self.profile, self.kinetics.epsilon)
            fu = fu + self.proj @ h1
            fv = fv + self.proj @ h2
        return fu, fv

    def advance(self, cu, cv):
        h = self.dt
        (eu, p1u, p2u), (ev, p1v, p2v) = self.factors
        # overflow is reported by the caller as SimulationError
        with np.errstate(over="ignore", invalid="ignore"):
            nu, nv = self.rhs(cu, cv)
            au = eu * cu + h * p1u * nu
            av = ev * cv + h * p1v * nv
            mu, mv = self.rhs(au, av)
            return au + h * p2u * (mu - nu), av + h * p2v * (mv - nv)


def _checked(state: SimState, cu, cv, basis: SpectralBasis) -> SimState:
    if not (np.all(np.isfinite(cu)) and np.all(np.isfinite(cv))):
        raise SimulationError(f"non-finite values after the step from t={state.t:g} "
                              f"(dt={state.dt:g}); reduce dt or the perturbation size")
    return SimState.from_coefficients(cu, cv, basis, state.t + state.dt, state.dt)


def step(state: SimState, kinetics: ReactionKinetics, profile: SourceSinkProfile,
         d: DiffusionPoint, basis: SpectralBasis) -> SimState:
    """Advance ``state`` by ``state.dt``: exact diffusion, explicit reaction."""
    integ = _Integrator(kinetics, profile, d, basis, state.dt)
    cu, cv = integ.advance(state.cu, state.cv)
    return _checked(state, cu, cv, basis)


def modal_matrix(d: DiffusionPoint, B, kappa: float) -> np.ndarray:
    m = B.as_array() if isinstance(B, ReactionMatrix) else np.asarray(B, dtype=float)
    return m - np.diag([d.d1 * kappa, d.d2 * kappa])


def modal_growth_rate(d: DiffusionPoint, B, kappa: float) -> float:
    """Largest real part of the eigenvalues of the linearised mode-``kappa`` system."""
    return float(np.max(np.linalg.eigvals(modal_matrix(d, B, kappa)).real))


def measure_growth_rate(t, amplitude, lo: float = 1e-10, hi: float = 1e-4,
                        transient: float = 0.3, min_samples: int = 10) -> float:
    """Least-squares slope of ``log amplitude`` against ``t`` in the linear regime.

    Only samples with ``lo <= amplitude <= hi`` are used, and the first
    ``transient`` fraction of those (in time) is dropped so that
    subdominant components have died out.
    """
    t = np.asarray(t, dtype=float)
    a = np.asarray(amplitude, dtype=float)
    if t.shape != a.shape:
        raise ValueError("time and amplitude series differ in length")
    keep = (a >= lo) & (a <= hi)
    tw, aw = t[keep], a[keep]
    if tw.size:
        cut = tw[0] + transient * (tw[-1] - tw[0])
        sel = tw >= cut
        tw, aw = tw[sel], aw[sel]
    if tw.size < min_samples:
        raise ValueError(f"only {tw.size} samples with amplitude in [{lo:g}, {hi:g}] "
                         f"after the transient; need {min_samples}")
    slope, _ = np.polyfit(tw, np.log(aw), 1)
    return float(slope)


@dataclass(frozen=True)
class ExperimentConfig:
    d1: float
    d2: float
    mode: int | None = None
    init: str = "mode"
    amplitude: float = 1e-6
    seed: int = 0
    dt: float = 0.02
    horizon: float = 200.0
    record_every: int = 5
    window: tuple[float, float] = (1e-10, 1e-4)
    transient: float = 0.3
    neutral_tol: float = 1e-3

    def __post_init__(self):
        DiffusionPoint(self.d1, self.d2)
        if self.init not in ("mode", "noise", "zero"):
            raise ValueError("init must be 'mode', 'noise' or 'zero'")
        if not self.amplitude > 0:
            raise ValueError("perturbation amplitude must be positive")
        if not (self.dt > 0 and self.horizon > 0):
            raise ValueError("dt and horizon must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        lo, hi = self.window
        if not 0 < lo < hi:
            raise ValueError("amplitude window needs 0 < lo < hi")
        if not (0 <= self.transient < 1 and self.neutral_tol > 0):
            raise ValueError("transient must lie in [0, 1) and neutral_tol be positive")


@dataclass
class ExperimentReport:
    classification: str
    mode: int
    rate: float
    oracle_rate: float
    final_time: float
    trace: list[tuple[float, int, float]]
    config: dict

    def to_json(self) -> dict:
        return {"config": self.config, "classification": self.classification,
                "mode": self.mode, "rate": self.rate, "oracle_rate": self.oracle_rate,
                "final_time": self.final_time}


def dominant_mode(d: DiffusionPoint, B, basis: SpectralBasis) -> int:
    rates = [modal_growth_rate(d, B, k) for k in basis.kappa]
    return int(np.argmax(rates))


def initial_state(config: ExperimentConfig, basis: SpectralBasis, mode: int) -> SimState:
    cu = np.zeros(basis.n_modes)
    if config.init == "mode":
        cu[mode] = config.amplitude
    elif config.init == "noise":
        rng = np.random.default_rng(config.seed)
        cu = basis.l2_values.T @ (basis.weights * rng.standard_normal(basis.weights.size))
        cu *= config.amplitude / np.linalg.norm(cu)
    return SimState.from_coefficients(cu, np.zeros(basis.n_modes), basis, dt=config.dt)


def run_experiment(config: ExperimentConfig, kinetics: ReactionKinetics,
                   profile: SourceSinkProfile, basis: SpectralBasis,
                   out_dir=None, echo: dict | None = None) -> ExperimentReport:
    """Integrate from a small perturbation and classify the dominant mode's fate.

    The run stops early once the traced amplitude leaves the linear window
    by a factor of ten.  With ``out_dir`` the trace (``trace.csv``) and the
    report (``report.json``) are written there.
    """
    d = DiffusionPoint(config.d1, config.d2)
    mode = dominant_mode(d, kinetics.matrix, basis) if config.mode is None else config.mode
    if not 0 <= mode < basis.n_modes:
        raise ValueError(f"mode {mode} outside basis of {basis.n_modes}")
    integ = _Integrator(kinetics, profile, d, basis, config.dt)
    state = initial_state(config, basis, mode)
    lo, hi = config.window
    n_steps = int(math.ceil(config.horizon / config.dt - 1e-9))
    cu, cv = state.cu, state.cv
    trace = [(0.0, mode, state.amplitude(mode))]
    for k in range(1, n_steps + 1):
        cu, cv = integ.advance(cu, cv)
        if not (np.all(np.isfinite(cu)) and np.all(np.isfinite(cv))):
            raise SimulationError(f"non-finite values at t={k * config.dt:g} "
                                  f"(dt={config.dt:g}); reduce dt or the perturbation size")
        if k % config.record_every == 0 or k == n_steps:
            amp = float(math.hypot(cu[mode], cv[mode]))
            trace.append((k * config.dt, mode, amp))
            if amp > 10 * hi or amp < lo / 10:
                break
    t = np.array([r[0] for r in trace])
    amp = np.array([r[2] for r in trace])
    if not np.any(amp):
        rate = 0.0
    else:
        rate = measure_growth_rate(t, amp, lo, hi, config.transient)
    if rate > config.neutral_tol:
        label = "grows"
    elif rate < -config.neutral_tol:
        label = "decays"
    else:
        label = "neutral"
    report = ExperimentReport(
        classification=label, mode=mode, rate=rate,
        oracle_rate=modal_growth_rate(d, kinetics.matrix, float(basis.kappa[mode])),
        final_time=float(t[-1]), trace=trace,
        config=echo if echo is not None else _jsonable(asdict(config)))
    if out_dir is not None:
        write_outputs(report, out_dir)
    return report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_outputs(report: ExperimentReport, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.csv"
    with trace_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "mode", "amplitude"))
        for t, j, a in report.trace:
            w.writerow((repr(float(t)), j, repr(float(a))))
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    return trace_path, report_path
