"""Classical and unilateral critical curves over a ``d2`` window."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .eigenbasis import SpectralBasis, multiplicity_groups
from .turing_geometry import (
    ReactionMatrix,
    envelope_d1max,
    first_two_kappas,
    hyperbola_intersection,
)
from .unilateral import (
    MaximizerOptions,
    SourceSinkProfile,
    check_sign_condition,
    maximize_rayleigh,
)

CSV_HEADER = ("d2", "d1_max", "d1_max_beta", "gap", "argmax", "residual", "sign_ok")


@dataclass(frozen=True)
class SweepWindow:
    r: float
    R: float
    n_samples: int = 64
    spacing: str = "log"

    def __post_init__(self):
        if not (0 < self.r < self.R):
            raise ValueError("sweep window needs 0 < r < R")
        if self.n_samples < 2:
            raise ValueError("sweep window needs at least 2 samples")
        if self.spacing not in ("linear", "log"):
            raise ValueError("spacing must be 'linear' or 'log'")

    def points(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.r, self.R, self.n_samples)
        return np.linspace(self.r, self.R, self.n_samples)


@dataclass(frozen=True)
class CriticalCurveSample:
    d2: float
    d1_max: float
    d1_max_beta: float | None
    gap: float | None
    argmax_indices: tuple[int, ...]
    residual: float
    sign_condition_ok: bool
    converged: bool = True


@dataclass
class SweepResult:
    samples: list[CriticalCurveSample]
    epsilon_estimate: float | None
    maximizers: list[np.ndarray]

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([np.nan if s.gap is None else s.gap for s in self.samples])

    @property
    def min_gap_at_left_edge(self) -> bool:
        """The strip width shrinks towards small ``d2``; flag a minimum at ``r``."""
        g = self.gaps
        return bool(np.isfinite(g[0]) and np.nanargmin(g) == 0)


def curve_label(j: int, basis: SpectralBasis) -> int:
    """Hyperbola number ``C_n`` for basis index ``j`` (Dirichlet modes count from 1)."""
    return j if basis.pure_neumann else j + 1


def _sample(d2: float, B: ReactionMatrix, basis: SpectralBasis, profile: SourceSinkProfile,
            opts: MaximizerOptions, warm) -> tuple[CriticalCurveSample, np.ndarray]:
    d1max, argmax = envelope_d1max(d2, B, basis)
    group = multiplicity_groups(basis, argmax)
    sign = check_sign_condition(None, profile, basis, group=group)
    res = maximize_rayleigh(d2, profile, B, basis, opts, warm_starts=warm)
    if res.existence:
        beta_val = res.value
        gap = d1max - beta_val
    else:
        beta_val = gap = None
    sample = CriticalCurveSample(
        d2=float(d2), d1_max=float(d1max), d1_max_beta=beta_val, gap=gap,
        argmax_indices=tuple(argmax), residual=res.residual,
        sign_condition_ok=not sign.violated, converged=res.converged)
    return sample, res.maximizer.coeffs


def sweep_curves(window: SweepWindow, B: ReactionMatrix, basis: SpectralBasis,
                 profile: SourceSinkProfile, opts: MaximizerOptions | None = None,
                 warm_start: bool = True, workers: int | None = None) -> SweepResult:
    """Envelope and unilateral maximal eigenvalue at every ``d2`` of the window.

    With ``warm_start`` the previous maximizer seeds the next sample and the
    sweep runs in order; otherwise samples are independent and may run on
    ``workers`` threads.
    """
    opts = opts or MaximizerOptions()
    d2s = window.points()
    if warm_start:
        out = []
        prev = None
        for d2 in d2s:
            sample, c = _sample(d2, B, basis, profile, opts, [prev] if prev is not None else None)
            out.append((sample, c))
            prev = c
    else:
        with ThreadPoolExecutor(max_workers=workers or 1) as pool:
            out = list(pool.map(lambda d2: _sample(d2, B, basis, profile, opts, None), d2s))
    samples = [s for s, _ in out]
    ok = [s.gap for s in samples if s.sign_condition_ok and s.gap is not None]
    eps = float(min(ok)) if ok else None
    return SweepResult(samples, eps, [c for _, c in out])


def _outer_scale(slopes: np.ndarray, idx) -> float | None:
    vals = [abs(slopes[k]) for k in idx if 0 <= k < slopes.size and np.isfinite(slopes[k])]
    return max(vals) if vals else None


def gap_jumps(samples, factor: float = 10.0, floor: float = 1e-7) -> list[int]:
    """Indices where the gap curve jumps instead of bending.

    Two patterns are flagged, comparing signed slopes between adjacent
    samples that share the envelope argmax:

    * a step: the slope on ``[d2_i, d2_{i+1}]`` exceeds ``factor`` times the
      steeper of its immediate neighbours (reported as ``i``);
    * a spike: the slopes into and out of sample ``i`` have opposite signs
      and both exceed ``factor`` times the slopes just outside that pair
      (reported as ``i``).

    Kinks where the unilateral maximizer changes branch keep at least one
    neighbouring slope comparable and are not flagged.  Changes below
    ``floor`` are ignored.
    """
    s = list(samples)
    n = len(s) - 1
    slopes = np.full(max(n, 0), np.nan)
    for i in range(n):
        a, b = s[i], s[i + 1]
        if a.gap is not None and b.gap is not None and a.argmax_indices == b.argmax_indices:
            slopes[i] = (b.gap - a.gap) / (b.d2 - a.d2)

    def big(i):
        return abs(s[i + 1].gap - s[i].gap) > floor

    flagged = set()
    for i in range(n):
        if not np.isfinite(slopes[i]) or not big(i):
            continue
        scale = _outer_scale(slopes, (i - 1, i + 1))
        if scale is not None and abs(slopes[i]) > factor * scale:
            flagged.add(i)
    for i in range(1, n):
        a, b = slopes[i - 1], slopes[i]
        if not (np.isfinite(a) and np.isfinite(b)) or a * b >= 0:
            continue
        if not (big(i - 1) and big(i)):
            continue
        scale = _outer_scale(slopes, (i - 2, i + 1))
        if scale is not None and min(abs(a), abs(b)) > factor * scale:
            flagged.add(i)
    return sorted(flagged)


def find_c1_c2_intersection(B: ReactionMatrix, basis: SpectralBasis) -> float | None:
    """``d2`` of the crossing of the first two distinct hyperbolas, if in the quadrant."""
    k1, k2 = first_two_kappas(basis)
    return hyperbola_intersection(k1, k2, B)


def _fmt(x) -> str:
    if x is None:
        return "none"
    return repr(float(x))


def emit_curves(samples, path, basis: SpectralBasis | None = None,
                svg_path=None) -> Path:
    """Write the sweep as CSV (and optionally an SVG with both curves)."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples to emit")
    path = Path(path)
    label = (lambda j: curve_label(j, basis)) if basis is not None else (lambda j: j)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for s in samples:
                w.writerow([_fmt(s.d2), _fmt(s.d1_max), _fmt(s.d1_max_beta), _fmt(s.gap),
                            ";".join(str(label(j)) for j in s.argmax_indices),
                            _fmt(s.residual), "true" if s.sign_condition_ok else "false"])
    except OSError as exc:
        raise OSError(f"cannot write curve file {path}: {exc}") from exc
    if svg_path is not None:
        Path(svg_path).write_text(render_svg(samples))
    return path


def read_curves(path) -> list[dict]:
    """Parse an emitted CSV back into typed records."""
    def num(v):
        return None if v == "none" else float(v)

    rows = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "d2": float(row["d2"]), "d1_max": float(row["d1_max"]),
                "d1_max_beta": num(row["d1_max_beta"]), "gap": num(row["gap"]),
                "argmax": tuple(int(v) for v in row["argmax"].split(";") if v),
                "residual": float(row["residual"]), "sign_ok": row["sign_ok"] == "true",
            })
    return rows


def render_svg(samples, width: int = 640, height: int = 480) -> str:
    """Envelope (red) and unilateral curve (blue); d2 horizontal, d1 vertical."""
    margin = 60
    d2 = np.array([s.d2 for s in samples])
    top = np.array([s.d1_max for s in samples])
    uni = [(s.d2, s.d1_max_beta) for s in samples if s.d1_max_beta is not None]
    ys = list(top) + [v for _, v in uni]
    y0, y1 = min(0.0, min(ys)), max(ys) * 1.05
    x0, x1 = float(d2.min()), float(d2.max())

    def px(x, y):
        X = margin + (x - x0) / (x1 - x0) * (width - 2 * margin)
        Y = height - margin - (y - y0) / (y1 - y0 or 1.0) * (height - 2 * margin)
        return f"{X:.2f},{Y:.2f}"

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle">d2</text>',
        f'<text x="18" y="{height / 2}" text-anchor="middle">d1</text>',
        '<polyline fill="none" stroke="red" stroke-width="2" points="'
        + " ".join(px(x, y) for x, y in zip(d2, top)) + '"/>',
    ]
    if uni:
        lines.append('<polyline fill="none" stroke="blue" stroke-width="2" points="'
                     + " ".join(px(x, y) for x, y in uni) + '"/>')
    for x, lab in ((x0, x0), (x1, x1)):
        lines.append(f'<text x="{px(x, y0).split(",")[0]}" y="{height - margin + 18}" '
                     f'text-anchor="middle">{lab:.3g}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
