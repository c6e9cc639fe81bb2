"""Command-line front end.

Every run is driven by one JSON document (``--config``); ``--set a.b=value``
overrides any leaf, with ``value`` parsed as JSON when possible.  Exit codes:
0 success, 2 invalid configuration, 3 numerical non-convergence.

Source/sink densities may be numbers or expressions over ``x`` and ``y``
using ``+ - * / **``, unary minus, the constants ``pi`` and ``e`` and the
functions ``sin``, ``cos``, ``exp``, ``abs`` and ``max`` (elementwise).
"""

from __future__ import annotations

import argparse
import ast
import copy
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .eigenbasis import BoundarySpec, DomainSpec, SpectralBasis, build_basis, multiplicity_groups
from .simulator import ExperimentConfig, ReactionKinetics, SimulationError, run_experiment
from .sweep import SweepWindow, curve_label, emit_curves, find_c1_c2_intersection, sweep_curves
from .turing_geometry import (
    DiffusionPoint,
    ReactionMatrix,
    TruncationError,
    classify_point,
    d1_eigenvalues,
    envelope_d1max,
    spectrum_S,
)
from .unilateral import (
    MaximizerOptions,
    SourceSinkProfile,
    check_sign_condition,
    maximize_rayleigh,
    tau_bound,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
EXAMPLE_MATRIX = [1.0, -2.0, 2.0, -3.0]


class ConfigError(ValueError):
    """The configuration document is malformed or inconsistent."""


class NonConvergence(RuntimeError):
    """A numerical routine did not reach its tolerance."""


_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_DENSITY = {"type": ["number", "string"]}
_FACE = {"enum": ["dirichlet", "neumann"]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "domain": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["interval", "rectangle"]},
                "lengths": {"type": "array", "items": _POSITIVE, "minItems": 1, "maxItems": 2},
                "grid_resolution": {"type": "integer", "minimum": 3},
            },
        },
        "boundary": {
            "oneOf": [
                _FACE,
                {"type": "object", "additionalProperties": False,
                 "properties": {f: _FACE for f in ("left", "right", "bottom", "top")}},
            ],
        },
        "n_modes": {"type": "integer", "minimum": 2},
        "B": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
        "profile": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "s_minus": _DENSITY, "s_plus": _DENSITY,
                "placement": {"enum": ["interior", "boundary"]},
            },
        },
        "point": {
            "type": "object", "additionalProperties": False,
            "properties": {"d1": _POSITIVE, "d2": _POSITIVE},
        },
        "window": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "r": _POSITIVE, "R": _POSITIVE,
                "n_samples": {"type": "integer", "minimum": 2},
                "spacing": {"enum": ["linear", "log"]},
                "warm_start": {"type": "boolean"},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "maximizer": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n_eigen_starts": {"type": "integer", "minimum": 0},
                "n_random_starts": {"type": "integer", "minimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "n_polish": {"type": "integer", "minimum": 1},
                "residual_tol": _POSITIVE,
            },
        },
        "simulator": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "mode": {"type": ["integer", "null"], "minimum": 0},
                "init": {"enum": ["mode", "noise", "zero"]},
                "amplitude": _POSITIVE,
                "dt": _POSITIVE,
                "horizon": _POSITIVE,
                "record_every": {"type": "integer", "minimum": 1},
                "window": {"type": "array", "items": _POSITIVE, "minItems": 2, "maxItems": 2},
                "transient": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "neutral_tol": _POSITIVE,
                "epsilon": {"type": "number", "minimum": 0},
                "n1": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3}},
                "n2": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3}},
            },
        },
        "tolerances": {
            "type": "object", "additionalProperties": False,
            "properties": {"envelope_rtol": _POSITIVE, "sign_rtol": _POSITIVE},
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "svg": {"type": "boolean"}},
        },
    },
}

DEFAULTS = {
    "domain": {"kind": "interval", "lengths": [math.pi]},
    "boundary": "neumann",
    "B": EXAMPLE_MATRIX,
    "profile": {"s_minus": 0.0, "s_plus": 0.0, "placement": "interior"},
    "window": {"r": 0.5, "R": 10.0, "n_samples": 64, "spacing": "log", "warm_start": True},
    "maximizer": {},
    "simulator": {},
    "tolerances": {"envelope_rtol": 1e-9, "sign_rtol": 1e-8},
    "seed": 0,
    "output": {"dir": "out", "svg": False},
}


# -- expressions -------------------------------------------------------------

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


def evaluate_expression(text: str, coords: dict[str, np.ndarray]) -> np.ndarray:
    """Evaluate a density expression on grid coordinates without ``eval``."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and type(node.value) in (int, float):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in coords:
                return coords[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = ev(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            args = [ev(a) for a in node.args]
            if node.func.id == "max" and len(args) >= 2:
                out = args[0]
                for a in args[1:]:
                    out = np.maximum(out, a)
                return out
            if node.func.id in _FUNCS and len(args) == 1:
                return _FUNCS[node.func.id](args[0])
            raise ConfigError(f"unsupported call {node.func.id!r} in {text!r}")
        raise ConfigError(f"unsupported syntax {type(node).__name__} in {text!r}")

    n = next(iter(coords.values())).size
    with np.errstate(all="ignore"):
        out = np.broadcast_to(np.asarray(ev(tree), dtype=float), (n,)).copy()
    if not np.all(np.isfinite(out)):
        raise ConfigError(f"expression {text!r} is not finite on the grid")
    return out


# -- configuration -----------------------------------------------------------

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(doc: dict, assignment: str) -> None:
    """Apply ``a.b.c=value`` in place; ``value`` is JSON if it parses."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        child = node.get(p)
        if not isinstance(child, dict):
            child = {}
            node[p] = child
        node = child
    node[parts[-1]] = value


@dataclass
class RunConfig:
    """Validated configuration and the objects built from it."""

    document: dict
    domain: DomainSpec
    boundary: BoundarySpec
    basis: SpectralBasis
    B: ReactionMatrix
    profile: SourceSinkProfile

    @property
    def point(self) -> DiffusionPoint:
        p = self.document.get("point", {})
        if "d1" not in p or "d2" not in p:
            raise ConfigError("this command needs point.d1 and point.d2")
        return DiffusionPoint(float(p["d1"]), float(p["d2"]))

    @property
    def d2(self) -> float:
        p = self.document.get("point", {})
        if "d2" not in p:
            raise ConfigError("this command needs point.d2")
        return float(p["d2"])

    @property
    def envelope_rtol(self) -> float:
        return float(self.document["tolerances"]["envelope_rtol"])

    @property
    def out_dir(self) -> Path:
        return Path(self.document["output"]["dir"])

    def maximizer_options(self) -> MaximizerOptions:
        return MaximizerOptions(seed=int(self.document["seed"]), **self.document["maximizer"])

    @classmethod
    def from_document(cls, raw: dict) -> RunConfig:
        doc = _merge(DEFAULTS, raw)
        try:
            jsonschema.validate(doc, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config error at {where}: {exc.message}") from None
        try:
            dom = doc["domain"]
            lengths = dom.get("lengths", [math.pi])
            if dom.get("kind", "interval") == "interval":
                if len(lengths) != 1:
                    raise ConfigError("an interval takes exactly one length")
                domain = DomainSpec.interval(lengths[0], dom.get("grid_resolution"))
            else:
                if len(lengths) != 2:
                    raise ConfigError("a rectangle takes two lengths")
                domain = DomainSpec.rectangle(lengths[0], lengths[1], dom.get("grid_resolution"))
            bnd = doc["boundary"]
            boundary = (BoundarySpec.uniform(bnd, domain) if isinstance(bnd, str)
                        else BoundarySpec(bnd))
            unknown = set(boundary.faces) - set(domain.faces)
            if unknown:
                raise ConfigError(f"faces {sorted(unknown)} do not exist on a {domain.kind}")
            basis = build_basis(domain, boundary, doc.get("n_modes"))
            B = ReactionMatrix.from_sequence(doc["B"])
            prof = doc["profile"]
            names = ("x", "y")[:domain.ndim]
            coords = dict(zip(names, domain.coordinates()))
            dens = []
            for key in ("s_minus", "s_plus"):
                v = prof.get(key, 0.0)
                dens.append(evaluate_expression(v, coords) if isinstance(v, str)
                            else np.full(basis.values.shape[0], float(v)))
            profile = SourceSinkProfile(dens[0], dens[1], prof.get("placement", "interior"))
            profile.check(basis)
            window = doc["window"]
            if not window["r"] < window["R"]:
                raise ConfigError("window.r must be smaller than window.R")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cls(doc, domain, boundary, basis, B, profile)


def load_config(path: str | None, overrides: list[str], seed: int | None = None,
                out: str | None = None, svg: bool = False) -> RunConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("the config document must be a JSON object")
    for item in overrides:
        apply_override(raw, item)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw.setdefault("output", {})["dir"] = out
    if svg:
        raw.setdefault("output", {})["svg"] = True
    return RunConfig.from_document(raw)


# -- commands ----------------------------------------------------------------

def _labels(indices, basis) -> str:
    return ", ".join(f"C_{curve_label(j, basis)}" for j in indices)


def _write_json(cfg: RunConfig, name: str, payload: dict) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / name
    path.write_text(json.dumps({"config": cfg.document, **payload}, indent=2,
                               sort_keys=True) + "\n")
    return path


def _maximize(cfg: RunConfig, d2: float):
    res = maximize_rayleigh(d2, cfg.profile, cfg.B, cfg.basis, cfg.maximizer_options())
    if not res.converged:
        raise NonConvergence(f"maximizer did not converge at d2={d2:g} "
                             f"(residual {res.residual:.2e})")
    return res


def analyze(cfg: RunConfig) -> dict:
    """Locate the configured point relative to both critical curves."""
    p = cfg.point
    basis, B = cfg.basis, cfg.B
    rtol = cfg.envelope_rtol
    label = classify_point(p, B, basis, rtol)
    d1max, argmax = envelope_d1max(p.d2, B, basis, rtol)
    values = d1_eigenvalues(p.d2, B, basis)
    finite = np.flatnonzero(np.isfinite(values))
    dist = np.abs(values[finite] - p.d1)
    near = finite[dist <= dist.min() * (1 + 1e-9) + 1e-15]
    on_linear = bool(np.any(dist <= rtol * max(abs(p.d1), 1.0)))
    sign = check_sign_condition(None, cfg.profile, basis,
                                group=multiplicity_groups(basis, argmax),
                                tol_rel=float(cfg.document["tolerances"]["sign_rtol"]))
    res = _maximize(cfg, p.d2)
    beta = res.value if res.existence else None
    gap = d1max - beta if beta is not None else None
    if label.tag == "envelope":
        verdict = f"envelope, {_labels(sorted(label.on_curves), basis)}"
    else:
        verdict = label.tag
    notes = []
    if on_linear:
        notes.append("critical point of the linear problem")
    if beta is not None and beta < p.d1 < d1max:
        notes.append("inside exclusion strip: no critical/bifurcation points")
    elif beta is not None and abs(p.d1 - beta) <= rtol * abs(beta) and not cfg.profile.is_zero:
        notes.append("on the unilateral critical curve")
    return {
        "d1": p.d1, "d2": p.d2, "region": label.tag, "verdict": verdict, "notes": notes,
        "nearest_hyperbolas": [f"C_{curve_label(int(j), basis)}" for j in near],
        "d1_max": d1max, "argmax": [f"C_{curve_label(j, basis)}" for j in argmax],
        "d1_max_beta": beta, "gap": gap, "residual": res.residual,
        "sign_condition": "violated" if sign.violated else "satisfied",
        "tau_bound": tau_bound(p.d2, B, basis),
    }


def cmd_analyze(cfg: RunConfig) -> int:
    rep = analyze(cfg)
    line = rep["verdict"]
    if rep["notes"]:
        line += "; " + "; ".join(rep["notes"])
    print(line)
    print(f"point: d1={rep['d1']:.10g} d2={rep['d2']:.10g}")
    print(f"nearest hyperbolas: {', '.join(rep['nearest_hyperbolas'])}")
    print(f"d1_max: {rep['d1_max']:.12g} ({', '.join(rep['argmax'])})")
    if rep["d1_max_beta"] is None:
        print("d1_max_beta: none (no admissible direction)")
    else:
        print(f"d1_max_beta: {rep['d1_max_beta']:.12g}")
        print(f"gap: {rep['gap']:.6e}")
    print(f"sign condition: {rep['sign_condition']}")
    print(f"tau bound: {rep['tau_bound']:.12g}")
    _write_json(cfg, "analyze.json", rep)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    w = cfg.document["window"]
    window = SweepWindow(float(w["r"]), float(w["R"]), int(w["n_samples"]), w["spacing"])
    result = sweep_curves(window, cfg.B, cfg.basis, cfg.profile, cfg.maximizer_options(),
                          warm_start=bool(w.get("warm_start", True)), workers=w.get("workers"))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    svg = cfg.out_dir / "curves.svg" if cfg.document["output"]["svg"] else None
    path = emit_curves(result.samples, cfg.out_dir / "curves.csv", cfg.basis, svg)
    try:
        d2i = find_c1_c2_intersection(cfg.B, cfg.basis)
    except ValueError:
        d2i = None
    gaps = result.gaps
    print(f"wrote {path} ({len(result)} samples)")
    if svg is not None:
        print(f"wrote {svg}")
    if np.any(np.isfinite(gaps)):
        print(f"gap range: [{np.nanmin(gaps):.6e}, {np.nanmax(gaps):.6e}]")
    eps = result.epsilon_estimate
    print(f"epsilon estimate: {'none' if eps is None else f'{eps:.6e}'}")
    if d2i is not None:
        print(f"first hyperbola crossing: d2 = {d2i:.12g}")
    failed = [s.d2 for s in result.samples if not s.converged]
    if failed:
        print(f"non-converged samples at d2 = {', '.join(f'{v:.6g}' for v in failed)}",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    sim = dict(cfg.document["simulator"])
    kin = ReactionKinetics(cfg.B,
                           n1=tuple(tuple(t) for t in sim.pop("n1", [[-1.0, 3, 0]])),
                           n2=tuple(tuple(t) for t in sim.pop("n2", [])),
                           epsilon=float(sim.pop("epsilon", 1.0)))
    if "window" in sim:
        sim["window"] = tuple(sim["window"])
    p = cfg.point
    try:
        exp_cfg = ExperimentConfig(d1=p.d1, d2=p.d2, seed=int(cfg.document["seed"]), **sim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        rep = run_experiment(exp_cfg, kin, cfg.profile, cfg.basis, cfg.out_dir,
                             echo=cfg.document)
    except SimulationError as exc:
        raise NonConvergence(str(exc)) from None
    except ValueError as exc:
        if "samples with amplitude" in str(exc):
            raise NonConvergence(str(exc)) from None
        raise ConfigError(str(exc)) from None
    print(f"classification: {rep.classification}")
    print(f"mode: {rep.mode} (C_{curve_label(rep.mode, cfg.basis)})")
    print(f"rate: {rep.rate:.6e}")
    print(f"linear oracle rate: {rep.oracle_rate:.6e}")
    print(f"wrote {cfg.out_dir / 'trace.csv'} and {cfg.out_dir / 'report.json'}")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig) -> int:
    entries = spectrum_S(cfg.d2, cfg.B, cfg.basis)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "spectrum.csv"
    lines = ["j,curve,kappa,d1,operator_eigenvalue"]
    for e in entries:
        d1 = "none" if e.d1 is None else repr(e.d1)
        lines.append(f"{e.j},C_{curve_label(e.j, cfg.basis)},{e.kappa!r},{d1},"
                     f"{e.operator_eigenvalue!r}")
    path.write_text("\n".join(lines) + "\n")
    print(f"{'j':>4} {'curve':>6} {'kappa':>12} {'d1':>16} {'lambda':>16}")
    for e in entries:
        d1 = "-" if e.d1 is None else f"{e.d1:.10g}"
        print(f"{e.j:>4} {'C_' + str(curve_label(e.j, cfg.basis)):>6} {e.kappa:>12.6g} "
              f"{d1:>16} {e.operator_eigenvalue:>16.10g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_check_condition(cfg: RunConfig) -> int:
    d2 = cfg.d2
    d1max, argmax = envelope_d1max(d2, cfg.B, cfg.basis, cfg.envelope_rtol)
    group = multiplicity_groups(cfg.basis, argmax)
    sign = check_sign_condition(None, cfg.profile, cfg.basis, group=group,
                                tol_rel=float(cfg.document["tolerances"]["sign_rtol"]))
    tau = tau_bound(d2, cfg.B, cfg.basis)
    s_minus, s_plus = cfg.profile.sup_norms
    print(f"d2: {d2:.10g}")
    print(f"envelope modes: {_labels(argmax, cfg.basis)} (d1_max = {d1max:.12g})")
    print(f"sign condition: {'violated' if sign.violated else 'satisfied'} "
          f"(min norm {sign.norm:.3e})")
    print(f"tau bound: {tau:.12g}; sup s- = {s_minus:.6g}, sup s+ = {s_plus:.6g}")
    _write_json(cfg, "check_condition.json", {
        "d2": d2, "envelope_modes": [curve_label(j, cfg.basis) for j in argmax],
        "sign_condition": "violated" if sign.violated else "satisfied",
        "min_norm": sign.norm, "tau_bound": tau})
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "sweep": cmd_sweep, "simulate": cmd_simulate,
            "spectrum": cmd_spectrum, "check-condition": cmd_check_condition}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unilateral-turing",
        description="Critical curves of reaction-diffusion systems with unilateral terms.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration document")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config leaf by dotted path (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--svg", action="store_true", help="also write an SVG plot (sweep)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set, args.seed, args.out, args.svg)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TruncationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
