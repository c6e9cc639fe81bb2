from __future__ import annotations

import json

import numpy as np
import pytest

from unilateral_turing.cli import (
    ConfigError,
    RunConfig,
    apply_override,
    evaluate_expression,
    main,
)
from unilateral_turing.sweep import read_curves

from oracles import D2_INTERSECTION


def _config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_dirichlet_stability(tmp_path, capsys):
    code, out, _ = _run(capsys, "analyze", "--set", "boundary=\"dirichlet\"",
                        "--set", "point={\"d1\": 0.5, \"d2\": 2}", "--out", str(tmp_path))
    assert code == 0
    assert out.splitlines()[0] == "stability"
    rep = json.loads((tmp_path / "analyze.json").read_text())
    assert rep["region"] == "stability"
    assert rep["d1_max"] == pytest.approx(0.2, rel=1e-12)


def test_analyze_on_envelope(tmp_path, capsys):
    code, out, _ = _run(capsys, "analyze", "--set", "boundary=\"dirichlet\"",
                        "--set", "point.d1=0.2", "--set", "point.d2=2", "--out", str(tmp_path))
    assert code == 0
    first = out.splitlines()[0]
    assert first.startswith("envelope, C_1")
    assert "critical point of the linear problem" in first
    assert "nearest hyperbolas: C_1" in out


def test_analyze_inside_strip(tmp_path, capsys):
    code, out, _ = _run(capsys, "analyze", "--set", "profile.s_plus=0.1",
                        "--set", "point.d1=0.19", "--set", "point.d2=2", "--out", str(tmp_path))
    assert code == 0
    assert "inside exclusion strip: no critical/bifurcation points" in out
    rep = json.loads((tmp_path / "analyze.json").read_text())
    assert rep["d1_max_beta"] < 0.19 < rep["d1_max"]
    assert rep["sign_condition"] == "satisfied"


@pytest.mark.parametrize("doc", [
    {"B": [1, -2, -2, -3]},
    {"B": [1, -2, 2]},
    {"domain": {"kind": "disk"}},
    {"boundary": {"north": "neumann"}},
    {"boundary": {"top": "dirichlet"}},
    {"window": {"r": 5.0, "R": 1.0}},
    {"profile": {"s_plus": "import os"}},
    {"profile": {"s_plus": "1/x"}},
    {"unknown": 1},
    {"point": {"d1": -1.0, "d2": 1.0}},
])
def test_bad_config_exit_2(tmp_path, capsys, doc):
    doc = {"point": {"d1": 0.1, "d2": 2.0}, **doc}
    code, _, err = _run(capsys, "analyze", "--config", _config(tmp_path, doc),
                        "--out", str(tmp_path))
    assert code == 2
    assert err.startswith("error:")


def test_missing_and_malformed_config(tmp_path, capsys):
    assert _run(capsys, "spectrum", "--config", str(tmp_path / "none.json"))[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(capsys, "spectrum", "--config", str(bad))[0] == 2
    assert _run(capsys, "spectrum", "--out", str(tmp_path))[0] == 2  # no point.d2


def test_truncation_exit_2(tmp_path, capsys):
    code, _, err = _run(capsys, "spectrum", "--set", "n_modes=3", "--set", "point.d2=0.5",
                        "--out", str(tmp_path))
    assert code == 0
    code, _, err = _run(capsys, "check-condition", "--set", "n_modes=3",
                        "--set", "point.d2=0.5", "--out", str(tmp_path))
    assert code == 2 and "error" in err


def test_nonconvergence_exit_3(tmp_path, capsys):
    code, _, err = _run(capsys, "analyze", "--set", "profile.s_plus=0.1",
                        "--set", "point.d1=0.1", "--set", "point.d2=2",
                        "--set", "maximizer.max_iter=1", "--set", "maximizer.residual_tol=1e-20",
                        "--out", str(tmp_path))
    assert code == 3 and "did not converge" in err
    code, _, err = _run(capsys, "simulate", "--set", "point.d1=0.1", "--set", "point.d2=2",
                        "--set", "simulator.horizon=0.5", "--out", str(tmp_path))
    assert code == 3


def test_sweep_writes_csv(tmp_path, capsys):
    code, out, _ = _run(capsys, "sweep", "--set", "profile.s_plus=0.1",
                        "--set", "window.n_samples=6", "--out", str(tmp_path), "--svg")
    assert code == 0
    rows = read_curves(tmp_path / "curves.csv")
    assert len(rows) == 6
    assert all(r["sign_ok"] for r in rows)
    assert all(r["gap"] > 0 for r in rows)
    assert (tmp_path / "curves.svg").exists()
    assert "epsilon estimate" in out


def test_sweep_without_unilateral_terms(tmp_path, capsys):
    code, _, _ = _run(capsys, "sweep", "--set", "window.n_samples=6", "--out", str(tmp_path))
    assert code == 0
    assert max(abs(r["gap"]) for r in read_curves(tmp_path / "curves.csv")) <= 1e-9


def test_dirichlet_sweep_across_intersection(tmp_path, capsys):
    code, out, _ = _run(capsys, "sweep", "--set", "boundary=\"dirichlet\"",
                        "--set", "profile.s_minus=1", "--set", "window.r=1",
                        "--set", "window.R=3", "--set", "window.n_samples=5",
                        "--set", "window.spacing=\"linear\"", "--out", str(tmp_path))
    assert code == 0
    assert f"d2 = {D2_INTERSECTION:.12g}" in out
    for r in read_curves(tmp_path / "curves.csv"):
        if r["d2"] > D2_INTERSECTION:
            assert abs(r["gap"]) <= 1e-8 and not r["sign_ok"]
        else:
            assert r["gap"] > 0


@pytest.mark.parametrize("d1,label", [(0.1, "grows"), (0.3, "decays")])
def test_simulate_classification(tmp_path, capsys, d1, label):
    code, out, _ = _run(capsys, "simulate", "--set", f"point.d1={d1}", "--set", "point.d2=2",
                        "--set", "n_modes=24", "--out", str(tmp_path))
    assert code == 0
    assert out.splitlines()[0] == f"classification: {label}"
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["classification"] == label
    assert rep["config"]["point"] == {"d1": d1, "d2": 2}
    assert (tmp_path / "trace.csv").read_text().startswith("t,mode,amplitude\n")


def test_simulate_zero_is_neutral(tmp_path, capsys):
    code, out, _ = _run(capsys, "simulate", "--set", "point.d1=0.1", "--set", "point.d2=2",
                        "--set", "simulator.init=\"zero\"", "--set", "simulator.horizon=2",
                        "--set", "n_modes=16", "--out", str(tmp_path))
    assert code == 0 and "neutral" in out


def test_deterministic_outputs(tmp_path, capsys):
    args = ["--set", "profile.s_plus=0.1", "--set", "window.n_samples=4",
            "--set", "point.d1=0.1", "--set", "point.d2=2", "--set", "simulator.init=\"noise\"",
            "--set", "n_modes=16", "--seed", "7"]
    names = ("curves.csv", "trace.csv", "report.json")
    runs = []
    for _ in range(2):
        assert main(["sweep", *args, "--out", str(tmp_path)]) == 0
        assert main(["simulate", *args, "--out", str(tmp_path)]) == 0
        runs.append([(tmp_path / n).read_bytes() for n in names])
    capsys.readouterr()
    assert runs[0] == runs[1]


def test_spectrum_and_check_condition(tmp_path, capsys):
    code, out, _ = _run(capsys, "spectrum", "--set", "boundary=\"dirichlet\"",
                        "--set", "point.d2=2", "--out", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "j,curve,kappa,d1,operator_eigenvalue"
    j, curve, kappa, d1, _ = lines[1].split(",")
    assert (j, curve, float(kappa)) == ("0", "C_1", 1.0)
    assert float(d1) == pytest.approx(0.2, rel=1e-14)
    code, out, _ = _run(capsys, "check-condition", "--set", "boundary=\"dirichlet\"",
                        "--set", "profile.s_minus=1", "--set", "point.d2=2.5",
                        "--out", str(tmp_path))
    assert code == 0
    rep = json.loads((tmp_path / "check_condition.json").read_text())
    assert rep["sign_condition"] == "violated"
    assert rep["envelope_modes"] == [1]


def test_expression_evaluator():
    x = np.linspace(0, 1, 5)
    np.testing.assert_allclose(evaluate_expression("max(sin(pi*x), 0.5) + -x**2",
                                                   {"x": x}),
                               np.maximum(np.sin(np.pi * x), 0.5) - x ** 2)
    np.testing.assert_allclose(evaluate_expression("2", {"x": x}), 2.0)
    for bad in ("__import__('os')", "x.real", "open('f')", "lambda: 1", "x if x else 1",
                "max(x)", "sin(x, x)", "'a'", "(", "z"):
        with pytest.raises(ConfigError):
            evaluate_expression(bad, {"x": x})


def test_overrides():
    doc: dict = {"a": {"b": 1}}
    apply_override(doc, "a.c.d=[1, 2]")
    apply_override(doc, "a.b=text")
    apply_override(doc, "e=0.5")
    assert doc == {"a": {"b": "text", "c": {"d": [1, 2]}}, "e": 0.5}
    for bad in ("novalue", "=3"):
        with pytest.raises(ConfigError):
            apply_override(doc, bad)


def test_rectangle_config():
    cfg = RunConfig.from_document({"domain": {"kind": "rectangle", "lengths": [3.0, 2.0]},
                                   "n_modes": 12, "profile": {"s_plus": "x*y"}})
    assert cfg.basis.n_modes == 12
    assert cfg.profile.s_plus.max() > 0
    with pytest.raises(ConfigError):
        RunConfig.from_document({"domain": {"kind": "rectangle", "lengths": [3.0]}})
