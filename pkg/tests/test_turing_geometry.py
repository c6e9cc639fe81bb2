from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unilateral_turing.turing_geometry import (
    DiffusionPoint,
    ReactionMatrix,
    RegionLabel,
    TruncationError,
    classify_kinetics,
    classify_point,
    d1_eigenvalues,
    envelope_d1max,
    first_two_kappas,
    hyperbola_d1,
    hyperbola_intersection,
    operator_eigenvalues,
    spectrum_S,
    tail_bound,
)

from unilateral_turing.eigenbasis import BoundarySpec, DomainSpec, build_basis

from oracles import D2_INTERSECTION, EXAMPLE_B, hyperbola

_NEUMANN = build_basis(DomainSpec.interval(), BoundarySpec({"left": "neumann"}), 64)


def test_kinetics_classification():
    assert classify_kinetics(ReactionMatrix(1, -2, 2, -3)) == "activator_inhibitor"
    assert classify_kinetics(ReactionMatrix(1, 2, -2, -3)) == "substrate_depletion"


@pytest.mark.parametrize("entries,problem", [
    ((1, -2, -2, -3), "b12\\*b21"),
    ((-1, -2, 2, -3), "b11"),
    ((1, -2, 2, 0.5), "b22"),
    ((2, -1, 1, -1), "trace"),
    ((3, -1, 1, -2), "det"),
])
def test_matrix_conditions(entries, problem):
    with pytest.raises(ValueError, match=problem):
        ReactionMatrix(*entries)


def test_matrix_properties(B):
    assert B.trace == -2 and B.det == 1 and B.product == -4
    np.testing.assert_array_equal(B.as_array(), [[1, -2], [2, -3]])
    assert ReactionMatrix.from_sequence([1, -2, 2, -3]) == B
    with pytest.raises(ValueError):
        ReactionMatrix.from_sequence([1, 2, 3])


def test_diffusion_point_validation():
    with pytest.raises(ValueError):
        DiffusionPoint(0.0, 1.0)
    with pytest.raises(ValueError):
        DiffusionPoint(1.0, -1.0)


def test_region_label_invariant():
    with pytest.raises(ValueError):
        RegionLabel("envelope")
    with pytest.raises(ValueError):
        RegionLabel("stability", frozenset({1}))
    with pytest.raises(ValueError):
        RegionLabel("unknown")


def test_hyperbola_examples(B, dirichlet):
    assert hyperbola_d1(0, 2.0, B, dirichlet) == pytest.approx(0.2, rel=1e-15)
    assert hyperbola_d1(1, 2.0, B, dirichlet) == pytest.approx(0.25 * (1 - 4 / 11), rel=1e-15)
    assert hyperbola_d1(0, 1e12, B, dirichlet) == pytest.approx(B.b11 / 1.0, rel=1e-9)


def test_hyperbola_errors(B, neumann):
    with pytest.raises(IndexError):
        hyperbola_d1(64, 2.0, B, neumann)
    with pytest.raises(ValueError):
        hyperbola_d1(0, 2.0, B, neumann)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(1, 63))
def test_hyperbola_below_b11_over_kappa(d2, j):
    B = ReactionMatrix(*EXAMPLE_B)
    assert hyperbola_d1(j, d2, B, _NEUMANN) < B.b11 / _NEUMANN.kappa[j]


def test_envelope_dirichlet_example(B, dirichlet):
    d1max, argmax = envelope_d1max(2.0, B, dirichlet)
    assert d1max == pytest.approx(0.2, rel=1e-15)
    assert argmax == (0,)
    values = hyperbola(2.0, EXAMPLE_B, dirichlet.kappa)
    assert d1max == pytest.approx(values.max(), rel=1e-15)


def test_envelope_at_intersection(B, dirichlet):
    _, argmax = envelope_d1max(D2_INTERSECTION, B, dirichlet)
    assert argmax == (0, 1)


def test_envelope_multiplicity(B, square_neumann):
    # at large d2 the envelope sits on kappa = 1, a double eigenvalue of the square
    d1max, argmax = envelope_d1max(10.0, B, square_neumann)
    assert square_neumann.kappa[argmax[0]] == 1
    assert set(square_neumann.group_of(argmax[0])) <= set(argmax)
    assert len(argmax) >= 2


def test_envelope_truncation_guard(B, make_basis):
    b = make_basis("interval", "neumann", 3)
    with pytest.raises(TruncationError):
        envelope_d1max(0.5, B, b)
    with pytest.raises(ValueError):
        envelope_d1max(-1.0, B, b)


def test_tail_bound(B, dirichlet):
    assert tail_bound(B, dirichlet) == pytest.approx((1 + 4 / 3) / 65 ** 2)
    assert tail_bound(B, dirichlet) < envelope_d1max(10.0, B, dirichlet)[0]


@pytest.mark.parametrize("d1,tag", [(0.1, "instability"), (0.5, "stability"),
                                    (0.2, "envelope")])
def test_classify_point(B, dirichlet, d1, tag):
    label = classify_point(DiffusionPoint(d1, 2.0), B, dirichlet)
    assert label.tag == tag
    if tag == "envelope":
        assert label.on_curves == frozenset({0})


def test_constant_mode_eigenvalue(B, neumann):
    lam = operator_eigenvalues(2.0, B, neumann)
    assert lam[0] == pytest.approx(-1 / 3, rel=1e-14)
    assert lam[0] == pytest.approx(-B.det / -B.b22)
    entries = spectrum_S(2.0, B, neumann)
    assert entries[0].d1 is None and entries[0].operator_eigenvalue < 0
    assert np.isnan(d1_eigenvalues(2.0, B, neumann)[0])


def test_operator_eigenvalue_forms(B, neumann, dirichlet):
    k = neumann.kappa
    np.testing.assert_allclose(operator_eigenvalues(2.0, B, neumann),
                               (1 - 4 / (2 * k + 3)) / (k + 1), rtol=1e-14)
    k = dirichlet.kappa
    np.testing.assert_allclose(operator_eigenvalues(2.0, B, dirichlet),
                               (1 - 4 / (2 * k + 3)) / k, rtol=1e-14)


def test_spectrum_matches_hyperbolas(B, dirichlet):
    for e in spectrum_S(2.0, B, dirichlet):
        assert e.d1 == hyperbola_d1(e.j, 2.0, B, dirichlet)


def test_tail_decay_past_argmax(B, dirichlet):
    d1 = d1_eigenvalues(2.0, B, dirichlet)
    j0 = int(np.argmax(d1))
    assert np.all(np.diff(d1[j0:]) < 0)
    assert d1[-1] < 1e-3


def test_intersection_closed_form(B, dirichlet):
    d2i = hyperbola_intersection(*first_two_kappas(dirichlet), B)
    assert d2i == pytest.approx(D2_INTERSECTION, rel=1e-14)
    assert abs(hyperbola_d1(0, d2i, B, dirichlet) - hyperbola_d1(1, d2i, B, dirichlet)) <= 1e-9
    assert hyperbola_intersection(1.0, 1.0, B) is None
    assert hyperbola_intersection(0.0, 1.0, B) is None


def test_envelope_continuity(B, neumann):
    d2 = np.geomspace(0.5, 10, 400)
    vals = np.array([envelope_d1max(x, B, neumann)[0] for x in d2])
    assert np.max(np.abs(np.diff(vals))) < 0.01


def test_envelope_slope_changes_only_at_switches(B, neumann):
    d2 = np.linspace(0.5, 10, 2000)
    env = [envelope_d1max(x, B, neumann) for x in d2]
    vals = np.array([e[0] for e in env])
    args = [e[1] for e in env]
    slope = np.diff(vals) / np.diff(d2)
    curv = np.abs(np.diff(slope))
    h = d2[1] - d2[0]
    # |d^2 d1/d d2^2| < 1 on each hyperbola here, so smooth stretches change slope by < h
    smooth = [c for i, c in enumerate(curv) if args[i] == args[i + 1] == args[i + 2]]
    kinks = [c for i, c in enumerate(curv) if not args[i] == args[i + 1] == args[i + 2]]
    assert max(smooth) < h
    assert kinks and max(kinks) > 10 * h
