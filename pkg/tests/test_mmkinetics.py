"""Tests for the slow-fast kinetics backend."""

import numpy as np
import pytest

from efree.efcore import SolverConfig, implicit_flow
from efree.mmkinetics import (Frame, MMParams, fiber_base_numeric,
                              fiber_base_x, mm_reference_flow, mm_system,
                              mm_vector_field, slow_manifold_graph)


def test_params_validation():
    with pytest.raises(ValueError):
        MMParams(kappa=0.0)
    with pytest.raises(ValueError):
        MMParams(eps=-0.1)
    with pytest.raises(ValueError):
        MMParams(expansion_order=4)


def test_frame_validation_and_classmethods():
    with pytest.raises(ValueError):
        Frame(np.array([[1.0, 2.0], [2.0, 4.0]]))
    assert Frame.identity().is_identity
    rot = Frame.rotated()
    assert not rot.is_identity
    assert np.allclose(rot.rotation @ rot.inverse, np.eye(2))


def test_vector_field_values():
    p = MMParams()
    u = np.array([0.4, 0.3])
    f = mm_vector_field(p, Frame.identity(), u)
    assert np.isclose(f[0], p.eps * (-0.4 + (0.4 + 1.0 - 0.5) * 0.3))
    assert np.isclose(f[1], 0.4 - (0.4 + 1.0) * 0.3)


def test_rotated_field_is_conjugation():
    p = MMParams()
    frame = Frame.rotated()
    u = np.array([0.4, 0.3])
    direct = mm_vector_field(p, Frame.identity(), u)
    conj = frame.inverse @ mm_vector_field(p, frame, frame.rotation @ u)
    assert np.allclose(direct, conj, atol=1e-14)


def test_graph_order_zero_is_critical_manifold():
    p = MMParams(expansion_order=0)
    for x in (0.2, 0.9, 1.7):
        assert np.isclose(slow_manifold_graph(p, x), x / (x + p.kappa))


def test_graph_domain_boundary():
    with pytest.raises(ValueError):
        slow_manifold_graph(MMParams(), -1.0)
    with pytest.raises(ValueError):
        fiber_base_x(MMParams(), (-1.5, 0.5))


def test_graph_invariance_residual_improves_with_order():
    # on an invariant graph the field is tangent: f_y = h'(x) f_x; the
    # defect of the truncated series shrinks with the expansion order
    p0 = MMParams(expansion_order=0)
    p3 = MMParams(expansion_order=3)
    dh = 1e-6

    def defect(p, x):
        h = slow_manifold_graph(p, x)
        hp = (slow_manifold_graph(p, x + dh)
              - slow_manifold_graph(p, x - dh)) / (2 * dh)
        f = mm_vector_field(p, Frame.identity(), np.array([x, h]))
        return abs(f[1] - hp * f[0])

    for x in (0.3, 0.9):
        assert defect(p3, x) < 1e-3 * defect(p0, x)


def test_fiber_series_matches_numeric_base_point():
    p = MMParams(expansion_order=3)
    for u in ((0.9, 0.5), (0.4, 0.2)):
        series = fiber_base_x(p, u)
        numeric = fiber_base_numeric(p, u)
        assert abs(series - numeric) < 1e-7


def test_fiber_base_order_zero_is_x():
    p = MMParams(expansion_order=0)
    assert fiber_base_x(p, (0.9, 0.5)) == 0.9
    # eps = 0 collapses every order to the identity
    assert fiber_base_x(MMParams(eps=0.0), (0.9, 0.5)) == 0.9


def test_reference_flow_delta_zero_is_identity():
    p = MMParams()
    for frame in (Frame.identity(), Frame.rotated()):
        z = mm_reference_flow(p, frame, 0.0, 0.9)
        assert abs(z[0] - 0.9) < 1e-9


def test_micro_system_delta_zero_identity():
    p = MMParams()
    cfg = SolverConfig(tolerance=1e-12, fd_step=1e-6)
    for frame in (Frame.identity(), Frame.rotated()):
        res = implicit_flow(mm_system(p, frame), 1.0, 0.0,
                            np.array([0.9]), cfg)
        assert res.converged
        assert abs(res.y[0] - 0.9) < 1e-9


def test_healed_implicit_flow_matches_reference():
    # after healing, the implicit flow agrees with the expansion-based
    # reference far beyond the unhealed mismatch
    p = MMParams()
    frame = Frame.identity()
    cfg = SolverConfig(tolerance=1e-12, fd_step=1e-6)
    ref = mm_reference_flow(p, frame, 0.5, 0.9)
    res = implicit_flow(mm_system(p, frame), 10.0, 0.5, np.array([0.9]), cfg)
    assert res.converged
    assert abs(res.y[0] - ref[0]) < 1e-3
