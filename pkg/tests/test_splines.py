import numpy as np
import pytest

from bezmortar import (
    BernsteinInterval,
    KnotVector,
    OutOfDomainError,
    Patch2D,
    bernstein_basis,
    bernstein_derivatives,
    bernstein_transform,
    bezier_extraction,
    bspline_basis,
    bspline_derivatives,
    greville_abscissae,
    knot_insert,
    refinement_operator,
    uniform_open_knots,
)
from bezmortar.benchmarks import annulus_sector_patch, rect_patch

RNG = np.random.default_rng(20240917)


# ---------------------------------------------------------------- Bernstein


def test_bernstein_endpoint_interpolation():
    iv = BernsteinInterval(0.0, 1.0, 2)
    assert np.allclose(bernstein_basis(iv, 0.0), [1, 0, 0])
    assert np.allclose(bernstein_basis(iv, 1.0), [0, 0, 1])


def test_bernstein_midpoint_quadratic():
    vals = bernstein_basis(BernsteinInterval(0.0, 1.0, 2), 0.5)
    assert np.allclose(vals, [0.25, 0.5, 0.25])


def test_bernstein_shifted_interval_midpoint():
    vals = bernstein_basis(BernsteinInterval(2.0, 4.0, 1), 3.0)
    assert np.allclose(vals, [0.5, 0.5])


def test_bernstein_partition_of_unity_and_positivity():
    for p in range(1, 5):
        iv = BernsteinInterval(-0.3, 1.7, p)
        xs = RNG.uniform(-0.3, 1.7, 40)
        vals = bernstein_basis(iv, xs)
        assert np.all(vals >= -1e-14)
        assert np.abs(vals.sum(axis=1) - 1.0).max() < 1e-13


def test_bernstein_out_of_domain():
    with pytest.raises(OutOfDomainError):
        bernstein_basis(BernsteinInterval(0.0, 1.0, 2), 1.5)


def test_bernstein_degenerate_interval_rejected():
    with pytest.raises(ValueError):
        BernsteinInterval(1.0, 1.0, 2)


def test_bernstein_derivatives_match_finite_differences():
    iv = BernsteinInterval(0.2, 1.9, 3)
    eps = 1e-7
    for x in (0.5, 1.2):
        d = bernstein_derivatives(iv, x, 1)
        fd = (bernstein_basis(iv, x + eps) - bernstein_basis(iv, x - eps)) / (2 * eps)
        assert np.abs(d[1] - fd).max() < 1e-6


# ------------------------------------------------------------ transformation


def test_transform_identity():
    iv = BernsteinInterval(0.0, 1.0, 3)
    assert np.allclose(bernstein_transform(iv, iv), np.eye(4), atol=1e-14)


def test_transform_first_half_quadratic():
    M = bernstein_transform(BernsteinInterval(0, 1, 2), BernsteinInterval(0, 0.5, 2))
    expected = np.array([[1, 0, 0], [0.5, 0.5, 0], [0.25, 0.5, 0.25]])
    assert np.abs(M - expected).max() < 1e-15


def test_transform_second_half_by_sampling():
    src = BernsteinInterval(0.0, 1.0, 1)
    tgt = BernsteinInterval(0.5, 1.0, 1)
    M = bernstein_transform(src, tgt)
    for x in np.linspace(0.5, 1.0, 5):
        lhs = bernstein_basis(tgt, x)
        rhs = np.linalg.solve(M.T, bernstein_basis(src, x))
        assert np.abs(lhs - rhs).max() < 1e-13


def test_transform_pointwise_identity_random():
    for p in range(1, 5):
        src = BernsteinInterval(0.1, 1.4, p)
        tgt = BernsteinInterval(0.35, 0.9, p)
        M = bernstein_transform(src, tgt)
        xs = RNG.uniform(0.35, 0.9, 20)
        lhs = bernstein_basis(tgt, xs)
        rhs = np.linalg.solve(M.T, bernstein_basis(src, xs).T).T
        assert np.abs(lhs - rhs).max() < 1e-12


def test_transform_degree_mismatch():
    with pytest.raises(ValueError):
        bernstein_transform(BernsteinInterval(0, 1, 2), BernsteinInterval(0, 1, 3))


# ------------------------------------------------------------------ B-spline


def test_knot_vector_invariants():
    with pytest.raises(ValueError):
        KnotVector([0, 0, 1, 0.5, 1, 1], 2)  # decreasing
    with pytest.raises(ValueError):
        KnotVector([0, 0, 0.5, 1, 1], 2)  # not open
    kv = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    assert kv.n == 4
    assert kv.domain == (0.0, 1.0)


def test_linear_hat_functions():
    kv = KnotVector([0, 0, 1, 1], 1)
    first, vals = bspline_basis(kv, 0.5)
    assert first == 0
    assert np.allclose(vals, [0.5, 0.5])


def test_open_knot_endpoint():
    kv = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    first, vals = bspline_basis(kv, 0.0)
    assert first == 0 and np.allclose(vals, [1, 0, 0])
    first, vals = bspline_basis(kv, 1.0)
    assert np.allclose(vals, [0, 0, 1])


def test_bspline_out_of_domain():
    kv = KnotVector([0, 0, 1, 1], 1)
    with pytest.raises(OutOfDomainError):
        bspline_basis(kv, 1.2)


def test_bspline_matches_extraction_on_element():
    kv = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    op = bezier_extraction(kv)[0]
    first, vals = bspline_basis(kv, 0.25)
    assert first == op.first
    B = bernstein_basis(op.interval, 0.25)
    assert np.abs(vals - op.matrix @ B).max() < 1e-14


def test_bspline_derivative_partition():
    kv = KnotVector([0, 0, 0, 0.3, 0.7, 1, 1, 1], 2)
    for x in (0.1, 0.5, 0.9):
        _, ders = bspline_derivatives(kv, x, 2)
        assert abs(ders[0].sum() - 1.0) < 1e-14
        assert abs(ders[1].sum()) < 1e-12


# ------------------------------------------------------------ knot insertion


def test_insert_linear_subdivision():
    kv = KnotVector([0, 0, 1, 1], 1)
    kv2, c2 = knot_insert(kv, np.array([0.0, 1.0]), 0.5)
    assert kv2.n == 3
    assert np.allclose(c2, [0.0, 0.5, 1.0])


def test_insert_outside_domain_rejected():
    kv = KnotVector([0, 0, 1, 1], 1)
    with pytest.raises(OutOfDomainError):
        knot_insert(kv, np.array([0.0, 1.0]), 1.0)


def test_insert_into_demo_interface_gives_six_functions():
    kv = KnotVector([0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1], 2)
    kv2, _ = knot_insert(kv, np.zeros(kv.n), 0.5)
    assert kv2.n == 6
    assert np.allclose(
        kv2.values, [0, 0, 0, 1 / 3, 0.5, 2 / 3, 1, 1, 1]
    )


def test_insert_preserves_curve_pointwise():
    for p in range(1, 5):
        vals = np.concatenate([np.zeros(p + 1), np.sort(RNG.uniform(0, 1, 3)), np.ones(p + 1)])
        kv = KnotVector(vals, p)
        coeffs = RNG.normal(size=(kv.n, 2))
        kv2, c2 = knot_insert(kv, coeffs, float(RNG.uniform(0.1, 0.9)))
        for x in RNG.uniform(0, 1, 20):
            f1, v1 = bspline_basis(kv, x)
            f2, v2 = bspline_basis(kv2, x)
            y1 = v1 @ coeffs[f1 : f1 + p + 1]
            y2 = v2 @ c2[f2 : f2 + p + 1]
            assert np.abs(y1 - y2).max() < 1e-13


# --------------------------------------------------------------- extraction


def test_single_element_extraction_is_identity():
    kv = KnotVector([0, 0, 0, 1, 1, 1], 2)
    ops = bezier_extraction(kv)
    assert len(ops) == 1
    assert np.allclose(ops[0].matrix, np.eye(3), atol=1e-14)


def test_extraction_half_split():
    kv = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    C1, C2 = (op.matrix for op in bezier_extraction(kv))
    assert np.abs(C1 - np.array([[1, 0, 0], [0, 1, 0.5], [0, 0, 0.5]])).max() < 1e-15
    assert np.abs(C2 - np.array([[0.5, 0, 0], [0.5, 1, 0], [0, 0, 1]])).max() < 1e-15


def test_demo_slave_element_operators():
    kv1 = KnotVector([0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1], 2)
    mid = bezier_extraction(kv1)[1].matrix
    assert np.abs(mid - np.array([[0.5, 0, 0], [0.5, 1, 0.5], [0, 0, 0.5]])).max() < 1e-14
    kv2 = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    top = bezier_extraction(kv2)[1].matrix
    assert np.abs(top - np.array([[0.5, 0, 0], [0.5, 1, 0], [0, 0, 1]])).max() < 1e-14


def test_extraction_identity_and_column_sums():
    for p in range(1, 5):
        for _ in range(3):
            vals = np.concatenate(
                [np.zeros(p + 1), np.sort(RNG.uniform(0, 1, 4)), np.ones(p + 1)]
            )
            kv = KnotVector(vals, p)
            for op in bezier_extraction(kv):
                assert np.abs(op.matrix.sum(axis=0) - 1.0).max() < 1e-13
                a, b = op.span
                for x in RNG.uniform(a, b, 20):
                    first, v = bspline_basis(kv, x)
                    B = bernstein_basis(op.interval, x)
                    assert first == op.first
                    assert np.abs(v - op.matrix @ B).max() < 1e-12


def test_extraction_matches_refinement_operator_oracle():
    # raising every interior multiplicity to p must reproduce the element
    # operators through the global refinement matrix
    kv = KnotVector([0, 0, 0, 0.25, 0.6, 1, 1, 1], 2)
    p = kv.degree
    extra = []
    for bp in kv.breakpoints()[1:-1]:
        extra.extend([bp] * (p - kv.multiplicity(bp)))
    c0, T = refinement_operator(kv, extra)
    for e, op in enumerate(bezier_extraction(kv)):
        block = T[e * p : e * p + p + 1, op.first : op.first + p + 1]
        assert np.abs(op.matrix - block.T).max() < 1e-14


# --------------------------------------------------------------------- NURBS


def test_nurbs_reduces_to_bspline_for_unit_weights():
    patch = rect_patch(2, 2, 2)
    _, _, _, vals, _ = patch.eval(0.3, 0.6)
    f1, b1 = bspline_basis(patch.kvs[0], 0.3)
    f2, b2 = bspline_basis(patch.kvs[1], 0.6)
    assert np.abs(vals - np.outer(b1, b2)).max() < 1e-14


def test_quarter_arc_lies_on_circle():
    # 90-degree arc as two 45-degree exact sectors, evaluated on the hole edge
    patch = annulus_sector_patch(0.0, np.pi / 4, 1.0, 2.0, 2, 2)
    for t in np.linspace(0, 1, 50):
        x = patch.eval(0.0, t)[0]
        assert abs(np.linalg.norm(x) - 1.0) < 1e-13


def test_rational_partition_of_unity_on_annulus():
    patch = annulus_sector_patch(np.pi / 2, 3 * np.pi / 4, 0.4, 4.0, 3, 3)
    for _ in range(100):
        x1, x2 = RNG.uniform(0, 1, 2)
        vals = patch.eval(x1, x2)[3]
        assert abs(vals.sum() - 1.0) < 1e-13


def test_patch_invariants():
    kv = uniform_open_knots(2, 2)
    pts = np.zeros((4, 4, 2))
    with pytest.raises(ValueError):
        Patch2D((kv, kv), pts[:3])  # wrong net shape
    w = np.ones((4, 4))
    w[1, 1] = -1.0
    with pytest.raises(ValueError):
        Patch2D((kv, kv), pts, w)


def test_greville_linear_reproduction():
    kv = uniform_open_knots(3, 4)
    g = greville_abscissae(kv)
    for x in RNG.uniform(0, 1, 10):
        first, vals = bspline_basis(kv, x)
        assert abs(vals @ g[first : first + 4] - x) < 1e-13
