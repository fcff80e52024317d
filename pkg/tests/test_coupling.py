import numpy as np
import pytest
import scipy.sparse.linalg as spla

from bezmortar import (
    InterfaceGeometryError,
    InterfaceSpec,
    MultiPatchModel,
    assemble_poisson,
    assemble_saddle,
    apply_dirichlet,
    build_phi,
    condense,
    linear_solve,
    project_master_knots,
    refine_dual_space,
    refinement_operator,
)
from bezmortar.benchmarks import gen_square_two_patch, manufactured_fields, rect_patch
from bezmortar.fem import SolutionField, assemble_neumann, dirichlet_rows, l2_error
from bezmortar.splines import BoundaryCurve, KnotVector, greville_abscissae, uniform_open_knots

RNG = np.random.default_rng(515)


def line_curve(p, n, y=1.0, speeds=None):
    """Horizontal segment [0,1] x {y} with optional control reparameterization."""
    kv = uniform_open_knots(p, n)
    g = greville_abscissae(kv)
    if speeds is not None:
        g = speeds(g)
    pts = np.column_stack([g, np.full(kv.n, y)])
    return BoundaryCurve(kv, pts, np.ones(kv.n))


# ------------------------------------------------------------------- phi


def test_phi_identity_for_matched_lines():
    phi = build_phi(line_curve(2, 3), line_curve(2, 2))
    for xi in np.linspace(0, 1, 11):
        assert abs(phi(xi) - xi) < 1e-12
    assert phi.is_affine()


def test_phi_residual_for_speed_varying_master():
    # control-point warp: the master parameterization runs faster early on
    def speeds(g):
        out = g.copy()
        inner = slice(1, len(g) - 1)
        out[inner] = g[inner] ** 1.7
        return out

    slave = line_curve(2, 4)
    master = line_curve(2, 3, speeds=speeds)
    phi = build_phi(slave, master)
    assert not phi.is_affine()
    for xi in np.linspace(0, 1, 50):
        r = np.linalg.norm(master.point(phi(xi)) - slave.point(xi))
        assert r < 1e-12


def test_phi_mismatched_benchmark_residual():
    model = gen_square_two_patch((2, 3), matched=False, level=0)
    phi = model.couplings[0].phi
    for xi in np.linspace(0, 1, 25):
        r = np.linalg.norm(phi.master.point(phi(xi)) - phi.slave.point(xi))
        assert r < 1e-10


def test_phi_rejects_noncoincident_curves():
    with pytest.raises(InterfaceGeometryError):
        build_phi(line_curve(2, 2, y=0.0), line_curve(2, 2, y=1.0))


def test_phi_reversed_orientation():
    kv = uniform_open_knots(2, 2)
    g = greville_abscissae(kv)
    master = BoundaryCurve(kv, np.column_stack([1 - g, np.ones(kv.n)]), np.ones(kv.n))
    phi = build_phi(line_curve(2, 3), master, reversed=True)
    assert abs(phi(0.0) - 1.0) < 1e-12
    assert abs(phi(1.0) - 0.0) < 1e-12
    assert abs(phi(0.25) - 0.75) < 1e-12


# ------------------------------------------------------- projected knots


def test_merged_breakpoints_matched_ratio():
    phi = build_phi(line_curve(2, 3), line_curve(2, 2))
    merged = project_master_knots(phi)
    assert np.allclose(merged, [0, 1 / 3, 0.5, 2 / 3, 1], atol=1e-12)


def test_merged_breakpoints_demo(demo_model):
    coup = demo_model.couplings[0]
    assert np.allclose(coup.merged, [0, 1 / 3, 0.5, 2 / 3, 1], atol=1e-12)


def test_projected_knots_satisfy_phi_inverse():
    model = gen_square_two_patch((2, 3), matched=False, level=0)
    coup = model.couplings[0]
    master_bp = coup.phi.master.kv.breakpoints()[1:-1]
    projected = [x for x in coup.merged
                 if np.min(np.abs(coup.phi.slave.kv.breakpoints() - x)) > 1e-9]
    assert len(projected) == len(master_bp)
    for xi, eta in zip(projected, master_bp):
        assert abs(coup.phi(float(xi)) - eta) < 1e-12


# ------------------------------------------------------- dual refinement


def test_refine_level_zero_unchanged():
    kv = KnotVector([0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1], 2)
    merged = np.array([0, 1 / 3, 0.5, 2 / 3, 1.0])
    space = refine_dual_space(kv, merged, 0)
    assert space.refined is kv
    assert space.cells_in((1 / 3, 2 / 3)) == []
    assert np.allclose(space.segments, merged)


def test_refine_level_one_splits_crossed_element():
    kv = KnotVector([0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1], 2)
    merged = np.array([0, 1 / 3, 0.5, 2 / 3, 1.0])
    space = refine_dual_space(kv, merged, 1)
    assert space.refined.n == 6
    cells = space.cells_in((1 / 3, 2 / 3))
    assert len(cells) == 2
    assert np.allclose(cells, [(1 / 3, 0.5), (0.5, 2 / 3)])


def test_refine_level_two_bisects():
    kv = KnotVector([0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1], 2)
    merged = np.array([0, 1 / 3, 0.5, 2 / 3, 1.0])
    s1 = refine_dual_space(kv, merged, 1)
    s2 = refine_dual_space(kv, merged, 2)
    assert s2.refined.n == s1.refined.n + len(s1.refined.spans())
    assert len(s2.cells_in((1 / 3, 2 / 3))) == 4


def test_dof_count_invariant_under_dual_refinement():
    counts = []
    for n in (0, 1, 2):
        model = gen_square_two_patch((2, 3), matched=False, level=1, dual_refine=n)
        counts.append(model.n_retained)
    assert counts[0] == counts[1] == counts[2]


# --------------------------------------------------------- coupling matrix


def test_identical_interfaces_give_identity():
    master = rect_patch(2, 3, 3, (0.0, 0.5), (0.0, 1.0))
    slave = rect_patch(2, 3, 3, (0.5, 1.0), (0.0, 1.0))
    model = MultiPatchModel(
        [master, slave], [InterfaceSpec((0, "east"), (1, "west"))], 0
    )
    G = model.couplings[0].coupling.values
    assert np.abs(G - np.eye(G.shape[0])).max() < 1e-13


def test_matched_coupling_is_refinement_operator(demo_model):
    coup = demo_model.couplings[0]
    master_kv = coup.phi.master.kv
    fine, T = refinement_operator(master_kv, [1 / 3, 2 / 3])
    assert np.abs(coup.coupling.values - T).max() < 1e-13


def test_demo_coupling_matrix_printed_rationals(demo_model):
    G = demo_model.couplings[0].coupling.values
    expected = np.array(
        [
            [1, 0, 0, 0],
            [1 / 3, 2 / 3, 0, 0],
            [0, 2 / 3, 1 / 3, 0],
            [0, 1 / 3, 2 / 3, 0],
            [0, 0, 2 / 3, 1 / 3],
            [0, 0, 0, 1],
        ]
    )
    assert np.abs(G - expected).max() < 1e-14
    assert np.allclose(G[1], [1 / 3, 2 / 3, 0, 0])  # the localized column pattern


def test_row_sums_one():
    for matched in (True, False):
        model = gen_square_two_patch((2, 3), matched=matched, level=0, dual_refine=1)
        assert model.couplings[0].coupling.row_sum_error() < 1e-10


def test_master_basis_reproduced_pointwise(demo_model):
    from bezmortar.splines import bspline_basis

    coup = demo_model.couplings[0]
    G = coup.coupling.values
    rkv = coup.refined.refined
    mkv = coup.phi.master.kv
    for xi in np.linspace(0.01, 0.99, 30):
        fr, Nr = bspline_basis(rkv, float(xi))
        full = np.zeros(rkv.n)
        full[fr : fr + 3] = Nr
        lhs = G.T @ full
        fm, Nm = bspline_basis(mkv, coup.phi(float(xi)))
        ref = np.zeros(mkv.n)
        ref[fm : fm + 3] = Nm
        assert np.abs(lhs - ref).max() < 1e-10


# ------------------------------------------------------------ condensation


def _solve_mixed(model, method):
    u, grad, f = manufactured_fields("square-mixed")
    flux = lambda x, n: np.array([np.dot(grad(x[0], x[1]), n)])
    mesh = model.weak_mesh() if method == "weak" else model.mortar_mesh()
    system = assemble_poisson(mesh, f)
    assemble_neumann(mesh, system, [
        (0, "south", None, flux), (0, "north", None, flux),
        (1, "south", None, flux), (1, "north", None, flux),
    ])
    rows = dirichlet_rows(model, mesh, 1, [(0, "west", 0, u), (1, "east", 0, u)])
    if method == "mortar":
        red = apply_dirichlet(condense(system, model), rows)
        x = model.prolongation_vec(1) @ linear_solve(red)
        return SolutionField(mesh, x, 1), u
    if method == "weak":
        x = linear_solve(apply_dirichlet(system, rows))
        return SolutionField(mesh, x, 1), u
    sad, nl = assemble_saddle(system, model)
    x = linear_solve(apply_dirichlet(sad, rows))
    return SolutionField(mesh, x[: mesh.ndof], 1), u


def test_conforming_condensation_equals_conforming_assembly():
    master = rect_patch(2, 2, 2, (0.0, 0.5), (0.0, 1.0))
    slave = rect_patch(2, 2, 2, (0.5, 1.0), (0.0, 1.0))
    model = MultiPatchModel(
        [master, slave], [InterfaceSpec((0, "east"), (1, "west"))], 0
    )
    full = assemble_poisson(model.mortar_mesh())
    red = condense(full, model)
    weak = assemble_poisson(model.weak_mesh())
    diff = spla.norm(red.K - weak.K) / spla.norm(weak.K)
    assert diff < 1e-13
    # identity coupling merges interface dofs exactly
    assert np.abs(model.couplings[0].coupling.std - np.eye(4)).max() < 1e-13


def test_condensed_block_formula(side_by_side):
    model = side_by_side
    system = assemble_poisson(model.mortar_mesh())
    red = condense(system, model)
    part = model.dof_partition()
    iface = part["interfaces"][0]
    m, s = iface["master"], iface["slave"]
    G = model.couplings[0].coupling.std
    K = system.K.toarray()
    Kred = red.K.toarray()
    mm = np.ix_(m, m)
    expected_cc = K[mm] + G.T @ K[np.ix_(s, s)] @ G
    assert np.abs(Kred[mm] - expected_cc).max() < 1e-12
    distinct = [d for d in part["distinct"] if d < model.n_retained]
    expected_cd = K[np.ix_(m, distinct)] + G.T @ K[np.ix_(s, distinct)]
    assert np.abs(Kred[np.ix_(m, distinct)] - expected_cd).max() < 1e-12


def test_condensed_symmetric_positive_definite(side_by_side):
    model = side_by_side
    red = condense(assemble_poisson(model.mortar_mesh()), model)
    assert red.symmetry_error() < 1e-12
    u = lambda x, y: 0.0
    rows = dirichlet_rows(model, model.weak_mesh(), 1,
                          [(0, "west", 0, u), (1, "east", 0, u)])
    red = apply_dirichlet(red, rows)
    free = np.setdiff1d(np.arange(red.nrows), sorted(red.constraints))
    Kff = red.K[free][:, free]
    ev = spla.eigsh(Kff.tocsc(), k=1, which="SA", return_eigenvectors=False)
    assert ev[0] > 0


def test_post_solve_constraint_residual(side_by_side):
    model = side_by_side
    field, u = _solve_mixed(model, "mortar")
    vals = field.values
    part = model.dof_partition()
    iface = part["interfaces"][0]
    G = model.couplings[0].coupling.std
    slave_vals = vals[iface["slave"]]
    master_vals = vals[iface["master"]]
    assert np.abs(slave_vals - G @ master_vals).max() < 1e-10


def test_saddle_blocks(side_by_side):
    model = side_by_side
    Bm, Bs = model.multiplier_blocks(1)
    part = model.dof_partition()
    iface = part["interfaces"][0]
    # slave block is an identity on the trace dofs
    assert np.abs(Bs[:, iface["slave"]].toarray() - np.eye(len(iface["slave"]))).max() < 1e-14
    # master block carries the coupling matrix
    G = model.couplings[0].coupling.std
    assert np.abs(Bm[:, iface["master"]].toarray() - G).max() < 1e-14


def test_saddle_equals_condensed(side_by_side):
    f1, u = _solve_mixed(side_by_side, "mortar")
    f2, _ = _solve_mixed(side_by_side, "saddle")
    f3, _ = _solve_mixed(side_by_side, "weak")
    assert np.abs(f1.values - f2.values).max() < 1e-9
    assert abs(l2_error(f1, u) - l2_error(f3, u)) < 1e-10


# ---------------------------------------------------------- multi-interface


def test_chained_slave_dof_rejected():
    # middle patch slave on two adjacent sides shares a corner dof
    a = rect_patch(2, 2, 2, (0.0, 1.0), (0.0, 1.0))
    b = rect_patch(2, 2, 2, (1.0, 2.0), (0.0, 1.0))
    c = rect_patch(2, 2, 2, (1.0, 2.0), (1.0, 2.0))
    specs = [
        InterfaceSpec(master=(0, "east"), slave=(1, "west")),
        InterfaceSpec(master=(2, "south"), slave=(1, "north")),
    ]
    with pytest.raises(ValueError, match="chained|two slave"):
        MultiPatchModel([a, b, c], specs, 0)


def test_master_edge_through_condensed_corner():
    # patch 1 is slave on its west side and master on its north side; the
    # shared corner dof is substituted through the first interface
    a = rect_patch(2, 2, 2, (0.0, 1.0), (0.0, 1.0))
    b = rect_patch(2, 2, 2, (1.0, 2.0), (0.0, 1.0))
    c = rect_patch(2, 3, 2, (1.0, 2.0), (1.0, 2.0))
    specs = [
        InterfaceSpec(master=(0, "east"), slave=(1, "west")),
        InterfaceSpec(master=(1, "north"), slave=(2, "south")),
    ]
    model = MultiPatchModel([a, b, c], specs, 1)
    system = assemble_poisson(model.mortar_mesh())
    red = condense(system, model)
    weak = assemble_poisson(model.weak_mesh())
    assert spla.norm(red.K - weak.K) / spla.norm(weak.K) < 1e-12
    # linear patch test through the chain
    u = lambda x, y: 3 * x - 2 * y + 1
    sides = [(0, "west"), (0, "south"), (0, "north"), (1, "south"), (1, "east"),
             (2, "east"), (2, "north"), (2, "west")]
    rows = dirichlet_rows(model, model.weak_mesh(), 1,
                          [(p, s, 0, u) for p, s in sides])
    x = linear_solve(apply_dirichlet(weak, rows))
    field = SolutionField(model.weak_mesh(), x, 1)
    assert l2_error(field, u) < 1e-10


def test_sparsity_stays_local(side_by_side):
    model = gen_square_two_patch((2, 3), True, 2, 2, dual_refine=1)
    red = condense(assemble_poisson(model.mortar_mesh()), model)
    conforming = gen_square_two_patch((3, 3), True, 2, 2, dual_refine=0)
    conf = assemble_poisson(conforming.weak_mesh())
    assert red.K.nnz <= 1.5 * conf.K.nnz


def test_reversed_interface_end_to_end():
    # slave parameterization rotated 180 degrees: still right-handed, but the
    # interface edge parameter runs opposite to the master's
    from bezmortar.splines import Patch2D

    master = rect_patch(2, 2, 2, (0.0, 0.5), (0.0, 1.0))
    slave = rect_patch(2, 3, 3, (0.5, 1.0), (0.0, 1.0))
    rot = Patch2D(slave.kvs, slave.points[::-1, ::-1].copy(),
                  slave.weights[::-1, ::-1].copy())
    model = MultiPatchModel(
        [master, rot],
        [InterfaceSpec(master=(0, "east"), slave=(1, "east"), reversed=True)], 1
    )
    red = condense(assemble_poisson(model.mortar_mesh()), model)
    weak = assemble_poisson(model.weak_mesh())
    assert spla.norm(red.K - weak.K) / spla.norm(weak.K) < 1e-12
    assert model.couplings[0].coupling.row_sum_error() < 1e-10
    u = lambda x, y: 2 * x - 3 * y + 0.5
    sides = [(0, s, 0, u) for s in ("west", "south", "north")] + [
        (1, s, 0, u) for s in ("west", "south", "north")
    ]
    mesh = model.weak_mesh()
    rows = dirichlet_rows(model, mesh, 1, sides)
    x = linear_solve(apply_dirichlet(weak, rows))
    assert l2_error(SolutionField(mesh, x, 1), u) < 1e-10
