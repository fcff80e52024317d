"""Extracted-element Galerkin assembly and solves.

Assembly walks an :class:`~bezmortar.model.ExtractedMesh` cell stream and is
oblivious to interface coupling: mortared, weakly continuous and single-patch
meshes all pass through the same kernels.  Supported physics: Poisson
problems, linear plane strain/stress elasticity, and a compressible
neo-Hookean material with dead-load stepping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linsys import AssembledSystem, NumericalError, apply_dirichlet, linear_solve
from .model import Cell, ExtractedMesh, SideCell
from .splines import BernsteinInterval, bernstein_derivatives, gauss_on

__all__ = [
    "MaterialModel",
    "SolutionField",
    "cell_quadrature",
    "evaluate_cell",
    "assemble_poisson",
    "assemble_linear_elasticity",
    "assemble_neumann",
    "boundary_projection",
    "dirichlet_rows",
    "assemble_neo_hookean",
    "newton_load_stepping",
    "l2_error",
    "l2_norm",
]


@dataclass(frozen=True)
class MaterialModel:
    """Isotropic material constants with derived Lame parameters."""

    variant: str  # "poisson" | "linear-elastic" | "neo-hookean"
    E: float = 1.0
    nu: float = 0.3
    plane_stress: bool = False

    def __post_init__(self):
        if self.variant in ("linear-elastic", "neo-hookean"):
            if self.mu <= 0:
                raise ValueError("shear modulus must be positive")
            if self.variant == "neo-hookean" and self.nu >= 0.5:
                raise ValueError("neo-hookean model requires nu < 1/2")

    @property
    def lam(self) -> float:
        if self.plane_stress:
            # plane-stress effective first Lame parameter
            return self.E * self.nu / ((1 + self.nu) * (1 - self.nu))
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2 * (1 + self.nu))


# --------------------------------------------------------------------------
# cell evaluation


def cell_quadrature(cell: Cell, n1: int, n2: int):
    """Tensor Gauss points and weights on the cell rectangle."""
    (a1, b1), (a2, b2) = cell.rect
    x1, w1 = gauss_on(a1, b1, n1)
    x2, w2 = gauss_on(a2, b2, n2)
    X1 = np.repeat(x1, n2)
    X2 = np.tile(x2, n1)
    W = np.outer(w1, w2).reshape(-1)
    return X1, X2, W


def evaluate_cell(cell: Cell, x1: np.ndarray, x2: np.ndarray, grad: bool = True):
    """Basis, geometry and Jacobians of one cell at parametric points.

    Returns a dict with keys ``basis`` (m, nrows), ``x`` (m, 2) and, when
    ``grad`` is set, ``grad_phys`` (m, nrows, 2), ``detJ`` (m,) and ``jac``.
    """
    (a1, b1), (a2, b2) = cell.rect
    p1, p2 = cell.degrees
    iv1 = BernsteinInterval(a1, b1, p1)
    iv2 = BernsteinInterval(a2, b2, p2)
    nd = 1 if grad else 0
    D1 = bernstein_derivatives(iv1, x1, nd)
    D2 = bernstein_derivatives(iv2, x2, nd)
    cols = np.einsum("qi,qj->qij", D1[0], D2[0]).reshape(len(x1), -1)
    vhom = cols @ cell.ophom.T
    ghom = cols @ cell.geo_ophom.T
    W = vhom.sum(axis=1)
    Wg = ghom.sum(axis=1)
    basis = vhom / W[:, None]
    x = (ghom @ cell.geo_pts) / Wg[:, None]
    out = {"basis": basis, "x": x}
    if not grad:
        return out
    dcols1 = np.einsum("qi,qj->qij", D1[1], D2[0]).reshape(len(x1), -1)
    dcols2 = np.einsum("qi,qj->qij", D1[0], D2[1]).reshape(len(x1), -1)
    dv = np.stack([dcols1 @ cell.ophom.T, dcols2 @ cell.ophom.T], axis=2)
    dW = dv.sum(axis=1)
    dbasis = (dv - basis[:, :, None] * dW[:, None, :]) / W[:, None, None]
    dg = np.stack([dcols1 @ cell.geo_ophom.T, dcols2 @ cell.geo_ophom.T], axis=2)
    dWg = dg.sum(axis=1)
    jac = (
        np.einsum("qnd,nk->qkd", dg, cell.geo_pts)
        - np.einsum("qk,qd->qkd", x, dWg)
    ) / Wg[:, None, None]
    detJ = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(detJ <= 0):
        raise NumericalError("non-positive geometric Jacobian")
    inv = np.empty_like(jac)
    inv[:, 0, 0] = jac[:, 1, 1]
    inv[:, 1, 1] = jac[:, 0, 0]
    inv[:, 0, 1] = -jac[:, 0, 1]
    inv[:, 1, 0] = -jac[:, 1, 0]
    inv /= detJ[:, None, None]
    # d/dx_k = sum_d d/dxi_d * dxi_d/dx_k, with inv[q] = J^{-1}
    grad_phys = np.einsum("qnd,qdk->qnk", dbasis, inv)
    out.update({"grad_phys": grad_phys, "detJ": detJ, "jac": jac})
    return out


def evaluate_side_cell(side: SideCell, xs: np.ndarray):
    """Basis, geometry, arc-length rate and outward normal on a side cell."""
    a, b = side.interval
    iv = BernsteinInterval(a, b, side.degree)
    D = bernstein_derivatives(iv, xs, 1)
    vhom = D[0] @ side.ophom.T
    W = vhom.sum(axis=1)
    basis = vhom / W[:, None]
    ghom = D[0] @ side.geo_ophom.T
    Wg = ghom.sum(axis=1)
    x = (ghom @ side.geo_pts) / Wg[:, None]
    dg = D[1] @ side.geo_ophom.T
    dWg = dg.sum(axis=1)
    tangent = (dg @ side.geo_pts - x * dWg[:, None]) / Wg[:, None]
    speed = np.linalg.norm(tangent, axis=1)
    if side.ccw_normal:
        normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    else:
        normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    normal /= speed[:, None]
    return {"basis": basis, "x": x, "speed": speed, "normal": normal}


# --------------------------------------------------------------------------
# linear assembly


def _scatter(triplets, rows, ncomp, local):
    """Append a local (n*ncomp, n*ncomp) block to triplet lists."""
    data, ri, cj = triplets
    vec = (rows[:, None] * ncomp + np.arange(ncomp)[None, :]).reshape(-1)
    ri.append(np.repeat(vec, len(vec)))
    cj.append(np.tile(vec, len(vec)))
    data.append(local.reshape(-1))


def _quad_counts(cell: Cell, extra: int = 1) -> tuple[int, int]:
    return cell.degrees[0] + extra, cell.degrees[1] + extra


def assemble_poisson(mesh: ExtractedMesh, forcing=None) -> AssembledSystem:
    """Stiffness int grad u . grad v and load int f v of the Laplace operator."""
    triplets = ([], [], [])
    f = np.zeros(mesh.ndof)
    for cell in mesh.cells:
        n1, n2 = _quad_counts(cell)
        x1, x2, w = cell_quadrature(cell, n1, n2)
        ev = evaluate_cell(cell, x1, x2)
        dphi = ev["grad_phys"]
        wdet = w * ev["detJ"]
        local = np.einsum("qid,qjd,q->ij", dphi, dphi, wdet)
        _scatter(triplets, cell.rows, 1, local)
        if forcing is not None:
            fv = np.array([forcing(xy[0], xy[1]) for xy in ev["x"]])
            f[cell.rows] += ev["basis"].T @ (wdet * fv)
    K = sp.coo_matrix(
        (np.concatenate(triplets[0]),
         (np.concatenate(triplets[1]), np.concatenate(triplets[2]))),
        shape=(mesh.ndof, mesh.ndof),
    ).tocsr()
    return AssembledSystem(K, f, 1)


def _elastic_D(mat: MaterialModel) -> np.ndarray:
    lam, mu = mat.lam, mat.mu
    return np.array(
        [[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]]
    )


def assemble_linear_elasticity(mesh: ExtractedMesh, material: MaterialModel,
                               body_force=None) -> AssembledSystem:
    """Small-strain isotropic elasticity in Voigt form (2 components per dof)."""
    D = _elastic_D(material)
    triplets = ([], [], [])
    f = np.zeros(mesh.ndof * 2)
    for cell in mesh.cells:
        n1, n2 = _quad_counts(cell)
        x1, x2, w = cell_quadrature(cell, n1, n2)
        ev = evaluate_cell(cell, x1, x2)
        dphi = ev["grad_phys"]
        wdet = w * ev["detJ"]
        nr = len(cell.rows)
        B = np.zeros((len(x1), 3, 2 * nr))
        B[:, 0, 0::2] = dphi[:, :, 0]
        B[:, 1, 1::2] = dphi[:, :, 1]
        B[:, 2, 0::2] = dphi[:, :, 1]
        B[:, 2, 1::2] = dphi[:, :, 0]
        local = np.einsum("qai,ab,qbj,q->ij", B, D, B, wdet)
        _scatter(triplets, cell.rows, 2, local)
        if body_force is not None:
            bf = np.array([body_force(xy[0], xy[1]) for xy in ev["x"]])
            fv = np.einsum("qi,qc,q->ic", ev["basis"], bf, wdet)
            rows = (cell.rows[:, None] * 2 + np.arange(2)[None, :]).reshape(-1)
            f[rows] += fv.reshape(-1)
    K = sp.coo_matrix(
        (np.concatenate(triplets[0]),
         (np.concatenate(triplets[1]), np.concatenate(triplets[2]))),
        shape=(mesh.ndof * 2, mesh.ndof * 2),
    ).tocsr()
    return AssembledSystem(K, f, 2)


def assemble_neumann(mesh: ExtractedMesh, system: AssembledSystem, specs) -> None:
    """Add boundary tractions to the load vector (in place).

    Each spec is (patch, side, span_or_None, traction) where traction is a
    callable (x, normal) -> array of ncomp values; ``span`` restricts the
    load to a sub-interval of the side parameter (intervals are split so the
    quadrature never crosses the load boundary).
    """
    ncomp = system.ncomp
    for patch, side, span, traction in specs:
        for sc in mesh.side_cells(patch, side):
            a, b = sc.interval
            if span is not None:
                a, b = max(a, span[0]), min(b, span[1])
                if b - a <= 1e-14:
                    continue
            xs, ws = gauss_on(a, b, sc.degree + 2)
            ev = evaluate_side_cell(sc, xs)
            for q in range(len(xs)):
                t = np.atleast_1d(traction(ev["x"][q], ev["normal"][q]))
                contrib = np.outer(ev["basis"][q], t) * ws[q] * ev["speed"][q]
                rows = (sc.rows[:, None] * ncomp + np.arange(ncomp)[None, :]).reshape(-1)
                system.f[rows] += contrib.reshape(-1)


# --------------------------------------------------------------------------
# Dirichlet data


def boundary_projection(patch, side: str, fn) -> np.ndarray:
    """L2 projection of boundary data onto one side's spline space.

    Corner coefficients are set by interpolation (the basis is interpolatory
    at open-knot endpoints) and the interior coefficients solve the
    constrained L2 projection under the physical arc-length measure, so
    adjacent sides agree at shared corners.
    """
    curve = patch.boundary(side)
    kv = curve.kv
    n = kv.n
    M = np.zeros((n, n))
    rhs = np.zeros(n)
    from .splines import bspline_basis  # local import to avoid cycle noise

    for a, b in kv.spans():
        xs, ws = gauss_on(a, b, kv.degree + 2)
        for xq, wq in zip(xs, ws):
            first, N = bspline_basis(kv, xq)
            w = curve.weights[first : first + kv.degree + 1]
            R = N * w
            R /= R.sum()
            d = curve.derivatives(xq, 1)
            sp_ = float(np.linalg.norm(d[1]))
            sl = slice(first, first + kv.degree + 1)
            M[sl, sl] += wq * sp_ * np.outer(R, R)
            rhs[sl] += wq * sp_ * fn(*d[0]) * R
    lo, hi = kv.domain
    vals = np.zeros(n)
    vals[0] = fn(*curve.point(lo))
    vals[-1] = fn(*curve.point(hi))
    interior = np.arange(1, n - 1)
    if interior.size:
        rhs_i = rhs[interior] - M[interior][:, [0, n - 1]] @ vals[[0, n - 1]]
        vals[interior] = np.linalg.solve(M[np.ix_(interior, interior)], rhs_i)
    return vals


def dirichlet_rows(model_or_none, mesh: ExtractedMesh, ncomp: int, specs,
                   grids=None) -> list[tuple[int, float]]:
    """Translate per-side Dirichlet specs into (row, value) pairs.

    Specs are (patch, side, comp, fn).  Dofs replaced by interface traces are
    skipped: slave interface dofs never carry Dirichlet data directly.  When
    ``model_or_none`` is None the mesh must be a single patch.
    """
    out = []
    for patch, side, comp, fn in specs:
        p = mesh.patches[patch]
        vals = boundary_projection(p, side, fn if callable(fn) else (lambda x, y: fn))
        if model_or_none is not None:
            grid = model_or_none.grids[patch]
        else:
            grid = np.arange(p.shape[0] * p.shape[1]).reshape(p.shape)
        from .model import _edge_indices

        for k, pos in enumerate(_edge_indices(p, side)):
            dof = grid[pos]
            if dof < 0:
                continue
            out.append((int(dof) * ncomp + comp, float(vals[k])))
    return out


# --------------------------------------------------------------------------
# neo-Hookean

def strain_energy_density(mat: MaterialModel, F: np.ndarray) -> float:
    """Plane-strain energy lam(J^2-1)/4 - lam ln(J)/2 + mu(tr b - 3 - 2 ln J)/2."""
    J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    if J <= 0:
        raise NumericalError("element inversion (J <= 0)")
    trb = float(np.sum(F * F)) + 1.0  # out-of-plane stretch is 1
    lam, mu = mat.lam, mat.mu
    return lam * (0.25 * (J**2 - 1.0) - 0.5 * math.log(J)) + 0.5 * mu * (
        trb - 3.0 - 2.0 * math.log(J)
    )


def assemble_neo_hookean(mesh: ExtractedMesh, material: MaterialModel,
                         state: np.ndarray) -> tuple[np.ndarray, sp.csr_matrix]:
    """Internal residual and consistent tangent at displacement ``state``.

    Total Lagrangian plane strain: first Piola stress
    P = lam/2 (J^2-1) F^{-T} + mu (F - F^{-T}) and the matching material
    tangent; raises on element inversion.
    """
    lam, mu = material.lam, material.mu
    triplets = ([], [], [])
    r = np.zeros(mesh.ndof * 2)
    d = state.reshape(-1, 2)
    eye = np.eye(2)
    for cell in mesh.cells:
        n1, n2 = _quad_counts(cell)
        x1, x2, w = cell_quadrature(cell, n1, n2)
        ev = evaluate_cell(cell, x1, x2)
        dphi = ev["grad_phys"]
        wdet = w * ev["detJ"]
        dloc = d[cell.rows]
        nr = len(cell.rows)
        rloc = np.zeros((nr, 2))
        kloc = np.zeros((nr * 2, nr * 2))
        for q in range(len(x1)):
            gradu = dloc.T @ dphi[q]
            F = eye + gradu
            J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
            if J <= 0:
                raise NumericalError("element inversion (J <= 0)")
            Finv = np.array([[F[1, 1], -F[0, 1]], [-F[1, 0], F[0, 0]]]) / J
            FinvT = Finv.T
            P = 0.5 * lam * (J**2 - 1.0) * FinvT + mu * (F - FinvT)
            rloc += wdet[q] * dphi[q] @ P.T
            # A_iJkL = lam J^2 FinvT_iJ FinvT_kL
            #        + (mu - lam/2 (J^2-1)) FinvT_iL FinvT_kJ + mu d_ik d_JL
            gA = dphi[q] @ FinvT.T          # (nr, i-row dotted): g_ni = dphi_nJ FinvT_iJ
            c1 = lam * J**2
            c2 = mu - 0.5 * lam * (J**2 - 1.0)
            t1 = np.einsum("ni,mk->nimk", gA, gA) * c1
            t2 = np.einsum("nk,mi->nimk", gA, gA) * c2
            t3 = np.einsum("nm,ik->nimk", dphi[q] @ dphi[q].T, eye) * mu
            kloc += wdet[q] * (t1 + t2 + t3).reshape(nr * 2, nr * 2)
        r2 = (cell.rows[:, None] * 2 + np.arange(2)[None, :]).reshape(-1)
        r[r2] += rloc.reshape(-1)
        _scatter(triplets, cell.rows, 2, kloc)
    K = sp.coo_matrix(
        (np.concatenate(triplets[0]),
         (np.concatenate(triplets[1]), np.concatenate(triplets[2]))),
        shape=(mesh.ndof * 2, mesh.ndof * 2),
    ).tocsr()
    return r, K


def neo_hookean_step(mesh: ExtractedMesh, material: MaterialModel,
                     external_load: np.ndarray, state: np.ndarray,
                     load_scale: float = 1.0):
    """Out-of-balance residual and consistent tangent at one load scale."""
    rint, K = assemble_neo_hookean(mesh, material, state)
    return rint - load_scale * np.asarray(external_load), K


def newton_load_stepping(mesh: ExtractedMesh, material: MaterialModel,
                         external_load: np.ndarray, constraints,
                         increments: int = 20, tol_factor: float = 1e8,
                         max_iter: int = 25, condenser=None,
                         callback=None) -> np.ndarray:
    """Incremental Newton solve with a dead external load.

    The load is scaled in ``increments`` equal steps; each step iterates
    until the residual drops by ``tol_factor`` (with an absolute floor).
    ``external_load`` lives in the mesh numbering; ``condenser`` (mortar
    route) maps full residuals/tangents to the retained dofs and expands
    iterates back.  Constraints are (row, 0.0) pairs in the solved numbering.
    """
    nred = condenser.nred if condenser is not None else mesh.ndof * 2
    dred = np.zeros(nred)
    expand = (lambda v: v) if condenser is None else condenser.expand
    fixed = sorted({int(r) for r, _ in constraints})
    free = np.setdiff1d(np.arange(nred), fixed)
    floor = 1e-12 * (np.linalg.norm(external_load) + 1.0)
    for inc in range(1, increments + 1):
        scale = inc / increments
        fext = scale * external_load
        res0 = None
        for it in range(max_iter + 1):
            rint, K = assemble_neo_hookean(mesh, material, expand(dred))
            if condenser is not None:
                rred = condenser.reduce_vec(rint - fext)
                Kred = condenser.reduce_mat(K)
            else:
                rred = rint - fext
                Kred = K
            rnorm = np.linalg.norm(rred[free])
            if res0 is None:
                res0 = rnorm
            if rnorm <= res0 / tol_factor or rnorm <= floor:
                break
            if it == max_iter:
                raise NumericalError(
                    f"Newton did not converge in increment {inc} "
                    f"(residual {rnorm:.3e})"
                )
            sysk = AssembledSystem(Kred.tocsr(), -rred, 2)
            sysk = apply_dirichlet(sysk, [(r, 0.0) for r in fixed])
            step = linear_solve(sysk)
            # feasibility guard: halve the update while it inverts an element
            alpha = 1.0
            for _ in range(12):
                try:
                    assemble_neo_hookean(mesh, material, expand(dred + alpha * step))
                    break
                except NumericalError:
                    alpha *= 0.5
            else:
                raise NumericalError(
                    f"element inversion in increment {inc} could not be avoided"
                )
            dred = dred + alpha * step
        if callback is not None:
            callback(inc, dred)
    return dred


# --------------------------------------------------------------------------
# fields and errors


@dataclass
class SolutionField:
    """Coefficients over an extracted mesh, evaluable anywhere on any patch."""

    mesh: ExtractedMesh
    values: np.ndarray
    ncomp: int = 1

    def eval(self, patch: int, xi1: float, xi2: float) -> np.ndarray:
        cell = self.mesh.locate(patch, xi1, xi2)
        ev = evaluate_cell(cell, np.array([xi1]), np.array([xi2]), grad=False)
        coeffs = self.values.reshape(-1, self.ncomp)[cell.rows]
        return ev["basis"][0] @ coeffs

    def eval_gradient(self, patch: int, xi1: float, xi2: float) -> np.ndarray:
        cell = self.mesh.locate(patch, xi1, xi2)
        ev = evaluate_cell(cell, np.array([xi1]), np.array([xi2]))
        coeffs = self.values.reshape(-1, self.ncomp)[cell.rows]
        return np.einsum("nd,nc->cd", ev["grad_phys"][0], coeffs)


def l2_error(field: SolutionField, exact, quad_extra: int = 2,
             quantity=None) -> float:
    """Gauss-quadrature L2 distance between a field and an exact function.

    ``exact(x, y)`` returns ncomp values.  ``quantity`` optionally maps
    (values, gradients, x) at the quadrature points to a derived quantity
    (e.g. a stress component) compared against ``exact`` instead.
    """
    total = 0.0
    d = field.values.reshape(-1, field.ncomp)
    for cell in field.mesh.cells:
        n1 = cell.degrees[0] + quad_extra
        n2 = cell.degrees[1] + quad_extra
        x1, x2, w = cell_quadrature(cell, n1, n2)
        ev = evaluate_cell(cell, x1, x2)
        wdet = w * ev["detJ"]
        coeffs = d[cell.rows]
        vals = ev["basis"] @ coeffs
        if quantity is not None:
            grads = np.einsum("qnd,nc->qcd", ev["grad_phys"], coeffs)
            vals = np.array([quantity(vals[q], grads[q], ev["x"][q])
                             for q in range(len(x1))])[:, None]
            ex = np.array([exact(xy[0], xy[1]) for xy in ev["x"]])[:, None]
        else:
            ex = np.atleast_2d(
                np.array([exact(xy[0], xy[1]) for xy in ev["x"]])
            )
            if ex.shape[0] != len(x1):
                ex = ex.T
        diff = vals - ex
        total += float(np.sum(wdet * np.sum(diff * diff, axis=1)))
    return math.sqrt(total)


def l2_norm(field: SolutionField, quad_extra: int = 2) -> float:
    return l2_error(field, lambda x, y: np.zeros(field.ncomp), quad_extra)
