import warnings

import numpy as np
import pytest
import sympy as sp_
from hypothesis import given, settings, strategies as st

from stokesdarcy.fem import (ParameterWarning, PhysicalParams, ProblemData, assemble_forms,
                             assemble_interface_matrices, build_extensions, build_spaces,
                             check_extension_kernel, darcy_divergence_at, darcy_velocity_at,
                             ExtensionOps, interface_mass_vector, stokes_velocity_at)
from stokesdarcy.geometry import BoundarySpec, Rectangle, build_rect_mesh, extract_trace
from stokesdarcy.quadrature import TRIANGLE_RULES, gauss_interval

from .test_geometry import DARCY_TAGS, D_BOX, STOKES_TAGS, S_BOX


def make(n, params=PhysicalParams(1.0, 1.0), data=ProblemData(), noslip=False):
    s = build_rect_mesh(S_BOX, n, n, BoundarySpec(S_BOX, STOKES_TAGS))
    d = build_rect_mesh(D_BOX, n, n, BoundarySpec(D_BOX, DARCY_TAGS))
    spaces = build_spaces(s, d, extract_trace(s, d), noslip=noslip)
    return spaces, assemble_forms(spaces, params, data), build_extensions(spaces)


def sym_p2_matrices():
    t, h = sp_.symbols("t h", positive=True)
    basis = [(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)]
    M = sp_.Matrix(3, 3, lambda i, j: sp_.integrate(basis[i] * basis[j], (t, 0, 1)) * h)
    A = sp_.Matrix(3, 3, lambda i, j: sp_.integrate(sp_.diff(basis[i], t) * sp_.diff(basis[j], t),
                                                    (t, 0, 1)) / h)
    return M, A, h


def test_symbolic_p2_segment_matrices_match_closed_forms():
    M, A, h = sym_p2_matrices()
    assert sp_.simplify(M - h / 30 * sp_.Matrix([[4, 2, -1], [2, 16, 2], [-1, 2, 4]])) == sp_.zeros(3)
    assert sp_.simplify(A - 1 / (3 * h) * sp_.Matrix([[7, -8, 1], [-8, 16, -8], [1, -8, 7]])) == sp_.zeros(3)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_interface_matrices_against_symbolic_assembly(n):
    spaces, forms, _ = make(n)
    M, A, h = sym_p2_matrices()
    hv = 1.0 / n
    Ml = np.array(M.subs(h, hv), dtype=float)
    Al = np.array(A.subs(h, hv), dtype=float)
    full_M = np.zeros((2 * n + 1, 2 * n + 1))
    full_A = np.zeros_like(full_M)
    for k in range(n):
        idx = np.ix_(range(2 * k, 2 * k + 3), range(2 * k, 2 * k + 3))
        full_M[idx] += Ml
        full_A[idx] += Al
    np.testing.assert_allclose(forms.M_G, full_M[1:-1, 1:-1], rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(forms.A_G, full_A[1:-1, 1:-1], rtol=1e-13, atol=1e-13)


def test_interface_matrix_properties():
    spaces, forms, _ = make(8)
    M, A = forms.M_G, forms.A_G
    assert M.shape == A.shape == (15, 15)
    assert np.allclose(M, M.T, rtol=0, atol=1e-15) and np.allclose(A, A.T, rtol=0, atol=1e-12)
    assert np.linalg.eigvalsh(M).min() > 0 and np.linalg.eigvalsh(A).min() > 0
    i, j = np.nonzero(np.abs(M) + np.abs(A))
    assert np.max(np.abs(i - j)) <= 2
    assert np.linalg.norm(A @ np.ones(15)) > 0


def test_interface_dimension():
    for n, expected in [(1, 1), (8, 15), (64, 127)]:
        spaces, *_ = make(n) if n < 64 else (None,)
        if spaces is None:
            s = build_rect_mesh(S_BOX, n, 1, BoundarySpec(S_BOX, STOKES_TAGS))
            d = build_rect_mesh(D_BOX, n, 1, BoundarySpec(D_BOX, DARCY_TAGS))
            spaces = build_spaces(s, d, extract_trace(s, d))
        assert spaces.interface.ndof == expected


def test_mass_vector_integrates_basis():
    spaces, forms, _ = make(4)
    m = interface_mass_vector(spaces)
    # the constant 1 restricted to the constrained space is not in it; compare with M against
    # the unconstrained all-ones nodal vector instead
    M, _, h = sym_p2_matrices()
    row = np.array(M.subs(h, 0.25), dtype=float).sum(axis=1)
    expect = np.zeros(9)
    for k in range(4):
        expect[2 * k:2 * k + 3] += row
    np.testing.assert_allclose(m, expect[1:-1], rtol=1e-13)


@pytest.mark.parametrize("degree", [1, 2, 4])
def test_triangle_rules_exact(degree):
    x, y = sp_.symbols("x y")
    lam, w = TRIANGLE_RULES[degree]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = float(sp_.integrate(sp_.integrate(x ** a * y ** b, (y, 0, 1 - x)), (x, 0, 1))) * 2
            pts = lam[:, 1:]  # reference triangle (0,0),(1,0),(0,1)
            approx = np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b)
            assert approx == pytest.approx(exact, rel=1e-12, abs=1e-14)


def test_gauss_interval_exact_to_degree_five():
    t, w = gauss_interval(3)
    for k in range(6):
        assert np.sum(w * t ** k) == pytest.approx(1 / (k + 1), rel=1e-14)


def test_zero_data_gives_zero_loads_and_symmetric_blocks():
    spaces, forms, _ = make(4)
    for v in (forms.F_S, forms.G_S, forms.F_D, forms.G_D, forms.lift_S, forms.lift_D):
        assert not np.any(v)
    for A in (forms.A_S, forms.A_D):
        d = abs(A - A.T).max()
        assert d <= 1e-12 * abs(A).max()


def test_single_darcy_triangle_divergence_row():
    box = Rectangle(0, 1, 0, 1)
    tags = {"left": "pressure", "right": "pressure", "bottom": "pressure", "top": "interface"}
    m = build_rect_mesh(box, 1, 1, BoundarySpec(box, tags))
    s = build_rect_mesh(Rectangle(0, 1, 1, 2), 1, 1,
                        BoundarySpec(Rectangle(0, 1, 1, 2), STOKES_TAGS))
    spaces = build_spaces(s, m, extract_trace(s, m))
    forms = assemble_forms(spaces, PhysicalParams(1, 1), ProblemData())
    B = forms.B_D.toarray()
    for c in range(m.n_cells):
        expect = np.zeros(m.n_edges)
        expect[m.cell_edges[c]] = -m.cell_edge_sign[c] * m.edge_lengths()[m.cell_edges[c]]
        np.testing.assert_allclose(B[c], expect, atol=1e-15)


def test_darcy_matrix_is_weighted_rt0_mass_on_constant_fields():
    K = 0.37
    spaces, forms, _ = make(5, PhysicalParams(1.0, K))
    mesh = spaces.darcy.mesh
    c = np.array([0.8, -1.3])
    u = mesh.edge_normals() @ c  # RT0 interpolant reproduces constants exactly
    assert u @ forms.A_D @ u == pytest.approx(c @ c / K, rel=1e-12)
    vals = darcy_velocity_at(spaces.darcy, u, TRIANGLE_RULES[4][0])
    np.testing.assert_allclose(vals, np.broadcast_to(c, vals.shape), atol=1e-12)


def test_stokes_matrix_kills_rigid_motions_and_measures_strain():
    mu = 2.5
    spaces, forms, _ = make(4, PhysicalParams(mu, 0.2))
    S = spaces.stokes
    x, y = S.node_coords[:, 0], S.node_coords[:, 1]
    rigid = np.concatenate([1.0 - y, 0.5 + x])
    assert np.abs(forms.A_S @ rigid).max() <= 1e-12
    stretch = np.concatenate([x, 0 * x])  # eps = diag(1, 0)
    assert stretch @ forms.A_S @ stretch == pytest.approx(mu * 1.0, rel=1e-12)
    shear = np.concatenate([y, 0 * x])  # eps_12 = 1/2, |eps|^2 = 1/2
    assert shear @ forms.A_S @ shear == pytest.approx(mu * 0.5, rel=1e-12)


def test_stokes_divergence_exact_for_quadratic_fields():
    spaces, forms, _ = make(3)
    S = spaces.stokes
    x, y = S.node_coords[:, 0], S.node_coords[:, 1]
    u = np.concatenate([x ** 2, x * y])  # div = 3x
    mesh = S.mesh
    centroid_x = mesh.vertices[mesh.cells][:, :, 0].mean(axis=1)
    np.testing.assert_allclose(-(forms.B_S @ u), 3 * centroid_x * mesh.cell_areas(), atol=1e-14)


def test_parameter_scaling_is_exact():
    _, f1, _ = make(3, PhysicalParams(1.0, 1.0))
    _, f2, _ = make(3, PhysicalParams(0.7, 1.0 / 3.0))
    assert abs(f2.A_S - 0.7 * f1.A_S).max() <= 1e-12 * abs(f2.A_S).max()
    assert abs(f2.A_D - 3.0 * f1.A_D).max() <= 1e-12 * abs(f2.A_D).max()


def test_bjs_term_only_touches_interface_tangential_dofs():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ParameterWarning)
        spaces, f_a, _ = make(3, PhysicalParams(1.0, 1.0, alpha=0.5))
    _, f_0, _ = make(3, PhysicalParams(1.0, 1.0))
    diff = (f_a.A_S - f_0.A_S).tocoo()
    touched = set(diff.row[np.abs(diff.data) > 0]) | set(diff.col[np.abs(diff.data) > 0])
    tang = spaces.stokes.tangential
    S = spaces.stokes
    ends = S.dof(1 - S.normal_component, spaces.trace.stokes_vertices[[0, -1], [0, 1]])
    assert touched <= set(tang.tolist()) | set(ends.tolist())
    # beta * |Gamma| for a unit tangential field
    u = np.zeros(S.ndof)
    u[S.dof(0, np.arange(S.n_nodes))] = 1.0
    assert u @ (f_a.A_S - f_0.A_S) @ u == pytest.approx(0.5, rel=1e-12)


def test_parameter_warning_and_errors():
    with pytest.warns(ParameterWarning):
        PhysicalParams(10.0, 1.0)
    with pytest.warns(ParameterWarning):
        PhysicalParams(1.0, 1.0, alpha=2.0)
    with pytest.raises(ValueError):
        PhysicalParams(0.0, 1.0)
    with pytest.raises(ValueError):
        PhysicalParams(1.0, 1.0, alpha=-1)
    p = PhysicalParams.from_kappa(0.01, mu=0.1)
    assert p.K == pytest.approx(0.1) and p.kappa == pytest.approx(0.01)


def test_low_quadrature_degree_rejected():
    spaces, _, _ = make(2)
    with pytest.raises(ValueError, match="quadrature"):
        assemble_forms(spaces, PhysicalParams(1, 1), ProblemData(), quad_degree=2)


def test_pressure_datum_enters_with_outward_sign():
    # -(g_p, n_out . v) on the pressure sides: for g_p = 1 everywhere, summing over a
    # constant field v = c gives -c . (integral of n_out over the pressure sides)
    spaces, forms, _ = make(4, data=ProblemData(g_p=lambda x, y: 1.0 + 0 * x))
    mesh = spaces.darcy.mesh
    c = np.array([0.4, 0.9])
    v = mesh.edge_normals() @ c
    n_int = np.array([-1.0, 0]) + np.array([1.0, 0])  # left + right, unit length each
    assert forms.F_D @ v == pytest.approx(-(c @ n_int), abs=1e-14)
    g = ProblemData(g_p=lambda x, y: y)
    _, forms, _ = make(4, data=g)
    v = mesh.edge_normals() @ np.array([1.0, 0.0])
    # left side integral of y * (-1) plus right side integral of y * (+1) cancel
    assert forms.F_D @ v == pytest.approx(0.0, abs=1e-14)


def test_extension_supports_and_values():
    spaces, forms, ext = make(4)
    n = spaces.interface.ndof
    assert not np.any(ext.R_S @ np.zeros(n)) and not np.any(ext.R_D @ np.zeros(n))
    rows_D = set(ext.R_D.tocoo().row)
    assert rows_D == set(spaces.darcy.interface.tolist())
    rows_S = set(ext.R_S.tocoo().row)
    assert rows_S == set(spaces.stokes.interface.tolist())
    # normal component of R_S phi at the interface nodes equals phi
    S = spaces.stokes
    phi = np.linspace(-1, 2, n)
    u = ext.R_S @ phi
    normal = spaces.trace.normal
    nodes = spaces.interface.stokes_nodes
    un = u[S.dof(0, nodes)] * normal[0] + u[S.dof(1, nodes)] * normal[1]
    np.testing.assert_allclose(un, phi, atol=1e-15)


def test_extension_of_midpoint_basis_is_two_thirds():
    _, _, ext = make(1)
    assert abs(ext.R_D.toarray()).max() == pytest.approx(2 / 3, rel=1e-14)


def test_discrete_trace_property_of_darcy_extension():
    spaces, forms, ext = make(5)
    D, tr = spaces.darcy, spaces.trace
    t, w = np.polynomial.legendre.leggauss(6)
    t, w = 0.5 * (t + 1), 0.5 * w
    vals = np.stack([(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)], axis=-1)
    for j in range(spaces.interface.ndof):
        phi = np.zeros(spaces.interface.ndof)
        phi[j] = 1.0
        u = ext.R_D @ phi
        for k in range(tr.n_segments):
            idx = spaces.interface.segment_dofs(k)
            coef = np.array([phi[i] if i >= 0 else 0.0 for i in idx])
            phi_q = vals @ coef
            n_dot_u = D.interface_sign[k] * u[D.interface[k]]
            assert abs(np.sum(w * (phi_q - n_dot_u)) * tr.lengths[k]) <= 1e-12


def test_discrete_divergence_theorem_for_extension():
    spaces, forms, ext = make(6)
    m = interface_mass_vector(spaces)
    rng = np.random.default_rng(0)
    for _ in range(5):
        phi = rng.standard_normal(spaces.interface.ndof)
        # B_D = -(div u, w): summing against w = 1 gives -(-(phi,1)) = (phi, 1)
        assert (forms.B_D @ (ext.R_D @ phi)).sum() == pytest.approx(m @ phi, abs=1e-12)
        # Stokes side: the normal points out of the Stokes domain
        assert (forms.B_S @ (ext.R_S @ phi)).sum() == pytest.approx(-(m @ phi), abs=1e-12)


def test_rt0_divergence_is_cellwise_constant():
    spaces, _, _ = make(3)
    D = spaces.darcy
    mesh = D.mesh
    u = np.random.default_rng(3).standard_normal(D.ndof)
    eps = 1e-6
    lam = np.array([[0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]])
    div = darcy_divergence_at(D, u)
    for q in lam:
        # central differences of the linear field, mapped to physical coordinates
        p = mesh.vertices[mesh.cells]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        grads = []
        for d in range(2):
            e = np.zeros(3)
            e[d + 1], e[0] = eps, -eps
            up = darcy_velocity_at(D, u, (q + e)[None])[:, 0]
            um = darcy_velocity_at(D, u, (q - e)[None])[:, 0]
            grads.append((up - um) / (2 * eps))
        G = np.stack(grads, axis=2)  # d u / d (ref coords)
        phys = np.einsum("cij,cjk->cik", G, np.linalg.inv(J))
        np.testing.assert_allclose(phys[:, 0, 0] + phys[:, 1, 1], div, atol=1e-6)


def test_kernel_check():
    spaces, _, ext = make(4)
    assert check_extension_kernel(ext).ok
    assert check_extension_kernel(ext).smallest_singular_value >= 1e-8
    _, _, one = make(1)
    val = check_extension_kernel(one).smallest_singular_value
    assert val == pytest.approx(np.sqrt(1 + (2 / 3) ** 2), rel=1e-12)
    zero = ExtensionOps(R_S=0 * ext.R_S, R_D=0 * ext.R_D)
    res = check_extension_kernel(zero)
    assert not res.ok and "kernel" in res.message


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_stokes_velocity_interpolates_quadratics(coef):
    spaces, _, _ = make(2)
    S = spaces.stokes
    a = np.array(coef)

    def f(x, y):
        return a[0] + a[1] * x + a[2] * y + a[3] * x * x + a[4] * x * y + a[5] * y * y

    x, y = S.node_coords.T
    u = np.concatenate([f(x, y), -f(y, x)])
    lam, _ = TRIANGLE_RULES[4]
    pts = np.einsum("qk,ckd->cqd", lam, S.mesh.vertices[S.mesh.cells])
    vals = stokes_velocity_at(S, u, lam)
    np.testing.assert_allclose(vals[..., 0], f(pts[..., 0], pts[..., 1]), atol=1e-11)
    np.testing.assert_allclose(vals[..., 1], -f(pts[..., 1], pts[..., 0]), atol=1e-11)
