import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from oracles import det_oracle, fdist, mat, pucci_oracle, rotate
from scipy.optimize import minimize_scalar

from ritzsplit import constraints as C


# ---------------------------------------------------------------- eigen2


def test_eigen2_diagonal():
    e = C.eigen2(mat(1, 0, 2))
    assert (e.lambda1, e.lambda2) == (1.0, 2.0)
    assert abs(np.sin(e.theta)) < 1e-15


def test_eigen2_offdiagonal():
    e = C.eigen2(mat(0, 1, 0))
    assert np.allclose([e.lambda1, e.lambda2], [-1, 1], atol=1e-15)
    # lambda1 = -1 has eigenvector (1, -1)/sqrt 2
    assert abs(abs(np.tan(e.theta)) - 1) < 1e-12


def test_eigen2_reconstruction(rng):
    A = rng.uniform(-5, 5, size=(1000, 3))
    e = C.eigen2(A)
    assert np.all(e.lambda1 <= e.lambda2)
    assert np.max(C.frob(e.matrix() - A)) < 1e-12
    c, s = np.cos(e.theta), np.sin(e.theta)
    Av = np.stack([A[:, 0] * c + A[:, 1] * s, A[:, 1] * c + A[:, 2] * s], -1)
    assert np.max(np.abs(Av - e.lambda1[:, None] * np.stack([c, s], -1))) < 1e-12


# ---------------------------------------------------------------- Monge-Ampere


def test_ma_feasible_fixed(backend):
    A = mat(2, 0, 3)
    assert fdist(C.project_monge_ampere(A, 6.0, backend), A) < 1e-12


def test_ma_symmetric(backend):
    Q = C.project_monge_ampere(mat(1, 0, 1), 4.0, backend)
    assert fdist(Q, mat(2, 0, 2)) < 1e-12


def test_ma_asymmetric_example(backend):
    # 1D oracle: min over t>0 of (t-3)^2 + (2/t-1)^2
    ts = np.exp(np.linspace(-10, 10, 200001))
    k = np.argmin((ts - 3) ** 2 + (2 / ts - 1) ** 2)
    res = minimize_scalar(lambda t: (t - 3) ** 2 + (2 / t - 1) ** 2,
                          bounds=(ts[k - 1], ts[k + 1]), method="bounded", options={"xatol": 1e-13})
    Q = C.project_monge_ampere(mat(3, 0, 1), 2.0, backend)
    assert fdist(Q, mat(res.x, 0, 2 / res.x)) < 1e-6


def test_ma_rejects_nonpositive_f():
    with pytest.raises(ValueError):
        C.project_monge_ampere(mat(1, 0, 1), 0.0)


def test_ma_rejects_nonfinite():
    with pytest.raises(FloatingPointError):
        C.project_monge_ampere(mat(np.nan, 0, 1), 1.0)


def test_ma_oracle_random(backend):
    rng = np.random.default_rng(7)
    A = rng.uniform(-5, 5, size=(200, 3))
    f = rng.uniform(0.05, 10, size=200)
    Q = C.project_monge_ampere(A, f, backend)
    for i in range(200):
        assert fdist(Q[i], det_oracle(A[i], f[i])) < 1e-6, i
    assert np.max(np.abs(C.ma_residual(Q, f))) < 1e-10
    e = C.eigen2(Q)
    assert np.all(e.lambda1 > 0)


def test_ma_distance_zero_iff_feasible(rng):
    for _ in range(50):
        l = rng.uniform(0.1, 5, 2)
        A = C.from_eigen(l[0], l[1], rng.uniform(0, np.pi))
        assert fdist(C.project_monge_ampere(A, l[0] * l[1]), A) < 1e-10
        # perturbed determinant or an indefinite matrix is moved
        assert fdist(C.project_monge_ampere(A, 1.1 * l[0] * l[1]), A) > 1e-6
        B = C.from_eigen(-l[0], l[1], rng.uniform(0, np.pi))
        assert fdist(C.project_monge_ampere(B, l[0] * l[1]), B) > 1e-6


# ---------------------------------------------------------------- sigma_2


def test_sigma2_negative_branch(backend):
    assert fdist(C.project_sigma2(mat(-1, 0, -1), 4.0, backend), mat(-2, 0, -2)) < 1e-12


def test_sigma2_feasible_fixed(backend):
    assert fdist(C.project_sigma2(mat(2, 0, 3), 6.0, backend), mat(2, 0, 3)) < 1e-12


def test_sigma2_indefinite_example(backend):
    A = mat(2, 0, -3)
    Q = C.project_sigma2(A, 1.0, backend)
    assert fdist(Q, det_oracle(A, 1.0, positive_only=False)) < 1e-6


def test_sigma2_oracle_random(backend):
    rng = np.random.default_rng(8)
    A = rng.uniform(-5, 5, size=(200, 3))
    f = rng.uniform(0.05, 10, size=200)
    Q = C.project_sigma2(A, f, backend)
    for i in range(200):
        assert fdist(Q[i], det_oracle(A[i], f[i], positive_only=False)) < 1e-6, i
    assert np.max(np.abs(C.ma_residual(Q, f))) < 1e-10


# ---------------------------------------------------------------- Pucci


def test_pucci_feasible_fixed(backend):
    A = mat(0.75, 0, 0.75)
    assert fdist(C.project_pucci(A, 3.0, 2.0, backend), A) < 1e-12


def test_pucci_negative_identity(backend):
    # (0.2, -0.4) is feasible at squared distance 1.8 < 2 for the origin; the
    # tie between the two orderings resolves to lambda1 <= lambda2
    Q = C.project_pucci(mat(-1, 0, -1), 0.0, 2.0, backend)
    assert fdist(Q, mat(-0.4, 0, 0.2)) < 1e-12


def test_pucci_example_oracle(backend):
    A = mat(2, 0, -1)
    Q = C.project_pucci(A, 1.0, 3.0, backend)
    assert fdist(Q, pucci_oracle(A, 1.0, 3.0)) < 1e-6


def test_pucci_example_2d_grid():
    # exhaustive 2001^2 grid of the eigenvalue box, then refinement along the curve
    g = np.linspace(-5, 5, 2001)
    L1, L2 = np.meshgrid(g, g, indexing="ij")
    F = 3 * (np.clip(L1, 0, None) + np.clip(L2, 0, None)) + np.clip(L1, None, 0) + np.clip(L2, None, 0) - 1
    near = np.abs(F) < 4 * (g[1] - g[0])
    d = np.where(near, (L1 - 2) ** 2 + (L2 + 1) ** 2, np.inf)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    Q = C.project_pucci(mat(2, 0, -1), 1.0, 3.0)
    assert abs(Q[0] - L1[i, j]) < 0.05 and abs(Q[2] - L2[i, j]) < 0.05
    assert fdist(Q, pucci_oracle(mat(2, 0, -1), 1.0, 3.0)) < 1e-6


@pytest.mark.parametrize("alpha", [2.0, 3.0, 5.0])
def test_pucci_oracle_random(backend, alpha):
    rng = np.random.default_rng(int(alpha))
    A = rng.uniform(-5, 5, size=(200, 3))
    f = rng.uniform(-5, 5, size=200)
    Q = C.project_pucci(A, f, alpha, backend)
    for i in range(200):
        assert fdist(Q[i], pucci_oracle(A[i], f[i], alpha)) < 1e-6, i
    assert np.max(np.abs(C.pucci_residual(Q, f, alpha))) < 1e-10


def test_pucci_rejects_alpha():
    with pytest.raises(ValueError):
        C.project_pucci(mat(1, 0, 1), 1.0, 1.0)


# ---------------------------------------------------------------- properties

sym = st.tuples(*[st.floats(-5, 5)] * 3).map(lambda t: mat(*t))


def _project(kind, A, f):
    if kind == C.PUCCI:
        return C.project(kind, A, f, alpha=3.0)
    return C.project(kind, A, abs(f) + 0.05)


@settings(max_examples=150, deadline=None)
@given(sym, st.floats(-5, 5), st.floats(0, 2 * np.pi),
       st.sampled_from([C.MONGE_AMPERE, C.SIGMA2, C.PUCCI]))
def test_rotation_equivariance(A, f, phi, kind):
    P = _project(kind, A, f)
    Pr = _project(kind, rotate(A, phi), f)
    e = C.eigen2(A)
    if abs(e.lambda2 - e.lambda1) < 1e-6:
        # near-repeated eigenvalues: only the spectrum is rotation invariant
        er, ep = C.eigen2(Pr), C.eigen2(P)
        assert abs(er.lambda1 - ep.lambda1) + abs(er.lambda2 - ep.lambda2) < 1e-8
    else:
        assert fdist(Pr, rotate(P, phi)) < 1e-10 * (1 + C.frob(A))


@settings(max_examples=150, deadline=None)
@given(sym, st.floats(-5, 5), st.sampled_from([C.MONGE_AMPERE, C.SIGMA2, C.PUCCI]))
def test_idempotent_and_feasible(A, f, kind):
    P = _project(kind, A, f)
    assert fdist(_project(kind, P, f), P) < 1e-10 * (1 + C.frob(P))
    if kind == C.PUCCI:
        assert abs(C.pucci_residual(P, f, 3.0)) < 1e-10 * (1 + abs(f))
    else:
        assert abs(C.ma_residual(P, abs(f) + 0.05)) < 1e-10 * (1 + C.frob(P) ** 2)


def test_backends_agree(rng):
    A = rng.uniform(-5, 5, size=(500, 3))
    f = rng.uniform(0.05, 10, size=500)
    for fn in (C.project_monge_ampere, C.project_sigma2):
        assert np.max(C.frob(fn(A, f, "numpy") - fn(A, f, "numba"))) < 1e-12
    P1 = C.project_pucci(A, f - 5, 2.0, "numpy")
    P2 = C.project_pucci(A, f - 5, 2.0, "numba")
    assert np.max(C.frob(P1 - P2)) < 1e-12


# ---------------------------------------------------------------- right-hand sides


def test_minkowski_rhs():
    assert C.effective_rhs_minkowski(1.0, [0.0, 0.0]) == 1.0
    assert C.effective_rhs_minkowski(0.5, [1.0, 1.0]) == 4.5
    b = np.array([0.5, 0.5])
    K = 4 / (1 + 4 * 0.0) ** 2
    assert C.effective_rhs_minkowski(K, 2 * (b - b)) == 4.0


def test_transport_rhs():
    def ellipse_density(y):
        y = np.asarray(y)
        inside = (y[..., 0] / 2) ** 2 + (2 * y[..., 1]) ** 2 <= 1
        return np.where(inside, 1 / np.pi, 0.0)

    assert np.isclose(C.effective_rhs_transport(1 / np.pi, ellipse_density, [0.3, 0.1]), 1.0)
    assert C.effective_rhs_transport(2.0, lambda y: 2.0 + 0 * y[..., 0], np.zeros(2)) == 1.0
    v = C.effective_rhs_transport(1 / np.pi, ellipse_density, [5.0, 5.0])
    assert np.isfinite(v) and np.isclose(v, 1 / np.pi / C.EPS_RHO)
