import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ritzsplit import jet as J
from ritzsplit import network as nw
from ritzsplit import tensor_ad as ad


def linear_net(w=(2.0, 3.0), b=1.0):
    # ICNN with a dead hidden unit: output = L1 x + b1
    net = nw.NetworkParams(nw.Architecture(nw.ICNN, (2, 1, 1)), np.zeros(7))
    net.L[1][0] = w
    net.b[1][0] = b
    return net


def softplus_net():
    net = nw.NetworkParams(nw.Architecture(nw.MLP, (2, 1, 1)), np.zeros(5))
    net.W[0][0] = (1.0, 0.0)
    net.W[1][0, 0] = 1.0
    return net


def jet_oracle(net, x):
    """Network evaluated with generic dual-number arithmetic."""
    x1, x2 = J.Jet.variables(x)
    h = None
    for li, (nin, nout, wo, lo, bo) in enumerate(net.layout):
        W = net.theta[wo:wo + nin * nout].reshape(nout, nin)
        b = net.theta[bo:bo + nout]
        z = []
        for k in range(nout):
            if li == 0:
                zk = x1 * W[k, 0] + x2 * W[k, 1] + b[k]
            else:
                zk = b[k] + 0.0 * x1
                for j in range(nin):
                    zk = zk + h[j] * W[k, j]
                if lo >= 0:
                    Lm = net.theta[lo:lo + 2 * nout].reshape(nout, 2)
                    zk = zk + x1 * Lm[k, 0] + x2 * Lm[k, 1]
            z.append(zk)
        h = z if li == len(net.layout) - 1 else [J.softplus(zk) for zk in z]
    return h[0]


def test_linear_network_jet(backend):
    jets = ad.eval_jet(linear_net(), np.array([1.0, 1.0]), backend=backend)
    assert jets.val == pytest.approx(6.0)
    np.testing.assert_allclose(jets.grad, [2.0, 3.0])
    np.testing.assert_allclose(jets.hess, [0.0, 0.0, 0.0])


def test_softplus_network_jet(backend):
    jets = ad.eval_jet(softplus_net(), np.zeros(2), backend=backend)
    assert jets.val == pytest.approx(np.log(2.0), abs=1e-15)
    np.testing.assert_allclose(jets.grad, [0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(jets.hess, [0.25, 0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("kind", [nw.MLP, nw.ICNN])
def test_hessian_matches_finite_differences(kind, backend, rng):
    net = nw.init(nw.Architecture(kind, (2, 10, 10, 10, 10, 1)), rng)
    net.theta += 0.1 * rng.standard_normal(net.size) * ~net.nonneg_mask
    x = rng.uniform(-1, 1, (20, 2))
    jets = ad.eval_jet(net, x, backend=backend)
    h = 1e-4
    fd = np.zeros((20, 3))
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        gp = ad.eval_jet(net, x + e, order=1, backend=backend).grad
        gm = ad.eval_jet(net, x - e, order=1, backend=backend).grad
        col = (gp - gm) / (2 * h)
        if d == 0:
            fd[:, 0] = col[:, 0]
            fd[:, 1] = 0.5 * col[:, 1]
        else:
            fd[:, 1] += 0.5 * col[:, 0]
            fd[:, 2] = col[:, 1]
    scale = np.maximum(np.abs(jets.hess), np.abs(jets.hess).max())
    assert np.all(np.abs(fd - jets.hess) <= 1e-5 * scale)


def test_kernels_match_dual_number_oracle(backend, rng):
    net = nw.init(nw.Architecture(nw.ICNN, (2, 6, 5, 1)), rng)
    x = rng.uniform(-2, 2, (15, 2))
    jets = ad.eval_jet(net, x, backend=backend)
    ref = jet_oracle(net, x)
    np.testing.assert_allclose(jets.val, ref.val, rtol=1e-13)
    np.testing.assert_allclose(jets.grad, ref.grad, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(jets.hess, ref.hess, rtol=1e-11, atol=1e-14)


def test_backends_agree(rng):
    net = nw.init(nw.Architecture(nw.ICNN), rng)
    x = rng.random((50, 2))
    a = ad.Tape(net, x, backend="numpy")
    b = ad.Tape(net, x, backend="numba")
    np.testing.assert_allclose(a.jets.hess, b.jets.hess, rtol=1e-13, atol=1e-15)
    adj = rng.standard_normal((3, 50, 3))
    ga = a.backward(adj[0, :, 0], adj[1, :, :2], adj[2])
    gb = b.backward(adj[0, :, 0], adj[1, :, :2], adj[2])
    np.testing.assert_allclose(ga, gb, rtol=1e-12, atol=1e-13)


# ---------------------------------------------------------------------------
# parameter gradients


def fd_directional(f, theta, direction, h=1e-5):
    return (f(theta + h * direction) - f(theta - h * direction)) / (2 * h)


def test_value_squared_gradient_is_analytic(backend):
    net = linear_net()
    x0 = np.array([[0.3, -0.7]])

    def obj(jets):
        v = jets.val
        return (v ** 2).sum(), 2 * v, None, None

    val, g = ad.param_gradient(net, x0, obj, order=0, backend=backend)
    v = 2 * 0.3 + 3 * -0.7 + 1
    assert val == pytest.approx(v * v)
    lay = net.layout
    # dv/dL1 = x, dv/db1 = 1, dv/dW1 = hidden activation softplus(0)
    lo, bo, wo = lay[1, 3], lay[1, 4], lay[1, 2]
    np.testing.assert_allclose(g[lo:lo + 2], 2 * v * x0[0])
    assert g[bo] == pytest.approx(2 * v)
    assert g[wo] == pytest.approx(2 * v * np.log(2.0))


def hess_target_objective(target):
    def obj(jets):
        d = jets.hess - target
        val = (d[:, 0] ** 2 + 2 * d[:, 1] ** 2 + d[:, 2] ** 2).sum()
        adj = np.stack([2 * d[:, 0], 4 * d[:, 1], 2 * d[:, 2]], axis=1)
        return val, None, None, adj
    return obj


@pytest.mark.parametrize("kind", [nw.MLP, nw.ICNN])
def test_hessian_objective_gradient_matches_fd(kind, backend, rng):
    net = nw.init(nw.Architecture(kind), rng)
    x0 = rng.random((1, 2))
    obj = hess_target_objective(np.array([1.0, 0.0, 1.0]))
    _, g = ad.param_gradient(net, x0, obj, backend=backend)

    def f(theta):
        return ad.param_gradient(net.with_theta(theta), x0, obj, backend=backend)[0]

    for _ in range(5):
        u = rng.standard_normal(net.size)
        fd = fd_directional(f, net.theta, u)
        assert abs(fd - g @ u) <= 1e-5 * max(abs(fd), 1e-8)


def test_mixed_objective_gradient_matches_fd(backend, rng):
    net = nw.init(nw.Architecture(nw.ICNN), rng)
    x = rng.random((7, 2))

    def obj(j):
        val = np.sum(np.sin(j.val) * j.grad[:, 0] + j.hess[:, 1] * j.grad[:, 1] ** 2)
        av = np.cos(j.val) * j.grad[:, 0]
        ag = np.stack([np.sin(j.val), 2 * j.hess[:, 1] * j.grad[:, 1]], axis=1)
        ah = np.zeros_like(j.hess)
        ah[:, 1] = j.grad[:, 1] ** 2
        return val, av, ag, ah

    _, g = ad.param_gradient(net, x, obj, backend=backend)

    def f(theta):
        return ad.param_gradient(net.with_theta(theta), x, obj, backend=backend)[0]

    for _ in range(5):
        u = rng.standard_normal(net.size)
        fd = fd_directional(f, net.theta, u)
        assert abs(fd - g @ u) <= 1e-5 * max(abs(fd), 1e-8)


def test_zero_objective_gives_zero_gradient(rng):
    net = nw.init(nw.Architecture(nw.MLP), rng)
    _, g = ad.param_gradient(net, rng.random((4, 2)), lambda j: (0.0, None, None, None))
    assert np.all(g == 0.0)


def test_gradient_is_linear_over_points(backend, rng):
    net = nw.init(nw.Architecture(nw.ICNN), rng)
    x = rng.random((12, 2))
    obj = hess_target_objective(np.array([2.0, 0.5, 1.0]))
    _, g_all = ad.param_gradient(net, x, obj, backend=backend)
    g_sum = sum(ad.param_gradient(net, x[i:i + 1], obj, backend=backend)[1] for i in range(12))
    np.testing.assert_allclose(g_all, g_sum, rtol=1e-11, atol=1e-12)


def test_non_finite_reports_point_index():
    net = linear_net()
    x = np.array([[0.0, 0.0], [np.nan, 1.0]])
    with pytest.raises(ad.NumericalError) as err:
        ad.eval_jet(net, x)
    assert err.value.index == 1


def test_icnn_hessian_is_psd(backend, rng):
    net = nw.init(nw.Architecture(nw.ICNN), rng)
    x = rng.uniform(-3, 3, (1000, 2))
    h = ad.eval_jet(net, x, backend=backend).hess
    tr = h[:, 0] + h[:, 2]
    disc = np.sqrt(((h[:, 0] - h[:, 2]) / 2) ** 2 + h[:, 1] ** 2)
    assert np.min(tr / 2 - disc) >= -1e-10


# ---------------------------------------------------------------------------
# dual-number arithmetic: random expression trees vs finite differences

UNARY = {
    "exp": lambda u: J.exp(u * 0.3),
    "log": lambda u: J.log(u * u + 1.0),
    "sqrt": lambda u: J.sqrt(u * u + 2.0),
    "softplus": J.softplus,
    "recip": lambda u: 1.0 / (u * u + 1.5),
    "pow": lambda u: (u * u + 1.0) ** 1.5,
}
NUMERIC_UNARY = {
    "exp": lambda u: np.exp(u * 0.3),
    "log": lambda u: np.log(u * u + 1.0),
    "sqrt": lambda u: np.sqrt(u * u + 2.0),
    "softplus": lambda u: np.logaddexp(0.0, u),
    "recip": lambda u: 1.0 / (u * u + 1.5),
    "pow": lambda u: (u * u + 1.0) ** 1.5,
}

leaf = st.sampled_from(["x1", "x2", "c"])
trees = st.recursive(
    leaf,
    lambda kids: st.one_of(
        st.tuples(st.sampled_from(sorted(UNARY)), kids),
        st.tuples(st.sampled_from(["+", "-", "*"]), kids, kids),
    ),
    max_leaves=6,
)


def evaluate(tree, x1, x2, unary):
    if tree == "x1":
        return x1
    if tree == "x2":
        return x2
    if tree == "c":
        return x1 * 0.0 + 0.7
    if len(tree) == 2:
        return unary[tree[0]](evaluate(tree[1], x1, x2, unary))
    a = evaluate(tree[1], x1, x2, unary)
    b = evaluate(tree[2], x1, x2, unary)
    return {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b}[tree[0]]()


@settings(max_examples=60, deadline=None)
@given(trees, st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_dual_numbers_obey_leibniz_and_chain_rule(tree, a, b):
    x = np.array([[a, b]])
    jt = J.lift(lambda x1, x2: evaluate(tree, x1, x2, UNARY), x)

    def val(p):
        return float(np.asarray(evaluate(tree, p[0], p[1], NUMERIC_UNARY)))

    h = 1e-4
    p0 = np.array([a, b])
    e = np.eye(2) * h
    grad = np.array([(val(p0 + e[i]) - val(p0 - e[i])) / (2 * h) for i in range(2)])
    h11 = (val(p0 + e[0]) - 2 * val(p0) + val(p0 - e[0])) / h ** 2
    h22 = (val(p0 + e[1]) - 2 * val(p0) + val(p0 - e[1])) / h ** 2
    h12 = (val(p0 + e[0] + e[1]) - val(p0 + e[0] - e[1]) - val(p0 - e[0] + e[1])
           + val(p0 - e[0] - e[1])) / (4 * h * h)
    scale = 1.0 + abs(val(p0))
    np.testing.assert_allclose(jt.grad[0], grad, atol=1e-6 * scale)
    np.testing.assert_allclose(jt.hess[0], [h11, h12, h22], atol=2e-4 * scale)
