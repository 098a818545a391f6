import math

import numpy as np
import pytest

from ritzsplit import constraints as C
from ritzsplit import network, splitting
from ritzsplit.catalog import get
from ritzsplit.network import ICNN, MLP, Architecture
from ritzsplit.sampling import Disk, Square
from ritzsplit.splitting import ProblemSpec, SolverConfig
from ritzsplit.tensor_ad import NumericalError, eval_jet

SMALL = (2, 6, 6, 1)


def arch(kind=ICNN, widths=SMALL):
    return Architecture(kind, widths, "softplus")


def zero_net(kind=ICNN):
    net = network.init(arch(kind), np.random.default_rng(0))
    return net.with_theta(np.zeros(net.size))


def ones(x):
    return np.ones(len(x))


def zeros(x):
    return np.zeros(len(x))


# ------------------------------------------------------------------ ProblemSpec


def test_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec("nope", Square(), f=ones, phi=zeros)
    with pytest.raises(ValueError):
        ProblemSpec(C.MONGE_AMPERE, Square(), f=ones)
    with pytest.raises(ValueError):
        ProblemSpec(C.PUCCI, Square(), f=ones, phi=zeros, alpha=1.0)
    with pytest.raises(ValueError):
        ProblemSpec(C.TRANSPORT, Disk(), mu0=ones)
    with pytest.raises(ValueError):
        ProblemSpec(C.MINKOWSKI, Square(), phi=zeros)


def test_spec_without_exact():
    spec = ProblemSpec(C.MONGE_AMPERE, Square(), f=ones, phi=zeros)
    with pytest.raises(ValueError):
        spec.exact_jets(np.zeros((1, 2)))


# ------------------------------------------------------------------ P-step


def test_project_zero_net_unit_data_gives_identity():
    spec = ProblemSpec(C.MONGE_AMPERE, Square(), f=ones, phi=zeros)
    pts = np.random.default_rng(0).random((20, 2))
    pf = splitting.project_step(zero_net(), pts, spec)
    assert np.allclose(pf.P, [1.0, 0.0, 1.0], atol=1e-10)
    assert pf.grads.shape == (20, 2)


def test_project_feasible_per_kind(rng, backend):
    net = network.init(arch(MLP), rng)
    pts = rng.random((50, 2))
    for name in ("exp_alpha1", "pucci_alpha3", "minkowski"):
        spec = get(name).spec
        pf = splitting.project_step(net, pts, spec, backend)
        f = spec.rhs(pts, pf.grads)
        if spec.kind == C.PUCCI:
            r = C.pucci_residual(pf.P, f, spec.alpha)
        else:
            r = C.ma_residual(pf.P, f)
        assert np.max(np.abs(r)) < 1e-10 * max(1.0, np.max(np.abs(f)))


def test_project_fixed_point_at_exact_hessian():
    # projecting an already-feasible Hessian returns it: check through the constraint layer
    spec = get("exp_alpha1").spec
    x = np.random.default_rng(2).random((100, 2))
    H = spec.exact_jets(x).hess
    P = C.project(spec.kind, H, spec.rhs(x))
    assert np.max(np.abs(P - H)) < 1e-9


def test_project_rejects_nonpositive_data():
    f = lambda x: np.where(np.arange(len(x)) == 3, -1.0, 1.0)  # noqa: E731
    spec = ProblemSpec(C.MONGE_AMPERE, Square(), f=f, phi=zeros)
    with pytest.raises(NumericalError) as e:
        splitting.project_step(zero_net(), np.full((5, 2), 0.5), spec)
    assert e.value.index == 3


def test_init_rhs():
    spec = get("exp_alpha1").spec
    x = np.array([[0.0, 0.0], [0.3, 0.4]])
    f = spec.f(x)
    assert np.allclose(splitting.init_rhs(spec, x), 2 * np.sqrt(f))
    bad = ProblemSpec(C.MONGE_AMPERE, Square(), f=lambda x: x[:, 0] - 0.5, phi=zeros)
    with pytest.raises(ValueError, match="point 0"):
        splitting.init_rhs(bad, np.array([[0.1, 0.1], [0.9, 0.9]]))
    pucci = get("pucci_alpha2").spec
    assert np.allclose(splitting.init_rhs(pucci, x), pucci.f(x))


# ------------------------------------------------------------------ initialization


def test_init_zero_data_gives_zero():
    spec = ProblemSpec(C.MONGE_AMPERE, Disk(), f=zeros, phi=zeros)
    cfg = SolverConfig(n_c=500, n_b=100)
    net, hist = splitting.initialize(spec, arch(), np.random.default_rng(1), cfg)
    assert hist[-1].total < 1e-6
    x = Disk().sample_interior(200, np.random.default_rng(2))
    assert np.max(np.abs(network.forward(net, x))) < 1e-2


def test_init_transport_identity_gradient():
    spec = get("ot_disk_ellipse").spec
    cfg = SolverConfig(n_c=1000, n_b=100)
    net, _ = splitting.initialize(spec, network.Architecture(ICNN, network.DEFAULT_WIDTHS,
                                                             "softplus"),
                                  np.random.default_rng(3), cfg)
    x = Disk().sample_interior(1000, np.random.default_rng(4))
    g = eval_jet(net, x, order=1).grad
    assert np.mean(np.hypot(*(g - x).T)) < 1e-2


# ------------------------------------------------------------------ errors


def test_eval_grid():
    pts, mask, area = splitting.eval_grid(Disk(), 100)
    assert pts.shape == (10000, 2)
    assert area == pytest.approx(4e-4)
    assert mask.sum() * area == pytest.approx(math.pi, rel=2e-3)
    assert pts[:, 0].min() == pytest.approx(-0.99)


def test_zero_net_relative_error_one():
    r = splitting.error_report(zero_net(), get("exp_alpha1").spec)
    assert r.rel_L2 == pytest.approx(1.0) and r.rel_H2 == pytest.approx(1.0)
    assert r.pointwise.shape == (100, 100)
    assert np.all(r.pointwise >= 0)


def test_h2_quadrature_disk_ellipse():
    # closed-form integrals over the unit disk of u = x^2 + y^2/4 + 7x/2
    spec = get("ot_disk_ellipse").spec
    pts, mask, area = splitting.eval_grid(spec.domain, 100)
    J = spec.exact_jets(pts[mask])
    pi = math.pi
    exact = {
        "val": pi / 8 + pi / 128 + 12.25 * pi / 4 + pi / 48,
        "grad": 13.25 * pi + pi / 16,
        "hess": 4.25 * pi,
    }
    got = {
        "val": area * np.sum(J.val ** 2),
        "grad": area * np.sum(J.grad ** 2),
        "hess": area * np.sum(J.hess[:, 0] ** 2 + 2 * J.hess[:, 1] ** 2 + J.hess[:, 2] ** 2),
    }
    for k in exact:
        assert got[k] == pytest.approx(exact[k], rel=2e-3), k
    h2 = area * np.sum(splitting.h2_sq(J.val, J.grad, J.hess))
    assert h2 == pytest.approx(sum(exact.values()), rel=2e-3)


def test_transport_error_ignores_constant():
    spec = get("ot_disk_ellipse").spec

    class Shifted:
        pass

    # exact potential plus a constant is a perfect answer
    net = zero_net()
    r0 = splitting.error_report(net, spec)
    theta = net.theta.copy()
    theta[-1] = 5.0  # output bias
    r1 = splitting.error_report(net.with_theta(theta), spec)
    assert r1.rel_L2 == pytest.approx(r0.rel_L2, abs=1e-12)


# ------------------------------------------------------------------ outer loop


def _tiny_cfg(**kw):
    base = dict(n_c=200, n_b=40, n_iters=2, adam_first=5, adam_later=3, lbfgs_init=5,
                lbfgs_table=(4,))
    base.update(kw)
    return SolverConfig(**base)


def test_outer_rejects_zero_iterations():
    with pytest.raises(ValueError):
        splitting.outer_solve(get("exp_alpha1").spec, arch(), np.random.default_rng(0),
                              SolverConfig(n_iters=0))


def test_outer_pinn_only_for_ma():
    with pytest.raises(ValueError):
        splitting.outer_solve(get("pucci_alpha2").spec, arch(MLP), np.random.default_rng(0),
                              _tiny_cfg(mode=splitting.PINN_BASELINE))


def test_outer_callbacks_and_determinism():
    seen = []
    spec = get("exp_alpha1").spec

    def cb(k, net, err, hist):
        seen.append((k, err.iteration, len(hist)))

    a = splitting.outer_solve(spec, arch(), np.random.default_rng(9), _tiny_cfg(adaptive=True),
                              on_iteration=cb)
    b = splitting.outer_solve(spec, arch(), np.random.default_rng(9), _tiny_cfg(adaptive=True))
    assert [s[:2] for s in seen] == [(0, 0), (1, 1), (2, 2)]
    assert seen[1][2] == 3 + 4
    assert np.array_equal(a.net.theta, b.net.theta)
    assert [e.rel_L2 for e in a.errors] == [e.rel_L2 for e in b.errors]
    assert a.net.check_invariants()


def test_outer_pinn_mode_runs():
    res = splitting.outer_solve(get("exp_alpha1").spec, arch(), np.random.default_rng(1),
                                _tiny_cfg(mode=splitting.PINN_BASELINE))
    assert len(res.errors) == 3
    assert all(np.isfinite(e.rel_L2) for e in res.errors)
