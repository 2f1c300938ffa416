import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgelu.gate_math import sigmoid
from lgelu.network import backward, build_network, cross_entropy_batch, forward
from lgelu.optim import OptimizerConfig, OptimizerKind, init_state, step
from lgelu.reparam import (
    LAMBDA_FLOOR,
    HardnessParam,
    InitMode,
    dlambda_ds,
    init_profile,
    lambda_from_s,
    lambda_of,
    s_for_lambda,
)

from oracles import central_diff


class TestLambdaOf:
    def test_closed_form(self):
        assert lambda_of(HardnessParam(0.0, 0.1)) == pytest.approx(1 + math.log(2), rel=1e-15)

    def test_linear_asymptote(self):
        assert lambda_of(HardnessParam(100.0, 0.1)) == pytest.approx(1001.0, rel=1e-12)

    def test_strictly_above_one(self):
        lam = lambda_of(HardnessParam(-10.0, 0.1))
        assert lam > 1.0
        # true value 1 + 3.7e-44 is below float64 resolution at 1
        assert lam == LAMBDA_FLOOR

    def test_bad_temperature(self):
        for t in (0.0, -0.1, float("inf")):
            with pytest.raises(ValueError):
                HardnessParam(0.0, t)

    def test_constraint_million_samples(self):
        rng = np.random.default_rng(0)
        s = rng.uniform(-1e4, 1e4, 1_000_000)
        t = rng.uniform(0.01, 10.0, 1_000_000)
        lam = lambda_from_s(s, t)
        assert np.all(lam > 1.0)
        assert np.all(np.isfinite(lam))


class TestDerivative:
    def test_at_zero(self):
        assert dlambda_ds(HardnessParam(0.0, 0.1)) == pytest.approx(5.0, rel=1e-15)

    @settings(max_examples=200)
    @given(st.floats(-3.0, 3.0), st.sampled_from([0.1, 0.3, 0.6, 0.9, 2.0]))
    def test_matches_finite_differences(self, s, t):
        analytic = dlambda_ds(HardnessParam(s, t))
        # lambda - 1 via libm; differencing lambda itself near 1 would lose
        # digits to the float64 spacing at 1
        excess = lambda u: math.log1p(math.exp(u / t))
        assert central_diff(excess, s, 1e-5 * t) == pytest.approx(analytic, rel=1e-6)
        if s / t > -5:
            fd = central_diff(lambda u: lambda_from_s(u, t), s, 1e-5 * t)
            assert fd == pytest.approx(analytic, rel=1e-6)

    def test_vanishes_toward_lower_boundary(self):
        vals = [dlambda_ds(HardnessParam(s, 0.1)) for s in (-1.0, -3.0, -10.0, -50.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-200
        assert all(0 < v < 1 / 0.1 for v in vals)


class TestInverse:
    def test_inverts_origin(self):
        assert s_for_lambda(1 + math.log(2), 0.1) == pytest.approx(0.0, abs=1e-15)

    def test_lambda_two(self):
        s = s_for_lambda(2.0, 0.1)
        # 0.1 * log(e - 1), evaluated with mpmath at 30 digits
        assert s == pytest.approx(0.05413248546129181, rel=1e-13)
        assert lambda_from_s(s, 0.1) == pytest.approx(2.0, rel=1e-15)

    def test_near_one(self):
        s = s_for_lambda(1.000001, 0.1)
        assert s < -1.0
        assert abs(lambda_from_s(s, 0.1) - 1.000001) / 1.000001 < 1e-9

    @pytest.mark.parametrize("t", [0.1, 0.3, 0.6, 0.9])
    def test_round_trip(self, t):
        lams = np.concatenate([1 + np.geomspace(1e-6, 1.0, 200), np.geomspace(2.0, 1e3, 200)])
        for lam in lams:
            back = lambda_from_s(s_for_lambda(lam, t), t)
            assert abs(back - lam) / lam < 1e-9

    @pytest.mark.parametrize("lam", [1.0, 0.5, float("nan")])
    def test_rejects(self, lam):
        with pytest.raises(ValueError):
            s_for_lambda(lam, 0.1)


class TestInitProfile:
    def test_uniform(self):
        ps = init_profile(InitMode.UNIFORM, 4, 0.1)
        assert [round(p.lambda_(), 10) for p in ps] == [1.0001] * 4
        assert not any(p.frozen for p in ps)

    def test_increasing(self):
        lams = [p.lambda_() for p in init_profile(InitMode.INCREASING, 4, 0.1)]
        # linear spacing from 1 + 1e-4 to 2 in three equal steps
        expected = [1.0001, 1.0001 + 0.9999 / 3, 1.0001 + 2 * 0.9999 / 3, 2.0]
        assert lams == pytest.approx(expected, rel=1e-12)
        assert lams == pytest.approx([1.0001, 1.3334, 1.6667, 2.0], abs=1e-4)

    def test_decreasing_is_reverse(self):
        inc = [p.lambda_() for p in init_profile(InitMode.INCREASING, 5, 0.3)]
        dec = [p.lambda_() for p in init_profile(InitMode.DECREASING, 5, 0.3)]
        assert dec == pytest.approx(inc[::-1], rel=1e-12)
        assert all(a > b for a, b in zip(dec, dec[1:]))

    def test_custom_delta(self):
        ps = init_profile(InitMode.UNIFORM, 2, 0.1, delta=1e-2)
        assert ps[0].lambda_() == pytest.approx(1.01, rel=1e-12)


def _relative_step_discrepancy(s0, t, lr, net, x, y):
    """Run one SGD step on s and compare the realized lambda change with
    the first-order prediction -lr_s * sigma(s/t)^2 / t^2 * dL/dlambda."""
    p = net.hardness[0]
    p.s = s0
    logits, cache = forward(net, x)
    _, g = cross_entropy_batch(logits, y)
    grads = backward(net, cache, g)
    lam0 = lambda_of(p)
    cfg = OptimizerConfig(kind=OptimizerKind.SGD, lr_weights=lr, multiplier_c=1.0, weight_decay=0.0)
    saved = [(l.weights.copy(), l.bias.copy()) for l in net.layers]
    step(init_state(net), net, grads, cfg)
    realized = lambda_of(p) - lam0
    predicted = -lr * sigmoid(s0 / t) ** 2 / t ** 2 * grads.lambdas[0]
    for l, (w, b) in zip(net.layers, saved):
        l.weights[...] = w
        l.bias[...] = b
    return abs(realized - predicted) / abs(predicted), grads.s[0]


@pytest.mark.parametrize("s0", [-1.0, 0.0, 1.0])
@pytest.mark.parametrize("t", [0.1, 0.3])
def test_effective_step_first_order(s0, t):
    rng = np.random.default_rng(11)
    net = build_network([3, 5, 2], rng, t=t)
    x = rng.normal(size=(16, 3))
    y = rng.integers(0, 2, 16)
    net.hardness[0].s = s0
    logits, cache = forward(net, x)
    gs = backward(net, cache, cross_entropy_batch(logits, y)[1]).s[0]
    lr = 0.05 * t / abs(gs)  # |delta s| = 0.05 t
    d_full, _ = _relative_step_discrepancy(s0, t, lr, net, x, y)
    d_half, _ = _relative_step_discrepancy(s0, t, lr / 2, net, x, y)
    assert 1.6 <= d_full / d_half <= 2.4
