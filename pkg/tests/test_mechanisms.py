import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trajdp.mechanisms import (ConfigurationError, LaplaceParams, budget_report,
                               laplace_from_uniform, perturb_pf, perturb_tf, round_half_away,
                               sample_laplace)


def test_inverse_cdf_examples():
    assert laplace_from_uniform(0.5, 3.7, 2.0) == 3.7
    assert laplace_from_uniform(0.75, 0.0, 2.0) == pytest.approx(2 * math.log(2), abs=1e-12)
    assert laplace_from_uniform(0.25, -3.0, 2.0) == pytest.approx(-4.38629, abs=1e-5)


def test_round_half_away():
    assert [round_half_away(x) for x in (0.4, 0.5, 1.5, 2.5, -0.5, -2.5, -0.4)] == \
        [0, 1, 2, 3, -1, -3, 0]
    assert round_half_away(np.array([2.5, -2.5, 0.49])).tolist() == [3, -3, 0]


@pytest.mark.parametrize("mu,scale", [(0.0, 1.0), (-5.0, 2.0), (3.0, 0.5)])
def test_sampler_moments(mu, scale):
    n = 10 ** 6
    x = sample_laplace(LaplaceParams(mu, scale), np.random.default_rng(1), size=n)
    # mean: sd sqrt(2)*scale; mean absolute deviation estimates scale with sd scale
    assert abs(x.mean() - mu) <= 3 * math.sqrt(2) * scale / math.sqrt(n)
    assert abs(np.abs(x - mu).mean() - scale) <= 3 * scale / math.sqrt(n)


def test_scalar_and_vector_samplers_share_the_transform():
    p = LaplaceParams(1.0, 2.0)
    a = [sample_laplace(p, np.random.default_rng(7)) for _ in range(1)]
    b = sample_laplace(p, np.random.default_rng(7), size=1)
    assert a[0] == pytest.approx(b[0], abs=1e-12)


def test_laplace_params_validate():
    with pytest.raises(ConfigurationError):
        LaplaceParams(0.0, 0.0)


def test_perturb_tf_examples():
    r = perturb_tf([5], [3], 1.0, 10, noise=[0.4])
    assert r.perturbed.tolist() == [3]
    r = perturb_tf([5], [1], 1.0, 10, noise=[-2.2])
    assert r.perturbed.tolist() == [0]
    r = perturb_tf([5], [3], 1.0, 3, noise=[1.7])
    assert r.perturbed.tolist() == [3]


def test_perturb_tf_orders_by_key():
    r = perturb_tf([9, 2, 5], [1, 2, 3], 1.0, 10, noise=[0.0, 0.0, 0.0])
    assert r.keys.tolist() == [2, 5, 9]
    assert r.perturbed.tolist() == [2, 3, 1]


@given(st.lists(st.tuples(st.integers(0, 50), st.floats(-80, 80)), min_size=1, max_size=20),
       st.integers(1, 60))
def test_tf_rounds_then_clamps(entries, n):
    l = [min(v, n) for v, _ in entries]
    eta = [e for _, e in entries]
    r = perturb_tf(list(range(len(l))), l, 1.0, n, noise=eta)
    for i, (li, e) in enumerate(zip(l, eta)):
        assert r.perturbed[i] == min(max(round_half_away(li + e), 0), n)


def test_perturb_pf_trace():
    # stage 1: 2 + (-1.6) rounds to 0, a change of -2, so the stage-2 mean is +2
    r = perturb_pf([1, 2], [2, 1], 1, 1.0, noise=[-1.6, 1.8])
    assert r.perturbed.tolist() == [0, 3]
    assert r.mean_stage1_noise == -2.0
    assert r.stage1 == 1
    assert int(r.perturbed.sum() - r.original.sum()) == 0


def test_perturb_pf_zero_noise_and_clamp():
    r = perturb_pf([1, 2, 3], [4, 5, 6], 2, 1.0, noise=[0.0, 0.0, 0.0])
    assert r.perturbed.tolist() == [4, 5, 6]
    r = perturb_pf([1], [5], 1, 1.0, noise=[-7.4])
    assert r.perturbed.tolist() == [0]


def test_stage2_is_centred_on_the_stage1_change():
    eps = 0.5
    resid = []
    for seed in range(2000):
        r = perturb_pf(list(range(4)), [40, 30, 3, 2], 2, eps, np.random.default_rng(seed))
        resid.extend((r.noise[2:] + r.mean_stage1_noise).tolist())
    sd = math.sqrt(2) / eps / math.sqrt(len(resid))
    assert abs(np.mean(resid)) <= 3 * sd


def test_stage1_uses_list_length_when_short():
    r = perturb_pf([1, 2], [3, 3], 10, 1.0, noise=[-3.0, 0.0])
    assert r.stage1 == 2
    assert r.mean_stage1_noise == -1.5  # (-3 + 0) / 2, not / 10


@pytest.mark.parametrize("eps", [0.0, -1.0, float("inf"), None])
def test_bad_budgets(eps):
    with pytest.raises(ConfigurationError):
        perturb_tf([1], [1], eps, 2, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        perturb_pf([1], [1], 1, eps, np.random.default_rng(0))


def test_budget_accounting():
    b = budget_report("GL", epsilon=1.0)
    assert (b.eps_global, b.eps_local, b.total) == (0.5, 0.5, 1.0)
    assert budget_report("pureL", eps_local=0.5).total == 0.5
    assert budget_report("pureL", eps_local=0.5).eps_global == 0.0
    b = budget_report("GL", eps_global=0.3, eps_local=0.7)
    assert b.total == pytest.approx(1.0)
    assert budget_report("GL", epsilon=1.0, eps_global=0.2).eps_local == pytest.approx(0.8)
    with pytest.raises(ConfigurationError):
        budget_report("GL", epsilon=1.0, eps_global=0.3, eps_local=0.3)
    with pytest.raises(ConfigurationError):
        budget_report("GL")
    with pytest.raises(ConfigurationError):
        budget_report("nope", epsilon=1.0)


def test_fixed_seed_reproduces_noise():
    a = perturb_tf([1, 2, 3], [1, 1, 1], 1.0, 5, np.random.default_rng(3))
    b = perturb_tf([1, 2, 3], [1, 1, 1], 1.0, 5, np.random.default_rng(3))
    assert a.noise.tolist() == b.noise.tolist()
