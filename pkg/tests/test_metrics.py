import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajdp.geo import Trajectory
from trajdp.metrics import (diameter, diameter_divergence, frequent_pattern_f1, info_loss,
                            js_divergence, linking_accuracy_spatial, metric_report, top_pairs,
                            trip_divergence)

from conftest import random_dataset, traj

A, B, C, D = 10, 20, 30, 40


def toy():
    return [traj([A, B, A, C], oid="t1"), traj([B, C], oid="t2"), traj([A, D], oid="t3")]


def js_direct(p, q):
    """Base-2 JS divergence written out from the KL definition."""
    p = [x / sum(p) for x in p]
    q = [x / sum(q) for x in q]
    m = [(a + b) / 2 for a, b in zip(p, q)]

    def kl(u):
        return sum(a * math.log2(a / b) for a, b in zip(u, m) if a > 0)

    return (kl(p) + kl(q)) / 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_identity_publishing(seed):
    D0 = random_dataset(np.random.default_rng(seed), 12, 30, spread=40)
    r = metric_report(D0, D0)
    assert r == {"la_s": 1.0, "inf": 0.0, "de": 0.0, "te": 0.0, "ffp": 1.0}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_metrics_bounded_and_deterministic(seed):
    rng = np.random.default_rng(seed)
    D0 = random_dataset(rng, 10, 25, spread=30)
    D1 = random_dataset(rng, 10, 25, spread=30)
    r = metric_report(D0, D1, ffp_k=5)
    assert all(0.0 <= v <= 1.0 for v in r.values())
    assert metric_report(D0, D1, ffp_k=5) == r


def test_info_loss_examples():
    assert info_loss([traj([A, B, A, C])], [traj([A, B])]) == 0.5
    assert info_loss([traj([A, B, A, C])], [traj([B, A, C, A])]) == 0.0
    assert info_loss([traj([A, B])], [Trajectory("t", [], [])]) == 1.0
    assert info_loss(toy(), toy()) == 0.0


def test_js_divergence():
    assert js_divergence([3, 0, 0], [0, 0, 5]) == 1.0
    assert js_divergence([1, 1], [2, 0]) == pytest.approx(js_direct([1, 1], [2, 0]), abs=1e-12)
    assert js_divergence([1, 2, 3], [2, 4, 6]) == pytest.approx(0.0, abs=1e-12)
    assert js_divergence([1, 5, 2], [4, 1, 1]) == pytest.approx(js_direct([1, 5, 2], [4, 1, 1]),
                                                                abs=1e-12)


def test_diameter():
    g = 8
    t = traj([0 * g + 0, 3 * g + 4, 1 * g + 1], g)
    assert diameter(t) == pytest.approx(5 / g)
    assert diameter(traj([9], g)) == 0.0
    # collinear points skip the hull
    assert diameter(traj([0, 1, 2, 3, 4], g)) == pytest.approx(4 / g)


def test_diameter_divergence_two_trajectories():
    g = 8
    orig = [traj([0], g, "a"), traj([0, 7 * g + 7], g, "b")]
    anon = [traj([0], g, "a"), traj([0], g, "b")]
    # original diameters fall in the first and last bin, anonymised both in the first
    expected = js_direct([1] + [0] * 18 + [1], [2] + [0] * 19)
    assert diameter_divergence(orig, anon) == pytest.approx(expected, abs=1e-12)


def test_trip_divergence():
    g = 64
    orig = [traj([0, 1], g, "a"), traj([63 * g + 63, 5], g, "b")]
    # starts and ends moved to cells no original trip uses
    anon = [traj([32 * g + 32], g, "a"), traj([32 * g, 32 * g], g, "b")]
    assert trip_divergence(orig, anon) == 1.0
    assert trip_divergence(orig, orig) == 0.0
    half = [orig[0], anon[1]]
    assert trip_divergence(orig, half) == pytest.approx(js_direct([1, 1, 0], [1, 0, 1]),
                                                        abs=1e-12)


def test_ffp_examples():
    # every pair of the toy set occurs once, so the top two are the lowest (a, b)
    assert top_pairs(toy(), 2) == {(A, B), (A, C)}
    anon = [traj([A, B], oid="t1"), traj([B, C], oid="t2"), traj([B, C], oid="t3")]
    assert top_pairs(anon, 2) == {(B, C), (A, B)}
    assert frequent_pattern_f1(toy(), anon, k=2) == 0.5
    assert frequent_pattern_f1(toy(), [traj([50, 60]), traj([70, 80])], k=2) == 0.0
    assert frequent_pattern_f1(toy(), toy(), k=2) == 1.0


def test_linking_single_trajectory():
    assert linking_accuracy_spatial([traj([A, B])], [traj([C, D])]) == 1.0


def test_linking_without_shared_signatures_is_guessing():
    n = 25
    g = 512
    orig = [traj([i * g + 1, i * g + 1, i * g + 2], g, f"o{i}") for i in range(n)]
    anon = [traj([i * g + 100, i * g + 200], g, f"o{i}") for i in range(n)]
    # every score is zero; all link to the first reference trajectory
    assert linking_accuracy_spatial(orig, anon) == pytest.approx(1 / n)
    assert linking_accuracy_spatial(orig, orig) == 1.0


def test_linking_tie_goes_to_first_reference():
    g = 512
    orig = [traj([1, 2], g, "x"), traj([1, 2], g, "y")]
    assert linking_accuracy_spatial(orig, orig) == 0.5


def test_unpaired_inputs_rejected():
    with pytest.raises(ValueError):
        linking_accuracy_spatial(toy(), toy()[:2])
    with pytest.raises(ValueError):
        info_loss(toy(), toy()[:2])
