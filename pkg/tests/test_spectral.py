import math

import numpy as np
import pytest

from conftest import random_hypergraph, random_uniform_hypergraph
from hyperlap.energy import INF, EnergyParams, grad_phi_pq, phi_p, phi_pq
from hyperlap.errors import Disconnected, NotMeanFree, ZeroVector
from hyperlap.hypergraph import nu_E, validate
from hyperlap.spectral import (
    EigenOptions,
    decay_envelope,
    eigen_first_positive,
    eigen_reference,
    minimal_section_trace,
    moreau_envelope,
    poincare_constants,
    rayleigh,
    resolvent_gap_bound,
    resolvent_p,
    resolvent_pq,
    spectral_report,
    upper_constant_q,
    yosida,
    yosida_gap_bound,
    yosida_schedule_q,
)


def _disconnected():
    return validate({"n": 4, "m": 0, "edges": [{"v": [1, 2], "w": 1.0}, {"v": [3, 4], "w": 1.0}]})


def test_poincare_single_edge(single_edge):
    constants = poincare_constants(single_edge, 2.0)
    assert constants.gamma == pytest.approx(0.25)
    assert constants.Gamma == pytest.approx(8.0)
    assert constants.diam == 1
    assert constants.nu_E == 1


def test_poincare_sandwich(rng):
    for _ in range(10):
        graph = random_hypergraph(rng, int(rng.integers(3, 7)), 3)
        for p in (1.5, 2.0, 3.0):
            constants = poincare_constants(graph, p)
            for _ in range(50):
                x = rng.standard_normal(graph.N)
                dev = np.linalg.norm(x - x.mean()) ** p
                for q in (2.0, 8.0):
                    value = p * phi_pq(graph, EnergyParams(p, q), x)
                    assert constants.gamma * dev <= value * (1 + 1e-12)
                    assert value <= constants.Gamma * dev * (1 + 1e-12)


def test_poincare_weight_scaling(rng):
    graph = random_hypergraph(rng, 5, 2)
    base = poincare_constants(graph, 2.5)
    scaled = poincare_constants(graph.scaled(3.0), 2.5)
    assert scaled.gamma == pytest.approx(3.0 * base.gamma)
    assert scaled.Gamma == pytest.approx(3.0 * base.Gamma)


def test_poincare_disconnected():
    with pytest.raises(Disconnected) as info:
        poincare_constants(_disconnected(), 2.0)
    assert info.value.tag == "spectral/Disconnected"


def test_upper_constant_q(single_edge, rng):
    assert upper_constant_q(single_edge, 2.0, 2.0) == pytest.approx(2.0)
    assert upper_constant_q(single_edge, 2.0, INF) == pytest.approx(4.0)

    for _ in range(10):
        graph = random_hypergraph(rng, int(rng.integers(3, 7)), 3)
        for p in (2.0, 3.0):
            Gamma = poincare_constants(graph, p).Gamma
            for q in (2.0, 4.0, 8.0):
                Gamma_q = upper_constant_q(graph, p, q)
                assert Gamma_q <= Gamma
                for _ in range(20):
                    x = rng.standard_normal(graph.N)
                    dev = np.linalg.norm(x - x.mean()) ** p
                    assert p * phi_pq(graph, EnergyParams(p, q), x) <= Gamma_q * dev * (1 + 1e-12)


def test_decay_envelope(single_edge):
    constants = poincare_constants(single_edge, 2.0)
    t = np.linspace(0.0, 2.0, 11)
    lower, upper = decay_envelope(constants, 2.0, 3.0, t)
    assert np.allclose(lower, 3.0 * np.exp(-8.0 * t))
    assert np.allclose(upper, 3.0 * np.exp(-0.25 * t))

    for p in (1.5, 2.0, 3.0):
        lower, upper = decay_envelope(poincare_constants(single_edge, p), p, 2.0, [0.0])
        assert lower[0] == pytest.approx(2.0) and upper[0] == pytest.approx(2.0)

    lower, upper = decay_envelope(poincare_constants(single_edge, 1.5), 1.5, 1.0, [1e3])
    assert lower[0] == 0.0 and upper[0] == 0.0

    lower, upper = decay_envelope(constants, 2.0, 0.0, t)
    assert np.all(lower == 0.0) and np.all(upper == 0.0)


def test_resolvent_single_edge(single_edge):
    z = resolvent_pq(single_edge, 2.0, 2.0, 0.5, [1.0, 0.0])
    assert np.max(np.abs(z - [0.75, 0.25])) <= 1e-12
    z_p = resolvent_p(single_edge, 2.0, 0.5, [1.0, 0.0])
    assert np.max(np.abs(z_p - [0.75, 0.25])) <= 1e-7


def test_yosida_single_edge(single_edge):
    assert np.allclose(yosida(single_edge, 2.0, 2.0, 0.5, [1.0, 0.0]), [0.5, -0.5], atol=1e-10)
    assert np.allclose(yosida(single_edge, 2.0, INF, 0.5, [1.0, 0.0]), [0.5, -0.5], atol=1e-6)


def test_resolvent_preserves_mean(rng):
    for _ in range(5):
        graph = random_hypergraph(rng, 5, 2, max_size=3)
        x = rng.standard_normal(graph.N)
        assert abs(resolvent_pq(graph, 3.0, 4.0, 0.3, x).mean() - x.mean()) <= 1e-12
        assert abs(resolvent_p(graph, 2.0, 0.3, x).mean() - x.mean()) <= 1e-12


def test_resolvent_nonexpansive(rng):
    for _ in range(5):
        graph = random_hypergraph(rng, 5, 2, max_size=3)
        x, y = rng.standard_normal(graph.N), rng.standard_normal(graph.N)
        gap = np.linalg.norm(x - y)
        Rx, Ry = resolvent_pq(graph, 3.0, 4.0, 0.5, x), resolvent_pq(graph, 3.0, 4.0, 0.5, y)
        assert np.linalg.norm(Rx - Ry) <= gap * (1 + 1e-9)
        Px, Py = resolvent_p(graph, 2.0, 0.5, x), resolvent_p(graph, 2.0, 0.5, y)
        assert np.linalg.norm(Px - Py) <= gap + 1e-6


def test_yosida_is_gradient_at_resolvent(rng):
    for _ in range(5):
        graph = random_hypergraph(rng, 5, 2, max_size=3)
        x = rng.standard_normal(graph.N)
        params = EnergyParams(3.0, 4.0)
        A = yosida(graph, 3.0, 4.0, 0.5, x)
        assert np.max(np.abs(A - grad_phi_pq(graph, params, resolvent_pq(graph, 3.0, 4.0, 0.5, x)))) <= 1e-8


def test_resolvent_gap_bound(rng):
    for _ in range(4):
        graph = random_uniform_hypergraph(rng, 5, 3, 3)
        for _ in range(25):
            x = rng.standard_normal(graph.N)
            exact = resolvent_p(graph, 2.0, 0.2, x)
            for q in (4.0, 8.0, 16.0):
                measured = float(np.sum((exact - resolvent_pq(graph, 2.0, q, 0.2, x)) ** 2))
                assert measured <= resolvent_gap_bound(graph, 2.0, q, 0.2, x)


def test_yosida_schedule_and_gap(triangle_edge, rng):
    assert yosida_schedule_q(1.0, 2.0, 0.1, 0.5) == 2.0
    assert yosida_schedule_q(3.0, 2.0, 0.1, 0.5) == 71

    delta = 0.5
    for lam in (1e-1, 1e-2):
        q = yosida_schedule_q(nu_E(triangle_edge), 2.0, lam, delta)
        for _ in range(3):
            x = rng.standard_normal(3)
            diff = yosida(triangle_edge, 2.0, INF, lam, x) - yosida(triangle_edge, 2.0, q, lam, x)
            assert float(diff @ diff) <= yosida_gap_bound(triangle_edge, 2.0, lam, delta, x)


def test_moreau_envelope(triangle_edge, rng):
    gamma = poincare_constants(triangle_edge, 2.0).gamma
    for _ in range(3):
        x = rng.standard_normal(3)
        value = moreau_envelope(triangle_edge, 2.0, 0.3, x)
        assert 0.0 <= value <= phi_p(triangle_edge, EnergyParams(2.0), x) + 1e-9
        r = resolvent_p(triangle_edge, 2.0, 0.3, x)
        assert value >= 0.5 * gamma * float(np.sum((r - r.mean()) ** 2)) - 1e-9


def test_minimal_section_trace(triangle_edge):
    trace = minimal_section_trace(triangle_edge, 2.0, [1.0, 0.0, -0.5], lams=(0.2, 0.1))
    assert [entry["lambda"] for entry in trace] == [0.2, 0.1]
    assert [entry["q"] for entry in trace] == [26, 71]
    assert all(np.isfinite(entry["norm"]) for entry in trace)


def test_rayleigh(single_edge):
    assert rayleigh(single_edge, 2.0, 2.0, [1.0, -1.0]) == pytest.approx(2.0)
    assert rayleigh(single_edge, 3.0, 4.0, [2.5, -2.5]) == pytest.approx(rayleigh(single_edge, 3.0, 4.0, [1.0, -1.0]))
    with pytest.raises(ZeroVector):
        rayleigh(single_edge, 2.0, 2.0, [0.0, 0.0])
    with pytest.raises(NotMeanFree):
        rayleigh(single_edge, 2.0, 2.0, [1.0, 0.0])


def test_rayleigh_above_gamma(rng):
    for _ in range(5):
        graph = random_hypergraph(rng, 5, 2)
        gamma = poincare_constants(graph, 2.0).gamma
        for _ in range(20):
            x = rng.standard_normal(graph.N)
            assert rayleigh(graph, 2.0, 4.0, x - x.mean()) >= gamma * (1 - 1e-12)


def test_eigen_single_edge(single_edge):
    result = eigen_first_positive(single_edge, 2.0, 2.0)
    assert abs(result.value - 2.0) <= 1e-8
    assert result.converged
    assert result.residual <= 1e-8
    assert result.vector[0] > 0
    assert abs(result.vector.sum()) <= 1e-12
    assert abs(np.linalg.norm(result.vector) - 1.0) <= 1e-12


def test_eigen_deterministic(triangle_edge):
    opts = EigenOptions(restarts=4, seed=7)
    first = eigen_first_positive(triangle_edge, 3.0, 4.0, opts)
    second = eigen_first_positive(triangle_edge, 3.0, 4.0, opts)
    assert first.value == second.value
    assert np.array_equal(first.vector, second.vector)
    assert first.restarts == 4


def test_eigen_sandwich(rng):
    opts = EigenOptions(restarts=8)
    for _ in range(5):
        graph = random_uniform_hypergraph(rng, 5, 3, 3)
        nu = nu_E(graph)
        p = 2.0
        constants = poincare_constants(graph, p)
        reference = eigen_reference(graph, p, opts).value
        for q in (4.0, 8.0):
            value = eigen_first_positive(graph, p, q, opts).value
            assert reference * (1 - 1e-6) <= value
            assert value <= nu ** (p / q) * reference * (1 + 1e-6)
            assert constants.gamma * (1 - 1e-9) <= value <= constants.Gamma * (1 + 1e-9)


def test_eigen_disconnected():
    with pytest.raises(Disconnected):
        eigen_first_positive(_disconnected(), 2.0, 2.0)


def test_spectral_report(triangle_edge):
    report = spectral_report(triangle_edge, 2.0, 4.0, 0.2, samples=2, eigen_opts=EigenOptions(restarts=4))
    data = report.to_dict()
    assert data["q"] == 4.0
    assert data["nu_E"] == 3
    assert data["diam"] == 1
    assert data["lambda1_reference_q"] == 512.0
    assert len(data["zeta1q"]) == 3
    assert data["Gamma_q"] <= data["Gamma"]
    assert len(data["resolvent_gaps"]) == 2
    for gap in data["resolvent_gaps"]:
        assert gap["measured"] <= gap["bound"]

    nonsmooth = spectral_report(triangle_edge, 2.0, INF, 0.2, samples=2, eigen_opts=EigenOptions(restarts=4)).to_dict()
    assert nonsmooth["q"] == "inf"
    assert nonsmooth["resolvent_gaps"] == []
    assert math.isfinite(nonsmooth["limit_value"])
