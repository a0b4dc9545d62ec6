#!/usr/bin/env python3
"""
Tests for the interior-point SDP solver and rank-one extraction
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from scipy.optimize import brentq

from src.exceptions import ConfigError, DegenerateVectorError, NotHermitianError
from src.models import SdpProblem
from src.sdp import embed, rank1_extract, solve_sdp, unembed


def random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (A + A.conj().T)


def trace_one(A0, tolerance=1e-9, **kwargs):
    n = A0.shape[0]
    return SdpProblem(objective=A0, equalities=[(np.eye(n, dtype=complex), 1.0)],
                      tolerance=tolerance, **kwargs)


def test_embedding_inverts():
    rng = np.random.default_rng(40)
    A = random_hermitian(rng, 3)
    E = embed(A)
    assert np.allclose(E, E.T)
    assert np.allclose(unembed(E, 3), A)
    assert np.allclose(np.sort(np.linalg.eigvalsh(E))[::2], np.sort(np.linalg.eigvalsh(A)))


def test_trace_one_gives_largest_eigenvalue():
    rng = np.random.default_rng(41)
    for n in (2, 3, 5):
        A0 = random_hermitian(rng, n)
        sol = solve_sdp(trace_one(A0))
        assert abs(sol.value - np.linalg.eigvalsh(A0)[-1]) < 1e-6
        assert abs(sol.gap) < 1e-5
        assert sol.primal_res < 1e-7
        assert np.linalg.eigvalsh(sol.X)[0] > -1e-8


def test_diagonal_objective():
    sol = solve_sdp(trace_one(np.diag([3.0, 1.0]).astype(complex)))
    assert sol.optimal
    assert abs(sol.value - 3.0) < 1e-6
    assert np.allclose(sol.X, np.diag([1.0, 0.0]), atol=1e-5)


def test_inequality_caps_the_dominant_entry():
    A0 = np.diag([3.0, 1.0]).astype(complex)
    cap = np.diag([1.0, 0.0]).astype(complex)
    sol = solve_sdp(SdpProblem(objective=A0, equalities=[(np.eye(2, dtype=complex), 1.0)],
                               inequalities=[(cap, 0.25)], tolerance=1e-9))
    assert sol.optimal
    assert abs(sol.value - 1.5) < 1e-6
    assert abs(np.real(sol.X[0, 0]) - 0.25) < 1e-6
    assert sol.primal_res < 1e-7


def test_redundant_equalities_are_dropped():
    rng = np.random.default_rng(42)
    A0 = random_hermitian(rng, 3)
    eye = np.eye(3, dtype=complex)
    single = solve_sdp(trace_one(A0))
    double = solve_sdp(SdpProblem(objective=A0, equalities=[(eye, 1.0), (2 * eye, 2.0)], tolerance=1e-9))
    assert abs(single.value - double.value) < 1e-6


def test_inconsistent_constraints_are_infeasible():
    eye = np.eye(2, dtype=complex)
    A0 = np.diag([1.0, 2.0]).astype(complex)
    sol = solve_sdp(SdpProblem(objective=A0, equalities=[(eye, 1.0), (eye, 2.0)]))
    assert sol.status == "infeasible"
    assert np.isnan(sol.value)
    implied = solve_sdp(SdpProblem(objective=A0, equalities=[(eye, 1.0)], inequalities=[(eye, 0.5)]))
    assert implied.status == "infeasible"
    # X >= 0 cannot have a negative diagonal entry
    negative = solve_sdp(SdpProblem(objective=A0, equalities=[(np.diag([1.0, 0.0]).astype(complex), -1.0)],
                                    max_iter=60))
    assert not negative.optimal


def test_constraint_scaling_does_not_change_solution():
    rng = np.random.default_rng(43)
    A0 = random_hermitian(rng, 3)
    cap = np.diag([1.0, 0.0, 0.0]).astype(complex)
    eye = np.eye(3, dtype=complex)
    base = solve_sdp(SdpProblem(objective=A0, equalities=[(eye, 1.0)], inequalities=[(cap, 0.3)],
                                tolerance=1e-9))
    scaled = solve_sdp(SdpProblem(objective=A0, equalities=[(1e3 * eye, 1e3)],
                                  inequalities=[(1e-3 * cap, 3e-4)], tolerance=1e-9))
    assert abs(base.value - scaled.value) < 1e-6


def test_rank_one_extraction():
    v = np.array([0.6, 0.8j, 0.0])
    vec, leak = rank1_extract(np.outer(v, v.conj()), keep=2)
    assert leak < 1e-12
    assert np.allclose(np.abs(vec), [0.6, 0.8])
    assert abs(vec[1].imag) < 1e-12 and vec[1].real > 0
    vec, _ = rank1_extract(np.outer(v, v.conj()), keep=3, anchor=0)
    assert np.allclose(vec, [0.6, 0.8j, 0.0])
    _, leak = rank1_extract(np.diag([3.0, 1.0]).astype(complex), keep=2)
    assert np.isclose(leak, 0.25)
    with pytest.raises(DegenerateVectorError):
        rank1_extract(np.zeros((2, 2)), keep=1)


def test_invalid_problems_raise():
    eye = np.eye(2, dtype=complex)
    with pytest.raises(NotHermitianError):
        solve_sdp(SdpProblem(objective=np.array([[0.0, 1.0], [0.0, 0.0]]), equalities=[(eye, 1.0)]))
    with pytest.raises(ConfigError):
        solve_sdp(SdpProblem(objective=eye, equalities=[]))


def test_random_instances_match_largest_eigenvalue():
    rng = np.random.default_rng(44)
    for _ in range(100):
        A0 = random_hermitian(rng, int(rng.integers(2, 41)))
        top = np.linalg.eigvalsh(A0)[-1]
        sol = solve_sdp(trace_one(A0))
        assert abs(sol.value - top) <= 1e-5 * (1.0 + abs(top))


def lifted_trust_region(H, g):
    n = H.shape[0]
    A0 = np.zeros((n + 1, n + 1), dtype=complex)
    A0[:n, :n] = H
    A0[:n, n] = g
    A0[n, :n] = g.conj()
    head = np.diag([1.0] * n + [0.0]).astype(complex)
    tail = np.zeros((n + 1, n + 1), dtype=complex)
    tail[n, n] = 1.0
    return SdpProblem(objective=A0, equalities=[(head, 1.0), (tail, 1.0)], tolerance=1e-9)


def trust_region_value(H, g):
    """max f^H H f + 2 Re(g^H f) over the unit sphere via the secular equation"""
    lam, V = np.linalg.eigh(H)
    c = V.conj().T @ g

    def excess(mu):
        return np.sum(np.abs(c) ** 2 / (mu - lam) ** 2) - 1.0

    mu = brentq(excess, lam[-1] + 1e-9, lam[-1] + np.linalg.norm(g) + 1.0, xtol=1e-14)
    f = V @ (c / (mu - lam))
    return float(np.real(f.conj() @ H @ f + 2.0 * (g.conj() @ f)))


def test_lifted_five_dimensional_instance_is_tight():
    rng = np.random.default_rng(45)
    for _ in range(5):
        H = random_hermitian(rng, 4)
        g = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        sol = solve_sdp(lifted_trust_region(H, g))
        assert abs(sol.value - trust_region_value(H, g)) < 1e-5
        samples = rng.standard_normal((4000, 4)) + 1j * rng.standard_normal((4000, 4))
        samples /= np.linalg.norm(samples, axis=1, keepdims=True)
        sampled = np.real(np.einsum('ki,ij,kj->k', samples.conj(), H, samples)
                          + 2.0 * (samples @ g.conj()))
        assert sol.value >= sampled.max() - 1e-7


def test_solver_trace():
    sol = solve_sdp(trace_one(np.diag([2.0, 1.0, 0.5]).astype(complex)))
    frame = sol.trace_frame()
    assert list(frame.columns) == ['iter', 'gap', 'primal_res', 'dual_res']
    assert len(frame) == sol.iterations
    assert frame['iter'].tolist() == list(range(1, sol.iterations + 1))


def main():
    from tests.runner import collect, run_suite
    return run_suite("SDP TEST SUITE", collect(globals()))


if __name__ == "__main__":
    sys.exit(main())
