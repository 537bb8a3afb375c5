import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snear.topology import (
    GRAPH_KINDS,
    GenerationError,
    InvariantError,
    ParameterError,
    build_graph,
    from_matrix,
    metropolis_weights,
    read_weights,
    spectral_beta,
    write_weights,
)


def test_complete_three_nodes():
    g = build_graph("complete", 3)
    assert g.edges == {(0, 1), (0, 2), (1, 2)}


def test_path_is_a_chain():
    g = build_graph("path", 5)
    assert sorted(g.edges) == [(0, 1), (1, 2), (2, 3), (3, 4)]


def test_ring_and_k_cyclic_degrees():
    assert set(build_graph("ring", 7).degrees()) == {2}
    g = build_graph("k_cyclic", 9, k=4)
    assert set(g.degrees()) == {4}
    assert (0, 2) in g.edges and (0, 7) in g.edges


def test_erdos_renyi_connected_and_deterministic():
    a = build_graph("erdos_renyi", 14, seed=3, p_edge=0.5)
    b = build_graph("erdos_renyi", 14, seed=3, p_edge=0.5)
    assert a == b
    assert a.is_connected()
    assert a.n == 14
    assert build_graph("erdos_renyi", 14, seed=4, p_edge=0.5) != a


@pytest.mark.parametrize("kwargs", [
    dict(kind="ring", n=1),
    dict(kind="k_cyclic", n=6, k=3),
    dict(kind="k_cyclic", n=4, k=4),
    dict(kind="erdos_renyi", n=5, p_edge=0.0),
    dict(kind="erdos_renyi", n=5, p_edge=1.5),
    dict(kind="star", n=5),
])
def test_bad_parameters(kwargs):
    with pytest.raises(ParameterError):
        build_graph(**kwargs)


def test_erdos_renyi_gives_up_after_retry_cap():
    with pytest.raises(GenerationError):
        build_graph("erdos_renyi", 30, p_edge=0.01, max_retries=3)


def test_metropolis_complete_is_uniform_average():
    W = metropolis_weights(build_graph("complete", 4))
    assert np.allclose(W.entries, 0.25, atol=1e-15)
    assert W.beta == pytest.approx(0.0, abs=1e-12)
    assert spectral_beta(W) == W.beta


def test_metropolis_path3_against_hand_eigenvectors():
    W = metropolis_weights(build_graph("path", 3))
    expected = np.array([[2, 1, 0], [1, 1, 1], [0, 1, 2]]) / 3.0
    assert np.allclose(W.entries, expected, atol=1e-15)
    # eigenpairs worked out by hand: (1,1,1)->1, (1,0,-1)->2/3, (1,-2,1)->0
    for vec, lam in [((1, 1, 1), 1.0), ((1, 0, -1), 2 / 3), ((1, -2, 1), 0.0)]:
        v = np.array(vec, dtype=float)
        assert np.allclose(W.entries @ v, lam * v, atol=1e-14)
    assert W.beta == pytest.approx(2 / 3, abs=1e-12)
    assert np.allclose(W.eigenvalues, [1.0, 2 / 3, 0.0], atol=1e-12)


def test_ring4_doubly_stochastic():
    W = metropolis_weights(build_graph("ring", 4)).entries
    assert np.abs(W.sum(axis=0) - 1).max() <= 1e-12
    assert np.abs(W.sum(axis=1) - 1).max() <= 1e-12


def test_path_mixes_slower_than_complete():
    bp = metropolis_weights(build_graph("path", 25)).beta
    bc = metropolis_weights(build_graph("complete", 25)).beta
    assert bp > bc


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(GRAPH_KINDS), n=st.integers(5, 25), seed=st.integers(0, 50))
def test_consensus_matrix_invariants(kind, n, seed):
    g = build_graph(kind, n, seed=seed, k=4)
    W = metropolis_weights(g)
    w = W.entries
    assert np.array_equal(w, w.T)
    assert np.abs(w.sum(axis=1) - 1).max() <= 1e-12
    pattern = g.adjacency() | np.eye(n, dtype=bool)
    assert np.array_equal(w > 0, pattern)
    assert np.all(w[~pattern] == 0)
    assert W.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)
    assert 0 <= W.beta < 1


@settings(max_examples=20, deadline=None)
@given(kind=st.sampled_from(GRAPH_KINDS), n=st.integers(5, 15), m=st.integers(1, 30))
def test_repeated_consensus_contracts_at_rate_beta(kind, n, m):
    W = metropolis_weights(build_graph(kind, n, seed=1))
    x0 = np.random.default_rng(n * 100 + m).standard_normal((n, 3))
    x = x0.copy()
    for _ in range(m):
        x = W.entries @ x
    avg = x0.mean(axis=0)
    assert np.allclose(x.mean(axis=0), avg, atol=1e-12)
    dev = np.linalg.norm(x - avg, axis=1).max()
    assert dev <= W.beta ** m * np.linalg.norm(x0 - avg) + 1e-9


def test_matrix_is_read_only():
    W = metropolis_weights(build_graph("ring", 5))
    with pytest.raises(ValueError):
        W.entries[0, 0] = 1.0


def test_invariant_errors():
    with pytest.raises(InvariantError):
        spectral_beta(np.array([[0.5, 0.5], [0.4, 0.6]]))
    with pytest.raises(InvariantError):
        from_matrix(np.array([[0.5, 0.6], [0.6, 0.5]]))
    with pytest.raises(InvariantError):  # disconnected: eigenvalue 1 twice
        from_matrix(np.eye(3))
    with pytest.raises(InvariantError):  # eigenvalue -1
        from_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_weights_round_trip(tmp_path):
    W = metropolis_weights(build_graph("erdos_renyi", 9, seed=2))
    path = tmp_path / "w.txt"
    write_weights(W, path)
    back = read_weights(path)
    assert np.array_equal(back.entries, W.entries)
    assert back.beta == W.beta
    first = path.read_text().splitlines()[1].split()
    assert len(first) == 3
