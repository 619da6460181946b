import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import block_diag

from dissipnet.datagen import SubsystemModel
from dissipnet.dissip import INVERSE_BLOCK, SupplyRate, check_dissipativity
from dissipnet.errors import InvalidInputError, UnsupportedConfigurationError
from dissipnet.network import (DiffusiveWeights, InterconnectionMatrix, Topology,
                               assemble_closed_loop, diffusive_interconnection,
                               diffusive_stability_cert, global_stability_cert,
                               local_stability_cert)


def scalar_model(a, b1=1.0, b2=0.0, c=0.0):
    return SubsystemModel([[a]], [[b1]], [[b2]], [[c]], [[0.0]], [[0.0]])


def triple(F, G, H, kind=INVERSE_BLOCK):
    return SupplyRate([[F]], [[G]], [[H]], kind)


def weights_from_edges(k, edges):
    a = np.zeros((k, k))
    for (i, j), w in edges.items():
        a[i, j] = a[j, i] = w
    return DiffusiveWeights(a)


def test_diffusive_two_nodes():
    w = weights_from_edges(2, {(0, 1): 2.0})
    M = diffusive_interconnection(w, w.topology())
    assert np.array_equal(M.M, [[-2.0, 2.0], [2.0, -2.0]])


def test_diffusive_single_node():
    w = DiffusiveWeights(np.zeros((1, 1)))
    assert np.array_equal(diffusive_interconnection(w, w.topology()).M, [[0.0]])


def test_diffusive_ring3():
    w = weights_from_edges(3, {(0, 1): 1.0, (1, 2): 1.0, (0, 2): 1.0})
    M = diffusive_interconnection(w, w.topology()).M
    assert np.array_equal(M, [[-2, 1, 1], [1, -2, 1], [1, 1, -2]])


def test_diffusive_rejects_vector_outputs():
    topo = Topology.from_edges(2, [(0, 1)], p_dims=[2, 1])
    with pytest.raises(UnsupportedConfigurationError):
        diffusive_interconnection(weights_from_edges(2, {(0, 1): 1.0}), topo)


def test_topology_ordering():
    topo = Topology.from_edges(4, [(2, 0), (2, 3), (1, 2)])
    assert topo.ordered_neighbors(2) == [2, 0, 1, 3]
    assert topo.p_tilde(2) == 4


def test_interconnection_respects_topology():
    topo = Topology.from_edges(3, [(0, 1)])
    with pytest.raises(InvalidInputError):
        InterconnectionMatrix(np.ones((3, 3)), topo)


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 8))
def test_laplacian_structure(seed, k):
    rng = np.random.default_rng(seed)
    a = np.triu(rng.uniform(0.1, 2.0, (k, k)) * (rng.uniform(size=(k, k)) < 0.5), 1)
    w = DiffusiveWeights(a + a.T)
    M = diffusive_interconnection(w, w.topology()).M
    assert np.allclose(M.sum(axis=1), 0)
    assert np.all(np.diag(M) <= 0)
    assert np.array_equal(M, M.T)
    assert np.all(np.linalg.eigvalsh(M) <= 1e-9)


def test_assemble_deadbeat():
    topo = Topology.from_edges(1, [])
    a_cl, rho = assemble_closed_loop([scalar_model(0.5)], [[[-0.5]]],
                                     InterconnectionMatrix([[0.0]], topo))
    assert np.allclose(a_cl, 0) and rho == 0


def test_assemble_decoupled():
    topo = Topology.from_edges(2, [])
    _, rho = assemble_closed_loop([scalar_model(0.9)] * 2, [[[0.0]]] * 2,
                                  InterconnectionMatrix(np.zeros((2, 2)), topo))
    assert rho == pytest.approx(0.9)


def test_assemble_structure(rng):
    w = weights_from_edges(3, {(0, 1): 1.0, (1, 2): 0.5})
    M = diffusive_interconnection(w, w.topology())
    models = [SubsystemModel(rng.standard_normal((2, 2)), rng.standard_normal((2, 1)),
                             rng.standard_normal((2, 1)), rng.standard_normal((1, 2)),
                             rng.standard_normal((1, 1)), [[0.0]]) for _ in range(3)]
    gains = [rng.standard_normal((1, 2)) for _ in range(3)]
    a_cl, _ = assemble_closed_loop(models, gains, M)
    a_hat = block_diag(*[m.A + m.B1 @ K for m, K in zip(models, gains)])
    b2 = block_diag(*[m.B2 for m in models])
    c_hat = block_diag(*[m.C + m.D1 @ K for m, K in zip(models, gains)])
    assert np.allclose(a_cl, a_hat + b2 @ M.M @ c_hat)


def test_global_cert_examples():
    w = weights_from_edges(2, {(0, 1): 1.0})
    topo = w.topology()
    passive = [SupplyRate(np.zeros((1, 1)), 0.5 * np.eye(1), np.zeros((1, 1)))] * 2
    neg = InterconnectionMatrix(np.array([[-2.0, 1.0], [1.0, -2.0]]), topo)
    assert global_stability_cert(passive, neg)
    assert not global_stability_cert(passive, InterconnectionMatrix(np.zeros((2, 2)), topo))
    s = [triple(-1.0, 0.0, 2.0)]
    assert global_stability_cert(s, np.eye(1))


def test_local_cert_examples():
    assert local_stability_cert(triple(-1.0, 0.0, 2.0), [[0.0]], 1.0)
    assert not local_stability_cert(triple(-1.0, 0.0, 0.5), [[0.0]], 1.0)
    with pytest.raises(InvalidInputError):
        local_stability_cert(triple(-1.0, 0.0, 2.0), [[0.0]], 0.0)


def test_diffusive_cert_examples():
    assert diffusive_stability_cert(triple(-0.1, 0.5, 0.01), 2.0, 1.0)
    assert not diffusive_stability_cert(triple(-0.3, 0.5, 0.01), 2.0, 1.0)
    assert diffusive_stability_cert(triple(-0.4, 0.0, 3.0), 1.0, 0.0)


def _random_network(rng, k):
    a = np.zeros((k, k))
    for i in range(k):
        a[i, (i + 1) % k] = a[(i + 1) % k, i] = rng.uniform(0.2, 1.0)
    w = DiffusiveWeights(a)
    return w, diffusive_interconnection(w, w.topology())


def test_local_cert_cross_term_sign():
    # single node: the condition reads H - beta - 2 G m + F m^2 >= 0
    assert local_stability_cert(triple(0.0, 1.0, 2.0), [[-1.0]], 1.0)
    assert not local_stability_cert(triple(0.0, 1.0, 2.0), [[1.0]], 1.0)


def test_local_implies_global(rng):
    # self-coupled nodes keep the local condition non-degenerate
    passed = 0
    for _ in range(200):
        k = int(rng.integers(1, 6))
        p = int(rng.integers(1, 3))
        topo = Topology.from_edges(k, [], p_dims=[p] * k)
        blocks = [(lambda b: b + b.T)(rng.standard_normal((p, p))) for _ in range(k)]
        M = InterconnectionMatrix(block_diag(*blocks), topo)
        supplies = []
        for _ in range(k):
            f = rng.standard_normal((p, p))
            supplies.append(SupplyRate(-f @ f.T * rng.uniform(0, 0.3), rng.standard_normal((p, p)),
                                       np.eye(p) * rng.uniform(0.5, 8.0)))
        beta = rng.uniform(1e-3, 0.5)
        if all(local_stability_cert(s, M.row_restricted(i), beta)
               for i, s in enumerate(supplies)):
            passed += 1
            assert global_stability_cert(supplies, M)
    assert passed > 20


@given(f=st.floats(1e-3, 10.0), g=st.floats(-10.0, 10.0), h=st.floats(0.0, 100.0),
       a=st.floats(0.05, 5.0), beta=st.floats(1e-6, 1.0))
def test_local_cert_fails_with_neighbours_and_negative_f(f, g, h, a, beta):
    # moving only a neighbour output leaves F (M y)^2 < 0 in the local form
    m_row = [[-a, a]]
    assert not local_stability_cert(triple(-f, g, h), m_row, beta)


def test_diffusive_cert_implies_stability(rng):
    # dissipative scalar nodes under a diffusive certificate give a Schur network
    checked = 0
    for _ in range(60):
        k = int(rng.integers(3, 6))
        w, M = _random_network(rng, k)
        d = w.degrees()
        models, gains, ok = [], [], True
        for i in range(k):
            m = scalar_model(rng.uniform(-0.5, 0.5), b1=1.0, b2=rng.uniform(0.05, 0.2), c=1.0)
            d_prime = d[i] * rng.uniform(1.0, 1.5)
            s = triple(-1.0 / (4 * d_prime), 0.5, rng.uniform(0.5, 3.0))
            if not diffusive_stability_cert(s, d_prime, 1.0):
                ok = False
                break
            if check_dissipativity(m.closed_loop([[0.0]]), s) is None:
                ok = False
                break
            models.append(m)
            gains.append([[0.0]])
        if not ok:
            continue
        checked += 1
        assert assemble_closed_loop(models, gains, M)[1] < 1.0
    assert checked > 5
