import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segspat.errors import DataError, ParseError, RegionMismatchError
from segspat.graph import (
    SPAIN_REGIONS,
    AdjacencyGraph,
    car_structure,
    load_adjacency,
    path_graph,
    spain_graph,
)


@st.composite
def graphs(draw, max_n=9):
    n = draw(st.integers(1, max_n))
    all_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(all_pairs), unique=True) if all_pairs else st.just([]))
    ids = [f"R{k}" for k in range(n)]
    return AdjacencyGraph.from_pairs(ids, [(ids[i], ids[j]) for i, j in chosen])


def _write(tmp_path, text):
    p = tmp_path / "g.adj"
    p.write_text(text)
    return p


def test_path_abc_weights(tmp_path):
    g = load_adjacency(_write(tmp_path, "A B\nB C\n"), ["A", "B", "C"])
    np.testing.assert_array_equal(g.N, [1, 2, 1])
    W = g.W.toarray()
    assert W[1, 0] == W[1, 2] == 0.5 and W[0, 1] == 1.0


def test_empty_pair_list(tmp_path):
    g = load_adjacency(_write(tmp_path, "# nothing\n"), ["A", "B"])
    assert (g.N == 0).all() and g.W.toarray().sum() == 0


def test_spain_connected():
    g = spain_graph()
    assert g.region_ids == SPAIN_REGIONS
    car = car_structure(g)
    assert car.rank_deficiency == 1 and car.rank == 14
    assert len(g.pairs()) == 29


def test_path_q():
    car = car_structure(AdjacencyGraph.from_pairs("ABC", [("A", "B"), ("B", "C")]))
    np.testing.assert_array_equal(car.Q, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_single_region():
    car = car_structure(AdjacencyGraph.from_pairs(["A"], []))
    np.testing.assert_array_equal(car.Q, [[0]])
    assert car.rank_deficiency == 1
    assert car.constraint_basis().shape == (1, 0)


def test_conditional_mean_and_variance():
    Q = car_structure(AdjacencyGraph.from_pairs("ABC", [("A", "B"), ("B", "C")])).Q
    u = {0: 2.0, 2: 4.0}
    # full conditional of u_B under precision tau * Q
    mean = -sum(Q[1, j] * u[j] for j in u) / Q[1, 1]
    assert mean == 3.0
    sigma2 = 1.7
    assert sigma2 / Q[1, 1] == sigma2 / 2


@given(graphs())
def test_q_rows_match_neighbour_sets(g):
    Q = car_structure(g).Q
    assert Q.dtype.kind == "i"
    assert (Q.sum(axis=1) == 0).all()
    for i, nb in enumerate(g.neighbors):
        assert Q[i, i] == len(nb)
        assert {j for j in range(g.n_regions) if Q[i, j] == -1} == set(nb)
        assert set(np.unique(np.delete(Q[i], i))) <= {0, -1}


@given(graphs())
def test_w_rows(g):
    rows = np.asarray(g.W.sum(axis=1)).ravel()
    for r, n in zip(rows, g.N):
        assert abs(r - (1.0 if n else 0.0)) < 1e-12


@settings(max_examples=50)
@given(graphs(), st.integers(0, 2**32 - 1))
def test_quadratic_form(g, seed):
    Q = car_structure(g).Q
    u = np.random.default_rng(seed).standard_normal(g.n_regions)
    lhs = u @ Q @ u
    rhs = sum((u[i] - u[j]) ** 2 for i, j in g.pairs())
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=50)
@given(graphs(), st.randoms(use_true_random=False))
def test_permutation_conjugates_q(g, rnd):
    order = list(range(g.n_regions))
    rnd.shuffle(order)
    P = np.eye(g.n_regions, dtype=int)[order]
    np.testing.assert_array_equal(car_structure(g.permute(order)).Q, P @ car_structure(g).Q @ P.T)


@given(graphs())
def test_constraint_basis(g):
    car = car_structure(g)
    Z = car.constraint_basis()
    assert Z.shape == (g.n_regions, car.rank)
    np.testing.assert_allclose(Z.T @ Z, np.eye(car.rank), atol=1e-12)
    for c in np.unique(car.components):
        idx = car.components == c
        np.testing.assert_allclose(Z[idx].sum(axis=0), 0.0, atol=1e-12)
    u = car.recentre(np.arange(g.n_regions, dtype=float))
    np.testing.assert_allclose(Z @ (Z.T @ u), u, atol=1e-12)


def test_isolated_region_components():
    g = AdjacencyGraph.from_pairs("ABCD", [("A", "B"), ("B", "C")])
    car = car_structure(g)
    assert car.rank_deficiency == 2
    np.testing.assert_allclose(car.recentre([1.0, 2.0, 3.0, 5.0]), [-1.0, 0.0, 1.0, 0.0])


def test_load_errors(tmp_path):
    with pytest.raises(RegionMismatchError, match="ZZ"):
        load_adjacency(_write(tmp_path, "A ZZ\n"), ["A", "B"])
    with pytest.raises(ParseError):
        load_adjacency(_write(tmp_path, "A B C\n"), ["A", "B", "C"])
    with pytest.raises(DataError):
        load_adjacency(_write(tmp_path, "A A\n"), ["A"])


def test_directed_listing(tmp_path):
    p = _write(tmp_path, "A B\nB A\nB C\n")
    with pytest.warns(RuntimeWarning, match="asymmetric"):
        g = load_adjacency(p, ["A", "B", "C"])
    assert g.pairs() == [(0, 1), (1, 2)]
    with pytest.raises(DataError):
        load_adjacency(p, ["A", "B", "C"], strict=True)


def test_region_ids_from_file(tmp_path):
    g = load_adjacency(_write(tmp_path, "C B\nB A  # comment\n"))
    assert g.region_ids == ("A", "B", "C")


def test_asymmetric_neighbors_rejected():
    with pytest.raises(DataError):
        AdjacencyGraph(("A", "B"), ({1}, set()))


def test_path_graph_and_csv(tmp_path):
    g = path_graph(12)
    assert g.region_ids[0] == "R01" and len(g.pairs()) == 11
    g.to_csv(tmp_path / "q.csv", which="Q")
    lines = (tmp_path / "q.csv").read_text().splitlines()
    assert lines[1].split(",")[1:3] == ["1", "-1"]
