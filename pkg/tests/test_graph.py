import numpy as np
import pytest

from senet.errors import InvalidDimensionError, InvalidParameterError, InvalidPenaltyError
from senet.graph import (
    StructuredGraph,
    build_grid,
    build_knn,
    build_path,
    cartesian_product,
    edge_energy,
    energy,
    identity_penalty,
    is_connected,
    laplacian_of,
    load_graph,
    parse_graph_spec,
    penalty_from_matrix,
    read_triplets,
    save_graph,
    write_triplets,
    zero_penalty,
)


def test_path_edges():
    assert build_path(3).edges == ((0, 1, 1.0), (1, 2, 1.0))
    assert build_path(1).edges == ()
    with pytest.raises(InvalidDimensionError):
        build_path(0)


def test_path_energy_matches_difference_sum():
    rng = np.random.default_rng(0)
    beta = rng.normal(size=100)
    lam = laplacian_of(build_path(100))
    assert build_path(100).n_edges == 99
    assert energy(lam, beta) == pytest.approx(np.sum(np.diff(beta) ** 2), rel=1e-12)


def test_grid_counts():
    g = build_grid(2, 2)
    assert g.n_edges == 4
    assert np.all(g.degrees() == 2)
    assert build_grid(1, 7).edges == build_path(7).edges
    assert build_grid(20, 20).n_edges == 20 * 19 + 20 * 19
    with pytest.raises(InvalidDimensionError):
        build_grid(0, 3)


def test_cartesian_product_is_grid():
    assert cartesian_product(build_path(2), build_path(2)).edge_set() == build_grid(2, 2).edge_set()
    assert cartesian_product(build_path(4), build_path(5)).edge_set() == build_grid(4, 5).edge_set()
    g = StructuredGraph.from_edges(4, [(0, 1, 2.0), (2, 3, 0.5)])
    assert cartesian_product(g, StructuredGraph(1)).edges == g.edges
    l_grid = laplacian_of(build_grid(3, 4)).lambda_matrix
    l_prod = laplacian_of(cartesian_product(build_path(3), build_path(4))).lambda_matrix
    np.testing.assert_array_equal(l_grid, l_prod)


def test_knn():
    assert build_knn([[0.0], [1.0], [2.0]], 1).edge_set() == {(0, 1), (1, 2)}
    pts = np.random.default_rng(1).normal(size=(6, 2))
    assert build_knn(pts, 5).n_edges == 15
    ang = 2 * np.pi * np.arange(8) / 8
    circle = build_knn(np.c_[np.cos(ang), np.sin(ang)], 2)
    # the two nearest neighbours on a regular octagon are the adjacent vertices
    assert circle.edge_set() == {tuple(sorted((j, (j + 1) % 8))) for j in range(8)}
    with pytest.raises(InvalidParameterError):
        build_knn(pts, 6)


def test_knn_precomputed_matches_euclidean():
    pts = np.random.default_rng(2).normal(size=(10, 3))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    assert build_knn(d, 3, metric="precomputed").edges == build_knn(pts, 3).edges


def test_laplacian_examples():
    np.testing.assert_array_equal(laplacian_of(build_path(3)).lambda_matrix,
                                  [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    np.testing.assert_array_equal(laplacian_of(StructuredGraph(1)).lambda_matrix, [[0.0]])
    g = StructuredGraph.from_edges(4, [(0, 1, 0.5), (1, 2, 2.0), (2, 3, 1.0), (0, 3, 3.0)])
    np.testing.assert_allclose(laplacian_of(g).lambda_matrix @ np.ones(4), 0, atol=1e-14)


def test_energy_examples():
    lam = laplacian_of(build_path(3))
    assert energy(lam, [1.0, 2.0, 4.0]) == 5.0
    assert energy(laplacian_of(build_grid(3, 3)), np.full(9, 2.5)) == 0.0
    with pytest.raises(InvalidDimensionError):
        energy(lam, [1.0, 2.0])


def test_signed_edges_factor_and_energy():
    g = StructuredGraph.from_edges(3, [(0, 1, -1.0), (1, 2, 0.5)])
    lam = laplacian_of(g)
    np.testing.assert_allclose(lam.factor.T @ lam.factor, lam.lambda_matrix, atol=1e-14)
    beta = np.array([1.0, -1.0, 3.0])
    # a negative edge pulls b_j toward -b_k, so this pair contributes nothing
    assert energy(lam, beta) == pytest.approx(edge_energy(g, beta)) == pytest.approx(0.5 * 16)


def test_large_factor_reconstruction():
    lam = laplacian_of(build_grid(20, 20))
    assert lam.dim == 400
    np.testing.assert_allclose(lam.factor.T @ lam.factor, lam.lambda_matrix, atol=1e-10)


def test_penalty_from_matrix():
    M = np.array([[2.0, -1.0], [-1.0, 2.0]])
    lam = penalty_from_matrix(M)
    np.testing.assert_allclose(lam.factor.T @ lam.factor, M, atol=1e-12)
    with pytest.raises(InvalidPenaltyError):
        penalty_from_matrix([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(InvalidPenaltyError):
        penalty_from_matrix([[1.0, 0.5], [0.0, 1.0]])
    assert zero_penalty(3).rank == 0
    np.testing.assert_array_equal(identity_penalty(2).lambda_matrix, np.eye(2))


def test_connectivity():
    assert is_connected(build_path(5))
    assert not is_connected(StructuredGraph.from_edges(4, [(0, 1), (2, 3)]))
    assert is_connected(build_grid(3, 3))


def test_graph_validation():
    with pytest.raises(InvalidParameterError):
        StructuredGraph.from_edges(2, [(0, 0, 1.0)])
    with pytest.raises(InvalidParameterError):
        StructuredGraph.from_edges(2, [(0, 2, 1.0)])
    with pytest.raises(InvalidParameterError):
        StructuredGraph.from_edges(3, [(0, 1, 1.0), (1, 0, 2.0)])


def test_json_and_triplet_round_trip(tmp_path):
    g = StructuredGraph.from_edges(4, [(0, 1, 1.5), (1, 3, -0.5)])
    save_graph(g, tmp_path / "g.json")
    assert load_graph(tmp_path / "g.json") == g
    lam = laplacian_of(g)
    write_triplets(lam, tmp_path / "l.txt")
    np.testing.assert_array_equal(read_triplets(tmp_path / "l.txt", 4), lam.lambda_matrix)


def test_parse_graph_spec():
    assert parse_graph_spec("path", 4).edges == build_path(4).edges
    assert parse_graph_spec("grid:2x3", 6).edges == build_grid(2, 3).edges
    assert parse_graph_spec("identity", 3) is None
    with pytest.raises(InvalidParameterError):
        parse_graph_spec("grid:2by3", 6)
