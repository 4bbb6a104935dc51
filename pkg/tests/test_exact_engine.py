# tests/test_exact_engine.py

## Imports
import math

import networkx as nx
import numpy as np
import pytest

from errors import BadCutRadius, InvalidGraph, TooManyBonds, TooManyVertices
from exact_engine import (
	CurrentState,
	SpinGraph,
	complete_graph,
	connected_graph_suite,
	current_state_table,
	current_two_point,
	from_networkx,
	full_lace_coefficient,
	inequality_suite,
	lace_identity_check,
	o_bar,
	path_graph,
	pi0,
	raw_current_two_point,
	spin_two_point_exact,
)
from gs_construction import block_spin_graph, gs_params
from lattice_couplings import TorusGeometry, build_coupling


## Helper Functions
def gs_block_graph():
	"""Two sites times N = 2 replicas, the smallest coupled Griffiths-Simon system."""
	coupling = build_coupling("nearest-neighbor", 1, amplitude=0.3)
	params = gs_params(1.0, 0.5, coupling, 2)
	return block_spin_graph(params, TorusGeometry(d=1, L=2))


def weight_with_sources(df, sources, linked_to=None):
	"""Total weight of the listed currents with the given source set, optionally double-connected to a vertex."""
	key = tuple(sorted(sources))
	mask = df["sources"].apply(lambda s: s == key)
	if linked_to is not None:
		mask &= df["linked"].apply(lambda linked: linked_to in linked)
	return float(df.loc[mask, "weight"].sum())


## Tests - SpinGraph

def test_self_loop_rejected():
	"""
	Bonds must join distinct vertices.
	"""
	# Act & Assert
	with pytest.raises(InvalidGraph):
		SpinGraph(2, np.array([[0, 0]]), np.array([0.5]))


def test_duplicate_bond_rejected():
	"""
	{a, b} and {b, a} are the same bond.
	"""
	# Act & Assert
	with pytest.raises(InvalidGraph):
		SpinGraph(2, np.array([[0, 1], [1, 0]]), np.array([0.5, 0.5]))


def test_negative_coupling_rejected():
	"""
	Antiferromagnetic bonds are outside the model.
	"""
	# Act & Assert
	with pytest.raises(InvalidGraph):
		SpinGraph(2, np.array([[0, 1]]), np.array([-0.5]))


def test_graph_suite_counts():
	"""
	Connected graphs on 2..4 vertices: 1 + 2 + 6 isomorphism classes.
	"""
	# Arrange & Act
	suite = connected_graph_suite(max_vertices=4)

	# Assert
	assert len(suite) == 9, f"Expected 9 connected graphs, got {len(suite)}"
	assert all(nx.is_connected(g.to_networkx()) for g in suite), "Suite should hold connected graphs only"


## Tests - two-point functions

def test_single_bond_two_point_is_tanh():
	"""
	<sigma_0 sigma_1> = tanh J on a single bond.
	"""
	# Arrange & Act
	C = spin_two_point_exact(path_graph(2, 0.5))

	# Assert
	assert C[0, 1] == pytest.approx(0.46211715726000974, abs=1e-14), f"Got {C[0, 1]}"
	assert np.allclose(np.diag(C), 1.0), "Diagonal should be 1"


def test_triangle_two_point():
	"""
	K3 with J = 0.5: (t + t^2) / (1 + t^3) = 0.61498...
	"""
	# Arrange
	t = math.tanh(0.5)

	# Act
	C = spin_two_point_exact(complete_graph(3, 0.5))

	# Assert
	assert C[0, 1] == pytest.approx((t + t * t) / (1 + t ** 3), abs=1e-14), "K3 closed form"
	assert round(C[0, 1], 5) == 0.61498, f"Got {C[0, 1]}"


def test_zero_coupling_gives_identity():
	"""
	Without couplings the spins are independent.
	"""
	# Arrange & Act
	C = spin_two_point_exact(complete_graph(4, 0.0))

	# Assert
	assert np.allclose(C, np.eye(4), atol=1e-15), "C should be the identity"


@pytest.mark.parametrize("J", [0.1, 0.5, 1.0])
def test_current_matches_spin_over_suite(J):
	"""
	Random-current and spin two-point functions agree to 1e-12 on every small graph.
	"""
	for graph in connected_graph_suite(max_vertices=4, J=J):
		# Arrange & Act
		C_spin = spin_two_point_exact(graph)
		C_current = current_two_point(graph)

		# Assert
		assert np.max(np.abs(C_spin - C_current)) <= 1e-12, f"Mismatch on {graph.bonds.tolist()} at J={J}"


def test_raw_current_agrees_within_tail_bound():
	"""
	Truncated raw currents match the exact table up to the analytic tail.
	"""
	# Arrange
	graph = complete_graph(4, 1.0)

	# Act
	C_raw, tail = raw_current_two_point(graph, n_max=20)
	C = spin_two_point_exact(graph)

	# Assert
	assert tail == pytest.approx(1.0 / math.factorial(21)), "Tail bound for J = 1"
	assert np.max(np.abs(C_raw - C)) <= 1e-12 + 100 * tail, "Raw currents disagree"


def test_too_many_vertices_raises():
	"""
	Spin enumeration is capped at 20 vertices.
	"""
	# Act & Assert
	with pytest.raises(TooManyVertices):
		spin_two_point_exact(path_graph(21, 0.1))


def test_too_many_bonds_raises():
	"""
	Current enumeration is capped at 18 bonds; K7 has 21.
	"""
	# Act & Assert
	with pytest.raises(TooManyBonds):
		current_two_point(complete_graph(7, 0.1))


## Tests - collapsed current states

def test_current_state_weights_sum_to_exponential():
	"""
	Summing 1 + (cosh J - 1) + sinh J over every bond gives prod e^J.
	"""
	# Arrange
	graph = complete_graph(3, 0.5)

	# Act
	df = current_state_table(graph, root=0)

	# Assert
	assert len(df) == 3 ** graph.n_bonds, "One row per collapsed current"
	assert df["weight"].sum() == pytest.approx(math.exp(1.5), rel=1e-13), "Total weight should be e^{3J}"


def test_current_state_sources_are_odd_degree_vertices():
	"""
	A single odd bond on a path has its two endpoints as sources.
	"""
	# Arrange
	graph = path_graph(3, 0.5)
	state = CurrentState(np.array([1, 2]))

	# Act
	sources = state.sources(graph)

	# Assert
	assert sources.tolist() == [1, 2], f"Sources are {sources.tolist()}"
	assert state.occupied().tolist() == [True, True], "Even and odd bonds are both occupied"
	assert state.weight(graph.couplings) == pytest.approx((math.cosh(0.5) - 1.0) * math.sinh(0.5), rel=1e-14), "Weight mismatch"


@pytest.mark.parametrize("make_graph", [lambda: complete_graph(3, 0.5), lambda: complete_graph(4, 0.3), gs_block_graph])
def test_current_state_table_reproduces_two_point_and_pi0(make_graph):
	"""
	State-by-state sums of the collapsed currents give current_two_point and pi0.
	"""
	# Arrange
	graph = make_graph()
	root = 0

	# Act
	df = current_state_table(graph, root)
	Z = weight_with_sources(df, ())
	C_states = np.array([
		1.0 if x == root else weight_with_sources(df, (root, x)) / Z for x in range(graph.n_vertices)
	])
	pi_states = np.array([
		1.0 if x == root else weight_with_sources(df, (root, x), linked_to=x) / Z for x in range(graph.n_vertices)
	])

	# Assert
	assert np.allclose(C_states, current_two_point(graph)[root], atol=1e-12), "Two-point mismatch"
	assert np.allclose(pi_states, pi0(graph, root), atol=1e-12), "pi0 mismatch"


def test_current_state_table_bond_limit():
	"""
	Listing states is limited to small graphs.
	"""
	# Act & Assert
	with pytest.raises(TooManyBonds):
		current_state_table(path_graph(12, 0.5), root=0)


## Tests - lace expansion

def test_pi0_single_bond_vanishes_off_root():
	"""
	A single bond cannot double-connect its endpoints.
	"""
	# Arrange & Act
	p = pi0(path_graph(2, 0.5), root=0)

	# Assert
	assert p[0] == 1.0, "pi0(o, o) = 1"
	assert p[1] == 0.0, "No double connection on one bond"


def test_pi0_triangle_closed_form():
	"""
	On K3 only the fully occupied currents double-connect; pi0 follows by hand.
	"""
	# Arrange
	J = 0.5
	s, c1 = math.sinh(J), math.cosh(J) - 1.0
	t = math.tanh(J)
	Z = math.cosh(J) ** 3 * (1 + t ** 3)

	# Act
	p = pi0(complete_graph(3, J), root=0)

	# Assert
	expected = (s * c1 ** 2 + c1 * s ** 2) / Z
	assert p[1] == pytest.approx(expected, rel=1e-12), f"pi0(0, 1) = {p[1]}, expected {expected}"
	assert p[1] == pytest.approx(p[2], rel=1e-12), "Symmetric vertices"


def test_pi0_independent_of_workers():
	"""
	The chunked reduction gives identical results in and out of process.
	"""
	# Arrange
	graph = complete_graph(4, 0.4)

	# Act
	serial = pi0(graph, root=0, workers=1)
	parallel = pi0(graph, root=0, workers=2)

	# Assert
	assert np.array_equal(serial, parallel), "Worker count must not change pi0"


@pytest.mark.parametrize("J", [0.1, 0.5, 1.0])
def test_lace_remainder_bound_over_suite(J):
	"""
	|r(x)| <= sum_u pi0(o,u) sum_v tanh J_uv C(v,x) on every small graph.
	"""
	for graph in connected_graph_suite(max_vertices=4, J=J):
		# Arrange & Act
		df = lace_identity_check(graph, root=0)

		# Assert
		assert (df["slack"] >= -1e-12).all(), f"Remainder bound violated on {graph.bonds.tolist()}"
		assert np.allclose(df["two_point"], df["two_point_current"], atol=1e-12), "Representations disagree"


def test_lace_remainder_bound_on_block_graph():
	"""
	The bound also holds on the Griffiths-Simon block graph.
	"""
	# Arrange
	graph = gs_block_graph()

	# Act
	df = lace_identity_check(graph, root=0)

	# Assert
	assert (df["slack"] >= -1e-12).all(), f"Remainder bound violated:\n{df}"


def test_full_lace_coefficient_closes_identity():
	"""
	C = P + P T C with P the all-order coefficient.
	"""
	# Arrange
	graph = complete_graph(4, 0.5)
	C = spin_two_point_exact(graph)
	T = graph.tanh_matrix()

	# Act
	P = full_lace_coefficient(graph, C)

	# Assert
	assert np.allclose(C, P + P @ T @ C, atol=1e-12), "Lace identity should close exactly"


def test_o_bar_single_bond():
	"""
	O-bar on a single bond is tanh J * C(0, 1) = tanh^2 J.
	"""
	# Arrange
	graph = path_graph(2, 0.5)
	C = spin_two_point_exact(graph)

	# Act
	value = o_bar(graph, C, 0)

	# Assert
	assert value == pytest.approx(math.tanh(0.5) ** 2, rel=1e-13), "O-bar mismatch"


## Tests - inequality_suite

def test_inequality_suite_on_triangle():
	"""
	All inequalities hold on K3.
	"""
	# Arrange & Act
	df = inequality_suite(complete_graph(3, 0.5), root=0)

	# Assert
	assert df["passed"].all(), f"Failed:\n{df[~df['passed']]}"
	assert set(df["inequality"]) == {"a-priori", "pi0-positive", "pi0-cube", "griffiths"}, "Unexpected kinds"


@pytest.mark.parametrize("J", [0.1, 0.5, 1.0])
def test_pi0_bounds_over_suite_and_block_graph(J):
	"""
	pi0 - delta >= 0 and pi0 <= C^3 off the root for every connected graph on up to
	four vertices and for the smallest block-spin graph, from every root.
	"""
	# Arrange
	graphs = connected_graph_suite(4, J) + [gs_block_graph()]

	# Act
	frames = [
		inequality_suite(graph, root=root, include_griffiths=False)
		for graph in graphs
		for root in range(graph.n_vertices)
	]

	# Assert
	for df in frames:
		pi_rows = df[df["inequality"].isin(["pi0-positive", "pi0-cube"])]
		assert pi_rows["passed"].all(), f"pi0 bound failed at J={J}:\n{pi_rows[~pi_rows['passed']]}"
	assert len(frames) == sum(graph.n_vertices for graph in graphs), "One frame per graph and root"


def test_simon_lieb_on_path_is_tight():
	"""
	On a 4-path with cut l = 1 the Simon-Lieb inequality holds with equality.
	"""
	# Arrange & Act
	df = inequality_suite(path_graph(4, 0.5), root=0, cut_radius=1, include_griffiths=False)
	sl = df[df["inequality"] == "simon-lieb"]

	# Assert
	assert sorted(sl["x"].tolist()) == [2, 3], "Vertices beyond the cut"
	assert np.allclose(sl["slack"], 0.0, atol=1e-12), "Path correlations factorise across the cut"
	assert sl["passed"].all(), "Simon-Lieb should pass"


def test_bad_cut_radius_raises():
	"""
	A cut enclosing every vertex leaves nothing to check.
	"""
	# Act & Assert
	with pytest.raises(BadCutRadius):
		inequality_suite(path_graph(3, 0.5), root=0, cut_radius=5, include_griffiths=False)


def test_from_networkx_relabels_nodes():
	"""
	Arbitrary node labels are mapped to 0..n-1.
	"""
	# Arrange
	G = nx.Graph([("a", "b"), ("b", "c")])

	# Act
	graph = from_networkx(G, 0.3)

	# Assert
	assert graph.n_vertices == 3 and graph.n_bonds == 2, "Path on three vertices"
	assert np.allclose(graph.couplings, 0.3), "Uniform coupling"
