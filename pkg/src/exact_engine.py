# src/exact_engine.py

## Imports
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from networkx.algorithms.connectivity import local_edge_connectivity
from networkx.algorithms.flow import edmonds_karp
from tqdm import tqdm

from errors import BadCutRadius, InvalidGraph, TooManyBonds, TooManyVertices

logger = logging.getLogger(__name__)

MAX_VERTICES = 20
MAX_BONDS = 18
MAX_STATE_BONDS = 10
SLACK_TOL = 1e-12

# Collapsed per-bond current states
ZERO, EVEN, ODD = 0, 1, 2


## Data Classes
@dataclass(frozen=True)
class SpinGraph:
	"""Finite simple graph carrying ferromagnetic Ising couplings.

	Attributes:
		n_vertices : int
		bonds : np.ndarray
			Integer array of shape (B, 2), one row per bond {a, b}.
		couplings : np.ndarray
			J_b >= 0 for every bond, shape (B,).
		labels : np.ndarray, optional
			(site, replica) tag per vertex, shape (n_vertices, 2), for
			Griffiths-Simon block systems.
		positions : np.ndarray, optional
			Spatial coordinates per vertex, used as the radius for Simon-Lieb cuts.
	"""
	n_vertices: int
	bonds: np.ndarray = field(repr=False)
	couplings: np.ndarray = field(repr=False)
	labels: Optional[np.ndarray] = field(default=None, repr=False)
	positions: Optional[np.ndarray] = field(default=None, repr=False)

	def __post_init__(self):
		bonds = np.asarray(self.bonds, dtype=np.int64).reshape(-1, 2)
		couplings = np.asarray(self.couplings, dtype=float).reshape(-1)
		object.__setattr__(self, "bonds", bonds)
		object.__setattr__(self, "couplings", couplings)

		if self.n_vertices < 1:
			raise InvalidGraph(f"Graph needs at least one vertex, got {self.n_vertices}")
		if len(bonds) != len(couplings):
			raise InvalidGraph(f"{len(bonds)} bonds but {len(couplings)} couplings")
		if len(bonds) and (bonds.min() < 0 or bonds.max() >= self.n_vertices):
			raise InvalidGraph("Bond endpoint outside the vertex range")
		if np.any(bonds[:, 0] == bonds[:, 1]):
			raise InvalidGraph("Self-loops are not allowed")
		keys = {tuple(sorted(b)) for b in bonds.tolist()}
		if len(keys) != len(bonds):
			raise InvalidGraph("Duplicate bonds are not allowed")
		if np.any(couplings < 0):
			raise InvalidGraph("Couplings must be nonnegative (ferromagnetic)")

	@property
	def n_bonds(self) -> int:
		return len(self.bonds)

	def tanh_matrix(self) -> np.ndarray:
		"""Symmetric matrix of tanh J_{ab} (zero on the diagonal and for non-bonds)."""
		T = np.zeros((self.n_vertices, self.n_vertices))
		t = np.tanh(self.couplings)
		T[self.bonds[:, 0], self.bonds[:, 1]] = t
		T[self.bonds[:, 1], self.bonds[:, 0]] = t
		return T

	def with_couplings(self, couplings: Sequence[float]) -> "SpinGraph":
		return replace(self, couplings=np.asarray(couplings, dtype=float))

	def to_networkx(self, bond_mask: Optional[np.ndarray] = None) -> nx.Graph:
		G = nx.Graph()
		G.add_nodes_from(range(self.n_vertices))
		rows = self.bonds if bond_mask is None else self.bonds[bond_mask]
		G.add_edges_from(map(tuple, rows.tolist()))
		return G

	def radii(self, root: int) -> np.ndarray:
		"""Distance of every vertex from the root: Euclidean if positions are set, hop count otherwise."""
		if self.positions is not None:
			pos = np.asarray(self.positions, dtype=float)
			return np.sqrt(((pos - pos[root]) ** 2).sum(axis=1))
		lengths = nx.single_source_shortest_path_length(self.to_networkx(), root)
		return np.array([lengths.get(v, np.inf) for v in range(self.n_vertices)], dtype=float)


@dataclass(frozen=True)
class CurrentState:
	"""Collapsed random current: each bond is zero, even and positive, or odd.

	Attributes:
		states : np.ndarray
			Per-bond state in {ZERO, EVEN, ODD}.
	"""
	states: np.ndarray

	def weight(self, couplings: np.ndarray) -> float:
		"""Product of the per-bond weights 1, cosh J - 1 and sinh J."""
		factors = np.select(
			[self.states == ZERO, self.states == EVEN, self.states == ODD],
			[np.ones_like(couplings), np.cosh(couplings) - 1.0, np.sinh(couplings)],
		)
		return float(np.prod(factors))

	def occupied(self) -> np.ndarray:
		return self.states != ZERO

	def sources(self, graph: SpinGraph) -> np.ndarray:
		"""Vertices of odd current degree (XOR of the incident odd bonds)."""
		parity = np.zeros(graph.n_vertices, dtype=np.int64)
		odd = graph.bonds[self.states == ODD]
		np.add.at(parity, odd.reshape(-1), 1)
		return np.flatnonzero(parity % 2)


## Graph constructors
def path_graph(n: int, J: float) -> SpinGraph:
	bonds = [(i, i + 1) for i in range(n - 1)]
	return SpinGraph(n, np.array(bonds).reshape(-1, 2), np.full(len(bonds), float(J)))


def complete_graph(n: int, J: float) -> SpinGraph:
	bonds = [(a, b) for a in range(n) for b in range(a + 1, n)]
	return SpinGraph(n, np.array(bonds).reshape(-1, 2), np.full(len(bonds), float(J)))


def from_networkx(G: nx.Graph, J: float) -> SpinGraph:
	G = nx.convert_node_labels_to_integers(G)
	bonds = np.array(sorted(tuple(sorted(e)) for e in G.edges()), dtype=np.int64).reshape(-1, 2)
	return SpinGraph(G.number_of_nodes(), bonds, np.full(len(bonds), float(J)))


def connected_graph_suite(max_vertices: int = 4, J: float = 0.5) -> List[SpinGraph]:
	"""All connected graphs with 2..max_vertices vertices, one per isomorphism class."""
	if max_vertices > 7:
		raise ValueError("The graph atlas only covers graphs with up to 7 vertices")
	return [
		from_networkx(G, J)
		for G in nx.graph_atlas_g()
		if 2 <= G.number_of_nodes() <= max_vertices and nx.is_connected(G)
	]


## Enumeration helpers
def _check_bonds(graph: SpinGraph) -> None:
	if graph.n_bonds > MAX_BONDS:
		raise TooManyBonds(f"{graph.n_bonds} bonds exceed the enumeration limit of {MAX_BONDS}")


def _subset_bits(n_bonds: int) -> np.ndarray:
	subsets = np.arange(2 ** n_bonds, dtype=np.int64)
	return ((subsets[:, None] >> np.arange(n_bonds)) & 1).astype(bool)


def _boundaries(graph: SpinGraph, bits: np.ndarray) -> np.ndarray:
	"""Vertex bitmask of odd degree for every bond subset (XOR of endpoint masks)."""
	bond_masks = (np.int64(1) << graph.bonds[:, 0]) | (np.int64(1) << graph.bonds[:, 1])
	return np.bitwise_xor.reduce(np.where(bits, bond_masks, 0), axis=1)


def _parity_sum(graph: SpinGraph, odd_weight: np.ndarray, even_weight: np.ndarray) -> Tuple[float, np.ndarray]:
	"""
	Sum over odd-bond sets O of prod_O odd_weight * prod_{not O} even_weight,
	grouped by the source set of O. Returns (Z, M) with Z the source-free sum
	and M[a, b] the sum with sources {a, b}.
	"""
	bits = _subset_bits(graph.n_bonds)
	boundary = _boundaries(graph, bits)
	w = np.prod(np.where(bits, odd_weight, even_weight), axis=1)
	grouped = pd.Series(w).groupby(boundary).sum()

	n = graph.n_vertices
	M = np.zeros((n, n))
	for a in range(n):
		for b in range(a + 1, n):
			key = (1 << a) | (1 << b)
			M[a, b] = M[b, a] = grouped.get(key, 0.0)
	return float(grouped.get(0, 0.0)), M


## Functions
def spin_two_point_exact(graph: SpinGraph, chunk_size: int = 1 << 16) -> np.ndarray:
	"""
	Ising two-point matrix <sigma_a sigma_b> by direct summation over 2^|V| spin configurations.

	spin_two_point_exact is the reference oracle every other representation is
	compared against. Configurations are processed in fixed-size chunks in
	index order, so the reduction is deterministic.

	Args:
		graph : SpinGraph
			At most 20 vertices.

	Returns:
		np.ndarray
			Symmetric matrix with unit diagonal.

	Example:
		>>> spin_two_point_exact(path_graph(2, 0.5))[0, 1]
		0.46211715726000974
	"""
	n = graph.n_vertices
	if n > MAX_VERTICES:
		raise TooManyVertices(f"{n} vertices exceed the enumeration limit of {MAX_VERTICES}")

	n_configs = 2 ** n
	a, b = graph.bonds[:, 0], graph.bonds[:, 1]
	# Shift energies by the ground state value so the largest weight is 1
	shift = float(graph.couplings.sum())

	Z = 0.0
	S = np.zeros((n, n))
	for start in range(0, n_configs, chunk_size):
		idx = np.arange(start, min(start + chunk_size, n_configs), dtype=np.int64)
		spins = 1.0 - 2.0 * ((idx[:, None] >> np.arange(n)) & 1)
		energy = (spins[:, a] * spins[:, b]) @ graph.couplings
		w = np.exp(energy - shift)
		Z += w.sum()
		S += (spins * w[:, None]).T @ spins
	C = S / Z
	np.fill_diagonal(C, 1.0)
	return C


def current_two_point(graph: SpinGraph) -> np.ndarray:
	"""
	Two-point matrix from the random-current representation.

	<sigma_a sigma_b> is the ratio of the current sums with sources {a, b} and
	with no sources. On each bond the zero and even states only enter through
	their summed weight 1 + (cosh J - 1) = cosh J, so the 3^|B| sum over
	collapsed states reduces to a 2^|B| sum over odd-bond sets weighted by
	sinh J (odd) and cosh J (not odd). The common factor prod cosh J cancels.
	"""
	_check_bonds(graph)
	t = np.tanh(graph.couplings)
	Z, M = _parity_sum(graph, t, np.ones_like(t))
	C = M / Z
	np.fill_diagonal(C, 1.0)
	return C


def raw_current_two_point(graph: SpinGraph, n_max: int = 20) -> Tuple[np.ndarray, float]:
	"""
	Two-point matrix from raw currents n_b in {0, ..., n_max} with weights J^n / n!.

	Returns the matrix and the per-bond analytic tail bound max_b J_b^{n_max+1} / (n_max+1)!.
	"""
	_check_bonds(graph)
	orders = np.arange(n_max + 1)
	log_fact = np.array([math.lgamma(k + 1) for k in orders])
	with np.errstate(divide="ignore"):
		terms = np.exp(orders[None, :] * np.log(graph.couplings[:, None]) - log_fact[None, :])
	terms[:, 0] = 1.0
	even = terms[:, 0::2].sum(axis=1)
	odd = terms[:, 1::2].sum(axis=1)
	Z, M = _parity_sum(graph, odd, even)
	C = M / Z
	np.fill_diagonal(C, 1.0)
	tail = max((float(J) ** (n_max + 1) / math.factorial(n_max + 1) for J in graph.couplings), default=0.0)
	return C, tail


def current_states(graph: SpinGraph) -> Iterator[CurrentState]:
	"""Every collapsed current on the graph, 3^|B| of them, in lexicographic bond order."""
	if graph.n_bonds > MAX_STATE_BONDS:
		raise TooManyBonds(f"{graph.n_bonds} bonds exceed the state-listing limit of {MAX_STATE_BONDS}")
	for states in itertools.product((ZERO, EVEN, ODD), repeat=graph.n_bonds):
		yield CurrentState(np.array(states, dtype=np.int64))


def current_state_table(graph: SpinGraph, root: int) -> pd.DataFrame:
	"""
	One row per collapsed current: weight, sources and double connection to the root.

	The table is the state-by-state reference for current_two_point and pi0 on
	small graphs. Columns:
		- 'weight'     : product of 1, cosh J - 1 and sinh J over the bonds
		- 'sources'    : sorted tuple of odd-degree vertices
		- 'n_occupied' : number of bonds with nonzero current
		- 'linked'     : tuple of vertices double-connected to the root by occupied bonds
	"""
	if not 0 <= root < graph.n_vertices:
		raise InvalidGraph(f"Root {root} is not a vertex")
	rows = []
	for state in current_states(graph):
		occupied = state.occupied()
		rows.append({
			"weight": state.weight(graph.couplings),
			"sources": tuple(int(v) for v in state.sources(graph)),
			"n_occupied": int(occupied.sum()),
			"linked": tuple(int(v) for v in np.flatnonzero(_double_connected(graph, occupied, root))),
		})
	return pd.DataFrame(rows, columns=["weight", "sources", "n_occupied", "linked"])


def _double_connected(graph: SpinGraph, occupied: np.ndarray, root: int) -> np.ndarray:
	"""
	Vertices joined to the root by two bond-disjoint paths of occupied bonds.

	Uses unit-capacity max-flow (Menger). A bond with any positive current
	carries at most one of the two paths.
	"""
	G = graph.to_networkx(occupied)
	out = np.zeros(graph.n_vertices, dtype=bool)
	for x in nx.node_connected_component(G, root):
		if x == root:
			continue
		if local_edge_connectivity(G, root, x, flow_func=edmonds_karp, cutoff=2) >= 2:
			out[x] = True
	return out


def _pi0_chunk(args: Tuple[SpinGraph, int, int, int]) -> np.ndarray:
	"""Numerator of pi0 accumulated over occupied-bond sets in [start, stop)."""
	graph, root, start, stop = args
	n_bonds = graph.n_bonds
	bits = _subset_bits(n_bonds)
	boundary = _boundaries(graph, bits)
	sinh = np.sinh(graph.couplings)
	coshm1 = np.cosh(graph.couplings) - 1.0
	root_bonds = np.any(graph.bonds == root, axis=1)

	acc = np.zeros(graph.n_vertices)
	for occ in range(start, stop):
		occupied = bits[occ]
		# Two bond-disjoint paths need two occupied bonds at the root
		if np.count_nonzero(occupied & root_bonds) < 2:
			continue
		linked = _double_connected(graph, occupied, root)
		if not linked.any():
			continue

		positions = np.flatnonzero(occupied)
		sub_idx = np.arange(2 ** len(positions), dtype=np.int64)
		sub_bits = ((sub_idx[:, None] >> np.arange(len(positions))) & 1).astype(bool)
		odd_sets = (sub_bits.astype(np.int64) << positions).sum(axis=1)
		w = np.prod(np.where(sub_bits, sinh[positions], coshm1[positions]), axis=1)
		src = boundary[odd_sets]
		for x in np.flatnonzero(linked):
			acc[x] += w[src == ((1 << root) | (1 << int(x)))].sum()
	return acc


def pi0(
	graph: SpinGraph,
	root: int,
	workers: int = 1,
	n_chunks: int = 16,
	show_progress: bool = False,
) -> np.ndarray:
	"""
	Zeroth lace-expansion coefficient pi0(root, x) by exact enumeration.

	pi0 sums the weights of collapsed currents with sources {root, x} whose
	occupied bonds double-connect root and x, divided by the source-free sum.
	Occupied-bond sets are enumerated in a fixed order (bonds sorted by
	decreasing coupling) and split into contiguous chunks; chunk results are
	reduced in chunk order so the answer does not depend on `workers`.

	Args:
		graph : SpinGraph
			At most 18 bonds.
		root : int
		workers : int, default = 1
			Worker processes for the chunks (1 runs in-process).
		n_chunks : int, default = 16
		show_progress : bool, default = False

	Returns:
		np.ndarray
			pi0(root, x) for every vertex x, with pi0(root, root) = 1.

	Notes:
		- Occupied sets where the root has fewer than two occupied bonds are
		  skipped, since they cannot double-connect anything.
	"""
	_check_bonds(graph)
	if not 0 <= root < graph.n_vertices:
		raise InvalidGraph(f"Root {root} is not a vertex")

	order = np.argsort(-graph.couplings, kind="stable")
	ordered = replace(graph, bonds=graph.bonds[order], couplings=graph.couplings[order])

	total = 2 ** ordered.n_bonds
	n_chunks = max(1, min(n_chunks, total))
	edges = np.linspace(0, total, n_chunks + 1).astype(int)
	tasks = [(ordered, root, int(edges[i]), int(edges[i + 1])) for i in range(n_chunks)]

	if workers > 1:
		with ProcessPoolExecutor(max_workers=workers) as pool:
			parts = list(pool.map(_pi0_chunk, tasks))
	else:
		parts = [_pi0_chunk(t) for t in tqdm(tasks, desc="pi0 enumeration", disable=not show_progress)]

	numerator = np.zeros(graph.n_vertices)
	for part in parts:
		numerator += part

	t = np.tanh(ordered.couplings)
	Z_tanh, _ = _parity_sum(ordered, t, np.ones_like(t))
	Z = Z_tanh * float(np.prod(np.cosh(ordered.couplings)))
	out = numerator / Z
	out[root] = 1.0
	return out


def full_lace_coefficient(graph: SpinGraph, C: Optional[np.ndarray] = None) -> np.ndarray:
	"""
	All-order lace coefficient P solving C = P + P T C exactly, P = C (1 + T C)^{-1}.

	On a finite graph this is the coefficient for which the lace identity
	closes with zero remainder. T is the tanh J matrix.
	"""
	if C is None:
		C = spin_two_point_exact(graph)
	T = graph.tanh_matrix()
	M = np.eye(graph.n_vertices) + T @ C
	return np.linalg.solve(M.T, C.T).T


def o_bar(graph: SpinGraph, C: np.ndarray, root: int) -> float:
	"""O-bar = sum_v tanh J_{root, v} <sigma_v sigma_root>."""
	return float(graph.tanh_matrix()[root] @ C[:, root])


def lace_identity_check(graph: SpinGraph, root: int, workers: int = 1) -> pd.DataFrame:
	"""
	Lace identity with zero expansion steps, and its remainder bound.

	lace_identity_check computes the remainder
	r(x) = C(o,x) - pi0(o,x) - sum_{u,v} pi0(o,u) tanh J_{uv} C(v,x)
	and compares |r(x)| with sum_u pi0(o,u) sum_v tanh J_{uv} C(v,x).

	Args:
		graph : SpinGraph
		root : int
		workers : int, default = 1

	Returns:
		pd.DataFrame
			One row per vertex x with columns:
				- 'vertex', 'two_point', 'two_point_current', 'pi0'
				- 'residual', 'bound', 'slack' (bound - |residual|)
	"""
	C = spin_two_point_exact(graph)
	C_current = current_two_point(graph)
	p = pi0(graph, root, workers=workers)
	T = graph.tanh_matrix()

	conv = p @ T @ C
	residual = C[root] - p - conv
	df = pd.DataFrame({
		"vertex": np.arange(graph.n_vertices),
		"two_point": C[root],
		"two_point_current": C_current[root],
		"pi0": p,
		"residual": residual,
		"bound": conv,
	})
	df["slack"] = df["bound"] - df["residual"].abs()
	if (df["slack"] < -SLACK_TOL).any():
		logger.warning("Lace remainder bound violated at vertices %s", df.loc[df["slack"] < -SLACK_TOL, "vertex"].tolist())
	return df


def inequality_suite(
	graph: SpinGraph,
	root: int,
	cut_radius: Optional[float] = None,
	include_griffiths: bool = True,
	griffiths_step: float = 1e-3,
) -> pd.DataFrame:
	"""
	Check the correlation inequalities on exact tables.

	inequality_suite reports every inequality instance as lhs <= rhs with its
	slack rhs - lhs:
		- 'a-priori'    : C(o,x) - delta <= sum_v tanh J_{o,v} C(v,x)
		- 'pi0-positive': 0 <= pi0(o,x) - delta
		- 'pi0-cube'    : pi0(o,x) <= C(o,x)^3 for x != o
		- 'simon-lieb'  : C(o,x) <= sum_{|u|<=l<|v|} C(o,u) tanh J_{u,v} C(v,x) for |x| > l
		- 'griffiths'   : raising any J_b does not lower any C(a,b)

	Args:
		graph : SpinGraph
		root : int
		cut_radius : float, optional
			l for the Simon-Lieb cut; radii come from SpinGraph.radii.
		include_griffiths : bool, default = True
		griffiths_step : float, default = 1e-3

	Returns:
		pd.DataFrame
			Columns 'inequality', 'x', 'lhs', 'rhs', 'slack', 'passed'.
	"""
	C = spin_two_point_exact(graph)
	p = pi0(graph, root)
	T = graph.tanh_matrix()
	n = graph.n_vertices
	delta = np.zeros(n)
	delta[root] = 1.0
	rows: List[Dict] = []

	def add(name: str, x: int, lhs: float, rhs: float) -> None:
		rows.append({"inequality": name, "x": int(x), "lhs": float(lhs), "rhs": float(rhs)})

	a_priori = T[root] @ C
	for x in range(n):
		add("a-priori", x, C[root, x] - delta[x], a_priori[x])
		add("pi0-positive", x, 0.0, p[x] - delta[x])
		if x != root:
			add("pi0-cube", x, p[x], C[root, x] ** 3)

	if cut_radius is not None:
		radii = graph.radii(root)
		if cut_radius < 0 or not np.any(radii > cut_radius):
			raise BadCutRadius(f"Cut radius {cut_radius} must lie in [0, {radii[np.isfinite(radii)].max()})")
		inside = radii <= cut_radius
		cut = np.outer(inside, ~inside) * T
		sl = C[root] @ cut @ C
		for x in np.flatnonzero(~inside):
			add("simon-lieb", x, C[root, x], sl[x])

	if include_griffiths:
		for b in range(graph.n_bonds):
			raised = graph.couplings.copy()
			raised[b] += griffiths_step
			C_up = spin_two_point_exact(graph.with_couplings(raised))
			add("griffiths", b, float(np.max(C - C_up)), 0.0)

	df = pd.DataFrame(rows)
	df["slack"] = df["rhs"] - df["lhs"]
	df["passed"] = df["slack"] >= -SLACK_TOL
	return df
