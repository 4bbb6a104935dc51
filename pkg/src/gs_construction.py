# src/gs_construction.py

## Imports
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import integrate, special

from errors import BlockAsymmetry, FerromagneticViolation, NonpositiveLambda
from exact_engine import SpinGraph
from lattice_couplings import CouplingSpec, StepDistribution, TorusGeometry, kernel_on_torus, step_distribution

logger = logging.getLogger(__name__)

MAX_SINGLE_SITE_N = 10 ** 6
QUADRATURE_HALF_WIDTH = 12.0
QUADRATURE_STEP = 1e-3


## Data Classes
@dataclass(frozen=True)
class GSParams:
	"""Griffiths-Simon parameter bundle for N Ising replicas per site.

	GSParams maps the phi^4 parameters (lambda, mu, coupling) at replica count N
	onto the Ising couplings of the block-spin system:

		eps_N   = (lambda N^3 / 2)^{-1/4}
		I       = 1/N - mu eps_N^2            (intra-block, all replica pairs)
		J_{x,y} = coupling(y - x) eps_N^2     (between replicas of distinct sites)
		p       = N sum_v tanh J_{o,v} / (1 - (N-1) tanh I)
		D(v)    = tanh J_{o,v} / sum_v tanh J_{o,v}
		tlamb   = 1 / (mu eps_N^2 N^2)

	Attributes:
		lam, mu : float
		N : int
		coupling : CouplingSpec
		epsilon : float
		I : float
		J : CouplingSpec
			The coupling scaled by eps_N^2.
		tanh_sum : float
			sum_v tanh J_{o,v}.
		p : float
		D : StepDistribution
		self_feedback : float
			(N-1) tanh I / (1 - (N-1) tanh I).
		tlamb : float
	"""
	lam: float
	mu: float
	N: int
	coupling: CouplingSpec = field(repr=False)
	epsilon: float
	I: float
	J: CouplingSpec = field(repr=False)
	tanh_sum: float
	p: float
	D: Optional[StepDistribution] = field(repr=False)
	self_feedback: float
	tlamb: float

	@property
	def eps2(self) -> float:
		return self.epsilon ** 2

	@property
	def tanh_I(self) -> float:
		return math.tanh(self.I)

	def to_dict(self) -> Dict[str, float]:
		return {
			"lambda": self.lam,
			"mu": self.mu,
			"N": self.N,
			"epsilon": self.epsilon,
			"I": self.I,
			"tanh_I": self.tanh_I,
			"p": self.p,
			"tanh_sum": self.tanh_sum,
			"self_feedback": self.self_feedback,
			"tlamb": self.tlamb,
		}


@dataclass(frozen=True)
class SingleSiteMeasure:
	"""Law of the block spin sigma-tilde = N - 2k at a single site.

	w_k = C(N, k) 2^{-N} exp(I sigma-tilde^2 / 2), held in log domain.
	"""
	N: int
	I: float
	epsilon: float

	def spins(self) -> np.ndarray:
		return self.N - 2.0 * np.arange(self.N + 1)

	def log_weights(self) -> np.ndarray:
		k = np.arange(self.N + 1)
		log_binom = special.gammaln(self.N + 1) - special.gammaln(k + 1) - special.gammaln(self.N - k + 1)
		return log_binom - self.N * math.log(2.0) + 0.5 * self.I * self.spins() ** 2

	def log_normalization(self) -> float:
		return float(special.logsumexp(self.log_weights()))

	def probabilities(self) -> np.ndarray:
		lw = self.log_weights()
		return np.exp(lw - special.logsumexp(lw))

	def moment(self, order: int) -> float:
		"""<(eps_N sigma-tilde)^order>."""
		return float(np.sum(self.probabilities() * (self.epsilon * self.spins()) ** order))


@dataclass
class BlockWalk:
	"""Block-spin random walk data on a finite torus.

	Attributes:
		N : int
		p : float
		tanh_I : float
		self_feedback : float
		D : np.ndarray
			Step distribution from the torus-wrapped couplings.
		torus : TorusGeometry
	"""
	N: int
	p: float
	tanh_I: float
	self_feedback: float
	D: np.ndarray = field(repr=False)
	torus: TorusGeometry


@dataclass
class BlockTwoPoint:
	"""Block-spin two-point data derived from a site-level Ising table.

	Attributes:
		G : np.ndarray
			G_N(x) = (1 - (N-1) tanh I) / N <sigma-tilde_o sigma-tilde_x>, torus table.
		block : np.ndarray
			<sigma-tilde_o sigma-tilde_x>.
		replica_spread : float
			Largest spread over root replicas of N <sigma_(o,i) sigma-tilde_x>.
		pair_bounds : pd.DataFrame
			One row per vertex x-tilde != o-tilde with lhs <sigma_o sigma_x>,
			rhs delta + 4 G_N(x) / (mu eps^2 N^2) and slack.
	"""
	G: np.ndarray = field(repr=False)
	block: np.ndarray = field(repr=False)
	replica_spread: float
	pair_bounds: pd.DataFrame = field(repr=False)

	def susceptibility(self) -> float:
		return float(self.G.sum())


## Functions
def gs_params(lam: float, mu: float, coupling: CouplingSpec, N: int, validate: bool = True) -> GSParams:
	"""
	Griffiths-Simon parameters for phi^4 couplings (lam, mu) with N replicas per site.

	Args:
		lam : float
			Quartic coupling lambda > 0.
		mu : float
			Quadratic coupling.
		coupling : CouplingSpec
		N : int
			Replicas per site; the ferromagnetic condition needs N >= 2 mu^2 / lam.
		validate : bool, default = True
			Set False only for arithmetic checks outside the physical domain.

	Returns:
		GSParams

	Example:
		>>> nn = build_coupling("nearest-neighbor", 5, amplitude=0.1)
		>>> gs_params(0.5, 1.0, nn, 16).I
		0.03125
	"""
	if validate:
		if lam <= 0:
			raise NonpositiveLambda(f"lambda must be positive, got {lam}")
		if N < 2 * mu ** 2 / lam:
			raise FerromagneticViolation(f"N={N} < 2 mu^2 / lambda = {2 * mu ** 2 / lam:.6g}; intra-block coupling would be negative")

	epsilon = (lam * N ** 3 / 2.0) ** (-0.25)
	eps2 = epsilon ** 2
	I = 1.0 / N - mu * eps2
	J = coupling.scaled(eps2)
	tanh_sum = float(np.tanh(J.values).sum())
	block = 1.0 - (N - 1) * math.tanh(I)
	p = N * tanh_sum / block
	# Decoupled sites (J == 0) have no walk
	D = step_distribution(coupling, scale=eps2) if tanh_sum > 0 else None
	self_feedback = (N - 1) * math.tanh(I) / block
	tlamb = 1.0 / (mu * eps2 * N ** 2) if mu != 0 else float("inf")

	params = GSParams(lam, mu, N, coupling, epsilon, I, J, tanh_sum, p, D, self_feedback, tlamb)
	logger.debug("GS parameters: %s", params.to_dict())
	return params


def massless_fugacity_point(params: GSParams) -> Dict[str, float]:
	"""
	The mu at which the block walk becomes massless (p = 1) for the given N.

	mu_N^G = eps_N^{-2} (1/N - artanh((1 - N sum tanh J) / (N - 1))), which
	satisfies mu_N^G < J-hat N / (N - 1). Only the lambda, N and coupling of
	`params` are used.
	"""
	N = params.N
	arg = (1.0 - N * params.tanh_sum) / (N - 1)
	if not -1.0 < arg < 1.0:
		raise ValueError(f"No massless point: artanh argument {arg:.6g} outside (-1, 1)")
	mu_NG = (1.0 / N - math.atanh(arg)) / params.eps2
	return {"mu_NG": mu_NG, "upper_bound": params.coupling.jhat * N / (N - 1)}


def single_site_measure(params: GSParams) -> SingleSiteMeasure:
	if params.N > MAX_SINGLE_SITE_N:
		raise ValueError(f"N={params.N} exceeds the exact single-site limit {MAX_SINGLE_SITE_N}")
	return SingleSiteMeasure(params.N, params.I, params.epsilon)


def quadrature_moments(lam: float, mu: float, orders: Iterable[int] = (2, 4)) -> Dict[int, float]:
	"""Moments of the density proportional to exp(-mu phi^2 / 2 - lam phi^4 / 24) by composite Simpson."""
	n_points = int(round(2 * QUADRATURE_HALF_WIDTH / QUADRATURE_STEP)) + 1
	phi = np.linspace(-QUADRATURE_HALF_WIDTH, QUADRATURE_HALF_WIDTH, n_points)
	log_density = -0.5 * mu * phi ** 2 - lam * phi ** 4 / 24.0
	density = np.exp(log_density - log_density.max())
	Z = integrate.simpson(density, x=phi)
	return {k: float(integrate.simpson(density * phi ** k, x=phi) / Z) for k in orders}


def single_site_moments(params: GSParams, orders: Iterable[int] = (2, 4)) -> pd.DataFrame:
	"""
	Exact finite-N block-spin moments against the phi^4 single-site moments.

	single_site_moments evaluates <(eps_N sigma-tilde)^k> from the log-domain
	binomial weights and the corresponding moment of
	exp(-mu phi^2 / 2 - lam phi^4 / 24) by quadrature.

	Returns:
		pd.DataFrame
			Columns 'N', 'order', 'exact', 'target', 'difference' (absolute).
	"""
	orders = list(orders)
	measure = single_site_measure(params)
	target = quadrature_moments(params.lam, params.mu, orders)
	rows = []
	for k in orders:
		exact = measure.moment(k)
		rows.append({"N": params.N, "order": k, "exact": exact, "target": target[k], "difference": abs(exact - target[k])})
	return pd.DataFrame(rows)


def single_site_convergence(
	lam: float,
	mu: float,
	coupling: CouplingSpec,
	N_list: Sequence[int],
	orders: Iterable[int] = (2, 4),
	slack: float = 1e-12,
) -> pd.DataFrame:
	"""
	Single-site moment discrepancies along an increasing list of N.

	Returns the stacked single_site_moments tables with an extra boolean column
	'decreasing' telling whether the difference dropped (by more than `slack`)
	relative to the previous N for the same order.
	"""
	frames = [single_site_moments(gs_params(lam, mu, coupling, N), orders) for N in sorted(N_list)]
	df = pd.concat(frames, ignore_index=True)
	df["decreasing"] = df.groupby("order")["difference"].transform(lambda s: s.diff() < slack)
	# The first N of each order has nothing to compare against
	df.loc[df.groupby("order").head(1).index, "decreasing"] = True
	return df


def block_walk(params: GSParams, torus: TorusGeometry) -> BlockWalk:
	"""p, D, tanh I and the self-feedback prefactor computed from torus-wrapped couplings."""
	J_table = kernel_on_torus(params.J.offsets, params.J.values, torus)
	tanh_table = np.tanh(J_table)
	tanh_sum = float(tanh_table.sum())
	D = tanh_table / tanh_sum if tanh_sum > 0 else tanh_table
	tI = params.tanh_I
	block = 1.0 - (params.N - 1) * tI
	return BlockWalk(
		N=params.N,
		p=params.N * tanh_sum / block,
		tanh_I=tI,
		self_feedback=(params.N - 1) * tI / block,
		D=D,
		torus=torus,
	)


def block_spin_graph(params: GSParams, torus: TorusGeometry) -> SpinGraph:
	"""
	The N-replica Ising graph of the Griffiths-Simon system on a torus.

	Vertex (x, i) has index x * N + i, where x is the torus site index. Replicas
	of one site are joined pairwise with coupling I; replicas of distinct sites
	x, y are joined pairwise with the torus-wrapped J(y - x).
	"""
	N = params.N
	J_table = kernel_on_torus(params.J.offsets, params.J.values, torus)
	coords = torus.coordinates()
	n_sites = torus.n_sites

	bonds, couplings = [], []
	for x in range(n_sites):
		if params.I > 0:
			for i, j in itertools.combinations(range(N), 2):
				bonds.append((x * N + i, x * N + j))
				couplings.append(params.I)
		for y in range(x + 1, n_sites):
			J_xy = J_table[tuple(np.mod(coords[y] - coords[x], torus.L))]
			if J_xy == 0:
				continue
			for i in range(N):
				for j in range(N):
					bonds.append((x * N + i, y * N + j))
					couplings.append(J_xy)

	labels = np.array([(x, i) for x in range(n_sites) for i in range(N)], dtype=np.int64)
	positions = np.repeat(coords.astype(float), N, axis=0)
	return SpinGraph(n_sites * N, np.array(bonds, dtype=np.int64).reshape(-1, 2), np.array(couplings), labels, positions)


def block_two_point(
	C: np.ndarray,
	graph: SpinGraph,
	params: GSParams,
	torus: TorusGeometry,
	root_site: int = 0,
	tol: float = 1e-10,
) -> BlockTwoPoint:
	"""
	Block-spin two-point function G_N from a site-level Ising table.

	block_two_point sums <sigma_(o,i) sigma_(x,j)> over replicas, checks that
	N <sigma_(o,i) sigma-tilde_x> does not depend on the root replica i, and
	tests the pair bound <sigma_o sigma_x> <= 4 G_N(x) / (mu eps^2 N^2) at every
	vertex other than the root replica.

	Args:
		C : np.ndarray
			Site-level two-point matrix (exact or Monte Carlo).
		graph : SpinGraph
			Carries the (site, replica) labels of each vertex.
		params : GSParams
		torus : TorusGeometry
			Sites are indexed in torus order.
		root_site : int, default = 0
		tol : float, default = 1e-10

	Returns:
		BlockTwoPoint

	Notes:
		- Raises BlockAsymmetry when the replica spread exceeds tol.
		- The pair bound needs mu > 0; otherwise its rhs is reported as NaN.
	"""
	if graph.labels is None:
		raise ValueError("Block two-point needs a graph with (site, replica) labels")
	N = params.N
	sites = graph.labels[:, 0]
	root_vertices = np.flatnonzero(sites == root_site)

	# per_replica[i, x] = sum_j <sigma_(o,i) sigma_(x,j)>
	per_replica = np.zeros((len(root_vertices), torus.n_sites))
	for r, v in enumerate(root_vertices):
		np.add.at(per_replica[r], sites, C[v])
	spread = float(np.max(per_replica.max(axis=0) - per_replica.min(axis=0)))
	if spread > tol:
		raise BlockAsymmetry(f"Replica values differ by {spread:.3g} (tolerance {tol})")

	block = per_replica.sum(axis=0)
	G = (1.0 - (N - 1) * params.tanh_I) / N * block

	root = int(root_vertices[0])
	scale = params.mu * params.eps2 * N ** 2
	rows = []
	for v in range(graph.n_vertices):
		if v == root:
			continue
		# The vertex delta vanishes off the root, including on replicas of the root site
		rhs = 4.0 * G[sites[v]] / scale if params.mu > 0 else float("nan")
		rows.append({"vertex": v, "site": int(sites[v]), "lhs": float(C[root, v]), "rhs": rhs})
	bounds = pd.DataFrame(rows, columns=["vertex", "site", "lhs", "rhs"])
	bounds["slack"] = bounds["rhs"] - bounds["lhs"]

	return BlockTwoPoint(G.reshape(torus.shape), block.reshape(torus.shape), spread, bounds)


def phi2_proxy(params: GSParams, o_bar_value: float) -> float:
	"""eps_N^2 N^2 O-bar, the finite-N stand-in for <phi_o^2>."""
	return params.eps2 * params.N ** 2 * o_bar_value
