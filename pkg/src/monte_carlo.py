# src/monte_carlo.py

## Imports
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numba import njit
from scipy import integrate, stats
from scipy.fft import fftn, ifftn
from tqdm import tqdm

from errors import ExtrapolationUnstable, NonpositiveLambda, ToolkitValueError
from estimators import (
	Estimate,
	PowerLawFit,
	estimate_series,
	fit_power_law,
	jackknife,
	block_length_for,
	integrated_autocorrelation_time,
	merge_estimates,
	weighted_linear_fit,
)
from green_function import asymptotic_amplitude, green_fft
from lattice_couplings import CouplingSpec, TorusGeometry, kernel_on_torus
from sweeps import SweepConfig, grid_sweep

logger = logging.getLogger(__name__)

Displacement = Tuple[int, ...]

# Width adaptation during burn-in
WIDTH_SHRINK = 0.8
WIDTH_GROW = 1.25
MAX_WIDTH = 50.0
# Linear extrapolation of chi^{-1} is rejected below this goodness-of-fit p-value
EXTRAPOLATION_P_MIN = 1e-3


## Data Classes
@dataclass
class ChainSchedule:
	"""Sweep schedule for one Metropolis chain.

	Attributes:
		sweeps : int
			Measurement-phase sweeps (after burn-in).
		burn_in : int
			Sweeps discarded before measuring; width tuning happens here.
		thin : int, default = 1
			Measure every `thin` sweeps.
		tune_interval : int, default = 50
			Burn-in sweeps between width adjustments.
		acceptance_window : Tuple[float, float], default = (0.4, 0.6)
		initial_width : float, default = 1.0
			Standard deviation of the Gaussian proposal.
		min_blocks : int, default = 20
			Fewest error-analysis blocks accepted before NotEquilibrated.
	"""
	sweeps: int
	burn_in: int
	thin: int = 1
	tune_interval: int = 50
	acceptance_window: Tuple[float, float] = (0.4, 0.6)
	initial_width: float = 1.0
	min_blocks: int = 20

	def __post_init__(self):
		if self.sweeps < 1 or self.burn_in < 0 or self.thin < 1:
			raise ToolkitValueError(
				f"Invalid schedule: sweeps={self.sweeps}, burn_in={self.burn_in}, thin={self.thin}"
			)

	@property
	def n_measurements(self) -> int:
		return self.sweeps // self.thin


@dataclass
class FieldConfiguration:
	"""A real field phi_x on the torus sites, stored as a (L,) * d array."""
	torus: TorusGeometry
	phi: np.ndarray = field(repr=False)

	def __post_init__(self):
		if self.phi.shape != self.torus.shape:
			raise ValueError(f"Field shape {self.phi.shape} does not match torus {self.torus.shape}")
		if not np.all(np.isfinite(self.phi)):
			raise ValueError("Field configuration holds non-finite values")

	def energy(self, coupling: CouplingSpec, lam: float, mu: float) -> float:
		"""H = -1/2 sum_x phi_x (J * phi)_x + sum_x (mu/2 phi_x^2 + lam/24 phi_x^4)."""
		local = _coupling_field(self.phi, coupling, self.torus)
		return float(
			-0.5 * np.sum(self.phi * local)
			+ np.sum(0.5 * mu * self.phi ** 2 + lam / 24.0 * self.phi ** 4)
		)


@dataclass
class ObservableSet:
	"""Estimates of the phi^4 observables from one chain (or merged chains).

	Attributes:
		torus : TorusGeometry
		lam, mu : float
		displacements : List[Displacement]
			Minimal-image displacements carried by two_point / phi3_phi.
		two_point : Dict[Displacement, Estimate]
			<phi_o phi_x>, translation averaged over all origins.
		phi3_phi : Dict[Displacement, Estimate]
			<phi_o^3 phi_x>.
		phi2, phi4, chi, u4 : Estimate
			chi = sum_x <phi_o phi_x> (torus sum); u4 = <phi^4> - 3 <phi^2>^2.
		samples : pd.DataFrame, optional
			Per-measurement series, one column per observable. None for exact sets.
		acceptance : float
		width : float
			Tuned proposal width.
		seed : int, optional
		chain_index : int
		chains : List[ObservableSet]
			Constituent chains when this set is a merge.
	"""
	torus: TorusGeometry
	lam: float
	mu: float
	displacements: List[Displacement]
	two_point: Dict[Displacement, Estimate] = field(repr=False)
	phi3_phi: Dict[Displacement, Estimate] = field(repr=False)
	phi2: Estimate
	phi4: Estimate
	chi: Estimate
	u4: Estimate
	samples: Optional[pd.DataFrame] = field(default=None, repr=False)
	acceptance: float = float("nan")
	width: float = float("nan")
	seed: Optional[int] = None
	chain_index: int = 0
	chains: List["ObservableSet"] = field(default_factory=list, repr=False)

	def to_frame(self) -> pd.DataFrame:
		"""One row per estimate: observable, displacement (empty for scalars), mean, stderr, tau_int."""
		rows = []
		for name in ("phi2", "phi4", "chi", "u4"):
			est = getattr(self, name)
			rows.append({"observable": name, "x": "", **est.to_dict()})
		for name, table in (("G", self.two_point), ("Q", self.phi3_phi)):
			for x in self.displacements:
				rows.append({"observable": name, "x": _label(x), **table[x].to_dict()})
		return pd.DataFrame(rows)

	def summary(self) -> Dict:
		return {
			"lambda": self.lam,
			"mu": self.mu,
			"L": self.torus.L,
			"d": self.torus.d,
			"acceptance": self.acceptance,
			"width": self.width,
			"n_chains": max(1, len(self.chains)),
			"estimates": self.to_frame().to_dict(orient="records"),
		}


@dataclass
class CriticalScan:
	"""Outcome of a critical-point scan.

	Attributes:
		points : pd.DataFrame
			One row per (L, mu) with chi, chi_inv, phi2, u4 and their errors.
		extrapolations : pd.DataFrame
			One row per L with mu_c, its error, the fit chi2 / p-value, the
			phi2 proxy, Delta = mu_c - (J-hat - lam/2 phi2) and the Griffiths
			monotonicity flag.
		mu_c : Estimate
			Estimate at the largest torus.
		delta : Estimate
			Delta at the largest torus.
		finite_size_drift : float
			mu_c(largest L) - mu_c(smallest L).
	"""
	points: pd.DataFrame = field(repr=False)
	extrapolations: pd.DataFrame = field(repr=False)
	mu_c: Estimate
	delta: Estimate
	finite_size_drift: float


## Functions
def _label(x: Sequence[int]) -> str:
	return ",".join(str(int(c)) for c in x)


def _coupling_field(phi: np.ndarray, coupling: CouplingSpec, torus: TorusGeometry) -> np.ndarray:
	# (J * phi)_x = sum_v J(v) phi_{x+v}; J is symmetric so this is a plain convolution
	J_table = kernel_on_torus(coupling.offsets, coupling.values, torus)
	return ifftn(fftn(J_table) * fftn(phi)).real


def chain_generator(seed: int, chain_index: int = 0) -> np.random.Generator:
	"""Counter-based Philox stream for chain `chain_index`, disjoint from the others of the same seed."""
	return np.random.Generator(np.random.Philox(int(seed)).jumped(int(chain_index)))


def neighbour_table(coupling: CouplingSpec, torus: TorusGeometry) -> Tuple[np.ndarray, np.ndarray]:
	"""
	Site -> coupled sites table for the sweep kernel.

	Returns:
		(neighbours, weights)
			neighbours[x, j] is the flat index of x + offsets[j] on the torus and
			weights[j] = J(offsets[j]). Coinciding images on small tori appear as
			separate entries, matching the wrapped coupling.
	"""
	# Raises TorusTooSmall if some offset wraps onto the site itself
	kernel_on_torus(coupling.offsets, coupling.values, torus)
	raw = np.indices(torus.shape).reshape(torus.d, -1).T
	targets = raw[:, None, :] + coupling.offsets[None, :, :]
	flat = np.ravel_multi_index(tuple(np.mod(targets, torus.L).transpose(2, 0, 1)), torus.shape)
	return flat.astype(np.int64), coupling.values.astype(float)


def sweep_order(torus: TorusGeometry) -> np.ndarray:
	"""Deterministic checkerboard order: all even sites, then all odd sites."""
	raw = np.indices(torus.shape).reshape(torus.d, -1).T
	parity = raw.sum(axis=1) % 2
	return np.concatenate([np.flatnonzero(parity == 0), np.flatnonzero(parity == 1)]).astype(np.int64)


@njit(cache=True)
def _metropolis_sweep(phi, order, neighbours, weights, mu, lam, width, proposals, uniforms):
	# One pass of single-site Metropolis; returns the number of accepted moves
	accepted = 0
	for n in range(order.shape[0]):
		x = order[n]
		old = phi[x]
		local = 0.0
		for j in range(neighbours.shape[1]):
			local += weights[j] * phi[neighbours[x, j]]
		new = old + width * proposals[n]
		old2 = old * old
		new2 = new * new
		delta_H = -(new - old) * local + 0.5 * mu * (new2 - old2) + lam / 24.0 * (new2 * new2 - old2 * old2)
		if delta_H <= 0.0 or uniforms[n] < math.exp(-delta_H):
			phi[x] = new
			accepted += 1
	return accepted


def _tune_width(width: float, rate: float, window: Tuple[float, float]) -> float:
	if rate < window[0]:
		return width * WIDTH_SHRINK
	if rate > window[1]:
		return min(width * WIDTH_GROW, MAX_WIDTH)
	return width


def displacement_closure(
	displacements: Iterable[Sequence[int]],
	coupling: CouplingSpec,
	torus: TorusGeometry,
) -> List[Displacement]:
	"""
	Requested displacements plus every x - v, v in the coupling support.

	The Schwinger-Dyson residual at x needs <phi_o phi_{x-v}> for each v, so
	the closure is what a chain has to measure. Order: requested first, then
	the additions in support order, duplicates removed.
	"""
	out: List[Displacement] = []
	seen = set()

	def push(x):
		key = tuple(int(c) for c in torus.reduce(np.asarray(x)))
		if key not in seen:
			seen.add(key)
			out.append(key)

	requested = [np.asarray(x, dtype=np.int64) for x in displacements]
	for x in requested:
		push(x)
	for x in requested:
		for v in coupling.offsets:
			push(x - v)
	return out


def _measure(phi: np.ndarray, torus: TorusGeometry, index: Tuple[np.ndarray, ...]) -> Tuple[float, float, float, np.ndarray, np.ndarray]:
	V = torus.n_sites
	phi_hat = fftn(phi)
	# C(x) = (1/V) sum_y phi_y phi_{y+x}, Q(x) = (1/V) sum_y phi_y^3 phi_{y+x}
	C = ifftn(np.abs(phi_hat) ** 2).real / V
	Q = ifftn(np.conj(fftn(phi ** 3)) * phi_hat).real / V
	phi2 = float(np.mean(phi ** 2))
	phi4 = float(np.mean(phi ** 4))
	chi = float(phi.sum() ** 2 / V)
	return phi2, phi4, chi, C[index], Q[index]


def run_chain(
	coupling: CouplingSpec,
	lam: float,
	mu: float,
	torus: TorusGeometry,
	schedule: ChainSchedule,
	seed: int,
	chain_index: int = 0,
	displacements: Optional[Iterable[Sequence[int]]] = None,
	show_progress: bool = False,
) -> ObservableSet:
	"""
	Sample the phi^4 model on a torus with single-site Metropolis.

	run_chain starts from the zero field, tunes the Gaussian proposal width
	towards the acceptance window during burn-in (deterministic even/odd site
	order), then measures every `thin` sweeps. Two-point functions are
	translation averaged with FFTs so every origin contributes.

	Args:
		coupling : CouplingSpec
		lam : float
			Quartic coupling, >= 0.
		mu : float
			Quadratic coupling; mu > mu_c is the caller's responsibility.
		torus : TorusGeometry
		schedule : ChainSchedule
		seed : int
		chain_index : int, default = 0
			Selects an independent Philox stream for the same seed.
		displacements : Iterable, optional
			Displacements to measure (default: origin and e_1); the closure
			under the coupling support is added for sd_residual.
		show_progress : bool, default = False

	Returns:
		ObservableSet

	Example:
		>>> coupling = build_coupling("nearest-neighbor", 5, amplitude=0.1)
		>>> obs = run_chain(coupling, 0.25, coupling.jhat + 0.5, TorusGeometry(5, 6), ChainSchedule(2000, 500), seed=1)
		>>> obs.u4.mean <= 3 * obs.u4.stderr
		True

	Notes:
		- Same (seed, chain_index, schedule) gives bit-identical output.
		- Raises NotEquilibrated when tau_int leaves fewer than schedule.min_blocks blocks.
	"""
	if lam < 0:
		raise NonpositiveLambda(f"Quartic coupling must be >= 0, got lam={lam}")
	if displacements is None:
		e1 = tuple([1] + [0] * (torus.d - 1))
		displacements = [(0,) * torus.d, e1]
	disp = displacement_closure(displacements, coupling, torus)
	index = tuple(np.mod(np.array(disp), torus.L).T)

	rng = chain_generator(seed, chain_index)
	neighbours, weights = neighbour_table(coupling, torus)
	order = sweep_order(torus)
	V = torus.n_sites
	phi = np.zeros(V)
	width = schedule.initial_width

	# Burn-in with width tuning
	accepted = 0
	for sweep in range(schedule.burn_in):
		accepted += _metropolis_sweep(phi, order, neighbours, weights, mu, lam, width, rng.standard_normal(V), rng.random(V))
		if (sweep + 1) % schedule.tune_interval == 0:
			width = _tune_width(width, accepted / (schedule.tune_interval * V), schedule.acceptance_window)
			accepted = 0
	logger.debug("Chain %d (seed %d): tuned width %.3f", chain_index, seed, width)

	n_meas = schedule.n_measurements
	phi2 = np.empty(n_meas)
	phi4 = np.empty(n_meas)
	chi = np.empty(n_meas)
	G = np.empty((n_meas, len(disp)))
	Q = np.empty((n_meas, len(disp)))

	accepted = 0
	m = 0
	for sweep in tqdm(range(schedule.sweeps), desc=f"Chain {chain_index}", disable=not show_progress):
		accepted += _metropolis_sweep(phi, order, neighbours, weights, mu, lam, width, rng.standard_normal(V), rng.random(V))
		if (sweep + 1) % schedule.thin == 0 and m < n_meas:
			phi2[m], phi4[m], chi[m], G[m], Q[m] = _measure(phi.reshape(torus.shape), torus, index)
			m += 1
	acceptance = accepted / (schedule.sweeps * V)
	if not np.all(np.isfinite(phi)):
		raise ToolkitValueError(f"Field diverged at lam={lam}, mu={mu}; is mu above the stability bound?")

	samples = pd.DataFrame({"phi2": phi2, "phi4": phi4, "chi": chi})
	for j, x in enumerate(disp):
		samples[f"G[{_label(x)}]"] = G[:, j]
		samples[f"Q[{_label(x)}]"] = Q[:, j]

	def est(col: str) -> Estimate:
		return estimate_series(samples[col].values, schedule.burn_in, seed, schedule.min_blocks, name=col)

	phi2_est, phi4_est = est("phi2"), est("phi4")
	block = max(block_length_for(phi2_est.tau_int), block_length_for(phi4_est.tau_int))
	u4_mean, u4_err = jackknife(lambda a, b: b - 3.0 * a ** 2, [phi2, phi4], block)
	u4 = Estimate(u4_mean, u4_err, max(phi2_est.tau_int, phi4_est.tau_int), n_meas, schedule.burn_in, seed)
	chi_est = est("chi")

	logger.info(
		"Chain %d: lam=%.3g mu=%.4g L=%d acceptance=%.2f chi=%.4g +- %.2g",
		chain_index, lam, mu, torus.L, acceptance, chi_est.mean, chi_est.stderr,
	)
	return ObservableSet(
		torus=torus,
		lam=lam,
		mu=mu,
		displacements=disp,
		two_point={x: est(f"G[{_label(x)}]") for x in disp},
		phi3_phi={x: est(f"Q[{_label(x)}]") for x in disp},
		phi2=phi2_est,
		phi4=phi4_est,
		chi=chi_est,
		u4=u4,
		samples=samples,
		acceptance=acceptance,
		width=width,
		seed=seed,
		chain_index=chain_index,
	)


def merge_chains(chains: Sequence[ObservableSet]) -> ObservableSet:
	"""Inverse-variance merge of independent chains run at the same (lam, mu, torus)."""
	chains = list(chains)
	if not chains:
		raise ToolkitValueError("No chains to merge")
	if len(chains) == 1:
		return chains[0]
	first = chains[0]
	for c in chains[1:]:
		if (c.lam, c.mu, c.torus) != (first.lam, first.mu, first.torus) or c.displacements != first.displacements:
			raise ToolkitValueError("Cannot merge chains run at different parameters")

	def merged(name: str) -> Estimate:
		return merge_estimates(getattr(c, name) for c in chains)

	return ObservableSet(
		torus=first.torus,
		lam=first.lam,
		mu=first.mu,
		displacements=list(first.displacements),
		two_point={x: merge_estimates(c.two_point[x] for c in chains) for x in first.displacements},
		phi3_phi={x: merge_estimates(c.phi3_phi[x] for c in chains) for x in first.displacements},
		phi2=merged("phi2"),
		phi4=merged("phi4"),
		chi=merged("chi"),
		u4=merged("u4"),
		samples=None,
		acceptance=float(np.mean([c.acceptance for c in chains])),
		width=float(np.mean([c.width for c in chains])),
		seed=None,
		chain_index=-1,
		chains=chains,
	)


def gaussian_observables(
	coupling: CouplingSpec,
	mu: float,
	torus: TorusGeometry,
	displacements: Optional[Iterable[Sequence[int]]] = None,
) -> ObservableSet:
	"""
	Exact torus observables of the Gaussian (lam = 0) model.

	G-hat(k) = 1 / (mu - J-hat(k)), i.e. G = S_p / mu with D = J / J-hat and
	p = J-hat / mu; Wick's theorem gives <phi^3 phi_x> = 3 G(0) G(x) and
	<phi^4> = 3 G(0)^2. All estimates are exact (zero error).
	"""
	jhat = coupling.jhat
	if mu <= jhat:
		raise ToolkitValueError(f"Gaussian model needs mu > J-hat = {jhat}, got mu={mu}")
	if displacements is None:
		displacements = [(0,) * torus.d, tuple([1] + [0] * (torus.d - 1))]
	disp = displacement_closure(displacements, coupling, torus)
	D = kernel_on_torus(coupling.offsets, coupling.values / jhat, torus)
	G = green_fft(D, jhat / mu, torus).values / mu
	g0 = float(G[(0,) * torus.d])
	exact = Estimate.exact
	return ObservableSet(
		torus=torus,
		lam=0.0,
		mu=mu,
		displacements=disp,
		two_point={x: exact(G[tuple(np.mod(x, torus.L))]) for x in disp},
		phi3_phi={x: exact(3.0 * g0 * G[tuple(np.mod(x, torus.L))]) for x in disp},
		phi2=exact(g0),
		phi4=exact(3.0 * g0 ** 2),
		chi=exact(G.sum()),
		u4=exact(0.0),
	)


def _residual_terms(x: Displacement, coupling: CouplingSpec, torus: TorusGeometry) -> List[Tuple[float, Displacement]]:
	return [
		(float(J), tuple(int(c) for c in torus.reduce(np.asarray(x) - v)))
		for v, J in zip(coupling.offsets, coupling.values)
	]


def _chain_residual(obs: ObservableSet, coupling: CouplingSpec, lam: float, mu: float, x: Displacement) -> Estimate:
	delta = 1.0 if not any(x) else 0.0
	terms = _residual_terms(x, coupling, obs.torus)
	if obs.samples is None:
		value = (
			-sum(J * obs.two_point[y].mean for J, y in terms)
			+ mu * obs.two_point[x].mean
			+ lam / 6.0 * obs.phi3_phi[x].mean
			- delta
		)
		return Estimate.exact(value)
	# Per-measurement series of (1/V) sum_y dH/dphi_y phi_{y+x}; its blocking error
	# carries the correlation between the G and Q estimates
	s = obs.samples
	series = mu * s[f"G[{_label(x)}]"].values + lam / 6.0 * s[f"Q[{_label(x)}]"].values - delta
	for J, y in terms:
		series = series - J * s[f"G[{_label(y)}]"].values
	return estimate_series(series, obs.phi2.burn_in, obs.seed, name=f"SD residual at {x}")


def sd_residual(obs: ObservableSet, coupling: CouplingSpec, lam: float, mu: float) -> pd.DataFrame:
	"""
	Schwinger-Dyson residual -sum_v J(v) <phi_v phi_x> + mu <phi_o phi_x> + lam/6 <phi_o^3 phi_x> - delta_{o,x}.

	sd_residual evaluates the integration-by-parts identity, exact on any
	finite torus, at every requested displacement whose closure was measured.
	For a chain the residual is estimated from its per-measurement series; for
	merged chains the per-chain residuals are merged; for exact tables the
	error is zero.

	Args:
		obs : ObservableSet
		coupling : CouplingSpec
		lam, mu : float

	Returns:
		pd.DataFrame
			Columns x, residual, stderr, tau_int, consistent (|residual| <= 3 stderr,
			with a 1e-10 floor).
	"""
	rows = []
	for x in obs.displacements:
		needed = [y for _, y in _residual_terms(x, coupling, obs.torus)]
		if any(y not in obs.two_point for y in needed):
			continue
		if obs.chains:
			est = merge_estimates(_chain_residual(c, coupling, lam, mu, x) for c in obs.chains)
		else:
			est = _chain_residual(obs, coupling, lam, mu, x)
		rows.append({
			"x": _label(x),
			"residual": est.mean,
			"stderr": est.stderr,
			"tau_int": est.tau_int,
			"consistent": est.consistent_with(0.0, floor=1e-10),
		})
	df = pd.DataFrame(rows, columns=["x", "residual", "stderr", "tau_int", "consistent"])
	if not df["consistent"].all():
		logger.warning("Schwinger-Dyson residual exceeds 3 stderr at %s", list(df.loc[~df["consistent"], "x"]))
	return df


def stationarity_test(
	lam: float,
	mu: float,
	n_samples: int = 20000,
	seed: int = 0,
	thin: int = 20,
	bins: int = 20,
	burn_in: int = 2000,
) -> Dict[str, float]:
	"""
	Chi-square test of the Metropolis kernel on a single decoupled site.

	stationarity_test runs the sweep kernel on one site with density
	exp(-mu phi^2 / 2 - lam phi^4 / 24), bins the thinned samples into
	`bins` cells of equal probability under the quadrature CDF and compares
	the counts with scipy.stats.chisquare.

	Returns:
		Dict with statistic, p_value, tau_int, acceptance and passes (p > 0.01).
	"""
	if lam < 0:
		raise NonpositiveLambda(f"Quartic coupling must be >= 0, got lam={lam}")
	if lam == 0 and mu <= 0:
		raise ToolkitValueError(f"Single-site density not normalizable for lam=0, mu={mu}")

	# Quadrature CDF and equal-probability bin edges
	grid = np.arange(-12.0, 12.0 + 1e-9, 1e-3)
	log_density = -0.5 * mu * grid ** 2 - lam / 24.0 * grid ** 4
	density = np.exp(log_density - log_density.max())
	cdf = integrate.cumulative_trapezoid(density, grid, initial=0.0)
	cdf /= cdf[-1]
	edges = np.interp(np.linspace(0.0, 1.0, bins + 1)[1:-1], cdf, grid)

	rng = chain_generator(seed)
	phi = np.zeros(1)
	neighbours = np.zeros((1, 0), dtype=np.int64)
	weights = np.zeros(0)
	width = 2.0 / math.sqrt(max(mu, 1.0))

	# Visiting site 0 k times in one kernel call performs k consecutive updates
	tune_order = np.zeros(100, dtype=np.int64)
	for _ in range(max(1, burn_in // 100)):
		accepted = _metropolis_sweep(phi, tune_order, neighbours, weights, mu, lam, width, rng.standard_normal(100), rng.random(100))
		width = _tune_width(width, accepted / 100.0, (0.4, 0.6))

	order = np.zeros(thin, dtype=np.int64)
	samples = np.empty(n_samples)
	accepted = 0
	for i in range(n_samples):
		accepted += _metropolis_sweep(phi, order, neighbours, weights, mu, lam, width, rng.standard_normal(thin), rng.random(thin))
		samples[i] = phi[0]

	counts = np.bincount(np.searchsorted(edges, samples), minlength=bins)
	statistic, p_value = stats.chisquare(counts, np.full(bins, n_samples / bins))
	return {
		"statistic": float(statistic),
		"p_value": float(p_value),
		"tau_int": integrated_autocorrelation_time(samples),
		"acceptance": accepted / (n_samples * thin),
		"passes": bool(p_value > 0.01),
	}


def _scan_point(
	L: int,
	mu: float,
	coupling: CouplingSpec,
	lam: float,
	schedule: ChainSchedule,
	seeds: Sequence[int],
) -> Dict[str, float]:
	# One (L, mu) grid point; chains of the seed list use chain_index = position
	torus = TorusGeometry(coupling.d, int(L))
	chains = [run_chain(coupling, lam, mu, torus, schedule, seed, chain_index=i) for i, seed in enumerate(seeds)]
	obs = merge_chains(chains)
	chi = obs.chi
	return {
		"chi": chi.mean,
		"chi_err": chi.stderr,
		"chi_inv": 1.0 / chi.mean,
		"chi_inv_err": chi.stderr / chi.mean ** 2,
		"phi2": obs.phi2.mean,
		"phi2_err": obs.phi2.stderr,
		"u4": obs.u4.mean,
		"u4_err": obs.u4.stderr,
		"acceptance": obs.acceptance,
	}


def extrapolate_mu_c(mu: Sequence[float], chi_inv: Sequence[float], chi_inv_err: Sequence[float]) -> Dict[str, float]:
	"""
	Zero of a weighted straight-line fit chi^{-1} = a + b mu.

	Returns mu_c = -a/b with a delta-method error, the fit chi2, dof and p-value.

	Raises:
		ExtrapolationUnstable if the slope is not positive or the line is
		rejected (p < 1e-3).
	"""
	fit = weighted_linear_fit(mu, chi_inv, chi_inv_err)
	a, b = fit["intercept"], fit["slope"]
	if b <= 0:
		raise ExtrapolationUnstable(f"chi^-1 does not increase with mu (slope {b:.4g})")
	p_value = float(stats.chi2.sf(fit["chi2"], fit["dof"])) if fit["dof"] > 0 and np.isfinite(fit["chi2"]) else 1.0
	if p_value < EXTRAPOLATION_P_MIN:
		raise ExtrapolationUnstable(f"chi^-1 is not linear in mu within errors (chi2={fit['chi2']:.3g}, p={p_value:.2g})")
	mu_c = -a / b
	var = fit["var_intercept"] / b ** 2 + a ** 2 * fit["var_slope"] / b ** 4 - 2.0 * a * fit["cov"] / b ** 3
	return {"mu_c": mu_c, "mu_c_err": math.sqrt(max(var, 0.0)), "slope": b, "intercept": a, "chi2": fit["chi2"], "dof": fit["dof"], "p_value": p_value}


def _griffiths_monotone(frame: pd.DataFrame, n_sigma: float = 3.0) -> bool:
	f = frame.sort_values("mu")
	chi, err = f["chi"].values, f["chi_err"].values
	return bool(np.all(chi[1:] <= chi[:-1] + n_sigma * np.sqrt(err[1:] ** 2 + err[:-1] ** 2)))


def critical_scan(
	coupling: CouplingSpec,
	lam: float,
	mu_grid: Sequence[float],
	torus_sizes: Sequence[int],
	schedule: ChainSchedule,
	seeds: Sequence[int],
	workers: int = 1,
	show_progress: bool = True,
) -> CriticalScan:
	"""
	Estimate mu_c by extrapolating chi^{-1} linearly in mu and check the first-order expansion.

	critical_scan runs merged chains on every (L, mu) point (in a bounded
	worker pool), fits chi^{-1} against mu through the three largest mu of the
	grid for each torus, and reports

		Delta(lam) = mu_c - (J-hat - lam/2 <phi^2>)

	with <phi^2> taken at the smallest mu of the grid. Finite-size drift
	between the smallest and largest torus is reported, not corrected.

	Args:
		coupling : CouplingSpec
		lam : float
		mu_grid : Sequence[float]
			At least 3 values, all above the expected mu_c.
		torus_sizes : Sequence[int]
			At least 2 even side lengths.
		schedule : ChainSchedule
		seeds : Sequence[int]
			One chain per seed at each point.
		workers : int, default = 1
		show_progress : bool, default = True

	Returns:
		CriticalScan

	Notes:
		- Raises ExtrapolationUnstable when a point fails or the line is rejected.
		- Non-monotone chi across the grid is logged and flagged, not raised.
	"""
	mu_grid = sorted(float(m) for m in mu_grid)
	if len(mu_grid) < 3:
		raise ToolkitValueError(f"Need at least 3 mu values for the extrapolation, got {len(mu_grid)}")
	if len(set(torus_sizes)) < 2:
		logger.warning("Critical scan with a single torus size gives no finite-size check")

	print(f"Testing {len(mu_grid) * len(torus_sizes)} (L, mu) points...")
	cfg = SweepConfig(
		grid={"L": list(torus_sizes), "mu": mu_grid},
		fixed={"coupling": coupling, "lam": lam, "schedule": schedule, "seeds": list(seeds)},
		workers=workers,
		show_progress=show_progress,
	)
	points = grid_sweep(_scan_point, cfg)
	failed = points.loc[points["error"].notna()]
	if not failed.empty:
		first = failed.iloc[0]
		raise ExtrapolationUnstable(f"Scan point L={first['L']}, mu={first['mu']} failed: {first['message']}")

	rows = []
	for L, frame in points.groupby("L", sort=True):
		frame = frame.sort_values("mu")
		top = frame.tail(3)
		fit = extrapolate_mu_c(top["mu"].values, top["chi_inv"].values, top["chi_inv_err"].values)
		lowest = frame.iloc[0]
		predicted = coupling.jhat - 0.5 * lam * lowest["phi2"]
		monotone = _griffiths_monotone(frame)
		if not monotone:
			logger.warning("chi is not decreasing in mu at L=%d", L)
		rows.append({
			"L": int(L),
			**fit,
			"phi2": float(lowest["phi2"]),
			"phi2_err": float(lowest["phi2_err"]),
			"delta": fit["mu_c"] - predicted,
			"delta_err": math.sqrt(fit["mu_c_err"] ** 2 + (0.5 * lam * lowest["phi2_err"]) ** 2),
			"monotone": monotone,
		})
	extrapolations = pd.DataFrame(rows)
	last = extrapolations.iloc[-1]
	drift = float(last["mu_c"] - extrapolations.iloc[0]["mu_c"])
	logger.info("lam=%.3g: mu_c=%.5f +- %.2g (L=%d), Delta=%.3g, drift=%.3g", lam, last["mu_c"], last["mu_c_err"], last["L"], last["delta"], drift)

	return CriticalScan(
		points=points,
		extrapolations=extrapolations,
		mu_c=Estimate(float(last["mu_c"]), float(last["mu_c_err"])),
		delta=Estimate(float(last["delta"]), float(last["delta_err"])),
		finite_size_drift=drift,
	)


def delta_power_fit(lams: Sequence[float], deltas: Sequence[float]) -> PowerLawFit:
	"""Power-law fit |Delta(lam)| ~ c lam^s over the scanned couplings (at least 3 values)."""
	lams = np.asarray(lams, dtype=float)
	values = np.abs(np.asarray(deltas, dtype=float))
	return fit_power_law(lams, values, (float(lams.min()), float(lams.max())), min_points=3)


def amplitude_ratio(
	obs: ObservableSet,
	coupling: CouplingSpec,
	window: Tuple[float, float],
) -> pd.DataFrame:
	"""
	<phi_o phi_x> |x|^{d-2} divided by the massless Gaussian constant for A = J-hat V.

	Only measured displacements with |x| inside `window` are reported; ratios
	near 1 indicate the critical decay with the leading-order amplitude.
	"""
	d = obs.torus.d
	reference = asymptotic_amplitude(d, coupling.jhat * coupling.variance)
	rows = []
	for x in obs.displacements:
		r = float(np.linalg.norm(x))
		if window[0] <= r <= window[1]:
			est = obs.two_point[x]
			rows.append({
				"x": _label(x),
				"norm": r,
				"ratio": est.mean * r ** (d - 2) / reference,
				"ratio_err": est.stderr * r ** (d - 2) / reference,
			})
	return pd.DataFrame(rows, columns=["x", "norm", "ratio", "ratio_err"])
