# src/deconvolution.py

## Imports
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.fft import fftn, ifftn

from errors import (
	DegenerateCurvature,
	FitWindowTooSmall,
	NonpositiveA,
	SupercriticalF,
	ToolkitValueError,
)
from exact_engine import full_lace_coefficient, o_bar, spin_two_point_exact
from green_function import asymptotic_amplitude, fit_decay, green_fft
from gs_construction import BlockWalk, GSParams, block_spin_graph, block_two_point, block_walk
from lattice_couplings import CouplingSpec, TorusGeometry, kernel_on_torus

logger = logging.getLogger(__name__)

PI_MODES = ("pure-delta", "synthetic", "exact")
# |E * S_q| below this is treated as identically zero
VANISHING_FLOOR = 1e-12


## Data Classes
@dataclass
class PiSource:
	"""A block-spin lace coefficient Pi_N(x) / N tabulated on a torus.

	Attributes:
		mode : str
			'pure-delta', 'synthetic' or 'exact'.
		table : np.ndarray
			Pi_N(x) / N, shape torus.shape.
		torus : TorusGeometry
		meta : Dict[str, Any]
			Profile parameters (o_bar, c_tail) or, for 'exact', the GS
			parameters and the exact block two-point table under 'G_exact'.
	"""
	mode: str
	table: np.ndarray = field(repr=False)
	torus: TorusGeometry
	meta: Dict[str, Any] = field(default_factory=dict, repr=False)

	def hat_zero(self) -> float:
		return float(self.table.sum())

	def envelope_violation(self) -> float:
		"""Largest excess of |Pi/N - (1 - O-bar) delta| over c_tail <x>^{-3(d-2)} away from the origin."""
		if self.mode != "synthetic":
			return 0.0
		d = self.torus.d
		off = self.table - (1.0 - self.meta["o_bar"]) * self.torus.delta()
		envelope = self.meta["c_tail"] * _bracket(self.torus) ** (-3.0 * (d - 2))
		mask = self.torus.squared_norms() > 0
		return float(max(0.0, np.max((np.abs(off) - envelope)[mask])))


@dataclass
class ErrorKernel:
	"""E = (delta - q D) - r (delta - F) with its two defining moments.

	Attributes:
		table : np.ndarray
		q, r : float
		hat_zero : float
			E-hat(0) = sum_x E(x).
		curvature : float
			sum_x |x|^2 E(x) / sum_x |x|^2 D(x).
	"""
	table: np.ndarray = field(repr=False)
	q: float
	r: float
	hat_zero: float
	curvature: float


@dataclass
class EffectiveWalk:
	"""Random walk of the linearized Schwinger-Dyson equation.

	Attributes:
		phi : np.ndarray
			Phi_mu(x) table.
		step : np.ndarray
			D_mu(x) = (J(x) - lam/2 Phi(x)) / (J-hat - lam/2 sum Phi), sums to 1.
		jhat_eff : float
			J-hat - lam/2 sum_x Phi(x).
		chi_inv : float
			mu - J-hat + lam/2 sum_x Phi(x).
		killing : float
			chi_inv / mu; the walk fugacity is 1 - killing.
		amplitude : float
			A = sum_{y != o} |y|^2 (J(y) - lam/2 Phi(y)).
		green : np.ndarray
			<phi_o phi_x> solved from mu G - (J - lam/2 Phi) * G = delta.
		amplitude_check : pd.DataFrame
			|x|, G(x) |x|^{d-2} and its ratio to the constant for A.
	"""
	phi: np.ndarray = field(repr=False)
	step: np.ndarray = field(repr=False)
	jhat_eff: float
	chi_inv: float
	killing: float
	amplitude: float
	green: np.ndarray = field(repr=False)
	amplitude_check: pd.DataFrame = field(repr=False)


## Functions
def _bracket(torus: TorusGeometry) -> np.ndarray:
	# <x> = max(|x|, 1) on minimal images
	return np.maximum(torus.norms(), 1.0)


def _hat(table: np.ndarray) -> np.ndarray:
	return fftn(table)


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
	return ifftn(fftn(a) * fftn(b)).real


def _walk_for(walk_or_params: Union[BlockWalk, GSParams], torus: TorusGeometry) -> BlockWalk:
	if isinstance(walk_or_params, BlockWalk):
		return walk_or_params
	return block_walk(walk_or_params, torus)


def pure_delta_source(o_bar_value: float, torus: TorusGeometry) -> PiSource:
	"""Pi/N = (1 - O-bar) delta."""
	return PiSource("pure-delta", (1.0 - o_bar_value) * torus.delta(), torus, {"o_bar": float(o_bar_value), "c_tail": 0.0})


def synthetic_source(o_bar_value: float, c_tail: float, torus: TorusGeometry) -> PiSource:
	"""Pi/N = (1 - O-bar) delta + c_tail <x>^{-3(d-2)} off the origin (the envelope saturated)."""
	d = torus.d
	tail = c_tail * _bracket(torus) ** (-3.0 * (d - 2))
	tail[(0,) * d] = 0.0
	return PiSource(
		"synthetic",
		(1.0 - o_bar_value) * torus.delta() + tail,
		torus,
		{"o_bar": float(o_bar_value), "c_tail": float(c_tail)},
	)


def exact_pi_source(params: GSParams, torus: TorusGeometry) -> PiSource:
	"""
	Pi_N / N from exact enumeration of the Griffiths-Simon block system.

	exact_pi_source builds the N-replica Ising graph on `torus`, computes the
	exact two-point matrix and the all-order lace coefficient P, and sums
	P((o,i), (x,j)) over replicas j and averages over root replicas i. The
	exact block two-point table G_N and O-bar are stored in meta for
	closure checks.

	Notes:
		- Only desk-sized systems fit (torus.n_sites * N vertices, see exact_engine limits).
	"""
	graph = block_spin_graph(params, torus)
	C = spin_two_point_exact(graph)
	P = full_lace_coefficient(graph, C)
	sites = graph.labels[:, 0]
	root_vertices = np.flatnonzero(sites == 0)

	table = np.zeros(torus.n_sites)
	for v in root_vertices:
		np.add.at(table, sites, P[v])
	table /= params.N

	reference = block_two_point(C, graph, params, torus)
	return PiSource(
		"exact",
		table.reshape(torus.shape),
		torus,
		{
			"params": params.to_dict(),
			"o_bar": o_bar(graph, C, int(root_vertices[0])),
			"G_exact": reference.G,
			"tlamb": params.tlamb,
		},
	)


def pi_source_from_dict(block: Mapping[str, Any], torus: TorusGeometry, params: Optional[GSParams] = None) -> PiSource:
	"""Build a PiSource from a config mapping with 'mode' and the profile parameters."""
	mode = str(block.get("mode", "synthetic"))
	if mode == "pure-delta":
		return pure_delta_source(float(block["o_bar"]), torus)
	if mode == "synthetic":
		return synthetic_source(float(block["o_bar"]), float(block.get("c_tail", 0.0)), torus)
	if mode == "exact":
		if params is None:
			raise ToolkitValueError("Exact Pi source needs Griffiths-Simon parameters")
		return exact_pi_source(params, torus)
	raise ToolkitValueError(f"Unknown Pi source mode '{mode}', expected one of {PI_MODES}")


def F_from_Pi(pi: PiSource, walk_or_params: Union[BlockWalk, GSParams]) -> np.ndarray:
	"""
	F_N = (Pi_N / N) * pD + kappa (Pi_N / N - delta), kappa = (N-1) tanh I / (1 - (N-1) tanh I).

	F_from_Pi convolves on the torus by FFT. The walk data (p, D, kappa) come
	from a BlockWalk or are computed from GSParams on the source's torus.

	Args:
		pi : PiSource
		walk_or_params : BlockWalk | GSParams

	Returns:
		np.ndarray
			F table, shape torus.shape.

	Example:
		>>> F = F_from_Pi(pure_delta_source(0.0, torus), walk)  # F = p D when tanh I = 0

	Notes:
		- Raises SupercriticalF if F-hat(0) >= 1.
	"""
	walk = _walk_for(walk_or_params, pi.torus)
	F = walk.p * _convolve(pi.table, walk.D) + walk.self_feedback * (pi.table - pi.torus.delta())
	F_hat0 = float(F.sum())
	if F_hat0 >= 1.0:
		raise SupercriticalF(f"F-hat(0) = {F_hat0:.6g} >= 1; mu is at or below the block critical point")
	return F


def chi_from_F(pi: PiSource, F: np.ndarray) -> float:
	"""G-hat_N(0) = (Pi-hat_N(0) / N) / (1 - F-hat(0))."""
	F_hat0 = float(F.sum())
	if F_hat0 >= 1.0:
		raise SupercriticalF(f"F-hat(0) = {F_hat0:.6g} >= 1")
	return pi.hat_zero() / (1.0 - F_hat0)


def _curvature(table: np.ndarray, D: np.ndarray, torus: TorusGeometry) -> float:
	# lim (T-hat(0) - T-hat(k)) / (1 - D-hat(k)) as a ratio of second moments
	sq = torus.squared_norms()
	denom = float(np.sum(sq * D))
	if denom == 0:
		raise DegenerateCurvature("sum_x |x|^2 D(x) vanishes")
	return float(np.sum(sq * table)) / denom


def qr_solve(F: np.ndarray, D: np.ndarray, torus: TorusGeometry) -> Tuple[float, float]:
	"""
	(q, r) making E-hat(0) and its curvature vanish.

	r = 1 / (1 - F-hat(0) + curv F), q = r curv F, where curv F is the exact
	second-moment ratio sum |x|^2 F / sum |x|^2 D.
	"""
	curv = _curvature(F, D, torus)
	r = 1.0 / (1.0 - float(F.sum()) + curv)
	return r * curv, r


def qr_closed_form(o_bar_value: float, walk: BlockWalk) -> Tuple[float, float]:
	"""(q, r) for the pure-delta source: r = 1 / (1 + kappa O-bar), q = r (1 - O-bar) p."""
	r = 1.0 / (1.0 + walk.self_feedback * o_bar_value)
	return r * (1.0 - o_bar_value) * walk.p, r


def assemble_E(F: np.ndarray, D: np.ndarray, q: float, r: float, torus: TorusGeometry) -> ErrorKernel:
	"""E = (delta - q D) - r (delta - F), with E-hat(0) and its curvature."""
	delta = torus.delta()
	E = (delta - q * D) - r * (delta - F)
	return ErrorKernel(E, q, r, float(E.sum()), _curvature(E, D, torus))


def e_decay_check(
	E: Union[ErrorKernel, np.ndarray],
	q: float,
	D: np.ndarray,
	torus: TorusGeometry,
	window: Optional[Tuple[float, float]] = None,
) -> Dict[str, Any]:
	"""
	Decay exponent of |E * S_q| over a window of radii.

	The convolution is computed by FFT on the torus (zero mode subtracted when
	q = 1). The per-radius envelope is fitted over |x| in [2, L/4] unless a
	window is given; the check passes when the fitted decay exponent is at
	least d. A convolution below 1e-12 everywhere passes as vanishing.

	Returns:
		Dict with max_abs, exponent (decay, positive), fit_residual, vanishing, passes.

	Notes:
		- Raises FitWindowTooSmall when fewer than 4 distinct radii fall in the window.
	"""
	table = E.table if isinstance(E, ErrorKernel) else E
	if q > 1.0:
		raise SupercriticalF(f"Walk fugacity q = {q:.6g} exceeds 1")
	if window is None:
		window = (2.0, torus.L / 4.0)
	S = green_fft(D, min(q, 1.0), torus, zero_mode="subtract" if q >= 1.0 else None)
	conv = _convolve(table, S.values)
	max_abs = float(np.max(np.abs(conv)))

	if max_abs < VANISHING_FLOOR:
		# Window still has to be valid
		radii = np.unique(np.round(torus.norms(), 10))
		if np.sum((radii >= window[0]) & (radii <= window[1])) < 4:
			raise FitWindowTooSmall(f"Fit window {window} holds fewer than 4 radii on L={torus.L}")
		return {"max_abs": max_abs, "exponent": float("inf"), "fit_residual": 0.0, "vanishing": True, "passes": True}

	fit = fit_decay(conv, torus, window, min_points=4, error_cls=FitWindowTooSmall)
	decay = -fit.exponent
	return {
		"max_abs": max_abs,
		"exponent": decay,
		"fit_residual": fit.residual,
		"vanishing": False,
		"passes": bool(decay >= torus.d),
	}


def reconstruct_G(pi: PiSource, F: np.ndarray) -> np.ndarray:
	"""Solve G = Pi/N + F * G on the torus: G-hat = (Pi-hat/N) / (1 - F-hat)."""
	if float(F.sum()) >= 1.0:
		raise SupercriticalF(f"F-hat(0) = {F.sum():.6g} >= 1")
	return ifftn(_hat(pi.table) / (1.0 - _hat(F))).real


def phi_from_pi(pi: PiSource, params: GSParams) -> np.ndarray:
	"""Phi_N = -eps_N^2 N^2 (Pi_N / N - delta)."""
	return -params.eps2 * params.N ** 2 * (pi.table - pi.torus.delta())


def synthetic_phi(phi2: float, c_tail: float, torus: TorusGeometry) -> np.ndarray:
	"""Phi = <phi^2> delta + c_tail <x>^{-3(d-2)} off the origin."""
	tail = c_tail * _bracket(torus) ** (-3.0 * (torus.d - 2))
	tail[(0,) * torus.d] = 0.0
	return phi2 * torus.delta() + tail


def critical_mu_from_phi(phi: np.ndarray, coupling: CouplingSpec, lam: float) -> float:
	"""mu_c = J-hat - lam/2 sum_x Phi(x)."""
	return coupling.jhat - 0.5 * lam * float(np.sum(phi))


def effective_linear_sd(
	phi: np.ndarray,
	coupling: CouplingSpec,
	lam: float,
	mu: float,
	torus: TorusGeometry,
	window: Optional[Tuple[float, float]] = None,
) -> EffectiveWalk:
	"""
	Effective random walk and Green function of the linearized Schwinger-Dyson equation.

	effective_linear_sd replaces the cubic term by a convolution with Phi,

		mu G(x) - sum_v (J(v) - lam/2 Phi(v)) G(x - v) = delta_{o,x},

	and solves it on the torus as G = S_q / mu with step D_mu and fugacity
	q = 1 - chi^{-1} / mu. The amplitude A = sum_{y != o} |y|^2 (J - lam/2 Phi)(y)
	fixes the predicted critical decay (d/2) Gamma((d-2)/2) pi^{-d/2} / (A |x|^{d-2}).

	Args:
		phi : np.ndarray
			Phi_mu table on the torus.
		coupling : CouplingSpec
		lam, mu : float
		torus : TorusGeometry
		window : Tuple[float, float], optional
			Radii for the amplitude comparison (default [2, L/4]).

	Returns:
		EffectiveWalk

	Notes:
		- Raises NonpositiveA if A <= 0 and SupercriticalF if chi^{-1} < 0.
		- At chi^{-1} = 0 the zero mode is subtracted and G is defined up to a constant.
	"""
	if phi.shape != torus.shape:
		raise ValueError(f"Phi table shape {phi.shape} does not match torus {torus.shape}")
	J = kernel_on_torus(coupling.offsets, coupling.values, torus)
	numer = J - 0.5 * lam * phi
	jhat_eff = float(numer.sum())
	if jhat_eff <= 0:
		raise NonpositiveA(f"Effective coupling sum J-hat - lam/2 sum Phi = {jhat_eff:.6g} is not positive")

	sq = torus.squared_norms()
	A = float(np.sum(sq * numer))
	if A <= 0:
		raise NonpositiveA(f"Amplitude A = {A:.6g} is not positive")
	chi_inv = mu - jhat_eff
	if chi_inv < 0:
		raise SupercriticalF(f"chi^-1 = mu - J-hat_eff = {chi_inv:.6g} < 0")

	step = numer / jhat_eff
	q = jhat_eff / mu
	S = green_fft(step, min(q, 1.0), torus, zero_mode="subtract" if q >= 1.0 else None)
	G = S.values / mu

	# Amplitude comparison on the per-radius mean
	if window is None:
		window = (2.0, torus.L / 4.0)
	norms = torus.norms()
	mask = (norms >= window[0]) & (norms <= window[1])
	reference = asymptotic_amplitude(torus.d, A) if torus.d > 2 else float("nan")
	frame = pd.DataFrame({"norm": np.round(norms[mask], 10), "scaled": (G * norms ** (torus.d - 2))[mask]})
	check = frame.groupby("norm", as_index=False)["scaled"].mean()
	check["ratio"] = check["scaled"] / reference

	logger.info("Effective walk: J-hat_eff=%.6g chi^-1=%.3g A=%.6g", jhat_eff, chi_inv, A)
	return EffectiveWalk(
		phi=phi,
		step=step,
		jhat_eff=jhat_eff,
		chi_inv=chi_inv,
		killing=chi_inv / mu,
		amplitude=A,
		green=G,
		amplitude_check=check,
	)


def deconvolution_report(
	pi: PiSource,
	walk_or_params: Union[BlockWalk, GSParams],
	window: Optional[Tuple[float, float]] = None,
) -> Dict[str, Any]:
	"""
	Run the whole Pi -> F -> (q, r) -> E -> decay pipeline and collect the numbers.

	Returns:
		Dict with F_hat0, chi, q, r, E_hat0, E_curvature, decay (e_decay_check
		output), the source mode and, when known, tlamb.
	"""
	walk = _walk_for(walk_or_params, pi.torus)
	F = F_from_Pi(pi, walk)
	chi = chi_from_F(pi, F)
	q, r = qr_solve(F, walk.D, pi.torus)
	E = assemble_E(F, walk.D, q, r, pi.torus)
	decay = e_decay_check(E, q, walk.D, pi.torus, window)
	report = {
		"mode": pi.mode,
		"N": walk.N,
		"p": walk.p,
		"F_hat0": float(F.sum()),
		"chi": chi,
		"q": q,
		"r": r,
		"E_hat0": E.hat_zero,
		"E_curvature": E.curvature,
		"decay": decay,
	}
	if isinstance(walk_or_params, GSParams):
		report["tlamb"] = walk_or_params.tlamb
	elif "tlamb" in pi.meta:
		report["tlamb"] = pi.meta["tlamb"]
	return report
