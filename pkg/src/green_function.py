# src/green_function.py

## Imports
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import integrate, signal, special
from scipy.fft import fftn, ifftn

from errors import (
	DimensionTooLow,
	FugacityOutOfRange,
	QuadratureNotConverged,
	RangeTooSmall,
	SingularMode,
)
from estimators import PowerLawFit, fit_power_law
from lattice_couplings import TorusGeometry

logger = logging.getLogger(__name__)

ZERO_MODE_POLICIES = (None, "subtract")
SINGULAR_TOL = 1e-13
BESSEL_ARG_CAP = 1e8


## Data Classes
@dataclass
class GreenTable:
	"""Random-walk Green function S_p tabulated on a torus.

	Attributes:
		torus : TorusGeometry
		p : float
			Fugacity in [0, 1].
		values : np.ndarray
			S_p(x), shape torus.shape, indexed by coordinate modulo L.
		zero_mode_subtracted : bool
			True when the k=0 mode was removed (p=1). Only differences and decay
			are meaningful then.
		imag_residue : float
			Largest imaginary part discarded by the inverse transform.
	"""
	torus: TorusGeometry
	p: float
	values: np.ndarray = field(repr=False)
	zero_mode_subtracted: bool = False
	imag_residue: float = 0.0

	def at(self, coord: Sequence[int]) -> float:
		return float(self.values[tuple(np.mod(np.asarray(coord), self.torus.L))])

	def total(self) -> float:
		return float(self.values.sum())

	def sum_rule_residual(self) -> float:
		"""|sum_x S_p(x) - 1/(1-p)|; NaN when p = 1."""
		if self.p >= 1:
			return float("nan")
		return abs(self.total() - 1.0 / (1.0 - self.p))

	def to_frame(self) -> pd.DataFrame:
		"""One row per site: minimal-image coordinates, |x| and S_p(x)."""
		coords = self.torus.coordinates()
		df = pd.DataFrame(coords, columns=[f"x{i}" for i in range(self.torus.d)])
		df["norm"] = np.sqrt((coords ** 2).sum(axis=1))
		df["value"] = self.values.reshape(-1)
		return df


@dataclass
class ConvolutionReport:
	"""Numerical check of the n-step convolution bounds and the two-power convolution decay.

	Attributes:
		sup_constants : Dict[int, float]
			n -> sup_x <x>^{d+2} D^{*n}(x) / n over |x| <= radius.
		second_difference_constants : Dict[int, float]
			n -> sup <x>^{d+4} |D^{*n}(x) - (D^{*n}(x+y) + D^{*n}(x-y))/2| / (|y|^2 n).
		decay_fit : PowerLawFit, optional
			Fit of sum_y <x-y>^{-a} <y>^{-b} against |x|.
		expected_exponent : float, optional
			(a v d) - a - b.
		passes : Dict[str, bool]
	"""
	sup_constants: Dict[int, float]
	second_difference_constants: Dict[int, float]
	decay_fit: Optional[PowerLawFit] = None
	expected_exponent: Optional[float] = None
	passes: Dict[str, bool] = field(default_factory=dict)

	def to_dict(self) -> Dict:
		return {
			"sup_constants": {str(k): v for k, v in self.sup_constants.items()},
			"second_difference_constants": {str(k): v for k, v in self.second_difference_constants.items()},
			"decay_fit": None if self.decay_fit is None else self.decay_fit.to_dict(),
			"expected_exponent": self.expected_exponent,
			"passes": dict(self.passes),
		}


## Functions
def _as_table(D, torus: TorusGeometry) -> np.ndarray:
	if isinstance(D, np.ndarray):
		if D.shape != torus.shape:
			raise ValueError(f"Step table shape {D.shape} does not match torus {torus.shape}")
		return D
	return D.on_torus(torus)


def green_fft(D, p: float, torus: TorusGeometry, zero_mode: Optional[str] = None) -> GreenTable:
	"""
	Random-walk Green function on a torus via S-hat(k) = 1 / (1 - p D-hat(k)).

	green_fft solves the convolution equation S_p = delta + p D * S_p in Fourier
	space. D may be a site table of shape torus.shape or any kernel exposing
	on_torus (CouplingSpec, StepDistribution).

	Args:
		D : np.ndarray | StepDistribution
			Normalized one-step distribution.
		p : float
			Fugacity in [0, 1].
		torus : TorusGeometry
		zero_mode : str, optional
			None (default) or 'subtract'. Required when 1 - p D-hat vanishes,
			which for p = 1 happens at k = 0.

	Returns:
		GreenTable

	Example:
		>>> torus = TorusGeometry(d=5, L=16)
		>>> D = step_distribution(build_coupling("nearest-neighbor", 5, amplitude=0.1))
		>>> green_fft(D, 0.5, torus).total()
		2.0

	Notes:
		- With zero_mode='subtract' the singular modes are set to zero, so the
		  table sums to zero and is defined only up to a constant.
	"""
	if not 0.0 <= p <= 1.0:
		raise FugacityOutOfRange(f"Fugacity must lie in [0, 1], got p={p}")
	if zero_mode not in ZERO_MODE_POLICIES:
		raise ValueError(f"Unknown zero-mode policy '{zero_mode}'")

	table = _as_table(D, torus)
	D_hat = fftn(table)
	denom = 1.0 - p * D_hat.real
	singular = np.abs(denom) < SINGULAR_TOL

	if singular.any():
		if zero_mode != "subtract":
			raise SingularMode(f"1 - p D-hat(k) vanishes at {int(singular.sum())} mode(s); pass zero_mode='subtract'")
		if singular.sum() > 1 or not singular[(0,) * torus.d]:
			logger.warning("Subtracting %d singular modes, not only k=0", int(singular.sum()))

	with np.errstate(divide="ignore"):
		S_hat = np.where(singular, 0.0, 1.0 / np.where(singular, 1.0, denom))

	S = ifftn(S_hat)
	imag = float(np.max(np.abs(S.imag)))
	if imag > 1e-12:
		logger.warning("Inverse transform left an imaginary residue of %.3g", imag)

	return GreenTable(torus, float(p), S.real, bool(singular.any()), imag)


def n_step_table(D, n: int, torus: TorusGeometry) -> np.ndarray:
	"""n-fold convolution D^{*n} on the torus (D^{*0} = delta)."""
	if n < 0:
		raise ValueError(f"Convolution order must be >= 0, got {n}")
	D_hat = fftn(_as_table(D, torus))
	return ifftn(D_hat ** n).real


def _bessel_integrand(s: np.ndarray, x: np.ndarray, p: float, d: int) -> np.ndarray:
	# Integrand of int_0^inf e^{-t} prod_i I_{x_i}(p t / d) dt after t = e^s,
	# written with exponentially scaled Bessel functions.
	t = np.exp(s)
	out = t * np.exp(-(1.0 - p) * t)
	for xi in x:
		out = out * special.ive(xi, p * t / d)
	return out


def _bessel_tail(t_cap: float, p: float, d: int) -> float:
	# Beyond t_cap every ive(x_i, z) is 1/sqrt(2 pi z) to relative order x_i^2 / z
	c = (d / (2.0 * math.pi * p)) ** (d / 2.0)
	a = 1.0 - p
	if a == 0.0:
		return c * t_cap ** (1.0 - d / 2.0) / (d / 2.0 - 1.0)
	if a * t_cap > 700.0:
		return 0.0
	value, _ = integrate.quad(lambda t: c * t ** (-d / 2.0) * math.exp(-a * t), t_cap, np.inf)
	return float(value)


def green_bessel_nn(
	x: Sequence[int],
	p: float,
	d: int,
	rel_tol: float = 1e-10,
	trunc_tol: float = 1e-16,
	max_halvings: int = 16,
) -> float:
	"""
	Free-space Green function of the nearest-neighbour walk on Z^d.

	green_bessel_nn evaluates S_p(x) = int_0^inf e^{-t} prod_i I_{x_i}(p t / d) dt
	with the substitution t = e^s, which turns the algebraic tail at p = 1 into an
	exponential one. The s-range is extended until the integrand drops below
	trunc_tol times the running total or the Bessel argument p t / d reaches
	BESSEL_ARG_CAP; past the cap the leading large-argument form of each Bessel
	factor is integrated in closed form. The trapezoid step is then halved until
	the relative change is below rel_tol.

	Args:
		x : Sequence[int]
			Site in Z^d.
		p : float
			Fugacity in [0, 1].
		d : int
			Dimension; d > 2 is required when p = 1.

	Returns:
		float

	Notes:
		- Raises QuadratureNotConverged if max_halvings is exhausted or the
		  integrand is not finite on the grid.
	"""
	if not 0.0 <= p <= 1.0:
		raise FugacityOutOfRange(f"Fugacity must lie in [0, 1], got p={p}")
	if p == 1.0 and d <= 2:
		raise DimensionTooLow(f"The p=1 walk is recurrent in d={d}; need d > 2")

	x = np.abs(np.asarray(x, dtype=float))
	if len(x) != d:
		raise ValueError(f"Site {tuple(x)} does not have dimension d={d}")

	s_lo = -40.0
	s_cap = math.log(BESSEL_ARG_CAP * d / p) if p > 0.0 else 700.0
	s_hi = min(5.0, s_cap)
	h = 0.25

	def trapezoid(step: float) -> float:
		grid = np.arange(s_lo, s_hi + step / 2, step)
		grid[-1] = s_hi
		return float(integrate.trapezoid(_bessel_integrand(grid, x, p, d), grid))

	def edge() -> float:
		return float(_bessel_integrand(np.array([s_hi]), x, p, d)[0])

	# Extend the upper limit until the tail is negligible or the argument cap is hit
	total = trapezoid(h)
	while s_hi < s_cap and np.isfinite(total) and edge() > trunc_tol * max(total, 1e-300):
		s_hi = min(s_hi + 5.0, s_cap)
		total = trapezoid(h)

	if not (np.isfinite(total) and np.isfinite(edge())):
		raise QuadratureNotConverged(f"Integrand is not finite up to s={s_hi} for x={tuple(x)}, p={p}, d={d}")

	tail = _bessel_tail(math.exp(s_hi), p, d) if s_hi >= s_cap and p > 0.0 else 0.0

	for _ in range(max_halvings):
		h /= 2.0
		refined = trapezoid(h)
		if not np.isfinite(refined):
			break
		if abs(refined - total) <= rel_tol * abs(refined):
			return refined + tail
		total = refined

	raise QuadratureNotConverged(f"Trapezoid rule did not reach rel_tol={rel_tol} for x={tuple(x)}, p={p}, d={d}")


def asymptotic_amplitude(d: int, jhatV_product: float) -> float:
	"""
	Constant of the massless Gaussian decay, (d/2) Gamma((d-2)/2) pi^{-d/2} / (J-hat V).

	Example:
		>>> round(asymptotic_amplitude(5, 1.0), 6)
		0.126651
	"""
	if d <= 2:
		raise DimensionTooLow(f"Asymptotic amplitude requires d > 2, got d={d}")
	if jhatV_product <= 0:
		raise ValueError(f"J-hat * V must be positive, got {jhatV_product}")
	return (d / 2.0) * special.gamma((d - 2) / 2.0) * math.pi ** (-d / 2.0) / jhatV_product


def _transverse_counts(n_axes: int, cutoff: int) -> np.ndarray:
	"""counts[m] = #{z in Z^n_axes : |z|^2 = m}, for m <= cutoff^2."""
	size = cutoff * cutoff + 1
	counts = np.zeros(size)
	counts[0] = 1.0
	one_axis = np.zeros(size)
	z = np.arange(-cutoff, cutoff + 1)
	np.add.at(one_axis, z * z, 1.0)
	for _ in range(n_axes):
		counts = np.rint(signal.fftconvolve(counts, one_axis)[:size])
	return counts


def convolution_decay_sum(a: float, b: float, d: int, radii: Iterable[int], cutoff: int = 160) -> np.ndarray:
	"""
	Direct lattice sum sum_y <x-y>^{-a} <y>^{-b} for x = r e_1, r in radii.

	The d-1 transverse coordinates enter only through |z|^2, so they are
	collapsed into lattice-point counts; the sum runs over the ball |y| <= cutoff
	and the remainder is added as the continuum tail
	|S^{d-1}| cutoff^{d-a-b} / (a+b-d).
	"""
	if a + b <= d:
		raise ValueError(f"Sum diverges unless a + b > d (a={a}, b={b}, d={d})")
	counts = _transverse_counts(d - 1, cutoff)
	m = np.arange(len(counts), dtype=float)
	y1 = np.arange(-cutoff, cutoff + 1, dtype=float)[:, None]
	inside = (y1 ** 2 + m[None, :]) <= cutoff ** 2
	weight = np.where(inside, counts[None, :], 0.0)
	bracket_y = np.maximum(y1 ** 2 + m[None, :], 1.0) ** (-b / 2.0)

	sphere = 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)
	tail = sphere * cutoff ** (d - a - b) / (a + b - d)

	out = []
	for r in radii:
		bracket_x = np.maximum((r - y1) ** 2 + m[None, :], 1.0) ** (-a / 2.0)
		out.append(float(np.sum(weight * bracket_x * bracket_y)) + tail)
	return np.array(out)


def fit_decay(
	values: Union[GreenTable, np.ndarray],
	torus: TorusGeometry,
	window: Tuple[float, float],
	min_points: int = 4,
	error_cls=RangeTooSmall,
) -> PowerLawFit:
	"""Power-law fit of the per-radius envelope max_{|x|=r} |values(x)| over a declared window."""
	table = values.values if isinstance(values, GreenTable) else values
	r = np.round(torus.norms().reshape(-1), 10)
	y = np.abs(table.reshape(-1))
	frame = pd.DataFrame({"r": r, "y": y}).groupby("r", as_index=False)["y"].max()
	return fit_power_law(frame["r"].values, frame["y"].values, window, min_points=min_points, error_cls=error_cls)


def convolution_bounds_check(
	D,
	n_list: Iterable[int],
	radius: int,
	torus: TorusGeometry,
	a: float = 3.0,
	b: float = 3.0,
	fit_start: int = 4,
	growth_factor: float = 2.0,
	exponent_tol: float = 0.15,
) -> ConvolutionReport:
	"""
	Numerically check the n-step convolution bounds and the two-power convolution decay.

	convolution_bounds_check computes D^{*n} by FFT on `torus` and reports, per n,
	the constants sup <x>^{d+2} D^{*n}(x)/n and the second-difference analogue
	with y = k e_i, 0 < |y| <= |x|/3, over sites with |x| <= radius. It then fits
	the decay of sum_y <x-y>^{-a} <y>^{-b} for x = r e_1, r in [fit_start, radius],
	against the predicted exponent (a v d) - a - b.

	Args:
		D : np.ndarray | StepDistribution
		n_list : Iterable[int]
		radius : int
			Largest |x| scanned (keep radius <= L/2 to limit wraparound).
		torus : TorusGeometry
		a, b : float, default = 3.0
		fit_start : int, default = 4
		growth_factor : float, default = 2.0
			Largest allowed ratio of any sup-constant to the first one.
		exponent_tol : float, default = 0.15

	Returns:
		ConvolutionReport

	Notes:
		- Raises RangeTooSmall if fewer than 4 distinct |x| fall in the fit window.
	"""
	d = torus.d
	n_list = list(n_list)
	norms = torus.norms()
	bracket = np.maximum(norms, 1.0)
	region = norms <= radius

	sup_constants: Dict[int, float] = {}
	second_constants: Dict[int, float] = {}
	for n in n_list:
		Dn = n_step_table(D, n, torus)
		sup_constants[n] = float(np.max((bracket ** (d + 2) * Dn / n)[region]))

		best = 0.0
		for k in range(1, radius // 3 + 1):
			for axis in range(d):
				plus = np.roll(Dn, -k, axis=axis)  # D^{*n}(x + y)
				minus = np.roll(Dn, k, axis=axis)  # D^{*n}(x - y)
				diff = np.abs(Dn - 0.5 * (plus + minus))
				mask = region & (norms >= 3 * k)
				if mask.any():
					best = max(best, float(np.max((bracket ** (d + 4) * diff / (k * k * n))[mask])))
		second_constants[n] = best

	radii = list(range(fit_start, radius + 1))
	if len(radii) < 4:
		raise RangeTooSmall(f"Fit window [{fit_start}, {radius}] holds fewer than 4 radii")
	sums = convolution_decay_sum(a, b, d, radii)
	decay = fit_power_law(radii, sums, (fit_start, radius))
	expected = max(a, d) - a - b

	first = sup_constants[n_list[0]] if n_list else float("nan")
	passes = {
		"sup_bounded": bool(n_list) and max(sup_constants.values()) <= growth_factor * first,
		"second_difference_finite": all(np.isfinite(v) for v in second_constants.values()),
		"decay_exponent": abs(decay.exponent - expected) <= exponent_tol,
	}
	logger.info("Convolution check: exponent %.3f (expected %.3f)", decay.exponent, expected)
	return ConvolutionReport(sup_constants, second_constants, decay, expected, passes)
