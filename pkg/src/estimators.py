# src/estimators.py

## Imports
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Type

import numpy as np
import pandas as pd
import statsmodels.api as sm
from statsmodels.tsa.stattools import acf

from errors import NotEquilibrated, RangeTooSmall, ToolkitValueError

logger = logging.getLogger(__name__)

# Madras-Sokal window constant and the block length multiple used for error bars
WINDOW_C = 6.0
BLOCK_TAU_MULTIPLE = 6.0


## Data Classes
@dataclass
class Estimate:
	"""A Monte Carlo (or exact) value with its statistical error.

	Attributes:
		mean : float
		stderr : float
			Standard error from blocking with block length >= 6 tau_int.
		tau_int : float
			Integrated autocorrelation time in units of measurements.
		n_samples : int
		burn_in : int
		seed : int, optional
	"""
	mean: float
	stderr: float
	tau_int: float = 0.5
	n_samples: int = 0
	burn_in: int = 0
	seed: Optional[int] = None

	def to_dict(self) -> Dict[str, float]:
		return asdict(self)

	def consistent_with(self, value: float, n_sigma: float = 3.0, floor: float = 1e-12) -> bool:
		"""True if |mean - value| <= n_sigma * stderr (with an absolute floor for exact values)."""
		return abs(self.mean - value) <= n_sigma * self.stderr + floor

	@classmethod
	def exact(cls, value: float) -> "Estimate":
		return cls(mean=float(value), stderr=0.0, tau_int=0.0, n_samples=0)


@dataclass
class PowerLawFit:
	"""Least-squares fit of log y = log amplitude + exponent * log r.

	Attributes:
		exponent : float
		amplitude : float
		exponent_stderr : float
		r_squared : float
		residual : float
			Root-mean-square of the log residuals, the fit figure of merit.
		n_points : int
	"""
	exponent: float
	amplitude: float
	exponent_stderr: float
	r_squared: float
	residual: float
	n_points: int

	def to_dict(self) -> Dict[str, float]:
		return asdict(self)


## Functions
def integrated_autocorrelation_time(series: Sequence[float], c: float = WINDOW_C) -> float:
	"""
	Integrated autocorrelation time with the Madras-Sokal automatic window.

	integrated_autocorrelation_time sums the normalized autocorrelation function
	rho(t) (statsmodels acf, FFT based) up to the smallest window W with
	W >= c * tau(W), where tau(W) = 1/2 + sum_{t=1}^{W} rho(t).

	Args:
		series : Sequence[float]
			Time series of measurements.
		c : float, default = 6.0
			Window constant.

	Returns:
		float
			tau_int >= 0.5 (0.5 means uncorrelated); constant series return 0.5.
	"""
	x = np.asarray(series, dtype=float)
	n = len(x)
	if n < 4 or np.allclose(x, x[0]):
		return 0.5

	rho = acf(x, nlags=n - 1, fft=True)
	tau = 0.5
	for w in range(1, n):
		tau += rho[w]
		if w >= c * tau:
			return max(float(tau), 0.5)
	logger.warning("Autocorrelation window did not close within %d lags", n)
	return max(float(tau), 0.5)


def block_means(values: np.ndarray, block_length: int) -> np.ndarray:
	"""Non-overlapping block averages along axis 0 (trailing partial block dropped)."""
	values = np.asarray(values, dtype=float)
	n_blocks = len(values) // block_length
	trimmed = values[: n_blocks * block_length]
	return trimmed.reshape((n_blocks, block_length) + values.shape[1:]).mean(axis=1)


def blocking_error(series: Sequence[float], block_length: int) -> Tuple[float, float, int]:
	"""Mean, standard error of the mean, and number of blocks for a given block length."""
	x = np.asarray(series, dtype=float)
	blocks = block_means(x, max(1, int(block_length)))
	n_blocks = len(blocks)
	if n_blocks < 2:
		return float(x.mean()), float("nan"), n_blocks
	return float(x.mean()), float(blocks.std(ddof=1) / math.sqrt(n_blocks)), n_blocks


def block_length_for(tau_int: float) -> int:
	return max(1, int(math.ceil(BLOCK_TAU_MULTIPLE * tau_int)))


def estimate_series(
	series: Sequence[float],
	burn_in: int = 0,
	seed: Optional[int] = None,
	min_blocks: int = 0,
	name: str = "observable",
) -> Estimate:
	"""
	Turn a post-burn-in time series into an Estimate.

	The block length is ceil(6 * tau_int); the standard error is the standard
	deviation of the block means over sqrt(n_blocks).

	Raises:
		NotEquilibrated if fewer than `min_blocks` blocks fit in the series.
	"""
	x = np.asarray(series, dtype=float)
	if len(x) == 0:
		raise ToolkitValueError(f"Empty time series for {name}")
	tau = integrated_autocorrelation_time(x)
	block_length = block_length_for(tau)
	mean, stderr, n_blocks = blocking_error(x, block_length)
	if n_blocks < min_blocks:
		raise NotEquilibrated(
			f"{name}: tau_int={tau:.1f} leaves only {n_blocks} blocks of length {block_length} "
			f"from {len(x)} measurements (need {min_blocks})"
		)
	return Estimate(mean, stderr, tau, len(x), burn_in, seed)


def jackknife(fn: Callable[..., float], columns: Sequence[np.ndarray], block_length: int = 1) -> Tuple[float, float]:
	"""
	Delete-one-block jackknife for a derived quantity fn(mean_1, mean_2, ...).

	Args:
		fn : Callable
			Function of the column means, e.g. lambda a, b: a - 3 * b ** 2.
		columns : Sequence[np.ndarray]
			Time series, one per argument of fn, all the same length.
		block_length : int
			Block length; use the largest block length among the inputs.

	Returns:
		(value, stderr)
	"""
	blocks = [block_means(np.asarray(c, dtype=float), max(1, block_length)) for c in columns]
	n_blocks = len(blocks[0])
	value = float(fn(*[np.mean(c) for c in columns]))
	if n_blocks < 2:
		return value, float("nan")
	totals = [b.sum() for b in blocks]
	leave_one_out = np.array([
		fn(*[(tot - b[i]) / (n_blocks - 1) for tot, b in zip(totals, blocks)]) for i in range(n_blocks)
	])
	variance = (n_blocks - 1) / n_blocks * np.sum((leave_one_out - leave_one_out.mean()) ** 2)
	return value, float(np.sqrt(variance))


def merge_estimates(estimates: Iterable[Estimate]) -> Estimate:
	"""Inverse-variance weighted average over independent chains."""
	estimates = list(estimates)
	if not estimates:
		raise ToolkitValueError("Nothing to merge")
	if len(estimates) == 1:
		return estimates[0]
	errs = np.array([e.stderr for e in estimates])
	means = np.array([e.mean for e in estimates])
	if np.any(~np.isfinite(errs)) or np.any(errs <= 0):
		# Fall back to a plain average when some chain has no usable error bar
		mean = float(means.mean())
		stderr = float(np.sqrt(np.nansum(errs ** 2)) / len(errs))
	else:
		w = 1.0 / errs ** 2
		mean = float(np.sum(w * means) / w.sum())
		stderr = float(1.0 / np.sqrt(w.sum()))
	return Estimate(
		mean=mean,
		stderr=stderr,
		tau_int=max(e.tau_int for e in estimates),
		n_samples=sum(e.n_samples for e in estimates),
		burn_in=estimates[0].burn_in,
		seed=None,
	)


def fit_power_law(
	r: Sequence[float],
	y: Sequence[float],
	window: Tuple[float, float],
	min_points: int = 4,
	error_cls: Type[Exception] = RangeTooSmall,
) -> PowerLawFit:
	"""
	Fit y ~ amplitude * r^exponent by OLS on log-log data over a declared window.

	fit_power_law never picks the window itself: only points with
	window[0] <= r <= window[1] and y > 0 enter the fit. Repeated r values
	are allowed (e.g. several sites at the same distance).

	Args:
		r, y : Sequence[float]
		window : Tuple[float, float]
		min_points : int, default = 4
			Minimum number of distinct r values inside the window.
		error_cls : Exception type raised when the window is too small.

	Returns:
		PowerLawFit
	"""
	r = np.asarray(r, dtype=float)
	y = np.asarray(y, dtype=float)
	lo, hi = window
	mask = (r >= lo) & (r <= hi) & (y > 0) & np.isfinite(y)
	n_distinct = len(np.unique(np.round(r[mask], 12)))
	if n_distinct < min_points:
		raise error_cls(f"Only {n_distinct} distinct |x| values in fit window [{lo}, {hi}] (need {min_points})")

	X = sm.add_constant(np.log(r[mask]))
	model = sm.OLS(np.log(y[mask]), X).fit()
	resid = np.sqrt(np.mean(model.resid ** 2))
	return PowerLawFit(
		exponent=float(model.params[1]),
		amplitude=float(np.exp(model.params[0])),
		exponent_stderr=float(model.bse[1]),
		r_squared=float(model.rsquared),
		residual=float(resid),
		n_points=int(mask.sum()),
	)


def weighted_linear_fit(x: Sequence[float], y: Sequence[float], yerr: Sequence[float]) -> Dict[str, float]:
	"""
	Weighted least-squares line y = intercept + slope * x (statsmodels WLS).

	Returns intercept, slope, their covariance entries and the chi-square of
	the residuals (weights 1/yerr^2). With zero errors an unweighted fit is used.
	"""
	x = np.asarray(x, dtype=float)
	y = np.asarray(y, dtype=float)
	yerr = np.asarray(yerr, dtype=float)
	X = sm.add_constant(x)
	if np.all(yerr > 0):
		weights = 1.0 / yerr ** 2
		model = sm.WLS(y, X, weights=weights).fit()
		chi2 = float(np.sum(weights * model.resid ** 2))
		cov = model.normalized_cov_params  # absolute-sigma covariance (X' W X)^{-1}
	else:
		model = sm.OLS(y, X).fit()
		chi2 = float("nan")
		cov = model.cov_params()
	cov = np.asarray(cov)
	return {
		"intercept": float(model.params[0]),
		"slope": float(model.params[1]),
		"var_intercept": float(cov[0, 0]),
		"var_slope": float(cov[1, 1]),
		"cov": float(cov[0, 1]),
		"chi2": chi2,
		"dof": int(len(x) - 2),
	}
