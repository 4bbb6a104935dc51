# tests/test_green_function.py

## Imports
import numpy as np
import pytest
from scipy import special

from errors import DimensionTooLow, FugacityOutOfRange, QuadratureNotConverged, RangeTooSmall, SingularMode
from green_function import (
	asymptotic_amplitude,
	convolution_bounds_check,
	convolution_decay_sum,
	fit_decay,
	green_bessel_nn,
	green_fft,
	n_step_table,
)
from lattice_couplings import TorusGeometry, build_coupling, step_distribution
from estimators import fit_power_law


## Helper Functions
def nn_walk(d):
	"""Nearest-neighbour step distribution in dimension d."""
	return step_distribution(build_coupling("nearest-neighbor", d, amplitude=0.1))


## Tests - green_fft

def test_zero_fugacity_gives_delta(torus5_16):
	"""
	S_0 is the Kronecker delta at the origin.
	"""
	# Arrange
	D = nn_walk(5)

	# Act
	S = green_fft(D, 0.0, torus5_16)

	# Assert
	assert np.allclose(S.values, torus5_16.delta(), atol=1e-14), "S_0 must equal delta"


def test_half_fugacity_sums_to_two(torus5_16):
	"""
	sum_x S_{1/2}(x) = 1 / (1 - 1/2) = 2.
	"""
	# Arrange & Act
	S = green_fft(nn_walk(5), 0.5, torus5_16)

	# Assert
	assert S.total() == pytest.approx(2.0, abs=1e-10), f"Sum should be 2, got {S.total()}"


@pytest.mark.parametrize("d", [4, 5])
@pytest.mark.parametrize("p", [0.3, 0.9, 0.99])
def test_sum_rule_on_torus(d, p):
	"""
	sum_x S_p(x) = 1/(1-p) to 1e-10 on an L=16 torus.
	"""
	# Arrange
	torus = TorusGeometry(d=d, L=16)

	# Act
	S = green_fft(nn_walk(d), p, torus)

	# Assert
	assert S.sum_rule_residual() <= 1e-10, f"Sum rule residual {S.sum_rule_residual()} for d={d}, p={p}"
	assert S.imag_residue <= 1e-12, "Inverse transform should be real"


def test_green_function_satisfies_convolution_equation(torus5_6):
	"""
	S_p = delta + p D * S_p holds site by site.
	"""
	# Arrange
	D = nn_walk(5)
	p = 0.7
	S = green_fft(D, p, torus5_6).values
	D_table = D.on_torus(torus5_6)

	# Act: Convolve D with S by direct sum over the ten neighbours
	conv = np.zeros_like(S)
	for off, w in zip(D.offsets, D.probs):
		conv += w * np.roll(S, tuple(off), axis=tuple(range(5)))

	# Assert
	assert D_table.sum() == pytest.approx(1.0), "Wrapped D should be normalised"
	assert np.allclose(S, torus5_6.delta() + p * conv, atol=1e-12), "Convolution equation violated"


def test_critical_fugacity_requires_zero_mode_policy(torus5_6):
	"""
	p = 1 is singular at k = 0 unless the zero mode is subtracted.
	"""
	# Arrange
	D = nn_walk(5)

	# Act & Assert
	with pytest.raises(SingularMode):
		green_fft(D, 1.0, torus5_6)

	S = green_fft(D, 1.0, torus5_6, zero_mode="subtract")
	assert S.zero_mode_subtracted, "Subtraction should be flagged"
	assert abs(S.total()) <= 1e-10, "Zero-mode-subtracted table sums to zero"


def test_fugacity_out_of_range_raises(torus5_6):
	"""
	p outside [0, 1] is rejected.
	"""
	# Act & Assert
	with pytest.raises(FugacityOutOfRange):
		green_fft(nn_walk(5), 1.2, torus5_6)


def test_n_step_table_zero_is_delta(torus5_6):
	"""
	D^{*0} is delta and D^{*1} is D.
	"""
	# Arrange
	D = nn_walk(5)

	# Act
	D0 = n_step_table(D, 0, torus5_6)
	D1 = n_step_table(D, 1, torus5_6)

	# Assert
	assert np.allclose(D0, torus5_6.delta(), atol=1e-14), "Zero-step table should be delta"
	assert np.allclose(D1, D.on_torus(torus5_6), atol=1e-14), "One-step table should be D"


## Tests - green_bessel_nn

def test_bessel_zero_fugacity_at_origin():
	"""
	S_0(o) = 1 from the integral representation.
	"""
	# Arrange & Act
	value = green_bessel_nn((0,) * 5, 0.0, 5)

	# Assert
	assert value == pytest.approx(1.0, abs=1e-9), f"S_0(o) should be 1, got {value}"


def test_bessel_matches_fft_for_massive_walk(torus5_16):
	"""
	At p = 0.5 the torus is large enough that FFT and free space agree.
	"""
	# Arrange
	S = green_fft(nn_walk(5), 0.5, torus5_16)

	# Act & Assert
	for x in [(0, 0, 0, 0, 0), (1, 0, 0, 0, 0), (2, 1, 0, 0, 0)]:
		free = green_bessel_nn(x, 0.5, 5)
		assert free == pytest.approx(S.at(x), rel=1e-7), f"Mismatch at x={x}"


@pytest.mark.parametrize("r", [8, 10, 12, 16])
def test_bessel_critical_decay_matches_amplitude(r):
	"""
	At p = 1, |x|^{d-2} S_1(x) along an axis is within 5% of the d=5 amplitude.
	"""
	# Arrange
	x = (r, 0, 0, 0, 0)

	# Act
	value = green_bessel_nn(x, 1.0, 5)
	scaled = value * float(r) ** 3

	# Assert
	expected = asymptotic_amplitude(5, 1.0)
	assert np.isfinite(value), f"S_1 at |x|={r} is not finite"
	assert abs(scaled / expected - 1.0) < 0.05, f"Scaled value {scaled} vs amplitude {expected} at |x|={r}"


def test_bessel_critical_origin_includes_large_time_tail():
	"""
	S_1(o) in d = 5 is finite and close to the known value 1/(1 - return probability),
	which needs the large-time tail past the Bessel argument cap.
	"""
	# Arrange
	origin = (0,) * 5

	# Act
	critical = green_bessel_nn(origin, 1.0, 5)
	massive = green_bessel_nn(origin, 0.99, 5)

	# Assert
	assert np.isfinite(critical), "S_1(o) must be finite in d = 5"
	assert 1.0 < critical < 1.2, f"S_1(o) in d=5 should be about 1.16, got {critical}"
	assert massive < critical, "S_p(o) increases with p"


def test_bessel_without_refinement_raises():
	"""
	With no step halvings allowed the trapezoid rule cannot confirm convergence.
	"""
	# Act & Assert
	with pytest.raises(QuadratureNotConverged):
		green_bessel_nn((1, 0, 0, 0, 0), 0.5, 5, max_halvings=0)


def test_bessel_critical_low_dimension_raises():
	"""
	The p = 1 walk is recurrent in d <= 2.
	"""
	# Act & Assert
	with pytest.raises(DimensionTooLow):
		green_bessel_nn((0, 0), 1.0, 2)


## Tests - asymptotic_amplitude

def test_asymptotic_amplitude_values():
	"""
	Closed-form constants for d=5 and d=6 with J-hat V = 1, and 1/(J-hat V) scaling.
	"""
	# Arrange & Act
	a5 = asymptotic_amplitude(5, 1.0)
	a6 = asymptotic_amplitude(6, 1.0)
	a5_half = asymptotic_amplitude(5, 2.0)

	# Assert
	assert a5 == pytest.approx(2.5 * special.gamma(1.5) * np.pi ** -2.5, rel=1e-12), f"d=5 amplitude is {a5}"
	assert a5 == pytest.approx(0.126652, rel=1e-5), f"d=5 amplitude is {a5}"
	assert round(a6, 6) == 0.096755, f"d=6 amplitude is {a6}"
	assert a5_half == pytest.approx(a5 / 2.0, rel=1e-15), "Doubling J-hat V halves the amplitude"


def test_asymptotic_amplitude_low_dimension_raises():
	"""
	No amplitude in d <= 2.
	"""
	# Act & Assert
	with pytest.raises(DimensionTooLow):
		asymptotic_amplitude(2, 1.0)


## Tests - convolution decay

def test_convolution_decay_sum_exponent():
	"""
	sum_y <x-y>^{-3} <y>^{-3} decays like |x|^{-1} in d = 5.
	"""
	# Arrange
	radii = list(range(8, 33, 2))

	# Act
	sums = convolution_decay_sum(3.0, 3.0, 5, radii)
	fit = fit_power_law(radii, sums, (8, 32))

	# Assert
	assert np.all(np.diff(sums) < 0), "Convolution sum should decrease with |x|"
	assert abs(fit.exponent + 1.0) < 0.1, f"Fitted exponent {fit.exponent}, expected -1"


def test_convolution_decay_sum_diverges_raises():
	"""
	a + b <= d is rejected.
	"""
	# Act & Assert
	with pytest.raises(ValueError):
		convolution_decay_sum(2.0, 2.0, 5, [4])


def test_convolution_bounds_check_nn_d5(torus5_16):
	"""
	Sup constants stay bounded over n in {2, 4, 8, 16} for the NN walk in d = 5.
	"""
	# Arrange
	D = nn_walk(5)

	# Act
	report = convolution_bounds_check(D, [2, 4, 8, 16], radius=8, torus=torus5_16)

	# Assert
	assert report.passes["sup_bounded"], f"Sup constants grew: {report.sup_constants}"
	assert report.passes["second_difference_finite"], "Second-difference constants must be finite"
	assert abs(report.decay_fit.exponent - report.expected_exponent) < 0.3, "Decay exponent far off"
	assert set(report.to_dict()) >= {"sup_constants", "passes"}, "Report should serialise"


def test_convolution_bounds_check_two_power_decay_radius_12(torus5_16):
	"""
	With a = b = 3 in d = 5 and radius 12, the fitted decay exponent is -1 within 0.15.
	"""
	# Arrange
	D = nn_walk(5)

	# Act
	report = convolution_bounds_check(D, [2], radius=12, torus=torus5_16, a=3.0, b=3.0, fit_start=6)

	# Assert
	assert report.expected_exponent == -1.0, f"Expected exponent {report.expected_exponent}"
	assert abs(report.decay_fit.exponent + 1.0) <= 0.15, f"Fitted exponent {report.decay_fit.exponent}"
	assert report.passes["decay_exponent"], "Decay check should pass at the default tolerance"


def test_fit_decay_window_too_small(torus5_6):
	"""
	A window with fewer than four distinct radii raises RangeTooSmall.
	"""
	# Arrange
	S = green_fft(nn_walk(5), 0.5, torus5_6)

	# Act & Assert
	with pytest.raises(RangeTooSmall):
		fit_decay(S, torus5_6, window=(1.0, 1.5))
