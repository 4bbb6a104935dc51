# src/lattice_couplings.py

## Imports
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from errors import (
	AsymmetricTable,
	NegativeCoupling,
	NonzeroSelfCoupling,
	TorusTooSmall,
	ZeroCoupling,
)

logger = logging.getLogger(__name__)

COUPLING_KINDS = ("nearest-neighbor", "spread-out", "table")


## Data Classes
@dataclass(frozen=True)
class TorusGeometry:
	"""Periodic box (Z / L Z)^d used as the finite-volume stand-in for Z^d.

	Site tables are stored as numpy arrays of shape (L,) * d indexed by the
	coordinate modulo L, so index 0 is the origin and the FFT conventions of
	scipy.fft apply directly. Coordinates handed back to callers are the
	minimal representatives in (-L/2, L/2].

	Attributes:
		d : int
			Spatial dimension (>= 1).
		L : int
			Side length per axis, an even integer >= 2.
	"""
	d: int
	L: int

	def __post_init__(self):
		if self.d < 1:
			raise ValueError(f"Torus dimension must be >= 1, got d={self.d}")
		if self.L < 2 or self.L % 2 != 0:
			raise ValueError(f"Torus side must be an even integer >= 2, got L={self.L}")

	@property
	def shape(self) -> Tuple[int, ...]:
		return (self.L,) * self.d

	@property
	def n_sites(self) -> int:
		return self.L ** self.d

	def reduce(self, coords: np.ndarray) -> np.ndarray:
		"""Map integer coordinates to their minimal image in (-L/2, L/2]."""
		c = np.mod(np.asarray(coords, dtype=np.int64), self.L)
		return np.where(c > self.L // 2, c - self.L, c)

	def coordinates(self) -> np.ndarray:
		"""All sites as minimal-image coordinates, shape (n_sites, d), in index order."""
		grid = np.indices(self.shape).reshape(self.d, -1).T
		return self.reduce(grid)

	def index_of(self, coord: Sequence[int]) -> int:
		return int(np.ravel_multi_index(tuple(np.mod(np.asarray(coord), self.L)), self.shape))

	def coord_of(self, index: int) -> Tuple[int, ...]:
		raw = np.unravel_index(int(index), self.shape)
		return tuple(int(c) for c in self.reduce(np.asarray(raw)))

	def squared_norms(self) -> np.ndarray:
		"""|x|^2 of the minimal image of every site, as a (L,) * d table."""
		axis = self.reduce(np.arange(self.L)) ** 2
		out = np.zeros(self.shape)
		for i in range(self.d):
			view = [1] * self.d
			view[i] = self.L
			out = out + axis.reshape(view)
		return out

	def norms(self) -> np.ndarray:
		return np.sqrt(self.squared_norms())

	def delta(self) -> np.ndarray:
		"""Kronecker delta at the origin as a site table."""
		out = np.zeros(self.shape)
		out[(0,) * self.d] = 1.0
		return out


@dataclass(frozen=True)
class CouplingSpec:
	"""A finite-range, Z^d-symmetric ferromagnetic coupling.

	Attributes:
		kind : str
			'nearest-neighbor', 'spread-out' (box of radius `radius`) or 'table'.
		d : int
			Spatial dimension.
		offsets : np.ndarray
			Support of the coupling, integer array of shape (m, d).
		values : np.ndarray
			Coupling strength at each offset, shape (m,).
		amplitude : float, optional
			Per-bond amplitude for the uniform kinds.
		radius : int, optional
			Box radius for 'spread-out'.
	"""
	kind: str
	d: int
	offsets: np.ndarray = field(repr=False)
	values: np.ndarray = field(repr=False)
	amplitude: Optional[float] = None
	radius: Optional[int] = None

	@property
	def jhat(self) -> float:
		return float(np.sum(self.values))

	@property
	def second_moment(self) -> float:
		return float(np.sum(np.sum(self.offsets ** 2, axis=1) * self.values))

	@property
	def variance(self) -> float:
		"""V = sum_x |x|^2 J(x) / J-hat."""
		if self.jhat == 0:
			return float("nan")
		return self.second_moment / self.jhat

	def at(self, v: Sequence[int]) -> float:
		hits = np.all(self.offsets == np.asarray(v), axis=1)
		return float(self.values[hits].sum())

	def scaled(self, factor: float) -> "CouplingSpec":
		"""Same support with every bond multiplied by `factor` (e.g. J = coupling * eps_N^2)."""
		amp = None if self.amplitude is None else self.amplitude * factor
		return CouplingSpec(self.kind, self.d, self.offsets, self.values * factor, amp, self.radius)

	def on_torus(self, torus: TorusGeometry) -> np.ndarray:
		return kernel_on_torus(self.offsets, self.values, torus)

	def fourier(self, k: np.ndarray) -> np.ndarray:
		return _kernel_fourier(self.offsets, self.values, k)

	def to_config(self) -> Dict[str, str]:
		"""Flat key-value block for a run config file."""
		block = {"kind": self.kind, "d": str(self.d)}
		if self.kind == "table":
			block["table"] = "; ".join(
				f"{','.join(str(int(c)) for c in off)}:{val!r}" for off, val in zip(self.offsets, self.values)
			)
		else:
			block["amplitude"] = repr(float(self.amplitude))
			if self.kind == "spread-out":
				block["radius"] = str(self.radius)
		return block


@dataclass(frozen=True)
class StepDistribution:
	"""One-step distribution D(v) = tanh J_{o,v} / sum_v tanh J_{o,v} of a random walk."""
	d: int
	offsets: np.ndarray = field(repr=False)
	probs: np.ndarray = field(repr=False)
	tanh_sum: float = 1.0

	@property
	def second_moment(self) -> float:
		return float(np.sum(np.sum(self.offsets ** 2, axis=1) * self.probs))

	def at(self, v: Sequence[int]) -> float:
		hits = np.all(self.offsets == np.asarray(v), axis=1)
		return float(self.probs[hits].sum())

	def on_torus(self, torus: TorusGeometry) -> np.ndarray:
		return kernel_on_torus(self.offsets, self.probs, torus)

	def fourier(self, k: np.ndarray) -> np.ndarray:
		return _kernel_fourier(self.offsets, self.probs, k)


## Functions
def _symmetry_images(v: Tuple[int, ...]) -> Iterable[Tuple[int, ...]]:
	"""Orbit of v under coordinate permutations and sign flips."""
	for perm in set(itertools.permutations(v)):
		for signs in itertools.product((1, -1), repeat=len(v)):
			yield tuple(s * c for s, c in zip(signs, perm))


def _validate_table(table: Mapping[Tuple[int, ...], float], d: int) -> None:
	for v, val in table.items():
		if len(v) != d:
			raise AsymmetricTable(f"Offset {v} does not have dimension d={d}")
		if val < 0:
			raise NegativeCoupling(f"Coupling at {v} is negative ({val})")
		if all(c == 0 for c in v) and val != 0:
			raise NonzeroSelfCoupling(f"Coupling at the origin must vanish, got {val}")
	for v, val in table.items():
		if val == 0:
			continue
		for image in _symmetry_images(v):
			other = table.get(image, 0.0)
			if not np.isclose(other, val, rtol=1e-12, atol=0.0):
				raise AsymmetricTable(f"Coupling table not Z^d-symmetric: J{v}={val} but J{image}={other}")


def build_coupling(
	kind: str,
	d: int,
	amplitude: Optional[float] = None,
	radius: int = 1,
	table: Optional[Mapping[Tuple[int, ...], float]] = None,
) -> CouplingSpec:
	"""
	Build a finite-range ferromagnetic coupling on Z^d.

	build_coupling produces the coupling function J(v) consumed by every other
	module, together with its derived moments jhat = sum_v J(v) and the variance
	V = sum_x |x|^2 J(x) / jhat. Explicit tables are validated against the full
	Z^d symmetry group but never symmetrised.

	Args:
		kind : str
			'nearest-neighbor', 'spread-out' or 'table'.
		d : int
			Spatial dimension, >= 1.
		amplitude : float, optional
			Per-bond strength for the uniform kinds (>= 0).
		radius : int, default = 1
			Box radius for 'spread-out' (all v with 0 < |v|_inf <= radius).
		table : Mapping[Tuple[int, ...], float], optional
			Explicit offset -> strength table for kind='table'.

	Returns:
		CouplingSpec

	Example:
		>>> nn = build_coupling("nearest-neighbor", d=5, amplitude=0.1)
		>>> nn.jhat, nn.variance
		(1.0, 1.0)

	Notes:
		- Zero entries are dropped from the support.
		- AsymmetricTable / NonzeroSelfCoupling / NegativeCoupling are ValueErrors.
	"""
	if d < 1:
		raise ValueError(f"Dimension must be >= 1, got d={d}")
	if kind not in COUPLING_KINDS:
		raise ValueError(f"Unknown coupling kind '{kind}', expected one of {COUPLING_KINDS}")

	if kind == "table":
		if table is None:
			raise ValueError("kind='table' requires an explicit table")
		table = {tuple(int(c) for c in k): float(v) for k, v in table.items()}
		_validate_table(table, d)
		items = sorted((k, v) for k, v in table.items() if v != 0)
		offsets = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, d)
		values = np.array([v for _, v in items], dtype=float)
		return CouplingSpec(kind, d, offsets, values)

	if amplitude is None or amplitude < 0:
		raise NegativeCoupling(f"Amplitude must be a nonnegative number, got {amplitude}")

	if kind == "nearest-neighbor":
		eye = np.eye(d, dtype=np.int64)
		offsets = np.concatenate([eye, -eye])
		radius = 1
	else:
		if radius < 1:
			raise ValueError(f"Box radius must be >= 1, got {radius}")
		grid = np.array(list(itertools.product(range(-radius, radius + 1), repeat=d)), dtype=np.int64)
		offsets = grid[np.any(grid != 0, axis=1)]

	values = np.full(len(offsets), float(amplitude))
	spec = CouplingSpec(kind, d, offsets, values, float(amplitude), radius)
	logger.debug("Built %s coupling in d=%d: jhat=%.6g V=%.6g", kind, d, spec.jhat, spec.variance)
	return spec


def coupling_from_config(block: Mapping[str, str]) -> CouplingSpec:
	"""Inverse of CouplingSpec.to_config."""
	kind = block.get("kind", "nearest-neighbor").strip()
	d = int(block["d"])
	if kind == "table":
		table = {}
		for entry in block["table"].split(";"):
			if not entry.strip():
				continue
			off, val = entry.split(":")
			table[tuple(int(c) for c in off.split(","))] = float(val)
		return build_coupling("table", d, table=table)
	return build_coupling(
		kind,
		d,
		amplitude=float(block["amplitude"]),
		radius=int(block.get("radius", 1)),
	)


def step_distribution(coupling: CouplingSpec, scale: float = 1.0) -> StepDistribution:
	"""
	Random-walk step distribution D(v) = tanh J_{o,v} / sum_v tanh J_{o,v}.

	The concrete per-bond values are J = scale * coupling, so scale = eps_N^2
	gives the Griffiths-Simon walk and scale = 1 uses the coupling as is.

	Raises:
		ZeroCoupling if sum_v tanh J_{o,v} == 0.
	"""
	t = np.tanh(coupling.values * scale)
	total = float(t.sum())
	if total == 0:
		raise ZeroCoupling("Step distribution undefined: sum of tanh J over the support is zero")
	return StepDistribution(coupling.d, coupling.offsets, t / total, total)


def kernel_on_torus(offsets: np.ndarray, values: np.ndarray, torus: TorusGeometry) -> np.ndarray:
	"""Wrap a finite-range kernel onto the torus, adding contributions of coinciding images."""
	if offsets.shape[1] != torus.d:
		raise ValueError(f"Kernel dimension {offsets.shape[1]} does not match torus d={torus.d}")
	wrapped = np.mod(offsets, torus.L)
	if np.any(np.all(wrapped == 0, axis=1)):
		raise TorusTooSmall(f"Kernel support wraps onto the origin on a torus of side L={torus.L}")
	table = np.zeros(torus.shape)
	np.add.at(table, tuple(wrapped.T), values)
	return table


def _kernel_fourier(offsets: np.ndarray, values: np.ndarray, k: np.ndarray) -> np.ndarray:
	# Symmetric kernel: the transform is the cosine sum
	k = np.atleast_2d(np.asarray(k, dtype=float))
	return np.cos(k @ offsets.T.astype(float)) @ values


def small_k_ratio(kernel, k_values: Iterable[float], direction: Optional[Sequence[float]] = None) -> np.ndarray:
	"""
	Ratio (1 - K-hat(k)) / (V_K |k|^2 / (2d)) along a fixed direction.

	kernel is a StepDistribution (or any normalized kernel with offsets/probs);
	V_K = sum_x |x|^2 K(x). The ratio tends to 1 as |k| -> 0, and only this
	leading |k|^2 behaviour is checked. 1 - cos is evaluated as 2 sin^2 to avoid
	cancellation at small |k|.
	"""
	offsets = kernel.offsets.astype(float)
	probs = getattr(kernel, "probs", None)
	if probs is None:
		probs = kernel.values / kernel.values.sum()
	d = offsets.shape[1]
	u = np.ones(d) / np.sqrt(d) if direction is None else np.asarray(direction, dtype=float)
	u = u / np.linalg.norm(u)
	v2 = float(np.sum(np.sum(offsets ** 2, axis=1) * probs))
	ratios = []
	for k in k_values:
		phase = k * (offsets @ u)
		one_minus = float(np.sum(probs * 2.0 * np.sin(phase / 2.0) ** 2))
		ratios.append(one_minus / (v2 * k ** 2 / (2 * d)))
	return np.array(ratios)
