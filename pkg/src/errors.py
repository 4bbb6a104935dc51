# src/errors.py

## Imports
from typing import Any, Dict


## Base Classes
class ToolkitError(Exception):
	"""Base class for every error raised by the toolkit.

	The CLI maps ConfigInvalid to exit status 2 and any other ToolkitError to
	exit status 1, so library code should only ever raise subclasses of this.
	"""

	def to_record(self) -> Dict[str, Any]:
		"""Structured error record written into JSON summaries."""
		return {"error": type(self).__name__, "message": str(self)}


class ToolkitValueError(ToolkitError, ValueError):
	"""Invalid input (bad table, parameter outside its domain, ...)."""


class ToolkitRuntimeError(ToolkitError, RuntimeError):
	"""A numerical procedure failed on otherwise valid input."""


## Lattice and coupling errors
class AsymmetricTable(ToolkitValueError):
	pass


class NonzeroSelfCoupling(ToolkitValueError):
	pass


class NegativeCoupling(ToolkitValueError):
	pass


class ZeroCoupling(ToolkitValueError):
	pass


class TorusTooSmall(ToolkitValueError):
	pass


## Green function errors
class FugacityOutOfRange(ToolkitValueError):
	pass


class SingularMode(ToolkitValueError):
	pass


class DimensionTooLow(ToolkitValueError):
	pass


class RangeTooSmall(ToolkitValueError):
	pass


class QuadratureNotConverged(ToolkitRuntimeError):
	pass


## Griffiths-Simon errors
class NonpositiveLambda(ToolkitValueError):
	pass


class FerromagneticViolation(ToolkitValueError):
	pass


class BlockAsymmetry(ToolkitRuntimeError):
	pass


## Exact enumeration errors
class InvalidGraph(ToolkitValueError):
	pass


class TooManyVertices(ToolkitValueError):
	pass


class TooManyBonds(ToolkitValueError):
	pass


class BadCutRadius(ToolkitValueError):
	pass


## Monte Carlo errors
class NotEquilibrated(ToolkitRuntimeError):
	pass


class ExtrapolationUnstable(ToolkitRuntimeError):
	pass


## Deconvolution errors
class SupercriticalF(ToolkitValueError):
	pass


class DegenerateCurvature(ToolkitValueError):
	pass


class FitWindowTooSmall(ToolkitValueError):
	pass


class NonpositiveA(ToolkitValueError):
	pass


## CLI errors
class ConfigInvalid(ToolkitValueError):
	pass


class ModuleError(ToolkitRuntimeError):
	"""Wraps a failure raised inside a module while a CLI command was running."""

	def __init__(self, command: str, cause: Exception):
		super().__init__(f"{command}: {type(cause).__name__}: {cause}")
		self.command = command
		self.cause = cause

	def to_record(self) -> Dict[str, Any]:
		return {
			"error": type(self).__name__,
			"command": self.command,
			"cause": type(self.cause).__name__,
			"message": str(self.cause),
		}
