# src/io_utils.py

## Imports
import configparser
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

from errors import ConfigInvalid, InvalidGraph
from exact_engine import SpinGraph

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


## Functions
def _jsonable(value: Any) -> Any:
	# numpy scalars / arrays and tuples into plain JSON types
	if isinstance(value, dict):
		return {str(k): _jsonable(v) for k, v in value.items()}
	if isinstance(value, (list, tuple)):
		return [_jsonable(v) for v in value]
	if isinstance(value, np.ndarray):
		return _jsonable(value.tolist())
	if isinstance(value, np.bool_):
		return bool(value)
	if isinstance(value, np.integer):
		return int(value)
	if isinstance(value, np.floating):
		value = float(value)
	if isinstance(value, float) and not np.isfinite(value):
		return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
	return value


def config_hash(config: Mapping[str, Any]) -> str:
	"""SHA-256 of the canonical (sorted keys, compact) JSON of a resolved config."""
	canonical = json.dumps(_jsonable(dict(config)), sort_keys=True, separators=(",", ":"))
	return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def read_edge_list(path: PathLike, J: Optional[float] = None) -> SpinGraph:
	"""
	Read a graph file: first line the vertex count, then one bond per line.

	read_edge_list accepts lines 'a b J' or 'a b'; a bare pair takes the
	default coupling J. Blank lines and lines starting with '#' are skipped.

	Args:
		path : str | Path
		J : float, optional
			Coupling for bonds listed without one; also overrides every listed
			value when given.

	Returns:
		SpinGraph

	Example:
		>>> graph = read_edge_list("k3.edges", J=0.5)
	"""
	try:
		text = Path(path).read_text()
	except OSError as e:
		raise InvalidGraph(f"Cannot read edge list '{path}': {e}")
	lines = [ln.strip() for ln in text.splitlines()]
	lines = [ln for ln in lines if ln and not ln.startswith("#")]
	if not lines:
		raise InvalidGraph(f"Edge list '{path}' is empty")
	try:
		n_vertices = int(lines[0].split()[0])
	except ValueError as e:
		raise InvalidGraph(f"First line of '{path}' must be the vertex count: {e}")

	bonds, couplings = [], []
	for ln in lines[1:]:
		parts = ln.split()
		if len(parts) not in (2, 3):
			raise InvalidGraph(f"Malformed bond line '{ln}' in '{path}'")
		bonds.append((int(parts[0]), int(parts[1])))
		if J is not None:
			couplings.append(float(J))
		elif len(parts) == 3:
			couplings.append(float(parts[2]))
		else:
			raise InvalidGraph(f"Bond '{ln}' has no coupling and no default J was given")

	return SpinGraph(n_vertices, np.array(bonds, dtype=np.int64).reshape(-1, 2), np.array(couplings, dtype=float))


def read_run_config(path: PathLike) -> Dict[str, Dict[str, str]]:
	"""Read a flat sectioned run config into {section: {key: value}} (values left as strings)."""
	parser = configparser.ConfigParser()
	try:
		with open(path) as fh:
			parser.read_file(fh)
	except (OSError, configparser.Error) as e:
		raise ConfigInvalid(f"Cannot read run config '{path}': {e}")
	return {section: dict(parser.items(section)) for section in parser.sections()}


def parse_list(value: Optional[str], cast=float) -> list:
	"""Comma-separated config list, e.g. '1.2, 1.4' -> [1.2, 1.4]."""
	if value is None or str(value).strip() == "":
		return []
	try:
		return [cast(v.strip()) for v in str(value).split(",") if v.strip()]
	except ValueError as e:
		raise ConfigInvalid(f"Cannot parse list '{value}': {e}")


def write_table_csv(df: pd.DataFrame, path: PathLike, version: str, cfg_hash: str) -> Path:
	"""Write a CSV whose first line is a '# version <v> config_hash <h>' comment."""
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	with open(path, "w", newline="") as fh:
		fh.write(f"# version {version} config_hash {cfg_hash}\n")
		df.to_csv(fh, index=False)
	logger.debug("Wrote %d rows to %s", len(df), path)
	return path


def read_table_csv(path: PathLike) -> pd.DataFrame:
	return pd.read_csv(path, comment="#")


def write_summary_json(summary: Mapping[str, Any], path: PathLike) -> Path:
	"""Write a JSON summary with sorted keys so identical runs give identical files."""
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	path.write_text(json.dumps(_jsonable(dict(summary)), indent=2, sort_keys=True) + "\n")
	return path


def read_json(path: PathLike) -> Dict[str, Any]:
	try:
		return json.loads(Path(path).read_text())
	except (OSError, json.JSONDecodeError) as e:
		raise ConfigInvalid(f"Cannot read JSON '{path}': {e}")
