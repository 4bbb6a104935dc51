# src/sweeps.py

## Imports
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple

import pandas as pd
from tqdm import tqdm

from errors import ToolkitError

logger = logging.getLogger(__name__)


## Data Classes
@dataclass
class SweepConfig:
	"""Configuration for a grid sweep over parameter points.

	SweepConfig defines the parameter space to explore: every combination of the
	listed values is evaluated once, in the order given by itertools.product over
	the keys in insertion order.

	Attributes:
		grid : Mapping[str, Iterable]
			Parameter name -> values to scan.
		fixed : Mapping[str, Any], default = {}
			Keyword arguments passed unchanged to every run.
		workers : int, default = 1
			Worker processes; 1 runs in-process.
		show_progress : bool, default = True

	Example:
		>>> cfg = SweepConfig(grid={"L": [4, 6], "mu": [1.2, 1.4, 1.6]}, fixed={"lam": 0.1})
	"""
	grid: Mapping[str, Iterable]
	fixed: Mapping[str, Any] = field(default_factory=dict)
	workers: int = 1
	show_progress: bool = True

	def points(self) -> List[Dict[str, Any]]:
		keys = list(self.grid.keys())
		return [dict(zip(keys, values)) for values in itertools.product(*[list(self.grid[k]) for k in keys])]


## Functions
def _single_run(task: Tuple[Callable[..., Dict[str, Any]], Dict[str, Any], Dict[str, Any]]) -> Dict[str, Any]:
	"""Evaluate one parameter point.

	_single_run calls fn(**point, **fixed) and merges the returned dict with the
	point. It is fail-soft for toolkit errors: a failing point yields a record
	with 'error' and 'message' columns instead of aborting the sweep. Any other
	exception is a bug and propagates.
	"""
	fn, point, fixed = task
	try:
		result = fn(**point, **fixed)
		return {**point, **result, "error": None, "message": None}
	except ToolkitError as e:
		# Record the failure and keep sweeping
		logger.warning("Sweep point %s failed: %s", point, e)
		return {**point, "error": type(e).__name__, "message": str(e)}


def grid_sweep(fn: Callable[..., Dict[str, Any]], cfg: SweepConfig) -> pd.DataFrame:
	"""Run fn over every point of a parameter grid.

	Driver used by the scans: it enumerates the grid with
	itertools.product, evaluates each point (optionally in a bounded process
	pool) and collects one record per point. Results are returned in grid
	order whatever the number of workers, so repeated runs give identical
	tables.

	Args:
		fn : Callable[..., Dict[str, Any]]
			Must be a module-level function when workers > 1.
		cfg : SweepConfig

	Returns:
		pd.DataFrame
			One row per point with the grid columns, fn's outputs, and
			'error' / 'message' (None for successful points).
	"""
	points = cfg.points()
	if not points:
		logger.warning("Empty parameter grid")
		return pd.DataFrame()

	tasks = [(fn, point, dict(cfg.fixed)) for point in points]
	logger.info("Sweeping %d parameter points with %d worker(s)", len(tasks), cfg.workers)

	if cfg.workers > 1:
		with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
			iterator = pool.map(_single_run, tasks)
			records = list(tqdm(iterator, total=len(tasks), desc="Sweep", disable=not cfg.show_progress))
	else:
		records = [_single_run(t) for t in tqdm(tasks, desc="Sweep", disable=not cfg.show_progress)]

	df = pd.DataFrame.from_records(records)
	n_failed = int(df["error"].notna().sum())
	if n_failed:
		logger.warning("%d of %d sweep points failed", n_failed, len(df))
	return df


def failed_points(df: pd.DataFrame) -> List[Dict[str, Any]]:
	"""Error records of the failed points, for JSON summaries."""
	if df.empty or "error" not in df.columns:
		return []
	return df.loc[df["error"].notna()].to_dict(orient="records")
