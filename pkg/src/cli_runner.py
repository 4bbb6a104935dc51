# src/cli_runner.py

## Imports
import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from version import __version__
from deconvolution import (
	critical_mu_from_phi,
	deconvolution_report,
	effective_linear_sd,
	pi_source_from_dict,
	synthetic_phi,
)
from errors import ConfigInvalid, ModuleError, ToolkitError
from exact_engine import (
	current_two_point,
	inequality_suite,
	lace_identity_check,
	spin_two_point_exact,
)
from green_function import green_bessel_nn, green_fft
from gs_construction import (
	block_spin_graph,
	block_two_point,
	block_walk,
	gs_params,
	massless_fugacity_point,
	single_site_convergence,
)
from io_utils import config_hash, parse_list, read_edge_list, read_json, read_run_config, write_summary_json, write_table_csv
from lattice_couplings import COUPLING_KINDS, TorusGeometry, coupling_from_config, step_distribution
from monte_carlo import ChainSchedule, critical_scan, delta_power_fit, merge_chains, run_chain, sd_residual

logger = logging.getLogger(__name__)

COMMANDS = ("greens", "gs-check", "exact", "lace", "mc", "critical", "deconv")
EXIT_OK, EXIT_MODULE, EXIT_CONFIG = 0, 1, 2


## Data Classes
@dataclass
class RunConfig:
	"""Resolved run configuration: config-file values overridden by CLI flags.

	Attributes:
		command : str
			One of COMMANDS.
		coupling : Dict[str, str]
			Coupling block (kind, d, amplitude, radius or table).
		lam : float
		mu : float, optional
		mu_grid : List[float]
		lambdas : List[float]
			Couplings for the critical scan (defaults to [lam]).
		N : int
		N_list : List[int]
		p_list : List[float]
			Fugacities for 'greens'.
		d : int
		L : int
		L_list : List[int]
		sweeps, burn_in, thin : int
		seeds : List[int]
		workers : int
		graph : str, optional
			Edge-list file for 'exact'.
		J : float, optional
		root : int
		fit_window : Tuple[float, float], optional
		deconv : Dict[str, str]
			Pi source block (mode, o_bar, c_tail) and optional phi2 for the
			effective walk.
		out_dir : str
		save_series : bool
	"""
	command: str
	coupling: Dict[str, str] = field(default_factory=dict)
	lam: float = 0.0
	mu: Optional[float] = None
	mu_grid: List[float] = field(default_factory=list)
	lambdas: List[float] = field(default_factory=list)
	N: int = 2
	N_list: List[int] = field(default_factory=lambda: [16, 64, 256, 1024])
	p_list: List[float] = field(default_factory=list)
	d: int = 5
	L: int = 16
	L_list: List[int] = field(default_factory=list)
	sweeps: int = 10000
	burn_in: int = 1000
	thin: int = 1
	seeds: List[int] = field(default_factory=lambda: [0])
	workers: int = 1
	graph: Optional[str] = None
	J: Optional[float] = None
	root: int = 0
	fit_window: Optional[Tuple[float, float]] = None
	deconv: Dict[str, str] = field(default_factory=dict)
	out_dir: str = "data"
	save_series: bool = False

	def hashable(self) -> Dict[str, Any]:
		"""The fields that determine the numbers (output location excluded)."""
		out = asdict(self)
		out.pop("out_dir")
		return out

	def validate(self) -> None:
		"""Check every numeric field against the preconditions of the command's modules."""
		problems = []
		if self.command not in COMMANDS:
			problems.append(f"unknown command '{self.command}'")
		if self.d < 1:
			problems.append(f"d must be >= 1, got {self.d}")
		if self.L < 2 or self.L % 2:
			problems.append(f"L must be an even integer >= 2, got {self.L}")
		if any(L < 2 or L % 2 for L in self.L_list):
			problems.append(f"L_list entries must be even integers >= 2, got {self.L_list}")
		if self.lam < 0 or any(l < 0 for l in self.lambdas):
			problems.append("lambda must be >= 0")
		if self.coupling and self.coupling.get("kind", "nearest-neighbor") not in COUPLING_KINDS:
			problems.append(f"unknown coupling kind '{self.coupling.get('kind')}'")
		if self.workers < 1:
			problems.append(f"workers must be >= 1, got {self.workers}")
		if self.fit_window is not None and not 0 < self.fit_window[0] < self.fit_window[1]:
			problems.append(f"fit window must satisfy 0 < lo < hi, got {self.fit_window}")

		if self.command == "greens":
			if not self.p_list:
				problems.append("greens needs at least one fugacity p")
			if any(not 0.0 <= p <= 1.0 for p in self.p_list):
				problems.append(f"fugacities must lie in [0, 1], got {self.p_list}")
		if self.command == "gs-check":
			if self.mu is None:
				problems.append("gs-check needs mu")
			if any(n < 2 for n in self.N_list):
				problems.append(f"N values must be >= 2, got {self.N_list}")
		if self.command == "exact" and not self.graph:
			problems.append("exact needs a graph file")
		if self.command in ("lace", "deconv"):
			if self.mu is None:
				problems.append(f"{self.command} needs mu")
			if self.N < 2:
				problems.append(f"N must be >= 2, got {self.N}")
		if self.command in ("mc", "critical"):
			if self.sweeps < 1 or self.burn_in < 0 or self.thin < 1:
				problems.append(f"bad schedule sweeps={self.sweeps} burn_in={self.burn_in} thin={self.thin}")
			if not self.seeds:
				problems.append("at least one seed is required")
		if self.command == "mc" and self.mu is None:
			problems.append("mc needs mu")
		if self.command == "critical":
			if len(self.mu_grid) < 3:
				problems.append(f"critical needs at least 3 mu values, got {len(self.mu_grid)}")
			if len(set(self.L_list or [self.L])) < 2:
				problems.append("critical needs at least 2 torus sizes")
		if self.command == "deconv" and self.deconv.get("mode", "synthetic") not in ("pure-delta", "synthetic", "exact"):
			problems.append(f"unknown Pi source mode '{self.deconv.get('mode')}'")

		if problems:
			raise ConfigInvalid("; ".join(problems))


## Functions
def _coupling(cfg: RunConfig):
	block = dict(cfg.coupling) or {"kind": "nearest-neighbor", "amplitude": "0.1"}
	block.setdefault("d", str(cfg.d))
	return coupling_from_config(block)


def _schedule(cfg: RunConfig) -> ChainSchedule:
	return ChainSchedule(sweeps=cfg.sweeps, burn_in=cfg.burn_in, thin=cfg.thin)


def _out(cfg: RunConfig, name: str) -> Path:
	return Path(cfg.out_dir) / f"{cfg.command}_{name}.csv"


def cmd_greens(cfg: RunConfig, writer: Callable[[pd.DataFrame, str], None], results: Dict[str, Any]) -> Dict[str, Any]:
	coupling = _coupling(cfg)
	D = step_distribution(coupling)
	torus = TorusGeometry(cfg.d, cfg.L)
	rows = results.setdefault("tables", [])
	for p in cfg.p_list:
		table = green_fft(D, p, torus, zero_mode="subtract" if p >= 1.0 else None)
		writer(table.to_frame(), f"p{p:g}")
		row = {"p": p, "total": table.total(), "sum_rule_residual": table.sum_rule_residual(), "imag_residue": table.imag_residue}
		if coupling.kind == "nearest-neighbor" and cfg.d > 2:
			e1 = [1] + [0] * (cfg.d - 1)
			row["free_space_origin"] = green_bessel_nn([0] * cfg.d, p, cfg.d)
			row["free_space_e1"] = green_bessel_nn(e1, p, cfg.d)
		rows.append(row)
	return results


def cmd_gs_check(cfg: RunConfig, writer, results: Dict[str, Any]) -> Dict[str, Any]:
	coupling = _coupling(cfg)
	table = single_site_convergence(cfg.lam, cfg.mu, coupling, cfg.N_list)
	writer(table, "moments")
	results["all_decreasing"] = bool(table["decreasing"].all())
	results["massless_points"] = [{"N": N, **massless_fugacity_point(gs_params(cfg.lam, cfg.mu, coupling, N))} for N in sorted(cfg.N_list)]
	return results


def cmd_exact(cfg: RunConfig, writer, results: Dict[str, Any]) -> Dict[str, Any]:
	graph = read_edge_list(cfg.graph, J=cfg.J)
	results.update(n_vertices=graph.n_vertices, n_bonds=graph.n_bonds)
	C = spin_two_point_exact(graph)
	C_current = current_two_point(graph)
	writer(pd.DataFrame(C), "two_point")
	results["current_oracle_max_diff"] = float(np.max(np.abs(C - C_current)))
	lace = lace_identity_check(graph, cfg.root, workers=cfg.workers)
	writer(lace, "lace")
	results["lace_min_slack"] = float(lace["slack"].min())
	ineq = inequality_suite(graph, cfg.root)
	writer(ineq, "inequalities")
	results["inequalities_passed"] = bool(ineq["passed"].all())
	return results


def cmd_lace(cfg: RunConfig, writer, results: Dict[str, Any]) -> Dict[str, Any]:
	coupling = _coupling(cfg)
	params = gs_params(cfg.lam, cfg.mu, coupling, cfg.N)
	results["params"] = params.to_dict()
	torus = TorusGeometry(cfg.d, cfg.L)
	graph = block_spin_graph(params, torus)
	results["n_vertices"] = graph.n_vertices
	C = spin_two_point_exact(graph)
	lace = lace_identity_check(graph, cfg.root, workers=cfg.workers)
	writer(lace, "lace")
	results["lace_min_slack"] = float(lace["slack"].min())
	block = block_two_point(C, graph, params, torus)
	writer(block.pair_bounds, "pair_bounds")
	results.update(
		pair_bound_min_slack=float(block.pair_bounds["slack"].min()),
		block_susceptibility=block.susceptibility(),
		replica_spread=block.replica_spread,
	)
	return results


def cmd_mc(cfg: RunConfig, writer, results: Dict[str, Any]) -> Dict[str, Any]:
	coupling = _coupling(cfg)
	torus = TorusGeometry(cfg.d, cfg.L)
	chains = [run_chain(coupling, cfg.lam, cfg.mu, torus, _schedule(cfg), seed, chain_index=i) for i, seed in enumerate(cfg.seeds)]
	if cfg.save_series:
		for chain in chains:
			writer(chain.samples, f"series_chain{chain.chain_index}")
	obs = merge_chains(chains)
	writer(obs.to_frame(), "estimates")
	results.update(obs.summary())
	results["u4_nonpositive"] = bool(obs.u4.mean <= 3.0 * obs.u4.stderr)
	residuals = sd_residual(obs, coupling, cfg.lam, cfg.mu)
	writer(residuals, "sd_residual")
	results["sd_residual"] = residuals.to_dict(orient="records")
	return results


def cmd_critical(cfg: RunConfig, writer, results: Dict[str, Any]) -> Dict[str, Any]:
	coupling = _coupling(cfg)
	lambdas = cfg.lambdas or [cfg.lam]
	results["jhat"] = coupling.jhat
	scans = results.setdefault("scans", [])
	for lam in lambdas:
		scan = critical_scan(coupling, lam, cfg.mu_grid, cfg.L_list or [cfg.L], _schedule(cfg), cfg.seeds, workers=cfg.workers, show_progress=False)
		writer(scan.points, f"points_lam{lam:g}")
		writer(scan.extrapolations, f"extrapolation_lam{lam:g}")
		scans.append({"lambda": lam, "mu_c": scan.mu_c.to_dict(), "delta": scan.delta.to_dict(), "finite_size_drift": scan.finite_size_drift})
	positive = [(s["lambda"], s["delta"]["mean"]) for s in scans if s["lambda"] > 0]
	if len(positive) >= 3:
		fit = delta_power_fit([l for l, _ in positive], [v for _, v in positive])
		results["delta_power_fit"] = fit.to_dict()
	return results


def cmd_deconv(cfg: RunConfig, writer, results: Dict[str, Any]) -> Dict[str, Any]:
	coupling = _coupling(cfg)
	torus = TorusGeometry(cfg.d, cfg.L)
	params = gs_params(cfg.lam, cfg.mu, coupling, cfg.N)
	results["params"] = params.to_dict()
	block = dict(cfg.deconv)
	if "pi_source" in block:
		block.update(read_json(block.pop("pi_source")))
	pi = pi_source_from_dict(block, torus, params)
	results["report"] = deconvolution_report(pi, block_walk(params, torus), cfg.fit_window)

	if "phi2" in block:
		phi = synthetic_phi(float(block["phi2"]), float(block.get("phi_tail", 0.0)), torus)
		walk = effective_linear_sd(phi, coupling, cfg.lam, cfg.mu, torus, cfg.fit_window)
		writer(walk.amplitude_check, "amplitude")
		results["effective_walk"] = {
			"jhat_eff": walk.jhat_eff,
			"chi_inv": walk.chi_inv,
			"amplitude": walk.amplitude,
			"mu_c": critical_mu_from_phi(phi, coupling, cfg.lam),
		}
	return results


HANDLERS: Dict[str, Callable[[RunConfig, Callable, Dict[str, Any]], Dict[str, Any]]] = {
	"greens": cmd_greens,
	"gs-check": cmd_gs_check,
	"exact": cmd_exact,
	"lace": cmd_lace,
	"mc": cmd_mc,
	"critical": cmd_critical,
	"deconv": cmd_deconv,
}


def dispatch(cfg: RunConfig) -> int:
	"""
	Validate a RunConfig, run its command and write every artifact.

	dispatch always writes '<out_dir>/<command>_summary.json' with the schema
	{command, version, config_hash, config, results, errors}, including when
	validation or the module fails. Handlers fill `results` as they go, so a
	failing run keeps whatever it computed before the error. CSV tables carry
	the version and config hash on their first line.

	Args:
		cfg : RunConfig

	Returns:
		int
			0 on success, 2 for ConfigInvalid, 1 for any other toolkit error.
	"""
	h = config_hash(cfg.hashable())
	summary: Dict[str, Any] = {
		"command": cfg.command,
		"version": __version__,
		"config_hash": h,
		"config": cfg.hashable(),
		"results": {},
		"errors": [],
	}

	def writer(df: pd.DataFrame, name: str) -> None:
		write_table_csv(df, _out(cfg, name), __version__, h)

	status = EXIT_OK
	try:
		cfg.validate()
		HANDLERS[cfg.command](cfg, writer, summary["results"])
	except ConfigInvalid as e:
		logger.error("Invalid configuration: %s", e)
		summary["errors"].append(e.to_record())
		status = EXIT_CONFIG
	except (ToolkitError, ValueError) as e:
		# Plain ValueErrors come from lattice and geometry constructors
		err = ModuleError(cfg.command, e)
		logger.error("%s", err)
		summary["errors"].append(err.to_record())
		status = EXIT_MODULE

	path = write_summary_json(summary, Path(cfg.out_dir) / f"{cfg.command}_summary.json")
	logger.info("Wrote %s (exit %d)", path, status)
	return status


def build_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(description="Lattice phi^4 / Griffiths-Simon / lace-expansion numerical toolkit.")
	parser.add_argument("--version", action="version", version=__version__)
	parser.add_argument("-v", "--verbose", action="store_true")
	parser.add_argument("-q", "--quiet", action="store_true")
	sub = parser.add_subparsers(dest="command", required=True)

	for name in COMMANDS:
		p = sub.add_parser(name)
		p.add_argument("--config", type=str, default=None, help="Run config file (flat sections).")
		p.add_argument("--out", type=str, default=None, help="Output directory.")
		p.add_argument("--d", type=int, default=None)
		p.add_argument("--L", type=int, default=None)
		p.add_argument("--coupling", type=str, default=None, choices=COUPLING_KINDS)
		p.add_argument("--amplitude", type=float, default=None)
		p.add_argument("--radius", type=int, default=None)
		p.add_argument("--lam", type=float, default=None)
		p.add_argument("--mu", type=float, default=None)
		p.add_argument("--N", type=int, default=None)
		p.add_argument("--workers", type=int, default=None)
		p.add_argument("--fit-window", type=str, default=None, help="lo,hi")
		if name == "greens":
			p.add_argument("--p", type=str, default=None, help="Comma-separated fugacities.")
		if name == "gs-check":
			p.add_argument("--N-list", type=str, default=None)
		if name == "exact":
			p.add_argument("--graph", type=str, default=None)
			p.add_argument("--J", type=float, default=None)
			p.add_argument("--root", type=int, default=None)
		if name in ("mc", "critical"):
			p.add_argument("--sweeps", type=int, default=None)
			p.add_argument("--burn-in", type=int, default=None)
			p.add_argument("--thin", type=int, default=None)
			p.add_argument("--seeds", type=str, default=None)
		if name == "mc":
			p.add_argument("--save-series", action="store_true")
		if name == "critical":
			p.add_argument("--mu-grid", type=str, default=None)
			p.add_argument("--L-list", type=str, default=None)
			p.add_argument("--lambdas", type=str, default=None)
		if name == "deconv":
			p.add_argument("--mode", type=str, default=None, choices=("pure-delta", "synthetic", "exact"))
			p.add_argument("--o-bar", type=float, default=None)
			p.add_argument("--c-tail", type=float, default=None)
	return parser


def _window(value: Optional[str]) -> Optional[Tuple[float, float]]:
	if value is None:
		return None
	lo_hi = parse_list(value)
	if len(lo_hi) != 2:
		raise ConfigInvalid(f"fit window needs two numbers, got '{value}'")
	return (lo_hi[0], lo_hi[1])


def resolve_config(args: argparse.Namespace) -> RunConfig:
	"""Merge a run config file (if any) with CLI flags; flags win."""
	sections = read_run_config(args.config) if args.config else {}
	coupling = dict(sections.get("coupling", {}))
	model = sections.get("model", {})
	geometry = sections.get("geometry", {})
	schedule = sections.get("schedule", {})
	output = sections.get("output", {})
	graph = sections.get("graph", {})

	def pick(flag: str, value: Optional[str], cast, default):
		arg = getattr(args, flag, None)
		if arg is not None:
			return arg
		if value is None:
			return default
		try:
			return cast(value)
		except ValueError as e:
			raise ConfigInvalid(f"Cannot parse {flag}='{value}': {e}")

	def pick_list(flag: str, value: Optional[str], cast, default):
		arg = getattr(args, flag, None)
		if arg is not None:
			return parse_list(arg, cast)
		if value is None:
			return default
		return parse_list(value, cast)

	defaults = RunConfig(command=args.command)
	if args.coupling is not None:
		coupling["kind"] = args.coupling
	if args.amplitude is not None:
		coupling["amplitude"] = repr(args.amplitude)
	if args.radius is not None:
		coupling["radius"] = str(args.radius)

	d = pick("d", geometry.get("d", coupling.get("d")), int, defaults.d)
	if coupling:
		coupling["d"] = str(d)

	deconv = dict(sections.get("deconv", {}))
	for flag, key in (("mode", "mode"), ("o_bar", "o_bar"), ("c_tail", "c_tail")):
		if getattr(args, flag, None) is not None:
			deconv[key] = str(getattr(args, flag))

	window = _window(getattr(args, "fit_window", None) or sections.get("deconv", {}).get("fit_window") or output.get("fit_window"))
	mu = pick("mu", model.get("mu"), float, None)

	return RunConfig(
		command=args.command,
		coupling=coupling,
		lam=pick("lam", model.get("lambda", model.get("lam")), float, defaults.lam),
		mu=mu,
		mu_grid=pick_list("mu_grid", model.get("mu_grid"), float, []),
		lambdas=pick_list("lambdas", model.get("lambdas"), float, []),
		N=pick("N", model.get("n"), int, defaults.N),
		N_list=pick_list("N_list", model.get("n_list"), int, defaults.N_list),
		p_list=pick_list("p", model.get("p"), float, []),
		d=d,
		L=pick("L", geometry.get("l"), int, defaults.L),
		L_list=pick_list("L_list", geometry.get("l_list"), int, []),
		sweeps=pick("sweeps", schedule.get("sweeps"), int, defaults.sweeps),
		burn_in=pick("burn_in", schedule.get("burn_in"), int, defaults.burn_in),
		thin=pick("thin", schedule.get("thin"), int, defaults.thin),
		seeds=pick_list("seeds", schedule.get("seeds"), int, defaults.seeds),
		workers=pick("workers", schedule.get("workers"), int, defaults.workers),
		graph=pick("graph", graph.get("path"), str, None),
		J=pick("J", graph.get("j"), float, None),
		root=pick("root", graph.get("root"), int, defaults.root),
		fit_window=window,
		deconv=deconv,
		out_dir=args.out or output.get("dir", defaults.out_dir),
		save_series=bool(getattr(args, "save_series", False)) or output.get("save_series", "false").lower() == "true",
	)


def main(argv: Optional[Sequence[str]] = None) -> int:
	parser = build_parser()
	args = parser.parse_args(argv)
	level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
	logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")

	try:
		cfg = resolve_config(args)
	except ConfigInvalid as e:
		# Write a summary for the failed run too
		cfg = RunConfig(command=args.command, out_dir=args.out or "data")
		summary = {
			"command": args.command,
			"version": __version__,
			"config_hash": config_hash(cfg.hashable()),
			"config": cfg.hashable(),
			"results": {},
			"errors": [e.to_record()],
		}
		write_summary_json(summary, Path(cfg.out_dir) / f"{args.command}_summary.json")
		logger.error("Invalid configuration: %s", e)
		return EXIT_CONFIG
	return dispatch(cfg)


if __name__ == "__main__":
	sys.exit(main())
