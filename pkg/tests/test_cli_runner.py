# tests/test_cli_runner.py

## Imports
import pytest

from cli_runner import EXIT_CONFIG, EXIT_MODULE, EXIT_OK, main
from io_utils import read_json, read_table_csv
from version import __version__


## Helper Functions
def run(tmp_out, *argv):
	"""Run the CLI into tmp_out and return (exit code, summary dict)."""
	command = argv[0]
	status = main([*argv, "--out", str(tmp_out)])
	return status, read_json(tmp_out / f"{command}_summary.json")


## Tests - greens

def test_greens_writes_summary_and_tables(tmp_out):
	"""
	A valid greens run exits 0 and writes a summary and a headed CSV.
	"""
	# Arrange & Act
	status, summary = run(tmp_out, "greens", "--d", "3", "--L", "8", "--p", "0.5")

	# Assert
	assert status == EXIT_OK, f"Errors: {summary['errors']}"
	assert set(summary) == {"command", "version", "config_hash", "config", "results", "errors"}, "Summary schema"
	assert summary["version"] == __version__, "Version recorded"
	table = summary["results"]["tables"][0]
	assert table["total"] == pytest.approx(2.0, rel=1e-10), "Sum of S_p is 1 / (1 - p)"
	assert "free_space_origin" in table, "NN in d=3 includes the free-space values"

	csv_path = tmp_out / "greens_p0.5.csv"
	header = csv_path.read_text().splitlines()[0]
	assert header == f"# version {__version__} config_hash {summary['config_hash']}", f"Header {header}"
	assert len(read_table_csv(csv_path)) == 8 ** 3, "One row per torus site"


def test_greens_without_fugacity_is_config_error(tmp_out):
	"""
	Missing --p fails validation with exit code 2 and a structured record.
	"""
	# Arrange & Act
	status, summary = run(tmp_out, "greens", "--d", "3", "--L", "8")

	# Assert
	assert status == EXIT_CONFIG, "ConfigInvalid maps to exit 2"
	assert summary["errors"][0]["error"] == "ConfigInvalid", f"Got {summary['errors']}"
	assert summary["results"] == {}, "No results for an invalid run"


def test_module_failure_is_exit_one(tmp_out):
	"""
	A spread-out box wrapping onto itself fails inside the module with exit code 1.
	"""
	# Arrange & Act
	status, summary = run(
		tmp_out, "greens", "--d", "1", "--L", "2", "--coupling", "spread-out", "--radius", "2", "--amplitude", "0.1", "--p", "0.5"
	)

	# Assert
	assert status == EXIT_MODULE, "Module errors map to exit 1"
	record = summary["errors"][0]
	assert record["error"] == "ModuleError" and record["command"] == "greens", f"Got {record}"
	assert record["cause"] == "TorusTooSmall", f"Got {record}"


## Tests - exact

def test_exact_on_triangle_file(tmp_out, tmp_path):
	"""
	exact reads an edge list and reports oracle agreement and passing inequalities.
	"""
	# Arrange
	graph = tmp_path / "k3.edges"
	graph.write_text("3\n0 1\n1 2\n0 2\n")

	# Act
	status, summary = run(tmp_out, "exact", "--graph", str(graph), "--J", "0.5")

	# Assert
	assert status == EXIT_OK, f"Errors: {summary['errors']}"
	results = summary["results"]
	assert results["n_vertices"] == 3 and results["n_bonds"] == 3, "Triangle"
	assert results["current_oracle_max_diff"] <= 1e-12, "Current and spin tables agree"
	assert results["lace_min_slack"] >= -1e-12, "Remainder bound holds"
	assert results["inequalities_passed"], "Inequalities hold on K3"
	assert (tmp_out / "exact_lace.csv").exists(), "Lace table written"


def test_exact_missing_graph_file_writes_summary(tmp_out, tmp_path):
	"""
	A nonexistent edge list is a module failure with exit 1, and the summary is still written.
	"""
	# Arrange
	missing = tmp_path / "nowhere.edges"

	# Act
	status, summary = run(tmp_out, "exact", "--graph", str(missing), "--J", "0.5")

	# Assert
	assert status == EXIT_MODULE, "Unreadable graph files map to exit 1"
	record = summary["errors"][0]
	assert record["cause"] == "InvalidGraph", f"Got {record}"
	assert "nowhere.edges" in record["message"], "The message should name the file"


def test_exact_failure_keeps_partial_results(tmp_out, tmp_path):
	"""
	K7 passes the spin enumeration but exceeds the bond limit; the graph size stays in the summary.
	"""
	# Arrange
	graph = tmp_path / "k7.edges"
	bonds = "\n".join(f"{a} {b}" for a in range(7) for b in range(a + 1, 7))
	graph.write_text(f"7\n{bonds}\n")

	# Act
	status, summary = run(tmp_out, "exact", "--graph", str(graph), "--J", "0.2")

	# Assert
	assert status == EXIT_MODULE, "Too many bonds is a module failure"
	assert summary["errors"][0]["cause"] == "TooManyBonds", f"Got {summary['errors']}"
	assert summary["results"] == {"n_vertices": 7, "n_bonds": 21}, f"Partial results: {summary['results']}"


## Tests - configuration

def test_flags_override_config_file(tmp_out, tmp_path):
	"""
	Config-file values are used unless a flag overrides them.
	"""
	# Arrange
	cfg = tmp_path / "run.cfg"
	cfg.write_text("[model]\np = 0.3\n\n[geometry]\nd = 3\nL = 4\n")

	# Act
	status, summary = run(tmp_out, "greens", "--config", str(cfg), "--L", "6")

	# Assert
	assert status == EXIT_OK, f"Errors: {summary['errors']}"
	assert summary["config"]["L"] == 6, "Flag should win over the file"
	assert summary["config"]["d"] == 3, "File value used when no flag"
	assert summary["config"]["p_list"] == [0.3], "Fugacities read from the file"


def test_config_hash_independent_of_output_dir(tmp_path):
	"""
	The same configuration hashes identically wherever it is written.
	"""
	# Arrange
	out_a, out_b = tmp_path / "a", tmp_path / "b"

	# Act
	_, summary_a = run(out_a, "greens", "--d", "2", "--L", "4", "--p", "0.4")
	_, summary_b = run(out_b, "greens", "--d", "2", "--L", "4", "--p", "0.4")

	# Assert
	assert summary_a["config_hash"] == summary_b["config_hash"], "Output location must not enter the hash"
	assert summary_a["results"] == summary_b["results"], "Deterministic results"


def test_missing_config_file_still_writes_summary(tmp_out, tmp_path):
	"""
	An unreadable config file exits 2 and leaves a summary behind.
	"""
	# Arrange & Act
	status, summary = run(tmp_out, "gs-check", "--config", str(tmp_path / "missing.cfg"))

	# Assert
	assert status == EXIT_CONFIG, "Unreadable config maps to exit 2"
	assert summary["errors"][0]["error"] == "ConfigInvalid", f"Got {summary['errors']}"
