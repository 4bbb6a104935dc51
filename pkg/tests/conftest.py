# tests/conftest.py
# Configuration for pytest

import sys
from pathlib import Path

import pytest

# Add src directory to Python path for module imports
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from lattice_couplings import TorusGeometry, build_coupling  # noqa: E402


## Fixtures
@pytest.fixture
def nn5():
	"""Nearest-neighbour coupling in d=5 with J-hat = 1."""
	return build_coupling("nearest-neighbor", 5, amplitude=0.1)


@pytest.fixture
def torus5_16():
	return TorusGeometry(d=5, L=16)


@pytest.fixture
def torus5_6():
	return TorusGeometry(d=5, L=6)


@pytest.fixture
def nn1():
	"""Nearest-neighbour chain coupling in d=1."""
	return build_coupling("nearest-neighbor", 1, amplitude=0.3)


@pytest.fixture
def tmp_out(tmp_path):
	"""Fresh output directory for CLI runs."""
	out = tmp_path / "out"
	out.mkdir()
	return out
