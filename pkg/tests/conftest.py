import numpy as np
import pytest

from mixmas.data import generate_synthetic, load_dataset, load_manifest
from mixmas.synthetic import bundled_spec

from acceptance_report import LINES


def pytest_terminal_summary(terminalreporter):
    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(LINES):
        terminalreporter.write_line(LINES[num])


@pytest.fixture(scope="session")
def bundled_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundled")
    generate_synthetic(bundled_spec(0), out)
    return out


@pytest.fixture(scope="session")
def bundled_dataset(bundled_dir):
    return load_dataset(load_manifest(bundled_dir / "manifest.json"))


@pytest.fixture(scope="session")
def small_dir(tmp_path_factory):
    """A 600-sample version of the bundled task, for quick pipeline tests."""
    out = tmp_path_factory.mktemp("small")
    spec = bundled_spec(1)
    spec.num_samples = 600
    generate_synthetic(spec, out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(0)
