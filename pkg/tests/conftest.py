import os
import sys

import pytest

from dino_forge.data import SynthSpec, generate_synthetic

os.environ.setdefault("DINO_FORGE_THREADS", "1")


@pytest.fixture(scope="session")
def synth_small(tmp_path_factory):
    """120 samples at 32 px; enough for a few optimizer steps."""
    root = tmp_path_factory.mktemp("synth_small")
    ds = generate_synthetic(SynthSpec(n_samples=120, image_size=32, seed=3), root)
    return root, ds


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "ACCEPTANCE", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
