import numpy as np
import pytest

from eeprnet.synth import generate_dataset, load_dataset


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """Six palms, three images each; small enough for fast training smoke tests."""
    out = tmp_path_factory.mktemp("tiny")
    return generate_dataset(6, out, seed=3, samples_per_palm=3)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_manifest):
    return load_dataset(tiny_manifest)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one ``[ACCEPTANCE n] PASS|FAIL`` line; all of them are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"[ACCEPTANCE {n}] {'PASS' if ok else 'FAIL'} {detail}"
        print("\n" + line)
        lines.append((n, line))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
