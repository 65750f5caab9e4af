from pathlib import Path

import pytest

from kemlp.graph import AuxModel, GraphSpec, Kind, SensorData

GOLDEN = Path(__file__).parent / "golden"

# filled by test_acceptance; one line per criterion
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def golden():
    return GOLDEN


@pytest.fixture
def spec11():
    return GraphSpec.binary(1, 1)


def random_spec(rng, max_classes=4, max_aux=6):
    C = int(rng.integers(2, max_classes + 1))
    K = int(rng.integers(0, max_aux + 1))
    models = tuple(AuxModel(f"m{k}", Kind.PERMISSIVE if rng.random() < 0.5 else Kind.PREVENTATIVE,
                            int(rng.integers(0, C))) for k in range(K))
    return GraphSpec(C, models)


def random_data(rng, spec, n):
    C, K = spec.num_classes, spec.num_aux
    return SensorData(rng.integers(0, C, n), rng.integers(0, 2, n), rng.integers(0, C, n),
                      rng.integers(0, 2, (n, K)))
