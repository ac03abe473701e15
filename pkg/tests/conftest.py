import pytest

from searchbench.generate import GenSpec, generate, load_fixture
from searchbench.tasks import TaskKind

# Per-task difficulty levels that stay inside the exhaustive-enumeration
# guards, so brute-force oracles are always available.
ENUMERABLE_LEVELS = {
    TaskKind.TRIP_PLANNING: (2, 3, 4, 5, 6),
    TaskKind.VERTEX_COVER: (1, 2, 3, 4, 5, 6),
    TaskKind.THREE_DM: (1, 2, 3, 4),
    TaskKind.MEETING_PLANNING: (1, 2, 3, 4, 5),
}


@pytest.fixture(scope="session")
def reference_trip():
    """The bundled six-city reference itinerary used across the suite."""
    return load_fixture("appendixB-task1")


@pytest.fixture(scope="session")
def sample_instances():
    """A few deterministic instances per task at an enumerable level."""
    return {
        kind: tuple(
            generate(GenSpec(kind=kind, level=4, seed=seed)) for seed in range(3)
        )
        for kind in TaskKind
    }
