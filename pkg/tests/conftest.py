import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict

import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
SRC_DIR = PROJECT_ROOT / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from rad.config import RadConfig  # noqa: E402
from rad.corpus import ingest_corpus  # noqa: E402
from rad.gateway import MockBackend, ModelGateway, PromptTask, TaskKind  # noqa: E402
from rad.index import MockEmbedder, build_index  # noqa: E402
from rad.pipeline import run  # noqa: E402
from rad.store import ChunkStore, write_store  # noqa: E402

SEED = 7

EMISSIONS_DOC = """# Emission limits

Vehicle emission limits tighten every year for new registrations.

## Phase-in schedule

The phase-in schedule starts in 2026 and covers 40% of new vehicles.
Full coverage follows in 2030.

## Enforcement

Inspections are carried out by the regional transport authority.
Fines scale with the excess emissions measured.
"""

CHARGING_DOC = """Charging infrastructure

1 Station density

Public charging stations should be available every 50 km on highways.
Urban districts need at least 2 stations per 1000 residents.

2 Grid capacity

Grid operators must reinforce substations before large charging hubs open.
Peak demand management keeps the grid stable in the evening.
"""


class ScriptedBackend:
    """Mock backend with per-kind overrides returning raw text."""

    name = "scripted"

    def __init__(self, seed: int = SEED, overrides: Dict[TaskKind, Callable[[PromptTask, int], Any]] | None = None):
        self.fallback = MockBackend(seed)
        self.overrides = dict(overrides or {})
        self.prompts: list[tuple[TaskKind, int]] = []

    def generate(self, task: PromptTask, prompt: str, attempt: int) -> str:
        self.prompts.append((task.kind, attempt))
        handler = self.overrides.get(task.kind)
        if handler is None:
            return self.fallback.generate(task, prompt, attempt)
        value = handler(task, attempt)
        return value if isinstance(value, str) else json.dumps(value)


@pytest.fixture
def gateway() -> ModelGateway:
    return ModelGateway(MockBackend(SEED))


@pytest.fixture
def embedder() -> MockEmbedder:
    return MockEmbedder(SEED, dim=64)


@pytest.fixture
def scripted() -> Callable[..., ModelGateway]:
    def _make(overrides: Dict[TaskKind, Callable[[PromptTask, int], Any]] | None = None) -> ModelGateway:
        return ModelGateway(ScriptedBackend(SEED, overrides))

    return _make


@pytest.fixture
def corpus_dir(tmp_path: Path) -> Path:
    root = tmp_path / "corpus"
    root.mkdir()
    (root / "emissions.md").write_text(EMISSIONS_DOC, encoding="utf-8")
    (root / "charging.txt").write_text(CHARGING_DOC, encoding="utf-8")
    return root


@pytest.fixture
def rad_config(tmp_path: Path) -> RadConfig:
    return RadConfig.model_validate(
        {
            "seed": SEED,
            "top_k": 4,
            "reproducible_output": True,
            "paths": {
                "store": str(tmp_path / "store"),
                "model": str(tmp_path / "model.json"),
                "report": str(tmp_path / "report.json"),
                "log_file": str(tmp_path / "logs" / "rad.log"),
            },
        }
    )


@pytest.fixture
def request_file(tmp_path: Path) -> Path:
    path = tmp_path / "request.json"
    path.write_text(
        json.dumps(
            {
                "d": "Choose a policy to roll out EV charging while meeting emission limits and grid capacity.",
                "options": [
                    {
                        "id": "grid-first",
                        "title": "Grid first",
                        "text": "Reinforce substations and grid capacity before building charging stations.",
                    },
                    {
                        "id": "fast-rollout",
                        "title": "Fast rollout",
                        "text": "Build highway charging stations quickly and accept temporary peak demand.",
                    },
                ],
            }
        ),
        encoding="utf-8",
    )
    return path


@pytest.fixture
def store(tmp_path: Path, corpus_dir: Path, embedder: MockEmbedder, gateway: ModelGateway) -> ChunkStore:
    corpus = ingest_corpus(corpus_dir, embedder, gateway)
    index = build_index(corpus.chunks, embedder)
    root = tmp_path / "store"
    write_store(root, corpus, index, embedding={"backend": "mock", "dim": embedder.dim})
    return ChunkStore.open(root)


@pytest.fixture
def report_path(corpus_dir: Path, request_file: Path, rad_config: RadConfig) -> Path:
    run(corpus_dir, request_file, rad_config)
    return rad_config.paths.report
