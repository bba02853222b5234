import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from xlkp.cli import main
from xlkp.synthetic import FixtureConfig, make_fixture

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def small_fixture():
    return make_fixture(FixtureConfig(n_en=400, n_xx=160))


def pipeline(work: Path) -> dict[str, Path]:
    """The bundled fixture through train, code-mix export, generation and evaluation."""
    fx = work / "fx"
    steps = [
        ["make-fixture", "--out", fx, "--n-en", "300", "--n-par", "40", "--n-np", "60", "--n-dev", "40"],
        ["train-retriever", "--xx-corpus", fx / "xx.jsonl", "--en-corpus", fx / "en.jsonl", "--pairs",
         fx / "par.jsonl", "--epochs", "4", "--dim", "32", "--out", work / "m.bin"],
        ["format-codemix", "--xx-corpus", fx / "xx.jsonl", "--ids", fx / "dev.jsonl", "--en-corpus",
         fx / "en.jsonl", "--model", work / "m.bin", "--m", "2", "--out", work / "codemix.jsonl"],
        ["generate", "--xx-corpus", fx / "xx.jsonl", "--ids", fx / "dev.jsonl", "--generator", "lexicon",
         "--par", fx / "par.jsonl", "--en-corpus", fx / "en.jsonl", "--model", work / "m.bin", "--m", "1",
         "--out", work / "pred.jsonl"],
        ["evaluate", "--gold", fx / "xx.jsonl", "--pred", work / "pred.jsonl", "--ids", fx / "dev.jsonl",
         "--dev", fx / "dev.jsonl", "--en-corpus", fx / "en.jsonl", "--model", work / "m.bin",
         "--out-dir", work / "report"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    return {
        "codemix.jsonl": work / "codemix.jsonl",
        "report.txt": work / "report" / "report.txt",
        "report.json": work / "report" / "report.json",
    }


@pytest.fixture(scope="session")
def golden_pipeline(tmp_path_factory):
    return pipeline(tmp_path_factory.mktemp("pipeline"))


@dataclass
class _Criterion:
    title: str
    budget: float
    log: list
    detail: str = ""
    start: float = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        ok = exc_type is None and elapsed < self.budget
        status = "PASS" if ok else "FAIL"
        note = self.detail if exc_type is None else f"{exc_type.__name__}: {exc}".splitlines()[0]
        self.log.append(f"[{status}] {self.title}: {note} ({elapsed:.2f}s, budget {self.budget:g}s)")
        if exc_type is None and not ok:
            raise AssertionError(f"{self.title} took {elapsed:.2f}s, over its {self.budget:g}s budget")
        return False


@pytest.fixture
def criterion(request):
    """Context manager that times one acceptance criterion and records a pass/fail line."""
    log = request.config.stash.setdefault(_ACCEPTANCE, [])

    def make(title: str, budget: float) -> _Criterion:
        return _Criterion(title, budget, log)

    return make


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
