import json
import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from instancegen.assignment import assign_instances  # noqa: E402
from instancegen.backends import build_suite  # noqa: E402
from instancegen.config import RunConfig  # noqa: E402
from instancegen.layout import build_summary  # noqa: E402
from instancegen.pipeline import seed_search  # noqa: E402
from instancegen.prompt_parser import parse_prompt, parsed_from_wire  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
GUIDED_PROMPT = "two dogs and a cat in a backyard"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def porcupine_parsed():
    return parsed_from_wire(json.loads((FIXTURES / "porcupine_parsed.json").read_text()))


@pytest.fixture(scope="session")
def porcupine_summary():
    return json.loads((FIXTURES / "porcupine_segments.json").read_text())


@pytest.fixture(scope="session")
def porcupine_reply():
    return (FIXTURES / "porcupine_reply.txt").read_text()


@pytest.fixture(scope="session")
def porcupine_bad_reply():
    return (FIXTURES / "porcupine_reply_two_squirrels.txt").read_text()


@dataclass
class GuidedScene:
    config: RunConfig
    suite: object
    parsed: object
    run: object
    layout: object
    plan: object


def prepare_scene(prompt: str = GUIDED_PROMPT, seed: int = 0, **overrides) -> GuidedScene:
    """Parse, seed search and assignment on the synthetic backends."""
    config = RunConfig.from_dict({"prompt": prompt, "seed": seed, **overrides})
    suite = build_suite(config.backends, config.backend_set)
    parsed = parse_prompt(prompt, suite.require("chat"), complete=lambda c, i, t: suite.chat_complete(i, t))
    run, layout, objects, attrs, _, _ = seed_search(parsed, config, suite)
    summary = build_summary(layout, {w: wa.map for w, wa in objects.items()}, attrs)
    layout.summary = summary
    plan = assign_instances(parsed, summary, suite.require("chat"),
                            complete=lambda c, i, t: suite.chat_complete(i, t)).plan
    return GuidedScene(config, suite, parsed, run, layout, plan)


@pytest.fixture(scope="session")
def guided_scene() -> GuidedScene:
    return prepare_scene()


# -- per-criterion report ------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        _CRITERIA[number] = (status, title, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, seconds = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  ({seconds:.2f} s)  {title}")
