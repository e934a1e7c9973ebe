import pytest

from gradedbt import load_bundled
from gradedbt.compiler import compile_tree
from gradedbt.model import (
    ActionSpec,
    Actor,
    AllowlistMode,
    CapabilityCategory,
    CapabilityProfile,
    PartProcess,
    Persona,
    ProcessSpec,
    Strategy,
)


@pytest.fixture(scope="session")
def bundled():
    return load_bundled("box_folding")


@pytest.fixture(scope="session")
def bundled_tree(bundled):
    spec, personas = bundled
    return compile_tree(spec, personas)


def mini_spec(*, manual_timeout_ms: int = 60, robot_duration_ms: int = 15,
              with_robot_strategy: bool = True) -> tuple[ProcessSpec, list[Persona]]:
    """One part, a gated manual strategy and optionally an automated fallback.

    Millisecond-scale durations keep wall-clock service tests fast.
    """
    strategies = [
        Strategy("by_hand", 0, AllowlistMode.DERIVED, (
            ActionSpec("do_it", "Do it", Actor.HUMAN, "done",
                       required_capabilities=frozenset({"grip"}),
                       nominal_duration_ms=10, timeout_ms=manual_timeout_ms),
        )),
    ]
    if with_robot_strategy:
        strategies.append(Strategy("by_robot", 1, AllowlistMode.UNIVERSAL, (
            ActionSpec("bot_does", "Robot does it", Actor.ROBOT, "done",
                       nominal_duration_ms=robot_duration_ms),
        )))
    spec = ProcessSpec(
        id="mini", name="Mini", vocabulary=(CapabilityCategory("grip", "Grip"),),
        part_processes=(
            PartProcess("stage", "Stage", frozenset({"done"}), tuple(strategies),
                        may_fail=not with_robot_strategy),
        ),
        default_timeout_ms=100,
    )
    personas = [Persona(1, "Able"), Persona(2, "NoGrip", CapabilityProfile(frozenset({"grip"})))]
    return spec, personas


@pytest.fixture
def mini():
    return mini_spec()


# One verdict line per acceptance criterion at the end of the run.
_acceptance_results: dict[str, str] = {}


def record_criterion(name: str, verdict: str) -> None:
    _acceptance_results[name] = verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        terminalreporter.write_line(f"{_acceptance_results[name]}  {name}")
