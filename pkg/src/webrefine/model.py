"""Shared domain types for tasks, actions, observations, trajectories, and verdicts.

Everything here is an immutable value object: construction validates local
invariants, :func:`validate_trajectory` checks the cross-field rules, and the
archive module handles persistence. No behavior beyond that lives here.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from urllib.parse import urlparse


class ActionKind(str, Enum):
    """Verbs the browser agent can execute against a web environment."""

    NAVIGATE = "navigate"
    CLICK = "click"
    TYPE = "type"
    PRESS_ENTER = "press_enter"
    SCROLL = "scroll"
    READ_TEXT = "read_text"
    STOP = "stop"


# Verbs that must carry a target element reference (or URL for navigate).
_REF_REQUIRED = {ActionKind.NAVIGATE, ActionKind.CLICK, ActionKind.TYPE, ActionKind.READ_TEXT}


class ChatRole(str, Enum):
    """Producing roles in the two-chat hierarchy plus the verifier."""

    PLANNER = "planner"
    USER_PROXY = "user_proxy"
    BROWSER_AGENT = "browser_agent"
    EXECUTOR = "executor"
    VERIFIER = "verifier"


class Termination(str, Enum):
    """How a task attempt ended."""

    AGENT_DECLARED_DONE = "agent_declared_done"
    STEP_BUDGET_EXHAUSTED = "step_budget_exhausted"
    ENVIRONMENT_ERROR = "environment_error"


class Modality(str, Enum):
    """Evidence handed to the validator."""

    TASK_LOG_TEXT = "task-log"
    SCREENSHOTS_VISION = "screenshots"
    SCREENSHOTS_PLUS_FINAL_RESPONSE = "multimodal"

    @property
    def uses_vision(self) -> bool:
        return self is not Modality.TASK_LOG_TEXT


class Label(str, Enum):
    """Human or validator judgment of one task attempt."""

    COMPLETE = "complete"
    INCOMPLETE = "incomplete"


class ParseStatus(str, Enum):
    """How a validator verdict was recovered from the raw model reply."""

    PARSED_CLEAN = "parsed_clean"
    PARSED_FROM_FENCE = "parsed_from_fence"
    FALLBACK_INCOMPLETE = "fallback_incomplete"


@dataclass(frozen=True)
class Task:
    """One benchmark item: where to start and what to accomplish."""

    id: str
    site: str
    instruction: str
    start_url: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("task id must be non-empty")
        if not self.instruction:
            raise ValueError(f"task {self.id}: instruction must be non-empty")
        parsed = urlparse(self.start_url)
        if not parsed.scheme or not parsed.netloc:
            raise ValueError(f"task {self.id}: start_url {self.start_url!r} is not a URL")


@dataclass(frozen=True)
class ActionCommand:
    """A single low-level action: verb plus optional target ref and text payload."""

    kind: ActionKind
    ref: str = ""
    text: str = ""

    def __post_init__(self) -> None:
        if self.kind in _REF_REQUIRED and not self.ref:
            raise ValueError(f"action {self.kind.value} requires a target ref")


@dataclass(frozen=True)
class ScreenshotRecord:
    """One screenshot capture attempt sequence for a planner step."""

    step_index: int
    image: bytes
    attempts_used: int
    captured: bool

    def __post_init__(self) -> None:
        if self.step_index < 0:
            raise ValueError("step_index must be >= 0")
        if self.attempts_used < 1:
            raise ValueError("attempts_used must be >= 1")
        if self.captured and not self.image:
            raise ValueError("captured screenshot must carry image bytes")


@dataclass(frozen=True)
class Observation:
    """What the agent sees after an action: page identity plus distilled content."""

    url: str
    title: str
    distilled_dom: str
    screenshot: ScreenshotRecord | None = None


@dataclass(frozen=True)
class ChatEntry:
    role: ChatRole
    content: str


@dataclass(frozen=True)
class StepRecord:
    """One planner step: the directive and the low-level actions it decomposed into."""

    index: int
    directive: str
    actions: list[tuple[ActionCommand, str]]
    observation_after: Observation

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError("step index must be >= 0")


@dataclass(frozen=True)
class Trajectory:
    """The complete record of one task attempt."""

    task_id: str
    planner_log: list[ChatEntry]
    steps: list[StepRecord]
    screenshots: list[ScreenshotRecord]
    final_response: str | None
    termination: Termination


@dataclass(frozen=True)
class Verdict:
    """A validator's judgment of a trajectory."""

    was_completed: bool
    rationale: str
    visual_questions: list[tuple[str, str]] | None = None
    parse_status: ParseStatus = ParseStatus.PARSED_CLEAN

    def __post_init__(self) -> None:
        if self.parse_status is ParseStatus.FALLBACK_INCOMPLETE and self.was_completed:
            raise ValueError("fallback verdicts are always incomplete")

    @property
    def label(self) -> Label:
        return Label.COMPLETE if self.was_completed else Label.INCOMPLETE


def validate_trajectory(t: Trajectory) -> list[str]:
    """Check every cross-field trajectory invariant; return one message per violation.

    Total: never raises. An empty list means the trajectory is well-formed.
    """
    violations: list[str] = []

    for pos, step in enumerate(t.steps):
        if step.index != pos:
            violations.append("steps: non-contiguous indices")
            break

    order = [s.step_index for s in t.screenshots]
    if order != sorted(order):
        violations.append("screenshots: not sorted by step_index")

    if t.termination is Termination.AGENT_DECLARED_DONE:
        if t.final_response is None:
            violations.append("final_response: absent despite agent_declared_done termination")
    elif t.final_response is not None:
        violations.append(f"final_response: present despite {t.termination.value} termination")

    for prev, cur in zip(t.planner_log, t.planner_log[1:]):
        if prev.role is cur.role:
            violations.append(f"planner_log: consecutive entries share role {cur.role.value}")
            break

    for step in t.steps:
        shot = step.observation_after.screenshot
        if shot is not None and shot.step_index != step.index:
            violations.append(
                f"steps[{step.index}]: observation screenshot linked to step {shot.step_index}"
            )

    return violations
