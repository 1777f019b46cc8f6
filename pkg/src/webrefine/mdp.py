"""Web navigation framed as an MDP: environment contract, rollout driver, returns.

The framework never solves the MDP with classical planning; the chat-model
agent *is* the policy. These pieces exist so simulator ground truth and the
discounted objective are computable in hermetic runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

from .model import ActionCommand, Observation, ScreenshotRecord, Task


class WebEnvError(Exception):
    """Raised by an environment that cannot continue (driver failure, stepping after done)."""


@runtime_checkable
class WebEnvironment(Protocol):
    """Behavioral contract every environment implements.

    After ``step`` returns ``done=True`` the environment rejects further steps
    until the next ``reset``. Simulated implementations are deterministic:
    the same state and action always produce the same next observation.
    """

    def reset(self, task: Task) -> Observation: ...

    def step(self, action: ActionCommand) -> tuple[Observation, float, bool]: ...


class ScreenshotCapable(Protocol):
    """Optional environment extension: deterministic page screenshots with retry."""

    def capture_screenshot(self, step_index: int, max_attempts: int) -> ScreenshotRecord: ...


@dataclass(frozen=True)
class MdpConfig:
    """Discount and truncation horizon for rollouts."""

    gamma: float = 0.9
    step_budget: int = 25

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.step_budget < 1:
            raise ValueError(f"step_budget must be >= 1, got {self.step_budget}")


def discounted_return(rewards: list[float], gamma: float) -> float:
    """Sum of gamma^t * rewards[t]; the empty list returns 0."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    total = 0.0
    weight = 1.0
    for r in rewards:
        total += weight * r
        weight *= gamma
    return total


Policy = Callable[[Observation], ActionCommand]


@dataclass
class RolloutResult:
    """Transitions taken during one rollout plus how it ended."""

    transitions: list[tuple[ActionCommand, float]] = field(default_factory=list)
    done: bool = False
    env_error: str | None = None

    @property
    def rewards(self) -> list[float]:
        return [r for _, r in self.transitions]


def rollout(
    env: WebEnvironment,
    policy: Policy,
    cfg: MdpConfig,
    initial: Observation | None = None,
) -> RolloutResult:
    """Drive a freshly reset environment with ``policy`` for at most ``cfg.step_budget`` steps.

    ``initial`` is the observation the reset produced; environments exposing
    ``current_observation()`` may omit it. Stops early when the environment
    reports done. An environment error mid-rollout yields the partial result
    with ``env_error`` set instead of raising.
    """
    result = RolloutResult()
    observation = initial
    if observation is None and hasattr(env, "current_observation"):
        observation = env.current_observation()
    if observation is None:
        raise ValueError("rollout needs the reset observation (pass initial=)")
    for _ in range(cfg.step_budget):
        try:
            action = policy(observation)
            observation, reward, done = env.step(action)
        except WebEnvError as exc:
            result.env_error = str(exc)
            return result
        result.transitions.append((action, reward))
        if done:
            result.done = True
            break
    return result
