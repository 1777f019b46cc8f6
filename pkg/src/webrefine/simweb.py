"""Deterministic scripted-website environment for hermetic runs.

A site is a small declarative JSON script: pages, interactive elements with
transition rules, a success predicate, and a scripted screenshot-failure plan.
Same script plus same action sequence always reproduces the same trajectory,
down to the PNG bytes, so flaky-capture handling and refinement behavior are
testable in CI.
"""

from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass, field

from PIL import Image, ImageDraw

from .distill import distill, format_observation
from .mdp import WebEnvError
from .model import ActionCommand, ActionKind, Observation, ScreenshotRecord, Task

ELEMENT_KINDS = ("link", "button", "textbox", "widget")


class SiteScriptError(ValueError):
    """Malformed site script: syntax (with line/column) or dangling reference."""


@dataclass(frozen=True)
class TransitionRule:
    """Go to ``target`` — unconditionally, or only when a tracked element holds ``equals``."""

    target: str
    if_element: str | None = None
    equals: str | None = None


@dataclass(frozen=True)
class ElementSpec:
    id: str
    kind: str
    label: str
    click: list[TransitionRule] = field(default_factory=list)
    on_enter: list[TransitionRule] = field(default_factory=list)
    states: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class PageSpec:
    title: str
    text: str
    elements: list[ElementSpec]


@dataclass(frozen=True)
class SuccessPredicate:
    """Conjunction over the current page, typed form values, and widget states."""

    page: str | None = None
    form: dict[str, str] = field(default_factory=dict)
    widget: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SiteScript:
    site_name: str
    pages: dict[str, PageSpec]
    initial_page: str
    success: SuccessPredicate
    failure_plan: dict[int, int]  # step_index -> scripted failing attempts

    @property
    def url_slug(self) -> str:
        slug = re.sub(r"[^a-z0-9]+", "-", self.site_name.lower()).strip("-")
        return slug or "site"

    def page_url(self, page_id: str) -> str:
        return f"https://{self.url_slug}.sim/{page_id}"


@dataclass
class SimState:
    """Mutable simulator state: where we are and what the user has entered."""

    current_page: str
    form_state: dict[str, str] = field(default_factory=dict)
    widget_state: dict[str, str] = field(default_factory=dict)
    step_count: int = 0


# -- script loading ----------------------------------------------------------------


def _parse_rules(raw, where: str) -> list[TransitionRule]:
    if raw is None:
        return []
    if isinstance(raw, str):
        return [TransitionRule(target=raw)]
    rules = []
    for item in raw:
        if isinstance(item, str):
            rules.append(TransitionRule(target=item))
            continue
        if "target" not in item:
            raise SiteScriptError(f"{where}: transition rule missing 'target'")
        if item.get("if_element") is not None and item.get("equals") is None:
            raise SiteScriptError(f"{where}: conditional rule needs 'equals'")
        rules.append(
            TransitionRule(
                target=item["target"],
                if_element=item.get("if_element"),
                equals=item.get("equals"),
            )
        )
    return rules


def load_site(script_text: str) -> SiteScript:
    """Parse and invariant-check a site script.

    Syntax errors report line and column; semantic errors name the dangling
    page or element reference.
    """
    try:
        raw = json.loads(script_text)
    except json.JSONDecodeError as exc:
        raise SiteScriptError(
            f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc

    site_name = raw.get("site_name")
    if not site_name:
        raise SiteScriptError("site_name is required")
    raw_pages = raw.get("pages")
    if not raw_pages:
        raise SiteScriptError("at least one page is required")

    pages: dict[str, PageSpec] = {}
    initial: list[str] = []
    for page_id, spec in raw_pages.items():
        if spec.get("initial"):
            initial.append(page_id)
        elements = []
        seen_ids: set[str] = set()
        for el in spec.get("elements", []):
            el_id = el.get("id")
            kind = el.get("kind")
            if not el_id:
                raise SiteScriptError(f"page {page_id!r}: element without id")
            if el_id in seen_ids:
                raise SiteScriptError(f"page {page_id!r}: duplicate element id {el_id!r}")
            seen_ids.add(el_id)
            if kind not in ELEMENT_KINDS:
                raise SiteScriptError(f"element {el_id!r}: unknown kind {kind!r}")
            states = list(el.get("states", []))
            if kind == "widget" and not states:
                raise SiteScriptError(f"widget {el_id!r}: needs at least one state")
            if kind != "widget" and states:
                raise SiteScriptError(f"element {el_id!r}: only widgets carry states")
            where = f"element {el_id!r}"
            elements.append(
                ElementSpec(
                    id=el_id,
                    kind=kind,
                    label=el.get("label", el_id),
                    click=_parse_rules(el.get("goto"), where),
                    on_enter=_parse_rules(el.get("on_enter"), where),
                )
                if kind != "widget"
                else ElementSpec(id=el_id, kind=kind, label=el.get("label", el_id), states=states)
            )
        pages[page_id] = PageSpec(
            title=spec.get("title", page_id),
            text=spec.get("text", ""),
            elements=elements,
        )

    if len(initial) != 1:
        raise SiteScriptError(f"exactly one page must be marked initial, found {len(initial)}")

    all_elements = {el.id for page in pages.values() for el in page.elements}
    for page_id, page in pages.items():
        for el in page.elements:
            for rule in el.click + el.on_enter:
                if rule.target not in pages:
                    raise SiteScriptError(
                        f"element {el.id!r} on page {page_id!r} targets "
                        f"undeclared page {rule.target!r}"
                    )
                if rule.if_element is not None and rule.if_element not in all_elements:
                    raise SiteScriptError(
                        f"element {el.id!r}: condition references "
                        f"undeclared element {rule.if_element!r}"
                    )

    raw_pred = raw.get("success_predicate", {}) or {}
    pred = SuccessPredicate(
        page=raw_pred.get("page"),
        form=dict(raw_pred.get("form", {})),
        widget=dict(raw_pred.get("widget", {})),
    )
    if pred.page is not None and pred.page not in pages:
        raise SiteScriptError(f"success predicate names undeclared page {pred.page!r}")
    for el_id in list(pred.form) + list(pred.widget):
        if el_id not in all_elements:
            raise SiteScriptError(f"success predicate names undeclared element {el_id!r}")

    failure_plan: dict[int, int] = {}
    for entry in raw.get("screenshot_failure_plan", []):
        failure_plan[int(entry["step_index"])] = int(entry["failing_attempts"])

    return SiteScript(
        site_name=site_name,
        pages=pages,
        initial_page=initial[0],
        success=pred,
        failure_plan=failure_plan,
    )


def load_site_file(path: str) -> SiteScript:
    with open(path, encoding="utf-8") as handle:
        return load_site(handle.read())


# -- rendering ---------------------------------------------------------------------

_NOISE_SLOTS = ("header", "sidebar", "footer")


def _noise_text(script: SiteScript) -> str:
    return (
        f"{script.site_name} — your trusted destination. Subscribe to our newsletter "
        "for exclusive offers. All rights reserved. Terms and privacy apply."
    )


def render_dom(state: SimState, script: SiteScript) -> str:
    """Deterministic raw HTML for the current page, noise blocks included.

    The same state always renders byte-identical markup; the boilerplate noise
    repeats verbatim so distillation has something real to strip.
    """
    page = script.pages[state.current_page]
    noise = _noise_text(script)
    parts = [
        "<!DOCTYPE html>",
        "<html>",
        f"<head><title>{page.title}</title>",
        "<style>body{font-family:sans-serif;margin:0}.noise{color:#888;padding:4px}</style>",
        "<script>window.__telemetry = {loaded: true, ts: 0}; function noop() { return 0; }</script>",
        "</head>",
        "<body>",
        f'<header><div class="noise">{noise}</div></header>',
        "<main>",
        f"<h1>{page.title}</h1>",
    ]
    if page.text:
        parts.append(f"<p>{page.text}</p>")
    for el in page.elements:
        if el.kind == "link":
            target = el.click[0].target if el.click else state.current_page
            parts.append(f'<a id="{el.id}" href="#{target}">{el.label}</a>')
        elif el.kind == "button":
            parts.append(f'<button id="{el.id}">{el.label}</button>')
        elif el.kind == "textbox":
            value = state.form_state.get(el.id, "")
            parts.append(f'<input id="{el.id}" type="text" aria-label="{el.label}" value="{value}">')
        else:  # widget
            current = state.widget_state.get(el.id, el.states[0])
            parts.append(
                f'<div id="{el.id}" role="widget" aria-label="{el.label}">'
                f"{el.label} (state: {current})</div>"
            )
    parts += [
        "</main>",
        f'<aside><div class="noise">{noise}</div></aside>',
        f'<footer><div class="noise">{noise}</div></footer>',
        "</body>",
        "</html>",
    ]
    return "\n".join(parts)


def render_png(state: SimState, script: SiteScript) -> bytes:
    """Deterministic page screenshot: title bar plus one row per element."""
    page = script.pages[state.current_page]
    img = Image.new("RGB", (480, 40 + 28 * max(1, len(page.elements)) + 16), "white")
    draw = ImageDraw.Draw(img)
    draw.rectangle([0, 0, 479, 28], fill=(40, 80, 160))
    draw.text((8, 8), page.title, fill="white")
    y = 40
    for el in page.elements:
        if el.kind == "textbox":
            caption = f"{el.label}: [{state.form_state.get(el.id, '')}]"
        elif el.kind == "widget":
            caption = f"{el.label}: <{state.widget_state.get(el.id, el.states[0])}>"
        else:
            caption = el.label
        draw.rectangle([8, y, 471, y + 22], outline=(120, 120, 120))
        draw.text((14, y + 5), caption, fill="black")
        y += 28
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def capture_screenshot(
    state: SimState, script: SiteScript, step_index: int, max_attempts: int
) -> ScreenshotRecord:
    """Capture with scripted flakiness: the failure plan fixes how many attempts fail.

    If every attempt up to ``max_attempts`` fails, the record comes back with
    ``captured=False`` instead of raising.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    failing = script.failure_plan.get(step_index, 0)
    if failing >= max_attempts:
        return ScreenshotRecord(
            step_index=step_index, image=b"", attempts_used=max_attempts, captured=False
        )
    return ScreenshotRecord(
        step_index=step_index,
        image=render_png(state, script),
        attempts_used=failing + 1,
        captured=True,
    )


# -- environment -------------------------------------------------------------------


class SimWebEnvironment:
    """WebEnvironment over a site script: deterministic transitions, sparse reward.

    Reward is 0 per step and 1.0 when the agent stops in a state satisfying the
    script's success predicate. Failed actions (clicking a missing element) are
    reported in-band in the observation and never end the episode.
    """

    def __init__(self, script: SiteScript) -> None:
        self.script = script
        self._state: SimState | None = None
        self._done = False

    # internal ------------------------------------------------------------------

    def _require_state(self) -> SimState:
        if self._state is None:
            raise WebEnvError("environment not reset")
        return self._state

    def _page(self):
        return self.script.pages[self._require_state().current_page]

    def _find(self, ref: str) -> ElementSpec | None:
        for el in self._page().elements:
            if el.id == ref:
                return el
        return None

    def _condition_value(self, element_id: str) -> str:
        state = self._require_state()
        if element_id in state.form_state:
            return state.form_state[element_id]
        return state.widget_state.get(element_id, "")

    def _apply_rules(self, rules: list[TransitionRule]) -> str | None:
        for rule in rules:
            if rule.if_element is None or self._condition_value(rule.if_element) == rule.equals:
                return rule.target
        return None

    def _observe(self, status: str = "") -> Observation:
        state = self._require_state()
        page = self.script.pages[state.current_page]
        body = format_observation(
            distill(render_dom(state, self.script)),
            url=self.script.page_url(state.current_page),
            title=page.title,
        )
        return Observation(
            url=self.script.page_url(state.current_page),
            title=page.title,
            distilled_dom=f"{status}\n{body}" if status else body,
        )

    # WebEnvironment contract -----------------------------------------------------

    def reset(self, task: Task) -> Observation:
        state = SimState(current_page=self.script.initial_page)
        for page in self.script.pages.values():
            for el in page.elements:
                if el.kind == "widget":
                    state.widget_state[el.id] = el.states[0]
        self._state = state
        self._done = False
        return self._observe()

    def step(self, action: ActionCommand) -> tuple[Observation, float, bool]:
        if self._done:
            raise WebEnvError("episode is done; reset before stepping again")
        state = self._require_state()
        state.step_count += 1

        if action.kind is ActionKind.STOP:
            self._done = True
            reward = 1.0 if self.success() else 0.0
            return self._observe("[stopped]"), reward, True

        if action.kind is ActionKind.PRESS_ENTER:
            for el in self._page().elements:
                if el.kind == "textbox" and el.on_enter:
                    target = self._apply_rules(el.on_enter)
                    if target is not None:
                        state.current_page = target
                        return self._observe("[pressed enter]"), 0.0, False
            return self._observe("[pressed enter: no effect]"), 0.0, False

        if action.kind is ActionKind.SCROLL:
            direction = action.text or "down"
            return self._observe(f"[scrolled {direction}]"), 0.0, False

        if action.kind is ActionKind.NAVIGATE:
            page_id = action.ref.rstrip("/").rsplit("/", 1)[-1]
            if page_id in self.script.pages:
                state.current_page = page_id
                return self._observe(f"[navigated to {page_id}]"), 0.0, False
            return self._observe(f"[action failed: unknown page '{action.ref}']"), 0.0, False

        element = self._find(action.ref)
        if element is None:
            return (
                self._observe(f"[action failed: no such element '{action.ref}']"),
                0.0,
                False,
            )

        if action.kind is ActionKind.CLICK:
            if element.kind == "widget":
                states = element.states
                current = state.widget_state.get(element.id, states[0])
                nxt = states[(states.index(current) + 1) % len(states)]
                state.widget_state[element.id] = nxt
                return self._observe(f"[set {element.id} to '{nxt}']"), 0.0, False
            if element.kind == "textbox":
                return self._observe(f"[focused {element.id}]"), 0.0, False
            target = self._apply_rules(element.click)
            if target is not None:
                state.current_page = target
                return self._observe(f"[clicked {element.id}]"), 0.0, False
            return self._observe(f"[clicked {element.id}: no effect]"), 0.0, False

        if action.kind is ActionKind.TYPE:
            if element.kind != "textbox":
                return (
                    self._observe(f"[action failed: {element.id} is not a textbox]"),
                    0.0,
                    False,
                )
            state.form_state[element.id] = action.text
            return self._observe(f"[typed into {element.id}]"), 0.0, False

        if action.kind is ActionKind.READ_TEXT:
            if element.kind == "widget":
                value = state.widget_state.get(element.id, element.states[0])
            elif element.kind == "textbox":
                value = state.form_state.get(element.id, "")
            else:
                value = element.label
            return self._observe(f"[read {element.id}: {value}]"), 0.0, False

        raise WebEnvError(f"unhandled action kind {action.kind}")  # pragma: no cover

    # extensions used by the agent/harness ---------------------------------------

    def current_observation(self) -> Observation:
        return self._observe()

    def capture_screenshot(self, step_index: int, max_attempts: int) -> ScreenshotRecord:
        return capture_screenshot(self._require_state(), self.script, step_index, max_attempts)

    def success(self) -> bool:
        """Ground-truth success: does the current state satisfy the script predicate?"""
        state = self._require_state()
        pred = self.script.success
        if pred.page is not None and state.current_page != pred.page:
            return False
        for el_id, expected in pred.form.items():
            if state.form_state.get(el_id, "") != expected:
                return False
        for el_id, expected in pred.widget.items():
            if state.widget_state.get(el_id, "") != expected:
                return False
        return True


class RemoteStubEnvironment:
    """Extension point for a real-browser driver; not wired in this artifact."""

    def reset(self, task: Task) -> Observation:
        raise WebEnvError("remote browser driver is a documented extension point; not implemented")

    def step(self, action: ActionCommand) -> tuple[Observation, float, bool]:
        raise WebEnvError("remote browser driver is a documented extension point; not implemented")
