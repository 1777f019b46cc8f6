"""Distill raw HTML into a compact, planner-friendly textual observation.

Raw page markup is too large and noisy for a chat-model planner, so this
module keeps only what the agent can act on: interactive elements with stable
refs, plus deduplicated visible text. Parsing is lenient and total — malformed
input never raises.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from html.parser import HTMLParser

# Tags that are interactive by nature, mapped to the element kind they expose.
_TAG_KINDS = {
    "a": "link",
    "button": "button",
    "input": "textbox",
    "textarea": "textbox",
    "select": "select",
}

# Content under these tags never reaches the distilled output.
_DROP_CONTENT = {"script", "style", "template", "noscript"}

# Tags whose boundaries delimit a visible-text block.
_BLOCK_TAGS = {
    "address", "article", "aside", "blockquote", "body", "br", "div", "dl", "dd", "dt",
    "fieldset", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr",
    "li", "main", "nav", "ol", "p", "pre", "section", "table", "td", "th", "tr", "ul",
}

# Elements that never get a closing tag.
_VOID_TAGS = {"input", "br", "hr", "img", "meta", "link", "area", "base", "col", "embed",
              "source", "track", "wbr"}


@dataclass(frozen=True)
class DistilledDom:
    """Compact page representation: actionable elements plus salient text.

    ``distilled_bytes`` counts retained content (visible text plus explicit id
    refs), so it is bounded by ``source_bytes``.
    """

    interactive_elements: list[tuple[str, str, str]]
    visible_text: str
    source_bytes: int
    distilled_bytes: int


@dataclass
class _Pending:
    """An interactive element seen at its start tag, label resolved at close."""

    ref: str
    kind: str
    attr_label: str
    text_parts: list[str] = field(default_factory=list)
    closed: bool = False

    @property
    def label(self) -> str:
        return self.attr_label or _collapse(" ".join(self.text_parts))


class _Distiller(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.found: list[_Pending] = []  # document (start-tag) order
        self.blocks: list[str] = []
        self.retained_ref_bytes = 0
        self._current: list[str] = []
        self._open: list[tuple[str, _Pending | None]] = []
        self._drop_depth = 0
        self._seen_ids: Counter[str] = Counter()
        self._auto_index = 0

    def _assign_ref(self, attrs: dict[str, str | None]) -> str:
        explicit = attrs.get("id")
        if explicit:
            self.retained_ref_bytes += len(explicit.encode())
            self._seen_ids[explicit] += 1
            n = self._seen_ids[explicit]
            return explicit if n == 1 else f"{explicit}~{n}"
        ref = f"el-{self._auto_index}"
        self._auto_index += 1
        return ref

    @staticmethod
    def _element_kind(tag: str, attrs: dict[str, str | None]) -> str | None:
        if tag in _TAG_KINDS:
            return _TAG_KINDS[tag]
        role = attrs.get("role")
        if role:
            return role
        if attrs.get("id"):
            return "node"
        return None

    @staticmethod
    def _attr_label(attrs: dict[str, str | None]) -> str:
        for key in ("aria-label", "placeholder", "name", "value", "title"):
            value = attrs.get(key)
            if value:
                return value
        return ""

    def _register(self, tag: str, attrs: list[tuple[str, str | None]]) -> _Pending | None:
        attr_map = dict(attrs)
        kind = self._element_kind(tag, attr_map)
        if kind is None:
            return None
        pending = _Pending(self._assign_ref(attr_map), kind, self._attr_label(attr_map))
        self.found.append(pending)
        return pending

    def _flush_block(self) -> None:
        text = _collapse(" ".join(self._current))
        self._current.clear()
        if text:
            self.blocks.append(text)

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        if tag in _DROP_CONTENT:
            self._drop_depth += 1
            return
        if self._drop_depth:
            return
        if tag in _BLOCK_TAGS:
            self._flush_block()
        pending = self._register(tag, attrs)
        if tag in _VOID_TAGS:
            if pending is not None:
                pending.closed = True
        else:
            self._open.append((tag, pending))

    def handle_startendtag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        if tag in _DROP_CONTENT or self._drop_depth:
            return
        if tag in _BLOCK_TAGS:
            self._flush_block()
        pending = self._register(tag, attrs)
        if pending is not None:
            pending.closed = True

    def handle_endtag(self, tag: str) -> None:
        if tag in _DROP_CONTENT:
            self._drop_depth = max(0, self._drop_depth - 1)
            return
        if self._drop_depth:
            return
        if tag in _BLOCK_TAGS:
            self._flush_block()
        for i in range(len(self._open) - 1, -1, -1):
            if self._open[i][0] == tag:
                for _, pending in self._open[i:]:
                    if pending is not None:
                        pending.closed = True
                del self._open[i:]
                break

    def handle_data(self, data: str) -> None:
        if self._drop_depth or not data.strip():
            return
        self._current.append(data)
        for _, pending in self._open:
            if pending is not None and not pending.closed:
                pending.text_parts.append(data)

    def finish(self) -> None:
        self._flush_block()
        self._open.clear()


def _collapse(text: str) -> str:
    return " ".join(text.split())


def distill(html: str) -> DistilledDom:
    """Reduce raw HTML to interactive elements and deduplicated visible text.

    Anchors, buttons, inputs, selects, and anything with an explicit id or role
    survive with stable refs (the id attribute when present, else a positional
    index). Script, style, and comment content is removed, and text blocks
    repeated verbatim three or more times are dropped as boilerplate.
    """
    parser = _Distiller()
    try:
        parser.feed(html)
        parser.close()
    except Exception:
        pass  # lenient: keep whatever was recovered before the parser choked
    parser.finish()

    counts = Counter(parser.blocks)
    kept = [block for block in parser.blocks if counts[block] < 3]
    visible_text = "\n".join(kept)

    source_bytes = len(html.encode())
    distilled_bytes = len(visible_text.encode()) + parser.retained_ref_bytes
    return DistilledDom(
        interactive_elements=[(p.ref, p.kind, p.label) for p in parser.found],
        visible_text=visible_text,
        source_bytes=source_bytes,
        distilled_bytes=distilled_bytes,
    )


def format_observation(d: DistilledDom, url: str, title: str) -> str:
    """Render a distilled page as the deterministic text observation fed to agents."""
    lines = [f"URL: {url}", f"Title: {title}"]
    if d.interactive_elements:
        lines.append("")
        lines.append("Interactive elements:")
        for i, (ref, kind, label) in enumerate(d.interactive_elements, start=1):
            lines.append(f"  {i}. [{ref}] {kind}: {label}")
    if d.visible_text:
        lines.append("")
        lines.append("Page text:")
        lines.append(d.visible_text)
    return "\n".join(lines)
