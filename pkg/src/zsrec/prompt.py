"""Prompt templates: "<m1>, ..., <mn>, <mi>" and friends.

A rendered prompt is split into the part that depends only on the user's
context (`prefix_text`) and the candidate continuation, so that scorers
can reuse the prefix across the five candidates of a user.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, replace
from typing import IO, Sequence

from .dataset import STREAM_SHUFFLE, user_rng

CONTEXT_SLOT = "<m1..mn>"
CANDIDATE_SLOT = "<mi>"


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    prefix_literal: str = ""
    item_separator: str = ", "
    candidate_separator: str = ", "
    suffix_literal: str = ""

    def render(self, context_titles: Sequence[str], candidate_title: str) -> "Prompt":
        return render(self, context_titles, candidate_title)


@dataclass(frozen=True)
class Prompt:
    prefix_text: str
    full_text: str
    candidate_item: int | None = None

    @property
    def continuation_text(self) -> str:
        return self.full_text[len(self.prefix_text):]


ENUM = PromptTemplate("ENUM")
MOVIES_LIKE = PromptTemplate("MOVIES_LIKE", prefix_literal="Movies like ")
SIMILAR_TO = PromptTemplate("SIMILAR_TO", prefix_literal="Movies similar to ")
IF_YOU_LIKE = PromptTemplate(
    "IF_YOU_LIKE", prefix_literal="if you like ", candidate_separator=", you will like "
)
AND_ENUM = PromptTemplate("AND_ENUM", candidate_separator=" and ")


def builtin_templates() -> list[PromptTemplate]:
    return [ENUM, MOVIES_LIKE, SIMILAR_TO, IF_YOU_LIKE, AND_ENUM]


def get_template(name: str, extra: Sequence[PromptTemplate] = ()) -> PromptTemplate:
    for t in list(extra) + builtin_templates():
        if t.name.lower() == name.lower():
            return t
    raise TemplateError(f"unknown template {name!r}")


def render(
    template: PromptTemplate,
    context_titles: Sequence[str],
    candidate_title: str,
    candidate_item: int | None = None,
) -> Prompt:
    if not candidate_title.strip():
        raise TemplateError("candidate title is empty")
    if context_titles:
        prefix = template.prefix_literal + template.item_separator.join(context_titles)
        continuation = template.candidate_separator + candidate_title
    else:
        # n = 0: keep the literal, drop the separator it would have needed
        prefix = template.prefix_literal.rstrip()
        continuation = (" " if prefix else "") + candidate_title
    full = (prefix + continuation + template.suffix_literal).rstrip()
    return Prompt(prefix, full, candidate_item)


def shuffle_context(context_items: Sequence[int], seed: int, user_id: int) -> list[int]:
    """Seeded per-user order, shared by all candidates of that user."""
    items = list(context_items)
    if not items:
        return items
    perm = user_rng(seed, user_id, STREAM_SHUFFLE).permutation(len(items))
    return [items[int(k)] for k in perm]


_LINE_RE = re.compile(r"^\s*([A-Za-z_][\w-]*)(?:\.(item_separator|candidate_separator))?\s*=\s*(.+?)\s*$")


def parse_template_spec(text: str) -> list[PromptTemplate]:
    """Read templates written as `name = "literal <m1..mn> literal <mi>"`.

    `name.item_separator = " and "` overrides the separator between context
    items. Lines starting with `#` are comments.
    """
    bodies: dict[str, str] = {}
    overrides: dict[str, dict[str, str]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise TemplateError(f"line {line_no}: cannot parse {line!r}")
        name, key, raw = m.groups()
        try:
            value = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            raise TemplateError(f"line {line_no}: value must be a quoted string") from None
        if not isinstance(value, str):
            raise TemplateError(f"line {line_no}: value must be a quoted string")
        if key:
            overrides.setdefault(name, {})[key] = value
        else:
            bodies[name] = value
    templates = []
    for name, body in bodies.items():
        if body.count(CONTEXT_SLOT) != 1 or body.count(CANDIDATE_SLOT) != 1:
            raise TemplateError(f"{name}: need exactly one {CONTEXT_SLOT} and one {CANDIDATE_SLOT}")
        head, rest = body.split(CONTEXT_SLOT)
        if CANDIDATE_SLOT not in rest:
            raise TemplateError(f"{name}: {CANDIDATE_SLOT} must follow {CONTEXT_SLOT}")
        cand_sep, suffix = rest.split(CANDIDATE_SLOT)
        t = PromptTemplate(name, head, ", ", cand_sep, suffix)
        templates.append(replace(t, **overrides.get(name, {})))
    unknown = set(overrides) - set(bodies)
    if unknown:
        raise TemplateError(f"separator overrides for undefined templates: {sorted(unknown)}")
    return templates


def load_templates(fh: IO[str]) -> list[PromptTemplate]:
    return parse_template_spec(fh.read())
