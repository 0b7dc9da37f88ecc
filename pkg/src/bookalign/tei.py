"""Selector-driven region extraction from TEI-style digital editions.

A corpus is described by a rule set (one YAML file per corpus): a page-break
pattern, an optional column-break pattern, an ordered list of region selector
rules, and a list of editorial element names to drop. Parsing walks the text
root in document order, splits the stream at page/column breaks, routes text
into the innermost matching region, and emits one PageRecord per page-break
milestone.

The path-pattern language is a small XPath subset sufficient for the corpus
conventions: descendant anchor (``//fw``), child steps (``//notes/note``),
a wildcard final step with name exclusions (``//figure/*`` except figDesc),
a trailing attribute extraction (``//pb/@n``), and attribute predicates
(equality and prefix tests).
"""

from __future__ import annotations

import enum
import re
import unicodedata
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import yaml

XML_ID = "{http://www.w3.org/XML/1998/namespace}id"

_WS = re.compile(r"\s+")


def collapse_ws(s: str) -> str:
    return _WS.sub(" ", s).strip()


class RegionType(enum.Enum):
    BODY = "body"
    CAPTION = "caption"
    CATCHWORD = "catchword"
    COL_HEAD = "colHead"
    FIGURE = "figure"
    NOTE = "note"
    PAGE_NUM = "pageNum"
    SIGNATURE = "signature"
    TITLE = "title"


REGION_TYPES = [t.value for t in RegionType]

# class ids for label grids: 0 is background, then enumeration order
CLASS_IDS = {t: i + 1 for i, t in enumerate(RegionType)}


class EditionParseError(Exception):
    """Malformed XML; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class RuleSetError(Exception):
    """Invalid selector rule set configuration."""


@dataclass(frozen=True)
class AttrPredicate:
    name: str
    op: str  # eq | ne | prefix | not-prefix
    value: str

    def matches(self, attrs) -> bool:
        v = attrs.get(self.name)
        if self.op == "eq":
            return v == self.value
        if self.op == "ne":
            return v != self.value
        if self.op == "prefix":
            return v is not None and v.startswith(self.value)
        if self.op == "not-prefix":
            return v is None or not v.startswith(self.value)
        raise RuleSetError(f"unknown predicate op {self.op!r}")


@dataclass(frozen=True)
class PathPattern:
    """``//a/b/c`` or ``//a/*`` with optional ``/@attr`` extraction."""

    steps: tuple[str, ...]
    attr: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "PathPattern":
        s = text.strip()
        if not s.startswith("//"):
            raise RuleSetError(f"path pattern must start with '//': {text!r}")
        parts = s[2:].split("/")
        attr = None
        if parts and parts[-1].startswith("@"):
            attr = parts.pop()[1:]
        if not parts or any(not p for p in parts):
            raise RuleSetError(f"empty step in path pattern: {text!r}")
        for p in parts[:-1]:
            if p == "*":
                raise RuleSetError(f"wildcard only allowed as final step: {text!r}")
        return cls(tuple(parts), attr)

    def matches(self, name_stack: list[str], exclude: frozenset[str] = frozenset()) -> bool:
        k = len(self.steps)
        if len(name_stack) < k:
            return False
        tail = name_stack[-k:]
        for step, name in zip(self.steps, tail):
            if step == "*":
                if name in exclude:
                    return False
            elif step != name:
                return False
        return True


@dataclass(frozen=True)
class SelectorRule:
    region_type: RegionType
    pattern: PathPattern
    predicates: tuple[AttrPredicate, ...] = ()
    exclude: frozenset[str] = frozenset()

    def matches(self, name_stack: list[str], attrs) -> bool:
        return (self.pattern.matches(name_stack, self.exclude)
                and all(p.matches(attrs) for p in self.predicates))


@dataclass(frozen=True)
class SelectorRuleSet:
    corpus_id: str
    rules: tuple[SelectorRule, ...]
    page_break: PathPattern
    column_break: Optional[PathPattern] = None
    note_resolution: str = "inline"  # inline | linked-idref
    note_ref_attr: str = "target"
    drop: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.note_resolution not in ("inline", "linked-idref"):
            raise RuleSetError(f"bad note-resolution {self.note_resolution!r}")
        counts: dict[RegionType, int] = {}
        for r in self.rules:
            counts[r.region_type] = counts.get(r.region_type, 0) + 1
        for t, n in counts.items():
            if n > 1:
                raise RuleSetError(f"more than one rule for region type {t.value!r}")


def _parse_predicates(entries) -> tuple[AttrPredicate, ...]:
    preds = []
    for e in entries or []:
        name = e.get("attr")
        if not name:
            raise RuleSetError(f"predicate missing 'attr': {e!r}")
        ops = [k for k in ("equals", "not-equals", "prefix", "not-prefix") if k in e]
        if len(ops) != 1:
            raise RuleSetError(f"predicate needs exactly one operator: {e!r}")
        op = {"equals": "eq", "not-equals": "ne",
              "prefix": "prefix", "not-prefix": "not-prefix"}[ops[0]]
        preds.append(AttrPredicate(name, op, str(e[ops[0]])))
    return tuple(preds)


def rule_set_from_dict(doc: dict) -> SelectorRuleSet:
    try:
        corpus = doc["corpus"]
        page_break = doc["page-break"]
    except KeyError as e:
        raise RuleSetError(f"rule set missing mandatory key {e.args[0]!r}") from None
    rules = []
    for entry in doc.get("rules", []):
        tname = entry.get("type")
        try:
            rtype = RegionType(tname)
        except ValueError:
            raise RuleSetError(f"unknown region type {tname!r}") from None
        rules.append(SelectorRule(
            region_type=rtype,
            pattern=PathPattern.parse(entry["path"]),
            predicates=_parse_predicates(entry.get("where")),
            exclude=frozenset(entry.get("except", [])),
        ))
    cb = doc.get("column-break")
    return SelectorRuleSet(
        corpus_id=str(corpus),
        rules=tuple(rules),
        page_break=PathPattern.parse(page_break),
        column_break=PathPattern.parse(cb) if cb else None,
        note_resolution=doc.get("note-resolution", "inline"),
        note_ref_attr=doc.get("note-ref-attribute", "target"),
        drop=frozenset(doc.get("drop", [])),
    )


def load_rule_set(name_or_path: str) -> SelectorRuleSet:
    """Load a rule set from a YAML path, or a bundled corpus name (dta/tcp/wwo)."""
    try:
        ref = resources.files("bookalign").joinpath(f"rulesets/{name_or_path}.yaml")
        if ref.is_file():
            return rule_set_from_dict(yaml.safe_load(ref.read_text()))
    except (OSError, TypeError, ValueError):
        pass
    with open(name_or_path, "r", encoding="utf-8") as fh:
        return rule_set_from_dict(yaml.safe_load(fh))


# ---------------------------------------------------------------------------
# page records


@dataclass
class RegionTranscript:
    region_type: RegionType
    text: str
    reading_order: int
    run_on: bool = False
    source_path: str = ""

    def to_json(self) -> dict:
        return {"type": self.region_type.value, "text": self.text,
                "order": self.reading_order, "run_on": self.run_on,
                "source": self.source_path}

    @classmethod
    def from_json(cls, d: dict) -> "RegionTranscript":
        return cls(RegionType(d["type"]), d["text"], d["order"],
                   d.get("run_on", False), d.get("source", ""))


@dataclass
class PageRecord:
    edition_id: str
    page_index: int
    label: Optional[str] = None
    label_inferred: bool = False
    image: Optional[str] = None
    regions: list[RegionTranscript] = field(default_factory=list)
    heads: list[str] = field(default_factory=list)
    line_breaks: int = 0

    def to_json(self) -> dict:
        return {
            "edition": self.edition_id,
            "page_index": self.page_index,
            "label": self.label,
            "label_inferred": self.label_inferred,
            "image": self.image,
            "line_breaks": self.line_breaks,
            "heads": self.heads,
            "regions": [r.to_json() for r in self.regions],
        }

    @classmethod
    def from_json(cls, d: dict) -> "PageRecord":
        return cls(
            edition_id=d.get("edition", ""),
            page_index=d["page_index"],
            label=d.get("label"),
            label_inferred=d.get("label_inferred", False),
            image=d.get("image"),
            regions=[RegionTranscript.from_json(r) for r in d.get("regions", [])],
            heads=list(d.get("heads", [])),
            line_breaks=d.get("line_breaks", 0),
        )


def extract_page_label(attrs) -> tuple[Optional[str], bool]:
    """Printed page label from page-break attributes.

    Bracketed values like ``[17]`` are editorially inferred numbers: the label
    is returned unbracketed and flagged so no pageNum region is generated.
    """
    n = attrs.get("n")
    if n is None:
        return None, False
    n = n.strip()
    if n.startswith("["):
        return n.strip("[]"), True
    return n, False


# ---------------------------------------------------------------------------
# document walk


def _localname(tag) -> str:
    if isinstance(tag, str):
        return tag.rsplit("}", 1)[-1]
    return ""  # comments / processing instructions


class _Frame:
    """An open float region accumulating text (note, fw, figure child...)."""

    __slots__ = ("region_type", "source_path", "parts", "slot", "linked", "note_id")

    def __init__(self, region_type: RegionType, source_path: str, slot: dict,
                 linked: bool = False, note_id: str | None = None):
        self.region_type = region_type
        self.source_path = source_path
        self.parts: list[str] = []
        self.slot = slot  # page float slot currently bound to this frame
        self.linked = linked
        self.note_id = note_id


class _Walker:
    def __init__(self, rules: SelectorRuleSet, edition_id: str, warnings: list[str]):
        self.rules = rules
        self.edition_id = edition_id
        self.warnings = warnings
        self.pages: list[PageRecord] = []
        self.page: PageRecord | None = None
        self.page_source = ""
        self.body_columns: list[list[str]] = [[]]
        self.floats: list[dict] = []
        self.frames: list[_Frame] = []
        self.drop_depth = 0
        self.name_stack: list[str] = []
        self.path_stack: list[str] = []
        self.child_counts: list[dict[str, int]] = [{}]
        self.pre_page_content = False
        # linked-idref note state
        self.pending_notes: list[tuple[str | None, str, str]] = []
        self.note_refs: dict[str, int] = {}

    # -- text routing -------------------------------------------------------

    def _emit_text(self, s: str):
        if self.drop_depth > 0 or not s:
            return
        if self.page is None and s.strip():
            self.pre_page_content = True
        if self.frames:
            self.frames[-1].parts.append(s)
        else:
            self.body_columns[-1].append(s)

    # -- page lifecycle -----------------------------------------------------

    def _flush_page(self):
        """Close the current page: body columns first, then floats in appearance order."""
        if self.page is None:
            return
        for fr in self.frames:
            if not fr.linked:
                self._seal_frame_part(fr)
        regions: list[RegionTranscript] = []
        for col in self.body_columns:
            text = collapse_ws("".join(col))
            if text:
                regions.append(RegionTranscript(RegionType.BODY, text, 0,
                                                source_path=self.page_source))
        for slot in self.floats:
            text = collapse_ws(slot["text"])
            if not text and slot["type"] is not RegionType.FIGURE:
                continue
            regions.append(RegionTranscript(slot["type"], text, 0,
                                            run_on=slot["run_on"],
                                            source_path=slot["source"]))
        for i, r in enumerate(regions):
            r.reading_order = i
        self.page.regions = regions
        self.pages.append(self.page)
        self.page = None

    def _start_page(self, attrs, source_path: str):
        first = self.page is None and not self.pages
        self._flush_page()
        label, inferred = extract_page_label(attrs)
        image = attrs.get("facs") or attrs.get("corresp")
        self.page = PageRecord(self.edition_id, len(self.pages),
                               label=label, label_inferred=inferred, image=image)
        self.page_source = source_path
        if not first:
            # pre-page content (if any) stays in the buffers and lands on page 0
            self.body_columns = [[]]
            self.floats = []
        for fr in self.frames:
            if fr.linked:
                continue
            fr.slot = self._new_slot(fr.region_type, fr.source_path, run_on=True)

    def _new_slot(self, rtype: RegionType, source: str, run_on: bool = False) -> dict:
        slot = {"type": rtype, "text": "", "source": source, "run_on": run_on}
        self.floats.append(slot)
        return slot

    def _seal_frame_part(self, fr: _Frame):
        fr.slot["text"] = "".join(fr.parts)
        fr.parts = []

    # -- element handling ----------------------------------------------------

    def _push_path(self, name: str) -> str:
        counts = self.child_counts[-1]
        counts[name] = counts.get(name, 0) + 1
        path = f"{self.path_stack[-1] if self.path_stack else ''}/{name}[{counts[name]}]"
        self.path_stack.append(path)
        self.child_counts.append({})
        self.name_stack.append(name)
        return path

    def _pop_path(self):
        self.path_stack.pop()
        self.child_counts.pop()
        self.name_stack.pop()

    def _match_rule(self, attrs) -> SelectorRule | None:
        for rule in self.rules.rules:
            if rule.matches(self.name_stack, attrs):
                return rule
        return None

    def visit(self, elem):
        name = _localname(elem.tag)
        if not name:  # comment or PI: only the tail belongs to the document text
            self._emit_text(elem.tail or "")
            return
        path = self._push_path(name)
        attrs = dict(elem.attrib)

        if self.rules.page_break.matches(self.name_stack):
            self._start_page(attrs, path)
            self._emit_milestone_region(attrs, path)
        elif self.rules.column_break is not None \
                and self.rules.column_break.matches(self.name_stack):
            if self.page is not None and "".join(self.body_columns[-1]).strip():
                self.body_columns.append([])
            self._emit_milestone_region(attrs, path)
        elif self.drop_depth > 0 or name in self.rules.drop:
            self.drop_depth += 1
            for child in elem:
                self.visit(child)
            self.drop_depth -= 1
        elif name == "lb":
            self._emit_text("\n")
            if self.page is not None:
                self.page.line_breaks += 1
        else:
            rule = self._match_rule(attrs)
            if rule is not None and rule.pattern.attr is not None:
                self._emit_attr_region(rule, attrs, path)
                self._walk_children(elem)
            elif rule is not None:
                self._open_region(rule, attrs, path, elem)
            else:
                mark = None
                if name == "head" and not self.frames and self.page is not None:
                    col = self.body_columns[-1]
                    mark = (col, sum(len(p) for p in col))
                self._walk_children(elem)
                if mark is not None and self.page is not None \
                        and self.body_columns and self.body_columns[-1] is mark[0]:
                    head = collapse_ws("".join(mark[0])[mark[1]:])
                    if head:
                        self.page.heads.append(head)

        self._pop_path()
        self._emit_text(elem.tail or "")

    def _walk_children(self, elem):
        self._emit_text(elem.text or "")
        for child in elem:
            self.visit(child)

    def _emit_milestone_region(self, attrs, path: str):
        """Page/column breaks may double as attribute regions (pageNum, colHead)."""
        rule = self._match_rule(attrs)
        if rule is not None and rule.pattern.attr is not None:
            self._emit_attr_region(rule, attrs, path)

    def _emit_attr_region(self, rule: SelectorRule, attrs, path: str):
        if self.page is None:
            return
        value = attrs.get(rule.pattern.attr)
        if value is None or not value.strip():
            return
        self._new_slot(rule.region_type, f"{path}/@{rule.pattern.attr}")["text"] = value

    def _open_region(self, rule: SelectorRule, attrs, path: str, elem):
        linked = (self.rules.note_resolution == "linked-idref"
                  and rule.region_type is RegionType.NOTE)
        if linked:
            fr = _Frame(rule.region_type, path, slot={}, linked=True,
                        note_id=attrs.get(XML_ID) or attrs.get("id"))
            self.frames.append(fr)
            self._walk_children(elem)
            self.frames.pop()
            text = collapse_ws("".join(fr.parts))
            if fr.note_id is None:
                self.warnings.append(f"note without id at {path}: dropped")
            else:
                self.pending_notes.append((fr.note_id, text, path))
            return
        slot = self._new_slot(rule.region_type, path)
        fr = _Frame(rule.region_type, path, slot)
        self.frames.append(fr)
        self._walk_children(elem)
        self.frames.pop()
        self._seal_frame_part(fr)


def _find_text_root(root) -> ET.Element:
    if _localname(root.tag) == "text":
        return root
    for elem in root.iter():
        if _localname(elem.tag) == "text":
            return elem
    return root


def _byte_offset(data: bytes, line: int, col: int) -> int:
    lines = data.split(b"\n")
    return sum(len(l) + 1 for l in lines[: line - 1]) + col


def _parse_root(xml_bytes) -> tuple[ET.Element, bytes]:
    if isinstance(xml_bytes, str):
        xml_bytes = xml_bytes.encode("utf-8")
    try:
        return ET.fromstring(xml_bytes), xml_bytes
    except ET.ParseError as e:
        line, col = getattr(e, "position", (1, 0))
        off = _byte_offset(xml_bytes, line, col)
        raise EditionParseError(f"malformed XML at byte {off}: {e}", off) from e


def _run_walk(xml_bytes, rule_set: SelectorRuleSet, edition_id: str,
              warnings: list[str]) -> _Walker:
    root, _ = _parse_root(xml_bytes)
    text_root = _find_text_root(root)
    w = _Walker(rule_set, edition_id, warnings)
    if rule_set.note_resolution == "linked-idref":
        _scan_note_refs(text_root, w)
    w._emit_text(text_root.text or "")
    for child in text_root:
        w.visit(child)
    w._flush_page()
    return w


def parse_edition(xml_bytes, rule_set: SelectorRuleSet,
                  edition_id: str = "", warnings: list[str] | None = None
                  ) -> list[PageRecord]:
    """Parse one edition into per-page, typed, reading-ordered region transcripts.

    One PageRecord per page-break milestone; body regions come first (one per
    column), then floats in order of appearance. Notes interrupted by a page
    break contribute one run-on part per page. With linked-idref resolution,
    notes from the separate notes section attach to the page holding their
    first reference mark.

    ``warnings``, when given, collects non-fatal findings (dangling note
    references, content before the first page break, ...).
    """
    if warnings is None:
        warnings = []
    w = _run_walk(xml_bytes, rule_set, edition_id, warnings)

    if w.pre_page_content and w.pages:
        warnings.append("content before first page break attached to first page")
    elif w.pre_page_content:
        warnings.append("document has content but no page break; no pages emitted")

    if rule_set.note_resolution == "linked-idref":
        _attach_linked_notes(w, warnings)

    for p in w.pages:
        for r in p.regions:
            r.text = unicodedata.normalize("NFC", r.text)
        p.heads = [unicodedata.normalize("NFC", h) for h in p.heads]
    return w.pages


def _scan_note_refs(text_root, w: _Walker):
    """Pre-pass: page index of each note reference mark, by IDREF."""
    ref_attr = w.rules.note_ref_attr
    page = -1

    def walk(elem, stack):
        nonlocal page
        name = _localname(elem.tag)
        if not name:
            return
        stack.append(name)
        if w.rules.page_break.matches(stack):
            page += 1
        target = elem.get(ref_attr)
        if target and page >= 0:
            for ref in target.split():
                rid = ref.lstrip("#")
                if rid and rid not in w.note_refs:
                    w.note_refs[rid] = page
                elif rid:
                    w.warnings.append(
                        f"note {rid!r} referenced more than once; "
                        f"attached to page {w.note_refs[rid]}")
        for child in elem:
            walk(child, stack)
        stack.pop()

    stack: list[str] = []
    for child in text_root:
        walk(child, stack)


def _attach_linked_notes(w: _Walker, warnings: list[str]):
    for note_id, text, path in w.pending_notes:
        page_idx = w.note_refs.get(note_id)
        if page_idx is None:
            warnings.append(f"note {note_id!r} has no reference mark; dropped")
            continue
        if not text or page_idx >= len(w.pages):
            continue
        page = w.pages[page_idx]
        page.regions.append(RegionTranscript(
            RegionType.NOTE, text, len(page.regions), run_on=False,
            source_path=path))
    known = {nid for nid, _, _ in w.pending_notes}
    for rid in sorted(w.note_refs):
        if rid not in known:
            warnings.append(f"reference to unknown note {rid!r}")


def resolve_linked_notes(xml_bytes, rule_set: SelectorRuleSet
                         ) -> tuple[dict[str, int], list[str]]:
    """Map note id -> page index of its first reference mark.

    Unreferenced notes and references to unknown ids produce warning strings.
    """
    if rule_set.note_resolution != "linked-idref":
        raise RuleSetError("rule set does not use linked-idref note resolution")
    warnings: list[str] = []
    w = _run_walk(xml_bytes, rule_set, "", warnings)
    mapping: dict[str, int] = {}
    for nid, _text, _path in w.pending_notes:
        if nid in w.note_refs:
            mapping[nid] = w.note_refs[nid]
        else:
            warnings.append(f"note {nid!r} has no reference mark; dropped")
    known = {nid for nid, _, _ in w.pending_notes}
    for rid in sorted(w.note_refs):
        if rid not in known:
            warnings.append(f"reference to unknown note {rid!r}")
    return mapping, warnings
