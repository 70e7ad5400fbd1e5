"""Class-aware style bank and stylized prompt construction.

A style bank holds, for every semantic class, a list of appearance
descriptors, plus a list of global scene descriptors. Given a mask, one
descriptor is drawn uniformly per present class (in bank order) and one
global descriptor is drawn, and the result is rendered as::

    This image contains <d1> <c1>, <d2> <c2> and <d3> <c3>, <global>.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDescriptorList, EmptyPresentSet, SchemaError, UnknownClassId
from .masks import ClassMask
from .rng import check_seed

PREFIX = "This image contains "
_TRAILING_PUNCT = ".,;:!?"


@dataclass(frozen=True)
class StyleClass:
    name: str
    class_id: int
    descriptors: tuple[str, ...]


@dataclass(frozen=True)
class StyleBank:
    """Ordered class registry with per-class and global descriptors.

    The order of ``classes`` is the order phrases appear in prompts.
    """

    classes: tuple[StyleClass, ...]
    global_descriptors: tuple[str, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "global_descriptors", tuple(self.global_descriptors))
        if not self.classes:
            raise SchemaError("classes", "at least one class is required")
        names, ids = set(), set()
        for i, c in enumerate(self.classes):
            where = f"classes[{i}]"
            _check_text(c.name, f"{where}.name")
            if not isinstance(c.class_id, int) or isinstance(c.class_id, bool) or not 0 <= c.class_id <= 255:
                raise SchemaError(f"{where}.id", f"class id must be an integer in [0, 255], got {c.class_id!r}")
            if c.name in names:
                raise SchemaError(f"{where}.name", f"duplicate class name {c.name!r}")
            if c.class_id in ids:
                raise SchemaError(f"{where}.id", f"duplicate class id {c.class_id}")
            names.add(c.name)
            ids.add(c.class_id)
            _check_descriptors(c.descriptors, f"{where}.styles")
        _check_descriptors(self.global_descriptors, "global")
        object.__setattr__(self, "_by_id", {c.class_id: c for c in self.classes})

    @classmethod
    def from_mapping(cls, classes, global_descriptors) -> "StyleBank":
        """Build a bank from ``[(name, id, [descriptors]), ...]``."""
        return cls(
            tuple(StyleClass(n, i, tuple(d)) for n, i, d in classes),
            tuple(global_descriptors),
        )

    @property
    def class_names(self) -> list[str]:
        return [c.name for c in self.classes]

    def class_for_id(self, class_id: int) -> StyleClass:
        try:
            return self._by_id[class_id]
        except KeyError:
            raise UnknownClassId(class_id) from None

    def to_json(self) -> str:
        doc = {
            "classes": [
                {"name": c.name, "id": c.class_id, "styles": list(c.descriptors)}
                for c in self.classes
            ],
            "global": list(self.global_descriptors),
        }
        return json.dumps(doc, indent=2, ensure_ascii=False)


@dataclass(frozen=True)
class StylizedPrompt:
    text: str
    chosen: tuple[tuple[str, str], ...]
    global_chosen: str
    seed: int

    def to_record(self, mask_path: str) -> dict:
        return {
            "mask": mask_path,
            "seed": self.seed,
            "prompt": self.text,
            "chosen": [list(p) for p in self.chosen],
            "global": self.global_chosen,
        }


def _check_text(value, path: str) -> None:
    if not isinstance(value, str) or not value.strip():
        raise SchemaError(path, "expected a nonempty string")
    if value != value.strip():
        raise SchemaError(path, "leading or trailing whitespace is not allowed")


def _check_descriptors(values, path: str) -> None:
    if not isinstance(values, (list, tuple)):
        raise SchemaError(path, "expected a list of strings")
    if not values:
        raise EmptyDescriptorList(path, "descriptor list must not be empty")
    for j, d in enumerate(values):
        _check_text(d, f"{path}[{j}]")
        if d[-1] in _TRAILING_PUNCT:
            raise SchemaError(f"{path}[{j}]", f"descriptor must not end with punctuation: {d!r}")


def load_style_bank(document: str | bytes) -> StyleBank:
    """Parse a style bank JSON document.

    Schema: ``{"classes": [{"name": str, "id": int, "styles": [str, ...]}, ...],
    "global": [str, ...]}``. Array order becomes class order.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("", "top level must be an object")
    for key in ("classes", "global"):
        if key not in doc:
            raise SchemaError(key, "missing required field")
    extra = set(doc) - {"classes", "global"}
    if extra:
        raise SchemaError(sorted(extra)[0], "unknown field")
    if not isinstance(doc["classes"], list):
        raise SchemaError("classes", "expected a list")
    classes = []
    for i, entry in enumerate(doc["classes"]):
        where = f"classes[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(where, "expected an object")
        for key in ("name", "id", "styles"):
            if key not in entry:
                raise SchemaError(f"{where}.{key}", "missing required field")
        extra = set(entry) - {"name", "id", "styles"}
        if extra:
            raise SchemaError(f"{where}.{sorted(extra)[0]}", "unknown field")
        _check_descriptors(entry["styles"], f"{where}.styles")
        classes.append(StyleClass(entry["name"], entry["id"], tuple(entry["styles"])))
    _check_descriptors(doc["global"], "global")
    return StyleBank(tuple(classes), tuple(doc["global"]))


def extract_present_classes(mask: ClassMask, bank: StyleBank) -> list[str]:
    """Names of classes with at least one pixel in ``mask``, in bank order."""
    if mask.data.size == 0:
        raise ValueError("mask is empty")
    present = set(np.unique(mask.data).tolist())
    for class_id in sorted(present):
        bank.class_for_id(class_id)
    return [c.name for c in bank.classes if c.class_id in present]


def join_phrases(phrases: list[str]) -> str:
    if len(phrases) == 1:
        return phrases[0]
    return ", ".join(phrases[:-1]) + " and " + phrases[-1]


def render_prompt(chosen, global_descriptor: str) -> str:
    phrases = [f"{descriptor} {name}" for name, descriptor in chosen]
    return PREFIX + join_phrases(phrases) + ", " + global_descriptor + "."


def construct_prompt(mask: ClassMask, bank: StyleBank, seed: int) -> StylizedPrompt:
    """Compose a stylized prompt for ``mask``.

    Draws are made with ``numpy.random.default_rng(seed)``: one index per
    present class in bank order, then one for the global descriptor.
    """
    seed = check_seed(seed)
    present = set(extract_present_classes(mask, bank))
    if not present:
        raise EmptyPresentSet("mask contains no registered class")
    rng = np.random.default_rng(seed)
    chosen = []
    for c in bank.classes:
        if c.name in present:
            chosen.append((c.name, c.descriptors[rng.integers(len(c.descriptors))]))
    g = bank.global_descriptors[rng.integers(len(bank.global_descriptors))]
    return StylizedPrompt(render_prompt(chosen, g), tuple(chosen), g, seed)
