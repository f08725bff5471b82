"""Shared domain types: tools, classes, the class catalog and annotation tracks."""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from workflowaug.exceptions import CatalogError

IDLE = 0
IDLE_NAME = "no tool in contact"


@dataclass(frozen=True)
class ToolId:
    index: int
    name: str


@dataclass(frozen=True)
class ClassId:
    """An event class: idle, a single tool or a tool combination."""

    index: int
    name: str
    tools: frozenset = frozenset()  # constituent ToolId indices
    phase: Optional[str] = None

    def to_dict(self, tool_names: list[str]) -> dict:
        return {
            "name": self.name,
            "tools": sorted(tool_names[t] for t in self.tools),
            "phase": self.phase,
        }


@dataclass(frozen=True)
class ClassCatalog:
    """Closed set of event classes; index 0 is always "no tool in contact"."""

    tools: tuple
    classes: tuple
    combo_map: dict = field(compare=False)  # frozenset of tool indices -> class index
    phases: tuple = ()
    start_names: tuple = ()
    final_names: tuple = ()

    @classmethod
    def build(
        cls,
        tool_names: list[str],
        class_specs: list[dict],
        phases: list[str] | None = None,
        start_names: list[str] | None = None,
        final_names: list[str] | None = None,
    ) -> "ClassCatalog":
        """Build and validate a catalog.

        ``class_specs`` lists the non-idle classes as ``{"tools": [...],
        "name": optional, "phase": optional}``; combo names default to the
        tool names joined by " & ".
        """
        if len(set(tool_names)) != len(tool_names):
            raise CatalogError("tool names must be unique")
        tools = tuple(ToolId(i, name) for i, name in enumerate(tool_names))
        tool_index = {t.name: t.index for t in tools}

        classes = [ClassId(IDLE, IDLE_NAME)]
        combo_map: dict[frozenset, int] = {}
        for spec in class_specs:
            members = spec.get("tools") or []
            unknown = [m for m in members if m not in tool_index]
            if unknown:
                raise CatalogError(f"class {spec.get('name', members)} uses unknown tools {unknown}")
            tool_set = frozenset(tool_index[m] for m in members)
            if not tool_set:
                raise CatalogError(f"class {spec.get('name')} has an empty tool set")
            if tool_set in combo_map:
                raise CatalogError(f"tool set {sorted(members)} declared twice")
            name = spec.get("name") or " & ".join(members)
            combo_map[tool_set] = len(classes)
            classes.append(ClassId(len(classes), name, tool_set, spec.get("phase")))

        names = [c.name for c in classes]
        if len(set(names)) != len(names):
            raise CatalogError("class names must be unique")
        phases = tuple(phases or [])
        for c in classes[1:]:
            if c.phase is not None and phases and c.phase not in phases:
                raise CatalogError(f"class {c.name} has undeclared phase {c.phase}")
        for label in (start_names or []) + (final_names or []):
            if label not in names:
                raise CatalogError(f"start/final class {label} is not in the catalog")
        return cls(
            tools=tools,
            classes=tuple(classes),
            combo_map=combo_map,
            phases=phases,
            start_names=tuple(start_names or []),
            final_names=tuple(final_names or []),
        )

    @property
    def tool_names(self) -> list[str]:
        return [t.name for t in self.tools]

    def __len__(self) -> int:
        return len(self.classes)

    def name(self, index: int) -> str:
        return self.classes[index].name

    def phase_of(self, index: int) -> Optional[str]:
        return self.classes[index].phase

    def phase_map(self) -> dict[int, Optional[str]]:
        return {c.index: c.phase for c in self.classes}

    def index_of(self, name: str) -> int:
        for c in self.classes:
            if c.name == name:
                return c.index
        raise CatalogError(f"unknown class {name!r}")

    def class_for_tools(self, tool_set: frozenset) -> int:
        if not tool_set:
            return IDLE
        try:
            return self.combo_map[tool_set]
        except KeyError:
            names = sorted(self.tools[t].name for t in tool_set)
            raise CatalogError(f"tool combination {names} is not in the catalog") from None

    def expand(self, index: int) -> frozenset:
        """Tool set of a class (empty for idle)."""
        return self.classes[index].tools

    def to_dict(self) -> dict:
        names = self.tool_names
        return {
            "tools": names,
            "classes": [c.to_dict(names) for c in self.classes[1:]],
            "phases": list(self.phases),
            "starts": list(self.start_names),
            "finals": list(self.final_names),
        }


@dataclass(frozen=True, eq=False)
class RawTrack:
    """Fractional per-tool annotation of one video, one row per frame."""

    video_id: str
    rows: np.ndarray  # (frames, tools) float64 in [0, 1]

    def __post_init__(self):
        self.rows.setflags(write=False)

    def __len__(self) -> int:
        return self.rows.shape[0]


class Run(NamedTuple):
    class_id: int
    start: int
    end: int  # exclusive

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class LabelTrack:
    """One class index per frame."""

    video_id: str
    frames: tuple

    def __len__(self) -> int:
        return len(self.frames)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.frames, dtype=np.int64)
