"""Shared vocabulary: quadruplets, cases, the attribute registry and the entity taxonomy."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


class ResolutionError(KeyError):
    """A label does not resolve in the taxonomy."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unresolved label"


class State(str, enum.Enum):
    ALERT = "O"
    NORMAL = "N"


class Provenance(str, enum.Enum):
    AUTO = "auto"
    ADAPTED = "adapted"
    EXPERT_REVIEWED = "expert_reviewed"


@dataclass(frozen=True)
class Quadruplet:
    entity: str
    attribute: str
    value: float
    cycle: int

    @property
    def indicator(self) -> tuple[str, str]:
        return (self.entity, self.attribute)


@dataclass(frozen=True)
class Solution:
    state: State
    recommendation: str

    def __post_init__(self) -> None:
        if not self.recommendation:
            raise ValueError("recommendation must be non-empty")


@dataclass(frozen=True)
class AdaptationStep:
    """One label substitution: ``source`` is rewritten to ``target``, justified by ``ancestor``."""

    source: str
    target: str
    ancestor: str


@dataclass(frozen=True)
class AdaptationPath:
    """Rewriting path from a source problem (first) to a target problem (last)."""

    problems: tuple[tuple[Quadruplet, ...], ...]
    steps: tuple[AdaptationStep, ...]

    def __post_init__(self) -> None:
        if len(self.problems) != len(self.steps) + 1:
            raise ValueError("an adaptation path needs one more problem than steps")

    @property
    def source(self) -> tuple[Quadruplet, ...]:
        return self.problems[0]

    @property
    def target(self) -> tuple[Quadruplet, ...]:
        return self.problems[-1]


@dataclass(frozen=True)
class Case:
    problem: tuple[Quadruplet, ...]
    solution: Solution
    provenance: Provenance = Provenance.AUTO
    id: int | None = None
    adaptation: AdaptationPath | None = None
    source_id: int | None = None
    distance: float | None = None

    def __post_init__(self) -> None:
        # accept lists for convenience; store tuples so the case stays hashable
        object.__setattr__(self, "problem", tuple(self.problem))


# ---------------------------------------------------------------------------
# attribute registry


class ScaleKind(str, enum.Enum):
    SCALE = "scale"  # bounded ordinal scale, normalized by its maximum
    COUNT = "count"  # particle count, normalized by the population size


@dataclass(frozen=True)
class AttributeScale:
    name: str
    kind: ScaleKind = ScaleKind.SCALE
    minimum: float = 0.0
    maximum: float | None = None

    def contains(self, value: float) -> bool:
        if value < self.minimum:
            return False
        return self.maximum is None or value <= self.maximum

    def describe(self) -> str:
        hi = "inf" if self.maximum is None else f"{self.maximum:g}"
        return f"[{self.minimum:g},{hi}]"


@dataclass(frozen=True)
class AttributeRegistry:
    scales: Mapping[str, AttributeScale]

    @classmethod
    def from_scales(cls, scales: Iterable[AttributeScale]) -> "AttributeRegistry":
        return cls({s.name: s for s in scales})

    def __contains__(self, name: object) -> bool:
        return name in self.scales

    def __getitem__(self, name: str) -> AttributeScale:
        try:
            return self.scales[name]
        except KeyError:
            raise KeyError(f"unknown attribute {name!r}") from None


DEFAULT_REGISTRY = AttributeRegistry.from_scales(
    [
        AttributeScale("fatigue", ScaleKind.SCALE, 0.0, 5.0),
        AttributeScale("mat_tiredness", ScaleKind.SCALE, 0.0, 3.0),
        AttributeScale("infection", ScaleKind.COUNT, 0.0, None),
    ]
)


# ---------------------------------------------------------------------------
# taxonomy


@dataclass(frozen=True)
class Taxonomy:
    """Rooted tree of classes whose leaves are entity labels."""

    parents: Mapping[str, str]
    root: str

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "Taxonomy":
        parents: dict[str, str] = {}
        nodes: set[str] = set()
        for parent, child in pairs:
            if child in parents:
                raise ValueError(f"node {child!r} has more than one parent")
            if parent == child:
                raise ValueError(f"node {child!r} is its own parent")
            parents[child] = parent
            nodes.update((parent, child))
        roots = sorted(nodes - parents.keys())
        if len(roots) != 1:
            raise ValueError(f"taxonomy must have exactly one root, found {roots}")
        tax = cls(parents, roots[0])
        for node in parents:
            tax.ancestors(node)  # raises on cycles
        return tax

    @property
    def nodes(self) -> set[str]:
        return set(self.parents) | {self.root}

    @property
    def leaves(self) -> set[str]:
        interior = set(self.parents.values())
        return {n for n in self.nodes if n not in interior}

    def is_leaf(self, label: str) -> bool:
        return label in self.leaves

    def parent(self, label: str) -> str | None:
        self._resolve(label)
        return self.parents.get(label)

    def ancestors(self, label: str) -> list[str]:
        """Chain from ``label`` itself up to the root (inclusive on both ends)."""
        self._resolve(label)
        chain = [label]
        while chain[-1] != self.root:
            nxt = self.parents[chain[-1]]
            if nxt in chain:
                raise ValueError(f"cycle in taxonomy through {nxt!r}")
            chain.append(nxt)
        return chain

    def pairs(self) -> list[tuple[str, str]]:
        return sorted((p, c) for c, p in self.parents.items())

    def _resolve(self, label: str) -> None:
        if label != self.root and label not in self.parents:
            raise ResolutionError(f"unknown taxonomy label {label!r}")


DEFAULT_TAXONOMY = Taxonomy.from_pairs(
    [
        ("root", "personal"),
        ("root", "material"),
        ("root", "infection"),
        ("root", "patient_class"),
        ("personal", "surgeon"),
        ("personal", "nurse"),
        ("material", "bistoury"),
        ("infection", "staphy"),
        ("patient_class", "patient"),
    ]
)


def lowest_common_ancestor(a: str, b: str, tax: Taxonomy) -> str:
    """Deepest node that is an ancestor of both labels (a label is its own ancestor)."""
    chain_a = tax.ancestors(a)
    on_b = set(tax.ancestors(b))
    for node in chain_a:
        if node in on_b:
            return node
    return tax.root  # unreachable for a well-formed tree


# ---------------------------------------------------------------------------
# validation


def validate_problem(
    problem: Sequence[Quadruplet],
    registry: AttributeRegistry,
    taxonomy: Taxonomy | None = None,
) -> list[str]:
    violations: list[str] = []
    if not problem:
        violations.append("empty problem")
    for i, q in enumerate(problem):
        where = f"quadruplet {i}"
        if not q.entity or q.entity != q.entity.lower():
            violations.append(f"{where}: entity {q.entity!r} must be a lowercase token")
        elif taxonomy is not None:
            if q.entity not in taxonomy.nodes:
                violations.append(f"{where}: unknown entity {q.entity!r}")
            elif not taxonomy.is_leaf(q.entity):
                violations.append(f"{where}: entity {q.entity!r} is a class, not a leaf")
        if q.attribute not in registry:
            violations.append(f"{where}: unknown attribute {q.attribute!r}")
        if not isinstance(q.value, (int, float)) or not math.isfinite(q.value):
            violations.append(f"{where}: non-finite value {q.value!r}")
        elif q.attribute in registry:
            scale = registry[q.attribute]
            if not scale.contains(q.value):
                violations.append(f"{q.attribute} out of scale {scale.describe()}")
        if not isinstance(q.cycle, int) or q.cycle < 0:
            violations.append(f"{where}: cycle must be a non-negative integer, got {q.cycle!r}")
    return violations


def validate_case(
    case: Case,
    registry: AttributeRegistry = DEFAULT_REGISTRY,
    taxonomy: Taxonomy | None = DEFAULT_TAXONOMY,
) -> list[str]:
    """Every invariant violation of ``case``; the case is valid iff the list is empty."""
    violations = validate_problem(case.problem, registry, taxonomy)
    if case.provenance is Provenance.ADAPTED and (
        case.adaptation is None or not case.adaptation.steps
    ):
        violations.append("adapted case without adaptation trace")
    return violations
