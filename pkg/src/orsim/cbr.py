"""Case-based reasoning over quadruplet cases: elaborate, retrieve, reuse, review, retain.

Similarity between two problems of ``n`` quadruplets compares every target
quadruplet with every source quadruplet. Each element pair contributes a
quotient index ``I`` in [0, 1] (``min/max`` for numbers, an encoding policy for
labels) and each quadruplet pair contributes ``sqrt(sum((1 - I)**2))``. The
mean over the ``n * n`` pairs is a distance: 0 for identical problems, at most 2.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

from .criticality import OutOfDomainError, RegionMap, RegionMap2D
from .domain import (
    DEFAULT_REGISTRY,
    AdaptationPath,
    AdaptationStep,
    AttributeRegistry,
    Case,
    Provenance,
    Quadruplet,
    Solution,
    State,
    Taxonomy,
    lowest_common_ancestor,
    validate_case,
)

DEFAULT_ACCEPTANCE_THRESHOLD = 1.2


class CBRError(Exception):
    pass


class EncodingPolicy(str, enum.Enum):
    STRICT = "strict"
    TAXONOMY = "taxonomy"


@dataclass(frozen=True)
class CategoricalEncoding:
    """How label elements (entity, attribute) turn into a quotient index.

    ``STRICT`` scores equal labels 1 and anything else 0. ``TAXONOMY`` also
    scores ``sigma`` for two entities sharing a direct parent class.
    Attributes are always compared strictly.
    """

    policy: EncodingPolicy = EncodingPolicy.STRICT
    sigma: float = 0.5
    taxonomy: Taxonomy | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma must lie strictly between 0 and 1, got {self.sigma}")
        if self.policy is EncodingPolicy.TAXONOMY and self.taxonomy is None:
            raise ValueError("the taxonomy policy needs a taxonomy")

    def entity_index(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        if self.policy is EncodingPolicy.TAXONOMY:
            pa, pb = self.taxonomy.parents.get(a), self.taxonomy.parents.get(b)
            if pa is not None and pa == pb and pa != self.taxonomy.root:
                return self.sigma
        return 0.0

    @staticmethod
    def attribute_index(a: str, b: str) -> float:
        return 1.0 if a == b else 0.0


STRICT = CategoricalEncoding()


def quotient_index(x: float, y: float) -> float:
    if x == y:
        return 1.0  # covers both-zero
    lo, hi = (x, y) if x <= y else (y, x)
    if lo == 0.0:
        return 0.0
    return lo / hi


def pair_term(target: Quadruplet, source: Quadruplet, enc: CategoricalEncoding = STRICT) -> float:
    indices = (
        enc.entity_index(target.entity, source.entity),
        enc.attribute_index(target.attribute, source.attribute),
        quotient_index(target.value, source.value),
        quotient_index(target.cycle, source.cycle),
    )
    return math.sqrt(sum((1.0 - i) ** 2 for i in indices))


def distance_breakdown(
    target: Sequence[Quadruplet], source: Sequence[Quadruplet], enc: CategoricalEncoding = STRICT
) -> list[tuple[int, int, float]]:
    """``(i, j, term)`` for every target quadruplet ``i`` and source quadruplet ``j``."""
    if len(target) != len(source):
        raise CBRError(f"quadruplet count mismatch: target has {len(target)}, source has {len(source)}")
    if not target:
        raise CBRError("cannot compare empty problems")
    return [(i, j, pair_term(t, s, enc)) for i, t in enumerate(target) for j, s in enumerate(source)]


def distance(
    target: Sequence[Quadruplet], source: Sequence[Quadruplet], enc: CategoricalEncoding = STRICT
) -> float:
    terms = distance_breakdown(target, source, enc)
    return math.fsum(t for _, _, t in terms) / len(terms)


# ---------------------------------------------------------------------------
# case base


@dataclass
class CaseBase:
    cases: list[Case] = field(default_factory=list)
    acceptance_threshold: float = DEFAULT_ACCEPTANCE_THRESHOLD
    encoding: CategoricalEncoding = STRICT
    next_id: int = 0

    def __post_init__(self) -> None:
        if not self.acceptance_threshold > 0:
            raise ValueError("acceptance threshold must be positive")
        ids = [c.id for c in self.cases]
        if None in ids or len(set(ids)) != len(ids):
            raise ValueError("case ids must be present and unique")
        if ids:
            self.next_id = max(self.next_id, max(ids) + 1)

    def __len__(self) -> int:
        return len(self.cases)

    def __iter__(self) -> Iterator[Case]:
        return iter(self.cases)

    def __contains__(self, case_id: object) -> bool:
        return any(c.id == case_id for c in self.cases)

    def get(self, case_id: int) -> Case:
        for c in self.cases:
            if c.id == case_id:
                return c
        raise KeyError(f"no case with id {case_id}")

    def append(self, case: Case) -> Case:
        if case.id is not None:
            raise CBRError(f"case {case.id} was already retained")
        stored = replace(case, id=self.next_id)
        self.next_id += 1
        self.cases.append(stored)
        return stored

    def amend(self, case_id: int, case: Case | None) -> None:
        """Replace (or with ``None`` remove) a retained case after expert review."""
        for i, c in enumerate(self.cases):
            if c.id == case_id:
                if case is None:
                    del self.cases[i]
                else:
                    self.cases[i] = replace(case, id=case_id)
                return
        raise KeyError(f"no case with id {case_id}")

    def snapshot(self) -> "CaseBase":
        return CaseBase(list(self.cases), self.acceptance_threshold, self.encoding, self.next_id)


# ---------------------------------------------------------------------------
# elaborate / retrieve


def elaborate(snapshot: Iterable[tuple[str, str, float]], cycle: int) -> tuple[Quadruplet, ...]:
    """One quadruplet per ``(entity, attribute, value)`` observation, all at ``cycle``."""
    problem = tuple(Quadruplet(e, a, float(v), cycle) for e, a, v in snapshot)
    if not problem:
        raise CBRError("elaborate needs at least one monitored indicator")
    return problem


@dataclass(frozen=True)
class Candidate:
    case: Case
    distance: float


def retrieve(target: Sequence[Quadruplet], cb: CaseBase) -> list[Candidate]:
    """Cases with as many quadruplets as ``target``, nearest first, ties by lower id."""
    found = [
        Candidate(c, distance(target, c.problem, cb.encoding))
        for c in cb.cases
        if len(c.problem) == len(target)
    ]
    found.sort(key=lambda cand: (cand.distance, cand.case.id))
    return found


# ---------------------------------------------------------------------------
# reuse


class ReuseKind(str, enum.Enum):
    INHERITED = "inherited"
    ADAPTED = "adapted"
    NO_MATCH = "no_match"


@dataclass(frozen=True)
class ReuseOutcome:
    kind: ReuseKind
    solution: Solution | None = None
    source: Case | None = None
    distance: float | None = None
    path: AdaptationPath | None = None
    thresholds: Mapping[str, float] = field(default_factory=dict)
    reason: str = ""


def _align(target: Sequence[Quadruplet], source: Sequence[Quadruplet]) -> list[tuple[Quadruplet, Quadruplet]]:
    """Pair each target quadruplet with a source one: same attribute first, then by position."""
    free = list(range(len(source)))
    pairs: dict[int, int] = {}
    for i, t in enumerate(target):
        for j in free:
            if source[j].attribute == t.attribute:
                pairs[i] = j
                free.remove(j)
                break
    for i in range(len(target)):
        if i not in pairs:
            pairs[i] = free.pop(0)
    return [(target[i], source[pairs[i]]) for i in range(len(target))]


def _substitute(problem: Sequence[Quadruplet], old: str, new: str) -> tuple[Quadruplet, ...]:
    return tuple(replace(q, entity=new) if q.entity == old else q for q in problem)


def reuse(
    target: Sequence[Quadruplet],
    candidates: Sequence[Candidate],
    cb: CaseBase,
    taxonomy: Taxonomy,
    thresholds: Mapping[str, float] | None = None,
) -> ReuseOutcome:
    """Inherit or adapt the best candidate's solution when it lies within the acceptance threshold.

    ``thresholds`` maps ``"entity.attribute"`` to an alert threshold; on
    adaptation the source entity's thresholds are re-keyed to the target entity.
    """
    if not candidates:
        return ReuseOutcome(ReuseKind.NO_MATCH, reason="no candidate with a matching quadruplet count")
    best = candidates[0]
    if best.distance > cb.acceptance_threshold:
        return ReuseOutcome(
            ReuseKind.NO_MATCH,
            source=best.case,
            distance=best.distance,
            reason=f"best distance {best.distance:.4f} above threshold {cb.acceptance_threshold}",
        )

    steps: list[AdaptationStep] = []
    for t, s in _align(target, best.case.problem):
        if t.attribute != s.attribute:
            return ReuseOutcome(
                ReuseKind.NO_MATCH, source=best.case, distance=best.distance,
                reason=f"attribute {t.attribute!r} has no counterpart in case {best.case.id}",
            )
        if t.entity == s.entity:
            continue
        if any(st.source == s.entity and st.target == t.entity for st in steps):
            continue
        lca = lowest_common_ancestor(s.entity, t.entity, taxonomy)
        if lca == taxonomy.root:
            return ReuseOutcome(
                ReuseKind.NO_MATCH, source=best.case, distance=best.distance,
                reason=f"{s.entity!r} and {t.entity!r} share no class below the root",
            )
        steps.append(AdaptationStep(s.entity, t.entity, lca))

    if not steps:
        return ReuseOutcome(ReuseKind.INHERITED, best.case.solution, best.case, best.distance)

    problems = [tuple(best.case.problem)]
    for st in steps[:-1]:
        problems.append(_substitute(problems[-1], st.source, st.target))
    problems.append(tuple(target))
    path = AdaptationPath(tuple(problems), tuple(steps))

    inherited: dict[str, float] = {}
    for key, value in (thresholds or {}).items():
        entity, _, attribute = key.partition(".")
        for st in steps:
            new_key = f"{st.target}.{attribute}"
            if entity == st.source and new_key not in (thresholds or {}):
                inherited[new_key] = value
    return ReuseOutcome(ReuseKind.ADAPTED, best.case.solution, best.case, best.distance, path, inherited)


# ---------------------------------------------------------------------------
# review


class PendingStatus(str, enum.Enum):
    PENDING = "pending"
    ACCEPTED = "accepted"
    EDITED = "edited"
    REJECTED = "rejected"


@dataclass
class PendingCase:
    """A system-produced case awaiting an expert verdict.

    ``case.id`` is set when the case was already retained automatically.
    """

    case: Case
    source_id: int | None
    distance: float | None
    status: PendingStatus = PendingStatus.PENDING


@dataclass(frozen=True)
class Accept:
    pass


@dataclass(frozen=True)
class Edit:
    solution: Solution


@dataclass(frozen=True)
class Reject:
    pass


Verdict = Accept | Edit | Reject


def review(p: PendingCase, verdict: Verdict) -> Case | None:
    """Apply an expert verdict; returns the reviewed case or ``None`` when rejected."""
    if p.status is not PendingStatus.PENDING:
        raise CBRError(f"pending case already resolved ({p.status.value})")
    if isinstance(verdict, Reject):
        p.status = PendingStatus.REJECTED
        return None
    if isinstance(verdict, Edit):
        p.status = PendingStatus.EDITED
        return replace(p.case, solution=verdict.solution, provenance=Provenance.EXPERT_REVIEWED)
    if isinstance(verdict, Accept):
        p.status = PendingStatus.ACCEPTED
        return replace(p.case, provenance=Provenance.EXPERT_REVIEWED)
    raise TypeError(f"unknown verdict {verdict!r}")


# ---------------------------------------------------------------------------
# retain


def _matching_map(case: Case, maps: Sequence[RegionMap]) -> tuple[int, tuple[float, ...]] | None:
    values = {f"{q.entity}.{q.attribute}": q.value for q in case.problem}
    if len(values) != len(case.problem):
        return None
    for idx, m in enumerate(maps):
        if set(m.indicators) == set(values):
            return idx, tuple(values[name] for name in m.indicators)
    return None


def promote_maps(case: Case, maps: Sequence[RegionMap]) -> list[RegionMap]:
    """Raise by one level the cell holding an alert case's indicator point."""
    maps = list(maps)
    if case.solution.state is not State.ALERT or not 2 <= len(case.problem) <= 3:
        return maps
    hit = _matching_map(case, maps)
    if hit is None:
        return maps
    idx, point = hit
    m = maps[idx]
    try:
        if isinstance(m, RegionMap2D):
            maps[idx] = m.promote(m.cell_index(point))  # type: ignore[arg-type]
        else:
            box = m.box_index(point)  # type: ignore[arg-type]
            if box is not None:
                maps[idx] = m.promote(box)
    except OutOfDomainError:
        pass
    return maps


def retain(
    case: Case,
    cb: CaseBase,
    maps: Sequence[RegionMap] = (),
    *,
    registry: AttributeRegistry = DEFAULT_REGISTRY,
    taxonomy: Taxonomy | None = None,
    update_maps: bool = True,
) -> tuple[Case, list[RegionMap]]:
    """Append ``case`` with a fresh id; alert cases also promote the matching map cell."""
    violations = validate_case(case, registry, taxonomy)
    if violations:
        raise CBRError("cannot retain invalid case: " + "; ".join(violations))
    stored = cb.append(case)
    new_maps = promote_maps(stored, maps) if update_maps else list(maps)
    return stored, new_maps


# ---------------------------------------------------------------------------
# full cycle


@dataclass(frozen=True)
class CycleResult:
    outcome: ReuseOutcome
    case: Case | None  # the retained case, if any
    pending: PendingCase | None
    maps: list[RegionMap]

    @property
    def recommendation(self) -> str | None:
        return self.case.solution.recommendation if self.case else None


def run_cycle(
    problem: Sequence[Quadruplet],
    cb: CaseBase,
    taxonomy: Taxonomy,
    maps: Sequence[RegionMap] = (),
    *,
    fallback: Solution | None = None,
    thresholds: Mapping[str, float] | None = None,
    registry: AttributeRegistry = DEFAULT_REGISTRY,
    auto_retain: bool = True,
    update_maps: bool = True,
) -> CycleResult:
    """Retrieve and reuse for ``problem``; retain the resulting case and queue it for review.

    Without a match the ``fallback`` solution is used; with no fallback nothing is retained.
    """
    candidates = retrieve(problem, cb)
    outcome = reuse(problem, candidates, cb, taxonomy, thresholds)
    if outcome.kind is ReuseKind.NO_MATCH:
        if fallback is None:
            return CycleResult(outcome, None, None, list(maps))
        case = Case(problem, fallback, Provenance.AUTO)
    elif outcome.kind is ReuseKind.INHERITED:
        case = Case(problem, outcome.solution, Provenance.AUTO,
                    source_id=outcome.source.id, distance=outcome.distance)
    else:
        case = Case(problem, outcome.solution, Provenance.ADAPTED, adaptation=outcome.path,
                    source_id=outcome.source.id, distance=outcome.distance)

    if not auto_retain:
        return CycleResult(outcome, None, PendingCase(case, case.source_id, case.distance), list(maps))
    stored, new_maps = retain(case, cb, maps, registry=registry, taxonomy=taxonomy, update_maps=update_maps)
    return CycleResult(outcome, stored, PendingCase(stored, stored.source_id, stored.distance), new_maps)
