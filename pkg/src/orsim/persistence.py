"""Config loading, case-base and review-queue records, trace and batch outputs.

Case records are one JSON object per line, keys in this order::

    id, provenance, problem, solution, adaptation, source_id, distance

``problem`` is a list of ``[entity, attribute, value, cycle]``; ``solution`` is
``{"state": "O"|"N", "recommendation": str}``; ``adaptation`` is ``null`` or
``{"problems": [problem, ...], "steps": [[source, target, ancestor], ...]}``.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Literal, Sequence

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import cbr
from .criticality import Axis, Box, Cell, RegionMap, RegionMap2D, RegionMap3D, DEFAULT_LEVELS
from .domain import (
    DEFAULT_REGISTRY,
    DEFAULT_TAXONOMY,
    AdaptationPath,
    AdaptationStep,
    AttributeRegistry,
    AttributeScale,
    Case,
    Provenance,
    Quadruplet,
    ScaleKind,
    Solution,
    State,
    Taxonomy,
)
from .fatigue import FatigueParams
from .infection import InfectionParams
from .sim import (
    AgentSpec,
    BatchResult,
    CBRSettings,
    ConfigError,
    CYCLE_SECONDS,
    Indicator,
    RoleDescriptors,
    SimConfig,
    SimTrace,
    Species,
    validate_config,
)

CONFIG_ENV = "ORSIM_CONFIG"


class RecordError(ValueError):
    def __init__(self, path: str | os.PathLike, line: int, message: str):
        self.path, self.line = str(path), line
        super().__init__(f"{path}:{line}: {message}")


# ---------------------------------------------------------------------------
# config schema


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SolutionModel(_Model):
    state: Literal["O", "N"]
    recommendation: str = Field(min_length=1)


class FatigueModel(_Model):
    a: float = Field(1.0, gt=0)
    k: float = 0.001
    type: str = "sleep"
    scale_max: float | None = Field(None, gt=0)


class RolesModel(_Model):
    intention: str = ""
    desire: str = ""
    belief: str = ""


class AgentModel(_Model):
    entity: str = Field(min_length=1)
    species: Species
    fatigue: FatigueModel | None = None
    roles: RolesModel | None = None
    experience: Literal["junior", "senior"] | None = None
    function: str | None = None
    infected: bool = False
    state: str | None = None
    surgery_type: Literal["urgent", "non-urgent", "complex", "non-complex"] | None = None
    infection_type: Literal["contaminant", "resistant"] | None = None
    local: str | None = None


class InfectionModel(_Model):
    n_susceptible: int = Field(495, ge=0)
    n_infected: int = Field(5, ge=0)
    n_resistant: int = Field(0, ge=0)
    n_decontaminant: int = Field(10, ge=0)
    contact_radius: float = Field(0.02, gt=0)
    p_infect: float = Field(0.2, ge=0, le=1)
    p_neutralize: float = Field(0.5, ge=0, le=1)
    step_size: float = Field(0.01, gt=0, le=0.5)


class AttributeModel(_Model):
    name: str = Field(min_length=1)
    kind: ScaleKind = ScaleKind.SCALE
    min: float = 0.0
    max: float | None = None


class AxisModel(_Model):
    indicator: str
    lo: float
    hi: float


class CellModel(_Model):
    x: tuple[float, float]
    y: tuple[float, float]
    level: str


class BoxModel(_Model):
    id: str
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    level: str


class MapModel(_Model):
    axes: list[AxisModel] = Field(min_length=2, max_length=3)
    levels: list[str] = Field(default_factory=lambda: list(DEFAULT_LEVELS), min_length=2)
    # 2D: either a rectilinear grid or explicit cells
    x_edges: list[float] | None = None
    y_edges: list[float] | None = None
    grid: list[list[str]] | None = None  # rows from low y to high y
    cells: list[CellModel] | None = None
    # 3D
    boxes: list[BoxModel] | None = None
    default_level: str | None = None


class CBRModel(_Model):
    feed_interval: int = Field(100, ge=1)
    acceptance_threshold: float = Field(cbr.DEFAULT_ACCEPTANCE_THRESHOLD, gt=0)
    encoding: cbr.EncodingPolicy = cbr.EncodingPolicy.STRICT
    sigma: float = Field(0.5, gt=0, lt=1)
    auto_retain: bool = True
    update_maps: bool = True
    fallback_alert: SolutionModel | None = SolutionModel(state="O", recommendation="Pause Pers.")
    fallback_normal: SolutionModel | None = SolutionModel(state="N", recommendation="Normal")
    casebase: str | None = None


class ConfigModel(_Model):
    horizon: int = Field(2000, gt=0)
    seed: int = 1
    reference_cycle: int | None = Field(None, ge=0)
    collective_threshold: float = Field(0.5, ge=0, le=1)
    attributes: list[AttributeModel] | None = None
    taxonomy: list[tuple[str, str]] | None = None
    agents: list[AgentModel] = Field(min_length=1)
    infection: InfectionModel = InfectionModel()
    indicators: list[str] = Field(min_length=1)
    thresholds: dict[str, float] = Field(default_factory=dict)
    weights: dict[str, float] = Field(default_factory=dict)
    maps: list[MapModel] = Field(default_factory=list)
    cbr: CBRModel = CBRModel()

    @field_validator("indicators")
    @classmethod
    def _indicator_names(cls, names: list[str]) -> list[str]:
        for n in names:
            Indicator.parse(n)
        return names


# ---------------------------------------------------------------------------
# yaml positions


def _node_at(node: yaml.Node, loc: Sequence[Any]) -> yaml.Node:
    """Deepest YAML node reachable along a pydantic error location."""
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
            if nxt is None:
                # unknown keys point at the key itself
                nxt = next((k for k, _ in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
    return node


def _schema_errors(err: ValidationError, root: yaml.Node | None) -> list[str]:
    out = []
    for e in err.errors():
        loc = e["loc"]
        dotted = ".".join(str(p) for p in loc) or "<root>"
        line = _node_at(root, loc).start_mark.line + 1 if root is not None else 0
        out.append(f"line {line}: {dotted}: {e['msg']}")
    return out


# ---------------------------------------------------------------------------
# model -> domain


def _solution(m: SolutionModel | None) -> Solution | None:
    return None if m is None else Solution(State(m.state), m.recommendation)


def _build_map(m: MapModel, idx: int) -> RegionMap:
    axes = [Axis(a.indicator, a.lo, a.hi) for a in m.axes]
    levels = tuple(m.levels)
    if len(axes) == 2:
        if m.boxes is not None or m.default_level is not None:
            raise ConfigError(f"maps.{idx}: boxes/default_level only apply to 3D maps")
        if m.cells is not None:
            cells = tuple(Cell(c.x[0], c.x[1], c.y[0], c.y[1], c.level) for c in m.cells)
            return RegionMap2D(axes[0], axes[1], cells, levels)
        if m.x_edges is None or m.y_edges is None or m.grid is None:
            raise ConfigError(f"maps.{idx}: a 2D map needs either cells or x_edges/y_edges/grid")
        return RegionMap2D.grid(axes[0], axes[1], m.x_edges, m.y_edges, m.grid, levels)
    if m.cells is not None or m.grid is not None:
        raise ConfigError(f"maps.{idx}: 3D maps take boxes, not cells")
    boxes = tuple(Box(b.id, b.lo, b.hi, b.level) for b in m.boxes or [])
    return RegionMap3D(tuple(axes), boxes, m.default_level or levels[0], levels)  # type: ignore[arg-type]


def build_config(model: ConfigModel, base_dir: Path | None = None) -> SimConfig:
    registry = DEFAULT_REGISTRY
    if model.attributes is not None:
        registry = AttributeRegistry.from_scales(
            AttributeScale(a.name, a.kind, a.min, a.max) for a in model.attributes
        )
    try:
        taxonomy = DEFAULT_TAXONOMY if model.taxonomy is None else Taxonomy.from_pairs(model.taxonomy)
    except ValueError as exc:
        raise ConfigError(f"taxonomy: {exc}") from None

    errors: list[str] = []
    agents = []
    for i, a in enumerate(model.agents):
        fatigue = None
        if a.fatigue is not None:
            default_max = 3.0 if a.species is Species.MATERIAL else 5.0
            try:
                fatigue = FatigueParams(a.fatigue.a, a.fatigue.k, a.fatigue.type, a.fatigue.scale_max or default_max)
            except ValueError as exc:
                errors.append(f"agents.{i}.fatigue: {exc}")
        roles = None if a.roles is None else RoleDescriptors(**a.roles.model_dump())
        agents.append(
            AgentSpec(
                a.entity, a.species, fatigue, roles, a.experience, a.function, a.infected,
                a.state, a.surgery_type, a.infection_type, a.local,
            )
        )
    maps = []
    for i, m in enumerate(model.maps):
        try:
            maps.append(_build_map(m, i))
        except ConfigError as exc:
            errors.extend(exc.errors)
        except ValueError as exc:
            errors.append(f"maps.{i}: {exc}")
    initial: tuple[Case, ...] = ()
    if model.cbr.casebase:
        path = Path(model.cbr.casebase)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            initial = tuple(load_cases(path))
        except (OSError, RecordError) as exc:
            errors.append(f"cbr.casebase: {exc}")
    if errors:
        raise ConfigError(errors)

    c = model.cbr
    cfg = SimConfig(
        horizon=model.horizon,
        seed=model.seed,
        agents=tuple(agents),
        infection=InfectionParams(**model.infection.model_dump()),
        indicators=tuple(Indicator.parse(n) for n in model.indicators),
        thresholds=dict(model.thresholds),
        collective_threshold=model.collective_threshold,
        weights=dict(model.weights),
        maps=tuple(maps),
        registry=registry,
        taxonomy=taxonomy,
        cbr=CBRSettings(
            c.feed_interval, c.acceptance_threshold, c.encoding, c.sigma, c.auto_retain,
            c.update_maps, _solution(c.fallback_alert), _solution(c.fallback_normal),
        ),
        reference_cycle=model.reference_cycle,
        initial_cases=initial,
    )
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(text: str, base_dir: Path | None = None) -> SimConfig:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("line 1: config must be a mapping")
    try:
        model = ConfigModel.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_schema_errors(exc, root)) from None
    return build_config(model, base_dir)


def _map_to_dict(m: RegionMap) -> dict[str, Any]:
    if isinstance(m, RegionMap2D):
        return {
            "axes": [{"indicator": a.indicator, "lo": a.lo, "hi": a.hi} for a in (m.x, m.y)],
            "levels": list(m.levels),
            "cells": [{"x": [c.x0, c.x1], "y": [c.y0, c.y1], "level": c.level} for c in m.cells],
        }
    return {
        "axes": [{"indicator": a.indicator, "lo": a.lo, "hi": a.hi} for a in m.axes],
        "levels": list(m.levels),
        "default_level": m.default_level,
        "boxes": [{"id": b.id, "lo": list(b.lo), "hi": list(b.hi), "level": b.level} for b in m.boxes],
    }


def _solution_dict(s: Solution | None) -> dict[str, str] | None:
    return None if s is None else {"state": s.state.value, "recommendation": s.recommendation}


def config_to_dict(cfg: SimConfig, casebase: str | None = None) -> dict[str, Any]:
    """Plain-data form of a config; 2D maps are written as explicit cells.

    Initial cases are not inlined: pass the path of their case-base file as ``casebase``.
    """
    agents = []
    for a in cfg.agents:
        d: dict[str, Any] = {"entity": a.entity, "species": a.species.value}
        if a.fatigue is not None:
            f = a.fatigue
            d["fatigue"] = {"a": f.a, "k": f.k, "type": f.fatigue_type, "scale_max": f.scale_max}
        if a.roles is not None:
            d["roles"] = dataclasses.asdict(a.roles)
        for key in ("experience", "function", "state", "surgery_type", "infection_type", "local"):
            if getattr(a, key) is not None:
                d[key] = getattr(a, key)
        if a.infected:
            d["infected"] = True
        agents.append(d)
    c = cfg.cbr
    return {
        "horizon": cfg.horizon,
        "seed": cfg.seed,
        "reference_cycle": cfg.reference_cycle,
        "collective_threshold": cfg.collective_threshold,
        "attributes": [
            {"name": s.name, "kind": s.kind.value, "min": s.minimum, "max": s.maximum}
            for s in cfg.registry.scales.values()
        ],
        "taxonomy": [list(p) for p in cfg.taxonomy.pairs()],
        "agents": agents,
        "infection": dataclasses.asdict(cfg.infection),
        "indicators": [i.name for i in cfg.indicators],
        "thresholds": dict(cfg.thresholds),
        "weights": dict(cfg.weights),
        "maps": [_map_to_dict(m) for m in cfg.maps],
        "cbr": {
            "feed_interval": c.feed_interval,
            "acceptance_threshold": c.acceptance_threshold,
            "encoding": c.encoding.value,
            "sigma": c.sigma,
            "auto_retain": c.auto_retain,
            "update_maps": c.update_maps,
            "fallback_alert": _solution_dict(c.fallback_alert),
            "fallback_normal": _solution_dict(c.fallback_normal),
            "casebase": casebase,
        },
    }


def dumps_config(cfg: SimConfig, casebase: str | None = None) -> str:
    return yaml.safe_dump(config_to_dict(cfg, casebase), sort_keys=False, allow_unicode=True)


def default_config_path() -> Path:
    return Path(str(resources.files("orsim") / "data" / "default.yaml"))


def resolve_config_path(path: str | os.PathLike | None) -> Path:
    """Explicit path, else the ``ORSIM_CONFIG`` environment variable, else the shipped default."""
    if path:
        return Path(path)
    env = os.environ.get(CONFIG_ENV)
    return Path(env) if env else default_config_path()


def load_config(path: str | os.PathLike | None = None) -> SimConfig:
    p = resolve_config_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from None
    return parse_config(text, p.parent)


# ---------------------------------------------------------------------------
# case records


def _problem_to_json(problem: Iterable[Quadruplet]) -> list[list[Any]]:
    return [[q.entity, q.attribute, q.value, q.cycle] for q in problem]


def _problem_from_json(raw: Any) -> tuple[Quadruplet, ...]:
    if not isinstance(raw, list):
        raise ValueError("problem must be a list")
    out = []
    for item in raw:
        if not (isinstance(item, list) and len(item) == 4):
            raise ValueError(f"quadruplet must be [entity, attribute, value, cycle], got {item!r}")
        e, a, v, t = item
        if not isinstance(e, str) or not isinstance(a, str):
            raise ValueError(f"entity and attribute must be strings in {item!r}")
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"value must be a number in {item!r}")
        if isinstance(t, bool) or not isinstance(t, int):
            raise ValueError(f"cycle must be an integer in {item!r}")
        out.append(Quadruplet(e, a, float(v), t))
    return tuple(out)


def case_to_record(c: Case) -> dict[str, Any]:
    adaptation = None
    if c.adaptation is not None:
        adaptation = {
            "problems": [_problem_to_json(p) for p in c.adaptation.problems],
            "steps": [[s.source, s.target, s.ancestor] for s in c.adaptation.steps],
        }
    return {
        "id": c.id,
        "provenance": c.provenance.value,
        "problem": _problem_to_json(c.problem),
        "solution": {"state": c.solution.state.value, "recommendation": c.solution.recommendation},
        "adaptation": adaptation,
        "source_id": c.source_id,
        "distance": c.distance,
    }


def case_from_record(rec: Any) -> Case:
    if not isinstance(rec, dict):
        raise ValueError("case record must be an object")
    unknown = set(rec) - {"id", "provenance", "problem", "solution", "adaptation", "source_id", "distance"}
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    sol = rec.get("solution")
    if not isinstance(sol, dict):
        raise ValueError("missing solution")
    adaptation = None
    if rec.get("adaptation") is not None:
        raw = rec["adaptation"]
        adaptation = AdaptationPath(
            tuple(_problem_from_json(p) for p in raw["problems"]),
            tuple(AdaptationStep(*s) for s in raw["steps"]),
        )
    case_id = rec.get("id")
    if case_id is not None and (isinstance(case_id, bool) or not isinstance(case_id, int)):
        raise ValueError("id must be an integer")
    dist = rec.get("distance")
    return Case(
        problem=_problem_from_json(rec.get("problem")),
        solution=Solution(State(sol["state"]), sol["recommendation"]),
        provenance=Provenance(rec.get("provenance", "auto")),
        id=case_id,
        adaptation=adaptation,
        source_id=rec.get("source_id"),
        distance=None if dist is None else float(dist),
    )


def dumps_case(c: Case) -> str:
    return json.dumps(case_to_record(c), ensure_ascii=False)


def loads_case(line: str) -> Case:
    return case_from_record(json.loads(line))


def _read_records(path: str | os.PathLike) -> Iterable[tuple[int, Any]]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield n, json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(path, n, f"malformed record: {exc.msg}") from None


def load_cases(path: str | os.PathLike) -> list[Case]:
    cases = []
    for n, rec in _read_records(path):
        try:
            cases.append(case_from_record(rec))
        except (ValueError, KeyError, TypeError) as exc:
            raise RecordError(path, n, str(exc)) from None
    return cases


def save_cases(cases: Iterable[Case], path: str | os.PathLike) -> None:
    text = "".join(dumps_case(c) + "\n" for c in cases)
    Path(path).write_text(text, encoding="utf-8")


def append_case(c: Case, path: str | os.PathLike) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(dumps_case(c) + "\n")


def save_casebase(cb: cbr.CaseBase, path: str | os.PathLike) -> None:
    save_cases(cb.cases, path)


def load_casebase(
    path: str | os.PathLike,
    acceptance_threshold: float = cbr.DEFAULT_ACCEPTANCE_THRESHOLD,
    encoding: cbr.CategoricalEncoding = cbr.STRICT,
) -> cbr.CaseBase:
    cases = load_cases(path)
    ids = [c.id for c in cases]
    for n, c in enumerate(cases, start=1):
        if c.id is None:
            raise RecordError(path, n, "retained case without id")
        if ids.index(c.id) != n - 1:
            raise RecordError(path, n, f"duplicate case id {c.id}")
    return cbr.CaseBase(cases, acceptance_threshold, encoding)


def pending_path(base_path: str | os.PathLike) -> Path:
    p = Path(base_path)
    stem = p.name[: -len(".jsonl")] if p.name.endswith(".jsonl") else p.name
    return p.with_name(stem + ".pending.jsonl")


def save_pending(items: Iterable[cbr.PendingCase], path: str | os.PathLike) -> None:
    lines = []
    for p in items:
        rec = {"status": p.status.value, "source_id": p.source_id, "distance": p.distance,
               "case": case_to_record(p.case)}
        lines.append(json.dumps(rec, ensure_ascii=False) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_pending(path: str | os.PathLike) -> list[cbr.PendingCase]:
    if not Path(path).exists():
        return []
    out = []
    for n, rec in _read_records(path):
        try:
            out.append(
                cbr.PendingCase(
                    case_from_record(rec["case"]),
                    rec.get("source_id"),
                    rec.get("distance"),
                    cbr.PendingStatus(rec.get("status", "pending")),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise RecordError(path, n, str(exc)) from None
    return out


def load_problem(path: str | os.PathLike) -> tuple[Quadruplet, ...]:
    """Problem from a JSON object holding ``problem``: a case record, or a one-record JSONL file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        rec = json.loads(text)
    except json.JSONDecodeError:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) != 1:
            raise RecordError(path, 1, "expected one JSON object with a 'problem' list") from None
        try:
            rec = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise RecordError(path, 1, f"malformed record: {exc.msg}") from None
    if not isinstance(rec, dict) or "problem" not in rec:
        raise RecordError(path, 1, "expected an object with a 'problem' list")
    try:
        return _problem_from_json(rec["problem"])
    except ValueError as exc:
        raise RecordError(path, 1, str(exc)) from None


# ---------------------------------------------------------------------------
# traces


def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ""
    return str(x)


def trace_header(indicators: Sequence[str]) -> list[str]:
    return (
        ["cycle", "time_s"]
        + list(indicators)
        + [f"alert:{n}" for n in indicators]
        + ["n_susceptible", "n_infected", "n_resistant", "collective_score", "collective_alert",
           "crit_level", "cbr_case_id", "recommendation"]
    )


def trace_to_csv(trace: SimTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_header(trace.indicators))
    for r in trace.rows:
        w.writerow(
            [_fmt(v) for v in (r.cycle, r.cycle * CYCLE_SECONDS, *r.values, *r.individual, *r.counts,
                               r.collective_score, r.collective_alert, r.crit_level, r.case_id, r.recommendation)]
        )
    return buf.getvalue()


def write_trace(trace: SimTrace, path: str | os.PathLike) -> None:
    Path(path).write_text(trace_to_csv(trace), encoding="utf-8")


def read_trace(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def batch_summary(result: BatchResult) -> dict[str, Any]:
    def clean(x: float) -> float | None:
        return None if math.isnan(x) else x

    return {
        "reference_cycle": result.reference_cycle,
        "n_runs": len(result.runs),
        "score_mean": result.score_mean,
        "score_std": result.score_std,
        "trigger_mean": clean(result.trigger_mean),
        "trigger_std": clean(result.trigger_std),
        "runs": [
            {
                "run": k,
                "seed": r.seed,
                "first_collective": r.first_collective,
                "first_individual": r.first_individual,
                "first_silent_collective": r.silent_collective,
                "score_at_reference": r.score_at_reference,
            }
            for k, r in enumerate(result.runs)
        ],
    }


def write_batch_summary(result: BatchResult, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(batch_summary(result), indent=2) + "\n", encoding="utf-8")
