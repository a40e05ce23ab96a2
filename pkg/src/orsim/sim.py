"""Discrete-time operating-room simulation with individual and collective alerts.

Each cycle (30 simulated seconds) runs, in this order:

1. the fatigue law for every personnel and material agent;
2. one step of the particle infection world;
3. every monitored indicator against its own threshold;
4. the collective score against the collective threshold, plus the
   criticality map when two or three indicators are monitored;
5. on feed cycles, one pass of the case-based reasoning cycle.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import cbr
from .criticality import RegionMap, classify, validate_partition
from .domain import (
    DEFAULT_REGISTRY,
    DEFAULT_TAXONOMY,
    AttributeRegistry,
    Case,
    ScaleKind,
    Solution,
    State,
    Taxonomy,
)
from .fatigue import FatigueParams, fatigue_at
from .infection import InfectionParams, ParticleWorld, infection_metrics, init_population, step_infection

log = logging.getLogger(__name__)

CYCLE_SECONDS = 30


class ConfigError(ValueError):
    def __init__(self, errors: Sequence[str] | str):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


class Species(str, enum.Enum):
    PERSONAL = "personal"
    MATERIAL = "material"
    INFECTION = "infection"
    PATIENT = "patient"
    ALERT = "alert"


FATIGUE_ATTRIBUTE = {Species.PERSONAL: "fatigue", Species.MATERIAL: "mat_tiredness"}
INFECTION_ATTRIBUTE = "infection"


@dataclass(frozen=True)
class RoleDescriptors:
    intention: str = ""
    desire: str = ""
    belief: str = ""


DEFAULT_ROLES = {
    Species.PERSONAL: RoleDescriptors(
        "operate on the patient under optimal, fail-safe conditions",
        "use the human and material resources at hand",
        "take the appropriate measures (monitoring, alert)",
    ),
    Species.INFECTION: RoleDescriptors(
        "", "behave according to its type (contaminant or resistant)", "assess uptake by a future host"
    ),
    Species.ALERT: RoleDescriptors(
        "prevent failure",
        "warn early, before the failure happens",
        "follow the data that influence the intervention",
    ),
}


@dataclass(frozen=True)
class AgentSpec:
    entity: str
    species: Species
    fatigue: FatigueParams | None = None
    roles: RoleDescriptors | None = None
    # species-specific descriptors
    experience: str | None = None  # personal: junior / senior
    function: str | None = None  # material
    infected: bool = False  # material
    state: str | None = None  # patient
    surgery_type: str | None = None  # patient: urgent / non-urgent / complex / non-complex
    infection_type: str | None = None  # infection: contaminant / resistant
    local: str | None = None  # infection: area of impact


@dataclass
class AgentState:
    entity: str
    species: Species
    attributes: dict[str, float]
    roles: RoleDescriptors
    spec: AgentSpec


@dataclass(frozen=True)
class Indicator:
    entity: str
    attribute: str

    @property
    def name(self) -> str:
        return f"{self.entity}.{self.attribute}"

    @classmethod
    def parse(cls, name: str) -> "Indicator":
        entity, dot, attribute = name.partition(".")
        if not dot or not entity or not attribute:
            raise ValueError(f"indicator {name!r} must look like 'entity.attribute'")
        return cls(entity, attribute)


@dataclass(frozen=True)
class CBRSettings:
    feed_interval: int = 100
    acceptance_threshold: float = cbr.DEFAULT_ACCEPTANCE_THRESHOLD
    encoding: cbr.EncodingPolicy = cbr.EncodingPolicy.STRICT
    sigma: float = 0.5
    auto_retain: bool = True
    update_maps: bool = True
    fallback_alert: Solution | None = Solution(State.ALERT, "Pause Pers.")
    fallback_normal: Solution | None = Solution(State.NORMAL, "Normal")


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 2000
    seed: int = 1
    agents: tuple[AgentSpec, ...] = ()
    infection: InfectionParams = InfectionParams()
    indicators: tuple[Indicator, ...] = ()
    thresholds: Mapping[str, float] = field(default_factory=dict)
    collective_threshold: float = 0.5
    weights: Mapping[str, float] = field(default_factory=dict)
    maps: tuple[RegionMap, ...] = ()
    registry: AttributeRegistry = DEFAULT_REGISTRY
    taxonomy: Taxonomy = DEFAULT_TAXONOMY
    cbr: CBRSettings = CBRSettings()
    reference_cycle: int | None = None
    initial_cases: tuple[Case, ...] = ()

    @property
    def ref_cycle(self) -> int:
        return self.horizon - 1 if self.reference_cycle is None else self.reference_cycle

    def weight(self, ind: Indicator) -> float:
        return float(self.weights.get(ind.name, 1.0))

    def threshold(self, ind: Indicator) -> float | None:
        """Threshold for the indicator, falling back to thresholds set on ancestor classes."""
        try:
            chain = self.taxonomy.ancestors(ind.entity)
        except KeyError:
            chain = [ind.entity]
        for node in chain:
            key = f"{node}.{ind.attribute}"
            if key in self.thresholds:
                return float(self.thresholds[key])
        return None

    def map_for(self, names: Sequence[str]) -> RegionMap | None:
        """The criticality map over exactly these indicators, only for 2 or 3 of them."""
        if not 2 <= len(names) <= 3:
            return None
        for m in self.maps:
            if set(m.indicators) == set(names):
                return m
        return None


def validate_config(cfg: SimConfig) -> list[str]:
    errors: list[str] = []
    if cfg.horizon <= 0:
        errors.append("horizon must be positive")
    if not 0.0 <= cfg.collective_threshold <= 1.0:
        errors.append("collective_threshold must lie in [0, 1]")
    if cfg.cbr.feed_interval < 1:
        errors.append("cbr.feed_interval must be at least 1")
    if not cfg.cbr.acceptance_threshold > 0:
        errors.append("cbr.acceptance_threshold must be positive")
    if not cfg.indicators:
        errors.append("at least one monitored indicator is required")
    if not 0 <= cfg.ref_cycle < max(cfg.horizon, 1):
        errors.append(f"reference_cycle {cfg.ref_cycle} outside [0, horizon)")

    entities = [a.entity for a in cfg.agents]
    for dup in sorted({e for e in entities if entities.count(e) > 1}):
        errors.append(f"agent {dup!r} declared twice")
    for species in (Species.PATIENT, Species.ALERT):
        if sum(a.species is species for a in cfg.agents) > 1:
            errors.append(f"{species.value} is a singleton species")
    for a in cfg.agents:
        if a.entity not in cfg.taxonomy.nodes or not cfg.taxonomy.is_leaf(a.entity):
            errors.append(f"agent {a.entity!r} is not a leaf of the taxonomy")
        if a.species in FATIGUE_ATTRIBUTE and a.fatigue is None:
            errors.append(f"agent {a.entity!r} needs fatigue parameters")
        if a.species in FATIGUE_ATTRIBUTE and a.fatigue is not None:
            scale = cfg.registry.scales.get(FATIGUE_ATTRIBUTE[a.species])
            if scale is not None and scale.maximum is not None and a.fatigue.scale_max > scale.maximum:
                errors.append(f"agent {a.entity!r}: scale_max above the {scale.name} scale")

    by_entity = {a.entity: a for a in cfg.agents}
    names = [i.name for i in cfg.indicators]
    for dup in sorted({n for n in names if names.count(n) > 1}):
        errors.append(f"indicator {dup!r} monitored twice")
    for ind in cfg.indicators:
        agent = by_entity.get(ind.entity)
        if agent is None:
            errors.append(f"indicator {ind.name!r} references no live agent")
            continue
        if ind.attribute not in cfg.registry:
            errors.append(f"indicator {ind.name!r}: unknown attribute scale")
            continue
        if _indicator_source(agent, ind) is None:
            errors.append(f"indicator {ind.name!r}: agent of species {agent.species.value} has no such attribute")
        if cfg.threshold(ind) is None:
            errors.append(f"indicator {ind.name!r} has no individual threshold")
        if cfg.weight(ind) < 0:
            errors.append(f"indicator {ind.name!r}: negative weight")
    unknown_weights = set(cfg.weights) - set(names)
    for w in sorted(unknown_weights):
        errors.append(f"weight for unmonitored indicator {w!r}")
    if cfg.indicators and not any(cfg.weight(i) > 0 for i in cfg.indicators):
        errors.append("indicator weights are all zero")

    for m in cfg.maps:
        for problem in validate_partition(m):
            errors.append(f"map {'/'.join(m.indicators)}: {problem}")
        for name in m.indicators:
            if name not in names:
                errors.append(f"map axis {name!r} is not a monitored indicator")
    return errors


def _indicator_source(agent: AgentSpec, ind: Indicator) -> str | None:
    if FATIGUE_ATTRIBUTE.get(agent.species) == ind.attribute:
        return "fatigue"
    if agent.species is Species.INFECTION and ind.attribute == INFECTION_ATTRIBUTE:
        return "infection"
    return None


# ---------------------------------------------------------------------------
# scoring


def normalize(value: float, attribute: str, registry: AttributeRegistry, population: int | None = None) -> float:
    scale = registry[attribute]
    if scale.kind is ScaleKind.COUNT:
        if not population:
            raise ValueError(f"normalizing count attribute {attribute!r} needs a population size")
        x = value / population
    else:
        if scale.maximum is None:
            raise ValueError(f"attribute {attribute!r} has no scale maximum")
        x = value / scale.maximum
    return min(max(x, 0.0), 1.0)


def collective_risk(
    values: Mapping[str, float],
    weights: Mapping[str, float],
    registry: AttributeRegistry = DEFAULT_REGISTRY,
    population: int | None = None,
) -> float:
    """Weighted mean of the indicator values normalized to [0, 1].

    ``values`` is keyed by ``"entity.attribute"``; missing weights count as 1.
    Count attributes are normalized by ``population`` (giving a prevalence).
    """
    if not values:
        raise ValueError("collective risk needs at least one indicator")
    num = den = 0.0
    for name, v in values.items():
        attribute = Indicator.parse(name).attribute
        w = float(weights.get(name, 1.0))
        num += w * normalize(v, attribute, registry, population)
        den += w
    if den <= 0:
        raise ValueError("indicator weights are all zero")
    return min(max(num / den, 0.0), 1.0)


# ---------------------------------------------------------------------------
# trace


class AlertKind(str, enum.Enum):
    INDIVIDUAL = "individual"
    COLLECTIVE = "collective"


@dataclass(frozen=True)
class AlertEvent:
    cycle: int
    kind: AlertKind
    indicator: str | None = None
    value: float | None = None
    score: float | None = None
    level: str | None = None
    recommendation: str | None = None


@dataclass(frozen=True)
class TraceRow:
    cycle: int
    values: tuple[float, ...]
    individual: tuple[bool, ...]
    counts: tuple[int, int, int]
    collective_score: float
    collective_alert: bool
    crit_level: str | None = None
    case_id: int | None = None
    recommendation: str | None = None


@dataclass
class SimTrace:
    indicators: tuple[str, ...]
    rows: list[TraceRow] = field(default_factory=list)
    events: list[AlertEvent] = field(default_factory=list)
    map_consulted: bool = False

    def first_collective(self) -> int | None:
        return next((r.cycle for r in self.rows if r.collective_alert), None)

    def first_individual(self) -> int | None:
        return next((r.cycle for r in self.rows if any(r.individual)), None)

    def row(self, cycle: int) -> TraceRow:
        return self.rows[cycle]


# ---------------------------------------------------------------------------
# engine


class Simulation:
    """One seeded run. Owns its particle world, agents, case base and maps."""

    def __init__(self, config: SimConfig, case_base: cbr.CaseBase | None = None, seed: int | None = None):
        errors = validate_config(config)
        if errors:
            raise ConfigError(errors)
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.world: ParticleWorld = init_population(config.infection, self.seed)
        self.population = config.infection.n_particles
        self.agents = {a.entity: self._init_agent(a) for a in config.agents}
        if not any(a.species is Species.ALERT for a in config.agents):
            self.agents["alert"] = AgentState(
                "alert", Species.ALERT, {}, DEFAULT_ROLES[Species.ALERT], AgentSpec("alert", Species.ALERT)
            )
        enc = cbr.CategoricalEncoding(config.cbr.encoding, config.cbr.sigma, config.taxonomy)
        if case_base is None:
            case_base = cbr.CaseBase(list(config.initial_cases), config.cbr.acceptance_threshold, enc)
        self.case_base = case_base
        self.maps: list[RegionMap] = list(config.maps)
        self.pending: list[cbr.PendingCase] = []
        self.thresholds: dict[str, float] = {i.name: config.threshold(i) for i in config.indicators}
        names = tuple(i.name for i in config.indicators)
        self.trace = SimTrace(names, map_consulted=config.map_for(names) is not None)

    @staticmethod
    def _init_agent(spec: AgentSpec) -> AgentState:
        attrs: dict[str, float] = {}
        if spec.species in FATIGUE_ATTRIBUTE:
            attrs[FATIGUE_ATTRIBUTE[spec.species]] = spec.fatigue.a
        roles = spec.roles or DEFAULT_ROLES.get(spec.species, RoleDescriptors())
        return AgentState(spec.entity, spec.species, attrs, roles, spec)

    def _value(self, ind: Indicator) -> float:
        if ind.attribute == INFECTION_ATTRIBUTE and self.agents[ind.entity].species is Species.INFECTION:
            return float(infection_metrics(self.world).infected_count)
        return self.agents[ind.entity].attributes[ind.attribute]

    def _map_index(self, names: Sequence[str]) -> int | None:
        if not 2 <= len(names) <= 3:
            return None
        for idx, m in enumerate(self.maps):
            if set(m.indicators) == set(names):
                return idx
        return None

    def step(self, cycle: int) -> list[AlertEvent]:
        cfg = self.config
        if not 0 <= cycle < cfg.horizon:
            raise ValueError(f"cycle {cycle} outside [0, {cfg.horizon})")

        # (1) fatigue laws
        for agent in self.agents.values():
            if agent.species in FATIGUE_ATTRIBUTE:
                agent.attributes[FATIGUE_ATTRIBUTE[agent.species]] = fatigue_at(agent.spec.fatigue, cycle)
        # (2) infection
        self.world, _ = step_infection(self.world)

        # (3) individual thresholds
        events: list[AlertEvent] = []
        names = self.trace.indicators
        values = tuple(self._value(i) for i in cfg.indicators)
        flags = []
        for ind, v in zip(cfg.indicators, values):
            fired = v >= self.thresholds[ind.name]
            flags.append(fired)
            if fired:
                events.append(AlertEvent(cycle, AlertKind.INDIVIDUAL, ind.name, value=v))

        # (4) collective score and criticality space
        score = collective_risk(dict(zip(names, values)), cfg.weights, cfg.registry, self.population)
        level = None
        map_idx = self._map_index(names)
        if map_idx is not None:
            m = self.maps[map_idx]
            by_name = dict(zip(names, values))
            level = classify(m, [by_name[n] for n in m.indicators])
        collective = score >= cfg.collective_threshold or (
            level is not None and level == self.maps[map_idx].max_level
        )

        # (5) case-based reasoning on feed cycles
        case_id = recommendation = None
        if cycle % cfg.cbr.feed_interval == 0:
            problem = cbr.elaborate(((i.entity, i.attribute, v) for i, v in zip(cfg.indicators, values)), cycle)
            fallback = cfg.cbr.fallback_alert if collective else cfg.cbr.fallback_normal
            result = cbr.run_cycle(
                problem,
                self.case_base,
                cfg.taxonomy,
                self.maps,
                fallback=fallback,
                thresholds=self.thresholds,
                registry=cfg.registry,
                auto_retain=cfg.cbr.auto_retain,
                update_maps=cfg.cbr.update_maps,
            )
            self.maps = result.maps
            for key, value in result.outcome.thresholds.items():
                self.thresholds.setdefault(key, value)
            if result.pending is not None:
                self.pending.append(result.pending)
                case = result.pending.case
                case_id, recommendation = case.id, case.solution.recommendation
            log.debug("cycle %d: cbr %s -> case %s", cycle, result.outcome.kind.value, case_id)

        if collective:
            events.append(
                AlertEvent(cycle, AlertKind.COLLECTIVE, score=score, level=level, recommendation=recommendation)
            )
        self.trace.rows.append(
            TraceRow(cycle, values, tuple(flags), self.world.counts(), score, collective, level, case_id, recommendation)
        )
        self.trace.events.extend(events)
        return events

    def run(self) -> SimTrace:
        for cycle in range(len(self.trace.rows), self.config.horizon):
            self.step(cycle)
        return self.trace


def run(config: SimConfig, seed: int | None = None) -> SimTrace:
    return Simulation(config, seed=seed).run()


# ---------------------------------------------------------------------------
# batch


@dataclass(frozen=True)
class RunSummary:
    seed: int
    first_collective: int | None
    first_individual: int | None
    score_at_reference: float
    silent_collective: int | None  # first collective alert with no individual alert that cycle


@dataclass
class BatchResult:
    reference_cycle: int
    runs: list[RunSummary]
    traces: list[SimTrace] = field(default_factory=list, repr=False)

    @property
    def score_mean(self) -> float:
        return float(np.mean([r.score_at_reference for r in self.runs]))

    @property
    def score_std(self) -> float:
        # population deviation: a single run has zero spread
        return float(np.std([r.score_at_reference for r in self.runs]))

    @property
    def trigger_cycles(self) -> list[int | None]:
        return [r.first_collective for r in self.runs]

    @property
    def trigger_mean(self) -> float:
        hits = [c for c in self.trigger_cycles if c is not None]
        return float(np.mean(hits)) if hits else math.nan

    @property
    def trigger_std(self) -> float:
        hits = [c for c in self.trigger_cycles if c is not None]
        return float(np.std(hits)) if hits else math.nan


def summarize(trace: SimTrace, seed: int, reference_cycle: int) -> RunSummary:
    silent = next((r.cycle for r in trace.rows if r.collective_alert and not any(r.individual)), None)
    return RunSummary(
        seed,
        trace.first_collective(),
        trace.first_individual(),
        trace.rows[reference_cycle].collective_score,
        silent,
    )


def batch(config: SimConfig, n_runs: int, base_seed: int | None = None, keep_traces: bool = False) -> BatchResult:
    """``n_runs`` independent runs seeded ``base_seed .. base_seed + n_runs - 1``.

    Every run starts from its own copy of the configured initial case base.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    base = config.seed if base_seed is None else base_seed
    result = BatchResult(config.ref_cycle, [])
    for k in range(n_runs):
        seed = base + k
        trace = run(config, seed=seed)
        result.runs.append(summarize(trace, seed, config.ref_cycle))
        if keep_traces:
            result.traces.append(trace)
    return result
