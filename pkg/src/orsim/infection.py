"""Airborne contamination in the operating room as a random-walk particle world.

Particles live in the unit square and are Susceptible, Infected or Resistant.
Decontaminant agents wander the same arena and neutralize infected particles
they touch. Every draw from the generator happens in a fixed order per step:

1. one direction angle per particle, then one per decontaminant;
2. one uniform per particle for infection trials;
3. one uniform per particle for neutralization trials.

Contacts are evaluated synchronously on the positions after the move and the
states before any transition of the step.
"""
from __future__ import annotations

import copy
import enum
from dataclasses import dataclass

import numpy as np


class ParticleState(enum.IntEnum):
    SUSCEPTIBLE = 0
    INFECTED = 1
    RESISTANT = 2


class EmptyWorldError(ValueError):
    pass


@dataclass(frozen=True)
class InfectionParams:
    n_susceptible: int = 495
    n_infected: int = 5
    n_resistant: int = 0
    n_decontaminant: int = 10
    contact_radius: float = 0.02
    p_infect: float = 0.2
    p_neutralize: float = 0.5
    step_size: float = 0.01

    def __post_init__(self) -> None:
        for name in ("n_susceptible", "n_infected", "n_resistant", "n_decontaminant"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("p_infect", "p_neutralize"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.contact_radius > 0:
            raise ValueError("contact_radius must be positive")
        # a single reflection per axis is enough only for steps below half the arena
        if not 0 < self.step_size <= 0.5:
            raise ValueError("step_size must lie in (0, 0.5]")

    @property
    def n_particles(self) -> int:
        return self.n_susceptible + self.n_infected + self.n_resistant


@dataclass
class ParticleWorld:
    positions: np.ndarray  # (n, 2) float64
    states: np.ndarray  # (n,) int8, ParticleState values
    decontaminants: np.ndarray  # (m, 2) float64
    rng: np.random.Generator
    params: InfectionParams
    steps: int = 0

    @property
    def n_particles(self) -> int:
        return len(self.states)

    def counts(self) -> tuple[int, int, int]:
        c = np.bincount(self.states, minlength=3)
        return int(c[0]), int(c[1]), int(c[2])


@dataclass(frozen=True)
class StepEvents:
    infected: tuple[int, ...] = ()
    neutralized: tuple[int, ...] = ()


@dataclass(frozen=True)
class InfectionMetrics:
    susceptible_count: int
    infected_count: int
    resistant_count: int

    @property
    def total(self) -> int:
        return self.susceptible_count + self.infected_count + self.resistant_count

    @property
    def prevalence(self) -> float:
        return self.infected_count / self.total if self.total else 0.0


def init_population(params: InfectionParams, seed: int | np.random.Generator) -> ParticleWorld:
    if params.n_particles == 0:
        raise EmptyWorldError("the particle world needs at least one particle")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    positions = rng.random((params.n_particles, 2))
    decontaminants = rng.random((params.n_decontaminant, 2))
    states = np.repeat(
        np.array(list(ParticleState), dtype=np.int8),
        [params.n_susceptible, params.n_infected, params.n_resistant],
    )
    return ParticleWorld(positions, states, decontaminants, rng, params)


def infection_metrics(w: ParticleWorld) -> InfectionMetrics:
    s, i, r = w.counts()
    return InfectionMetrics(susceptible_count=s, infected_count=i, resistant_count=r)


# ---------------------------------------------------------------------------
# movement


def reflect(x: np.ndarray) -> np.ndarray:
    """Fold coordinates that left [0, 1] by less than one arena width back inside."""
    x = np.where(x < 0.0, -x, x)
    return np.where(x > 1.0, 2.0 - x, x)


def random_walk(points: np.ndarray, angles: np.ndarray, step_size: float) -> np.ndarray:
    if len(points) == 0:
        return points.copy()
    delta = np.column_stack((np.cos(angles), np.sin(angles))) * step_size
    return reflect(points + delta)


# ---------------------------------------------------------------------------
# neighbor search


class BinGrid:
    """Uniform binning of points in the unit square with cell width >= ``radius``.

    Only the 3x3 block of cells around a query can hold points within ``radius``.
    """

    def __init__(self, points: np.ndarray, radius: float):
        nb = max(1, int(1.0 / radius))
        while nb > 1 and 1.0 / nb < radius:
            nb -= 1
        self.nb = nb
        self.points = points
        self.radius = radius
        cx, cy = self._cells(points)
        keys = cx * nb + cy
        self.order = np.argsort(keys, kind="stable")
        self.counts = np.bincount(keys, minlength=nb * nb)
        self.starts = np.cumsum(self.counts) - self.counts

    def _cells(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = np.minimum((pts * self.nb).astype(np.int64), self.nb - 1)
        return c[:, 0], c[:, 1]

    def candidate_pairs(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(query index, point index) for every point in the 3x3 block of each query."""
        if len(queries) == 0 or len(self.points) == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        qx, qy = self._cells(queries)
        q_ids = np.arange(len(queries))
        off = np.array([-1, 0, 1])
        nx = (qx[:, None, None] + off[None, :, None]).repeat(3, axis=2).reshape(-1)
        ny = (qy[:, None, None] + off[None, None, :]).repeat(3, axis=1).reshape(-1)
        qq = np.repeat(q_ids, 9)
        ok = (nx >= 0) & (nx < self.nb) & (ny >= 0) & (ny < self.nb)
        keys = nx[ok] * self.nb + ny[ok]
        qq = qq[ok]
        c = self.counts[keys]
        total = int(c.sum())
        if total == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        first = np.repeat(self.starts[keys], c)
        offset = np.arange(total) - np.repeat(np.cumsum(c) - c, c)
        return np.repeat(qq, c), self.order[first + offset]

    def any_within(self, queries: np.ndarray) -> np.ndarray:
        """Boolean mask: does each query have at least one point within ``radius``."""
        hit = np.zeros(len(queries), dtype=bool)
        qi, pi = self.candidate_pairs(queries)
        if len(qi):
            d = queries[qi] - self.points[pi]
            close = (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) <= self.radius * self.radius
            hit[qi[close]] = True
        return hit


# ---------------------------------------------------------------------------
# stepping


def apply_contacts(
    positions: np.ndarray,
    states: np.ndarray,
    decontaminants: np.ndarray,
    u_infect: np.ndarray,
    u_neutralize: np.ndarray,
    params: InfectionParams,
) -> tuple[np.ndarray, StepEvents]:
    """State transitions for one step given post-move positions and the step's uniforms."""
    new = states.copy()
    sus = np.flatnonzero(states == ParticleState.SUSCEPTIBLE)
    inf = np.flatnonzero(states == ParticleState.INFECTED)

    infected: np.ndarray = np.empty(0, dtype=np.int64)
    if len(sus) and len(inf) and params.p_infect > 0:
        exposed = BinGrid(positions[inf], params.contact_radius).any_within(positions[sus])
        infected = sus[exposed & (u_infect[sus] < params.p_infect)]

    neutralized: np.ndarray = np.empty(0, dtype=np.int64)
    if len(inf) and len(decontaminants) and params.p_neutralize > 0:
        touched = BinGrid(decontaminants, params.contact_radius).any_within(positions[inf])
        neutralized = inf[touched & (u_neutralize[inf] < params.p_neutralize)]

    new[infected] = ParticleState.INFECTED
    new[neutralized] = ParticleState.SUSCEPTIBLE
    return new, StepEvents(tuple(infected.tolist()), tuple(neutralized.tolist()))


def step_infection(w: ParticleWorld) -> tuple[ParticleWorld, StepEvents]:
    """Advance one cycle; the input world is left untouched."""
    rng = copy.deepcopy(w.rng)
    n, m = w.n_particles, len(w.decontaminants)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n + m)
    u_infect = rng.random(n)
    u_neutralize = rng.random(n)

    positions = random_walk(w.positions, angles[:n], w.params.step_size)
    decontaminants = random_walk(w.decontaminants, angles[n:], w.params.step_size)
    states, events = apply_contacts(positions, w.states, decontaminants, u_infect, u_neutralize, w.params)
    return ParticleWorld(positions, states, decontaminants, rng, w.params, w.steps + 1), events
