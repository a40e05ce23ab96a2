"""Acceptance suite: one test per primary criterion, each reporting a PASS/FAIL line."""
import io
import json
import math
import time
from importlib import resources

import numpy as np

from conftest import CASE_1, CASE_8, CASE_35, TARGET, q
from oracles import box_scan, brute_rank, cell_scan, oracle_step, quad_distance

from orsim import cbr, cli, persistence
from orsim.criticality import RegionMap2D, classify, classify2d
from orsim.domain import DEFAULT_TAXONOMY, Case, Quadruplet, Solution, State, validate_case
from orsim.fatigue import FatigueParams, fatigue_at
from orsim.infection import InfectionParams, init_population, infection_metrics, step_infection
from orsim.sim import Simulation, run

LABELS = ["surgeon", "nurse", "bistoury", "staphy", "patient"]
ATTRS = ["fatigue", "mat_tiredness", "infection"]


def shipped_configs():
    data = resources.files("orsim") / "data"
    return sorted(str(p) for p in data.iterdir() if p.name.endswith(".yaml"))


def as_tuples(problem):
    return [(x.entity, x.attribute, x.value, x.cycle) for x in problem]


def random_problem(rng, n):
    out = []
    for _ in range(n):
        value = 0.0 if rng.random() < 0.1 else float(rng.uniform(0, 500))
        out.append(Quadruplet(LABELS[rng.integers(5)], ATTRS[rng.integers(3)], value, int(rng.integers(0, 2000))))
    return tuple(out)


# ---------------------------------------------------------------------------


def test_worked_cbr_example(criterion):
    t0 = time.perf_counter()
    cb = cbr.CaseBase([CASE_1, CASE_8, CASE_35])
    found = cbr.retrieve(TARGET, cb)
    out = cbr.reuse(TARGET, found, cb, DEFAULT_TAXONOMY)
    ms = (time.perf_counter() - t0) * 1e3

    ids = [c.case.id for c in found]
    d = {c.case.id: c.distance for c in found}
    oracle = {k: quad_distance(as_tuples(TARGET), as_tuples(c.problem)) for k, c in ((8, CASE_8), (35, CASE_35))}
    step = out.path.steps[0] if out.path and out.path.steps else None
    checks = {
        "count filter drops case 1": 1 not in ids,
        "case 35 ranked first": ids == [35, 8],
        "oracle values": abs(oracle[35] - 1.1938) <= 5e-4 and abs(oracle[8] - 1.5756) <= 5e-4,
        "engine within 1e-9 of oracle": all(abs(d[k] - oracle[k]) <= 1e-9 for k in oracle),
        "accept 35 / reject 8 at 1.2": d[35] <= 1.2 < d[8],
        "adapted nurse->surgeon": out.kind is cbr.ReuseKind.ADAPTED
        and (step.source, step.target, step.ancestor) == ("nurse", "surgeon", "personal"),
        "solution (O, Pause Pers.)": out.solution == Solution(State.ALERT, "Pause Pers."),
    }
    bad = [k for k, v in checks.items() if not v]
    detail = f"d35={d[35]:.4f} d8={d[8]:.4f} order={ids} {out.kind.value} in {ms:.1f} ms"
    criterion("1 worked CBR example", not bad, detail + (f"; failed: {bad}" if bad else ""))


def test_distance_metric_properties(criterion):
    rng = np.random.default_rng(2024)
    identity_bad = sym_bad = range_bad = 0
    worst_identity = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        a, b = random_problem(rng, n), random_problem(rng, n)
        self_d = cbr.distance(a, a)
        if self_d != 0.0:
            identity_bad += 1
            worst_identity = max(worst_identity, self_d)
        dab, dba = cbr.distance(a, b), cbr.distance(b, a)
        sym_bad += abs(dab - dba) > 1e-12
        range_bad += not 0.0 <= dab <= 2.0

    rank_bad = 0
    for _ in range(20):
        n = int(rng.integers(1, 4))
        target = random_problem(rng, n)
        size = int(rng.integers(1, 101))
        cases = [Case(random_problem(rng, int(rng.integers(1, 4))), Solution(State.NORMAL, "Normal"), id=i)
                 for i in range(size)]
        got = cbr.retrieve(target, cbr.CaseBase(cases))
        ids, dists = brute_rank(as_tuples(target), [(c.id, as_tuples(c.problem)) for c in cases])
        ok = [c.case.id for c in got] == ids and all(abs(c.distance - x) <= 1e-12 for c, x in zip(got, dists))
        rank_bad += not ok

    ok = identity_bad == sym_bad == range_bad == rank_bad == 0
    detail = (
        f"identity violated on {identity_bad}/1000 (max d(p,p)={worst_identity:.4f}), "
        f"symmetry {sym_bad}, range {range_bad}, ranking mismatches {rank_bad}/20"
    )
    if identity_bad:
        detail += "; the all-pairs mean compares distinct quadruplets of p with each other, so d(p,p)>0 when n>1"
    criterion("2 distance metric properties", ok, detail)


def test_fatigue_law(criterion):
    rng = np.random.default_rng(7)
    worst = 0.0
    clamped = 0
    for _ in range(10_000):
        scale = 5.0 if rng.random() < 0.5 else 3.0
        a = float(rng.uniform(1e-3, scale))
        k = float(rng.uniform(0.0, 0.01))
        t = int(rng.integers(0, 5001))
        expected = min(a * math.exp(k * t), scale)
        clamped += expected == scale
        got = fatigue_at(FatigueParams(a=a, k=k, scale_max=scale), t)
        worst = max(worst, abs(got - expected) / expected)
    f0 = all(fatigue_at(FatigueParams(a=a, k=0.004), 0) == a for a in (0.1, 1.0, 2.5, 5.0))
    ok = worst <= 1e-9 and f0 and 0 < clamped < 10_000
    criterion("3 fatigue law", ok, f"max rel err {worst:.2e} over {10_000 - clamped} free + {clamped} clamped samples, f(0)=a: {f0}")


def test_infection_conservation_and_oracle(criterion, default_config):
    params = default_config.infection
    w = init_population(params, default_config.seed)
    m0 = infection_metrics(w)
    total = sum(w.counts())
    drift = 0
    for _ in range(1000):
        w, _ = step_infection(w)
        drift += sum(w.counts()) != total

    rng = np.random.default_rng(11)
    mismatched = 0
    for seed in range(100):
        s, i, r = (int(x) for x in rng.multinomial(int(rng.integers(2, 51)), [0.6, 0.3, 0.1]))
        small = InfectionParams(s, max(i, 1), r, int(rng.integers(0, 8)), contact_radius=float(rng.uniform(0.05, 0.3)),
                                p_infect=float(rng.uniform(0.2, 1)), p_neutralize=float(rng.uniform(0, 1)), step_size=0.05)
        sw = init_population(small, seed)
        for _ in range(20):
            pos, dec, states = oracle_step(sw)
            sw, _ = step_infection(sw)
            if sw.positions.tolist() != pos or sw.decontaminants.tolist() != dec or sw.states.tolist() != states:
                mismatched += 1
                break

    ok = drift == 0 and mismatched == 0 and m0.prevalence == 0.01 and total == 500
    detail = (f"S+I+R={total} drifted on {drift}/1000 steps, oracle mismatches {mismatched}/100 trials, "
              f"initial prevalence {m0.prevalence:.1%}")
    criterion("4 infection conservation and oracle", ok, detail)


def test_collective_alert_without_individual(criterion, default_config):
    trace = run(default_config)
    silent = [r.cycle for r in trace.rows if r.collective_alert and not any(r.individual)]
    detail = (f"{len(silent)} silent cycles, first {silent[0] if silent else None}; "
              f"first individual alert {trace.first_individual()}")
    criterion("5 collective alert without individual alert", bool(silent), detail)


def test_batch_reproducibility_and_dispersion(criterion, tmp_path):
    t0 = time.perf_counter()
    code_a = cli.main(["batch", "--runs", "25", "--out", str(tmp_path / "a")], out=io.StringIO())
    elapsed = time.perf_counter() - t0
    code_b = cli.main(["batch", "--runs", "25", "--out", str(tmp_path / "b")], out=io.StringIO())

    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    identical = files == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files
    )
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    triggers = [r["first_collective"] for r in summary["runs"]]
    std = summary["score_std"]
    ok = code_a == code_b == 0 and elapsed < 120 and len(triggers) == 25 and identical and std <= 0.1
    detail = (f"{elapsed:.1f} s, {len(triggers)} trigger cycles (mean {summary['trigger_mean']}), "
              f"byte-identical rerun: {identical}, score std {std:.4f} at cycle {summary['reference_cycle']}")
    criterion("6 batch reproducibility and dispersion", ok, detail)


def test_case_base_growth(criterion, default_config, tmp_path):
    sim = Simulation(default_config)
    sim.run()
    cases = list(sim.case_base)
    invalid = 0
    for c in cases:
        try:
            validate_case(c, default_config.registry, default_config.taxonomy)
        except Exception:
            invalid += 1
    path = tmp_path / "cases.jsonl"
    persistence.save_casebase(sim.case_base, path)
    back = persistence.load_casebase(path)
    persistence.save_casebase(back, tmp_path / "again.jsonl")
    round_trip = list(back) == cases and path.read_bytes() == (tmp_path / "again.jsonl").read_bytes()
    ok = len(cases) == 20 and invalid == 0 and round_trip
    criterion("7 case-base growth", ok, f"{len(cases)} cases retained, {invalid} invalid, round-trip: {round_trip}")


def _check_map(m, rng):
    """(fuzz failures, edge failures) for one map."""
    his = [a.hi for a in (m.x, m.y)] if isinstance(m, RegionMap2D) else [a.hi for a in m.axes]
    los = [a.lo for a in (m.x, m.y)] if isinstance(m, RegionMap2D) else [a.lo for a in m.axes]
    if isinstance(m, RegionMap2D):
        shapes = [((c.x0, c.y0), (c.x1, c.y1)) for c in m.cells]

        def expected(p):
            hits = cell_scan([(c.x0, c.x1, c.y0, c.y1) for c in m.cells], his[0], his[1], *p)
            return m.cells[hits[0]].level if len(hits) == 1 else None
    else:
        shapes = [(b.lo, b.hi) for b in m.boxes]

        def expected(p):
            hits = box_scan(shapes, his, p)
            if len(hits) > 1:
                return None
            return m.boxes[hits[0]].level if hits else m.default_level

    def agrees(p):
        want = expected(p)
        try:
            got = classify(m, p)
        except ValueError:
            return False
        return want is not None and got == want and got in m.levels

    pts = rng.uniform(los, his, size=(100_000, len(los)))
    fuzz_bad = sum(not agrees(tuple(p)) for p in pts.tolist())

    edge_bad = 0
    for _ in range(1000):
        lo, hi = shapes[rng.integers(len(shapes))]
        p = rng.uniform(los, his).tolist()
        axis = int(rng.integers(len(los)))
        p[axis] = [lo, hi][rng.integers(2)][axis]
        edge_bad += not agrees(tuple(p))
    return fuzz_bad, edge_bad


def test_criticality_totality(criterion):
    rng = np.random.default_rng(5)
    report = []
    bad = 0
    for path in shipped_configs():
        cfg = persistence.load_config(path)
        for m in cfg.maps:
            fuzz_bad, edge_bad = _check_map(m, rng)
            bad += fuzz_bad + edge_bad
            report.append(f"{'/'.join(m.indicators)}: {fuzz_bad} fuzz + {edge_bad} edge failures")
    criterion("8 criticality totality", bad == 0 and bool(report), "; ".join(report))


def test_retain_driven_map_update(criterion, default_config):
    (m,) = default_config.maps
    point = (1.0, 100.0)
    before = classify2d(m, point)
    case = Case((q("surgeon", "fatigue", 1.0, 600), q("staphy", "infection", 100, 600)),
                Solution(State.ALERT, "Pause Pers."))
    _, maps = cbr.retain(case, cbr.CaseBase(), [m])
    after = classify2d(maps[0], point)
    ok = before == "acceptable" and after == "moderate"
    criterion("9 retain-driven map update", ok, f"cell at {point}: {before} -> {after}")
