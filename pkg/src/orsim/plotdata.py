"""Tidy CSV series for regenerating the standard figures from run outputs."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

from .domain import DEFAULT_REGISTRY, AttributeRegistry, ScaleKind
from .persistence import load_config, read_trace


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _indicator_columns(fieldnames: Sequence[str]) -> list[str]:
    start = fieldnames.index("time_s") + 1
    end = fieldnames.index("n_susceptible")
    cols = list(fieldnames[start:end])
    return [c for c in cols if not c.startswith("alert:")]


def trace_series(rows: list[dict[str, str]], registry: AttributeRegistry, out: Path, prefix: str = "") -> list[Path]:
    """fatigue.csv (long form), infection.csv (counts by state) and collective.csv for one trace."""
    if not rows:
        return []
    indicators = _indicator_columns(list(rows[0].keys()))
    scaled = [n for n in indicators if n.split(".", 1)[1] in registry and registry[n.split(".", 1)[1]].kind is ScaleKind.SCALE]
    written = [
        _write(
            out / f"{prefix}fatigue.csv",
            ["cycle", "indicator", "value", "individual_alert"],
            ([r["cycle"], n, r[n], r[f"alert:{n}"]] for r in rows for n in scaled),
        ),
        _write(
            out / f"{prefix}infection.csv",
            ["cycle", "state", "count"],
            (
                [r["cycle"], state, r[f"n_{state}"]]
                for r in rows
                for state in ("susceptible", "infected", "resistant")
            ),
        ),
        _write(
            out / f"{prefix}collective.csv",
            ["cycle", "collective_score", "collective_alert", "any_individual_alert", "crit_level"],
            (
                [r["cycle"], r["collective_score"], r["collective_alert"],
                 "true" if any(r[f"alert:{n}"] == "true" for n in indicators) else "false", r["crit_level"]]
                for r in rows
            ),
        ),
    ]
    return written


def write_plot_data(run_dir: Path, out: Path, config_path: str | None = None) -> list[Path]:
    registry = load_config(config_path).registry if config_path else DEFAULT_REGISTRY
    written: list[Path] = []
    single = run_dir / "trace.csv"
    if single.exists():
        written += trace_series(read_trace(single), registry, out)
    summary = run_dir / "summary.json"
    if summary.exists():
        data = json.loads(summary.read_text())
        written.append(
            _write(
                out / "batch_triggers.csv",
                ["run", "seed", "first_collective", "first_individual", "score_at_reference"],
                (
                    [r["run"], r["seed"], "" if r["first_collective"] is None else r["first_collective"],
                     "" if r["first_individual"] is None else r["first_individual"], r["score_at_reference"]]
                    for r in data["runs"]
                ),
            )
        )
        rows = []
        for trace in sorted(run_dir.glob("run_*.csv")):
            run = trace.stem.split("_", 1)[1]
            rows.extend([run, r["cycle"], r["collective_score"], r["collective_alert"]] for r in read_trace(trace))
        if rows:
            written.append(_write(out / "batch_collective.csv", ["run", "cycle", "collective_score", "collective_alert"], rows))
    return written
