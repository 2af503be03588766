"""BER sweeps across protocols, CSV emission and gain tables.

runs.csv has one row per (protocol, ber, seed, flow) plus a flow="total"
aggregate row; gains.csv compares the flexible-forwarding protocol against
each baseline from per-cell mean aggregate throughput. Gains are always
recomputed from the written runs.csv text, so regenerating them from the
file reproduces the gain table byte for byte.
"""
from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass
from multiprocessing import Pool

from .config import ScenarioConfig
from .core import Protocol
from .engine import run, throughput
from .node import Metrics

RUNS_HEADER = ["scenario", "protocol", "ber", "seed", "flow", "delivered_bytes",
               "throughput_bps", "tx_total", "tx_coded", "retx", "dups",
               "helper_fwds"]
GAINS_HEADER = ["scenario", "ber", "base", "gain_pct"]

UNDEFINED_GAIN = "—"


@dataclass(frozen=True)
class Cell:
    protocol: Protocol
    ber: float
    seed: int


def sweep_cells(cfg: ScenarioConfig) -> list[Cell]:
    return [
        Cell(protocol, ber, seed)
        for protocol in sorted(cfg.protocols)
        for ber in cfg.bers
        for seed in cfg.seeds
    ]


def run_cell(cfg: ScenarioConfig, cell: Cell) -> list[dict]:
    scenario = cfg.scenario(cell.protocol, cell.ber)
    metrics = run(scenario, cell.seed)
    return rows_for_run(cfg.name, scenario, cell, metrics)


def rows_for_run(name: str, scenario, cell: Cell, metrics: Metrics) -> list[dict]:
    rows = []
    shared = {
        "scenario": name,
        "protocol": cell.protocol.name.lower(),
        "ber": repr(cell.ber),
        "seed": cell.seed,
        "tx_total": metrics.tx_data,
        "tx_coded": metrics.tx_coded,
        "retx": metrics.retx,
        "dups": metrics.dups_suppressed,
        "helper_fwds": metrics.helper_forwards,
    }
    total_bytes = 0
    total_bps = 0.0
    for i, fl in enumerate(scenario.flows):
        per_flow, _ = throughput(metrics, fl.duration)
        bps = per_flow.get(i, 0.0)
        delivered = metrics.delivered_bytes[i]
        total_bytes += delivered
        total_bps += bps
        rows.append(dict(shared, flow=str(i), delivered_bytes=delivered,
                         throughput_bps=f"{bps:.3f}"))
    rows.append(dict(shared, flow="total", delivered_bytes=total_bytes,
                     throughput_bps=f"{total_bps:.3f}"))
    return rows


def _worker(args) -> list[dict]:
    cfg, cell = args
    return run_cell(cfg, cell)


def run_sweep(cfg: ScenarioConfig, jobs: int = 1,
              progress=None) -> list[dict]:
    """Run every (protocol, ber, seed) cell; rows come back in sweep order."""
    cells = sweep_cells(cfg)
    results: list[list[dict]] = []
    if jobs > 1:
        with Pool(processes=jobs) as pool:
            it = pool.imap(_worker, [(cfg, c) for c in cells])
            for i, cell in enumerate(cells):
                try:
                    results.append(next(it))
                except Exception as exc:
                    raise RuntimeError(_cell_error(cell, exc)) from exc
                if progress:
                    progress(i + 1, len(cells), cell)
    else:
        for i, cell in enumerate(cells):
            try:
                results.append(run_cell(cfg, cell))
            except Exception as exc:
                raise RuntimeError(_cell_error(cell, exc)) from exc
            if progress:
                progress(i + 1, len(cells), cell)
    return [row for rows in results for row in rows]


def _cell_error(cell: Cell, exc: Exception) -> str:
    return (f"run failed for protocol={cell.protocol.name.lower()} "
            f"ber={cell.ber!r} seed={cell.seed}: {exc}")


def rows_to_csv(rows: list[dict], header: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_runs_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows, RUNS_HEADER))


def mean_cell_throughput(rows: list[dict]) -> dict[tuple[str, str, str], float]:
    """Mean aggregate throughput per (scenario, protocol, ber) across seeds."""
    samples: dict[tuple[str, str, str], list[float]] = {}
    for row in rows:
        if row["flow"] != "total":
            continue
        key = (row["scenario"], row["protocol"], row["ber"])
        samples.setdefault(key, []).append(float(row["throughput_bps"]))
    return {key: statistics.fmean(vals) for key, vals in samples.items()}


def cell_stats(rows: list[dict]) -> list[dict]:
    """Per-cell mean and standard deviation of aggregate throughput."""
    samples: dict[tuple[str, str, str], list[float]] = {}
    for row in rows:
        if row["flow"] != "total":
            continue
        key = (row["scenario"], row["protocol"], row["ber"])
        samples.setdefault(key, []).append(float(row["throughput_bps"]))
    out = []
    for (scenario, protocol, ber), vals in samples.items():
        std = statistics.stdev(vals) if len(vals) > 1 else 0.0
        out.append({
            "scenario": scenario, "protocol": protocol, "ber": ber,
            "mean_bps": statistics.fmean(vals), "std_bps": std,
            "seeds": len(vals),
        })
    return out


def gain_table(rows: list[dict],
               baselines: tuple[str, ...] = ("bend", "cope", "plain"),
               ) -> list[dict]:
    """Percentage throughput gain of flexonc over each baseline per BER."""
    means = mean_cell_throughput(rows)
    scenarios = sorted({s for s, _, _ in means})
    out = []
    for scenario in scenarios:
        bers = [b for s, p, b in means if s == scenario and p == "flexonc"]
        bers.sort(key=float)
        for ber in bers:
            t_flex = means[(scenario, "flexonc", ber)]
            for base in baselines:
                key = (scenario, base, ber)
                if key not in means:
                    raise KeyError(
                        f"missing baseline cell {base!r} at ber={ber} "
                        f"in scenario {scenario!r}")
                t_base = means[key]
                if t_base == 0.0:
                    gain = UNDEFINED_GAIN
                else:
                    gain = f"{(t_flex - t_base) / t_base * 100.0:.2f}"
                out.append({"scenario": scenario, "ber": ber, "base": base,
                            "gain_pct": gain})
    return out


def read_runs_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_gains_csv(gains: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(gains, GAINS_HEADER))
