"""Evaluation, equivariance certification, and the neighbor-graph benchmark.

The certification harness is the executable form of the model's symmetry
contract: running the network on rigidly moved inputs must reproduce the
original probabilities and move the output coordinates by exactly the same
rigid transform, for proper and improper rotations alike. Initialization
noise is shared across the two frames by drawing the chain once and
transforming it, so the comparison is exact rather than statistical.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from . import geometry as geo
from . import layers as ly
from . import model as mdl
from .data import ProteinRecord, synthetic_record, transform_record_coords

METRICS = ("recovery", "identity", "rmsd", "perplexity")


def recovery(predicted: str, record: ProteinRecord, fragments: np.ndarray | None = None) -> float:
    """Percent of non-fragment residues predicted correctly; a record with
    no free residues scores 100 by convention."""
    if len(predicted) != record.n:
        raise ValueError(f"length mismatch: {len(predicted)} vs {record.n}")
    frag = record.fragments if fragments is None else np.asarray(fragments, dtype=np.int64)
    mask = np.ones(record.n, dtype=bool)
    mask[frag] = False
    free = np.where(mask)[0]
    if free.size == 0:
        return 100.0
    hits = sum(1 for i in free if predicted[i] == record.sequence[i])
    return 100.0 * hits / free.size


def sequence_identity(a: str, b: str) -> float:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return 100.0 * sum(1 for x, y in zip(a, b) if x == y) / len(a)


def perplexity(pred: mdl.Prediction, record: ProteinRecord, fragments: np.ndarray | None = None) -> float:
    """exp(mean negative log-probability of the true residue) over free
    positions; 1.0 when every position is a fragment."""
    frag = pred.fragments if fragments is None else np.asarray(fragments, dtype=np.int64)
    mask = np.ones(record.n, dtype=bool)
    mask[frag] = False
    free = np.where(mask)[0]
    if free.size == 0:
        return 1.0
    probs = pred.probabilities.data
    p_true = np.array(
        [max(probs[i, mdl.AA_INDEX[record.sequence[i]]], mdl.PROB_FLOOR) for i in free]
    )
    return float(np.exp(-np.log(p_true).mean()))


@dataclass
class EvalReport:
    per_record: list[dict]
    aggregates: dict[str, dict[str, float]]


def evaluate_records(
    records: list[ProteinRecord],
    params: mdl.ModelParams,
    config: mdl.ModelConfig,
    seed: int | None = None,
) -> EvalReport:
    """Forward each record, decode, and score recovery / identity / Kabsch
    RMSD / perplexity with mean and median aggregates."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    rows = []
    with ad.no_grad():
        for record in records:
            pred = mdl.forward(record, params, config, rng=rng)
            rows.append(
                {
                    "id": record.id,
                    "recovery": recovery(pred.sequence, record),
                    "identity": sequence_identity(pred.sequence, record.sequence),
                    "rmsd": geo.kabsch_rmsd(pred.coords.data, record.coords),
                    "perplexity": perplexity(pred, record),
                }
            )
    aggregates = {
        m: {
            "mean": float(np.mean([r[m] for r in rows])),
            "median": float(np.median([r[m] for r in rows])),
        }
        for m in METRICS
    }
    return EvalReport(per_record=rows, aggregates=aggregates)


def eval_report_json(report: EvalReport) -> str:
    return json.dumps(
        {"per_record": report.per_record, "aggregates": report.aggregates},
        indent=2,
        sort_keys=True,
    )


def eval_report_text(report: EvalReport) -> str:
    header = f"{'id':<16}" + "".join(f"{m:>12}" for m in METRICS)
    lines = [header, "-" * len(header)]
    for row in report.per_record:
        lines.append(f"{row['id']:<16}" + "".join(f"{row[m]:>12.4f}" for m in METRICS))
    lines.append("-" * len(header))
    for stat in ("mean", "median"):
        lines.append(
            f"{stat:<16}" + "".join(f"{report.aggregates[m][stat]:>12.4f}" for m in METRICS)
        )
    return "\n".join(lines)


def eval_report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["id", *METRICS])
    for row in report.per_record:
        writer.writerow([row["id"], *(row[m] for m in METRICS)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# equivariance certification


@dataclass
class EquivarianceReport:
    trials: int
    tolerance: float
    prob_tolerance: float
    max_coord_deviation: float
    max_prob_deviation: float
    passed: bool


def certify_equivariance(
    params: mdl.ModelParams,
    config: mdl.ModelConfig,
    trials: int = 20,
    tolerance: float = 1e-7,
    prob_tolerance: float | None = None,
    seed: int = 0,
    sizes: tuple[int, ...] = (8, 32),
) -> EquivarianceReport:
    """Forward random records in an original and a rigidly moved frame
    (proper and improper transforms each trial) and compare: probabilities
    must match, coordinates must move by exactly the transform. Coordinate
    deviation is measured relative to 1 + the output magnitude."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    prob_tol = tolerance if prob_tolerance is None else prob_tolerance
    rng = np.random.default_rng(seed)
    max_coord = 0.0
    max_prob = 0.0
    with ad.no_grad():
        for trial in range(trials):
            n = int(rng.choice(sizes))
            n_frag = max(1, n // 4)
            record = synthetic_record(f"trial{trial}", n, n_frag, rng)
            x0 = geo.init_coordinates(
                record.coords[record.fragments], record.fragments, n, rng
            )
            # chain growth uses a fixed step length, so many pairwise distances
            # tie exactly; a neighbor graph is discontinuous at a tie, and the
            # two frames can break it differently at round-off scale. Jitter
            # makes every distance generic so the certificate measures the
            # network, not the knife edge.
            x0 = x0 + rng.uniform(-0.3, 0.3, size=x0.shape)
            base = mdl.forward(record, params, config, initial_coords=x0)
            for proper in (True, False):
                rt = geo.random_rigid(rng, proper=proper)
                moved_record = transform_record_coords(
                    record, geo.apply_rigid(record.coords, rt)
                )
                moved = mdl.forward(
                    moved_record, params, config, initial_coords=geo.apply_rigid(x0, rt)
                )
                want = geo.apply_rigid(base.coords.data, rt)
                scale = 1.0 + float(np.max(np.abs(base.coords.data)))
                coord_dev = float(np.max(np.abs(moved.coords.data - want))) / scale
                prob_dev = float(
                    np.max(np.abs(moved.probabilities.data - base.probabilities.data))
                )
                max_coord = max(max_coord, coord_dev)
                max_prob = max(max_prob, prob_dev)
    return EquivarianceReport(
        trials=trials,
        tolerance=tolerance,
        prob_tolerance=prob_tol,
        max_coord_deviation=max_coord,
        max_prob_deviation=max_prob,
        passed=(max_coord <= tolerance and max_prob <= prob_tol),
    )


# ---------------------------------------------------------------------------
# kNN vs complete-graph benchmark


@dataclass
class BenchReport:
    width: int
    repetitions: int
    entries: list[dict] = field(default_factory=list)


def knn_edge_count(n: int, k: int) -> int:
    return n * min(k, n - 1)


def full_edge_count(n: int) -> int:
    return n * (n - 1)


def _neighborhood_forward(h, x, params, k):
    graph = geo.knn(x.data, k)
    m, _ = ly.message_update(h, x, graph, params)
    ly.coordinate_update(x, m, graph, params)
    ly.residue_update(h, m, params)
    return graph


def bench_graphs(
    sizes=(50, 100, 200, 500, 1000),
    k: int = 30,
    width: int = 32,
    repetitions: int = 5,
    seed: int = 0,
) -> BenchReport:
    """Median wall time of the neighborhood sub-layer (graph build included)
    for the kNN graph vs the complete graph at each N. Pinned to one BLAS
    thread; one warm-up run per cell is discarded."""
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3 for a stable median")
    rng = np.random.default_rng(seed)
    eq_params = ly.init_equivariant_params(rng, width)
    eq_params.coord_w2.data[:] = rng.uniform(-0.1, 0.1, size=(width, 1))
    report = BenchReport(width=width, repetitions=repetitions)
    with threadpool_limits(limits=1), ad.no_grad():
        for n in sizes:
            h = ad.Tensor(rng.normal(size=(n, width)))
            x = ad.Tensor(rng.normal(size=(n, 3)) * float(n) ** (1 / 3) * 2.0)
            for mode, k_use in (("knn", min(k, n - 1)), ("full", n - 1)):
                graph = _neighborhood_forward(h, x, eq_params, k_use)  # warm-up
                times = []
                for _ in range(repetitions):
                    started = time.perf_counter()
                    _neighborhood_forward(h, x, eq_params, k_use)
                    times.append(time.perf_counter() - started)
                expected = knn_edge_count(n, k) if mode == "knn" else full_edge_count(n)
                assert graph.neighbors.size == expected
                report.entries.append(
                    {
                        "n": n,
                        "k": k,
                        "mode": mode,
                        "median_seconds": statistics.median(times),
                        "edge_count": expected,
                    }
                )
    return report


def bench_report_json(report: BenchReport) -> str:
    return json.dumps(
        {
            "width": report.width,
            "repetitions": report.repetitions,
            "entries": report.entries,
        },
        indent=2,
        sort_keys=True,
    )


def bench_report_text(report: BenchReport) -> str:
    header = f"{'n':>6}{'k':>6}{'mode':>8}{'edges':>10}{'median_s':>12}"
    lines = [header, "-" * len(header)]
    for e in report.entries:
        lines.append(
            f"{e['n']:>6}{e['k']:>6}{e['mode']:>8}{e['edge_count']:>10}{e['median_seconds']:>12.6f}"
        )
    return "\n".join(lines)
