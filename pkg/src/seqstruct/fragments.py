"""Conserved-fragment mining from multiple sequence alignments.

A column is conserved when the share of rows carrying its most common
non-gap residue exceeds a threshold tau (strict inequality; gaps always
count as mismatches). Conserved cells map back to positions in each row's
ungapped sequence.

Indices are 0-based in memory; the JSON representation is 1-based, matching
the record file format.
"""

from __future__ import annotations

import collections
import json
from dataclasses import dataclass, field

import numpy as np

from .alphabet import ALPHABET, GAP

_ALLOWED = set(ALPHABET) | {GAP}


@dataclass
class Alignment:
    """Rows of (sequence id, aligned string); all rows equally wide."""

    rows: list[tuple[str, str]]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("alignment has no rows")
        width = len(self.rows[0][1])
        seen = set()
        for rid, aligned in self.rows:
            if rid in seen:
                raise ValueError(f"duplicate alignment row id {rid!r}")
            seen.add(rid)
            if len(aligned) != width:
                raise ValueError(
                    f"row {rid!r}: ragged alignment (width {len(aligned)} != {width})"
                )
            bad = set(aligned) - _ALLOWED
            if bad:
                raise ValueError(f"row {rid!r}: illegal characters {sorted(bad)}")

    @property
    def width(self) -> int:
        return len(self.rows[0][1])


@dataclass
class FragmentMask:
    """Mined fragment indices per sequence id (0-based, strictly increasing,
    into the ungapped sequence) at threshold tau."""

    tau: float
    indices: dict[str, np.ndarray] = field(default_factory=dict)


def column_identity(alignment: Alignment, col: int) -> float:
    """Percent of rows carrying the column's modal non-gap residue.
    An all-gap column scores 0."""
    if not 0 <= col < alignment.width:
        raise ValueError(f"column {col} outside [0, {alignment.width})")
    counts = collections.Counter(
        row[col] for _, row in alignment.rows if row[col] != GAP
    )
    if not counts:
        return 0.0
    return 100.0 * max(counts.values()) / len(alignment.rows)


def mine_fragments(alignment: Alignment, tau: float) -> FragmentMask:
    """Fragment indices for every row: ungapped positions lying in columns
    whose identity strictly exceeds tau."""
    if not 0.0 <= tau <= 100.0:
        raise ValueError(f"tau must be within [0, 100], got {tau}")
    conserved = [column_identity(alignment, c) > tau for c in range(alignment.width)]
    mask = FragmentMask(tau=tau)
    for rid, aligned in alignment.rows:
        picked = []
        ungapped = 0
        for c, ch in enumerate(aligned):
            if ch == GAP:
                continue
            if conserved[c]:
                picked.append(ungapped)
            ungapped += 1
        mask.indices[rid] = np.array(picked, dtype=np.int64)
    return mask


def fragment_mask_to_json(mask: FragmentMask) -> str:
    """JSON form with 1-based indices."""
    obj = {
        "tau": mask.tau,
        "fragments": {rid: (idx + 1).tolist() for rid, idx in mask.indices.items()},
    }
    return json.dumps(obj, indent=2, sort_keys=True)


def fragment_mask_from_json(text: str) -> FragmentMask:
    obj = json.loads(text)
    mask = FragmentMask(tau=float(obj["tau"]))
    for rid, lst in obj["fragments"].items():
        arr = np.array(lst, dtype=np.int64) - 1
        if arr.size and (arr.min() < 0 or np.any(np.diff(arr) <= 0)):
            raise ValueError(f"fragment indices for {rid!r} not strictly increasing 1-based")
        mask.indices[rid] = arr
    return mask
