"""Record formats, dataset handling, and config files.

Protein records travel as JSON lines, one object per line:
    {"id": ..., "sequence": ..., "coords": [[x,y,z], ...], "fragments": [...]}
Fragment indices are 1-based in files and 0-based in memory. Coordinate
round-trips are exact: JSON numbers are written with Python's shortest
repr, which recovers the same 64-bit float on parse.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .alphabet import ALPHABET
from .fragments import Alignment

# ingestion sanity band around the typical consecutive C-alpha distance
CA_DISTANCE_BAND = (2.0, 6.0)

_AA_SET = set(ALPHABET)


class ParseError(ValueError):
    pass


@dataclass
class ProteinRecord:
    """One example: sequence, C-alpha coordinates (Angstroms), and the
    0-based fragment index set given as conditioning input."""

    id: str
    sequence: str
    coords: np.ndarray
    fragments: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.fragments = np.asarray(self.fragments, dtype=np.int64)
        n = len(self.sequence)
        if n < 2:
            raise ValueError(f"record {self.id!r}: needs at least 2 residues")
        bad = set(self.sequence) - _AA_SET
        if bad:
            raise ValueError(f"record {self.id!r}: invalid residue letters {sorted(bad)}")
        if self.coords.shape != (n, 3):
            raise ValueError(
                f"record {self.id!r}: {n} residues but coords shape {self.coords.shape}"
            )
        if not np.all(np.isfinite(self.coords)):
            raise ValueError(f"record {self.id!r}: non-finite coordinates")
        steps = np.linalg.norm(np.diff(self.coords, axis=0), axis=1)
        lo, hi = CA_DISTANCE_BAND
        off = np.where((steps < lo) | (steps > hi))[0]
        if off.size:
            raise ValueError(
                f"record {self.id!r}: consecutive C-alpha distance {steps[off[0]]:.3f} A "
                f"at position {off[0]} outside [{lo}, {hi}]"
            )
        if self.fragments.size:
            if self.fragments.min() < 0 or self.fragments.max() >= n:
                raise ValueError(f"record {self.id!r}: fragment index out of range")
            if np.any(np.diff(self.fragments) <= 0):
                raise ValueError(f"record {self.id!r}: fragments not strictly increasing")

    @property
    def n(self) -> int:
        return len(self.sequence)

    def free_indices(self) -> np.ndarray:
        """Indices not in the fragment set."""
        mask = np.ones(self.n, dtype=bool)
        mask[self.fragments] = False
        return np.where(mask)[0]


def record_from_obj(obj: dict) -> ProteinRecord:
    for key in ("id", "sequence", "coords", "fragments"):
        if key not in obj:
            raise ParseError(f"missing key {key!r}")
    frags = np.asarray(obj["fragments"], dtype=np.int64)
    if frags.size and frags.min() < 1:
        raise ParseError(f"record {obj['id']!r}: fragment indices are 1-based in files")
    return ProteinRecord(
        id=str(obj["id"]),
        sequence=str(obj["sequence"]),
        coords=np.asarray(obj["coords"], dtype=np.float64),
        fragments=frags - 1,
    )


def record_to_obj(record: ProteinRecord) -> dict:
    return {
        "id": record.id,
        "sequence": record.sequence,
        "coords": [[float(v) for v in row] for row in record.coords],
        "fragments": (record.fragments + 1).tolist(),
    }


def parse_records(path: str) -> list[ProteinRecord]:
    """Read a JSON-lines record file; every error names its line number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(record_from_obj(obj))
            except (ValueError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not records:
        raise ParseError(f"{path}: no records found")
    return records


def write_records(path: str, records) -> None:
    lines = [json.dumps(record_to_obj(r)) for r in records]
    atomic_write_text(path, "\n".join(lines) + "\n")


def transform_record_coords(record: ProteinRecord, coords: np.ndarray) -> ProteinRecord:
    """Copy of the record with replaced coordinates (skips the distance-band
    check by design: transformed/designed coordinates are not ingestion)."""
    new = replace(record)
    new.coords = np.asarray(coords, dtype=np.float64)
    return new


# ---------------------------------------------------------------------------
# aligned FASTA


def parse_aligned_fasta(path: str) -> Alignment:
    """Aligned FASTA: '>'-headers, sequence lines joined, lowercase accepted
    and normalized to uppercase."""
    rows: list[tuple[str, str]] = []
    current_id = None
    chunks: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if current_id is not None:
                    rows.append((current_id, "".join(chunks)))
                current_id = line[1:].split()[0] if len(line) > 1 else ""
                if not current_id:
                    raise ParseError(f"{path}: empty FASTA header")
                chunks = []
            else:
                if current_id is None:
                    raise ParseError(f"{path}: sequence data before any '>' header")
                chunks.append(line.upper())
    if current_id is not None:
        rows.append((current_id, "".join(chunks)))
    try:
        return Alignment(rows=rows)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# dataset splits


@dataclass
class DatasetSplit:
    train: list[str] = field(default_factory=list)
    validation: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)


def split_dataset(records, ratios=(8, 1, 1), seed: int = 0) -> DatasetSplit:
    """Seeded shuffle, then contiguous train/validation/test partition with
    floor-sized validation and test; the remainder goes to train."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ValueError(f"bad split ratios {ratios}")
    n = len(records)
    nonzero = sum(1 for r in ratios if r > 0)
    if n < nonzero:
        raise ValueError(f"{n} records cannot fill {nonzero} nonzero split parts")
    total = float(sum(ratios))
    n_val = int(n * ratios[1] / total)
    n_test = int(n * ratios[2] / total)
    n_train = n - n_val - n_test
    ids = [r.id for r in records]
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    return DatasetSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
    )


# ---------------------------------------------------------------------------
# flat key=value config files


def parse_config_file(path: str) -> dict[str, str]:
    """key = value lines; '#' starts a comment; keys must be unique.
    Typing/validation happens against the config schemas downstream."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ParseError(f"{path}:{lineno}: empty key or value")
            if key in out:
                raise ParseError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


# ---------------------------------------------------------------------------
# synthetic fixtures


def synthetic_record(
    record_id: str,
    n: int,
    n_fragments: int,
    rng: np.random.Generator,
    clearance: float = 3.0,
) -> ProteinRecord:
    """Random record over a self-avoiding chain with 3.75 A steps: each new
    point keeps at least `clearance` from all earlier points."""
    if not 0 <= n_fragments <= n:
        raise ValueError("fragment count outside [0, n]")
    coords = np.zeros((n, 3))
    for i in range(1, n):
        for _ in range(1000):
            omega1 = rng.uniform(0.0, np.pi)
            omega2 = rng.uniform(0.0, 2.0 * np.pi)
            step = np.array(
                [
                    np.sin(omega1) * np.cos(omega2),
                    np.sin(omega1) * np.sin(omega2),
                    np.cos(omega1),
                ]
            )
            cand = coords[i - 1] + 3.75 * step
            if i == 1 or np.min(np.linalg.norm(coords[:i] - cand, axis=1)) >= clearance:
                coords[i] = cand
                break
        else:
            raise RuntimeError("self-avoiding chain failed to grow; lower clearance")
    seq = "".join(rng.choice(list(ALPHABET), size=n))
    frags = np.sort(rng.choice(n, size=n_fragments, replace=False))
    return ProteinRecord(id=record_id, sequence=seq, coords=coords, fragments=frags)


# ---------------------------------------------------------------------------
# atomic writes


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename over."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
