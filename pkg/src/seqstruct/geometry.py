"""Rigid-body geometry for C-alpha chains: distances, neighbor graphs,
chain initialization, random rigid transforms, and optimal-superposition RMSD.

Everything here is plain numpy (no autodiff); coordinate arrays are (N, 3)
float64 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# consecutive C-alpha step used when growing a chain, in Angstroms
CA_STEP = 3.75


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """Full (N, N) Euclidean distance matrix."""
    x = np.asarray(x, dtype=np.float64)
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


@dataclass(frozen=True)
class NeighborGraph:
    """k-nearest-neighbor structure. neighbors[i] lists the indices of the
    min(k, N-1) nearest other points, ordered by (distance, index) ascending;
    self-loops are never included."""

    k: int
    neighbors: np.ndarray  # (N, k_eff) int64


def knn(x: np.ndarray, k: int) -> NeighborGraph:
    """Neighbor graph over current coordinates; ties break toward lower index."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"knn needs at least 2 points, got {n}")
    if k < 1:
        raise ValueError(f"knn needs k >= 1, got {k}")
    k_eff = min(k, n - 1)
    d = pairwise_distances(x)
    np.fill_diagonal(d, np.inf)  # exclude self even when other points coincide
    # stable sort on distance keeps index order among ties
    order = np.argsort(d, axis=1, kind="stable")[:, :k_eff]
    return NeighborGraph(k=k, neighbors=order.astype(np.int64))


def edge_list(graph: NeighborGraph) -> tuple[np.ndarray, np.ndarray]:
    """Flatten a neighbor graph to (dst, src) index arrays of length N*k_eff.

    dst[e] is the center residue receiving messages, src[e] its neighbor.
    Edges are grouped by center, neighbors in graph order, so downstream
    reductions are reproducible sum orders.
    """
    n, k_eff = graph.neighbors.shape
    dst = np.repeat(np.arange(n, dtype=np.int64), k_eff)
    src = graph.neighbors.reshape(-1)
    return dst, src


def init_coordinates(
    fragment_coords: np.ndarray,
    fragment_indices: np.ndarray,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Initial chain coordinates: fragment residues keep their given
    coordinates bit-for-bit; every other residue is placed CA_STEP away from
    its predecessor in a uniformly random direction (polar angle then
    azimuth drawn per residue, in chain order). Residue 0, when free, sits
    at the origin.
    """
    fragment_coords = np.asarray(fragment_coords, dtype=np.float64)
    fragment_indices = np.asarray(fragment_indices, dtype=np.int64)
    if fragment_coords.shape[0] != fragment_indices.shape[0]:
        raise ValueError("fragment coordinate/index count mismatch")
    if fragment_indices.size and (
        fragment_indices.min() < 0 or fragment_indices.max() >= n
    ):
        raise ValueError("fragment index out of range")

    out = np.zeros((n, 3), dtype=np.float64)
    in_frag = np.zeros(n, dtype=bool)
    out[fragment_indices] = fragment_coords
    in_frag[fragment_indices] = True

    for i in range(n):
        if in_frag[i]:
            continue
        if i == 0:
            continue  # already the origin
        omega1 = rng.uniform(0.0, np.pi)
        omega2 = rng.uniform(0.0, 2.0 * np.pi)
        step = np.array(
            [
                np.sin(omega1) * np.cos(omega2),
                np.sin(omega1) * np.sin(omega2),
                np.cos(omega1),
            ]
        )
        out[i] = out[i - 1] + CA_STEP * step
    return out


@dataclass(frozen=True)
class RigidTransform:
    """x -> x @ rotation.T + translation. rotation is orthogonal with
    determinant +1 (proper) or -1 (reflection included)."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)


def random_rigid(rng: np.random.Generator, proper: bool = True) -> RigidTransform:
    """Rotation uniform over SO(3) via a normalized Gaussian quaternion;
    translation uniform in [-10, 10]^3. proper=False flips one axis to get
    determinant -1."""
    q = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    w, qx, qy, qz = q
    rot = np.array(
        [
            [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - w * qz), 2 * (qx * qz + w * qy)],
            [2 * (qx * qy + w * qz), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - w * qx)],
            [2 * (qx * qz - w * qy), 2 * (qy * qz + w * qx), 1 - 2 * (qx * qx + qy * qy)],
        ]
    )
    if not proper:
        rot = rot.copy()
        rot[:, 2] = -rot[:, 2]
    t = rng.uniform(-10.0, 10.0, size=3)
    return RigidTransform(rotation=rot, translation=t)


def apply_rigid(x: np.ndarray, transform: RigidTransform) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x @ transform.rotation.T + transform.translation


def kabsch_rmsd(a: np.ndarray, b: np.ndarray) -> float:
    """RMSD between point sets after optimal superposition (translation plus
    proper rotation of a onto b). SVD-based with the usual determinant sign
    fix so the aligned rotation stays proper."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"point sets differ: {a.shape} vs {b.shape}")
    if a.shape[0] < 3:
        raise ValueError("kabsch_rmsd needs at least 3 points")

    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    h = ac.T @ bc
    u, _, vt = np.linalg.svd(h)
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    d = np.diag([1.0, 1.0, sign])
    rot = vt.T @ d @ u.T
    diff = ac @ rot.T - bc
    return float(np.sqrt((diff * diff).sum(axis=-1).mean()))
