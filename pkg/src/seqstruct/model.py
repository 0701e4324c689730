"""Full network: masked input embedding with sinusoidal positions, a stack
of attentive equivariant layers, a weight-tied output head over the 20
amino acids, and the joint sequence + coordinate loss.

Fragment residues enter as their own embedding and their true coordinates;
everything else starts as a shared mask embedding on a randomly grown chain.
The loss only scores non-fragment residues.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import geometry as geo
from . import layers as ly
from .alphabet import AA_INDEX, ALPHABET
from .data import ProteinRecord, atomic_write_text

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


class NonFiniteError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    layers: int = 6
    width: int = 64
    heads: int = 4
    neighbors: int = 30
    coord_loss_weight: float = 1.0  # weight on the squared coordinate error
    variant: ly.Variant = ly.Variant.DEFAULT
    freeze_fragments: bool = False
    seed: int = 0

    def __post_init__(self):
        self.variant = ly.Variant(self.variant)
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if not (self.width >= self.heads >= 1):
            raise ValueError(f"need width >= heads >= 1, got {self.width}, {self.heads}")
        if self.width % self.heads != 0:
            raise ValueError(f"width {self.width} not divisible by {self.heads} heads")
        if self.neighbors < 1:
            raise ValueError(f"neighbors must be >= 1, got {self.neighbors}")
        if self.coord_loss_weight < 0:
            raise ValueError("coord_loss_weight must be >= 0")


@dataclass
class ModelParams:
    embedding: ad.Tensor  # (20, d), shared with the output projection
    mask_embedding: ad.Tensor  # (d,)
    layers: list[ly.LayerParams] = field(default_factory=list)


def init_params(config: ModelConfig) -> ModelParams:
    """Seeded initialization; the draw order is fixed and is part of the
    checkpoint contract (names map onto this structure)."""
    rng = np.random.default_rng(config.seed)
    d = config.width
    bound = 1.0 / np.sqrt(d)
    embedding = ad.Tensor(rng.uniform(-bound, bound, size=(len(ALPHABET), d)))
    mask_embedding = ad.Tensor(rng.uniform(-bound, bound, size=(d,)))
    layer_params = [
        ly.LayerParams(
            attention=ly.init_attention_params(rng, d, config.heads),
            equivariant=ly.init_equivariant_params(rng, d),
        )
        for _ in range(config.layers)
    ]
    return ModelParams(embedding=embedding, mask_embedding=mask_embedding, layers=layer_params)


def named_tensors(params: ModelParams):
    """Deterministic (name, tensor) walk over the whole parameter tree."""

    def walk(obj, prefix):
        if isinstance(obj, ad.Tensor):
            yield prefix, obj
        elif dataclasses.is_dataclass(obj):
            for f in dataclasses.fields(obj):
                value = getattr(obj, f.name)
                if isinstance(value, (ad.Tensor, list)) or dataclasses.is_dataclass(value):
                    yield from walk(value, f"{prefix}.{f.name}")
        elif isinstance(obj, list):
            for i, item in enumerate(obj):
                yield from walk(item, f"{prefix}[{i}]")

    yield from walk(params, "params")


def positional_encoding(n: int, d: int) -> np.ndarray:
    """Sinusoidal position features; even columns sine, odd columns cosine."""
    pos = np.arange(n)[:, None]
    idx = np.arange(d)[None, :]
    angles = pos / np.power(10000.0, (2 * (idx // 2)) / d)
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(angles[:, 0::2])
    pe[:, 1::2] = np.cos(angles[:, 1::2])
    return pe


def embed_inputs(
    record: ProteinRecord,
    params: ModelParams,
    rng: np.random.Generator | None = None,
    fragments: np.ndarray | None = None,
    initial_coords: np.ndarray | None = None,
) -> ly.LayerState:
    """Initial state: amino-acid embeddings at fragment positions, the mask
    embedding elsewhere, positional encodings added everywhere; coordinates
    from the chain initializer unless given explicitly."""
    frag = record.fragments if fragments is None else np.asarray(fragments, dtype=np.int64)
    n = record.n
    if frag.size and (frag.min() < 0 or frag.max() >= n):
        raise ValueError(f"record {record.id!r}: fragment index out of range")

    seq_idx = np.zeros(n, dtype=np.int64)
    visible = np.zeros((n, 1))
    for i in frag:
        seq_idx[i] = AA_INDEX[record.sequence[i]]
        visible[i, 0] = 1.0

    d = params.embedding.shape[1]
    looked_up = ad.take_rows(params.embedding, seq_idx)
    masked = ad.reshape(params.mask_embedding, (1, d))
    h0 = looked_up * visible + masked * (1.0 - visible) + ad.Tensor(positional_encoding(n, d))

    if initial_coords is not None:
        x0 = np.asarray(initial_coords, dtype=np.float64)
        if x0.shape != (n, 3):
            raise ValueError(f"initial coordinates shape {x0.shape} != ({n}, 3)")
    else:
        if rng is None:
            raise ValueError("rng required to sample initial coordinates")
        x0 = geo.init_coordinates(record.coords[frag], frag, n, rng)
    return ly.LayerState(h=h0, x=ad.Tensor(x0))


@dataclass
class Prediction:
    logits: ad.Tensor  # (N, 20)
    probabilities: ad.Tensor  # (N, 20), rows sum to 1
    coords: ad.Tensor  # (N, 3)
    sequence: str
    fragments: np.ndarray  # the fragment set the prediction conditioned on


def forward(
    record: ProteinRecord,
    params: ModelParams,
    config: ModelConfig,
    rng: np.random.Generator | None = None,
    fragments: np.ndarray | None = None,
    initial_coords: np.ndarray | None = None,
) -> Prediction:
    """Run the full stack. When neither rng nor initial_coords is given, the
    chain initializer is seeded from config.seed (deterministic default)."""
    if rng is None and initial_coords is None:
        rng = np.random.default_rng(config.seed)
    frag = record.fragments if fragments is None else np.asarray(fragments, dtype=np.int64)
    state = embed_inputs(record, params, rng=rng, fragments=frag, initial_coords=initial_coords)

    anchor = record.coords[frag] if (config.freeze_fragments and frag.size) else None
    for li, layer_params in enumerate(params.layers):
        state = ly.layer_forward(state, layer_params, config.neighbors, config.variant)
        if anchor is not None:
            state = ly.LayerState(
                h=state.h, x=ad.replace_rows(state.x, frag, anchor), m=state.m, w=state.w
            )
        if not (np.all(np.isfinite(state.h.data)) and np.all(np.isfinite(state.x.data))):
            raise NonFiniteError(f"non-finite values after layer {li}")

    logits = ad.matmul(state.h, ad.transpose(params.embedding))
    probabilities = ad.softmax(logits, axis=-1)
    sequence = _decode_arrays(probabilities.data, record, frag)
    return Prediction(
        logits=logits,
        probabilities=probabilities,
        coords=state.x,
        sequence=sequence,
        fragments=frag,
    )


# ---------------------------------------------------------------------------
# loss


_clamp_warnings = 0


def clamp_warning_count() -> int:
    """How many times a probability hit the log floor so far."""
    return _clamp_warnings


def reset_clamp_warnings() -> None:
    global _clamp_warnings
    _clamp_warnings = 0


def loss(
    record: ProteinRecord,
    pred: Prediction,
    coord_loss_weight: float,
    fragments: np.ndarray | None = None,
) -> ad.Tensor:
    """Negative log-likelihood of the true residues plus the weighted squared
    coordinate error, both summed over non-fragment positions only."""
    frag = pred.fragments if fragments is None else np.asarray(fragments, dtype=np.int64)
    mask = np.ones(record.n, dtype=bool)
    mask[frag] = False
    free = np.where(mask)[0]
    if free.size == 0:
        return ad.Tensor(0.0)

    onehot = np.zeros((free.size, len(ALPHABET)))
    for row, i in enumerate(free):
        onehot[row, AA_INDEX[record.sequence[i]]] = 1.0
    p_true = ad.sum(ad.take_rows(pred.probabilities, free) * onehot, axis=-1)

    n_floored = int(np.sum(p_true.data < PROB_FLOOR))
    if n_floored:
        global _clamp_warnings
        _clamp_warnings += n_floored
        logger.warning(
            "clamped %d probabilities below %g for record %s", n_floored, PROB_FLOOR, record.id
        )
    nll = -ad.sum(ad.log(ad.clamp_min(p_true, PROB_FLOOR)))

    diff = ad.take_rows(pred.coords, free) - record.coords[free]
    sq = ad.sum(diff * diff)
    return nll + coord_loss_weight * sq


# ---------------------------------------------------------------------------
# decoding


def _decode_arrays(probabilities: np.ndarray, record: ProteinRecord, frag: np.ndarray) -> str:
    picks = np.argmax(probabilities, axis=-1)  # ties resolve to the lowest index
    letters = [ALPHABET[i] for i in picks]
    for i in frag:
        letters[i] = record.sequence[i]
    return "".join(letters)


def decode(pred: Prediction, record: ProteinRecord, fragments: np.ndarray | None = None) -> str:
    """Per-position argmax outside the fragment set; fragments copy through."""
    frag = pred.fragments if fragments is None else np.asarray(fragments, dtype=np.int64)
    return _decode_arrays(pred.probabilities.data, record, frag)


# ---------------------------------------------------------------------------
# checkpoints


def _encode_array(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)
    return arr.copy()


def config_to_obj(config: ModelConfig) -> dict:
    obj = dataclasses.asdict(config)
    obj["variant"] = config.variant.value
    return obj


def save_checkpoint(path: str, params: ModelParams, config: ModelConfig) -> None:
    """JSON container; tensor payloads are base64 of raw little-endian
    float64 bytes, so round-trips are bit-exact."""
    obj = {
        "format_version": CHECKPOINT_VERSION,
        "config": config_to_obj(config),
        "tensors": {name: _encode_array(t.data) for name, t in named_tensors(params)},
    }
    atomic_write_text(path, json.dumps(obj, sort_keys=True))


def load_checkpoint(path: str) -> tuple[ModelParams, ModelConfig]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: corrupt checkpoint: {exc}") from exc
    if obj.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {obj.get('format_version')}")
    config = ModelConfig(**obj["config"])
    params = init_params(config)
    stored = obj["tensors"]
    expected = dict(named_tensors(params))
    missing = sorted(set(expected) - set(stored))
    extra = sorted(set(stored) - set(expected))
    if missing or extra:
        raise ValueError(f"{path}: tensor name mismatch (missing {missing}, extra {extra})")
    for name, tensor in expected.items():
        arr = _decode_array(stored[name])
        if arr.shape != tensor.data.shape:
            raise ValueError(
                f"{path}: tensor {name} shape {arr.shape} != expected {tensor.data.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{path}: tensor {name} holds non-finite values")
        tensor.data = arr
    return params, config
