"""Emission-matrix I/O and deterministic mock acoustic models.

Emissions are log-softmax-normalized log-probabilities (nats), shape
(T, V), stored in the "TBT1" tensor format: a single UTF-8 JSON header
line {"magic":"TBT1","shape":[T,V],"dtype":"f32"} terminated by LF,
followed by T*V little-endian float32 values, row-major.

Step models stand in for autoregressive decoders at desk scale. The
JSON spec format is

    {"flavor": "transducer" | "aed",
     "eos_id": <int, aed only>,
     "default": [<V log-probs>],
     "rows": {"<context key>": [<V log-probs>], ...}}

where the context key is the last non-blank token id for transducer
models ("" before any emission) and the comma-joined token prefix for
AED models. Unlisted contexts fall back to the default row.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .context import Vocabulary
from .errors import EmissionFormatError, StepModelError

TENSOR_MAGIC = "TBT1"
DEFAULT_FRAME_DURATION = 0.04
NORMALIZATION_TOL = 1e-4

FLAVOR_TRANSDUCER = "transducer"
FLAVOR_AED = "aed"


def _logsumexp_rows(logprobs: np.ndarray) -> np.ndarray:
    x = logprobs.astype(np.float64)
    m = x.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))).reshape(-1)


def _check_normalized(rows: np.ndarray, what: str, strict: bool = True) -> None:
    lse = _logsumexp_rows(np.atleast_2d(rows))
    worst = float(np.abs(lse).max())
    if worst > NORMALIZATION_TOL:
        msg = f"{what}: rows not log-normalized (max |logsumexp| = {worst:.3g})"
        if strict:
            raise EmissionFormatError(msg)
        warnings.warn(msg, stacklevel=3)


@dataclass
class EmissionMatrix:
    """Per-frame log-probability rows over the vocabulary."""

    logprobs: np.ndarray
    frame_duration: float = DEFAULT_FRAME_DURATION
    blank_id: int | None = None

    def __post_init__(self):
        self.logprobs = np.ascontiguousarray(self.logprobs, dtype=np.float32)
        if self.logprobs.ndim != 2 or self.logprobs.shape[0] < 1 or self.logprobs.shape[1] < 1:
            raise EmissionFormatError(f"emissions must be (T>=1, V>=1), got {self.logprobs.shape}")

    @property
    def num_frames(self) -> int:
        return int(self.logprobs.shape[0])

    @property
    def vocab_size(self) -> int:
        return int(self.logprobs.shape[1])

    @property
    def duration_seconds(self) -> float:
        return self.num_frames * self.frame_duration


def save_emissions(em: EmissionMatrix, path: str | Path) -> None:
    header = json.dumps(
        {"magic": TENSOR_MAGIC, "shape": [em.num_frames, em.vocab_size], "dtype": "f32"}
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(em.logprobs.astype("<f4").tobytes())


def load_emissions(
    path: str | Path,
    *,
    blank_id: int | None = None,
    frame_duration: float = DEFAULT_FRAME_DURATION,
    strict: bool = True,
) -> EmissionMatrix:
    """Read a TBT1 file; rejects (or warns about) non-normalized rows."""
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise EmissionFormatError(f"{path}: missing header line")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EmissionFormatError(f"{path}: bad header: {exc}") from None
    if header.get("magic") != TENSOR_MAGIC:
        raise EmissionFormatError(f"{path}: bad magic {header.get('magic')!r}")
    if header.get("dtype") != "f32":
        raise EmissionFormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    shape = header.get("shape")
    if (
        not isinstance(shape, list)
        or len(shape) != 2
        or not all(isinstance(d, int) for d in shape)
        or shape[0] < 1
        or shape[1] < 1
    ):
        raise EmissionFormatError(f"{path}: bad shape {shape!r}")
    T, V = shape
    payload = blob[nl + 1 :]
    if len(payload) != T * V * 4:
        raise EmissionFormatError(
            f"{path}: expected {T * V * 4} payload bytes for shape {shape}, found {len(payload)}"
        )
    logprobs = np.frombuffer(payload, dtype="<f4").reshape(T, V).copy()
    _check_normalized(logprobs, str(path), strict=strict)
    return EmissionMatrix(logprobs=logprobs, frame_duration=frame_duration, blank_id=blank_id)


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    x = logits.astype(np.float64)
    m = x.max(axis=1, keepdims=True)
    return x - (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True)))


def synth_ctc_emissions(
    target: Sequence[int],
    vocab: Vocabulary,
    margin: float,
    seed: int,
    *,
    boost_positions: Iterable[int] | None = None,
    distractor_pool: Sequence[int] | None = None,
    blanks_between: int = 1,
) -> EmissionMatrix:
    """Deterministic CTC emissions where the target trails a distractor.

    One emission frame per target token, separated by `blanks_between`
    blank-dominant frames. On boosted positions (all of them by default)
    a seeded distractor token leads the target by exactly `margin` nats,
    so plain greedy decoding loses the token and boosting must win it
    back; remaining positions are clean (target dominates by >10 nats).
    """
    if vocab.blank_id is None:
        raise ValueError("vocabulary needs a blank token")
    if margin <= 0:
        raise ValueError(f"margin must be > 0, got {margin}")
    target = list(target)
    if not target:
        raise ValueError("empty target")
    blank = vocab.blank_id
    if any(t == blank for t in target):
        raise ValueError("target tokens must not include the blank")
    if any(not 0 <= t < vocab.size for t in target):
        raise ValueError("target token out of range")
    positions = set(range(len(target))) if boost_positions is None else set(boost_positions)
    pool = list(distractor_pool) if distractor_pool is not None else [
        v for v in range(vocab.size) if v != blank
    ]

    rng = np.random.default_rng(seed)
    V = vocab.size
    rows: list[np.ndarray] = []

    def blank_row() -> np.ndarray:
        row = rng.uniform(-11.0, -9.0, size=V)
        row[blank] = 6.0
        return row

    rows.extend(blank_row() for _ in range(blanks_between))
    for i, tok in enumerate(target):
        row = rng.uniform(-13.0, -12.0, size=V)
        row[blank] = -15.0
        if i in positions:
            choices = [d for d in pool if d != tok and d != blank]
            if not choices:
                raise ValueError("no distractor available")
            distractor = int(choices[int(rng.integers(len(choices)))])
            row[tok] = 0.0
            row[distractor] = margin
        else:
            row[tok] = 6.0
        rows.append(row)
        rows.extend(blank_row() for _ in range(blanks_between))

    logprobs = _log_softmax_rows(np.stack(rows)).astype(np.float32)
    return EmissionMatrix(logprobs=logprobs, blank_id=blank)


class StepModel:
    """Deterministic per-step distribution source for decoder loops.

    Subclasses implement logprobs(context, step) -> float32 (V,):
    transducer flavor receives the last non-blank token id (None at
    start) and the frame index; AED flavor receives the full token
    prefix tuple and the prefix length.
    """

    flavor: str
    vocab_size: int
    eos_id: int | None = None

    def logprobs(self, context, step: int) -> np.ndarray:
        raise NotImplementedError


@dataclass
class TableStepModel(StepModel):
    """Step model backed by context-keyed distribution rows."""

    flavor: str
    default_row: np.ndarray
    rows: dict[str, np.ndarray] = field(default_factory=dict)
    eos_id: int | None = None

    def __post_init__(self):
        self.default_row = np.asarray(self.default_row, dtype=np.float32)
        self.rows = {k: np.asarray(v, dtype=np.float32) for k, v in self.rows.items()}
        self.vocab_size = int(self.default_row.shape[0])

    def _key(self, context) -> str:
        if self.flavor == FLAVOR_TRANSDUCER:
            return "" if context is None else str(int(context))
        return ",".join(str(int(t)) for t in context)

    def logprobs(self, context, step: int) -> np.ndarray:
        return self.rows.get(self._key(context), self.default_row)


@dataclass
class EmissionStepModel(StepModel):
    """Context-independent transducer model reading emission rows by frame."""

    em: EmissionMatrix

    def __post_init__(self):
        self.flavor = FLAVOR_TRANSDUCER
        self.vocab_size = self.em.vocab_size
        self.eos_id = None

    def logprobs(self, context, step: int) -> np.ndarray:
        return self.em.logprobs[step]


def table_step_model(path: str | Path) -> TableStepModel:
    """Load and validate a step-model JSON spec (format in module docstring)."""
    try:
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StepModelError(f"{path}: invalid JSON: {exc}") from None
    flavor = spec.get("flavor")
    if flavor not in (FLAVOR_TRANSDUCER, FLAVOR_AED):
        raise StepModelError(f"{path}: flavor must be 'transducer' or 'aed', got {flavor!r}")
    if "default" not in spec:
        raise StepModelError(f"{path}: missing default row")
    default_row = np.asarray(spec["default"], dtype=np.float32)
    if default_row.ndim != 1 or default_row.shape[0] < 1:
        raise StepModelError(f"{path}: default row must be a non-empty vector")
    V = default_row.shape[0]
    rows: dict[str, np.ndarray] = {}
    for key, values in spec.get("rows", {}).items():
        row = np.asarray(values, dtype=np.float32)
        if row.shape != (V,):
            raise StepModelError(f"{path}: row {key!r} has length {row.shape}, expected {V}")
        rows[key] = row
    eos_id = spec.get("eos_id")
    if flavor == FLAVOR_AED:
        if not isinstance(eos_id, int) or not 0 <= eos_id < V:
            raise StepModelError(f"{path}: aed spec needs a valid integer eos_id")
    try:
        _check_normalized(default_row, f"{path}: default row")
        for key, row in rows.items():
            _check_normalized(row, f"{path}: row {key!r}")
    except EmissionFormatError as exc:
        raise StepModelError(str(exc)) from None
    if flavor == FLAVOR_AED:
        if not np.isfinite(default_row[eos_id]) or any(
            not np.isfinite(row[eos_id]) for row in rows.values()
        ):
            raise StepModelError(f"{path}: eos log-prob must be finite in every row")
    return TableStepModel(flavor=flavor, default_row=default_row, rows=rows, eos_id=eos_id)


def save_step_model(model: TableStepModel, path: str | Path) -> None:
    spec = {
        "flavor": model.flavor,
        "default": [float(x) for x in model.default_row],
        "rows": {k: [float(x) for x in v] for k, v in model.rows.items()},
    }
    if model.eos_id is not None:
        spec["eos_id"] = model.eos_id
    Path(path).write_text(json.dumps(spec), encoding="utf-8")
