import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from echomap.DefectClass import DefectClass, NUM_CLASSES
from echomap.EchoMapException import InvalidSpecException

logger = logging.getLogger(__name__)

DEFAULT_LENGTH = 20
MIN_PER_CLASS_FOR_STRATIFIED = 5
TRAIN, TEST = "train", "test"


@dataclass(frozen=True, eq=False)
class LabeledSequence:
    values: np.ndarray
    label: int
    slab_id: int = 0
    zone: str = ""
    anchor: tuple[float, float] = (0.0, 0.0)
    padded: bool = False
    split: str | None = None

    def __post_init__(self):
        if not 0 <= int(self.label) < NUM_CLASSES:
            raise InvalidSpecException(f"Label must lie in [0, {NUM_CLASSES}), got {self.label}")

    def to_record(self) -> dict:
        return {"values": [float(v) for v in self.values], "label": int(self.label), "slab": self.slab_id,
                "split": self.split, "zone": self.zone, "anchor": [float(a) for a in self.anchor],
                "padded": self.padded}

    @classmethod
    def from_record(cls, d: dict) -> "LabeledSequence":
        return cls(np.asarray(d["values"], dtype=np.float64), int(d["label"]), int(d.get("slab", 0)),
                   d.get("zone", ""), tuple(d.get("anchor", (0.0, 0.0))), bool(d.get("padded", False)),
                   d.get("split"))


@dataclass(frozen=True)
class Normalization:
    mean: float
    std: float

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(f"{self.mean!r}|{self.std!r}".encode()).hexdigest()[:16]

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "fingerprint": self.fingerprint}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(float(d["mean"]), float(d["std"]))


@dataclass(eq=False)
class SequenceDataset:
    sequences: list[LabeledSequence]
    normalization: Normalization | None = None
    warnings: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.sequences)

    def subset(self, split: str | None = None) -> list[LabeledSequence]:
        return [s for s in self.sequences if split is None or s.split == split]

    def arrays(self, split: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """
        Model inputs of shape ``(n, length, 1)`` and integer labels of shape ``(n,)``.
        """
        chosen = self.subset(split)
        if not chosen:
            return np.zeros((0, DEFAULT_LENGTH, 1)), np.zeros(0, dtype=np.int64)
        x = np.stack([s.values for s in chosen]).astype(np.float64)[:, :, None]
        y = np.array([s.label for s in chosen], dtype=np.int64)
        return x, y

    def class_counts(self, split: str | None = None) -> list[int]:
        labels = np.array([s.label for s in self.subset(split)], dtype=np.int64)
        counts = np.bincount(labels, minlength=NUM_CLASSES)
        return [int(c) for c in counts]

    def split_sizes(self) -> tuple[int, int]:
        return len(self.subset(TRAIN)), len(self.subset(TEST))


class Lag1(NamedTuple):
    value: float
    defined: bool


def serpentine_order(points: Sequence, decimals: int = 6) -> list:
    """
    Orders points row by row (ascending y), alternating the x direction on every row,
    so that consecutive points are always spatial neighbours.
    """
    rows: dict[float, list] = {}
    for p in points:
        rows.setdefault(round(p.y_in, decimals), []).append(p)
    ordered = []
    for i, y in enumerate(sorted(rows)):
        row = sorted(rows[y], key=lambda p: p.x_in, reverse=i % 2 == 1)
        ordered.extend(row)
    return ordered


def window_stream(values: np.ndarray, length: int = DEFAULT_LENGTH,
                  stride: int = 1) -> list[tuple[int, np.ndarray, bool]]:
    """
    Sliding windows ``(start, window, padded)`` over a stream. A stream shorter than
    ``length`` yields one window, reflect-padded to ``length``.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if length < 1 or stride < 1:
        raise InvalidSpecException(f"Window length and stride must be positive, got {length} and {stride}")
    if n == 0:
        return []
    if n < length:
        mode = "reflect" if n > 1 else "edge"
        return [(0, np.pad(values, (0, length - n), mode=mode), True)]
    return [(start, values[start:start + length].copy(), False) for start in range(0, n - length + 1, stride)]


def build_sequences(zone_points: Mapping[tuple[int, DefectClass], Sequence], length: int = DEFAULT_LENGTH,
                    stride: int = 1, multiplicity: int = 1) -> tuple[list[LabeledSequence], list[str]]:
    """
    Slides windows over the serpentine-ordered points of every ``(slab_id, class)``
    zone, labelling each window with the zone's class. With ``multiplicity > 1`` each
    point is repeated that many times in the stream before windowing.

    :returns: The sequences, in ``(slab_id, class)`` order, and warnings for skipped zones.
    """
    if multiplicity < 1:
        raise InvalidSpecException(f"Multiplicity must be positive, got {multiplicity}")
    sequences, warnings = [], []
    for slab_id, defect_class in sorted(zone_points, key=lambda k: (k[0], int(k[1]))):
        defect_class = DefectClass(defect_class)
        points = serpentine_order(zone_points[(slab_id, defect_class)])
        if not points:
            message = f"slab {slab_id} zone {defect_class.name}: no validated points, skipped"
            logger.warning(message)
            warnings.append(message)
            continue
        stream_points = [p for p in points for _ in range(multiplicity)]
        stream = np.array([p.f_peak_khz for p in stream_points])
        for start, window, padded in window_stream(stream, length, stride):
            anchor = stream_points[start]
            sequences.append(LabeledSequence(window, int(defect_class), slab_id, defect_class.name,
                                             (anchor.x_in, anchor.y_in), padded))
    return sequences, warnings


def _largest_remainder(counts: list[int], ratio: float) -> list[int]:
    total = int(round(ratio * sum(counts)))
    exact = [ratio * c for c in counts]
    quotas = [int(np.floor(e)) for e in exact]
    order = sorted(range(len(counts)), key=lambda i: (-(exact[i] - quotas[i]), i))
    for i in order[:max(0, total - sum(quotas))]:
        quotas[i] += 1
    return quotas


def train_test_split(ds: SequenceDataset, ratio: float = 0.8, seed: int = 0,
                     stratified: bool = True) -> SequenceDataset:
    """
    Assigns every sequence to the train or test split. Stratified splits shuffle each
    class separately and apportion the train total across classes by largest
    remainder; when any present class has fewer than five sequences the split falls
    back to an unstratified shuffle.
    """
    if not 0 < ratio < 1:
        raise InvalidSpecException(f"Split ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    labels = np.array([s.label for s in ds.sequences], dtype=np.int64)
    warnings = list(ds.warnings)
    present = [c for c in range(NUM_CLASSES) if np.any(labels == c)]
    if stratified and any(np.count_nonzero(labels == c) < MIN_PER_CLASS_FOR_STRATIFIED for c in present):
        message = f"a class has fewer than {MIN_PER_CLASS_FOR_STRATIFIED} sequences, using an unstratified split"
        logger.warning(message)
        warnings.append(message)
        stratified = False

    is_train = np.zeros(len(labels), dtype=bool)
    if stratified:
        members = [np.flatnonzero(labels == c) for c in present]
        quotas = _largest_remainder([len(m) for m in members], ratio)
        for idx, quota in zip(members, quotas):
            is_train[rng.permutation(idx)[:quota]] = True
    else:
        is_train[rng.permutation(len(labels))[:int(round(ratio * len(labels)))]] = True

    sequences = [dataclasses.replace(s, split=TRAIN if t else TEST) for s, t in zip(ds.sequences, is_train)]
    logger.info("Split %d sequences into %d train / %d test", len(labels), int(is_train.sum()),
                int((~is_train).sum()))
    return SequenceDataset(sequences, ds.normalization, warnings)


def normalize(ds: SequenceDataset) -> SequenceDataset:
    """
    z-scores every sequence with the mean and standard deviation of the train split.
    A zero standard deviation falls back to identity scaling.
    """
    train = ds.subset(TRAIN)
    if not train:
        raise InvalidSpecException("Normalization needs an assigned train split")
    values = np.concatenate([s.values for s in train])
    warnings = list(ds.warnings)
    mean, std = float(np.mean(values)), float(np.std(values))
    if std == 0:
        message = "train split has zero variance, normalization left as identity"
        logger.warning(message)
        warnings.append(message)
        mean, std = 0.0, 1.0
    norm = Normalization(mean, std)
    return SequenceDataset(apply_normalization(ds.sequences, norm), norm, warnings)


def apply_normalization(sequences: Sequence[LabeledSequence], norm: Normalization) -> list[LabeledSequence]:
    return [dataclasses.replace(s, values=norm.apply(s.values)) for s in sequences]


def denormalize(ds: SequenceDataset) -> SequenceDataset:
    if ds.normalization is None:
        return ds
    norm = ds.normalization
    sequences = [dataclasses.replace(s, values=norm.invert(s.values)) for s in ds.sequences]
    return SequenceDataset(sequences, None, list(ds.warnings))


def lag1_autocorr(seq: LabeledSequence | np.ndarray) -> Lag1:
    """
    Pearson correlation of a sequence with itself shifted by one step. Undefined for
    constant sequences, which are reported as ``Lag1(0.0, False)``.
    """
    values = np.asarray(seq.values if isinstance(seq, LabeledSequence) else seq, dtype=np.float64)
    if len(values) < 3:
        return Lag1(0.0, False)
    a, b = values[:-1], values[1:]
    if np.std(a) == 0 or np.std(b) == 0:
        return Lag1(0.0, False)
    r = float(np.corrcoef(a, b)[0, 1])
    return Lag1(float(np.clip(r, -1.0, 1.0)), True)


def corpus_autocorr(sequences: Sequence[LabeledSequence]) -> tuple[float, float, int]:
    """
    Mean and standard deviation of the lag-1 autocorrelation over the sequences where
    it is defined, with the count of those sequences.
    """
    values = [r.value for r in map(lag1_autocorr, sequences) if r.defined]
    if not values:
        return 0.0, 0.0, 0
    return float(np.mean(values)), float(np.std(values)), len(values)


def write_jsonl(ds: SequenceDataset | Sequence[LabeledSequence], path: str):
    sequences = ds.sequences if isinstance(ds, SequenceDataset) else ds
    with open(path, "w") as f:
        for s in sequences:
            f.write(json.dumps(s.to_record()))
            f.write("\n")


def read_jsonl(path: str) -> SequenceDataset:
    with open(path) as f:
        return SequenceDataset([LabeledSequence.from_record(json.loads(line)) for line in f if line.strip()])
