"""
Synthetic slabs and decks with seeded rectangular defects. Each scan point gets a
damped-sinusoid impact-echo waveform whose resonance is drawn from the frequency band
of whatever lies under the point, so every later stage can be checked against a known
ground truth.
"""
import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from echomap.DefectClass import DefectClass, ZONE_ORDER
from echomap.DefectRect import DefectRect
from echomap.EchoMapException import InvalidSpecException
from echomap.GroundTruth import GroundTruthMask, build_mask

logger = logging.getLogger(__name__)

Band = tuple[float, float]

DEFAULT_SAMPLE_RATE_HZ = 200_000.0
DEFAULT_N_SAMPLES = 1024
DEFAULT_DEFECT_SIZE_IN = 12.0
DEFAULT_BAND_SHAPE = 6.0

INTACT_BAND: Band = (9.5, 15.0)
HIGH_OUTLIER_BAND: Band = (15.0, 18.0)
LOW_OUTLIER_BAND: Band = (0.3, 1.0)


def default_band_table() -> dict[DefectClass, Band]:
    """
    Class sub-bands (kHz) inside the aggregate 3-6 kHz defect range. Neighbouring
    sub-bands overlap, so class identity cannot be read off a single reading.
    """
    return {DefectClass.SHALLOW_DELAM: (4.5, 6.0),
            DefectClass.HONEYCOMB: (3.5, 5.0),
            DefectClass.VOID: (3.0, 4.5),
            DefectClass.DEEP_DELAM: (5.0, 6.5)}


def stress_band_table() -> dict[DefectClass, Band]:
    """
    Widened sub-bands with heavy mutual overlap, used to measure how the classifier
    degrades when the classes are hard to tell apart.
    """
    return {DefectClass.SHALLOW_DELAM: (3.8, 6.6),
            DefectClass.HONEYCOMB: (3.2, 5.8),
            DefectClass.VOID: (3.0, 5.2),
            DefectClass.DEEP_DELAM: (4.2, 7.0)}


def _check_band(name: str, band: Band):
    lo, hi = band
    if not lo < hi:
        raise InvalidSpecException(f"Band {name} must have low < high, got {band}")
    if lo < 0:
        raise InvalidSpecException(f"Band {name} must be non-negative, got {band}")


def zone_bounds(width_in: float, n_zones: int = len(ZONE_ORDER)) -> list[tuple[float, float]]:
    """
    Longitudinal zone bounds. On a 120-inch slab these are the four 30-inch zones;
    other widths are split into equal quarters.
    """
    step = width_in / n_zones
    return [(i * step, (i + 1) * step) for i in range(n_zones)]


def default_gtm_layout(width_in: float = 120.0, height_in: float = 40.0,
                       size_in: float = DEFAULT_DEFECT_SIZE_IN) -> list[DefectRect]:
    """
    One square defect per class, centred in that class's zone.
    """
    rects = []
    for (lo, hi), defect_class in zip(zone_bounds(width_in), ZONE_ORDER):
        w = min(size_in, hi - lo)
        h = min(size_in, height_in)
        rects.append(DefectRect((lo + hi) / 2 - w / 2, height_in / 2 - h / 2, w, h, defect_class))
    return rects


@dataclass(frozen=True)
class SlabSpec:
    width_in: float = 120.0
    height_in: float = 40.0
    grid_cols: int = 28
    grid_rows: int = 9
    defects: tuple[DefectRect, ...] = field(default_factory=lambda: tuple(default_gtm_layout()))
    band_table: dict[DefectClass, Band] = field(default_factory=default_band_table)
    intact_band: Band = INTACT_BAND
    noise_rms: float = 0.1
    outlier_rate: float = 0.02
    # Beta(a, a) shape of in-band draws; 1.0 draws uniformly over the band.
    band_shape: float = DEFAULT_BAND_SHAPE
    seed: int = 0
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    n_samples: int = DEFAULT_N_SAMPLES

    def __post_init__(self):
        object.__setattr__(self, "defects", tuple(self.defects))
        object.__setattr__(self, "band_table", {DefectClass.parse(k): (float(v[0]), float(v[1]))
                                                for k, v in self.band_table.items()})
        object.__setattr__(self, "intact_band", (float(self.intact_band[0]), float(self.intact_band[1])))
        if self.grid_cols <= 0 or self.grid_rows <= 0:
            raise InvalidSpecException(f"Scan grid must be non-empty, got {self.grid_rows} x {self.grid_cols}")
        if self.width_in <= 0 or self.height_in <= 0:
            raise InvalidSpecException(f"Slab size must be positive, got {self.width_in} x {self.height_in}")
        if not 0 <= self.outlier_rate <= 1:
            raise InvalidSpecException(f"Outlier rate must lie in [0, 1], got {self.outlier_rate}")
        if not self.band_shape > 0:
            raise InvalidSpecException(f"Band shape must be positive, got {self.band_shape}")
        if self.noise_rms < 0:
            raise InvalidSpecException(f"Noise level must be non-negative, got {self.noise_rms}")
        if self.n_samples < 1:
            raise InvalidSpecException(f"A waveform needs at least one sample, got {self.n_samples}")
        _check_band("intact", self.intact_band)
        for defect_class, band in self.band_table.items():
            _check_band(defect_class.name, band)
        for rect in self.defects:
            if not rect.inside(self.width_in, self.height_in):
                raise InvalidSpecException(f"{rect} lies outside the {self.width_in} x {self.height_in} in slab")
            if rect.defect_class not in self.band_table:
                raise InvalidSpecException(f"No frequency band for defect class {rect.defect_class.name}")
        for i, a in enumerate(self.defects):
            for b in self.defects[i + 1:]:
                if a.defect_class != b.defect_class and a.overlaps(b):
                    raise InvalidSpecException(f"Defects of different classes overlap: {a} and {b}")
        highest_khz = max([self.intact_band[1], HIGH_OUTLIER_BAND[1]] + [hi for _, hi in self.band_table.values()])
        if self.sample_rate_hz <= 2 * highest_khz * 1000:
            raise InvalidSpecException(f"Sample rate {self.sample_rate_hz} Hz is below twice the highest "
                                       f"band edge ({highest_khz} kHz)")

    @property
    def n_points(self) -> int:
        return self.grid_cols * self.grid_rows

    @property
    def pitch_in(self) -> tuple[float, float]:
        return self.width_in / self.grid_cols, self.height_in / self.grid_rows

    def scan_points(self) -> list[tuple[str, float, float]]:
        """
        Row-major scan points at grid-cell centres, as ``(point_id, x_in, y_in)``.
        """
        dx, dy = self.pitch_in
        return [(point_id(r, c), (c + 0.5) * dx, (r + 0.5) * dy)
                for r in range(self.grid_rows) for c in range(self.grid_cols)]

    def class_at(self, x_in: float, y_in: float) -> DefectClass | None:
        for rect in self.defects:
            if rect.contains(x_in, y_in):
                return rect.defect_class
        return None

    def with_seed(self, seed: int) -> "SlabSpec":
        return dataclasses.replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {"width_in": self.width_in, "height_in": self.height_in,
                "grid_cols": self.grid_cols, "grid_rows": self.grid_rows,
                "defects": [rect.to_dict() for rect in self.defects],
                "band_table": {k.name: list(v) for k, v in sorted(self.band_table.items())},
                "intact_band": list(self.intact_band),
                "noise_rms": self.noise_rms, "outlier_rate": self.outlier_rate, "band_shape": self.band_shape,
                "seed": self.seed, "sample_rate_hz": self.sample_rate_hz, "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, d: dict) -> "SlabSpec":
        kwargs = dict(d)
        if "defects" in kwargs:
            kwargs["defects"] = tuple(r if isinstance(r, DefectRect) else DefectRect.from_dict(r)
                                      for r in kwargs["defects"])
        if "band_table" in kwargs:
            kwargs["band_table"] = {DefectClass.parse(k): tuple(v) for k, v in kwargs["band_table"].items()}
        if "intact_band" in kwargs:
            kwargs["intact_band"] = tuple(kwargs["intact_band"])
        unknown = set(kwargs) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InvalidSpecException(f"Unknown slab spec keys: {sorted(unknown)}")
        return cls(**kwargs)


def point_id(row: int, col: int) -> str:
    return f"r{row:03d}c{col:03d}"


@dataclass(eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: float
    x_in: float = 0.0
    y_in: float = 0.0
    point_id: str = ""

    def __len__(self):
        return len(self.samples)


def synth_waveform(f_peak_khz: float, spec: SlabSpec, rng: np.random.Generator,
                   x_in: float = 0.0, y_in: float = 0.0, pid: str = "") -> Waveform:
    """
    An exponentially damped sinusoid at ``f_peak_khz`` plus white noise of standard
    deviation ``spec.noise_rms``. The amplitude decays to 1/e by the middle of the record.

    :raises InvalidSpecException: if the frequency is not strictly between 0 and Nyquist.
    """
    nyquist_khz = spec.sample_rate_hz / 2000
    if not 0 < f_peak_khz < nyquist_khz:
        raise InvalidSpecException(f"Peak frequency {f_peak_khz} kHz is outside (0, {nyquist_khz}) kHz")
    n = spec.n_samples
    t = np.arange(n, dtype=np.float64)
    phase = rng.uniform(0, 2 * np.pi)
    tau = n / 2
    samples = np.exp(-t / tau) * np.sin(2 * np.pi * f_peak_khz * 1000 * t / spec.sample_rate_hz + phase)
    if spec.noise_rms > 0:
        samples = samples + rng.normal(0.0, spec.noise_rms, n)
    return Waveform(samples, spec.sample_rate_hz, x_in, y_in, pid)


def draw_peak_khz(spec: SlabSpec, defect_class: DefectClass | None, rng: np.random.Generator) -> float:
    """
    Draws the resonance for a point: an outlier with probability ``outlier_rate``,
    otherwise a draw from the band of the point's class (or the intact band) that
    follows a symmetric beta law of shape ``band_shape`` over the band. Outliers are
    uniform over their band.
    """
    if spec.outlier_rate > 0 and rng.random() < spec.outlier_rate:
        band = HIGH_OUTLIER_BAND if rng.random() < 0.5 else LOW_OUTLIER_BAND
        return float(rng.uniform(*band))
    lo, hi = spec.intact_band if defect_class is None else spec.band_table[defect_class]
    return float(lo + (hi - lo) * rng.beta(spec.band_shape, spec.band_shape))


def synth_slab(spec: SlabSpec) -> tuple[list[Waveform], GroundTruthMask]:
    """
    Generates one waveform per scan point (row-major) and the slab's ground-truth mask.
    """
    rng = np.random.default_rng(spec.seed)
    waveforms = []
    for pid, x, y in spec.scan_points():
        f_peak = draw_peak_khz(spec, spec.class_at(x, y), rng)
        waveforms.append(synth_waveform(f_peak, spec, rng, x, y, pid))
    logger.info("Synthesized %d waveforms on a %d x %d grid (seed %d)",
                len(waveforms), spec.grid_rows, spec.grid_cols, spec.seed)
    return waveforms, build_mask(spec.defects, spec.width_in, spec.height_in)


def field_deck_spec(width_in: float, height_in: float, defects: list[DefectRect],
                    pitch_in: float = 4.0, seed: int = 0, **overrides) -> SlabSpec:
    """
    A deck of arbitrary size scanned at a square pitch, with free-form defects and no
    zone layout.
    """
    cols = max(1, int(round(width_in / pitch_in)))
    rows = max(1, int(round(height_in / pitch_in)))
    return SlabSpec(width_in=width_in, height_in=height_in, grid_cols=cols, grid_rows=rows,
                    defects=tuple(defects), seed=seed, **overrides)


def write_waveforms_csv(waveforms: list[Waveform], path: str):
    """
    Writes ``point_id,x_in,y_in,sample_rate_hz,s0,s1,...``. Records shorter than the
    longest one are padded with empty cells.
    """
    width = max((len(w) for w in waveforms), default=0)
    samples = np.full((len(waveforms), width), np.nan)
    for i, w in enumerate(waveforms):
        samples[i, :len(w)] = w.samples
    df = pd.DataFrame(samples, columns=[f"s{i}" for i in range(width)])
    df.insert(0, "sample_rate_hz", [w.sample_rate_hz for w in waveforms])
    df.insert(0, "y_in", [w.y_in for w in waveforms])
    df.insert(0, "x_in", [w.x_in for w in waveforms])
    df.insert(0, "point_id", [w.point_id for w in waveforms])
    df.to_csv(path, index=False, float_format="%.17g")


def read_waveforms_csv(path: str) -> list[Waveform]:
    df = pd.read_csv(path, dtype={"point_id": str}, keep_default_na=False, na_values=[""])
    sample_cols = [c for c in df.columns if c.startswith("s") and c[1:].isdigit()]
    samples = df[sample_cols].to_numpy(dtype=np.float64)
    waveforms = []
    for i, row in enumerate(df.itertuples(index=False)):
        s = samples[i]
        waveforms.append(Waveform(s[~np.isnan(s)], float(row.sample_rate_hz), float(row.x_in),
                                  float(row.y_in), str(row.point_id)))
    return waveforms


def write_spec_json(spec: SlabSpec, path: str):
    with open(path, "w") as f:
        json.dump(spec.to_dict(), f, indent=2)
        f.write("\n")


def read_spec_json(path: str) -> SlabSpec:
    with open(path) as f:
        return SlabSpec.from_dict(json.load(f))


def read_rects_json(path: str) -> list[DefectRect]:
    """
    Reads defect rectangles either from a bare JSON list or from a slab spec document.
    """
    with open(path) as f:
        doc = json.load(f)
    rects = doc["defects"] if isinstance(doc, dict) else doc
    return [DefectRect.from_dict(r) for r in rects]
