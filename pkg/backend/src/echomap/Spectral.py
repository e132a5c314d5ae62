import dataclasses
import enum
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import signal

from echomap.EchoMapException import InvalidSpecException
from echomap.SynthLab import Waveform

logger = logging.getLogger(__name__)

DEFAULT_MIN_KHZ = 0.3
HIGH_OUTLIER_KHZ = 15.0
LOW_OUTLIER_KHZ = 1.0
FLAT_RATIO = 3.0
# Covers the 3x3 neighbourhood of the default lab grid (pitch about 4.3 x 4.4 in).
DEFAULT_QA_RADIUS_IN = 6.5
IQR_FACTOR = 2.0


class QAFlag(enum.Flag):
    OK = 0
    HIGH_OUTLIER = enum.auto()
    LOW_OUTLIER = enum.auto()
    FLAT_SPECTRUM = enum.auto()

    def label(self) -> str:
        """
        Text form used in CSV files, e.g. ``OK`` or ``HighOutlier|FlatSpectrum``.
        """
        if not self:
            return "OK"
        return "|".join(LABELS[f] for f in _SINGLE_FLAGS if f in self)

    @classmethod
    def from_label(cls, text: str) -> "QAFlag":
        flags = cls.OK
        for part in str(text).split("|"):
            part = part.strip()
            if part and part != "OK":
                flags |= FROM_LABELS[part]
        return flags


_SINGLE_FLAGS = (QAFlag.HIGH_OUTLIER, QAFlag.LOW_OUTLIER, QAFlag.FLAT_SPECTRUM)
LABELS = {QAFlag.HIGH_OUTLIER: "HighOutlier", QAFlag.LOW_OUTLIER: "LowOutlier",
          QAFlag.FLAT_SPECTRUM: "FlatSpectrum"}
FROM_LABELS = {v: k for k, v in LABELS.items()}


@dataclass(eq=False)
class Spectrum:
    """
    One-sided magnitude spectrum ``|S(f)|`` of a zero-padded waveform.
    """
    magnitudes: np.ndarray
    bin_width_hz: float
    point_id: str = ""
    x_in: float = 0.0
    y_in: float = 0.0

    @property
    def n_fft(self) -> int:
        return 2 * (len(self.magnitudes) - 1)

    def frequencies_khz(self) -> np.ndarray:
        return np.arange(len(self.magnitudes)) * self.bin_width_hz / 1000


@dataclass(frozen=True)
class PeakReading:
    x_in: float
    y_in: float
    f_peak_khz: float
    qa: QAFlag = QAFlag.OK
    point_id: str = ""

    def __post_init__(self):
        if self.f_peak_khz < 0:
            raise InvalidSpecException(f"Peak frequency must be non-negative, got {self.f_peak_khz}")
        if QAFlag.HIGH_OUTLIER in self.qa and QAFlag.LOW_OUTLIER in self.qa:
            raise InvalidSpecException(f"Reading {self.point_id} cannot be both a high and a low outlier")

    @property
    def flagged(self) -> bool:
        return bool(self.qa)


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def detrend(w: Waveform) -> Waveform:
    """
    Removes the least-squares line (offset and slope) from a waveform.
    """
    if len(w.samples) == 0:
        raise InvalidSpecException(f"Waveform {w.point_id} has no samples")
    return dataclasses.replace(w, samples=signal.detrend(np.asarray(w.samples, dtype=np.float64), type="linear"))


def dft_magnitude(w: Waveform, hann: bool = False) -> Spectrum:
    """
    Zero-pads the samples to the next power of two and returns ``|S(f)|`` for every
    one-sided bin, unnormalized.

    :param hann: Taper the record with a Hann window before padding.
    """
    samples = np.asarray(w.samples, dtype=np.float64)
    if len(samples) == 0:
        raise InvalidSpecException(f"Waveform {w.point_id} has no samples")
    if hann:
        samples = samples * signal.get_window("hann", len(samples))
    n = next_pow2(len(samples))
    magnitudes = np.abs(np.fft.rfft(samples, n=n))
    return Spectrum(magnitudes, w.sample_rate_hz / n, w.point_id, w.x_in, w.y_in)


def peak_frequency(s: Spectrum, min_khz: float = DEFAULT_MIN_KHZ) -> PeakReading:
    """
    Picks the bin of largest magnitude at or above ``min_khz`` and reports its centre
    frequency, with QA flags for out-of-range peaks and spectra without a clear peak.
    """
    if min_khz < 0:
        raise InvalidSpecException(f"min_khz must be non-negative, got {min_khz}")
    freqs = s.frequencies_khz()
    usable = freqs >= min_khz
    if not np.any(usable):
        return PeakReading(s.x_in, s.y_in, 0.0, QAFlag.FLAT_SPECTRUM, s.point_id)
    mags = s.magnitudes[usable]
    idx = int(np.argmax(mags))
    f_peak = float(freqs[usable][idx])

    qa = QAFlag.OK
    if f_peak > HIGH_OUTLIER_KHZ:
        qa |= QAFlag.HIGH_OUTLIER
    elif f_peak < LOW_OUTLIER_KHZ:
        qa |= QAFlag.LOW_OUTLIER
    peak, median = mags[idx], float(np.median(mags))
    if peak == 0 or (median > 0 and peak / median < FLAT_RATIO):
        qa |= QAFlag.FLAT_SPECTRUM
    return PeakReading(s.x_in, s.y_in, f_peak, qa, s.point_id)


def qa_consistency(readings: list[PeakReading], radius_in: float = DEFAULT_QA_RADIUS_IN) -> list[PeakReading]:
    """
    Flags readings that deviate from the median of their neighbours (within
    ``radius_in``, excluding the reading itself) by more than twice the neighbourhood's
    interquartile range. Frequencies are never altered. A reading whose opposite
    outlier flag is already set keeps its flags as they are.
    """
    if not readings:
        return []
    xy = np.array([(r.x_in, r.y_in) for r in readings], dtype=np.float64)
    f = np.array([r.f_peak_khz for r in readings], dtype=np.float64)
    checked = []
    for i, reading in enumerate(readings):
        d2 = np.sum((xy - xy[i]) ** 2, axis=1)
        neighbours = (d2 <= radius_in ** 2) & (np.arange(len(readings)) != i)
        if not np.any(neighbours):
            checked.append(reading)
            continue
        q1, median, q3 = np.percentile(f[neighbours], [25, 50, 75])
        deviation = reading.f_peak_khz - median
        qa = reading.qa
        if abs(deviation) > IQR_FACTOR * (q3 - q1):
            flag, opposite = ((QAFlag.HIGH_OUTLIER, QAFlag.LOW_OUTLIER) if deviation > 0
                              else (QAFlag.LOW_OUTLIER, QAFlag.HIGH_OUTLIER))
            if opposite not in qa:
                qa |= flag
        checked.append(reading if qa == reading.qa else dataclasses.replace(reading, qa=qa))
    newly = sum(1 for a, b in zip(readings, checked) if a.qa != b.qa)
    if newly:
        logger.info("qa_consistency flagged %d of %d readings", newly, len(readings))
    return checked


def analyze(waveforms: list[Waveform], min_khz: float = DEFAULT_MIN_KHZ, hann: bool = False,
            qa_radius_in: float | None = DEFAULT_QA_RADIUS_IN) -> list[PeakReading]:
    """
    Detrends each waveform, extracts its peak frequency and then applies the
    neighbourhood consistency check. Pass ``qa_radius_in=None`` to skip the check.
    """
    readings = [peak_frequency(dft_magnitude(detrend(w), hann=hann), min_khz) for w in waveforms]
    if qa_radius_in is not None:
        readings = qa_consistency(readings, qa_radius_in)
    logger.info("Analyzed %d waveforms, %d flagged", len(readings), sum(r.flagged for r in readings))
    return readings


def readings_frame(readings: list[PeakReading]) -> pd.DataFrame:
    return pd.DataFrame({"point_id": [r.point_id for r in readings],
                         "x_in": [r.x_in for r in readings],
                         "y_in": [r.y_in for r in readings],
                         "f_peak_khz": [r.f_peak_khz for r in readings],
                         "qa": [r.qa.label() for r in readings]})


def write_readings_csv(readings: list[PeakReading], path: str):
    readings_frame(readings).to_csv(path, index=False, float_format="%.17g")


def read_readings_csv(path: str) -> list[PeakReading]:
    df = pd.read_csv(path, dtype={"point_id": str, "qa": str}, keep_default_na=False)
    return [PeakReading(float(row.x_in), float(row.y_in), float(row.f_peak_khz),
                        QAFlag.from_label(row.qa), str(row.point_id))
            for row in df.itertuples(index=False)]
