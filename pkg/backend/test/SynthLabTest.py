import os
import tempfile
import unittest

import numpy as np

from echomap.DefectClass import DefectClass, ZONE_ORDER
from echomap.DefectRect import DefectRect
from echomap.EchoMapException import InvalidSpecException
from echomap.Spectral import dft_magnitude, detrend, peak_frequency
from echomap.SynthLab import (HIGH_OUTLIER_BAND, LOW_OUTLIER_BAND, SlabSpec, default_band_table, draw_peak_khz,
                              default_gtm_layout, field_deck_spec, read_spec_json, read_waveforms_csv,
                              stress_band_table, synth_slab, synth_waveform, write_spec_json,
                              write_waveforms_csv, zone_bounds)
from test.EchoMapTestConstants import BIN_WIDTH_KHZ, LAB_COLS, LAB_ROWS, POINTS_PER_DEFECT


class SynthLabTestCase(unittest.TestCase):

    def test_default_layout_centres_one_defect_per_zone(self):
        """T1.2.1 - The default layout puts each class's defect in the middle of its zone"""
        rects = default_gtm_layout()
        self.assertEqual([r.defect_class for r in rects], ZONE_ORDER)
        for rect, (lo, hi) in zip(rects, zone_bounds(120.0)):
            self.assertAlmostEqual(rect.centroid[0], (lo + hi) / 2)
            self.assertAlmostEqual(rect.centroid[1], 20.0)
            self.assertEqual(rect.area, 144.0)

    def test_scan_points_sit_at_cell_centres(self):
        """T1.2.2 - The 9 x 28 lab grid samples cell centres in row-major order"""
        spec = SlabSpec()
        points = spec.scan_points()
        self.assertEqual(len(points), LAB_ROWS * LAB_COLS)
        pid, x, y = points[0]
        self.assertEqual(pid, "r000c000")
        self.assertAlmostEqual(x, 120 / 28 / 2)
        self.assertAlmostEqual(y, 40 / 9 / 2)
        self.assertAlmostEqual(points[1][1] - points[0][1], 120 / 28)

    def test_each_default_defect_covers_nine_scan_points(self):
        """T1.2.3 - Every default defect holds a 3 x 3 block of scan points"""
        spec = SlabSpec()
        for defect_class in DefectClass:
            inside = [p for p in spec.scan_points() if spec.class_at(p[1], p[2]) == defect_class]
            self.assertEqual(len(inside), POINTS_PER_DEFECT)

    def test_overlapping_defects_of_different_classes_are_rejected(self):
        """T1.2.4 - Overlapping rectangles must share a class"""
        a = DefectRect(10.0, 10.0, 10.0, 10.0, DefectClass.VOID)
        b = DefectRect(15.0, 15.0, 10.0, 10.0, DefectClass.HONEYCOMB)
        with self.assertRaises(InvalidSpecException):
            SlabSpec(defects=(a, b))
        SlabSpec(defects=(a, DefectRect(15.0, 15.0, 10.0, 10.0, DefectClass.VOID)))

    def test_defect_outside_slab_is_rejected(self):
        """T1.2.5 - Defects must lie inside the slab"""
        with self.assertRaises(InvalidSpecException):
            SlabSpec(defects=(DefectRect(115.0, 10.0, 10.0, 10.0, DefectClass.VOID),))

    def test_sample_rate_must_exceed_twice_the_highest_band(self):
        """T1.2.6 - Specs below the Nyquist rate of their bands are invalid"""
        with self.assertRaises(InvalidSpecException):
            SlabSpec(sample_rate_hz=30_000.0)

    def recovered_tones(self, noise_rms: float, seed: int) -> int:
        spec = SlabSpec(noise_rms=noise_rms)
        rng = np.random.default_rng(seed)
        hits = 0
        for f in np.linspace(2.0, 15.0, 100):
            peak = peak_frequency(dft_magnitude(detrend(synth_waveform(float(f), spec, rng))))
            hits += abs(peak.f_peak_khz - f) <= BIN_WIDTH_KHZ
        return hits

    def test_pure_tone_peaks_within_one_bin(self):
        """T1.2.7 - Every noiseless tone from 2 to 15 kHz peaks within one DFT bin of its resonance"""
        self.assertEqual(self.recovered_tones(0.0, 3), 100)

    def test_noisy_tone_peaks_within_one_bin(self):
        """T1.2.16 - At a noise level of 0.2 at least 95 of 100 tones peak within one bin"""
        self.assertGreaterEqual(self.recovered_tones(0.2, 4), 95)

    def test_frequency_at_or_above_nyquist_is_rejected(self):
        """T1.2.8 - Waveforms cannot be synthesized at or above Nyquist"""
        with self.assertRaises(InvalidSpecException):
            synth_waveform(100.0, SlabSpec(), np.random.default_rng(0))

    def test_slab_peaks_stay_inside_their_bands(self):
        """T1.2.9 - Without outliers every peak lies within one bin of its class band"""
        spec = SlabSpec(outlier_rate=0.0, seed=5)
        waveforms, mask = synth_slab(spec)
        bands = default_band_table()
        self.assertEqual(mask.shape, (40, 120))
        for w in waveforms:
            f = peak_frequency(dft_magnitude(detrend(w))).f_peak_khz
            defect_class = spec.class_at(w.x_in, w.y_in)
            lo, hi = spec.intact_band if defect_class is None else bands[defect_class]
            self.assertGreaterEqual(f, lo - BIN_WIDTH_KHZ)
            self.assertLessEqual(f, hi + BIN_WIDTH_KHZ)

    def test_outliers_come_from_the_outlier_bands(self):
        """T1.2.10 - With an outlier rate of one every peak is an outlier"""
        spec = SlabSpec(outlier_rate=1.0, noise_rms=0.0, seed=2)
        waveforms, _ = synth_slab(spec)
        for w in waveforms:
            f = peak_frequency(dft_magnitude(detrend(w))).f_peak_khz
            in_high = HIGH_OUTLIER_BAND[0] - BIN_WIDTH_KHZ <= f <= HIGH_OUTLIER_BAND[1] + BIN_WIDTH_KHZ
            # Detrending a record of one or two cycles smears the lowest peaks.
            in_low = f <= LOW_OUTLIER_BAND[1] + 2 * BIN_WIDTH_KHZ
            self.assertTrue(in_high or in_low, f)

    def test_same_seed_same_waveforms(self):
        """T1.2.11 - Synthesis is deterministic in the seed"""
        a, _ = synth_slab(SlabSpec(seed=9))
        b, _ = synth_slab(SlabSpec(seed=9))
        c, _ = synth_slab(SlabSpec(seed=10))
        self.assertTrue(all(np.array_equal(x.samples, y.samples) for x, y in zip(a, b)))
        self.assertFalse(all(np.array_equal(x.samples, y.samples) for x, y in zip(a, c)))

    def test_stress_bands_are_wider(self):
        """T1.2.12 - Every stress band contains its default band"""
        default, stress = default_band_table(), stress_band_table()
        for c in DefectClass:
            self.assertLessEqual(stress[c][0], default[c][0])
            self.assertGreaterEqual(stress[c][1], default[c][1])

    def test_field_deck_uses_square_pitch(self):
        """T1.2.13 - Field decks are scanned at the requested pitch"""
        deck = field_deck_spec(96.0, 48.0, [DefectRect(20.0, 10.0, 16.0, 12.0, DefectClass.VOID)], pitch_in=4.0)
        self.assertEqual((deck.grid_rows, deck.grid_cols), (12, 24))
        self.assertEqual(deck.pitch_in, (4.0, 4.0))

    def test_files_round_trip(self):
        """T1.2.14 - Specs and waveforms survive their file formats unchanged"""
        spec = SlabSpec(grid_cols=4, grid_rows=2, defects=(), seed=1, n_samples=64)
        waveforms, _ = synth_slab(spec)
        with tempfile.TemporaryDirectory() as tmp:
            write_spec_json(spec, os.path.join(tmp, "spec.json"))
            write_waveforms_csv(waveforms, os.path.join(tmp, "waveforms.csv"))
            self.assertEqual(read_spec_json(os.path.join(tmp, "spec.json")), spec)
            back = read_waveforms_csv(os.path.join(tmp, "waveforms.csv"))
        self.assertEqual([w.point_id for w in back], [w.point_id for w in waveforms])
        self.assertTrue(all(np.array_equal(a.samples, b.samples) for a, b in zip(back, waveforms)))

    def test_unknown_spec_keys_are_rejected(self):
        """T1.2.15 - Spec documents with unknown keys are invalid"""
        with self.assertRaises(InvalidSpecException):
            SlabSpec.from_dict({"width_in": 120.0, "depth_in": 8.0})

    def central_share(self, band_shape: float) -> float:
        spec = SlabSpec(outlier_rate=0.0, band_shape=band_shape)
        rng = np.random.default_rng(6)
        lo, hi = spec.band_table[DefectClass.VOID]
        draws = np.array([draw_peak_khz(spec, DefectClass.VOID, rng) for _ in range(2000)])
        self.assertTrue(np.all((draws >= lo) & (draws <= hi)))
        return float(np.mean(np.abs(draws - (lo + hi) / 2) <= (hi - lo) / 4))

    def test_band_draws_concentrate_at_the_centre(self):
        """T1.2.17 - Resonances stay inside their band and crowd its central half"""
        self.assertGreater(self.central_share(6.0), 0.85)
        self.assertAlmostEqual(self.central_share(1.0), 0.5, delta=0.05)

    def test_band_shape_must_be_positive(self):
        """T1.2.18 - A non-positive band shape is invalid"""
        with self.assertRaises(InvalidSpecException):
            SlabSpec(band_shape=0.0)
        self.assertEqual(SlabSpec.from_dict(SlabSpec(band_shape=2.5).to_dict()).band_shape, 2.5)


if __name__ == '__main__':
    unittest.main()
