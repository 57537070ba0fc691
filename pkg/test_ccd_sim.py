"""Tests for the CCD image and frame simulation."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from multislit.ccd_sim import (
    CcdModel,
    CropWindow,
    calibrate_exposure,
    default_window,
    expected_image,
    iter_frame_chunks,
    pixel_phases,
    sample_frame,
    sample_stack,
)
from multislit.optics import MaskGeometry, SlitConfiguration, SourceState


GEOMETRY = MaskGeometry()
FLAT = SourceState.coherent()
CCD = CcdModel()
FULL = SlitConfiguration.prefix(5)


def test_dark_frame_sits_at_the_offset():
    """Without light or read noise every pixel reads the dark offset."""
    frame = sample_frame(np.zeros((4, 6)), CcdModel(read_noise=0.0), seed=1)
    assert frame.dtype == np.uint16
    np.testing.assert_array_equal(frame, np.full((4, 6), 20))


def test_saturation_clips_at_fourteen_bits():
    """Overexposed pixels clip at 2¹⁴ − 1."""
    frame = sample_frame(np.full((3, 3), 1e7), CCD, seed=2)
    np.testing.assert_array_equal(frame, np.full((3, 3), 16383))


def test_frames_are_deterministic():
    """A seed fixes the frame."""
    expected = np.full((5, 5), 300.0)
    np.testing.assert_array_equal(sample_frame(expected, CCD, 9), sample_frame(expected, CCD, 9))


def test_negative_expectation_rejected():
    """Negative expected photoelectrons are refused."""
    with pytest.raises(ValueError):
        sample_frame(np.array([[-1.0]]), CCD, 0)


def test_mean_frame_converges_to_expectation():
    """The mean of 250 frames sits within 1 % of the expected counts."""
    expected = np.full((4, 10), 2000.0)
    stack = sample_stack(expected, CCD, 250, seed=5)
    mean = stack.frames.astype(float).mean(axis=0)
    target = np.rint(expected / CCD.gain) + CCD.dark_offset
    assert np.max(np.abs(mean - target) / target) < 0.01


def test_pixel_variance_tracks_photoelectrons():
    """Over 250 frames the shot-noise variance per pixel equals the mean photoelectron count."""
    levels = np.linspace(200.0, 5000.0, 12)
    expected = np.broadcast_to(levels, (20, levels.size))
    frames = sample_stack(expected, CCD, 250, seed=14).frames.astype(float)
    photoelectrons = (frames.mean(axis=0) - CCD.dark_offset) * CCD.gain
    shot_variance = frames.var(axis=0, ddof=1) * CCD.gain ** 2 - CCD.read_noise ** 2
    ratio = shot_variance.mean(axis=0) / photoelectrons.mean(axis=0)
    np.testing.assert_allclose(ratio, 1.0, atol=0.1)


def test_doubling_the_exposure_doubles_mean_counts():
    """Mean counts above the dark offset are linear in the exposure."""
    window = CropWindow(500, 510, CCD.center_column - 50, CCD.center_column + 50)
    scale = calibrate_exposure(FLAT, GEOMETRY, CCD, headroom=0.4)
    signal = []
    for factor, seed in ((1.0, 21), (2.0, 22)):
        image = expected_image(FULL, FLAT, GEOMETRY, CCD, factor * scale, window)
        frames = sample_stack(image, CCD, 20, seed=seed).frames.astype(float)
        signal.append(float((frames.mean(axis=0) - CCD.dark_offset).sum()))
    assert signal[1] / signal[0] == pytest.approx(2.0, rel=0.01)


def test_chunking_does_not_change_frames():
    """Frame k is the same whatever the chunk size."""
    expected = np.full((2, 8), 50.0)
    small = np.concatenate(list(iter_frame_chunks(expected, CCD, 7, seed=3, chunk=2)))
    large = np.concatenate(list(iter_frame_chunks(expected, CCD, 7, seed=3, chunk=25)))
    np.testing.assert_array_equal(small, large)
    assert sample_stack(expected, CCD, 7, seed=3).frames.shape == (7, 2, 8)


def test_default_window_covers_three_pi():
    """The default crop spans |δ| ≤ 3π with δ = 0 on the central column."""
    window = default_window(GEOMETRY, CCD, rows=100)
    phases = pixel_phases(GEOMETRY, CCD, window)
    assert window.cols == 1001
    assert window.rows == 100
    assert np.max(np.abs(phases)) <= 3 * np.pi
    assert phases[CCD.center_column - window.col_start] == 0.0
    with pytest.raises(ValueError):
        default_window(GEOMETRY, CCD, rows=5000)


def test_window_outside_sensor_rejected():
    """A crop window beyond the sensor is refused."""
    with pytest.raises(ValueError):
        pixel_phases(GEOMETRY, CCD, CropWindow(0, 10, 1300, 1500))


def test_expected_image_period():
    """Principal maxima repeat every 333.7 pixels and rows are identical."""
    window = CropWindow(0, 2, 0, CCD.width)
    image = expected_image(FULL, FLAT, GEOMETRY, CCD, 1.0, window)
    profile = image[0]
    center = CCD.center_column
    # first principal maximum after the central one, 333.7 pixels away
    neighbourhood = profile[center + 300:center + 370]
    assert center + 300 + int(np.argmax(neighbourhood)) == center + 334
    np.testing.assert_array_equal(image[0], image[1])


def test_background_image_is_dark():
    """The background entry has no light."""
    window = default_window(GEOMETRY, CCD, rows=4)
    assert not expected_image(SlitConfiguration(0), FLAT, GEOMETRY, CCD, 1.0, window).any()


def test_exposure_calibration_fills_headroom():
    """The calibrated exposure puts the full-mask peak at the headroom."""
    window = default_window(GEOMETRY, CCD, rows=2)
    scale = calibrate_exposure(FLAT, GEOMETRY, CCD, headroom=0.9)
    image = expected_image(FULL, FLAT, GEOMETRY, CCD, scale, window)
    peak_counts = image[0, CCD.center_column - window.col_start] / CCD.gain + CCD.dark_offset
    assert peak_counts == pytest.approx(0.9 * CCD.max_count)
    with pytest.raises(ValueError):
        calibrate_exposure(FLAT, GEOMETRY, CCD, headroom=1.5)


def test_camera_validation():
    """Impossible camera parameters are refused."""
    with pytest.raises(ValueError):
        CcdModel(quantum_efficiency=1.2)
    with pytest.raises(ValueError):
        CcdModel(bit_depth=20)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
