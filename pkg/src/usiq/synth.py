"""Synthetic benchmark generation: disc phantoms, multiplicative speckle,
and periodic-motion sequences with exact ground-truth landmark tracks.

Noise level is a blend weight on a unit-mean Rayleigh multiplier rather than
a raw Rayleigh scale: the Rayleigh family is closed under scaling, so scale
alone would conflate severity with brightness drift. alpha = 0 leaves the
image untouched, alpha = 1 is fully developed multiplicative speckle, and
expected brightness is preserved at every level in between.

Sub-pixel disc motion is rendered analytically (coverage-weighted edge
pixels), never by resampling a rendered frame, so the recorded tracks are
exact and interpolation artifacts cannot leak into metric traces.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParamsError, OutOfFrameError
from .image import (
    FrameSequence,
    GrayImage,
    Landmark,
    SequenceManifest,
    save_manifest,
    save_pgm,
)


@dataclass(frozen=True)
class Disc:
    """One bright landmark: a filled disc with an anti-aliased rim."""

    center: Landmark
    radius: float
    intensity: float = 200.0

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise InvalidParamsError(f"radius must be > 0, got {self.radius}")
        if not (0.0 <= self.intensity <= 255.0):
            raise InvalidParamsError(
                f"intensity must lie in [0, 255], got {self.intensity}")


@dataclass(frozen=True)
class PhantomSpec:
    width: int
    height: int
    background_mean: float = 80.0
    background_texture_sigma: float = 10.0
    landmarks: tuple[Disc, ...] = ()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidParamsError("frame dimensions must be >= 1")
        if not (0.0 <= self.background_mean <= 255.0):
            raise InvalidParamsError("background_mean must lie in [0, 255]")
        if self.background_texture_sigma < 0:
            raise InvalidParamsError("background_texture_sigma must be >= 0")
        object.__setattr__(self, "landmarks", tuple(self.landmarks))


@dataclass(frozen=True)
class SpeckleSpec:
    alpha: float
    rayleigh_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParamsError(
                f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.rayleigh_sigma > 0:
            raise InvalidParamsError("rayleigh_sigma must be > 0")
        if self.seed < 0:
            raise InvalidParamsError("seed must be >= 0")


@dataclass(frozen=True)
class MotionSpec:
    """Sinusoidal landmark displacement along one image axis."""

    amplitude: float
    period: float
    n_frames: int
    phase: float = 0.0
    axis: str = "x"

    def __post_init__(self):
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise InvalidParamsError("amplitude must be >= 0")
        if not self.period >= 2:
            raise InvalidParamsError(
                f"period must be >= 2 frames, got {self.period}")
        if self.n_frames < 1:
            raise InvalidParamsError("n_frames must be >= 1")
        if self.axis not in ("x", "y"):
            raise InvalidParamsError(f"axis must be 'x' or 'y', got "
                                     f"{self.axis!r}")


def displacement(motion: MotionSpec, frame: int) -> float:
    """Commanded landmark offset (pixels) at the given frame index."""
    return motion.amplitude * math.sin(
        2.0 * math.pi * frame / motion.period + motion.phase)


def _require_discs_in_frame(spec: PhantomSpec, margin_x: float = 0.0,
                            margin_y: float = 0.0) -> None:
    """A disc plus its motion envelope must stay on pixel centers [0, d-1]."""
    for disc in spec.landmarks:
        x, y, r = disc.center.x, disc.center.y, disc.radius
        if (x - r - margin_x < 0.0 or x + r + margin_x > spec.width - 1.0
                or y - r - margin_y < 0.0
                or y + r + margin_y > spec.height - 1.0):
            raise OutOfFrameError(
                f"disc at ({x}, {y}) radius {r} leaves the "
                f"{spec.width}x{spec.height} frame "
                f"(motion margin {margin_x}, {margin_y})")


def make_phantom(spec: PhantomSpec, seed: int = 0) -> GrayImage:
    """Render the textured background and composite each disc over it.

    Edge pixels blend by coverage clip(radius + 0.5 - distance, 0, 1), which
    makes the rendered centroid track fractional centers.
    """
    _require_discs_in_frame(spec)
    if spec.background_texture_sigma > 0:
        rng = np.random.default_rng(seed)
        bg = spec.background_mean + spec.background_texture_sigma * \
            rng.standard_normal((spec.height, spec.width))
        img = np.clip(bg, 0.0, 255.0)
    else:
        img = np.full((spec.height, spec.width), spec.background_mean)
    yy = np.arange(spec.height, dtype=np.float64)[:, None]
    xx = np.arange(spec.width, dtype=np.float64)[None, :]
    for disc in spec.landmarks:
        dist = np.hypot(yy - disc.center.y, xx - disc.center.x)
        cov = np.clip(disc.radius + 0.5 - dist, 0.0, 1.0)
        img = img * (1.0 - cov) + disc.intensity * cov
    return GrayImage(img)


def apply_speckle(image: GrayImage, spec: SpeckleSpec) -> GrayImage:
    """Blend a unit-mean Rayleigh multiplier into the image.

    output = clamp(image * ((1 - alpha) + alpha * r), 0, 255) with
    E[r] = 1. alpha = 0 returns the input bit for bit.
    """
    rng = np.random.default_rng(spec.seed)
    raw = rng.rayleigh(scale=spec.rayleigh_sigma, size=image.pixels.shape)
    unit = raw / (spec.rayleigh_sigma * math.sqrt(math.pi / 2.0))
    mult = (1.0 - spec.alpha) + spec.alpha * unit
    return GrayImage(np.clip(image.pixels * mult, 0.0, 255.0))


def periodic_sequence(phantom: PhantomSpec, motion: MotionSpec,
                      speckle: SpeckleSpec | None = None, seed: int = 0,
                      pixel_spacing_mm: float = 1.0) -> FrameSequence:
    """Render frames with sinusoidally displaced discs; frame 0 is the reference.

    The background texture is drawn once from ``seed`` and shared by every
    frame; speckle, when given, is re-seeded per frame as ``speckle.seed +
    frame`` so consecutive frames carry independent noise (decorrelated
    speckle). The returned sequence embeds the exact real-valued disc
    centers as per-frame landmarks.
    """
    margin = motion.amplitude
    _require_discs_in_frame(phantom,
                            margin_x=margin if motion.axis == "x" else 0.0,
                            margin_y=margin if motion.axis == "y" else 0.0)
    frames = []
    tracks = []
    for t in range(motion.n_frames):
        d = displacement(motion, t)
        dx, dy = (d, 0.0) if motion.axis == "x" else (0.0, d)
        centers = tuple(Landmark(disc.center.x + dx, disc.center.y + dy)
                        for disc in phantom.landmarks)
        moved = PhantomSpec(
            width=phantom.width, height=phantom.height,
            background_mean=phantom.background_mean,
            background_texture_sigma=phantom.background_texture_sigma,
            landmarks=tuple(Disc(c, disc.radius, disc.intensity)
                            for c, disc in zip(centers, phantom.landmarks)))
        frame = make_phantom(moved, seed)
        if speckle is not None:
            frame = apply_speckle(frame, SpeckleSpec(
                alpha=speckle.alpha, rayleigh_sigma=speckle.rayleigh_sigma,
                seed=speckle.seed + t))
        frames.append(frame)
        tracks.append(centers)
    return FrameSequence(frames=tuple(frames),
                         pixel_spacing_mm=pixel_spacing_mm,
                         landmarks=tuple(tracks),
                         reference_frame=0)


def write_sequence(sequence: FrameSequence, directory, stem: str = "frame") -> str:
    """Write numbered PGM frames plus a manifest JSON; returns the manifest path."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    names = []
    for t, frame in enumerate(sequence.frames):
        name = f"{stem}_{t:04d}.pgm"
        save_pgm(frame, os.path.join(directory, name))
        names.append(name)
    manifest = SequenceManifest(frame_paths=tuple(names),
                                pixel_spacing_mm=sequence.pixel_spacing_mm,
                                landmarks=sequence.landmarks,
                                reference_frame=sequence.reference_frame)
    path = os.path.join(directory, f"{stem}_manifest.json")
    save_manifest(manifest, path)
    return path


# Shared benchmark geometry: one bright disc mid-left on a 256x256 textured
# field, swinging 8 px laterally over a 30-frame cycle. The optional decoy is
# an identical disc 100 px to the right moving in lockstep, placed so that a
# +100 px corruption of the tracker state lands exactly on it.


def benchmark_phantom_spec(decoy: bool = False) -> PhantomSpec:
    discs = [Disc(Landmark(100.0, 128.0), radius=10.0, intensity=200.0)]
    if decoy:
        discs.append(Disc(Landmark(200.0, 128.0), radius=10.0,
                          intensity=200.0))
    return PhantomSpec(width=256, height=256, background_mean=80.0,
                       background_texture_sigma=10.0, landmarks=tuple(discs))


def benchmark_motion_spec(n_frames: int = 90) -> MotionSpec:
    return MotionSpec(amplitude=8.0, period=30.0, n_frames=n_frames,
                      phase=math.pi / 2.0, axis="x")
