"""Landmark tracking over frame sequences.

Two trackers share one driving loop: normalized cross-correlation against a
fixed first-frame template, and mean-shift over Epanechnikov-weighted
intensity histograms. A similarity-gated wrapper re-anchors either tracker to
its first-frame annotations whenever a reference-frame comparison metric
exceeds a threshold, which bounds drift on periodic motion.

Coordinates follow the image-core convention (x = column, y = row); estimates
are real-valued landmarks. All routines are deterministic: identical inputs
produce bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    CountMismatchError,
    EmptyHistogramError,
    InvalidParamsError,
    OutOfFrameError,
    ZeroVarianceTemplateError,
)
from .image import FrameSequence, GrayImage, Landmark, Roi, crop, round_half_away
from .metrics import METRICS, compute_metric

__all__ = [
    "NccConfig",
    "MeanShiftConfig",
    "ResetConfig",
    "TrackResult",
    "ErrorStats",
    "ncc_track",
    "mean_shift_track",
    "track_with_reset",
    "calibrate_threshold",
    "tracking_error",
]

# Peaks at least this close to a perfect match skip subpixel refinement, so
# exact translations are recovered exactly instead of picking up vertex noise.
_EXACT_PEAK = 1.0 - 1e-9

# Cumulative mean-shift scale state is kept inside this band.
_SCALE_MIN = 0.25
_SCALE_MAX = 4.0


@dataclass(frozen=True)
class NccConfig:
    """Template-correlation tracker settings.

    ``roi_half`` sets the template half extent (window side 2*roi_half+1);
    ``search_half`` bounds the per-frame displacement search around the
    previous estimate and must exceed the template half extent.
    """

    roi_half: int = 12
    search_half: int = 24
    subpixel: bool = True

    def __post_init__(self):
        if self.roi_half < 1:
            raise InvalidParamsError("roi_half must be >= 1")
        if self.search_half <= self.roi_half:
            raise InvalidParamsError("search_half must exceed roi_half")


@dataclass(frozen=True)
class MeanShiftConfig:
    """Histogram tracker settings.

    The kernel bandwidth starts at ``roi_half`` pixels and is re-estimated
    each frame by trying the multiplicative ``scale_steps`` candidates and
    keeping the one with the best Bhattacharyya match. Orientation is not
    estimated.
    """

    roi_half: int = 12
    bins: int = 32
    max_iters: int = 20
    epsilon: float = 0.1
    scale_steps: tuple[float, ...] = (0.9, 1.0, 1.1)

    def __post_init__(self):
        if self.roi_half < 1:
            raise InvalidParamsError("roi_half must be >= 1")
        if self.bins < 2:
            raise InvalidParamsError("bins must be >= 2")
        if self.max_iters < 1:
            raise InvalidParamsError("max_iters must be >= 1")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise InvalidParamsError("epsilon must be positive")
        if not self.scale_steps:
            raise InvalidParamsError("scale_steps must not be empty")
        for s in self.scale_steps:
            if not (math.isfinite(s) and s > 0):
                raise InvalidParamsError("scale steps must be positive")


@dataclass(frozen=True)
class ResetConfig:
    """Similarity-gated reset policy.

    Each frame is compared to the reference frame on ``similarity_roi`` crops
    with the named metric; a value strictly above the threshold snaps every
    estimate back to its first-frame annotation. Leave ``threshold`` unset to
    derive it from the first ``calibration_frames`` frames after the
    reference: the maximum observed similarity minus one population standard
    deviation.
    """

    similarity_roi: Roi
    metric: str = "cwssim"
    metric_params: object = None
    threshold: float | None = None
    calibration_frames: int = 0
    reference_frame: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise InvalidParamsError(f"unknown metric '{self.metric}'")
        if self.threshold is None:
            if self.calibration_frames < 1:
                raise InvalidParamsError(
                    "either threshold or calibration_frames is required")
        elif not (0.0 < self.threshold <= 1.0):
            raise InvalidParamsError("threshold must lie in (0, 1]")
        if self.calibration_frames < 0:
            raise InvalidParamsError("calibration_frames must be >= 0")
        if self.reference_frame < 0:
            raise InvalidParamsError("reference_frame must be >= 0")


@dataclass(frozen=True)
class TrackResult:
    """Per-frame tracker output.

    ``estimates[t]`` holds one landmark per tracked target at frame ``t``.
    ``match_scores`` mirrors that layout with the tracker's own confidence
    (correlation peak, or Bhattacharyya coefficient). ``similarity_trace``
    and ``reset_events`` are populated by the reset wrapper; ``scales``
    records the cumulative mean-shift bandwidth factor and is None for NCC.
    ``clamped_frames`` lists frames whose search window hit the image border.
    """

    estimates: tuple[tuple[Landmark, ...], ...]
    match_scores: tuple[tuple[float, ...], ...] | None = None
    reset_events: tuple[int, ...] = ()
    similarity_trace: tuple[float, ...] | None = None
    clamped_frames: tuple[int, ...] = ()
    scales: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if not self.estimates:
            raise InvalidParamsError("estimates must cover at least one frame")
        counts = {len(marks) for marks in self.estimates}
        if len(counts) != 1:
            raise InvalidParamsError("every frame must list the same targets")
        for parallel in (self.match_scores, self.scales):
            if parallel is not None and len(parallel) != len(self.estimates):
                raise InvalidParamsError("per-frame fields must align")
        n = len(self.estimates)
        if any(t < 0 or t >= n for t in self.reset_events):
            raise InvalidParamsError("reset event outside the frame range")


class ErrorStats(NamedTuple):
    """Tracking error in millimetres: mean, population std, per-frame means."""

    mean_mm: float
    std_mm: float
    per_frame_mm: tuple[float, ...]


# ---------------------------------------------------------------------------
# NCC stepper


def _parabolic_offset(a: float, b: float, c: float) -> float:
    """Vertex of the parabola through (-1,a), (0,b), (1,c), clamped to ±0.5.

    Returns 0 when the three points do not bend downward (no interior max).
    """
    denom = a - 2.0 * b + c
    if denom >= 0.0:
        return 0.0
    return min(0.5, max(-0.5, 0.5 * (a - c) / denom))


class _NccStepper:
    """Correlation search with templates fixed at the first frame."""

    def __init__(self, frames: Sequence[GrayImage], init: tuple[Landmark, ...],
                 cfg: NccConfig):
        self.frames = frames
        self.cfg = cfg
        first = frames[0].pixels
        height, width = first.shape
        r = cfg.roi_half
        self.templates = []
        for mark in init:
            cx, cy = round_half_away(mark.x), round_half_away(mark.y)
            if cx - r < 0 or cx + r > width - 1 or cy - r < 0 or cy + r > height - 1:
                raise OutOfFrameError(
                    f"template window at ({mark.x}, {mark.y}) with half extent "
                    f"{r} leaves the {width}x{height} frame")
            window = first[cy - r:cy + r + 1, cx - r:cx + r + 1]
            centered = window - window.mean()
            norm = float(np.sqrt(np.einsum("ij,ij->", centered, centered)))
            if norm == 0.0:
                raise ZeroVarianceTemplateError(
                    f"template at ({mark.x}, {mark.y}) has zero variance")
            self.templates.append((centered, norm))

    has_scales = False

    def initial_state(self):
        return None

    def scales_from(self, state):
        return None

    def _corr_grid(self, pixels, centered, norm, ylo, yhi, xlo, xhi):
        """Correlation for every window center in [ylo,yhi] x [xlo,xhi]."""
        r = self.cfg.roi_half
        region = pixels[ylo - r:yhi + r + 1, xlo - r:xhi + r + 1]
        windows = sliding_window_view(region, (2 * r + 1, 2 * r + 1))
        # the template sums to ~zero, so the plain dot product is already the
        # centered cross term
        cross = np.einsum("ijkl,kl->ij", windows, centered, optimize=True)
        wsum = windows.sum(axis=(2, 3))
        wsq = np.einsum("ijkl,ijkl->ij", windows, windows, optimize=True)
        count = (2 * r + 1) ** 2
        var = wsq - wsum * wsum / count
        np.clip(var, 0.0, None, out=var)
        denom = norm * np.sqrt(var)
        flat = denom == 0.0
        corr = cross / np.where(flat, 1.0, denom)
        corr[flat] = -1.0
        return corr

    def _clamped_center(self, mark, width, height):
        r = self.cfg.roi_half
        cx = min(max(round_half_away(mark.x), r), width - 1 - r)
        cy = min(max(round_half_away(mark.y), r), height - 1 - r)
        moved = cx != round_half_away(mark.x) or cy != round_half_away(mark.y)
        return cx, cy, moved

    def score_at(self, t, marks, state):
        pixels = self.frames[t].pixels
        height, width = pixels.shape
        out = []
        for (centered, norm), mark in zip(self.templates, marks):
            cx, cy, _ = self._clamped_center(mark, width, height)
            corr = self._corr_grid(pixels, centered, norm, cy, cy, cx, cx)
            out.append(float(corr[0, 0]))
        return tuple(out)

    def step(self, t, prev, state):
        pixels = self.frames[t].pixels
        height, width = pixels.shape
        r, s = self.cfg.roi_half, self.cfg.search_half
        marks, scores = [], []
        clamped = False
        for (centered, norm), mark in zip(self.templates, prev):
            cx, cy, moved = self._clamped_center(mark, width, height)
            clamped |= moved
            xlo, xhi = max(r, cx - s), min(width - 1 - r, cx + s)
            ylo, yhi = max(r, cy - s), min(height - 1 - r, cy + s)
            if (xlo, xhi, ylo, yhi) != (cx - s, cx + s, cy - s, cy + s):
                clamped = True
            corr = self._corr_grid(pixels, centered, norm, ylo, yhi, xlo, xhi)
            top = float(corr.max())
            ties_y, ties_x = np.nonzero(corr == top)
            # prefer the smallest displacement, then row-major order
            iy, ix = min(
                zip(ties_y.tolist(), ties_x.tolist()),
                key=lambda p: ((ylo + p[0] - cy) ** 2 + (xlo + p[1] - cx) ** 2,
                               p[0], p[1]))
            px, py = float(xlo + ix), float(ylo + iy)
            if self.cfg.subpixel and top < _EXACT_PEAK:
                if 0 < ix < corr.shape[1] - 1:
                    px += _parabolic_offset(
                        float(corr[iy, ix - 1]), top, float(corr[iy, ix + 1]))
                if 0 < iy < corr.shape[0] - 1:
                    py += _parabolic_offset(
                        float(corr[iy - 1, ix]), top, float(corr[iy + 1, ix]))
            marks.append(Landmark(px, py))
            scores.append(top)
        return tuple(marks), tuple(scores), state, clamped


# ---------------------------------------------------------------------------
# Mean-shift stepper


def _bin_indices(values: np.ndarray, bins: int) -> np.ndarray:
    idx = np.floor(values * (bins / 256.0)).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _kernel_window(pixels: np.ndarray, cx: float, cy: float, radius: float):
    """Integer pixel grid under an Epanechnikov kernel at (cx, cy).

    Returns (xs grid, ys grid, kernel weights, intensities) restricted to the
    frame, or None when the support misses the frame entirely.
    """
    height, width = pixels.shape
    xlo, xhi = max(0, math.ceil(cx - radius)), min(width - 1, math.floor(cx + radius))
    ylo, yhi = max(0, math.ceil(cy - radius)), min(height - 1, math.floor(cy + radius))
    if xlo > xhi or ylo > yhi:
        return None
    xs = np.arange(xlo, xhi + 1, dtype=np.float64)
    ys = np.arange(ylo, yhi + 1, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    r2 = ((gx - cx) ** 2 + (gy - cy) ** 2) / (radius * radius)
    kernel = np.clip(1.0 - r2, 0.0, None)
    return gx, gy, kernel, pixels[ylo:yhi + 1, xlo:xhi + 1]


def _kernel_histogram(values, kernel, bins):
    hist = np.bincount(_bin_indices(values, bins).ravel(),
                       weights=kernel.ravel(), minlength=bins)
    total = float(hist.sum())
    return hist, total


class _MeanShiftStepper:
    """Bhattacharyya mean-shift over kernel-weighted intensity histograms."""

    def __init__(self, frames: Sequence[GrayImage], init: tuple[Landmark, ...],
                 cfg: MeanShiftConfig):
        self.frames = frames
        self.cfg = cfg
        # candidates ordered nearest-to-unit first; a later candidate must win
        # strictly, so a static target keeps scale 1 when 1.0 is offered
        self.scale_order = tuple(sorted(cfg.scale_steps,
                                        key=lambda s: (abs(s - 1.0), s)))
        first = frames[0].pixels
        self.models = []
        for mark in init:
            window = _kernel_window(first, mark.x, mark.y, float(cfg.roi_half))
            if window is None:
                raise OutOfFrameError(
                    f"model window at ({mark.x}, {mark.y}) misses the frame")
            _, _, kernel, values = window
            hist, total = _kernel_histogram(values, kernel, cfg.bins)
            if total <= 0.0:
                raise EmptyHistogramError("model window has no kernel mass")
            self.models.append(hist / total)

    has_scales = True

    def initial_state(self):
        return tuple(1.0 for _ in self.models)

    def scales_from(self, state):
        return state

    def _similarity(self, pixels, cx, cy, model, radius):
        window = _kernel_window(pixels, cx, cy, radius)
        if window is None:
            raise EmptyHistogramError("candidate window missed the frame")
        _, _, kernel, values = window
        hist, total = _kernel_histogram(values, kernel, self.cfg.bins)
        if total <= 0.0:
            raise EmptyHistogramError("candidate window has no kernel mass")
        return float(np.sqrt(model * (hist / total)).sum())

    def _converge(self, pixels, cx, cy, model, radius):
        """Iterate the weighted centroid until the shift drops below epsilon."""
        for _ in range(self.cfg.max_iters):
            window = _kernel_window(pixels, cx, cy, radius)
            if window is None:
                raise EmptyHistogramError("candidate window missed the frame")
            gx, gy, kernel, values = window
            hist, total = _kernel_histogram(values, kernel, self.cfg.bins)
            if total <= 0.0:
                raise EmptyHistogramError("candidate window has no kernel mass")
            target = hist / total
            idx = _bin_indices(values, self.cfg.bins)
            weights = np.zeros_like(kernel)
            inside = kernel > 0.0
            weights[inside] = np.sqrt(model[idx[inside]] / target[idx[inside]])
            wsum = float(weights.sum())
            if wsum <= 0.0:
                raise EmptyHistogramError(
                    "model and candidate histograms do not overlap")
            nx = float((weights * gx).sum() / wsum)
            ny = float((weights * gy).sum() / wsum)
            shift = math.hypot(nx - cx, ny - cy)
            cx, cy = nx, ny
            if shift < self.cfg.epsilon:
                break
        return cx, cy, self._similarity(pixels, cx, cy, model, radius)

    def score_at(self, t, marks, state):
        pixels = self.frames[t].pixels
        return tuple(
            self._similarity(pixels, mark.x, mark.y, model,
                             self.cfg.roi_half * scale)
            for model, mark, scale in zip(self.models, marks, state))

    def step(self, t, prev, state):
        pixels = self.frames[t].pixels
        marks, scores, scales = [], [], []
        for model, mark, prev_scale in zip(self.models, prev, state):
            best = None
            failure = None
            for factor in self.scale_order:
                scale = min(max(prev_scale * factor, _SCALE_MIN), _SCALE_MAX)
                try:
                    cx, cy, rho = self._converge(
                        pixels, mark.x, mark.y, model,
                        self.cfg.roi_half * scale)
                except EmptyHistogramError as exc:
                    failure = exc
                    continue
                if best is None or rho > best[0]:
                    best = (rho, cx, cy, scale)
            if best is None:
                raise failure
            rho, cx, cy, scale = best
            marks.append(Landmark(cx, cy))
            scores.append(rho)
            scales.append(scale)
        return tuple(marks), tuple(scores), tuple(scales), False


# ---------------------------------------------------------------------------
# Driving loop shared by the bare trackers and the reset wrapper


_STEPPERS = {"ncc": _NccStepper, "meanshift": _MeanShiftStepper}
_DEFAULT_CFG = {"ncc": NccConfig, "meanshift": MeanShiftConfig}


def _resolve_init(seq: FrameSequence, init) -> tuple[Landmark, ...]:
    if init is None:
        if seq.landmarks is None:
            raise InvalidParamsError(
                "sequence carries no landmarks; pass init explicitly")
        init = seq.landmarks[0]
    init = tuple(init)
    if not init:
        raise InvalidParamsError("at least one landmark is required")
    return init


def _run(seq: FrameSequence, init, stepper, disturbances,
         reset: ResetConfig | None, threshold: float | None) -> TrackResult:
    frames = seq.frames
    if reset is not None:
        ref_crop = crop(frames[reset.reference_frame], reset.similarity_roi)
    estimates, scores, events, clamped = [], [], [], []
    trace = [] if reset is not None else None
    scale_log = [] if stepper.has_scales else None
    state = stepper.initial_state()
    prev = init
    for t in range(len(frames)):
        fired = False
        if reset is not None:
            value = compute_metric(
                reset.metric, ref_crop, crop(frames[t], reset.similarity_roi),
                reset.metric_params).value
            trace.append(value)
            fired = value > threshold
        if fired:
            marks = init
            state = stepper.initial_state()
            frame_scores = stepper.score_at(t, marks, state)
            events.append(t)
        elif t == 0:
            marks = init
            frame_scores = stepper.score_at(t, marks, state)
        else:
            marks, frame_scores, state, hit_border = stepper.step(t, prev, state)
            if hit_border:
                clamped.append(t)
        if disturbances is not None and t in disturbances:
            dx, dy = disturbances[t]
            marks = tuple(Landmark(m.x + dx, m.y + dy) for m in marks)
        estimates.append(marks)
        scores.append(frame_scores)
        if scale_log is not None:
            scale_log.append(stepper.scales_from(state))
        prev = marks
    return TrackResult(
        estimates=tuple(estimates),
        match_scores=tuple(scores),
        reset_events=tuple(events),
        similarity_trace=tuple(trace) if trace is not None else None,
        clamped_frames=tuple(clamped),
        scales=tuple(scale_log) if scale_log is not None else None)


def _check_cfg(cfg, tracker: str):
    expected = _DEFAULT_CFG[tracker]
    if cfg is None:
        return expected()
    if not isinstance(cfg, expected):
        raise InvalidParamsError(
            f"config for '{tracker}' must be {expected.__name__}")
    return cfg


def ncc_track(seq: FrameSequence, init=None, cfg: NccConfig | None = None,
              disturbances: Mapping[int, tuple[float, float]] | None = None
              ) -> TrackResult:
    """Track landmarks by correlating fixed first-frame templates.

    Each frame searches integer offsets within ``search_half`` of the previous
    estimate, picks the correlation peak (ties resolve to the smallest
    displacement), and optionally refines with per-axis parabolic
    interpolation. ``init`` defaults to the sequence's first-frame landmarks.
    ``disturbances`` maps frame index to an (dx, dy) corruption added to every
    estimate of that frame, for drift-injection experiments.
    """
    init = _resolve_init(seq, init)
    stepper = _NccStepper(seq.frames, init, _check_cfg(cfg, "ncc"))
    return _run(seq, init, stepper, disturbances, None, None)


def mean_shift_track(seq: FrameSequence, init=None,
                     cfg: MeanShiftConfig | None = None,
                     disturbances: Mapping[int, tuple[float, float]] | None = None
                     ) -> TrackResult:
    """Track landmarks by histogram mean-shift with scale re-estimation.

    The intensity model is built at the first-frame annotation; every frame
    iterates the Bhattacharyya-weighted centroid from the previous estimate
    for each bandwidth candidate and keeps the best match. See ``ncc_track``
    for the ``init`` and ``disturbances`` conventions.
    """
    init = _resolve_init(seq, init)
    stepper = _MeanShiftStepper(seq.frames, init, _check_cfg(cfg, "meanshift"))
    return _run(seq, init, stepper, disturbances, None, None)


def calibrate_threshold(seq: FrameSequence, reset: ResetConfig) -> float:
    """Derive the reset threshold from the frames after the reference.

    Computes the similarity trace over ``calibration_frames`` frames directly
    following the reference frame and returns its maximum minus one population
    standard deviation.
    """
    if reset.calibration_frames < 1:
        raise InvalidParamsError("calibration requires calibration_frames >= 1")
    ref = reset.reference_frame
    last = ref + reset.calibration_frames
    if ref >= len(seq.frames) or last >= len(seq.frames):
        raise InvalidParamsError("calibration window extends past the sequence")
    ref_crop = crop(seq.frames[ref], reset.similarity_roi)
    values = np.asarray([
        compute_metric(reset.metric, ref_crop,
                       crop(seq.frames[t], reset.similarity_roi),
                       reset.metric_params).value
        for t in range(ref + 1, last + 1)])
    threshold = float(values.max() - values.std())
    if not (0.0 < threshold <= 1.0):
        raise InvalidParamsError(
            f"calibrated threshold {threshold:.6g} falls outside (0, 1]")
    return threshold


def track_with_reset(tracker: str, seq: FrameSequence, init=None,
                     cfg=None, reset: ResetConfig | None = None,
                     disturbances: Mapping[int, tuple[float, float]] | None = None
                     ) -> TrackResult:
    """Run a tracker with similarity-gated re-anchoring.

    Before each tracker step the current frame is compared to the reference
    frame on the configured ROI; a similarity strictly above the threshold
    resets every estimate to its first-frame annotation (and the mean-shift
    scale to 1) instead of stepping. The full similarity trace is recorded.
    With a threshold no frame can exceed, the output estimates match the bare
    tracker bit for bit.
    """
    if tracker not in _STEPPERS:
        raise InvalidParamsError(f"unknown tracker '{tracker}'")
    if reset is None:
        raise InvalidParamsError("a ResetConfig is required")
    if reset.reference_frame >= len(seq.frames):
        raise InvalidParamsError("reference frame outside the sequence")
    init = _resolve_init(seq, init)
    stepper = _STEPPERS[tracker](seq.frames, init, _check_cfg(cfg, tracker))
    threshold = (reset.threshold if reset.threshold is not None
                 else calibrate_threshold(seq, reset))
    return _run(seq, init, stepper, disturbances, reset, threshold)


def tracking_error(result: TrackResult, truth, pixel_spacing_mm: float
                   ) -> ErrorStats:
    """Distance between estimates and ground truth, scaled to millimetres.

    ``truth`` is a per-frame sequence of landmark tuples matching the layout
    of ``result.estimates``. The mean and population standard deviation pool
    every (frame, landmark) pair; the per-frame series averages landmarks
    within each frame.
    """
    if not (math.isfinite(pixel_spacing_mm) and pixel_spacing_mm > 0):
        raise InvalidParamsError("pixel_spacing_mm must be positive")
    if truth is None or len(truth) != len(result.estimates):
        raise CountMismatchError(
            f"ground truth covers {0 if truth is None else len(truth)} frames, "
            f"estimates cover {len(result.estimates)}")
    distances = []
    per_frame = []
    for got, want in zip(result.estimates, truth):
        if len(got) != len(want):
            raise CountMismatchError(
                f"{len(want)} ground-truth landmarks vs {len(got)} estimates")
        frame_dists = [
            math.hypot(g.x - w.x, g.y - w.y) * pixel_spacing_mm
            for g, w in zip(got, want)]
        distances.extend(frame_dists)
        per_frame.append(math.fsum(frame_dists) / len(frame_dists))
    mean = math.fsum(distances) / len(distances)
    var = math.fsum((d - mean) ** 2 for d in distances) / len(distances)
    return ErrorStats(mean, math.sqrt(var), tuple(per_frame))
