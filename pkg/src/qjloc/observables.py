"""Peak finding, peak widths, superposition peak heights and fringe visibility.

All distances use the minimum-image convention of the periodic box.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .state import DensityGrid, GridSpec, symmetry_images

logger = logging.getLogger(__name__)

# Peak-height ratio (min/max) at or above which the superposition counts as alive.
ALIVE_RATIO = 0.5


@dataclass(frozen=True)
class Peak:
    location: tuple[float, ...]
    index: tuple[int, ...]
    height: float
    class_id: int = -1


def min_image(delta, length: float):
    return (np.asarray(delta, dtype=float) + length / 2) % length - length / 2


def periodic_distance(a, b, length: float) -> float:
    return float(np.linalg.norm(min_image(np.subtract(a, b), length)))


def find_peaks(d: DensityGrid, k: int = 24, min_separation: float = 1.0) -> list[Peak]:
    """Top-k strict local maxima, greedily thinned to ``min_separation``.

    Neighbourhood is the full 3^D block (8 neighbours in 2D) with periodic
    wrap. A list shorter than k means fewer maxima exist; a flat density has
    none.
    """
    grid = d.grid
    values = d.values
    footprint = np.ones((3,) * values.ndim, dtype=bool)
    footprint[(1,) * values.ndim] = False
    neighbour_max = ndimage.maximum_filter(values, footprint=footprint, mode="wrap")
    candidates = np.flatnonzero(values > neighbour_max)
    if candidates.size == 0:
        logger.debug("no strict local maxima in density at t=%g", d.time)
        return []
    order = candidates[np.argsort(values.ravel()[candidates])[::-1]]
    locs = np.stack(np.unravel_index(order, values.shape), axis=1) * grid.dx
    kept: list[int] = []
    for n in range(len(order)):
        if kept:
            gaps = np.linalg.norm(min_image(locs[kept] - locs[n], grid.length), axis=1)
            if gaps.min() < min_separation:
                continue
        kept.append(n)
        if len(kept) == k:
            break
    peaks = []
    for n in kept:
        idx = np.unravel_index(order[n], values.shape)
        peaks.append(Peak(tuple(float(v) for v in locs[n]), tuple(int(i) for i in idx), float(values[idx])))
    if len(peaks) < k:
        logger.debug("found %d of %d requested peaks", len(peaks), k)
    return peaks


def cluster_by_symmetry(peaks: list[Peak], grid: GridSpec, tol: float | None = None) -> list[list[Peak]]:
    """Partition peaks into relabelling-equivalence classes.

    Two peaks share a class if one lies within ``tol`` (default 1.5 dx) of
    an image of the other. Classes come back ordered by their highest peak,
    and each peak is tagged with its class index.
    """
    if not peaks:
        return []
    if grid.dim != 2:
        raise ValueError("symmetry clustering needs two relative coordinates")
    tol = 1.5 * grid.dx if tol is None else tol
    parent = list(range(len(peaks)))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    locs = np.array([p.location for p in peaks])
    images = np.array([symmetry_images(p.location, grid.length) for p in peaks])
    # gap[i, j] = distance from peak j to the nearest image of peak i
    diff = min_image(images[:, :, None, :] - locs[None, None, :, :], grid.length)
    gap = np.linalg.norm(diff, axis=-1).min(axis=1)
    for i, j in zip(*np.nonzero(np.triu(gap <= tol, k=1))):
        parent[root(j)] = root(i)
    groups: dict[int, list[int]] = {}
    for i in range(len(peaks)):
        groups.setdefault(root(i), []).append(i)
    ordered = sorted(groups.values(), key=lambda g: -max(peaks[i].height for i in g))
    return [
        sorted((replace(peaks[i], class_id=c) for i in members), key=lambda p: -p.height)
        for c, members in enumerate(ordered)
    ]


def descent_region(block: np.ndarray, seed: tuple[int, ...]) -> np.ndarray:
    """Cells reachable from ``seed`` along paths on which the value never rises.

    This is the peak's own lobe: a neighbouring peak is cut off at the
    saddle or trough that separates it from the seed.
    """
    footprint = np.ones((3,) * block.ndim, dtype=bool)
    region = np.zeros(block.shape, dtype=bool)
    region[seed] = True
    while True:
        reach = ndimage.maximum_filter(np.where(region, block, -np.inf), footprint=footprint, mode="constant", cval=-np.inf)
        grown = region | (reach >= block)
        if np.array_equal(grown, region):
            return region
        region = grown


def _window_moments(d: DensityGrid, center, half: float, lobe: bool = True):
    """Centroid and covariance of the density inside a square periodic window.

    With ``lobe`` the window is further restricted to the descent region of
    its central cell, so side lobes and neighbouring peaks do not count.
    """
    grid = d.grid
    n_half = max(1, int(np.ceil(half / grid.dx)))
    n_half = min(n_half, grid.m // 2 - 1)
    offsets = np.arange(-n_half, n_half + 1)
    idx = [((int(round(c / grid.dx)) + offsets) % grid.m) for c in center]
    block = d.values[np.ix_(*idx)]
    if lobe:
        block = np.where(descent_region(block, (n_half,) * grid.dim), block, 0.0)
    mass = block.sum()
    if mass <= 0:
        return None
    w = block / mass
    rel = [offsets * grid.dx] * grid.dim
    coords = np.meshgrid(*rel, indexing="ij")
    means = [float((w * c).sum()) for c in coords]
    cov = np.empty((grid.dim, grid.dim))
    for a in range(grid.dim):
        for b in range(a, grid.dim):
            cov[a, b] = cov[b, a] = float((w * (coords[a] - means[a]) * (coords[b] - means[b])).sum())
    return means, cov


def half_max_width(d: DensityGrid, p: Peak, reach: float | None = None) -> float:
    """Gaussian-equivalent width from the connected half-maximum blob around a peak.

    For a Gaussian the half-maximum region is an ellipse whose uniform
    second moment is 2 ln 2 / 4 of the Gaussian's variance.
    """
    grid = d.grid
    reach = grid.length / 4 if reach is None else reach
    n_half = min(int(np.ceil(reach / grid.dx)), grid.m // 2 - 1)
    offsets = np.arange(-n_half, n_half + 1)
    idx = [(i + offsets) % grid.m for i in p.index]
    block = d.values[np.ix_(*idx)]
    labels, _ = ndimage.label(block >= 0.5 * p.height)
    blob = labels == labels[(n_half,) * grid.dim]
    coords = np.nonzero(blob)
    pts = np.stack(coords, axis=1).astype(float) * grid.dx
    if len(pts) < 2:
        return grid.dx / np.sqrt(12)
    cov = np.atleast_2d(np.cov(pts, rowvar=False, bias=True)) + np.eye(grid.dim) * grid.dx**2 / 12
    return float(np.sqrt(np.linalg.eigvalsh(cov)[-1] * 4 / (2 * np.log(2))))


def peak_width(d: DensityGrid, p: Peak, window: float | None = None, iterations: int = 2) -> float:
    """Width of one peak: sqrt of the largest eigenvalue of its second-moment matrix.

    Moments are taken in a square window of half-size ``window`` around the
    peak (default: three half-maximum widths), then the window is reset to
    three current widths and the estimate repeated ``iterations`` times.
    Each grid sample is treated as a uniform cell, adding dx^2/12 per axis,
    so a single-point spike reports the dx/sqrt(12) floor.
    """
    grid = d.grid
    half = 3 * half_max_width(d, p) if window is None else window
    width = float("nan")
    for _ in range(iterations + 1):
        if half > grid.length / 2:
            logger.debug("width window %.3g exceeds half the box; clipped", half)
            half = grid.length / 2
        got = _window_moments(d, p.location, half)
        if got is None:
            return float("nan")
        _, cov = got
        cov = cov + np.eye(grid.dim) * grid.dx**2 / 12
        width = float(np.sqrt(np.linalg.eigvalsh(cov)[-1]))
        half = max(3 * width, 2 * grid.dx)
    return width


def is_resolution_limited(width: float, grid: GridSpec) -> bool:
    return width < grid.dx


def class_heights(classes: list[list[Peak]]) -> list[float]:
    return [c[0].height for c in classes]


def top_two_heights(d: DensityGrid, k: int = 24, min_separation: float = 1.0) -> tuple[float, float]:
    """Heights of the two highest symmetry classes; h2 = 0 if only one exists."""
    classes = cluster_by_symmetry(find_peaks(d, k, min_separation), d.grid)
    heights = class_heights(classes)
    if not heights:
        return 0.0, 0.0
    if len(heights) < 2:
        return heights[0], 0.0
    return heights[0], heights[1]


def mirror_point(location, length: float) -> tuple[float, ...]:
    """Parity image -X of a configuration: same interparticle distances, mirrored order."""
    return tuple(float(v) for v in (-np.asarray(location, dtype=float)) % length)


def local_max(d: DensityGrid, center, radius: float) -> float:
    """Largest density value within ``radius`` of ``center`` (periodic)."""
    grid = d.grid
    n = max(0, int(np.floor(radius / grid.dx)))
    offsets = np.arange(-n, n + 1)
    idx = [(int(round(c / grid.dx)) + offsets) % grid.m for c in center]
    block = d.values[np.ix_(*idx)]
    mesh = np.meshgrid(*([offsets * grid.dx] * grid.dim), indexing="ij")
    inside = sum(c**2 for c in mesh) <= radius**2 + 1e-12
    return float(block[inside].max())


def superposition_heights(d: DensityGrid, radius: float = 1.0) -> tuple[float, float, Peak | None]:
    """Height of the dominant peak and of its mirror-configuration partner.

    The partner configuration shares every interparticle distance with the
    dominant one, so scattering alone cannot tell them apart. Its height is
    the local maximum within ``radius`` of the mirror point, which follows
    the partner as free evolution displaces it slightly.
    """
    peaks = find_peaks(d, k=1)
    if not peaks:
        return 0.0, 0.0, None
    top = peaks[0]
    return top.height, local_max(d, mirror_point(top.location, d.grid.length), radius), top


def height_ratio(h1: float, h2: float) -> float:
    """min/max in [0, 1]; 0 when the second class is missing."""
    if h1 <= 0:
        return float("nan")
    return min(h1, h2) / max(h1, h2)


def fringe_profile(d: DensityGrid, row: int | None = None, center: int | None = None, smooth: int = 3):
    """Smoothed central half of the x1-slice at row ``row`` (default: dominant peak's x2).

    Returns the profile and its x1 coordinates.
    """
    if row is None or center is None:
        i1, i2 = np.unravel_index(int(np.argmax(d.values)), d.values.shape)
        row = int(i2) if row is None else row
        center = int(i1) if center is None else center
    m = d.grid.m
    line = d.values[:, row]
    line = ndimage.uniform_filter1d(line, size=smooth, mode="wrap")
    idx = (center + np.arange(-m // 4, m // 4)) % m
    return line[idx], idx * d.grid.dx


def _flanking_trough(profile: np.ndarray, peak: int, step: int) -> float | None:
    """Value at the first local minimum walking away from ``peak``; None if the slope never turns."""
    i = peak
    while 0 <= i + step < len(profile):
        if profile[i + step] > profile[i]:
            return float(profile[i])
        i += step
    return None


def fringe_visibility(d: DensityGrid, row: int | None = None, center: int | None = None) -> float:
    """Contrast (max - min) / (max + min) between the slice maximum and its flanking troughs.

    ``min`` is the shallower of the two troughs next to the maximum, so a
    smooth envelope with no interior minimum reports 0 rather than the
    contrast of its tails.
    """
    profile, _ = fringe_profile(d, row, center)
    top = int(np.argmax(profile))
    hi = float(profile[top])
    troughs = [t for t in (_flanking_trough(profile, top, -1), _flanking_trough(profile, top, 1)) if t is not None]
    if not troughs or hi <= 0:
        return 0.0
    lo = max(troughs)
    return (hi - lo) / (hi + lo)


def fringe_maximum(d: DensityGrid, row: int | None = None) -> float:
    """Offset of the slice maximum from the slice's circular centroid (min-image).

    Measured against the envelope, this tracks the fringe phase rather than
    where the peaks happened to localize.
    """
    if row is None:
        row = int(np.unravel_index(int(np.argmax(d.values)), d.values.shape)[1])
    m, length = d.grid.m, d.grid.length
    line = ndimage.uniform_filter1d(d.values[:, row], size=3, mode="wrap")
    x = np.arange(m) * d.grid.dx
    centre = (np.angle(np.sum(line * np.exp(2j * np.pi * x / length))) * length / (2 * np.pi)) % length
    return float(min_image(x[int(np.argmax(line))] - centre, length))


@dataclass
class Snapshot:
    """Observables of one density.

    ``h1``/``h2`` are the dominant peak and its mirror partner; ``ratio`` is
    h2/h1. ``n_classes`` counts symmetry classes among the top peaks.
    """

    width: float
    h1: float
    h2: float
    ratio: float
    n_classes: int


def measure(
    d: DensityGrid, k: int = 24, min_separation: float = 1.0, window: float | None = None, mirror_radius: float = 1.0
) -> Snapshot:
    peaks = find_peaks(d, k, min_separation)
    if not peaks:
        return Snapshot(float("nan"), 0.0, 0.0, float("nan"), 0)
    if d.grid.dim == 2:
        classes = cluster_by_symmetry(peaks, d.grid)
    else:
        classes = [[p] for p in peaks]
    top = classes[0][0]
    h1 = top.height
    h2 = local_max(d, mirror_point(top.location, d.grid.length), mirror_radius)
    width = peak_width(d, top, window)
    return Snapshot(width, h1, h2, height_ratio(h1, h2), len(classes))
