"""Planar geometry: segment/disk chords and in-range times.

Scalar helpers (:func:`chord`, :func:`in_range_time`) operate on the small
value types below; the ``*_batch`` variants take ``(n, 2)`` arrays and are
what the simulation engine uses.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

# Discriminants below zero by at most DISC_CLAMP times the size of its terms
# are treated as tangency.
DISC_CLAMP = 1e-12


class Point(NamedTuple):
    x: float
    y: float


class Segment(NamedTuple):
    start: Point
    end: Point


class Disk(NamedTuple):
    center: Point
    radius: float


class InRangeChord(NamedTuple):
    present: bool
    first: Point | None = None
    last: Point | None = None


def _roots(a, b, c):
    """Sorted roots of a*t^2 + b*t + c = 0 for a > 0, stable form.

    Returns ``(lo, hi, ok)``; ``ok`` is False where the discriminant is
    negative beyond the clamp.
    """
    disc = b * b - 4.0 * a * c
    # relative to the magnitude of the terms, so the test is scale free
    ok = disc >= -DISC_CLAMP * (b * b + 4.0 * a * np.abs(c))
    tangent = disc <= 0.0
    sq = np.sqrt(np.where(ok, np.maximum(disc, 0.0), 0.0))
    q = -0.5 * (b + np.where(b >= 0.0, sq, -sq))
    # a tiny q puts the far root at +-inf, which the callers clip to the segment
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        safe_a = np.where(a > 0.0, a, 1.0)
        r1 = np.where(a > 0.0, q / safe_a, 0.0)
        r2 = np.where(q != 0.0, c / np.where(q != 0.0, q, 1.0), r1)
        # double root; c / q is unreliable when both are round-off sized
        double = np.where(a > 0.0, -0.5 * b / safe_a, 0.0)
    r1 = np.where(tangent, double, r1)
    r2 = np.where(tangent, double, r2)
    return np.minimum(r1, r2), np.maximum(r1, r2), ok


def chord_batch(starts, ends, center, radius):
    """Clip each segment to the closed disk.

    Parameters
    ----------
    starts, ends : ndarray of shape (n, 2)
    center : array-like of shape (2,)
    radius : float

    Returns
    -------
    present : bool ndarray (n,)
    s0, s1 : ndarray (n,)
        Segment parameters in [0, 1] of the first and last in-range points
        (meaningless where ``present`` is False).
    """
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    d = ends - starts
    f = starts - np.asarray(center, dtype=float)
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * np.einsum("ij,ij->i", f, d)
    c = np.einsum("ij,ij->i", f, f) - float(radius) ** 2

    moving = a > 0.0
    lo, hi, ok = _roots(a, b, c)
    s0 = np.where(moving, np.maximum(lo, 0.0), 0.0)
    s1 = np.where(moving, np.minimum(hi, 1.0), 0.0)
    present = np.where(moving, ok & (s0 <= s1), c <= 0.0)
    return present, s0, s1


def in_range_time_batch(starts, ends, velocity, center, radius, tau):
    """In-range time, entry parameter and entry distance for many agents.

    Returns ``(present, t_in, s0, entry_distance)``; ``s0`` is the fraction
    of the round elapsed when the agent reaches its first in-range point.
    """
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    present, s0, s1 = chord_batch(starts, ends, center, radius)
    d = ends - starts
    first = starts + s0[:, None] * d
    last = starts + s1[:, None] * d
    length = np.hypot(*(last - first).T)
    moving = velocity != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_moving = np.where(moving, length / np.where(moving, velocity, 1.0), 0.0)
    t_in = np.where(
        present & (length > 0.0) & moving,
        np.minimum(t_moving, tau),
        np.where(present & (length == 0.0) & ~moving, tau, 0.0),
    )
    entry_distance = np.hypot(*(first - np.asarray(center, dtype=float)).T)
    return present, t_in, s0, entry_distance


def segment_distance_batch(starts, ends, center):
    """Distance from ``center`` to the closest point of each segment."""
    starts = np.asarray(starts, dtype=float)
    d = np.asarray(ends, dtype=float) - starts
    w = np.asarray(center, dtype=float) - starts
    a = np.einsum("ij,ij->i", d, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(a > 0.0, np.einsum("ij,ij->i", w, d) / np.where(a > 0.0, a, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = starts + t[:, None] * d
    return np.hypot(*(closest - np.asarray(center, dtype=float)).T)


def chord(seg: Segment, disk: Disk) -> InRangeChord:
    """Maximal sub-segment of ``seg`` inside the closed ``disk``."""
    starts = np.array([seg.start], dtype=float)
    ends = np.array([seg.end], dtype=float)
    present, s0, s1 = chord_batch(starts, ends, disk.center, disk.radius)
    if not present[0]:
        return InRangeChord(False)
    (sx, sy), (ex, ey) = seg
    dx, dy = ex - sx, ey - sy
    first = Point(sx + s0[0] * dx, sy + s0[0] * dy)
    last = Point(sx + s1[0] * dx, sy + s1[0] * dy)
    return InRangeChord(True, first, last)


def in_range_time(seg: Segment, disk: Disk, v: float, tau: float) -> float:
    """Time an agent travelling ``seg`` at speed ``v`` spends inside ``disk``."""
    if v < 0 or tau <= 0:
        raise ValueError("need v >= 0 and tau > 0")
    ch = chord(seg, disk)
    if not ch.present:
        return 0.0
    length = math.dist(ch.first, ch.last)
    if length > 0.0 and v != 0.0:
        return min(length / v, tau)
    if length == 0.0 and v == 0.0:
        return float(tau)
    return 0.0
