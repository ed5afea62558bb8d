"""Feature-space shift diagnostics: 2D embedding, convex hull overlap, skewness."""

from __future__ import annotations

import functools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import eigh

from .corpus import ConfigError
from .surrogate import normalize_tokens

SOURCES = ("train", "test", "augmented")


@dataclass(frozen=True)
class PointCloud:
    points: tuple[tuple[float, float], ...]
    source: str = "train"

    def __post_init__(self):
        if not self.points:
            raise ValueError("a point cloud needs at least one point")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if not all(math.isfinite(x) and math.isfinite(y) for x, y in self.points):
            raise ValueError("point coordinates must be finite")

    @classmethod
    def of(cls, points: Iterable, source: str = "train") -> "PointCloud":
        return cls(tuple((float(x), float(y)) for x, y in points), source)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: tuple[tuple[float, float], ...]
    degenerate: bool = False


@dataclass(frozen=True)
class ShiftReport:
    source: str
    reference: str
    overlap_rate: float
    skew_x: float
    skew_y: float
    global_skewness: float
    reference_global_skewness: float
    counts: dict
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "source": self.source, "reference": self.reference,
            "overlap_rate": self.overlap_rate, "skew_x": self.skew_x, "skew_y": self.skew_y,
            "global_skewness": self.global_skewness,
            "reference_global_skewness": self.reference_global_skewness,
            "counts": dict(self.counts), "degenerate": self.degenerate,
        }


# -- features & embedding --------------------------------------------------

def _ngrams(tokens: list[str]) -> list[str]:
    return tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


class NgramFeaturizer:
    """L2-normalised unigram+bigram count vectors over a fitted vocabulary."""

    def __init__(self):
        self.vocabulary: dict[str, int] = {}

    def fit(self, texts: Sequence[str]) -> "NgramFeaturizer":
        for t in texts:
            for g in _ngrams(normalize_tokens(t)):
                if g not in self.vocabulary:
                    self.vocabulary[g] = len(self.vocabulary)
        if not self.vocabulary:
            raise ValueError("featurizer vocabulary is empty")
        return self

    def transform(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix and a boolean mask of rows that are all-zero (no known n-gram)."""
        if not self.vocabulary:
            raise ValueError("featurizer vocabulary is empty")
        X = np.zeros((len(texts), len(self.vocabulary)))
        for r, t in enumerate(texts):
            for g, n in Counter(_ngrams(normalize_tokens(t))).items():
                j = self.vocabulary.get(g)
                if j is not None:
                    X[r, j] = n
        norms = np.linalg.norm(X, axis=1)
        zero = norms == 0
        X[~zero] /= norms[~zero, None]
        return X, zero


def feature_vectors(featurizer, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(featurizer, "transform"):
        return featurizer.transform(list(texts))
    X = np.asarray([featurizer(t) for t in texts], dtype=float)
    return X, np.linalg.norm(X, axis=1) == 0


def _top2_directions(Xc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Top two right singular vectors (rows) and squared singular values of ``Xc``.

    Works on whichever of the covariance or Gram matrix is smaller, so wide
    n-gram matrices stay cheap.
    """
    n, d = Xc.shape
    if d <= n:
        vals, vecs = eigh(Xc.T @ Xc, subset_by_index=[d - 2, d - 1])
        W = vecs[:, ::-1].T
    else:
        vals, vecs = eigh(Xc @ Xc.T, subset_by_index=[n - 2, n - 1])
        U = vecs[:, ::-1]
        W = (Xc.T @ U).T
        norms = np.linalg.norm(W, axis=1)
        W = W / np.where(norms > 0, norms, 1.0)[:, None]
    return np.ascontiguousarray(W), np.clip(vals[::-1], 0.0, None)


def embed_2d(features, method: str = "deterministic", seed: int = 0) -> np.ndarray:
    """Project feature vectors to 2D.

    ``deterministic``: centre, then project onto the top two principal
    directions, each signed so its largest-magnitude loading is positive.
    ``tsne``: scikit-learn t-SNE with a fixed random state.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] < 3 or X.shape[1] < 2:
        raise ValueError(f"need >= 3 vectors of dimension >= 2, got shape {X.shape}")
    Xc = X - X.mean(axis=0)
    W, lam = _top2_directions(Xc)
    if lam[1] <= lam[0] * max(X.shape) * np.finfo(float).eps:
        raise ValueError("feature matrix has rank < 2 after centring")
    if method == "tsne":
        try:
            from sklearn.manifold import TSNE
        except ImportError as e:
            raise ConfigError("method 'tsne' needs scikit-learn; install the 'tsne' extra") from e

        perplexity = min(30.0, (X.shape[0] - 1) / 3)
        return TSNE(n_components=2, random_state=seed, perplexity=perplexity, init="pca").fit_transform(X)
    if method != "deterministic":
        raise ValueError(f"unknown embedding method {method!r}")
    for r in range(2):
        j = int(np.argmax(np.abs(W[r])))
        if W[r, j] < 0:
            W[r] = -W[r]
    return Xc @ W.T


# -- geometry --------------------------------------------------------------

def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable) -> ConvexPolygon:
    """Graham scan from the lowest-y (then lowest-x) pivot; output is CCW.

    Collinear boundary points are dropped. Fewer than three non-collinear
    points give a degenerate polygon holding the distinct extreme points.
    """
    pts = sorted({(float(x), float(y)) for x, y in points}, key=lambda p: (p[1], p[0]))
    if not pts:
        raise ValueError("convex hull of no points")
    pivot = pts[0]
    rest = pts[1:]
    if not rest:
        return ConvexPolygon((pivot,), degenerate=True)

    def dist2(p):
        return (p[0] - pivot[0]) ** 2 + (p[1] - pivot[1]) ** 2

    def by_angle(p, q):
        # every point lies in the half-plane above the pivot, so the cross product orders by angle
        c = _cross(pivot, p, q)
        if c:
            return -1 if c > 0 else 1
        return -1 if dist2(p) < dist2(q) else 1

    rest.sort(key=functools.cmp_to_key(by_angle))
    if all(_cross(pivot, rest[0], p) == 0 for p in rest):
        return ConvexPolygon(tuple(sorted([pivot, rest[-1]])), degenerate=True)
    # the last ray is walked back towards the pivot, farthest point first
    j = len(rest) - 1
    while j > 0 and _cross(pivot, rest[j - 1], rest[-1]) == 0:
        j -= 1
    rest[j:] = rest[j:][::-1]
    stack = [pivot]
    for p in rest:
        while len(stack) >= 2 and _cross(stack[-2], stack[-1], p) <= 0:
            stack.pop()
        stack.append(p)
    while len(stack) >= 3 and _cross(stack[-2], stack[-1], pivot) <= 0:
        stack.pop()
    return ConvexPolygon(tuple(stack), degenerate=len(stack) < 3)


def polygon_area(poly: ConvexPolygon) -> float:
    v = poly.vertices
    if poly.degenerate or len(v) < 3:
        return 0.0
    s = math.fsum(v[i][0] * v[(i + 1) % len(v)][1] - v[(i + 1) % len(v)][0] * v[i][1] for i in range(len(v)))
    return abs(s) / 2.0


def clip_convex(subject: Sequence, clip: Sequence) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clipping of ``subject`` by convex CCW polygon ``clip``."""
    out = list(subject)
    n = len(clip)
    for i in range(n):
        a, b = clip[i], clip[(i + 1) % n]
        inp, out = out, []
        if not inp:
            break
        for j in range(len(inp)):
            p, q = inp[j - 1], inp[j]
            p_in, q_in = _cross(a, b, p) >= 0, _cross(a, b, q) >= 0
            if q_in:
                if not p_in:
                    out.append(_intersect(p, q, a, b))
                out.append(q)
            elif p_in:
                out.append(_intersect(p, q, a, b))
    return out


def _intersect(p, q, a, b) -> tuple[float, float]:
    dp, dq = _cross(a, b, p), _cross(a, b, q)
    t = dp / (dp - dq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _shoelace(v: Sequence) -> float:
    if len(v) < 3:
        return 0.0
    n = len(v)
    return abs(math.fsum(v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1] for i in range(n))) / 2.0


def hull_overlap(ha: ConvexPolygon, hb: ConvexPolygon) -> float:
    if ha.degenerate or hb.degenerate:
        if ha.degenerate and hb.degenerate:
            return 1.0 if set(ha.vertices) == set(hb.vertices) else 0.0
        return 0.0
    if ha.vertices == hb.vertices:
        return 1.0
    inter = _shoelace(clip_convex(ha.vertices, hb.vertices))
    union = polygon_area(ha) + polygon_area(hb) - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def overlap_rate(cloud_a, cloud_b) -> float:
    """Intersection-over-union of the convex hulls of two point clouds."""
    pa = cloud_a.points if isinstance(cloud_a, PointCloud) else cloud_a
    pb = cloud_b.points if isinstance(cloud_b, PointCloud) else cloud_b
    return hull_overlap(convex_hull(pa), convex_hull(pb))


# -- skewness --------------------------------------------------------------

def skewness(samples: Sequence[float], with_flag: bool = False):
    """Population skewness m3 / m2**1.5. Constant samples give 0 (flagged degenerate)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError(f"skewness needs at least 3 samples, got {x.size}")
    d = x - x.mean()
    m2 = float(np.mean(d ** 2))
    degenerate = bool(np.ptp(x) == 0) or m2 == 0.0
    value = 0.0 if degenerate else float(np.mean(d ** 3)) / m2 ** 1.5
    return (value, degenerate) if with_flag else value


def global_skewness(cloud) -> float:
    pts = np.asarray(cloud.points if isinstance(cloud, PointCloud) else cloud, dtype=float)
    return abs(skewness(pts[:, 0])) + abs(skewness(pts[:, 1]))


def shift_report(cloud: PointCloud, reference: PointCloud) -> ShiftReport:
    pts = np.asarray(cloud.points)
    sx, dx = skewness(pts[:, 0], with_flag=True)
    sy, dy = skewness(pts[:, 1], with_flag=True)
    return ShiftReport(
        source=cloud.source, reference=reference.source,
        overlap_rate=overlap_rate(cloud, reference),
        skew_x=sx, skew_y=sy, global_skewness=abs(sx) + abs(sy),
        reference_global_skewness=global_skewness(reference),
        counts={cloud.source: len(cloud), reference.source: len(reference)},
        degenerate=dx or dy,
    )


def embed_clouds(
    texts_by_source: dict[str, Sequence[str]],
    featurizer,
    method: str = "deterministic",
    seed: int = 0,
) -> dict[str, PointCloud]:
    """Embed several text sets jointly (one projection) and split back per source."""
    names = list(texts_by_source)
    all_texts = [t for n in names for t in texts_by_source[n]]
    X, _ = feature_vectors(featurizer, all_texts)
    Y = embed_2d(X, method, seed)
    out, start = {}, 0
    for n in names:
        m = len(texts_by_source[n])
        out[n] = PointCloud.of(Y[start:start + m], n)
        start += m
    return out
