"""Procedural datasets: Gaussian blob classification and shape images.

The shape task renders 64x64 grayscale images where each shape vertex appears
as a small cluster of bright pixels. Labels are two binary heads: 4-sided vs
3-sided, and equal-length sides vs not. Vertex coordinates use (x, y) with x
as the column index and y as the row index; pixels[round(y), round(x)] is the
rendered location.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GenerationError, ValidationError
from .fileio import atomic_write_bytes, atomic_write_text

IMAGE_SIZE = 64
VERTEX_MARGIN = 6.0
CLUSTER_POINTS = 5
CLUSTER_RADIUS = 2.0
MIN_LIT_PER_VERTEX = 3
# label margins that keep the equal/unequal classes well separated under
# pixel quantization
TRIANGLE_RATIO_MIN = 1.25
RECT_ASPECT_MIN = 1.3
EQUAL_REL_TOL = 0.015
PERP_TOL_DEG = 1.0

SHAPE_KINDS = ("equilateral_triangle", "triangle", "square", "rectangle")


# ----------------------------------------------------------------------
# blobs


@dataclass(frozen=True)
class BlobTask:
    """Isotropic Gaussian clusters around fixed class centers."""

    num_classes: int = 4
    input_dim: int = 2
    noise_sigma: float = 0.6
    centers: np.ndarray | None = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"blobs need >= 2 classes, got {self.num_classes}")
        if self.input_dim < 2:
            raise ConfigError(f"blobs need input_dim >= 2, got {self.input_dim}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.centers is not None:
            c = np.asarray(self.centers, dtype=np.float64)
            if c.shape != (self.num_classes, self.input_dim):
                raise ConfigError(
                    f"centers shape {c.shape} does not match "
                    f"({self.num_classes}, {self.input_dim})"
                )
            d = np.linalg.norm(c[:, None] - c[None, :], axis=-1)
            if np.any(d[~np.eye(len(c), dtype=bool)] == 0):
                raise ConfigError("class centers must be pairwise distinct")
            object.__setattr__(self, "centers", c)

    def resolved_centers(self) -> np.ndarray:
        if self.centers is not None:
            return self.centers
        # default layout: evenly spaced on a circle of radius 2 in the first
        # two coordinates
        angles = 2.0 * np.pi * np.arange(self.num_classes) / self.num_classes
        c = np.zeros((self.num_classes, self.input_dim))
        c[:, 0] = 2.0 * np.cos(angles)
        c[:, 1] = 2.0 * np.sin(angles)
        return c


def gen_blobs(task: BlobTask, n: int, rng: np.random.Generator):
    """Return (X, labels) with labels balanced within +-1 and shuffled."""
    c = task.num_classes
    per = n // c
    labels = np.repeat(np.arange(c), per)
    labels = np.concatenate([labels, np.arange(n - per * c)])
    labels = labels[rng.permutation(n)]
    centers = task.resolved_centers()
    x = centers[labels] + task.noise_sigma * rng.standard_normal((n, task.input_dim))
    return x, labels.reshape(-1, 1)


# ----------------------------------------------------------------------
# shapes


@dataclass
class ShapeImage:
    pixels: np.ndarray
    vertices: np.ndarray
    label_sides: int  # 1 = 4-sided, 0 = 3-sided
    label_equal: int  # 1 = all sides equal length
    kind: str = field(default="", compare=False)


def _place(verts: np.ndarray, rng: np.random.Generator) -> np.ndarray | None:
    """Translate centered vertices to a uniform position respecting margins."""
    lo = VERTEX_MARGIN - verts.min(axis=0)
    hi = (IMAGE_SIZE - VERTEX_MARGIN) - verts.max(axis=0)
    if np.any(hi < lo):
        return None
    return verts + lo + (hi - lo) * rng.random(2)


def _sample_vertices(kind: str, rng: np.random.Generator) -> np.ndarray | None:
    if kind == "equilateral_triangle":
        side = rng.uniform(16.0, 40.0)
        radius = side / np.sqrt(3.0)
        theta = rng.uniform(0.0, 2.0 * np.pi)
        angles = theta + 2.0 * np.pi * np.arange(3) / 3.0
        verts = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return _place(verts, rng)
    if kind == "triangle":
        verts = rng.uniform(0.0, 40.0, size=(3, 2))
        sides = np.linalg.norm(verts - np.roll(verts, -1, axis=0), axis=1)
        if sides.min() < 12.0 or sides.max() > 46.0:
            return None
        if sides.max() / sides.min() < TRIANGLE_RATIO_MIN:
            return None
        # keep the triangle visibly non-degenerate
        if _min_angle_deg(verts) < 25.0:
            return None
        return _place(verts, rng)
    # axis pair for the quadrangles; exact perpendicularity by construction
    theta = rng.uniform(0.0, np.pi / 2.0)
    u = np.array([np.cos(theta), np.sin(theta)])
    v = np.array([-np.sin(theta), np.cos(theta)])
    if kind == "square":
        a = b = rng.uniform(12.0, 34.0)
    else:
        a = rng.uniform(12.0, 22.0)
        b = a * rng.uniform(RECT_ASPECT_MIN, 2.0)
    half = 0.5 * (a * u[None, :] * np.array([[1], [-1], [-1], [1]])
                  + b * v[None, :] * np.array([[1], [1], [-1], [-1]]))
    return _place(half, rng)


def _min_angle_deg(verts: np.ndarray) -> float:
    angles = []
    for i in range(3):
        e1 = verts[(i + 1) % 3] - verts[i]
        e2 = verts[(i + 2) % 3] - verts[i]
        cosv = np.dot(e1, e2) / (np.linalg.norm(e1) * np.linalg.norm(e2))
        angles.append(np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0))))
    return min(angles)


def _render_cluster(pixels: np.ndarray, vertex: np.ndarray, rng: np.random.Generator) -> bool:
    """Light CLUSTER_POINTS pixels near the vertex; needs >= 3 distinct lit
    pixels within CLUSTER_RADIUS of the vertex center."""
    for _ in range(50):
        r = CLUSTER_RADIUS * np.sqrt(rng.random(CLUSTER_POINTS))
        phi = rng.uniform(0.0, 2.0 * np.pi, CLUSTER_POINTS)
        pts = vertex[None, :] + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
        cols = np.rint(pts[:, 0]).astype(int)
        rows = np.rint(pts[:, 1]).astype(int)
        if (cols < 0).any() or (cols >= IMAGE_SIZE).any() or (rows < 0).any() or (
            rows >= IMAGE_SIZE
        ).any():
            continue
        d = np.hypot(cols - vertex[0], rows - vertex[1])
        near = {(c, rw) for c, rw, dd in zip(cols, rows, d) if dd <= CLUSTER_RADIUS + 1e-9}
        if len(near) < MIN_LIT_PER_VERTEX:
            continue
        pixels[rows, cols] = 1.0
        return True
    return False


def gen_shape(rng: np.random.Generator) -> ShapeImage:
    """Draw one of the four shape kinds uniformly and render it."""
    kind = SHAPE_KINDS[rng.integers(len(SHAPE_KINDS))]
    for _ in range(1000):
        verts = _sample_vertices(kind, rng)
        if verts is None:
            continue
        pixels = np.zeros((IMAGE_SIZE, IMAGE_SIZE))
        if all(_render_cluster(pixels, v, rng) for v in verts):
            return ShapeImage(
                pixels=pixels,
                vertices=verts,
                label_sides=int(len(verts) == 4),
                label_equal=int(kind in ("equilateral_triangle", "square")),
                kind=kind,
            )
    raise GenerationError(f"could not generate a valid {kind} in 1000 attempts")


def verify_shape(img: ShapeImage) -> list[str]:
    """Recompute geometry from stored vertices and return violation messages.

    Independent of the generator: distances, angles, and pixel clusters are
    all rechecked from the rendered data.
    """
    problems = []
    if img.pixels.shape != (IMAGE_SIZE, IMAGE_SIZE):
        problems.append(f"image size {img.pixels.shape} != {(IMAGE_SIZE, IMAGE_SIZE)}")
        return problems
    if img.pixels.min() < 0.0 or img.pixels.max() > 1.0:
        problems.append("pixel values outside [0, 1]")
    k = len(img.vertices)
    if k not in (3, 4):
        problems.append(f"vertex count {k} not in (3, 4)")
        return problems
    if img.label_sides != int(k == 4):
        problems.append(f"label_sides {img.label_sides} inconsistent with {k} vertices")
    if np.any(img.vertices < VERTEX_MARGIN) or np.any(img.vertices > IMAGE_SIZE - VERTEX_MARGIN):
        problems.append("vertex violates the border margin")

    rows, cols = np.nonzero(img.pixels >= 0.5)
    for i, (vx, vy) in enumerate(img.vertices):
        near = np.hypot(cols - vx, rows - vy) <= CLUSTER_RADIUS + 1e-9
        if near.sum() < MIN_LIT_PER_VERTEX:
            problems.append(f"vertex {i} has {int(near.sum())} lit pixels within 2 px")

    sides = np.linalg.norm(img.vertices - np.roll(img.vertices, -1, axis=0), axis=1)
    if k == 4:
        for i in range(4):
            e1 = img.vertices[(i + 1) % 4] - img.vertices[i]
            e2 = img.vertices[(i + 2) % 4] - img.vertices[(i + 1) % 4]
            cosv = np.dot(e1, e2) / (np.linalg.norm(e1) * np.linalg.norm(e2))
            ang = np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))
            if abs(ang - 90.0) > PERP_TOL_DEG:
                problems.append(f"corner {i} off perpendicular by {abs(ang - 90.0):.3f} deg")
    if k == 3 and img.label_equal:
        pairwise = np.linalg.norm(
            img.vertices[[0, 0, 1]] - img.vertices[[1, 2, 2]], axis=1
        )
        if pairwise.max() / pairwise.min() > 1.0 + EQUAL_REL_TOL:
            problems.append("labelled equilateral but pairwise distances differ > 1.5%")
    if k == 4 and img.label_equal and sides.max() / sides.min() > 1.0 + EQUAL_REL_TOL:
        problems.append("labelled square but side lengths differ > 1.5%")
    if not img.label_equal:
        ratio = sides.max() / sides.min()
        floor = TRIANGLE_RATIO_MIN if k == 3 else RECT_ASPECT_MIN
        if ratio < floor - 1e-9:
            problems.append(
                f"labelled unequal but side ratio {ratio:.4f} is under the {floor} margin"
            )
    return problems


def gen_shapes(n: int, rng: np.random.Generator):
    """Return (X, labels) arrays: X is (n, 1, 64, 64), labels is (n, 2)."""
    images = [gen_shape(rng) for _ in range(n)]
    x = np.stack([im.pixels for im in images])[:, None, :, :]
    labels = np.array([[im.label_sides, im.label_equal] for im in images])
    return x, labels


# ----------------------------------------------------------------------
# target encoding and mixup


def encode_targets(labels, class_counts) -> np.ndarray:
    """One-hot block encoding: labels (n, L) with class_counts per column."""
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels.reshape(-1, 1)
    counts = [int(c) for c in class_counts]
    if labels.shape[1] != len(counts):
        raise ValidationError(
            f"got {labels.shape[1]} label columns but {len(counts)} class counts"
        )
    n = labels.shape[0]
    out = np.zeros((n, sum(counts)))
    offset = 0
    for j, c in enumerate(counts):
        col = labels[:, j]
        if np.any(col < 0) or np.any(col >= c):
            raise ValidationError(f"label column {j} has values outside [0, {c})")
        out[np.arange(n), offset + col] = 1.0
        offset += c
    return out


def decode_argmax(y: np.ndarray, class_counts) -> np.ndarray:
    """Argmax per one-hot block; inverse of encode_targets for hard labels."""
    y = np.asarray(y)
    out = np.zeros((y.shape[0], len(class_counts)), dtype=int)
    offset = 0
    for j, c in enumerate(class_counts):
        out[:, j] = np.argmax(y[:, offset : offset + c], axis=1)
        offset += c
    return out


def mixup(batch_a, batch_b, alpha: float, rng: np.random.Generator, lam: float | None = None):
    """Convexly combine two (X, Y) batches with lambda ~ Beta(alpha, alpha).

    One lambda per call. Pass ``lam`` to pin the coefficient (tests).
    """
    if alpha <= 0:
        raise ConfigError(f"mixup alpha must be > 0, got {alpha}")
    xa, ya = batch_a
    xb, yb = batch_b
    if np.shape(xa) != np.shape(xb) or np.shape(ya) != np.shape(yb):
        raise ValidationError(
            f"mixup batch shapes differ: {np.shape(xa)} vs {np.shape(xb)}, "
            f"{np.shape(ya)} vs {np.shape(yb)}"
        )
    if lam is None:
        lam = float(rng.beta(alpha, alpha))
    x = lam * np.asarray(xa, dtype=np.float64) + (1.0 - lam) * np.asarray(xb, dtype=np.float64)
    y = lam * np.asarray(ya, dtype=np.float64) + (1.0 - lam) * np.asarray(yb, dtype=np.float64)
    return x, y


# ----------------------------------------------------------------------
# export


def export_shapes(images, out_dir) -> str:
    """Write PGM (P5, 8-bit) files plus a CSV manifest; returns manifest path."""
    out = Path(out_dir)
    rows = ["filename,label_sides,label_equal,vertices"]
    for i, img in enumerate(images):
        name = f"shape_{i:05d}.pgm"
        gray = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
        header = f"P5\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n".encode("ascii")
        atomic_write_bytes(out / name, header + gray.tobytes())
        verts = ";".join(f"{x:.3f}:{y:.3f}" for x, y in img.vertices)
        rows.append(f"{name},{img.label_sides},{img.label_equal},{verts}")
    manifest = out / "manifest.csv"
    atomic_write_text(manifest, "\n".join(rows) + "\n")
    return str(manifest)
