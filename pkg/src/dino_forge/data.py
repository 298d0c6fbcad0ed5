"""Multi-label image datasets: CSV ingestion, fraction subsampling, and a synthetic sewer-defect generator."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

SHAPES = ("deposit", "crack", "root", "hole", "joint", "drops")


class DatasetError(ValueError):
    pass


@dataclass
class MultiLabelDataset:
    """Image paths (relative to ``root``) with a binary (N, C) label matrix."""

    root: Path
    paths: list[str]
    labels: np.ndarray
    codes: list[str]
    _images: list[np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.root = Path(self.root)
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(len(self.paths), len(self.codes))

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def num_classes(self) -> int:
        return len(self.codes)

    def select(self, indices: Sequence[int]) -> "MultiLabelDataset":
        idx = [int(i) for i in indices]
        images = None if self._images is None else [self._images[i] for i in idx]
        return MultiLabelDataset(self.root, [self.paths[i] for i in idx], self.labels[idx], list(self.codes), images)

    def images(self) -> list[np.ndarray]:
        """Decode (once) every image as an (H, W, 3) float32 array in [0, 1]."""
        if self._images is None:
            self._images = [read_image(self.root / p) for p in self.paths]
        return self._images


def read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from None


def write_image(path: Path, img: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_dataset(csv_path: str | Path, image_root: str | Path | None = None) -> MultiLabelDataset:
    """Read ``path,<code1>,...,<codeC>``; rows keep CSV order."""
    csv_path = Path(csv_path)
    root = Path(image_root) if image_root is not None else csv_path.parent
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{csv_path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "path":
        raise DatasetError(f"{csv_path}: header must be 'path,<code1>,...'")
    codes = header[1:]
    if len(set(codes)) != len(codes):
        raise DatasetError(f"{csv_path}: duplicate class codes")
    paths, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DatasetError(f"{csv_path}: row {lineno}: expected {len(header)} fields, got {len(row)}")
        vals = []
        for v in row[1:]:
            v = v.strip()
            if v not in ("0", "1"):
                raise DatasetError(f"{csv_path}: row {lineno}: label {v!r} not in {{0,1}}")
            vals.append(int(v))
        if not (root / row[0]).is_file():
            raise DatasetError(f"{csv_path}: row {lineno}: missing image file {row[0]!r}")
        paths.append(row[0])
        labels.append(vals)
    if not paths:
        raise DatasetError(f"{csv_path}: empty dataset")
    return MultiLabelDataset(root, paths, np.array(labels, dtype=np.uint8), codes)


def write_label_csv(path: str | Path, paths: Sequence[str], codes: Sequence[str], values: np.ndarray,
                    fmt: str = "{:d}") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", *codes])
        for p, row in zip(paths, values):
            w.writerow([p, *(fmt.format(v) for v in row)])


def read_score_csv(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    """Read a prediction or label CSV into (paths, codes, values)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0].strip() != "path":
        raise DatasetError(f"{path}: header must be 'path,<code1>,...'")
    codes = [c.strip() for c in rows[0][1:]]
    paths, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(codes) + 1:
            raise DatasetError(f"{path}: row {lineno}: expected {len(codes) + 1} fields")
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError:
            raise DatasetError(f"{path}: row {lineno}: non-numeric value") from None
        paths.append(row[0])
    return paths, codes, np.array(values, dtype=np.float64).reshape(len(paths), len(codes))


def write_embedding_dump(path: str | Path, embeddings: np.ndarray) -> None:
    """``dim=D`` header, then one comma-separated row per sample."""
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2:
        raise ValueError("embeddings must be (N, D)")
    with open(path, "w") as fh:
        fh.write(f"dim={e.shape[1]}\n")
        for row in e:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_embedding_dump(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or not lines[0].startswith("dim="):
        raise DatasetError(f"{path}: first line must be 'dim=D'")
    try:
        dim = int(lines[0][4:])
    except ValueError:
        raise DatasetError(f"{path}: bad header {lines[0]!r}") from None
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != dim:
            raise DatasetError(f"{path}: row {lineno}: expected {dim} values, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise DatasetError(f"{path}: row {lineno}: non-numeric value") from None
    return np.array(rows, dtype=np.float64).reshape(len(rows), dim)


def _count(fraction: float, n: int) -> int:
    # rounding guards against 0.1 * 1000 = 100.00000000000001
    return max(1, math.ceil(round(fraction * n, 9)))


def subsample(dataset: MultiLabelDataset, fraction: float, seed: int) -> MultiLabelDataset:
    """Seeded ``ceil(fraction * N)`` subset keeping >= 1 positive per class where possible.

    Classes are covered rarest first; the remainder is drawn uniformly.  The
    subset keeps the original row order, so ``fraction=1`` is the identity.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    n = len(dataset)
    k = _count(fraction, n)
    if k >= n:
        return dataset.select(range(n))
    rng = np.random.default_rng([seed, 0x5AB5])
    chosen: set[int] = set()
    pos_counts = dataset.labels.sum(axis=0)
    for c in np.argsort(pos_counts, kind="stable"):
        if pos_counts[c] == 0 or len(chosen) >= k:
            continue
        members = np.flatnonzero(dataset.labels[:, c])
        if any(int(i) in chosen for i in members):
            continue
        chosen.add(int(rng.choice(members)))
    rest = [int(i) for i in rng.permutation(n) if int(i) not in chosen]
    chosen.update(rest[: k - len(chosen)])
    return dataset.select(sorted(chosen))


def split_validation(dataset: MultiLabelDataset, fraction: float = 0.1, seed: int = 0
                     ) -> tuple[MultiLabelDataset, MultiLabelDataset]:
    """Seeded (train, validation) split with ``round(fraction * N)`` validation rows."""
    n = len(dataset)
    n_val = min(max(1, int(round(fraction * n))), n - 1)
    perm = np.random.default_rng([seed, 0xA1]).permutation(n)
    return dataset.select(sorted(perm[n_val:])), dataset.select(sorted(perm[:n_val]))


# ---------------------------------------------------------------------------
# synthetic sewer-pipe images


@dataclass
class SynthSpec:
    n_samples: int = 2000
    image_size: int = 64
    num_classes: int = 6
    prevalence: tuple[float, ...] = (0.3,)
    normal_fraction: float = 0.4
    noise: float = 0.03
    seed: int = 0
    codes: tuple[str, ...] = ()

    def __post_init__(self):
        self.prevalence = tuple(float(p) for p in np.atleast_1d(self.prevalence))
        if len(self.prevalence) == 1:
            self.prevalence = self.prevalence * self.num_classes
        if len(self.prevalence) != self.num_classes:
            raise ValueError("prevalence needs one value or one per class")
        if any(not 0 < p < 1 for p in self.prevalence):
            raise ValueError("prevalences must lie in (0, 1)")
        if not 0 <= self.normal_fraction < 1:
            raise ValueError("normal_fraction must lie in [0, 1)")
        if self.image_size < 16:
            raise ValueError("image_size must be at least 16")
        if not self.codes:
            self.codes = tuple(self.shape_of(c)[:2].upper() + str(c) for c in range(self.num_classes))
        self.codes = tuple(self.codes)
        if len(self.codes) != self.num_classes:
            raise ValueError("need one code per class")

    def shape_of(self, c: int) -> str:
        return SHAPES[c % len(SHAPES)]


def synth_labels(spec: SynthSpec) -> np.ndarray:
    """Label matrix: exactly round(N * normal_fraction) all-zero rows; every other row has >= 1 defect.

    ``prevalence`` is the per-class rate among defective rows before the
    at-least-one fix-up.
    """
    rng = np.random.default_rng([spec.seed, 1])
    n, c = spec.n_samples, spec.num_classes
    n_normal = int(round(n * spec.normal_fraction))
    normal = np.zeros(n, dtype=bool)
    normal[rng.permutation(n)[:n_normal]] = True
    prev = np.asarray(spec.prevalence)
    labels = (rng.random((n, c)) < prev).astype(np.uint8)
    labels[normal] = 0
    for i in np.flatnonzero(~normal & (labels.sum(axis=1) == 0)):
        labels[i, rng.choice(c, p=prev / prev.sum())] = 1
    return labels


def _segment_mask(yy, xx, p0, p1, width):
    (y0, x0), (y1, x1) = p0, p1
    dy, dx = y1 - y0, x1 - x0
    t = np.clip(((yy - y0) * dy + (xx - x0) * dx) / max(dy * dy + dx * dx, 1e-9), 0, 1)
    return (yy - (y0 + t * dy)) ** 2 + (xx - (x0 + t * dx)) ** 2 <= (width / 2) ** 2


def _paint(img, mask, color, alpha=1.0):
    img[mask] = (1 - alpha) * img[mask] + alpha * np.asarray(color)


MATERIALS = ("concrete", "brick", "clay", "plastic")
_PALETTES = {
    "concrete": [(0.58, 0.58, 0.55), (0.5, 0.52, 0.5)],
    "brick": [(0.66, 0.36, 0.28), (0.55, 0.3, 0.26)],
    "clay": [(0.7, 0.48, 0.3), (0.6, 0.45, 0.34)],
    "plastic": [(0.8, 0.48, 0.2), (0.36, 0.56, 0.4), (0.74, 0.74, 0.7), (0.35, 0.45, 0.62)],
}


def _smooth_noise(rng: np.random.Generator, s: int, cells: int) -> np.ndarray:
    coarse = rng.standard_normal((cells + 1, cells + 1))
    t = np.linspace(0, cells, s)
    i = np.minimum(t.astype(int), cells - 1)
    f = t - i
    rows = coarse[i] * (1 - f)[:, None] + coarse[i + 1] * f[:, None]
    return rows[:, i] * (1 - f) + rows[:, i + 1] * f


def render_background(rng: np.random.Generator, s: int) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Pipe interior: wall material, vanishing point, directional light and joint rings.

    Wall colour is muted toward grey and the geometry only jitters a little,
    so the defects, not the pipe, carry most of the per-frame content.  Wall
    texture still varies by material, so normal frames are not all alike.
    """
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    cy = s / 2 + rng.uniform(-0.05, 0.05) * s
    cx = s / 2 + rng.uniform(-0.05, 0.05) * s
    dy, dx = (yy - cy) / (s / 2), (xx - cx) / (s / 2)
    r = np.hypot(dy, dx)
    theta = np.arctan2(dy, dx)
    material = MATERIALS[rng.integers(len(MATERIALS))]
    palette = _PALETTES[material]
    colour = np.asarray(palette[rng.integers(len(palette))]) + rng.uniform(-0.05, 0.05, 3)
    colour = 0.3 * colour + 0.7 * colour.mean()
    base = rng.uniform(0.9, 1.0)
    shade = np.clip(0.25 + 0.75 * np.clip(r, 0, 1.2) ** 0.8, 0, 1.1)

    tex = np.ones((s, s))
    if material == "concrete":
        tex += 0.12 * _smooth_noise(rng, s, 6) + 0.05 * rng.standard_normal((s, s))
    elif material == "brick":
        n = int(rng.integers(8, 15))
        u = (theta / (2 * np.pi) + 0.5) * n
        v = np.log(r + 0.05) / rng.uniform(0.25, 0.4)
        row = np.floor(v)
        u = u + 0.5 * (row % 2)
        mortar = (np.abs(u - np.round(u)) < 0.08) | (np.abs(v - np.round(v)) < 0.1)
        tex = np.where(mortar & (r > 0.15), 0.7, 1.0 + 0.06 * np.sin(3.1 * row))
    elif material == "clay":
        k = int(rng.integers(5, 12))
        tex += 0.14 * np.sin(k * theta + rng.uniform(0, 2 * np.pi)) * np.clip(r, 0, 1)
    else:
        top = rng.uniform(-np.pi, np.pi)
        gap = np.angle(np.exp(1j * (theta - top)))
        tex += 0.35 * np.exp(-(gap / 0.3) ** 2) * np.clip(r - 0.2, 0, 1)

    phi = rng.uniform(0, 2 * np.pi)
    light = 1.0 + rng.uniform(0.05, 0.15) * (np.cos(phi) * dx + np.sin(phi) * dy) / 2
    img = (base * shade * tex * light)[..., None] * colour
    period = rng.uniform(0.3, 0.45)
    phase = rng.uniform(0, period)
    rings = np.abs(((r - phase) % period) - period / 2) < 0.015 * (1 + r)
    img[rings] *= 0.8
    return np.clip(img, 0.0, 1.0), (cy, cx, s / 2)


def render_glyph(img: np.ndarray, shape: str, rng: np.random.Generator, geom, tint: float = 0.0) -> None:
    s = img.shape[0]
    cy, cx, rad = geom
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    if shape == "deposit":
        # sediment filling the pipe invert (bottom band)
        level = rng.uniform(0.66, 0.78) * s
        wave = 1.5 * np.sin(xx / s * 2 * np.pi * rng.uniform(0.5, 1.5) + rng.uniform(0, 6))
        mask = yy > level + wave
        _paint(img, mask, (0.92, 0.82 - 0.2 * tint, 0.55))
    elif shape == "crack":
        ang = rng.uniform(0, 2 * np.pi)
        r0 = rng.uniform(0.45, 0.75) * rad
        p = (cy + r0 * np.sin(ang), cx + r0 * np.cos(ang))
        for _ in range(int(rng.integers(4, 6))):
            step = rng.uniform(0.14, 0.24) * s
            ang += rng.uniform(-0.9, 0.9)
            q = (p[0] + step * np.sin(ang), p[1] + step * np.cos(ang))
            _paint(img, _segment_mask(yy, xx, p, q, 0.08 * s), (0.05, 0.05, 0.05 + 0.2 * tint))
            p = q
    elif shape == "root":
        ang = rng.uniform(0, 2 * np.pi)
        start = (cy + 0.95 * rad * np.sin(ang), cx + 0.95 * rad * np.cos(ang))
        inward = ang + np.pi
        for _ in range(int(rng.integers(3, 6))):
            a = inward + rng.uniform(-0.7, 0.7)
            length = rng.uniform(0.2, 0.4) * s
            q = (start[0] + length * np.sin(a), start[1] + length * np.cos(a))
            _paint(img, _segment_mask(yy, xx, start, q, 0.09 * s), (0.25 + 0.3 * tint, 0.45, 0.15))
    elif shape == "hole":
        ang = rng.uniform(0, 2 * np.pi)
        r0 = rng.uniform(0.5, 0.8) * rad
        hy, hx = cy + r0 * np.sin(ang), cx + r0 * np.cos(ang)
        ay, ax = rng.uniform(0.1, 0.16, size=2) * s
        mask = ((yy - hy) / ay) ** 2 + ((xx - hx) / ax) ** 2 <= 1
        _paint(img, mask, (0.02, 0.02 + 0.2 * tint, 0.03))
    elif shape == "joint":
        r0 = rng.uniform(0.45, 0.8) * rad
        dr = np.hypot(yy - cy, xx - cx)
        mask = np.abs(dr - r0) < rng.uniform(0.04, 0.06) * s
        _paint(img, mask, (0.95, 0.95, 0.9 - 0.4 * tint))
    elif shape == "drops":
        ang = rng.uniform(0, 2 * np.pi)
        r0 = rng.uniform(0.5, 0.85) * rad
        oy, ox = cy + r0 * np.sin(ang), cx + r0 * np.cos(ang)
        for _ in range(int(rng.integers(7, 12))):
            dy, dx = rng.normal(0, 0.08 * s, size=2)
            mask = (yy - oy - dy) ** 2 + (xx - ox - dx) ** 2 <= (rng.uniform(0.04, 0.07) * s) ** 2
            _paint(img, mask, (0.55 - 0.3 * tint, 0.8, 0.95))
    else:
        raise ValueError(f"unknown glyph shape {shape!r}")


def render_sample(spec: SynthSpec, index: int, label_row: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, 2, index])
    img, geom = render_background(rng, spec.image_size)
    for c in np.flatnonzero(label_row):
        tint = (c // len(SHAPES)) / max(1, (spec.num_classes - 1) // len(SHAPES))
        render_glyph(img, spec.shape_of(int(c)), rng, geom, tint=min(1.0, tint))
    img = img + rng.normal(0.0, spec.noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_synthetic(spec: SynthSpec, out_dir: str | Path) -> MultiLabelDataset:
    """Write ``images/*.png``, ``labels.csv`` and ``spec.json`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    labels = synth_labels(spec)
    paths = []
    for i in range(spec.n_samples):
        rel = f"images/{i:06d}.png"
        write_image(out / rel, render_sample(spec, i, labels[i]))
        paths.append(rel)
    write_label_csv(out / "labels.csv", paths, spec.codes, labels)
    with open(out / "spec.json", "w") as fh:
        json.dump(asdict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return MultiLabelDataset(out, paths, labels, list(spec.codes))


def glyph_region(shape: str, size: int) -> tuple[slice, slice]:
    """Pixel region where a glyph type is drawn; used by the learnability check."""
    if shape == "deposit":
        return slice(int(0.85 * size), size), slice(0, size)
    raise ValueError(f"no fixed region for {shape!r}")
