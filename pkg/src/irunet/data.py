"""Dataset manifest and deterministic batch construction.

A manifest row pins one corrupted instance: which clean file, which sigma,
which noise seed, and the train/test split it belongs to. Batches are then
a pure function of (manifest, epoch seed), so any training step can be
replayed exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import imageio, rng
from .noise import NoiseSpec, corrupt

MANIFEST_HEADER = "clean_path,sigma,seed,split"
SPLITS = ("train", "test")
IMAGE_EXTENSIONS = (".png", ".ppm")


@dataclass(frozen=True)
class ManifestRow:
    clean_path: str
    sigma: int
    seed: int
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if not 0 <= self.sigma <= 50:
            raise ValueError(f"sigma must be an integer in 0..50, got {self.sigma}")
        if "," in self.clean_path or "\n" in self.clean_path:
            raise ValueError(f"path not representable in manifest: {self.clean_path!r}")


class DatasetManifest:
    """Ordered rows with unique (clean_path, sigma, seed) triples."""

    def __init__(self, rows: list[ManifestRow], root: str = ""):
        keys = {(r.clean_path, r.sigma, r.seed) for r in rows}
        if len(keys) != len(rows):
            raise ValueError("manifest rows are not unique over (clean_path, sigma, seed)")
        self.rows = list(rows)
        self.root = root  # directory non-absolute clean paths resolve against

    def resolve(self, row: ManifestRow) -> str:
        if os.path.isabs(row.clean_path) or not self.root:
            return row.clean_path
        return os.path.join(self.root, row.clean_path)

    def split_rows(self, split: str) -> list[ManifestRow]:
        if split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
        return [r for r in self.rows if r.split == split]

    def sigma_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for r in self.rows:
            counts[r.sigma] = counts.get(r.sigma, 0) + 1
        return dict(sorted(counts.items()))

    def save(self, path) -> None:
        """Write CSV; clean paths are rewritten relative to the manifest's directory."""
        base = os.path.dirname(os.path.abspath(path))
        lines = [MANIFEST_HEADER]
        for r in self.rows:
            resolved = os.path.abspath(self.resolve(r))
            try:
                out_path = os.path.relpath(resolved, base)
            except ValueError:
                out_path = resolved
            if "," in out_path or "\n" in out_path:
                raise ValueError(f"path not representable in manifest: {out_path!r}")
            lines.append(f"{out_path},{r.sigma},{r.seed},{r.split}")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path, "r", encoding="utf-8") as f:
            lines = [ln.rstrip("\n") for ln in f]
        if not lines or lines[0] != MANIFEST_HEADER:
            raise ValueError(f"{path}: missing manifest header {MANIFEST_HEADER!r}")
        rows = []
        for i, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{i}: expected 4 fields, got {len(parts)}")
            rows.append(ManifestRow(
                clean_path=parts[0], sigma=int(parts[1]), seed=int(parts[2]), split=parts[3]))
        manifest = cls(rows, root=os.path.dirname(os.path.abspath(path)))
        missing = [manifest.resolve(r) for r in manifest.rows
                   if not os.path.isfile(manifest.resolve(r))]
        if missing:
            listing = "\n  ".join(dict.fromkeys(missing))
            raise FileNotFoundError(f"{path}: missing clean files:\n  {listing}")
        return manifest


def list_images(clean_dir) -> list[str]:
    names = sorted(n for n in os.listdir(clean_dir)
                   if n.lower().endswith(IMAGE_EXTENSIONS))
    return names


def build_manifest(clean_dir, sigma_set, base_seed: int,
                   split_ratio: float = 0.8) -> DatasetManifest:
    """Assign one sigma per clean image, balanced round-robin over sorted names.

    Per-row noise seeds derive from (base_seed, path, sigma); the row order
    is then shuffled deterministically by base_seed and split with the first
    split_ratio fraction as train.
    """
    sigmas = [int(s) for s in sigma_set]
    if not sigmas:
        raise ValueError("sigma_set must be non-empty")
    for s in sigmas:
        if not 0 <= s <= 50:
            raise ValueError(f"sigma values must lie in 0..50, got {s}")
    if not 0.0 <= split_ratio <= 1.0:
        raise ValueError(f"split_ratio must be in [0,1], got {split_ratio}")
    names = list_images(clean_dir)
    if not names:
        raise ValueError(f"no readable images (png/ppm) in {clean_dir}")

    assigned = []
    for i, name in enumerate(names):
        sigma = sigmas[i % len(sigmas)]
        assigned.append((name, sigma, rng.hash64(base_seed, name, sigma)))
    order = rng.permutation(base_seed, len(assigned))
    n_train = int(len(assigned) * split_ratio + 0.5)
    rows = []
    for pos, idx in enumerate(order):
        name, sigma, seed = assigned[idx]
        rows.append(ManifestRow(
            clean_path=name, sigma=sigma, seed=seed,
            split="train" if pos < n_train else "test"))
    return DatasetManifest(rows, root=os.path.abspath(clean_dir))


def epoch_plan(rows: list[ManifestRow], batch_size: int, epoch_seed: int) -> list[list[ManifestRow]]:
    """Deterministic batch partition of one epoch (final batch may be short)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not rows:
        raise ValueError("cannot build batches from an empty split")
    order = rng.permutation(epoch_seed, len(rows))
    shuffled = [rows[i] for i in order]
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]


def materialize_batch(manifest: DatasetManifest, batch_rows: list[ManifestRow],
                      dtype=np.float32, cache: dict | None = None):
    """Load, corrupt and normalize one batch.

    Returns (noisy [N,3,H,W] in [0,1], clean [N,3,H,W] in [0,1], sigma vector).
    All images in the batch must share dimensions.
    """
    cleans = []
    for row in batch_rows:
        path = manifest.resolve(row)
        if cache is not None and path in cache:
            img = cache[path]
        else:
            img = imageio.load_image(path)
            if cache is not None:
                cache[path] = img
        cleans.append(img)
    shape = cleans[0].shape
    for row, img in zip(batch_rows, cleans):
        if img.shape != shape:
            raise ValueError(
                f"mixed dimensions in one batch: {shape} vs {img.shape} ({row.clean_path})")
    noisies = [corrupt(img, NoiseSpec(sigma=float(row.sigma), seed=row.seed))
               for row, img in zip(batch_rows, cleans)]
    noisy_t = imageio.to_batch(noisies, dtype=dtype)
    clean_t = imageio.to_batch(cleans, dtype=dtype)
    sigmas = np.array([row.sigma for row in batch_rows], dtype=np.float64)
    return noisy_t, clean_t, sigmas


def batch_iter(manifest: DatasetManifest, split: str, batch_size: int,
               epoch_seed: int, dtype=np.float32, cache: dict | None = None):
    """Stream one epoch of (noisy, clean, sigmas) batches, deterministically."""
    rows = manifest.split_rows(split)
    for batch_rows in epoch_plan(rows, batch_size, epoch_seed):
        yield materialize_batch(manifest, batch_rows, dtype=dtype, cache=cache)
