"""Dataset ingestion.

Built-in loaders: CIFAR-10 python batches, STL-10 binary layout, a generic
folder-of-class-folders layout, and a procedurally generated shapes dataset
for desk-scale runs without any download. The trainer never touches the
network; the `fetch` command downloads archives separately and verifies
checksums.
"""

from __future__ import annotations

import hashlib
import pickle
import tarfile
import urllib.request
from pathlib import Path

import cv2
import numpy as np

from stagewise.engine.data import ArrayDataset
from stagewise.errors import ConfigError
from stagewise.seeding import STREAM_DATASET, rng_for

FETCH_SOURCES = {
    "cifar10": {
        "url": "https://www.cs.toronto.edu/~kriz/cifar-10-python.tar.gz",
        "sha256": "6d958be074577803d12ecdefd02955f39262c83c16fe9348329d7fe0b5c001ce",
        "archive": "cifar-10-python.tar.gz",
    },
    "stl10": {
        "url": "http://ai.stanford.edu/~acoates/stl10/stl10_binary.tar.gz",
        "sha256": "58a5f85ed29c7f1eee42cd3e45c7c4165b5b1b2af710b4cb39ccfa3fdb0b8ef9",
        "archive": "stl10_binary.tar.gz",
    },
}

SYNTHETIC_CLASS_NAMES = (
    "half_disc", "triangle", "arrow", "ell", "tee",
    "u_frame", "quarter_disc", "trapezoid", "keyhole", "flag",
)


# ---------------------------------------------------------------------------
# Synthetic shapes
# ---------------------------------------------------------------------------

def _shape_mask(cls: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean foreground mask for one class with jittered center and scale.

    Every class has a canonical orientation (a distinct "up"), so image-level
    rotation is identifiable from the shape and the rotation pretext carries
    real signal; none of the shapes is 45/90/180-degree symmetric.
    """
    cy = 0.5 + rng.uniform(-0.1, 0.1)
    cx = 0.5 + rng.uniform(-0.1, 0.1)
    r = rng.uniform(0.24, 0.34)
    lin = (np.arange(size) + 0.5) / size
    dy = lin[:, None] - cy
    dx = lin[None, :] - cx
    dist = np.sqrt(dy * dy + dx * dx)

    if cls == 0:  # half disc, flat side down
        return (dist < r) & (dy < 0)
    if cls == 1:  # triangle, apex up
        return (dy > -r) & (dy < r * 0.7) & (np.abs(dx) < (dy + r) * 0.55)
    if cls == 2:  # arrow up: triangle head plus stem
        head = (dy > -r) & (dy < 0) & (np.abs(dx) < (dy + r) * 0.8)
        stem = (dy >= 0) & (dy < r) & (np.abs(dx) < r * 0.22)
        return head | stem
    if cls == 3:  # L: vertical bar plus foot to the right
        bar = (np.abs(dx + r * 0.5) < r * 0.28) & (np.abs(dy) < r)
        foot = (np.abs(dy - r * 0.72) < r * 0.28) & (dx > -r * 0.5) & (dx < r * 0.9)
        return bar | foot
    if cls == 4:  # T: bar on top, stem down
        bar = (np.abs(dy + r * 0.7) < r * 0.3) & (np.abs(dx) < r)
        stem = (dy > -r * 0.7) & (dy < r) & (np.abs(dx) < r * 0.25)
        return bar | stem
    if cls == 5:  # U frame opening upward
        m = np.maximum(np.abs(dy), np.abs(dx))
        ring = (m < r * 0.95) & (m > r * 0.5)
        return ring & ~((dy < 0) & (np.abs(dx) < r * 0.5))
    if cls == 6:  # quarter disc in the lower-left of its region
        return (dist < r * 1.2) & (dy > 0) & (dx < 0)
    if cls == 7:  # trapezoid, wide base down
        return (np.abs(dy) < r * 0.7) & (np.abs(dx) < r * (0.35 + 0.6 * (dy / r + 0.7)))
    if cls == 8:  # keyhole: disc with a slot downward
        slot = (dy > 0) & (dy < r * 1.3) & (np.abs(dx) < r * 0.25)
        return ((dist < r * 0.8) & (dy <= 0)) | slot
    if cls == 9:  # flag: pole plus pennant to the upper right
        pole = (np.abs(dx + r * 0.6) < r * 0.14) & (np.abs(dy) < r)
        pennant = (dy > -r) & (dy < -r * 0.2) & (dx > -r * 0.6) & (
            dx < -r * 0.6 + (-dy - r * 0.2) * 1.8
        )
        return pole | pennant
    raise ValueError(f"no shape defined for class {cls}")


def synthetic_shapes(
    n: int, *, image_size: int = 32, num_classes: int = 10, seed: int = 0, noise: float = 0.06
) -> ArrayDataset:
    """Procedural shape-classification images with randomized colors.

    Classes cycle deterministically (balanced by construction). Foreground and
    background colors are drawn independently with a minimum contrast, so
    color alone carries no class information and probes must rely on shape.
    """
    if not 2 <= num_classes <= len(SYNTHETIC_CLASS_NAMES):
        raise ValueError(f"num_classes must lie in [2, {len(SYNTHETIC_CLASS_NAMES)}]")
    images = np.empty((n, 3, image_size, image_size), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        rng = rng_for(seed, STREAM_DATASET, i)
        cls = i % num_classes
        bg = rng.uniform(0.0, 1.0, size=3)
        fg = rng.uniform(0.0, 1.0, size=3)
        while np.abs(fg - bg).sum() < 0.6:
            fg = rng.uniform(0.0, 1.0, size=3)
        mask = _shape_mask(cls, image_size, rng)
        img = np.broadcast_to(bg[:, None, None], (3, image_size, image_size)).copy()
        img[:, mask] = fg[:, None]
        img += rng.normal(0.0, noise, size=img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
        labels[i] = cls
    return ArrayDataset(images=images, labels=labels, num_classes=num_classes, name="synthetic-shapes")


# ---------------------------------------------------------------------------
# On-disk loaders
# ---------------------------------------------------------------------------

def load_cifar10(root: str | Path, split: str = "train") -> ArrayDataset:
    """CIFAR-10 python-batch layout under <root>/cifar-10-batches-py/."""
    base = Path(root) / "cifar-10-batches-py"
    if not base.is_dir():
        raise ConfigError(f"CIFAR-10 batches not found at {base}; run `stagewise fetch cifar10` first")
    names = [f"data_batch_{i}" for i in range(1, 6)] if split == "train" else ["test_batch"]
    data, labels = [], []
    for name in names:
        with open(base / name, "rb") as fh:
            batch = pickle.load(fh, encoding="bytes")
        data.append(batch[b"data"])
        labels.extend(batch[b"labels"])
    images = np.concatenate(data).reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    return ArrayDataset(
        images=images, labels=np.asarray(labels, dtype=np.int64),
        num_classes=10, name=f"cifar10-{split}",
    )


def load_stl10(root: str | Path, split: str = "train") -> ArrayDataset:
    """STL-10 binary layout under <root>/stl10_binary/."""
    base = Path(root) / "stl10_binary"
    if not base.is_dir():
        raise ConfigError(f"STL-10 binaries not found at {base}; run `stagewise fetch stl10` first")
    with open(base / f"{split}_X.bin", "rb") as fh:
        x = np.frombuffer(fh.read(), dtype=np.uint8)
    with open(base / f"{split}_y.bin", "rb") as fh:
        y = np.frombuffer(fh.read(), dtype=np.uint8)
    # Records are 3x96x96 column-major.
    images = x.reshape(-1, 3, 96, 96).transpose(0, 1, 3, 2).astype(np.float32) / 255.0
    return ArrayDataset(
        images=np.ascontiguousarray(images), labels=y.astype(np.int64) - 1,
        num_classes=10, name=f"stl10-{split}",
    )


def load_image_folder(root: str | Path, *, image_size: int = 32) -> ArrayDataset:
    """Generic folder-of-class-folders layout: <root>/<class_name>/*.png|jpg."""
    base = Path(root)
    class_dirs = sorted(d for d in base.iterdir() if d.is_dir())
    if not class_dirs:
        raise ConfigError(f"no class folders under {base}")
    images, labels = [], []
    for cls, d in enumerate(class_dirs):
        for path in sorted(d.iterdir()):
            if path.suffix.lower() not in (".png", ".jpg", ".jpeg", ".bmp"):
                continue
            bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
            if bgr is None:
                raise ConfigError(f"unreadable image {path}")
            rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
            rgb = cv2.resize(rgb, (image_size, image_size), interpolation=cv2.INTER_LINEAR)
            images.append(rgb.transpose(2, 0, 1).astype(np.float32) / 255.0)
            labels.append(cls)
    if not images:
        raise ConfigError(f"no images found under {base}")
    return ArrayDataset(
        images=np.stack(images), labels=np.asarray(labels, dtype=np.int64),
        num_classes=len(class_dirs), name=f"folder-{base.name}",
    )


def load_dataset(descriptor: dict) -> tuple[ArrayDataset, ArrayDataset]:
    """(train, eval) datasets from a config descriptor."""
    name = descriptor["name"]
    if name == "synthetic":
        seed = descriptor.get("seed", 0)
        size = descriptor.get("image_size", 32)
        classes = descriptor.get("num_classes", 10)
        train = synthetic_shapes(
            descriptor.get("n_train", 3000), image_size=size, num_classes=classes, seed=seed
        )
        evald = synthetic_shapes(
            descriptor.get("n_eval", 1000), image_size=size, num_classes=classes, seed=seed + 1
        )
        return train, evald
    root = descriptor.get("root")
    if root is None:
        raise ConfigError(f"dataset {name!r} needs a root path")
    if name == "cifar10":
        train, evald = load_cifar10(root, "train"), load_cifar10(root, "test")
    elif name == "stl10":
        train, evald = load_stl10(root, "train"), load_stl10(root, "test")
    elif name == "folder":
        size = descriptor.get("image_size", 32)
        train = load_image_folder(Path(root) / "train", image_size=size)
        evald = load_image_folder(Path(root) / "eval", image_size=size)
    else:
        raise ConfigError(f"unknown dataset {name!r}")
    limit = descriptor.get("limit_train")
    if limit:
        train = train.subset(np.arange(min(limit, len(train))))
    limit = descriptor.get("limit_eval")
    if limit:
        evald = evald.subset(np.arange(min(limit, len(evald))))
    return train, evald


# ---------------------------------------------------------------------------
# Fetch with checksums
# ---------------------------------------------------------------------------

def sha256_of(path: str | Path, chunk: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            block = fh.read(chunk)
            if not block:
                break
            digest.update(block)
    return digest.hexdigest()


def verify_and_extract(archive: str | Path, expected_sha256: str, dest: str | Path) -> None:
    """Checksum-verify a tarball and extract it under dest."""
    actual = sha256_of(archive)
    if actual != expected_sha256:
        raise ConfigError(
            f"checksum mismatch for {archive}: expected {expected_sha256}, got {actual}"
        )
    with tarfile.open(archive, "r:*") as tar:
        for member in tar.getmembers():
            target = Path(dest) / member.name
            if not target.resolve().is_relative_to(Path(dest).resolve()):
                raise ConfigError(f"archive member escapes destination: {member.name}")
        tar.extractall(dest)


def fetch_dataset(name: str, root: str | Path) -> Path:
    """Download, verify, and extract a known dataset archive."""
    if name not in FETCH_SOURCES:
        raise ConfigError(f"no fetch source for {name!r}; known: {sorted(FETCH_SOURCES)}")
    source = FETCH_SOURCES[name]
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    archive = root / source["archive"]
    if not archive.exists():
        urllib.request.urlretrieve(source["url"], archive)
    verify_and_extract(archive, source["sha256"], root)
    return root
