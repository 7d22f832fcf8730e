"""Paired 2D datasets: containers, centering, synthesis, PGM I/O, Haar views."""
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (EmptyInputError, PairingError, ProtocolError, ShapeError,
                     ValidationError)


def _as_stack(images, name):
    arr = np.asarray(images, dtype=float)
    if arr.ndim != 3 or 0 in arr.shape[1:]:
        raise ShapeError(f"{name} must be an (N, rows, cols) stack, got {arr.shape}")
    return arr


def _check_labels(labels, N):
    labels = np.asarray(labels)
    if labels.shape != (N,):
        raise ShapeError(f"expected {N} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValidationError("labels must be integers")
    labels = labels.astype(np.int64)
    if N == 0:
        return labels
    if labels.min() < 1:
        raise ValidationError("class ids must start at 1")
    c = int(labels.max())
    missing = np.setdiff1d(np.arange(1, c + 1), labels)
    if missing.size:
        raise ValidationError(f"class ids {missing.tolist()} have no samples")
    return labels


@dataclass(frozen=True)
class LabeledView:
    """One view of labeled 2D samples, ``images`` shaped (N, rows, cols)."""

    images: np.ndarray
    labels: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        images = _as_stack(self.images, "images")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", _check_labels(self.labels, len(images)))
        ids = tuple(self.ids) or tuple(f"{i:05d}" for i in range(len(images)))
        if len(ids) != len(images):
            raise ShapeError("ids and images differ in length")
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.images)


@dataclass(frozen=True)
class LabeledPairSet:
    """N paired samples ``(X_i, Y_i)`` with class ids in ``1..c``.

    ``X`` is (N, m, n), ``Y`` is (N, p, q). Every class id up to the largest
    one must occur, so subsets that drop a class entirely are rejected.
    """

    X: np.ndarray
    Y: np.ndarray
    labels: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        X = _as_stack(self.X, "X")
        Y = _as_stack(self.Y, "Y")
        if len(X) != len(Y):
            raise ShapeError(f"views differ in sample count: {len(X)} vs {len(Y)}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "labels", _check_labels(self.labels, len(X)))
        ids = tuple(self.ids) or tuple(f"{i:05d}" for i in range(len(X)))
        if len(ids) != len(X):
            raise ShapeError("ids and samples differ in length")
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.X)

    @property
    def n_classes(self):
        return int(self.labels.max()) if len(self.labels) else 0

    @property
    def shapes(self):
        return self.X.shape[1:] + self.Y.shape[1:]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes + 1)[1:]

    def subset(self, index):
        index = np.asarray(index)
        return LabeledPairSet(self.X[index], self.Y[index], self.labels[index],
                              tuple(np.asarray(self.ids, dtype=object)[index]))

    def take(self, index):
        """Rows ``index`` as a :class:`PairBatch` (no class-coverage check)."""
        index = np.asarray(index)
        return PairBatch(self.X[index], self.Y[index], self.labels[index],
                         tuple(np.asarray(self.ids, dtype=object)[index]))

    def relabeled(self, labels):
        return LabeledPairSet(self.X, self.Y, labels, self.ids)

    def view(self, which="x"):
        images = {"x": self.X, "y": self.Y}[which]
        return LabeledView(images, self.labels, self.ids)


@dataclass(frozen=True)
class PairBatch:
    """Paired probes, e.g. a test split; labels need not cover every class."""

    X: np.ndarray
    Y: np.ndarray
    labels: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        X = _as_stack(self.X, "X")
        Y = _as_stack(self.Y, "Y")
        if len(X) != len(Y):
            raise ShapeError(f"views differ in sample count: {len(X)} vs {len(Y)}")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (len(X),):
            raise ShapeError(f"expected {len(X)} labels, got shape {labels.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", tuple(self.ids) or tuple(f"{i:05d}" for i in range(len(X))))

    def __len__(self):
        return len(self.X)


@dataclass(frozen=True)
class CenteredPair:
    X_tilde: np.ndarray
    Y_tilde: np.ndarray
    M_X: np.ndarray
    M_Y: np.ndarray


def center_pair(data):
    """Subtract the per-view mean matrix from every sample."""
    if len(data) == 0:
        raise EmptyInputError("cannot center an empty set")
    M_X = data.X.mean(axis=0)
    M_Y = data.Y.mean(axis=0)
    return CenteredPair(data.X - M_X, data.Y - M_Y, M_X, M_Y)


# -- synthetic data ---------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic class-pattern generator.

    ``class_separation`` is the RMS entry size of each class pattern and
    ``noise_sigma`` the per-entry standard deviation of the additive noise.
    """

    classes: int = 3
    per_class: int = 20
    shape: tuple = (16, 16, 8, 8)
    class_separation: float = 5.0
    noise_sigma: float = 0.5
    seed: int = 0
    pattern_rank: int = 2

    def __post_init__(self):
        if self.classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.per_class < 1:
            raise ValidationError("per_class must be positive")
        if len(self.shape) != 4 or min(self.shape) < 1:
            raise ValidationError("shape must be four positive counts (m, n, p, q)")
        if self.class_separation < 0:
            raise ValidationError("class_separation must be nonnegative")
        if not self.noise_sigma > 0:
            raise ValidationError("noise_sigma must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.pattern_rank < 1:
            raise ValidationError("pattern_rank must be positive")


def _class_patterns(spec, rng):
    m, n = spec.shape[:2]
    k = min(spec.pattern_rank, m, n)
    A = rng.standard_normal((spec.classes, m, k))
    B = rng.standard_normal((spec.classes, n, k))
    P = A @ B.transpose(0, 2, 1)
    rms = np.sqrt(np.mean(P ** 2, axis=(1, 2), keepdims=True))
    return spec.class_separation * P / rms


def _distortion(rng, rows, cols):
    # fixed linear map scaled to preserve entry variance on average
    return rng.standard_normal((rows, cols)) / np.sqrt(cols)


def gen_synthetic(spec):
    """Seeded paired set with per-class latent patterns.

    ``X_i = P_k + noise`` and ``Y_i = A P_k B' + noise`` for fixed random
    maps ``A`` (p, m) and ``B`` (q, n), so the views correlate through the
    class pattern. Samples are ordered class by class.
    """
    return gen_pose_variants(spec, n_variants=1)[0]


def gen_pose_variants(spec, n_variants=2, strength=0.1, second_view="linear"):
    """Several paired sets sharing class patterns, one per pose variant.

    Variant 0 uses the patterns as is; variant ``v > 0`` applies a fixed
    near-identity left/right distortion ``(I + s G_v) P_k (I + s H_v)'``.
    ``second_view="haar"`` derives Y from X by a two-level Haar transform
    instead of the random linear map (``spec.shape[2:]`` is then ignored).
    """
    rng = np.random.default_rng(spec.seed)
    m, n, p, q = spec.shape
    patterns = _class_patterns(spec, rng)
    A = _distortion(rng, p, m)
    B = _distortion(rng, q, n)
    poses = [(np.eye(m), np.eye(n))]
    for _ in range(1, n_variants):
        poses.append((np.eye(m) + strength * _distortion(rng, m, m),
                      np.eye(n) + strength * _distortion(rng, n, n)))
    labels = np.repeat(np.arange(1, spec.classes + 1), spec.per_class)
    out = []
    for Lp, Rp in poses:
        base = Lp @ patterns @ Rp.T
        X = base[labels - 1] + spec.noise_sigma * rng.standard_normal((len(labels), m, n))
        if second_view == "haar":
            Y = np.stack([haar_dwt2(x, 2) for x in X])
        elif second_view == "linear":
            Yc = A @ base @ B.T
            Y = Yc[labels - 1] + spec.noise_sigma * rng.standard_normal((len(labels), p, q))
        else:
            raise ValidationError(f"unknown second_view {second_view!r}")
        out.append(LabeledPairSet(X, Y, labels))
    return out


def to_unit_range(data):
    """Affinely map each view into [0, 1] (needed before writing PGM files)."""
    def scale(V):
        lo, hi = V.min(), V.max()
        return (V - lo) / (hi - lo) if hi > lo else np.zeros_like(V)
    return LabeledPairSet(scale(data.X), scale(data.Y), data.labels, data.ids)


# -- PGM I/O ----------------------------------------------------------------

def _pgm_tokens(buf):
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1


def read_pgm(path):
    """Read a binary (P5) PGM file; returns (array in [0, 1], max_gray)."""
    buf = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(buf)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, max_gray = (int(t) for t in tokens[1:])
    if not 0 < max_gray < 65536:
        raise ValueError(f"{path}: invalid max-gray {max_gray}")
    dtype = np.dtype(">u2") if max_gray > 255 else np.dtype("u1")
    raw = np.frombuffer(buf, dtype=dtype, count=width * height, offset=offset)
    return raw.reshape(height, width).astype(float) / max_gray, max_gray


def write_pgm(path, image, max_gray=65535):
    """Write values in [0, 1] as a binary PGM, rounding to the nearest level."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ShapeError("PGM images must be 2D")
    if image.min() < 0 or image.max() > 1:
        raise ValidationError("PGM values must lie in [0, 1]; see to_unit_range")
    dtype = np.dtype(">u2") if max_gray > 255 else np.dtype("u1")
    levels = np.rint(image * max_gray).astype(dtype)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{max_gray}\n".encode("ascii")
    Path(path).write_bytes(header + levels.tobytes())


def _scan_view(root):
    entries = {}
    class_names = sorted(d.name for d in Path(root).iterdir() if d.is_dir())
    for name in class_names:
        for f in sorted((Path(root) / name).glob("*.pgm")):
            entries[(name, f.stem)] = f
    return class_names, entries


def _stack_files(files, view):
    images = [read_pgm(f)[0] for f in files]
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise ShapeError(f"mixed image shapes in view {view}: {sorted(shapes)}")
    return np.stack(images)


def _ordered_keys(keys):
    return sorted(keys, key=lambda k: (k[1], k[0]))


def load_view_dir(root):
    """Load ``<root>/<class>/<id>.pgm`` as a :class:`LabeledView`."""
    class_names, entries = _scan_view(root)
    if not entries:
        raise EmptyInputError(f"no PGM files under {root}")
    cls = {name: i + 1 for i, name in enumerate(class_names)}
    keys = _ordered_keys(entries)
    images = _stack_files([entries[k] for k in keys], str(root))
    return LabeledView(images, [cls[k[0]] for k in keys], tuple(k[1] for k in keys))


def class_names(root):
    """Sorted class directory names of a pair directory (or of a single view)."""
    root = Path(root)
    base = root / "x" if (root / "x").is_dir() else root
    return _scan_view(base)[0]


def load_image_dir(root, classes=None):
    """Load a paired dataset laid out as ``<root>/{x,y}/<class>/<id>.pgm``.

    Pixel values are scaled to [0, 1] by each file's max-gray. Class ids
    follow the lexicographic order of class directory names; samples are
    ordered by id. Passing ``classes`` (names in id order, e.g. those of a
    training set) numbers classes by that list instead and returns a
    :class:`PairBatch`, which may leave some classes out.
    """
    root = Path(root)
    for view in ("x", "y"):
        if not (root / view).is_dir():
            raise PairingError(f"missing view directory {root / view}")
    x_classes, x_entries = _scan_view(root / "x")
    y_classes, y_entries = _scan_view(root / "y")
    for a, b, name in ((x_entries, y_entries, "y"), (y_entries, x_entries, "x")):
        unpaired = sorted(set(a) - set(b))
        if unpaired:
            cls, sid = unpaired[0]
            raise PairingError(f"sample id {sid!r} (class {cls!r}) has no counterpart under {name}/")
    if not x_entries:
        raise EmptyInputError(f"no PGM files under {root}")
    used = sorted({k[0] for k in x_entries})
    if classes is None:
        cls = {name: i + 1 for i, name in enumerate(used)}
    else:
        cls = {name: i + 1 for i, name in enumerate(classes)}
        unknown = [c for c in used if c not in cls]
        if unknown:
            raise ValidationError(f"classes {unknown} are not among the known classes")
    keys = _ordered_keys(x_entries)
    X = _stack_files([x_entries[k] for k in keys], "x")
    Y = _stack_files([y_entries[k] for k in keys], "y")
    kind = LabeledPairSet if classes is None else PairBatch
    return kind(X, Y, [cls[k[0]] for k in keys], tuple(k[1] for k in keys))


def write_image_dir(data, root, max_gray=65535, class_names=None):
    """Write a paired set in the layout read by :func:`load_image_dir`."""
    root = Path(root)
    if class_names is None:
        width = max(2, len(str(data.n_classes)))
        class_names = [f"c{k:0{width}d}" for k in range(1, data.n_classes + 1)]
    for view, stack in (("x", data.X), ("y", data.Y)):
        for img, label, sid in zip(stack, data.labels, data.ids):
            d = root / view / class_names[label - 1]
            os.makedirs(d, exist_ok=True)
            write_pgm(d / f"{sid}.pgm", img, max_gray)


# -- wavelet second view and reference pairing -------------------------------

def haar_dwt2(image, levels=1):
    """Low-low subband after ``levels`` orthonormal 2D Haar analysis steps."""
    out = np.asarray(image, dtype=float)
    if out.ndim != 2:
        raise ShapeError("haar_dwt2 expects a 2D image")
    if levels < 1:
        raise ValueError("levels must be positive")
    step = 2 ** levels
    if out.shape[0] % step or out.shape[1] % step:
        raise ShapeError(f"shape {out.shape} not divisible by 2**{levels}")
    for _ in range(levels):
        out = (out[0::2, 0::2] + out[0::2, 1::2] + out[1::2, 0::2] + out[1::2, 1::2]) / 2.0
    return out


def with_wavelet_view(view, levels=2):
    """Pair each image with its Haar low-low subband as the second view."""
    Y = np.stack([haar_dwt2(x, levels) for x in view.images])
    return LabeledPairSet(view.images, Y, view.labels, view.ids)


def replicate_references(refs, variants):
    """Pair each variant with a copy of its class's single reference image."""
    ref_index = {}
    for i, label in enumerate(refs.labels):
        if label in ref_index:
            raise ProtocolError(f"class {label} has more than one reference sample")
        ref_index[label] = i
    missing = sorted(set(variants.labels.tolist()) - set(ref_index))
    if missing:
        raise ProtocolError(f"classes {missing} have no reference sample")
    X = refs.images[[ref_index[label] for label in variants.labels]]
    return LabeledPairSet(X, variants.images, variants.labels, variants.ids)
