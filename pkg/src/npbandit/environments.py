"""Reward-generating worlds.

Every environment exposes the same small surface used by the policies:
``num_arms``, ``dim``, ``sample_contexts(n)`` (seeded context stream),
``mean_rewards(X)`` (true means, shape ``(n, K)``), ``noise(n)`` (seeded
noise stream) and ``sample_test_contexts(n)`` (a separate stream, so test
points never coincide with training draws).
"""

from __future__ import annotations

import gzip
import logging
import math
import shutil
import struct
import urllib.request
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import ValidationError, as_context, as_contexts, derive_rng

log = logging.getLogger(__name__)

PLANAR_SCENARIOS = ("quintic", "smiley", "bullseye")
SCENARIOS = PLANAR_SCENARIOS + ("manifold-curve",)

HIGH, LOW = 1.0, 0.5

# Geometry of the planar scenarios; arm 0 is top on the listed sets.
QUINTIC_SCALE = 1.8 * 16
EYES = ((0.3, 0.7), (0.7, 0.7))
EYE_RADIUS = 0.1
MOUTH_CENTER = (0.5, 0.55)
MOUTH_RADII = (0.35, 0.45)
MOUTH_CUT = 0.45
BULLSEYE_CENTER = (0.5, 0.5)
BULLSEYE_RADII = (0.1, 0.2, 0.3, 0.4)

_SUPPORT_TOL = 1e-9


class OutOfSupportError(ValueError):
    pass


class Environment:
    """Base class: uniform contexts on the unit cube, Gaussian noise."""

    num_arms: int
    dim: int
    noise_sigma: float = 0.0

    def __init__(self, rng_seed: int = 0):
        self.rng_seed = rng_seed
        self.reset()

    def reset(self) -> None:
        self._ctx_rng = derive_rng(self.rng_seed, "contexts")
        self._noise_rng = derive_rng(self.rng_seed, "noise")
        self._test_rng = derive_rng(self.rng_seed, "test")

    def sample_contexts(self, n: int) -> np.ndarray:
        return self._ctx_rng.random((n, self.dim))

    def sample_test_contexts(self, n: int) -> np.ndarray:
        return self._test_rng.random((n, self.dim))

    def mean_rewards(self, X) -> np.ndarray:
        raise NotImplementedError

    def noise(self, n: Optional[int] = None):
        if self.noise_sigma == 0:
            return 0.0 if n is None else np.zeros(n)
        return self._noise_rng.normal(0.0, self.noise_sigma, size=n)

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        X = self.sample_contexts(n)
        return X, self.mean_rewards(X)

    def top_arms(self, X) -> np.ndarray:
        return np.argmax(self.mean_rewards(X), axis=1)

    def mean_reward(self, arm: int, x) -> float:
        if not 0 <= arm < self.num_arms:
            raise ValidationError(f"arm {arm} out of range [0, {self.num_arms})")
        return float(self.mean_rewards(as_context(x, self.dim)[None, :])[0, arm])

    def observe(self, arm: int, x) -> float:
        return self.mean_reward(arm, x) + float(self.noise())

    def sample_step(self, arm: int) -> tuple[np.ndarray, float]:
        x = self.sample_contexts(1)[0]
        return x, self.observe(arm, x)


class FunctionEnvironment(Environment):
    """K arms with arbitrary mean functions over uniform contexts on [0, 1]^D."""

    def __init__(self, means: Callable[[np.ndarray], np.ndarray], num_arms: int, dim: int,
                 noise_sigma: float = 0.0, rng_seed: int = 0):
        self._means = means
        self.num_arms = num_arms
        self.dim = dim
        self.noise_sigma = noise_sigma
        super().__init__(rng_seed)

    def mean_rewards(self, X) -> np.ndarray:
        X = as_contexts(X, self.dim)
        M = np.asarray(self._means(X), dtype=np.float64).reshape(len(X), self.num_arms)
        return M


def _linear_means(X: np.ndarray) -> np.ndarray:
    return np.column_stack([0.25 + 0.5 * X[:, 0], 0.75 - 0.5 * X[:, 0]])


def linear_environment(noise_sigma: float = 0.5, rng_seed: int = 0) -> FunctionEnvironment:
    """Two arms on the unit square whose means are exactly linear in the context."""
    return FunctionEnvironment(_linear_means, 2, 2, noise_sigma, rng_seed)


def _segment_area(radius: float, h: float) -> float:
    """Area of the part of a disc lying beyond a chord at distance ``h`` from its center."""
    return radius**2 * math.acos(h / radius) - h * math.sqrt(radius**2 - h**2)


class Scenario(Environment):
    """Two-arm simulated world: arm ``i`` pays 1.0 on its region, 0.5 elsewhere.

    ``kind`` is one of quintic, smiley, bullseye (contexts uniform on the
    unit square) or manifold-curve (contexts uniform along a closed curve
    in ``ambient_dim`` dimensions; arm 0 is top on the first half of it).
    """

    num_arms = 2

    def __init__(self, kind: str, noise_sigma: float = 0.5, rng_seed: int = 0,
                 ambient_dim: int = 10, curve_amplitude: float = 0.05):
        if kind not in SCENARIOS:
            raise ValidationError(f"unknown scenario {kind!r}; choose from {', '.join(SCENARIOS)}")
        if noise_sigma < 0:
            raise ValidationError("noise_sigma must be nonnegative")
        self.kind = kind
        self.noise_sigma = noise_sigma
        if kind == "manifold-curve":
            if ambient_dim < 2:
                raise ValidationError("ambient_dim must be at least 2")
            self.dim = ambient_dim
            self.curve = Curve(ambient_dim, curve_amplitude)
        else:
            self.dim = 2
            self.curve = None
        super().__init__(rng_seed)

    def __repr__(self):
        return f"Scenario({self.kind!r}, noise_sigma={self.noise_sigma}, rng_seed={self.rng_seed})"

    # -- contexts ----------------------------------------------------------

    def sample_contexts(self, n: int) -> np.ndarray:
        if self.curve is not None:
            return self.curve.embed(self._ctx_rng.random(n))
        return self._ctx_rng.random((n, 2))

    def sample_test_contexts(self, n: int) -> np.ndarray:
        if self.curve is not None:
            return self.curve.embed(self._test_rng.random(n))
        return self._test_rng.random((n, 2))

    # -- regions -----------------------------------------------------------

    def _check_support(self, X: np.ndarray) -> None:
        if self.curve is not None:
            off = self.curve.distance_to_curve(X)
            if np.any(off > 1e-7):
                raise OutOfSupportError(f"context off the curve by {off.max():.3g}")
        elif np.any(X < -_SUPPORT_TOL) or np.any(X > 1 + _SUPPORT_TOL):
            raise OutOfSupportError("context outside the unit square")

    def _labels(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(top arm, component id within that arm's region) per row."""
        n = len(X)
        if self.kind == "quintic":
            boundary = np.clip(0.5 + QUINTIC_SCALE * (X[:, 0] - 0.5) ** 5, 0.0, 1.0)
            arm = np.where(X[:, 1] >= boundary, 0, 1)
            return arm, np.zeros(n, dtype=np.int64)
        if self.kind == "smiley":
            comp = np.full(n, -1)
            for j, c in enumerate(EYES):
                inside = np.hypot(X[:, 0] - c[0], X[:, 1] - c[1]) <= EYE_RADIUS
                comp[inside] = j
            r = np.hypot(X[:, 0] - MOUTH_CENTER[0], X[:, 1] - MOUTH_CENTER[1])
            mouth = (r >= MOUTH_RADII[0]) & (r <= MOUTH_RADII[1]) & (X[:, 1] <= MOUTH_CUT)
            comp[mouth] = 2
            arm = np.where(comp >= 0, 0, 1)
            return arm, np.where(comp >= 0, comp, 0)
        if self.kind == "bullseye":
            r = np.hypot(X[:, 0] - BULLSEYE_CENTER[0], X[:, 1] - BULLSEYE_CENTER[1])
            r1, r2, r3, r4 = BULLSEYE_RADII
            band = np.select([r <= r1, r < r2, r <= r3, r < r4], [0, 1, 2, 3], default=4)
            return band % 2, band // 2
        s = self.curve.parameter(X)
        arm = np.where(s < 0.5, 0, 1)
        return arm, np.zeros(n, dtype=np.int64)

    def region_of(self, X) -> np.ndarray:
        """True top arm per row (boundary points belong to arm 0)."""
        X = as_contexts(X, self.dim)
        self._check_support(X)
        return self._labels(X)[0]

    def component_of(self, X, arm: int) -> np.ndarray:
        """Component id of each row within ``arm``'s region, -1 outside it."""
        X = as_contexts(X, self.dim)
        a, c = self._labels(X)
        return np.where(a == arm, c, -1)

    def mean_rewards(self, X) -> np.ndarray:
        top = self.region_of(X)
        M = np.full((len(top), 2), LOW)
        M[np.arange(len(top)), top] = HIGH
        return M

    def top_arms(self, X) -> np.ndarray:
        return self.region_of(X)

    # -- analytic facts ------------------------------------------------------

    def component_count(self, arm: int) -> int:
        return {
            "quintic": (1, 1),
            "smiley": (3, 1),
            "bullseye": (3, 2),
            "manifold-curve": (1, 1),
        }[self.kind][arm]

    def region_area(self, arm: int) -> float:
        """Closed-form area of ``arm``'s region in the unit square."""
        if self.kind == "quintic":
            # The boundary is odd about (0.5, 0.5), so it halves the square.
            a0 = 0.5
        elif self.kind == "smiley":
            h = MOUTH_CENTER[1] - MOUTH_CUT
            mouth = _segment_area(MOUTH_RADII[1], h) - _segment_area(MOUTH_RADII[0], h)
            a0 = 2 * math.pi * EYE_RADIUS**2 + mouth
        elif self.kind == "bullseye":
            r1, r2, r3, r4 = BULLSEYE_RADII
            a0 = 1.0 - math.pi * ((r2**2 - r1**2) + (r4**2 - r3**2))
        else:
            raise ValidationError("region_area is defined for the planar scenarios only")
        return a0 if arm == 0 else 1.0 - a0

    def component_gap(self, arm: int) -> float:
        """Smallest distance between two distinct components of ``arm``'s region."""
        if self.kind == "bullseye":
            return min(b - a for a, b in zip(BULLSEYE_RADII, BULLSEYE_RADII[1:]))
        if self.component_count(arm) < 2:
            return math.inf
        samples = self.component_samples(arm, 1e-3)
        from scipy.spatial import cKDTree

        best = math.inf
        for i in range(len(samples)):
            tree = cKDTree(samples[i])
            for j in range(i + 1, len(samples)):
                best = min(best, float(tree.query(samples[j])[0].min()))
        return best

    def component_samples(self, arm: int, resolution: float) -> list[np.ndarray]:
        """Dense samples of each true component of ``arm``'s region.

        Planar scenarios use the cell-center grid of spacing ``resolution``;
        the curve is sampled at parameter spacing ``resolution``.
        """
        if self.curve is not None:
            s = (np.arange(math.ceil(1 / resolution)) + 0.5) * resolution
            s = s[s < 1]
            X = self.curve.embed(s)
        else:
            m = int(math.ceil(1.0 / resolution))
            g = (np.arange(m) + 0.5) / m
            xx, yy = np.meshgrid(g, g, indexing="ij")
            X = np.column_stack([xx.ravel(), yy.ravel()])
        comp = self.component_of(X, arm)
        return [X[comp == c] for c in range(self.component_count(arm))]


class Curve:
    """Smooth closed curve in ``[0, 1]^D`` with intrinsic dimension 1.

    Coordinates 0 and 1 trace the circle of radius 0.5 centered at
    (0.5, 0.5); coordinate ``j >= 2`` is ``0.5 + a * sin(w_j * theta + j)``
    with ``w_j`` alternating between 1 and 2.
    """

    def __init__(self, dim: int, amplitude: float = 0.05):
        self.dim = dim
        self.amplitude = amplitude
        j = np.arange(2, dim)
        self._freq = np.where(j % 2 == 0, 1.0, 2.0)
        self._phase = j.astype(np.float64)

    def embed(self, s) -> np.ndarray:
        theta = 2 * math.pi * np.asarray(s, dtype=np.float64).reshape(-1)
        X = np.empty((len(theta), self.dim))
        X[:, 0] = 0.5 + 0.5 * np.cos(theta)
        X[:, 1] = 0.5 + 0.5 * np.sin(theta)
        if self.dim > 2:
            X[:, 2:] = 0.5 + self.amplitude * np.sin(np.outer(theta, self._freq) + self._phase)
        return X

    def parameter(self, X) -> np.ndarray:
        theta = np.arctan2(X[:, 1] - 0.5, X[:, 0] - 0.5)
        return np.mod(theta / (2 * math.pi), 1.0)

    def distance_to_curve(self, X) -> np.ndarray:
        return np.linalg.norm(X - self.embed(self.parameter(X)), axis=1)

    @property
    def diameter_bound(self) -> float:
        return math.sqrt(1.0 + (self.dim - 2) * (2 * self.amplitude) ** 2)


def manifold_contexts(ambient_dim: int, stream: np.random.Generator, n: int = 1,
                      amplitude: float = 0.05) -> np.ndarray:
    if ambient_dim < 2:
        raise ValidationError("ambient_dim must be at least 2")
    return Curve(ambient_dim, amplitude).embed(stream.random(n))


def mean_reward(scenario: Environment, arm: int, x) -> float:
    return scenario.mean_reward(arm, x)


def sample_step(scenario: Environment, arm: int) -> tuple[np.ndarray, float]:
    return scenario.sample_step(arm)


# -- joint context-action worlds ----------------------------------------------


class JointEnvironment:
    """Context ``x`` in [0, 1]^D, continuous action ``a``; mean reward ``f(x, a)``.

    ``best(X)`` returns ``sup_a f(x, a)`` over the action box, needed for
    regret accounting.
    """

    def __init__(self, mean_fn: Callable, best_fn: Callable, context_dim: int, action_dim: int,
                 noise_sigma: float = 0.0, rng_seed: int = 0):
        self.mean_fn = mean_fn
        self.best_fn = best_fn
        self.dim = context_dim
        self.action_dim = action_dim
        self.noise_sigma = noise_sigma
        self.rng_seed = rng_seed
        self.reset()

    def reset(self) -> None:
        self._ctx_rng = derive_rng(self.rng_seed, "contexts")
        self._noise_rng = derive_rng(self.rng_seed, "noise")
        self._action_rng = derive_rng(self.rng_seed, "actions")
        self._test_rng = derive_rng(self.rng_seed, "test")

    def sample_contexts(self, n: int) -> np.ndarray:
        return self._ctx_rng.random((n, self.dim))

    def sample_test_contexts(self, n: int) -> np.ndarray:
        return self._test_rng.random((n, self.dim))

    def sample_actions(self, action_space, n: int) -> np.ndarray:
        """Uniform actions from ``action_space`` off the ``actions`` stream."""
        return action_space.sample(self._action_rng, n)

    def mean(self, X, A) -> np.ndarray:
        X = as_contexts(X, self.dim)
        A = as_contexts(A, self.action_dim)
        return np.asarray(self.mean_fn(X, A), dtype=np.float64).reshape(len(X))

    def best(self, X) -> np.ndarray:
        return np.asarray(self.best_fn(as_contexts(X, self.dim)), dtype=np.float64).reshape(-1)

    def noise(self, n: Optional[int] = None):
        if self.noise_sigma == 0:
            return 0.0 if n is None else np.zeros(n)
        return self._noise_rng.normal(0.0, self.noise_sigma, size=n)


def quadratic_joint(context_dim: int = 1, target: float = 0.5, noise_sigma: float = 0.01,
                    rng_seed: int = 0) -> JointEnvironment:
    """``f(x, a) = -(a - target)^2`` on a scalar action, independent of ``x``."""
    return JointEnvironment(
        lambda X, A: -np.sum((A - target) ** 2, axis=1),
        lambda X: np.zeros(len(X)),
        context_dim,
        1,
        noise_sigma,
        rng_seed,
    )


# -- classification as a bandit ---------------------------------------------


class IdxFormatError(ValueError):
    pass


IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Parse an IDX file of unsigned bytes into an array of its declared shape."""
    buf = _read_bytes(path)
    name = Path(path).name
    if len(buf) < 4:
        raise IdxFormatError(f"{name}: file too short for a header (offset 0)")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected_magic:
        raise IdxFormatError(
            f"{name}: bad magic number 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise IdxFormatError(f"{name}: truncated dimension header at offset 4")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    size = int(np.prod(dims))
    if len(buf) - header < size:
        raise IdxFormatError(
            f"{name}: truncated payload at offset {len(buf)}: header declares {size} bytes "
            f"after offset {header}, found {len(buf) - header}"
        )
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=header).reshape(dims)


def write_idx(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.uint8)
    magic = 0x00000800 | data.ndim
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{data.ndim}I", *data.shape))
        fh.write(data.tobytes())


class ClassificationEnv(Environment):
    """Labelled feature vectors as contexts; the arms are the classes.

    Pulling the true label pays 1, any other arm pays 0, with no noise.
    Contexts are served in a seeded random order, one pass per epoch.
    """

    noise_sigma = 0.0

    def __init__(self, features, labels, num_classes: Optional[int] = None, rng_seed: int = 0):
        self.features = as_contexts(features)
        self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if len(self.features) != len(self.labels):
            raise ValidationError("features and labels differ in length")
        if np.any(self.labels < 0):
            raise ValidationError("labels must be nonnegative")
        self.num_arms = int(num_classes if num_classes is not None else self.labels.max() + 1)
        if np.any(self.labels >= self.num_arms):
            raise ValidationError("label outside [0, num_classes)")
        self.dim = self.features.shape[1]
        self._lookup = None
        super().__init__(rng_seed)

    def reset(self) -> None:
        super().reset()
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0

    def __len__(self) -> int:
        return len(self.labels)

    def sample_indices(self, n: int) -> np.ndarray:
        out = []
        while n > 0:
            if self._pos >= len(self._order):
                self._order = self._ctx_rng.permutation(len(self.labels))
                self._pos = 0
            take = min(n, len(self._order) - self._pos)
            out.append(self._order[self._pos : self._pos + take])
            self._pos += take
            n -= take
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)

    def sample_contexts(self, n: int) -> np.ndarray:
        return self.features[self.sample_indices(n)]

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.sample_indices(n)
        M = np.zeros((n, self.num_arms))
        M[np.arange(n), self.labels[idx]] = 1.0
        return self.features[idx], M

    def sample_test_contexts(self, n: int) -> np.ndarray:
        idx = self._test_rng.choice(len(self.labels), size=min(n, len(self.labels)), replace=False)
        return self.features[idx]

    def mean_rewards(self, X) -> np.ndarray:
        if self._lookup is None:
            self._lookup = {row.tobytes(): int(y) for row, y in zip(self.features, self.labels)}
        X = as_contexts(X, self.dim)
        M = np.zeros((len(X), self.num_arms))
        for i, row in enumerate(X):
            y = self._lookup.get(row.tobytes())
            if y is None:
                raise OutOfSupportError(f"context {i} is not an item of this dataset")
            M[i, y] = 1.0
        return M

    def subset(self, n: int, rng_seed: Optional[int] = None) -> "ClassificationEnv":
        """First ``n`` items in a seeded shuffle (all items when ``n`` exceeds the size)."""
        seed = self.rng_seed if rng_seed is None else rng_seed
        idx = derive_rng(seed, "subset").permutation(len(self.labels))[:n]
        return ClassificationEnv(self.features[idx], self.labels[idx], self.num_arms, seed)


def load_idx_dataset(image_path, label_path, num_classes: int = 10,
                     rng_seed: int = 0) -> ClassificationEnv:
    images = read_idx(image_path, IMAGE_MAGIC)
    labels = read_idx(label_path, LABEL_MAGIC)
    if labels.ndim != 1:
        raise IdxFormatError(f"{Path(label_path).name}: label file must be 1-dimensional")
    if len(images) != len(labels):
        raise IdxFormatError(
            f"image/label count mismatch: {len(images)} images, {len(labels)} labels"
        )
    features = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return ClassificationEnv(features, labels, num_classes, rng_seed)


MNIST_FILES = {
    "train-images-idx3-ubyte.gz": 16 + 60000 * 28 * 28,
    "train-labels-idx1-ubyte.gz": 8 + 60000,
    "t10k-images-idx3-ubyte.gz": 16 + 10000 * 28 * 28,
    "t10k-labels-idx1-ubyte.gz": 8 + 10000,
}
MNIST_URL = "https://ossci-datasets.s3.amazonaws.com/mnist/"


def fetch_mnist(dest, base_url: str = MNIST_URL, timeout: float = 60.0) -> Path:
    """Download the MNIST IDX files into ``dest`` and verify their lengths.

    Files already present with the right uncompressed length are kept.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    for name, length in MNIST_FILES.items():
        path = dest / name
        if path.exists() and len(_read_bytes(path)) == length:
            continue
        url = base_url.rstrip("/") + "/" + name
        log.info("fetching %s", url)
        with urllib.request.urlopen(url, timeout=timeout) as resp, open(path, "wb") as out:
            shutil.copyfileobj(resp, out)
        got = len(_read_bytes(path))
        if got != length:
            path.unlink()
            raise IdxFormatError(f"{name}: downloaded {got} bytes, expected {length}")
    return dest


def find_mnist(directory) -> Optional[tuple[Path, Path]]:
    """Locate a training image/label pair (gzipped or not) in ``directory``."""
    d = Path(directory)
    for suffix in ("", ".gz"):
        img = d / f"train-images-idx3-ubyte{suffix}"
        lab = d / f"train-labels-idx1-ubyte{suffix}"
        if img.exists() and lab.exists():
            return img, lab
    return None
