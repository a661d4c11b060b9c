"""Seeded synthesis of homodyne and heterodyne measurement records.

Randomness discipline: every stream derives from numpy's PCG64 seeded
through SeedSequence(seed, spawn_key=(domain, index, batch)).  Domains
keep the streams disjoint (0 homodyne draws, 1 heterodyne draws,
2 homodyne shuffling, 3 heterodyne rotations); the batch axis lets huge
records be produced in chunks, so results are identical no matter how
the work is split.  The scheme is tagged in dataset metadata as "rng".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CovMat, DetectionModel, marginal_variance, to_heterodyne_cov, to_homodyne_cov
from .errors import InvalidProtocol, RaggedDataset

RNG_TAG = "numpy-pcg64-ss1"
SAMPLING_BATCH = 1 << 20

_DOM_HOM = 0
_DOM_HET = 1
_DOM_THERM_HOM = 2
_DOM_THERM_HET = 3

TWO_PI = 2.0 * math.pi


def _rng(seed: int, domain: int, index: int, batch: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(domain, index, batch))
    return np.random.Generator(np.random.PCG64(ss))


def _check_seed(seed: int) -> int:
    if seed != int(seed) or int(seed) < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def _batch_sizes(n: int):
    done = 0
    batch = 0
    while done < n:
        count = min(SAMPLING_BATCH, n - done)
        yield batch, count
        done += count
        batch += 1


@dataclass(frozen=True)
class AngleProtocol:
    """Equally spaced quadrature angles offset + k * (2*pi/count)."""

    count: int
    offset: float = 0.0

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise InvalidProtocol(f"angle count must be a positive integer, got {self.count}")
        spacing = TWO_PI / self.count
        if not (0.0 <= self.offset < spacing):
            raise InvalidProtocol(
                f"offset must lie in [0, {spacing:.6g}) for count {self.count}, got {self.offset}"
            )

    @property
    def angles(self) -> np.ndarray:
        return self.offset + np.arange(self.count) * (TWO_PI / self.count)

    @classmethod
    def with_random_offset(cls, count: int, rng: np.random.Generator) -> "AngleProtocol":
        if count < 1:
            raise InvalidProtocol(f"angle count must be a positive integer, got {count}")
        return cls(count, rng.uniform(0.0, TWO_PI / count))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HomodyneDataset:
    """Per-angle quadrature records x_theta.

    angles are strictly increasing in [0, 2*pi); samples[i] holds the
    values measured at angles[i].  meta is a JSON-serializable dict
    carrying at least scheme/seed/eta/g_elec/rng.
    """

    angles: tuple
    samples: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.angles) == 0:
            raise ValueError("dataset needs at least one angle")
        if len(self.angles) != len(self.samples):
            raise ValueError("angles and samples length mismatch")
        prev = -1.0
        for th in self.angles:
            if not (0.0 <= th < TWO_PI):
                raise ValueError(f"angle {th} outside [0, 2*pi)")
            if th <= prev:
                raise ValueError("angles must be strictly increasing")
            prev = th
        for arr in self.samples:
            if arr.ndim != 1:
                raise ValueError("per-angle samples must be 1-D arrays")
            if not np.all(np.isfinite(arr)):
                raise ValueError("samples contain non-finite values")

    @property
    def counts(self) -> tuple:
        return tuple(len(a) for a in self.samples)

    @property
    def total_events(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class HeterodyneDataset:
    """Simultaneous (x, p) quadrature pairs; one row = one sampling event."""

    pairs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pairs.ndim != 2 or self.pairs.shape[1] != 2:
            raise ValueError(f"pairs must have shape (n, 2), got {self.pairs.shape}")
        if self.pairs.shape[0] < 1:
            raise ValueError("dataset needs at least one pair")
        if not np.all(np.isfinite(self.pairs)):
            raise ValueError("pairs contain non-finite values")

    @property
    def total_events(self) -> int:
        return int(self.pairs.shape[0])


def _base_meta(scheme: str, g_w: CovMat, det: DetectionModel, seed: int) -> dict:
    return {
        "scheme": scheme,
        "seed": seed,
        "eta": det.eta,
        "g_elec": [det.g_elec.g11, det.g_elec.g12, det.g_elec.g22],
        "g_w": [g_w.g11, g_w.g12, g_w.g22],
        "rng": RNG_TAG,
    }


def _homodyne_sigmas(g_w: CovMat, det: DetectionModel, angles: np.ndarray) -> np.ndarray:
    g_hom = to_homodyne_cov(g_w, det)
    return np.sqrt(
        [
            marginal_variance(g_hom, th) + marginal_variance(det.g_elec, th)
            for th in angles
        ]
    )


def sample_homodyne(
    g_w: CovMat,
    det: DetectionModel,
    protocol: AngleProtocol,
    n_per_angle: int,
    seed: int,
) -> HomodyneDataset:
    """Draw n_per_angle quadrature values at each protocol angle.

    Values at angle theta are zero-mean Gaussian with the marginal
    variance of the homodyne covariance plus the electronic-noise
    marginal.  Deterministic given (inputs, seed).
    """
    seed = _check_seed(seed)
    if not g_w.physical:
        raise ValueError(f"g_w must be positive semidefinite, got {g_w}")
    n_per_angle = int(n_per_angle)
    if n_per_angle < 1:
        raise ValueError(f"n_per_angle must be >= 1, got {n_per_angle}")
    angles = protocol.angles
    sigmas = _homodyne_sigmas(g_w, det, angles)
    samples = []
    for i, sd in enumerate(sigmas):
        chunks = [
            _rng(seed, _DOM_HOM, i, b).standard_normal(count)
            for b, count in _batch_sizes(n_per_angle)
        ]
        x = sd * (chunks[0] if len(chunks) == 1 else np.concatenate(chunks))
        samples.append(_freeze(x))
    meta = _base_meta("hom", g_w, det, seed)
    meta["angle_count"] = protocol.count
    meta["offset"] = protocol.offset
    meta["n_per_angle"] = n_per_angle
    return HomodyneDataset(tuple(float(a) for a in angles), tuple(samples), meta)


def homodyne_sample_variances(
    g_w: CovMat,
    det: DetectionModel,
    protocol: AngleProtocol,
    n_per_angle: int,
    seed: int,
) -> np.ndarray:
    """Per-angle sample variances of the record sample_homodyne would draw.

    Streams batch-wise, so arbitrarily large records never materialize.
    Uses the same generator streams as sample_homodyne; only the order of
    the final summation differs (per-batch partial sums).
    """
    seed = _check_seed(seed)
    if not g_w.physical:
        raise ValueError(f"g_w must be positive semidefinite, got {g_w}")
    n_per_angle = int(n_per_angle)
    if n_per_angle < 1:
        raise ValueError(f"n_per_angle must be >= 1, got {n_per_angle}")
    angles = protocol.angles
    sigmas = _homodyne_sigmas(g_w, det, angles)
    v = np.empty(len(angles))
    for i, sd in enumerate(sigmas):
        ssq = 0.0
        for b, count in _batch_sizes(n_per_angle):
            x = sd * _rng(seed, _DOM_HOM, i, b).standard_normal(count)
            ssq += float(np.sum(x * x))
        v[i] = ssq / n_per_angle
    return v


def _heterodyne_chol(g_w: CovMat, det: DetectionModel) -> np.ndarray:
    target = to_heterodyne_cov(g_w, det) + det.g_elec
    # strictly PD: the heterodyne map adds at least one unit of vacuum noise
    return np.linalg.cholesky(target.matrix)


def sample_heterodyne(
    g_w: CovMat,
    det: DetectionModel,
    n_pairs: int,
    seed: int,
) -> HeterodyneDataset:
    """Draw n_pairs (x, p) pairs from the heterodyne covariance.

    Pairs follow the zero-mean bivariate Gaussian with covariance
    to_heterodyne_cov(g_w, det) + g_elec, generated by mapping standard
    normals through the Cholesky factor.  Deterministic given seed.
    """
    seed = _check_seed(seed)
    if not g_w.physical:
        raise ValueError(f"g_w must be positive semidefinite, got {g_w}")
    n_pairs = int(n_pairs)
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    chol = _heterodyne_chol(g_w, det)
    chunks = [
        _rng(seed, _DOM_HET, 0, b).standard_normal((count, 2))
        for b, count in _batch_sizes(n_pairs)
    ]
    z = chunks[0] if len(chunks) == 1 else np.concatenate(chunks)
    pairs = z @ chol.T
    meta = _base_meta("het", g_w, det, seed)
    meta["n_pairs"] = n_pairs
    return HeterodyneDataset(_freeze(pairs), meta)


def heterodyne_sample_cov(
    g_w: CovMat,
    det: DetectionModel,
    n_pairs: int,
    seed: int,
) -> np.ndarray:
    """Sample covariance (known zero mean) of the record sample_heterodyne
    would draw, accumulated batch-wise without materializing it."""
    seed = _check_seed(seed)
    if not g_w.physical:
        raise ValueError(f"g_w must be positive semidefinite, got {g_w}")
    n_pairs = int(n_pairs)
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    chol = _heterodyne_chol(g_w, det)
    acc = np.zeros((2, 2))
    for b, count in _batch_sizes(n_pairs):
        y = _rng(seed, _DOM_HET, 0, b).standard_normal((count, 2)) @ chol.T
        acc += y.T @ y
    return acc / n_pairs


def thermalize_homodyne(d: HomodyneDataset, seed: int) -> HomodyneDataset:
    """Randomly permute all values across angle bins (phase randomization).

    The global multiset of values is preserved exactly; per-angle counts
    are preserved.  The result looks like an isotropic state of variance
    Tr(G)/2 regardless of the input state's ellipticity.
    """
    seed = _check_seed(seed)
    if len(d.angles) < 2:
        raise ValueError("thermalization needs at least two angle bins")
    counts = d.counts
    if len(set(counts)) != 1:
        raise RaggedDataset(f"per-angle counts differ: {counts}")
    pooled = np.concatenate(d.samples)
    rng = _rng(seed, _DOM_THERM_HOM, 0, 0)
    shuffled = pooled[rng.permutation(pooled.size)]
    per = counts[0]
    samples = tuple(
        _freeze(shuffled[i * per : (i + 1) * per].copy()) for i in range(len(d.angles))
    )
    meta = dict(d.meta)
    meta["thermalized"] = {"method": "shuffle", "seed": seed}
    return HomodyneDataset(d.angles, samples, meta)


def thermalize_heterodyne(d: HeterodyneDataset, seed: int) -> HeterodyneDataset:
    """Rotate each (x, p) pair by an independent uniform phase.

    Preserves each pair's norm x^2 + p^2 (exactly in exact arithmetic;
    to rounding in floats) while erasing all phase information.
    """
    seed = _check_seed(seed)
    rng = _rng(seed, _DOM_THERM_HET, 0, 0)
    phi = rng.uniform(0.0, TWO_PI, d.pairs.shape[0])
    c = np.cos(phi)
    s = np.sin(phi)
    x = d.pairs[:, 0]
    p = d.pairs[:, 1]
    rotated = np.column_stack((c * x - s * p, s * x + c * p))
    meta = dict(d.meta)
    meta["thermalized"] = {"method": "rotate", "seed": seed}
    return HeterodyneDataset(_freeze(rotated), meta)
