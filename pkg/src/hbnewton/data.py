"""Datasets: synthesis, delimited-text I/O, PCA, and partitioning across agents."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateLabelsError,
    InconsistentWidthError,
    ParseError,
    RankDeficiencyError,
)
from .objective import LogisticLocal


@dataclass(frozen=True, eq=False)
class RawDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if f.ndim != 2 or f.shape[0] < 1 or y.shape != (f.shape[0],):
            raise ValueError("features must be m x p (m >= 1) with m labels")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains NaN or Inf")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be -1 or +1")
        f.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def save(self, path, delimiter: str = ",") -> None:
        """Write features then label (+1/-1) as the last column."""
        lines = []
        for row, lab in zip(self.features, self.labels):
            vals = [f"{v:.17g}" for v in row] + [str(int(lab))]
            lines.append(delimiter.join(vals))
        Path(path).write_text("\n".join(lines) + "\n")


def synthesize(
    m: int,
    p: int,
    seed: int,
    separation: float = 2.0,
    scales=None,
    retries: int = 100,
) -> RawDataset:
    """Gaussian features labelled by a noisy hidden hyperplane.

    ``scales`` multiplies feature columns (default: all ones, i.e. standard
    Gaussian).  Labels are ``sign(z^T w + noise/separation)`` with ``z`` the
    unscaled draw, so the class balance does not depend on ``scales``.
    ``separation=math.inf`` gives noiseless, linearly separable labels.
    """
    if m < 2 or p < 1 or not separation > 0:
        raise ValueError("need m >= 2, p >= 1, separation > 0")
    if scales is not None:
        scales = np.asarray(scales, dtype=float)
        if scales.shape != (p,) or np.any(scales <= 0):
            raise ValueError("scales must be p positive numbers")
    for attempt in range(retries):
        # each attempt redraws the whole sample; tiny m can be single-class
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, attempt])
        raw = rng.standard_normal((m, p))
        w = rng.standard_normal(p)
        w /= np.linalg.norm(w)
        z = raw @ w
        noise = rng.standard_normal(m)
        if not math.isinf(separation):
            z = z + noise / separation
        labels = np.where(z >= 0, 1.0, -1.0)
        if 0 < np.count_nonzero(labels > 0) < m:
            return RawDataset(raw if scales is None else raw * scales, labels)
    raise DegenerateLabelsError(f"only one class present after {retries} draws")


_SPLIT = re.compile(r"[,\s]+")


def load_delimited(path, label_column: int = -1, positive_label="1") -> RawDataset:
    """Parse comma- or whitespace-separated numeric rows.

    The label column is compared as text against ``positive_label`` first,
    then numerically, so ``"1"`` matches ``1.0``.
    """
    pos = str(positive_label).strip()
    try:
        pos_num = float(pos)
    except ValueError:
        pos_num = None
    rows, labels, width = [], [], None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = [t for t in _SPLIT.split(line) if t]
        if width is None:
            width = len(tokens)
            if width < 2:
                raise ParseError("need at least one feature and a label", lineno)
        elif len(tokens) != width:
            raise InconsistentWidthError(f"expected {width} columns, found {len(tokens)}", lineno)
        lab = tokens.pop(label_column)
        try:
            rows.append([float(t) for t in tokens])
            lab_num = float(lab)
        except ValueError as exc:
            raise ParseError(f"non-numeric token ({exc})", lineno) from None
        hit = lab == pos or (pos_num is not None and lab_num == pos_num)
        labels.append(1.0 if hit else -1.0)
    if not rows:
        raise ParseError("no data rows")
    return RawDataset(np.array(rows), np.array(labels))


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    scale: np.ndarray | None = None

    def transform(self, features) -> np.ndarray:
        centered = np.asarray(features, dtype=float) - self.mean
        if self.scale is not None:
            centered = centered / self.scale
        return centered @ self.components

    def inverse_transform(self, reduced) -> np.ndarray:
        back = np.asarray(reduced, dtype=float) @ self.components.T
        if self.scale is not None:
            back = back * self.scale
        return back + self.mean


def pca_fit_transform(ds: RawDataset, k: int, standardize: bool = False) -> tuple[PcaModel, RawDataset]:
    """Covariance PCA keeping the top ``k`` directions.

    Each component is sign-flipped so its largest-magnitude entry is positive.
    """
    if not 1 <= k <= min(ds.m, ds.p):
        raise ValueError(f"k={k} outside [1, min(m, p)] = [1, {min(ds.m, ds.p)}]")
    mean = ds.features.mean(axis=0)
    centered = ds.features - mean
    scale = None
    if standardize:
        scale = centered.std(axis=0)
        scale[scale == 0] = 1.0
        centered = centered / scale
    cov = centered.T @ centered / max(ds.m - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    rank_tol = max(ds.m, ds.p) * np.finfo(float).eps * max(vals[0], 0.0)
    rank = int(np.count_nonzero(vals > rank_tol))
    if k > rank:
        raise RankDeficiencyError(f"k={k} exceeds numerical rank {rank}")
    comps = vecs[:, :k].copy()
    pivots = np.argmax(np.abs(comps), axis=0)
    comps *= np.sign(comps[pivots, np.arange(k)])
    model = PcaModel(mean, comps, np.clip(vals[:k], 0.0, None), scale)
    return model, RawDataset(centered @ comps, ds.labels)


@dataclass(frozen=True, eq=False)
class Partition:
    assignment: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    def indices(self, agent: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == agent)


def shuffle_partition(ds: RawDataset, n: int, seed: int) -> Partition:
    """Random permutation, then round-robin dealing to ``n`` agents."""
    if n < 1 or ds.m < n:
        raise ValueError(f"cannot split {ds.m} samples over {n} agents")
    perm = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 2]).permutation(ds.m)
    assignment = np.empty(ds.m, dtype=np.int64)
    assignment[perm] = np.arange(ds.m) % n
    counts = np.bincount(assignment, minlength=n)
    return Partition(assignment, counts)


def logistic_locals(ds: RawDataset, part: Partition, lam: float) -> list[LogisticLocal]:
    """One regularized logistic objective per agent, samples in dataset order."""
    return [
        LogisticLocal(ds.features[idx], ds.labels[idx], lam)
        for idx in (part.indices(i) for i in range(part.n))
    ]
