"""Threshold-free position-invariance test on synthetic vectors.

Content blocks are placed at several absolute positions in a window;
within-block pairs (same content, different positions) are positives,
cross-block pairs at randomized positions are negatives, scored by cosine
similarity and summarized by rank-based AUC.  The invariant component models
the position-free latent (512 dims); the rotated component models the
rotary-entangled key slice (64 dims).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .rng import derive_seed
from .rotary import RotarySpec, make_spec, rotate_rows

_BLOCK_LABEL = 0x524F43


@dataclass(frozen=True)
class RocConfig:
    n_blocks: int = 500
    positions: tuple[int, ...] = (0, 512, 1024, 2048, 3584)
    window: int = 4096
    noise_sigma: float = 0.1
    component: str = "invariant"  # or "rotated"
    invariant_dim: int = 512
    spec: RotarySpec = None
    seed: int = 0

    def __post_init__(self):
        if self.n_blocks < 2:
            raise ValueError("need at least 2 blocks")
        if any(p >= self.window for p in self.positions):
            raise ValueError("all positions must lie inside the window")
        if self.component not in ("invariant", "rotated"):
            raise ValueError(f"unknown component {self.component!r}")
        if self.spec is None:
            object.__setattr__(self, "spec", make_spec(1e4, 64))


@dataclass
class ScoredPairs:
    positives: np.ndarray  # cosine scores
    negatives: np.ndarray


def _placements(config: RocConfig) -> dict[tuple[int, int], np.ndarray]:
    """One noisy vector per (block, position)."""
    dim = config.invariant_dim if config.component == "invariant" else config.spec.dim
    out = {}
    for b in range(config.n_blocks):
        rng = np.random.Generator(
            np.random.PCG64(derive_seed(config.seed, _BLOCK_LABEL, b))
        )
        base = rng.standard_normal(dim)
        base /= np.linalg.norm(base)
        for p in config.positions:
            if config.component == "rotated":
                v = rotate_rows(base[np.newaxis, :], np.array([p]), config.spec)[0]
            else:
                v = base
            out[b, p] = v + config.noise_sigma * rng.standard_normal(dim)
    return out


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def gen_pairs(config: RocConfig) -> ScoredPairs:
    """Cosine-scored positive and negative pairs, equal counts."""
    vecs = _placements(config)
    positives = [
        _cosine(vecs[b, p], vecs[b, q])
        for b in range(config.n_blocks)
        for p, q in combinations(config.positions, 2)
    ]
    rng = np.random.Generator(
        np.random.PCG64(derive_seed(config.seed, _BLOCK_LABEL, 0xFFFF))
    )
    negatives = []
    while len(negatives) < len(positives):
        b1, b2 = rng.integers(config.n_blocks, size=2)
        if b1 == b2:
            continue
        p = config.positions[rng.integers(len(config.positions))]
        q = config.positions[rng.integers(len(config.positions))]
        negatives.append(_cosine(vecs[int(b1), p], vecs[int(b2), q]))
    return ScoredPairs(np.asarray(positives), np.asarray(negatives))


def auc(scores: Sequence[tuple[float, int]]) -> float:
    """Rank AUC: P(score_pos > score_neg) + 0.5 * P(tie).

    Equivalent to the area under the swept-threshold ROC curve.
    """
    pos = np.array([s for s, label in scores if label])
    neg = np.array([s for s, label in scores if not label])
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need at least one positive and one negative score")
    combined = np.concatenate([pos, neg])
    order = np.argsort(combined, kind="mergesort")
    ranks = np.empty(len(combined))
    ranks[order] = np.arange(1, len(combined) + 1)
    # average ranks over ties
    sorted_scores = combined[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = ranks[order[i : j + 1]].mean()
        i = j + 1
    u = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2
    return float(u / (len(pos) * len(neg)))


@dataclass
class RocResult:
    auc: float
    n_pos: int
    n_neg: int
    histogram: dict


def run_roc(config: RocConfig, bins: int = 50) -> RocResult:
    pairs = gen_pairs(config)
    scores = [(s, 1) for s in pairs.positives] + [(s, 0) for s in pairs.negatives]
    value = auc(scores)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    hist = {
        "bin_edges": edges.tolist(),
        "positives": np.histogram(np.clip(pairs.positives, -1, 1), edges)[0].tolist(),
        "negatives": np.histogram(np.clip(pairs.negatives, -1, 1), edges)[0].tolist(),
    }
    return RocResult(value, len(pairs.positives), len(pairs.negatives), hist)
