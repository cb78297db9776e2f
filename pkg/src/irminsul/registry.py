"""Content-hash KV registry with a shared latent pool and synthetic KV oracle.

The synthetic oracle replaces model prefill: each token ID maps to
deterministic unit-norm rows (a position-free latent row plus a raw rotary
key row), so the cache path's numerics are exactly checkable.  Stored rotary
keys are position-entangled at their source position, exactly as a serving
pool would hold them, which makes the delta-rotation path load-bearing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rng import derive_seed
from .rotary import KrVector, Precision, RotarySpec, rotate_rows, round_bf16

_CKV_LABEL = 0x434B56
_KR_LABEL = 0x4B52


@dataclass(frozen=True)
class SyntheticKvParams:
    seed: int = 0
    ckv_dim: int = 512
    kr_dim: int = 64

    def __post_init__(self):
        if self.ckv_dim <= 0 or self.kr_dim <= 0:
            raise ValueError("dims must be positive")
        if self.kr_dim % 2 != 0:
            raise ValueError("kr_dim must be even")


def synth_kv(
    token: int, index_in_chunk: int, params: SyntheticKvParams
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic unit-norm (c_kv row, kr_raw row) for a token ID.

    Depends on (token, params.seed) only; index_in_chunk is accepted for
    call-site symmetry but never folded in, so the latent is position-free
    by construction and kr_raw is the pre-rotation key.
    """
    ckv_rng = np.random.Generator(
        np.random.PCG64(derive_seed(params.seed, _CKV_LABEL, token))
    )
    kr_rng = np.random.Generator(
        np.random.PCG64(derive_seed(params.seed, _KR_LABEL, token))
    )
    c_kv = ckv_rng.standard_normal(params.ckv_dim)
    kr_raw = kr_rng.standard_normal(params.kr_dim)
    return c_kv / np.linalg.norm(c_kv), kr_raw / np.linalg.norm(kr_raw)


class _SynthCache:
    """Memoizes per-token synthetic rows; token universes are small."""

    def __init__(self, params: SyntheticKvParams):
        self.params = params
        self._rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def rows(self, tokens: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        missing = [t for t in tokens if t not in self._rows]
        for t in missing:
            self._rows[t] = synth_kv(t, 0, self.params)
        c_kv = np.stack([self._rows[t][0] for t in tokens])
        kr_raw = np.stack([self._rows[t][1] for t in tokens])
        return c_kv, kr_raw


@dataclass(frozen=True)
class RegistryEntry:
    fingerprint: int
    c_kv: np.ndarray  # [chunk_len, ckv_dim], view into the shared pool
    kr_base: np.ndarray  # [chunk_len, kr_dim], rotated at p_src + row index
    p_src: int
    insert_epoch: int

    @property
    def chunk_len(self) -> int:
        return self.kr_base.shape[0]


@dataclass
class MaterializeResult:
    c_kv: np.ndarray
    k_r: np.ndarray
    delta: int
    multiplies: int  # chunk_len * kr_dim rotation cost


class KvRegistry:
    """fingerprint -> (c_kv, kr_base, p_src); first writer wins.

    The latent pool is shared by fingerprint: one copy per content hash no
    matter how many sessions reference it (byte accounting exposed via
    pool_bytes).  Lookups may run concurrently; inserts are serialized by
    the caller.
    """

    def __init__(self, kv_params: SyntheticKvParams, spec: RotarySpec):
        self.kv_params = kv_params
        self.spec = spec
        self._entries: dict[int, RegistryEntry] = {}
        self._synth = _SynthCache(kv_params)
        self._epoch = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, fp: int) -> bool:
        return fp in self._entries

    def lookup(self, fp: int) -> RegistryEntry | None:
        return self._entries.get(fp)

    def entries(self) -> list[RegistryEntry]:
        return sorted(self._entries.values(), key=lambda e: e.insert_epoch)

    def fresh_rows(self, tokens: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Synthetic-prefill rows (c_kv, kr_raw) for a token span."""
        return self._synth.rows(tokens)

    def insert(self, fp: int, tokens: Sequence[int], p_src: int) -> RegistryEntry:
        """Store a chunk's KV at source position p_src (no-op on duplicates)."""
        existing = self._entries.get(fp)
        if existing is not None:
            return existing
        c_kv, kr_raw = self._synth.rows(tokens)
        positions = p_src + np.arange(len(tokens))
        kr_base = rotate_rows(kr_raw, positions, self.spec)
        c_kv = c_kv.copy()
        c_kv.setflags(write=False)
        kr_base.setflags(write=False)
        entry = RegistryEntry(fp, c_kv, kr_base, p_src, self._epoch)
        self._entries[fp] = entry
        self._epoch += 1
        return entry

    def pool_bytes(self) -> int:
        """Bytes held by the shared latent pool (one copy per fingerprint)."""
        return sum(e.c_kv.nbytes for e in self._entries.values())

    def materialize(
        self,
        entry: RegistryEntry,
        p_dest: int,
        precision: Precision = Precision.F64,
    ) -> MaterializeResult:
        """Re-target a stored chunk to p_dest via a uniform delta-rotation.

        The latent rows come back verbatim; every rotary-key row gets the
        same scalar delta = p_dest - p_src.
        """
        if p_dest < 0:
            raise ValueError("p_dest must be non-negative")
        delta = p_dest - entry.p_src
        n = entry.chunk_len
        k_r = rotate_rows(entry.kr_base, np.full(n, delta), self.spec)
        if precision == Precision.BF16E:
            k_r = round_bf16(k_r)
        elif precision == Precision.F32:
            k_r = k_r.astype(np.float32).astype(np.float64)
        return MaterializeResult(entry.c_kv, k_r, delta, n * self.spec.dim)

    def naive_reuse(self, entry: RegistryEntry, p_dest: int) -> MaterializeResult:
        """Stored rows with no rotation: the naive-reuse baseline."""
        return MaterializeResult(entry.c_kv, np.array(entry.kr_base), p_dest - entry.p_src, 0)
