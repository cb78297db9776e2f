"""Exact-prefix matching over token sequences via a compressed radix tree.

Single-writer, multi-reader: concurrent match_prefix calls are safe, insert
requires exclusive access.  No eviction; a capacity hook exists but is not
exercised by the bounded simulator workloads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence


@dataclass
class _Node:
    # edge label from the parent, empty for the root
    label: tuple[int, ...] = ()
    children: dict[int, "_Node"] = field(default_factory=dict)
    # earliest-inserted handle whose sequence passes through this node;
    # earliest wins so tie-broken matches are deterministic
    witness: Hashable | None = None
    witness_epoch: int = -1


class RadixTree:
    def __init__(self, capacity_hint: int | None = None):
        self._root = _Node()
        self._epoch = 0
        self.capacity_hint = capacity_hint  # reserved for an LRU eviction hook

    def insert(self, seq: Sequence[int], handle: Hashable) -> None:
        seq = tuple(seq)
        epoch = self._epoch
        self._epoch += 1
        node = self._root
        self._claim(node, handle, epoch)
        i = 0
        while i < len(seq):
            head = seq[i]
            child = node.children.get(head)
            if child is None:
                leaf = _Node(label=seq[i:])
                self._claim(leaf, handle, epoch)
                node.children[head] = leaf
                return
            label = child.label
            common = _common_len(label, seq, i)
            if common < len(label):
                # split the edge at the divergence point
                mid = _Node(label=label[:common])
                mid.witness = child.witness
                mid.witness_epoch = child.witness_epoch
                child.label = label[common:]
                mid.children[child.label[0]] = child
                node.children[head] = mid
                child = mid
            self._claim(child, handle, epoch)
            node = child
            i += common

    def match_prefix(self, seq: Sequence[int]) -> tuple[int, Hashable | None]:
        """Longest m such that some inserted sequence shares seq's first m
        tokens, with the earliest-inserted witness reaching that depth."""
        node = self._root
        matched = 0
        witness = None
        i = 0
        n = len(seq)
        while i < n:
            child = node.children.get(seq[i])
            if child is None:
                break
            common = _common_len(child.label, seq, i)
            if common > 0:
                matched = i + common
                witness = child.witness
            if common < len(child.label):
                break
            node = child
            i += common
        if matched == 0:
            return 0, None
        return matched, witness

    @staticmethod
    def _claim(node: _Node, handle: Hashable, epoch: int) -> None:
        if node.witness_epoch < 0 or epoch < node.witness_epoch:
            node.witness = handle
            node.witness_epoch = epoch


def _common_len(label: tuple[int, ...], seq: Sequence[int], offset: int) -> int:
    limit = min(len(label), len(seq) - offset)
    i = 0
    while i < limit and label[i] == seq[offset + i]:
        i += 1
    return i
