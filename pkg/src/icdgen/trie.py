"""Prefix tree over description token sequences for constrained decoding.

The trie answers "which token ids may come next" for a partial description.
Queries against a node return a live read-only view of its child ids, so the
hot decode loop never copies the (potentially large) root child set.

Binary cache format (little-endian), version 1:

    magic      4s   b"DTR1"
    version    u16  1
    vocab_size u32
    digest     32s  sha256 of the source ontology TSV bytes (zeros if unset)
    n_codes    u32  followed by n_codes utf-8 strings, each u16-length-prefixed
    n_nodes    u32  nodes in preorder, children in ascending token order:
                    code_idx u32 (0xFFFFFFFF = not terminal),
                    n_children u32, then (token u32, child_index u32) pairs
"""

from __future__ import annotations

import struct
from io import BytesIO
from pathlib import Path
from typing import AbstractSet, NamedTuple, Sequence

import numpy as np

from .errors import CacheFormatError
from .ontology import Ontology

_MAGIC = b"DTR1"
_VERSION = 1
_NO_CODE = 0xFFFFFFFF


class TrieNode:
    __slots__ = ("children", "code")

    def __init__(self) -> None:
        self.children: dict[int, "TrieNode"] = {}
        self.code: str | None = None

    @property
    def is_terminal(self) -> bool:
        return self.code is not None


class AllowedNext(NamedTuple):
    tokens: AbstractSet[int]
    is_terminal: bool


_EMPTY_CHILDREN: dict[int, TrieNode] = {}


class DescTrie:
    """Immutable prefix tree; build once via :func:`build_trie`."""

    def __init__(self, root: TrieNode, vocab_size: int, n_nodes: int, n_terminals: int) -> None:
        self.root = root
        self.vocab_size = vocab_size
        self.n_nodes = n_nodes
        self.n_terminals = n_terminals
        # Root children sorted ascending, cached for the decoder's root steps.
        self.root_child_ids: np.ndarray = np.array(sorted(root.children), dtype=np.int64)

    def walk(self, prefix: Sequence[int]) -> TrieNode | None:
        node = self.root
        for tok in prefix:
            node = node.children.get(tok)
            if node is None:
                return None
        return node

    def step(self, node: TrieNode, token: int) -> TrieNode | None:
        return node.children.get(token)

    def allowed_next(self, prefix: Sequence[int]) -> AllowedNext:
        """Child token ids and terminal flag for a prefix; empty off-trie."""
        node = self.walk(prefix)
        if node is None:
            return AllowedNext(_EMPTY_CHILDREN.keys(), False)
        return AllowedNext(node.children.keys(), node.is_terminal)


def allowed_next(trie: DescTrie, prefix: Sequence[int]) -> AllowedNext:
    return trie.allowed_next(prefix)


def build_trie(ontology: Ontology) -> DescTrie:
    """Insert every entry's token sequence; terminals carry the code id."""
    root = TrieNode()
    n_nodes = 1
    for entry in ontology:
        node = root
        for tok in entry.tokens:
            nxt = node.children.get(tok)
            if nxt is None:
                nxt = TrieNode()
                node.children[tok] = nxt
                n_nodes += 1
            node = nxt
        # Ontology guarantees unique descriptions, so this never clobbers.
        node.code = entry.code
    return DescTrie(root, vocab_size=len(ontology.vocab), n_nodes=n_nodes, n_terminals=len(ontology))


def save_trie(trie: DescTrie, path: str | Path, *, source_digest: bytes | None = None) -> None:
    """Serialize to the documented binary layout.

    ``source_digest`` should be the sha256 of the ontology TSV the trie was
    built from; loaders can then reject stale caches.
    """
    digest = source_digest if source_digest is not None else b"\x00" * 32
    if len(digest) != 32:
        raise ValueError("source_digest must be 32 bytes (sha256)")

    codes: list[str] = []
    code_idx: dict[str, int] = {}
    order: list[TrieNode] = []
    index_of: dict[int, int] = {}

    stack = [trie.root]
    while stack:
        node = stack.pop()
        index_of[id(node)] = len(order)
        order.append(node)
        if node.code is not None and node.code not in code_idx:
            code_idx[node.code] = len(codes)
            codes.append(node.code)
        for tok in sorted(node.children, reverse=True):
            stack.append(node.children[tok])

    buf = BytesIO()
    buf.write(struct.pack("<4sHI", _MAGIC, _VERSION, trie.vocab_size))
    buf.write(digest)
    buf.write(struct.pack("<I", len(codes)))
    for code in codes:
        raw = code.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
    buf.write(struct.pack("<I", len(order)))
    for node in order:
        ci = code_idx[node.code] if node.code is not None else _NO_CODE
        buf.write(struct.pack("<II", ci, len(node.children)))
        for tok in sorted(node.children):
            buf.write(struct.pack("<II", tok, index_of[id(node.children[tok])]))
    Path(path).write_bytes(buf.getvalue())


def load_trie(path: str | Path, *, expect_digest: bytes | None = None) -> DescTrie:
    raw = Path(path).read_bytes()
    buf = BytesIO(raw)

    def read(fmt: str):
        size = struct.calcsize(fmt)
        chunk = buf.read(size)
        if len(chunk) != size:
            raise CacheFormatError(f"{path}: truncated trie cache")
        return struct.unpack(fmt, chunk)

    magic, version, vocab_size = read("<4sHI")
    if magic != _MAGIC:
        raise CacheFormatError(f"{path}: not a trie cache file")
    if version != _VERSION:
        raise CacheFormatError(f"{path}: unsupported trie cache version {version}")
    digest = buf.read(32)
    if expect_digest is not None and digest != expect_digest:
        raise CacheFormatError(f"{path}: trie cache is stale (ontology digest mismatch)")

    (n_codes,) = read("<I")
    codes = []
    for _ in range(n_codes):
        (length,) = read("<H")
        codes.append(buf.read(length).decode("utf-8"))

    (n_nodes,) = read("<I")
    nodes = [TrieNode() for _ in range(n_nodes)]
    n_terminals = 0
    for node in nodes:
        ci, n_children = read("<II")
        if ci != _NO_CODE:
            node.code = codes[ci]
            n_terminals += 1
        for _ in range(n_children):
            tok, child = read("<II")
            node.children[tok] = nodes[child]
    if not nodes:
        raise CacheFormatError(f"{path}: empty trie cache")
    return DescTrie(nodes[0], vocab_size=vocab_size, n_nodes=n_nodes, n_terminals=n_terminals)
