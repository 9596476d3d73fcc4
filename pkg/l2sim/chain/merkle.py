"""
Binary merkle trees over 256-bit leaf hashes.

Construction rules:

* interior nodes are ``H(0x01 || left || right)``; leaves are expected to be
  leaf-domain hashes already (see :func:`l2sim.chain._hashing.hash_leaf`);
* an odd level is padded by duplicating its last node;
* the root of a single leaf is the leaf itself.

Proof verification walks the siblings in index-bit order. Because the
duplicated node of an odd level is always a *left* child, a proof step where
the node is a right child equal to its sibling is rejected; together with the
index-range check this makes every single-bit change of a proof fail. Leaves
of a tree are assumed distinct (transaction ids, account leaves).
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from ..errors import EmptyLeavesError, IndexOutOfRangeError
from ._hashing import HASH_SIZE, hash_node


@dataclass(frozen=True)
class MerkleProof:
    """Inclusion proof for ``leaf`` at ``index`` under ``root``."""

    leaf: bytes
    index: int
    siblings: Tuple[bytes, ...]
    root: bytes

    def to_dict(self) -> dict:
        return {
            "leaf": self.leaf.hex(),
            "index": self.index,
            "siblings": [s.hex() for s in self.siblings],
            "root": self.root.hex(),
        }


def _check_leaves(leaves: Sequence[bytes]) -> List[bytes]:
    if len(leaves) == 0:
        raise EmptyLeavesError("merkle_root requires at least one leaf")
    out = []
    for leaf in leaves:
        if not isinstance(leaf, (bytes, bytearray)) or len(leaf) != HASH_SIZE:
            raise ValueError("merkle leaves must be 32-byte hashes")
        out.append(bytes(leaf))
    return out


def _next_level(level: List[bytes]) -> List[bytes]:
    if len(level) % 2:
        level = level + [level[-1]]
    return [hash_node(level[i], level[i + 1]) for i in range(0, len(level), 2)]


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    """
    Compute the root of *leaves*.

    Args:
        leaves: Non-empty sequence of 32-byte hashes.

    Returns:
        The 32-byte root.

    Raises:
        EmptyLeavesError: If *leaves* is empty.

    Example:
        >>> from l2sim.chain._hashing import hash_leaf
        >>> h = hash_leaf(b"tx")
        >>> merkle_root([h]) == h
        True
    """
    level = _check_leaves(leaves)
    while len(level) > 1:
        level = _next_level(level)
    return level[0]


def merkle_prove(leaves: Sequence[bytes], index: int) -> MerkleProof:
    """
    Build the inclusion proof for ``leaves[index]``.

    Raises:
        EmptyLeavesError: If *leaves* is empty.
        IndexOutOfRangeError: If *index* is not a valid leaf position.
    """
    level = _check_leaves(leaves)
    if not 0 <= index < len(level):
        raise IndexOutOfRangeError(f"index {index} outside tree of {len(level)} leaves")

    leaf = level[index]
    siblings = []
    position = index
    while len(level) > 1:
        if len(level) % 2:
            level = level + [level[-1]]
        siblings.append(level[position ^ 1])
        level = [hash_node(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        position //= 2
    return MerkleProof(leaf=leaf, index=index, siblings=tuple(siblings), root=level[0])


def merkle_verify(proof: MerkleProof) -> bool:
    """Recompute the root from the proof's leaf and siblings and compare."""
    if proof.index < 0 or proof.index >> len(proof.siblings):
        return False
    node = proof.leaf
    position = proof.index
    for sibling in proof.siblings:
        if position & 1:
            if sibling == node:
                return False
            node = hash_node(sibling, node)
        else:
            node = hash_node(node, sibling)
        position >>= 1
    return node == proof.root
