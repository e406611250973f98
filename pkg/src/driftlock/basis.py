"""Orthonormal search bases for coordinate-descent attacks.

`pixel` is the standard coordinate basis. `dct8` tiles the image with
8x8 blocks per channel and uses the orthonormal 2-D DCT-II atoms of each
block, so low-frequency atoms move whole 8x8 regions coherently. Atoms
are applied lazily (each touches only one block), which keeps large
shapes cheap; `materialize` exists for Gram-matrix checks on small
shapes.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

BLOCK = 8


def _dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis rows: T[u, x] = a(u) cos((2x+1)u pi / 2n)."""
    t = np.zeros((n, n))
    for u in range(n):
        alpha = np.sqrt(1.0 / n) if u == 0 else np.sqrt(2.0 / n)
        for x in range(n):
            t[u, x] = alpha * np.cos((2 * x + 1) * u * np.pi / (2 * n))
    return t


_DCT8 = _dct_matrix(BLOCK)


class Basis:
    """Ordered orthonormal basis over images of a fixed shape."""

    def __init__(self, shape: tuple[int, int, int], kind: str):
        h, w, c = shape
        self.shape = shape
        self.kind = kind
        if kind == "pixel":
            self.num_atoms = h * w * c
        elif kind == "dct8":
            if h % BLOCK or w % BLOCK:
                raise ConfigurationError(
                    f"dct8 needs height and width divisible by {BLOCK}, got {h}x{w}"
                )
            self.num_atoms = h * w * c
            self._blocks_w = w // BLOCK
            self._per_channel = h * w
        else:
            raise ConfigurationError(f"unknown basis kind {kind!r}")

    def add_scaled(self, x: np.ndarray, index: int, coeff: float) -> np.ndarray:
        """Return a copy of x with coeff * atom[index] added."""
        out = x.copy()
        self.add_scaled_inplace(out, index, coeff)
        return out

    def add_scaled_inplace(self, x: np.ndarray, index: int, coeff: float) -> None:
        h, w, c = self.shape
        if self.kind == "pixel":
            x.reshape(-1)[index] += coeff
            return
        ch, rest = divmod(index, self._per_channel)
        block_idx, freq = divmod(rest, BLOCK * BLOCK)
        br, bc = divmod(block_idx, self._blocks_w)
        u, v = divmod(freq, BLOCK)
        atom = np.outer(_DCT8[u], _DCT8[v])
        r0, c0 = br * BLOCK, bc * BLOCK
        x[r0 : r0 + BLOCK, c0 : c0 + BLOCK, ch] += coeff * atom

    def atom(self, index: int) -> np.ndarray:
        """Dense atom as an image-shaped array."""
        return self.add_scaled(np.zeros(self.shape), index, 1.0)

    def materialize(self) -> np.ndarray:
        """(num_atoms, H*W*C) matrix of all atoms; small shapes only."""
        return np.stack([self.atom(i).reshape(-1) for i in range(self.num_atoms)])


def build_basis(shape: tuple[int, int, int], kind: str) -> Basis:
    return Basis(shape, kind)
