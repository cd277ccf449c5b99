"""Systematic erasure codes for the block carousel.

Three codecs share one interface:

* ``null`` sends the k source blocks unprotected (n == k).
* ``mds`` evaluates the degree-(k-1) polynomial through the source
  blocks at extra points of GF(256), so any k distinct symbols rebuild
  the file (zero reception overhead, k and n capped at 255).
* ``sparse_parity`` XORs pseudo-random subsets of the source blocks,
  balanced so every block feeds about a dozen repairs; an incremental
  GF(2) elimination (which subsumes peeling) closes the decode a few
  symbols past k.

Symbol data is treated as big integers for XOR work and as ``bytes``
with per-scalar translation tables for GF(256) work, which keeps the
whole module dependency free and fast enough for file-sized symbols.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache

_CODEC_NAMES = ("null", "mds", "sparse_parity")


class FecError(Exception):
    pass


class BadSymbolSizeError(FecError):
    """Encode input does not cut into k blocks of the symbol size."""


class NeedMoreSymbols(FecError):
    """Decode was attempted before enough symbols arrived."""

    def __init__(self, have: int):
        super().__init__(f"decode needs more symbols (have {have} distinct)")
        self.have = have


class DecodeFailureError(FecError):
    """Received symbols are mutually inconsistent or corrupt."""


class NotDecodedError(FecError):
    """A result was requested before the decode succeeded."""


@dataclass(frozen=True)
class CodecSpec:
    name: str
    k: int
    n: int
    symbol_size: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.name not in _CODEC_NAMES:
            raise ValueError(f"unknown codec {self.name!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n < self.k:
            raise ValueError("n must be >= k")
        if self.symbol_size < 1:
            raise ValueError("symbol_size must be >= 1")
        if self.name == "null" and self.n != self.k:
            raise ValueError("null codec requires n == k")
        if self.name == "mds" and not (self.k <= 255 and self.n <= 255):
            raise ValueError("mds codec requires k <= 255 and n <= 255")


@dataclass(frozen=True)
class FecSymbol:
    index: int
    kind: str  # "source" or "repair"
    data: bytes


# ---------------------------------------------------------------------------
# GF(256) arithmetic (primitive polynomial x^8+x^4+x^3+x^2+1).

_GF_PRIM = 0x11D
_GF_EXP = [0] * 510
_GF_LOG = [0] * 256


def _init_tables() -> None:
    x = 1
    for i in range(255):
        _GF_EXP[i] = x
        _GF_LOG[x] = i
        x <<= 1
        if x & 0x100:
            x ^= _GF_PRIM
    for i in range(255, 510):
        _GF_EXP[i] = _GF_EXP[i - 255]


_init_tables()


def _gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _GF_EXP[_GF_LOG[a] + _GF_LOG[b]]


def _gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return _GF_EXP[(_GF_LOG[a] - _GF_LOG[b]) % 255]


def _gf_inv(a: int) -> int:
    return _gf_div(1, a)


@lru_cache(maxsize=256)
def _scale_table(c: int) -> bytes:
    return bytes(_gf_mul(c, v) for v in range(256))


def _scaled(data: bytes, c: int) -> int:
    """c * data as a big integer (data interpreted byte-wise over GF(256))."""
    if c == 0:
        return 0
    if c == 1:
        return int.from_bytes(data, "big")
    return int.from_bytes(data.translate(_scale_table(c)), "big")


# ---------------------------------------------------------------------------
# Codec internals.


def _padded_blocks(spec: CodecSpec, blocks) -> list[bytes]:
    blocks = list(blocks)
    if len(blocks) != spec.k:
        raise BadSymbolSizeError(f"expected {spec.k} blocks, got {len(blocks)}")
    out = []
    for i, block in enumerate(blocks):
        if len(block) > spec.symbol_size:
            raise BadSymbolSizeError(f"block {i} longer than symbol_size")
        if len(block) < spec.symbol_size:
            if i != spec.k - 1:
                raise BadSymbolSizeError("only the last block may be short")
            block = block + b"\x00" * (spec.symbol_size - len(block))
        out.append(bytes(block))
    return out


_COL_REPAIRS = 16  # repair rows each source block feeds (capped by row count)


@lru_cache(maxsize=8)
def _support_layout(k: int, n: int, seed: int) -> tuple[tuple[int, ...], ...]:
    """Repair supports for one spec, drawn column-first.

    Every source block lands in about a dozen distinct repair rows.  A
    receiver holding only part of the repairs then still touches every
    missing block with overwhelming probability; row-first draws with
    the same mean degree leave a tail of never-covered blocks and the
    elimination stalls far beyond k.
    """
    rows = n - k
    per_col = max(1, min(_COL_REPAIRS, rows - 1)) if rows else 0
    rng = random.Random(seed ^ 0x5DEECE66D)
    supports: list[list[int]] = [[] for _ in range(rows)]
    for col in range(k):
        for row in rng.sample(range(rows), per_col):
            supports[row].append(col)
    for row in range(rows):
        if not supports[row]:
            supports[row].append(row % k)
    return tuple(tuple(sorted(s)) for s in supports)


def repair_support(spec: CodecSpec, index: int) -> tuple[int, ...]:
    """Source indices XORed into sparse repair symbol ``index`` (k <= index < n)."""
    if not spec.k <= index < spec.n:
        raise ValueError("not a repair index")
    return _support_layout(spec.k, spec.n, spec.seed)[index - spec.k]


def _mds_repair_coeffs(spec: CodecSpec, point: int) -> list[int]:
    """Lagrange coefficients mapping source values (points 0..k-1) to ``point``."""
    k = spec.k
    coeffs = []
    for i in range(k):
        num = 1
        den = 1
        for j in range(k):
            if j == i:
                continue
            num = _gf_mul(num, point ^ j)
            den = _gf_mul(den, i ^ j)
        coeffs.append(_gf_div(num, den))
    return coeffs


def encode(spec: CodecSpec, blocks) -> list[FecSymbol]:
    """Produce the n symbols for k source blocks (systematic: sources first)."""
    src = _padded_blocks(spec, blocks)
    symbols = [FecSymbol(i, "source", src[i]) for i in range(spec.k)]
    if spec.name == "null":
        return symbols
    if spec.name == "mds":
        for r in range(spec.k, spec.n):
            coeffs = _mds_repair_coeffs(spec, r)
            acc = 0
            for i in range(spec.k):
                acc ^= _scaled(src[i], coeffs[i])
            symbols.append(FecSymbol(r, "repair", acc.to_bytes(spec.symbol_size, "big")))
        return symbols
    # sparse_parity
    ints = [int.from_bytes(b, "big") for b in src]
    for r in range(spec.k, spec.n):
        acc = 0
        for i in repair_support(spec, r):
            acc ^= ints[i]
        symbols.append(FecSymbol(r, "repair", acc.to_bytes(spec.symbol_size, "big")))
    return symbols


class SymbolDecoder:
    """Incremental decoder fed one symbol at a time.

    With ``track_data=False`` only the decodability structure is kept,
    which is enough to measure reception overhead from a symbol index
    trace without the payloads.
    """

    def __init__(self, spec: CodecSpec, *, track_data: bool = True):
        self.spec = spec
        self.track_data = track_data
        self._received: dict[int, bytes | None] = {}
        self._done_at: int | None = None  # distinct count when decode closed
        self._blocks: list[bytes] | None = None
        if spec.name == "sparse_parity":
            # pivot column -> (mask over source indices, payload as int)
            self._pivots: dict[int, tuple[int, int]] = {}
        else:
            self._sources_seen = 0

    # -- feeding ---------------------------------------------------------

    def add(self, index: int, data: bytes | None = None) -> str:
        """Feed one symbol; returns "new" or "duplicate"."""
        spec = self.spec
        if not 0 <= index < spec.n:
            raise ValueError(f"symbol index {index} outside 0..{spec.n - 1}")
        if self.track_data:
            if data is None:
                raise ValueError("decoder tracks data but none was given")
            if len(data) != spec.symbol_size:
                raise DecodeFailureError("symbol has the wrong size")
        if index in self._received:
            old = self._received[index]
            if self.track_data and old is not None and old != data:
                raise DecodeFailureError(f"symbol {index} received twice with different data")
            return "duplicate"
        self._received[index] = bytes(data) if (self.track_data and data is not None) else None
        if self._done_at is None:
            self._absorb(index, data)
            if self._closed():
                self._done_at = len(self._received)
        return "new"

    def _absorb(self, index: int, data: bytes | None) -> None:
        spec = self.spec
        if spec.name != "sparse_parity":
            if index < spec.k:
                self._sources_seen += 1
            return
        if index < spec.k:
            mask = 1 << index
        else:
            mask = 0
            for i in repair_support(spec, index):
                mask |= 1 << i
        const = _scaled(data, 1) if (self.track_data and data is not None) else 0
        while mask:
            top = mask.bit_length() - 1
            pivot = self._pivots.get(top)
            if pivot is None:
                self._pivots[top] = (mask, const)
                return
            mask ^= pivot[0]
            const ^= pivot[1]
        if self.track_data and const != 0:
            raise DecodeFailureError("inconsistent repair equation")

    def _closed(self) -> bool:
        spec = self.spec
        if spec.name == "sparse_parity":
            return len(self._pivots) == spec.k
        if spec.name == "mds":
            return len(self._received) >= spec.k
        return self._sources_seen == spec.k

    # -- results ---------------------------------------------------------

    @property
    def distinct(self) -> int:
        return len(self._received)

    @property
    def complete(self) -> bool:
        return self._done_at is not None

    @property
    def epsilon(self) -> int:
        """Distinct symbols beyond k consumed before the decode closed."""
        if self._done_at is None:
            raise NotDecodedError("decode has not succeeded")
        return self._done_at - self.spec.k

    def blocks(self) -> list[bytes]:
        if self._done_at is None:
            raise NeedMoreSymbols(self.distinct)
        if not self.track_data:
            raise NotDecodedError("structure-only decoder holds no data")
        if self._blocks is None:
            self._blocks = self._solve()
        return self._blocks

    def _solve(self) -> list[bytes]:
        spec = self.spec
        if spec.name == "sparse_parity":
            solved: dict[int, int] = {}
            for col in sorted(self._pivots):
                mask, const = self._pivots[col]
                rest = mask & ~(1 << col)
                while rest:
                    low = rest & -rest
                    const ^= solved[low.bit_length() - 1]
                    rest ^= low
                solved[col] = const
            return [solved[i].to_bytes(spec.symbol_size, "big") for i in range(spec.k)]
        if spec.name == "null":
            return [self._received[i] for i in range(spec.k)]  # type: ignore[misc]
        return self._solve_mds()

    def _solve_mds(self) -> list[bytes]:
        spec = self.spec
        points = sorted(self._received)[: spec.k]
        values = [self._received[x] for x in points]
        out: list[bytes | None] = [None] * spec.k
        for x, v in zip(points, values):
            if x < spec.k:
                out[x] = v
        missing = [t for t in range(spec.k) if out[t] is None]
        if missing:
            # Barycentric Lagrange through the k received points.
            weights = []
            for i, xi in enumerate(points):
                w = 1
                for j, xj in enumerate(points):
                    if i != j:
                        w = _gf_mul(w, xi ^ xj)
                weights.append(_gf_inv(w))
            for t in missing:
                num = 1
                for xj in points:
                    num = _gf_mul(num, t ^ xj)
                acc = 0
                for xi, v, w in zip(points, values, weights):
                    c = _gf_div(_gf_mul(num, w), t ^ xi)
                    acc ^= _scaled(v, c)  # type: ignore[arg-type]
                out[t] = acc.to_bytes(spec.symbol_size, "big")
        return out  # type: ignore[return-value]


def decode(spec: CodecSpec, received) -> list[bytes]:
    """Rebuild the k source blocks from an iterable of FecSymbols.

    Raises NeedMoreSymbols when the set cannot close the decode and
    DecodeFailureError when symbols contradict each other.
    """
    dec = SymbolDecoder(spec)
    for sym in received:
        dec.add(sym.index, sym.data)
    if not dec.complete:
        raise NeedMoreSymbols(dec.distinct)
    return dec.blocks()


def epsilon_overhead(spec: CodecSpec, received_indices) -> float:
    """Reception overhead in percent for a symbol arrival order.

    Feeds the index trace to a structure-only decoder and reports
    100 * epsilon / k measured at the first decodable prefix.
    """
    dec = SymbolDecoder(spec, track_data=False)
    for index in received_indices:
        dec.add(index)
        if dec.complete:
            return 100.0 * dec.epsilon / spec.k
    raise NotDecodedError("trace never reaches a decodable set")
