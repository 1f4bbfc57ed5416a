"""Embedding and recovering whitened bitstreams in token choices.

Encoding walks a distribution's split tree: each accepted split consumes
one message bit that picks a side, and when no further split is accepted
the residual set is sampled honestly by inverse CDF.  Decoding replays
the same deterministic splits and reads the side containing the observed
token.  Messages travel as a whitened frame: a 32-bit big-endian byte
length followed by the payload, XORed with an AES-128-CTR keystream.
"""

from __future__ import annotations

import math
import secrets
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence
from weakref import WeakKeyDictionary

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .distributions import TokenDistribution
from .errors import DesyncError, IncompleteFrameError, TruncationError
from .partitioning import ProbSubset, _trusted_subset, partition

__all__ = [
    "ChannelKey",
    "MessageFrame",
    "TokenRecord",
    "BitCursor",
    "whiten",
    "encode_token",
    "decode_token",
    "encode_message",
    "decode_message",
    "clear_split_cache",
]

LENGTH_PREFIX_BITS = 32


# ---------------------------------------------------------------------------
# Keys, frames, records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelKey:
    """A 128-bit secret key and 96-bit public nonce for the whitening stream."""

    key: bytes
    nonce: bytes

    def __post_init__(self) -> None:
        if len(self.key) != 16:
            raise ValueError(f"key must be 16 bytes, got {len(self.key)}")
        if len(self.nonce) != 12:
            raise ValueError(f"nonce must be 12 bytes, got {len(self.nonce)}")

    @classmethod
    def from_hex(cls, key_hex: str, nonce_hex: str) -> "ChannelKey":
        return cls(key=bytes.fromhex(key_hex), nonce=bytes.fromhex(nonce_hex))

    @classmethod
    def generate(cls) -> "ChannelKey":
        """Fresh random key and nonce from the OS entropy pool."""
        return cls(key=secrets.token_bytes(16), nonce=secrets.token_bytes(12))


def _keystream(key: ChannelKey, nbytes: int) -> bytes:
    """AES-128-CTR keystream: 96-bit nonce, 32-bit big-endian counter from 0."""
    if nbytes == 0:
        return b""
    enc = Cipher(
        algorithms.AES(key.key), modes.CTR(key.nonce + b"\x00\x00\x00\x00")
    ).encryptor()
    return enc.update(b"\x00" * nbytes) + enc.finalize()


def _as_bit_array(bits: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("bits must be a 1-D sequence")
    if arr.size and arr.max() > 1:
        raise ValueError("bits must be 0 or 1")
    return arr


def whiten(bits: Sequence[int] | np.ndarray, key: ChannelKey) -> np.ndarray:
    """XOR a bit sequence with the channel keystream; self-inverse.

    Bytes of the keystream expand most-significant-bit first, so the
    first keystream byte covers the first eight bits.
    """
    arr = _as_bit_array(bits)
    if arr.size == 0:
        return arr.copy()
    stream = _keystream(key, (arr.size + 7) // 8)
    stream_bits = np.unpackbits(np.frombuffer(stream, dtype=np.uint8))[: arr.size]
    return arr ^ stream_bits


@dataclass(frozen=True)
class MessageFrame:
    """A payload plus its whitened on-channel bit rendering."""

    payload: bytes
    framed_bits: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.framed_bits.size != LENGTH_PREFIX_BITS + 8 * len(self.payload):
            raise ValueError("framed_bits length must be 32 + 8 * len(payload)")

    @classmethod
    def build(cls, payload: bytes, key: ChannelKey) -> "MessageFrame":
        """Frame a payload: 32-bit big-endian length, payload bytes, whitened."""
        if len(payload) >= 1 << 32:
            raise ValueError("payload too large for the 32-bit length prefix")
        raw = struct.pack(">I", len(payload)) + bytes(payload)
        raw_bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
        return cls(payload=bytes(payload), framed_bits=whiten(raw_bits, key))


@dataclass(frozen=True)
class TokenRecord:
    """One emitted token and how many message bits its choice carried."""

    position: int
    token_id: int
    bits_embedded: int

    def __post_init__(self) -> None:
        if self.bits_embedded < 0:
            raise ValueError("bits_embedded must be >= 0")


# ---------------------------------------------------------------------------
# Bit cursor
# ---------------------------------------------------------------------------


class BitCursor:
    """Sequential reader over message bits.

    Finite cursors wrap a fixed bit array; unbounded cursors refill from
    a callable (used by the experiment harness to embed endless random
    bits).  consumed counts bits handed out so far.
    """

    __slots__ = ("_bits", "_pos", "_refill", "consumed")

    def __init__(
        self,
        bits: Optional[np.ndarray] = None,
        *,
        refill: Optional[Callable[[], np.ndarray]] = None,
    ):
        if (bits is None) == (refill is None):
            raise ValueError("provide exactly one of bits or refill")
        # plain-int list backing: per-bit reads are hot in the encoder
        self._bits = _as_bit_array(bits).tolist() if bits is not None else []
        self._pos = 0
        self._refill = refill
        self.consumed = 0

    @classmethod
    def from_bits(cls, bits: Sequence[int] | np.ndarray) -> "BitCursor":
        return cls(bits=np.asarray(bits))

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitCursor":
        return cls(bits=np.unpackbits(np.frombuffer(data, dtype=np.uint8)))

    @classmethod
    def random(cls, rng: np.random.Generator, chunk_bits: int = 4096) -> "BitCursor":
        """An endless cursor of uniform random bits drawn from rng."""
        return cls(refill=lambda: rng.integers(0, 2, size=chunk_bits, dtype=np.uint8))

    def has_bits(self) -> bool:
        return self._refill is not None or self._pos < len(self._bits)

    def remaining(self) -> float:
        return math.inf if self._refill is not None else len(self._bits) - self._pos

    def take(self) -> int:
        if self._pos >= len(self._bits):
            if self._refill is None:
                raise IndexError("bit cursor exhausted")
            self._bits = _as_bit_array(self._refill()).tolist()
            self._pos = 0
        bit = self._bits[self._pos]
        self._pos += 1
        self.consumed += 1
        return bit


# ---------------------------------------------------------------------------
# Memoized split trees
# ---------------------------------------------------------------------------

_UNEXPANDED = object()


class _SplitNode:
    """A lazily expanded node of a distribution's split tree."""

    __slots__ = ("subset", "_hs", "_children", "_cdf", "_left_members")

    def __init__(self, subset: ProbSubset, min_split_entropy: float):
        self.subset = subset
        self._hs = min_split_entropy
        self._children = _UNEXPANDED
        self._cdf = None
        self._left_members = None

    def split(self) -> Optional[tuple["_SplitNode", "_SplitNode"]]:
        children = self._children
        if children is _UNEXPANDED:
            part = partition(self.subset, self._hs)
            if part is None:
                children = None
            else:
                children = (
                    _SplitNode(part.left, self._hs),
                    _SplitNode(part.right, self._hs),
                )
            self._children = children
        return children

    def left_members(self) -> frozenset:
        if self._left_members is None:
            children = self.split()
            assert children is not None
            self._left_members = frozenset(children[0].subset.token_ids.tolist())
        return self._left_members

    def sample(self, rng: np.random.Generator) -> int:
        """Inverse-CDF draw over the subset, one uniform per call."""
        u = rng.random()
        subset = self.subset
        ids = subset.token_ids
        if ids.size == 1:
            return int(ids[0])
        cdf = self._cdf
        if cdf is None:
            cdf = self._cdf = subset.probs.cumsum()
        idx = int(cdf.searchsorted(u * subset.total, side="right"))
        if idx >= ids.size:
            idx = ids.size - 1
        return int(ids[idx])


_SPLIT_ROOTS: "WeakKeyDictionary[TokenDistribution, dict[float, _SplitNode]]" = (
    WeakKeyDictionary()
)


def _split_root(dist: TokenDistribution, min_split_entropy: float) -> _SplitNode:
    per_dist = _SPLIT_ROOTS.get(dist)
    if per_dist is None:
        per_dist = {}
        _SPLIT_ROOTS[dist] = per_dist
    node = per_dist.get(min_split_entropy)
    if node is None:
        cdf = dist.cumulative
        subset = _trusted_subset(dist.token_ids, dist.probs, float(cdf[-1]))
        node = _SplitNode(subset, min_split_entropy)
        node._cdf = cdf
        per_dist[min_split_entropy] = node
    return node


def clear_split_cache() -> None:
    """Drop all memoized split trees (frees memory; behavior unchanged)."""
    _SPLIT_ROOTS.clear()


# ---------------------------------------------------------------------------
# Per-token embed / recover
# ---------------------------------------------------------------------------


def encode_token(
    bits: BitCursor,
    dist: TokenDistribution,
    min_split_entropy: float,
    rng: np.random.Generator,
    *,
    position: int = 0,
) -> TokenRecord:
    """Embed as many leading bits as the distribution's split tree accepts.

    Each accepted split consumes one bit (0 goes left, 1 goes right); the
    walk stops at the first refused split or when the cursor runs out,
    and the surviving subset is sampled honestly with one uniform draw.
    """
    node = _split_root(dist, min_split_entropy)
    consumed = 0
    while bits.has_bits():
        children = node.split()
        if children is None:
            break
        node = children[bits.take()]
        consumed += 1
    token_id = node.sample(rng)
    return TokenRecord(position=position, token_id=token_id, bits_embedded=consumed)


def decode_token(
    token_id: int, dist: TokenDistribution, min_split_entropy: float
) -> np.ndarray:
    """Read back the bits a token's position in the split tree pins down.

    Mirrors encode_token: follow the unique descent whose sides contain
    the token, emitting 0 for left and 1 for right, until a split is
    refused.  A token absent from the distribution means the decoder's
    distribution source has diverged from the encoder's.
    """
    token_id = int(token_id)
    try:
        dist.index_of(token_id)
    except KeyError:
        raise DesyncError(
            f"token id {token_id} is not in the distribution; "
            "encoder and decoder sources disagree"
        ) from None
    node = _split_root(dist, min_split_entropy)
    out: list[int] = []
    while True:
        children = node.split()
        if children is None:
            return np.asarray(out, dtype=np.uint8)
        if token_id in node.left_members():
            out.append(0)
            node = children[0]
        else:
            out.append(1)
            node = children[1]


# ---------------------------------------------------------------------------
# Whole-message embed / recover
# ---------------------------------------------------------------------------


def encode_message(
    payload: bytes,
    key: ChannelKey,
    source,
    min_split_entropy: float,
    rng_seed: int | np.random.Generator,
    max_tokens: int,
) -> list[TokenRecord]:
    """Embed a framed payload into a token sequence drawn from source.

    Pulls distributions from the source, embeds frame bits token by
    token, and feeds every chosen token back into the source.  Once the
    frame is exhausted the loop keeps sampling honestly (zero bits per
    token) until max_tokens or the source's end-of-sequence, so the
    message end leaves no seam.  Raises TruncationError when the stream
    ends with frame bits still pending.
    """
    if max_tokens < 0:
        raise ValueError("max_tokens must be >= 0")
    frame = MessageFrame.build(payload, key)
    cursor = BitCursor.from_bits(frame.framed_bits)
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    records: list[TokenRecord] = []
    history: list[int] = []
    for pos in range(max_tokens):
        dist = source.next(history)
        if dist is None:
            break
        record = encode_token(cursor, dist, min_split_entropy, rng, position=pos)
        records.append(record)
        history.append(record.token_id)
    if cursor.has_bits():
        raise TruncationError(
            f"token stream ended after {len(records)} tokens with "
            f"{cursor.consumed} of {frame.framed_bits.size} frame bits embedded",
            embedded_bits=cursor.consumed,
            total_bits=int(frame.framed_bits.size),
        )
    return records


def decode_message(
    tokens: Sequence[int],
    key: ChannelKey,
    source,
    min_split_entropy: float,
    *,
    max_payload_bytes: Optional[int] = None,
) -> bytes:
    """Recover a framed payload from a token sequence.

    Replays the source over the observed tokens, decoding each token's
    bits; after 32 bits the de-whitened length prefix fixes how many more
    are needed, and trailing honest tokens are ignored.  A wrong key
    garbles the length prefix, so the demanded bit count overshoots what
    the stream can deliver and the decode fails cleanly.
    """
    chunks: list[np.ndarray] = []
    history: list[int] = []
    total_bits = 0
    needed: Optional[int] = None
    for position, token_id in enumerate(tokens):
        if needed is not None and total_bits >= needed:
            break
        dist = source.next(history)
        if dist is None:
            raise DesyncError(
                f"source signaled end-of-sequence at position {position} "
                "but the token stream continues"
            )
        bits = decode_token(int(token_id), dist, min_split_entropy)
        history.append(int(token_id))
        chunks.append(bits)
        total_bits += bits.size
        if needed is None and total_bits >= LENGTH_PREFIX_BITS:
            stego = np.concatenate(chunks)
            header = whiten(stego[:LENGTH_PREFIX_BITS], key)
            (length,) = struct.unpack(">I", np.packbits(header).tobytes())
            if max_payload_bytes is not None and length > max_payload_bytes:
                raise IncompleteFrameError(
                    f"length prefix claims {length} bytes, above the "
                    f"configured bound of {max_payload_bytes}; wrong key "
                    "or corrupted stream"
                )
            needed = LENGTH_PREFIX_BITS + 8 * length
    if needed is None or total_bits < needed:
        have = total_bits
        raise IncompleteFrameError(
            f"token stream ended with {have} bits recovered but "
            + (
                f"{needed} needed for the framed payload"
                if needed is not None
                else "the 32-bit length prefix incomplete"
            )
        )
    stego = np.concatenate(chunks) if chunks else np.empty(0, np.uint8)
    frame_bits = whiten(stego[:needed], key)
    payload_bits = frame_bits[LENGTH_PREFIX_BITS:]
    return np.packbits(payload_bits).tobytes() if payload_bits.size else b""
