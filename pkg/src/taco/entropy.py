"""Adaptive range coder and frequency-count probability models.

The coder keeps a 32-bit range that is renormalised byte-wise whenever it
drops below 2**24; carries out of ``low`` are resolved through a one-byte
cache (the LZMA scheme), so no coding space is thrown away on underflow.
All state is integer, so bitstreams are identical across runs and
platforms. Frequency totals never exceed 2**16.

The inner loops are compiled with numba. The inlined helpers below are
also called from the codec kernels in :mod:`taco.lossless` and
:mod:`taco.lossy`, so every codec shares one coder implementation.

A model is stored as one int64 table with a row per context::

    [0, 256)    symbol counts
    [256, 272)  cumulative count below each group of 16 symbols
    272         row total

An update is one increment plus a fixed 16-wide add over the group
prefixes, and the decoder finds a symbol with two short branch-free scans.
A Fenwick tree was tried first; its chain of dependent writes on every
update stalled the lookup of the next symbol.

Packing everything into a single array matters: numba pays a reference
count round trip per array argument of every inlined call.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from .errors import CorruptPayload, CountMismatch, TruncatedBitstream

ALPHABET = 256
GROUP = 16
GROUPS = 256          # first group-sum column
NUM_GROUPS = ALPHABET // GROUP
TOTAL = GROUPS + NUM_GROUPS
TABLE_WIDTH = TOTAL + 1

TOP = 1 << 24
MASK32 = 0xFFFFFFFF
FLUSH_BYTES = 4

DEFAULT_INCREMENT = 32
DEFAULT_MAX_TOTAL = 1 << 16

# decoder status codes
OK = 0
ERR_TRUNCATED = 1
ERR_CORRUPT = 2


# --------------------------------------------------------------------------
# model table primitives
# --------------------------------------------------------------------------

@njit(nogil=True, inline="always")
def table_rebuild(tab, ctx):
    t = 0
    for g in range(NUM_GROUPS):
        tab[ctx, GROUPS + g] = t
        for k in range(g * GROUP, (g + 1) * GROUP):
            t += tab[ctx, k]
    tab[ctx, TOTAL] = t


@njit(nogil=True, inline="always")
def model_cum(tab, ctx, s):
    """Sum of the counts of symbols strictly below ``s``."""
    first = s & -GROUP
    acc = tab[ctx, GROUPS + s // GROUP]
    for k in range(first, s):
        acc += tab[ctx, k]
    return acc


@njit(nogil=True, inline="always")
def model_find(tab, ctx, target):
    """Symbol whose cumulative interval contains ``target``, and its cum.

    Counts the prefix sums that do not exceed ``target``, first over the
    group starts and then inside the chosen group; zero-count symbols are
    skipped for free since their prefix sum equals the next one.
    """
    g = -1
    for j in range(NUM_GROUPS):
        g += tab[ctx, GROUPS + j] <= target
    first = g * GROUP
    acc = tab[ctx, GROUPS + g]
    s = first
    cum = acc
    for k in range(GROUP):
        acc += tab[ctx, first + k]
        le = acc <= target
        s += le
        cum = acc if le else cum
    return s, cum


@njit(nogil=True, inline="always")
def model_update(tab, ctx, s, inc, max_total):
    if inc != 0:
        tab[ctx, s] += inc
        g = s // GROUP
        for j in range(NUM_GROUPS):
            tab[ctx, GROUPS + j] += inc * (j > g)
        tab[ctx, TOTAL] += inc
        if tab[ctx, TOTAL] > max_total:
            # halve every count, never below 1
            for k in range(ALPHABET):
                tab[ctx, k] = (tab[ctx, k] + 1) >> 1
            table_rebuild(tab, ctx)


# --------------------------------------------------------------------------
# range coder primitives
#
# Encoder state is the tuple (low, range, write position, cache byte,
# cache size); decoder state is (code, range, read position, status).
# --------------------------------------------------------------------------

@njit(nogil=True, inline="always")
def enc_init():
    # the first byte to leave the cache is always zero and is never written
    return (0, MASK32, -1, 0, 1)


@njit(nogil=True, inline="always")
def enc_put(es, out, cum, f, tot):
    """Narrow the interval to [cum, cum+f) out of ``tot``."""
    low, rng, pos, cache, csize = es
    r = np.int64(np.uint32(rng) // np.uint32(tot))
    low += r * cum
    rng = r * f
    while rng < TOP:
        rng <<= 8
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = cache
            while True:
                if pos >= 0:
                    out[pos] = (temp + carry) & 0xFF
                pos += 1
                temp = 0xFF
                csize -= 1
                if csize == 0:
                    break
            cache = (low >> 24) & 0xFF
        csize += 1
        low = (low & 0x00FFFFFF) << 8
    return (low, rng, pos, cache, csize)


@njit(nogil=True, inline="always")
def enc_flush(es, out):
    """Terminate the stream and return the number of bytes written."""
    low, rng, pos, cache, csize = es
    for _ in range(5):
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = cache
            while True:
                if pos >= 0:
                    out[pos] = (temp + carry) & 0xFF
                pos += 1
                temp = 0xFF
                csize -= 1
                if csize == 0:
                    break
            cache = (low >> 24) & 0xFF
        csize += 1
        low = (low & 0x00FFFFFF) << 8
    return pos


@njit(nogil=True, inline="always")
def dec_init(data):
    n = data.shape[0]
    if n < FLUSH_BYTES:
        return (0, MASK32, n, ERR_TRUNCATED)
    code = 0
    for i in range(FLUSH_BYTES):
        code = (code << 8) | data[i]
    return (code, MASK32, FLUSH_BYTES, OK)


@njit(nogil=True, inline="always")
def dec_target(ds, tot):
    """Scaled range and the cumulative count addressed by the code value.

    The count is -1 when the code value lies outside the interval, which
    only happens on corrupt input.
    """
    # both operands fit in 32 bits; 32-bit division is markedly faster
    r = np.int64(np.uint32(ds[1]) // np.uint32(tot))
    v = np.int64(np.uint32(ds[0]) // np.uint32(r))
    if v >= tot:
        v = -1
    return r, v


@njit(nogil=True, inline="always")
def dec_take(ds, data, r, cum, f):
    code, rng, pos, status = ds
    code -= r * cum
    rng = r * f
    n = data.shape[0]
    while rng < TOP:
        if pos >= n:
            status = ERR_TRUNCATED
            break
        code = (code << 8) | data[pos]
        pos += 1
        rng <<= 8
    return (code, rng, pos, status)


# --------------------------------------------------------------------------
# bulk kernels
# --------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _encode_bulk(symbols, contexts, tab, inc, max_total, out):
    es = enc_init()
    for i in range(symbols.shape[0]):
        c = contexts[i]
        s = symbols[i]
        es = enc_put(es, out, model_cum(tab, c, s), tab[c, s], tab[c, TOTAL])
        model_update(tab, c, s, inc, max_total)
    return enc_flush(es, out)


@njit(cache=True, nogil=True)
def _decode_bulk(data, n, tab, inc, max_total, out):
    ds = dec_init(data)
    for i in range(n):
        if ds[3] != OK:
            break
        r, t = dec_target(ds, tab[0, TOTAL])
        if t < 0:
            return ERR_CORRUPT, ds[2]
        s, cum = model_find(tab, 0, t)
        ds = dec_take(ds, data, r, cum, tab[0, s])
        model_update(tab, 0, s, inc, max_total)
        out[i] = s
    return ds[3], ds[2]


@njit(cache=True, nogil=True)
def _decode_one(ds, data, tab, c, inc, max_total):
    r, t = dec_target(ds, tab[c, TOTAL])
    if t < 0:
        return 0, (ds[0], ds[1], ds[2], ERR_CORRUPT)
    s, cum = model_find(tab, c, t)
    ds = dec_take(ds, data, r, cum, tab[c, s])
    model_update(tab, c, s, inc, max_total)
    return s, ds


@njit(cache=True)
def _dec_start(data):
    return dec_init(data)


@njit(cache=True, nogil=True)
def _cross_entropy(symbols, contexts, tab, inc, max_total):
    bits = 0.0
    for i in range(symbols.shape[0]):
        c = contexts[i]
        s = symbols[i]
        bits -= math.log2(tab[c, s] / tab[c, TOTAL])
        model_update(tab, c, s, inc, max_total)
    return bits


@njit(cache=True)
def _rebuild_all(tab):
    for c in range(tab.shape[0]):
        table_rebuild(tab, c)


def encoder_capacity(n_calls: int) -> int:
    """Upper bound on output bytes for ``n_calls`` interval narrowings.

    One narrowing divides the range by at most 2**16, i.e. two bytes.
    """
    return 2 * n_calls + 2 * FLUSH_BYTES


def check_status(status: int, used: int, available: int) -> None:
    if status == ERR_TRUNCATED:
        raise TruncatedBitstream("bitstream ended before all symbols were decoded")
    if status == ERR_CORRUPT:
        raise CorruptPayload("code value outside the coder interval")
    if used != available:
        raise CountMismatch(f"decoder consumed {used} of {available} bytes")


# --------------------------------------------------------------------------
# Python-facing API
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Bitstream:
    data: bytes
    bit_len: int

    def __post_init__(self):
        if not (self.bit_len <= 8 * len(self.data) <= self.bit_len + 7):
            raise ValueError("bit_len inconsistent with byte length")

    @classmethod
    def from_bytes(cls, data) -> "Bitstream":
        return cls(bytes(data), 8 * len(data))

    def __len__(self) -> int:
        return len(self.data)


def new_table(num_contexts: int, init=None) -> np.ndarray:
    tab = np.zeros((num_contexts, TABLE_WIDTH), np.int64)
    tab[:, :ALPHABET] = 1 if init is None else init
    _rebuild_all(tab)
    return tab


class ProbabilityModel:
    """Per-context adaptive frequency tables over the byte alphabet.

    Counts start at 1 (or at ``init``), grow by ``increment`` per coded
    symbol and are halved, rounding up so no count reaches 0, once a
    context's total exceeds ``max_total``. ``increment=0`` is a static
    model.

    ``context_fn`` maps the already-coded history (a uint8 array) to a
    context id in ``range(num_contexts)``; encoder and decoder evaluate it
    on identical histories. Without it every symbol uses context 0.
    """

    def __init__(
        self,
        num_contexts: int = 1,
        increment: int = DEFAULT_INCREMENT,
        max_total: int = DEFAULT_MAX_TOTAL,
        context_fn: Optional[Callable[[np.ndarray], int]] = None,
        init=None,
    ):
        if num_contexts < 1:
            raise ValueError("num_contexts must be >= 1")
        if not 0 < max_total <= DEFAULT_MAX_TOTAL:
            raise ValueError(f"max_total must be in (0, {DEFAULT_MAX_TOTAL}]")
        if increment < 0:
            raise ValueError("increment must be >= 0")
        counts = np.ones(ALPHABET, np.int64) if init is None else np.asarray(init, np.int64)
        counts = np.broadcast_to(counts, (num_contexts, ALPHABET)).copy()
        if (counts < 1).any():
            raise ValueError("every symbol needs a count >= 1")
        if (counts.sum(axis=1) > max_total).any():
            raise ValueError("initial counts exceed max_total")
        self.num_contexts = num_contexts
        self.increment = int(increment)
        self.max_total = int(max_total)
        self.context_fn = context_fn
        self._init = counts
        self.table = new_table(num_contexts, counts)

    @classmethod
    def static(cls, probs: Sequence[float], precision: int = 16) -> "ProbabilityModel":
        """Non-adapting model whose integer counts approximate ``probs``."""
        p = np.asarray(probs, dtype=float)
        if p.shape != (ALPHABET,) or (p < 0).any() or p.sum() <= 0:
            raise ValueError("need 256 non-negative probabilities")
        budget = 1 << precision
        counts = np.maximum(1, np.floor(p / p.sum() * budget)).astype(np.int64)
        # the floor of 1 can overshoot the budget; take it back from the mode
        excess = counts.sum() - budget
        if excess > 0:
            counts[np.argmax(counts)] -= excess
        return cls(1, increment=0, max_total=budget, init=counts)

    def fresh(self) -> "ProbabilityModel":
        """Copy reset to the initial counts, e.g. for the decoding side."""
        return ProbabilityModel(
            self.num_contexts, self.increment, self.max_total, self.context_fn, self._init
        )

    @property
    def counts(self) -> np.ndarray:
        return self.table[:, :ALPHABET]

    def probability(self, symbol: int, context: int = 0) -> float:
        return float(self.table[context, symbol] / self.table[context, TOTAL])

    def digest(self) -> str:
        return hashlib.sha256(self.table.tobytes()).hexdigest()

    def contexts_for(self, symbols) -> np.ndarray:
        if self.context_fn is None:
            return np.zeros(len(symbols), np.int64)
        hist = np.asarray(symbols, np.uint8)
        ctx = np.fromiter(
            (self.context_fn(hist[:i]) for i in range(len(hist))),
            dtype=np.int64,
            count=len(hist),
        )
        if len(ctx) and (ctx.min() < 0 or ctx.max() >= self.num_contexts):
            raise ValueError("context_fn returned an out-of-range context")
        return ctx


def _as_symbols(symbols) -> np.ndarray:
    arr = np.asarray(symbols).ravel()
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError("symbols must be 8-bit values")
    return np.ascontiguousarray(arr, dtype=np.int64)


def encode_symbols(symbols, model: ProbabilityModel) -> Bitstream:
    """Range-code ``symbols``; ``model`` advances exactly as the decoder's will."""
    sym = _as_symbols(symbols)
    ctx = model.contexts_for(sym)
    out = np.empty(encoder_capacity(len(sym)), np.uint8)
    n = _encode_bulk(sym, ctx, model.table, model.increment, model.max_total, out)
    return Bitstream.from_bytes(out[:n])


def decode_symbols(bits, n: int, model: ProbabilityModel) -> np.ndarray:
    """Inverse of :func:`encode_symbols`; returns ``n`` symbols as uint8."""
    raw = bits.data if isinstance(bits, Bitstream) else bytes(bits)
    data = np.frombuffer(raw, np.uint8)
    if n < 0:
        raise CountMismatch("negative symbol count")
    out = np.zeros(n, np.int64)
    if model.context_fn is None:
        status, used = _decode_bulk(data, n, model.table, model.increment,
                                    model.max_total, out)
    else:
        ds = _dec_start(data)
        for i in range(n):
            if ds[3] != OK:
                break
            c = model.context_fn(out[:i].astype(np.uint8))
            if not 0 <= c < model.num_contexts:
                raise ValueError("context_fn returned an out-of-range context")
            out[i], ds = _decode_one(ds, data, model.table, c, model.increment,
                                     model.max_total)
        status, used = ds[3], ds[2]
    check_status(status, used, len(data))
    return out.astype(np.uint8)


def cross_entropy_bits(symbols, model: ProbabilityModel) -> float:
    """Ideal adaptive code length, the sum of -log2 p(x_i | x_<i), in bits.

    Evaluated on a fresh copy of ``model``; the argument is not advanced.
    """
    sym = _as_symbols(symbols)
    m = model.fresh()
    ctx = m.contexts_for(sym)
    return float(_cross_entropy(sym, ctx, m.table, m.increment, m.max_total))
