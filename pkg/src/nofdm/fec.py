"""Binary LDPC codes: construction, alist I/O, encoding and sum-product decoding.

The default code is quasi-cyclic with a 4 x 24 base matrix (rate 5/6, 20 %
overhead). Its parity part is the dual-diagonal structure used by IEEE
802.11n/802.16e codes, which admits linear-time systematic encoding; the
information part uses weight-3 circulant columns whose shifts are drawn from
a seeded generator with 4-cycles rejected.

Decoding is flooding-schedule sum-product in the LLR domain (positive LLR
favours bit 0), vectorised over a batch of codewords.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .constellation import llr_qam16, llr_qpsk

__all__ = [
    "DecodeResult",
    "LdpcCode",
    "build_qc_code",
    "has_4cycle",
    "default_code",
    "ldpc_decode",
    "ldpc_encode",
    "llr_qam16",
    "llr_qpsk",
    "read_alist",
    "segment_decode",
    "write_alist",
]

_TANH_CLIP = 1 - 1e-15
_LLR_CLIP = 60.0


@dataclass(frozen=True, eq=False)
class LdpcCode:
    """Sparse parity-check code with a systematic encoder.

    ``rows``/``cols`` list the non-zero entries of H. ``info_idx`` and
    ``parity_idx`` give codeword positions for information and parity bits.
    """

    n: int
    m: int
    rows: np.ndarray
    cols: np.ndarray
    info_idx: np.ndarray
    parity_idx: np.ndarray
    name: str = "ldpc"
    _qc: dict | None = field(default=None, repr=False)
    _gen: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return int(self.info_idx.size)

    @property
    def rate(self) -> float:
        return self.k / self.n

    def dense_h(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        H[self.rows, self.cols] = 1
        return H

    def syndrome(self, bits) -> np.ndarray:
        """H x^T over GF(2) for ``bits`` of shape ``(..., n)``."""
        bits = np.asarray(bits, dtype=np.uint8)
        lead = bits.shape[:-1]
        flat = bits.reshape(-1, self.n)
        out = np.zeros((flat.shape[0], self.m), dtype=np.int64)
        for b in range(flat.shape[0]):
            out[b] = np.bincount(self.rows, weights=flat[b, self.cols], minlength=self.m)
        return (out % 2).astype(np.uint8).reshape(lead + (self.m,))

    def is_codeword(self, bits) -> np.ndarray:
        return ~np.any(self.syndrome(bits), axis=-1)

    @classmethod
    def from_dense(cls, H, name: str = "ldpc") -> "LdpcCode":
        H = np.asarray(H, dtype=np.uint8) & 1
        rows, cols = np.nonzero(H)
        m, n = H.shape
        pivots, gen = _gf2_systematic(H)
        info = np.setdiff1d(np.arange(n), pivots)
        return cls(n, m, rows, cols, info, np.asarray(pivots), name, None, gen)

    # -- decoder structure, cached per instance ------------------------------------
    def _decoder_tables(self):
        cache = self.__dict__.get("_tables")
        if cache is None:
            order = np.lexsort((self.cols, self.rows))
            rows, cols = self.rows[order], self.cols[order]
            deg = np.bincount(rows, minlength=self.m)
            dmax = int(deg.max())
            slot = np.arange(rows.size) - np.repeat(np.concatenate(([0], np.cumsum(deg)[:-1])), deg)
            cache = {"rows": rows, "cols": cols, "dmax": dmax, "slot": slot}
            object.__setattr__(self, "_tables", cache)
        return cache


def _gf2_systematic(H: np.ndarray):
    """Row-reduce H over GF(2), preferring pivots in the rightmost columns.

    Returns the pivot (parity) columns and a dense matrix R such that parity
    bits equal ``R @ info_bits mod 2``.
    """
    m, n = H.shape
    A = H[:, ::-1].copy()  # search columns right-to-left
    pivcols = []
    r = 0
    for c in range(n):
        if r == m:
            break
        nz = np.nonzero(A[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            A[[r, p]] = A[[p, r]]
        hits = np.nonzero(A[:, c])[0]
        hits = hits[hits != r]
        if hits.size:
            A[hits] ^= A[r]
        pivcols.append(c)
        r += 1
    A = A[:r]
    piv = np.array([n - 1 - c for c in pivcols])
    info = np.setdiff1d(np.arange(n), piv)
    Anat = A[:, ::-1]
    # row i: x[piv[i]] + sum_j Anat[i, info_j] x[info_j] = 0
    R = Anat[:, info]
    return piv, R


def _circulant_entries(shift: int, z: int):
    r = np.arange(z)
    return r, (r + shift) % z


def _pairs(col):
    nz = np.nonzero(col >= 0)[0]
    for a in range(nz.size):
        for b in range(a + 1, nz.size):
            yield int(nz[a]), int(nz[b])


def _collides(col, diffs, z) -> bool:
    return any((col[i1] - col[i2]) % z in diffs[(i1, i2)] for i1, i2 in _pairs(col))


def _record_diffs(col, diffs, z):
    for i1, i2 in _pairs(col):
        diffs[(i1, i2)].add(int((col[i1] - col[i2]) % z))


def has_4cycle(code: "LdpcCode") -> bool:
    """True if two columns of H share two rows (girth 4)."""
    H = code.dense_h().astype(np.int32)
    overlap = H.T @ H
    np.fill_diagonal(overlap, 0)
    return bool((overlap > 1).any())


def build_qc_code(z: int = 400, kb: int = 20, mb: int = 4, col_weight: int = 3, seed: int = 2024) -> LdpcCode:
    """Quasi-cyclic code with an ``mb x (kb + mb)`` base matrix and lifting size ``z``.

    Defaults give n = 9600, k = 8000 (rate 5/6).
    """
    if mb < 3 or col_weight > mb:
        raise ValueError("need mb >= 3 and col_weight <= mb")
    rng = np.random.default_rng(seed)
    nb = kb + mb
    mid = mb // 2
    base = -np.ones((mb, nb), dtype=int)
    # parity column 0: shifts 1 / 0 / 1; remaining parity columns dual-diagonal
    base[0, kb] = 1
    base[mid, kb] = 0
    base[mb - 1, kb] = 1
    for t in range(mb - 1):
        base[t, kb + 1 + t] = 0
        base[t + 1, kb + 1 + t] = 0
    # shift differences already used by each row pair; a repeat closes a 4-cycle
    diffs = {(i1, i2): set() for i1 in range(mb) for i2 in range(i1 + 1, mb)}
    for j in range(kb, nb):
        _record_diffs(base[:, j], diffs, z)
    for j in range(kb):
        rows_j = np.sort(rng.permutation(mb)[:col_weight])
        for _attempt in range(500):
            col = -np.ones(mb, dtype=int)
            col[rows_j] = rng.integers(z, size=col_weight)
            if not _collides(col, diffs, z):
                break
        else:
            raise RuntimeError(f"no 4-cycle free shifts for column {j}; increase z")
        base[:, j] = col
        _record_diffs(col, diffs, z)
    rows, cols = [], []
    for i in range(mb):
        for j in range(nb):
            if base[i, j] >= 0:
                r, c = _circulant_entries(int(base[i, j]), z)
                rows.append(i * z + r)
                cols.append(j * z + c)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    n = nb * z
    info = np.arange(kb * z)
    parity = np.arange(kb * z, n)
    qc = {"base": base, "z": z, "kb": kb, "mb": mb}
    return LdpcCode(n, mb * z, rows, cols, info, parity, f"qc-{mb}x{nb}-z{z}", qc, None)


@lru_cache(maxsize=8)
def default_code(z: int = 400, seed: int = 2024) -> LdpcCode:
    return build_qc_code(z=z, seed=seed)


def _cshift(v: np.ndarray, s: int) -> np.ndarray:
    # (P^s v)[r] = v[(r + s) mod z] for the circulant used in _circulant_entries
    return np.roll(v, -s, axis=-1)


def _encode_qc(info: np.ndarray, code: LdpcCode) -> np.ndarray:
    qc = code._qc
    base, z, kb, mb = qc["base"], qc["z"], qc["kb"], qc["mb"]
    B = info.shape[0]
    blocks = info.reshape(B, kb, z)
    lam = np.zeros((B, mb, z), dtype=np.uint8)
    for i in range(mb):
        for j in range(kb):
            if base[i, j] >= 0:
                lam[:, i] ^= _cshift(blocks[:, j], int(base[i, j]))
    p = np.zeros((B, mb, z), dtype=np.uint8)
    p0 = np.bitwise_xor.reduce(lam, axis=1)
    # the weight-3 column's end shifts cancel in the sum, its middle entry is I
    p[:, 0] = p0
    h0 = base[:, kb]
    prev = lam[:, 0] ^ _cshift(p0, int(h0[0]))
    p[:, 1] = prev
    for i in range(1, mb - 1):
        nxt = lam[:, i] ^ prev
        if h0[i] >= 0:
            nxt ^= _cshift(p0, int(h0[i]))
        p[:, i + 1] = nxt
        prev = nxt
    return p.reshape(B, mb * z)


def ldpc_encode(info_bits, code: LdpcCode) -> np.ndarray:
    """Systematic encoding of ``(..., k)`` information bits to ``(..., n)`` codewords."""
    info = np.asarray(info_bits, dtype=np.uint8)
    if info.shape[-1] != code.k:
        raise ValueError(f"expected {code.k} information bits, got {info.shape[-1]}")
    lead = info.shape[:-1]
    flat = info.reshape(-1, code.k) & 1
    if code._qc is not None:
        parity = _encode_qc(flat, code)
    else:
        parity = (flat.astype(np.int64) @ code._gen.T.astype(np.int64)) % 2
    cw = np.zeros((flat.shape[0], code.n), dtype=np.uint8)
    cw[:, code.info_idx] = flat
    cw[:, code.parity_idx] = parity
    return cw.reshape(lead + (code.n,))


@dataclass
class DecodeResult:
    bits: np.ndarray
    iterations: np.ndarray
    parity_ok: np.ndarray
    llrs: np.ndarray
    info_bits: np.ndarray


def _spa(llr_ch: np.ndarray, code: LdpcCode, iters: int):
    t = code._decoder_tables()
    rows, cols, dmax, slot = t["rows"], t["cols"], t["dmax"], t["slot"]
    B, n = llr_ch.shape
    E = rows.size
    c2v = np.zeros((B, E))
    post = llr_ch.copy()
    hard = (post < 0).astype(np.uint8)
    used = np.zeros(B, dtype=int)
    ok = _parity_ok(hard, rows, cols, code.m)
    active = ~ok
    for it in range(iters):
        if not active.any():
            break
        a = np.nonzero(active)[0]
        v2c = post[a][:, cols] - c2v[a]
        tv = np.tanh(np.clip(v2c, -_LLR_CLIP, _LLR_CLIP) / 2)
        grid = np.ones((a.size, code.m, dmax))
        grid[:, rows, slot] = tv
        pre = np.ones_like(grid)
        pre[:, :, 1:] = np.cumprod(grid[:, :, :-1], axis=2)
        suf = np.ones_like(grid)
        suf[:, :, :-1] = np.cumprod(grid[:, :, :0:-1], axis=2)[:, :, ::-1]
        excl = np.clip((pre * suf)[:, rows, slot], -_TANH_CLIP, _TANH_CLIP)
        new_c2v = 2 * np.arctanh(excl)
        c2v[a] = new_c2v
        idx = (np.arange(a.size)[:, None] * n + cols).ravel()
        sums = np.bincount(idx, weights=new_c2v.ravel(), minlength=a.size * n).reshape(a.size, n)
        post[a] = llr_ch[a] + sums
        hard[a] = post[a] < 0
        used[a] = it + 1
        ok[a] = _parity_ok(hard[a], rows, cols, code.m)
        active = ~ok
    return hard, post, used, ok


def _parity_ok(hard: np.ndarray, rows, cols, m) -> np.ndarray:
    B = hard.shape[0]
    if B == 0:
        return np.zeros(0, dtype=bool)
    idx = (np.arange(B)[:, None] * m + rows[None, :]).ravel()
    s = np.bincount(idx, weights=hard[:, cols].ravel(), minlength=B * m).reshape(B, m)
    return ~np.any(s.astype(np.int64) % 2, axis=1)


def _prep_llrs(llrs, code: LdpcCode):
    llr = np.asarray(llrs, dtype=float)
    if llr.shape[-1] != code.n:
        raise ValueError(f"expected {code.n} LLRs per block, got {llr.shape[-1]}")
    if not np.all(np.isfinite(llr)):
        raise ValueError("LLRs must be finite")
    return llr.shape[:-1], np.clip(llr.reshape(-1, code.n), -_LLR_CLIP, _LLR_CLIP)


def ldpc_decode(llrs, code: LdpcCode, max_iters: int = 50) -> DecodeResult:
    """Sum-product decoding with early exit once the syndrome is zero."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    lead, llr = _prep_llrs(llrs, code)
    hard, post, used, ok = _spa(llr, code, max_iters)
    bits = hard.reshape(lead + (code.n,))
    return DecodeResult(bits, used.reshape(lead), ok.reshape(lead), post.reshape(lead + (code.n,)), bits[..., code.info_idx])


def segment_decode(llrs, code: LdpcCode, inner_iters: int, budget: int | None = None) -> DecodeResult:
    """Partial decode used inside the iterative ICI canceller.

    Runs at most ``inner_iters`` sum-product iterations (stopping early only if
    the syndrome clears) and returns posteriors and hard decisions. No decoder
    state is carried over; the caller decodes again afterwards with the
    remaining ``budget - inner_iters`` iterations. ``inner_iters = 0`` returns
    the channel LLRs and their hard decisions.
    """
    if inner_iters < 0:
        raise ValueError("inner_iters must be non-negative")
    if budget is not None and inner_iters >= budget:
        raise ValueError(f"inner_iters ({inner_iters}) must leave iterations of the budget ({budget})")
    if inner_iters == 0:
        lead, llr = _prep_llrs(llrs, code)
        hard = (llr < 0).astype(np.uint8)
        ok = _parity_ok(hard, *_rc(code), code.m)
        bits = hard.reshape(lead + (code.n,))
        return DecodeResult(bits, np.zeros(lead, int), ok.reshape(lead), llr.reshape(lead + (code.n,)), bits[..., code.info_idx])
    return ldpc_decode(llrs, code, inner_iters)


def _rc(code: LdpcCode):
    t = code._decoder_tables()
    return t["rows"], t["cols"]


# -- alist ------------------------------------------------------------------------


def write_alist(code_or_h, path=None) -> str:
    """Serialize H in MacKay's alist layout (zero-padded index lists)."""
    if isinstance(code_or_h, LdpcCode):
        rows, cols, m, n = code_or_h.rows, code_or_h.cols, code_or_h.m, code_or_h.n
    else:
        H = np.asarray(code_or_h)
        m, n = H.shape
        rows, cols = np.nonzero(H)
    col_lists = [[] for _ in range(n)]
    row_lists = [[] for _ in range(m)]
    for r, c in sorted(zip(rows.tolist(), cols.tolist())):
        row_lists[r].append(c + 1)
    for c, r in sorted(zip(cols.tolist(), rows.tolist())):
        col_lists[c].append(r + 1)
    cmax = max(len(x) for x in col_lists)
    rmax = max(len(x) for x in row_lists)
    buf = io.StringIO()
    buf.write(f"{n} {m}\n{cmax} {rmax}\n")
    buf.write(" ".join(str(len(x)) for x in col_lists) + "\n")
    buf.write(" ".join(str(len(x)) for x in row_lists) + "\n")
    for lst in col_lists:
        buf.write(" ".join(str(v) for v in lst + [0] * (cmax - len(lst))) + "\n")
    for lst in row_lists:
        buf.write(" ".join(str(v) for v in lst + [0] * (rmax - len(lst))) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


def read_alist(source) -> np.ndarray:
    """Parse an alist file (path or text) into a dense 0/1 parity-check matrix."""
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source) as fh:
            text = fh.read()
    else:
        text = str(source)
    lines = [ln.split() for ln in text.strip().splitlines()]
    try:
        return _parse_alist(lines)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed alist: {exc}") from exc


def _parse_alist(lines) -> np.ndarray:
    n, m = int(lines[0][0]), int(lines[0][1])
    col_w = [int(v) for v in lines[2]]
    if len(col_w) != n:
        raise ValueError("alist column-weight line does not match n")
    H = np.zeros((m, n), dtype=np.uint8)
    for c in range(n):
        for v in lines[4 + c][: col_w[c]]:
            if int(v) > 0:
                H[int(v) - 1, c] = 1
    row_w = [int(v) for v in lines[3]]
    for r in range(m):
        entries = [int(v) for v in lines[4 + n + r][: row_w[r]] if int(v) > 0]
        if sorted(entries) != sorted((np.nonzero(H[r])[0] + 1).tolist()):
            raise ValueError(f"alist row {r} disagrees with the column lists")
    return H
