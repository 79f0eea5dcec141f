"""JIT-compiled hot loops for the autoregressive vocoder.

Everything here is strict IEEE float32 (no fastmath): results are
bitwise-reproducible and independent of inlining or call site, which the
equivalence oracles rely on. Matrix-vector products go through np.dot
(BLAS); np.dot inside a jitted function and at the numpy level produce
identical bits for identical inputs.

Memory layout shared by all kernels:
  hidden state h = [h_A (hh); h_B (hh)], hh = hidden / 2
  recurrent pre-activation L = R @ h, rows = [z (hidden); r (hidden);
  n (hidden)], and within each gate block the A sublanes come first.
  `condb` = conditioning vector + gate bias, same 3*hidden layout.
  Input tables tab*[code] hold W_x @ embed[code] as [z; r; n] sublanes.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _half_step(L, condb, x, h, off, out):
    """One GRU half-update on sublanes [off, off+hh).

    z and r gates see the full pre-activation; the reset gate multiplies
    only the recurrent candidate term, which is what makes reusing L across
    the two half-steps exact.
    """
    H = h.shape[0]
    hh = out.shape[0]
    one = np.float32(1.0)
    for i in range(hh):
        gz = L[off + i] + condb[off + i] + x[i]
        gr = L[H + off + i] + condb[H + off + i] + x[hh + i]
        z = one / (one + np.exp(-gz))
        r = one / (one + np.exp(-gr))
        n = np.tanh(r * L[2 * H + off + i] + condb[2 * H + off + i] + x[2 * hh + i])
        out[i] = z * h[off + i] + (one - z) * n


@njit(cache=True)
def _head(w1, b1, w2, b2, x):
    """Two-layer sample head: relu(w1 x + b1) -> w2 . + b2 -> logits."""
    hid = np.dot(w1, x)
    zero = np.float32(0.0)
    for i in range(hid.shape[0]):
        v = hid[i] + b1[i]
        hid[i] = v if v > zero else zero
    logits = np.dot(w2, hid)
    for i in range(logits.shape[0]):
        logits[i] += b2[i]
    return logits


@njit(cache=True)
def _gumbel_argmax(logits, g):
    """argmax(logits + g); ties break to the lowest index."""
    best = 0
    bv = logits[0] + g[0]
    for k in range(1, logits.shape[0]):
        v = logits[k] + g[k]
        if v > bv:
            bv = v
            best = k
    return best


@njit(cache=True)
def pair_step(R, condb, tab_a, tab_b,
              a_w1, a_b1, a_w2, a_b2,
              b_w1, b_b1, b_w2, b_b2,
              h, prev_code, noise_a, noise_b, recompute_l, l_out):
    """Generate two samples from one (or, for the reference path, two)
    recurrent matvecs.

    Both half-steps read the pre-update h: half B sees h_A's fresh value
    only through the sampled code. With recompute_l the product R @ h is
    redone for half B on the same pre-update h, which is mathematically
    and bitwise identical to reusing it. h is updated in place; l_out
    receives the recurrent pre-activation used by half B.
    """
    hh = h.shape[0] // 2
    L = np.dot(R, h)
    ha = np.empty(hh, np.float32)
    _half_step(L, condb, tab_a[prev_code], h, 0, ha)
    code_t = _gumbel_argmax(_head(a_w1, a_b1, a_w2, a_b2, ha), noise_a)
    if recompute_l:
        L = np.dot(R, h)
    hb = np.empty(hh, np.float32)
    _half_step(L, condb, tab_b[code_t], h, hh, hb)
    code_t1 = _gumbel_argmax(_head(b_w1, b_b1, b_w2, b_b2, hb), noise_b)
    h[:hh] = ha
    h[hh:] = hb
    l_out[:] = L
    return code_t, code_t1


@njit(cache=True)
def frame_kernel(R, condb, tab_a, tab_b,
                 a_w1, a_b1, a_w2, a_b2,
                 b_w1, b_b1, b_w2, b_b2,
                 h, prev_code, noise, codes_out, l_out):
    """Unrolled frame synthesis: pairs_per_frame pair_step calls with a
    fixed per-frame conditioning vector. Returns the last emitted code."""
    classes = a_b2.shape[0]
    pairs = codes_out.shape[0] // 2
    code = prev_code
    cur = 0
    for p in range(pairs):
        na = noise[cur:cur + classes]
        nb = noise[cur + classes:cur + 2 * classes]
        cur += 2 * classes
        c0, c1 = pair_step(R, condb, tab_a, tab_b,
                           a_w1, a_b1, a_w2, a_b2,
                           b_w1, b_b1, b_w2, b_b2,
                           h, code, na, nb, False, l_out)
        codes_out[2 * p] = c0
        codes_out[2 * p + 1] = c1
        code = c1
    return code


@njit(cache=True)
def frame_kernel_nocache(R, cond_w, cond_bias, gate_bias, frame,
                         tab_a, tab_b,
                         a_w1, a_b1, a_w2, a_b2,
                         b_w1, b_b1, b_w2, b_b2,
                         h, prev_code, noise, codes_out, l_out):
    """Frame synthesis with the conditioning cache disabled: the
    conditioning matvec is recomputed for every pair. Emits exactly the
    same codes as frame_kernel (the recomputed vector is identical)."""
    classes = a_b2.shape[0]
    pairs = codes_out.shape[0] // 2
    g3 = gate_bias.shape[0]
    condb = np.empty(g3, np.float32)
    code = prev_code
    cur = 0
    for p in range(pairs):
        cv = np.dot(cond_w, frame)
        for i in range(g3):
            condb[i] = (cv[i] + cond_bias[i]) + gate_bias[i]
        na = noise[cur:cur + classes]
        nb = noise[cur + classes:cur + 2 * classes]
        cur += 2 * classes
        c0, c1 = pair_step(R, condb, tab_a, tab_b,
                           a_w1, a_b1, a_w2, a_b2,
                           b_w1, b_b1, b_w2, b_b2,
                           h, code, na, nb, False, l_out)
        codes_out[2 * p] = c0
        codes_out[2 * p + 1] = c1
        code = c1
    return code


@njit(cache=True)
def baseline_frame_kernel(R, condb, tab, w1, b1, w2, b2,
                          h, prev_code, noise, codes_out):
    """Conventional per-sample loop: one full-width GRU update and one
    full recurrent matvec per sample. Used only as the speed baseline."""
    H = h.shape[0]
    classes = b2.shape[0]
    one = np.float32(1.0)
    code = prev_code
    cur = 0
    hn = np.empty(H, np.float32)
    for t in range(codes_out.shape[0]):
        L = np.dot(R, h)
        x = tab[code]
        for i in range(H):
            gz = L[i] + condb[i] + x[i]
            gr = L[H + i] + condb[H + i] + x[H + i]
            z = one / (one + np.exp(-gz))
            r = one / (one + np.exp(-gr))
            n = np.tanh(r * L[2 * H + i] + condb[2 * H + i] + x[2 * H + i])
            hn[i] = z * h[i] + (one - z) * n
        h[:] = hn
        code = _gumbel_argmax(_head(w1, b1, w2, b2, h), noise[cur:cur + classes])
        cur += classes
        codes_out[t] = code
    return code


_warmed = False


def warmup(hidden: int = 8, classes: int = 4) -> None:
    """Force compilation of all kernels (tiny shapes) so timed sections
    never include JIT cost. Cached to disk after the first build."""
    global _warmed
    if _warmed:
        return
    _warmed = True
    hh = hidden // 2
    f32 = np.float32
    R = np.zeros((3 * hidden, hidden), f32)
    condb = np.zeros(3 * hidden, f32)
    tab_a = np.zeros((classes, 3 * hh), f32)
    tab_b = np.zeros((classes, 3 * hh), f32)
    tab_f = np.zeros((classes, 3 * hidden), f32)
    w1 = np.zeros((4, hh), f32)
    b1 = np.zeros(4, f32)
    w2 = np.zeros((classes, 4), f32)
    b2 = np.zeros(classes, f32)
    fw1 = np.zeros((4, hidden), f32)
    h = np.zeros(hidden, f32)
    noise = np.zeros(4 * classes, f32)
    codes = np.empty(4, np.int64)
    l_out = np.empty(3 * hidden, f32)
    pair_step(R, condb, tab_a, tab_b, w1, b1, w2, b2, w1, b1, w2, b2,
              h, 0, noise[:classes], noise[classes:2 * classes], True, l_out)
    frame_kernel(R, condb, tab_a, tab_b, w1, b1, w2, b2, w1, b1, w2, b2,
                 h, 0, noise, codes, l_out)
    cond_w = np.zeros((3 * hidden, 2), f32)
    cond_bias = np.zeros(3 * hidden, f32)
    frame = np.zeros(2, f32)
    frame_kernel_nocache(R, cond_w, cond_bias, condb, frame, tab_a, tab_b,
                         w1, b1, w2, b2, w1, b1, w2, b2,
                         h, 0, noise, codes, l_out)
    baseline_frame_kernel(R, condb, tab_f, fw1, b1, w2, b2, h, 0, noise, codes)
