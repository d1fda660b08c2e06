"""Sum-product syndrome decoding on a :class:`~mdarecon.pcm.PCMWindow`.

LLR sign convention: positive favours bit 0; an LLR of exactly zero
decodes to 0.  The target syndrome enters through a sign flip of the
check-to-variable messages of every check whose syndrome bit is 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .pcm import PCMWindow

_CONVERGED, _MAX_ITER, _EARLY = 0, 1, 2


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    EARLY_TERMINATED = "early_terminated"


_TERMINATIONS = (Termination.CONVERGED, Termination.MAX_ITERATIONS, Termination.EARLY_TERMINATED)


@dataclass(frozen=True)
class DecoderConfig:
    """Iteration budget and numerical settings.

    ``check_rule`` is ``"spa"`` (exact tanh rule) or ``"minsum"``.
    """

    l_max: int = 500
    et_enabled: bool = False
    et_window: int = 5
    llr_clamp: float = 30.0
    check_rule: str = "spa"

    def __post_init__(self):
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")
        if self.et_window < 2:
            raise ValueError("et_window must be >= 2")
        if not self.llr_clamp > 0:
            raise ValueError("llr_clamp must be positive")
        if self.check_rule not in ("spa", "minsum"):
            raise ValueError(f"unknown check_rule {self.check_rule!r}")


@dataclass
class DecodeOutcome:
    success: bool
    iterations_used: int
    termination: Termination
    decoded_bits: np.ndarray
    posterior_llrs: np.ndarray
    edge_messages: np.ndarray | None = None


@njit(cache=True)
def _clip(x, c):
    if x > c:
        return c
    if x < -c:
        return -c
    return x


@njit(cache=True)
def _spa_kernel(row_ptr, col_idx, var_ptr, var_edges, intrinsic, target,
                l_max, et_window, clamp, minsum, init_c2v):
    m = row_ptr.shape[0] - 1
    n = var_ptr.shape[0] - 1
    n_edges = col_idx.shape[0]

    max_deg = 0
    for i in range(m):
        deg = row_ptr[i + 1] - row_ptr[i]
        if deg > max_deg:
            max_deg = deg
    fwd = np.empty(max_deg + 1)
    bwd = np.empty(max_deg + 1)
    t = np.empty(max_deg)

    v2c = np.empty(n_edges)
    c2v = np.zeros(n_edges)
    for e in range(init_c2v.shape[0]):
        c2v[e] = init_c2v[e]
    intr = np.empty(n)
    for v in range(n):
        intr[v] = _clip(intrinsic[v], clamp)

    hard = np.zeros(n, dtype=np.uint8)
    post = np.empty(n)
    for v in range(n):
        total = intr[v]
        for q in range(var_ptr[v], var_ptr[v + 1]):
            total += c2v[var_edges[q]]
        for q in range(var_ptr[v], var_ptr[v + 1]):
            e = var_edges[q]
            v2c[e] = _clip(total - c2v[e], clamp)
        post[v] = _clip(total, clamp)
        hard[v] = 1 if total < 0.0 else 0

    stable = 1
    it = 0
    status = _MAX_ITER
    atanh_cap = np.tanh(0.5 * clamp)
    while it < l_max:
        it += 1
        # check nodes
        for i in range(m):
            start = row_ptr[i]
            deg = row_ptr[i + 1] - start
            flip = -1.0 if target[i] else 1.0
            if deg == 1:
                c2v[start] = flip * clamp
                continue
            if minsum:
                sgn = flip
                min1 = np.inf
                min2 = np.inf
                pos = -1
                for k in range(deg):
                    x = v2c[start + k]
                    if x < 0.0:
                        sgn = -sgn
                        x = -x
                    if x < min1:
                        min2 = min1
                        min1 = x
                        pos = k
                    elif x < min2:
                        min2 = x
                for k in range(deg):
                    x = v2c[start + k]
                    s = sgn
                    if x < 0.0:
                        s = -s
                    mag = min2 if k == pos else min1
                    c2v[start + k] = _clip(s * mag, clamp)
                continue
            for k in range(deg):
                # tanh(x/2) via one exp; cheaper than np.tanh
                x = v2c[start + k]
                ex = np.exp(-abs(x))
                th = (1.0 - ex) / (1.0 + ex)
                t[k] = -th if x < 0.0 else th
            fwd[0] = 1.0
            for k in range(deg):
                fwd[k + 1] = fwd[k] * t[k]
            bwd[deg] = 1.0
            for k in range(deg - 1, -1, -1):
                bwd[k] = bwd[k + 1] * t[k]
            for k in range(deg):
                p = fwd[k] * bwd[k + 1]
                if p >= atanh_cap:
                    val = clamp
                elif p <= -atanh_cap:
                    val = -clamp
                else:
                    val = np.log((1.0 + p) / (1.0 - p))
                c2v[start + k] = flip * val
        # variable nodes
        changed = False
        for v in range(n):
            total = intr[v]
            for q in range(var_ptr[v], var_ptr[v + 1]):
                total += c2v[var_edges[q]]
            for q in range(var_ptr[v], var_ptr[v + 1]):
                e = var_edges[q]
                v2c[e] = _clip(total - c2v[e], clamp)
            post[v] = _clip(total, clamp)
            b = 1 if total < 0.0 else 0
            if b != hard[v]:
                changed = True
                hard[v] = b
        # syndrome test
        ok = True
        for i in range(m):
            acc = 0
            for e in range(row_ptr[i], row_ptr[i + 1]):
                acc ^= hard[col_idx[e]]
            if acc != target[i]:
                ok = False
                break
        if ok:
            status = _CONVERGED
            break
        if changed or it == 1:
            stable = 1
        else:
            stable += 1
        if et_window > 0 and stable >= et_window:
            status = _EARLY
            break
    return status, it, hard, post, c2v


def spa_decode(w: PCMWindow, channel_llrs, target_syndrome, cfg: DecoderConfig,
               initial_llrs=None, initial_messages=None) -> DecodeOutcome:
    """Flooding-schedule sum-product decoding towards ``target_syndrome``.

    ``initial_llrs``, when given, replace the channel LLRs as intrinsic
    information (LLR inheritance); edge messages always start from zero.
    """
    intrinsic = channel_llrs if initial_llrs is None else initial_llrs
    intrinsic = np.ascontiguousarray(intrinsic, dtype=np.float64)
    target = np.ascontiguousarray(target_syndrome, dtype=np.uint8)
    if intrinsic.shape != (w.n,):
        raise ValueError(f"LLR length {intrinsic.shape} does not match window n'={w.n}")
    if np.shape(channel_llrs) != (w.n,):
        raise ValueError(f"channel LLR length {np.shape(channel_llrs)} does not match window n'={w.n}")
    if target.shape != (w.m,):
        raise ValueError(f"syndrome length {target.shape} does not match window m'={w.m}")
    if not np.all(np.isfinite(intrinsic)):
        raise ValueError("non-finite LLR input")
    s = w.structure
    init = np.zeros(0) if initial_messages is None else np.ascontiguousarray(initial_messages, dtype=np.float64)
    if init.shape[0] > s.col_idx.shape[0]:
        raise ValueError("more initial edge messages than edges in the window")
    status, iters, hard, post, c2v = _spa_kernel(
        s.row_ptr, s.col_idx, s.var_ptr, s.var_edges, intrinsic, target,
        cfg.l_max, cfg.et_window if cfg.et_enabled else 0, float(cfg.llr_clamp),
        cfg.check_rule == "minsum", init)
    return DecodeOutcome(success=status == _CONVERGED, iterations_used=int(iters),
                         termination=_TERMINATIONS[status], decoded_bits=hard, posterior_llrs=post,
                         edge_messages=c2v)


def inherit_llrs(prev: DecodeOutcome, new_len: int, fresh_tail_llrs) -> np.ndarray:
    """Previous posteriors followed by fresh channel LLRs for newly added positions."""
    head = prev.posterior_llrs
    tail = np.asarray(fresh_tail_llrs, dtype=np.float64)
    if new_len < head.shape[0] or tail.shape != (new_len - head.shape[0],):
        raise ValueError("fresh tail length must equal new_len - len(previous posteriors)")
    return np.concatenate([head, tail])
