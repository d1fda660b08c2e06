"""Single- and multiple-decoding-attempt reconciliation campaigns.

A frame is decoded at rate ``r_1``; on failure the rate is lowered by
raptor extension (``MDA_b``) or bit revelation (``MDA_a``) and decoding is
retried, up to ``k`` attempts.  Campaigns aggregate conditional frame error
rates, iteration counts and leakage into the key-fraction metrics.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .channel import ChannelParams, FrameData, channel_llrs, mutual_info, sigma_from_snr, simulate_frame
from .decoder import DecodeOutcome, DecoderConfig, Termination, inherit_llrs, spa_decode
from .metrics import AttemptRecord, HolevoProvider
from .pcm import PCMWindow, SparsePCM, syndrome, window
from .rate_adapt import (apply_revelation, d_for_target_raptor, d_for_target_reveal,
                         extend_raptor, reveal_bits)

log = logging.getLogger(__name__)

SCHEMES = ("SDA", "MDA_a", "MDA_b")


class CapabilityError(ValueError):
    """The matrix cannot realize the scheduled rates."""


@dataclass(frozen=True)
class ProtocolConfig:
    """Attempt schedule and feature flags.

    Rates come either from ``rates`` directly or from ``beta1`` and
    ``dbeta_rel`` (``beta_i = beta1 * (1 - dbeta_rel[i-2])``) evaluated at
    the campaign's ``I_AB``.
    """

    scheme: str = "SDA"
    k: int = 1
    rates: tuple[float, ...] | None = None
    beta1: float | None = None
    dbeta_rel: tuple[float, ...] = ()
    l_max: tuple[int, ...] = (500,)
    llr_inheritance: bool = False
    inheritance_mode: str = "messages"
    early_termination: bool = False
    n_frames: int = 2400
    campaign_seed: int = 0
    matched_seeds: bool = True
    llr_clamp: float = 30.0
    reveal_llr_mag: float | None = None
    check_rule: str = "spa"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.scheme == "SDA" and self.k != 1:
            raise ValueError("SDA requires k = 1")
        if self.scheme != "SDA" and self.k < 2:
            raise ValueError(f"{self.scheme} requires k >= 2")
        if (self.rates is None) == (self.beta1 is None):
            raise ValueError("give exactly one of rates or beta1")
        if self.rates is not None:
            if len(self.rates) != self.k:
                raise ValueError(f"need {self.k} rates, got {len(self.rates)}")
            # equal consecutive rates are a degenerate repeat, kept for diagnostics
            if any(b > a for a, b in zip(self.rates, self.rates[1:])):
                raise ValueError("attempt rates must not increase")
        else:
            if len(self.dbeta_rel) != self.k - 1:
                raise ValueError(f"need {self.k - 1} dbeta_rel values, got {len(self.dbeta_rel)}")
            steps = (0.0,) + tuple(self.dbeta_rel)
            if any(b < a for a, b in zip(steps, steps[1:])) or (steps[-1] >= 1):
                raise ValueError("dbeta_rel must be non-decreasing in [0, 1)")
        if len(self.l_max) == 1 and self.k > 1:
            object.__setattr__(self, "l_max", tuple(self.l_max) * self.k)
        if len(self.l_max) != self.k:
            raise ValueError(f"need {self.k} iteration budgets, got {len(self.l_max)}")
        if any(b < 1 for b in self.l_max):
            raise ValueError("iteration budgets must be >= 1")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.inheritance_mode not in ("messages", "posteriors"):
            raise ValueError("inheritance_mode must be 'messages' or 'posteriors'")

    def target_rates(self, i_ab: float) -> tuple[float, ...]:
        if self.rates is not None:
            return tuple(self.rates)
        betas = [self.beta1] + [self.beta1 * (1.0 - s) for s in self.dbeta_rel]
        return tuple(b * i_ab / 2.0 for b in betas)

    def decoder_config(self, attempt: int) -> DecoderConfig:
        return DecoderConfig(l_max=self.l_max[attempt], et_enabled=self.early_termination,
                             llr_clamp=self.llr_clamp, check_rule=self.check_rule)

    @property
    def reveal_magnitude(self) -> float:
        return self.llr_clamp if self.reveal_llr_mag is None else self.reveal_llr_mag


@dataclass(frozen=True)
class AttemptPlan:
    """Per-attempt window depth (raptor) or cumulative revealed count (revelation)."""

    scheme: str
    d1: int
    steps: tuple[int, ...]
    rates: tuple[float, ...]

    @property
    def max_window_d(self) -> int:
        return self.steps[-1] if self.scheme == "MDA_b" and self.steps else self.d1


def plan_attempts(cfg: ProtocolConfig, pcm: SparsePCM, i_ab: float) -> AttemptPlan:
    targets = cfg.target_rates(i_ab)
    try:
        d1 = d_for_target_raptor(pcm.base_n, pcm.base_m, targets[0], pcm.max_d)
    except ValueError as exc:
        raise CapabilityError(f"first-attempt rate {targets[0]:.6g}: {exc}") from None
    w1 = window(pcm, d1)
    rates = [w1.rate]
    steps: list[int] = []
    for r in targets[1:]:
        try:
            if cfg.scheme == "MDA_b":
                d = d_for_target_raptor(pcm.base_n, pcm.base_m, r, pcm.max_d)
                rates.append(window(pcm, d).rate)
            else:
                d = d_for_target_reveal(w1.n, w1.m, r)
                rates.append((w1.n - w1.m - d) / w1.n)
        except ValueError as exc:
            raise CapabilityError(f"rate {r:.6g}: {exc}") from None
        steps.append(d)
    if any(b > a for a, b in zip(rates, rates[1:])):
        raise CapabilityError(f"achieved rates {rates} increase between attempts")
    return AttemptPlan(cfg.scheme, d1, tuple(steps), tuple(rates))


@dataclass(frozen=True)
class AttemptLog:
    index: int
    d: int
    rate: float
    iterations: int
    termination: Termination
    success: bool
    communicated_bits: int


@dataclass
class FrameResult:
    attempts: list[AttemptLog]
    leak_bits: int
    n_bits_final: int
    succeeded_at: int | None
    undetected_error: bool = False
    prefix_audit_ok: bool = True

    @property
    def iterations(self) -> int:
        return sum(a.iterations for a in self.attempts)

    @property
    def rate_final(self) -> float:
        return self.attempts[-1].rate

    @property
    def leak_per_symbol(self) -> float:
        return self.leak_bits / (self.n_bits_final / 2.0)


def frame_seed(cfg: ProtocolConfig, frame_index: int, grid_index: int = 0) -> np.random.SeedSequence:
    key = (frame_index,) if cfg.matched_seeds else (grid_index, frame_index)
    return np.random.SeedSequence(cfg.campaign_seed, spawn_key=key)


def make_frame(pcm: SparsePCM, seed: np.random.SeedSequence, sigma: float) -> tuple[FrameData, np.random.Generator]:
    """Frame over all ``n_total`` columns (the tail is the raptor reserve) plus a revelation RNG."""
    ch_seed, rev_seed = seed.spawn(2)
    frame = simulate_frame(pcm.n_total - (pcm.n_total % 2), pcm.n_total % 2, sigma,
                           np.random.default_rng(ch_seed))
    return frame, np.random.default_rng(rev_seed)


def run_frame(cfg: ProtocolConfig, pcm: SparsePCM, frame: FrameData, sigma: float,
              plan: AttemptPlan, rev_rng: np.random.Generator | None = None,
              first_outcome: DecodeOutcome | None = None) -> tuple[FrameResult, DecodeOutcome]:
    """Reconcile one frame.

    ``frame`` must cover at least the deepest scheduled window.  Returns
    the frame result and the first attempt's outcome (for caching).
    """
    if frame.y.shape[0] < pcm.base_n + plan.max_window_d:
        raise CapabilityError("frame reserve shorter than the deepest scheduled window")
    key = frame.raw_key
    llr_all = channel_llrs(frame.alice_symbols, frame.magnitudes, sigma)

    w = window(pcm, plan.d1)
    target = syndrome(w, key[:w.n])
    leak = w.m
    cfg1 = cfg.decoder_config(0)
    out = first_outcome if first_outcome is not None else spa_decode(w, llr_all[:w.n], target, cfg1)
    first = out
    logs: list[AttemptLog] = []
    succeeded_at = None
    undetected = False
    audit_ok = True
    rev_positions_done = 0

    for i in range(cfg.k):
        if i > 0:
            dcfg = cfg.decoder_config(i)
            if plan.scheme == "MDA_b":
                d_new = plan.steps[i - 1]
                deeper, ext = extend_raptor(w, d_new - w.d, key[w.n:pcm.base_n + d_new], key[:w.n])
                full = syndrome(deeper, key[:deeper.n])
                if not (np.array_equal(full[:w.m], target) and np.array_equal(full[w.m:], ext)):
                    audit_ok = False
                    log.error("prefix-syndrome audit failed at depth %d", d_new)
                comm = deeper.m - w.m
                leak += comm
                llr_in, msgs = llr_all[:deeper.n], None
                if cfg.llr_inheritance and cfg.inheritance_mode == "posteriors":
                    llr_in = inherit_llrs(out, deeper.n, llr_all[w.n:deeper.n])
                elif cfg.llr_inheritance:
                    # rows of w are a prefix of deeper, so its edges keep their ids
                    msgs = out.edge_messages
                w, target = deeper, np.concatenate([target, ext])
                out = spa_decode(w, llr_all[:w.n], target, dcfg, initial_llrs=llr_in,
                                 initial_messages=msgs)
                d_log = d_new
            else:
                n_reveal = plan.steps[i - 1]
                rng = rev_rng if rev_rng is not None else np.random.default_rng(0)
                rec = reveal_bits(key[:w.n], n_reveal, _clone(rng))
                comm = n_reveal - rev_positions_done
                rev_positions_done = n_reveal
                leak += comm
                base, msgs = llr_all[:w.n], None
                if cfg.llr_inheritance and cfg.inheritance_mode == "posteriors":
                    base = out.posterior_llrs
                elif cfg.llr_inheritance:
                    # revealed bits are ground truth: drop what the checks said about them
                    msgs = out.edge_messages.copy()
                    st = w.structure
                    for v in rec.positions:
                        msgs[st.var_edges[st.var_ptr[v]:st.var_ptr[v + 1]]] = 0.0
                llr_in = apply_revelation(base, rec, cfg.reveal_magnitude)
                out = spa_decode(w, llr_all[:w.n], target, dcfg, initial_llrs=llr_in,
                                 initial_messages=msgs)
                d_log = n_reveal
        else:
            comm = w.m
            d_log = plan.d1
        if out.success and not np.array_equal(syndrome(w, out.decoded_bits), target):
            raise RuntimeError("decoder reported success without a syndrome match")
        logs.append(AttemptLog(i + 1, d_log, plan.rates[i], out.iterations_used,
                               out.termination, out.success, comm))
        if out.success:
            succeeded_at = i + 1
            if not np.array_equal(out.decoded_bits, key[:w.n]):
                undetected = True
                log.warning("undetected decoding error at attempt %d", i + 1)
            break

    result = FrameResult(logs, leak, w.n, succeeded_at, undetected, audit_ok)
    return result, first


def _clone(rng: np.random.Generator) -> np.random.Generator:
    # same draws on every revelation step, so cumulative sets are nested
    g = np.random.default_rng()
    g.bit_generator.state = rng.bit_generator.state
    return g


@dataclass(frozen=True)
class AttemptStats:
    index: int
    rate: float
    beta: float
    l_max: int
    n_entered: int
    n_failed: int
    mean_iterations: float

    @property
    def fer(self) -> float:
        return self.n_failed / self.n_entered if self.n_entered else 1.0

    @property
    def fer_ci(self) -> tuple[float, float]:
        return metrics.wilson_interval(self.n_failed, self.n_entered)

    def record(self) -> AttemptRecord:
        return AttemptRecord(self.index, self.rate, self.beta, self.fer, self.l_max,
                             self.mean_iterations, self.n_entered, self.n_failed)


@dataclass
class CampaignResult:
    """Aggregated outcome of ``n_frames`` reconciled frames.

    ``frame_credit`` holds each frame's key contribution (``beta_i I_AB -
    chi`` at its successful attempt, else 0) and ``frame_iterations`` its
    total decoding iterations; both support paired comparisons between
    campaigns run on matched frames.
    """

    scheme: str
    k: int
    snr: float
    i_ab: float
    chi: float
    attempts: list[AttemptStats]
    frame_credit: np.ndarray
    frame_iterations: np.ndarray
    frame_allowed: np.ndarray
    frame_succeeded_at: np.ndarray
    leak_per_symbol: np.ndarray
    leak_expected: np.ndarray
    undetected_errors: int
    prefix_audit_failures: int
    early_terminations: int
    config: ProtocolConfig | None = None
    v_a: float | None = None

    @property
    def n_frames(self) -> int:
        return int(self.frame_credit.shape[0])

    @property
    def conditional_fers(self) -> list[float]:
        return [a.fer for a in self.attempts]

    @property
    def fer_overall(self) -> float:
        return metrics.overall_fer(self.conditional_fers)

    @property
    def n_failed_overall(self) -> int:
        return int(np.count_nonzero(self.frame_succeeded_at == 0))

    @property
    def fer_overall_ci(self) -> tuple[float, float]:
        return metrics.wilson_interval(self.n_failed_overall, self.n_frames)

    @property
    def records(self) -> list[AttemptRecord]:
        return [a.record() for a in self.attempts]

    @property
    def skf(self) -> float:
        return metrics.skf_mda(self.records, self.i_ab, self.chi)

    @property
    def skf_stderr(self) -> float:
        return metrics.skf_delta_stderr(self.records, self.i_ab, self.chi)

    @property
    def skf_per_frame(self) -> float:
        """Mean of per-frame credits; equals :attr:`skf` by construction of the counts."""
        return float(self.frame_credit.mean())

    @property
    def lbar(self) -> float:
        return float(self.frame_iterations.mean())

    @property
    def lbar_ci_halfwidth(self) -> float:
        if self.n_frames < 2:
            return math.inf
        return metrics.Z95 * float(self.frame_iterations.std(ddof=1)) / math.sqrt(self.n_frames)

    @property
    def dbar(self) -> float:
        return metrics.d_bar([a.l_max for a in self.attempts], self.conditional_fers)

    @property
    def dbar_counted(self) -> float:
        return float(self.frame_allowed.mean())

    @property
    def beta_eff(self) -> float:
        return metrics.beta_eff(self.skf, self.fer_overall, self.i_ab, self.chi)

    @property
    def beta1(self) -> float:
        return self.attempts[0].beta

    @property
    def mean_leak_per_symbol(self) -> float:
        return float(self.leak_per_symbol.mean())

    def gain_vs(self, baseline: "CampaignResult") -> metrics.GainCheck:
        return metrics.gain_and_bound(self.skf, baseline.skf, self.attempts[0].fer)


def _campaign_snr(channel) -> tuple[float, ChannelParams | None]:
    if isinstance(channel, ChannelParams):
        return channel.snr, channel
    snr = float(channel)
    if not snr > 0:
        raise ValueError("SNR must be positive")
    return snr, None


def _decode_chunk(args):
    cfg, pcm, sigma, plan, indices, grid_index = args
    out = []
    for f in indices:
        frame, rev_rng = make_frame(pcm, frame_seed(cfg, f, grid_index), sigma)
        res, _ = run_frame(cfg, pcm, frame, sigma, plan, rev_rng)
        out.append((f, res))
    return out


def run_campaign(cfg: ProtocolConfig, pcm: SparsePCM, channel: ChannelParams | float,
                 chi: HolevoProvider | float = 0.0, workers: int | None = None,
                 grid_index: int = 0, attempt_cache: dict | None = None) -> CampaignResult:
    """Simulate ``cfg.n_frames`` frames and aggregate.

    ``channel`` is either physical parameters or an SNR.  With a single
    worker, ``attempt_cache`` (a plain dict) memoizes first-attempt
    outcomes across campaigns that share frames and first-attempt settings.
    """
    snr, params = _campaign_snr(channel)
    sigma = sigma_from_snr(snr)
    i_ab = mutual_info(snr)
    provider = chi if isinstance(chi, HolevoProvider) else HolevoProvider("constant", float(chi))
    chi_val = metrics.holevo_chi(provider, params if params is not None else snr)
    plan = plan_attempts(cfg, pcm, i_ab)
    workers = resolve_workers(workers)

    results: list[FrameResult | None] = [None] * cfg.n_frames
    if workers > 1:
        chunks = np.array_split(np.arange(cfg.n_frames), workers * 4)
        jobs = [(cfg, pcm, sigma, plan, c.tolist(), grid_index) for c in chunks if c.size]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_decode_chunk, jobs):
                for f, res in part:
                    results[f] = res
    else:
        cache_key = (cfg.campaign_seed, cfg.matched_seeds, grid_index if not cfg.matched_seeds else None,
                     pcm.digest(), sigma, plan.d1, cfg.decoder_config(0))
        for f in range(cfg.n_frames):
            frame, rev_rng = make_frame(pcm, frame_seed(cfg, f, grid_index), sigma)
            cached = attempt_cache.get((cache_key, f)) if attempt_cache is not None else None
            res, first = run_frame(cfg, pcm, frame, sigma, plan, rev_rng, cached)
            if attempt_cache is not None and cached is None:
                if first.success:
                    # successes need only their iteration count downstream
                    first = replace(first, posterior_llrs=np.zeros(0), edge_messages=None)
                attempt_cache[(cache_key, f)] = first
            results[f] = res
    return aggregate(cfg, plan, snr, i_ab, chi_val, results, params)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("MDARECON_WORKERS", "1"))
    return max(1, int(workers))


def aggregate(cfg: ProtocolConfig, plan: AttemptPlan, snr: float, i_ab: float, chi: float,
              results: Sequence[FrameResult], params: ChannelParams | None = None) -> CampaignResult:
    k = cfg.k
    entered = np.zeros(k, dtype=np.int64)
    failed = np.zeros(k, dtype=np.int64)
    iters = np.zeros(k, dtype=np.int64)
    n = len(results)
    credit = np.zeros(n)
    total_iters = np.zeros(n, dtype=np.int64)
    allowed = np.zeros(n, dtype=np.int64)
    succ_at = np.zeros(n, dtype=np.int64)
    leak = np.zeros(n)
    leak_exp = np.zeros(n)
    credits_per_attempt = [2.0 * r - chi for r in plan.rates]
    et = 0
    for f, res in enumerate(results):
        for a in res.attempts:
            j = a.index - 1
            entered[j] += 1
            iters[j] += a.iterations
            allowed[f] += cfg.l_max[j]
            if not a.success:
                failed[j] += 1
            if a.termination is Termination.EARLY_TERMINATED:
                et += 1
        total_iters[f] = res.iterations
        if res.succeeded_at is not None:
            succ_at[f] = res.succeeded_at
            credit[f] = credits_per_attempt[res.succeeded_at - 1]
        leak[f] = res.leak_per_symbol
        leak_exp[f] = 2.0 * (1.0 - res.rate_final)
    stats = [AttemptStats(j + 1, plan.rates[j], 2.0 * plan.rates[j] / i_ab, cfg.l_max[j],
                          int(entered[j]), int(failed[j]),
                          float(iters[j] / entered[j]) if entered[j] else 0.0)
             for j in range(k)]
    undetected = sum(r.undetected_error for r in results)
    if undetected:
        log.warning("%d undetected decoding errors in campaign", undetected)
    return CampaignResult(cfg.scheme, k, snr, i_ab, chi, stats, credit, total_iters, allowed,
                          succ_at, leak, leak_exp, int(undetected),
                          sum(not r.prefix_audit_ok for r in results), et, cfg,
                          params.V_A if params is not None else None)


@dataclass(frozen=True)
class GridPoint:
    snr: float
    beta1: float | None = None
    dbeta_rel: float | None = None
    l_max: int | None = None
    scheme: str | None = None
    v_a: float | None = None
    T: float | None = None


@dataclass
class SweepRow:
    index: int
    point: GridPoint
    result: CampaignResult | None
    error: str | None = None


def sweep(grid: Iterable[GridPoint], template: ProtocolConfig, pcm: SparsePCM,
          chi: HolevoProvider | float = 0.0, workers: int | None = None,
          channel_template: ChannelParams | None = None) -> list[SweepRow]:
    """One campaign per grid point, in grid order.  Errors are recorded per point."""
    cache: dict = {}
    rows = []
    for idx, pt in enumerate(grid):
        try:
            cfg = _config_for_point(template, pt)
            if pt.v_a is not None and pt.T is not None:
                base = channel_template or ChannelParams(V_A=pt.v_a, T=pt.T)
                channel: ChannelParams | float = replace(base, V_A=pt.v_a, T=pt.T)
            else:
                channel = pt.snr
            res = run_campaign(cfg, pcm, channel, chi, workers=workers, grid_index=idx,
                               attempt_cache=cache)
            rows.append(SweepRow(idx, pt, res))
        except (ValueError, RuntimeError) as exc:
            log.error("grid point %d failed: %s", idx, exc)
            rows.append(SweepRow(idx, pt, None, str(exc)))
    return rows


def _config_for_point(template: ProtocolConfig, pt: GridPoint) -> ProtocolConfig:
    changes: dict = {}
    scheme = pt.scheme or template.scheme
    if scheme != template.scheme:
        changes["scheme"] = scheme
    if pt.l_max is not None:
        changes["l_max"] = (pt.l_max,)
    if pt.beta1 is not None:
        changes["beta1"] = pt.beta1
        changes["rates"] = None
    if scheme == "SDA":
        changes.update(k=1, dbeta_rel=())
        if "rates" not in changes and template.rates is not None:
            changes["rates"] = template.rates[:1]
        if "l_max" not in changes:
            changes["l_max"] = template.l_max[:1]
        return replace(template, **changes)
    k = max(template.k, 2)
    changes["k"] = k
    rate_based = changes.get("rates", template.rates) is not None
    if pt.dbeta_rel is not None:
        if pt.dbeta_rel == 0:
            # no rate step: report the first attempt alone
            changes.update(k=1, dbeta_rel=(), scheme="SDA")
            if rate_based:
                changes["rates"] = template.rates[:1]
            if "l_max" not in changes:
                changes["l_max"] = template.l_max[:1]
        else:
            # k > 2: equal relative steps per attempt
            steps = tuple(pt.dbeta_rel * (i + 1) for i in range(k - 1))
            if rate_based:
                # beta is proportional to the rate at fixed I_AB
                r1 = template.rates[0]
                changes["rates"] = (r1,) + tuple(r1 * (1.0 - s) for s in steps)
            else:
                changes["dbeta_rel"] = steps
    if "l_max" in changes and changes["k"] > 1 and len(changes["l_max"]) == 1:
        changes["l_max"] = changes["l_max"] * changes["k"]
    return replace(template, **changes)
