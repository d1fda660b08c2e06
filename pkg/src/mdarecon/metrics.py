"""Secret-key and complexity accounting for single and multiple decoding attempts.

All key fractions are asymptotic, in bits per transmitted symbol.  A
frame reconciled at attempt ``i`` contributes ``beta_i * I_AB - chi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .channel import ChannelParams

Z95 = float(norm.ppf(0.975))


@dataclass(frozen=True)
class AttemptRecord:
    """Statistics of one decoding attempt.

    ``fer`` is conditional on the frames that reached this attempt.
    """

    index: int
    rate: float
    beta: float
    fer: float
    l_max: int = 0
    mean_iterations: float = 0.0
    n_entered: int = 0
    n_failed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fer <= 1.0:
            raise ValueError(f"fer must lie in [0, 1], got {self.fer}")


def skf_sda(fer: float, beta: float, i_ab: float, chi: float) -> float:
    """Single-attempt secret key fraction; negative values are returned as-is."""
    return (1.0 - fer) * (beta * i_ab - chi)


def skf_mda(records: Sequence[AttemptRecord], i_ab: float, chi: float) -> float:
    if not records:
        raise ValueError("need at least one attempt")
    total = 0.0
    reach = 1.0
    for rec in records:
        total += reach * (1.0 - rec.fer) * (rec.beta * i_ab - chi)
        reach *= rec.fer
    return total


def overall_fer(conditional_fers: Sequence[float]) -> float:
    return float(np.prod(conditional_fers)) if len(conditional_fers) else 0.0


def beta_eff(k_k: float, overall: float, i_ab: float, chi: float) -> float:
    if overall >= 1.0:
        raise ValueError("effective efficiency undefined when every frame fails")
    return (k_k / (1.0 - overall) + chi) / i_ab


@dataclass(frozen=True)
class GainCheck:
    gain: float
    bound: float
    satisfied: bool


def gain_and_bound(k_k: float, k_1: float, fer_1: float) -> GainCheck:
    """Relative gain over one attempt and its upper bound ``FER_1 / (1 - FER_1)``."""
    if not k_1 > 0:
        raise ValueError("single-attempt key fraction must be positive")
    if fer_1 >= 1.0:
        raise ValueError("bound undefined for FER_1 = 1")
    gain = k_k / k_1 - 1.0
    bound = fer_1 / (1.0 - fer_1)
    # equality only in the degenerate no-gain case
    return GainCheck(gain, bound, gain < bound or (gain == 0.0 and bound == 0.0))


def d_bar(l_max_schedule: Sequence[int], conditional_fers: Sequence[float]) -> float:
    """Average allowed decoding iterations per frame."""
    if not l_max_schedule:
        raise ValueError("empty schedule")
    if len(conditional_fers) < len(l_max_schedule) - 1:
        raise ValueError("need a conditional FER for every attempt but the last")
    total = float(l_max_schedule[0])
    reach = 1.0
    for i in range(1, len(l_max_schedule)):
        reach *= conditional_fers[i - 1]
        total += l_max_schedule[i] * reach
    return total


def wilson_interval(failures: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    p = failures / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def skf_delta_stderr(records: Sequence[AttemptRecord], i_ab: float, chi: float) -> float:
    """First-order (delta-method) standard error of :func:`skf_mda`."""
    fers = [r.fer for r in records]
    credits = [r.beta * i_ab - chi for r in records]
    var = 0.0
    for j, rec in enumerate(records):
        if rec.n_entered == 0:
            continue
        grad = 0.0
        for i in range(j, len(records)):
            reach_wo_j = math.prod(fers[q] for q in range(i) if q != j)
            if i == j:
                grad -= reach_wo_j * credits[i]
            else:
                grad += reach_wo_j * (1.0 - fers[i]) * credits[i]
        var += grad * grad * rec.fer * (1.0 - rec.fer) / rec.n_entered
    return math.sqrt(var)


# Holevo information providers -------------------------------------------------

def _g(x: float) -> float:
    """Von Neumann entropy of a thermal state with mean photon number ``x``."""
    if x <= 0:
        return 0.0
    return (x + 1) * math.log2(x + 1) - x * math.log2(x)


def _sym_entropy(nu: float) -> float:
    return _g((nu - 1.0) / 2.0)


class UnphysicalStateError(ValueError):
    pass


def gaussian_heterodyne_chi(p: ChannelParams, tol: float = 1e-9,
                            return_eigenvalues: bool = False):
    """Holevo bound of the Gaussian-equivalent heterodyne protocol, reverse reconciliation.

    Collective attacks with trusted detector noise (efficiency ``eta``,
    electronic noise ``nu_el``).  For QPSK this is a stand-in, not the
    tight discrete-modulation bound.
    """
    V = p.V_A + 1.0
    T = p.T
    chi_line = 1.0 / T - 1.0 + p.xi
    chi_het = (2.0 - p.eta + 2.0 * p.nu_el) / p.eta
    chi_tot = chi_line + chi_het / T

    A = V * V * (1 - 2 * T) + 2 * T + T * T * (V + chi_line) ** 2
    B = T * T * (V * chi_line + 1) ** 2
    sb = math.sqrt(B)
    den = (T * (V + chi_tot)) ** 2
    C = (A * chi_het ** 2 + B + 1 + 2 * chi_het * (V * sb + T * (V + chi_line))
         + 2 * T * (V * V - 1)) / den
    D = ((V + sb * chi_het) / (T * (V + chi_tot))) ** 2

    def pair(a, b):
        disc = a * a - 4 * b
        if disc < -tol * max(1.0, a * a):
            raise UnphysicalStateError("complex symplectic eigenvalues")
        if disc < 64 * np.finfo(float).eps * a * a:
            # degenerate pair: the square root would amplify round-off to ~1e-8
            disc = 0.0
        big = 0.5 * (a + math.sqrt(disc))
        # smaller root from the product, avoiding cancellation
        return math.sqrt(big), math.sqrt(b / big) if big > 0 else 0.0

    nu1, nu2 = pair(A, B)
    nu3, nu4 = pair(C, D)
    eig = (nu1, nu2, nu3, nu4)
    if min(eig) < 1.0 - tol:
        raise UnphysicalStateError(f"symplectic eigenvalue {min(eig):.12g} < 1")
    chi = (_sym_entropy(nu1) + _sym_entropy(nu2) - _sym_entropy(nu3) - _sym_entropy(nu4))
    chi = max(chi, 0.0)
    return (chi, eig) if return_eigenvalues else chi


@dataclass
class HolevoProvider:
    """Source of the Holevo information ``chi``.

    ``mode`` is ``"constant"`` (``value``), ``"table"`` (``snr``/``chi``
    arrays, linear interpolation) or ``"gaussian_model"`` (needs
    :class:`ChannelParams` at query time).
    """

    mode: str = "constant"
    value: float = 0.0
    snr: np.ndarray = field(default_factory=lambda: np.zeros(0))
    chi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.mode not in ("constant", "table", "gaussian_model"):
            raise ValueError(f"unknown Holevo provider mode {self.mode!r}")
        if self.mode == "constant" and self.value < 0:
            raise ValueError("chi must be non-negative")
        if self.mode == "table":
            self.snr = np.asarray(self.snr, dtype=np.float64)
            self.chi = np.asarray(self.chi, dtype=np.float64)
            if self.snr.ndim != 1 or self.snr.shape != self.chi.shape or self.snr.size < 1:
                raise ValueError("table needs equal-length SNR and chi columns")
            if np.any(np.diff(self.snr) <= 0):
                raise ValueError("table SNR column must be strictly increasing")
            if np.any(self.chi < 0):
                raise ValueError("chi must be non-negative")

    @classmethod
    def from_table_file(cls, path: str | Path) -> "HolevoProvider":
        data = np.loadtxt(path, ndmin=2, comments="#")
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns (SNR, chi)")
        return cls(mode="table", snr=data[:, 0], chi=data[:, 1])

    def __call__(self, snr_or_params) -> float:
        return holevo_chi(self, snr_or_params)


def holevo_chi(provider: HolevoProvider, snr_or_params) -> float:
    if provider.mode == "constant":
        return float(provider.value)
    if provider.mode == "table":
        snr = snr_or_params.snr if isinstance(snr_or_params, ChannelParams) else float(snr_or_params)
        lo, hi = provider.snr[0], provider.snr[-1]
        if not lo <= snr <= hi:
            raise ValueError(f"SNR {snr} outside table range [{lo}, {hi}]")
        return float(np.interp(snr, provider.snr, provider.chi))
    if not isinstance(snr_or_params, ChannelParams):
        raise TypeError("gaussian_model mode needs ChannelParams, not a bare SNR")
    return gaussian_heterodyne_chi(snr_or_params)
