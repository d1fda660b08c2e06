"""Multiple decoding attempts for CV-QKD reverse reconciliation.

Rate-adaptive LDPC syndrome decoding (raptor-like extension or bit
revelation between attempts) with secret-key-fraction and decoding
complexity accounting.
"""

__version__ = "0.1.0"

from .channel import ChannelParams, mutual_info, sigma_from_snr, snr_from_params
from .decoder import DecodeOutcome, DecoderConfig, Termination, spa_decode
from .metrics import AttemptRecord, HolevoProvider, gain_and_bound, skf_mda, skf_sda
from .pcm import PCMWindow, SparsePCM, generate_raptor_family, load_alist, window, write_alist
from .protocol import CampaignResult, ProtocolConfig, run_campaign, sweep

__all__ = [
    "AttemptRecord", "CampaignResult", "ChannelParams", "DecodeOutcome", "DecoderConfig",
    "HolevoProvider", "PCMWindow", "ProtocolConfig", "SparsePCM", "Termination", "gain_and_bound",
    "generate_raptor_family", "load_alist", "mutual_info", "run_campaign", "sigma_from_snr",
    "skf_mda", "skf_sda", "snr_from_params", "spa_decode", "sweep", "window", "write_alist",
]
