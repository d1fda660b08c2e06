"""Experiment configuration files.

A config is a YAML (or JSON) mapping::

    seed: 1                       # campaign seed, required
    code:
      generate: {seed: 7, base_n: 4000, base_m: 3000, max_d: 1000, ext_degree: 3}
      # or: alist: path/to/code.alist   (optional base_n, base_m)
    channel:
      snr: [0.66, 0.68]
      # or: params: {V_A: 0.8, T: [1.0, 0.9], xi: 0.01, nu_el: 0.1, eta: 0.5}
    chi: {mode: constant, value: 0.4}
      # or {mode: table, file: chi.txt} or {mode: gaussian_model}
    baseline: sda                 # optional protocol name for gain columns
    protocols:
      - name: sda
        scheme: SDA
        rates: [0.25]             # or beta1: [...], swept
        l_max: 100
        n_frames: 2000
      - name: mdab
        scheme: MDA_b
        rates: [0.25]
        dbeta_rel: [0.01, 0.02]   # swept; rate of attempt 2 is r1 (1 - dbeta_rel)
        l_max: [50, 100]          # swept, same budget per attempt
        llr_inheritance: true

List-valued ``beta1``, ``dbeta_rel``, ``l_max`` and channel points form a
Cartesian grid, expanded in the order channel x beta1 x dbeta_rel x l_max.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .channel import ChannelParams
from .metrics import HolevoProvider
from .pcm import SparsePCM, generate_raptor_family, load_alist
from .protocol import SCHEMES, ProtocolConfig


class ConfigError(ValueError):
    def __init__(self, field_name: str, constraint: str):
        self.field = field_name
        super().__init__(f"{field_name}: {constraint}")


@dataclass(frozen=True)
class ChannelPoint:
    snr: float
    params: ChannelParams | None = None

    @property
    def channel(self) -> ChannelParams | float:
        return self.params if self.params is not None else self.snr


@dataclass(frozen=True)
class RunPoint:
    """One campaign of an expanded experiment."""

    name: str
    protocol: ProtocolConfig
    channel: ChannelPoint
    grid: dict

    def config_hash(self, code_id: str, chi: dict) -> str:
        payload = {"protocol": asdict(self.protocol), "snr": self.channel.snr,
                   "params": asdict(self.channel.params) if self.channel.params else None,
                   "code": code_id, "chi": chi}
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentConfig:
    seed: int
    code: dict
    channels: list[ChannelPoint]
    chi: dict
    protocols: list[dict]
    baseline: str | None = None
    source: Path | None = None
    raw: dict = field(default_factory=dict)

    def load_code(self) -> SparsePCM:
        if "generate" in self.code:
            g = self.code["generate"]
            return generate_raptor_family(int(g.get("seed", 0)), int(g["base_n"]), int(g["base_m"]),
                                          int(g.get("max_d", 0)), int(g.get("ext_degree", 3)),
                                          int(g.get("col_degree", 3)))
        path = Path(self.code["alist"])
        if not path.is_absolute() and self.source is not None:
            path = self.source.parent / path
        return load_alist(path.read_text(), self.code.get("base_n"), self.code.get("base_m"))

    def holevo(self) -> HolevoProvider:
        mode = self.chi.get("mode", "constant")
        if mode == "table":
            path = Path(self.chi["file"])
            if not path.is_absolute() and self.source is not None:
                path = self.source.parent / path
            return HolevoProvider.from_table_file(path)
        if mode == "constant":
            return HolevoProvider("constant", float(self.chi.get("value", 0.0)))
        return HolevoProvider(mode)

    def expand(self) -> list[RunPoint]:
        points = []
        for proto in self.protocols:
            axes = {key: _as_list(proto.get(key)) for key in ("beta1", "dbeta_rel", "l_max")}
            for ch in self.channels:
                for b1, db, lm in itertools.product(axes["beta1"], axes["dbeta_rel"], axes["l_max"]):
                    points.append(_run_point(proto, self.seed, ch, b1, db, lm))
        return points


def _as_list(v) -> list:
    if v is None:
        return [None]
    return list(v) if isinstance(v, (list, tuple)) else [v]


_PROTOCOL_KEYS = {"name", "scheme", "k", "rates", "beta1", "dbeta_rel", "l_max", "llr_inheritance",
                  "inheritance_mode", "early_termination", "n_frames", "matched_seeds", "llr_clamp",
                  "reveal_llr_mag", "check_rule"}


def _run_point(proto: dict, seed: int, ch: ChannelPoint, b1, db, lm) -> RunPoint:
    name = proto["name"]
    scheme = proto["scheme"]
    k = int(proto.get("k", 1 if scheme == "SDA" else 2))
    kwargs: dict[str, Any] = dict(scheme=scheme, k=k, campaign_seed=seed)
    for key in ("llr_inheritance", "inheritance_mode", "early_termination", "n_frames", "matched_seeds",
                "llr_clamp", "reveal_llr_mag", "check_rule"):
        if key in proto:
            kwargs[key] = proto[key]
    if lm is not None:
        kwargs["l_max"] = (int(lm),)
    if b1 is not None:
        kwargs["beta1"] = float(b1)
    else:
        rates = proto.get("rates")
        if rates is None:
            raise ConfigError(f"protocols[{name}].rates", "give rates or beta1")
        rates = [float(r) for r in _as_list(rates)]
        if scheme != "SDA" and len(rates) == 1 and db is not None:
            # k attempts with equal relative rate steps below r1
            rates = [rates[0] * (1.0 - float(db) * i) for i in range(k)]
        kwargs["rates"] = tuple(rates)
    if b1 is not None and scheme != "SDA":
        if db is None:
            raise ConfigError(f"protocols[{name}].dbeta_rel", "required for multi-attempt schemes")
        kwargs["dbeta_rel"] = tuple(float(db) * (i + 1) for i in range(k - 1))
    try:
        cfg = ProtocolConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"protocols[{name}]", str(exc)) from None
    grid = {"beta1": b1, "dbeta_rel": 0.0 if scheme == "SDA" else db, "l_max": cfg.l_max[0]}
    return RunPoint(name, cfg, ch, grid)


def parse_config(data: dict, source: Path | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "must be a mapping")
    if "seed" not in data:
        raise ConfigError("seed", "required (no implicit entropy)")
    try:
        seed = int(data["seed"])
    except (TypeError, ValueError):
        raise ConfigError("seed", "must be an integer") from None

    code = data.get("code")
    if not isinstance(code, dict) or (("generate" in code) == ("alist" in code)):
        raise ConfigError("code", "exactly one of 'generate' or 'alist' is required")
    if "generate" in code:
        g = code["generate"]
        for key in ("base_n", "base_m"):
            if key not in g:
                raise ConfigError(f"code.generate.{key}", "required")

    channels = _parse_channels(data.get("channel"))

    chi = data.get("chi", {"mode": "constant", "value": 0.0})
    if not isinstance(chi, dict) or chi.get("mode", "constant") not in ("constant", "table", "gaussian_model"):
        raise ConfigError("chi.mode", "must be constant, table or gaussian_model")
    if chi.get("mode") == "table" and "file" not in chi:
        raise ConfigError("chi.file", "required for table mode")
    if chi.get("mode") == "gaussian_model" and any(c.params is None for c in channels):
        raise ConfigError("chi.mode", "gaussian_model needs channel.params, not bare SNRs")

    protos = data.get("protocols")
    if not isinstance(protos, list) or not protos:
        raise ConfigError("protocols", "at least one protocol is required")
    names = set()
    for i, p in enumerate(protos):
        if not isinstance(p, dict):
            raise ConfigError(f"protocols[{i}]", "must be a mapping")
        p.setdefault("name", f"p{i}")
        unknown = set(p) - _PROTOCOL_KEYS
        if unknown:
            raise ConfigError(f"protocols[{p['name']}]", f"unknown keys {sorted(unknown)}")
        if p.get("scheme") not in SCHEMES:
            raise ConfigError(f"protocols[{p['name']}].scheme", f"must be one of {SCHEMES}")
        if p["name"] in names:
            raise ConfigError(f"protocols[{p['name']}].name", "must be unique")
        names.add(p["name"])
    baseline = data.get("baseline")
    if baseline is not None and baseline not in names:
        raise ConfigError("baseline", f"no protocol named {baseline!r}")
    cfg = ExperimentConfig(seed, code, channels, chi, protos, baseline, source, data)
    cfg.expand()  # surface protocol errors now
    return cfg


def _parse_channels(ch) -> list[ChannelPoint]:
    if not isinstance(ch, dict) or (("snr" in ch) == ("params" in ch)):
        raise ConfigError("channel", "exactly one of 'snr' or 'params' is required")
    if "snr" in ch:
        out = []
        for s in _as_list(ch["snr"]):
            if not float(s) > 0:
                raise ConfigError("channel.snr", "values must be positive")
            out.append(ChannelPoint(float(s)))
        return out
    p = dict(ch["params"])
    if "V_A" not in p or "T" not in p:
        raise ConfigError("channel.params", "V_A and T are required")
    out = []
    for va, t in itertools.product(_as_list(p["V_A"]), _as_list(p["T"])):
        try:
            cp = ChannelParams(V_A=float(va), T=float(t), xi=float(p.get("xi", 0.01)),
                               nu_el=float(p.get("nu_el", 0.1)), eta=float(p.get("eta", 0.5)))
        except ValueError as exc:
            raise ConfigError("channel.params", str(exc)) from None
        out.append(ChannelPoint(cp.snr, cp))
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML/JSON: {exc}") from None
    return parse_config(data, path)
