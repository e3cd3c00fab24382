"""
Experiment configuration documents.

A document is YAML with these sections; every key is optional unless noted::

    experiment: ber            # required: nmse, ber, rate, psd, sense,
                               # equalize-bench or modeling-error
    system:    {M, N, c, delta_f, alpha, beta, sigma0_sq, oversample}
    channel:   {P, l_max, nu_max_hz, fading, profile}
    estimator: {p_fa, kappa_step, kappa_fit, whiten, cancellation, refine,
                Ng, k_max, l_max, pilot_db}
    ber:       {mode, constellation, whiten}
    psd:       {frames, spacing, nperseg}
    sense:     {f_c, theta}
    bench:     {N_list, full_N_list, repeats}
    snr_db: [0, 10, 20]
    trials: 100
    seed: 0
    output_path: results

``channel.profile`` names a CSV profile, resolved relative to the document.
Unknown keys, wrong types and out-of-range values raise
:class:`~otfsftn.errors.ConfigurationError` naming the key path.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .analysis import ChannelSpec, PilotSpec
from .channel import load_channel_profile
from .errors import ConfigurationError
from .estimator import EstimatorConfig
from .mapping import BITS_PER_SYMBOL
from .modem import SystemConfig

EXPERIMENTS = ("nmse", "ber", "rate", "psd", "sense", "equalize-bench", "modeling-error")

_MISSING = object()


@dataclass(frozen=True)
class BerOptions:
    mode: str = "perfect-csi"
    constellation: str = "QPSK"
    whiten: bool = True


@dataclass(frozen=True)
class PsdOptions:
    frames: int = 200
    spacing: float = 0.2
    nperseg: int = 1024


@dataclass(frozen=True)
class SenseOptions:
    f_c: float = 5e9
    theta: float = 0.0


@dataclass(frozen=True)
class BenchOptions:
    N_list: tuple[int, ...] = (8, 16, 32, 64)
    full_N_list: tuple[int, ...] = (4, 8, 16)
    repeats: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description."""

    experiment: str
    system: SystemConfig
    channel: ChannelSpec
    pilot: PilotSpec
    estimator: EstimatorConfig
    snr_db: tuple[float, ...] = (10.0,)
    trials: int = 100
    seed: int = 0
    output_path: str = "results"
    ber: BerOptions = field(default_factory=BerOptions)
    psd: PsdOptions = field(default_factory=PsdOptions)
    sense: SenseOptions = field(default_factory=SenseOptions)
    bench: BenchOptions = field(default_factory=BenchOptions)
    profile_path: str | None = None

    def to_dict(self) -> dict:
        """Plain representation for the run manifest."""
        d = asdict(self)
        d["channel"].pop("profile", None)
        d["channel"]["profile"] = self.profile_path
        return d


class _Section:
    """Reads typed keys out of one mapping and rejects leftovers."""

    def __init__(self, data: Any, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path or 'document'}: expected a mapping")
        self.data = dict(data)
        self.path = path

    def _key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def get(self, name: str, kind: type, default=_MISSING, check=None, why: str = ""):
        key = self._key(name)
        if name not in self.data:
            if default is _MISSING:
                raise ConfigurationError(f"{key}: required key missing")
            return default
        value = self.data.pop(name)
        value = _coerce(value, kind, key)
        if check is not None and not check(value):
            raise ConfigurationError(f"{key}: value {value!r} out of range ({why})")
        return value

    def section(self, name: str) -> "_Section":
        return _Section(self.data.pop(name, None), self._key(name))

    def finish(self) -> None:
        if self.data:
            keys = ", ".join(self._key(str(k)) for k in sorted(self.data, key=str))
            raise ConfigurationError(f"unknown key(s): {keys}")


def _coerce(value, kind, key):
    if kind is bool:
        if isinstance(value, bool):
            return value
    elif kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif kind is str:
        if isinstance(value, str):
            return value
    elif isinstance(kind, tuple) and kind[0] is list:
        if isinstance(value, list) and value:
            return tuple(_coerce(v, kind[1], f"{key}[{i}]") for i, v in enumerate(value))
        raise ConfigurationError(f"{key}: expected a non-empty list")
    name = kind.__name__ if isinstance(kind, type) else "list"
    raise ConfigurationError(f"{key}: expected {name}, got {type(value).__name__}")


def parse_config(text: str, base_dir: str | Path | None = None, experiment: str | None = None) -> ExperimentConfig:
    """
    Parse and validate a configuration document.

    Parameters
    ----------
    text : str
        YAML document.
    base_dir : path, optional
        Directory that relative file references are resolved against.
    experiment : str, optional
        Used when the document has no ``experiment`` key; a conflicting value
        is an error.

    Returns
    -------
    ExperimentConfig

    Raises
    ------
    ConfigurationError
        With the offending key path in the message.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"document is not valid YAML: {exc}") from exc
    root = _Section(data, "")
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    exp = root.get("experiment", str, experiment if experiment is not None else _MISSING)
    if exp not in EXPERIMENTS:
        raise ConfigurationError(f"experiment: unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    if experiment is not None and exp != experiment:
        raise ConfigurationError(f"experiment: document says {exp!r} but {experiment!r} was requested")

    sec = root.section("system")
    pos = lambda v: v > 0  # noqa: E731
    M = sec.get("M", int, 32, lambda v: v >= 2, ">= 2")
    N = sec.get("N", int, 8, lambda v: v >= 2, ">= 2")
    c = sec.get("c", int, 8, lambda v: 0 <= v and M * N > 4 * v, "0 <= c and M*N > 4c")
    system = SystemConfig(
        M=M,
        N=N,
        c=c,
        delta_f=sec.get("delta_f", float, 30e3, pos, "> 0"),
        alpha=sec.get("alpha", float, 1.0, lambda v: 0 < v <= 1, "0 < alpha <= 1"),
        beta=sec.get("beta", float, 0.25, lambda v: 0 <= v <= 1, "0 <= beta <= 1"),
        sigma0_sq=sec.get("sigma0_sq", float, 1.0, pos, "> 0"),
        oversample=sec.get("oversample", int, 16, lambda v: v >= 4, ">= 4"),
    )
    sec.finish()

    sec = root.section("channel")
    profile_name = sec.get("profile", str, None)
    profile = None
    profile_path = None
    if profile_name is not None:
        p = Path(profile_name)
        p = p if p.is_absolute() else base / p
        if not p.is_file():
            raise ConfigurationError(f"channel.profile: file not found: {p}")
        profile = load_channel_profile(p)
        profile_path = str(p)
    P = sec.get("P", int, 1, lambda v: v >= 1, ">= 1")
    l_max = sec.get("l_max", int, 0, lambda v: 0 <= v <= max(2 * c - 1, 0), "0 <= l_max <= 2c-1")
    nu_max = sec.get("nu_max_hz", float, 0.0, lambda v: v >= 0, ">= 0")
    if profile is not None and any(d > max(2 * c - 1, 0) for d in profile.delays):
        raise ConfigurationError("channel.profile: delays must not exceed 2c-1")
    fading = sec.get("fading", str, "rayleigh", lambda v: v in ("rayleigh", "none"), "rayleigh or none")
    channel = ChannelSpec(P=P, l_max=l_max, nu_max_hz=nu_max, profile=profile, fading=fading)
    sec.finish()

    sec = root.section("estimator")
    estimator = EstimatorConfig(
        p_fa=sec.get("p_fa", float, 0.01, lambda v: 0 < v < 0.5, "0 < p_fa < 0.5"),
        kappa_step=sec.get("kappa_step", float, 0.01, lambda v: 0 < v <= 0.1, "0 < kappa_step <= 0.1"),
        kappa_fit=sec.get("kappa_fit", str, "two-sided", lambda v: v in ("two-sided", "single"), "two-sided or single"),
        whiten=sec.get("whiten", bool, True),
        cancellation=sec.get("cancellation", str, "ftn", lambda v: v in ("none", "doppler", "ftn"), "none, doppler or ftn"),
        refine=sec.get("refine", bool, True),
    )
    pilot = PilotSpec(
        Ng=sec.get("Ng", int, 2, lambda v: v >= 0, ">= 0"),
        k_max=sec.get("k_max", int, 1, lambda v: v >= 0, ">= 0"),
        l_max=sec.get("l_max", int, None, lambda v: v >= 0, ">= 0"),
        pilot_db=sec.get("pilot_db", float, 30.0),
    )
    sec.finish()
    if pilot.Ng < 2 * pilot.k_max:
        raise ConfigurationError("estimator.Ng: must be at least 2*k_max")
    if 2 * pilot.Ng + 1 > N:
        raise ConfigurationError("estimator.Ng: Doppler guard 2Ng+1 exceeds N")
    guard_l = channel.max_delay if pilot.l_max is None else pilot.l_max
    if 2 * guard_l + 1 > M:
        raise ConfigurationError("estimator.l_max: delay guard 2l_max+1 exceeds M")

    sec = root.section("ber")
    ber = BerOptions(
        mode=sec.get("mode", str, "perfect-csi", lambda v: v in ("perfect-csi", "ftnp-estimated"), "perfect-csi or ftnp-estimated"),
        constellation=sec.get("constellation", str, "QPSK", lambda v: v.upper() in BITS_PER_SYMBOL, "BPSK, QPSK, 16QAM or 64QAM"),
        whiten=sec.get("whiten", bool, True),
    )
    sec.finish()

    sec = root.section("psd")
    psd = PsdOptions(
        frames=sec.get("frames", int, 200, lambda v: v >= 1, ">= 1"),
        spacing=sec.get("spacing", float, 0.2, pos, "> 0"),
        nperseg=sec.get("nperseg", int, 1024, lambda v: v >= 8, ">= 8"),
    )
    sec.finish()

    sec = root.section("sense")
    sense = SenseOptions(
        f_c=sec.get("f_c", float, 5e9, pos, "> 0"),
        theta=sec.get("theta", float, 0.0, lambda v: abs(abs(v) - 1.5707963267948966) > 1e-9, "not +-pi/2"),
    )
    sec.finish()

    sec = root.section("bench")
    bench = BenchOptions(
        N_list=sec.get("N_list", (list, int), (8, 16, 32, 64), lambda v: all(n >= 2 for n in v), "entries >= 2"),
        full_N_list=sec.get("full_N_list", (list, int), (4, 8, 16), lambda v: all(n >= 2 for n in v), "entries >= 2"),
        repeats=sec.get("repeats", int, 5, lambda v: v >= 1, ">= 1"),
    )
    sec.finish()

    cfg = ExperimentConfig(
        experiment=exp,
        system=system,
        channel=channel,
        pilot=pilot,
        estimator=estimator,
        snr_db=root.get("snr_db", (list, float), (10.0,)),
        trials=root.get("trials", int, 100, lambda v: v >= 1, ">= 1"),
        seed=root.get("seed", int, 0, lambda v: 0 <= v < 2**64, "0 <= seed < 2^64"),
        output_path=root.get("output_path", str, "results"),
        ber=ber,
        psd=psd,
        sense=sense,
        bench=bench,
        profile_path=profile_path,
    )
    root.finish()
    return cfg


def load_config(path: str | Path, experiment: str | None = None) -> ExperimentConfig:
    """Read and parse a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, base_dir=path.parent, experiment=experiment)
