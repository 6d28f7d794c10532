"""Evaluation configuration: defaults, ``key=value`` config files and flag overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError

TASKS = ("adhoc", "instance", "actev", "vtt_matching", "da")


def parse_strata(text):
    """``"1-250:1.0,251-1000:0.111"`` -> ``((1, 250, 1.0), (251, 1000, 0.111))``."""
    out = []
    try:
        for part in text.split(","):
            span, rate = part.split(":")
            lo, hi = span.split("-")
            out.append((int(lo), int(hi), float(rate)))
    except ValueError:
        raise ConfigError(f"bad strata spec {text!r}; expected lo-hi:rate[,lo-hi:rate...]") from None
    return tuple(out)


def format_strata(spec):
    return ",".join(f"{lo}-{hi}:{rate!r}" for lo, hi, rate in spec)


@dataclass
class EvalConfig:
    task: str = "adhoc"
    runs: list = field(default_factory=list)
    qrels: str | None = None
    ref: str | None = None
    sys: list = field(default_factory=list)
    truth: str | None = None
    da_log: str | None = None
    run_meta: str | None = None
    scores: str | None = None
    metric: str | None = None
    out: str = "vidmeter-out"
    strata: str = "1-250:1.0,251-1000:0.111"
    seed: int = 0
    epsilon: float = 1e-5
    cutoffs: str = "10,100,1000"
    difficulty_threshold: float | None = None  # task default: 0.3 adhoc, 0.06 instance
    alpha: float = 0.05
    iterations: int = 10000
    theta: float = 0.2
    naudc_limit: float = 0.2
    rfa_point: float = 0.15
    novelty_table: bool = False
    threads: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        parse_strata(self.strata)
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.naudc_limit <= 0:
            raise ConfigError("naudc_limit must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.difficulty_threshold is not None and not 0 < self.difficulty_threshold < 1:
            raise ConfigError("difficulty_threshold must lie in (0, 1)")
        try:
            self.cutoff_list()
        except ValueError:
            raise ConfigError(f"bad cutoffs {self.cutoffs!r}") from None

    @property
    def strata_spec(self):
        return parse_strata(self.strata)

    def cutoff_list(self):
        ks = [int(k) for k in str(self.cutoffs).split(",") if k.strip()]
        if any(k < 1 for k in ks):
            raise ValueError("cutoffs must be >= 1")
        return ks

    def threshold(self):
        if self.difficulty_threshold is not None:
            return self.difficulty_threshold
        return 0.06 if self.task == "instance" else 0.3

    def as_dict(self):
        d = asdict(self)
        # execution details; they must not change report bytes
        d.pop("threads")
        d.pop("out")
        return d

    def digest(self):
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _coerce(name, raw):
    f = {f.name: f for f in fields(EvalConfig)}.get(name)
    if f is None:
        raise ConfigError(f"unknown config key {name!r}")
    kind = str(f.type)
    try:
        if kind.startswith("list"):
            return [p for p in raw.split(",") if p] if isinstance(raw, str) else list(raw)
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return None if raw in (None, "", "none") else float(raw)
        if kind.startswith("bool"):
            return raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes", "on")
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name}") from None
    return raw


def read_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{no}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = _coerce(key.replace("-", "_"), val)
    return values


def build_config(file_values=None, overrides=None):
    """Defaults, then config-file values, then non-None flag overrides."""
    merged = dict(file_values or {})
    known = {f.name for f in fields(EvalConfig)}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in (overrides or {}).items():
        if v is not None and v != []:
            merged[k] = _coerce(k, v) if isinstance(v, str) else v
    return EvalConfig(**merged)
