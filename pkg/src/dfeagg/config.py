"""Run configuration: a YAML file validated by pydantic before anything runs."""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Literal

import gmpy2
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .groups import TOY_DEFAULT_Q
from .quantizer import QuantScheme
from .scenario import ScenarioConfig
from .simulation import SimulationSpec


class ConfigError(ValueError):
    """Every problem found in a config, reported together."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        lines = [f"  {loc}: {msg}" for loc, msg in problems]
        super().__init__(f"{len(problems)} invalid config field(s):\n" + "\n".join(lines))

    @property
    def fields(self) -> list[str]:
        return [loc for loc, _ in self.problems]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ScenarioSection(_Section):
    n_clients: int = Field(12, ge=1)
    n_classes: int = Field(6, ge=2)
    n_features: int = Field(8, ge=1)
    samples_per_client: int | list[int] = 200
    test_samples_per_class: int = Field(200, ge=1)
    partition: Literal["one-class", "iid"] = "one-class"
    class_separation: float = Field(5.0, gt=0)
    noise_std: float = Field(1.0, gt=0)
    participation_prob: float = Field(1.0, gt=0, le=1)
    availability_rounds: dict[str, list[int]] | None = None


class QuantSection(_Section):
    delta: float = Field(2.0 ** -10, gt=0)
    bits_b: int = Field(16, ge=2, le=30)
    max_participants: int = Field(64, ge=1)


class CryptoSection(_Section):
    chunk_dim: int = Field(16, ge=1)
    toy_field: bool = False
    toy_q: int = Field(TOY_DEFAULT_Q, ge=5)
    security_level: int = Field(128, gt=0, le=128)
    element_size_bytes: int = Field(56, ge=1)
    decrypt_path: Literal["pairing", "fast"] = "pairing"
    keys_dir: str | None = None


class TrainingSection(_Section):
    rounds: int = Field(30, ge=1)
    local_epochs: int = Field(1, ge=1)
    learning_rate: float = Field(0.1, gt=0)
    lr_decay: float = Field(0.0, ge=0)
    batch_size: int = Field(32, ge=1)


class ProtocolSection(_Section):
    gamma: int | None = Field(None, ge=0)
    staleness_mode: Literal["filter", "clamp"] = "filter"
    weighting: Literal["balanced", "size"] = "balanced"


class BaselineSection(_Section):
    paillier_timing: bool = True
    paillier_bits: int = Field(2048, ge=64)
    timing_params: int = Field(1000, ge=1)


class RunConfig(_Section):
    seed: int | None = None
    pipeline: Literal["encrypted", "plaintext", "both"] = "both"
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    quant: QuantSection = Field(default_factory=QuantSection)
    crypto: CryptoSection = Field(default_factory=CryptoSection)
    training: TrainingSection = Field(default_factory=TrainingSection)
    protocol: ProtocolSection = Field(default_factory=ProtocolSection)
    baselines: BaselineSection = Field(default_factory=BaselineSection)

    @model_validator(mode="after")
    def _cross_checks(self):
        problems = cross_field_problems(self)
        if problems:
            raise ValueError("; ".join(f"{loc}: {msg}" for loc, msg in problems))
        return self

    def to_spec(self) -> SimulationSpec:
        s, q, c, tr, p = self.scenario, self.quant, self.crypto, self.training, self.protocol
        scenario = ScenarioConfig(
            n_clients=s.n_clients, n_classes=s.n_classes, n_features=s.n_features,
            samples_per_client=s.samples_per_client, test_samples_per_class=s.test_samples_per_class,
            partition=s.partition, class_separation=s.class_separation, noise_std=s.noise_std,
            participation_prob=s.participation_prob, availability_rounds=s.availability_rounds,
            seed=self.seed or 0,
        )
        return SimulationSpec(
            scenario=scenario, quant=QuantScheme(q.delta, q.bits_b, q.max_participants),
            chunk_dim=c.chunk_dim, rounds=tr.rounds, local_epochs=tr.local_epochs,
            learning_rate=tr.learning_rate, lr_decay=tr.lr_decay, batch_size=tr.batch_size,
            gamma=p.gamma, staleness_mode=p.staleness_mode, weighting=p.weighting,
            decrypt_path=c.decrypt_path, toy_field=c.toy_field, toy_q=c.toy_q,
            security_level=c.security_level, element_size_bytes=c.element_size_bytes, seed=self.seed,
        )


def cross_field_problems(cfg: RunConfig) -> list[tuple[str, str]]:
    out = []
    s = cfg.scenario
    if s.partition == "one-class" and s.n_clients < s.n_classes:
        out.append(("scenario.n_clients", "one-class partition needs n_clients >= n_classes"))
    if isinstance(s.samples_per_client, list):
        if len(s.samples_per_client) != s.n_clients:
            out.append(("scenario.samples_per_client", "list length must equal n_clients"))
        if any(v < 1 for v in s.samples_per_client):
            out.append(("scenario.samples_per_client", "every client needs at least one sample"))
    elif s.samples_per_client < 1:
        out.append(("scenario.samples_per_client", "must be >= 1"))
    if s.n_clients > cfg.quant.max_participants:
        out.append(("quant.max_participants", "smaller than n_clients; aggregate could overflow the dlog bound"))
    if cfg.crypto.toy_field:
        if not gmpy2.is_prime(cfg.crypto.toy_q):
            out.append(("crypto.toy_q", "toy modulus must be prime"))
        elif cfg.crypto.toy_q <= cfg.quant.max_participants << cfg.quant.bits_b:
            out.append(("crypto.toy_q", "toy modulus must exceed max_participants * 2**bits_b"))
    return out


def _flatten_errors(exc: ValidationError) -> list[tuple[str, str]]:
    problems = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        msg = err["msg"]
        if not loc and msg.startswith("Value error, "):
            # the cross-field validator packs several problems into one message
            for part in msg[len("Value error, "):].split("; "):
                field_loc, _, field_msg = part.partition(": ")
                problems.append((field_loc, field_msg))
            continue
        problems.append((loc or "<root>", msg))
    return problems


def _drop(data: dict, loc: str) -> bool:
    *parents, leaf = loc.split(".")
    node = data
    for p in parents:
        node = node.get(p) if isinstance(node, dict) else None
    if isinstance(node, dict) and leaf in node:
        del node[leaf]
        return True
    return False


def validate_config(data: dict | None) -> RunConfig:
    """Validate, collecting field errors and cross-field errors in one report."""
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        problems = _flatten_errors(exc)
    # Fall back to defaults for the broken fields so the cross-field checks still get a look.
    patched = copy.deepcopy(data or {})
    while True:
        if not any([_drop(patched, loc) for loc, _ in problems]):
            break
        try:
            RunConfig.model_validate(patched)
            break
        except ValidationError as exc:
            more = [p for p in _flatten_errors(exc) if p not in problems]
            if not more:
                break
            problems += more
    raise ConfigError(problems)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read YAML (or defaults when ``path`` is None), apply dotted overrides, validate."""
    data = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError([("<file>", f"not valid YAML: {exc}")]) from None
        if not isinstance(data, dict):
            raise ConfigError([("<file>", "top level must be a mapping")])
    for dotted, value in (overrides or {}).items():
        node = data
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return validate_config(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(), sort_keys=False)


TEMPLATE = """\
# dfeagg run configuration. Every key is optional; the values shown are the defaults.

seed: null              # an integer pins every random stream (data, keys, masks); null draws fresh entropy
pipeline: both          # encrypted | plaintext | both (both also emits the divergence series)

scenario:
  n_clients: 12         # K
  n_classes: 6          # C
  n_features: 8
  samples_per_client: 200   # one int, or a list with one entry per client
  test_samples_per_class: 200
  partition: one-class  # one-class (client k holds only label k mod C) | iid
  class_separation: 5.0 # radius of the sphere the class means sit on
  noise_std: 1.0
  participation_prob: 1.0   # per-round availability draw
  availability_rounds: null # {client_id: [rounds]} overrides participation_prob

quant:
  delta: 0.0009765625   # step size, 2**-10
  bits_b: 16            # each client encode lies in [0, 2**bits_b)
  max_participants: 64  # sizes the discrete-log search

crypto:
  chunk_dim: 16         # n, the matrix dimension
  toy_field: false      # small transparent group instead of BLS12-381 (fast, insecure)
  toy_q: 2305843009213693951
  security_level: 128
  element_size_bytes: 56    # accounting constant for the published byte figures
  decrypt_path: pairing # pairing | fast (both give identical integers)
  keys_dir: null        # directory written by `keygen`; null runs an inline key ceremony

training:
  rounds: 30            # T
  local_epochs: 1       # I
  learning_rate: 0.1    # eta_1
  lr_decay: 0.0         # eta_t = learning_rate / (1 + lr_decay * (t - 1))
  batch_size: 32

protocol:
  gamma: null           # staleness bound; null means gamma = t (everyone eligible)
  staleness_mode: filter    # filter (drop stale clients) | clamp (clip f_k instead)
  weighting: balanced   # balanced (frequency and size) | size (plain FedAvg)

baselines:
  paillier_timing: true
  paillier_bits: 2048
  timing_params: 1000   # parameters encrypted per scheme for the timing medians
"""
