"""Synthetic client populations and availability schedules."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ClientData:
    client_id: str
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)

    @property
    def labels(self) -> set[int]:
        return set(int(v) for v in np.unique(self.y))


@dataclass
class ScenarioConfig:
    n_clients: int = 12
    n_classes: int = 6
    n_features: int = 8
    # one int for every client, or one entry per client
    samples_per_client: int | list[int] = 200
    test_samples_per_class: int = 200
    partition: str = "one-class"
    class_separation: float = 5.0
    noise_std: float = 1.0
    participation_prob: float = 1.0
    # explicit schedule: client id -> rounds it is available in; unlisted clients are always available
    availability_rounds: dict[str, list[int]] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.partition not in ("iid", "one-class"):
            raise ValueError(f"unknown partition {self.partition!r}")
        if self.partition == "one-class" and self.n_clients < self.n_classes:
            raise ValueError("one-class partition needs at least as many clients as classes")
        if isinstance(self.samples_per_client, list) and len(self.samples_per_client) != self.n_clients:
            raise ValueError("samples_per_client list must have one entry per client")

    @property
    def client_ids(self) -> list[str]:
        return client_ids(self.n_clients)

    def sample_counts(self) -> list[int]:
        if isinstance(self.samples_per_client, list):
            return list(self.samples_per_client)
        return [self.samples_per_client] * self.n_clients


def client_ids(n: int) -> list[str]:
    return [f"msms-{k + 1}" for k in range(n)]


@dataclass(frozen=True)
class Partition:
    clients: list[ClientData]
    test: ClientData
    class_means: np.ndarray = field(repr=False)


def _class_means(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    means = rng.normal(size=(cfg.n_classes, cfg.n_features))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    return means * cfg.class_separation


def _draw(means: np.ndarray, label: int, count: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    return means[label] + noise * rng.normal(size=(count, means.shape[1]))


def partition_data(cfg: ScenarioConfig) -> Partition:
    """Gaussian-mixture data split across clients, plus a class-balanced test set."""
    rng = np.random.default_rng([cfg.seed, 1])
    means = _class_means(cfg, rng)
    clients = []
    for k, (cid, count) in enumerate(zip(cfg.client_ids, cfg.sample_counts())):
        crng = np.random.default_rng([cfg.seed, 2, k])
        if cfg.partition == "one-class":
            labels = np.full(count, k % cfg.n_classes)
        else:
            labels = np.arange(count) % cfg.n_classes
            crng.shuffle(labels)
        x = np.vstack([_draw(means, int(c), 1, cfg.noise_std, crng) for c in labels]) if count else \
            np.empty((0, cfg.n_features))
        clients.append(ClientData(cid, x, labels.astype(np.int64)))
    trng = np.random.default_rng([cfg.seed, 3])
    ty = np.repeat(np.arange(cfg.n_classes), cfg.test_samples_per_class)
    tx = np.vstack([_draw(means, c, cfg.test_samples_per_class, cfg.noise_std, trng) for c in range(cfg.n_classes)])
    return Partition(clients, ClientData("test", tx, ty.astype(np.int64)), means)


def available_clients(cfg: ScenarioConfig, t: int) -> list[str]:
    ids = cfg.client_ids
    if cfg.availability_rounds is not None:
        sched = cfg.availability_rounds
        return [c for c in ids if c not in sched or t in sched[c]]
    if cfg.participation_prob >= 1.0:
        return ids
    rng = np.random.default_rng([cfg.seed, 4, t])
    draws = rng.random(len(ids))
    return [c for c, u in zip(ids, draws) if u < cfg.participation_prob]


def load_csv_dataset(path: str | Path, label_column: str = "label", client_column: str | None = None,
                     client_id: str = "csv") -> list[ClientData]:
    """Read a feature table; one client per distinct value of ``client_column`` if given."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return []
    features = [c for c in rows[0] if c not in (label_column, client_column)]
    groups: dict[str, list[dict]] = {}
    for r in rows:
        groups.setdefault(r[client_column] if client_column else client_id, []).append(r)
    out = []
    for cid, rs in groups.items():
        x = np.array([[float(r[f]) for f in features] for r in rs])
        y = np.array([int(r[label_column]) for r in rs], dtype=np.int64)
        out.append(ClientData(cid, x, y))
    return out


def scripted_skew_schedule(ids: Sequence[str], stale: Sequence[str], rounds: int, every: int) -> dict[str, list[int]]:
    """``stale`` clients show up only every ``every`` rounds (including the last); others always."""
    stale_rounds = sorted({t for t in range(rounds, 0, -every)})
    return {c: (stale_rounds if c in stale else list(range(1, rounds + 1))) for c in ids}
