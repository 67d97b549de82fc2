"""Declarative multi-trial experiments and their CSV outputs.

A config is a YAML mapping (``schema_version: 1``)::

    seed: 0
    trials: 50
    T: 1500
    tau: 0.0
    epsilon: 0.01
    graph:  {generator: sbm, n: 200}              # sbm | small_world | cliques | empty | edge_list
    signal: {kind: blocks, values: [1.0, -1.0]}   # blocks | explicit | labels | smooth
    noise:  {kind: gaussian, sigma: 2.0}          # gaussian | bernoulli | deterministic
    noise_stream: per_arm                         # per_arm | per_policy
    policies:
      - {policy: grapl, gamma: [10, 100], lambda: 1.0e-3, alpha: 1.0}
      - {policy: nonadaptive_random, gamma: 10}
      - {policy: apt}

Seeding: every random draw in trial ``k`` comes from
``SeedSequence([seed, k, stream])`` with a fixed stream id for the graph,
the signal, the rewards and each policy's own sampling. With
``noise_stream: per_arm`` each arm has its own reward stream, so all
policies in a trial see the same value for the j-th pull of arm i.
"""

from __future__ import annotations

import csv
import logging
import math
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .env import ProblemInstance, RewardStream
from .graph import (
    LaplacianOperator,
    WeightedGraph,
    gen_cliques,
    gen_sbm,
    gen_small_world,
    largest_connected_component,
    load_edge_list,
    load_labels,
    smooth_signal,
)
from .policies import APT, GrAPL, NonAdaptive, OraclePolicy, Policy

__all__ = [
    "SCHEMA_VERSION",
    "POLICY_NAMES",
    "ConfigError",
    "PolicyConfig",
    "ExperimentConfig",
    "ErrorCurve",
    "TrialFailure",
    "RunResult",
    "load_config",
    "build_graph",
    "materialize",
    "run",
    "run_trial",
    "emit_csv",
    "first_zero_time",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
POLICY_NAMES = ("grapl", "nonadaptive_rr", "nonadaptive_random", "apt", "oracle")
GRAPH_POLICIES = ("grapl", "nonadaptive_rr", "nonadaptive_random", "oracle")

_STREAM_GRAPH, _STREAM_SIGNAL, _STREAM_REWARD, _STREAM_POLICY = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    policy: str
    gamma: float | None = None
    lam: float = 1e-3
    alpha: float = 1.0
    offset: float | bool | None = None
    trials: int | None = None
    label: str | None = None

    @property
    def name(self) -> str:
        return self.label or self.policy


@dataclass(frozen=True)
class ExperimentConfig:
    T: int
    tau: float
    epsilon: float
    graph: dict[str, Any]
    signal: dict[str, Any]
    noise: dict[str, Any]
    policies: tuple[PolicyConfig, ...]
    trials: int = 1
    seed: int = 0
    noise_stream: str = "per_arm"
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.noise_stream not in ("per_arm", "per_policy"):
            raise ConfigError("noise_stream must be 'per_arm' or 'per_policy'")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for pc in self.policies:
            if pc.policy not in POLICY_NAMES:
                raise ConfigError(f"unknown policy {pc.policy!r}; expected one of {POLICY_NAMES}")
            if pc.policy in GRAPH_POLICIES and not (pc.gamma and pc.gamma > 0):
                raise ConfigError(f"policy {pc.policy!r} needs a positive gamma")

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path | str = ".") -> "ExperimentConfig":
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        data.pop("name", None)
        try:
            policies = tuple(_expand_policies(data.pop("policies")))
            cfg = cls(
                T=int(data.pop("T")),
                tau=float(data.pop("tau")),
                epsilon=float(data.pop("epsilon")),
                graph=dict(data.pop("graph")),
                signal=dict(data.pop("signal")),
                noise=dict(data.pop("noise", {"kind": "gaussian", "sigma": 1.0})),
                policies=policies,
                trials=int(data.pop("trials", 1)),
                seed=int(data.pop("seed", 0)),
                noise_stream=str(data.pop("noise_stream", "per_arm")),
                base_dir=Path(base_dir),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc.args[0]!r}") from None
        if data:
            raise ConfigError(f"unknown config keys: {sorted(data)}")
        return cfg

    def with_overrides(self, *, seed: int | None = None, trials: int | None = None) -> "ExperimentConfig":
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if trials is not None:
            changes["trials"] = trials
            changes["policies"] = tuple(replace(p, trials=None) for p in self.policies)
        return replace(self, **changes)

    def trials_for(self, pc: PolicyConfig) -> int:
        return self.trials if pc.trials is None else min(pc.trials, self.trials)


def _num(value: Any) -> float:
    # PyYAML reads "1e-3" as a string.
    return float(value)


def _expand_policies(raw: list[dict[str, Any]]):
    for entry in raw:
        entry = dict(entry)
        name = entry.pop("policy")
        gammas = entry.pop("gamma", None)
        if not isinstance(gammas, list):
            gammas = [gammas]
        offset = entry.pop("offset", None)
        if isinstance(offset, str):
            if offset != "tau":
                raise ConfigError("offset must be a number, a bool, or 'tau'")
            offset = True
        elif offset is not None and not isinstance(offset, bool):
            offset = _num(offset)
        lam = _num(entry.pop("lambda", 1e-3))
        alpha = _num(entry.pop("alpha", 1.0))
        trials = entry.pop("trials", None)
        label = entry.pop("label", None)
        if entry:
            raise ConfigError(f"unknown policy keys for {name!r}: {sorted(entry)}")
        for g in gammas:
            yield PolicyConfig(
                policy=name,
                gamma=None if g is None else _num(g),
                lam=lam,
                alpha=alpha,
                offset=offset,
                trials=None if trials is None else int(trials),
                label=label,
            )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return ExperimentConfig.from_dict(data, base_dir=path.parent)


def _seed(cfg: ExperimentConfig, trial: int, *stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.seed, trial, *stream])


def _resolve(cfg: ExperimentConfig, p: str | Path) -> Path:
    p = Path(p)
    return p if p.is_absolute() else cfg.base_dir / p


def build_graph(spec: dict[str, Any], seed) -> tuple[WeightedGraph, np.ndarray | None]:
    """Graph from a spec mapping; returns the graph and, for loaded graphs, the
    original vertex index of every kept vertex."""
    kind = spec.get("generator")
    if kind == "sbm":
        return gen_sbm(int(spec["n"]), seed), None
    if kind == "small_world":
        g = gen_small_world(
            int(spec["n"]),
            int(spec.get("k_ring", 4)),
            _num(spec.get("p_new", 0.01)),
            seed,
            shortcuts=spec.get("shortcuts", "per_edge"),
        )
        return g, None
    if kind == "cliques":
        return gen_cliques(int(spec["d"]), int(spec["k"])), None
    if kind == "empty":
        return WeightedGraph.empty(int(spec["n"])), None
    if kind == "edge_list":
        g = load_edge_list(spec["path"])
        if spec.get("lcc", True):
            return largest_connected_component(g)
        return g, np.arange(g.n_vertices)
    raise ConfigError(f"unknown graph generator {kind!r}")


def _build_mu(cfg: ExperimentConfig, graph: WeightedGraph, mapping: np.ndarray | None, trial: int) -> np.ndarray:
    sig = cfg.signal
    kind = sig.get("kind")
    n = graph.n_vertices
    if kind == "explicit":
        mu = np.asarray([_num(x) for x in sig["mu"]])
        if mu.size != n:
            raise ConfigError(f"explicit mu has {mu.size} entries for {n} vertices")
        return mu
    if kind == "blocks":
        values = [_num(x) for x in sig["values"]]
        return np.asarray(values)[np.arange(n) * len(values) // n]
    if kind == "labels":
        path = _resolve(cfg, sig["path"])
        labels = load_labels(path, _count_label_ids(path))
        if mapping is None:
            if labels.size != n:
                raise ConfigError(f"{path}: {labels.size} labels for {n} vertices")
            return labels
        if mapping.max() >= labels.size:
            raise ConfigError(f"{path}: no label for vertex {int(mapping.max())}")
        return labels[mapping]
    if kind == "smooth":
        return smooth_signal(
            graph,
            _seed(cfg, trial, _STREAM_SIGNAL),
            sd=_num(sig.get("sd", 0.2)),
            center=_num(sig.get("center", 0.5)),
        )
    raise ConfigError(f"unknown signal kind {kind!r}")


def _count_label_ids(path: Path) -> int:
    top = -1
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                top = max(top, int(line.replace(",", " ").split()[0]))
    return top + 1


def _graph_spec(cfg: ExperimentConfig) -> dict[str, Any]:
    spec = dict(cfg.graph)
    if spec.get("generator") == "edge_list":
        spec["path"] = _resolve(cfg, spec["path"])
    return spec


def materialize(cfg: ExperimentConfig, trial: int = 0) -> tuple[WeightedGraph, ProblemInstance]:
    """Graph and problem instance used by ``trial``.

    Generated graphs are redrawn per trial unless ``graph.regenerate`` is false.
    """
    spec = _graph_spec(cfg)
    regen = spec.pop("regenerate", True)
    graph_trial = trial if regen else 0
    graph, mapping = build_graph(spec, _seed(cfg, graph_trial, _STREAM_GRAPH))
    mu = _build_mu(cfg, graph, mapping, graph_trial)
    noise = dict(cfg.noise)
    kind = noise.pop("kind", "gaussian")
    sigma = _num(noise.pop("sigma", 1.0))
    instance = ProblemInstance(mu, cfg.tau, cfg.epsilon, kind, sigma)
    return graph, instance


def make_policy(
    pc: PolicyConfig,
    graph: WeightedGraph,
    instance: ProblemInstance,
    T: int,
    seed: np.random.SeedSequence,
) -> Policy:
    tau, eps = instance.tau, instance.epsilon
    if pc.policy == "apt":
        return APT(instance.n_arms, tau, eps)
    lap = LaplacianOperator(graph, pc.lam)
    if pc.policy == "grapl":
        return GrAPL(lap, tau, eps, pc.gamma, pc.alpha, offset=pc.offset)
    if pc.policy in ("nonadaptive_rr", "nonadaptive_random"):
        mode = "round_robin" if pc.policy == "nonadaptive_rr" else "random"
        return NonAdaptive(lap, tau, eps, pc.gamma, mode=mode, rng=np.random.default_rng(seed), offset=pc.offset)
    if pc.policy == "oracle":
        return OraclePolicy(lap, instance.mu, tau, eps, pc.gamma, T, offset=pc.offset)
    raise ConfigError(f"unknown policy {pc.policy!r}")


@dataclass
class TrialRecord:
    errors: np.ndarray
    total_pulls: int
    final_estimate: np.ndarray
    counts: np.ndarray


def run_policy(policy: Policy, instance: ProblemInstance, stream: RewardStream, T: int) -> TrialRecord:
    """Drive one policy for ``T`` counted iterations, recording E after each."""
    mu, tau, eps = instance.mu, instance.tau, instance.epsilon
    above = mu >= tau + eps
    below = mu < tau - eps
    denom = int(np.count_nonzero(above | below))
    for arm in policy.warmup_arms():
        policy.observe(arm, stream.pull(arm))
    errors = np.zeros(T)
    for t in range(T):
        arm = policy.select()
        policy.observe(arm, stream.pull(arm))
        if denom:
            est = policy.estimate()
            errors[t] = (np.count_nonzero(above & ~est) + np.count_nonzero(below & est)) / denom
    return TrialRecord(errors, stream.n_pulls, policy.estimate().copy(), policy.counts.copy())


@dataclass
class TrialFailure:
    policy: str
    gamma: float | None
    trial: int
    message: str


@dataclass
class ErrorCurve:
    """Per-trial misclassification trajectories of one policy configuration.

    ``errors[k, t - 1]`` is E after iteration ``t`` in trial ``trials[k]``.
    Quantiles use linear interpolation between order statistics.
    """

    config: PolicyConfig
    trials: list[int]
    errors: np.ndarray
    total_pulls: list[int] = field(default_factory=list)
    final_estimates: list[np.ndarray] = field(default_factory=list)

    @property
    def policy(self) -> str:
        return self.config.name

    @property
    def gamma(self) -> float | None:
        return self.config.gamma

    def quantile(self, q: float) -> np.ndarray:
        return np.quantile(self.errors, q, axis=0)

    @property
    def median(self) -> np.ndarray:
        return self.quantile(0.5)

    @property
    def q25(self) -> np.ndarray:
        return self.quantile(0.25)

    @property
    def q75(self) -> np.ndarray:
        return self.quantile(0.75)


@dataclass
class RunResult:
    curves: list[ErrorCurve]
    failures: list[TrialFailure]

    @property
    def ok(self) -> bool:
        return not self.failures

    def curve(self, policy: str, gamma: float | None = None) -> ErrorCurve:
        for c in self.curves:
            if c.policy == policy and (gamma is None or c.gamma == gamma):
                return c
        raise KeyError((policy, gamma))


def run_trial(cfg: ExperimentConfig, trial: int) -> list[TrialRecord | TrialFailure | None]:
    """All policies for one trial; ``None`` where a policy runs fewer trials."""
    out: list[TrialRecord | TrialFailure | None] = []
    try:
        graph, instance = materialize(cfg, trial)
    except Exception as exc:  # noqa: BLE001 - recorded, other trials continue
        msg = f"setup failed: {exc!r}"
        return [TrialFailure(pc.name, pc.gamma, trial, msg) for pc in cfg.policies]
    for idx, pc in enumerate(cfg.policies):
        if trial >= cfg.trials_for(pc):
            out.append(None)
            continue
        try:
            if cfg.noise_stream == "per_arm":
                stream = RewardStream(instance, _seed(cfg, trial, _STREAM_REWARD), per_arm=True)
            else:
                stream = RewardStream(instance, _seed(cfg, trial, _STREAM_REWARD, idx), per_arm=False)
            policy = make_policy(pc, graph, instance, cfg.T, _seed(cfg, trial, _STREAM_POLICY, idx))
            out.append(run_policy(policy, instance, stream, cfg.T))
        except Exception as exc:  # noqa: BLE001
            log.warning("trial %d policy %s failed: %s", trial, pc.name, exc)
            out.append(TrialFailure(pc.name, pc.gamma, trial, "".join(traceback.format_exception_only(type(exc), exc)).strip()))
    return out


def run(cfg: ExperimentConfig, *, threads: int = 1) -> RunResult:
    """Run every trial of every policy; results do not depend on ``threads``."""
    trials = range(cfg.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(lambda k: run_trial(cfg, k), trials))
    else:
        per_trial = [run_trial(cfg, k) for k in trials]

    curves: list[ErrorCurve] = []
    failures: list[TrialFailure] = []
    for idx, pc in enumerate(cfg.policies):
        ids, rows, pulls, finals = [], [], [], []
        for k, recs in enumerate(per_trial):
            rec = recs[idx]
            if isinstance(rec, TrialFailure):
                failures.append(rec)
            elif rec is not None:
                ids.append(k)
                rows.append(rec.errors)
                pulls.append(rec.total_pulls)
                finals.append(rec.final_estimate)
        errors = np.vstack(rows) if rows else np.zeros((0, cfg.T))
        curves.append(ErrorCurve(pc, ids, errors, pulls, finals))
    return RunResult(curves, failures)


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def _fmt_gamma(g: float | None) -> str:
    return "" if g is None else _fmt(g)


def emit_csv(curves: list[ErrorCurve], out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``errors.csv`` (``policy,gamma,trial,t,E``) and ``aggregate.csv``
    (``policy,gamma,t,median,q25,q75``) into ``out_dir``."""
    populated = [c for c in curves if c.errors.shape[0]]
    if not populated:
        raise ValueError("no completed trials to write")
    out_dir = Path(out_dir)
    errors_path = out_dir / "errors.csv"
    agg_path = out_dir / "aggregate.csv"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(errors_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["policy", "gamma", "trial", "t", "E"])
            for c in populated:
                g = _fmt_gamma(c.gamma)
                for k, row in zip(c.trials, c.errors):
                    for t, e in enumerate(row, start=1):
                        w.writerow([c.policy, g, k, t, _fmt(e)])
        with open(agg_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["policy", "gamma", "t", "median", "q25", "q75"])
            for c in populated:
                g = _fmt_gamma(c.gamma)
                med, lo, hi = c.median, c.q25, c.q75
                for t in range(med.size):
                    w.writerow([c.policy, g, t + 1, _fmt(med[t]), _fmt(lo[t]), _fmt(hi[t])])
    except OSError as exc:
        raise OSError(f"failed writing results under {out_dir}: {exc}") from exc
    return errors_path, agg_path


def first_zero_time(errors: np.ndarray) -> float:
    """First iteration after which E stays at 0 through the horizon (``inf`` if never)."""
    nz = np.flatnonzero(errors > 0)
    if nz.size == 0:
        return 1.0
    if nz[-1] == errors.size - 1:
        return math.inf
    return float(nz[-1] + 2)
