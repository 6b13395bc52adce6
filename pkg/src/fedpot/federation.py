"""Round orchestration: selection, local training, screening, weighting, rewards.

One call to :func:`run_round` plays a full round between the retailer (the
aggregating server) and the suppliers (clients). :func:`run_experiment` loops
rounds and, when asked, replays the same seeds without adversaries to measure
how far the attacked global model drifts from the clean one.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from fedpot import dataset as ds_mod
from fedpot.config import ExperimentConfig
from fedpot.contract import Candidate, min_feasible_reward, select_participants
from fedpot.dataset import LabeledDataset
from fedpot.learner import (
    EvalMetrics,
    LayoutError,
    MlpArchitecture,
    ParameterVector,
    TrainingConfig,
    accuracy,
    evaluate,
    init_params,
    local_train,
    param_distance,
)
from fedpot.quality import POOLED, UNIFORM, assign_type, uniform_reference, vdd_quality
from fedpot.radio_cost import (
    ChannelSpec,
    ComputeSpec,
    CostBreakdown,
    cost_breakdown,
    round_deadline,
    sps_utility,
    tpr_utility,
)

CONVENTIONAL = "conventional"
TRUST = "trust"
UNTRUST = "untrust"
SCHEMES = (CONVENTIONAL, TRUST, UNTRUST)

TEST_SET = "test_set"
EUCLIDEAN = "euclidean"

# seed stream tags; every random draw is keyed by (seed, tag, ...)
(
    _DATA, _SPLIT, _PARTITION, _RADIO, _ADVERSARY, _INIT, _TRAIN, _ATTACK, _REFERENCE, _REDUNDANT, _SUBSAMPLE
) = range(1, 12)


def derive_seed(seed: int, *keys: int) -> int:
    state = np.random.SeedSequence([seed % 2**63, *keys]).generate_state(1, dtype=np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class RandomParams:
    pass


@dataclass(frozen=True)
class GaussianPerturb:
    sigma: float


Attack = Union[None, RandomParams, GaussianPerturb]


@dataclass(frozen=True)
class VerificationConfig:
    method: str = TEST_SET
    screen_multiplier: float = 3.0
    accuracy_floor: float = 0.0
    strict_rewards: bool = False

    def __post_init__(self) -> None:
        if self.method not in (TEST_SET, EUCLIDEAN):
            raise ValueError(f"unknown verification method {self.method!r}")
        if self.screen_multiplier <= 0:
            raise ValueError("screen_multiplier must be positive")
        if not 0.0 <= self.accuracy_floor <= 1.0:
            raise ValueError("accuracy_floor must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class SpsProfile:
    id: int
    channel: ChannelSpec
    compute: ComputeSpec
    local_data: LabeledDataset
    honest: bool
    claimed_phi: float
    true_phi: float
    attack: Attack = None

    @property
    def cost(self) -> CostBreakdown:
        return cost_breakdown(self.channel, self.compute)


@dataclass
class ClientRecord:
    id: int
    honest: bool
    claimed_phi: float
    theta: float
    weight: float
    revenue: float
    reward: float
    accepted: bool
    cost: CostBreakdown
    utility: Optional[float]

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "honest": self.honest,
            "claimed_phi": self.claimed_phi,
            "theta": self.theta,
            "weight": self.weight,
            "G": self.revenue,
            "reward": self.reward,
            "accepted": self.accepted,
            "cost": {
                "rate": self.cost.rate,
                "t_upload": self.cost.t_upload,
                "t_compute": self.cost.t_compute,
                "t_total": self.cost.t_total,
                "c_upload": self.cost.c_upload,
                "c_train": self.cost.c_train,
                "c_total": self.cost.c_total,
            },
            "utility": self.utility,
        }


@dataclass
class RoundReport:
    round: int
    scheme: str
    selected: list[int]
    clients: list[ClientRecord]
    metrics: EvalMetrics
    fairness: Optional[float]
    budget: float
    budget_spent: float
    selection_objective: float
    deadline: float
    slowest_latency: Optional[float]
    tpr_utility: float
    flags: list[str] = field(default_factory=list)
    deviation: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "round": self.round,
            "scheme": self.scheme,
            "selected": list(self.selected),
            "clients": [c.as_dict() for c in self.clients],
            "metrics": self.metrics.as_dict(),
            "fairness": self.fairness,
            "deviation": self.deviation,
            "budget": self.budget,
            "budget_spent": self.budget_spent,
            "selection_objective": self.selection_objective,
            "deadline": self.deadline,
            "slowest_latency": self.slowest_latency,
            "tpr_utility": self.tpr_utility,
            "flags": list(self.flags),
        }


# -- weighting and rewards -------------------------------------------------


def _normalize(values: Sequence[float]) -> list[float]:
    total = math.fsum(values)
    return [v / total for v in values]


def trust_weights(claimed_phis: Sequence[float]) -> list[float]:
    """Weights proportional to each supplier's claimed data quality."""
    if not claimed_phis:
        raise ValueError("no claimed qualities given")
    if any(p < 0 for p in claimed_phis):
        raise ValueError("claimed qualities must be non-negative")
    if math.fsum(claimed_phis) <= 0:
        raise ValueError("claimed qualities sum to zero")
    return _normalize(claimed_phis)


def conventional_weights(data_sizes: Sequence[float]) -> list[float]:
    """Plain FedAvg: weights proportional to local sample counts."""
    if not data_sizes:
        raise ValueError("no data sizes given")
    if any(n <= 0 for n in data_sizes):
        raise ValueError("data sizes must be positive")
    return _normalize(data_sizes)


def revenue_weights(revenues: Sequence[float]) -> tuple[list[float], bool]:
    """Normalize revenues; all-zero input falls back to uniform and returns ``True``."""
    if not revenues:
        raise ValueError("no revenues given")
    if math.fsum(revenues) <= 0:
        return [1.0 / len(revenues)] * len(revenues), True
    return _normalize(revenues), False


def untrust_weights(
    models: Sequence[ParameterVector],
    test: LabeledDataset,
    accuracy_floor: float = 0.0,
) -> tuple[list[float], list[float], bool]:
    """Score every upload on the held-out test set and weight by that score.

    Returns ``(weights, revenues, degenerate)``; ``degenerate`` is set when no
    model beat the accuracy floor and uniform weights were used instead.
    """
    if len(test) == 0:
        raise ValueError("test set is empty")
    if not models:
        raise ValueError("no models given")
    revenues = [max(0.0, accuracy(m, test) - accuracy_floor) for m in models]
    weights, degenerate = revenue_weights(revenues)
    return weights, revenues, degenerate


def euclidean_screen(
    previous_global: ParameterVector,
    uploads: Sequence[ParameterVector],
    multiplier: float = 3.0,
) -> list[bool]:
    """Accept flags: reject uploads farther than ``multiplier`` x median distance."""
    dists = [param_distance(u, previous_global) for u in uploads]
    if len(uploads) <= 2:
        return [True] * len(uploads)
    cutoff = multiplier * float(np.median(dists))
    return [d <= cutoff for d in dists]


def aggregate(models: Sequence[ParameterVector], weights: Sequence[float]) -> ParameterVector:
    if not models or len(models) != len(weights):
        raise ValueError("need one weight per model and at least one model")
    first = models[0]
    for m in models[1:]:
        if not m.same_layout(first):
            raise LayoutError("models have different layouts")
    if abs(math.fsum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {math.fsum(weights)}, expected 1")
    stacked = np.stack([m.values for m in models])
    if all(w == weights[0] for w in weights):
        # uniform weights: the plain mean, identical whichever scheme produced them
        return first.replace(stacked.mean(axis=0))
    return first.replace(np.asarray(weights, dtype=np.float64) @ stacked)


def softmax_rewards(weights: Sequence[float], budget: float) -> list[float]:
    """Split ``budget`` by the softmax of ``weights``; every share is positive."""
    if not weights:
        raise ValueError("no weights given")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    w = np.asarray(weights, dtype=np.float64)
    e = np.exp(w - w.max())
    shares = e / e.sum()
    rewards = shares * budget
    # put the rounding residue on the largest share so the sum is the budget
    k = int(np.argmax(rewards))
    rewards[k] = budget - (math.fsum(rewards) - rewards[k])
    return rewards.tolist()


def fairness_index(rewards: Sequence[float], contributions: Sequence[float]) -> float:
    """Jain's index of reward share divided by contribution share.

    A supplier paid something for a zero contribution gets ten times the
    largest finite ratio, which drags the index down.
    """
    if len(rewards) != len(contributions):
        raise ValueError("rewards and contributions differ in length")
    if not rewards:
        raise ValueError("empty input")
    if any(c < 0 for c in contributions) or math.fsum(contributions) <= 0:
        raise ValueError("contributions must be non-negative with a positive sum")
    total_r = math.fsum(rewards)
    total_c = math.fsum(contributions)
    r_share = [r / total_r if total_r > 0 else 0.0 for r in rewards]
    c_share = [c / total_c for c in contributions]
    ratios: list[Optional[float]] = []
    for rs, cs in zip(r_share, c_share):
        if cs > 0:
            ratios.append(rs / cs)
        else:
            ratios.append(None if rs > 0 else 0.0)
    finite = [r for r in ratios if r is not None]
    worst = 10.0 * max(finite) if finite and max(finite) > 0 else 10.0
    vals = [worst if r is None else r for r in ratios]
    return jain_index(vals)


def jain_index(values: Sequence[float]) -> float:
    sq = math.fsum(v * v for v in values)
    if sq == 0:
        return 1.0
    return math.fsum(values) ** 2 / (len(values) * sq)


def adversarial_upload(
    profile: SpsProfile, trained: ParameterVector, seed: int, arch: MlpArchitecture
) -> ParameterVector:
    if profile.attack is None:
        raise ValueError(f"SPS {profile.id} is honest; no adversarial upload")
    if isinstance(profile.attack, RandomParams):
        return init_params(arch, seed)
    if isinstance(profile.attack, GaussianPerturb):
        noise = np.random.default_rng(seed).normal(0.0, 1.0, size=len(trained))
        return trained.replace(trained.values + profile.attack.sigma * noise)
    raise ValueError(f"unknown attack {profile.attack!r}")


def model_deviation(current: ParameterVector, reference: ParameterVector) -> float:
    return param_distance(current, reference)


# -- experiment state ------------------------------------------------------


@dataclass
class ExperimentState:
    config: ExperimentConfig
    profiles: list[SpsProfile]
    test: LabeledDataset
    arch: MlpArchitecture
    global_params: ParameterVector
    positive_labels: frozenset[int]
    num_types: int
    round_budgets: list[float]
    round_index: int = 0
    threads: int = 1

    def theta(self, profile: SpsProfile) -> float:
        return self.config.budget.theta_scale * assign_type(profile.claimed_phi, self.num_types)


@dataclass(frozen=True, eq=False)
class PreparedData:
    locals: list[LabeledDataset]
    test: LabeledDataset
    benign: int


def _benign_id(names: Sequence[str], benign_label: Optional[str]) -> int:
    if benign_label is not None:
        if benign_label not in names:
            raise ValueError(f"benign label {benign_label!r} not among classes {list(names)}")
        return list(names).index(benign_label)
    for i, n in enumerate(names):
        if n.lower() == "benign":
            return i
    return 0


def _subsample(config: ExperimentConfig, data: LabeledDataset, file_no: int) -> LabeledDataset:
    n = config.dataset.sample_per_file
    if n is None or n >= len(data):
        return data
    rng = np.random.default_rng(derive_seed(config.seed, _SUBSAMPLE, file_no))
    return data.subset(np.sort(rng.choice(len(data), size=n, replace=False)))


def prepare_data(config: ExperimentConfig) -> PreparedData:
    """Build the per-supplier training sets and the retailer's test set."""
    dc = config.dataset
    if dc.devices is not None:
        names: Optional[list[str]] = None
        raw = []
        for path in dc.devices:
            d = ds_mod.load_csv(path, dc.label_column, class_names=names, max_rows=dc.max_rows_per_file)
            names = list(d.class_names)
            raw.append(_subsample(config, d, len(raw)))
        # earlier files were read with a shorter class list; widen them
        width = len(names or [])
        raw = [LabeledDataset(d.features, d.labels, width, tuple(names or ())) for d in raw]
        hold = dc.holdout_device % len(raw)
        train_parts = [d for i, d in enumerate(raw) if i != hold]
        pooled = LabeledDataset.concat(train_parts)
        _, record = ds_mod.normalize_minmax(pooled)
        locals_ = [record.apply(d) for d in train_parts]
        test = record.apply(raw[hold])
        return PreparedData(locals_, test, _benign_id(names or [], dc.benign_label))

    if dc.csv is not None:
        full = _subsample(config, ds_mod.load_csv(dc.csv, dc.label_column, max_rows=dc.max_rows_per_file), 0)
    else:
        syn = dc.synthetic
        assert syn is not None
        seed = syn.seed if syn.seed is not None else derive_seed(config.seed, _DATA)
        full = ds_mod.generate_synthetic(
            ds_mod.SyntheticSpec(syn.dim, syn.num_classes, syn.per_class, syn.spread, seed)
        )
    train, test = ds_mod.holdout_split(full, dc.test_fraction, derive_seed(config.seed, _SPLIT))
    train, record = ds_mod.normalize_minmax(train)
    test = record.apply(test)
    benign = _benign_id(full.class_names, dc.benign_label)
    plan = ds_mod.PartitionPlan(
        num_clients=config.num_sps,
        mode=config.partition.mode,
        max_classes_per_client=config.partition.max_classes_per_client,
        seed=derive_seed(config.seed, _PARTITION),
        benign_class=benign,
    )
    locals_ = _add_redundancy(config, ds_mod.partition(train, plan))
    return PreparedData(locals_, test, benign)


def _add_redundancy(config: ExperimentConfig, locals_: list[LabeledDataset]) -> list[LabeledDataset]:
    """Repeat the logs of a seeded subset of suppliers (inflates size, not coverage)."""
    dc = config.dataset
    n = int(math.floor(dc.redundant_fraction * len(locals_) + 0.5))
    if n == 0 or dc.redundancy_factor == 1:
        return locals_
    rng = np.random.default_rng(derive_seed(config.seed, _REDUNDANT))
    picked = set(int(i) for i in rng.choice(len(locals_), size=n, replace=False))
    return [
        LabeledDataset.concat([d] * dc.redundancy_factor) if i in picked else d
        for i, d in enumerate(locals_)
    ]


def _draw(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def build_state(config: ExperimentConfig, data: Optional[PreparedData] = None) -> ExperimentState:
    data = data or prepare_data(config)
    m = config.num_sps
    if len(data.locals) != m:
        raise ValueError(f"{len(data.locals)} local datasets for {m} SPSs")
    dim = data.test.dimension
    num_classes = data.test.num_classes
    hidden = config.learner.hidden_sizes
    arch = (
        MlpArchitecture(dim, tuple(hidden), num_classes)
        if hidden is not None
        else MlpArchitecture.default_for(dim, num_classes)
    )
    num_types = config.budget.num_types or m

    q = config.quality
    if q.reference_mode == POOLED:
        nonempty = [d for d in data.locals if len(d)]
        # the pooled set is a union: repeated logs count once
        reference = np.unique(LabeledDataset.concat(nonempty).features, axis=0)
        if q.reference_size and q.reference_size < reference.shape[0]:
            pick = np.random.default_rng(derive_seed(config.seed, _REFERENCE)).choice(
                reference.shape[0], q.reference_size, replace=False
            )
            reference = reference[np.sort(pick)]
    else:
        reference = uniform_reference(dim, q.reference_size or 1000, derive_seed(config.seed, _REFERENCE))

    adv = config.adversary
    n_bad = int(math.floor(adv.malicious_fraction * m + 0.5))
    adv_rng = np.random.default_rng(derive_seed(config.seed, _ADVERSARY))
    bad_ids = set(int(i) for i in adv_rng.choice(m, size=n_bad, replace=False)) if n_bad else set()
    # claimed qualities for every id are drawn up front so the shadow run
    # (no adversaries) consumes the same stream
    top_claims = adv_rng.uniform((num_types - 1) / num_types, 1.0, size=m)

    overrides = {o.id: o for o in config.radio.overrides}
    radio = config.radio
    profiles = []
    for i, local in enumerate(data.locals):
        rng = np.random.default_rng(derive_seed(config.seed, _RADIO, i))
        vals = {
            name: _draw(rng, getattr(radio, name))
            for name in (
                "bandwidth_share",
                "transmit_power",
                "channel_gain_sq",
                "noise_power",
                "upload_power",
                "cycles_per_sample",
                "cpu_frequency",
                "chip_coefficient",
                "deploy_cost",
            )
        }
        if i in overrides:
            vals.update({k: v for k, v in overrides[i].model_dump().items() if k != "id" and v is not None})
        channel = ChannelSpec(
            vals["bandwidth_share"],
            vals["transmit_power"],
            vals["channel_gain_sq"],
            vals["noise_power"],
            vals["upload_power"],
            float(arch.model_size_bits),
        )
        compute = ComputeSpec(
            vals["cycles_per_sample"],
            vals["cpu_frequency"],
            vals["chip_coefficient"],
            config.learner.epochs,
            len(local),
            vals["deploy_cost"],
        )
        true_phi = vdd_quality(local, reference, q.grid_points, q.reference_mode).phi if len(local) else 0.0
        honest = i not in bad_ids
        attack: Attack = None
        if not honest:
            attack = RandomParams() if adv.attack == "random" else GaussianPerturb(adv.sigma)
        profiles.append(
            SpsProfile(
                id=i,
                channel=channel,
                compute=compute,
                local_data=local,
                honest=honest,
                claimed_phi=true_phi if honest else float(top_claims[i]),
                true_phi=true_phi,
                attack=attack,
            )
        )

    threads = config.threads or int(os.environ.get("FEDPOT_THREADS", "1") or 1)
    return ExperimentState(
        config=config,
        profiles=profiles,
        test=data.test,
        arch=arch,
        global_params=init_params(arch, derive_seed(config.seed, _INIT)),
        positive_labels=frozenset(c for c in range(num_classes) if c != data.benign),
        num_types=num_types,
        round_budgets=config.round_budgets(),
        threads=max(1, threads),
    )


def verification_from_config(config: ExperimentConfig) -> VerificationConfig:
    v = config.verification
    return VerificationConfig(v.method, v.screen_multiplier, v.accuracy_floor, v.strict_rewards)


def _learning_rate(config: ExperimentConfig, z: int) -> float:
    lc = config.learner
    if lc.lr_decay_every <= 0:
        return lc.learning_rate
    return lc.learning_rate * lc.lr_decay_factor ** ((z - 1) // lc.lr_decay_every)


def _client_update(state: ExperimentState, profile: SpsProfile, z: int) -> ParameterVector:
    seed = state.config.seed
    if isinstance(profile.attack, RandomParams):
        # the trained model would be thrown away
        return adversarial_upload(profile, state.global_params, derive_seed(seed, _ATTACK, z, profile.id), state.arch)
    if len(profile.local_data) == 0:
        trained = state.global_params
    else:
        cfg = TrainingConfig(
            epochs=state.config.learner.epochs,
            batch_size=state.config.learner.batch_size,
            learning_rate=_learning_rate(state.config, z),
            seed=derive_seed(seed, _TRAIN, z, profile.id),
        )
        trained, _ = local_train(state.global_params, profile.local_data, cfg)
    if profile.attack is not None:
        trained = adversarial_upload(profile, trained, derive_seed(seed, _ATTACK, z, profile.id), state.arch)
    return trained


def run_round(
    state: ExperimentState, scheme: str, verification: VerificationConfig
) -> RoundReport:
    """Play one round and advance ``state`` (global model and round counter)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    z = state.round_index + 1
    budget = state.round_budgets[z - 1] if z - 1 < len(state.round_budgets) else 0.0
    cfg = state.config
    deadline = cfg.budget.deadline
    by_id = {p.id: p for p in state.profiles}

    candidates = []
    for p in state.profiles:
        if len(p.local_data) == 0:
            continue
        theta = state.theta(p)
        floor = min_feasible_reward(theta, p.cost.c_total) * cfg.budget.reward_multiplier
        candidates.append(Candidate(p.id, p.claimed_phi, max(cfg.budget.reward_floor, floor), p.cost.t_total))
    selection = select_participants(candidates, budget, deadline)
    chosen = [by_id[i] for i in selection.selected]

    if not chosen:
        state.round_index = z
        return RoundReport(
            round=z,
            scheme=scheme,
            selected=[],
            clients=[],
            metrics=evaluate(state.global_params, state.test, state.positive_labels),
            fairness=None,
            budget=budget,
            budget_spent=0.0,
            selection_objective=0.0,
            deadline=deadline,
            slowest_latency=None,
            tpr_utility=0.0,
            flags=["empty_selection"],
        )

    previous = state.global_params
    if state.threads > 1 and len(chosen) > 1:
        with ThreadPoolExecutor(max_workers=state.threads) as pool:
            uploads = list(pool.map(lambda p: _client_update(state, p, z), chosen))
    else:
        uploads = [_client_update(state, p, z) for p in chosen]

    flags: list[str] = []
    floor = verification.accuracy_floor
    revenues = [max(0.0, accuracy(u, state.test) - floor) for u in uploads]
    accepted = [True] * len(chosen)
    if scheme == CONVENTIONAL:
        weights = conventional_weights([len(p.local_data) for p in chosen])
    elif scheme == TRUST:
        weights = trust_weights([p.claimed_phi for p in chosen])
    else:
        if verification.method == EUCLIDEAN:
            accepted = euclidean_screen(previous, uploads, verification.screen_multiplier)
        screened = [g if ok else 0.0 for g, ok in zip(revenues, accepted)]
        weights, degenerate = revenue_weights(screened)
        if degenerate:
            flags.append("zero_revenue_uniform_weights")
            if any(accepted) and not all(accepted):
                # the uniform fallback must not readmit screened-out uploads
                share = 1.0 / sum(accepted)
                weights = [share if ok else 0.0 for ok in accepted]
        if not all(accepted):
            flags.append("screen_rejected")

    state.global_params = aggregate(uploads, weights)

    if verification.strict_rewards and not all(accepted):
        kept = [i for i, ok in enumerate(accepted) if ok]
        rewards = [0.0] * len(chosen)
        if kept:
            for i, r in zip(kept, softmax_rewards([weights[i] for i in kept], budget)):
                rewards[i] = r
    else:
        rewards = softmax_rewards(weights, budget)

    records = []
    for p, w, g, r, ok in zip(chosen, weights, revenues, rewards, accepted):
        theta = state.theta(p)
        util = sps_utility(theta, r, p.cost.c_total) if r > 0 else None
        records.append(ClientRecord(p.id, p.honest, p.claimed_phi, theta, w, g, r, ok, p.cost, util))

    fairness = None
    if math.fsum(revenues) > 0:
        fairness = fairness_index(rewards, revenues)
    else:
        flags.append("fairness_undefined")

    state.round_index = z
    return RoundReport(
        round=z,
        scheme=scheme,
        selected=list(selection.selected),
        clients=records,
        metrics=evaluate(state.global_params, state.test, state.positive_labels),
        fairness=fairness,
        budget=budget,
        budget_spent=math.fsum(rewards),
        selection_objective=selection.objective,
        deadline=deadline,
        slowest_latency=round_deadline([p.cost for p in chosen]),
        tpr_utility=tpr_utility([(c.theta, c.revenue, c.reward) for c in records]),
        flags=flags,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    scheme: str
    reports: list[RoundReport]
    summary: dict
    trajectory: list[ParameterVector]
    initial_metrics: EvalMetrics


def _summary(
    config: ExperimentConfig,
    scheme: str,
    reports: Sequence[RoundReport],
    initial: EvalMetrics,
) -> dict:
    final = reports[-1].metrics if reports else initial
    fair = [r.fairness for r in reports if r.fairness is not None]
    spent = math.fsum(r.budget_spent for r in reports)
    return {
        "scheme": scheme,
        "rounds": len(reports),
        "final_metrics": final.as_dict(),
        "initial_metrics": initial.as_dict(),
        "best_accuracy": max([r.metrics.accuracy for r in reports], default=initial.accuracy),
        "mean_fairness": (math.fsum(fair) / len(fair)) if fair else None,
        "final_fairness": fair[-1] if fair else None,
        "total_spent": spent,
        "budget_total": config.budget.total,
        "final_deviation": reports[-1].deviation if reports else None,
        "malicious_ids": [],
    }


def _trajectory(
    config: ExperimentConfig, scheme: str, data: PreparedData
) -> tuple[ExperimentState, list[RoundReport], list[ParameterVector], EvalMetrics]:
    state = build_state(config, data)
    verification = verification_from_config(config)
    initial = evaluate(state.global_params, state.test, state.positive_labels)
    reports = []
    traj = [state.global_params]
    for _ in range(config.rounds):
        reports.append(run_round(state, scheme, verification))
        traj.append(state.global_params)
    return state, reports, traj, initial


def run_experiment(
    config: ExperimentConfig,
    scheme: Optional[str] = None,
    data: Optional[PreparedData] = None,
) -> ExperimentResult:
    """Run all rounds; with ``config.deviation`` also replay without adversaries."""
    scheme = scheme or config.scheme
    data = data or prepare_data(config)
    state, reports, traj, initial = _trajectory(config, scheme, data)
    if config.deviation:
        clean_cfg = config.model_copy(deep=True)
        clean_cfg.adversary.malicious_fraction = 0.0
        _, _, clean_traj, _ = _trajectory(clean_cfg, scheme, data)
        for rep, cur, ref in zip(reports, traj[1:], clean_traj[1:]):
            rep.deviation = model_deviation(cur, ref)
    summary = _summary(config, scheme, reports, initial)
    summary["malicious_ids"] = [p.id for p in state.profiles if not p.honest]
    return ExperimentResult(config, scheme, reports, summary, traj, initial)


def centralized_accuracy(config: ExperimentConfig, data: Optional[PreparedData] = None) -> list[float]:
    """Test accuracy per round of one model trained on the pooled training data."""
    data = data or prepare_data(config)
    state = build_state(config, data)
    pooled = LabeledDataset.concat([d for d in data.locals if len(d)])
    params = state.global_params
    out = []
    for z in range(1, config.rounds + 1):
        tc = TrainingConfig(
            config.learner.epochs,
            config.learner.batch_size,
            _learning_rate(config, z),
            derive_seed(config.seed, _TRAIN, z, 10**6),
        )
        params, _ = local_train(params, pooled, tc)
        out.append(accuracy(params, data.test))
    return out


def rounds_to_reach(accuracies: Sequence[float], target: float) -> float:
    """First 1-based round whose accuracy is at least ``target`` (inf if never)."""
    for i, a in enumerate(accuracies, start=1):
        if a >= target:
            return i
    return math.inf


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy ``config`` with dotted-path overrides, e.g. ``adversary__malicious_fraction=0``."""
    data = config.to_dict()
    for key, value in changes.items():
        node = data
        parts = key.split("__")
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = value
    return ExperimentConfig.model_validate(data)

