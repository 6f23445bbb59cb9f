"""Experiment orchestration: the desk benchmark (majority vote, Dawid-Skene,
InfoGAN, and the two WSGAN modes over several seeds), the numerical theory
suite, and the augmentation study.  All runs derive their randomness from one
experiment seed through named streams, and all CSV cells are written with
repr() so identical configs produce byte-identical outputs.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, DatasetSpec, save_dataset, synth_dataset
from .labelmodel import (
    LabelMatrix,
    LfSpec,
    crisp_labels,
    dawid_skene_fit,
    generate_synthetic_lfs,
    majority_vote,
    save_label_matrix,
)
from .metrics import (
    ClassifierConfig,
    EvalReport,
    adjusted_rand_index,
    frechet_gaussian_distance,
    pseudolabel_accuracy,
    train_eval_classifier,
    weighted_f1,
    weighted_map,
)
from .theory import (
    TheoryError,
    TheoryReport,
    generalization_bound_entry,
    hellinger_tv_entry,
    min_lfs,
    min_lfs_entry,
    mv_bound_entry,
    random_finite_joint,
    verify_rcgan_tv_chain,
)
from .wsgan import (
    AugmentationRejectedError,
    TrainingConfig,
    augment_dataset,
    generate_samples,
    load_bundle,
    pseudolabel_table,
    save_bundle,
    train,
)

__all__ = [
    "HarnessError",
    "LfPlan",
    "ExperimentConfig",
    "TheoryGridConfig",
    "default_benchmark_config",
    "config_hash",
    "derive_seed",
    "RunManifest",
    "run_benchmark",
    "summarize_rows",
    "run_theory_suite",
    "run_augmentation",
    "load_experiment_config",
    "load_theory_grid",
    "verify_benchmark_dir",
    "BENCHMARK_MODELS",
    "METRIC_NAMES",
]


class HarnessError(Exception):
    pass


BENCHMARK_MODELS = ("majority_vote", "dawid_skene", "infogan", "wsgan_vector", "wsgan_encoder")
METRIC_NAMES = ("covered_accuracy", "weighted_f1", "weighted_map", "ari", "frechet")

# named RNG streams hanging off each run seed
_STREAM_DATA = 0
_STREAM_LF = 1
_STREAM_TRAIN = 2
_STREAM_CLASSIFIER = 3
_STREAM_AUG = 4
_STREAM_TEST = 5
_STREAM_GEN = 6


def derive_seed(*keys: int) -> int:
    """Stable child seed from a tuple of integer keys."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


@dataclass(frozen=True)
class LfPlan:
    """Recipe for sampling a family of labeling functions per run seed."""

    num_lfs: int = 12
    accuracy_range: tuple = (0.55, 0.9)
    propensity_range: tuple = (0.1, 0.3)

    def __post_init__(self):
        if self.num_lfs < 1:
            raise HarnessError("num_lfs must be >= 1")
        for lo, hi in (self.accuracy_range, self.propensity_range):
            if not (0 < lo <= hi <= 1):
                raise HarnessError("ranges must satisfy 0 < lo <= hi <= 1")

    def sample(self, class_count: int, rng: np.random.Generator) -> list[LfSpec]:
        """Draw target class, accuracy, propensity, and a vote seed per LF.

        (accuracy, propensity) pairs are redrawn until accuracy*propensity
        <= 0.9/class_count, so the exact-count vote construction stays
        feasible on roughly class-balanced data.
        """
        cap = 0.9 / class_count
        specs = []
        for _ in range(self.num_lfs):
            target = int(rng.integers(1, class_count + 1))
            for _attempt in range(1000):
                acc = float(rng.uniform(*self.accuracy_range))
                prop = float(rng.uniform(*self.propensity_range))
                if acc * prop <= cap:
                    break
            else:
                raise HarnessError(
                    f"no feasible (accuracy, propensity) under cap {cap:.3f}; narrow the plan ranges"
                )
            acc = max(acc, 1.0 / class_count + 1e-6)  # keep better-than-chance
            specs.append(LfSpec(target_class=target, accuracy=acc, propensity=prop, seed=int(rng.integers(2**31))))
        return specs


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = DatasetSpec()
    lf_plan: LfPlan = LfPlan()
    training: TrainingConfig = None
    seeds: tuple = (101, 102, 103)
    metrics: tuple = METRIC_NAMES
    classifier: ClassifierConfig = ClassifierConfig()

    def __post_init__(self):
        if not self.seeds:
            raise HarnessError("need at least one seed")
        bad = [m for m in self.metrics if m not in METRIC_NAMES]
        if bad:
            raise HarnessError(f"unknown metrics {bad}; choose from {METRIC_NAMES}")
        base = self.training if self.training is not None else TrainingConfig(
            class_count=self.dataset.class_count,
            num_lfs=self.lf_plan.num_lfs,
            feature_dim=self.dataset.feature_dim,
        )
        # dimension fields are derived from the dataset and LF plan
        synced = dataclasses.replace(
            base,
            class_count=self.dataset.class_count,
            num_lfs=self.lf_plan.num_lfs,
            feature_dim=self.dataset.feature_dim,
        )
        object.__setattr__(self, "training", synced)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        out["metrics"] = list(self.metrics)
        return out


def default_benchmark_config() -> ExperimentConfig:
    """The desk benchmark: 4 Gaussian blobs in 2-D, 12 LFs, 3 seeds."""
    return ExperimentConfig()


def config_hash(config) -> str:
    payload = config.to_dict() if hasattr(config, "to_dict") else asdict(config)
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def load_experiment_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return experiment_config_from_dict(raw)


def experiment_config_from_dict(raw: dict) -> ExperimentConfig:
    kwargs = {}
    if "dataset" in raw:
        kwargs["dataset"] = DatasetSpec(**raw["dataset"])
    if "lf_plan" in raw:
        plan = dict(raw["lf_plan"])
        for key in ("accuracy_range", "propensity_range"):
            if key in plan:
                plan[key] = tuple(plan[key])
        kwargs["lf_plan"] = LfPlan(**plan)
    if "training" in raw and raw["training"] is not None:
        kwargs["training"] = TrainingConfig(**raw["training"])
    if "seeds" in raw:
        kwargs["seeds"] = tuple(raw["seeds"])
    if "metrics" in raw:
        kwargs["metrics"] = tuple(raw["metrics"])
    if "classifier" in raw:
        kwargs["classifier"] = ClassifierConfig(**raw["classifier"])
    return ExperimentConfig(**kwargs)


# ---------------------------------------------------------------------------
# CSV helpers — repr() cells for byte-stable floats


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: list, rows: list) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path) -> tuple[list, list]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class RunManifest:
    config_hash: str
    version: str
    seeds: list
    files: dict = field(default_factory=dict)
    checkpoints: dict = field(default_factory=dict)
    wall_times: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def save_json(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @staticmethod
    def load_json(path) -> "RunManifest":
        with open(path) as fh:
            return RunManifest(**json.load(fh))


def _metric_row(seed, model, table, ari_value, data: Dataset, gen_feats, config) -> list:
    """One benchmark row; NaN marks metrics a model does not define."""
    labels = np.asarray(data.labels)
    values = {name: float("nan") for name in METRIC_NAMES}
    covered = table.covered
    if covered.any():
        values["covered_accuracy"] = pseudolabel_accuracy(table, labels)
        preds = crisp_labels(table)[covered]
        values["weighted_f1"] = weighted_f1(preds, labels[covered])
        values["weighted_map"] = weighted_map(table, labels)
    if ari_value is not None:
        values["ari"] = ari_value
    if gen_feats is not None:
        values["frechet"] = frechet_gaussian_distance(data.features, gen_feats)
    return [seed, model] + [values[m] for m in config.metrics]


def run_benchmark(config: ExperimentConfig, out_dir) -> RunManifest:
    """Train every model on every seed; write per-seed rows, the mean/std
    summary, training histories, checkpoints, and a manifest.

    A failed model run is recorded in manifest.failures and leaves NaN rows;
    remaining runs continue.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=config_hash(config), version=__version__, seeds=list(config.seeds))
    rows = []
    n_gen = 1000  # sample count for the generated-vs-real Gaussian distance

    for seed in config.seeds:
        seed_dir = out_dir / f"seed_{seed}"
        seed_dir.mkdir(exist_ok=True)
        data_spec = dataclasses.replace(config.dataset, seed=derive_seed(seed, _STREAM_DATA))
        data = synth_dataset(data_spec)
        save_dataset(data, seed_dir / "dataset.csv")
        lf_rng = np.random.default_rng(derive_seed(seed, _STREAM_LF))
        specs = config.lf_plan.sample(config.dataset.class_count, lf_rng)
        L = generate_synthetic_lfs(data.labels, specs, config.dataset.class_count)
        save_label_matrix(L, seed_dir / "lfs.csv")
        labels = np.asarray(data.labels)
        C = config.dataset.class_count

        # label-model baselines
        mv_table = majority_vote(L, C)
        rows.append(_metric_row(seed, "majority_vote", mv_table, None, data, None, config))
        try:
            ds = dawid_skene_fit(L, C)
            rows.append(_metric_row(seed, "dawid_skene", ds.posteriors, None, data, None, config))
        except Exception as exc:  # keep the sweep alive
            manifest.failures.append({"seed": seed, "model": "dawid_skene", "error": repr(exc)})
            rows.append([seed, "dawid_skene"] + [float("nan")] * len(config.metrics))

        # GAN family, one mode at a time, identical training seed for pairing
        train_seed = derive_seed(seed, _STREAM_TRAIN)
        for model, mode in (("infogan", "infogan"), ("wsgan_vector", "vector"), ("wsgan_encoder", "encoder")):
            tcfg = dataclasses.replace(config.training, mode=mode, seed=train_seed)
            t0 = time.perf_counter()
            try:
                bundle, history = train(data, L, tcfg)
            except Exception as exc:
                manifest.failures.append({"seed": seed, "model": model, "error": repr(exc)})
                rows.append([seed, model] + [float("nan")] * len(config.metrics))
                continue
            manifest.wall_times[f"{model}_seed{seed}"] = time.perf_counter() - t0
            history.save_csv(seed_dir / f"history_{model}.csv")
            ckpt = save_bundle(bundle, seed_dir / f"checkpoint_{model}.json")
            manifest.checkpoints[f"{model}_seed{seed}"] = str(ckpt)
            table, _tags = pseudolabel_table(bundle, data.features, L)
            gen_feats, _codes = generate_samples(bundle, n_gen, seed=derive_seed(seed, _STREAM_GEN))
            ari = history.records[-1][history_ari_index()] if history.records else float("nan")
            rows.append(_metric_row(seed, model, table, ari, data, gen_feats, config))

    header = ["seed", "model"] + list(config.metrics)
    manifest.files["per_seed"] = str(write_csv(out_dir / "per_seed.csv", header, rows))
    summary_rows = summarize_rows(rows, config.metrics)
    manifest.files["summary"] = str(
        write_csv(out_dir / "summary.csv", ["model", "metric", "mean", "std"], summary_rows)
    )
    with open(out_dir / "config.json", "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.files["config"] = str(out_dir / "config.json")
    manifest.save_json(out_dir / "manifest.json")
    return manifest


def history_ari_index() -> int:
    from .wsgan import HISTORY_COLUMNS

    return HISTORY_COLUMNS.index("ari")


def summarize_rows(rows: list, metrics) -> list:
    """Mean/std (population) per model and metric, in model declaration order."""
    out = []
    for model in BENCHMARK_MODELS:
        model_rows = [r for r in rows if r[1] == model]
        if not model_rows:
            continue
        for j, metric in enumerate(metrics):
            vals = np.array([float(r[2 + j]) for r in model_rows])
            out.append([model, metric, float(np.mean(vals)), float(np.std(vals))])
    return out


def verify_benchmark_dir(out_dir) -> list:
    """Recompute summary.csv from per_seed.csv; return list of mismatches."""
    out_dir = Path(out_dir)
    header, raw_rows = read_csv(out_dir / "per_seed.csv")
    metrics = header[2:]
    rows = [[int(r[0]), r[1]] + [float(v) for v in r[2:]] for r in raw_rows]
    expected = summarize_rows(rows, metrics)
    _, raw_summary = read_csv(out_dir / "summary.csv")
    mismatches = []
    if len(raw_summary) != len(expected):
        return [f"summary has {len(raw_summary)} rows, recompute gives {len(expected)}"]
    for got, want in zip(raw_summary, expected):
        got_vals = [got[0], got[1], float(got[2]), float(got[3])]
        want_vals = [want[0], want[1], float(want[2]), float(want[3])]
        same = got_vals[:2] == want_vals[:2] and all(
            (np.isnan(g) and np.isnan(w)) or g == w for g, w in zip(got_vals[2:], want_vals[2:])
        )
        if not same:
            mismatches.append(f"row {got} != recomputed {want}")
    return mismatches


# ---------------------------------------------------------------------------
# theory suite


@dataclass(frozen=True)
class TheoryGridConfig:
    m_values: tuple = (3, 7, 15)
    alpha_values: tuple = (0.1, 0.2, 0.3)
    eps_values: tuple = (0.1, 0.2, 0.3, 0.4)
    eps_lambda_values: tuple = (0.1, 0.2, 0.3, 0.4)
    mc_trials: int = 100_000
    num_joints: int = 50
    max_support: int = 32
    hellinger_pairs: int = 1000
    seed: int = 7

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("m_values", "alpha_values", "eps_values", "eps_lambda_values"):
            out[key] = list(out[key])
        return out


def load_theory_grid(path) -> TheoryGridConfig:
    with open(path) as fh:
        raw = json.load(fh)
    for key in ("m_values", "alpha_values", "eps_values", "eps_lambda_values"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return TheoryGridConfig(**raw)


def run_theory_suite(grid: TheoryGridConfig | None = None, out_dir=None) -> TheoryReport:
    """Numerically check every bound on the grid.  Invalid grid points (e.g.
    a vote-error rate at or beyond the 0.49 cutoff) become "rejected_input"
    entries — reported, not fatal — and the run continues.
    """
    grid = grid or TheoryGridConfig()
    report = TheoryReport()

    for m in grid.m_values:
        for alpha in grid.alpha_values:
            report.add(mv_bound_entry(m, alpha, trials=grid.mc_trials, seed=derive_seed(grid.seed, m, int(alpha * 1000))))

    for eps_lambda in grid.eps_lambda_values:
        try:
            report.add(min_lfs_entry(eps_lambda))
        except TheoryError as exc:
            report.add_rejected("min_lfs", {"eps_lambda": eps_lambda}, str(exc))

    rng = np.random.default_rng(derive_seed(grid.seed, 999))
    valid_mv = [e for e in grid.eps_lambda_values if 0 < e < 0.49]
    for j in range(grid.num_joints):
        support = int(rng.integers(2, grid.max_support + 1))
        P = random_finite_joint(rng, support)
        Q = random_finite_joint(rng, support)
        for eps in grid.eps_values:
            with_mv = None
            if valid_mv:
                eps_lambda = valid_mv[j % len(valid_mv)]
                with_mv = (min_lfs(eps_lambda), eps_lambda)
            report.add(verify_rcgan_tv_chain(P, Q, eps, with_mv=with_mv))

    report.add(hellinger_tv_entry(num_pairs=grid.hellinger_pairs, max_support=grid.max_support, seed=grid.seed))
    report.add(generalization_bound_entry())

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.save_json(out_dir / "theory_report.json")
        with open(out_dir / "theory_report.txt", "w") as fh:
            fh.write(report.to_text())
        with open(out_dir / "theory_grid.json", "w") as fh:
            json.dump(grid.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# augmentation study


AUG_MODES = ("synthetic_pl", "lf_pl")
AUG_HEADER = ["seed", "mode", "baseline_accuracy", "augmented_accuracy", "delta", "balance_passed", "n_synth"]


def run_augmentation(
    config: ExperimentConfig,
    n_synth: int = 1000,
    modes=AUG_MODES,
    out_dir=None,
    manifest: RunManifest | None = None,
) -> list:
    """Compare an end classifier trained on pseudolabeled real data against
    one trained on the same data plus generated points.

    Encoder checkpoints are reused from a benchmark manifest when given,
    otherwise trained afresh per seed.  Returns the CSV rows; a rejected
    augmentation (balance failure) yields a row with NaN accuracies and
    balance_passed False.
    """
    for mode in modes:
        if mode not in AUG_MODES:
            raise HarnessError(f"unknown augmentation mode {mode!r}")
    rows = []
    for seed in config.seeds:
        data_spec = dataclasses.replace(config.dataset, seed=derive_seed(seed, _STREAM_DATA))
        data = synth_dataset(data_spec)
        lf_rng = np.random.default_rng(derive_seed(seed, _STREAM_LF))
        specs = config.lf_plan.sample(config.dataset.class_count, lf_rng)
        L = generate_synthetic_lfs(data.labels, specs, config.dataset.class_count)
        test_spec = dataclasses.replace(config.dataset, seed=derive_seed(seed, _STREAM_TEST))
        test = synth_dataset(test_spec)

        key = f"wsgan_encoder_seed{seed}"
        if manifest is not None and key in manifest.checkpoints:
            bundle, _state = load_bundle(manifest.checkpoints[key])
        else:
            tcfg = dataclasses.replace(config.training, mode="encoder", seed=derive_seed(seed, _STREAM_TRAIN))
            bundle, _history = train(data, L, tcfg)

        table, _tags = pseudolabel_table(bundle, data.features, L)
        pls = crisp_labels(table)
        cls_cfg = dataclasses.replace(config.classifier, seed=derive_seed(seed, _STREAM_CLASSIFIER))
        baseline = train_eval_classifier(data.features, pls, test.features, test.labels, cls_cfg)

        applicator = make_lf_applicator(specs, config.dataset)
        for mode in modes:
            try:
                aug = augment_dataset(
                    bundle,
                    data.features,
                    pls,
                    n_synth,
                    mode,
                    lf_applicator=applicator if mode == "lf_pl" else None,
                    seed=derive_seed(seed, _STREAM_AUG),
                )
                augmented = train_eval_classifier(aug.features, aug.labels, test.features, test.labels, cls_cfg)
                rows.append([seed, mode, baseline, augmented, augmented - baseline, True, n_synth])
            except AugmentationRejectedError:
                rows.append([seed, mode, baseline, float("nan"), float("nan"), False, n_synth])
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "augmentation.csv", AUG_HEADER, rows)
    return rows


def make_lf_applicator(specs: list, data_spec: DatasetSpec):
    """Vote process for generated points, mirroring each LF's accuracy and
    propensity against a proxy class (nearest dataset prototype).

    Per spec j with target class t, accuracy a, propensity p: a point with
    proxy class t votes t with probability min(1, a*p*C); a point with proxy
    class k != t votes t with probability min(1, (1-a)*p*C/(C-1)).  Those
    conditional rates reproduce the LF's marginal coverage and accuracy on a
    class-balanced population (up to the caps).
    """
    from .data import nearest_prototype_labels

    C = data_spec.class_count

    def apply(features: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        proxy = nearest_prototype_labels(features, data_spec)
        votes = np.zeros((features.shape[0], len(specs)), dtype=np.int64)
        for j, spec in enumerate(specs):
            on_target = proxy == spec.target_class
            p_hit = min(1.0, spec.accuracy * spec.propensity * C)
            p_miss = min(1.0, (1.0 - spec.accuracy) * spec.propensity * C / (C - 1))
            fire = rng.random(features.shape[0]) < np.where(on_target, p_hit, p_miss)
            votes[fire, j] = spec.target_class
        return votes

    return apply
