"""The weakly supervised GAN: generator, shared trunk with discriminator /
code / LF-weight heads, the two interface maps between code space and label
space, and the four-step training loop.

Modes:
  encoder — per-sample LF weights from the weight head (trained by alignment)
  vector  — one shared weight per LF (sigmoid of a free vector)
  infogan — alignment inactive (weight 0); only GAN + info steps run

Classes are 1..C everywhere; votes use 0 for abstain.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .labelmodel import (
    LabelMatrix,
    PosteriorTable,
    _as_votes,
    crisp_labels,
    weighted_softmax_posterior,
)
from .metrics import adjusted_rand_index
from .nn import MLP, Linear, one_hot

__all__ = [
    "TrainingError",
    "TrainingDivergedError",
    "AugmentationRejectedError",
    "TrainingConfig",
    "ModelBundle",
    "TrainingHistory",
    "HISTORY_COLUMNS",
    "clamp_probs",
    "gan_value",
    "generator_loss",
    "binary_cross_entropy",
    "info_loss",
    "cross_entropy",
    "weighted_posterior_tensor",
    "alignment_loss",
    "train",
    "predict_pseudolabels",
    "pseudolabel_table",
    "generate_samples",
    "BalanceReport",
    "class_balance_check",
    "AugmentationResult",
    "augment_dataset",
    "save_bundle",
    "load_bundle",
]

_MODES = ("encoder", "vector", "infogan")
_CLAMP = 1e-7


class TrainingError(Exception):
    pass


class TrainingDivergedError(TrainingError):
    def __init__(self, term: str, epoch: int, value: float):
        super().__init__(f"non-finite {term} at epoch {epoch}: {value!r}")
        self.term = term
        self.epoch = epoch
        self.value = value


class AugmentationRejectedError(TrainingError):
    def __init__(self, report: "BalanceReport"):
        super().__init__(f"class balance check failed: {report.describe()}")
        self.report = report


@dataclass(frozen=True)
class TrainingConfig:
    class_count: int
    num_lfs: int
    feature_dim: int
    mode: str = "encoder"
    z_dim: int = 16
    hidden_dim: int = 64
    epochs: int = 60
    batch_size: int = 16
    info_weight: float = 1.0
    align_weight: float = 1.0
    penalty_decay: float = 1.5
    lr_d: float = 4e-4
    lr_g: float = 1e-4
    lr_info: float = 1e-4
    lr_align: float = 8e-5
    label_smoothing: float = 0.1
    label_flip_prob: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise TrainingError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.class_count < 2:
            raise TrainingError("class_count must be >= 2")
        if self.num_lfs < 1 or self.feature_dim < 1 or self.z_dim < 1 or self.hidden_dim < 1:
            raise TrainingError("num_lfs, feature_dim, z_dim, hidden_dim must be >= 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise TrainingError("epochs must be >= 0 and batch_size >= 1")
        for name in ("lr_d", "lr_g", "lr_info", "lr_align"):
            if getattr(self, name) <= 0:
                raise TrainingError(f"{name} must be positive")
        if self.penalty_decay < 0:
            raise TrainingError("penalty_decay must be >= 0")
        if self.info_weight < 0 or self.align_weight < 0:
            raise TrainingError("loss weights must be >= 0")
        if not 0.0 <= self.label_smoothing < 0.5:
            raise TrainingError("label_smoothing must lie in [0, 0.5)")
        if not 0.0 <= self.label_flip_prob < 0.5:
            raise TrainingError("label_flip_prob must lie in [0, 0.5)")

    @property
    def effective_align_weight(self) -> float:
        return 0.0 if self.mode == "infogan" else self.align_weight


class ModelBundle:
    """All networks plus their four Adam optimizers.

    Initialization consumes draws from `rng` in a fixed order — generator
    layers, trunk layers, discriminator head, code head, weight head, the two
    interface maps — identically for every mode, so different modes under one
    seed start from identical parameters.  The per-LF weight vector (vector
    mode) starts at zero, i.e. weights sigmoid(0) = 0.5, and draws nothing.
    """

    def __init__(self, config: TrainingConfig, rng: np.random.Generator):
        self.config = config
        C, H, m = config.class_count, config.hidden_dim, config.num_lfs
        self.generator = MLP([config.z_dim + C, H, H, config.feature_dim], rng)
        self.trunk = MLP([config.feature_dim, H, H], rng)
        self.disc_head = Linear(H, 1, rng)
        self.code_head = Linear(H, C, rng)
        # near-zero head: weights start at sigmoid(~0) = 0.5 so the label
        # model opens as plain majority vote
        self.weight_head = Linear(H, m, rng, weight_scale=0.01)
        self.code_to_label = Linear(C, C, rng)
        self.label_to_code = Linear(C, C, rng)
        self.weight_vector = Tensor(np.zeros(m), requires_grad=True)

        self.opt_disc = Adam(self.disc_params(), lr=config.lr_d)
        self.opt_gen = Adam(self.gen_params(), lr=config.lr_g)
        self.opt_info = Adam(self.info_params(), lr=config.lr_info)
        self.opt_align = Adam(self.align_params(), lr=config.lr_align)

    # parameter groups, one per loss term
    def disc_params(self) -> list[Tensor]:
        return self.trunk.params + self.disc_head.params

    def gen_params(self) -> list[Tensor]:
        return self.generator.params

    def info_params(self) -> list[Tensor]:
        return self.generator.params + self.trunk.params + self.code_head.params

    def align_params(self) -> list[Tensor]:
        weight_part = [self.weight_vector] if self.config.mode == "vector" else self.weight_head.params
        return (
            self.trunk.params
            + self.code_head.params
            + weight_part
            + self.code_to_label.params
            + self.label_to_code.params
        )

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for prefix, net in (("generator", self.generator), ("trunk", self.trunk)):
            for i, layer in enumerate(net.layers):
                out.append((f"{prefix}.{i}.w", layer.w))
                out.append((f"{prefix}.{i}.b", layer.b))
        for prefix, layer in (
            ("disc_head", self.disc_head),
            ("code_head", self.code_head),
            ("weight_head", self.weight_head),
            ("code_to_label", self.code_to_label),
            ("label_to_code", self.label_to_code),
        ):
            out.append((f"{prefix}.w", layer.w))
            out.append((f"{prefix}.b", layer.b))
        out.append(("weight_vector", self.weight_vector))
        return out

    # forward pieces
    def features(self, x: Tensor) -> Tensor:
        """Shared bounded trunk features in (-1, 1)^hidden."""
        return ad.tanh(self.trunk(x))

    def discriminate(self, feats: Tensor) -> Tensor:
        return ad.sigmoid(self.disc_head(feats))

    def code_posterior(self, feats: Tensor) -> Tensor:
        return ad.softmax(self.code_head(feats))

    def lf_weights(self, feats: Tensor | None = None) -> Tensor:
        """Per-LF reliability weights in (0,1): per-sample (encoder) or shared."""
        if self.config.mode == "vector":
            return ad.sigmoid(self.weight_vector)
        if feats is None:
            raise TrainingError("encoder-mode weights need trunk features")
        return ad.sigmoid(self.weight_head(feats))

    def generate(self, z: np.ndarray, codes: np.ndarray) -> Tensor:
        zc = np.concatenate([z, one_hot(codes, self.config.class_count)], axis=1)
        return self.generator(Tensor(zc))

    def label_posterior_from_code(self, code_probs: Tensor) -> Tensor:
        return ad.softmax(self.code_to_label(code_probs))

    def code_posterior_from_label(self, label_probs: Tensor) -> Tensor:
        return ad.softmax(self.label_to_code(label_probs))


# ---------------------------------------------------------------------------
# losses


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def clamp_probs(p) -> Tensor:
    return ad.clip(_as_tensor(p), _CLAMP, 1.0 - _CLAMP)


def gan_value(d_real, d_fake) -> Tensor:
    """mean log d_real + mean log(1 - d_fake); probabilities clamped away from 0/1."""
    real_term = ad.mean(ad.log(clamp_probs(d_real)))
    fake_term = ad.mean(ad.log(clamp_probs(ad.sub(1.0, _as_tensor(d_fake)))))
    return ad.add(real_term, fake_term)


def generator_loss(d_fake) -> Tensor:
    """Non-saturating generator objective: -mean log d_fake."""
    return ad.scale(ad.mean(ad.log(clamp_probs(d_fake))), -1.0)


def binary_cross_entropy(probs, targets: np.ndarray) -> Tensor:
    p = clamp_probs(probs)
    t = np.asarray(targets, dtype=np.float64)
    pos = ad.mul(ad.log(p), t)
    neg = ad.mul(ad.log(ad.sub(1.0, p)), 1.0 - t)
    return ad.scale(ad.mean(ad.add(pos, neg)), -1.0)


def cross_entropy(pred_probs, target_probs) -> Tensor:
    """Mean soft-target cross-entropy; the target side carries no gradient
    unless a tracked Tensor is passed explicitly."""
    pred = _as_tensor(pred_probs)
    n = pred.data.shape[0]
    return ad.scale(ad.total(ad.mul(ad.log(clamp_probs(pred)), target_probs)), -1.0 / n)


def info_loss(code_onehot: np.ndarray, code_probs) -> Tensor:
    """Mean cross-entropy between predicted code posterior and sampled codes."""
    return cross_entropy(code_probs, np.asarray(code_onehot, dtype=np.float64))


def weighted_posterior_tensor(votes: np.ndarray, weights: Tensor, class_count: int) -> Tensor:
    """Differentiable twin of weighted_softmax_posterior for a vote batch.

    votes: (n, m) ints; weights: (n, m) or broadcastable (m,) Tensor.
    """
    votes = np.asarray(votes, dtype=np.int64)
    m = votes.shape[1]
    ones = np.ones((m, 1))
    cols = [ad.matmul(ad.mul(weights, (votes == k).astype(np.float64)), ones) for k in range(1, class_count + 1)]
    return ad.softmax(ad.concat(cols, axis=1))


def alignment_loss(
    bundle: ModelBundle,
    x_batch: np.ndarray,
    votes_batch: np.ndarray,
    epoch: int,
    config: TrainingConfig | None = None,
) -> tuple[Tensor, dict]:
    """Two interface cross-entropies plus the decaying weight penalty.

    The label-model posterior is built from weights theta = sigmoid of the
    weight head applied to *detached* trunk features (encoder) or of the free
    vector; gradients through theta therefore never reach the trunk.  The
    penalty (C / (epoch*decay + 1)) * ||theta - 0.5||^2 is summed over the m
    weights and averaged over batch rows.
    """
    config = config or bundle.config
    if epoch < 0:
        raise TrainingError("epoch must be >= 0")
    x_batch = np.asarray(x_batch, dtype=np.float64)
    votes_batch = np.asarray(votes_batch, dtype=np.int64)
    n = x_batch.shape[0]
    if n == 0:
        raise TrainingError("empty alignment batch; caller must skip the step")
    if not (votes_batch != 0).any(axis=1).all():
        raise TrainingError("alignment batch contains uncovered rows")
    C = config.class_count

    feats = bundle.features(Tensor(x_batch))
    code_probs = bundle.code_posterior(feats)
    if config.mode == "vector":
        weights = ad.sigmoid(bundle.weight_vector)
        per_row = 1
    else:
        weights = ad.sigmoid(bundle.weight_head(ad.detach(feats)))
        per_row = n
    label_post = weighted_posterior_tensor(votes_batch, weights, C)

    ce_code_side = cross_entropy(bundle.label_posterior_from_code(code_probs), ad.detach(label_post))
    ce_label_side = cross_entropy(bundle.code_posterior_from_label(label_post), ad.detach(code_probs))

    multiplier = C / (epoch * config.penalty_decay + 1.0)
    dev = ad.sub(weights, 0.5)
    penalty = ad.scale(ad.total(ad.mul(dev, dev)), multiplier / per_row)

    loss = ad.add(ad.add(ce_code_side, ce_label_side), penalty)
    parts = {
        "ce_code_side": float(ce_code_side.data),
        "ce_label_side": float(ce_label_side.data),
        "penalty": float(penalty.data),
        "penalty_multiplier": multiplier,
    }
    return loss, parts


# ---------------------------------------------------------------------------
# training


HISTORY_COLUMNS = ("epoch", "d_loss", "g_loss", "info_loss", "align_loss", "penalty", "ari", "pl_accuracy")


@dataclass
class TrainingHistory:
    records: list = field(default_factory=list)

    def add(self, **kwargs) -> None:
        if set(kwargs) != set(HISTORY_COLUMNS):
            raise TrainingError(f"history record must have columns {HISTORY_COLUMNS}")
        self.records.append([kwargs[c] for c in HISTORY_COLUMNS])

    def column(self, name: str) -> list:
        i = HISTORY_COLUMNS.index(name)
        return [r[i] for r in self.records]

    def save_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(HISTORY_COLUMNS) + "\n")
            for rec in self.records:
                cells = [str(int(rec[0]))] + [repr(float(v)) for v in rec[1:]]
                fh.write(",".join(cells) + "\n")
        return path


def _check_finite(value: float, term: str, epoch: int) -> float:
    if not math.isfinite(value):
        raise TrainingDivergedError(term, epoch, value)
    return value


def train(dataset, L, config: TrainingConfig) -> tuple[ModelBundle, TrainingHistory]:
    """Deterministic four-step training loop.

    Per batch: (1) discriminator step on real-vs-generated with label
    smoothing and flipping; (2) non-saturating generator step; (3) info step
    tying codes to generated samples; (4) in encoder/vector modes, the
    alignment step on the covered rows of the batch.  RNG draw order per
    batch: generator inputs for step 1, two flip masks, generator inputs for
    step 2, generator inputs for step 3; the alignment step draws nothing, so
    an encoder run with align_weight=0 reproduces an infogan run bitwise.

    The hidden dataset labels are used only for the per-epoch history metrics
    (ARI of the code head, covered-row pseudolabel accuracy), never in any
    gradient path.
    """
    x = np.asarray(dataset.features, dtype=np.float64)
    hidden_labels = np.asarray(dataset.labels, dtype=np.int64)
    if not np.isfinite(x).all():
        raise TrainingError("dataset features must be finite")
    votes = _as_votes(L)
    if votes.shape[0] != x.shape[0]:
        raise TrainingError("label matrix rows must match dataset rows")
    if x.shape[1] != config.feature_dim or votes.shape[1] != config.num_lfs:
        raise TrainingError("config dims disagree with data")
    covered_mask = (votes != 0).any(axis=1)
    if config.mode != "infogan" and not covered_mask.any():
        raise TrainingError("alignment modes need at least one covered row")

    rng = np.random.default_rng(config.seed)
    bundle = ModelBundle(config, rng)
    history = TrainingHistory()
    n, C, B = x.shape[0], config.class_count, config.batch_size
    smoothing = config.label_smoothing
    real_target, fake_target = 1.0 - smoothing, smoothing
    align_active = config.mode != "infogan"

    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        sums = {"d": 0.0, "g": 0.0, "info": 0.0}
        batches = 0
        align_sum = pen_sum = 0.0
        align_batches = 0
        for lo in range(0, n, B):
            idx = perm[lo : lo + B]
            nb = idx.size
            # fixed draw order (see docstring)
            z_d = rng.standard_normal((nb, config.z_dim))
            b_d = rng.integers(1, C + 1, size=nb)
            flip_real = rng.random(nb) < config.label_flip_prob
            flip_fake = rng.random(nb) < config.label_flip_prob
            z_g = rng.standard_normal((nb, config.z_dim))
            b_g = rng.integers(1, C + 1, size=nb)
            z_i = rng.standard_normal((nb, config.z_dim))
            b_i = rng.integers(1, C + 1, size=nb)

            # (1) discriminator
            with ad.no_grad():
                fake_x = bundle.generate(z_d, b_d).data
            d_real = bundle.discriminate(bundle.features(Tensor(x[idx])))
            d_fake = bundle.discriminate(bundle.features(Tensor(fake_x)))
            real_t = np.where(flip_real, fake_target, real_target)
            fake_t = np.where(flip_fake, real_target, fake_target)
            loss_d = ad.add(binary_cross_entropy(d_real, real_t), binary_cross_entropy(d_fake, fake_t))
            sums["d"] += _check_finite(float(loss_d.data), "d_loss", epoch)
            bundle.opt_disc.zero_grad()
            ad.backward(loss_d)
            bundle.opt_disc.step()

            # (2) generator
            d_fake2 = bundle.discriminate(bundle.features(bundle.generate(z_g, b_g)))
            loss_g = generator_loss(d_fake2)
            sums["g"] += _check_finite(float(loss_g.data), "g_loss", epoch)
            bundle.opt_gen.zero_grad()
            ad.backward(loss_g)
            bundle.opt_gen.step()

            # (3) info
            code_probs = bundle.code_posterior(bundle.features(bundle.generate(z_i, b_i)))
            raw_info = info_loss(one_hot(b_i, C), code_probs)
            sums["info"] += _check_finite(float(raw_info.data), "info_loss", epoch)
            bundle.opt_info.zero_grad()
            ad.backward(ad.scale(raw_info, config.info_weight))
            bundle.opt_info.step()

            # (4) alignment on the covered rows of this batch
            if align_active:
                cov = idx[covered_mask[idx]]
                if cov.size:
                    raw_align, parts = alignment_loss(bundle, x[cov], votes[cov], epoch, config)
                    _check_finite(float(raw_align.data), "align_loss", epoch)
                    align_sum += float(raw_align.data)
                    pen_sum += parts["penalty"]
                    align_batches += 1
                    bundle.opt_align.zero_grad()
                    ad.backward(ad.scale(raw_align, config.align_weight))
                    bundle.opt_align.step()
            batches += 1

        ari, pl_acc = _epoch_metrics(bundle, x, votes, covered_mask, hidden_labels)
        history.add(
            epoch=epoch,
            d_loss=sums["d"] / batches,
            g_loss=sums["g"] / batches,
            info_loss=sums["info"] / batches,
            align_loss=align_sum / align_batches if align_batches else 0.0,
            penalty=pen_sum / align_batches if align_batches else 0.0,
            ari=ari,
            pl_accuracy=pl_acc,
        )
    return bundle, history


def _epoch_metrics(bundle, x, votes, covered_mask, hidden_labels) -> tuple[float, float]:
    with ad.no_grad():
        feats = bundle.features(Tensor(x))
        code_assign = np.argmax(bundle.code_posterior(feats).data, axis=1) + 1
        ari = adjusted_rand_index(code_assign, hidden_labels)
        if not covered_mask.any():
            return ari, 0.0
        if bundle.config.mode == "vector":
            weights = 1.0 / (1.0 + np.exp(-bundle.weight_vector.data))
        else:
            weights = bundle.lf_weights(bundle.features(Tensor(x[covered_mask]))).data
        probs = weighted_softmax_posterior(votes[covered_mask], weights, bundle.config.class_count)
        preds = np.argmax(probs, axis=1) + 1
        pl_acc = float((preds == hidden_labels[covered_mask]).mean())
    return ari, pl_acc


# ---------------------------------------------------------------------------
# inference


def predict_pseudolabels(bundle: ModelBundle, x_row: np.ndarray, votes_row=None) -> tuple[np.ndarray, str]:
    """Posterior for one sample: LF route when any vote exists, otherwise the
    synthetic route through the code head and the code-to-label map."""
    x_row = np.asarray(x_row, dtype=np.float64).reshape(1, -1)
    if votes_row is not None:
        votes_row = np.asarray(votes_row, dtype=np.int64).reshape(-1)
    if votes_row is not None and (votes_row != 0).any():
        with ad.no_grad():
            if bundle.config.mode == "vector":
                weights = 1.0 / (1.0 + np.exp(-bundle.weight_vector.data))
            else:
                weights = bundle.lf_weights(bundle.features(Tensor(x_row))).data[0]
        return weighted_softmax_posterior(votes_row, weights, bundle.config.class_count), "lf"
    with ad.no_grad():
        code = bundle.code_posterior(bundle.features(Tensor(x_row)))
        probs = bundle.label_posterior_from_code(code).data[0]
    return probs, "synthetic"


def pseudolabel_table(bundle: ModelBundle, x: np.ndarray, L=None) -> tuple[PosteriorTable, np.ndarray]:
    """Vectorized posterior for a whole feature matrix.

    Returns the table (covered flag = has votes) and per-row source tags
    ("lf" / "synthetic"), which partition exactly by vote coverage.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    C = bundle.config.class_count
    votes = _as_votes(L) if L is not None else np.zeros((n, bundle.config.num_lfs), dtype=np.int64)
    if votes.shape[0] != n:
        raise TrainingError("label matrix rows must match features")
    covered = (votes != 0).any(axis=1)
    probs = np.empty((n, C))
    tags = np.where(covered, "lf", "synthetic").astype(object)
    with ad.no_grad():
        if (~covered).any():
            code = bundle.code_posterior(bundle.features(Tensor(x[~covered])))
            probs[~covered] = bundle.label_posterior_from_code(code).data
        if covered.any():
            if bundle.config.mode == "vector":
                weights = 1.0 / (1.0 + np.exp(-bundle.weight_vector.data))
            else:
                weights = bundle.lf_weights(bundle.features(Tensor(x[covered]))).data
            probs[covered] = weighted_softmax_posterior(votes[covered], weights, C)
    return PosteriorTable(probs, covered), tags


def generate_samples(
    bundle: ModelBundle, n: int, seed: int = 0, class_id: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (features, codes): z first, then codes (uniform unless fixed)."""
    if n < 0:
        raise TrainingError("n must be >= 0")
    C = bundle.config.class_count
    if n == 0:
        return np.empty((0, bundle.config.feature_dim)), np.empty(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, bundle.config.z_dim))
    if class_id is None:
        codes = rng.integers(1, C + 1, size=n)
    else:
        if not 1 <= class_id <= C:
            raise TrainingError(f"class_id {class_id} outside 1..{C}")
        codes = np.full(n, class_id, dtype=np.int64)
    with ad.no_grad():
        feats = bundle.generate(z, codes).data
    return feats, codes.astype(np.int64)


# ---------------------------------------------------------------------------
# augmentation


@dataclass
class BalanceReport:
    passed: bool
    counts: np.ndarray
    shares: np.ndarray
    ratio: float
    missing: list

    def describe(self) -> str:
        if self.missing:
            return f"classes {self.missing} absent"
        return f"max/min share ratio {self.ratio:.3f}"


def class_balance_check(labels: np.ndarray, class_count: int, tolerance: float = 5.0) -> BalanceReport:
    """Fail when any class is absent or share ratio exceeds `tolerance`."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size < class_count:
        raise TrainingError("need at least class_count labels for a balance check")
    counts = np.array([(labels == c).sum() for c in range(1, class_count + 1)])
    shares = counts / labels.size
    missing = [c for c in range(1, class_count + 1) if counts[c - 1] == 0]
    ratio = float("inf") if missing else float(shares.max() / shares.min())
    passed = not missing and ratio <= tolerance
    return BalanceReport(passed=passed, counts=counts, shares=shares, ratio=ratio, missing=missing)


@dataclass
class AugmentationResult:
    features: np.ndarray
    labels: np.ndarray
    appended: int
    mode: str
    balance: BalanceReport | None


def augment_dataset(
    bundle: ModelBundle,
    base_features: np.ndarray,
    base_labels: np.ndarray,
    n_synth: int,
    mode: str,
    lf_applicator=None,
    seed: int = 0,
    balance_tolerance: float = 5.0,
) -> AugmentationResult:
    """Append n_synth generated points with pseudolabels to a training set.

    mode "synthetic_pl": labels are argmax of the code-to-label map on the
    generated points.  mode "lf_pl": `lf_applicator(features, rng)` produces a
    vote matrix for the generated points and labels follow the bundle's usual
    posterior routing (LF route when covered, synthetic route otherwise).
    The class-balance check runs on the appended labels only; failure rejects
    the augmentation.
    """
    if mode not in ("synthetic_pl", "lf_pl"):
        raise TrainingError(f"unknown augmentation mode {mode!r}")
    base_features = np.asarray(base_features, dtype=np.float64)
    base_labels = np.asarray(base_labels, dtype=np.int64)
    if n_synth < 0:
        raise TrainingError("n_synth must be >= 0")
    if n_synth == 0:
        return AugmentationResult(base_features.copy(), base_labels.copy(), 0, mode, None)
    if mode == "lf_pl" and lf_applicator is None:
        raise TrainingError("lf_pl mode requires an lf_applicator")

    feats, _codes = generate_samples(bundle, n_synth, seed=seed)
    if mode == "synthetic_pl":
        table, _tags = pseudolabel_table(bundle, feats, None)
    else:
        rng = np.random.default_rng((seed, 1))
        votes = np.asarray(lf_applicator(feats, rng), dtype=np.int64)
        if votes.shape != (n_synth, bundle.config.num_lfs):
            raise TrainingError(f"lf_applicator returned shape {votes.shape}")
        table, _tags = pseudolabel_table(bundle, feats, votes)
    new_labels = crisp_labels(table)

    balance = class_balance_check(new_labels, bundle.config.class_count, balance_tolerance)
    if not balance.passed:
        raise AugmentationRejectedError(balance)
    return AugmentationResult(
        features=np.concatenate([base_features, feats], axis=0),
        labels=np.concatenate([base_labels, new_labels]),
        appended=n_synth,
        mode=mode,
        balance=balance,
    )


# ---------------------------------------------------------------------------
# checkpointing


def save_bundle(bundle: ModelBundle, path, rng_state: dict | None = None) -> Path:
    """Versioned JSON checkpoint: config, every parameter array, RNG state.

    Optimizer moments are not serialized; a loaded bundle restarts its
    optimizers fresh.
    """
    path = Path(path)
    payload = {
        "format_version": 1,
        "config": asdict(bundle.config),
        "params": {name: t.data.tolist() for name, t in bundle.named_params()},
        "rng_state": rng_state,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    return path


def load_bundle(path) -> tuple[ModelBundle, dict | None]:
    path = Path(path)
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise TrainingError(f"unsupported checkpoint version {payload.get('format_version')!r}")
    config = TrainingConfig(**payload["config"])
    bundle = ModelBundle(config, np.random.default_rng(0))
    for name, tensor in bundle.named_params():
        stored = np.asarray(payload["params"][name], dtype=np.float64)
        if stored.shape != tensor.data.shape:
            raise TrainingError(f"checkpoint param {name} has shape {stored.shape}, expected {tensor.data.shape}")
        tensor.data = stored
    return bundle, payload.get("rng_state")
