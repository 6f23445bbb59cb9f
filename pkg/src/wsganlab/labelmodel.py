"""Label matrices, synthetic labeling functions, and label models.

Conventions used throughout the package: classes are 1..C, a vote of 0 means
the labeling function (LF) abstained, and every argmax over classes breaks
ties toward the lowest class index (numpy's first-maximum rule).
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "WeakSupError",
    "InfeasibleLfSpecError",
    "DegenerateLabelMatrixWarning",
    "LfSpec",
    "LabelMatrix",
    "PosteriorTable",
    "LfStats",
    "DawidSkeneResult",
    "generate_synthetic_lfs",
    "lf_stats",
    "coverage_filter",
    "majority_vote",
    "weighted_softmax_posterior",
    "weighted_posterior_table",
    "crisp_labels",
    "dawid_skene_fit",
    "save_label_matrix",
    "load_label_matrix",
]


class WeakSupError(Exception):
    pass


class InfeasibleLfSpecError(WeakSupError):
    """The requested (accuracy, propensity) pair cannot be realized exactly."""


class DegenerateLabelMatrixWarning(UserWarning):
    """Every LF column is constant (e.g. all abstains); label models degenerate."""


@dataclass(frozen=True)
class LfSpec:
    """A unipolar LF: votes `target_class` or abstains.

    `accuracy` is the fraction of its votes placed on true members of the
    target class; `propensity` the fraction of all samples it votes on.
    """

    target_class: int
    accuracy: float
    propensity: float
    seed: int = 0

    def validate(self, class_count: int) -> None:
        if not 1 <= self.target_class <= class_count:
            raise WeakSupError(f"target_class {self.target_class} outside 1..{class_count}")
        if not (1.0 / class_count) < self.accuracy <= 1.0:
            raise WeakSupError(
                f"accuracy {self.accuracy} must exceed chance 1/{class_count} and be <= 1"
            )
        if not 0.0 < self.propensity <= 1.0:
            raise WeakSupError(f"propensity {self.propensity} outside (0, 1]")


def _as_votes(L) -> np.ndarray:
    votes = L.votes if isinstance(L, LabelMatrix) else np.asarray(L, dtype=np.int64)
    if votes.ndim != 2:
        raise WeakSupError(f"label matrix must be 2-D, got shape {votes.shape}")
    return votes


class LabelMatrix:
    """(n, m) integer vote matrix with its class count.

    Entries must lie in 0..class_count (0 = abstain).  An all-constant-columns
    matrix is allowed but triggers DegenerateLabelMatrixWarning since no label
    model can extract signal from it.
    """

    def __init__(self, votes: np.ndarray, class_count: int, lf_specs: list[LfSpec] | None = None):
        votes = np.asarray(votes, dtype=np.int64)
        if votes.ndim != 2:
            raise WeakSupError(f"votes must be 2-D, got shape {votes.shape}")
        if class_count < 2:
            raise WeakSupError("class_count must be >= 2")
        if votes.size and (votes.min() < 0 or votes.max() > class_count):
            raise WeakSupError("votes outside 0..class_count")
        if lf_specs is not None and len(lf_specs) != votes.shape[1]:
            raise WeakSupError("lf_specs length must match the number of columns")
        self.votes = votes
        self.class_count = int(class_count)
        self.lf_specs = lf_specs
        if votes.size and all((votes[:, j] == votes[0, j]).all() for j in range(votes.shape[1])):
            warnings.warn("every LF column is constant", DegenerateLabelMatrixWarning)

    @property
    def num_samples(self) -> int:
        return self.votes.shape[0]

    @property
    def num_lfs(self) -> int:
        return self.votes.shape[1]


@dataclass
class PosteriorTable:
    """Per-row class posteriors plus a coverage mask.

    Rows must be valid distributions; uncovered rows hold the uniform
    distribution by convention.
    """

    probs: np.ndarray
    covered: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.covered = np.asarray(self.covered, dtype=bool)
        if self.probs.ndim != 2 or self.covered.shape != (self.probs.shape[0],):
            raise WeakSupError("probs must be (n, C) with covered of length n")
        if self.probs.size:
            if self.probs.min() < -1e-12:
                raise WeakSupError("negative posterior entry")
            if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-10):
                raise WeakSupError("posterior rows must sum to 1")

    @property
    def class_count(self) -> int:
        return self.probs.shape[1]


def generate_synthetic_lfs(
    true_labels: np.ndarray,
    specs: list[LfSpec],
    class_count: int | None = None,
) -> LabelMatrix:
    """Realize unipolar LFs with exact vote counts.

    For each spec: v = round(propensity*n) votes total, round(accuracy*v) of
    them on rows of the target class and the rest on other rows, both chosen
    without replacement using each LfSpec's own seed.  Raises
    InfeasibleLfSpecError when a class has too few rows to host the votes.
    """
    y = np.asarray(true_labels, dtype=np.int64)
    if y.ndim != 1 or y.size == 0:
        raise WeakSupError("true_labels must be a non-empty 1-D array")
    if class_count is None:
        class_count = int(y.max())
    if y.min() < 1 or y.max() > class_count:
        raise WeakSupError("true labels outside 1..class_count")
    n = y.size
    votes = np.zeros((n, len(specs)), dtype=np.int64)
    for j, spec in enumerate(specs):
        spec.validate(class_count)
        if not (y == spec.target_class).any():
            raise WeakSupError(f"LF {j}: target class {spec.target_class} absent from labels")
        v = int(round(spec.propensity * n))
        tp = int(round(spec.accuracy * v))
        fp = v - tp
        pos = np.flatnonzero(y == spec.target_class)
        neg = np.flatnonzero(y != spec.target_class)
        if tp > pos.size or fp > neg.size:
            raise InfeasibleLfSpecError(
                f"LF {j}: needs {tp} votes on class {spec.target_class} "
                f"({pos.size} rows) and {fp} elsewhere ({neg.size} rows)"
            )
        rng = np.random.default_rng(spec.seed)
        chosen_pos = rng.choice(pos, size=tp, replace=False)
        chosen_neg = rng.choice(neg, size=fp, replace=False)
        votes[chosen_pos, j] = spec.target_class
        votes[chosen_neg, j] = spec.target_class
    return LabelMatrix(votes, class_count, lf_specs=list(specs))


@dataclass
class LfStats:
    accuracy: np.ndarray
    coverage: np.ndarray
    defined: np.ndarray
    mean_accuracy: float
    min_accuracy: float
    max_accuracy: float
    mean_coverage: float


def lf_stats(L, true_labels: np.ndarray) -> LfStats:
    """Realized per-LF accuracy and coverage against the given labels.

    Accuracy is undefined (NaN, defined=False) for an LF with no votes;
    summary accuracy stats skip undefined entries.
    """
    votes = _as_votes(L)
    y = np.asarray(true_labels, dtype=np.int64)
    if y.shape != (votes.shape[0],):
        raise WeakSupError("true_labels length must match the matrix rows")
    voted = votes != 0
    counts = voted.sum(axis=0)
    correct = ((votes == y[:, None]) & voted).sum(axis=0)
    with np.errstate(invalid="ignore"):
        accuracy = np.where(counts > 0, correct / np.maximum(counts, 1), np.nan)
    coverage = counts / votes.shape[0]
    defined = counts > 0
    acc_def = accuracy[defined]
    return LfStats(
        accuracy=accuracy,
        coverage=coverage,
        defined=defined,
        mean_accuracy=float(acc_def.mean()) if acc_def.size else float("nan"),
        min_accuracy=float(acc_def.min()) if acc_def.size else float("nan"),
        max_accuracy=float(acc_def.max()) if acc_def.size else float("nan"),
        mean_coverage=float(coverage.mean()) if coverage.size else float("nan"),
    )


def coverage_filter(L) -> np.ndarray:
    """Indices of rows with at least one non-abstain vote."""
    votes = _as_votes(L)
    return np.flatnonzero((votes != 0).any(axis=1))


def _vote_counts(votes: np.ndarray, class_count: int) -> np.ndarray:
    counts = np.empty((votes.shape[0], class_count))
    for k in range(1, class_count + 1):
        counts[:, k - 1] = (votes == k).sum(axis=1)
    return counts


def majority_vote(L, class_count: int | None = None) -> PosteriorTable:
    """Per-row vote shares: mass split uniformly over the most-voted classes.

    Rows with no votes get the uniform distribution and covered=False.
    """
    votes = _as_votes(L)
    if class_count is None:
        if not isinstance(L, LabelMatrix):
            raise WeakSupError("class_count required for a raw vote array")
        class_count = L.class_count
    counts = _vote_counts(votes, class_count)
    covered = counts.sum(axis=1) > 0
    probs = np.full((votes.shape[0], class_count), 1.0 / class_count)
    if covered.any():
        c = counts[covered]
        winners = c == c.max(axis=1, keepdims=True)
        probs[covered] = winners / winners.sum(axis=1, keepdims=True)
    return PosteriorTable(probs, covered)


def weighted_softmax_posterior(votes, weights, class_count: int) -> np.ndarray:
    """Softmax over per-class weighted vote scores.

    score_k = sum_j weights_j * 1{vote_j == k}.  Accepts a single row (m,) or
    a batch (n, m); weights may be shared (m,) or per-row (n, m).  A row with
    no votes scores zero everywhere and comes out uniform.
    """
    votes = np.asarray(votes, dtype=np.int64)
    single = votes.ndim == 1
    v = votes[None, :] if single else votes
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim == 1:
        w = np.broadcast_to(w, v.shape)
    if w.shape != v.shape:
        raise WeakSupError(f"weights shape {w.shape} incompatible with votes {v.shape}")
    scores = np.empty((v.shape[0], class_count))
    for k in range(1, class_count + 1):
        scores[:, k - 1] = (w * (v == k)).sum(axis=1)
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs[0] if single else probs


def weighted_posterior_table(L, weights, class_count: int | None = None) -> PosteriorTable:
    votes = _as_votes(L)
    if class_count is None:
        if not isinstance(L, LabelMatrix):
            raise WeakSupError("class_count required for a raw vote array")
        class_count = L.class_count
    probs = weighted_softmax_posterior(votes, weights, class_count)
    covered = (votes != 0).any(axis=1)
    return PosteriorTable(probs, covered)


def crisp_labels(posteriors) -> np.ndarray:
    """Argmax class ids (1..C), ties to the lowest class index."""
    probs = posteriors.probs if isinstance(posteriors, PosteriorTable) else np.asarray(posteriors)
    return np.argmax(probs, axis=1).astype(np.int64) + 1


# ---------------------------------------------------------------------------
# one-coin Dawid-Skene


@dataclass
class DawidSkeneResult:
    posteriors: PosteriorTable
    accuracies: np.ndarray
    prior: np.ndarray
    log_likelihood: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def dawid_skene_fit(
    L,
    class_count: int | None = None,
    max_iters: int = 200,
    tol: float = 1e-6,
    init_accuracy: float = 0.7,
    update_prior: bool = True,
) -> DawidSkeneResult:
    """One-coin Dawid-Skene EM.

    Each LF has a single accuracy a_j: a covered vote equals the true label
    with probability a_j and is otherwise uniform over the remaining C-1
    classes.  E-step posteriors are computed in the log domain; the M-step is
    the posterior-weighted agreement rate, clamped to [1e-4, 1-1e-4].  The
    marginal log-likelihood is recorded each iteration and is monotone
    non-decreasing; convergence is an absolute change below `tol`.
    """
    votes = _as_votes(L)
    if class_count is None:
        if not isinstance(L, LabelMatrix):
            raise WeakSupError("class_count required for a raw vote array")
        class_count = L.class_count
    n, m = votes.shape
    if n == 0:
        raise WeakSupError("empty label matrix")
    C = class_count
    voted = votes != 0
    vote_counts = voted.sum(axis=0)

    acc = np.clip(np.full(m, float(init_accuracy)), 1e-4, 1.0 - 1e-4)
    prior = np.full(C, 1.0 / C)
    covered = voted.any(axis=1)

    # agree[i, j, k] would be O(n*m*C); instead precompute per-class agreement masks
    agree = [votes == k for k in range(1, C + 1)]  # list of (n, m) bool

    trace: list[float] = []
    converged = False
    it = 0
    posteriors = np.full((n, C), 1.0 / C)
    for it in range(1, max_iters + 1):
        log_acc = np.log(acc)
        log_err = np.log((1.0 - acc) / (C - 1))
        # log P(votes_i | y=k) = sum_j agree*log a_j + disagree*log err_j over covered votes
        log_lik = np.empty((n, C))
        for k in range(C):
            a_mask = agree[k]
            d_mask = voted & ~a_mask
            log_lik[:, k] = a_mask @ log_acc + d_mask @ log_err
        joint = log_lik + np.log(prior)[None, :]
        ll = float(logsumexp(joint, axis=1).sum())
        trace.append(ll)

        z = joint - joint.max(axis=1, keepdims=True)
        e = np.exp(z)
        posteriors = e / e.sum(axis=1, keepdims=True)

        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol:
            converged = True
            break

        # M-step
        agree_weight = np.zeros(m)
        for k in range(C):
            agree_weight += posteriors[:, k] @ agree[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            new_acc = np.where(vote_counts > 0, agree_weight / np.maximum(vote_counts, 1), acc)
        acc = np.clip(new_acc, 1e-4, 1.0 - 1e-4)
        if update_prior:
            prior = posteriors.mean(axis=0)
            prior = np.clip(prior, 1e-9, None)
            prior = prior / prior.sum()

    if not converged:
        warnings.warn(f"Dawid-Skene did not converge in {max_iters} iterations", RuntimeWarning)
    probs = posteriors.copy()
    probs[~covered] = 1.0 / C
    return DawidSkeneResult(
        posteriors=PosteriorTable(probs, covered),
        accuracies=acc,
        prior=prior,
        log_likelihood=trace,
        converged=converged,
        iterations=it,
    )


# ---------------------------------------------------------------------------
# serialization


def save_label_matrix(lm: LabelMatrix, csv_path) -> tuple[Path, Path]:
    """Write votes as CSV (header lf_0..lf_{m-1}) plus a JSON sidecar.

    The sidecar records class_count, matrix shape, and per-LF specs when the
    matrix came from the synthetic generator.  Returns (csv_path, json_path).
    """
    csv_path = Path(csv_path)
    json_path = csv_path.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"lf_{j}" for j in range(lm.num_lfs)])
        for row in lm.votes:
            writer.writerow([int(v) for v in row])
    sidecar = {
        "format_version": 1,
        "class_count": lm.class_count,
        "num_lfs": lm.num_lfs,
        "num_samples": lm.num_samples,
        "lf_specs": [asdict(s) for s in lm.lf_specs] if lm.lf_specs is not None else None,
    }
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return csv_path, json_path


def load_label_matrix(csv_path) -> LabelMatrix:
    """Inverse of save_label_matrix; validates shape against the sidecar."""
    csv_path = Path(csv_path)
    json_path = csv_path.with_suffix(".json")
    with open(json_path) as fh:
        sidecar = json.load(fh)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[int(v) for v in row] for row in reader]
    votes = np.asarray(rows, dtype=np.int64).reshape(len(rows), len(header))
    if header != [f"lf_{j}" for j in range(len(header))]:
        raise WeakSupError(f"unexpected CSV header {header!r}")
    if votes.shape != (sidecar["num_samples"], sidecar["num_lfs"]):
        raise WeakSupError(
            f"CSV shape {votes.shape} disagrees with sidecar "
            f"({sidecar['num_samples']}, {sidecar['num_lfs']})"
        )
    specs = None
    if sidecar.get("lf_specs") is not None:
        specs = [LfSpec(**s) for s in sidecar["lf_specs"]]
    return LabelMatrix(votes, sidecar["class_count"], lf_specs=specs)
