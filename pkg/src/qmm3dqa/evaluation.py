"""Evaluation protocol: five-parameter logistic remapping, the four
correlation/error criteria, content-disjoint k-fold plans, and the
cross-validation / cross-database runners.

Criteria conventions: SRCC is the Pearson correlation of tie-averaged
ranks and KRCC is the tie-corrected tau-b, both computed on the raw
predictions; PLCC and RMSE are computed after remapping predictions
through the fitted logistic.  Correlations of a constant vector are
defined as 0.  Fold assignment sorts content ids and deals them
round-robin, so published fold tables are reproducible; a seeded
shuffle is available.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import DegenerateLabels, TooFewGroups, TooFewSamples
from .model_io import DatasetManifest, ManifestEntry
from .rng import substream

MIN_SAMPLES = 5


@dataclass(frozen=True)
class LogisticParams:
    """Fitted parameters of the monotone-plus-linear five-parameter remap."""

    beta: tuple[float, float, float, float, float]
    converged: bool = True


@dataclass(frozen=True)
class MetricsReport:
    srcc: float
    plcc: float
    krcc: float
    rmse: float
    logistic: LogisticParams
    n: int

    def to_dict(self) -> dict:
        return {
            "srcc": self.srcc,
            "plcc": self.plcc,
            "krcc": self.krcc,
            "rmse": self.rmse,
            "beta": list(self.logistic.beta),
            "n": self.n,
        }


@dataclass(frozen=True)
class MeanReport:
    srcc: float
    plcc: float
    krcc: float
    rmse: float
    n: int

    def to_dict(self) -> dict:
        return {
            "srcc": self.srcc,
            "plcc": self.plcc,
            "krcc": self.krcc,
            "rmse": self.rmse,
            "beta": None,
            "n": self.n,
        }


@dataclass(frozen=True)
class FoldPlan:
    """k disjoint content-id groups and the induced train/test index lists."""

    k: int
    folds: tuple[tuple[str, ...], ...]
    train_indices: tuple[tuple[int, ...], ...]
    test_indices: tuple[tuple[int, ...], ...]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "folds": [list(f) for f in self.folds],
            "train_indices": [list(t) for t in self.train_indices],
            "test_indices": [list(t) for t in self.test_indices],
        }


class ModelFitter(Protocol):
    """Trains on a manifest and returns a per-entry scoring function."""

    def __call__(
        self, train: DatasetManifest
    ) -> Callable[[ManifestEntry], float]: ...


# -- rank statistics ---------------------------------------------------------


def tie_average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    v = np.asarray(values, dtype=np.float64)
    _, inverse, counts = np.unique(v, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return (starts + (counts + 1) / 2.0)[inverse]


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation; 0 when either vector is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0.0:
        return 0.0
    return float(np.clip((xc @ yc) / denom, -1.0, 1.0))


def spearman(y: np.ndarray, labels: np.ndarray) -> float:
    return pearson(tie_average_ranks(y), tie_average_ranks(labels))


def kendall_tau_b(y: np.ndarray, labels: np.ndarray) -> float:
    """Tie-corrected pair-ordering correlation (tau-b); 0 when degenerate."""
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(labels, dtype=np.float64)
    n = a.size
    iu, ju = np.triu_indices(n, k=1)
    sa = np.sign(a[iu] - a[ju])
    sb = np.sign(b[iu] - b[ju])
    s = float((sa * sb).sum())
    n0 = n * (n - 1) // 2
    t1 = n0 - int((sa != 0).sum())  # tied pairs in y
    t2 = n0 - int((sb != 0).sum())  # tied pairs in labels
    denom = np.sqrt(float(n0 - t1) * float(n0 - t2))
    if denom == 0.0:
        return 0.0
    return float(np.clip(s / denom, -1.0, 1.0))


# -- logistic remap -----------------------------------------------------------


def logistic_apply(y: np.ndarray, beta) -> np.ndarray:
    b1, b2, b3, b4, b5 = beta
    z = np.clip(b2 * (np.asarray(y, dtype=np.float64) - b3), -500.0, 500.0)
    return b1 * (0.5 - 1.0 / (1.0 + np.exp(z))) + b4 * np.asarray(y) + b5


def fit_logistic(y, labels) -> LogisticParams:
    """Fit the five-parameter remap by damped least squares.

    Damping starts at 1e-3, is multiplied by 10 on a rejected step and
    by 0.1 on an accepted one; the Jacobian is numeric (central
    differences).  Converges when the accepted step norm drops below
    1e-10, within 500 iterations; otherwise the best iterate is returned
    flagged unconverged.  Accepted iterations never increase the squared
    error.

    Raises:
        TooFewSamples: fewer than 5 points.
        DegenerateLabels: all labels equal.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    q = np.asarray(labels, dtype=np.float64).ravel()
    if y.size < MIN_SAMPLES:
        raise TooFewSamples(f"logistic fit needs >= {MIN_SAMPLES} samples")
    if np.unique(q).size < 2:
        raise DegenerateLabels("labels are all equal")

    sigma_y = y.std()
    beta = np.array([
        q.max() - q.min(),
        1.0 / sigma_y if sigma_y > 0 else 1.0,
        y.mean(),
        0.0,
        q.mean(),
    ])

    def residual(b: np.ndarray) -> np.ndarray:
        return logistic_apply(y, b) - q

    def jacobian(b: np.ndarray) -> np.ndarray:
        cols = []
        for j in range(5):
            h = 1e-6 * max(1.0, abs(b[j]))
            bp = b.copy()
            bm = b.copy()
            bp[j] += h
            bm[j] -= h
            cols.append((residual(bp) - residual(bm)) / (2.0 * h))
        return np.column_stack(cols)

    r = residual(beta)
    sse = float(r @ r)
    mu = 1e-3
    converged = False
    eye = np.eye(5)
    for _ in range(500):
        jac = jacobian(beta)
        grad = jac.T @ r
        hess = jac.T @ jac
        step = None
        while mu < 1e14:
            try:
                cand_step = np.linalg.solve(hess + mu * eye, -grad)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            cand = beta + cand_step
            rc = residual(cand)
            sc = float(rc @ rc)
            if sc < sse:
                beta, r, sse = cand, rc, sc
                step = cand_step
                mu *= 0.1
                break
            mu *= 10.0
        if step is None:
            # No damping produces an improving step: numerically at a
            # minimum of the squared error.
            converged = True
            break
        if float(np.linalg.norm(step)) < 1e-10:
            converged = True
            break
    return LogisticParams(beta=tuple(float(b) for b in beta), converged=converged)


# -- criteria ------------------------------------------------------------------


def compute_metrics(y, labels) -> MetricsReport:
    """SRCC/KRCC on raw predictions, PLCC/RMSE after the logistic remap."""
    y = np.asarray(y, dtype=np.float64).ravel()
    q = np.asarray(labels, dtype=np.float64).ravel()
    if y.size != q.size:
        raise TooFewSamples("predictions and labels differ in length")
    if y.size < MIN_SAMPLES:
        raise TooFewSamples(f"metrics need >= {MIN_SAMPLES} samples")
    params = fit_logistic(y, q)
    mapped = logistic_apply(y, params.beta)
    rmse = float(np.sqrt(np.mean((mapped - q) ** 2)))
    return MetricsReport(
        srcc=spearman(y, q),
        plcc=pearson(mapped, q),
        krcc=kendall_tau_b(y, q),
        rmse=rmse,
        logistic=params,
        n=int(y.size),
    )


# -- folds ----------------------------------------------------------------------


def make_folds(
    manifest: DatasetManifest, k: int, seed: int | None = None
) -> FoldPlan:
    """Deal sorted (optionally seeded-shuffled) content ids into k folds.

    Every entry lands in exactly one test fold, and no content id ever
    appears on both sides of a fold.

    Raises:
        TooFewGroups: fewer distinct content ids than folds.
    """
    if k < 1:
        raise TooFewGroups("k must be >= 1")
    ids = sorted(set(e.content_id for e in manifest.entries))
    if len(ids) < k:
        raise TooFewGroups(f"{len(ids)} content groups < {k} folds")
    if seed is not None:
        perm = substream(seed, 0).permutation(len(ids))
        ids = [ids[int(i)] for i in perm]
    folds = tuple(tuple(ids[j] for j in range(i, len(ids), k)) for i in range(k))
    train_idx = []
    test_idx = []
    for fold in folds:
        members = set(fold)
        test = tuple(
            i for i, e in enumerate(manifest.entries) if e.content_id in members
        )
        train = tuple(
            i for i, e in enumerate(manifest.entries) if e.content_id not in members
        )
        test_idx.append(test)
        train_idx.append(train)
    return FoldPlan(
        k=k,
        folds=folds,
        train_indices=tuple(train_idx),
        test_indices=tuple(test_idx),
    )


# -- runners ---------------------------------------------------------------------


@dataclass(frozen=True)
class CrossValResult:
    plan: FoldPlan
    folds: tuple[MetricsReport, ...]
    mean: MeanReport

    def to_dict(self) -> dict:
        return {
            "folds": [r.to_dict() for r in self.folds],
            "mean": self.mean.to_dict(),
            "plan": self.plan.to_dict(),
        }


def _mean_report(reports: tuple[MetricsReport, ...]) -> MeanReport:
    return MeanReport(
        srcc=float(np.mean([r.srcc for r in reports])),
        plcc=float(np.mean([r.plcc for r in reports])),
        krcc=float(np.mean([r.krcc for r in reports])),
        rmse=float(np.mean([r.rmse for r in reports])),
        n=int(sum(r.n for r in reports)),
    )


def evaluate_manifest(
    manifest: DatasetManifest,
    predict_fn: Callable[[ManifestEntry], float],
) -> MetricsReport:
    """Score every entry and compute the four criteria against its mos."""
    preds = [predict_fn(e) for e in manifest.entries]
    return compute_metrics(preds, [e.mos for e in manifest.entries])


def run_cross_validation(
    manifest: DatasetManifest,
    k: int,
    fitter: ModelFitter,
    seed: int | None = None,
    threads: int = 1,
) -> CrossValResult:
    """Content-disjoint k-fold cross validation with a pluggable fitter."""
    plan = make_folds(manifest, k, seed=seed)

    def run_fold(i: int) -> MetricsReport:
        train = manifest.subset(list(plan.train_indices[i]))
        test = manifest.subset(list(plan.test_indices[i]))
        predict_fn = fitter(train)
        return evaluate_manifest(test, predict_fn)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = tuple(pool.map(run_fold, range(k)))
    else:
        reports = tuple(run_fold(i) for i in range(k))
    return CrossValResult(plan=plan, folds=reports, mean=_mean_report(reports))


@dataclass(frozen=True)
class CrossDatabaseResult:
    folds: tuple[MetricsReport, ...]
    mean: MeanReport

    def to_dict(self) -> dict:
        return {
            "folds": [r.to_dict() for r in self.folds],
            "mean": self.mean.to_dict(),
        }


def run_cross_database(
    train_manifest: DatasetManifest,
    test_manifest: DatasetManifest,
    k_test: int,
    fitter: ModelFitter,
) -> CrossDatabaseResult:
    """Train once on database A, evaluate on B's default fold partitions."""
    plan = make_folds(test_manifest, k_test)
    predict_fn = fitter(train_manifest)
    reports = tuple(
        evaluate_manifest(test_manifest.subset(list(plan.test_indices[i])), predict_fn)
        for i in range(k_test)
    )
    return CrossDatabaseResult(folds=reports, mean=_mean_report(reports))


def oracle_fitter(train: DatasetManifest) -> Callable[[ManifestEntry], float]:
    """Returns each entry's own mos; the protocol upper bound."""
    return lambda entry: entry.mos


def anti_oracle_fitter(train: DatasetManifest) -> Callable[[ManifestEntry], float]:
    return lambda entry: -entry.mos
