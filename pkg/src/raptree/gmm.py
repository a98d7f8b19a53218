"""Full-covariance Gaussian mixtures with exact incremental updates.

Every model carries per-component sufficient statistics

    S0_k = sum_i g_ik,   S1_k = sum_i g_ik x_i,   S2_k = sum_i g_ik x_i x_i^T

from which the M-step parameters are recovered exactly. Adding a point is then
an O(K d^2) update that equals a batch M-step over all points with the old
responsibilities held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

REG_EPS = 1e-6
EMPTY_MASS = 1e-12
LOG_2PI = float(np.log(2.0 * np.pi))

Seed = int | Sequence[int]


def extend_seed(seed: Seed, *extra: int) -> list[int]:
    base = [seed] if isinstance(seed, (int, np.integer)) else list(seed)
    return [int(s) for s in base] + [int(e) for e in extra]


def _rng(seed: Seed) -> np.random.Generator:
    return np.random.default_rng(extend_seed(seed))


@dataclass
class GmmModel:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    covariances: np.ndarray  # (K, d, d), ridge included
    suff_s0: np.ndarray  # (K,)
    suff_s1: np.ndarray  # (K, d)
    suff_s2: np.ndarray  # (K, d, d)
    n: float
    reg_eps: float = REG_EPS
    history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @classmethod
    def from_stats(
        cls,
        s0: np.ndarray,
        s1: np.ndarray,
        s2: np.ndarray,
        n: float,
        reg_eps: float = REG_EPS,
        **extra: Any,
    ) -> "GmmModel":
        weights, means, covs = _params_from_stats(s0, s1, s2, n, reg_eps)
        return cls(weights, means, covs, s0.copy(), s1.copy(), s2.copy(), float(n), reg_eps, **extra)

    @classmethod
    def from_responsibilities(
        cls, points: np.ndarray, gamma: np.ndarray, reg_eps: float = REG_EPS, **extra: Any
    ) -> "GmmModel":
        X = np.asarray(points, dtype=float)
        s0 = gamma.sum(axis=0)
        s1 = gamma.T @ X
        s2 = np.matmul((X[None, :, :] * gamma.T[:, :, None]).transpose(0, 2, 1), X[None, :, :])
        if np.any(s0 <= 0):
            raise ValueError("every component needs positive mass to define its parameters")
        # centered covariances avoid the cancellation in S2/S0 - mu mu^T for tight clusters
        step = m_step(X, gamma, reg_eps)
        return cls(step.weights, step.means, step.covariances, s0, s1, s2, float(len(X)), reg_eps, **extra)

    def copy(self) -> "GmmModel":
        return GmmModel(
            self.weights.copy(),
            self.means.copy(),
            self.covariances.copy(),
            self.suff_s0.copy(),
            self.suff_s1.copy(),
            self.suff_s2.copy(),
            self.n,
            self.reg_eps,
            list(self.history),
            self.n_iter,
        )

    def select(self, keep: Sequence[int]) -> "GmmModel":
        """Sub-model with the listed components; weights are renormalized over the kept mass."""
        keep = list(keep)
        s0 = self.suff_s0[keep]
        return GmmModel.from_stats(
            s0, self.suff_s1[keep], self.suff_s2[keep], float(s0.sum()), self.reg_eps
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "suff_s0": self.suff_s0.tolist(),
            "suff_s1": self.suff_s1.tolist(),
            "suff_s2": self.suff_s2.tolist(),
            "n": self.n,
            "reg_eps": self.reg_eps,
            "history": list(self.history),
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GmmModel":
        K = len(data["weights"])
        d = len(data["means"][0]) if K else 0
        return cls(
            weights=np.array(data["weights"], dtype=float),
            means=np.array(data["means"], dtype=float).reshape(K, d),
            covariances=np.array(data["covariances"], dtype=float).reshape(K, d, d),
            suff_s0=np.array(data["suff_s0"], dtype=float),
            suff_s1=np.array(data["suff_s1"], dtype=float).reshape(K, d),
            suff_s2=np.array(data["suff_s2"], dtype=float).reshape(K, d, d),
            n=float(data["n"]),
            reg_eps=float(data["reg_eps"]),
            history=[float(h) for h in data.get("history", [])],
            n_iter=int(data.get("n_iter", 0)),
        )


def _params_from_stats(
    s0: np.ndarray, s1: np.ndarray, s2: np.ndarray, n: float, reg_eps: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if np.any(s0 <= 0):
        raise ValueError("every component needs positive mass to define its parameters")
    d = s1.shape[1]
    weights = s0 / n
    means = s1 / s0[:, None]
    covs = s2 / s0[:, None, None] - np.einsum("kd,ke->kde", means, means)
    covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
    covs = covs + reg_eps * np.eye(d)
    try:
        np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        # only reachable after stat decrements; clip to the nearest PSD matrix
        for k in range(len(covs)):
            vals, vecs = np.linalg.eigh(covs[k] - reg_eps * np.eye(d))
            covs[k] = (vecs * np.clip(vals, 0.0, None)) @ vecs.T + reg_eps * np.eye(d)
    return weights, means, covs


def _log_gaussians(X: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """log N(x_i | mu_k, Sigma_k) as an (n, K) array."""
    try:
        chol = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    d = X.shape[1]
    inv_chol = np.linalg.inv(chol)
    diff = X[None, :, :] - means[:, None, :]
    y = np.matmul(diff, inv_chol.transpose(0, 2, 1))
    maha = np.sum(y * y, axis=2)
    log_det = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    return (-0.5 * (d * LOG_2PI + log_det[:, None] + maha)).T


def gaussian_logpdf(x: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    return float(_log_gaussians(x[None, :], mu[None, :], sigma[None, :, :])[0, 0])


def _weighted_log_probs(model: GmmModel, X: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)
    return _log_gaussians(X, model.means, model.covariances) + log_w


def responsibilities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities; (K,) for one point, (n, K) for a batch."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    lp = _weighted_log_probs(model, X)
    gamma = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
    return gamma[0] if single else gamma


def log_likelihood(model: GmmModel, points: np.ndarray) -> float:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    return float(logsumexp(_weighted_log_probs(model, X), axis=1).sum())


@dataclass
class MStep:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    empty: np.ndarray  # bool per component


def m_step(points: np.ndarray, gamma: np.ndarray, reg_eps: float = REG_EPS) -> MStep:
    X = np.asarray(points, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    n, d = X.shape
    nk = gamma.sum(axis=0)
    empty = nk < EMPTY_MASS
    safe = np.where(empty, 1.0, nk)
    means = (gamma.T @ X) / safe[:, None]
    diff = X[None, :, :] - means[:, None, :]
    weighted = diff * gamma.T[:, :, None]
    covs = np.matmul(weighted.transpose(0, 2, 1), diff) / safe[:, None, None]
    covs = covs + reg_eps * np.eye(d)
    covs[empty] = np.eye(d)
    return MStep(nk / n, means, covs, empty)


def _kmeanspp_gamma(X: np.ndarray, K: int, rng: np.random.Generator, lloyd_iter: int = 20) -> np.ndarray:
    """Hard responsibilities from k-means++ seeding refined by Lloyd iterations."""
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = np.sum((X - X[centers[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        nxt = int(rng.integers(n)) if total <= 0 else int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    means = X[centers].copy()
    labels = np.full(n, -1)
    for _ in range(lloyd_iter + 1):
        dist = np.sum((X[:, None, :] - means[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dist, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(K):
            if np.any(labels == k):
                means[k] = X[labels == k].mean(axis=0)
    gamma = np.zeros((n, K))
    gamma[np.arange(n), labels] = 1.0
    return gamma


@dataclass
class _EmRun:
    gamma: np.ndarray  # E-step at the final parameters
    kept: np.ndarray  # indices of the starting components that survived
    history: list[float]
    n_iter: int
    source: np.ndarray | None = None  # responsibilities the final parameters were fitted to


def _e_step(X: np.ndarray, weights: np.ndarray, means: np.ndarray, covs: np.ndarray) -> tuple[float, np.ndarray]:
    with np.errstate(divide="ignore"):
        lp = _log_gaussians(X, means, covs) + np.log(weights)
    lse = logsumexp(lp, axis=1)
    return float(lse.sum()), np.exp(lp - lse[:, None])


def _em_from_params(
    X: np.ndarray,
    weights: np.ndarray,
    means: np.ndarray,
    covs: np.ndarray,
    reg_eps: float,
    max_iter: int,
    tol: float,
    source: np.ndarray | None = None,
) -> _EmRun:
    """EM from the given parameters.

    The ridge makes the M-step inexact, so a step can lower the likelihood once a
    component shrinks onto very few points. Such a step is rejected and the run stops
    on the previous iterate.
    """
    n = len(X)
    kept = np.arange(len(weights))
    ll, gamma = _e_step(X, weights, means, covs)
    history = [ll]
    n_iter = 0
    while n_iter < max_iter:
        step = m_step(X, gamma, reg_eps)
        if step.empty.any():
            alive = ~step.empty
            cand = (step.weights[alive] / step.weights[alive].sum(), step.means[alive], step.covariances[alive])
            cand_kept, cand_source = kept[alive], None
        else:
            cand = (step.weights, step.means, step.covariances)
            cand_kept, cand_source = kept, gamma
        cand_ll, cand_gamma = _e_step(X, *cand)
        if cand_ll < ll and len(cand_kept) == len(kept):
            break
        n_iter += 1
        converged = len(cand_kept) == len(kept) and abs(cand_ll - ll) / n < tol
        weights, means, covs = cand
        kept, source, gamma, ll = cand_kept, cand_source, cand_gamma, cand_ll
        history.append(ll)
        if converged:
            break
    return _EmRun(gamma, kept, history, n_iter, source)


def _finish(X: np.ndarray, run: _EmRun, reg_eps: float) -> GmmModel:
    gamma = run.gamma
    alive = gamma.sum(axis=0) >= EMPTY_MASS
    if not alive.all():
        gamma = gamma[:, alive]
        gamma = gamma / gamma.sum(axis=1, keepdims=True)
        run.kept = run.kept[alive]
        run.source = None
    # closing M-step on the final responsibilities keeps params and stats consistent
    model = GmmModel.from_responsibilities(X, gamma, reg_eps, n_iter=run.n_iter)
    final = log_likelihood(model, X)
    if final < run.history[-1] and run.source is not None:
        model = GmmModel.from_responsibilities(X, run.source, reg_eps, n_iter=run.n_iter)
        final = log_likelihood(model, X)
    model.history = run.history + [final]
    return model


def fit_em(
    points: np.ndarray,
    K: int,
    max_iter: int = 200,
    tol: float = 1e-4,
    n_init: int = 3,
    seed: Seed = 0,
    reg_eps: float = REG_EPS,
) -> GmmModel:
    """Fit a K-component mixture by EM, keeping the best of ``n_init`` k-means++ starts.

    Convergence is declared when the mean per-point log-likelihood changes by less
    than ``tol``. Components whose mass vanishes are dropped, so the result may have
    fewer than K components.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if K < 1 or len(X) < K:
        raise ValueError(f"need at least K={K} points, got {len(X)}")
    rng = _rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        gamma = _kmeanspp_gamma(X, K, rng)
        gamma = gamma[:, gamma.sum(axis=0) > 0]
        step = m_step(X, gamma, reg_eps)
        run = _em_from_params(X, step.weights, step.means, step.covariances, reg_eps, max_iter, tol, gamma)
        model = _finish(X, run, reg_eps)
        if best is None or model.history[-1] > best.history[-1]:
            best = model
    return best


def refresh_em(
    model: GmmModel,
    points: np.ndarray,
    max_iter: int = 200,
    tol: float = 1e-4,
) -> tuple[GmmModel, np.ndarray]:
    """Run EM to convergence on ``points`` starting from ``model``'s parameters.

    Returns the refreshed model and the indices of the original components it kept.
    """
    X = np.asarray(points, dtype=float)
    run = _em_from_params(
        X, model.weights, model.means, model.covariances, model.reg_eps, max_iter, tol
    )
    refreshed = _finish(X, run, model.reg_eps)
    return refreshed, run.kept


def n_parameters(K: int, d: int) -> int:
    return K * (d + d * (d + 1) // 2) + (K - 1)


def bic(model: GmmModel, points: np.ndarray) -> float:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    return n_parameters(model.K, model.d) * float(np.log(len(X))) - 2.0 * log_likelihood(model, X)


def bic_scan(
    points: np.ndarray, k_min: int, k_max: int, seed: Seed = 0, **em_kwargs: Any
) -> list[tuple[int, float, GmmModel]]:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if k_min < 1:
        raise ValueError("k_min must be >= 1")
    hi = min(k_max, len(X))
    out = []
    for K in range(k_min, max(k_min, hi) + 1):
        if K > len(X):
            break
        model = fit_em(X, K, seed=extend_seed(seed, K), **em_kwargs)
        out.append((K, bic(model, X), model))
    return out


def fit_best_k(points: np.ndarray, k_min: int, k_max: int, seed: Seed = 0, **em_kwargs: Any) -> GmmModel:
    """BIC-minimizing mixture over K in [k_min, min(k_max, n)]; ties keep the smaller K."""
    scan = bic_scan(points, k_min, k_max, seed, **em_kwargs)
    if not scan:
        raise ValueError("empty K range")
    best = scan[0]
    for entry in scan[1:]:
        if entry[1] < best[1]:
            best = entry
    return best[2]


def incremental_update(model: GmmModel, x: np.ndarray) -> GmmModel:
    x = np.asarray(x, dtype=float)
    gamma = responsibilities(model, x)
    s0 = model.suff_s0 + gamma
    s1 = model.suff_s1 + gamma[:, None] * x
    s2 = model.suff_s2 + gamma[:, None, None] * np.outer(x, x)
    return GmmModel.from_stats(s0, s1, s2, model.n + 1.0, model.reg_eps)


def decrement(model: GmmModel, x: np.ndarray) -> tuple[GmmModel, list[int]]:
    """Remove ``x``'s contribution using responsibilities under the current parameters.

    Components left without mass are dropped; their original indices are returned.
    """
    x = np.asarray(x, dtype=float)
    gamma = responsibilities(model, x)
    s0 = model.suff_s0 - gamma
    s1 = model.suff_s1 - gamma[:, None] * x
    s2 = model.suff_s2 - gamma[:, None, None] * np.outer(x, x)
    alive = s0 > 1e-9
    dropped = [int(k) for k in np.flatnonzero(~alive)]
    s0, s1, s2 = s0[alive], s1[alive], s2[alive]
    if not alive.any():
        raise ValueError("removing the point leaves the mixture without mass")
    return GmmModel.from_stats(s0, s1, s2, float(s0.sum()), model.reg_eps), dropped


def soft_assign(model: GmmModel, x: np.ndarray, threshold: float = 0.1) -> set[int]:
    gamma = responsibilities(model, x)
    chosen = {int(k) for k in np.flatnonzero(gamma > threshold)}
    return chosen or {int(np.argmax(gamma))}


def soft_assign_all(model: GmmModel, points: np.ndarray, threshold: float = 0.1) -> list[set[int]]:
    """Component memberships (point indices per component) for a batch."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    members: list[set[int]] = [set() for _ in range(model.K)]
    if len(X) == 0:
        return members
    gamma = responsibilities(model, X)
    for i, row in enumerate(gamma):
        ks = np.flatnonzero(row > threshold)
        if len(ks) == 0:
            ks = [int(np.argmax(row))]
        for k in ks:
            members[int(k)].add(i)
    return members


@dataclass
class SplitResult:
    split: bool
    k_sub: int
    model: GmmModel
    # per new component: index into the old model, or None for a new subcluster
    labels: list[int | None]
    sub_model: GmmModel | None = None


def try_split(
    model: GmmModel, cluster_id: int, member_points: np.ndarray, seed: Seed = 0
) -> SplitResult:
    """Try replacing one component by 2 or 3 sub-components chosen by BIC on its members."""
    Xm = np.asarray(member_points, dtype=float)
    m = len(Xm)
    identity: list[int | None] = list(range(model.K))
    if m < 2:
        return SplitResult(False, 1, model, identity)
    sub = fit_best_k(Xm, 1, 3, seed)
    if sub.K == 1:
        return SplitResult(False, 1, model, identity)
    # rescale the members' statistics so the component's total mass is conserved
    factor = model.suff_s0[cluster_id] / m
    keep = [k for k in range(model.K) if k != cluster_id]
    s0 = np.concatenate([model.suff_s0[keep], sub.suff_s0 * factor])
    s1 = np.concatenate([model.suff_s1[keep], sub.suff_s1 * factor])
    s2 = np.concatenate([model.suff_s2[keep], sub.suff_s2 * factor])
    new = GmmModel.from_stats(s0, s1, s2, model.n, model.reg_eps)
    labels: list[int | None] = list(keep) + [None] * sub.K
    return SplitResult(True, sub.K, new, labels, sub)


@dataclass
class AdaptiveConfig:
    tau_n: int = 100
    tau_c: int = 11
    assign_threshold: float = 0.1

    def __post_init__(self) -> None:
        if self.tau_c < 2 or self.tau_n < 1:
            raise ValueError("need tau_c >= 2 and tau_n >= 1")

    @classmethod
    def for_initial_size(cls, n0: int, tau_c: int = 11) -> "AdaptiveConfig":
        return cls(tau_n=max(100, int(round(np.sqrt(n0)))), tau_c=tau_c)


@dataclass
class UpdateOutcome:
    """Result of one adaptive insertion.

    Cluster positions in ``changed_clusters``, ``created_clusters`` and
    ``assignment`` refer to the new model; ``labels[j]`` maps new position ``j``
    to its old position (``None`` for a new cluster) and ``removed_clusters``
    lists old positions that no longer exist.
    """

    model: GmmModel
    memberships: list[set[int]]
    labels: list[int | None]
    changed_clusters: set[int]
    created_clusters: set[int]
    removed_clusters: set[int]
    assignment: set[int]
    full_em: bool
    split_attempts: list[int] = field(default_factory=list)
    splits: list[int] = field(default_factory=list)


def match_clusters(new: list[set[int]], old: list[set[int]]) -> list[int | None]:
    """Map each new cluster to the old cluster sharing the most members (one-to-one)."""
    if not new or not old:
        return [None] * len(new)
    overlap = np.array([[len(a & b) for b in old] for a in new], dtype=float)
    rows, cols = linear_sum_assignment(-overlap)
    labels: list[int | None] = [None] * len(new)
    for r, c in zip(rows, cols):
        if overlap[r, c] > 0:
            labels[r] = int(c)
    return labels


def adaptive_cluster_update(
    model: GmmModel,
    points: np.ndarray,
    memberships: list[set[int]],
    x: np.ndarray,
    cfg: AdaptiveConfig,
    seed: Seed = 0,
) -> UpdateOutcome:
    """Absorb ``x`` (which becomes point index ``len(points)``) into an existing clustering.

    Small models (n <= tau_n) get full EM on all points plus a BIC scan over
    K..K+c, c being the number of clusters larger than tau_c. Larger models get a
    single-point sufficient-statistics update, soft assignment of ``x``, and a
    split attempt on any cluster that ``x`` pushed past tau_c.
    """
    X_old = np.asarray(points, dtype=float).reshape(-1, model.d)
    x = np.asarray(x, dtype=float)
    n = len(X_old)
    new_index = n
    X = np.vstack([X_old, x[None, :]])
    thr = cfg.assign_threshold

    if n <= cfg.tau_n:
        refreshed, kept = refresh_em(model, X)
        members = soft_assign_all(refreshed, X, thr)
        c = sum(1 for m in members if len(m) > cfg.tau_c)
        chosen, chosen_members = refreshed, members
        labels: list[int | None] = [int(k) for k in kept]
        best_bic = bic(refreshed, X)
        for K in range(refreshed.K + 1, min(refreshed.K + c, len(X)) + 1):
            cand = fit_em(X, K, seed=extend_seed(seed, K))
            cand_bic = bic(cand, X)
            if cand_bic < best_bic:
                best_bic = cand_bic
                chosen = cand
                chosen_members = soft_assign_all(cand, X, thr)
                labels = match_clusters(chosen_members, memberships)
        assignment = {k for k, m in enumerate(chosen_members) if new_index in m}
        changed = {
            j for j, lab in enumerate(labels)
            if lab is not None and chosen_members[j] != memberships[lab]
        }
        created = {j for j, lab in enumerate(labels) if lab is None}
        removed = set(range(model.K)) - {lab for lab in labels if lab is not None}
        return UpdateOutcome(
            chosen, chosen_members, labels, changed, created, removed, assignment, True
        )

    current = incremental_update(model, x)
    assign = soft_assign(current, x, thr)
    members = [set(m) for m in memberships]
    for k in assign:
        members[k].add(new_index)
    labels = list(range(model.K))
    attempts: list[int] = []
    splits: list[int] = []
    for old_k in sorted(assign):
        if len(members[labels.index(old_k)]) <= cfg.tau_c:
            continue
        attempts.append(old_k)
        pos = labels.index(old_k)
        idx = sorted(members[pos])
        result = try_split(current, pos, X[idx], seed=extend_seed(seed, old_k))
        if not result.split:
            continue
        splits.append(old_k)
        sub_members = soft_assign_all(result.sub_model, X[idx], thr)
        members = [members[j] for j in range(len(members)) if j != pos] + [
            {idx[i] for i in sm} for sm in sub_members
        ]
        labels = [labels[j] for j in range(len(labels)) if j != pos] + [None] * result.k_sub
        current = result.model

    assignment = {j for j, m in enumerate(members) if new_index in m}
    changed = {j for j in assignment if labels[j] is not None}
    created = {j for j, lab in enumerate(labels) if lab is None}
    return UpdateOutcome(
        current,
        members,
        labels,
        changed,
        created,
        set(splits),
        assignment,
        False,
        attempts,
        splits,
    )
