"""Thurstone Case V scaling of pairwise-comparison counts in JND units.

One JND is the score difference at which 75% of observers prefer the
better condition, so the probit link uses sigma = 1 / Phi^-1(0.75).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import optimize, stats
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import log_ndtr

SIGMA_JND = 1.0 / stats.norm.ppf(0.75)


@dataclass
class ComparisonMatrix:
    """counts[i, j] = number of times condition i was preferred over j."""

    counts: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("comparison matrix must be square")
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise ValueError("comparison counts must be non-negative integers")
        if np.any(np.diag(c) != 0):
            raise ValueError("a condition cannot be compared with itself (non-zero diagonal)")
        self.counts = c.astype(np.int64)
        if not self.names:
            self.names = [f"c{i}" for i in range(c.shape[0])]
        if len(self.names) != c.shape[0]:
            raise ValueError("one name per condition is required")

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def trials(self) -> np.ndarray:
        return self.counts + self.counts.T

    def __add__(self, other: "ComparisonMatrix") -> "ComparisonMatrix":
        if other.names != self.names:
            raise ValueError("matrices compare different conditions")
        return ComparisonMatrix(self.counts + other.counts, list(self.names))

    def to_json(self) -> str:
        return json.dumps({"names": self.names, "counts": self.counts.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ComparisonMatrix":
        d = json.loads(text)
        return cls(np.array(d["counts"]), list(d.get("names", [])))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "count"])
            for i in range(self.n):
                for j in range(self.n):
                    if self.counts[i, j]:
                        w.writerow([self.names[i], self.names[j], int(self.counts[i, j])])

    @classmethod
    def from_csv(cls, path, names: list[str] | None = None) -> "ComparisonMatrix":
        """Rows of ``i,j,count``; i and j are condition names or integer indices."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh)]
        labels = list(names or [])
        for r in rows:
            for key in ("i", "j"):
                if r[key] not in labels:
                    labels.append(r[key])
        if not names and all(lbl.isdigit() for lbl in labels):
            labels = [str(k) for k in range(max(int(lbl) for lbl in labels) + 1)]
        index = {lbl: k for k, lbl in enumerate(labels)}
        c = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for r in rows:
            c[index[r["i"]], index[r["j"]]] += int(r["count"])
        return cls(c, labels)


@dataclass
class JndScores:
    scores: np.ndarray
    names: list[str]
    covariance: np.ndarray  # of scores relative to the reference condition
    ci_low: np.ndarray
    ci_high: np.ndarray
    anchor: str
    reference: int
    boundary: bool
    log_likelihood: float

    def difference(self, i: int, j: int) -> float:
        return float(self.scores[i] - self.scores[j])

    def to_rows(self) -> list[dict]:
        return [{"condition": n, "jnd": float(q), "ci_low": float(lo), "ci_high": float(hi)}
                for n, q, lo, hi in zip(self.names, self.scores, self.ci_low, self.ci_high)]


def log_likelihood(q: np.ndarray, counts: np.ndarray, sigma: float = SIGMA_JND) -> float:
    d = (q[:, None] - q[None, :]) / sigma
    mask = counts > 0
    return float(np.sum(counts[mask] * log_ndtr(d[mask])))


def _components(trials: np.ndarray) -> list[list[int]]:
    n_comp, labels = connected_components(csr_matrix(trials > 0), directed=False)
    return [list(np.nonzero(labels == k)[0]) for k in range(n_comp)]


def _strongly_connected(counts: np.ndarray) -> bool:
    n_comp, _ = connected_components(csr_matrix(counts > 0), directed=True, connection="strong")
    return n_comp == 1


def _fit(counts: np.ndarray, ref: int):
    n = counts.shape[0]
    free = [k for k in range(n) if k != ref]

    def unpack(theta):
        q = np.zeros(n)
        q[free] = theta
        return q

    def nll(theta):
        q = unpack(theta)
        z = (q[:, None] - q[None, :]) / SIGMA_JND
        logcdf = log_ndtr(z)
        # d/dz log Phi(z) = phi(z) / Phi(z)
        lam = np.exp(stats.norm.logpdf(z) - logcdf)
        g = counts * lam / SIGMA_JND
        grad = g.sum(axis=1) - g.sum(axis=0)
        return -np.sum(counts * logcdf), -grad[free]

    res = optimize.minimize(nll, np.zeros(n - 1), jac=True, method="BFGS",
                            options={"gtol": 1e-10, "maxiter": 10000})
    return unpack(res.x), res


def _hessian(q: np.ndarray, counts: np.ndarray, free: list[int]) -> np.ndarray:
    z = (q[:, None] - q[None, :]) / SIGMA_JND
    lam = np.exp(stats.norm.logpdf(z) - log_ndtr(z))
    # second derivative of -log Phi(z) is lam * (z + lam)
    w = counts * lam * (z + lam) / SIGMA_JND ** 2
    w = w + w.T
    h = np.diag(w.sum(axis=1)) - w
    return h[np.ix_(free, free)]


def scale_jnd(m: ComparisonMatrix, anchor: str = "min", reference: int = 0, confidence: float = 0.95,
              prior_count: float = 0.5) -> JndScores:
    """Maximum-likelihood Thurstone Case V scores in JND units.

    Scores are anchored so that the lowest is 0 (``anchor="min"``) or the
    ``reference`` condition is 0 (``anchor="reference"``). Confidence
    intervals come from the observed information, relative to ``reference``.
    If some condition always wins or always loses against the rest the MLE
    is at infinity; ``prior_count`` pseudo-observations are then added in
    both directions of every compared pair and the result is flagged as a
    boundary estimate.
    """
    counts = m.counts.astype(np.float64)
    comps = _components(m.trials)
    if len(comps) > 1:
        listing = "; ".join("{" + ", ".join(m.names[k] for k in c) + "}" for c in comps)
        raise ValueError(f"comparison graph is disconnected; components: {listing}")
    boundary = m.n > 1 and not _strongly_connected(m.counts)
    if boundary:
        counts = counts + prior_count * (m.trials > 0)
    if m.n == 1:
        q = np.zeros(1)
    else:
        q, _ = _fit(counts, reference)
    free = [k for k in range(m.n) if k != reference]
    cov = np.zeros((m.n, m.n))
    if free:
        h = _hessian(q, counts, free)
        cov[np.ix_(free, free)] = np.linalg.pinv(h)
    half = stats.norm.ppf(0.5 + confidence / 2) * np.sqrt(np.clip(np.diag(cov), 0, None))
    if anchor == "min":
        shift = q.min()
    elif anchor == "reference":
        shift = q[reference]
    else:
        raise ValueError(f"unknown anchor {anchor!r}")
    scores = q - shift
    return JndScores(scores, list(m.names), cov, scores - half, scores + half, anchor, reference, boundary,
                     log_likelihood(q, m.counts.astype(np.float64)))


def simulate_comparisons(q, trials_per_pair: int, rng: np.random.Generator,
                         names: list[str] | None = None) -> ComparisonMatrix:
    """Full-design comparisons drawn from the Case V model with true scores ``q``."""
    q = np.asarray(q, dtype=np.float64)
    n = len(q)
    c = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            p = stats.norm.cdf((q[i] - q[j]) / SIGMA_JND)
            k = rng.binomial(trials_per_pair, p)
            c[i, j] = k
            c[j, i] = trials_per_pair - k
    return ComparisonMatrix(c, names or [])


def screen_observers(matrices: list[ComparisonMatrix], z: float = 2.0) -> list[int]:
    """Indices of observers whose per-trial log-likelihood under the scale
    fitted to everyone else falls more than ``z`` deviations below the mean."""
    if len(matrices) < 3:
        return list(range(len(matrices)))
    scores = []
    for k, mk in enumerate(matrices):
        rest = sum((m for i, m in enumerate(matrices) if i != k), ComparisonMatrix(np.zeros_like(mk.counts), mk.names))
        q = scale_jnd(rest).scores
        n = mk.counts.sum()
        scores.append(log_likelihood(q, mk.counts.astype(np.float64)) / n if n else 0.0)
    scores = np.array(scores)
    cut = scores.mean() - z * scores.std()
    return [k for k, s in enumerate(scores) if s >= cut]


def scale_observers(matrices: list[ComparisonMatrix],
                    screen: Callable[[list[ComparisonMatrix]], list[int]] | None = None, **kw) -> JndScores:
    """Pool per-observer matrices, optionally keeping only the observers ``screen`` returns."""
    if not matrices:
        raise ValueError("no observers")
    keep = screen(matrices) if screen is not None else range(len(matrices))
    pooled = ComparisonMatrix(np.zeros_like(matrices[0].counts), list(matrices[0].names))
    for k in keep:
        pooled = pooled + matrices[k]
    return scale_jnd(pooled, **kw)
