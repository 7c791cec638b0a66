"""Random SBM, DCSBM and bipartite SBM networks, plus initial-label perturbation.

Every sampler is a pure function of its spec and integer seed. Small
networks use one uniform draw per node pair; large ones use geometric
skipping inside each block pair so that sampling costs O(edges).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ._random import make_rng
from .graph import SparseGraph
from .metrics import nmi

__all__ = [
    "ParameterError",
    "SbmSpec",
    "DcsbmSpec",
    "BisbmSpec",
    "build_edge_prob_matrix",
    "planted_partition",
    "equal_size_labels",
    "two_block_edge_probs",
    "sample_sbm",
    "sample_dcsbm",
    "sample_bisbm",
    "sample_theta_two_point",
    "perturb_labels",
    "perturb_labels_to_nmi",
    "DENSE_MAX_NODES",
]

#: Above this node count the geometric-skipping sampler is used.
DENSE_MAX_NODES = 10_000


class ParameterError(ValueError):
    """Raised when model parameters do not define valid probabilities."""


def _check_pi(pi, name="pi"):
    pi = np.asarray(pi, dtype=np.float64)
    if pi.ndim != 1 or pi.size == 0:
        raise ParameterError(f"{name} must be a non-empty vector")
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
        raise ParameterError(f"{name} must be non-negative and sum to 1")
    return pi


@dataclass(frozen=True)
class SbmSpec:
    n: int
    pi: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        pi = _check_pi(self.pi)
        P = np.asarray(self.P, dtype=np.float64)
        if P.shape != (pi.size, pi.size):
            raise ParameterError("P must be K x K with K = len(pi)")
        if not np.allclose(P, P.T, rtol=0, atol=1e-15):
            raise ParameterError("P must be symmetric")
        if np.any(P < 0) or np.any(P > 1):
            raise ParameterError("P entries must lie in [0, 1]")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "P", P)

    @property
    def K(self) -> int:
        return self.pi.size

    def to_dict(self):
        return {"n": int(self.n), "pi": self.pi.tolist(), "P": self.P.tolist()}


@dataclass(frozen=True)
class DcsbmSpec:
    n: int
    pi: np.ndarray
    P: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        base = SbmSpec(self.n, self.pi, self.P)
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.shape != (self.n,):
            raise ParameterError("theta must have length n")
        if np.any(theta <= 0):
            raise ParameterError("theta must be positive")
        if abs(theta.mean() - 1.0) > 1e-9:
            raise ParameterError("theta must have mean 1")
        object.__setattr__(self, "pi", base.pi)
        object.__setattr__(self, "P", base.P)
        object.__setattr__(self, "theta", theta)

    @property
    def K(self) -> int:
        return self.pi.size

    def to_dict(self):
        return {"n": int(self.n), "pi": self.pi.tolist(), "P": self.P.tolist(),
                "theta": self.theta.tolist()}


@dataclass(frozen=True)
class BisbmSpec:
    m: int
    n: int
    pi1: np.ndarray
    pi2: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        pi1 = _check_pi(self.pi1, "pi1")
        pi2 = _check_pi(self.pi2, "pi2")
        P = np.asarray(self.P, dtype=np.float64)
        if P.shape != (pi1.size, pi2.size):
            raise ParameterError("P must be K1 x K2")
        if np.any(P < 0) or np.any(P > 1):
            raise ParameterError("P entries must lie in [0, 1]")
        object.__setattr__(self, "pi1", pi1)
        object.__setattr__(self, "pi2", pi2)
        object.__setattr__(self, "P", P)

    def to_dict(self):
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else int(v))
                for k, v in d.items()}


def build_edge_prob_matrix(K: int, beta: float, omega, lam: float, pi,
                           n: int) -> np.ndarray:
    """Sparse-regime edge probabilities with out-in ratio ``beta``.

    The unscaled matrix is ``diag(omega)`` when ``beta == 0`` and otherwise
    has ``omega / beta`` on the diagonal and ones elsewhere; it is then
    scaled so that the expected degree ``(n - 1) pi' P pi`` equals ``lam``.
    """
    omega = np.asarray(omega, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    if beta < 0 or lam <= 0 or np.any(omega <= 0):
        raise ParameterError("need beta >= 0, lam > 0 and positive omega")
    if omega.shape != (K,) or pi.shape != (K,):
        raise ParameterError("omega and pi must have length K")
    if beta == 0:
        base = np.diag(omega)
    else:
        base = np.ones((K, K))
        np.fill_diagonal(base, omega / beta)
    P = lam / ((n - 1) * (pi @ base @ pi)) * base
    if np.any(P > 1):
        raise ParameterError(f"edge probability {P.max():.4g} exceeds 1; "
                             "increase n or lower lam")
    return P


def planted_partition(K: int, p_between: float, p_boost: float) -> np.ndarray:
    """``P_kl = p_between + p_boost * 1(k == l)``."""
    return np.full((K, K), p_between) + p_boost * np.eye(K)


def two_block_edge_probs(n: int, a: float, b: float) -> np.ndarray:
    """Undirected two-block ``P = (2/m) [[a, b], [b, a]] - (1/m^2) [[a², b²], [b², a²]]``, ``m = n/2``.

    This is the probability that at least one of two independent directed
    edges with rates ``a/m`` and ``b/m`` is present.
    """
    m = n / 2.0
    if a < 0 or b < 0 or max(a, b) > m:
        raise ParameterError("need 0 <= a, b <= n/2")
    R = np.array([[a, b], [b, a]], dtype=np.float64)
    return 2.0 * R / m - R * R / (m * m)


def _draw_labels(rng, n, pi):
    return rng.choice(pi.size, size=n, p=pi).astype(np.int64)


def equal_size_labels(n: int, K: int) -> np.ndarray:
    """Contiguous blocks whose sizes differ by at most one."""
    if not 1 <= K <= n:
        raise ParameterError("need 1 <= K <= n")
    return (np.arange(n, dtype=np.int64) * K) // n


def _labels_for(rng, n, pi, labels):
    if labels is None:
        return _draw_labels(rng, n, pi)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= pi.size:
        raise ParameterError(f"labels must have length {n} with values in 0..{pi.size - 1}")
    return labels


def _skip_positions(rng, total: int, p: float) -> np.ndarray:
    """Sorted positions in ``[0, total)`` kept independently with prob ``p``."""
    if total <= 0 or p <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(total, dtype=np.int64)
    out = []
    pos = -1
    while True:
        mean = total * p
        batch = int(mean + 6 * np.sqrt(mean + 1) + 16)
        gaps = rng.geometric(p, size=batch)
        cum = pos + np.cumsum(gaps)
        out.append(cum[cum < total])
        if cum[-1] >= total:
            break
        pos = int(cum[-1])
    return np.concatenate(out).astype(np.int64)


def _triangle_unrank(t: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-major rank -> pair ``(a, b)``, ``a < b`` in a ``size``-set."""
    a_vals = np.arange(size, dtype=np.int64)
    offsets = a_vals * (2 * size - a_vals - 1) // 2
    a = np.searchsorted(offsets, t, side="right") - 1
    b = t - offsets[a] + a + 1
    return a, b


def _block_members(labels, K):
    return [np.flatnonzero(labels == k) for k in range(K)]


def _edges_dense_square(rng, labels, P, theta=None):
    n = labels.size
    rows, cols = [], []
    for i in range(n - 1):
        u = rng.random(n - i - 1)
        p = P[labels[i], labels[i + 1:]]
        if theta is not None:
            p = p * theta[i] * theta[i + 1:]
        hit = np.flatnonzero(u < p)
        if hit.size:
            rows.append(np.full(hit.size, i, dtype=np.int64))
            cols.append(hit + i + 1)
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def _edges_skip_square(rng, labels, P, K, theta=None, thin_rng=None):
    members = _block_members(labels, K)
    rows, cols = [], []
    for k in range(K):
        for l in range(k, K):
            mk, ml = members[k], members[l]
            if k == l:
                total = mk.size * (mk.size - 1) // 2
            else:
                total = mk.size * ml.size
            p = P[k, l]
            if theta is not None and total:
                cap = theta[mk].max() * theta[ml].max()
                p = p * cap
            pos = _skip_positions(rng, total, p)
            if k == l:
                a, b = _triangle_unrank(pos, mk.size)
                r, c = mk[a], mk[b]
            else:
                r, c = mk[pos // ml.size], ml[pos % ml.size]
            if theta is not None and r.size:
                accept = theta[r] * theta[c] / cap
                keep = thin_rng.random(r.size) < accept
                r, c = r[keep], c[keep]
            rows.append(r)
            cols.append(c)
    return np.concatenate(rows), np.concatenate(cols)


def _resolve_method(method, n):
    if method == "auto":
        return "dense" if n <= DENSE_MAX_NODES else "skip"
    if method not in ("dense", "skip"):
        raise ValueError(f"unknown sampling method {method!r}")
    return method


def sample_sbm(spec: SbmSpec, seed, method: str = "auto", labels=None
               ) -> Tuple[SparseGraph, np.ndarray]:
    """Draw ``(graph, labels)``; labels are i.i.d. categorical(pi).

    Passing ``labels`` fixes the communities (e.g. equal sizes) and only
    the edges are random.
    """
    rng = make_rng(seed)
    labels = _labels_for(rng, spec.n, spec.pi, labels)
    if _resolve_method(method, spec.n) == "dense":
        r, c = _edges_dense_square(rng, labels, spec.P)
    else:
        r, c = _edges_skip_square(rng, labels, spec.P, spec.K)
    return SparseGraph.from_edges(r, c, spec.n), labels


def sample_dcsbm(spec: DcsbmSpec, seed, method: str = "auto", labels=None
                 ) -> Tuple[SparseGraph, np.ndarray]:
    """Bernoulli edges with probability ``theta_i theta_j P[c_i, c_j]``.

    With ``theta`` identically one this reproduces ``sample_sbm`` exactly
    for the same seed and method.
    """
    rng = make_rng(seed)
    labels = _labels_for(rng, spec.n, spec.pi, labels)
    theta = spec.theta
    for k in range(spec.K):
        mk = labels == k
        if not mk.any():
            continue
        for l in range(spec.K):
            ml = labels == l
            if ml.any():
                rate = theta[mk].max() * theta[ml].max() * spec.P[k, l]
                if rate > 1:
                    raise ParameterError(
                        f"edge probability {rate:.4g} exceeds 1 in block ({k},{l})")
    if _resolve_method(method, spec.n) == "dense":
        r, c = _edges_dense_square(rng, labels, spec.P, theta)
    else:
        r, c = _edges_skip_square(rng, labels, spec.P, spec.K, theta,
                                  thin_rng=make_rng(seed, stream=1))
    return SparseGraph.from_edges(r, c, spec.n), labels


def sample_bisbm(spec: BisbmSpec, seed, method: str = "auto"
                 ) -> Tuple[SparseGraph, np.ndarray, np.ndarray]:
    """Draw an ``m x n`` bi-adjacency with type-1 and type-2 labels."""
    rng = make_rng(seed)
    c1 = _draw_labels(rng, spec.m, spec.pi1)
    c2 = _draw_labels(rng, spec.n, spec.pi2)
    rows, cols = [], []
    if _resolve_method(method, max(spec.m, spec.n)) == "dense":
        for i in range(spec.m):
            hit = np.flatnonzero(rng.random(spec.n) < spec.P[c1[i], c2])
            rows.append(np.full(hit.size, i, dtype=np.int64))
            cols.append(hit)
    else:
        m1 = _block_members(c1, spec.pi1.size)
        m2 = _block_members(c2, spec.pi2.size)
        for k, mk in enumerate(m1):
            for l, ml in enumerate(m2):
                pos = _skip_positions(rng, mk.size * ml.size, spec.P[k, l])
                rows.append(mk[pos // max(ml.size, 1)])
                cols.append(ml[pos % max(ml.size, 1)])
    r = np.concatenate(rows) if rows else np.empty(0, np.int64)
    c = np.concatenate(cols) if cols else np.empty(0, np.int64)
    g = SparseGraph.from_edges(r, c, spec.m, spec.n, bipartite=True)
    return g, c1, c2


def sample_theta_two_point(n: int, m: float, seed, rescale: bool = True
                           ) -> np.ndarray:
    """Degree parameters equal to ``x`` or ``m x`` w.p. 1/2, ``x = 2/(m+1)``.

    The population mean is 1; with ``rescale`` the sample is divided by its
    own mean so the identifiability constraint holds exactly.
    """
    if m < 1:
        raise ParameterError("m must be >= 1")
    rng = make_rng(seed, stream=2)
    x = 2.0 / (m + 1.0)
    theta = np.where(rng.random(n) < 0.5, x, m * x)
    if rescale:
        theta = theta / theta.mean()
    return theta


def perturb_labels(true_labels, gamma, seed) -> np.ndarray:
    """Balanced initial labels agreeing with the truth on a set fraction.

    For every true class ``k`` of size ``m_k`` exactly ``floor(gamma_k m_k)``
    randomly chosen members keep label ``k``. The remaining nodes are
    relabeled by a cyclic shift over the list of mislabeled nodes sorted by
    (true class, node index), which keeps every class count equal to the
    truth and never returns a mislabeled node to its own class.
    """
    c = np.asarray(true_labels, dtype=np.int64)
    K = int(c.max()) + 1
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (K,))
    if np.any(gamma < 0) or np.any(gamma > 1):
        raise ParameterError("gamma must lie in [0, 1]")
    rng = make_rng(seed)
    out = c.copy()
    moved = []
    for k in range(K):
        members = np.flatnonzero(c == k)
        keep = int(np.floor(gamma[k] * members.size + 1e-9))
        chosen = rng.permutation(members.size)[keep:]
        moved.append(np.sort(members[chosen]))
    sizes = np.array([mv.size for mv in moved])
    total = int(sizes.sum())
    if total == 0:
        return out
    if 2 * sizes.max() > total:
        raise ParameterError(
            "infeasible overlap: a class has more mislabeled nodes than all "
            "other classes combined, so class counts cannot be preserved")
    order = np.concatenate(moved)
    shift = int(sizes.max())
    out[order] = c[np.roll(order, -shift)]
    return out


def perturb_labels_to_nmi(true_labels, target_nmi: float, seed,
                          tol: float = 0.02, max_steps: int = 60) -> np.ndarray:
    """Randomize labels until ``nmi(result, truth)`` is within ``tol`` of target.

    A fixed seed-derived node order and replacement labels make the NMI a
    deterministic function of the number of randomized nodes; that count is
    found by bisection.
    """
    if not 0.0 <= target_nmi <= 1.0:
        raise ParameterError("target_nmi must lie in [0, 1]")
    c = np.asarray(true_labels, dtype=np.int64)
    n = c.size
    K = int(c.max()) + 1
    rng = make_rng(seed)
    order = rng.permutation(n)
    replacement = rng.integers(0, K, size=n)

    def relabel(count):
        e = c.copy()
        idx = order[:count]
        e[idx] = replacement[:count]
        return e

    best, best_gap = c, abs(1.0 - target_nmi)
    if best_gap <= tol:
        return best
    lo, hi = 0, n
    for _ in range(max_steps):
        if lo > hi:
            break
        mid = (lo + hi) // 2
        e = relabel(mid)
        val = nmi(e, c)
        gap = abs(val - target_nmi)
        if gap < best_gap:
            best, best_gap = e, gap
        if gap <= tol:
            return e
        if val > target_nmi:
            lo = mid + 1
        else:
            hi = mid - 1
    raise ParameterError(f"could not reach NMI {target_nmi:.3f}; best gap "
                         f"{best_gap:.3f} (NMI {nmi(best, c):.3f})")
