"""Feature fusion with loopy belief propagation over superpixel adjacency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

EPS_LIKE = 1e-6
EPS_PSI = 0.05
PSI_DEFAULT = 0.5
MAX_ITERS = 30
TOL = 1e-6
THETA = 0.5

DRIVABLE, NON_DRIVABLE = 0, 1


@dataclass(frozen=True)
class MarkovNetwork:
    """Binary pairwise network.

    ``likelihood`` is (n, 2) over (drivable, non-drivable); ``edges`` is
    (m, 2); ``compat[e, s_i, s_j]`` is the compatibility table of edge
    ``(i, j) = edges[e]``.
    """

    likelihood: np.ndarray
    edges: np.ndarray
    compat: np.ndarray

    @property
    def n(self) -> int:
        return len(self.likelihood)


@dataclass(frozen=True)
class PosteriorMap:
    belief: np.ndarray  # (n, 2)
    converged: bool
    iterations: int

    @property
    def drivable(self) -> np.ndarray:
        return self.belief[:, DRIVABLE]

    def image(self, sp) -> np.ndarray:
        labels = getattr(sp, "labels", sp)
        return self.drivable[labels]


def node_likelihood(probs: np.ndarray, eps_like: float = EPS_LIKE) -> np.ndarray:
    """Product of available feature probabilities and of their complements.

    ``probs`` is (n, k) with NaN for unavailable factors, which count as 1 in
    both states.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    avail = ~np.isnan(probs)
    p = np.where(avail, probs, 1.0)
    q = np.where(avail, 1.0 - probs, 1.0)
    lik = np.column_stack([p.prod(axis=1), q.prod(axis=1)])
    return np.maximum(lik, eps_like)


def potts_table(psi: np.ndarray, eps_psi: float = EPS_PSI) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.float64)
    same = np.maximum(psi, eps_psi)
    diff = np.maximum(1.0 - psi, eps_psi)
    table = np.empty(psi.shape + (2, 2))
    table[..., 0, 0] = table[..., 1, 1] = same
    table[..., 0, 1] = table[..., 1, 0] = diff
    return table


def normal_closeness(n_i, n_j, var_n, psi_default: float = PSI_DEFAULT) -> np.ndarray:
    n_i = np.asarray(n_i, dtype=np.float64)
    n_j = np.asarray(n_j, dtype=np.float64)
    psi = np.exp(-(n_i - n_j) ** 2 / (2.0 * var_n))
    return np.where(np.isnan(n_i) | np.isnan(n_j), psi_default, psi)


def build_network(sp, probs, table, params, eps_like: float = EPS_LIKE,
                  eps_psi: float = EPS_PSI, psi_default: float = PSI_DEFAULT) -> MarkovNetwork:
    lik = node_likelihood(probs.stack(), eps_like)
    edges = sp.edges
    psi = normal_closeness(table.normal[edges[:, 0]], table.normal[edges[:, 1]],
                           params.var_n, psi_default)
    return MarkovNetwork(lik, edges, potts_table(psi, eps_psi))


def run_bp(net: MarkovNetwork, max_iters: int = MAX_ITERS, tol: float = TOL,
           callback=None) -> PosteriorMap:
    """Sum-product belief propagation with a synchronous schedule.

    All messages start uniform and every message of an iteration is computed
    from the previous iteration's messages, then normalised to sum 1.
    Iteration stops once no message moves by ``tol`` or more.
    ``callback(iteration, messages)`` sees the (2m, 2) message array after
    each iteration; row ``2e`` is ``i -> j`` and ``2e + 1`` is ``j -> i``
    for ``(i, j) = edges[e]``.
    """
    n = net.n
    log_lik = np.log(net.likelihood)
    edges = np.asarray(net.edges, dtype=np.intp).reshape(-1, 2)
    m = len(edges)
    if m == 0:
        belief = net.likelihood / net.likelihood.sum(axis=1, keepdims=True)
        return PosteriorMap(belief, True, 0)

    src = np.empty(2 * m, dtype=np.intp)
    dst = np.empty(2 * m, dtype=np.intp)
    src[0::2], dst[0::2] = edges[:, 0], edges[:, 1]
    src[1::2], dst[1::2] = edges[:, 1], edges[:, 0]
    rev = np.arange(2 * m) ^ 1
    # log_psi[d, s_src, s_dst]
    log_psi = np.empty((2 * m, 2, 2))
    log_psi[0::2] = np.log(net.compat)
    log_psi[1::2] = np.log(np.swapaxes(net.compat, 1, 2))

    msg = np.full((2 * m, 2), 0.5)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        log_msg = np.log(msg)
        incoming = np.column_stack([np.bincount(dst, log_msg[:, s], n) for s in (0, 1)])
        cavity = log_lik[src] + incoming[src] - log_msg[rev]
        new = logsumexp(cavity[:, :, None] + log_psi, axis=1)
        new = np.exp(new - logsumexp(new, axis=1, keepdims=True))
        delta = np.abs(new - msg).max()
        msg = new
        if callback is not None:
            callback(it, msg)
        if delta < tol:
            converged = True
            break

    log_msg = np.log(msg)
    incoming = np.column_stack([np.bincount(dst, log_msg[:, s], n) for s in (0, 1)])
    logb = log_lik + incoming
    belief = np.exp(logb - logsumexp(logb, axis=1, keepdims=True))
    return PosteriorMap(belief, converged, it)


def threshold_posterior(post: PosteriorMap, theta: float = THETA, sp=None) -> np.ndarray:
    """Drivable mask: pixels whose superpixel posterior exceeds ``theta``.

    Returns a per-superpixel mask when ``sp`` is omitted.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    keep = post.drivable > theta
    if sp is None:
        return keep
    return keep[getattr(sp, "labels", sp)]
