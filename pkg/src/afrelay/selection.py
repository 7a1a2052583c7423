"""Antenna-pair selection schemes.

* GMM: greedy MSE minimisation. Each round scores every remaining pair with
  the incremental MSE, which is obtained from A_l^-1 by two Sherman-Morrison
  updates instead of a fresh inversion.
* DORS: harmonic mean of the two hop gains (reconstruction).
* SO: projection-angle sum among the chosen sub-channels (reconstruction).
* Exhaustive: brute-force oracle over all relay subsets and pair choices.

All argmin/argmax scans keep the first best candidate in
(relay, backward, forward) order.
"""

from dataclasses import dataclass, field, replace
from itertools import combinations
from math import comb

import numpy as np

from .channel import AntennaPair, candidate_pairs
from .linalg import (
    UPDATE_TOL,
    hermitian_inverse,
    rank_one_update_inverse,
    trace_real,
)
from .link import build_link, equivalent_link, mse_direct, relay_gain, relay_gains

DEFAULT_EXHAUSTIVE_BUDGET = 10**7
_U64_MAX = 2**64 - 1


class InsufficientRelaysError(ValueError):
    pass


class BudgetExceededError(RuntimeError):
    def __init__(self, count, budget):
        super().__init__(
            f"exhaustive search needs {count} trials, above the budget of {budget}"
        )
        self.count = count
        self.budget = budget


@dataclass
class SelectionState:
    """Running state of the greedy search after ``level`` accepted pairs."""

    sigma_x2: float
    ploc: float
    pairs: list
    h_l: np.ndarray  # (l, Ns)
    g_l: np.ndarray  # (Nd, l)
    w_l: np.ndarray  # (l,)
    phi_l: np.ndarray
    a_l: np.ndarray
    a_l_inv: np.ndarray
    remaining: list
    mse_trace: list = field(default_factory=list)

    @classmethod
    def initial(cls, config):
        nd, ns = config.nd, config.ns
        eye = np.eye(nd, dtype=np.complex128)
        return cls(
            sigma_x2=config.sigma_x2,
            ploc=config.ploc,
            pairs=[],
            h_l=np.zeros((0, ns), dtype=np.complex128),
            g_l=np.zeros((nd, 0), dtype=np.complex128),
            w_l=np.zeros(0),
            phi_l=eye.copy(),
            a_l=eye.copy(),
            a_l_inv=eye.copy(),
            remaining=candidate_pairs(config),
        )

    @property
    def level(self):
        return len(self.pairs)

    @property
    def gwh(self):
        """Current equivalent channel G_l W_l H_l."""
        return (self.g_l * self.w_l) @ self.h_l

    def current_mse(self):
        return self.sigma_x2 * trace_real(self.phi_l @ self.a_l_inv)

    def accept(self, pair, channels, mse):
        """Append ``pair``, drop its relay from the pool and refresh Phi, A, A^-1."""
        h = channels.h(pair)
        g = channels.g(pair)
        w = relay_gain(h, self.sigma_x2, self.ploc)
        self.pairs.append(pair)
        self.h_l = np.vstack([self.h_l, h[np.newaxis, :]])
        self.g_l = np.hstack([self.g_l, g[:, np.newaxis]])
        self.w_l = np.append(self.w_l, w)
        gw = self.g_l * self.w_l
        gwh = gw @ self.h_l
        self.phi_l = np.eye(gw.shape[0]) + gw @ gw.conj().T
        self.a_l = self.phi_l + self.sigma_x2 * (gwh @ gwh.conj().T)
        self.a_l_inv = hermitian_inverse(self.a_l)
        self.remaining = [p for p in self.remaining if p.relay != pair.relay]
        self.mse_trace.append(float(mse))


@dataclass(frozen=True)
class SelectionResult:
    pairs: tuple
    scheme: str
    mse: float
    mse_trace: tuple
    per_relay_power_used: float

    @property
    def size(self):
        return len(self.pairs)


def incremental_mse(state, candidate, channels, sigma_x2, ploc):
    """MSE after adding ``candidate`` to the pairs already in ``state``.

    Two rank-one updates turn A_l^-1 into C^-1, the inverse of
    A_l + u g^H + g v^H, and the MSE is
    ``sigma_x2 * tr{(Phi_l + w^2 g g^H) C^-1}``. A_l is never re-inverted.
    """
    h = channels.h(candidate)
    g = channels.g(candidate)
    w = relay_gain(h, sigma_x2, ploc)
    gwh = state.gwh
    h_conj = h.conj()
    f = gwh + w * np.outer(g, h)
    u = sigma_x2 * w * (gwh @ h_conj) + w**2 * g
    v = sigma_x2 * w * (f @ h_conj)
    b_inv = rank_one_update_inverse(state.a_l_inv, u, g)
    c_inv = rank_one_update_inverse(b_inv, g, v)
    phi_next = state.phi_l + w**2 * np.outer(g, g.conj())
    return sigma_x2 * trace_real(phi_next @ c_inv)


def score_candidates(state, candidates, channels):
    """Batched ``incremental_mse`` for many candidates at once.

    Candidates whose rank-one updates are numerically singular score +inf.
    """
    if not candidates:
        return np.zeros(0)
    s2 = state.sigma_x2
    relay = np.array([p.relay for p in candidates])
    m = np.array([p.backward_antenna for p in candidates])
    n = np.array([p.forward_antenna for p in candidates])
    h = channels.backward[relay, m, :]  # (C, Ns)
    g = channels.forward[relay, :, n]  # (C, Nd)
    w = relay_gains(h, s2, state.ploc)[:, np.newaxis]
    a_inv = state.a_l_inv

    t_h = h.conj() @ state.gwh.T  # rows: G_l W_l H_l h^H
    h_energy = np.sum(np.abs(h) ** 2, axis=1, keepdims=True)
    u = s2 * w * t_h + w**2 * g
    v = s2 * w * t_h + s2 * w**2 * h_energy * g

    au = u @ a_inv.T
    ga = g.conj() @ a_inv
    den1 = 1.0 + np.sum(g.conj() * au, axis=1)
    bad = np.abs(den1) <= UPDATE_TOL
    den1 = np.where(bad, 1.0, den1)
    b_inv = a_inv[np.newaxis] - au[:, :, np.newaxis] * ga[:, np.newaxis, :] / den1[:, None, None]

    bg = np.einsum("cij,cj->ci", b_inv, g)
    vb = np.einsum("ci,cij->cj", v.conj(), b_inv)
    den2 = 1.0 + np.sum(v.conj() * bg, axis=1)
    bad |= np.abs(den2) <= UPDATE_TOL
    den2 = np.where(bad, 1.0, den2)
    c_inv = b_inv - bg[:, :, np.newaxis] * vb[:, np.newaxis, :] / den2[:, None, None]

    tr_phi = np.einsum("ij,cji->c", state.phi_l, c_inv)
    quad = np.einsum("ci,cij,cj->c", g.conj(), c_inv, g)
    q = s2 * (tr_phi + w[:, 0] ** 2 * quad).real
    q[bad | ~np.isfinite(q)] = np.inf
    return q


def gmm_select(channels, config):
    state = SelectionState.initial(config)
    previous = np.inf
    while state.remaining:
        scores = score_candidates(state, state.remaining, channels)
        best = int(np.argmin(scores))
        q = scores[best]
        if not q < previous:
            break
        previous = q
        state.accept(state.remaining[best], channels, q)
    mse = state.mse_trace[-1] if state.mse_trace else state.current_mse()
    return SelectionResult(
        tuple(state.pairs), "GMM", float(mse), tuple(state.mse_trace), config.ploc
    )


def _check_enough_relays(config):
    if config.k < config.m:
        raise InsufficientRelaysError(
            f"need at least M = {config.m} relays, network has K = {config.k}"
        )


def harmonic_gain(h, g):
    """Harmonic mean 2ab/(a+b) of the squared norms of two sub-channels."""
    a = np.sum(np.abs(h) ** 2, axis=-1)
    b = np.sum(np.abs(g) ** 2, axis=-1)
    total = a + b
    return np.divide(2.0 * a * b, total, out=np.zeros_like(total), where=total > 0)


def _pair_arrays(channels, pairs):
    relay = np.array([p.relay for p in pairs])
    m = np.array([p.backward_antenna for p in pairs])
    n = np.array([p.forward_antenna for p in pairs])
    return channels.backward[relay, m, :], channels.forward[relay, :, n]


def _finish(pairs, scheme, channels, config):
    link = build_link(channels, pairs, config.sigma_x2, config.ploc)
    q = mse_direct(equivalent_link(link), config.ns, config.nd)
    return SelectionResult(tuple(pairs), scheme, q, (), config.ploc)


def dors_select(channels, config):
    _check_enough_relays(config)
    pool = candidate_pairs(config)
    h, g = _pair_arrays(channels, pool)
    metric = harmonic_gain(h, g)
    chosen = []
    used = set()
    for _ in range(config.m):
        masked = np.where([p.relay in used for p in pool], -np.inf, metric)
        best = int(np.argmax(masked))
        chosen.append(pool[best])
        used.add(pool[best].relay)
    return _finish(chosen, "DORS", channels, config)


def subchannel_angle(a, b):
    """Angle in [0, pi/2] between two complex vectors; 0 if either is zero."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    inner = np.abs(np.sum(np.conj(a) * b, axis=-1))
    denom = na * nb
    cos = np.divide(inner, denom, out=np.ones_like(denom), where=denom > 0)
    return np.arccos(np.clip(cos, 0.0, 1.0))


def so_select(channels, config):
    _check_enough_relays(config)
    pool = candidate_pairs(config)
    h, g = _pair_arrays(channels, pool)
    relays = np.array([p.relay for p in pool])
    seed = int(np.argmax(harmonic_gain(h, g)))
    chosen = [seed]
    while len(chosen) < config.m:
        score = np.zeros(len(pool))
        for j in chosen:
            score += subchannel_angle(h, h[j]) + subchannel_angle(g, g[j])
        score[np.isin(relays, relays[chosen])] = -np.inf
        chosen.append(int(np.argmax(score)))
    return _finish([pool[i] for i in chosen], "SO", channels, config)


def exhaustive_trial_count(config, l_max=None):
    """Sum over l in [M, l_max] of C(K, l) * (Nr^2)^l, as an exact integer."""
    l_max = config.k if l_max is None else l_max
    if l_max > config.k:
        raise ValueError(f"l_max = {l_max} exceeds K = {config.k}")
    per_relay = config.nr**2
    total = sum(comb(config.k, l) * per_relay**l for l in range(config.m, l_max + 1))
    if total > _U64_MAX:
        raise OverflowError(f"trial count {total} exceeds the 64-bit range")
    return total


def _subset_mse(contrib, noise, s2):
    """Batched Wiener MSE for every assignment of pairs to a relay subset.

    ``contrib[i]`` holds w g h^T for each of relay i's pair choices and
    ``noise[i]`` holds w^2 g g^H. Returns MSEs in itertools.product order.
    """
    nd, ns = contrib[0].shape[1:]
    h_eq = np.zeros((1, nd, ns), dtype=np.complex128)
    phi = np.eye(nd, dtype=np.complex128)[np.newaxis]
    for c, q in zip(contrib, noise):
        h_eq = (h_eq[:, np.newaxis] + c[np.newaxis]).reshape(-1, nd, ns)
        phi = (phi[:, np.newaxis] + q[np.newaxis]).reshape(-1, nd, nd)
    r = phi + s2 * h_eq @ np.conj(np.swapaxes(h_eq, 1, 2))
    sol = np.linalg.solve(r, phi)
    return s2 * np.trace(sol, axis1=1, axis2=2).real


def exhaustive_select(channels, config, l_max=None, budget=DEFAULT_EXHAUSTIVE_BUDGET):
    """Global MSE minimiser over every relay subset of size M..l_max.

    Each relay in a subset contributes one of its Nr^2 antenna pairs at
    full local power. Runs independently of the incremental formulas:
    every candidate set is evaluated by a fresh linear solve.
    """
    l_max = config.k if l_max is None else l_max
    count = exhaustive_trial_count(config, l_max)
    if count > budget:
        raise BudgetExceededError(count, budget)
    s2 = config.sigma_x2
    nr2 = config.nr**2
    per_relay = [[AntennaPair(k, m, n) for m in range(config.nr) for n in range(config.nr)]
                 for k in range(config.k)]
    contrib, noise = [], []
    for pairs in per_relay:
        h, g = _pair_arrays(channels, pairs)
        w = relay_gains(h, s2, config.ploc)
        contrib.append(w[:, None, None] * g[:, :, None] * h[:, None, :])
        noise.append((w**2)[:, None, None] * g[:, :, None] * g.conj()[:, None, :])

    best_q, best_pairs = np.inf, ()
    for size in range(config.m, l_max + 1):
        for subset in combinations(range(config.k), size):
            q = _subset_mse([contrib[k] for k in subset], [noise[k] for k in subset], s2)
            idx = int(np.argmin(q))
            if q[idx] < best_q:
                best_q = float(q[idx])
                choice = np.unravel_index(idx, (nr2,) * size)
                best_pairs = tuple(per_relay[k][c] for k, c in zip(subset, choice))
    return SelectionResult(best_pairs, "EXHAUSTIVE", best_q, (best_q,), config.ploc)


def apply_global_power_constraint(result, channels, config):
    """Re-evaluate a selection with relay power diluted to M*ploc/L."""
    size = result.size
    if size < 1:
        raise ValueError("global power constraint needs at least one selected pair")
    power = config.m * config.ploc / size
    link = build_link(channels, result.pairs, config.sigma_x2, power)
    q = mse_direct(equivalent_link(link), config.ns, config.nd)
    return replace(result, scheme=f"{result.scheme}-global-power", mse=q,
                   per_relay_power_used=power)
