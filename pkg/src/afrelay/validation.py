"""Self-check suites behind ``afrelay validate``.

Each suite returns a ``CheckResult``; the CLI exits 0 only if all pass.
"""

from dataclasses import dataclass

import numpy as np

from .channel import AntennaPair, NetworkConfig, complex_gaussian, draw_network, rng_for
from .linalg import hermitian_inverse, rank_one_update_inverse
from .link import build_link, equivalent_link, mse_direct, wiener_filter
from .selection import SelectionState, incremental_mse

# Stream tag for validation draws, kept apart from experiment streams.
_STREAM_VALIDATE = 7


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def random_state(rng, ns, nd, nr, k, snr_db, level, seed, trial):
    """A GMM-style state with ``level`` random accepted pairs, plus one
    random candidate on an unused relay. Returns (state, candidate, channels, config)."""
    config = NetworkConfig.from_db(ns, nd, nr, k, snr_db)
    channels = draw_network(config, seed, trial)
    state = SelectionState.initial(config)
    relays = rng.permutation(k)
    for relay in relays[:level]:
        state.accept(pair_on(int(relay), rng, nr), channels, np.nan)
    candidate = pair_on(int(relays[level]), rng, nr)
    return state, candidate, channels, config


def pair_on(relay, rng, nr):
    return AntennaPair(relay, int(rng.integers(nr)), int(rng.integers(nr)))


def augmented_mse(state, candidate, channels, config):
    pairs = list(state.pairs) + [candidate]
    link = build_link(channels, pairs, config.sigma_x2, config.ploc)
    return mse_direct(equivalent_link(link), config.ns, config.nd)


def check_incremental_equivalence(instances=1000, seed=2024, tol=1e-9):
    """Incremental MSE vs direct evaluation of the augmented link."""
    rng = rng_for(seed, 0, _STREAM_VALIDATE)
    worst = 0.0
    for i in range(instances):
        ns = nd = int(rng.choice([2, 4]))
        k = int(rng.choice([4, 8]))
        level = int(rng.integers(0, 4))
        snr = float(rng.choice([5.0, 20.0]))
        state, cand, channels, config = random_state(rng, ns, nd, 2, k, snr, level, seed, i)
        q_inc = incremental_mse(state, cand, channels, config.sigma_x2, config.ploc)
        q_dir = augmented_mse(state, cand, channels, config)
        worst = max(worst, abs(q_inc - q_dir) / abs(q_dir))
    return CheckResult(
        "incremental MSE equivalence", worst <= tol,
        f"max relative error {worst:.3e} over {instances} instances (tol {tol:g})",
    )


def random_hpd(rng, n):
    x = complex_gaussian(rng, (n, n))
    return x @ x.conj().T + 0.5 * np.eye(n)


def check_sherman_morrison(instances=1000, seed=2024, tol=1e-9):
    rng = rng_for(seed, 1, _STREAM_VALIDATE)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 9))
        a = random_hpd(rng, n)
        x = complex_gaussian(rng, n)
        y = complex_gaussian(rng, n)
        fast = rank_one_update_inverse(hermitian_inverse(a), x, y)
        direct = np.linalg.inv(a + np.outer(x, y.conj()))
        worst = max(worst, np.max(np.abs(fast - direct)) / np.max(np.abs(direct)))
    return CheckResult(
        "Sherman-Morrison update", worst <= tol,
        f"max relative error {worst:.3e} over {instances} instances (tol {tol:g})",
    )


def empirical_wiener_mse(eq, draws, rng, chunk=200_000):
    """Mean of ||F z - x||^2 over Gaussian symbols and noise."""
    f = wiener_filter(eq)
    total = 0.0
    done = 0
    while done < draws:
        t = min(chunk, draws - done)
        x = np.sqrt(eq.sigma_x2) * complex_gaussian(rng, (t, eq.ns))
        z = x @ eq.h_eq.T + complex_gaussian(rng, (t, eq.gw.shape[1])) @ eq.gw.T \
            + complex_gaussian(rng, (t, eq.nd))
        err = z @ f.T - x
        total += float(np.sum(np.abs(err) ** 2))
        done += t
    return total / draws


def random_link(rng, seed, trial, ns=4, nd=4, nr=2, k=8, snr_db=10.0, size=4):
    config = NetworkConfig.from_db(ns, nd, nr, k, snr_db)
    channels = draw_network(config, seed, trial)
    relays = rng.permutation(k)[:size]
    pairs = [pair_on(int(r), rng, nr) for r in relays]
    link = build_link(channels, pairs, config.sigma_x2, config.ploc)
    return equivalent_link(link), config


def check_wiener_mse(links=20, draws=1_000_000, seed=2024, tol=0.02):
    rng = rng_for(seed, 2, _STREAM_VALIDATE)
    worst = 0.0
    for i in range(links):
        size = int(rng.integers(1, 7))
        eq, config = random_link(rng, seed, 10_000 + i, size=size)
        q = mse_direct(eq, config.ns, config.nd, include_beta=True)
        emp = empirical_wiener_mse(eq, draws, rng)
        worst = max(worst, abs(emp - q) / q)
    return CheckResult(
        "Wiener MSE agreement", worst <= tol,
        f"max relative gap {worst:.3e} over {links} links x {draws} draws (tol {tol:g})",
    )


def run_all(quick=False):
    if quick:
        return [
            check_incremental_equivalence(200),
            check_sherman_morrison(200),
            check_wiener_mse(links=5, draws=200_000),
        ]
    return [check_incremental_equivalence(), check_sherman_morrison(), check_wiener_mse()]
