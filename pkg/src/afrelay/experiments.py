"""Monte Carlo runners for the MSE, BER and selection-count experiments.

Every trial is a pure function of ``(config, sweep point, trial index)``.
Trials may be spread over worker processes; results are reduced in trial
order so the output does not depend on the number of workers.
"""

import csv
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import STREAM_LINK, ConfigError, db_to_linear, draw_network, rng_for
from .link import build_link, equivalent_link, mse_direct, transmit_qpsk
from .selection import (
    DEFAULT_EXHAUSTIVE_BUDGET,
    BudgetExceededError,
    apply_global_power_constraint,
    dors_select,
    exhaustive_select,
    exhaustive_trial_count,
    gmm_select,
    so_select,
)

SCHEMES = ("GMM", "GMM-global-power", "DORS", "SO", "EXHAUSTIVE")
CSV_HEADER = ["sweep", "scheme", "mean_mse", "mse_ci95", "mean_ber", "ber_ci95", "mean_L", "seconds"]
HIST_HEADER = ["sweep", "L", "count"]


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep.

    ``sweep_kind`` is ``"k"`` (relay counts) or ``"snr_db"`` (SNR at the
    relays in dB). The base network supplies every parameter the sweep
    does not vary.
    """

    base: object
    schemes: tuple
    sweep_kind: str
    sweep: tuple
    trials: int
    seed: int = 0
    symbols_per_trial: int = 200
    exhaustive_budget: int = DEFAULT_EXHAUSTIVE_BUDGET
    exhaustive_l_max: object = None
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.sweep_kind not in ("k", "snr_db"):
            raise ConfigError(f"unknown sweep kind {self.sweep_kind!r}")
        if not self.sweep:
            raise ConfigError("sweep must not be empty")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.symbols_per_trial < 1:
            raise ConfigError("symbols_per_trial must be >= 1")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)}")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        for value in self.sweep:
            net = self.network(value)
            if "EXHAUSTIVE" in self.schemes:
                l_max = net.k if self.exhaustive_l_max is None else min(self.exhaustive_l_max, net.k)
                count = exhaustive_trial_count(net, l_max)
                if count > self.exhaustive_budget:
                    raise BudgetExceededError(count, self.exhaustive_budget)

    def network(self, value):
        if self.sweep_kind == "k":
            return replace(self.base, k=int(value))
        return replace(self.base, ps=db_to_linear(float(value)))


@dataclass
class PointStats:
    sweep: float
    scheme: str
    trials: int
    mean_mse: float
    mse_ci95: float
    mean_l: float
    l_hist: dict
    seconds: float
    mean_ber: object = None
    ber_ci95: object = None


@dataclass
class ExperimentResult:
    kind: str
    rows: list = field(default_factory=list)

    def get(self, sweep, scheme):
        for row in self.rows:
            if row.sweep == sweep and row.scheme == scheme:
                return row
        raise KeyError((sweep, scheme))


def ci95(values):
    """Normal-approximation 95% half-width of the mean; 0 for one sample."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(1.96 * values.std(ddof=1) / np.sqrt(values.size))


def _select_all(channels, net, cfg):
    """Run every requested scheme on one channel draw.

    Returns ``{scheme: (SelectionResult, seconds)}``.
    """
    out = {}
    need_gmm = "GMM" in cfg.schemes or "GMM-global-power" in cfg.schemes
    if need_gmm:
        t0 = time.perf_counter()
        gmm = gmm_select(channels, net)
        dt = time.perf_counter() - t0
        if "GMM" in cfg.schemes:
            out["GMM"] = (gmm, dt)
        if "GMM-global-power" in cfg.schemes:
            t0 = time.perf_counter()
            out["GMM-global-power"] = (apply_global_power_constraint(gmm, channels, net),
                                       dt + time.perf_counter() - t0)
    runners = {"DORS": dors_select, "SO": so_select}
    for name, fn in runners.items():
        if name in cfg.schemes:
            t0 = time.perf_counter()
            out[name] = (fn(channels, net), time.perf_counter() - t0)
    if "EXHAUSTIVE" in cfg.schemes:
        t0 = time.perf_counter()
        l_max = net.k if cfg.exhaustive_l_max is None else min(cfg.exhaustive_l_max, net.k)
        res = exhaustive_select(channels, net, l_max, cfg.exhaustive_budget)
        out["EXHAUSTIVE"] = (res, time.perf_counter() - t0)
    return out


def _trial_bit_errors(channels, net, selection, cfg, point_index, trial):
    link = build_link(channels, selection.pairs, net.sigma_x2, selection.per_relay_power_used)
    eq = equivalent_link(link)
    bits = rng_for(cfg.seed, trial, STREAM_LINK, point_index, 0).integers(
        0, 2, size=(cfg.symbols_per_trial, 2 * net.ns), dtype=np.int8
    )
    noise_rng = rng_for(cfg.seed, trial, STREAM_LINK, point_index, 1)
    _, detected = transmit_qpsk(eq, bits, noise_rng, cfg.noise_scale)
    return int(np.count_nonzero(detected != bits)), bits.size


def run_trial(cfg, kind, point_index, trial):
    """One Monte Carlo trial at one sweep point.

    Returns a tuple aligned with ``cfg.schemes`` of
    ``(mse, L, bit_errors, bits, seconds)``; the BER fields are 0 unless
    ``kind == "ber"``. All schemes see the same channel draw and, for BER,
    the same transmitted bits.
    """
    net = cfg.network(cfg.sweep[point_index])
    channels = draw_network(net, cfg.seed, trial)
    chosen = _select_all(channels, net, cfg)
    record = []
    for scheme in cfg.schemes:
        selection, seconds = chosen[scheme]
        errors = total = 0
        if kind == "ber":
            t0 = time.perf_counter()
            errors, total = _trial_bit_errors(channels, net, selection, cfg, point_index, trial)
            seconds += time.perf_counter() - t0
        record.append((selection.mse, selection.size, errors, total, seconds))
    return tuple(record)


def _run_chunk(args):
    cfg, kind, point_index, start, stop = args
    return [run_trial(cfg, kind, point_index, t) for t in range(start, stop)]


def _chunks(trials, workers):
    n = max(1, min(trials, workers * 4))
    bounds = np.linspace(0, trials, n + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run(cfg, kind, workers=1, progress=None):
    result = ExperimentResult(kind)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for pi, value in enumerate(cfg.sweep):
            jobs = [(cfg, kind, pi, a, b) for a, b in _chunks(cfg.trials, workers)]
            if pool is None:
                chunks = map(_run_chunk, jobs)
            else:
                chunks = pool.map(_run_chunk, jobs)
            records = [rec for chunk in chunks for rec in chunk]
            if progress is not None:
                progress(pi + 1, len(cfg.sweep))
            data = np.array(records, dtype=float)  # (trials, schemes, 5)
            for si, scheme in enumerate(cfg.schemes):
                mse, size, errors, bits, secs = data[:, si, :].T
                row = PointStats(
                    sweep=value,
                    scheme=scheme,
                    trials=cfg.trials,
                    mean_mse=float(mse.mean()),
                    mse_ci95=ci95(mse),
                    mean_l=float(size.mean()),
                    l_hist=dict(sorted(Counter(size.astype(int).tolist()).items())),
                    seconds=float(secs.sum()),
                )
                if kind == "ber":
                    ber = errors / bits
                    row.mean_ber = float(errors.sum() / bits.sum())
                    row.ber_ci95 = ci95(ber)
                result.rows.append(row)
    finally:
        if pool is not None:
            pool.shutdown()
    return result


def run_mse_experiment(cfg, workers=1, progress=None):
    if cfg.sweep_kind != "k":
        raise ConfigError("the MSE experiment sweeps the relay count (k_list)")
    return _run(cfg, "mse", workers, progress)


def run_ber_experiment(cfg, workers=1, progress=None):
    if cfg.sweep_kind != "snr_db":
        raise ConfigError("the BER experiment sweeps SNR at the relays (snr_db_list)")
    return _run(cfg, "ber", workers, progress)


def run_selection_histogram(cfg, workers=1, progress=None):
    if cfg.sweep_kind != "snr_db":
        raise ConfigError("the histogram experiment sweeps SNR at the relays (snr_db_list)")
    if "GMM" not in cfg.schemes:
        raise ConfigError("the histogram experiment needs the GMM scheme")
    return _run(cfg, "hist", workers, progress)


def _fmt(x):
    if x is None:
        return ""
    return f"{x:.9g}"


def csv_rows(result, include_timing=False):
    """CSV rows (header first). Timing is left blank unless requested so that
    reruns produce identical bytes."""
    rows = [list(CSV_HEADER)]
    for r in result.rows:
        rows.append([
            _fmt(r.sweep), r.scheme, _fmt(r.mean_mse), _fmt(r.mse_ci95),
            _fmt(r.mean_ber), _fmt(r.ber_ci95), _fmt(r.mean_l),
            _fmt(r.seconds) if include_timing else "",
        ])
    return rows


def hist_rows(result, scheme="GMM"):
    rows = [list(HIST_HEADER)]
    for r in result.rows:
        if r.scheme == scheme:
            rows.extend([_fmt(r.sweep), str(size), str(count)] for size, count in r.l_hist.items())
    return rows


def _write(path, rows):
    try:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_csv(result, path, include_timing=False):
    """Write the summary CSV; histogram runs also get ``<path>.hist.csv``."""
    _write(path, csv_rows(result, include_timing))
    if result.kind == "hist":
        _write(f"{path}.hist.csv", hist_rows(result))


def read_csv(path):
    """Parse a summary CSV back into dicts; empty fields become None."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for key, value in rec.items():
                if key == "scheme":
                    row[key] = value
                else:
                    row[key] = float(value) if value != "" else None
            out.append(row)
    return out


def summarize(result):
    """Fixed-width text table, one row per (sweep point, scheme)."""
    sweep_name = {"mse": "K"}.get(result.kind, "SNR1_dB")
    head = f"{sweep_name:>8} {'scheme':<18} {'mean_MSE':>12} {'+/-95%':>10} {'mean_BER':>12} {'+/-95%':>10} {'mean_L':>8} {'seconds':>9}"
    lines = [head, "-" * len(head)]
    for r in result.rows:
        ber = f"{r.mean_ber:12.4e}" if r.mean_ber is not None else f"{'':>12}"
        ber_ci = f"{r.ber_ci95:10.2e}" if r.ber_ci95 is not None else f"{'':>10}"
        lines.append(
            f"{r.sweep:>8g} {r.scheme:<18} {r.mean_mse:12.6f} {r.mse_ci95:10.2e} "
            f"{ber} {ber_ci} {r.mean_l:8.3f} {r.seconds:9.2f}"
        )
    return "\n".join(lines)
