"""Experiment suites and the episode-mean accuracy metric.

A suite evaluates trained models under one family of test conditions
(clean single/multi, test-time noise, missing/outlier points, delayed
windows) and emits one CSV row per (model, condition). Every row is
reproducible from (seed, condition, dataset checksum): degradations
draw from per-sample streams keyed by those alone.
"""

from __future__ import annotations

import csv
import time
import zlib
from dataclasses import dataclass

import numpy as np

from . import attack, degrade, training
from .dataset import CaseBundle, Dataset, generate_entry
from .errors import ConfigError, DataError
from .sim import PmuWindow, delayed_window

SUITES = ("clean", "noise", "missing_outlier", "delay")
NOISE_SNRS_DB = (26.0, 20.0, 16.5)
MISSING_RANGE = (0.03, 0.05)
OUTLIER_RANGE = (0.03, 0.08)
DELAYS_S = tuple(round(0.1 * k, 1) for k in range(11))
EPISODE_SIZE = 20

CSV_FIELDS = ("model", "case", "suite", "condition", "accuracy", "n_test",
              "T_n", "seed", "dataset_sha256", "latency_ms")


@dataclass(frozen=True)
class EvalRow:
    model: str
    case: str
    suite: str
    condition: str
    accuracy: float
    n_test: int
    t_n: int
    seed: int
    dataset_sha256: str
    latency_ms: float | None = None


def episode_accuracy(preds, labels, episodes):
    """Mean of per-episode correct fractions.

    ``episodes`` is either the episode count (contiguous, near-equal
    sizes) or an explicit list of episode sizes. Averaging per episode
    first means a small episode weighs as much as a large one.
    """
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise DataError("prediction/label length mismatch")
    n = len(labels)
    if np.isscalar(episodes):
        t_n = int(episodes)
        if t_n < 1 or t_n > n:
            raise DataError(f"cannot split {n} samples into {t_n} episodes")
        base, extra = divmod(n, t_n)
        sizes = [base + (1 if i < extra else 0) for i in range(t_n)]
    else:
        sizes = [int(s) for s in episodes]
        if sum(sizes) != n:
            raise DataError(f"episode sizes {sizes} do not cover {n} samples")
    if any(s <= 0 for s in sizes):
        raise DataError("empty episode")
    correct = preds == labels
    total, pos = 0.0, 0
    for s in sizes:
        total += correct[pos:pos + s].mean()
        pos += s
    return float(total / len(sizes))


def default_episode_count(n):
    return max(1, n // EPISODE_SIZE)


def _condition_rng(seed, condition, index):
    tag = zlib.crc32(condition.encode())
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag, int(index)]))


def _accuracy_row(model_name, model, suite, condition, windows, labels, case,
                  seed, sha, latency_ms=None):
    preds = training.predict_classes(model, windows)
    t_n = default_episode_count(len(labels))
    acc = episode_accuracy(preds, labels, t_n)
    return EvalRow(model_name, case, suite, condition, acc, len(labels), t_n,
                   seed, sha, latency_ms)


def _degraded_windows(ds: Dataset, condition, seed, snr_db=None, drop=None, outlier=None):
    """Apply one test-time degradation per window under per-sample streams.

    ``drop``/``outlier`` may be (lo, hi) ranges; the per-window fraction
    is then drawn from the same stream that degrades the window.
    """
    out = np.empty_like(ds.windows)
    for i in range(len(ds)):
        rng = _condition_rng(seed, condition, ds.gen_indices[i])
        win = PmuWindow(ds.windows[i].astype(np.float64), ds.t_start, ds.sample_period)
        if snr_db is not None:
            win = degrade.add_gaussian_noise(win, snr_db, rng)
        if drop is not None:
            frac = drop if np.isscalar(drop) else float(rng.uniform(*drop))
            win = degrade.drop_points(win, frac, rng)
        if outlier is not None:
            frac = outlier if np.isscalar(outlier) else float(rng.uniform(*outlier))
            win = degrade.inject_outliers(win, frac, rng)
        out[i] = win.data
    return out


def measure_latency(model, windows, n_repeat=50):
    """Median wall-clock milliseconds for a single-window forward pass."""
    windows = np.asarray(windows)
    if windows.ndim == 3:
        windows = windows[None]
    model.scores(windows[:1])                      # warm-up
    times = []
    for i in range(n_repeat):
        w = windows[i % len(windows)][None]
        t0 = time.perf_counter()
        model.scores(w)
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.median(times))


def run_suite(suite, models, test_sets, seed, case, with_latency=False,
              snrs=NOISE_SNRS_DB, delays=DELAYS_S, drop_range=MISSING_RANGE,
              outlier_range=OUTLIER_RANGE, bundle=None):
    """Evaluate ``models`` (dict name -> model) under one suite.

    ``test_sets`` maps condition tags ("single", "multi") to
    (Dataset, sha256) pairs. The delay suite re-simulates the test
    scenarios from the dataset provenance, so it needs the (single)
    test set to carry generation metadata.
    """
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")
    if not models:
        raise ConfigError("no models supplied")
    if not test_sets:
        raise ConfigError("no test datasets supplied")

    latencies = {}
    base_key = "single" if "single" in test_sets else sorted(test_sets)[0]
    base_ds, base_sha = test_sets[base_key]
    if with_latency:
        for name, model in models.items():
            latencies[name] = measure_latency(model, base_ds.windows)

    rows = []
    if suite == "clean":
        conditions = [(key, test_sets[key][0].windows, test_sets[key])
                      for key in ("single", "multi") if key in test_sets]
        for name in sorted(models):
            for key, windows, (ds, sha) in conditions:
                rows.append(_accuracy_row(name, models[name], suite, key, windows,
                                          ds.labels, case, seed, sha,
                                          latencies.get(name)))
    elif suite == "noise":
        cache = {}
        for snr in snrs:
            cond = f"snr_{snr:g}"
            cache[cond] = _degraded_windows(base_ds, cond, seed, snr_db=snr)
        for name in sorted(models):
            for cond, windows in cache.items():
                rows.append(_accuracy_row(name, models[name], suite, cond, windows,
                                          base_ds.labels, case, seed, base_sha,
                                          latencies.get(name)))
    elif suite == "missing_outlier":
        cache = {}
        cond = f"missing_{drop_range[0]:g}-{drop_range[1]:g}" if not np.isscalar(drop_range) \
            else f"missing_{drop_range:g}"
        cache[cond] = _degraded_windows(base_ds, cond, seed, drop=drop_range)
        cond = f"outlier_{outlier_range[0]:g}-{outlier_range[1]:g}" if not np.isscalar(outlier_range) \
            else f"outlier_{outlier_range:g}"
        cache[cond] = _degraded_windows(base_ds, cond, seed, outlier=outlier_range)
        for name in sorted(models):
            for cond, windows in cache.items():
                rows.append(_accuracy_row(name, models[name], suite, cond, windows,
                                          base_ds.labels, case, seed, base_sha,
                                          latencies.get(name)))
    else:  # delay
        prov = base_ds.provenance
        if "seed" not in prov or "scenario" not in prov:
            raise DataError("delay suite needs generation provenance in the dataset")
        bundle = bundle or CaseBundle.load(case)
        cfg = attack.ScenarioConfig.from_dict(prov["scenario"])
        gen_seed = int(prov["seed"])
        trajs = []
        for idx in base_ds.gen_indices:
            _, _, traj = generate_entry(bundle, gen_seed, int(idx), cfg)
            trajs.append(traj)
        for delay in delays:
            cond = f"delay_{delay:.1f}"
            windows = np.stack(
                [delayed_window(t, delay).data for t in trajs]
            ).astype(np.float32)
            for name in sorted(models):
                rows.append(_accuracy_row(name, models[name], suite, cond, windows,
                                          base_ds.labels, case, seed, base_sha,
                                          latencies.get(name)))
        rows.sort(key=lambda r: (r.model, delays.index(float(r.condition.split("_")[1]))))
    return rows


def write_report(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in rows:
            writer.writerow([
                r.model, r.case, r.suite, r.condition, repr(r.accuracy), r.n_test,
                r.t_n, r.seed, r.dataset_sha256,
                "" if r.latency_ms is None else f"{r.latency_ms:.3f}",
            ])


def read_report(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append(EvalRow(
                model=rec["model"], case=rec["case"], suite=rec["suite"],
                condition=rec["condition"], accuracy=float(rec["accuracy"]),
                n_test=int(rec["n_test"]), t_n=int(rec["T_n"]), seed=int(rec["seed"]),
                dataset_sha256=rec["dataset_sha256"],
                latency_ms=float(rec["latency_ms"]) if rec["latency_ms"] else None,
            ))
    return rows
