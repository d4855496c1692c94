"""Labeled PMU datasets: generation, splitting, and the file container.

Every sample is produced from its own child RNG stream keyed by
(global seed, sample index), so generation can fan out over processes
and still merge deterministically, and any sample's scenario and
trajectory can be regenerated later from the provenance alone (the
delayed-window evaluation relies on this).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import attack, degrade, grid
from .errors import DataError, FormatError, SamplingError, StructuralError
from .matpower import BusTopology, load_case
from .sim import PmuWindow, WINDOW_SAMPLES, simulate, to_pmu_window

MAGIC = b"GCAP"
VERSION = 1
_SCENARIO_TAG = 101      # rng stream tags under the global seed
_DEGRADE_TAG = 202
_SPLIT_TAG = 303
_RETRY_BUDGET = 80
NO_CLASS = 0xFFFFFFFF    # class slot for non-attack records

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class CaseBundle:
    """Everything needed to simulate one grid case."""

    case: str
    topology: BusTopology
    params: grid.DynamicParams
    suscept: grid.SusceptancePartition

    @classmethod
    def load(cls, case) -> "CaseBundle":
        topology = load_case(case)
        raw = grid.load_params(case)
        params = grid.DynamicParams(
            raw.inertia, raw.damping, raw.gov_kp, raw.gov_ki,
            np.full(topology.n_load, raw.load_damping[0])
            if raw.load_damping.size != topology.n_load else raw.load_damping,
        ).validate(topology)
        return cls(case, topology, params, grid.build_susceptance(topology))

    @property
    def class_map(self):
        return list(self.topology.load_buses)


@dataclass
class Dataset:
    """One split of labeled windows (arrays inside, windows on demand)."""

    windows: np.ndarray          # (n, N_G, T, 2) float32
    labels: np.ndarray           # (n,) int64; NO_CLASS for non-attack rows
    is_attack: np.ndarray        # (n,) uint8
    gen_indices: np.ndarray      # (n,) int64 sample index under the gen seed
    class_map: list              # ordered load-bus ids
    split: str
    case: str
    provenance: dict = field(default_factory=dict)
    t_start: float = 0.0
    sample_period: float = 0.02

    def __len__(self):
        return self.windows.shape[0]

    @property
    def samples(self):
        """(PmuWindow, class_index) view of the stored arrays."""
        return [
            (PmuWindow(self.windows[i], self.t_start, self.sample_period),
             int(self.labels[i]))
            for i in range(len(self))
        ]

    def window(self, i) -> PmuWindow:
        return PmuWindow(self.windows[i], self.t_start, self.sample_period)

    def to_arrays(self):
        return self.windows, self.labels


def scenario_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), _SCENARIO_TAG, int(index)]))


def degrade_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), _DEGRADE_TAG, int(index)]))


def generate_entry(bundle: CaseBundle, seed, index, cfg: attack.ScenarioConfig,
                   duration=3.0, dt=0.001):
    """Scenario + trajectory for one sample index (deterministic in (seed, index)).

    Scenarios whose trajectory diverges inside the simulation horizon or
    breaks the attacker power limit are rejected and redrawn from the
    same stream.
    """
    rng = scenario_rng(seed, index)
    p_lv = attack.vulnerable_load_mw(bundle.topology, cfg)
    last_err = None
    for _ in range(_RETRY_BUDGET):
        try:
            scenario = attack.sample_scenario(
                rng, bundle.topology, bundle.suscept, bundle.params, cfg
            )
        except SamplingError as exc:
            last_err = exc
            continue
        model = attack.scenario_model(bundle.topology, bundle.suscept, bundle.params,
                                      scenario, case=bundle.case)
        traj = simulate(model, duration=duration, dt=dt)
        if traj.diverged_at is not None:
            continue
        if cfg.enforce_limit and not attack.validate_limit(
            scenario, traj, p_lv, bundle.topology.base_mva
        ):
            continue
        return scenario, model, traj
    raise SamplingError(
        f"sample {index}: no admissible scenario in {_RETRY_BUDGET} retries "
        f"({last_err or 'power-limit filter kept rejecting'})"
    )


def _gen_chunk(case, seed, indices, cfg_dict, degr_dict, duration, dt):
    bundle = CaseBundle.load(case)
    cfg = attack.ScenarioConfig.from_dict(cfg_dict)
    degr = degrade.DegradationConfig.from_dict(degr_dict or {})
    out = []
    for index in indices:
        scenario, _, traj = generate_entry(bundle, seed, index, cfg, duration, dt)
        window = to_pmu_window(traj, t_start=0.0)
        if degr.active:
            window = degrade.apply_config(window, degr, degrade_rng(seed, index))
        label = bundle.topology.load_index(scenario.label_bus)
        out.append((index, window.data.astype(np.float32), label))
    return out


def worker_count():
    raw = os.environ.get("GRIDCAPS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def generate_samples(case, n, seed, cfg: attack.ScenarioConfig,
                     degradation: degrade.DegradationConfig | None = None,
                     duration=3.0, dt=0.001):
    """Simulate ``n`` labeled windows; honors GRIDCAPS_THREADS for fan-out."""
    degr_dict = degradation.to_dict() if degradation else None
    indices = list(range(n))
    workers = min(worker_count(), max(1, n))
    if workers == 1:
        chunks = [_gen_chunk(case, seed, indices, cfg.to_dict(), degr_dict, duration, dt)]
    else:
        parts = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_gen_chunk, case, seed, part, cfg.to_dict(), degr_dict,
                            duration, dt)
                for part in parts if part
            ]
            chunks = [f.result() for f in futures]
    merged = sorted((item for chunk in chunks for item in chunk), key=lambda r: r[0])
    windows = np.stack([w for _, w, _ in merged])
    labels = np.array([lab for _, _, lab in merged], dtype=np.int64)
    gen_indices = np.array([i for i, _, _ in merged], dtype=np.int64)
    return windows, labels, gen_indices


def exact_split_sizes(n, fracs):
    """Integer split sizes matching the fractions, largest remainder rule."""
    raw = [n * f for f in fracs]
    sizes = [int(np.floor(r)) for r in raw]
    rem = n - sum(sizes)
    order = np.argsort([-(r - np.floor(r)) for r in raw], kind="stable")
    for j in range(rem):
        sizes[order[j]] += 1
    return sizes


def stratified_split(labels, fracs, rng):
    """Index lists per split, class-stratified, exact global sizes."""
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise StructuralError(f"split fractions {fracs} do not sum to 1")
    n = len(labels)
    target = exact_split_sizes(n, fracs)
    by_class = {}
    for i, y in enumerate(np.asarray(labels)):
        by_class.setdefault(int(y), []).append(i)

    if min(len(v) for v in by_class.values()) < 3:
        warnings.warn("a class has fewer than 3 samples; falling back to a global shuffle")
        perm = rng.permutation(n)
        bounds = np.cumsum([0] + target)
        return [perm[bounds[k]:bounds[k + 1]].tolist() for k in range(len(fracs))]

    assign = [[] for _ in fracs]
    for c in sorted(by_class):
        idx = np.array(by_class[c])
        rng.shuffle(idx)
        quota = exact_split_sizes(len(idx), fracs)
        pos = 0
        for k, q in enumerate(quota):
            assign[k].extend(idx[pos:pos + q].tolist())
            pos += q
    # quota rounding can leave splits off target by a few samples
    for k in range(len(fracs)):
        while len(assign[k]) > target[k]:
            dest = next(j for j in range(len(fracs)) if len(assign[j]) < target[j])
            assign[dest].append(assign[k].pop())
    for k in range(len(fracs)):
        arr = np.array(assign[k], dtype=np.int64)
        rng.shuffle(arr)
        assign[k] = arr.tolist()
    return assign


def build_dataset(case, windows, labels, gen_indices, class_map, seed,
                  fracs=(0.8, 0.1, 0.1), provenance=None):
    """Stratified train/val/test split of generated samples."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _SPLIT_TAG]))
    parts = stratified_split(labels, fracs, rng)
    provenance = dict(provenance or {})
    out = []
    for name, idx in zip(SPLIT_NAMES, parts):
        idx = np.asarray(idx, dtype=np.int64)
        out.append(Dataset(
            windows=windows[idx],
            labels=labels[idx],
            is_attack=np.ones(len(idx), dtype=np.uint8),
            gen_indices=gen_indices[idx],
            class_map=list(class_map),
            split=name,
            case=case,
            provenance=provenance,
        ))
    return tuple(out)


_REC_FIXED = struct.Struct("<IBIff")


def serialize(dataset: Dataset, path):
    """Write one split to its binary container."""
    n_gen = dataset.windows.shape[1] if len(dataset) else 0
    t = dataset.windows.shape[2] if len(dataset) else WINDOW_SAMPLES
    header = {
        "case": dataset.case,
        "class_map": [int(b) for b in dataset.class_map],
        "n_gen": int(n_gen),
        "n_records": int(len(dataset)),
        "n_samples": int(t),
        "provenance": dataset.provenance,
        "split": dataset.split,
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(raw)))
        fh.write(raw)
        for i in range(len(dataset)):
            fh.write(_REC_FIXED.pack(
                int(dataset.labels[i]) if dataset.labels[i] >= 0 else NO_CLASS,
                int(dataset.is_attack[i]),
                int(dataset.gen_indices[i]),
                float(dataset.t_start),
                float(dataset.sample_period),
            ))
            fh.write(np.ascontiguousarray(dataset.windows[i], dtype="<f4").tobytes())


def deserialize(path) -> Dataset:
    """Read a split back; any structural mismatch raises FormatError."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None
    if len(data) < 10 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a dataset container")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    end = 10 + hlen
    if end > len(data):
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[10:end].decode())
        n_rec = int(header["n_records"])
        n_gen = int(header["n_gen"])
        t = int(header["n_samples"])
        class_map = [int(b) for b in header["class_map"]]
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from None

    rec_bytes = _REC_FIXED.size + 4 * n_gen * t * 2
    if len(data) - end != n_rec * rec_bytes:
        raise FormatError(
            f"{path}: payload is {len(data) - end} bytes, expected {n_rec * rec_bytes}"
        )
    windows = np.empty((n_rec, n_gen, t, 2), dtype=np.float32)
    labels = np.empty(n_rec, dtype=np.int64)
    flags = np.empty(n_rec, dtype=np.uint8)
    gen_idx = np.empty(n_rec, dtype=np.int64)
    t_start, period = 0.0, 0.02
    offset = end
    for i in range(n_rec):
        cls, flag, gidx, t_start, period = _REC_FIXED.unpack_from(data, offset)
        offset += _REC_FIXED.size
        labels[i] = -1 if cls == NO_CLASS else cls
        flags[i] = flag
        gen_idx[i] = gidx
        windows[i] = np.frombuffer(
            data, dtype="<f4", count=n_gen * t * 2, offset=offset
        ).reshape(n_gen, t, 2)
        offset += 4 * n_gen * t * 2
    return Dataset(
        windows=windows, labels=labels, is_attack=flags, gen_indices=gen_idx,
        class_map=class_map, split=header.get("split", ""), case=header.get("case", ""),
        provenance=header.get("provenance", {}), t_start=float(t_start),
        sample_period=float(period),
    )


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def split_paths(out_dir, case, kind):
    stem = f"{case}_{kind.replace('_point', '')}"
    return {name: os.path.join(out_dir, f"{stem}_{name}.gcap") for name in SPLIT_NAMES}
