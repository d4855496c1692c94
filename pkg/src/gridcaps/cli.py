"""Command-line front end.

Subcommands cover the whole pipeline: case inspection, dataset
generation, training, evaluation suites, and numeric self-checks.
Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np

from . import attack, degrade, evaluation, grid, training
from . import dataset as ds
from .baselines import build_baseline
from .capsnet import CapsNet
from .errors import (CaseParseError, ConfigError, DataError, FormatError,
                     GridCapsError, NumericError, SamplingError, StructuralError)
from .matpower import CASE_ALIASES
from .modelio import MODEL_KINDS, load_model, save_model

DEFAULT_CONFIG = {
    "case": "ieee14",
    "seed": 7,
    "n": 2000,
    "attack": "single_point",
    "split_fracs": [0.8, 0.1, 0.1],
    "scenario": attack.ScenarioConfig().to_dict(),
    "degradation": degrade.DegradationConfig().to_dict(),
    "training": training.TrainConfig().to_dict(),
}

_ATTACK_ALIASES = {"single": "single_point", "multi": "multi_point",
                   "single_point": "single_point", "multi_point": "multi_point"}


def _resolve_config(args):
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        for key, value in loaded.items():
            if key in ("scenario", "degradation", "training"):
                cfg[key].update(value)
            else:
                cfg[key] = value
    for key in ("case", "seed", "n"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "attack", None):
        cfg["attack"] = _ATTACK_ALIASES[args.attack]
    if getattr(args, "epochs", None) is not None:
        cfg["training"]["epochs"] = args.epochs
    for flag, section, key in (("snr", "degradation", "snr_db"),
                               ("drop_frac", "degradation", "drop_frac"),
                               ("outlier_frac", "degradation", "outlier_frac"),
                               ("delay", "degradation", "delay_s")):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[section][key] = value
    if cfg["case"] not in CASE_ALIASES:
        raise ConfigError(f"unknown case {cfg['case']!r}")
    cfg["scenario"]["kind"] = cfg["attack"]
    return cfg


def cmd_inspect(args):
    cfg = _resolve_config(args)
    bundle = ds.CaseBundle.load(cfg["case"])
    topo = bundle.topology
    model = grid.assemble_dynamics(topo, bundle.suscept, bundle.params, case=cfg["case"])
    eigs = grid.eigenvalues(model.a)
    report = grid.classify_stability(eigs)
    print(f"case {cfg['case']}: N_G={topo.n_gen} N_L={topo.n_load} "
          f"base={topo.base_mva:g} MVA")
    print(f"generator buses: {list(topo.generator_buses)}")
    print(f"attack-free stability: {report.status}")
    print("eigenvalues of the attack-free system matrix (1/s, rad/s):")
    for e in eigs:
        print(f"  {e.real:+.6f} {e.imag:+.6f}j")
    return 0


def cmd_gen(args):
    cfg = _resolve_config(args)
    case, seed, n = cfg["case"], int(cfg["seed"]), int(cfg["n"])
    scen_cfg = attack.ScenarioConfig.from_dict(cfg["scenario"])
    degr_cfg = degrade.DegradationConfig.from_dict(cfg["degradation"])
    os.makedirs(args.out, exist_ok=True)

    windows, labels, gen_indices = ds.generate_samples(
        case, n, seed, scen_cfg, degradation=degr_cfg if degr_cfg.active else None
    )
    bundle = ds.CaseBundle.load(case)
    provenance = {
        "case": case, "seed": seed, "n": n, "kind": cfg["attack"],
        "scenario": scen_cfg.to_dict(), "degradation": degr_cfg.to_dict(),
        "config": cfg,
    }
    splits = ds.build_dataset(case, windows, labels, gen_indices, bundle.class_map,
                              seed, fracs=tuple(cfg["split_fracs"]),
                              provenance=provenance)
    paths = ds.split_paths(args.out, case, cfg["attack"])
    for split in splits:
        ds.serialize(split, paths[split.split])
        print(f"{split.split}: {len(split)} samples -> {paths[split.split]}")
    return 0


def _load_split(data_dir, case, kind, split):
    path = ds.split_paths(data_dir, case, kind)[split]
    if not os.path.exists(path):
        raise DataError(f"missing dataset split {path}; run `gridcaps gen` first")
    return ds.deserialize(path), ds.file_sha256(path), path


def cmd_train(args):
    cfg = _resolve_config(args)
    case, seed = cfg["case"], int(cfg["seed"])
    kind = args.kind
    train_set, train_sha, _ = _load_split(args.data, case, cfg["attack"], "train")
    val_set, _, _ = _load_split(args.data, case, cfg["attack"], "val")

    tcfg = training.TrainConfig.from_dict({**cfg["training"], "seed": seed})
    if kind == "capsnet":
        model = CapsNet.build(case, train_set.class_map, seed=seed)
    else:
        model = build_baseline(kind, case, seed=seed)
    history = training.fit(model, train_set.to_arrays(), val_set.to_arrays(), tcfg)

    out = args.out or f"{case}_{kind}.gckp"
    meta = save_model(out, model, extra_meta={
        "train_config": tcfg.to_dict(),
        "dataset_sha256": train_sha,
        "config": cfg,
    })
    history_path = os.path.splitext(out)[0] + "_history.csv"
    training.write_history_csv(history_path, history)
    best = max(history, key=lambda r: r["val_acc"]) if history else {}
    print(f"trained {kind} on {case}: {len(history)} epochs, "
          f"best val_acc={best.get('val_acc', float('nan')):.4f}")
    print(f"checkpoint -> {out}")
    print(f"history    -> {history_path}")
    return 0


def cmd_eval(args):
    cfg = _resolve_config(args)
    case, seed = cfg["case"], int(cfg["seed"])
    if not args.model:
        raise ConfigError("eval needs at least one --model checkpoint")
    models = {}
    for path in args.model:
        model, meta = load_model(path)
        if meta.get("case") != case:
            raise ConfigError(f"{path} was trained on {meta.get('case')}, not {case}")
        models[meta["kind"]] = model

    test_sets = {}
    for tag, kind in (("single", "single_point"), ("multi", "multi_point")):
        try:
            split, sha, _ = _load_split(args.data, case, kind, "test")
        except DataError:
            continue
        test_sets[tag] = (split, sha)
    if not test_sets:
        raise DataError(f"no test split found under {args.data} for case {case}")

    kwargs = {}
    degr = cfg["degradation"]
    if degr.get("snr_db") is not None:
        kwargs["snrs"] = (float(degr["snr_db"]),)
    if degr.get("delay_s") is not None:
        kwargs["delays"] = (float(degr["delay_s"]),)
    if degr.get("drop_frac") is not None:
        kwargs["drop_range"] = float(degr["drop_frac"])
    if degr.get("outlier_frac") is not None:
        kwargs["outlier_range"] = float(degr["outlier_frac"])

    rows = evaluation.run_suite(args.suite, models, test_sets, seed, case,
                                with_latency=args.latency, **kwargs)
    evaluation.write_report(args.out, rows)
    for row in rows:
        print(f"{row.model:8s} {row.condition:14s} accuracy={row.accuracy:.4f}")
    print(f"report -> {args.out}")
    return 0


def cmd_selfcheck(args):
    failures = []

    def check(name, fn):
        try:
            detail = fn()
            print(f"[ok]   {name}" + (f" ({detail})" if detail else ""))
        except Exception as exc:
            failures.append(name)
            print(f"[FAIL] {name}: {exc}")

    check("dense gradient vs finite differences", _check_dense_grad)
    check("conv2d gradient vs finite differences", _check_conv_grad)
    check("routing gradient vs finite differences", _check_routing_grad)
    check("routing conservation and squash bound", _check_routing_invariants)
    check("rk4 vs matrix-exponential oracle", _check_rk4_oracle)
    check("snr round trip", _check_snr_roundtrip)
    if failures:
        raise NumericError(f"selfcheck failed: {', '.join(failures)}")
    print("selfcheck passed")
    return 0


def _check_dense_grad():
    from .nn.gradcheck import grad_check
    from .nn.layers import Dense
    rng = np.random.default_rng(0)
    layer = Dense(6, 4, rng=rng, dtype=np.float64)
    x = rng.normal(size=(3, 6))
    target = rng.normal(size=(3, 4))

    def loss_fn():
        y, cache = layer.forward(x)
        layer.backward(cache, (y - target) / y.size)
        return float(np.sum((y - target) ** 2) / (2 * y.size))

    worst = max(grad_check(loss_fn, layer.params()).values())
    if worst > 1e-7:
        raise NumericError(f"rel err {worst:.2e} > 1e-7")
    return f"max rel err {worst:.1e}"


def _check_conv_grad():
    from .nn.gradcheck import grad_check
    from .nn.layers import Conv2D
    rng = np.random.default_rng(1)
    layer = Conv2D(2, 3, (2, 2), (1, 1), rng=rng, dtype=np.float64)
    x = rng.normal(size=(2, 4, 5, 2))
    target = rng.normal(size=(2, 3, 4, 3))

    def loss_fn():
        y, cache = layer.forward(x)
        layer.backward(cache, (y - target) / y.size)
        return float(np.sum((y - target) ** 2) / (2 * y.size))

    worst = max(grad_check(loss_fn, layer.params()).values())
    if worst > 1e-6:
        raise NumericError(f"rel err {worst:.2e} > 1e-6")
    return f"max rel err {worst:.1e}"


def _check_routing_grad():
    from .capsnet import dynamic_routing, routing_backward
    from .nn.gradcheck import grad_check
    from .nn.tensor import Tensor
    rng = np.random.default_rng(2)
    u = Tensor(rng.normal(size=(2, 8, 3, 4)))
    seed_grad = rng.normal(size=(2, 3, 4))

    def loss_fn():
        v, _, cache = dynamic_routing(u.values, iters=5, record=True)
        u.add_grad(routing_backward(cache, seed_grad))
        return float(np.sum(v * seed_grad))

    worst = max(grad_check(loss_fn, [("u", u)], h=1e-6).values())
    if worst > 1e-4:
        raise NumericError(f"rel err {worst:.2e} > 1e-4")
    return f"max rel err {worst:.1e}"


def _check_routing_invariants():
    from .capsnet import dynamic_routing
    rng = np.random.default_rng(3)
    for _ in range(100):
        u = rng.normal(size=(1, 12, 5, 6))
        v, coup, _ = dynamic_routing(u, iters=5)
        if np.abs(coup.sum(axis=2) - 1.0).max() > 1e-6:
            raise NumericError("coupling rows do not sum to 1")
        if np.sqrt(np.sum(v ** 2, axis=2)).max() >= 1.0:
            raise NumericError("digit vector length reached 1")
    return "100 passes"


def _check_rk4_oracle():
    from scipy.linalg import expm
    from .sim import simulate
    bundle = ds.CaseBundle.load("ieee14")
    rng = np.random.default_rng(4)
    cfg = attack.ScenarioConfig(gain_temper=True)
    scenario = attack.sample_scenario(rng, bundle.topology, bundle.suscept,
                                      bundle.params, cfg)
    model = attack.scenario_model(bundle.topology, bundle.suscept, bundle.params, scenario)
    traj = simulate(model, duration=2.0, dt=0.001)
    phi = expm(model.a * 0.001)
    gam = np.linalg.solve(model.a, (phi - np.eye(model.a.shape[0])) @ model.b)
    x = np.zeros(model.a.shape[0])
    worst = 0.0
    states = traj.states().T
    for k in range(1, states.shape[0]):
        x = phi @ x + gam
        worst = max(worst, float(np.abs(states[k] - x).max()))
    if worst > 1e-6:
        raise NumericError(f"max |rk4 - expm| = {worst:.2e} > 1e-6")
    return f"max err {worst:.1e}"


def _check_snr_roundtrip():
    from .sim import PmuWindow
    rng = np.random.default_rng(5)
    data = np.stack([
        50.0 + 0.05 * rng.standard_normal((10, 100)),
        0.02 * rng.standard_normal((10, 100)),
    ], axis=-1)
    win = PmuWindow(data)
    for target in (26.0, 20.0, 16.5):
        noisy = degrade.add_gaussian_noise(win, target, rng)
        measured = degrade.empirical_snr_db(win, noisy)
        if np.abs(measured - target).max() > 0.5:
            raise NumericError(f"snr {target} dB measured as {measured}")
    return "26/20/16.5 dB within 0.5 dB"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gridcaps",
        description="Load-altering-attack simulation and capsule-net localization",
    )
    parser.add_argument("--dump-config", action="store_true",
                        help="print the default configuration as JSON and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p, with_data=False):
        p.add_argument("--case", choices=sorted(CASE_ALIASES))
        p.add_argument("--seed", type=int)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--attack", choices=sorted(_ATTACK_ALIASES),
                       help="attack kind (single/multi point)")
        if with_data:
            p.add_argument("--data", default=".", help="dataset directory")

    p = sub.add_parser("inspect", help="print case dimensions and nominal eigenvalues")
    common(p)

    p = sub.add_parser("gen", help="generate and serialize a labeled dataset")
    common(p)
    p.add_argument("--n", type=int, help="number of samples (default 2000)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--snr", type=float, help="train-time noise SNR in dB")
    p.add_argument("--drop-frac", dest="drop_frac", type=float)
    p.add_argument("--outlier-frac", dest="outlier_frac", type=float)

    p = sub.add_parser("train", help="train the capsule net or a baseline")
    common(p, with_data=True)
    p.add_argument("--kind", choices=MODEL_KINDS, default="capsnet")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="checkpoint path (default <case>_<kind>.gckp)")

    p = sub.add_parser("eval", help="run an evaluation suite and write a CSV report")
    common(p, with_data=True)
    p.add_argument("--suite", choices=evaluation.SUITES, required=True)
    p.add_argument("--model", action="append", help="checkpoint path (repeatable)")
    p.add_argument("--out", default="report.csv")
    p.add_argument("--latency", action="store_true",
                   help="measure per-window latency (makes the CSV run dependent)")
    p.add_argument("--snr", type=float, help="restrict the noise suite to one SNR")
    p.add_argument("--drop-frac", dest="drop_frac", type=float)
    p.add_argument("--outlier-frac", dest="outlier_frac", type=float)
    p.add_argument("--delay", type=float, help="restrict the delay suite to one delay")

    p = sub.add_parser("selfcheck", help="run numeric self-checks")
    return parser


_HANDLERS = {
    "inspect": cmd_inspect,
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "selfcheck": cmd_selfcheck,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_config:
        print(json.dumps(DEFAULT_CONFIG, indent=2, sort_keys=True))
        return 0
    if not args.command:
        parser.print_help()
        return 2
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CaseParseError, StructuralError, FormatError, DataError, SamplingError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, GridCapsError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
