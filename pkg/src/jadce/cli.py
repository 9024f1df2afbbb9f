"""Command-line entry point: ``jadce <command> [options]``.

All artifacts live in the ``--out`` directory:

* ``gen``    -> ``train.jdce``, ``val.jdce``, ``test.jdce`` (+ JSON manifests)
* ``dict``   -> ``dict_plain.mat64`` or ``dict_symmetric.mat64`` (+ JSON sidecar)
* ``train``  -> ``net_<VARIANT>.json`` and ``train_log_<VARIANT>.csv``
* ``tune``   -> ``lpgm_at.json``
* ``eval``   -> ``eval.csv``
* ``sweep``  -> ``sweep_<axis>.csv``
* ``theory`` -> ``theory_report.json``

Exit status: 0 on success, 2 on a configuration error (including bad
flags), 1 on any other failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .adaptive import DEFAULT_GRIDS, AdaptiveContext, HyperParams, grid_search
from .bench import (
    ITERATIVE,
    LPGM_AT,
    METHODS,
    Artifacts,
    SweepSpec,
    run_sweep,
    write_csv,
)
from .core import lift_dictionary
from .datagen import ConfigError, SceneConfig, gen_dataset, gen_pilot
from .dictionary import PLAIN, SYMMETRIC, DictionaryError, solve_plain_dictionary, solve_symmetric_dictionary
from .io import (
    dataset_fingerprint,
    read_dataset,
    read_dictionary,
    read_json,
    write_dataset,
    write_dictionary,
    write_json,
    write_train_log,
)
from .training import TrainConfig, TrainConfigError, train_layerwise
from .unfolded import ALISTA_GS, ALPGM, ALPGM_MM, STEP_LPGM, VARIANTS, UnfoldedNetwork

log = logging.getLogger("jadce")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

DEFAULT_DICT_FOR = {ALPGM: PLAIN, ALISTA_GS: PLAIN, ALPGM_MM: SYMMETRIC, STEP_LPGM: None}
SPLITS = {"train": (2000, 101), "val": (500, 202), "test": (500, 303)}


class UsageError(Exception):
    """Configuration problem detected after argument parsing."""


# -- configuration ---------------------------------------------------------

def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{p}: {exc}") from exc


def scene_config(conf: dict, seed: int | None) -> SceneConfig:
    scene = dict(conf.get("scene", {}))
    unknown = set(scene) - set(SceneConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown [scene] keys: {sorted(unknown)}")
    if seed is not None:
        scene["seed"] = seed
    return SceneConfig(**scene)


def _section(conf, name, allowed):
    sec = dict(conf.get(name, {}))
    unknown = set(sec) - set(allowed)
    if unknown:
        raise UsageError(f"unknown [{name}] keys: {sorted(unknown)}")
    return sec


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"missing artifact {path} ({what}); run the corresponding command first")
    return path


def _split_info(conf, name):
    data = _section(conf, "data", [f"{s}_{k}" for s in SPLITS for k in ("count", "seed")])
    count, seed = SPLITS[name]
    return int(data.get(f"{name}_count", count)), int(data.get(f"{name}_seed", seed))


# -- commands --------------------------------------------------------------

def cmd_gen(args, conf, out: Path):
    cfg = scene_config(conf, args.seed)
    splits = [args.split] if args.split else list(SPLITS)
    for name in splits:
        count, master = _split_info(conf, name)
        ds = gen_dataset(cfg, count, master)
        write_dataset(out / f"{name}.jdce", ds)
        print(f"{name}: {count} samples, fingerprint {dataset_fingerprint(ds)}")


def _pilot_s_tilde(conf, seed):
    cfg = scene_config(conf, seed)
    return lift_dictionary(gen_pilot(cfg.pilot_kind, cfg.pilot_len, cfg.n_devices, cfg.seed))


def cmd_dict(args, conf, out: Path):
    sec = _section(conf, "dictionary", ["tau", "steps", "lr"])
    s_tilde = _pilot_s_tilde(conf, args.seed)
    steps = int(sec.get("steps", 2000))
    lr = float(sec.get("lr", 1e-2))
    if args.kind == PLAIN:
        d = solve_plain_dictionary(s_tilde, steps, lr)
    else:
        _, d = solve_symmetric_dictionary(s_tilde, float(sec.get("tau", 1.0)), steps, lr)
    write_dictionary(out / f"dict_{args.kind}.mat64", d)
    print(f"{args.kind} dictionary: objective {d.final_objective:.6g}, "
          f"max constraint residual {d.max_constraint_residual:.3g}")


def _train_config(conf, seed):
    sec = _section(conf, "train", ["K", "alpha0", "batch_size", "stage_iters", "optimizer",
                                   "clamp_margin", "eval_every", "dictionary"])
    K = int(sec.pop("K", 16))
    sec.pop("dictionary", None)
    if seed is not None:
        sec["seed"] = seed
    return K, TrainConfig(**sec)


def load_dictionary_for(variant, conf, out: Path):
    kind = conf.get("train", {}).get("dictionary", DEFAULT_DICT_FOR[variant])
    if kind is None:
        return None, None
    if kind not in (PLAIN, SYMMETRIC):
        raise UsageError(f"unknown dictionary kind {kind!r}")
    path = _need(out / f"dict_{kind}.mat64", f"{kind} dictionary")
    return read_dictionary(path), path.name


def cmd_train(args, conf, out: Path):
    K, tcfg = _train_config(conf, args.seed)
    train = read_dataset(_need(out / "train.jdce", "training set"))
    val = read_dataset(_need(out / "val.jdce", "validation set"))
    d, ref = load_dictionary_for(args.variant, conf, out)
    history = []
    net = train_layerwise(args.variant, train, val, K, tcfg, d, history)
    net.dictionary_ref = ref
    rec = net.to_record()
    rec["train_fingerprint"] = dataset_fingerprint(train)
    write_json(out / f"net_{args.variant}.json", rec)
    write_train_log(out / f"train_log_{args.variant}.csv", history)
    best = min((r.val_nmse_db for r in history), default=float("nan"))
    print(f"{args.variant}: {K} layers, best validation NMSE {best:.2f} dB")


def _tune_grids(conf):
    sec = _section(conf, "tune", ["c_theta", "c_beta", "c_eta", "K"])
    grids = {k: tuple(float(v) for v in sec.get(k, DEFAULT_GRIDS[k])) for k in DEFAULT_GRIDS}
    return grids, int(sec.get("K", conf.get("train", {}).get("K", 16)))


def cmd_tune(args, conf, out: Path):
    grids, K = _tune_grids(conf)
    train = read_dataset(_need(out / "train.jdce", "training set"))
    d = read_dictionary(_need(out / "dict_symmetric.mat64", "symmetric dictionary"))
    ctx = AdaptiveContext.build(train.s_tilde, d, K)
    hp, val = grid_search(train, ctx, grids)
    cfg = train.config
    write_json(out / "lpgm_at.json", {
        "hyperparameters": hp.to_dict(),
        "train_nmse_db": val,
        "K": K,
        "dictionary": "dict_symmetric.mat64",
        "train_fingerprint": {
            "hash": dataset_fingerprint(train),
            "seed": train.master_seed,
            "snr_db": cfg.snr_db,
            "active_ratio": cfg.active_prob,
        },
    })
    print(f"LPGM-AT: c_theta={hp.c_theta:g} c_beta={hp.c_beta:g} c_eta={hp.c_eta:g}, train NMSE {val:.2f} dB")


def load_artifacts(out: Path, methods) -> Artifacts:
    art = Artifacts()
    dicts = {}
    for m in methods:
        if m in VARIANTS:
            path = out / f"net_{m}.json"
            art.sources[m] = str(path)
            if not path.exists():
                continue
            rec = read_json(path)
            ref = rec.get("dictionary")
            d = None
            if ref:
                if ref not in dicts:
                    dicts[ref] = read_dictionary(_need(out / ref, "dictionary referenced by the network"))
                d = dicts[ref]
            art.nets[m] = UnfoldedNetwork.from_record(rec, d)
        elif m == LPGM_AT:
            path = out / "lpgm_at.json"
            art.sources[m] = str(path)
            if not path.exists():
                continue
            rec = read_json(path)
            d = read_dictionary(_need(out / rec["dictionary"], "symmetric dictionary"))
            s_tilde = lift_dictionary(_pilot_for(out))
            art.adaptive[LPGM_AT] = (AdaptiveContext.build(s_tilde, d, int(rec["K"])),
                                     HyperParams(**rec["hyperparameters"]))
    return art


def _pilot_for(out: Path):
    return read_dataset(_need(out / "train.jdce", "training set")).pilot


def _methods(conf, default):
    methods = list(conf.get("methods", default))
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {list(METHODS)}")
    return methods


def cmd_eval(args, conf, out: Path):
    sec = _section(conf, "eval", ["methods", "iters", "lam"])
    methods = _methods(sec, ITERATIVE)
    test = read_dataset(_need(out / "test.jdce", "test set"))
    art = load_artifacts(out, methods)
    spec = SweepSpec("mismatch", ["base"], methods, int(sec.get("iters", 50)),
                     test_count=test.count, test_seed=test.master_seed, lam=float(sec.get("lam", 0.1)))
    rows = run_sweep(spec, test.config, art, {test.config: test})
    write_csv(out / "eval.csv", rows)
    for r in rows:
        print(f"{r.method:10s} {r.nmse_db:9.3f} dB  {r.runtime_ms_per_sample:.4f} ms/sample")


def cmd_sweep(args, conf, out: Path):
    sec = _section(conf, "sweep", ["axis", "values", "methods", "iters", "layers", "test_count",
                                   "test_seed", "lam"])
    if "axis" not in sec or "values" not in sec:
        raise UsageError("[sweep] needs 'axis' and 'values'")
    methods = _methods(sec, ITERATIVE)
    spec = SweepSpec(sec["axis"], list(sec["values"]), methods, int(sec.get("iters", 50)),
                     int(sec.get("layers", 16)), int(sec.get("test_count", 500)),
                     int(sec.get("test_seed", 303)), float(sec.get("lam", 0.1)))
    base = scene_config(conf, args.seed)
    rows = run_sweep(spec, base, load_artifacts(out, methods))
    path = write_csv(out / f"sweep_{spec.axis}.csv", rows)
    print(f"{len(rows)} rows -> {path}")


def cmd_theory(args, conf, out: Path):
    from .theory import theory_report

    sec = _section(conf, "theory", ["pilot_len", "n_devices", "n_antennas", "s", "mu_lo", "mu_hi",
                                    "eps_fraction", "instances", "extra_layers", "tau", "steps"])
    report = theory_report(seed=0 if args.seed is None else args.seed, **sec)
    write_json(out / "theory_report.json", report)
    s = report["summary"]
    print(f"certified {s['instances']} instances: containment {s['containment_all']}, "
          f"bound {s['bound_all']}, K0 = {report['constants']['k0']}")


COMMANDS = {
    "gen": cmd_gen, "dict": cmd_dict, "train": cmd_train, "tune": cmd_tune,
    "eval": cmd_eval, "sweep": cmd_sweep, "theory": cmd_theory,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML configuration file")
    common.add_argument("--seed", type=int, metavar="U64", help="override the scene seed")
    common.add_argument("--out", metavar="DIR", help="artifact directory (default: current directory)")
    common.add_argument("--threads", type=int, metavar="N", help="limit BLAS threads")
    common.add_argument("-v", "--verbose", action="store_true")

    # the same flags are accepted before or after the command name
    sub_common = argparse.ArgumentParser(add_help=False)
    for action in common._actions:
        kwargs = {"default": argparse.SUPPRESS, "help": action.help}
        if action.option_strings[-1] == "--verbose":
            sub_common.add_argument(*action.option_strings, action="store_true", **kwargs)
        else:
            sub_common.add_argument(*action.option_strings, type=action.type, metavar=action.metavar,
                                    **kwargs)

    p = argparse.ArgumentParser(prog="jadce", parents=[common],
                                description="Joint activity detection and channel estimation toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)
    g = sub.add_parser("gen", parents=[sub_common], help="generate train/val/test datasets")
    g.add_argument("--split", choices=list(SPLITS), help="generate a single split")
    d = sub.add_parser("dict", parents=[sub_common], help="solve an analytic dictionary")
    d.add_argument("kind", choices=[PLAIN, SYMMETRIC])
    t = sub.add_parser("train", parents=[sub_common], help="train an unfolded network layer by layer")
    t.add_argument("variant", choices=list(VARIANTS))
    sub.add_parser("tune", parents=[sub_common], help="grid-search the LPGM-AT hyperparameters")
    sub.add_parser("eval", parents=[sub_common], help="evaluate methods on the test set")
    sub.add_parser("sweep", parents=[sub_common], help="run an experiment sweep to CSV")
    sub.add_parser("theory", parents=[sub_common], help="certified runs of the convergence guarantee")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for bad usage
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = getattr(args, "threads", None)
    if threads is not None and threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        conf = load_config(getattr(args, "config", None))
        out = Path(getattr(args, "out", None) or ".")
        out.mkdir(parents=True, exist_ok=True)
        if threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                COMMANDS[args.command](args, conf, out)
        else:
            COMMANDS[args.command](args, conf, out)
    except (UsageError, ConfigError, TrainConfigError, DictionaryError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surface anything else as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
