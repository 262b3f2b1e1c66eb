"""Command line: ``paractive run | sweep | verify``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from paractive import __version__
from paractive.config import ConfigError, RunConfig, load_config, load_datasets
from paractive.data import DataFormatError, EmptyTaskError

OK, RUNTIME_FAILURE, CONFIG_ERROR = 0, 1, 2


def _err(msg):
    print(f"paractive: {msg}", file=sys.stderr)


def _apply_overrides(cfg: RunConfig, args):
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    return cfg


def execute(cfg: RunConfig, train, test, k=None):
    """Run the configured engine once; returns (record, bound report or None)."""
    from paractive.engine import run_asynchronous, run_sequential, run_synchronous

    mode = cfg.mode
    if mode == "delayed-iwal":
        return _run_iwal(cfg, train, test)
    cc = cfg.cluster_config(k)
    if mode == "sync":
        return run_synchronous(cc, train, test), None
    if mode == "async":
        return run_asynchronous(cc, train, test), None
    return run_sequential(cc, train, test, mode.split("-", 1)[1]), None


def _run_iwal(cfg, train, test):
    import numpy as np

    from paractive.engine import run_delayed_iwal
    from paractive.learners import ThresholdClass
    from paractive.metrics import bound_report, estimate_disagreement_coefficient, uniform_sampler
    from paractive.sampling import IwalConfig

    hclass = ThresholdClass.grid(cfg.learner.get("size", 1001))
    delay = cfg.delay_model()
    rec = run_delayed_iwal(train, hclass, delay, IwalConfig(cfg.rule["C0"]), seed=cfg.seed,
                           test=test, checkpoint_every=cfg.cluster.get("checkpoint_examples", 100))
    threshold = train.meta.get("threshold", 0.5)
    h_star = int(np.argmin(np.abs(hclass.thresholds - threshold)))
    bound = None
    if delay.bound() is not None:
        theta = estimate_disagreement_coefficient(hclass, uniform_sampler(), h_star,
                                                  seed=cfg.seed).theta
        try:
            bound = bound_report(len(train), delay, theta, train.meta.get("noise_rate", 0.0),
                                 cfg.rule["C0"])
        except ValueError:
            bound = None
    return rec, bound


def _summary_line(rec, out):
    err = rec.final_error()
    err_s = "n/a" if math.isnan(err) else f"{err:.4f}"
    return (f"{rec.mode} k={rec.k}: final error {err_s}, queries {rec.selected}"
            f"/{len(rec.querylog)}, simulated time {rec.simulated_time:.6g} -> {out}")


def _load(args):
    cfg = load_config(args.config)
    return _apply_overrides(cfg, args)


def _datasets(cfg):
    try:
        return load_datasets(cfg)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None
    except EmptyTaskError as exc:
        raise ConfigError(f"[data] positive/negative: {exc}") from None


def _flush_partial(exc, out):
    rec = getattr(exc, "partial_record", None)
    if rec is None:
        return
    try:
        rec.save(out)
        _err(f"partial record written to {out}")
    except OSError as io:
        _err(f"could not write partial record: {io}")


def cmd_run(args):
    try:
        cfg = _load(args)
        if args.k is not None:
            if cfg.mode.startswith("sequential") and args.k != 1:
                raise ConfigError("--k: sequential modes run on one node")
            cfg.cluster["k"] = args.k
        train, test = _datasets(cfg)
    except ConfigError as exc:
        _err(str(exc))
        return CONFIG_ERROR
    except (DataFormatError, OSError) as exc:
        _err(f"reading data: {exc}")
        return RUNTIME_FAILURE
    out = Path(cfg.out)
    try:
        rec, bound = execute(cfg, train, test)
    except ValueError as exc:
        # raised by ClusterConfig validation before any work happens
        if getattr(exc, "partial_record", None) is None:
            _err(f"invalid configuration: {exc}")
            return CONFIG_ERROR
        _err(f"run failed: {exc}")
        _flush_partial(exc, out)
        return RUNTIME_FAILURE
    except (ArithmeticError, AssertionError, RuntimeError, MemoryError) as exc:
        _err(f"run failed: {type(exc).__name__}: {exc}")
        _flush_partial(exc, out)
        return RUNTIME_FAILURE
    rec.extra["dataset"] = dict(cfg.data)
    rec.config["run_config"] = cfg.to_dict()
    rec.save(out, bound)
    print(_summary_line(rec, out))
    return OK


def cmd_sweep(args):
    from paractive.data import check_batch
    from paractive.engine.sync import run_sequential
    from paractive.metrics import export_csv, speedup_curve

    try:
        cfg = _load(args)
        ks = list(args.k) if args.k else list(cfg.sweep.get("k", [1, 2, 4, 8, 16, 32, 64, 128]))
        if not ks:
            raise ConfigError("empty k list")
        unique = sorted(set(ks))
        if len(unique) != len(ks):
            _err(f"warning: duplicate k values removed, sweeping {unique}")
        if cfg.mode not in ("sync", "async"):
            raise ConfigError(f"[run] mode: sweeps need sync or async, not {cfg.mode}")
        B = cfg.cluster.get("B", 3968)
        for k in unique:
            try:
                check_batch(k, B)
            except ValueError as exc:
                raise ConfigError(f"[cluster] B / --k: {exc}") from None
        train, test = _datasets(cfg)
    except ConfigError as exc:
        _err(str(exc))
        return CONFIG_ERROR
    except (DataFormatError, OSError) as exc:
        _err(f"reading data: {exc}")
        return RUNTIME_FAILURE

    out = Path(cfg.out)
    records, failures = {}, []
    for k in unique:
        sub = out / f"k{k}"
        try:
            rec, _ = execute(cfg, train, test, k=k)
        except Exception as exc:  # record and keep sweeping
            failures.append((k, f"{type(exc).__name__}: {exc}"))
            _err(f"k={k} failed: {exc}")
            _flush_partial(exc, sub)
            continue
        rec.extra["dataset"] = dict(cfg.data)
        rec.save(sub)
        records[k] = rec
        print(_summary_line(rec, sub))

    passive = None
    if cfg.sweep.get("passive"):
        try:
            cc = cfg.cluster_config(1)
            passive = run_sequential(cc, train, test, "passive")
            passive.save(out / "passive")
        except Exception as exc:
            failures.append(("passive", f"{type(exc).__name__}: {exc}"))
    targets = cfg.sweep.get("targets")
    if not targets:
        finals = [r.final_error() for r in records.values() if not math.isnan(r.final_error())]
        targets = [max(finals)] if finals else []
    rows = speedup_curve(records, targets, passive)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(rows, out / "summary.csv")
    if failures:
        with open(out / "failures.txt", "w") as f:
            for k, msg in failures:
                f.write(f"k={k}: {msg}\n")
    print(f"sweep over k={unique}: {len(records)} ok, {len(failures)} failed -> {out / 'summary.csv'}")
    return RUNTIME_FAILURE if failures else OK


def cmd_verify(args):
    from paractive import acceptance

    only = set(args.only) if args.only else None
    failed = 0
    for fn in acceptance.CHECKS:
        number = fn.number
        if only is not None and number not in only:
            continue
        try:
            res = fn()
            line = res.line()
            failed += not res.passed
        except Exception as exc:  # a crashing check is a failing check
            line = f"[FAIL] {number:2d} {fn.__name__}: raised {type(exc).__name__}: {exc}"
            failed += 1
        print(line, flush=True)
    mnist = acceptance.check_mnist_smoke()
    print(mnist.line())
    failed += not (mnist.passed or mnist.skipped)
    print(f"{'FAILED' if failed else 'OK'}: {failed} failing check(s)")
    return RUNTIME_FAILURE if failed else OK


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    p = argparse.ArgumentParser(prog="paractive", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"paractive {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="key = value run configuration")
        sp.add_argument("--out", help="output directory (overrides [run] out)")
        sp.add_argument("--seed", type=int, help="run seed (overrides [run] seed)")

    r = sub.add_parser("run", help="execute one run and write its record")
    common(r)
    r.add_argument("--k", type=int, help="node count (overrides [cluster] k)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run over several node counts and write summary.csv")
    common(s)
    s.add_argument("--k", type=_int_list, help="comma-separated node counts")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", type=_int_list, help="comma-separated check numbers")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return CONFIG_ERROR if exc.code else OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
