"""Command line entry point.

Machine-readable results go to stdout as ``key<TAB>value`` lines; human
tables and progress go to stderr. Exit codes: 0 ok, 2 usage or config error,
3 data error, 4 artifact (checksum/version/truncation) error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench, config as config_mod, cost, pipeline, serialize
from .config import REPRESENTATIONS
from .errors import ArtifactError, ConfigError, DataError, LightConvError

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_ARTIFACT = 4


class UsageError(LightConvError):
    pass


def emit(out, pairs) -> None:
    for k, v in pairs:
        out.write(f"{k}\t{v}\n")


def _config(args, task: str | None = None):
    if getattr(args, "config", None):
        cfg = config_mod.load(args.config)
        if task and cfg.task != task:
            raise UsageError(f"--task {task} conflicts with config task {cfg.task}")
        return cfg
    if task:
        return pipeline.desk_config(task)
    raise UsageError("need --config or --task")


def _apply_overrides(cfg, args):
    for key, attr in (("train.epochs", "epochs"), ("data.train", "train_size"), ("data.test", "test_size"),
                      ("bench.input_len", "input_len"), ("bench.runs", "runs")):
        value = getattr(args, attr, None)
        if value is not None:
            config_mod.set_value(cfg, key, str(value), where=f"--{attr.replace('_', '-')}")
    return cfg.validate()


def cmd_analyze(args, out, err) -> int:
    cfg = _apply_overrides(_config(args, args.task), args)
    baseline = cost.param_count(cfg.with_variant(args.baseline))
    rows = [(v, cost.param_count(cfg.with_variant(v)).against(baseline)) for v in REPRESENTATIONS]
    own = cost.param_count(cfg).against(baseline)
    err.write(own.render() + "\n\n")
    err.write(f"{'representation':<28}{'params':>12}{'ops':>14}{'x params':>10}{'x ops':>8}\n")
    for v, r in rows:
        err.write(f"{v:<28}{cost.human(r.total_params):>12}{cost.human(r.total_ops):>14}"
                  f"{r.param_ratio:>10.2f}{r.op_ratio:>8.2f}\n")
    emit(out, own.to_kv("cost"))
    for v, r in rows:
        emit(out, [(f"ladder.{v}.params", r.total_params), (f"ladder.{v}.ops", r.total_ops),
                   (f"ladder.{v}.ratio.params", f"{r.param_ratio:.4f}")])
    return 0


def _dataset(args, cfg, split: str):
    if args.synthetic:
        size = cfg.data.train if split == "train" else cfg.data.test
        kw = {"length": cfg.data.length} if cfg.task == "nwp" else {}
        from .data import synth_generate

        return synth_generate(cfg.task, args.seed, size, split, **kw)
    if not args.data:
        raise UsageError("need --synthetic or --data PATH")
    if not Path(args.data).is_file():
        raise DataError(f"{args.data}: no such data file")
    from .data import load_doc_class, load_intent_slot, load_nwp

    if cfg.task == "nwp":
        return load_nwp(args.data, args.vocab)
    return load_intent_slot(args.data) if cfg.task == "intent_slot" else load_doc_class(args.data)


def cmd_train(args, out, err) -> int:
    cfg = _apply_overrides(_config(args, args.task), args)
    dataset = _dataset(args, cfg, "train")
    if not len(dataset):
        raise DataError(f"{args.data or 'synthetic data'}: training set is empty")
    model, history = pipeline.train_task(cfg, dataset, args.seed)
    path = Path(args.out or f"{cfg.task}.fcnv")
    info = serialize.save_artifact(model, path)
    err.write(f"trained {cfg.task}/{cfg.encoder.variant}: {len(history)} steps -> {path} ({info.size_bytes} bytes)\n")
    emit(out, [("train.steps", len(history)),
               ("train.loss.first", f"{history[0]:.6f}" if history else "nan"),
               ("train.loss.last", f"{history[-1]:.6f}" if history else "nan"),
               ("model.params", info.n_params), ("artifact.path", path), ("artifact.bytes", info.size_bytes)])
    return 0


def cmd_eval(args, out, err) -> int:
    model = serialize.load_artifact(args.artifact)
    if args.synthetic:
        if args.seed is None:
            raise UsageError("--synthetic evaluation needs --seed")
        dataset = _dataset(args, model.cfg, "test")
    elif args.data:
        if not Path(args.data).is_file():
            raise DataError(f"{args.data}: no such data file")
        dataset = pipeline.load_eval_data(model, args.data)
    else:
        raise UsageError("need --synthetic or --data PATH")
    results = pipeline.evaluate_task(model, dataset)
    for r in results:
        err.write(r.render() + "\n")
    emit(out, [(f"eval.{r.name}", f"{r.value:.6f}") for r in results])
    emit(out, [(f"eval.{r.name}.support", r.support) for r in results])
    return 0


def cmd_bench(args, out, err) -> int:
    model = serialize.load_artifact(args.artifact)
    input_len = args.input_len or model.cfg.bench.input_len
    runs = args.runs or max(model.cfg.bench.runs, bench.MIN_RUNS)
    result = bench.bench_model(model, Path(args.artifact).stat().st_size, input_len, runs)
    lat = result.latency
    err.write(f"{args.artifact}: {result.file_size_bytes} bytes, median {lat.median_ms:.3f} ms, "
              f"p95 {lat.p95_ms:.3f} ms{' (batched)' if lat.batched else ''}, "
              f"peak {result.memory.peak_tensor_bytes} tensor bytes\n")
    emit(out, result.to_kv())
    return 0


def cmd_export(args, out, err) -> int:
    header, tensors = serialize.read_artifact(Path(args.artifact).read_bytes(), args.artifact)
    lines = [f"# {k} = {v}" for k, v in sorted(header.items())]
    for name, arr in tensors.items():
        values = " ".join(f"{float(v):.9g}" for v in arr.ravel())
        lines.append(f"{name}\t{'x'.join(map(str, arr.shape))}\t{values}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        err.write(f"wrote {len(tensors)} tensors to {args.out}\n")
    else:
        out.write(text)
    return 0


def cmd_ladder(args, out, err) -> int:
    if args.config:
        configs = [_config(args, args.task)]
    elif args.task:
        configs = [pipeline.desk_config(args.task)]
    else:
        configs = [pipeline.desk_config(t) for t in config_mod.TASKS]
    with threadpool_limits(limits=1):
        for base in configs:
            base = _apply_overrides(base, args)
            train_ds, test_ds = pipeline.synthetic_splits(base, args.seed)
            err.write(f"\n{base.task}: representation ladder (seed {args.seed})\n")
            rows = []
            for v in REPRESENTATIONS:
                cfg = base.with_variant(v)
                model, history = pipeline.train_task(cfg, train_ds, args.seed)
                report = cost.param_count(model.cfg)
                size = len(serialize.dumps_artifact(model))
                mem = bench.measure_memory(model, bench.reference_input(model, cfg.bench.input_len))
                metrics = pipeline.evaluate_task(model, test_ds)
                rows.append((v, report, size, mem, metrics))
                prefix = f"{base.task}.{v}"
                emit(out, [(f"{prefix}.params", report.total_params), (f"{prefix}.ops", report.total_ops),
                           (f"{prefix}.file_bytes", size), (f"{prefix}.peak_tensor_bytes", mem.peak_tensor_bytes)])
                emit(out, [(f"{prefix}.{m.name}", f"{m.value:.6f}") for m in metrics])
            names = [m.name for m in rows[0][4]]
            err.write(f"{'representation':<28}{'params':>12}{'file':>12}{'memory':>12}"
                      + "".join(f"{n:>12}" for n in names) + "\n")
            for v, report, size, mem, metrics in rows:
                err.write(f"{v:<28}{cost.human(report.total_params):>12}{size / 1e6:>10.2f}MB"
                          f"{mem.peak_tensor_bytes / 1e6:>10.2f}MB" + "".join(f"{m.value:>12.4f}" for m in metrics) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lightconv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_required=False):
        sp.add_argument("--config", help="config path or bundled config name")
        sp.add_argument("--task", choices=config_mod.TASKS)
        sp.add_argument("--seed", type=int, required=seed_required)

    a = sub.add_parser("analyze", help="cost report and parameter ladder for a config")
    common(a)
    a.add_argument("--baseline", default="conv_glu", choices=REPRESENTATIONS)
    a.add_argument("--input-len", type=int)

    t = sub.add_parser("train", help="train a model and write an artifact")
    common(t, seed_required=True)
    t.add_argument("--synthetic", action="store_true")
    t.add_argument("--data")
    t.add_argument("--vocab")
    t.add_argument("--epochs", type=int)
    t.add_argument("--train-size", type=int)
    t.add_argument("--out")

    e = sub.add_parser("eval", help="evaluate an artifact")
    e.add_argument("artifact")
    e.add_argument("--seed", type=int)
    e.add_argument("--synthetic", action="store_true")
    e.add_argument("--data")
    e.add_argument("--vocab")

    b = sub.add_parser("bench", help="file size, latency and memory of an artifact")
    b.add_argument("artifact")
    b.add_argument("--runs", type=int)
    b.add_argument("--input-len", type=int)

    x = sub.add_parser("export", help="plain-text weight dump")
    x.add_argument("artifact")
    x.add_argument("--out")

    lad = sub.add_parser("ladder", help="run every representation row through the task models")
    common(lad, seed_required=True)
    lad.add_argument("--epochs", type=int)
    lad.add_argument("--train-size", type=int)
    lad.add_argument("--test-size", type=int)
    return p


COMMANDS = {"analyze": cmd_analyze, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
            "export": cmd_export, "ladder": cmd_ladder}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=err)
    try:
        return COMMANDS[args.command](args, out, err)
    except ArtifactError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_ARTIFACT
    except DataError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_DATA
    except (ConfigError, UsageError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE
    except LightConvError as exc:
        err.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
