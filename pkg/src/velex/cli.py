"""Command-line surface: data generation, the training stages,
evaluation, per-record explanation, and gradient verification."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import build_model, load_checkpoint, save_checkpoint
from .config import (
    DecodeConfig,
    data_config_from,
    decode_config_from,
    load_config_file,
    model_config_from,
    train_config_from,
)
from .data import generate_dataset, load_dataset
from .evaluate import evaluate, explain_record, write_report
from .model import Model
from .training import StagingError, pretrain_alignment, train_generator, train_inference
from .verification import build_toy_problem, stage1_gradient_error, stage2_gradient_error


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="config file ([model]/[data]/[pretrain]/[stage1]/[stage2]/[decode] sections)")
    p.add_argument("--seed", type=int, help="override every seed in the run")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def _sections(args) -> dict:
    return load_config_file(args.config) if args.config else {}


def _apply_seed(cfg, seed):
    if seed is not None:
        cfg.seed = seed
    return cfg


def _decode_cfg(args, sections) -> DecodeConfig:
    cfg = decode_config_from(sections.get("decode", {}))
    for flag, attr in (
        ("beam", "beam"),
        ("sample_size", "sample_size"),
        ("top_k", "top_k"),
        ("max_len", "max_len"),
        ("lam", "lam"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _load_data(args):
    bundle = load_dataset(args.data)
    return bundle


def cmd_gen_data(args) -> int:
    sections = _sections(args)
    cfg = _apply_seed(data_config_from(sections.get("data", {})), args.seed)
    bundle = generate_dataset(cfg, args.out, force=args.force)
    sizes = {s: len(bundle.splits[s]) for s in bundle.splits}
    print(f"wrote {sizes} to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    sections = _sections(args)
    bundle = _load_data(args)
    model_cfg = model_config_from(sections.get("model", {}), vocab_size=len(bundle.vocab))
    train_cfg = _apply_seed(train_config_from(sections.get("pretrain", {})), args.seed)
    out = Path(args.out)
    for artifact in (out, out.with_suffix(".loss.csv")):
        if artifact.exists() and not args.force:
            raise FileExistsError(f"refusing to overwrite {artifact} (use --force)")
    model = Model(model_cfg)
    result = pretrain_alignment(
        model, bundle["pretrain"], bundle["val"], bundle.vocab, train_cfg,
        csv_path=out.with_suffix(".loss.csv"),
    )
    save_checkpoint(out, "pretrain", model, force=args.force)
    print(f"pretrain done: best val alignment accuracy {result.best_metric:.4f} "
          f"({result.epochs_run} epochs) -> {out}")
    return 0


def cmd_train_inference(args) -> int:
    sections = _sections(args)
    bundle = _load_data(args)
    train_cfg = _apply_seed(train_config_from(sections.get("stage1", {})), args.seed)
    out = Path(args.out)
    for artifact in (out, out.with_suffix(".loss.csv")):
        if artifact.exists() and not args.force:
            raise FileExistsError(f"refusing to overwrite {artifact} (use --force)")
    if args.init:
        ck = load_checkpoint(args.init)
        if ck.stage != "pretrain":
            raise StagingError(f"--init must be a pretrain checkpoint, got {ck.stage!r}")
        model = build_model(ck)
    else:
        model_cfg = model_config_from(sections.get("model", {}), vocab_size=len(bundle.vocab))
        model = Model(model_cfg)
    result = train_inference(
        model, bundle["train"], bundle["val"], bundle.vocab, train_cfg,
        csv_path=out.with_suffix(".loss.csv"),
    )
    save_checkpoint(out, "stage1", model, force=args.force)
    print(f"stage1 done: best val accuracy {result.best_metric:.4f} "
          f"({result.epochs_run} epochs) -> {out}")
    return 0


def cmd_train_generator(args) -> int:
    sections = _sections(args)
    bundle = _load_data(args)
    train_cfg = _apply_seed(train_config_from(sections.get("stage2", {})), args.seed)
    out = Path(args.out)
    for artifact in (out, out.with_suffix(".loss.csv")):
        if artifact.exists() and not args.force:
            raise FileExistsError(f"refusing to overwrite {artifact} (use --force)")
    ck = load_checkpoint(args.init)
    if ck.stage != "stage1":
        raise StagingError(f"--init must be a stage1 checkpoint, got {ck.stage!r}")
    model = build_model(ck)
    result = train_generator(
        model, bundle["train"], bundle["val"], bundle.vocab, train_cfg,
        csv_path=out.with_suffix(".loss.csv"),
    )
    save_checkpoint(out, "stage2", model, force=args.force)
    print(f"stage2 done: best val NLL/token {result.best_metric:.4f} "
          f"({result.epochs_run} epochs) -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    sections = _sections(args)
    bundle = _load_data(args)
    ck = load_checkpoint(args.ckpt)
    if ck.stage != "stage2":
        raise StagingError(f"evaluate needs a stage2 checkpoint, got {ck.stage!r}")
    model = build_model(ck)
    decode_cfg = _decode_cfg(args, sections)
    report = evaluate(
        model,
        bundle[args.split],
        bundle.vocab,
        decode_cfg,
        use_mixture=not args.no_mixture,
        constrained=not args.no_constrained,
    )
    out = Path(args.out)
    write_report(report, out / "report.csv", out / "samples.jsonl", force=args.force)
    print(f"S_T={report.s_t:.4f} S_E={report.s_e:.4f} S_O={report.s_o:.4f} "
          f"mean_constraint_hits={report.mean_constraint_hits:.3f} -> {out}")
    return 0


def cmd_explain(args) -> int:
    sections = _sections(args)
    bundle = _load_data(args)
    ck = load_checkpoint(args.ckpt)
    if ck.stage != "stage2":
        raise StagingError(f"explain needs a stage2 checkpoint, got {ck.stage!r}")
    model = build_model(ck)
    decode_cfg = _decode_cfg(args, sections)
    records = {r.id: r for r in bundle[args.split]}
    if args.record_id not in records:
        print(f"record {args.record_id} not in split {args.split!r}", file=sys.stderr)
        return 2
    blob = explain_record(model, records[args.record_id], bundle.vocab, decode_cfg)
    print(json.dumps(blob, indent=2))
    return 0


def cmd_grad_check(args) -> int:
    problem = build_toy_problem(seed=args.seed if args.seed is not None else 0)
    err1 = stage1_gradient_error(problem, epsilon=args.epsilon)
    print(f"stage1 loss max relative gradient error: {err1:.3e}")
    err2 = stage2_gradient_error(problem, epsilon=args.epsilon)
    print(f"stage2 loss max relative gradient error: {err2:.3e}")
    ok = err1 < 1e-4 and err2 < 1e-4
    print("PASS" if ok else "FAIL", "(threshold 1e-4)")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="velex",
        description="Chunk-grounded visual entailment with constrained explanations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic corpus")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("pretrain-align", help="alignment pre-training of the chunk encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("train-inference", help="stage 1: relation inference training")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="pretrain checkpoint to start from")
    _add_common(p)
    p.set_defaults(fn=cmd_train_inference)

    p = sub.add_parser("train-generator", help="stage 2: frozen-encoder generator training")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", required=True, help="stage1 checkpoint")
    _add_common(p)
    p.set_defaults(fn=cmd_train_generator)

    p = sub.add_parser("evaluate", help="score a split with the full pipeline")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--beam", type=int)
    p.add_argument("--sample-size", dest="sample_size", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--no-mixture", action="store_true", help="vocabulary distribution only")
    p.add_argument("--no-constrained", action="store_true", help="plain beam sample")
    _add_common(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("explain", help="inspect one record end to end")
    p.add_argument("record_id", type=int)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--beam", type=int)
    p.add_argument("--sample-size", dest="sample_size", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    _add_common(p)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("grad-check", help="verify analytic gradients on a toy model")
    p.add_argument("--epsilon", type=float, default=1e-5)
    _add_common(p)
    p.set_defaults(fn=cmd_grad_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileExistsError, FileNotFoundError, StagingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
