"""Command-line interface: gen, train, eval, experiment, gradcheck.

Every failure exits nonzero with one machine-parsable line on stderr:
``error: code=<name> <human text>``.  Exit codes: 0 ok, 1 validation,
2 runtime, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import OUTPUT_ROOT_ENV, RunConfig, default_model_for_synthetic
from .data import (
    BatchPlan,
    CsvSchema,
    PRESETS,
    SyntheticSpec,
    export_csv,
    generate,
    ingest_csv,
    split_dataset,
)
from .data.synthetic import _cached_ground_truth
from .errors import (
    CalibrationError,
    ConfigError,
    CsvError,
    DegenerateBatchError,
    DimensionError,
    LookupIndexError,
    NumericError,
    StarCtrError,
    ValidationError,
)
from .experiment import run_experiment
from .fusion import FUSION_KINDS, FusionSpec
from .gradcheck import grad_check
from .losses import bce_with_logits
from .model import ARCHITECTURES, FieldSpec, ModelConfig, build_model
from .normalization import NORM_KINDS
from .optim import AdamConfig
from .training import evaluate_model, train_model

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_NUMERIC = 3

_VALIDATION_ERRORS = (
    ConfigError,
    ValidationError,
    DimensionError,
    LookupIndexError,
    DegenerateBatchError,
    CsvError,
)
_NUMERIC_ERRORS = (NumericError, CalibrationError)


def _fail(code_name: str, exit_code: int, message: str) -> int:
    message = " ".join(str(message).split())
    print(f"error: code={code_name} {message}", file=sys.stderr)
    return exit_code


def _classify(e: Exception) -> tuple[str, int]:
    if isinstance(e, _NUMERIC_ERRORS):
        return "numeric", EXIT_NUMERIC
    if isinstance(e, _VALIDATION_ERRORS):
        return "validation", EXIT_VALIDATION
    return "runtime", EXIT_RUNTIME


def _load_synthetic_spec(args) -> SyntheticSpec:
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {args.preset!r}; available: {sorted(PRESETS)}"
            )
        spec = PRESETS[args.preset]
    elif args.spec is not None:
        try:
            spec = SyntheticSpec.from_dict(json.loads(Path(args.spec).read_text()))
        except OSError as e:
            raise ConfigError(f"cannot read spec file {args.spec}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"spec file {args.spec} is not valid JSON: {e}") from e
    else:
        raise ConfigError("either --preset or --spec is required")
    if args.seed is not None:
        spec = SyntheticSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    return spec


def _share_ctr_table(spec: SyntheticSpec, ds) -> str:
    """Per-domain share/CTR table: generator targets next to empirical values."""
    truth = _cached_ground_truth(spec)
    counts = ds.domain_counts()
    n = len(ds)
    width = 12
    cols = ["all"] + [str(d + 1) for d in range(spec.num_domains)]
    lines = ["".ljust(18) + "".join(c.rjust(width) for c in cols)]

    def row(label, values):
        return label.ljust(18) + "".join(v.rjust(width) for v in values)

    overall_target_ctr = sum(
        s * c for s, c in zip(spec.domain_shares, spec.target_ctrs)
    )
    share_t = ["-"] + [f"{100 * s:.2f}%" for s in spec.domain_shares]
    share_e = ["-"] + [f"{100 * counts[d] / n:.2f}%" for d in range(spec.num_domains)]
    ctr_t = [f"{100 * overall_target_ctr:.2f}%"] + [
        f"{100 * c:.2f}%" for c in spec.target_ctrs
    ]
    ctr_e = [f"{100 * ds.labels.mean():.2f}%"]
    for d in range(spec.num_domains):
        mask = ds.domain_ids == d
        ctr_e.append(f"{100 * ds.labels[mask].mean():.2f}%" if mask.any() else "n/a")
    lines.append(row("share (target)", share_t))
    lines.append(row("share (empirical)", share_e))
    lines.append(row("ctr (target)", ctr_t))
    lines.append(row("ctr (empirical)", ctr_e))
    lines.append("")
    lines.append(
        "calibrated expected ctr per domain: "
        + ", ".join(f"{d}: {truth.expected_ctr(d):.6f}" for d in range(spec.num_domains))
    )
    return "\n".join(lines)


def _check_model_data_compat(config: ModelConfig, ds) -> None:
    problems = []
    if config.num_domains != ds.num_domains:
        problems.append(
            f"num_domains: model {config.num_domains}, data {ds.num_domains}"
        )
    model_fields = [(f.name, f.vocab_size) for f in config.fields]
    data_fields = list(zip(ds.field_names, ds.vocab_sizes))
    if model_fields != data_fields:
        problems.append(f"fields: model {model_fields}, data {data_fields}")
    if problems:
        raise ConfigError("model/data mismatch: " + "; ".join(problems))


def _resolve_out(path_str: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    path = Path(path_str)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- commands -------------------------------------------------------------------


def cmd_gen(args) -> int:
    spec = _load_synthetic_spec(args)
    if args.n < 1:
        raise ValidationError(f"cannot generate an empty dataset (n={args.n})")
    ds = generate(spec, args.n)
    out = _resolve_out(args.out)
    export_csv(out / "data.csv", ds)
    (out / "schema.json").write_text(CsvSchema.for_dataset(ds).to_json())
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True))
    print(_share_ctr_table(spec, ds))
    print(f"\nwrote {len(ds)} examples to {out / 'data.csv'}")
    return EXIT_OK


def _load_train_data(config: RunConfig):
    if config.synthetic is not None:
        ds = generate(config.synthetic, config.train_n)
    else:
        schema = CsvSchema.load(config.schema_path)
        ds = ingest_csv(config.csv_path, schema)
    return split_dataset(ds, config.valid_fraction, config.seed)


def cmd_train(args) -> int:
    config = RunConfig.load(args.config, overrides=args.set)
    out = _resolve_out(args.out if args.out is not None else config.out_dir)
    train_ds, valid_ds = _load_train_data(config)
    _check_model_data_compat(config.model, train_ds)
    model = build_model(config.model)
    log_path = out / "metrics.jsonl"
    if log_path.exists():
        log_path.unlink()  # each run owns its log; append-only within the run
    result = train_model(
        model, config.adam, train_ds, valid_ds, config.plan,
        epochs=config.epochs, eval_every=config.eval_every, log_path=log_path,
    )
    ckpt = out / "checkpoint.ckpt"
    save_checkpoint(ckpt, model)
    (out / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True)
    )
    print(
        f"trained {result.epochs_run} epoch(s), {result.steps} steps; "
        f"train loss {result.first_epoch_mean_loss:.6f} -> "
        f"{result.last_epoch_mean_loss:.6f}"
    )
    if result.valid_reports:
        print(result.valid_reports[-1].format_table())
    print(f"checkpoint: {ckpt}")
    print(f"metric log: {log_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if args.csv is not None:
        if args.schema is None:
            raise ConfigError("--csv requires --schema")
        ds = ingest_csv(args.csv, CsvSchema.load(args.schema))
    elif args.preset is not None or args.spec is not None:
        ds = generate(_load_synthetic_spec(args), args.n)
    else:
        raise ConfigError("either --csv/--schema or --preset/--spec is required")
    _check_model_data_compat(model.config, ds)
    rep = evaluate_model(model, ds, batch_size=args.batch_size, split=args.split)
    out = _resolve_out(args.out)
    (out / "report.csv").write_text("\n".join(rep.to_csv_lines()) + "\n")
    print(rep.format_table())
    print(f"\nreport: {out / 'report.csv'}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    names = args.presets.split(",")
    datasets = []
    for name in names:
        name = name.strip()
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
        datasets.append((name, PRESETS[name]))
    base = RunConfig(
        seed=args.seed,
        model=default_model_for_synthetic(
            datasets[0][1],
            tower_widths=tuple(args.tower_widths),
            tower_output_dim=args.tower_output_dim,
            seed=args.seed,
        ),
        adam=AdamConfig(learning_rate=args.learning_rate),
        plan=BatchPlan(batch_size=args.batch_size, seed=args.seed),
        synthetic=datasets[0][1],
        train_n=args.n,
        epochs=args.epochs,
        out_dir=args.out,
    )
    result = run_experiment(base, datasets)
    out = _resolve_out(args.out)
    fusion_txt = result.fusion_table()
    norm_txt = result.norm_table()
    (out / "fusion_table.txt").write_text(fusion_txt + "\n")
    (out / "fusion_table.csv").write_text("\n".join(result.fusion_csv()) + "\n")
    (out / "norm_table.txt").write_text(norm_txt + "\n")
    (out / "norm_table.csv").write_text("\n".join(result.norm_csv()) + "\n")
    print("Fusion comparison (loss / AUC per dataset):")
    print(fusion_txt)
    print("\nNormalization comparison (AUC per dataset):")
    print(norm_txt)
    print(f"\ntables written under {out}")
    return EXIT_OK


def make_gradcheck_config(
    architecture: str, fusion_kind: str | None, norm_kind: str, seed: int = 0
) -> ModelConfig:
    """A deliberately tiny model so full finite-difference sweeps stay fast."""
    fusion = None
    if architecture == "star_plus":
        kind = fusion_kind or "add"
        fusion = FusionSpec(kind=kind, gate_hidden=4, concat_widths=(4,))
    return ModelConfig(
        num_domains=3,
        fields=(FieldSpec("f0", 5, 3), FieldSpec("f1", 4, 2)),
        tower_widths=(4,),
        tower_output_dim=1 if architecture == "star" else 2,
        norm_kind=norm_kind,
        fusion=fusion,
        architecture=architecture,
        seed=seed,
        aux_embedding_dim=3,
    )


def gradcheck_model(config: ModelConfig, batch_size: int, seed: int, tolerance: float):
    """Finite-difference check of the full model's loss gradient.

    Params are moved to a generic random point first: at the real
    initialization the 0.01-scale embeddings leave every relu
    pre-activation inside the kink margin and the check would be vacuous.
    """
    if batch_size > 16:
        raise ValidationError(
            f"gradcheck batches are capped at 16 rows, got {batch_size}"
        )
    model = build_model(config)
    rng = np.random.default_rng([seed, 0xC6EC])
    for p in model.store:
        p.value[:] = rng.normal(0.0, 0.5, size=p.value.shape)
    feature_ids = np.stack(
        [rng.integers(0, f.vocab_size, size=batch_size) for f in config.fields], axis=1
    )
    domain_ids = rng.integers(0, config.num_domains, size=batch_size)
    if config.norm_kind in ("batch", "partition") and batch_size >= 2:
        # every present domain needs >= 2 rows for its moments
        domain_ids = np.repeat(
            rng.integers(0, config.num_domains, size=batch_size // 2), 2
        )[:batch_size]
        if batch_size % 2:
            domain_ids = np.append(domain_ids, domain_ids[-1])
    labels = rng.integers(0, 2, size=(batch_size, 1)).astype(np.float64)

    def closure() -> float:
        model.store.zero_grads()
        logits = model.forward_logits(feature_ids, domain_ids)
        loss, dlogits = bce_with_logits(logits, labels)
        model.backward(dlogits)
        return loss

    return grad_check(closure, model.params(), tolerance, kink_margin=model.kink_margin)


def _gradcheck_combos() -> list[tuple[str, str | None, str]]:
    combos: list[tuple[str, str | None, str]] = []
    for norm in NORM_KINDS:
        combos.append(("star", None, norm))
    for fusion in FUSION_KINDS:
        for norm in NORM_KINDS:
            combos.append(("star_plus", fusion, norm))
    return combos


def cmd_gradcheck(args) -> int:
    if args.all:
        combos = _gradcheck_combos()
    else:
        fusion = None if args.fusion in (None, "none") else args.fusion
        combos = [(args.architecture, fusion, args.norm)]
    failures = 0
    for architecture, fusion, norm in combos:
        config = make_gradcheck_config(architecture, fusion, norm, seed=args.seed)
        report = gradcheck_model(config, args.batch_size, args.seed, args.tolerance)
        label = f"{architecture:9s} fusion={fusion or '-':12s} norm={norm:9s}"
        print(f"{label} {report.summary()}")
        if not report.passed:
            failures += 1
            for f in report.failures[:5]:
                print(
                    f"    {f.param}[{f.index[0]},{f.index[1]}]: analytic {f.analytic:.6e} "
                    f"vs numeric {f.numeric:.6e} (rel {f.rel_error:.3e})"
                )
    if failures:
        raise NumericError(f"{failures} gradient check(s) failed")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="starctr",
        description=(
            "Multi-domain CTR models: synthetic data generation, training, "
            "evaluation, comparison grids, and gradient verification."
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset and write CSV + schema")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named generator preset")
    p.add_argument("--spec", help="path to a generator spec JSON file")
    p.add_argument("--n", type=int, required=True, help="number of examples")
    p.add_argument("--seed", type=int, default=None, help="override the generator seed")
    p.add_argument("--out", default="gen", help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True, help="path to a run config JSON file")
    p.add_argument(
        "--set", action="append", default=[], metavar="PATH=VALUE",
        help="override a config value, e.g. model.norm_kind=layer (repeatable)",
    )
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--csv", help="dataset CSV path")
    p.add_argument("--schema", help="dataset schema JSON path")
    p.add_argument("--preset", choices=sorted(PRESETS), help="synthetic preset instead of CSV")
    p.add_argument("--spec", help="synthetic spec JSON instead of CSV")
    p.add_argument("--n", type=int, default=20_000, help="synthetic example count")
    p.add_argument("--seed", type=int, default=None, help="override the synthetic seed")
    p.add_argument("--split", default="eval", help="split name recorded in the report")
    p.add_argument("--batch-size", type=int, default=2000)
    p.add_argument("--out", default="eval", help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run the fusion and normalization grids")
    p.add_argument("--presets", default="company1", help="comma-separated preset names")
    p.add_argument("--n", type=int, default=20_000, help="examples per dataset")
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=2000)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--tower-widths", type=int, nargs="+", default=[64, 32])
    p.add_argument("--tower-output-dim", type=int, default=16)
    p.add_argument("--out", default="experiment", help="output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--architecture", choices=ARCHITECTURES, default="star_plus")
    p.add_argument("--fusion", choices=[*FUSION_KINDS, "none"], default="adaptive_add")
    p.add_argument("--norm", choices=NORM_KINDS, default="layer")
    p.add_argument("--all", action="store_true", help="check every combination")
    p.add_argument("--batch-size", type=int, default=8, help="at most 16")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except StarCtrError as e:
        code_name, exit_code = _classify(e)
        return _fail(code_name, exit_code, str(e))
    except OSError as e:
        return _fail("runtime", EXIT_RUNTIME, str(e))


if __name__ == "__main__":
    sys.exit(main())
