"""
DSLNet 命令行入口

使用方法:
    python3 cli.py gen-data --out data/synthetic
    python3 cli.py train --config configs/desk.cfg --seed 1 --out runs/seed1
    python3 cli.py eval --checkpoint runs/seed1/checkpoint.ckpt --rate 0.1
    python3 cli.py ablate --out runs/ablation
    python3 cli.py robustness --pattern burst
    python3 cli.py bench --checkpoint runs/seed1/checkpoint.ckpt
    python3 cli.py grad-check
    python3 cli.py export-features --checkpoint runs/seed1/checkpoint.ckpt

Exit codes: 0 success, 2 config error, 3 data error, 4 divergence.
"""
import argparse
import logging
import sys
from pathlib import Path

# 添加项目根目录到路径
PROJECT_ROOT = Path(__file__).parent
sys.path.insert(0, str(PROJECT_ROOT))

from config.errors import ConfigError
from config.settings import settings
from config.train_config import TrainConfig, load_config
from nn_core.checkpoint import CheckpointError, load_checkpoint
from pipeline.data import DatasetError, TooFewFrames, load_splits, write_synthetic_dataset
from pipeline.experiments import ablate, check_model_gradients, robustness, toy_config
from pipeline.export import export_features
from pipeline.flops import bench
from pipeline.metrics import write_metrics
from pipeline.model import DSLNet
from pipeline.trainer import METRICS_NAME, DivergenceError, evaluate, train
from skel_data.models import InvalidSequence
from skel_data.sequence_io import FormatError, IoError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

DATA_ERRORS = (DatasetError, FormatError, IoError, TooFewFrames, InvalidSequence, CheckpointError)


def _config(args) -> TrainConfig:
    return load_config(args.config, seed=args.seed)


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else settings.output_dir


def _model_from_args(args) -> DSLNet:
    """Checkpointed model when --checkpoint is given, otherwise a freshly trained one."""
    if args.checkpoint:
        return DSLNet.from_checkpoint(load_checkpoint(args.checkpoint))
    return train(_config(args)).model


def cmd_gen_data(args) -> None:
    config = _config(args)
    out = Path(args.out) if args.out else settings.data_dir
    train_manifest, test_manifest = write_synthetic_dataset(config, out)
    logger.info(f"Use with: dataset.source=manifest, dataset.train_manifest={train_manifest}, "
                f"dataset.test_manifest={test_manifest}")


def cmd_train(args) -> None:
    result = train(_config(args), out_dir=_out_dir(args))
    logger.info(f"✓ Final test accuracy: {result.report.test_accuracy:.2f}%")


def cmd_eval(args) -> None:
    model = _model_from_args(args)
    _, test_seqs = load_splits(model.config)
    report = evaluate(model, test_seqs, dropout_rate=args.rate, pattern=args.pattern)
    write_metrics(report, _out_dir(args) / METRICS_NAME)
    logger.info(f"✓ Accuracy at dropout {args.rate:.0%}: {report.test_accuracy:.2f}%")


def cmd_ablate(args) -> None:
    df = ablate(_config(args), out_dir=_out_dir(args))
    print(df.to_string(index=False))


def cmd_robustness(args) -> None:
    config = _config(args)
    if args.pattern:
        config = config.with_overrides(dropout_pattern=args.pattern)
    model = DSLNet.from_checkpoint(load_checkpoint(args.checkpoint)) if args.checkpoint else None
    if model is not None:
        config = model.config.with_overrides(dropout_pattern=config.dropout_pattern,
                                             robustness_rates=config.robustness_rates)
    df = robustness(config, out_dir=_out_dir(args), model=model)
    print(df.to_string(index=False))


def cmd_bench(args) -> None:
    if args.checkpoint:
        model = DSLNet.from_checkpoint(load_checkpoint(args.checkpoint))
    else:
        config = _config(args)
        model = DSLNet(config, dims=config.dataset.dims)
    _, test_seqs = load_splits(model.config)
    report = bench(model, test_seqs[: args.samples], steps=args.steps, repeats=args.repeats, out_dir=_out_dir(args))
    print(report.model_dump_json(indent=2))


def cmd_grad_check(args) -> int:
    config = toy_config(seed=args.seed or 0) if not args.config else _config(args)
    report = check_model_gradients(config, tol=args.tol, max_elements=args.max_elements)
    for name, err in sorted(report.as_dict().items()):
        logger.info(f"  {name:<40} {err:.3e}")
    return EXIT_OK if report.passed else 1


def cmd_export_features(args) -> None:
    model = _model_from_args(args)
    _, test_seqs = load_splits(model.config)
    export_features(model, test_seqs, _out_dir(args) / "features.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="DSLNet: dual-reference dual-stream sign recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text, checkpoint=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="key=value config file (defaults when omitted)")
        p.add_argument("--seed", type=int, help="Override the config seed")
        p.add_argument("--out", type=Path, help="Output directory (default: settings.output_dir)")
        if checkpoint:
            p.add_argument("--checkpoint", type=Path, help="Use a saved checkpoint instead of training")
        p.set_defaults(handler=handler)
        return p

    add("gen-data", cmd_gen_data, "Write the synthetic benchmark as sequence files and manifests")
    add("train", cmd_train, "Train one model, write checkpoint.ckpt and metrics.json")

    p = add("eval", cmd_eval, "Evaluate on the test split, optionally with frame dropout", checkpoint=True)
    p.add_argument("--rate", type=float, default=0.0, help="Frame dropout rate in [0, 1)")
    p.add_argument("--pattern", choices=["random", "burst"], default="random")

    add("ablate", cmd_ablate, "Train all ablation modes over config.ablation_seeds, write ablation.csv")

    p = add("robustness", cmd_robustness, "Accuracy under frame dropout, write robustness.csv", checkpoint=True)
    p.add_argument("--pattern", choices=["random", "burst"], help="Override config.dropout_pattern")

    p = add("bench", cmd_bench, "FLOPs, parameter count and latency, write bench.json", checkpoint=True)
    p.add_argument("--steps", type=int, help="Frames per sequence for the FLOP count")
    p.add_argument("--samples", type=int, default=8, help="Test sequences timed")
    p.add_argument("--repeats", type=int, default=5)

    p = add("grad-check", cmd_grad_check, "Finite-difference check of the full model on a toy task")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-elements", type=int, default=20, help="Entries checked per parameter")

    add("export-features", cmd_export_features, "Write pre-classifier features to features.csv", checkpoint=True)
    return parser


def main(argv=None) -> int:
    """主函数"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s'
    )

    try:
        code = args.handler(args)
    except ConfigError as e:
        logger.error(f"❌ Config error: {e}")
        return EXIT_CONFIG
    except DATA_ERRORS as e:
        logger.error(f"❌ Data error: {e}")
        return EXIT_DATA
    except DivergenceError as e:
        logger.error(f"❌ Training diverged: {e}")
        return EXIT_DIVERGENCE
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
