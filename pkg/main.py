from dotenv import load_dotenv
from pydantic import ValidationError
from agents.detector_agent import create_detector_agent
from utils.config import CLASSIFIERS, ConfigError, load_run_config
from utils.logger import configure_logger
from tools.datasets import SCENARIOS
from typing import Any, Dict, List, Optional
import argparse
import sys

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

CONFIG_FLAGS = (
    "mode", "catalog", "policy", "max_depth", "pca", "classifier", "n_trees", "max_depth_trees",
    "features_per_split", "seed", "workers", "out", "log_level", "log_file",
)


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    group = common.add_argument_group("run configuration")
    group.add_argument("--config", help="key=value config file; flags override it")
    group.add_argument("--mode", choices=["family", "package"])
    group.add_argument("--catalog", help="API catalog file")
    group.add_argument("--policy", help="reachable-edge, path-enum or path-enum:<depth>")
    group.add_argument("--max-depth", type=int, dest="max_depth", help="path-enum depth cap")
    group.add_argument("--pca", type=int, metavar="K", help="project onto K principal components")
    group.add_argument("--classifier", choices=CLASSIFIERS)
    group.add_argument("--n-trees", type=int, dest="n_trees")
    group.add_argument("--max-depth-trees", type=int, dest="max_depth_trees")
    group.add_argument("--features-per-split", type=int, dest="features_per_split")
    group.add_argument("--seed", type=int)
    group.add_argument("--workers", type=int)
    group.add_argument("--out", help="output directory")
    group.add_argument("--log-level", dest="log_level")
    group.add_argument("--log-file", dest="log_file")
    return common


def build_parser() -> CliParser:
    common = _common_flags()
    parser = CliParser(prog="chaindroid", description="Markov-chain malware detection over API call graphs")
    commands = parser.add_subparsers(dest="command", required=True)

    featurize = commands.add_parser("featurize", parents=[common], help="manifest -> feature matrix")
    featurize.add_argument("--manifest", required=True)

    train = commands.add_parser("train", parents=[common], help="feature matrix -> model")
    train.add_argument("--features", required=True)

    predict = commands.add_parser("predict", parents=[common], help="label apps with a trained model")
    predict.add_argument("--model", required=True)
    predict.add_argument("--features", required=True)

    evaluate = commands.add_parser("evaluate", help="cross-validation, temporal or baseline reports")
    kinds = evaluate.add_subparsers(dest="evaluation", required=True)
    cv = kinds.add_parser("cv", parents=[common])
    cv.add_argument("--features", required=True)
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--benign-epochs", type=int, nargs="+", dest="benign_epochs",
                    help="pair each of these benign epochs with each malware epoch")
    cv.add_argument("--malware-epochs", type=int, nargs="+", dest="malware_epochs")
    cv.add_argument("--classifiers", nargs="+", choices=CLASSIFIERS, help="cross-validate each classifier in turn")
    temporal = kinds.add_parser("temporal", parents=[common])
    temporal.add_argument("--features", required=True)
    temporal.add_argument("--train-epochs", type=int, nargs="+", dest="train_epochs")
    temporal.add_argument("--test-epochs", type=int, nargs="+", dest="test_epochs")
    temporal.add_argument("--reverse", action="store_true", help="train on newer, test on older epochs")
    baseline = kinds.add_parser("baseline", parents=[common])
    baseline.add_argument("--manifest", required=True)
    baseline.add_argument("--train-epoch", type=int, dest="train_epoch")
    baseline.add_argument("--gap", type=int, default=2, help="epochs between training and test data")
    baseline.add_argument("--all-calls", action="store_true", dest="all_calls",
                          help="count every call, not only cataloged API calls")

    synthetic = commands.add_parser("gen-synthetic", parents=[common], help="write a synthetic corpus")
    synthetic.add_argument("--scenario", choices=SCENARIOS, default="separable")
    synthetic.add_argument("--spec-file", dest="spec_file", help="JSON generator spec with explicit profiles")
    synthetic.add_argument("--apps-per-class", type=int, dest="apps_per_class")
    synthetic.add_argument("--epochs", type=int, nargs="+")
    synthetic.add_argument("--drift", type=float)
    synthetic.add_argument("--turnover", type=float, dest="vocabulary_turnover",
                           help="fraction of method signatures renamed per epoch")
    synthetic.add_argument("--label-noise", type=float, dest="label_noise")
    synthetic.add_argument("--min-edges", type=int, dest="min_edges")
    synthetic.add_argument("--max-edges", type=int, dest="max_edges")

    characterize = commands.add_parser("characterize", parents=[common], help="corpus statistics")
    characterize.add_argument("--manifest", required=True)
    return parser


def _task(args: argparse.Namespace) -> tuple[str, Dict[str, Any]]:
    if args.command == "featurize":
        return "featurize", {"manifest_path": args.manifest}
    if args.command == "train":
        return "train", {"features_path": args.features}
    if args.command == "predict":
        return "predict", {"model_path": args.model, "features_path": args.features}
    if args.command == "characterize":
        return "characterize", {"manifest_path": args.manifest}
    if args.command == "gen-synthetic":
        return "gen-synthetic", {
            "scenario": args.scenario,
            "spec_file": args.spec_file,
            "apps_per_class": args.apps_per_class,
            "epochs": args.epochs,
            "drift": args.drift,
            "vocabulary_turnover": args.vocabulary_turnover,
            "label_noise": args.label_noise,
            "min_edges": args.min_edges,
            "max_edges": args.max_edges,
        }
    if args.evaluation == "cv":
        return "evaluate-cv", {
            "features_path": args.features,
            "folds": args.folds,
            "benign_epochs": args.benign_epochs,
            "malware_epochs": args.malware_epochs,
            "classifiers": args.classifiers,
        }
    if args.evaluation == "temporal":
        return "evaluate-temporal", {
            "features_path": args.features,
            "train_epochs": args.train_epochs,
            "test_epochs": args.test_epochs,
            "reverse": args.reverse,
        }
    return "evaluate-baseline", {
        "manifest_path": args.manifest,
        "train_epoch": args.train_epoch,
        "gap": args.gap,
        "catalog_only": not args.all_calls,
    }


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    overrides = {name: getattr(args, name, None) for name in CONFIG_FLAGS}
    try:
        config = load_run_config(args.config, overrides)
    except (ValidationError, ConfigError) as e:
        print(f"❌ Invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE

    logger = configure_logger(log_level=config.log_level, log_file=config.log_file)
    agent = create_detector_agent(config)
    if not agent:
        logger.error("Failed to create detector agent")
        return EXIT_DATA

    task, options = _task(args)
    result = agent.run(task, **options)
    if not result.get("success", False):
        print(f"❌ {task} failed: {result.get('error', 'Unknown error')}", file=sys.stderr)
        return EXIT_DATA

    print(f"✅ {task} finished")
    for key, value in result.items():
        if key in ("success", "error"):
            continue
        if isinstance(value, list):
            for item in value:
                print(f"   {item}")
        else:
            print(f"   {key}: {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
