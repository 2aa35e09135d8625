"""
Command-line entry point.

    python -m dropescape <subcommand> --config settings.txt --out result.csv

Subcommands: sgd-train, dp-simplex {run,audit}, audit, dp-glm, escape, bench.
Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 privacy gate failure.
"""
import argparse
import csv
import logging
import math
import sys

import numpy as np

from .bench import ExperimentConfig, format_rows, run_stability_experiment
from .config import load_settings, resolve_seed
from .core_math import ConstraintSet, SeededRng
from .datasets import load_binary_dataset, load_dataset, make_binary, make_synthetic
from .dp_glm import PrivacyBudget, private_glm_train
from .dp_simplex import BinaryDataset, audit_argmin_distribution, private_simplex_learn, sampled_audit_argmin
from .dropout_sgd import SgdConfig, dropout_sgd_train
from .errors import ConvergenceError, DataError, DropescapeError, LabelError
from .glm_core import GlmLoss
from .netescape import Link, SampleDistribution, collinear_escape_instance, escape_trial

logger = logging.getLogger("dropescape")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_GATE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, help="key=value settings file")
    common.add_argument("--out", required=True, help="CSV output path")
    common.add_argument("--seed", type=int, default=None, help="base seed (default: config, then $DROPESCAPE_SEED)")
    common.add_argument("--threads", type=int, default=None, help="worker threads")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--progress", action="store_true", help="show progress bars")

    parser = _Parser(prog="dropescape", description="Dropout escape, stability and privacy experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("sgd-train", parents=[common], help="dropout SGD with a risk trajectory")
    simplex = sub.add_parser("dp-simplex", help="private vertex selection over the simplex")
    simplex_sub = simplex.add_subparsers(dest="action", required=True, parser_class=_Parser)
    simplex_sub.add_parser("run", parents=[common])
    simplex_sub.add_parser("audit", parents=[common])
    sub.add_parser("audit", parents=[common], help="alias of 'dp-simplex audit'")
    sub.add_parser("dp-glm", parents=[common], help="PTR-gated private GLM training")
    sub.add_parser("escape", parents=[common], help="dropout escape trial on a one-hidden-layer net")
    sub.add_parser("bench", parents=[common], help="removal-stability benchmark")
    return parser


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# ---------------------- data ----------------------
def _glm_data(settings, seed):
    path = settings.get_str("dataset")
    if path:
        return load_dataset(path, settings.get_str("format"))
    kind = settings.get_str("synthetic")
    kwargs = {} if kind == "logistic" else {"noise": settings.get_float("noise")}
    return make_synthetic(kind, settings.get_int("n"), settings.get_int("p"), seed, **kwargs)


def _binary_pair(settings, seed):
    path = settings.get_str("dataset")
    if path:
        d = load_binary_dataset(path)
        prime_path = settings.get_str("dataset_prime")
        return d, (load_binary_dataset(prime_path) if prime_path else None)
    d = make_binary(settings.get_int("n"), settings.get_int("p"), seed, settings.get_float("density"))
    rows = d.rows.copy()
    rows[-1] = 1 - rows[-1]
    return d, BinaryDataset(rows)


def _sgd_config(settings, seed):
    return SgdConfig(
        T=settings.get_int("T"),
        alpha=settings.get_float("keep_rate"),
        constraint=ConstraintSet.parse(settings.get_str("constraint")),
        lr_scale=settings.get_float("lr_scale"),
        seed=seed,
        log_every=settings.get_int("log_every"),
        risk_samples=settings.get_int("risk_samples"),
    )


# ---------------------- subcommands ----------------------
def cmd_sgd_train(args, settings, seed):
    d = _glm_data(settings, seed)
    cfg = _sgd_config(settings, seed)
    model = dropout_sgd_train(d, GlmLoss(settings.get_str("loss")), cfg)
    _write_csv(args.out, ("step", "dropout_risk"), [(t, _fmt(r)) for t, r in model.trajectory])
    logger.info("theta = %s", np.array2string(model.theta, precision=6))
    return EXIT_OK


def cmd_simplex_run(args, settings, seed):
    d, _ = _binary_pair(settings, seed)
    res = private_simplex_learn(d, settings.get_float("eps"), settings.get_float("delta"), SeededRng(seed, stream=1))
    _write_csv(args.out, ("outcome", "lambda", "lambda_hat", "threshold", "epsilon_total"),
               [("failure" if res.outcome is None else res.outcome, _fmt(res.lam), _fmt(res.lambda_hat),
                 _fmt(res.threshold), _fmt(res.epsilon_total))])
    return EXIT_OK if res.success else EXIT_GATE


def cmd_audit(args, settings, seed):
    d, d_prime = _binary_pair(settings, seed)
    if d_prime is None:
        raise UsageError("audit needs 'dataset_prime' alongside 'dataset'")
    method = settings.get_str("audit_method")
    if method == "sampled":
        table = sampled_audit_argmin(d, d_prime, settings.get_int("audit_samples"), SeededRng(seed, stream=2))
    else:
        table = audit_argmin_distribution(d, d_prime, method=method, threads=args.threads)
    _write_csv(args.out, ("outcome", "prob_D", "prob_Dprime", "ratio"),
               [(j, _fmt(a), _fmt(b), "" if r is None else _fmt(r)) for j, a, b, r in table.rows()])
    return EXIT_OK


def cmd_dp_glm(args, settings, seed):
    d = _glm_data(settings, seed)
    res = private_glm_train(
        d,
        GlmLoss(settings.get_str("loss")),
        _sgd_config(settings, seed),
        PrivacyBudget(settings.get_float("eps"), settings.get_float("delta")),
        settings.get_float("sigma_cap"),
        proper=settings.get_bool("proper"),
        c=settings.get_float("calibration"),
        sensitivity_mode=settings.get_str("sensitivity"),
        threads=args.threads,
    )
    _write_csv(args.out, ("lambda", "lambda_hat", "zeta", "passed", "k", "sigma", "dropout_risk"),
               [(_fmt(res.lam), _fmt(res.lam_hat), _fmt(res.zeta), _fmt(res.passed), res.k,
                 "" if math.isnan(res.sigma) else _fmt(res.sigma),
                 "" if math.isnan(res.dropout_risk) else _fmt(res.dropout_risk))])
    return EXIT_OK if res.passed else EXIT_GATE


def cmd_escape(args, settings, seed):
    m = settings.get_int("m")
    link = Link(settings.get_str("link"), settings.get_int("degree"))
    g, f = collinear_escape_instance(m, settings.get_float("gap"), link)
    dist = SampleDistribution(settings.get_str("dist"), g.p)
    report = escape_trial(g, f, dist, settings.get_int("draws"), settings.get_int("mc_samples"), seed)
    _write_csv(args.out, ("draw_id", "perturbed_error", "success"),
               [(i, _fmt(e), _fmt(s)) for i, (e, s) in enumerate(zip(report.perturbed_errors, report.successes))])
    _write_csv(args.out + ".summary.csv", ("frequency", "factor", "norm_ok", "threshold_ok"),
               [(_fmt(report.frequency), _fmt(report.factor), _fmt(report.norm_ok), _fmt(report.threshold_ok))])
    return EXIT_OK


def cmd_bench(args, settings, seed):
    cfg = ExperimentConfig.from_settings(settings, seed=seed)
    if args.threads is not None:
        cfg.threads = args.threads
    result = run_stability_experiment(cfg, progress=args.progress)
    with open(args.out, "w", encoding="utf-8", newline="") as f:
        f.write(format_rows(result.rows))
    for method, _, repeat, message in result.failures:
        logger.warning("cell %s/repeat %d failed: %s", method, repeat, message)
    return EXIT_OK


COMMANDS = {
    "sgd-train": cmd_sgd_train,
    ("dp-simplex", "run"): cmd_simplex_run,
    ("dp-simplex", "audit"): cmd_audit,
    "audit": cmd_audit,
    "dp-glm": cmd_dp_glm,
    "escape": cmd_escape,
    "bench": cmd_bench,
}


def cli_main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(e, file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    key = (args.command, args.action) if args.command == "dp-simplex" else args.command
    try:
        settings = load_settings(args.config)
        seed = resolve_seed(args.seed, settings)
        if args.threads is None:
            args.threads = settings.get_int("threads")
        return COMMANDS[key](args, settings, seed)
    except UsageError as e:
        print(f"dropescape: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, LabelError, ConvergenceError) as e:
        logger.error("%s", e)
        return EXIT_DATA
    except DropescapeError as e:
        logger.error("%s", e)
        return EXIT_USAGE


def main():
    sys.exit(cli_main())
