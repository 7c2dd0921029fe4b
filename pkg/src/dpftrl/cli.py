"""Command-line entry point `dpftrl`.

Every subcommand accepts `--config FILE` with `key=value` lines (keys are the
long flag names, with or without dashes). Values from the file act as
defaults; flags given on the command line win.
"""

import argparse
import sys

from dpftrl import harness, privacy
from dpftrl.optimizers import OptimizerConfig, equivalence_check
from dpftrl.primitives import InvalidInputError
from dpftrl.tree import HONAKER, VANILLA, ceil_lg


def _read_config(path):
    pairs = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            pairs.append((key.lstrip("-").replace("_", "-"), value))
    return pairs


def _config_argv(pairs, flags):
    argv = []
    for key, value in pairs:
        flag = "--" + key
        if flag not in flags:
            raise InvalidInputError(f"unknown config key {key!r}")
        if flags[flag] == 0:  # store_true
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(flag)
        else:
            argv += [flag, value]
    return argv


# -- subcommands -------------------------------------------------------------

def _zeta_for_tree(n, epochs, xi):
    if epochs == 1:
        return float(ceil_lg(n + 1)), None
    # One tree over all epochs: bound by the exact program, or level-wise when
    # the program would not fit in memory.
    xi = n - 1 if xi is None else xi
    try:
        report = privacy.sensitivity_dp(n * epochs, epochs, xi)
    except privacy.ResourceError:
        report = privacy.sensitivity_level_wise(n * epochs, epochs, xi)
    return report.zeta, report


def cmd_account(args):
    report = None
    if args.mode == "tree":
        zeta, report = _zeta_for_tree(args.n, args.epochs, args.xi)
    elif args.mode == "restarts":
        zeta = float(privacy.single_tree_zeta(args.n, args.epochs))
    elif args.mode == "ls":
        zeta = float(2 * ceil_lg(args.n))
    else:
        report = _sensitivity_report(args.order, args.n * args.epochs, args.epochs, args.xi)
        zeta = report.zeta
    eps, alpha = privacy.rdp_to_dp(privacy.RdpCurve.gaussian(zeta, args.sigma), args.delta)
    print(f"epsilon={eps:.12g}")
    print(f"alpha={alpha:.12g}")
    print(f"zeta={zeta:.12g}")
    if report is not None:
        _print_report(report)


def _sensitivity_report(order_path, T, E, xi, method="dp"):
    if order_path:
        return privacy.sensitivity_given_order(privacy.read_order_file(order_path))
    if T is None or E is None or xi is None:
        raise InvalidInputError("need --order, or all of --T/--n, --E/--epochs and --xi")
    if method == "levelwise":
        return privacy.sensitivity_level_wise(T, E, xi)
    return privacy.sensitivity_dp(T, E, xi)


def _print_report(report):
    print(f"method={report.method}")
    for ident, rho in report.per_identifier.items():
        print(f"rho[{ident}]={rho:.12g}")


def cmd_sensitivity(args):
    if args.method == "order" and not args.order:
        raise InvalidInputError("--method order needs --order FILE")
    report = _sensitivity_report(args.order if args.method == "order" else None,
                                 args.T, args.E, args.xi, args.method)
    print(f"zeta={report.zeta:.12g}")
    _print_report(report)


def cmd_calibrate(args):
    sigma = privacy.calibrate_noise(args.epsilon, args.delta, n=args.n, epochs=args.epochs)
    print(f"sigma={sigma:.12g}")


def _train_config(args, lam):
    return OptimizerConfig(lam=lam, momentum=args.momentum, clip_norm=args.clip,
                           sigma=args.sigma, radius=args.radius, l1=args.l1,
                           batch_size=args.batch_size, estimator=args.estimator, seed=args.seed)


def cmd_train(args):
    spec = harness.SyntheticStream(p=args.p, n=args.n, task=args.task, L=args.clip,
                                   noise=args.noise, seed=args.seed)
    data = harness.gen_stream(spec)
    comparator = None
    if args.task == harness.LOGISTIC or (args.task == harness.LINEAR and args.radius is None):
        comparator = spec.theta_star
    kwargs = dict(task=args.task, epochs=args.epochs, restart_every=args.restart_every,
                  complete_tree=args.complete_tree, delta=args.delta, comparator=comparator)
    if args.grid:
        lam, result = harness.tune_lambda(data, args.variant, _train_config(args, 1.0),
                                          **kwargs)
        print(f"lambda={lam:.12g}", file=sys.stderr)
    else:
        result = harness.run_online(data, args.variant, _train_config(args, args.lam), **kwargs)
    harness.write_run_csv(args.out, result)
    print(f"regret={result.record.regret:.12g}")


def cmd_noise_table(args):
    harness.noise_table(args.n, args.sigma, args.out)


def cmd_equivalence(args):
    spec = harness.SyntheticStream(p=args.p, n=args.n, task=harness.LINREG, seed=args.seed)
    config = OptimizerConfig(lam=args.lam, sigma=args.sigma, seed=args.seed,
                             estimator=args.estimator)
    dev = equivalence_check(harness.gen_stream(spec), spec.loss, config, args.p,
                            relative=args.relative)
    print(f"max_deviation={dev:.12g}")


# -- parser --------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="dpftrl", description="DP-FTRL accounting and experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="key=value file of defaults")
        p.set_defaults(func=func)
        return p

    p = add("account", cmd_account, "epsilon spent by a tree configuration")
    p.add_argument("--mode", choices=["tree", "restarts", "ls", "sensitivity"], required=True)
    p.add_argument("--n", type=int, required=True, help="steps per epoch")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--xi", type=int, help="minimum separation between participations")
    p.add_argument("--order", help="participation order file, one id or * per line")

    p = add("sensitivity", cmd_sensitivity, "squared sensitivity of one tree")
    p.add_argument("--method", choices=["levelwise", "dp", "order"], default="dp")
    p.add_argument("--T", type=int)
    p.add_argument("--E", type=int)
    p.add_argument("--xi", type=int)
    p.add_argument("--order")

    p = add("calibrate", cmd_calibrate, "noise multiplier for a target epsilon")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epochs", type=int, default=1)

    p = add("train", cmd_train, "online run on a synthetic stream, CSV per step")
    p.add_argument("--task", choices=list(harness.TASKS), required=True)
    p.add_argument("--variant", choices=list(harness.RUN_VARIANTS), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--restart-every", type=int, help="epochs per tree")
    p.add_argument("--complete-tree", action="store_true")
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--radius", type=float)
    p.add_argument("--clip", type=float, default=1.0, help="clip norm and feature scale L")
    p.add_argument("--noise", type=float, default=0.1, help="label/loss noise level")
    p.add_argument("--estimator", choices=[HONAKER, VANILLA], default=HONAKER)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--grid", action="store_true", help="pick lambda from {1,2,5}x10^i by final regret")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("noise-table", cmd_noise_table, "per-step noise of DP-FTRL vs noisy SGD")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = add("equivalence", cmd_equivalence, "DP-FTRL vs matched noisy SGD deviation")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=10.0)
    p.add_argument("--estimator", choices=[HONAKER, VANILLA], default=HONAKER)
    p.add_argument("--relative", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _flag_arity(parser, command):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    if command not in sub.choices:
        return {}
    return {opt: action.nargs for action in sub.choices[command]._actions
            for opt in action.option_strings}


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        path = _config_path(argv)
        if path and argv and not argv[0].startswith("-"):
            # Config values go first so explicit flags (parsed later) override them.
            pre = _config_argv(_read_config(path), _flag_arity(parser, argv[0]))
            argv = argv[:1] + pre + argv[1:]
        args = parser.parse_args(argv)
        args.func(args)
    except (InvalidInputError, privacy.CalibrationError, privacy.ResourceError, OSError) as e:
        print(f"dpftrl: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
