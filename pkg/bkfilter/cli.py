import argparse
import hashlib
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .dataset import ResponseKind, load_dataset
from .diagnostics import check_delta, running_mean, summarize_parameters
from .exceptions import BKFError, InvalidAlpha, InvalidFlag, ParseError, exit_code_for
from .experiments import (
    FULL_REPLICATIONS,
    PRESETS,
    ExperimentSpec,
    covariance_matrix,
    generate_dataset,
    grid_from_mapping,
    load_spec,
    run_grid,
)
from .gaussian import RngStream
from .gibbs import ChainConfig, KnockoffUpdate, read_trace
from .gibbs_linear import LinearGibbsSampler, make_prior, run_chain_linear
from .gibbs_probit import run_chain_probit
from .knockoff import DEFAULT_SLACK, fit_joint_model, true_model
from .selection import FeatureStatisticKind, estimate_null_bounds, feature_statistics, greedy_select

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

###############################################################################
# MANIFESTS
###############################################################################

def _sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()

def _utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")

class RunManifest:
    """
    Records how a command was run: enough to re-run it with
    ``bkf replay`` and get the same output files.
    """
    def __init__(self, command, argv, options, seed=None, inputs=()):
        self.command = command
        self.argv = list(argv)
        self.options = {k: (str(v) if isinstance(v, Path) else v) for k, v in options.items()}
        self.seed = seed
        self.inputs = {str(p): _sha256_file(p) for p in inputs}
        self.started = _utc_now()
        self.finished = None
        self.outputs = []
        self.results = {}

    def as_dict(self):
        return {
            "command": self.command,
            "argv": self.argv,
            "cwd": os.getcwd(),
            "options": self.options,
            "seed": self.seed,
            "version": __version__,
            "inputs": self.inputs,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
            "results": self.results,
            }

    def write(self, out_dir, outputs):
        """
        Writes ``<command>.manifest.json`` into ``out_dir`` atomically and
        returns its path.
        """
        self.finished = _utc_now()
        self.outputs = [Path(p).name for p in outputs]
        path = Path(out_dir) / "{}.manifest.json".format(self.command)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(path)
        return path

def _options(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "argv")}

def _out_dir(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir

###############################################################################
# COMMANDS
###############################################################################

def cmd_fit(args):
    if args.samples < 1:
        raise InvalidFlag("--samples must be >= 1, got {}".format(args.samples))
    if args.burn_in < 0:
        raise InvalidFlag("--burn-in must be >= 0, got {}".format(args.burn_in))
    if args.thin < 1:
        raise InvalidFlag("--thin must be >= 1, got {}".format(args.thin))
    if args.model == "probit" and args.prior != "flat":
        raise InvalidFlag("--model probit only supports --prior flat")

    seed = args.seed if args.seed is not None else 0
    manifest = RunManifest("fit", args.argv, _options(args), seed, [args.data])
    data = load_dataset(args.data, args.response, args.model)
    model, moments = fit_joint_model(data.x, standardize=not args.no_standardize, slack=args.slack)
    data = data.with_design(moments.transform(data.x))
    config = ChainConfig(
        burn_in=args.burn_in, samples=args.samples, thin=args.thin, seed=seed, chain=args.chain,
        snapshot_every=args.snapshot_every, random_scan=args.random_scan, ridge=args.ridge,
        knockoff_update=args.knockoff_update,
        )
    if data.kind is ResponseKind.PROBIT:
        trace = run_chain_probit(data, model, config)
    else:
        prior = make_prior(args.prior, args.xi, args.tau2, args.verbatim_weights)
        sampler = LinearGibbsSampler(data, model, prior, config)
        manifest.results["response_mean"] = sampler.response_mean
        trace = sampler.run()

    out_dir = _out_dir(args)
    outputs = [out_dir / "trace.csv", out_dir / "delta.csv", out_dir / "features.csv"]
    trace.to_csv(outputs[0])
    pd.DataFrame({
        "iter": trace.iterations,
        "delta": trace.delta,
        "running_mean": running_mean(trace.delta),
        }).to_csv(outputs[1], index=False, float_format=FLOAT_FORMAT)
    pd.DataFrame({
        "index": np.arange(1, data.p + 1),
        "name": data.feature_names,
        "center": moments.center,
        "scale": moments.scale,
        }).to_csv(outputs[2], index=False, float_format=FLOAT_FORMAT)
    if data.kind is ResponseKind.PROBIT and trace.latents:
        outputs.append(out_dir / "latents.csv")
        trace.latents_frame().to_csv(outputs[-1], index=False, float_format=FLOAT_FORMAT)
    manifest.write(out_dir, outputs)
    check = check_delta(trace.delta)
    print("wrote {} draws of {} features to {} (validity check: {})".format(
        trace.samples, trace.p, outputs[0], check.flag))
    return 0

def _feature_names(args, trace):
    path = Path(args.features) if args.features else Path(args.trace).with_name("features.csv")
    if not path.is_file():
        if args.features:
            raise FileNotFoundError("features file not found: {}".format(path))
        return [str(j + 1) for j in range(trace.p)]
    frame = pd.read_csv(path, dtype={"name": str}, keep_default_na=False)
    if "name" not in frame.columns or len(frame) != trace.p:
        raise ParseError("{}: expected a 'name' column with {} rows".format(path, trace.p))
    return list(frame["name"])

def cmd_select(args):
    if not 0 < args.alpha < 1:
        raise InvalidAlpha("--alpha must be in (0, 1), got {}".format(args.alpha))
    manifest = RunManifest("select", args.argv, _options(args), inputs=[args.trace])
    trace = read_trace(args.trace)
    names = _feature_names(args, trace)
    w = feature_statistics(trace.beta, trace.betak, args.statistic)
    result = greedy_select(estimate_null_bounds(w, not args.ignore_ties), args.alpha)

    summary = trace.posterior_summary().iloc[result.order].reset_index(drop=True)
    table = result.to_frame(names)
    table = pd.concat([table[["feature"]], summary, table.drop(columns=["feature"])], axis=1)

    out_dir = _out_dir(args)
    path = out_dir / "selection.csv"
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    manifest.write(out_dir, [path])

    print("selected {} of {} features at alpha={} (BFDR {:.4g})".format(
        result.k, trace.p, args.alpha, result.bfdr))
    if args.top:
        print(table.head(args.top).to_string(index=False))
    return 0

def cmd_simulate(args):
    if args.spec is None and args.preset is None:
        raise InvalidFlag("give an experiment spec file or --preset")
    if args.preset is not None and args.preset not in PRESETS:
        raise InvalidFlag("unknown --preset '{}' (known: {})".format(args.preset, ", ".join(sorted(PRESETS))))
    inputs = [args.spec] if args.spec is not None else []
    manifest = RunManifest("simulate", args.argv, _options(args), args.seed, inputs)
    if args.spec is not None:
        grid = load_spec(args.spec, args.preset)
    else:
        grid = grid_from_mapping({}, args.preset)
    changes = {}
    if args.full:
        changes["replications"] = FULL_REPLICATIONS
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.seed is not None:
        changes["seed"] = args.seed
    if changes:
        grid = grid.with_base(**changes)
    manifest.seed = grid.base.seed

    result = run_grid(grid, jobs=args.jobs, progress=args.progress)
    out_dir = _out_dir(args)
    outputs = result.write(out_dir, timings=args.timings)
    manifest.write(out_dir, outputs)
    print(result.aggregate_frame().to_string(index=False))
    return 0

def cmd_diagnose(args):
    manifest = RunManifest("diagnose", args.argv, _options(args), inputs=[args.trace])
    trace = read_trace(args.trace)
    if trace.delta is None:
        raise ParseError("{}: the trace has no 'delta' column".format(args.trace))
    check = check_delta(trace.delta)

    out_dir = _out_dir(args)
    outputs = [out_dir / "delta_trace.csv", out_dir / "parameters.csv", out_dir / "delta_check.csv"]
    pd.DataFrame({
        "iter": trace.iterations,
        "delta": trace.delta,
        "running_mean": running_mean(trace.delta),
        }).to_csv(outputs[0], index=False, float_format=FLOAT_FORMAT)
    summarize_parameters(trace).to_csv(outputs[1], index=False, float_format=FLOAT_FORMAT)
    pd.DataFrame([check._asdict()]).to_csv(outputs[2], index=False, float_format=FLOAT_FORMAT)
    manifest.write(out_dir, outputs)
    print("validity statistic mean {:.4g} (SE {:.4g}): {}".format(check.mean, check.se, check.flag))
    return 0

def cmd_bench(args):
    if args.model == "probit" and args.prior != "flat":
        raise InvalidFlag("--model probit only supports --prior flat")
    seed = args.seed if args.seed is not None else 0
    manifest = RunManifest("bench", args.argv, _options(args), seed)
    try:
        spec = ExperimentSpec(
            n=args.n, p=args.p, v=min(args.v, args.p), a=args.a, sigma2=1.0 if args.model == "probit" else 4.0,
            response=args.model, prior=args.prior, burn_in=args.burn_in, samples=args.samples, seed=seed,
            )
    except BKFError as e:
        raise InvalidFlag(str(e)) from None
    data, _, _ = generate_dataset(spec, RngStream(seed, stream=1))
    model = true_model(covariance_matrix(spec.case, spec.rho, spec.p), DEFAULT_SLACK)
    config = spec.chain_config(seed)

    started = time.perf_counter()
    if data.kind is ResponseKind.PROBIT:
        run_chain_probit(data, model, config)
    else:
        run_chain_linear(data, model, spec.make_prior(), config)
    seconds = time.perf_counter() - started

    sweeps = config.total_sweeps
    out_dir = _out_dir(args)
    path = out_dir / "bench.csv"
    pd.DataFrame([{
        "n": spec.n, "p": spec.p, "model": args.model, "prior": args.prior, "sweeps": sweeps,
        "seconds": seconds, "seconds_per_sweep": seconds / sweeps,
        }]).to_csv(path, index=False)
    manifest.write(out_dir, [path])
    print("{} sweeps in {:.2f}s ({:.3g}s per sweep)".format(sweeps, seconds, seconds / sweeps))
    return 0

def cmd_replay(args):
    path = Path(args.manifest)
    if not path.is_file():
        raise FileNotFoundError("manifest not found: {}".format(path))
    try:
        recorded = json.loads(path.read_text(encoding="utf-8"))
        argv = list(recorded["argv"])
    except (ValueError, KeyError, TypeError) as e:
        raise ParseError("{}: not a run manifest ({})".format(path, e)) from None
    if argv and argv[0] == "replay":
        raise ParseError("{}: cannot replay a replay".format(path))
    if args.out_dir is not None:
        argv += ["--out-dir", str(Path(args.out_dir).resolve())]
    cwd = recorded.get("cwd")
    previous = os.getcwd()
    logger.info("replaying: bkf %s", " ".join(argv))
    if cwd and Path(cwd).is_dir():
        os.chdir(cwd)
    try:
        return main(argv)
    finally:
        os.chdir(previous)

###############################################################################
# ARGUMENT PARSING
###############################################################################

def build_parser():
    parser = argparse.ArgumentParser(
        prog="bkf", description="Bayesian knockoff filter: fit, select, simulate and diagnose.")
    parser.add_argument("--version", action="version", version="%(prog)s {}".format(__version__))
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--out-dir", default=".", help="directory for output files (default .)")

    chain = argparse.ArgumentParser(add_help=False)
    chain.add_argument("--model", choices=[k.value for k in ResponseKind], default="linear")
    chain.add_argument("--prior", choices=["flat", "spike-slab"], default="flat")
    chain.add_argument("--burn-in", type=int, default=500)
    chain.add_argument("--samples", type=int, default=2000)

    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[common, chain], help="run the knockoff Gibbs sampler on a CSV dataset")
    fit.add_argument("data", help="dataset CSV with a header row")
    fit.add_argument("--response", default="y", help="name of the response column (default y)")
    fit.add_argument("--thin", type=int, default=1)
    fit.add_argument("--chain", type=int, default=0, help="chain index for independent chains")
    fit.add_argument("--xi", type=float, default=0.1, help="spike-and-slab activity probability")
    fit.add_argument("--tau2", type=float, default=1.0, help="spike-and-slab slab variance")
    fit.add_argument("--verbatim-weights", action="store_true",
                     help="use the spike-and-slab weights without the slab normalizing constant")
    fit.add_argument("--slack", type=float, default=DEFAULT_SLACK, help="equicorrelated knockoff slack")
    fit.add_argument("--no-standardize", action="store_true", help="keep features on their own scale")
    fit.add_argument("--ridge", type=float, default=0.0, help="probit Gram ridge")
    fit.add_argument("--snapshot-every", type=int, default=0, help="keep latents every K draws (probit)")
    fit.add_argument("--random-scan", action="store_true", help="random spike-and-slab coordinate order")
    fit.add_argument("--knockoff-update", choices=[k.value for k in KnockoffUpdate],
                     default=KnockoffUpdate.MARGINAL.value,
                     help="redraw knockoff rows from f(x~|x) (marginal, the default) or their full conditional")
    fit.set_defaults(func=cmd_fit)

    select = sub.add_parser("select", parents=[common], help="select features from a trace")
    select.add_argument("trace", help="trace CSV written by bkf fit")
    select.add_argument("--alpha", type=float, default=0.1, help="target Bayesian FDR (default 0.1)")
    select.add_argument("--statistic", choices=[k.value for k in FeatureStatisticKind],
                        default=FeatureStatisticKind.ABS_DIFF.value)
    select.add_argument("--ignore-ties", action="store_true",
                        help="leave draws with W=0 out of the null bound (bound is 2#{W<0}/T)")
    select.add_argument("--features", default=None, help="features CSV (default: features.csv beside the trace)")
    select.add_argument("--top", type=int, default=0, help="print the K features with the lowest p_hat")
    select.set_defaults(func=cmd_select)

    simulate = sub.add_parser("simulate", parents=[common], help="run a simulation study")
    simulate.add_argument("spec", nargs="?", default=None, help="experiment spec (YAML)")
    simulate.add_argument("--preset", default=None, help="one of: {}".format(", ".join(sorted(PRESETS))))
    simulate.add_argument("--replications", type=int, default=None)
    simulate.add_argument("--full", action="store_true",
                          help="run {} replications per point".format(FULL_REPLICATIONS))
    simulate.add_argument("--timings", action="store_true", help="add a runtime_s column")
    simulate.add_argument("--progress", action="store_true", help="show a progress bar")
    simulate.set_defaults(func=cmd_simulate)

    diagnose = sub.add_parser("diagnose", parents=[common], help="check a trace's knockoff validity statistic")
    diagnose.add_argument("trace", help="trace CSV written by bkf fit")
    diagnose.set_defaults(func=cmd_diagnose)

    bench = sub.add_parser("bench", parents=[common, chain], help="time one chain on generated data")
    bench.add_argument("--n", type=int, default=200)
    bench.add_argument("--p", type=int, default=30)
    bench.add_argument("--v", type=int, default=10)
    bench.add_argument("--a", type=float, default=2.0)
    bench.set_defaults(func=cmd_bench, burn_in=100, samples=500)

    replay = sub.add_parser("replay", help="re-run a command from its manifest")
    replay.add_argument("manifest", help="a <command>.manifest.json file")
    replay.add_argument("--out-dir", default=None, help="write outputs here instead")
    replay.set_defaults(func=cmd_replay)

    return parser

def _configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

def main(argv=None):
    """
    Entry point of the ``bkf`` command. Returns the exit code: 0 on
    success, 2 for usage errors, 3 for data errors and 4 for numerical
    failures.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    _configure_logging(args)
    try:
        return args.func(args)
    except (BKFError, FileNotFoundError) as e:
        print("bkf {}: error: {}".format(args.command, e), file=sys.stderr)
        return exit_code_for(e)

if __name__ == "__main__":
    sys.exit(main())
