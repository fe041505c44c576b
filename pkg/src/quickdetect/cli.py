"""Command-line front end: bin, baseline, calibrate, run, simulate, report.

Exit status: 0 success, 2 usage/config error, 3 data error, 4 calibration
did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import BaselineModel, estimate_baseline
from .calibrate import CalibrationResult, calibrate_threshold
from .detectors import KINDS, DetectorConfig, score_from_dict
from .errors import ConfigError, DataError, QuickDetectError
from .ingest import (
    DEFAULT_BIN_WIDTH_US,
    BinnedCount,
    bin_events,
    counts_array,
    parse_counts,
    parse_events,
    serialize_counts,
)
from .multicyclic import (
    alarm_log_ndjson,
    metrics_report,
    parse_alarm_ndjson,
    run_multicyclic,
    trajectory_csv,
)
from .reporting import digest, dumps, file_digest
from .samplers import SamplerSpec, inject_change, parse_sampler

log = logging.getLogger("quickdetect")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NONCONVERGED = 0, 2, 3, 4

# options holding file paths: excluded from the digest, replaced by content hashes for inputs
INPUT_PATHS = {"events", "counts", "baseline", "calibration", "alarms", "truth_in"}
OUTPUT_PATHS = {"output", "truth", "alarms_out", "metrics", "trajectory"}

# config-file keys that differ from the option's internal name
CONFIG_ALIASES = {
    "run": {"truth": "truth_in", "alarms": "alarms_out"},
    "report": {"truth": "truth_in"},
}

DEFAULTS = {
    "bin": {"bin_width": DEFAULT_BIN_WIDTH_US},
    "baseline": {},
    "calibrate": {"replications": 10_000, "rel_tol": 0.05},
    "run": {"replications": 10_000, "rel_tol": 0.05, "emit_trajectory": False},
    "simulate": {},
    "report": {},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_score(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("score (pick one form)")
    g.add_argument("--q0", type=float, help="design sigma_inf/sigma")
    g.add_argument("--delta0", type=float, help="design (mu - mu_inf)/sigma_inf")
    g.add_argument("--c1", type=float)
    g.add_argument("--c2", type=float)
    g.add_argument("--c3", type=float)
    g.add_argument("--gaussian-lr", metavar="MU_INF,SIGMA_INF,MU,SIGMA",
                   help="use the exact Gaussian log-likelihood ratio")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quickdetect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file of option values; explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help=argparse.SUPPRESS)

    p = sub.add_parser("bin", help="event timestamps (us) -> counts CSV", parents=[common])
    p.add_argument("events", nargs="?")
    p.add_argument("--bin-width", type=int, help="microseconds (default 20000)")
    p.add_argument("-o", "--output")

    p = sub.add_parser("baseline", help="counts CSV + window -> baseline JSON", parents=[common])
    p.add_argument("counts", nargs="?")
    p.add_argument("--start", type=int, help="first bin of the training window")
    p.add_argument("--end", type=int, help="last bin of the training window (inclusive)")
    p.add_argument("-o", "--output")

    for name, helptext in (("calibrate", "find the threshold for a target ARL"),
                           ("run", "multi-cyclic detection over a counts CSV")):
        p = sub.add_parser(name, help=helptext, parents=[common])
        if name == "run":
            p.add_argument("counts", nargs="?")
        else:
            p.add_argument("--counts", help="counts CSV; bootstrap window for the default sampler")
        p.add_argument("--detector", choices=KINDS)
        p.add_argument("--baseline", help="baseline JSON used to standardize observations")
        _add_score(p)
        p.add_argument("--gamma", type=float, help="target ARL to false alarm")
        p.add_argument("--pre", help="sampler: gaussian:MU,SIGMA or empirical:PATH[:START:END]")
        p.add_argument("--replications", type=int)
        p.add_argument("--rel-tol", type=float)
        p.add_argument("--seed", type=int)
        if name == "run":
            p.add_argument("--threshold", type=float)
            p.add_argument("--calibration", help="CalibrationResult JSON supplying the threshold")
            p.add_argument("--truth", dest="truth_in", help="ground-truth JSON for delay metrics")
            p.add_argument("--alarms", dest="alarms_out")
            p.add_argument("--metrics")
            p.add_argument("--trajectory")
            p.add_argument("--emit-trajectory", action="store_const", const=True)
        else:
            p.add_argument("-o", "--output")

    p = sub.add_parser("simulate", help="synthetic counts with a changepoint", parents=[common])
    p.add_argument("--pre")
    p.add_argument("--post")
    p.add_argument("--nu", type=int)
    p.add_argument("--total", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output")
    p.add_argument("--truth")

    p = sub.add_parser("report", help="alarm NDJSON + ground truth -> metrics JSON", parents=[common])
    p.add_argument("--alarms")
    p.add_argument("--truth", dest="truth_in")
    p.add_argument("-o", "--output")
    return parser


# ------------------------------------------------------------------ helpers


def _resolve(args: argparse.Namespace) -> dict:
    opts = {k: v for k, v in vars(args).items() if k not in ("config", "verbose", "command")}
    if args.config:
        try:
            with open(args.config) as fh:
                file_opts = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        aliases = CONFIG_ALIASES.get(args.command, {})
        file_opts = {aliases.get(k.replace("-", "_"), k.replace("-", "_")): v
                     for k, v in file_opts.items()}
        unknown = set(file_opts) - set(opts)
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        base = Path(args.config).parent
        for k, v in file_opts.items():
            if opts.get(k) is None:
                if k in INPUT_PATHS | OUTPUT_PATHS and v is not None and not Path(v).is_absolute():
                    v = str(base / v)
                opts[k] = v
    for k, v in DEFAULTS[args.command].items():
        if opts.get(k) is None:
            opts[k] = v
    if "seed" in opts and opts["seed"] is None:
        env = os.environ.get("QD_SEED")
        try:
            opts["seed"] = int(env) if env else 0
        except ValueError:
            raise ConfigError(f"QD_SEED must be an integer, got {env!r}") from None
    return opts


def _require(opts: dict, *names: str) -> None:
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _provenance(command: str, opts: dict) -> dict:
    payload = {"command": command}
    for k in sorted(opts):
        if k in OUTPUT_PATHS:
            continue
        if k in INPUT_PATHS:
            if opts[k] is not None:
                payload[k] = file_digest(opts[k])
        else:
            payload[k] = opts[k]
    for k in ("pre", "post"):
        v = opts.get(k)
        if isinstance(v, str) and v.startswith("empirical:"):
            payload[k] = "empirical:" + file_digest(v.split(":")[1])
    return {"config_digest": digest(payload), "seed": opts.get("seed")}


def _comment(prov: dict) -> str:
    return f"config_digest={prov['config_digest']} seed={prov['seed']}"


def _existing(path: str) -> str:
    if not Path(path).is_file():
        raise ConfigError(f"file not found: {path}")
    return path


def _load_json(path: str) -> dict:
    with _open_in(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _open_in(path: str):
    try:
        return open(path)
    except OSError as exc:
        raise ConfigError(f"cannot open {path}: {exc.strerror}") from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_json(path: str | None, obj: dict) -> None:
    _write(path, dumps(obj) + "\n")


def _read_counts(path: str) -> list[BinnedCount]:
    with _open_in(path) as fh:
        return parse_counts(fh)


def _score_dict(opts: dict) -> dict:
    if opts.get("gaussian_lr"):
        try:
            mu_inf, sigma_inf, mu, sigma = (float(v) for v in opts["gaussian_lr"].split(","))
        except ValueError:
            raise ConfigError("--gaussian-lr expects MU_INF,SIGMA_INF,MU,SIGMA") from None
        return {"gaussian_lr": {"mu_inf": mu_inf, "sigma_inf": sigma_inf, "mu": mu, "sigma": sigma}}
    if opts.get("q0") is not None or opts.get("delta0") is not None:
        _require(opts, "q0", "delta0")
        return {"q0": opts["q0"], "delta0": opts["delta0"]}
    if any(opts.get(c) is not None for c in ("c1", "c2", "c3")):
        _require(opts, "c1", "c2", "c3")
        return {"c1": opts["c1"], "c2": opts["c2"], "c3": opts["c3"]}
    raise ConfigError("no score given: use --q0/--delta0, --c1/--c2/--c3 or --gaussian-lr")


def _detector(opts: dict, threshold: float = 1.0) -> tuple[DetectorConfig, BaselineModel | None]:
    _require(opts, "detector")
    sd = _score_dict(opts)
    baseline = None
    if "gaussian_lr" not in sd:
        _require(opts, "baseline")
    if opts.get("baseline"):
        baseline = BaselineModel.from_dict(_load_json(opts["baseline"]))
    score = score_from_dict(sd, baseline)
    return DetectorConfig(opts["detector"], threshold, score), baseline


def _pre_sampler(opts: dict, baseline: BaselineModel | None, counts: list[BinnedCount] | None) -> SamplerSpec:
    if opts.get("pre"):
        return parse_sampler(opts["pre"], seed=opts["seed"])
    if counts is None:
        raise ConfigError("need --pre or a counts file to bootstrap from")
    window = counts
    if baseline is not None:
        window = [b for b in counts if baseline.window_start <= b.bin_index <= baseline.window_end]
    if not window:
        raise DataError("baseline window selects no bins from the counts file")
    return SamplerSpec.empirical([b.count for b in window], seed=opts["seed"], source="baseline window")


def _calibrate(opts: dict, config: DetectorConfig, sampler: SamplerSpec) -> CalibrationResult:
    return calibrate_threshold(config, opts["gamma"], sampler, rel_tol=opts["rel_tol"],
                               replications=opts["replications"], seed=opts["seed"])


def _sub_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1, np.uint64)[0])


# --------------------------------------------------------------- subcommands


def cmd_bin(opts: dict) -> int:
    _require(opts, "events")
    with _open_in(opts["events"]) as fh:
        events = parse_events(fh)
    bins = bin_events(events, opts["bin_width"])
    _write(opts["output"], serialize_counts(bins, _comment(_provenance("bin", opts))))
    return EXIT_OK


def cmd_baseline(opts: dict) -> int:
    _require(opts, "counts")
    bins = _read_counts(opts["counts"])
    lo = opts["start"] if opts["start"] is not None else (bins[0].bin_index if bins else 0)
    hi = opts["end"] if opts["end"] is not None else (bins[-1].bin_index if bins else -1)
    window = [b for b in bins if lo <= b.bin_index <= hi]
    model = estimate_baseline(window)
    _write_json(opts["output"], {**model.to_dict(), "provenance": _provenance("baseline", opts)})
    return EXIT_OK


def cmd_calibrate(opts: dict) -> int:
    _require(opts, "gamma")
    config, baseline = _detector(opts)
    counts = _read_counts(opts["counts"]) if opts.get("counts") else None
    sampler = _pre_sampler(opts, baseline, counts)
    result = _calibrate(opts, config, sampler)
    doc = {**result.to_dict(), "sampler": sampler.to_dict(),
           "detector": config.with_threshold(result.threshold).to_dict(),
           "provenance": _provenance("calibrate", opts)}
    _write_json(opts["output"], doc)
    if not result.converged:
        log.error("calibration did not converge after %d evaluations", result.iterations)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_run(opts: dict) -> int:
    _require(opts, "counts")
    sources = [k for k in ("threshold", "gamma", "calibration") if opts.get(k) is not None]
    if len(sources) != 1:
        raise ConfigError("give exactly one of --threshold, --gamma, --calibration")
    config, baseline = _detector(opts)
    bins = _read_counts(opts["counts"])
    calibration = None
    if opts.get("threshold") is not None:
        threshold = opts["threshold"]
    elif opts.get("calibration") is not None:
        calibration = CalibrationResult.from_dict(_load_json(opts["calibration"]))
        if calibration.kind != config.kind:
            raise ConfigError(f"calibration is for {calibration.kind}, detector is {config.kind}")
        threshold = calibration.threshold
    else:
        calibration = _calibrate(opts, config, _pre_sampler(opts, baseline, bins))
        if not calibration.converged:
            log.error("calibration did not converge")
            return EXIT_NONCONVERGED
        threshold = calibration.threshold
    config = config.with_threshold(threshold)

    emit = bool(opts["emit_trajectory"] or opts.get("trajectory"))
    alarm_log = run_multicyclic(counts_array(bins), config, emit_trajectory=emit)
    prov = _provenance("run", opts)
    nu = None
    if opts.get("truth_in"):
        nu = _truth_nu(_load_json(opts["truth_in"]))

    _write(opts.get("alarms_out"), alarm_log_ndjson(alarm_log, prov))
    if emit and opts.get("trajectory"):
        _write(opts["trajectory"], trajectory_csv(alarm_log, _comment(prov)))
    if opts.get("metrics"):
        metrics = metrics_report(alarm_log, nu)
        metrics["detector"] = config.to_dict()
        if calibration is not None:
            metrics["calibration"] = calibration.to_dict()
        metrics["provenance"] = prov
        _write_json(opts["metrics"], metrics)
    log.info("%d alarms over %d samples", len(alarm_log.records), alarm_log.samples_processed)
    return EXIT_OK


def _truth_nu(doc: dict) -> int:
    try:
        return int(doc["nu"])
    except (KeyError, TypeError, ValueError):
        raise DataError("ground-truth document needs an integer 'nu'") from None


def cmd_simulate(opts: dict) -> int:
    _require(opts, "pre", "post", "nu", "total")
    pre = parse_sampler(opts["pre"], seed=_sub_seed(opts["seed"], 0))
    post = parse_sampler(opts["post"], seed=_sub_seed(opts["seed"], 1))
    x = inject_change(pre, post, opts["nu"], opts["total"])
    # counts are integers: round to nearest, clip at zero
    counts = np.clip(np.rint(x), 0, None).astype(np.int64)
    bins = [BinnedCount(i, int(c)) for i, c in enumerate(counts)]
    prov = _provenance("simulate", opts)
    _write(opts["output"], serialize_counts(bins, _comment(prov)))
    if opts.get("truth"):
        _write_json(opts["truth"], {"nu": opts["nu"], "total": opts["total"],
                                    "pre": pre.to_dict(), "post": post.to_dict(),
                                    "provenance": prov})
    return EXIT_OK


def cmd_report(opts: dict) -> int:
    _require(opts, "alarms", "truth_in")
    with _open_in(opts["alarms"]) as fh:
        alarm_log = parse_alarm_ndjson(fh.read())
    truth = _load_json(opts["truth_in"])
    nu = _truth_nu(truth)
    if truth.get("total") is not None:
        alarm_log.samples_processed = max(alarm_log.samples_processed, int(truth["total"]))
    metrics = metrics_report(alarm_log, nu)
    metrics["provenance"] = _provenance("report", opts)
    _write_json(opts["output"], metrics)
    return EXIT_OK


COMMANDS = {"bin": cmd_bin, "baseline": cmd_baseline, "calibrate": cmd_calibrate,
            "run": cmd_run, "simulate": cmd_simulate, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_CONFIG
        return COMMANDS[args.command](_resolve(args))
    except ConfigError as exc:
        print(f"quickdetect: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"quickdetect: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except QuickDetectError as exc:
        print(f"quickdetect: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
