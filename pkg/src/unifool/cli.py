"""Command-line entry point.

Subcommands: train-victim, attack, eval, transfer-eval, serve, export,
report. Values resolve as flag > config file (key=value lines) > built-in
default; the seed additionally falls back to the DUATTACK_SEED environment
variable. Every attack run writes its manifest before any long
computation, and --from-manifest replays a manifest verbatim.

Exit codes: 0 success, 2 usage error, 3 oracle unavailable, 4 file format
error, 5 invalid value or empty eligible set, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .attack import (
    AttackConfig,
    duattack,
    duattack_targeted,
    read_report_jsonl,
    write_report_jsonl,
)
from .data import ingest_spec
from .evaluate import CSV_HEADER, evaluate_targeted, evaluate_transfer, evaluate_untargeted
from .fileio import FormatError, load_perturbation, save_perturbation
from .oracle import LabelOracle, OracleUnavailableError, RemoteOracle, load_victim, save_victim, train_mlp
from .serve import ServiceConfig, serve
from .viz import EXPORT_MODES, PGM_PER_CHANNEL, export_perturbation, plus_minus_csv, plus_minus_text, report_plus_minus

SEED_ENV_VAR = "DUATTACK_SEED"

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_ORACLE = 3
EXIT_FORMAT = 4
EXIT_VALUE = 5

_DEFAULTS = {
    "epsilon": 0.2,
    "iters": 1000,
    "batch": None,
    "target": None,
    "strategy": "orthogonal-momentum",
    "epochs": 30,
    "lr": 0.1,
    "train_batch": 32,
    "hidden": 64,
    "classes": None,
    "host": "127.0.0.1",
    "port": 8787,
    "max_batch": 64,
    "window": 100,
    "mode": PGM_PER_CHANNEL,
    "zeta": None,
}


def load_config_file(path: str | None) -> dict[str, str]:
    """Parse key=value lines; '#' starts a comment."""
    if path is None:
        return {}
    pairs: dict[str, str] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            pairs[key.strip().replace("-", "_")] = value.strip()
    return pairs


def _resolve(args, pairs: dict[str, str], key: str, cast):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in pairs:
        raw = pairs[key]
        return None if raw.lower() in ("", "none") else cast(raw)
    return _DEFAULTS.get(key)


def _resolve_seed(args, pairs: dict[str, str]) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in pairs:
        return int(pairs["seed"])
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return 0


def _require(parser: argparse.ArgumentParser, value, flag: str):
    if value is None:
        parser.error(f"argument {flag} is required (flag or config file)")
    return value


def make_oracle(spec: str) -> LabelOracle:
    kind, sep, rest = spec.partition(":")
    if not sep or not rest:
        raise ValueError(f"oracle spec must look like local:PATH or remote:URL, got {spec!r}")
    if kind == "local":
        return load_victim(rest)
    if kind == "remote":
        return RemoteOracle(rest)
    raise ValueError(f"unknown oracle kind {kind!r} (expected local or remote)")


def _cmd_train(args) -> int:
    pairs = load_config_file(args.config)
    parser = args._parser
    data_spec = _require(parser, _resolve(args, pairs, "data", str), "--data")
    out = _require(parser, _resolve(args, pairs, "out", str), "--out")
    seed = _resolve_seed(args, pairs)
    ds = ingest_spec(data_spec)
    victim = train_mlp(
        ds.images,
        ds.labels,
        epochs=int(_resolve(args, pairs, "epochs", int)),
        lr=float(_resolve(args, pairs, "lr", float)),
        batch=int(_resolve(args, pairs, "train_batch", int)),
        seed=seed,
        hidden=int(_resolve(args, pairs, "hidden", int)),
        num_classes=_resolve(args, pairs, "classes", int),
    )
    save_victim(victim, out)
    print(json.dumps({
        "train_accuracy": victim.final_train_accuracy,
        "num_classes": victim.num_classes,
        "weights": out,
    }))
    return EXIT_OK


def _cmd_attack(args) -> int:
    pairs = load_config_file(args.config)
    parser = args._parser
    if args.from_manifest:
        with open(args.from_manifest) as f:
            manifest = json.load(f)
        if manifest.get("command") != "attack":
            raise ValueError(f"{args.from_manifest}: not an attack manifest")
        oracle_spec = manifest["oracle"]
        data_spec = manifest["data"]
        conf = manifest["config"]
        out = args.out or manifest["artifacts"]["perturbation"]
        report_path = args.report or manifest["artifacts"].get("report")
        config = AttackConfig(
            budget=conf["zeta"],
            epsilon=conf["epsilon"],
            iterations=conf["iters"],
            momentum=conf.get("momentum", 0.9),
            target=conf.get("target"),
            strategy=conf.get("strategy", "orthogonal-momentum"),
            seed=conf["seed"],
            batch_size=conf.get("batch"),
        )
    else:
        oracle_spec = _require(parser, _resolve(args, pairs, "oracle", str), "--oracle")
        data_spec = _require(parser, _resolve(args, pairs, "data", str), "--data")
        out = _require(parser, _resolve(args, pairs, "out", str), "--out")
        zeta = _require(parser, _resolve(args, pairs, "zeta", float), "--zeta")
        report_path = _resolve(args, pairs, "report", str)
        target = _resolve(args, pairs, "target", int)
        config = AttackConfig(
            budget=float(zeta),
            epsilon=float(_resolve(args, pairs, "epsilon", float)),
            iterations=int(_resolve(args, pairs, "iters", int)),
            target=None if target is None else int(target),
            strategy=str(_resolve(args, pairs, "strategy", str)),
            seed=_resolve_seed(args, pairs),
            batch_size=_resolve(args, pairs, "batch", int),
        )

    manifest_path = args.manifest or f"{out}.manifest.json"
    manifest = {
        "tool": "unifool",
        "version": __version__,
        "command": "attack",
        "oracle": oracle_spec,
        "data": data_spec,
        "config": {
            "zeta": config.budget,
            "epsilon": config.epsilon,
            "iters": config.iterations,
            "momentum": config.momentum,
            "target": config.target,
            "strategy": config.strategy,
            "seed": config.seed,
            "batch": config.batch_size,
        },
        "artifacts": {"perturbation": out, "report": report_path, "manifest": manifest_path},
    }
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2)

    ds = ingest_spec(data_spec)
    oracle = make_oracle(oracle_spec)
    run = duattack_targeted if config.target is not None else duattack
    pert, report = run(oracle, ds.images, config)
    save_perturbation(pert, out)
    if report_path:
        write_report_jsonl(report, report_path)
    print(json.dumps({"perturbation": out, "manifest": manifest_path, **report.summary()}))
    return EXIT_OK


def _cmd_eval(args) -> int:
    pairs = load_config_file(args.config)
    parser = args._parser
    oracle_spec = _require(parser, _resolve(args, pairs, "oracle", str), "--oracle")
    data_spec = _require(parser, _resolve(args, pairs, "data", str), "--data")
    pert_path = _require(parser, _resolve(args, pairs, "pert", str), "--pert")
    target = _resolve(args, pairs, "target", int)
    ds = ingest_spec(data_spec)
    oracle = make_oracle(oracle_spec)
    pert = load_perturbation(pert_path)
    if target is None:
        result = evaluate_untargeted(oracle, ds.images, ds.labels, pert)
    else:
        result = evaluate_targeted(oracle, ds.images, ds.labels, pert, int(target))
    print(json.dumps(result.to_json()))
    csv_text = CSV_HEADER + "\n" + result.to_csv_row() + "\n"
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def _cmd_transfer(args) -> int:
    pairs = load_config_file(args.config)
    parser = args._parser
    victim_a = _require(parser, _resolve(args, pairs, "victim_a", str), "--victim-a")
    victim_b = _require(parser, _resolve(args, pairs, "victim_b", str), "--victim-b")
    data_spec = _require(parser, _resolve(args, pairs, "data", str), "--data")
    pert_path = _require(parser, _resolve(args, pairs, "pert", str), "--pert")
    ds = ingest_spec(data_spec)
    pert = load_perturbation(pert_path)
    res_a, res_b = evaluate_transfer(pert, load_victim(victim_a), load_victim(victim_b), ds.images, ds.labels)
    print(json.dumps({"victim_a": res_a.to_json(), "victim_b": res_b.to_json()}))
    return EXIT_OK


def _cmd_serve(args) -> int:
    pairs = load_config_file(args.config)
    parser = args._parser
    victim_path = _require(parser, _resolve(args, pairs, "victim", str), "--victim")
    config = ServiceConfig(
        host=str(_resolve(args, pairs, "host", str)),
        port=int(_resolve(args, pairs, "port", int)),
        max_batch=int(_resolve(args, pairs, "max_batch", int)),
        log_path=_resolve(args, pairs, "log", str),
    )
    victim = load_victim(victim_path)
    print(json.dumps({"serving": f"http://{config.host}:{config.port}", "num_classes": victim.num_classes}))
    serve(victim, config)
    return EXIT_OK


def _cmd_export(args) -> int:
    pairs = load_config_file(args.config)
    parser = args._parser
    pert_path = _require(parser, _resolve(args, pairs, "pert", str), "--pert")
    out = _require(parser, _resolve(args, pairs, "out", str), "--out")
    mode = str(_resolve(args, pairs, "mode", str))
    sidecar = export_perturbation(load_perturbation(pert_path), out, mode)
    print(json.dumps(sidecar))
    return EXIT_OK


def _cmd_report(args) -> int:
    pairs = load_config_file(args.config)
    parser = args._parser
    report_path = _require(parser, _resolve(args, pairs, "report", str), "--report")
    window = int(_resolve(args, pairs, "window", int))
    records, _ = read_report_jsonl(report_path)
    rows = report_plus_minus(records, window)
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(plus_minus_csv(rows))
    sys.stdout.write(plus_minus_text(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unifool",
        description="Synthesize and evaluate a single label-only adversarial perturbation.",
    )
    parser.add_argument("--version", action="version", version=f"unifool {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value settings file; flags override it")
        p.add_argument("--seed", type=int, help=f"RNG seed (default: ${SEED_ENV_VAR} or 0)")

    p = sub.add_parser("train-victim", help="train and save a small victim classifier")
    common(p)
    p.add_argument("--data", help="dataset spec (idx:..., dutensor:..., toy:...)")
    p.add_argument("--out", help="output weights file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--train-batch", type=int, dest="train_batch")
    p.add_argument("--hidden", type=int)
    p.add_argument("--classes", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("attack", help="synthesize a perturbation from top-1 labels")
    common(p)
    p.add_argument("--oracle", help="local:WEIGHTS or remote:URL")
    p.add_argument("--data", help="training image spec")
    p.add_argument("--zeta", type=float, help="Frobenius budget")
    p.add_argument("--epsilon", type=float, help="step size")
    p.add_argument("--iters", type=int, help="maximum iterations")
    p.add_argument("--batch", type=int, help="probe batch size (default: full set)")
    p.add_argument("--target", type=int, help="targeted mode toward this class")
    p.add_argument("--strategy", choices=["orthogonal-momentum", "random-sampling"])
    p.add_argument("--out", help="output perturbation file")
    p.add_argument("--report", help="per-iteration JSONL report path")
    p.add_argument("--manifest", help="manifest path (default: OUT.manifest.json)")
    p.add_argument("--from-manifest", dest="from_manifest", help="replay a previous run's manifest")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("eval", help="measure success rate of a saved perturbation")
    common(p)
    p.add_argument("--oracle")
    p.add_argument("--data")
    p.add_argument("--pert")
    p.add_argument("--target", type=int)
    p.add_argument("--csv", help="write the CSV row here instead of stdout")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("transfer-eval", help="evaluate one perturbation on two victims")
    common(p)
    p.add_argument("--victim-a", dest="victim_a")
    p.add_argument("--victim-b", dest="victim_b")
    p.add_argument("--data")
    p.add_argument("--pert")
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("serve", help="serve a victim's labels over HTTP")
    common(p)
    p.add_argument("--victim")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--max-batch", type=int, dest="max_batch")
    p.add_argument("--log", help="append-only request log (JSON lines)")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("export", help="render a perturbation to PGM images")
    common(p)
    p.add_argument("--pert")
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--mode", choices=list(EXPORT_MODES))
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("report", help="plus/minus histogram from a JSONL report")
    common(p)
    p.add_argument("--report")
    p.add_argument("--window", type=int)
    p.add_argument("--csv", help="also write the histogram as CSV here")
    p.set_defaults(func=_cmd_report)

    for action in sub.choices.values():
        action.set_defaults(_parser=action)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except SystemExit as exc:  # parser.error from required-value checks
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except OracleUnavailableError as exc:
        print(f"error: oracle unavailable: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALUE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: unexpected failure: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
