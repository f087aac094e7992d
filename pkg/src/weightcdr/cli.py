"""Command-line front end: scan, attack (for evaluation), and disarm pipelines.

Exit codes: 0 success, 1 I/O or format errors (including a failed extraction),
2 prevention-verification failure (``verify`` found a recoverable frame).
Seeds resolve as ``--seed`` > ``WEIGHT_CDR_SEED`` env var > 0, so identical
invocations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    KNOWN_MODEL_NEURON_COUNTS,
    capacity_report_json,
    capacity_table,
    perturbation_report,
    prevention_trials,
)
from .cdr import CdrPolicy, PolicyKind, QuantOutput, apply_policy
from .containers import ContainerFormat, load_container, save_container, select_tensors
from .errors import WeightCdrError
from .stego import ATTACK_PRESETS, AttackSpec, capacity_for, embed, extract

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PREVENTION_FAILED = 2

DEFAULT_SEED = 0
SEED_ENV_VAR = "WEIGHT_CDR_SEED"


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else DEFAULT_SEED


def _load(args):
    hint = ContainerFormat(args.format_hint) if getattr(args, "format_hint", None) else None
    return load_container(args.input, hint)


def _selection_args(args) -> tuple[str, str | int | None]:
    if getattr(args, "select_regex", None):
        return "name_regex", args.select_regex
    if getattr(args, "select_min_elements", None):
        return "min_elements", args.select_min_elements
    return "all_f32", None


def _resolve_k(value: str) -> int:
    if value.lower() in ATTACK_PRESETS:
        return ATTACK_PRESETS[value.lower()]
    return int(value)


def _check_output_path(args) -> Path:
    out = Path(args.out if args.out else args.input)
    if not args.in_place and out.resolve() == Path(args.input).resolve():
        raise WeightCdrError("refusing to overwrite the input; pass --in-place or a different --out")
    return out


def _emit(args, doc: dict, text: str) -> None:
    if args.json:
        doc = {"schema_version": 1, **doc}
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(text)


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #

def _cmd_inspect(args) -> int:
    if args.synthetic_count:
        counts = {f"synthetic-{n}": n for n in args.synthetic_count}
        if args.json:
            print(json.dumps(capacity_report_json(counts), indent=2, sort_keys=True))
        else:
            print(capacity_table(counts))
        return EXIT_OK

    c = _load(args)
    tensors = [
        {
            "name": t.name,
            "dtype": t.dtype,
            "shape": list(t.shape),
            "element_count": t.element_count,
            "data_sha256": hashlib.sha256(t.data).hexdigest(),
        }
        for t in c.tensors
    ]
    doc = {
        "format": c.format.value,
        "metadata": dict(c.metadata),
        "tensors": tensors,
    }
    if args.dump_json:
        dump = {
            "schema_version": 1,
            "format": c.format.value,
            "metadata": dict(c.metadata),
            "tensors": [
                {**entry, "data_hex": t.data.hex()}
                for entry, t in zip(tensors, c.tensors)
            ],
        }
        Path(args.dump_json).write_text(json.dumps(dump, indent=2, sort_keys=True) + "\n")

    lines = [f"format: {c.format.value}  tensors: {len(c.tensors)}"]
    for t in tensors:
        lines.append(f"  {t['name']:<24} {t['dtype']:<5} {t['shape']} ({t['element_count']} elements)")
    f32_counts = [(t.name, t.element_count) for t in c.f32_tensors()]
    if f32_counts:
        total = sum(n for _, n in f32_counts)
        lines.append(f"f32 elements: {total}")
        lines.append(capacity_table({"this model": total}))
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


def _cmd_embed(args) -> int:
    c = _load(args)
    mode, param = _selection_args(args)
    spec = AttackSpec.for_container(c, _resolve_k(args.k), mode, param)
    payload = Path(args.payload).read_bytes()
    attacked = embed(c, payload, spec)
    out = _check_output_path(args)
    save_container(attacked, out)
    report = capacity_for(c, spec)
    _emit(
        args,
        {
            "command": "embed",
            "k": spec.k,
            "payload_bytes": len(payload),
            "capacity_bytes": report.total_bytes,
            "output": str(out),
        },
        f"embedded {len(payload)} payload bytes at k={spec.k} "
        f"(capacity {report.total_bytes} bytes) -> {out}",
    )
    return EXIT_OK


def _cmd_extract(args) -> int:
    c = _load(args)
    mode, param = _selection_args(args)
    spec = AttackSpec.for_container(c, _resolve_k(args.k), mode, param)
    result = extract(c, spec)
    if result.ok and args.out:
        Path(args.out).write_bytes(result.payload)
    _emit(
        args,
        {"command": "extract", **result.to_json_dict()},
        f"extraction: {result.outcome.value}"
        + (f" ({result.details})" if result.details else "")
        + (f" -> {args.out}" if result.ok and args.out else ""),
    )
    return EXIT_OK if result.ok else EXIT_ERROR


def _build_policy(args) -> CdrPolicy:
    mode, param = _selection_args(args)
    kind = PolicyKind(args.policy)
    return CdrPolicy(
        kind=kind,
        k=args.klrbp_k if kind is PolicyKind.KLRBP else None,
        seed=_resolve_seed(args.seed),
        output=QuantOutput.INT8_SIDE_CAR if getattr(args, "sidecar", False) else QuantOutput.DEQUANT_F32,
        selection_mode=mode,
        selection_param=param,
    )


def _cmd_disarm(args) -> int:
    c = _load(args)
    policy = _build_policy(args)
    result = apply_policy(c, policy)
    out = _check_output_path(args)
    save_container(result.container, out)
    report = perturbation_report(c, result.container) if not args.sidecar else None
    doc = {
        "command": "disarm",
        "policy": policy.to_json_dict(),
        "output": str(out),
        "warnings": result.warnings_json()["warnings"],
    }
    text = [f"disarmed with {policy.kind.value} -> {out}"]
    if report is not None:
        doc["perturbation"] = report.to_json_dict()
        text.append(report.to_text())
    for w in result.warnings:
        text.append(f"warning: tensor {w.tensor!r} had {w.nonfinite_count} non-finite weights")
    _emit(args, doc, "\n".join(text))
    return EXIT_OK


def _cmd_verify(args) -> int:
    c = _load(args)
    mode, param = _selection_args(args)
    spec = AttackSpec.for_container(c, _resolve_k(args.attack_k), mode, param)
    result = extract(c, spec)
    _emit(
        args,
        {"command": "verify", **result.to_json_dict()},
        f"verify: {result.outcome.value}"
        + (" (prevention FAILED: payload recoverable)" if result.ok else ""),
    )
    return EXIT_PREVENTION_FAILED if result.ok else EXIT_OK


def _cmd_report(args) -> int:
    if args.kind == "capacity":
        counts = dict(KNOWN_MODEL_NEURON_COUNTS)
        if args.count:
            counts = {f"synthetic-{n}": n for n in args.count}
        if args.json:
            print(json.dumps(capacity_report_json(counts), indent=2, sort_keys=True))
        else:
            print(capacity_table(counts))
        return EXIT_OK

    policy = None
    if args.policy != "none":
        policy = CdrPolicy(
            kind=PolicyKind(args.policy),
            k=args.klrbp_k if args.policy == "klrbp" else None,
            seed=_resolve_seed(args.seed),
        )
    report = prevention_trials(
        attack_k=_resolve_k(args.attack_k),
        policy=policy,
        payload_size=args.payload_bytes,
        trials=args.trials,
        seed=_resolve_seed(args.seed),
    )
    if args.json:
        print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    else:
        print(report.to_text())
    return EXIT_OK


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #

def _add_selection_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--select-regex", help="restrict to F32 tensors whose full name matches")
    group.add_argument("--select-min-elements", type=int, help="restrict to F32 tensors of at least N elements")


def _add_io_flags(p: argparse.ArgumentParser, output: bool = True) -> None:
    p.add_argument("--in", dest="input", required=True, help="input container path")
    p.add_argument("--format", dest="format_hint",
                   choices=[f.value for f in ContainerFormat],
                   help="container format (default: sniffed)")
    if output:
        p.add_argument("--out", help="output container path")
        p.add_argument("--in-place", action="store_true", help="allow overwriting the input")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weight-cdr",
        description="Embed, extract, and disarm LSB steganography in float32 model weights.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="list tensors, capacities, or dump a canonical JSON image")
    p.add_argument("--in", dest="input", help="input container path")
    p.add_argument("--format", dest="format_hint",
                   choices=[f.value for f in ContainerFormat],
                   help="container format (default: sniffed)")
    p.add_argument("--dump-json", help="write a canonical JSON dump (name/shape/dtype/hex data)")
    p.add_argument("--synthetic-count", type=int, action="append",
                   help="report capacity for a synthetic element count instead of a file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_inspect)

    p = sub.add_parser("embed", help="hide a framed payload in the window bits")
    _add_io_flags(p)
    p.add_argument("--k", required=True, help="window width 1..23, or fmla/hmla/hbla")
    p.add_argument("--payload", required=True, help="payload file")
    _add_selection_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_embed)

    p = sub.add_parser("extract", help="attempt zero-knowledge payload extraction")
    _add_io_flags(p, output=False)
    p.add_argument("--k", required=True, help="window width 1..23, or fmla/hmla/hbla")
    p.add_argument("--out", help="write the recovered payload here")
    _add_selection_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_extract)

    p = sub.add_parser("disarm", help="apply a CDR policy to every selected tensor")
    _add_io_flags(p)
    p.add_argument("--policy", required=True, choices=[k.value for k in PolicyKind])
    p.add_argument("--k", dest="klrbp_k", type=int, help="bits per element for klrbp")
    p.add_argument("--seed", type=int, help=f"PRNG seed (default {SEED_ENV_VAR} or {DEFAULT_SEED})")
    p.add_argument("--sidecar", action="store_true", help="qint8: also emit int8 tensors and params")
    _add_selection_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_disarm)

    p = sub.add_parser("verify", help="exit 2 if a recoverable frame is still present")
    _add_io_flags(p, output=False)
    p.add_argument("--attack-k", required=True, help="window width to probe, or fmla/hmla/hbla")
    _add_selection_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("report", help="capacity tables and prevention-trial suites")
    p.add_argument("kind", choices=["capacity", "prevention"])
    p.add_argument("--count", type=int, action="append", help="capacity: synthetic element count")
    p.add_argument("--attack-k", default="4", help="prevention: attack window")
    p.add_argument("--policy", default="none",
                   choices=["none"] + [k.value for k in PolicyKind])
    p.add_argument("--k", dest="klrbp_k", type=int, help="prevention: klrbp bits")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--payload-bytes", type=int, default=1024)
    p.add_argument("--seed", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except WeightCdrError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
