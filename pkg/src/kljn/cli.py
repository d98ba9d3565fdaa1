"""Command-line entry point.

Subcommands: simulate, attack-sweep, amplify, bb84-oracle, net-alice,
net-bob, net-channel, net-eve, report.  Experiment and session configs are
JSON documents mirroring the config dataclass field names; unknown keys
are rejected.  Exit codes: 0 success, 1 runtime/config error, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, netwire, rng
from .privacy import MODELS
from .protocol import session_config_from_dict


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(p, encoding="utf-8") as f:
        return json.load(f)


def _parse_n_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in text.split(",")]


def _cmd_simulate(args, require_attack: bool = False) -> int:
    spec_dict = _load_json(args.config)
    spec = harness.experiment_spec_from_dict(spec_dict)
    if args.seed is not None:
        spec_dict["seed"] = args.seed
        spec = harness.experiment_spec_from_dict(spec_dict)
    if require_attack and spec.attack is None:
        raise ValueError("attack-sweep requires an 'attack' section in the spec")
    out_prefix = args.out or spec.output or Path(args.config).stem
    rows = harness.run_experiment(spec, workers=args.workers)
    harness.write_sweep_csv(f"{out_prefix}.csv", spec, rows)
    harness.write_summary_json(f"{out_prefix}.summary.json", spec, rows)
    harness.capture_psd_csv(f"{out_prefix}.psd.csv", spec.base, spec.seed)
    if not args.quiet:
        for r in rows:
            attack_part = ""
            if r.attack is not None:
                attack_part = (
                    f" p={r.attack.success_rate:.4f}+-{r.attack.ci95:.4f}"
                    f" leak={r.attack.leak_fraction:.4f}"
                )
            print(
                f"{spec.name} {spec.sweep_path}={r.sweep_value:g}"
                f" sift={r.sift_fraction:.3f} alarms={r.alarms}{attack_part}"
            )
    return 0


def _cmd_amplify(args) -> int:
    out_prefix = args.out or "amplify"
    key = None
    guesses = None
    if args.synthetic_p is not None:
        gen = rng.stream(args.seed or 0, rng.HARNESS)
        key = gen.integers(0, 2, args.bits).astype(np.uint8)
        flips = (gen.random(args.bits) >= args.synthetic_p).astype(np.uint8)
        guesses = key ^ flips
    harness.write_amplify_csv(
        f"{out_prefix}.csv",
        steps=args.steps,
        model=args.model,
        initial_leak=args.initial_leak,
        key_bits=key,
        eve_guesses=guesses,
    )
    if not args.quiet:
        print(f"amplify steps={args.steps} model={args.model} -> {out_prefix}.csv")
    return 0


def _cmd_bb84(args) -> int:
    out_prefix = args.out or "bb84"
    n_values = _parse_n_range(args.n)
    harness.write_bb84_csv(f"{out_prefix}.csv", n_values, args.trials, args.seed or 0)
    if not args.quiet:
        print(f"bb84 n={n_values[0]}..{n_values[-1]} trials={args.trials} -> {out_prefix}.csv")
    return 0


def _cmd_report(args) -> int:
    doc = _load_json(args.summary)
    print(f"experiment: {doc.get('name')}")
    print(f"schema:     {doc.get('schema')}")
    print(f"rows:       {doc.get('rows')}")
    print(f"build:      {doc.get('git_describe')}")
    print(f"wall time:  {doc.get('total_wall_s', 0.0):.2f} s")
    return 0


def _session_from_args(args):
    cfg = session_config_from_dict(_load_json(args.config))
    return cfg


def _read_key(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read().strip()


def _cmd_net_party(args, role: int) -> int:
    cfg = _session_from_args(args)
    result = netwire.run_party(
        role=role,
        channel_addr=netwire.parse_hostport(args.connect),
        compare_addr=netwire.parse_hostport(args.compare),
        cfg=cfg,
        auth_key=_read_key(args.auth_key_file),
        session_id=args.session_id,
        master_seed=args.seed,
    )
    name = "alice" if role == netwire.ROLE_ALICE else "bob"
    if not args.quiet:
        state = "aborted: " + result.abort_reason if result.aborted else "ok"
        print(
            f"{name}: sifted={len(result.sifted_indices)}"
            f" alarms={len(result.alarms)} [{state}]"
        )
    return 1 if result.aborted else 0


def _cmd_net_channel(args) -> int:
    cfg = _session_from_args(args)
    served = netwire.run_channel(
        listen_addr=netwire.parse_hostport(args.listen),
        cfg=cfg,
        session_id=args.session_id,
        eve_mode=args.eve_mode,
    )
    if not args.quiet:
        print(f"channel: served {served} bit periods")
    return 0


def _cmd_net_eve(args) -> int:
    cfg = _session_from_args(args)
    ms = netwire.run_eve(
        channel_addr=netwire.parse_hostport(args.connect),
        cfg=cfg,
        mode=args.mode,
        amplitude=args.amplitude,
        session_id=args.session_id,
        master_seed=args.seed,
    )
    if not args.quiet:
        print(f"eve[{args.mode}]: observed {len(ms)} bit periods")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kljn",
        description="Johnson-noise secure key exchange simulator and analysis toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None, help="64-bit master seed override")
        p.add_argument("--out", type=str, default=None, help="output file prefix")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("simulate", help="run a sweep experiment from a JSON spec")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1, help="parallel trials (results identical)")
    add_common(p)

    p = sub.add_parser("attack-sweep", help="run a sweep with an attack evaluation")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1, help="parallel trials (results identical)")
    add_common(p)

    p = sub.add_parser("amplify", help="privacy-amplification table")
    p.add_argument("--steps", type=int, default=2)
    p.add_argument("--model", choices=MODELS, default="certainty")
    p.add_argument("--initial-leak", type=float, default=0.0019)
    p.add_argument("--synthetic-p", type=float, default=None, help="generate a synthetic guess stream at this per-bit accuracy")
    p.add_argument("--bits", type=int, default=1_000_000)
    add_common(p)

    p = sub.add_parser("bb84-oracle", help="intercept-resend detection curve")
    p.add_argument("--n", type=str, default="1..10", help="bit counts, e.g. 1..10 or 1,2,5")
    p.add_argument("--trials", type=int, default=100_000)
    add_common(p)

    p = sub.add_parser("report", help="print a summary JSON")
    p.add_argument("--summary", required=True)
    add_common(p)

    for name in ("net-alice", "net-bob"):
        p = sub.add_parser(name, help=f"run the {name[4:]} party process")
        p.add_argument("--connect", required=True, help="channel host:port")
        p.add_argument("--compare", required=True, help="compare host:port (alice listens, bob connects)")
        p.add_argument("--config", required=True)
        p.add_argument("--auth-key-file", required=True)
        p.add_argument("--session-id", type=int, default=0)
        add_common(p)

    p = sub.add_parser("net-channel", help="run the wire-emulator channel process")
    p.add_argument("--listen", required=True, help="host:port to listen on")
    p.add_argument("--config", required=True)
    p.add_argument("--session-id", type=int, default=0)
    p.add_argument("--eve-mode", choices=("tap", "inject"), default=None)
    add_common(p)

    p = sub.add_parser("net-eve", help="attach an eavesdropper to a channel")
    p.add_argument("--connect", required=True, help="channel host:port")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=("tap", "inject"), default="tap")
    p.add_argument("--amplitude", type=float, default=0.0)
    p.add_argument("--session-id", type=int, default=0)
    add_common(p)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; keep that contract.
        return int(e.code or 0)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "attack-sweep":
            return _cmd_simulate(args, require_attack=True)
        if args.command == "amplify":
            return _cmd_amplify(args)
        if args.command == "bb84-oracle":
            return _cmd_bb84(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "net-alice":
            return _cmd_net_party(args, netwire.ROLE_ALICE)
        if args.command == "net-bob":
            return _cmd_net_party(args, netwire.ROLE_BOB)
        if args.command == "net-channel":
            return _cmd_net_channel(args)
        if args.command == "net-eve":
            return _cmd_net_eve(args)
        parser.error(f"unknown command {args.command!r}")
        return 2
    except (ValueError, FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
