"""Configuration-driven experiment runner and report writer.

An experiment sweeps one session parameter over a list of values, runs a
number of independent trials per point, optionally evaluates an attack and
privacy amplification, and writes a CSV of rows plus a JSON summary.  All
randomness is keyed by (master seed, point index, trial index), so results
are byte-identical across runs and parallelism levels.  Wall-clock timings
go to the JSON summary only, keeping the CSV deterministic.

CSV schemas are versioned by a leading ``# schema: <name>`` comment line;
consumers check the version string before reading columns.
"""

from __future__ import annotations

import csv
import io
import json
import subprocess
import time
from dataclasses import dataclass

import numpy as np

from . import rng
from .attacks import AttackConfig, AttackReport, run_attack
from .circuit import solve_ideal
from .noise import estimate_psd
from .privacy import empirical_leak, predict_leak
from .protocol import (
    SessionConfig,
    expected_levels,
    party_noise,
    run_session,
    session_config_from_dict,
    session_config_to_dict,
    with_sweep_value,
)

SWEEP_SCHEMA = "kljn-sweep-1"
SWEEP_COLUMNS = [
    "sweep_path",
    "sweep_value",
    "trials",
    "n_bits",
    "sifted_bits",
    "sift_fraction",
    "ber",
    "alarms",
    "attack_kind",
    "p",
    "ci95",
    "leak_fraction",
    "leak_mi",
]

BB84_SCHEMA = "kljn-bb84-1"
BB84_COLUMNS = ["n", "analytic", "empirical", "ci95", "trials"]

AMPLIFY_SCHEMA = "kljn-amplify-1"
AMPLIFY_COLUMNS = ["step", "key_len", "slowdown", "predicted_leak", "empirical_leak"]

PSD_SCHEMA = "kljn-psd-1"
PSD_COLUMNS = ["freq_hz", "psd_u", "psd_i", "analytic_u", "analytic_i"]


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    base: SessionConfig
    sweep_path: str
    sweep_values: tuple
    attack: AttackConfig | None = None
    amplification_steps: int | None = None
    trials_per_point: int = 1
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if len(self.sweep_values) == 0:
            raise ValueError("empty sweep")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")


@dataclass
class ExperimentRow:
    sweep_value: float
    n_bits: int
    sifted_bits: int
    sift_fraction: float
    ber: float
    alarms: int
    attack: AttackReport | None
    wall_s: float  # summary-only; never written to the CSV


_SPEC_KEYS = {
    "name",
    "base",
    "sweep",
    "attack",
    "amplification_steps",
    "trials_per_point",
    "seed",
    "output",
}
_ATTACK_KEYS = {"kind", "tap_point", "params"}


def experiment_spec_from_dict(d: dict) -> ExperimentSpec:
    unknown = set(d) - _SPEC_KEYS
    if unknown:
        raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
    sweep = d.get("sweep", {})
    if set(sweep) - {"path", "values"}:
        raise ValueError("sweep must have exactly 'path' and 'values'")
    attack = None
    if d.get("attack") is not None:
        a = dict(d["attack"])
        unknown = set(a) - _ATTACK_KEYS
        if unknown:
            raise ValueError(f"unknown attack keys: {sorted(unknown)}")
        attack = AttackConfig(
            kind=a["kind"],
            tap_point=a.get("tap_point", "mid"),
            params=a.get("params"),
        )
    return ExperimentSpec(
        name=str(d["name"]),
        base=session_config_from_dict(d["base"]),
        sweep_path=str(sweep["path"]),
        sweep_values=tuple(sweep["values"]),
        attack=attack,
        amplification_steps=d.get("amplification_steps"),
        trials_per_point=int(d.get("trials_per_point", 1)),
        seed=int(d.get("seed", 0)),
        output=d.get("output"),
    )


def experiment_spec_to_dict(spec: ExperimentSpec) -> dict:
    d = {
        "name": spec.name,
        "base": session_config_to_dict(spec.base),
        "sweep": {"path": spec.sweep_path, "values": list(spec.sweep_values)},
        "trials_per_point": spec.trials_per_point,
        "seed": spec.seed,
    }
    if spec.attack is not None:
        d["attack"] = {
            "kind": spec.attack.kind,
            "tap_point": spec.attack.tap_point,
            "params": spec.attack.params,
        }
    if spec.amplification_steps is not None:
        d["amplification_steps"] = spec.amplification_steps
    if spec.output is not None:
        d["output"] = spec.output
    return d


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _pool_attack_reports(reports: list[AttackReport]) -> AttackReport:
    from .attacks import binary_entropy, wilson_halfwidth

    n = sum(r.n_trials for r in reports)
    correct = sum(round(r.success_rate * r.n_trials) for r in reports)
    p = correct / n
    return AttackReport(
        n_trials=n,
        success_rate=p,
        ci95=wilson_halfwidth(p, n),
        leak_fraction=max(0.0, 2.0 * p - 1.0),
        leak_mutual_info=1.0 - binary_entropy(max(p, 0.5)),
        alarms_triggered=sum(r.alarms_triggered for r in reports),
        bits_extracted_before_alarm=(
            max(r.bits_extracted_before_alarm for r in reports)
            if all(r.bits_extracted_before_alarm is not None for r in reports)
            else None
        ),
    )


def _execute_trial(args: tuple) -> tuple:
    """One (point, trial) unit of work; top-level so worker pools can run it.

    Returns a small picklable payload plus the trial's wall time; every
    trial's randomness is fully determined by its session seed, so results
    do not depend on scheduling.
    """
    cfg_dict, attack_dict, session_seed = args
    cfg = session_config_from_dict(cfg_dict)
    t0 = time.perf_counter()
    if attack_dict is not None:
        attack = AttackConfig(
            kind=attack_dict["kind"],
            tap_point=attack_dict["tap_point"],
            params=attack_dict["params"],
        )
        rep = run_attack(cfg, attack, seed=session_seed)
        return "attack", rep, time.perf_counter() - t0
    res = run_session(cfg, master_seed=session_seed)
    n_sift = len(res.sifted_indices)
    payload = (cfg.n_bits, n_sift, int(round(res.ber * n_sift)), len(res.alarms))
    return "session", payload, time.perf_counter() - t0


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list[ExperimentRow]:
    """Execute the sweep and return one aggregated row per sweep value.

    `workers` > 1 fans the (point, trial) grid over a process pool; the
    output is identical to the sequential run because all randomness is
    keyed by (seed, point, trial), never by scheduling.
    """
    attack_dict = None
    if spec.attack is not None:
        attack_dict = {
            "kind": spec.attack.kind,
            "tap_point": spec.attack.tap_point,
            "params": spec.attack.params,
        }
    tasks = []
    for point, value in enumerate(spec.sweep_values):
        cfg = with_sweep_value(spec.base, spec.sweep_path, value)
        cfg_dict = session_config_to_dict(cfg)
        for trial in range(spec.trials_per_point):
            session_seed = rng.derive_seed(spec.seed, point, trial)
            tasks.append((cfg_dict, attack_dict, session_seed))

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_execute_trial, tasks))
    else:
        outcomes = [_execute_trial(t) for t in tasks]

    rows: list[ExperimentRow] = []
    per_point = spec.trials_per_point
    for point, value in enumerate(spec.sweep_values):
        chunk = outcomes[point * per_point : (point + 1) * per_point]
        cfg = with_sweep_value(spec.base, spec.sweep_path, value)
        wall = sum(dur for _, _, dur in chunk)
        if spec.attack is not None:
            reports = [rep for _, rep, _ in chunk]
            pooled = reports[0] if len(reports) == 1 else _pool_attack_reports(reports)
            rows.append(
                ExperimentRow(
                    sweep_value=value,
                    n_bits=cfg.n_bits * per_point,
                    sifted_bits=pooled.n_trials,
                    sift_fraction=pooled.n_trials / (cfg.n_bits * per_point),
                    ber=float("nan"),
                    alarms=pooled.alarms_triggered,
                    attack=pooled,
                    wall_s=wall,
                )
            )
        else:
            bits = sum(p[0] for _, p, _ in chunk)
            sifted = sum(p[1] for _, p, _ in chunk)
            errors = sum(p[2] for _, p, _ in chunk)
            alarms = sum(p[3] for _, p, _ in chunk)
            rows.append(
                ExperimentRow(
                    sweep_value=value,
                    n_bits=bits,
                    sifted_bits=sifted,
                    sift_fraction=sifted / bits,
                    ber=errors / sifted if sifted else 0.0,
                    alarms=alarms,
                    attack=None,
                    wall_s=wall,
                )
            )
    return rows


def _format_cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if np.isnan(x):
            return ""
        return repr(x)
    return str(x)


def write_sweep_csv(path: str, spec: ExperimentSpec, rows: list[ExperimentRow]) -> None:
    buf = io.StringIO()
    buf.write(f"# schema: {SWEEP_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        a = r.attack
        w.writerow(
            [
                spec.sweep_path,
                _format_cell(float(r.sweep_value)),
                spec.trials_per_point,
                r.n_bits,
                r.sifted_bits,
                _format_cell(r.sift_fraction),
                _format_cell(r.ber),
                r.alarms,
                spec.attack.kind if spec.attack else "",
                _format_cell(a.success_rate if a else None),
                _format_cell(a.ci95 if a else None),
                _format_cell(a.leak_fraction if a else None),
                _format_cell(a.leak_mutual_info if a else None),
            ]
        )
    with open(path, "w", encoding="utf-8") as f:
        f.write(buf.getvalue())


def write_summary_json(path: str, spec: ExperimentSpec, rows: list[ExperimentRow]) -> None:
    doc = {
        "schema": SWEEP_SCHEMA,
        "name": spec.name,
        "spec": experiment_spec_to_dict(spec),
        "git_describe": _git_describe(),
        "rows": len(rows),
        "timings_s": {str(r.sweep_value): r.wall_s for r in rows},
        "total_wall_s": sum(r.wall_s for r in rows),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def capture_psd_csv(path: str, cfg: SessionConfig, seed: int, n_bits: int = 64) -> None:
    """Record the channel spectra of a forced-LH run against the analytic levels.

    Synthesises `n_bits` periods with Alice on r_low and Bob on r_high,
    concatenates the ideal-wire channel traces, and writes the Welch
    estimates next to the closed-form flat levels.
    """
    rl, rh = cfg.resistors.r_low, cfg.resistors.r_high
    m = cfg.noise.samples_per_bit
    u = np.empty(n_bits * m)
    i = np.empty(n_bits * m)
    for b in range(n_bits):
        u_a = party_noise(cfg.noise, seed, rng.ALICE_NOISE, b, rl)
        u_b = party_noise(cfg.noise, seed, rng.BOB_NOISE, b, rh)
        tr = solve_ideal(u_a, u_b, rl, rh, 1.0 / cfg.noise.sample_rate_hz)
        u[b * m : (b + 1) * m] = tr.u_ch
        i[b * m : (b + 1) * m] = tr.i_ch
    est_u = estimate_psd(u, cfg.noise.sample_rate_hz)
    est_i = estimate_psd(i, cfg.noise.sample_rate_hz)
    kb = cfg.noise.four_kt
    analytic_u = kb * rl * rh / (rl + rh)
    analytic_i = kb / (rl + rh)
    band = cfg.noise.bandwidth_hz

    buf = io.StringIO()
    buf.write(f"# schema: {PSD_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PSD_COLUMNS)
    for k in range(len(est_u.freqs)):
        f_k = est_u.freqs[k]
        in_band = f_k <= band
        w.writerow(
            [
                _format_cell(float(f_k)),
                _format_cell(float(est_u.psd[k])),
                _format_cell(float(est_i.psd[k])),
                _format_cell(analytic_u if in_band else 0.0),
                _format_cell(analytic_i if in_band else 0.0),
            ]
        )
    with open(path, "w", encoding="utf-8") as f:
        f.write(buf.getvalue())


def write_bb84_csv(path: str, n_values: list[int], trials: int, seed: int) -> None:
    from .qkd import detection_probability, simulate_intercept_resend

    buf = io.StringIO()
    buf.write(f"# schema: {BB84_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BB84_COLUMNS)
    for n in n_values:
        gen = rng.stream(seed, rng.QKD, n)
        analytic = detection_probability(n)
        empirical = simulate_intercept_resend(n, trials, gen)
        se = float(np.sqrt(max(empirical * (1.0 - empirical), 1e-12) / trials))
        w.writerow(
            [
                n,
                _format_cell(analytic),
                _format_cell(empirical),
                _format_cell(1.96 * se),
                trials,
            ]
        )
    with open(path, "w", encoding="utf-8") as f:
        f.write(buf.getvalue())


def write_amplify_csv(
    path: str,
    steps: int,
    model: str,
    initial_leak: float,
    key_bits: np.ndarray | None = None,
    eve_guesses: np.ndarray | None = None,
) -> None:
    buf = io.StringIO()
    buf.write(f"# schema: {AMPLIFY_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AMPLIFY_COLUMNS)
    n0 = int(key_bits.size) if key_bits is not None else 0
    for step in range(steps + 1):
        length = n0
        for _ in range(step):
            length //= 2
        empirical = None
        if key_bits is not None and eve_guesses is not None:
            empirical = empirical_leak(key_bits, eve_guesses, step)
        w.writerow(
            [
                step,
                length if key_bits is not None else "",
                1 << step,
                _format_cell(predict_leak(initial_leak, step, model)),
                _format_cell(empirical),
            ]
        )
    with open(path, "w", encoding="utf-8") as f:
        f.write(buf.getvalue())


def read_versioned_csv(path: str, expected_schema: str) -> tuple[list[str], list[list[str]]]:
    """Read a schema-tagged CSV, verifying the version line."""
    with open(path, encoding="utf-8") as f:
        first = f.readline().strip()
        if first != f"# schema: {expected_schema}":
            raise ValueError(f"schema mismatch: expected {expected_schema!r}, got {first!r}")
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]
