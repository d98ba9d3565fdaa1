"""Eavesdropper attack catalog and leak quantification.

Every attack consumes only the publicly broadcast data of a session (the
per-end instantaneous measurements and the announced classifications);
none reads party-private state.  A per-bit guess is an LH-vs-HL decision
on a sifted period, encoded as Alice's resistor choice (1 = r_high, i.e.
state HL).  Leak is reported in two measures side by side: the
fraction-equivalent ``2p - 1`` and the mutual-information ``1 - H2(p)``,
both zero at p = 0.5.

Decision-statistic sign conventions are calibrated against closed-form
oracles (see the test suite), never hand-asserted:

* cross-correlation: a positive mean of u*i means net instantaneous power
  flows from the A side toward B; mapped to guessing HL.
* wire resistance: with series wire resistance, the end with the larger
  voltage mean square is the end holding the larger resistor
  (the mean-square difference is ``4kTB * r_w^2 * (r_a - r_b) / sigma^2``),
  so a positive ``MS(end A) - MS(end B)`` means HL.
* invasive injection: the injected current returns preferentially through
  the lower-resistance side, so a positive correlation of the injected
  waveform with ``i_b - i_a`` means the A side is the low side (LH).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .circuit import ResistorPair, Trace, TraceEnds, WireModel, solve_ideal
from .noise import NoiseConfig
from .protocol import (
    BitRecord,
    Imperfections,
    SessionConfig,
    alarm_scales,
    check_alarm,
    choice_bit,
    expected_levels,
    injection_current,
    party_noise,
    run_session,
)

KINDS = (
    "passive_ms",
    "cross_correlation",
    "wire_resistance",
    "temperature_mismatch",
    "resistor_inaccuracy",
    "invasive_injection",
    "mitm_splitter",
)

TAP_POINTS = ("endA", "mid", "endB")

LH, HL = 0, 1  # guess encoding: Alice's resistor choice


@dataclass(frozen=True)
class AttackConfig:
    """One attack scenario.

    ``params`` keys by kind:

    * temperature_mismatch: ``temperature_ratio`` (Alice's T_eff scale)
    * resistor_inaccuracy: ``resistor_error`` (Alice's relative error, |d| <= 0.05)
    * invasive_injection: ``amplitude_fraction``, ``waveform`` ("gaussian"/"sine")
    * mitm_splitter: ``mode`` ("active"/"passive"/"mimic")
    * any kind: ``quantizer_bits`` (optional resolution of published samples)
    """

    kind: str
    tap_point: str = "mid"
    params: dict | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind: {self.kind!r}")
        if self.tap_point not in TAP_POINTS:
            raise ValueError(f"unknown tap point: {self.tap_point!r}")
        if self.params is None:
            object.__setattr__(self, "params", {})
        delta = self.params.get("resistor_error")
        if delta is not None and abs(delta) > 0.05:
            raise ValueError("resistor_error must satisfy |delta| <= 0.05")


@dataclass(frozen=True)
class AttackReport:
    n_trials: int
    success_rate: float
    ci95: float
    leak_fraction: float
    leak_mutual_info: float
    alarms_triggered: int = 0
    alarm_latencies: tuple[int, ...] | None = None
    bits_extracted_before_alarm: int | None = None


def binary_entropy(p: float) -> float:
    """H2(p) in bits."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def wilson_halfwidth(p_hat: float, n: int, z: float = 1.959963984540054) -> float:
    """Half-width of the Wilson 95% score interval."""
    if n <= 0:
        raise ValueError("n must be positive")
    denom = 1.0 + z * z / n
    return z * math.sqrt(p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)) / denom


def summarize(guesses, truth) -> AttackReport:
    """Score a guess stream against the true sifted states."""
    guesses = np.asarray(guesses)
    truth = np.asarray(truth)
    if guesses.shape != truth.shape:
        raise ValueError("guesses and truth must have equal length")
    n = guesses.size
    if n == 0:
        raise ValueError("empty guess stream")
    p = float(np.mean(guesses == truth))
    return AttackReport(
        n_trials=n,
        success_rate=p,
        ci95=wilson_halfwidth(p, n),
        leak_fraction=max(0.0, 2.0 * p - 1.0),
        leak_mutual_info=1.0 - binary_entropy(max(p, 0.5)),
    )


# --- per-trace decision statistics ----------------------------------------


def eve_cross_correlation(trace: Trace) -> tuple[int, float]:
    """Guess from the sign of the voltage-current cross-correlation."""
    if len(trace.u_ch) == 0:
        raise ValueError("zero-length trace")
    stat = float(np.mean(trace.u_ch * trace.i_ch))
    return (HL if stat > 0 else LH), stat


def eve_passive_ms(trace: Trace, mixed_level_u: float) -> tuple[int, float]:
    """Threshold the channel-voltage mean square on the expected mixed level."""
    if len(trace.u_ch) == 0:
        raise ValueError("zero-length trace")
    stat = float(np.mean(trace.u_ch**2)) - mixed_level_u
    return (HL if stat > 0 else LH), stat


def eve_wire_resistance(ends: TraceEnds) -> tuple[int, float]:
    """Guess from the mean-square difference of the two end voltages."""
    stat = float(np.mean(ends.u_end_a**2) - np.mean(ends.u_end_b**2))
    return (HL if stat > 0 else LH), stat


def eve_temperature_mismatch(
    ms_measured: float, assumed_levels: tuple[float, float]
) -> tuple[int, float]:
    """Nearest-level decision against temperature-asymmetric expected levels.

    `assumed_levels` is (level for LH, level for HL); distances are taken
    in log space, matching the multiplicative dispersion of mean squares.
    """
    lh_level, hl_level = assumed_levels
    stat = abs(math.log(ms_measured / lh_level)) - abs(math.log(ms_measured / hl_level))
    return (HL if stat > 0 else LH), stat


def eve_resistor_inaccuracy(
    ms_measured: float, assumed_levels: tuple[float, float]
) -> tuple[int, float]:
    """Same statistic family as the temperature attack, per-party resistances."""
    return eve_temperature_mismatch(ms_measured, assumed_levels)


# --- asymmetric expected levels -------------------------------------------


def mixed_levels_temperature(
    resistors: ResistorPair, noise: NoiseConfig, t_scale_a: float, t_scale_b: float
) -> tuple[float, float]:
    """Expected mixed voltage levels (LH, HL) with per-party temperatures."""
    rl, rh = resistors.r_low, resistors.r_high
    kb = noise.four_kt * noise.bandwidth_hz
    total2 = (rl + rh) ** 2
    ms_lh = kb * (t_scale_a * rl * rh**2 + t_scale_b * rh * rl**2) / total2
    ms_hl = kb * (t_scale_a * rh * rl**2 + t_scale_b * rl * rh**2) / total2
    return ms_lh, ms_hl


def mixed_levels_resistor(
    noise: NoiseConfig, alice_actual: ResistorPair, bob_actual: ResistorPair
) -> tuple[float, float]:
    """Expected mixed voltage levels (LH, HL) from exact per-party resistances."""
    kb = noise.four_kt * noise.bandwidth_hz

    def level(r_a: float, r_b: float) -> float:
        return kb * r_a * r_b / (r_a + r_b)

    ms_lh = level(alice_actual.r_low, bob_actual.r_high)
    ms_hl = level(alice_actual.r_high, bob_actual.r_low)
    return ms_lh, ms_hl


# --- session-level attack runners ------------------------------------------


def _tap_view(ends: TraceEnds, tap: str, wire: WireModel) -> tuple[np.ndarray, np.ndarray]:
    """(voltage, toward-B current) seen at the tap, from broadcast data only."""
    if tap == "endA":
        return ends.u_end_a, ends.i_a
    if tap == "endB":
        return ends.u_end_b, -ends.i_b
    rw2 = wire.r_wire / 2.0
    u = 0.5 * ((ends.u_end_a - ends.i_a * rw2) + (ends.u_end_b - ends.i_b * rw2))
    i = 0.5 * (ends.i_a - ends.i_b)
    return u, i


def _imperfections_for(attack: AttackConfig) -> Imperfections:
    p = attack.params
    kwargs = {}
    if attack.kind == "temperature_mismatch":
        kwargs["alice_t_scale"] = float(p.get("temperature_ratio", 1.0))
    if attack.kind == "invasive_injection":
        kwargs["injection_amp"] = float(p.get("amplitude_fraction", 0.0))
        kwargs["injection_waveform"] = str(p.get("waveform", "gaussian"))
    if p.get("quantizer_bits") is not None:
        kwargs["quantizer_bits"] = int(p["quantizer_bits"])
    return Imperfections(**kwargs)


def _resistor_imperfections(cfg: SessionConfig, delta: float) -> Imperfections:
    actual = ResistorPair(
        r_low=cfg.resistors.r_low * (1.0 + delta),
        r_high=cfg.resistors.r_high * (1.0 + delta),
    )
    return Imperfections(alice_actual=actual)


def run_attack(cfg: SessionConfig, attack: AttackConfig, seed: int | None = None) -> AttackReport:
    """Run one attack scenario over a full session and score Eve's guesses."""
    seed = cfg.noise.seed if seed is None else seed
    if attack.kind == "invasive_injection":
        return _run_invasive(cfg, attack, seed)
    if attack.kind == "mitm_splitter":
        return _run_mitm(cfg, attack, seed)
    return _run_passive(cfg, attack, seed)


def _run_passive(cfg: SessionConfig, attack: AttackConfig, seed: int) -> AttackReport:
    levels = expected_levels(cfg.resistors, cfg.noise)
    kind = attack.kind
    params = attack.params

    if kind == "temperature_mismatch":
        rho = float(params.get("temperature_ratio", 1.0))
        imp = Imperfections(alice_t_scale=rho)
        assumed = mixed_levels_temperature(cfg.resistors, cfg.noise, rho, 1.0)
    elif kind == "resistor_inaccuracy":
        delta = float(params.get("resistor_error", 0.0))
        imp = _resistor_imperfections(cfg, delta)
        assumed = mixed_levels_resistor(cfg.noise, imp.alice_actual, cfg.resistors)
    else:
        imp = _imperfections_for(attack)
        assumed = None

    stats: list[float] = []

    def observer(rec: BitRecord) -> None:
        warm = rec.warmup
        u_tap, i_tap = _tap_view(rec.ends, attack.tap_point, cfg.wire)
        if kind == "cross_correlation":
            stats.append(float(np.mean(u_tap[warm:] * i_tap[warm:])))
        elif kind == "passive_ms":
            stats.append(float(np.mean(u_tap[warm:] ** 2)) - levels.ms_u[1])
        elif kind == "wire_resistance":
            stats.append(
                float(
                    np.mean(rec.ends.u_end_a[warm:] ** 2)
                    - np.mean(rec.ends.u_end_b[warm:] ** 2)
                )
            )
        else:  # nearest-level discriminators
            ms = float(np.mean(u_tap[warm:] ** 2))
            _, s = eve_temperature_mismatch(ms, assumed)
            stats.append(s)

    result = run_session(cfg, master_seed=seed, imperfections=imp, observer=observer)
    sifted = result.sifted_indices
    if sifted.size == 0:
        raise ValueError("session produced no sifted bits to attack")
    stat_arr = np.asarray(stats)[sifted]
    guesses = (stat_arr > 0).astype(np.uint8)
    truth = result.alice_choices[sifted]
    report = summarize(guesses, truth)
    return AttackReport(
        n_trials=report.n_trials,
        success_rate=report.success_rate,
        ci95=report.ci95,
        leak_fraction=report.leak_fraction,
        leak_mutual_info=report.leak_mutual_info,
        alarms_triggered=len(result.alarms),
    )


def _run_invasive(cfg: SessionConfig, attack: AttackConfig, seed: int) -> AttackReport:
    amp = float(attack.params.get("amplitude_fraction", 0.0))
    waveform = str(attack.params.get("waveform", "gaussian"))
    imp = Imperfections(injection_amp=amp, injection_waveform=waveform)
    _, scale_i = alarm_scales(expected_levels(cfg.resistors, cfg.noise))

    stats: list[float] = []
    latencies: list[int] = []

    def observer(rec: BitRecord) -> None:
        cut = rec.alarm.sample_index if rec.alarm is not None else len(rec.ends.i_a)
        if rec.alarm is not None:
            latencies.append(rec.alarm.sample_index)
        if amp > 0.0 and cut > 0:
            # Eve re-derives her own injected waveform; only pre-alarm
            # samples are usable before the parties abort.
            inj = injection_current(cfg, seed, rec.bit_index, amp, waveform, scale_i)
            stats.append(float(np.mean(inj[:cut] * (rec.ends.i_b[:cut] - rec.ends.i_a[:cut]))))
        else:
            stats.append(0.0)

    result = run_session(cfg, master_seed=seed, imperfections=imp, observer=observer)
    sifted = result.sifted_indices
    if sifted.size == 0:
        raise ValueError("session produced no sifted bits to attack")
    stat_arr = np.asarray(stats)[sifted]
    # Positive correlation with (i_b - i_a): A is the low side.
    guesses = np.where(stat_arr < 0, HL, LH).astype(np.uint8)
    ties = stat_arr == 0.0
    if np.any(ties):
        coin = rng.stream(seed, rng.EVE_GUESS)
        guesses[ties] = coin.integers(0, 2, size=int(np.sum(ties)))
    truth = result.alice_choices[sifted]
    report = summarize(guesses, truth)
    return AttackReport(
        n_trials=report.n_trials,
        success_rate=report.success_rate,
        ci95=report.ci95,
        leak_fraction=report.leak_fraction,
        leak_mutual_info=report.leak_mutual_info,
        alarms_triggered=len(result.alarms),
        alarm_latencies=tuple(latencies),
    )


def _run_mitm(cfg: SessionConfig, attack: AttackConfig, seed: int) -> AttackReport:
    mode = str(attack.params.get("mode", "active"))
    if mode not in ("active", "passive", "mimic"):
        raise ValueError(f"unknown mitm mode: {mode!r}")
    if mode in ("passive", "mimic"):
        # Wire untouched (or samples relayed unchanged): exactly the
        # no-attack session; Eve falls back to a passive statistic.
        control = AttackConfig(kind="cross_correlation", tap_point=attack.tap_point)
        rep = _run_passive(cfg, control, seed)
        return AttackReport(
            n_trials=rep.n_trials,
            success_rate=rep.success_rate,
            ci95=rep.ci95,
            leak_fraction=rep.leak_fraction,
            leak_mutual_info=rep.leak_mutual_info,
            alarms_triggered=rep.alarms_triggered,
            bits_extracted_before_alarm=0,
        )

    noise_cfg = cfg.noise
    levels = expected_levels(cfg.resistors, cfg.noise)
    scale_u, scale_i = alarm_scales(levels)
    dt = 1.0 / noise_cfg.sample_rate_hz
    rl, rh = cfg.resistors.r_low, cfg.resistors.r_high
    kb = noise_cfg.four_kt * noise_cfg.bandwidth_hz

    first_alarm_bit: int | None = None
    alarms = 0
    extracted: list[int] = []  # Alice bits Eve learned, in completion order
    alarm_bits: list[int] = []
    truth_bits: list[int] = []

    for b in range(cfg.n_bits):
        a_bit = choice_bit(seed, rng.ALICE_COIN, b)
        b_bit = choice_bit(seed, rng.BOB_COIN, b)
        eve_coin = rng.stream(seed, rng.EVE_COIN, b).integers(0, 2, size=2)
        r_a = rh if a_bit else rl
        r_b = rh if b_bit else rl
        r_ea = rh if eve_coin[0] else rl
        r_eb = rh if eve_coin[1] else rl

        u_a = party_noise(noise_cfg, seed, rng.ALICE_NOISE, b, r_a)
        u_b = party_noise(noise_cfg, seed, rng.BOB_NOISE, b, r_b)
        u_ea = party_noise(noise_cfg, seed, rng.EVE_NOISE_A, b, r_ea)
        u_eb = party_noise(noise_cfg, seed, rng.EVE_NOISE_B, b, r_eb)

        loop_a = solve_ideal(u_a, u_ea, r_a, r_ea, dt)
        loop_b = solve_ideal(u_b, u_eb, r_b, r_eb, dt)

        # What the parties broadcast from their independent half-loops.
        ends = TraceEnds(
            u_end_a=loop_a.u_ch,
            u_end_b=loop_b.u_ch,
            i_a=loop_a.i_ch,
            i_b=loop_b.i_ch,
            u_mid=0.5 * (loop_a.u_ch + loop_b.u_ch),
            dt=dt,
        )
        events = check_alarm(ends, cfg.wire, cfg.alarm_tol_rel, scale_u, scale_i, b)
        if events:
            alarms += 1
            alarm_bits.append(b)
            if first_alarm_bit is None:
                first_alarm_bit = b

        # Eve classifies Alice's side from her own loop; she knows her
        # termination resistor, so the two hypothesis levels are exact.
        ms = float(np.mean(loop_a.u_ch**2))
        lvl_low = kb * rl * r_ea / (rl + r_ea)
        lvl_high = kb * rh * r_ea / (rh + r_ea)
        guess_a = HL if abs(math.log(ms / lvl_high)) < abs(math.log(ms / lvl_low)) else LH
        extracted.append(guess_a)
        truth_bits.append(a_bit)

    report = summarize(np.array(extracted), np.array(truth_bits))
    # Bits fully classified strictly before the first alarm event; the
    # alarm fires within bit 0, before any period completes.
    before = first_alarm_bit if first_alarm_bit is not None else cfg.n_bits
    return AttackReport(
        n_trials=report.n_trials,
        success_rate=report.success_rate,
        ci95=report.ci95,
        leak_fraction=report.leak_fraction,
        leak_mutual_info=report.leak_mutual_info,
        alarms_triggered=alarms,
        bits_extracted_before_alarm=before,
    )
