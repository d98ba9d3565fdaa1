"""The key-exchange session: choices, exchange, classification, alarm.

Per clock period both parties draw an independent fair bit, connect the
chosen resistor, and exchange one bit period of noise through the loop
solver.  Both measure the mean square of their end voltage/current over
the period (after the capacitor warm-up prefix) and classify it against
the three expected levels.  Periods classified as mixed by both parties
are sifted; the shared key bit is Bob's resistor choice (H -> 1, L -> 0),
which Alice computes as the complement of her own choice.

The defense alarm compares the instantaneous end measurements, per
sample, against the public wire model: both ends' midpoint-voltage
estimates must agree, and the end currents must balance the capacitor
charging current.  Any deviation beyond the relative tolerance raises an
alarm carrying the first offending sample index.  The alarm uses only
data from within the current bit period, never cross-bit statistics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .circuit import ResistorPair, TraceEnds, WireModel, solve_nonideal
from .noise import NoiseConfig, synth_band_noise


class BitState(enum.Enum):
    """Joint resistor state; first letter Alice, second Bob."""

    LL = "LL"
    LH = "LH"
    HL = "HL"
    HH = "HH"

    @property
    def is_mixed(self) -> bool:
        return self in (BitState.LH, BitState.HL)


class Band(enum.Enum):
    """Resistor-pair class identified from a mean-square level."""

    LOW = 0  # both parties on r_low
    MIXED = 1  # opposite resistors (the secure states)
    HIGH = 2  # both parties on r_high


_DECISION_STATS = ("voltage", "current", "both")


@dataclass(frozen=True)
class SessionConfig:
    n_bits: int
    noise: NoiseConfig
    resistors: ResistorPair
    wire: WireModel = WireModel()
    alarm_tol_rel: float = 1e-6
    decision_stat: str = "voltage"

    def __post_init__(self):
        if self.n_bits < 1:
            raise ValueError("n_bits must be >= 1")
        if self.alarm_tol_rel <= 0:
            raise ValueError("alarm_tol_rel must be > 0")
        if self.decision_stat not in _DECISION_STATS:
            raise ValueError(f"decision_stat must be one of {_DECISION_STATS}")

    @property
    def dt(self) -> float:
        return 1.0 / self.noise.sample_rate_hz


@dataclass(frozen=True)
class Levels:
    """Expected mean-square levels, indexed (LL, mixed, HH)."""

    ms_u: tuple[float, float, float]  # ascending
    ms_i: tuple[float, float, float]  # descending


@dataclass(frozen=True)
class AlarmEvent:
    bit_index: int
    sample_index: int
    deviation: float  # relative to the channel RMS scale


@dataclass
class SessionResult:
    alice_choices: np.ndarray
    bob_choices: np.ndarray
    sifted_indices: np.ndarray
    shared_key_alice: np.ndarray
    shared_key_bob: np.ndarray
    ber: float
    sift_fraction: float
    alarms: list[AlarmEvent]


@dataclass(frozen=True)
class Imperfections:
    """Deviations from the ideal protocol, used by the attack harness.

    All fields default to the ideal values; `oracle_exact_levels` is test
    instrumentation that replaces each party's measured statistic with its
    exact expected level, making classification deterministic.
    """

    alice_t_scale: float = 1.0
    bob_t_scale: float = 1.0
    alice_actual: ResistorPair | None = None
    bob_actual: ResistorPair | None = None
    injection_amp: float = 0.0
    injection_waveform: str = "gaussian"
    quantizer_bits: int | None = None
    oracle_exact_levels: bool = False


@dataclass(frozen=True)
class BitRecord:
    """Public view of one clock period, as an eavesdropper sees it.

    Contains only broadcast data: the end measurements, both parties'
    announced classifications, the sift decision, and any alarm.  Party
    resistor choices are deliberately absent.
    """

    bit_index: int
    ends: TraceEnds
    class_alice: Band | None
    class_bob: Band | None
    sifted: bool
    alarm: AlarmEvent | None
    warmup: int


def _pair_ms(four_kt_b: float, r1: float, r2: float) -> tuple[float, float]:
    # For generators in r1 and r2: mean-square channel voltage and current.
    return four_kt_b * r1 * r2 / (r1 + r2), four_kt_b / (r1 + r2)


def expected_levels(resistors: ResistorPair, noise: NoiseConfig) -> Levels:
    """The three expected mean-square levels for voltage and current.

    For a resistor pair (r1, r2) the channel levels are
    ``4kT_eff*B*r1*r2/(r1+r2)`` (voltage) and ``4kT_eff*B/(r1+r2)``
    (current); LL uses (r_low, r_low), mixed (r_low, r_high), and HH
    (r_high, r_high).  Voltage levels ascend, current levels descend.
    """
    kb = noise.four_kt * noise.bandwidth_hz
    rl, rh = resistors.r_low, resistors.r_high
    u_ll, i_ll = _pair_ms(kb, rl, rl)
    u_mx, i_mx = _pair_ms(kb, rl, rh)
    u_hh, i_hh = _pair_ms(kb, rh, rh)
    return Levels(ms_u=(u_ll, u_mx, u_hh), ms_i=(i_ll, i_mx, i_hh))


def classify_level(
    ms_measured: float,
    levels: tuple[float, float, float],
    thresholds: tuple[float, float] | None = None,
) -> Band:
    """Classify a measured mean square into the band it falls in.

    `levels` is indexed (LL, mixed, HH) and may be ascending (voltage
    statistic) or descending (current statistic).  Thresholds default to
    the geometric means of adjacent levels, matching the multiplicative
    (chi-square) dispersion of mean-square estimates of Gaussian noise.
    """
    if not math.isfinite(ms_measured):
        raise ValueError("measured level must be finite")
    l0, l1, l2 = levels
    ascending = l0 < l2
    if thresholds is None:
        thresholds = (math.sqrt(l0 * l1), math.sqrt(l1 * l2))
    t01, t12 = thresholds
    if ascending:
        if ms_measured < t01:
            return Band.LOW
        return Band.MIXED if ms_measured < t12 else Band.HIGH
    if ms_measured > t01:
        return Band.LOW
    return Band.MIXED if ms_measured > t12 else Band.HIGH


def alarm_scales(levels: Levels) -> tuple[float, float]:
    """RMS normalisation scales (voltage, current) for alarm deviations."""
    return math.sqrt(levels.ms_u[1]), math.sqrt(levels.ms_i[1])


def check_alarm(
    ends: TraceEnds,
    wire: WireModel,
    tol_rel: float,
    scale_u: float,
    scale_i: float,
    bit_index: int = 0,
) -> list[AlarmEvent]:
    """Verify the per-sample model-consistency relations of one period.

    Both ends' midpoint-voltage estimates (end voltage minus the half-wire
    drop) must agree, and the end currents must sum to the capacitor
    charging current (zero for ``c_eff == 0``).  A deviation beyond
    ``tol_rel`` times the channel RMS at any sample emits an alarm event
    carrying the first offending sample index.  Alarms are data, not
    errors.
    """
    rw2 = wire.r_wire / 2.0
    v_a = ends.u_end_a - ends.i_a * rw2
    v_b = ends.u_end_b - ends.i_b * rw2
    dev = np.abs(v_a - v_b) / scale_u

    total = ends.i_a + ends.i_b
    c = wire.c_eff
    if c == 0.0:
        np.maximum(dev, np.abs(total) / scale_i, out=dev)
    else:
        # Trapezoidal charge balance between consecutive samples, plus the
        # known zero initial capacitor state.
        cap = c * np.diff(v_a) / ends.dt
        mid = 0.5 * (total[1:] + total[:-1])
        dev[1:] = np.maximum(dev[1:], np.abs(cap - mid) / scale_i)
        dev[0] = max(dev[0], abs(v_a[0]) / scale_u)

    over = dev > tol_rel
    if not np.any(over):
        return []
    idx = int(np.argmax(over))
    return [AlarmEvent(bit_index=bit_index, sample_index=idx, deviation=float(dev[idx]))]


def warmup_samples(cfg: SessionConfig) -> int:
    """Samples discarded before statistics: five worst-case time constants."""
    c = cfg.wire.c_eff
    if c == 0.0:
        return 0
    r_half = cfg.resistors.r_high + cfg.wire.r_wire / 2.0
    tau = (r_half / 2.0) * c  # largest Thevenin resistance: both ends high
    n = int(math.ceil(5.0 * tau / cfg.dt))
    if n >= cfg.noise.samples_per_bit:
        raise ValueError("bit period shorter than the capacitor warm-up prefix")
    return n


def quantize(x: np.ndarray, bits: int, full_scale: float) -> np.ndarray:
    """Uniform mid-tread quantizer over [-full_scale, +full_scale]."""
    if bits < 2:
        raise ValueError("quantizer needs at least 2 bits")
    step = 2.0 * full_scale / (1 << bits)
    half = 1 << (bits - 1)
    return np.clip(np.round(x / step), -half, half - 1) * step


def classify_party(
    ms_u: float, ms_i: float, levels: Levels, decision_stat: str
) -> Band | None:
    if decision_stat == "voltage":
        return classify_level(ms_u, levels.ms_u)
    if decision_stat == "current":
        return classify_level(ms_i, levels.ms_i)
    cu = classify_level(ms_u, levels.ms_u)
    ci = classify_level(ms_i, levels.ms_i)
    return cu if cu == ci else None  # disagreement -> erasure


def choice_bit(seed: int, tag: int, bit_index: int) -> int:
    """One fair coin from the party's choice stream for this clock period."""
    return int(rng.stream(seed, tag, bit_index).integers(0, 2))


def party_noise(
    cfg: NoiseConfig, seed: int, tag: int, bit_index: int, r: float, t_scale: float = 1.0
) -> np.ndarray:
    """One bit period of the party's generator noise for resistance `r`."""
    gen = rng.stream(seed, tag, bit_index)
    return synth_band_noise(
        gen,
        cfg.samples_per_bit,
        cfg.sample_rate_hz,
        cfg.four_kt * t_scale * r,
        cfg.bandwidth_hz,
    )


def injection_current(
    cfg: SessionConfig, seed: int, bit_index: int, amp: float, waveform: str, i_rms: float
) -> np.ndarray:
    """External current injected at the wire midpoint for one bit period.

    `amp` scales the target RMS relative to `i_rms`; the gaussian waveform
    is band-limited like the channel noise, drawn from the INJECT stream.
    """
    m = cfg.noise.samples_per_bit
    target_rms = amp * i_rms
    if waveform == "gaussian":
        gen = rng.stream(seed, rng.INJECT, bit_index)
        return synth_band_noise(
            gen,
            m,
            cfg.noise.sample_rate_hz,
            target_rms**2 / cfg.noise.bandwidth_hz,
            cfg.noise.bandwidth_hz,
        )
    if waveform == "sine":
        t = np.arange(m) * cfg.dt
        f = cfg.noise.bandwidth_hz / 2.0
        return target_rms * math.sqrt(2.0) * np.sin(2.0 * math.pi * f * t)
    raise ValueError(f"unknown injection waveform: {waveform!r}")


def _exact_level(levels: Levels, a: int, b: int) -> tuple[float, float]:
    idx = a + b  # 0 -> LL, 1 -> mixed, 2 -> HH
    return levels.ms_u[idx], levels.ms_i[idx]


def run_session(
    cfg: SessionConfig,
    master_seed: int | None = None,
    imperfections: Imperfections | None = None,
    observer=None,
) -> SessionResult:
    """Run a complete key-exchange session.

    Parameters
    ----------
    cfg : SessionConfig
    master_seed : int, optional
        Overrides ``cfg.noise.seed``.
    imperfections : Imperfections, optional
        Non-ideal knobs (temperature mismatch, resistor errors, injected
        current, measurement quantisation).
    observer : callable, optional
        Called with a :class:`BitRecord` after every clock period; sees
        exactly the public (broadcast) data.
    """
    seed = cfg.noise.seed if master_seed is None else master_seed
    imp = imperfections or Imperfections()
    levels = expected_levels(cfg.resistors, cfg.noise)
    scale_u, scale_i = alarm_scales(levels)
    warm = warmup_samples(cfg)
    m = cfg.noise.samples_per_bit
    dt = cfg.dt
    i_rms_mixed = scale_i

    alice_res = imp.alice_actual or cfg.resistors
    bob_res = imp.bob_actual or cfg.resistors

    alice_choices = np.zeros(cfg.n_bits, dtype=np.uint8)
    bob_choices = np.zeros(cfg.n_bits, dtype=np.uint8)
    sifted: list[int] = []
    key_a: list[int] = []
    key_b: list[int] = []
    alarms: list[AlarmEvent] = []

    for b in range(cfg.n_bits):
        a_bit = choice_bit(seed, rng.ALICE_COIN, b)
        b_bit = choice_bit(seed, rng.BOB_COIN, b)
        alice_choices[b] = a_bit
        bob_choices[b] = b_bit
        r_a = alice_res.r_high if a_bit else alice_res.r_low
        r_b = bob_res.r_high if b_bit else bob_res.r_low

        u_a = party_noise(cfg.noise, seed, rng.ALICE_NOISE, b, r_a, imp.alice_t_scale)
        u_b = party_noise(cfg.noise, seed, rng.BOB_NOISE, b, r_b, imp.bob_t_scale)

        i_inj = None
        if imp.injection_amp > 0.0:
            i_inj = injection_current(
                cfg, seed, b, imp.injection_amp, imp.injection_waveform, i_rms_mixed
            )

        ends = solve_nonideal(u_a, u_b, r_a, r_b, cfg.wire, dt, i_inject=i_inj)

        if imp.quantizer_bits is not None:
            bits_q = imp.quantizer_bits
            ends = TraceEnds(
                u_end_a=quantize(ends.u_end_a, bits_q, 5.0 * scale_u),
                u_end_b=quantize(ends.u_end_b, bits_q, 5.0 * scale_u),
                i_a=quantize(ends.i_a, bits_q, 5.0 * scale_i),
                i_b=quantize(ends.i_b, bits_q, 5.0 * scale_i),
                u_mid=ends.u_mid,
                dt=dt,
            )

        events = check_alarm(ends, cfg.wire, cfg.alarm_tol_rel, scale_u, scale_i, b)
        alarms.extend(events)

        ms_u_a = float(np.mean(ends.u_end_a[warm:] ** 2))
        ms_i_a = float(np.mean(ends.i_a[warm:] ** 2))
        ms_u_b = float(np.mean(ends.u_end_b[warm:] ** 2))
        ms_i_b = float(np.mean(ends.i_b[warm:] ** 2))
        if imp.oracle_exact_levels:
            ms_u_a, ms_i_a = _exact_level(levels, a_bit, b_bit)
            ms_u_b, ms_i_b = ms_u_a, ms_i_a

        class_a = classify_party(ms_u_a, ms_i_a, levels, cfg.decision_stat)
        class_b = classify_party(ms_u_b, ms_i_b, levels, cfg.decision_stat)
        is_sifted = class_a == Band.MIXED and class_b == Band.MIXED
        if is_sifted:
            sifted.append(b)
            key_a.append(1 - a_bit)
            key_b.append(b_bit)

        if observer is not None:
            observer(
                BitRecord(
                    bit_index=b,
                    ends=ends,
                    class_alice=class_a,
                    class_bob=class_b,
                    sifted=is_sifted,
                    alarm=events[0] if events else None,
                    warmup=warm,
                )
            )

    key_a_arr = np.array(key_a, dtype=np.uint8)
    key_b_arr = np.array(key_b, dtype=np.uint8)
    ber = float(np.mean(key_a_arr != key_b_arr)) if len(key_a_arr) else 0.0
    return SessionResult(
        alice_choices=alice_choices,
        bob_choices=bob_choices,
        sifted_indices=np.array(sifted, dtype=np.int64),
        shared_key_alice=key_a_arr,
        shared_key_bob=key_b_arr,
        ber=ber,
        sift_fraction=len(sifted) / cfg.n_bits,
        alarms=alarms,
    )


# --- JSON config mapping -------------------------------------------------

_NOISE_KEYS = {"t_eff", "bandwidth_hz", "sample_rate_hz", "samples_per_bit", "scale_mode", "seed"}
_RESISTOR_KEYS = {"r_low", "r_high"}
_WIRE_KEYS = {"r_wire", "c_cable", "killer_on"}
_SESSION_KEYS = {"n_bits", "noise", "resistors", "wire", "alarm_tol_rel", "decision_stat"}


def _strict(d: dict, allowed: set, what: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown {what} keys: {sorted(unknown)}")


def session_config_from_dict(d: dict) -> SessionConfig:
    """Build a SessionConfig from a JSON-style dict, rejecting unknown keys."""
    _strict(d, _SESSION_KEYS, "session config")
    noise_d = dict(d.get("noise", {}))
    _strict(noise_d, _NOISE_KEYS, "noise config")
    res_d = dict(d["resistors"])
    _strict(res_d, _RESISTOR_KEYS, "resistor")
    wire_d = dict(d.get("wire", {}))
    _strict(wire_d, _WIRE_KEYS, "wire model")
    return SessionConfig(
        n_bits=int(d["n_bits"]),
        noise=NoiseConfig(**noise_d),
        resistors=ResistorPair(**res_d),
        wire=WireModel(**wire_d),
        alarm_tol_rel=float(d.get("alarm_tol_rel", 1e-6)),
        decision_stat=str(d.get("decision_stat", "voltage")),
    )


def session_config_to_dict(cfg: SessionConfig) -> dict:
    return {
        "n_bits": cfg.n_bits,
        "noise": {
            "t_eff": cfg.noise.t_eff,
            "bandwidth_hz": cfg.noise.bandwidth_hz,
            "sample_rate_hz": cfg.noise.sample_rate_hz,
            "samples_per_bit": cfg.noise.samples_per_bit,
            "scale_mode": cfg.noise.scale_mode,
            "seed": cfg.noise.seed,
        },
        "resistors": {"r_low": cfg.resistors.r_low, "r_high": cfg.resistors.r_high},
        "wire": {
            "r_wire": cfg.wire.r_wire,
            "c_cable": cfg.wire.c_cable,
            "killer_on": cfg.wire.killer_on,
        },
        "alarm_tol_rel": cfg.alarm_tol_rel,
        "decision_stat": cfg.decision_stat,
    }


def with_sweep_value(cfg: SessionConfig, path: str, value) -> SessionConfig:
    """Return a copy of `cfg` with the dotted `path` replaced by `value`."""
    d = session_config_to_dict(cfg)
    parts = path.split(".")
    node = d
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ValueError(f"unknown sweep path: {path!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ValueError(f"unknown sweep path: {path!r}")
    node[parts[-1]] = value
    return session_config_from_dict(d)


def session_result_to_dict(result: SessionResult) -> dict:
    """JSON-ready view of a session; keys as hex bit strings plus lengths."""
    from .privacy import bits_to_hex

    n_key = int(len(result.shared_key_alice))
    return {
        "n_bits": int(len(result.alice_choices)),
        "sifted_indices": [int(i) for i in result.sifted_indices],
        "key_len": n_key,
        "shared_key_alice_hex": bits_to_hex(result.shared_key_alice) if n_key else "",
        "shared_key_bob_hex": bits_to_hex(result.shared_key_bob) if n_key else "",
        "ber": result.ber,
        "sift_fraction": result.sift_fraction,
        "alarms": [
            {"bit_index": a.bit_index, "sample_index": a.sample_index, "deviation": a.deviation}
            for a in result.alarms
        ],
    }
