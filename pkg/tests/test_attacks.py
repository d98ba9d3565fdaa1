import math

import numpy as np
import pytest

from kljn import rng
from kljn.attacks import (
    AttackConfig,
    AttackReport,
    binary_entropy,
    eve_cross_correlation,
    eve_passive_ms,
    eve_resistor_inaccuracy,
    eve_temperature_mismatch,
    eve_wire_resistance,
    mixed_levels_resistor,
    mixed_levels_temperature,
    run_attack,
    summarize,
    wilson_halfwidth,
)
from kljn.circuit import ResistorPair, Trace, WireModel, solve_ideal, solve_nonideal
from kljn.noise import NoiseConfig
from kljn.protocol import BitRecord, SessionConfig, party_noise

NOISE_FAST = NoiseConfig(bandwidth_hz=1000.0, sample_rate_hz=20000.0, samples_per_bit=1024, seed=17)
RES = ResistorPair(1.0, 10.0)


def make_cfg(n_bits, noise=NOISE_FAST, resistors=RES, **kw):
    return SessionConfig(n_bits=n_bits, noise=noise, resistors=resistors, **kw)


def run_mixed_bits(noise, alice_res, bob_res, n_bits, seed, decide):
    """Forced-mixed Monte Carlo: Eve's conditional accuracy on sifted bits.

    Per bit, Alice's orientation is a fair coin and Bob takes the opposite
    resistor; `decide(ms_u)` maps the channel-voltage mean square to a
    guess of Alice's choice.  LL/HH periods carry no key bit, so this is
    the attack-relevant conditional experiment.
    """
    guesses = np.zeros(n_bits, dtype=np.uint8)
    truth = np.zeros(n_bits, dtype=np.uint8)
    for b in range(n_bits):
        a = int(rng.stream(seed, rng.ALICE_COIN, b).integers(0, 2))
        truth[b] = a
        r_a = alice_res.r_high if a else alice_res.r_low
        r_b = bob_res.r_low if a else bob_res.r_high
        u_a = party_noise(noise, seed, rng.ALICE_NOISE, b, r_a)
        u_b = party_noise(noise, seed, rng.BOB_NOISE, b, r_b)
        tr = solve_ideal(u_a, u_b, r_a, r_b)
        guesses[b] = decide(float(np.mean(tr.u_ch**2)))
    return summarize(guesses, truth)


class TestSummarize:
    def test_all_correct(self):
        rep = summarize(np.ones(100), np.ones(100))
        assert rep.success_rate == 1.0
        assert rep.leak_fraction == 1.0
        assert rep.leak_mutual_info == 1.0

    def test_exact_half(self):
        g = np.array([0, 1] * 50)
        t = np.array([0] * 100)
        rep = summarize(g, t)
        assert rep.success_rate == 0.5
        assert rep.leak_fraction == 0.0
        assert rep.leak_mutual_info == 0.0

    def test_three_quarters_mutual_info(self):
        n = 10_000
        t = np.zeros(n, dtype=np.uint8)
        g = np.zeros(n, dtype=np.uint8)
        g[: n // 4] = 1  # exactly 25% wrong
        rep = summarize(g, t)
        assert rep.success_rate == 0.75
        assert rep.leak_fraction == 0.5
        assert rep.leak_mutual_info == pytest.approx(1.0 - binary_entropy(0.75))
        assert rep.leak_mutual_info == pytest.approx(0.18872, abs=1e-4)

    def test_below_half_leak_clamps_to_zero(self):
        rep = summarize(np.zeros(100), np.ones(100))
        assert rep.leak_fraction == 0.0
        assert rep.leak_mutual_info == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize(np.array([]), np.array([]))

    def test_wilson_interval(self):
        # Against the closed form at p=0.5, n=100: ~0.096.
        assert wilson_halfwidth(0.5, 100) == pytest.approx(0.0958, abs=1e-3)
        assert wilson_halfwidth(0.5, 10_000) == pytest.approx(0.0098, abs=1e-3)


class TestCrossCorrelation:
    def test_antisymmetric_oracle_fixes_sign(self):
        # Two-sample loop, only A's source active: mean(u*i) = c^2/4 > 0,
        # i.e. positive statistic = net power flowing toward B.
        tr = solve_ideal(np.array([2.0, -2.0]), np.zeros(2), 1.0, 1.0)
        guess, stat = eve_cross_correlation(tr)
        assert stat == pytest.approx(1.0)
        assert guess == 1  # documented convention: positive -> HL

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            eve_cross_correlation(Trace(u_ch=np.array([]), i_ch=np.array([]), dt=1.0))

    def test_ideal_system_is_null(self):
        cfg = make_cfg(4000)
        rep = run_attack(cfg, AttackConfig(kind="cross_correlation"), seed=11)
        assert abs(rep.success_rate - 0.5) < rep.ci95

    def test_passive_ms_is_null(self):
        cfg = make_cfg(4000)
        rep = run_attack(cfg, AttackConfig(kind="passive_ms"), seed=11)
        assert abs(rep.success_rate - 0.5) < rep.ci95

    def test_passive_ms_statistic(self):
        tr = solve_ideal(np.full(4, 2.0), np.zeros(4), 1.0, 1.0)
        guess, stat = eve_passive_ms(tr, mixed_level_u=0.5)
        assert stat == pytest.approx(0.5)
        assert guess == 1


class TestWireResistance:
    def test_closed_form_oracle_and_sign(self):
        # Superposition variances at the two ends:
        #   MS(u_end_a) = kb * r_a * ((r_b + rw)^2 + r_a*r_b) / S^2
        # so MS(endA) - MS(endB) = kb * rw^2 * (r_a - r_b) / S^2: the end
        # with the larger resistor shows the larger mean square.
        kb = 1000.0
        for r_a, r_b, rw in [(1.0, 10.0, 1.0), (10.0, 1.0, 0.5), (2.0, 3.0, 0.2)]:
            s = r_a + r_b + rw
            ms_a = kb * r_a * ((r_b + rw) ** 2 + r_a * r_b) / s**2
            ms_b = kb * r_b * ((r_a + rw) ** 2 + r_a * r_b) / s**2
            ident = kb * rw**2 * (r_a - r_b) / s**2
            assert ms_a - ms_b == pytest.approx(ident)
            assert (ms_a > ms_b) == (r_a > r_b)

    def test_monte_carlo_sign_matches_oracle(self):
        # Brute-force confirmation that HL (Alice high) pushes the A-end
        # mean square up, so stat > 0 -> HL is the calibrated mapping.
        noise = NOISE_FAST
        wire = WireModel(r_wire=2.0)
        diffs = []
        for b in range(400):
            u_a = party_noise(noise, 3, rng.ALICE_NOISE, b, 10.0)
            u_b = party_noise(noise, 3, rng.BOB_NOISE, b, 1.0)
            ends = solve_nonideal(u_a, u_b, 10.0, 1.0, wire, 5e-5)
            guess, stat = eve_wire_resistance(ends)
            diffs.append(stat)
        assert np.mean(diffs) > 0  # Alice held r_high in every period

    def test_zero_wire_resistance_is_null(self):
        cfg = make_cfg(4000)
        rep = run_attack(cfg, AttackConfig(kind="wire_resistance"), seed=19)
        assert abs(rep.success_rate - 0.5) < rep.ci95

    def test_leak_grows_with_wire_resistance(self):
        # Smaller counterpart of the acceptance sweep; frozen seed.
        noise = NoiseConfig(
            bandwidth_hz=1000.0, sample_rate_hz=20000.0, samples_per_bit=4096, seed=23
        )
        reports = []
        for frac in (0.01, 0.1):
            cfg = make_cfg(4000, noise=noise, wire=WireModel(r_wire=frac * RES.r_low))
            reports.append(run_attack(cfg, AttackConfig(kind="wire_resistance"), seed=23))
        assert reports[0].leak_fraction < reports[1].leak_fraction
        assert reports[1].success_rate - 0.5 > reports[1].ci95


class TestTemperatureMismatch:
    def test_matched_temperatures_are_null(self):
        cfg = make_cfg(4000)
        rep = run_attack(
            cfg, AttackConfig(kind="temperature_mismatch", params={"temperature_ratio": 1.0}),
            seed=29,
        )
        assert abs(rep.success_rate - 0.5) < rep.ci95

    def test_gross_mismatch_leaks(self):
        # rho = 2: calibrated once at this seed to p ~ 0.68.
        cfg = make_cfg(3000)
        rep = run_attack(
            cfg, AttackConfig(kind="temperature_mismatch", params={"temperature_ratio": 2.0}),
            seed=29,
        )
        assert rep.success_rate > 0.6

    def test_trimmed_temperature_indistinguishable(self):
        # rho = 1 + 1e-4 (12-bit DAC scale): invisible at 1e4 sifted bits.
        rho = 1.0 + 1e-4
        lh, hl = mixed_levels_temperature(RES, NOISE_FAST, rho, 1.0)

        def decide(ms):
            return eve_temperature_mismatch(ms, (lh, hl))[0]

        rep = run_mixed_bits(NOISE_FAST, RES, RES, 10_000, 37, decide)
        assert abs(rep.success_rate - 0.5) < 2 * rep.ci95

    def test_asymmetric_levels_closed_form(self):
        lh, hl = mixed_levels_temperature(ResistorPair(2.0, 3.0), NOISE_FAST, 2.0, 1.0)
        # LH: T-scaled source in r_low: (2*2*9 + 1*3*4)/25 * kb
        kb = 1000.0
        assert lh == pytest.approx(kb * (2 * 2 * 9 + 3 * 4) / 25.0)
        assert hl == pytest.approx(kb * (2 * 3 * 4 + 2 * 9) / 25.0)
        assert lh > hl  # the hotter side holding r_low boosts the LH level


class TestResistorInaccuracy:
    def test_zero_error_is_null(self):
        cfg = make_cfg(4000)
        rep = run_attack(
            cfg, AttackConfig(kind="resistor_inaccuracy", params={"resistor_error": 0.0}),
            seed=41,
        )
        assert abs(rep.success_rate - 0.5) < rep.ci95

    def test_one_percent_error_below_statistical_floor(self):
        # The paper-scale key length: at 74497 bits the sqrt-n statistical
        # floor (~270 bits) dwarfs the true leak; measured leak_fraction
        # 0.0005 << floor 0.0147 at this seed.
        noise = NoiseConfig(
            bandwidth_hz=1000.0, sample_rate_hz=20000.0, samples_per_bit=1024, seed=21
        )
        nominal = ResistorPair(2.0, 3.0)
        delta = 0.01
        actual = ResistorPair(nominal.r_low * (1 + delta), nominal.r_high * (1 + delta))
        lh, hl = mixed_levels_resistor(noise, actual, nominal)

        def decide(ms):
            return eve_resistor_inaccuracy(ms, (lh, hl))[0]

        n = 74497
        rep = run_mixed_bits(noise, actual, nominal, n, 21, decide)
        floor = 4.0 / math.sqrt(n)
        assert rep.leak_fraction < floor

    def test_five_percent_error_is_measurable(self):
        noise = NoiseConfig(
            bandwidth_hz=1000.0, sample_rate_hz=20000.0, samples_per_bit=512, seed=43
        )
        nominal = ResistorPair(2.0, 3.0)
        actual = ResistorPair(nominal.r_low * 1.05, nominal.r_high * 1.05)
        lh, hl = mixed_levels_resistor(noise, actual, nominal)

        def decide(ms):
            return eve_resistor_inaccuracy(ms, (lh, hl))[0]

        rep = run_mixed_bits(noise, actual, nominal, 100_000, 43, decide)
        assert rep.success_rate - 0.5 > 2 * rep.ci95

    def test_error_bound_enforced(self):
        with pytest.raises(ValueError):
            AttackConfig(kind="resistor_inaccuracy", params={"resistor_error": 0.06})


class TestInvasiveInjection:
    def test_zero_amplitude_is_silent_null(self):
        cfg = make_cfg(600)
        rep = run_attack(
            cfg, AttackConfig(kind="invasive_injection", params={"amplitude_fraction": 0.0}),
            seed=47,
        )
        assert rep.alarms_triggered == 0
        assert abs(rep.success_rate - 0.5) < 2 * rep.ci95

    def test_ten_percent_rms_always_caught_within_bit(self):
        cfg = make_cfg(300)
        rep = run_attack(
            cfg, AttackConfig(kind="invasive_injection", params={"amplitude_fraction": 0.1}),
            seed=47,
        )
        assert rep.alarms_triggered == cfg.n_bits
        assert max(rep.alarm_latencies) < cfg.noise.samples_per_bit
        # Pre-alarm samples buy Eve essentially nothing.
        assert abs(rep.success_rate - 0.5) < 3 * rep.ci95

    def test_alarm_rate_transitions_across_tolerance(self):
        # Sine injection trips the per-sample check iff its peak exceeds
        # the tolerance: amp*sqrt(2) > tol, a step at amp = tol/sqrt(2).
        tol = 1e-6
        rates = []
        for amp_rel in (0.2, 0.5, 1.0, 2.0):
            cfg = make_cfg(50, alarm_tol_rel=tol)
            rep = run_attack(
                cfg,
                AttackConfig(
                    kind="invasive_injection",
                    params={"amplitude_fraction": amp_rel * tol, "waveform": "sine"},
                ),
                seed=53,
            )
            rates.append(rep.alarms_triggered / cfg.n_bits)
        assert rates[0] == 0.0 and rates[1] == 0.0
        assert rates[2] == 1.0 and rates[3] == 1.0


class TestMitmSplitter:
    @pytest.mark.parametrize("seed", range(5))
    def test_active_splitter_never_yields_a_bit(self, seed):
        cfg = make_cfg(50)
        rep = run_attack(cfg, AttackConfig(kind="mitm_splitter", params={"mode": "active"}), seed=seed)
        assert rep.bits_extracted_before_alarm == 0
        assert rep.alarms_triggered == cfg.n_bits

    def test_mimic_mode_is_the_control(self):
        cfg = make_cfg(2000)
        rep = run_attack(cfg, AttackConfig(kind="mitm_splitter", params={"mode": "mimic"}), seed=59)
        assert rep.alarms_triggered == 0
        assert abs(rep.success_rate - 0.5) < 2 * rep.ci95

    def test_passive_mode_degenerates_to_no_attack(self):
        cfg = make_cfg(1000)
        rep = run_attack(cfg, AttackConfig(kind="mitm_splitter", params={"mode": "passive"}), seed=61)
        assert rep.alarms_triggered == 0
        assert rep.bits_extracted_before_alarm == 0


class TestAccounting:
    def test_bit_record_exposes_no_private_state(self):
        # The observer contract: broadcast data only, never choices.
        fields = set(BitRecord.__dataclass_fields__)
        assert "ends" in fields
        assert not any("choice" in f for f in fields)

    def test_quantizer_knob_runs(self):
        cfg = make_cfg(500, alarm_tol_rel=0.05)
        rep = run_attack(
            cfg,
            AttackConfig(kind="cross_correlation", params={"quantizer_bits": 12}),
            seed=67,
        )
        assert rep.n_trials > 0

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            AttackConfig(kind="psychic")
        with pytest.raises(ValueError):
            AttackConfig(kind="passive_ms", tap_point="under_the_desk")

    def test_report_invariants(self):
        rep = AttackReport(
            n_trials=10, success_rate=0.5, ci95=0.1, leak_fraction=0.0, leak_mutual_info=0.0
        )
        assert rep.leak_fraction == 0.0 and rep.leak_mutual_info == 0.0
