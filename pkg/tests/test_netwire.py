import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kljn import netwire
from kljn.circuit import ResistorPair, WireModel
from kljn.noise import NoiseConfig
from kljn.protocol import run_session, SessionConfig

from conftest import AUTH_KEY

NOISE = NoiseConfig(bandwidth_hz=1000.0, sample_rate_hz=20000.0, samples_per_bit=512, seed=77)
RES = ResistorPair(1.0, 10.0)


def make_cfg(n_bits=100, noise=NOISE, wire=WireModel(), **kw):
    return SessionConfig(n_bits=n_bits, noise=noise, resistors=RES, wire=wire, **kw)


class TestFrameCodec:
    @given(
        role=st.integers(0, 3),
        session_id=st.integers(0, 2**64 - 1),
        bit=st.integers(0, 2**32 - 1),
        block=st.integers(0, 2**16 - 1),
        n=st.integers(0, 64),
    )
    @settings(max_examples=50, deadline=None)
    def test_sample_frame_round_trip(self, role, session_id, bit, block, n):
        payload = np.arange(n, dtype=float) * 0.25 - 3.0
        buf = netwire.pack_sample_frame(role, session_id, bit, block, payload)
        frame = netwire.parse_sample_frame(buf)
        assert frame.role == role
        assert frame.session_id == session_id
        assert frame.bit_index == bit
        assert frame.block_index == block
        assert np.array_equal(frame.payload, payload)

    def test_layout_is_bit_exact(self):
        buf = netwire.pack_sample_frame(1, 0x1122334455667788, 7, 3, [1.0])
        assert buf[:4] == b"KLJN"
        assert buf[4] == 1  # version
        assert buf[5] == 1  # role
        assert buf[6:14] == (0x1122334455667788).to_bytes(8, "little")
        assert buf[14:18] == (7).to_bytes(4, "little")
        assert buf[18:20] == (3).to_bytes(2, "little")
        assert buf[20:22] == (1).to_bytes(2, "little")
        assert len(buf) == 22 + 8 + 4

    def test_crc_detects_corruption(self):
        buf = bytearray(netwire.pack_sample_frame(0, 1, 2, 3, [4.0, 5.0]))
        buf[25] ^= 0x01
        with pytest.raises(netwire.FrameError, match="bad crc"):
            netwire.parse_sample_frame(bytes(buf))

    def test_payload_cap(self):
        with pytest.raises(ValueError):
            netwire.pack_sample_frame(0, 0, 0, 0, np.zeros(1025))

    @given(n=st.integers(0, 32))
    @settings(max_examples=25, deadline=None)
    def test_compare_frame_round_trip(self, n):
        u = np.linspace(-1, 1, n) if n else np.array([])
        i = -u
        buf = netwire.pack_compare_frame(0, 9, 4, 2, u, i, AUTH_KEY)
        frame = netwire.parse_compare_frame(buf, AUTH_KEY)
        assert np.array_equal(frame.u, u)
        assert np.array_equal(frame.i, i)

    def test_compare_tag_rejects_wrong_key(self):
        buf = netwire.pack_compare_frame(0, 9, 4, 2, [1.0], [2.0], AUTH_KEY)
        with pytest.raises(netwire.AuthError):
            netwire.parse_compare_frame(buf, b"x" * 32)

    def test_compare_tag_rejects_tampering(self):
        buf = bytearray(netwire.pack_compare_frame(0, 9, 4, 2, [1.0], [2.0], AUTH_KEY))
        buf[24] ^= 0x80
        with pytest.raises(netwire.AuthError):
            netwire.parse_compare_frame(bytes(buf), AUTH_KEY)

    def test_parse_hostport(self):
        assert netwire.parse_hostport("localhost:99") == ("localhost", 99)
        assert netwire.parse_hostport(":99") == ("127.0.0.1", 99)
        with pytest.raises(ValueError):
            netwire.parse_hostport("nope")


class TestLoopbackSession:
    def test_ideal_wire_matches_in_process(self, net_session):
        cfg = make_cfg(100)
        res = net_session(cfg, seed=77)
        ref = run_session(cfg, master_seed=77)
        alice, bob = res["alice"], res["bob"]
        assert not alice.aborted and not bob.aborted
        assert np.array_equal(alice.sifted_indices, ref.sifted_indices)
        assert np.array_equal(alice.shared_key, ref.shared_key_alice)
        assert np.array_equal(bob.shared_key, ref.shared_key_bob)

    def test_nonideal_wire_matches_in_process(self, net_session):
        cfg = make_cfg(60, wire=WireModel(r_wire=0.1))
        res = net_session(cfg, seed=99)
        ref = run_session(cfg, master_seed=99)
        assert np.array_equal(res["alice"].shared_key, ref.shared_key_alice)
        assert np.array_equal(res["bob"].shared_key, ref.shared_key_bob)
        assert res["alice"].alarms == [] and res["bob"].alarms == []

    def test_honest_session_has_agreeing_keys_and_no_alarms(self, net_session):
        # M = 4096 keeps the per-period misclassification rate ~1e-5, so
        # a short honest run agrees bit-for-bit.
        noise = NoiseConfig(
            bandwidth_hz=1000.0, sample_rate_hz=20000.0, samples_per_bit=4096, seed=5
        )
        cfg = make_cfg(40, noise=noise)
        res = net_session(cfg, seed=5)
        a, b = res["alice"], res["bob"]
        assert np.array_equal(a.shared_key, b.shared_key)
        assert a.alarms == [] and b.alarms == []


class TestTransportFaults:
    def test_corrupted_frames_are_retransmitted(self, net_session):
        cfg = make_cfg(100)
        res = net_session(cfg, seed=77, corrupt_every=50)
        ref = run_session(cfg, master_seed=77)
        alice = res["alice"]
        assert not alice.aborted
        assert np.array_equal(alice.shared_key, ref.shared_key_alice)

    def test_liveness_under_one_percent_corruption(self, net_session):
        # 1000 bits in lockstep with every 100th frame corrupted.
        noise = NoiseConfig(
            bandwidth_hz=1000.0, sample_rate_hz=20000.0, samples_per_bit=256, seed=13
        )
        cfg = make_cfg(1000, noise=noise)
        res = net_session(cfg, seed=13, corrupt_every=100)
        ref = run_session(cfg, master_seed=13)
        assert not res["alice"].aborted and not res["bob"].aborted
        assert np.array_equal(res["alice"].shared_key, ref.shared_key_alice)

    def test_wrong_auth_key_aborts_immediately(self, net_session):
        cfg = make_cfg(50)
        res = net_session(cfg, seed=3, bob_key=b"not-the-real-session-key-at-all!")
        assert res["alice"].aborted and res["bob"].aborted
        assert "authentication" in res["alice"].abort_reason
        assert len(res["alice"].sifted_indices) == 0


class TestDefense:
    def test_mitm_splitter_alarms_before_first_sifted_bit(self, net_session):
        cfg = make_cfg(50)
        res = net_session(cfg, seed=42, splitter=True)
        alice, bob = res["alice"], res["bob"]
        assert alice.aborted and bob.aborted
        assert alice.alarms[0].bit_index == 0
        assert len(alice.sifted_indices) == 0
        assert len(bob.sifted_indices) == 0

    def test_networked_injection_detected_within_one_bit(self, net_session):
        cfg = make_cfg(20)
        res = net_session(cfg, seed=7, eve_mode="inject", eve_amplitude=0.1)
        alice = res["alice"]
        assert alice.aborted
        assert alice.alarms[0].bit_index == 0
        assert alice.alarms[0].sample_index < cfg.noise.samples_per_bit

    def test_passive_tap_does_not_disturb(self, net_session):
        cfg = make_cfg(30)
        res = net_session(cfg, seed=21, eve_mode="tap")
        ref = run_session(cfg, master_seed=21)
        assert not res["alice"].aborted
        assert np.array_equal(res["alice"].shared_key, ref.shared_key_alice)
        assert len(res["eve"]) == cfg.n_bits
