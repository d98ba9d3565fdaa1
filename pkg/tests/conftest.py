import queue
import threading

import pytest

from kljn import netwire

AUTH_KEY = b"0123456789abcdef0123456789abcdef"


def run_networked_session(
    cfg,
    seed,
    corrupt_every=None,
    splitter=False,
    bob_key=None,
    eve_mode=None,
    eve_amplitude=0.0,
    timeout=10.0,
):
    """Run channel + parties (+ optional Eve) on loopback threads."""
    chan_port_q: queue.Queue = queue.Queue()
    comp_port_q: queue.Queue = queue.Queue()
    results: dict = {}
    errors: list = []

    def guard(name, fn):
        def wrapped(*args):
            try:
                results[name] = fn(*args)
            except Exception as e:  # surfaced via the errors list
                errors.append((name, e))

        return wrapped

    def channel():
        if splitter:
            return netwire.run_splitter(
                ("127.0.0.1", 0), cfg, master_seed=seed, timeout=timeout,
                ready_cb=chan_port_q.put,
            )
        return netwire.run_channel(
            ("127.0.0.1", 0), cfg, eve_mode=eve_mode, timeout=timeout,
            ready_cb=chan_port_q.put,
        )

    def alice(chan_port):
        return netwire.run_party(
            netwire.ROLE_ALICE,
            ("127.0.0.1", chan_port),
            ("127.0.0.1", 0),
            cfg,
            AUTH_KEY,
            master_seed=seed,
            timeout=timeout,
            compare_ready_cb=comp_port_q.put,
            corrupt_every=corrupt_every,
        )

    def bob(chan_port):
        comp_port = comp_port_q.get(timeout=timeout)
        return netwire.run_party(
            netwire.ROLE_BOB,
            ("127.0.0.1", chan_port),
            ("127.0.0.1", comp_port),
            cfg,
            bob_key if bob_key is not None else AUTH_KEY,
            master_seed=seed,
            timeout=timeout,
        )

    def eve(chan_port):
        return netwire.run_eve(
            ("127.0.0.1", chan_port),
            cfg,
            mode=eve_mode,
            amplitude=eve_amplitude,
            master_seed=seed,
            timeout=timeout,
        )

    t_chan = threading.Thread(target=guard("channel", channel), daemon=True)
    t_chan.start()
    chan_port = chan_port_q.get(timeout=timeout)
    threads = [
        threading.Thread(target=guard("alice", alice), args=(chan_port,), daemon=True),
        threading.Thread(target=guard("bob", bob), args=(chan_port,), daemon=True),
    ]
    if eve_mode is not None:
        threads.append(
            threading.Thread(target=guard("eve", eve), args=(chan_port,), daemon=True)
        )
    for t in threads:
        t.start()
    for t in [t_chan, *threads]:
        t.join(timeout=120)
        if t.is_alive():
            raise TimeoutError("networked session did not finish")
    if errors:
        name, exc = errors[0]
        raise AssertionError(f"{name} thread failed: {exc!r}") from exc
    return results


@pytest.fixture
def net_session():
    return run_networked_session
