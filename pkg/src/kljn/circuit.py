"""Kirchhoff-loop solvers for the two-resistor noise exchange core.

The loop is: source u_a -- r_a -- node A -- wire -- node B -- r_b --
source u_b, with both sources referenced to ground.  The non-ideal wire
model is a series resistance split in half around a single lumped
capacitance to ground at the midpoint; a driven-shield ("capacitor
killer") flag forces the effective capacitance to zero.

Sign conventions, used everywhere in this package:

* ``i_ch`` (ideal wire) is positive flowing from the A side toward B.
* End currents ``i_a`` and ``i_b`` are positive flowing from each party
  *into* the wire, so with an ideal wire ``i_b == -i_a`` sample-wise.

The capacitor state is integrated with the trapezoidal rule (A-stable,
second order).  Each call starts from zero capacitor voltage; callers that
compute statistics discard a warm-up prefix of five time constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal


@dataclass(frozen=True)
class ResistorPair:
    """The publicly agreed bit resistors, r_low for 0 and r_high for 1."""

    r_low: float
    r_high: float

    def __post_init__(self):
        if not 0 < self.r_low < self.r_high:
            raise ValueError("require 0 < r_low < r_high")


@dataclass(frozen=True)
class WireModel:
    """Series wire resistance plus lumped midpoint cable capacitance."""

    r_wire: float = 0.0
    c_cable: float = 0.0
    killer_on: bool = False

    def __post_init__(self):
        if self.r_wire < 0:
            raise ValueError("r_wire must be >= 0")
        if self.c_cable < 0:
            raise ValueError("c_cable must be >= 0")

    @property
    def c_eff(self) -> float:
        return 0.0 if self.killer_on else self.c_cable

    @property
    def is_ideal(self) -> bool:
        return self.r_wire == 0.0 and self.c_eff == 0.0


@dataclass(frozen=True)
class Trace:
    """Channel voltage and current of an ideal-wire bit period."""

    u_ch: np.ndarray
    i_ch: np.ndarray
    dt: float

    def __post_init__(self):
        if len(self.u_ch) != len(self.i_ch):
            raise ValueError("u_ch and i_ch must have equal length")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")


@dataclass(frozen=True)
class TraceEnds:
    """Per-end measurements of a (possibly non-ideal) bit period."""

    u_end_a: np.ndarray
    u_end_b: np.ndarray
    i_a: np.ndarray
    i_b: np.ndarray
    u_mid: np.ndarray
    dt: float

    def __post_init__(self):
        n = len(self.u_end_a)
        for arr in (self.u_end_b, self.i_a, self.i_b, self.u_mid):
            if len(arr) != n:
                raise ValueError("all end traces must have equal length")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")


@dataclass(frozen=True)
class PowerReport:
    """Mean directed powers between the two noise generators."""

    p_a_to_b: float
    p_b_to_a: float

    def __post_init__(self):
        if self.p_a_to_b < 0 or self.p_b_to_a < 0:
            raise ValueError("powers must be >= 0")


def _as_samples(u_a, u_b) -> tuple[np.ndarray, np.ndarray]:
    u_a = np.asarray(u_a, dtype=float)
    u_b = np.asarray(u_b, dtype=float)
    if u_a.shape != u_b.shape or u_a.ndim != 1:
        raise ValueError("u_a and u_b must be 1-d arrays of equal length")
    return u_a, u_b


def solve_ideal(u_a, u_b, r_a: float, r_b: float, dt: float = 1.0) -> Trace:
    """Solve the loop with an ideal (zero-impedance) wire.

    ``i_ch = (u_a - u_b) / (r_a + r_b)`` and
    ``u_ch = (u_a*r_b + u_b*r_a) / (r_a + r_b)``, sample-wise.
    """
    u_a, u_b = _as_samples(u_a, u_b)
    total = r_a + r_b
    if total <= 0:
        raise ValueError("r_a + r_b must be > 0")
    i_ch = (u_a - u_b) / total
    u_ch = (u_a * r_b + u_b * r_a) / total
    return Trace(u_ch=u_ch, i_ch=i_ch, dt=dt)


def solve_nonideal(
    u_a,
    u_b,
    r_a: float,
    r_b: float,
    wire: WireModel,
    dt: float,
    i_inject=None,
) -> TraceEnds:
    """Solve the loop with series wire resistance and midpoint capacitance.

    With zero effective capacitance the solution is the exact resistive
    divider; with ``r_wire == 0`` as well it reduces sample-wise to
    :func:`solve_ideal`.  `i_inject`, when given, is an external current
    (positive into the midpoint node), modelling an invasive attacker.

    For a non-zero capacitance the accuracy guard ``dt < R_th * c_eff``
    must hold, where R_th is the capacitor's Thevenin resistance.
    """
    u_a, u_b = _as_samples(u_a, u_b)
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if wire.r_wire / 2 + min(r_a, r_b) <= 0:
        raise ValueError("each half-loop must have positive resistance")

    c = wire.c_eff
    rw = wire.r_wire
    r_half_a = r_a + rw / 2.0
    r_half_b = r_b + rw / 2.0
    r_th = r_half_a * r_half_b / (r_half_a + r_half_b)

    if i_inject is not None:
        i_inject = np.asarray(i_inject, dtype=float)
        if i_inject.shape != u_a.shape:
            raise ValueError("i_inject must match the source sample shape")

    if c == 0.0:
        if i_inject is None:
            if rw == 0.0:
                # Degenerate delegation keeps this path bit-identical to
                # the ideal solver.
                tr = solve_ideal(u_a, u_b, r_a, r_b, dt)
                return TraceEnds(
                    u_end_a=tr.u_ch,
                    u_end_b=tr.u_ch,
                    i_a=tr.i_ch,
                    i_b=-tr.i_ch,
                    u_mid=tr.u_ch,
                    dt=dt,
                )
            i = (u_a - u_b) / (r_a + r_b + rw)
            u_end_a = u_a - i * r_a
            u_end_b = u_b + i * r_b
            u_mid = u_end_a - i * (rw / 2.0)
            return TraceEnds(
                u_end_a=u_end_a, u_end_b=u_end_b, i_a=i, i_b=-i, u_mid=u_mid, dt=dt
            )
        v = r_th * (u_a / r_half_a + u_b / r_half_b + i_inject)
    else:
        tau = r_th * c
        if dt >= tau:
            raise ValueError(
                f"dt={dt:g} violates the accuracy guard dt < R_th*c_eff={tau:g}"
            )
        u_eq = r_th * (u_a / r_half_a + u_b / r_half_b)
        if i_inject is not None:
            u_eq = u_eq + r_th * i_inject
        # Trapezoidal step for v' = (u_eq - v)/tau:
        #   v[k] = a*v[k-1] + b*(u_eq[k-1] + u_eq[k]),  v[0] = 0.
        alpha = dt / (2.0 * tau)
        a = (1.0 - alpha) / (1.0 + alpha)
        b = alpha / (1.0 + alpha)
        zi = np.array([-b * u_eq[0]])
        v, _ = signal.lfilter([b, b], [1.0, -a], u_eq, zi=zi)

    i_a = (u_a - v) / r_half_a
    i_b = (u_b - v) / r_half_b
    u_end_a = u_a - i_a * r_a
    u_end_b = u_b - i_b * r_b
    return TraceEnds(u_end_a=u_end_a, u_end_b=u_end_b, i_a=i_a, i_b=i_b, u_mid=v, dt=dt)


def power_flows(u_a, u_b, r_a: float, r_b: float) -> PowerReport:
    """Directed generator-to-resistor powers via superposition.

    The loop is solved twice, each time with only one source active.
    ``p_a_to_b`` is the mean power A's generator dissipates in r_b, and
    vice versa; for Johnson inputs both estimate
    ``4kT_eff * B * r_a * r_b / (r_a + r_b)^2``.
    """
    u_a, u_b = _as_samples(u_a, u_b)
    zero = np.zeros_like(u_a)
    only_a = solve_ideal(u_a, zero, r_a, r_b)
    only_b = solve_ideal(zero, u_b, r_a, r_b)
    p_a_to_b = float(np.mean(only_a.i_ch**2) * r_b)
    p_b_to_a = float(np.mean(only_b.i_ch**2) * r_a)
    return PowerReport(p_a_to_b=p_a_to_b, p_b_to_a=p_b_to_a)
