"""Phasor-domain fault-ride-through models for converter-interfaced units.

Grid-following units use a current saturation method (the conventional
sum-of-magnitudes limiter, kept as a baseline, and an improved limiter that
lets the largest phase current reach the device ceiling).  Grid-forming units
use an adaptive virtual impedance whose resistance is solved in closed form so
that the positive-sequence converter current sits exactly on its ceiling.

Everything here works in system per-unit.  Limits given on the unit rating are
converted once in :class:`IbrContext`.  Currents are *injected* converter
currents; the optional filter is a shunt branch at the LV terminal, so the LV
injection is ``I - V / Z_filter``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .netmodel import IbrUnit, ibr_scale
from .seq import phase_current_magnitudes

__all__ = [
    "InfeasibleLimit",
    "CsmState",
    "VicState",
    "IbrOperatingPoint",
    "IbrContext",
    "SequencePort",
    "csm_conventional",
    "csm_improved",
    "i1_max_from_i2",
    "vic_virtual_resistance",
    "vic_negative_sequence",
    "vic_step",
    "gfl_step",
    "reactive_power",
    "solve_local",
    "solve_ports",
]

#: Below this positive-sequence voltage the synchronizing angle is frozen.
PLL_FREEZE = 0.2


class InfeasibleLimit(ArithmeticError):
    """No non-negative virtual resistance brings the current onto its ceiling."""


@dataclass(frozen=True)
class CsmState:
    i1_p: float
    i1_r: float
    i2_r: float
    i_lim: float
    i1_max: float
    i2_max: float
    delta_i1: float
    delta_i2: float
    active: bool = False
    method: str = "improved"


@dataclass(frozen=True)
class VicState:
    r_vi: float = 0.0
    x_vi: float = 0.0
    phi: float = 3.0
    sigma: float = 0.0
    i_th: float = 0.0
    v_drop: float = 0.0
    e1: complex = 0j
    z_sum: complex = 0j
    active: bool = False
    i1_max: float = 0.0
    i2_max: float = 0.0
    infeasible: bool = False
    numerator: complex = 0j


@dataclass(frozen=True)
class IbrOperatingPoint:
    """State of one unit.  ``i1``/``i2`` are converter currents, ``i1_lv`` and
    ``i2_lv`` the LV-terminal injections after the filter branch.  ``v1_lv``
    and ``v2_lv`` are the terminal voltages the controller acted on."""

    ibr_id: str
    v1_lv: complex
    v2_lv: complex
    i1_lv: complex
    i2_lv: complex
    i1: complex
    i2: complex
    e1: complex = 0j
    q: float = 0.0
    theta: float = 0.0
    limiter: CsmState | VicState | None = None

    def phase_currents(self) -> np.ndarray:
        """Converter phase-current magnitudes (no zero sequence)."""
        return phase_current_magnitudes(self.i1, self.i2)


@dataclass(frozen=True)
class SequencePort:
    """Linear response of the network at one unit terminal:
    ``[V1, V2] = vth + z @ [I1, I2]`` with converter currents ``I``."""

    vth: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class IbrContext:
    """Per-unit controller constants and pre-fault references (system pu)."""

    unit: IbrUnit
    scale: float
    i_max: float
    k: float
    yf: complex
    kappa: float
    v1_pre: complex = 1.0 + 0j
    i1_pre: complex = 0j
    e1_pre: complex = 1.0 + 0j
    q_ref: float = 0.0
    i2_offset: complex = 0j

    @classmethod
    def for_unit(cls, unit: IbrUnit, s_base: float, **refs) -> "IbrContext":
        sc = ibr_scale(unit, s_base)
        yf = 0j if unit.z_filter is None else 1.0 / unit.z_filter
        return cls(unit, sc, unit.i_max * sc, unit.k_factor * sc, yf, unit.kappa * sc, **refs)

    @property
    def ip_pre(self) -> float:
        return (self.i1_pre * cmath.exp(-1j * cmath.phase(self.v1_pre))).real

    @property
    def iq_pre(self) -> float:
        return -(self.i1_pre * cmath.exp(-1j * cmath.phase(self.v1_pre))).imag


# --------------------------------------------------------------------------
# current saturation
# --------------------------------------------------------------------------

def csm_conventional(i1_p, i1_r, i2_r, i_lim):
    """Sum-of-magnitudes limiter with reactive scaling and active remainder.

    Returns ``(i1_p, i1_r, i2_r)``.  When the reactive demand alone exceeds the
    limit both reactive parts are scaled down proportionally; the active
    current then takes what is left, floored at zero.
    """
    if math.hypot(i1_p, i1_r) + i2_r <= i_lim:
        return float(i1_p), float(i1_r), float(i2_r)
    if i1_r + i2_r > i_lim:
        # reactive parts fill the limit exactly, no room for active current
        s = i_lim / (i1_r + i2_r)
        return 0.0, float(i1_r * s), float(i2_r * s)
    rad = (i_lim - i2_r) ** 2 - i1_r**2
    return min(math.sqrt(rad), float(i1_p)) if rad > 0 else 0.0, float(i1_r), float(i2_r)


def _max_cos(delta_abc) -> float:
    return float(np.max(np.cos(np.asarray(delta_abc, dtype=float))))


def i1_max_from_i2(i2_mag: float, max_cos: float, i_max: float) -> float:
    """Positive-sequence ceiling that puts the largest phase current at ``i_max``."""
    rad = i2_mag**2 * max_cos**2 - i2_mag**2 + i_max**2
    return -i2_mag * max_cos + math.sqrt(max(rad, 0.0))


def csm_improved(v2_angle: float, i2_actual: complex, i_max: float, delta_abc=None):
    """Sequence ceilings of the improved limiter.

    Returns ``(i1_max, i2_max, delta_i2)``.  ``delta_abc`` are the per-phase
    angle differences between the sequence currents; when omitted the
    worst-case alignment is assumed.
    """
    delta_i2 = v2_angle + math.pi / 2.0
    i2_max = 0.5 * i_max
    mc = 1.0 if delta_abc is None else _max_cos(delta_abc)
    return i1_max_from_i2(abs(i2_actual), mc, i_max), i2_max, delta_i2


def _gfl_demand(ctx: IbrContext, v1: complex, theta: float):
    ip = ctx.ip_pre
    iq = ctx.iq_pre + ctx.k * (abs(ctx.v1_pre) - abs(v1))
    return ip, iq


def _scaled_i1(ip, iq, i1m, theta):
    a = math.copysign(min(abs(ip), i1m), ip)
    r = math.sqrt(max(i1m * i1m - a * a, 0.0))
    return complex(a, -math.copysign(r, iq)) * cmath.exp(1j * theta)


_A1 = cmath.rect(1.0, 2.0 * math.pi / 3.0)
_A2 = _A1 * _A1


def _max_phase(i1: complex, i2: complex) -> float:
    """Largest phase current magnitude of a zero-sequence-free set."""
    return max(abs(i1 + i2), abs(i1 + _A1 * i2), abs(i1 + _A2 * i2))


def _pll_angle(ctx: IbrContext, v1: complex, frozen: bool | None = None) -> float:
    """Synchronization angle; a frozen loop holds the pre-fault angle.

    ``frozen=None`` freezes when ``|v1|`` is below ``PLL_FREEZE``.
    """
    if frozen is None:
        frozen = abs(v1) < PLL_FREEZE
    return cmath.phase(ctx.v1_pre) if frozen else cmath.phase(v1)


def gfl_law(ctx: IbrContext, v1: complex, v2: complex, theta: float = 0.0,
            frozen: bool | None = None):
    """Converter currents of a grid-following unit for given terminal voltages.

    ``theta`` is unused and kept for call compatibility; the angle comes from
    the synchronization model (see ``frozen``).
    """
    unit = ctx.unit
    theta = _pll_angle(ctx, v1, frozen)
    ip, iq = _gfl_demand(ctx, v1, theta)
    rot = cmath.exp(1j * theta)
    if unit.csm == "conventional":
        i2r_d = ctx.k * abs(v2)
        p, r, r2 = csm_conventional(abs(ip), abs(iq), i2r_d, ctx.i_max)
        active = (p, r, r2) != (abs(ip), abs(iq), i2r_d)
        i1 = complex(math.copysign(p, ip), -math.copysign(r, iq)) * rot
        d2 = cmath.phase(v2) + math.pi / 2.0
        i2 = r2 * cmath.exp(1j * d2) + ctx.i2_offset
        st = CsmState(p, r, r2, ctx.i_max, math.hypot(p, r), r2, cmath.phase(i1), d2, active, "conventional")
        return i1, i2, theta, st
    i2_max = 0.5 * ctx.i_max
    i2 = vic_negative_sequence(v2, ctx.k, i2_max, theta) + ctx.i2_offset
    i1 = complex(ip, -iq) * rot
    d2 = cmath.phase(v2) + math.pi / 2.0
    mags = phase_current_magnitudes(i1, i2)
    if np.max(mags) <= ctx.i_max:
        mc = _max_cos([cmath.phase(i1) - cmath.phase(i2) + o for o in (0, 2 * math.pi / 3, -2 * math.pi / 3)])
        st = CsmState(ip, iq, abs(i2), ctx.i_max, i1_max_from_i2(abs(i2), mc, ctx.i_max),
                      i2_max, cmath.phase(i1), d2, False)
        return i1, i2, theta, st

    def excess(m):
        return _max_phase(_scaled_i1(ip, iq, m, theta), i2) - ctx.i_max

    hi = abs(i1)
    if excess(0.0) >= 0:
        m = 0.0
    else:
        m = brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    i1 = _scaled_i1(ip, iq, m, theta)
    st = CsmState((i1 * cmath.exp(-1j * theta)).real, -(i1 * cmath.exp(-1j * theta)).imag, abs(i2),
                  ctx.i_max, m, i2_max, cmath.phase(i1), d2, True)
    return i1, i2, theta, st


# --------------------------------------------------------------------------
# virtual impedance
# --------------------------------------------------------------------------

def _vi_root(numerator: complex, z_sum: complex, phi: float, i1_max: float) -> float:
    rs, xs = z_sum.real, z_sum.imag
    zeta2 = rs * rs + xs * xs - abs(numerator) ** 2 / i1_max**2
    b = rs + phi * xs
    disc = b * b - (1.0 + phi * phi) * zeta2
    if disc < 0:
        raise InfeasibleLimit(f"negative discriminant {disc:.3e}")
    r = (-b + math.sqrt(disc)) / (1.0 + phi * phi)
    if r < 0:
        raise InfeasibleLimit(f"no non-negative virtual resistance (root {r:.3e})")
    return r


def vic_virtual_resistance(e1, v_eq, z_eq, z_filter, phi, i1_max) -> float:
    """Virtual resistance putting ``|I1|`` on ``i1_max`` (larger quadratic root).

    ``z_filter`` may be ``None`` for a unit without a filter branch.
    """
    z_eq = complex(z_eq)
    if z_filter is None:
        z_sum, vth = z_eq, complex(v_eq)
    else:
        zf = complex(z_filter)
        z_sum = zf * z_eq / (zf + z_eq)
        vth = z_sum / z_eq * complex(v_eq)
    return _vi_root(complex(e1) - vth, z_sum, phi, i1_max)


def vic_negative_sequence(v2_lv, k_factor, i2_max, e_angle) -> complex:
    """Negative-sequence current leading ``v2_lv`` by 90 deg, capped at ``i2_max``.

    The voltage is projected on the negative-sequence frame aligned with
    ``e_angle``; references are built there and rotated back.
    """
    v2 = complex(v2_lv)
    if v2 == 0 or k_factor == 0:
        return 0j
    vdq = (v2 * cmath.exp(-1j * e_angle)).conjugate()
    vd, vq = vdq.real, vdq.imag
    rho = max(1.0, k_factor * math.hypot(vd, vq) / i2_max)
    i_d = k_factor * vq / rho
    i_q = -k_factor * vd / rho
    return math.hypot(i_d, i_q) * cmath.exp(1j * (e_angle - math.atan2(i_q, i_d)))


def reactive_power(v1, i1_lv, v2, i2_lv) -> float:
    """Reactive output used by the voltage droop (positive plus negative term)."""
    return (v1 * i1_lv.conjugate() + i2_lv * v2.conjugate()).imag


def _phase_offsets(i1, i2):
    d = cmath.phase(i1) - cmath.phase(i2) if abs(i1) > 0 and abs(i2) > 0 else 0.0
    return [d, d + 2 * math.pi / 3, d - 2 * math.pi / 3]


def vic_law(ctx: IbrContext, v2: complex, i2_prev: complex, e_mag: float, port_v1=None,
            i1_prev: complex | None = None):
    """One evaluation of the grid-forming controller.

    ``port_v1`` is ``(numerator_offset, z_sum)``: the converter sees
    ``V1 = vth1 + z_sum I1``.  The sequence alignment behind ``i1_max`` is
    taken from the current iterate ``(i1_prev, i2_prev)`` so that, at a fixed
    point, the peak phase current of an active limiter sits on ``i_max``.
    Returns currents, voltages and the limiter state.
    """
    unit = ctx.unit
    ang = cmath.phase(ctx.e1_pre)
    e1 = e_mag * cmath.exp(1j * ang)
    vth1, z_sum = port_v1
    num = e1 - vth1
    i1u = num / z_sum
    i1_dir = i1u if i1_prev is None or i1_prev == 0 else i1_prev
    mc = _max_cos(_phase_offsets(i1_dir, i2_prev))
    i1_max = i1_max_from_i2(abs(i2_prev), mc, ctx.i_max)
    r, infeasible = 0.0, False
    if abs(i1u) > i1_max:
        try:
            r = _vi_root(num, z_sum, unit.phi, i1_max)
            i1 = num / (z_sum + r * (1 + 1j * unit.phi))
        except InfeasibleLimit:
            infeasible = True
            i1 = i1u / abs(i1u) * i1_max
    else:
        i1 = i1u
    active = r > 0 or infeasible
    v1 = e1 - r * (1 + 1j * unit.phi) * i1 if not infeasible else vth1 + z_sum * i1
    i2_max = 0.5 * i1_max
    i2 = vic_negative_sequence(v2, ctx.k, i2_max, ang) + ctx.i2_offset
    i_th = i1_max - ctx.kappa
    v_drop = r * math.sqrt(1 + unit.phi**2) * abs(i1)
    sigma = v_drop / (i1_max * i_th * math.sqrt(1 + unit.phi**2)) if active and i_th > 0 else 0.0
    st = VicState(r, r * unit.phi, unit.phi, sigma, i_th, v_drop, e1, z_sum, active, i1_max,
                  i2_max, infeasible, num)
    return i1, i2, v1, st


def _droop(ctx: IbrContext, q: float) -> float:
    return abs(ctx.e1_pre) + ctx.unit.k_v * (ctx.q_ref - q) / ctx.scale


# --------------------------------------------------------------------------
# local equilibrium against a port model
# --------------------------------------------------------------------------

def _lv(ctx, v, i):
    return i - ctx.yf * v


def solve_local(ctx: IbrContext, port: SequencePort, op: IbrOperatingPoint,
                tol: float = 1e-14, max_iter: int = 500) -> IbrOperatingPoint:
    """Controller output of one unit consistent with its port model."""
    z = np.asarray(port.z, dtype=complex).reshape(1, 2, 1, 2)
    vth = np.asarray(port.vth, dtype=complex).reshape(1, 2)
    return solve_ports([ctx], vth, z, [op], tol=tol, max_iter=max_iter)[0]


def solve_ports(ctxs, vth, z, ops, tol: float = 1e-14, max_iter: int = 500, frozen=None):
    """Controller outputs of several units against a shared multi-port model.

    The network response is ``V[k] = vth[k] + sum_j z[k, :, j, :] @ I[j]``
    with ``V[k] = (V1, V2)`` and ``I[j] = (I1, I2)`` the converter currents.
    All units are solved together, together with the droop state of every
    grid-forming unit, by Anderson-accelerated fixed-point iteration.  When
    the residual grows the history is dropped and a damped plain step is
    taken instead.  The returned operating points carry the voltages the
    controllers acted on; ``solve_ports.converged`` tells whether ``tol`` was
    met.  ``frozen`` optionally fixes the synchronization state of each
    grid-following unit (``None`` entries use the voltage threshold).
    """
    n = len(ctxs)
    frozen = list(frozen) if frozen is not None else [None] * n
    vth = np.asarray(vth, dtype=complex).reshape(n, 2)
    zm = np.asarray(z, dtype=complex).reshape(2 * n, 2 * n)
    theta = [op.theta for op in ops]
    states = [None] * n

    def currents(y):
        c = y[:, 0:4:2] + 1j * y[:, 1:4:2]
        return c.reshape(-1)

    def law(y):
        i = currents(y)
        v = (vth.reshape(-1) + zm @ i).reshape(n, 2)
        out = np.empty_like(y)
        for k, ctx in enumerate(ctxs):
            if ctx.unit.mode == "GFM":
                # converter current is solved against its own positive-sequence port
                z11 = zm[2 * k, 2 * k]
                vth1 = v[k, 0] - z11 * i[2 * k]
                i1, i2, _, st = vic_law(ctx, v[k, 1], i[2 * k + 1], y[k, 4], (vth1, z11), i[2 * k])
                inew = i.copy()
                inew[2 * k], inew[2 * k + 1] = i1, i2
                vn = vth[k] + zm[2 * k:2 * k + 2] @ inew
                q = reactive_power(vn[0], _lv(ctx, vn[0], i1), vn[1], _lv(ctx, vn[1], i2))
                e = _droop(ctx, q)
            else:
                i1, i2, theta[k], st = gfl_law(ctx, v[k, 0], v[k, 1], frozen=frozen[k])
                e = 0.0
            states[k] = st
            out[k] = (i1.real, i1.imag, i2.real, i2.imag, e)
        return out

    y = np.array([[op.i1.real, op.i1.imag, op.i2.real, op.i2.imag,
                   abs(op.e1) if c.unit.mode == "GFM" else 0.0] for c, op in zip(ctxs, ops)])
    dy, dg = [], []
    prev_f = prev_g = None
    last = math.inf
    lam = 1.0
    converged = False
    for _ in range(max_iter):
        g = law(y).reshape(-1)
        yv = y.reshape(-1)
        f = g - yv
        step = float(np.max(np.abs(f)))
        if step < tol:
            y = g.reshape(n, 5)
            converged = True
            break
        if step > last:
            # growing residual: restart without history and damp
            dy.clear()
            dg.clear()
            prev_f = None
            lam = max(lam * 0.5, 1 / 64)
            last = step
            y = (yv + lam * f).reshape(n, 5)
            continue
        last = step
        lam = min(1.0, 2.0 * lam)
        if prev_f is not None:
            dy.append(f - prev_f)
            dg.append(g - prev_g)
            if len(dy) > _ANDERSON_DEPTH:
                dy.pop(0)
                dg.pop(0)
        prev_f, prev_g = f, g
        if dy:
            gamma = np.linalg.lstsq(np.column_stack(dy), f, rcond=None)[0]
            ynew = g - np.column_stack(dg) @ gamma
            if lam < 1.0:
                ynew = (1 - lam) * (ynew - f) + lam * ynew
        else:
            ynew = yv + lam * f
        y = ynew.reshape(n, 5)
    if not converged:
        # report a controller-consistent point, not an extrapolated iterate
        y = law(y)
    solve_ports.converged = converged
    i = currents(y)
    v = (vth.reshape(-1) + zm @ i).reshape(n, 2)
    return [_finish(ctx, v[k], i[2 * k:2 * k + 2], theta[k], float(y[k, 4]), states[k], frozen[k])
            for k, ctx in enumerate(ctxs)]


_ANDERSON_DEPTH = 3


def _finish(ctx, v, i, theta, e_mag, st, frozen=None):
    unit = ctx.unit
    if unit.mode == "GFM":
        e1 = e_mag * cmath.exp(1j * cmath.phase(ctx.e1_pre))
        st = replace(st, e1=e1)
    else:
        e1 = 0j
        theta = _pll_angle(ctx, v[0], frozen)
    i1_lv, i2_lv = _lv(ctx, v[0], i[0]), _lv(ctx, v[1], i[1])
    q = reactive_power(v[0], i1_lv, v[1], i2_lv)
    return IbrOperatingPoint(unit.id, complex(v[0]), complex(v[1]), complex(i1_lv), complex(i2_lv),
                             complex(i[0]), complex(i[1]), e1, q, theta, st)


# --------------------------------------------------------------------------
# single steps with the signatures used by the solver front-end
# --------------------------------------------------------------------------

def _default_ctx(op: IbrOperatingPoint, unit: IbrUnit, s_base: float | None):
    return IbrContext.for_unit(unit, unit.s_rated if s_base is None else s_base,
                               v1_pre=op.v1_lv, i1_pre=op.i1, e1_pre=op.e1 if op.e1 else op.v1_lv,
                               q_ref=op.q)


def vic_step(op: IbrOperatingPoint, thevenin, unit: IbrUnit, ctx: IbrContext | None = None,
             *, s_base: float | None = None) -> IbrOperatingPoint:
    """One grid-forming update against a positive-sequence Thevenin pair.

    ``thevenin`` is ``(z_eq, v_eq)`` seen from the LV terminal with the unit's
    positive-sequence filter removed.  The negative-sequence voltage is taken
    from ``op`` (held during this step).
    """
    ctx = ctx or _default_ctx(op, unit, s_base)
    z_eq, v_eq = complex(thevenin[0]), complex(thevenin[1])
    if unit.z_filter is None:
        z_sum, vth1 = z_eq, v_eq
    else:
        zf = unit.z_filter
        z_sum = zf * z_eq / (zf + z_eq)
        vth1 = z_sum / z_eq * v_eq
    e_mag = abs(op.e1) if op.e1 else abs(ctx.e1_pre)
    i1, i2, v1, st = vic_law(ctx, op.v2_lv, op.i2, e_mag, (vth1, z_sum), op.i1)
    i1_lv, i2_lv = _lv(ctx, v1, i1), _lv(ctx, op.v2_lv, i2)
    q = reactive_power(v1, i1_lv, op.v2_lv, i2_lv)
    e1 = _droop(ctx, q) * cmath.exp(1j * cmath.phase(ctx.e1_pre))
    return IbrOperatingPoint(unit.id, v1, op.v2_lv, i1_lv, i2_lv, i1, i2, e1, q, op.theta, st)


def gfl_step(op: IbrOperatingPoint, unit: IbrUnit, ctx: IbrContext | None = None,
             *, s_base: float | None = None) -> IbrOperatingPoint:
    """One grid-following update from the measured terminal voltages in ``op``."""
    ctx = ctx or _default_ctx(op, unit, s_base)
    i1, i2, theta, st = gfl_law(ctx, op.v1_lv, op.v2_lv, op.theta)
    i1_lv, i2_lv = _lv(ctx, op.v1_lv, i1), _lv(ctx, op.v2_lv, i2)
    q = reactive_power(op.v1_lv, i1_lv, op.v2_lv, i2_lv)
    return IbrOperatingPoint(unit.id, op.v1_lv, op.v2_lv, i1_lv, i2_lv, i1, i2, 0j, q, theta, st)


def prefault_context(unit: IbrUnit, s_base: float, v1, v2, i1_lv, i2_lv):
    """Context and operating point of a unit at a power-flow state."""
    sc = ibr_scale(unit, s_base)
    yf = 0j if unit.z_filter is None else 1.0 / unit.z_filter
    i1 = i1_lv + yf * v1
    i2 = i2_lv + yf * v2
    q = reactive_power(v1, i1_lv, v2, i2_lv)
    law = 1j * unit.k_factor * sc * v2
    offset = 0j if unit.k_neg is None else i2 - law
    ctx = IbrContext.for_unit(unit, s_base, v1_pre=v1, i1_pre=i1, e1_pre=v1, q_ref=q, i2_offset=offset)
    theta = cmath.phase(v1)
    e1 = v1 if unit.mode == "GFM" else 0j
    op = IbrOperatingPoint(unit.id, v1, v2, i1_lv, i2_lv, i1, i2, e1, q, theta, None)
    return ctx, op
