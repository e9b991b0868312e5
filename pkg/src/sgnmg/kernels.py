"""Hot numeric kernels.

Every kernel has two implementations: a numba-compiled one and a pure-numpy
one. ``SGNMG_DISABLE_NUMBA=1`` selects the numpy path (see ``_accel``). The
public names at the bottom of the module are bound to whichever path is
active; the ``*_numpy`` / ``*_numba`` names stay importable for the
benchmark and for cross-checking the two paths in tests.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ._accel import HAS_NUMBA, jit

__all__ = [
    "HAS_NUMBA",
    "euler_steps",
    "synth_pow",
    "dft_amplitudes",
    "ls_slope",
]


# ---------------------------------------------------------------------------
# swing equation + droop + storage, explicit Euler
# ---------------------------------------------------------------------------
def _euler_steps_loop(
    delta_f, p_dg, p_ess, soc, dt, m, d, tau_gov,
    p_set, p_max, inv_r, df_offset, demand,
    ess_target, ess_band, ess_pmax, ess_ramp, e_cap,
    out_df, out_pdg, out_pess, out_soc,
):
    n = demand.shape[0]
    n_units = p_set.shape[0]
    for k in range(n):
        # storage: armed headroom ``ess_target`` is released in proportion to
        # under-frequency (full output at -ess_band); band 0 means a fixed setpoint
        goal = ess_target
        if ess_band > 0.0:
            share = -delta_f / ess_band
            if share < 0.0:
                share = 0.0
            elif share > 1.0:
                share = 1.0
            goal = ess_target * share
        # ramp toward the goal, then power and SoC limits
        step_max = ess_ramp * dt
        diff = goal - p_ess
        if diff > step_max:
            diff = step_max
        elif diff < -step_max:
            diff = -step_max
        p_ess = p_ess + diff
        if p_ess > ess_pmax:
            p_ess = ess_pmax
        elif p_ess < -ess_pmax:
            p_ess = -ess_pmax
        p_dis = soc * e_cap / dt
        p_chg = (1.0 - soc) * e_cap / dt
        if p_ess > p_dis:
            p_ess = p_dis
        elif p_ess < -p_chg:
            p_ess = -p_chg

        gen = 0.0
        for i in range(n_units):
            target = p_set[i] - (delta_f - df_offset) * inv_r[i]
            if target < 0.0:
                target = 0.0
            elif target > p_max[i]:
                target = p_max[i]
            if tau_gov > 0.0:
                gen += p_dg[i]
                nxt = p_dg[i] + dt / tau_gov * (target - p_dg[i])
                if nxt < 0.0:
                    nxt = 0.0
                elif nxt > p_max[i]:
                    nxt = p_max[i]
                p_dg[i] = nxt
            else:
                p_dg[i] = target
                gen += target

        accel = (gen + p_ess - demand[k] - d * delta_f) / m
        delta_f = delta_f + dt * accel
        soc = soc - p_ess * dt / e_cap
        if soc < 0.0:
            soc = 0.0
        elif soc > 1.0:
            soc = 1.0

        out_df[k] = delta_f
        for i in range(n_units):
            out_pdg[k, i] = p_dg[i]
        out_pess[k] = p_ess
        out_soc[k] = soc
    return delta_f, p_ess, soc


euler_steps_numpy = _euler_steps_loop
euler_steps_numba = jit(_euler_steps_loop)


# ---------------------------------------------------------------------------
# point-on-wave synthesis
# ---------------------------------------------------------------------------
def synth_pow_numpy(v_rms, harm, sub, fs, f0):
    """Voltage samples for a window.

    ``v_rms[j]`` and ``harm[j, k]`` hold the RMS voltage and the relative
    amplitude of harmonic order ``k`` during simulation step ``j``; every step
    expands into ``sub`` samples at rate ``fs``. Phase is referenced to the
    first sample of the window.
    """
    n = v_rms.shape[0] * sub
    idx = np.arange(n) // sub
    tau = np.arange(n) / fs
    amps = harm[idx]
    orders = np.nonzero(np.any(harm != 0.0, axis=0))[0]
    wave = np.zeros(n)
    for k in orders:
        wave += amps[:, k] * np.sin(2.0 * np.pi * f0 * k * tau)
    return math.sqrt(2.0) * v_rms[idx] * wave


@lru_cache(maxsize=16)
def _sin_table(n, n_orders, fs, f0):
    """sin(2 pi f0 k i / fs) for orders k < n_orders and samples i < n."""
    i = np.arange(n)
    k = np.arange(n_orders)[:, None]
    return np.ascontiguousarray(np.sin(2.0 * np.pi * f0 / fs * k * i[None, :]))


def _synth_pow_loop(v_rms, harm, sub, table):
    n_steps = v_rms.shape[0]
    n_orders = harm.shape[1]
    out = np.zeros(n_steps * sub)
    root2 = math.sqrt(2.0)
    for j in range(n_steps):
        for k in range(n_orders):
            a = harm[j, k]
            if a != 0.0:
                for s in range(sub):
                    i = j * sub + s
                    out[i] += a * table[k, i]
        for s in range(sub):
            out[j * sub + s] *= root2 * v_rms[j]
    return out


_synth_pow_jit = jit(_synth_pow_loop)


def synth_pow_numba(v_rms, harm, sub, fs, f0):
    table = _sin_table(v_rms.shape[0] * sub, harm.shape[1], float(fs), float(f0))
    return _synth_pow_jit(v_rms, harm, sub, table)


# ---------------------------------------------------------------------------
# single-bin DFT at harmonic frequencies
# ---------------------------------------------------------------------------
@lru_cache(maxsize=16)
def _dft_basis(n, fs, f0, k_max):
    tau = np.arange(n) / fs
    k = np.arange(1, k_max + 1)[:, None]
    return np.exp(-2j * np.pi * f0 * k * tau[None, :])


def dft_amplitudes_numpy(x, fs, f0, k_max):
    """Peak amplitude of orders 1..k_max (index 0 = fundamental)."""
    basis = _dft_basis(x.shape[0], float(fs), float(f0), int(k_max))
    return 2.0 / x.shape[0] * np.abs(basis @ x)


@lru_cache(maxsize=16)
def _dft_tables(n, fs, f0, k_max):
    basis = _dft_basis(n, fs, f0, k_max)
    return np.ascontiguousarray(basis.real), np.ascontiguousarray(basis.imag)


def _dft_amplitudes_loop(x, cos_t, sin_t):
    k_max, n = cos_t.shape
    out = np.empty(k_max)
    for k in range(k_max):
        re = 0.0
        im = 0.0
        for i in range(n):
            re += x[i] * cos_t[k, i]
            im += x[i] * sin_t[k, i]
        out[k] = 2.0 / n * math.sqrt(re * re + im * im)
    return out


# reassociation lets the two dot products vectorize
_dft_amplitudes_jit = jit(fastmath={"reassoc", "contract"})(_dft_amplitudes_loop)


def dft_amplitudes_numba(x, fs, f0, k_max):
    cos_t, sin_t = _dft_tables(x.shape[0], float(fs), float(f0), int(k_max))
    return _dft_amplitudes_jit(x, cos_t, sin_t)


# ---------------------------------------------------------------------------
# least-squares slope
# ---------------------------------------------------------------------------
def ls_slope_numpy(t, y):
    tc = t - t.mean()
    yc = y - y.mean()
    return float(np.dot(tc, yc) / np.dot(tc, tc))


def _ls_slope_loop(t, y):
    n = t.shape[0]
    tm = 0.0
    ym = 0.0
    for i in range(n):
        tm += t[i]
        ym += y[i]
    tm /= n
    ym /= n
    num = 0.0
    den = 0.0
    for i in range(n):
        dt = t[i] - tm
        num += dt * (y[i] - ym)
        den += dt * dt
    return num / den


ls_slope_numba = jit(_ls_slope_loop)


if HAS_NUMBA:
    euler_steps = euler_steps_numba
    synth_pow = synth_pow_numba
    dft_amplitudes = dft_amplitudes_numba
    ls_slope = ls_slope_numba
else:
    euler_steps = euler_steps_numpy
    synth_pow = synth_pow_numpy
    dft_amplitudes = dft_amplitudes_numpy
    ls_slope = ls_slope_numpy
