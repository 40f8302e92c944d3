"""Compiled inner loops for noise generation and SU(2) propagation.

Unitaries are stored in the Cayley-Klein form ``U = [[a, -b*], [b, a*]]``,
so a product of steps never leaves SU(2) except through rounding, and the
polar projection reduces to dividing by ``sqrt(|a|^2 + |b|^2)``.
"""
import numpy as np
from numba import njit

RENORM_EVERY = 10_000


@njit(cache=True)
def ou_path(gen, x0, decay, scale, out):
    """Fill ``out`` with the OU values at the start of each step.

    ``out[k]`` is the value before the k-th update; the value after the last
    update is returned.  One normal draw per step, in order.
    """
    x = x0
    for k in range(out.shape[0]):
        out[k] = x
        x = decay * x + scale * gen.standard_normal()
    return x


@njit(cache=True)
def ou_step(gen, x0, decay, scale):
    return decay * x0 + scale * gen.standard_normal()


@njit(cache=True)
def su2_step(j_mhz, dbz_mhz, dt):
    """Cayley-Klein pair of exp(-i 2pi dt (J sz + dBz sx) / 2)."""
    norm = np.sqrt(j_mhz * j_mhz + dbz_mhz * dbz_mhz)
    if norm == 0.0:
        return 1.0 + 0.0j, 0.0 + 0.0j
    phi = np.pi * dt * 1e6 * norm
    c = np.cos(phi)
    s = np.sin(phi) / norm
    return complex(c, -s * j_mhz), complex(0.0, -s * dbz_mhz)


@njit(cache=True)
def propagate_su2(a, b, v_mv, dv_mv, dbz_noise_mhz, j0_mhz, insensitivity_mv,
                  dbz_mhz, dt, renorm_every):
    """Left-multiply one zero-order-hold step per sample onto (a, b)."""
    n = v_mv.shape[0]
    for k in range(n):
        j = j0_mhz * np.exp((v_mv[k] + dv_mv[k]) / insensitivity_mv)
        sa, sb = su2_step(j, dbz_mhz + dbz_noise_mhz[k], dt)
        a, b = sa * a - sb.conjugate() * b, sb * a + sa.conjugate() * b
        if (k + 1) % renorm_every == 0:
            r = np.sqrt(a.real * a.real + a.imag * a.imag
                        + b.real * b.real + b.imag * b.imag)
            a = a / r
            b = b / r
    return a, b


@njit(cache=True)
def propagate_su2_noiseless(a, b, v_mv, j0_mhz, insensitivity_mv, dbz_mhz, dt,
                            renorm_every):
    n = v_mv.shape[0]
    for k in range(n):
        j = j0_mhz * np.exp(v_mv[k] / insensitivity_mv)
        sa, sb = su2_step(j, dbz_mhz, dt)
        a, b = sa * a - sb.conjugate() * b, sb * a + sa.conjugate() * b
        if (k + 1) % renorm_every == 0:
            r = np.sqrt(a.real * a.real + a.imag * a.imag
                        + b.real * b.real + b.imag * b.imag)
            a = a / r
            b = b / r
    return a, b


@njit(cache=True)
def weighted_rows(values, weights, out):
    """out = sum_c weights[c] * values[c], accumulated in component order."""
    out[:] = 0.0
    for c in range(values.shape[0]):
        w = weights[c]
        if w != 0.0:
            for k in range(values.shape[1]):
                out[k] += w * values[c, k]
    return out
