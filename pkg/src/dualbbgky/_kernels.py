"""Hot numeric kernels: batched velocity-Verlet flows and Gaussian-mixture sums.

Every kernel exists twice: a pure-numpy vectorized version (``*_numpy``) and a
numba ``@njit`` twin compiled from explicit loops. The module binds the public
names to the numba versions unless ``DUALBBGKY_DISABLE_NUMBA`` is set to a
non-empty value other than ``0`` (or numba fails to import), in which case the
numpy path is used. ``ACTIVE_BACKEND`` records the choice;
``benchmarks/bench_kernels.py`` times both paths side by side.

Array conventions: a batch of B configurations of k particles is a float64
array of shape (B, k, 3) for velocities and positions separately, or (B, k, 6)
with components ordered ``vx vy vz rx ry rz`` at the call sites above this
module. Potentials are encoded as integers: 0 free, 1 harmonic pair,
2 gaussian pair.
"""

import os

import numpy as np

POT_FREE = 0
POT_HARMONIC = 1
POT_GAUSSIAN = 2

_MIX_CHUNK = 4096  # rows per chunk in the numpy mixture kernels (memory cap)


def _numba_requested() -> bool:
    flag = os.environ.get("DUALBBGKY_DISABLE_NUMBA", "")
    return flag in ("", "0")


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _pair_forces_numpy(kind, amplitude, range_, r):
    """Forces on each particle from all pair interactions; r is (B, k, 3)."""
    B, k, _ = r.shape
    if kind == POT_FREE or k == 1:
        return np.zeros_like(r)
    d = r[:, :, None, :] - r[:, None, :, :]  # (B, k, k, 3), d[b,i,j] = r_i - r_j
    if kind == POT_HARMONIC:
        pair = -amplitude * d
    else:
        s2 = d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2
        w = (amplitude / range_**2) * np.exp(-0.5 * s2 / range_**2)
        pair = w[..., None] * d
    idx = np.arange(k)
    pair[:, idx, idx, :] = 0.0
    return pair.sum(axis=2)


def verlet_flow_numpy(kind, amplitude, range_, dt, n_steps, v, r):
    """Integrate n_steps of velocity Verlet in place; returns (v, r)."""
    f = _pair_forces_numpy(kind, amplitude, range_, r)
    for _ in range(n_steps):
        v += 0.5 * dt * f
        r += dt * v
        f = _pair_forces_numpy(kind, amplitude, range_, r)
        v += 0.5 * dt * f
    return v, r


def potential_energy_numpy(kind, amplitude, range_, r):
    """Total pair-potential energy per configuration; r is (B, k, 3)."""
    B, k, _ = r.shape
    out = np.zeros(B)
    if kind == POT_FREE:
        return out
    for i in range(k):
        for j in range(i + 1, k):
            d = r[:, i, :] - r[:, j, :]
            s2 = (d * d).sum(axis=1)
            if kind == POT_HARMONIC:
                out += 0.5 * amplitude * s2
            else:
                out += amplitude * np.exp(-0.5 * s2 / range_**2)
    return out


def mixture_eval_numpy(weights, centers, h, pts):
    """Weighted Gaussian-mixture values at pts.

    weights: (M,), centers: (M, 6), pts: (B, 6); kernel is the product
    Gaussian on R^6 with bandwidth h, normalized to unit integral.
    """
    B = pts.shape[0]
    norm = (2.0 * np.pi * h * h) ** -3
    inv2h2 = 0.5 / (h * h)
    out = np.empty(B)
    for lo in range(0, B, _MIX_CHUNK):
        hi = min(lo + _MIX_CHUNK, B)
        d = pts[lo:hi, None, :] - centers[None, :, :]
        s2 = np.einsum("bmc,bmc->bm", d, d)
        out[lo:hi] = np.exp(-inv2h2 * s2) @ weights
    return norm * out


def kde_rows_numpy(particles, probe, h):
    """Per-row kernel sums: particles (B, n, 6), probe (6,) -> (B,)."""
    if particles.shape[1] == 0:
        return np.zeros(particles.shape[0])
    norm = (2.0 * np.pi * h * h) ** -3
    d = particles - probe[None, None, :]
    s2 = np.einsum("bnc,bnc->bn", d, d)
    return norm * np.exp(-0.5 * s2 / (h * h)).sum(axis=1)


def kde_matrix_numpy(particles, probe, h):
    """Per-particle kernel values: particles (B, n, 6), probe (6,) -> (B, n)."""
    norm = (2.0 * np.pi * h * h) ** -3
    d = particles - probe[None, None, :]
    s2 = np.einsum("bnc,bnc->bn", d, d)
    return norm * np.exp(-0.5 * s2 / (h * h))


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

NUMBA_AVAILABLE = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover - environment without numba
        NUMBA_AVAILABLE = False

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _forces_into(kind, amplitude, range_, rb, fb):
        k = rb.shape[0]
        for i in range(k):
            for c in range(3):
                fb[i, c] = 0.0
        if kind == POT_FREE or k == 1:
            return
        inv2s2 = 0.0
        if kind == POT_GAUSSIAN:
            inv2s2 = 0.5 / (range_ * range_)
        for i in range(k):
            for j in range(i + 1, k):
                d0 = rb[i, 0] - rb[j, 0]
                d1 = rb[i, 1] - rb[j, 1]
                d2 = rb[i, 2] - rb[j, 2]
                if kind == POT_HARMONIC:
                    w = -amplitude
                else:
                    s2 = d0 * d0 + d1 * d1 + d2 * d2
                    w = (amplitude / (range_ * range_)) * np.exp(-inv2s2 * s2)
                fb[i, 0] += w * d0
                fb[i, 1] += w * d1
                fb[i, 2] += w * d2
                fb[j, 0] -= w * d0
                fb[j, 1] -= w * d1
                fb[j, 2] -= w * d2

    @njit(cache=True)
    def verlet_flow_numba(kind, amplitude, range_, dt, n_steps, v, r):
        B, k, _ = v.shape
        f = np.zeros((k, 3))
        for b in range(B):
            vb = v[b]
            rb = r[b]
            _forces_into(kind, amplitude, range_, rb, f)
            for _ in range(n_steps):
                for i in range(k):
                    for c in range(3):
                        vb[i, c] += 0.5 * dt * f[i, c]
                        rb[i, c] += dt * vb[i, c]
                _forces_into(kind, amplitude, range_, rb, f)
                for i in range(k):
                    for c in range(3):
                        vb[i, c] += 0.5 * dt * f[i, c]
        return v, r

    @njit(cache=True)
    def potential_energy_numba(kind, amplitude, range_, r):
        B, k, _ = r.shape
        out = np.zeros(B)
        if kind == POT_FREE:
            return out
        for b in range(B):
            acc = 0.0
            for i in range(k):
                for j in range(i + 1, k):
                    d0 = r[b, i, 0] - r[b, j, 0]
                    d1 = r[b, i, 1] - r[b, j, 1]
                    d2 = r[b, i, 2] - r[b, j, 2]
                    s2 = d0 * d0 + d1 * d1 + d2 * d2
                    if kind == POT_HARMONIC:
                        acc += 0.5 * amplitude * s2
                    else:
                        acc += amplitude * np.exp(-0.5 * s2 / (range_ * range_))
            out[b] = acc
        return out

    @njit(cache=True)
    def mixture_eval_numba(weights, centers, h, pts):
        B = pts.shape[0]
        M = weights.shape[0]
        norm = (2.0 * np.pi * h * h) ** -3
        inv2h2 = 0.5 / (h * h)
        out = np.zeros(B)
        for b in range(B):
            acc = 0.0
            for m in range(M):
                s2 = 0.0
                for c in range(6):
                    d = pts[b, c] - centers[m, c]
                    s2 += d * d
                acc += weights[m] * np.exp(-inv2h2 * s2)
            out[b] = norm * acc
        return out

    @njit(cache=True)
    def kde_rows_numba(particles, probe, h):
        B, n, _ = particles.shape
        norm = (2.0 * np.pi * h * h) ** -3
        inv2h2 = 0.5 / (h * h)
        out = np.zeros(B)
        for b in range(B):
            acc = 0.0
            for i in range(n):
                s2 = 0.0
                for c in range(6):
                    d = particles[b, i, c] - probe[c]
                    s2 += d * d
                acc += np.exp(-inv2h2 * s2)
            out[b] = norm * acc
        return out

    @njit(cache=True)
    def kde_matrix_numba(particles, probe, h):
        B, n, _ = particles.shape
        norm = (2.0 * np.pi * h * h) ** -3
        inv2h2 = 0.5 / (h * h)
        out = np.zeros((B, n))
        for b in range(B):
            for i in range(n):
                s2 = 0.0
                for c in range(6):
                    d = particles[b, i, c] - probe[c]
                    s2 += d * d
                out[b, i] = norm * np.exp(-inv2h2 * s2)
        return out


if NUMBA_AVAILABLE:
    ACTIVE_BACKEND = "numba"
    verlet_flow = verlet_flow_numba
    potential_energy = potential_energy_numba
    mixture_eval = mixture_eval_numba
    kde_rows = kde_rows_numba
    kde_matrix = kde_matrix_numba
else:
    ACTIVE_BACKEND = "numpy"
    verlet_flow = verlet_flow_numpy
    potential_energy = potential_energy_numpy
    mixture_eval = mixture_eval_numpy
    kde_rows = kde_rows_numpy
    kde_matrix = kde_matrix_numpy
