"""Hot numerical kernels in paired numpy / numba variants.

Every kernel exists twice: a vectorized pure-numpy implementation and a
numba-compiled loop (``*_nb``).  The active backend is picked at import
time: numba when importable, unless the environment variable
``PAMLAB_NUMBA`` is set to ``0``.  All randomness is drawn by callers, so
both backends consume identical random streams and agree to float
round-off.

Environment trajectories enter as flat arrays: per-site event slices
``eoff[s]:eoff[s+1]`` into ``etimes`` (ascending, first entry 0.0),
``evals`` (piecewise-constant right-continuous values) and ``ecum``
(site-local cumulative integral at each event time).
"""

from __future__ import annotations

import os

import numpy as np

_WANT_NUMBA = os.environ.get("PAMLAB_NUMBA", "1") != "0"
_HAVE_NUMBA = False
if _WANT_NUMBA:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _HAVE_NUMBA = False

BACKEND = "numba" if _HAVE_NUMBA else "numpy"


def _env_piece_np(eoff, etimes, evals, ecum, ekeys, site, u0, u1, t, reverse):
    """Vectorized env integral over one time piece per segment.

    Integrates the piecewise-constant field at ``site`` over the interval
    [u0, u1) (forward) or [t-u1, t-u0) (reversed).  When no event falls
    strictly inside the interval the result is value*(u1-u0) exactly, which
    makes forward and reversed integration of a time-constant field agree
    bitwise.
    """
    if reverse:
        a = t - u1
        b = t - u0
    else:
        a = u0
        b = u1
    q = np.empty(site.size, dtype=ekeys.dtype)
    q["s"] = site
    q["t"] = a
    ja = np.searchsorted(ekeys, q, side="right") - 1
    q["t"] = b
    jb = np.searchsorted(ekeys, q, side="right") - 1
    same = ja == jb
    out = np.empty(site.size)
    out[same] = evals[ja[same]] * (u1[same] - u0[same])
    cross = ~same
    jac = ja[cross]
    jbc = jb[cross]
    out[cross] = (ecum[jbc] + evals[jbc] * (b[cross] - etimes[jbc])) - (
        ecum[jac] + evals[jac] * (a[cross] - etimes[jac])
    )
    return out


def fk_path_integrals(env, jump_times, dirs, rep_off, t, reverse=True):
    """Per-replica path integrals of the environment along sampled walks.

    Parameters
    ----------
    env : tuple
        ``(eoff, etimes, evals, ecum, ekeys, side, L, d)`` flattened
        trajectory arrays plus torus geometry.
    jump_times, dirs : ndarray
        Flat jump times (sorted within each replica) and direction codes
        ``axis*2 + (step>0)``.
    rep_off : ndarray
        Replica offsets into the flat arrays, length n_replicas+1.
    t : float
        Horizon; the final segment of every path ends at ``t``.
    reverse : bool
        Query the field at time ``t - s`` (Feynman-Kac orientation) instead
        of ``s``.

    Returns
    -------
    integrals : ndarray, per replica
    end_site : ndarray, wrapped flat site index of the endpoint
    max_abs : ndarray, max over time of the sup-norm of the unwrapped position
    """
    eoff, etimes, evals, ecum, ekeys, side, L, d = env
    n_rep = rep_off.size - 1
    total = jump_times.size
    counts = np.diff(rep_off)

    # per-axis unit steps; cumulative sum within each replica gives positions
    axis = dirs >> 1
    sign = np.where((dirs & 1) == 1, 1, -1).astype(np.int64)
    disp = np.zeros((total, d), dtype=np.int64)
    disp[np.arange(total), axis] = sign
    cum = np.cumsum(disp, axis=0)
    if total:
        # position after each jump, reset to zero at every replica start
        reset = np.zeros((n_rep, d), dtype=np.int64)
        prev = rep_off[:-1] - 1
        mask = rep_off[:-1] > 0
        reset[mask] = cum[prev[mask]]
        pos = cum - np.repeat(reset, counts, axis=0)
    else:
        pos = cum

    # segment layout: replica r owns counts[r]+1 segments
    seg_off = rep_off + np.arange(n_rep + 1)
    n_seg = total + n_rep
    is_first = np.zeros(n_seg, dtype=bool)
    is_first[seg_off[:-1]] = True
    is_last = np.zeros(n_seg, dtype=bool)
    is_last[seg_off[1:] - 1] = True

    u0 = np.empty(n_seg)
    u0[is_first] = 0.0
    u0[~is_first] = jump_times
    u1 = np.empty(n_seg)
    u1[~is_last] = jump_times
    u1[is_last] = t

    seg_pos = np.empty((n_seg, d), dtype=np.int64)
    seg_pos[is_first] = 0
    seg_pos[~is_first] = pos
    rows = (seg_pos + L) % side
    strides = side ** np.arange(d - 1, -1, -1, dtype=np.int64)
    seg_site = rows @ strides

    pieces = _env_piece_np(eoff, etimes, evals, ecum, ekeys, seg_site, u0, u1, t, reverse)
    integrals = np.add.reduceat(pieces, seg_off[:-1])

    end_site = seg_site[seg_off[1:] - 1]
    amax = np.abs(seg_pos).max(axis=1)
    max_abs = np.maximum.reduceat(amax, seg_off[:-1])
    return integrals, end_site, max_abs


def sort_segments(values, offsets):
    """Sort ``values`` in place within each slice ``offsets[i]:offsets[i+1]``."""
    order = np.lexsort((values, np.repeat(np.arange(offsets.size - 1), np.diff(offsets))))
    values[:] = values[order]
    return values


def walk_running_max_abs(steps, rep_off):
    """Per-replica running max of |cumsum(steps)| for one-dimensional walks."""
    n_rep = rep_off.size - 1
    counts = np.diff(rep_off)
    out = np.zeros(n_rep, dtype=np.int64)
    if steps.size == 0:
        return out
    cum = np.cumsum(steps)
    reset = np.zeros(n_rep, dtype=np.int64)
    prev = rep_off[:-1] - 1
    mask = rep_off[:-1] > 0
    reset[mask] = cum[prev[mask]]
    pos = cum - np.repeat(reset, counts)
    nz = counts > 0
    m = np.maximum.reduceat(np.abs(pos), np.minimum(rep_off[:-1], steps.size - 1))
    out[nz] = m[nz]
    return out


if _HAVE_NUMBA:

    @njit(cache=True)
    def _env_piece_nb(eoff, etimes, evals, ecum, site, u0, u1, t, reverse):
        """Numba-compiled version of the single-segment env integral."""
        if reverse:
            a = t - u1
            b = t - u0
        else:
            a = u0
            b = u1
        lo = eoff[site]
        hi = eoff[site + 1]
        ja = lo + np.searchsorted(etimes[lo:hi], a, side="right") - 1
        jb = lo + np.searchsorted(etimes[lo:hi], b, side="right") - 1
        if ja == jb:
            return evals[ja] * (u1 - u0)
        return (ecum[jb] + evals[jb] * (b - etimes[jb])) - (
            ecum[ja] + evals[ja] * (a - etimes[ja])
        )

    @njit(cache=True)
    def _fk_path_integrals_nb(eoff, etimes, evals, ecum, side, L, d,
                              jump_times, dirs, rep_off, t, reverse):
        """Numba-compiled version of fk_path_integrals."""
        n_rep = rep_off.size - 1
        integrals = np.empty(n_rep)
        end_site = np.empty(n_rep, dtype=np.int64)
        max_abs = np.zeros(n_rep, dtype=np.int64)
        strides = np.empty(d, dtype=np.int64)
        s = 1
        for j in range(d - 1, -1, -1):
            strides[j] = s
            s *= side
        pos = np.zeros(d, dtype=np.int64)
        row = np.zeros(d, dtype=np.int64)
        for r in range(n_rep):
            for j in range(d):
                pos[j] = 0
                row[j] = L
            site = 0
            for j in range(d):
                site += row[j] * strides[j]
            acc = 0.0
            mx = 0
            u_prev = 0.0
            for i in range(rep_off[r], rep_off[r + 1]):
                u = jump_times[i]
                acc += _env_piece_nb(eoff, etimes, evals, ecum, site, u_prev, u, t, reverse)
                a = dirs[i] >> 1
                if dirs[i] & 1:
                    pos[a] += 1
                    row[a] += 1
                    site += strides[a]
                    if row[a] == side:
                        row[a] = 0
                        site -= side * strides[a]
                else:
                    pos[a] -= 1
                    row[a] -= 1
                    site -= strides[a]
                    if row[a] < 0:
                        row[a] = side - 1
                        site += side * strides[a]
                p = pos[a] if pos[a] >= 0 else -pos[a]
                if p > mx:
                    mx = p
                u_prev = u
            acc += _env_piece_nb(eoff, etimes, evals, ecum, site, u_prev, t, t, reverse)
            integrals[r] = acc
            end_site[r] = site
            max_abs[r] = mx
        return integrals, end_site, max_abs

    def fk_path_integrals_nb(env, jump_times, dirs, rep_off, t, reverse=True):
        """Numba-compiled version of fk_path_integrals (same signature)."""
        eoff, etimes, evals, ecum, _ekeys, side, L, d = env
        return _fk_path_integrals_nb(eoff, etimes, evals, ecum, side, L, d,
                                     jump_times, dirs, rep_off, float(t), reverse)

    @njit(cache=True)
    def _sort_segments_nb(values, offsets):
        for i in range(offsets.size - 1):
            values[offsets[i]:offsets[i + 1]].sort()
        return values

    def sort_segments_nb(values, offsets):
        """Numba-compiled version of sort_segments."""
        return _sort_segments_nb(values, offsets)

    @njit(cache=True)
    def _walk_running_max_abs_nb(steps, rep_off):
        n_rep = rep_off.size - 1
        out = np.zeros(n_rep, dtype=np.int64)
        for r in range(n_rep):
            pos = 0
            mx = 0
            for i in range(rep_off[r], rep_off[r + 1]):
                pos += steps[i]
                p = pos if pos >= 0 else -pos
                if p > mx:
                    mx = p
            out[r] = mx
        return out

    def walk_running_max_abs_nb(steps, rep_off):
        """Numba-compiled version of walk_running_max_abs."""
        return _walk_running_max_abs_nb(steps, rep_off)


def get_kernels():
    """Return the active kernel set as a dict keyed by kernel name."""
    if BACKEND == "numba":
        return {
            "fk_path_integrals": fk_path_integrals_nb,
            "sort_segments": sort_segments_nb,
            "walk_running_max_abs": walk_running_max_abs_nb,
        }
    return {
        "fk_path_integrals": fk_path_integrals,
        "sort_segments": sort_segments,
        "walk_running_max_abs": walk_running_max_abs,
    }
