# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled slot loop; same contract and arithmetic as the pure-Python kernel."""
from libc.math cimport floor
from libc.stdlib cimport malloc, free

cdef enum:
    PERSIST = 0
    DCF = 1
    SLOT_BR = 2
    SLOT_GP = 3


def simulate_chunk(
    const double[:, ::1] uniforms, const unsigned char[::1] active, const signed char[::1] proto,
    double[::1] probs, const double[::1] slopes, const double[::1] gammas,
    const long long[::1] indptr, const long long[::1] indices,
    long long[::1] cw, long long[::1] counter, long long cw_min, long long cw_max,
    long long[::1] gap_run, unsigned char[::1] seen_idle, long long[:, ::1] gap_buf,
    long long[::1] gap_pos, long long[::1] gap_count, long long[::1] gap_sum, long long window,
    long long[::1] attempts, long long[::1] successes, long long[::1] idle_slots,
    long long[::1] chan, long long[::1] stage_succ, long long max_successes,
):
    cdef Py_ssize_t n = uniforms.shape[0]
    cdef Py_ssize_t K = uniforms.shape[1]
    cdef Py_ssize_t t, k, j, jj
    cdef long long c, g, pos, n_succ
    cdef int any_tx, busy, own, idle
    cdef double a, gm, v
    cdef unsigned char *tx = <unsigned char *> malloc(K if K > 0 else 1)
    if tx == NULL:
        raise MemoryError()
    try:
        for t in range(n):
            any_tx = 0
            for k in range(K):
                if not active[k]:
                    tx[k] = 0
                elif proto[k] == DCF:
                    tx[k] = 1 if counter[k] == 0 else 0
                else:
                    tx[k] = 1 if uniforms[t, k] < probs[k] else 0
                any_tx |= tx[k]
            n_succ = 0
            for k in range(K):
                if not active[k]:
                    continue
                busy = 0
                for jj in range(indptr[k], indptr[k + 1]):
                    if tx[indices[jj]]:
                        busy = 1
                        break
                own = tx[k]
                if own:
                    attempts[k] += 1
                    if not busy:
                        successes[k] += 1
                        n_succ += 1
                idle = (not busy) and (not own)
                if idle:
                    idle_slots[k] += 1
                    if seen_idle[k]:
                        g = gap_run[k]
                        if window > 0:
                            pos = gap_pos[k]
                            if gap_count[k] == window:
                                gap_sum[k] -= gap_buf[k, pos]
                            else:
                                gap_count[k] += 1
                            gap_buf[k, pos] = g
                            gap_pos[k] = (pos + 1) % window
                        else:
                            gap_count[k] += 1
                        gap_sum[k] += g
                    gap_run[k] = 0
                    seen_idle[k] = 1
                else:
                    gap_run[k] += 1
                if proto[k] == DCF:
                    if own:
                        c = cw[k]
                        if busy:
                            c = 2 * c if 2 * c < cw_max else cw_max
                        else:
                            c = cw_min
                        cw[k] = c
                        counter[k] = <long long> floor(uniforms[t, k] * c)
                        probs[k] = 2.0 / (1.0 + c)
                    else:
                        counter[k] -= 1
                elif proto[k] == SLOT_BR:
                    a = slopes[k]
                    if busy:
                        probs[k] = probs[k] / 2.0
                    elif own:
                        probs[k] = (1.0 + 1.0 / a) / 2.0
                    else:
                        probs[k] = 1.0 / (2.0 * a)
                elif proto[k] == SLOT_GP:
                    a = slopes[k]
                    gm = gammas[k]
                    if busy:
                        v = probs[k] * (1.0 - gm * a)
                    else:
                        v = probs[k] + gm * (1.0 - a * probs[k])
                    probs[k] = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
            if not any_tx:
                chan[0] += 1
            elif n_succ > 0:
                chan[1] += 1
            else:
                chan[2] += 1
            stage_succ[0] += n_succ
            if max_successes > 0 and stage_succ[0] >= max_successes:
                return t + 1
        return n
    finally:
        free(tx)
