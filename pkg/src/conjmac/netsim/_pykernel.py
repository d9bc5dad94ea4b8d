"""Pure-Python slot loop. Reference implementation of the compiled kernel."""
import math

PERSIST, DCF, SLOT_BR, SLOT_GP = 0, 1, 2, 3


def simulate_chunk(
    uniforms, active, proto, probs, slopes, gammas, indptr, indices,
    cw, counter, cw_min, cw_max,
    gap_run, seen_idle, gap_buf, gap_pos, gap_count, gap_sum, window,
    attempts, successes, idle_slots, chan, stage_succ, max_successes,
):
    """Advance the channel over the rows of ``uniforms``; all state arrays are updated in place.

    Returns the number of slots consumed, which is smaller than the chunk
    when ``max_successes`` > 0 and the stage reaches that many successes.
    """
    n, K = uniforms.shape
    u = uniforms.tolist()
    act = active.tolist()
    prt = proto.tolist()
    ptr = indptr.tolist()
    idx = indices.tolist()
    p = probs.tolist()
    tx = [0] * K
    for t in range(n):
        row = u[t]
        any_tx = 0
        for k in range(K):
            if not act[k]:
                tx[k] = 0
            elif prt[k] == DCF:
                tx[k] = 1 if counter[k] == 0 else 0
            else:
                tx[k] = 1 if row[k] < p[k] else 0
            any_tx |= tx[k]
        n_succ = 0
        for k in range(K):
            if not act[k]:
                continue
            busy = 0
            for j in idx[ptr[k]:ptr[k + 1]]:
                if tx[j]:
                    busy = 1
                    break
            own = tx[k]
            if own:
                attempts[k] += 1
                if not busy:
                    successes[k] += 1
                    n_succ += 1
            idle = not busy and not own
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
            code = prt[k]
            if code == DCF:
                if own:
                    c = cw[k]
                    if busy:
                        c = min(2 * c, cw_max)
                    else:
                        c = cw_min
                    cw[k] = c
                    counter[k] = int(math.floor(row[k] * c))
                    p[k] = 2.0 / (1.0 + c)
                else:
                    counter[k] -= 1
            elif code == SLOT_BR:
                a = slopes[k]
                if busy:
                    p[k] = p[k] / 2.0
                elif own:
                    p[k] = (1.0 + 1.0 / a) / 2.0
                else:
                    p[k] = 1.0 / (2.0 * a)
            elif code == SLOT_GP:
                a = slopes[k]
                g = gammas[k]
                if busy:
                    v = p[k] * (1.0 - g * a)
                else:
                    v = p[k] + g * (1.0 - a * p[k])
                p[k] = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
        if not any_tx:
            chan[0] += 1
        elif n_succ > 0:
            chan[1] += 1
        else:
            chan[2] += 1
        stage_succ[0] += n_succ
        if max_successes > 0 and stage_succ[0] >= max_successes:
            probs[:] = p
            return t + 1
    probs[:] = p
    return n
