"""Pure-Python simulation kernels.

Reference implementation of the inner loops; ``_ckernels.pyx`` mirrors it
statement by statement so both backends produce bit-identical output from
the same pre-drawn variates. Only ``math`` functions are used (never numpy
ufuncs) so that elementary functions come from the same C library.

Status codes returned by the advance functions:

0  event cap reached
1  clock horizon reached
2  exit site reached
3  draw buffer exhausted; refill and call again
4  stuck: all rates vanish and no sign change is pending
"""

import math

EVENTS = 0
TIME = 1
EXITED = 2
NEED_DRAWS = 3
STUCK = 4

_INF = math.inf
_ZERO_MEMORY = 1e-14


def _hit_time(m, w, h):
    """First ``T > 0`` with ``m T + w T**2 / 2 = h``, or ``inf`` if none."""
    if w > 0.0:
        return 2.0 * h / (m + math.sqrt(m * m + 2.0 * w * h))
    if w == 0.0:
        if m > 0.0:
            return h / m
        return _INF
    disc = m * m + 2.0 * w * h
    if disc > 0.0:
        return 2.0 * h / (m + math.sqrt(disc))
    return _INF


def _spread(hist, nb, lo_edge, width, a, b, dt):
    """Add ``dt`` spread uniformly over the memory range ``[a, b]``."""
    if a > b:
        a, b = b, a
    hi_edge = lo_edge + nb * width
    if b - a <= 0.0:
        if a < lo_edge:
            hist[0] += dt
        elif a >= hi_edge:
            hist[nb + 1] += dt
        else:
            k = int((a - lo_edge) / width)
            if k >= nb:
                k = nb - 1
            hist[k + 1] += dt
        return
    dens = dt / (b - a)
    if a < lo_edge:
        hist[0] += dens * (min(b, lo_edge) - a)
    if b > hi_edge:
        hist[nb + 1] += dens * (b - max(a, hi_edge))
    if b <= lo_edge or a >= hi_edge:
        return
    k0 = int((max(a, lo_edge) - lo_edge) / width)
    k1 = int((min(b, hi_edge) - lo_edge) / width)
    if k1 >= nb:
        k1 = nb - 1
    for k in range(k0, k1 + 1):
        e0 = lo_edge + k * width
        e1 = e0 + width
        part = min(b, e1) - max(a, e0)
        if part > 0.0:
            hist[k + 1] += dens * part


def _advance(st, v, up_pos, up_neg, dn_pos, dn_neg, exps, ipos, counters,
             max_events, t_end, lo_exit, hi_exit, occupancy, hist, nb, hist_lo,
             hist_width, trace, trace_cap):
    site = int(st[0])
    ell = st[1]
    t = st[2]
    pos = ipos[0]
    nexp = len(exps)
    status = EVENTS
    while True:
        if site <= lo_exit or site >= hi_exit:
            status = EXITED
            break
        if counters[0] >= max_events:
            status = EVENTS
            break
        if t >= t_end:
            status = TIME
            break
        if pos + 2 > nexp:
            status = NEED_DRAWS
            break
        vi = v[site]
        if ell > 0.0:
            s = 1.0
        elif ell < 0.0:
            s = -1.0
        elif vi > 0.0:
            s = 1.0
        elif vi < 0.0:
            s = -1.0
        else:
            status = STUCK
            break
        m = abs(ell)
        w = vi * s
        if s > 0.0:
            a_up = up_pos[site]
            a_dn = dn_pos[site]
        else:
            a_up = up_neg[site]
            a_dn = dn_neg[site]
        best = _INF
        dest = 0
        if a_up > 0.0:
            cand = _hit_time(m, w, exps[pos] / a_up)
            pos += 1
            if cand < best:
                best = cand
                dest = 1
        if a_dn > 0.0:
            cand = _hit_time(m, w, exps[pos] / a_dn)
            pos += 1
            if cand < best:
                best = cand
                dest = -1
        t_sign = _INF
        if w < 0.0:
            t_sign = m / (-w)
        if best == _INF and t_sign == _INF:
            status = STUCK
            break
        crossing = t_sign < best
        dt = t_sign if crossing else best
        finished = False
        if t + dt >= t_end:
            dt = t_end - t
            crossing = False
            dest = 0
            finished = True
        if crossing:
            new_ell = 0.0
        else:
            new_ell = ell + vi * dt
            if new_ell * s < 0.0 or abs(new_ell) < _ZERO_MEMORY * (m + abs(vi) * dt):
                new_ell = 0.0
        occupancy[site] += dt
        if nb > 0:
            _spread(hist, nb, hist_lo, hist_width, ell, new_ell, dt)
        if counters[4] < trace_cap:
            row = counters[4]
            trace[row, 0] = site
            trace[row, 1] = t
            trace[row, 2] = t + dt
            trace[row, 3] = ell
            trace[row, 4] = new_ell
            counters[4] += 1
        if finished:
            t = t_end
        else:
            t += dt
        ell = new_ell
        if crossing:
            counters[1] += 1
            counters[2] = site
        elif dest != 0:
            if dest * s < 0.0:
                counters[3] += 1
            site += dest
            counters[0] += 1
    st[0] = site
    st[1] = ell
    st[2] = t
    ipos[0] = pos
    return status


def chain_advance(st, v, up_pos, up_neg, dn_pos, dn_neg, exps, ipos, counters,
                  max_events, t_end, lo_exit, hi_exit, occupancy, hist, hist_lo,
                  hist_width, trace):
    """Run the chain until a stop condition; see module docstring for status codes.

    ``st`` is ``[site, memory, clock]``; ``ipos[0]`` is the next unused draw;
    ``counters`` is ``[jumps, sign_changes, last_sign_change_site,
    against_flow_jumps, trace_rows]``. ``hist`` has one underflow and one
    overflow slot around its bins; an empty ``hist`` disables it.
    """
    nb = len(hist) - 2 if len(hist) >= 3 else 0
    return _advance(st, v, up_pos, up_neg, dn_pos, dn_neg, exps, ipos, counters,
                    max_events, t_end, lo_exit, hi_exit, occupancy, hist, nb,
                    hist_lo, hist_width, trace, trace.shape[0])


def excursion_batch(entry, start_site, exit_site, v, up_pos, up_neg, dn_pos, dn_neg,
                    exps, ipos, st, counters, occupancy, out_level, out_speed,
                    out_duration, out_against):
    """Run one excursion per entry memory, resuming at ``ipos[1]``.

    ``st`` and ``counters`` hold the excursion in progress between calls;
    ``ipos[2]`` is 1 while one is in progress.
    """
    empty = [0.0, 0.0]
    no_trace = _EmptyTrace()
    total = len(entry)
    while ipos[1] < total:
        i = ipos[1]
        if ipos[2] == 0:
            st[0] = start_site
            st[1] = entry[i]
            st[2] = 0.0
            for j in range(5):
                counters[j] = 0
            counters[2] = -1
            ipos[2] = 1
        status = _advance(st, v, up_pos, up_neg, dn_pos, dn_neg, exps, ipos, counters,
                          1 << 62, _INF, -1, exit_site, occupancy, empty, 0, 0.0, 1.0,
                          no_trace, 0)
        if status != EXITED:
            return status
        out_level[i] = counters[2]
        out_speed[i] = st[1]
        out_duration[i] = st[2]
        out_against[i] = counters[3]
        ipos[2] = 0
        ipos[1] = i + 1
    return EXITED


class _EmptyTrace:
    shape = (0, 5)


def _noiseless_speed2(law, x2, u, exps, pos):
    """Squared-speed half ``sum_{j >= Z} lambda_j E_j`` and the new draw position."""
    N = int(law[1])
    mus = 2
    lams = 2 + N
    logc = 2 + N + N + 1
    sgn = logc + N * N
    level = 0
    acc = 0.0
    for k in range(N, 0, -1):
        row = (k - 1) * N
        dens = 0.0
        for j in range(k - 1, N):
            dens += law[sgn + row + j] * math.exp(law[logc + row + j] - x2 / law[mus + j])
        pk = law[mus + k - 1] * dens
        if pk < 0.0:
            pk = 0.0
        acc += pk
        if u < acc:
            level = k
            break
    total = 0.0
    for j in range(level, N + 1):
        total += law[lams + j] * exps[pos]
        pos += 1
    return total, pos


def _reflect(law, ell, exps, unis, ipos):
    """Outgoing speed for incoming ``ell``, or ``-1.0`` if more draws are needed.

    On shortage ``ipos[3]`` receives the number of exponentials required.
    """
    x2 = 0.5 * ell * ell
    epos = ipos[0]
    upos = ipos[1]
    nexp = len(exps)
    if law[0] == 0.0:
        N = int(law[1])
        if upos + 1 > len(unis) or epos + N + 1 > nexp:
            ipos[3] = N + 1
            return -1.0
        half, epos = _noiseless_speed2(law, x2, unis[upos], exps, epos)
        ipos[0] = epos
        ipos[1] = upos + 1
        return math.sqrt(2.0 * half)
    g0 = law[1]
    gs = law[2]
    g3 = law[3]
    b1 = law[4]
    b2 = law[5]
    if upos + 2 > len(unis):
        ipos[3] = 0
        return -1.0
    p1 = b2 / (b1 + b2) + b1 / (b1 + b2) * math.exp(-(b1 + b2) * x2)
    at_site0 = unis[upos] >= p1
    J = 1
    if g3 < 1.0:
        J = 1 + int(math.floor(math.log(1.0 - unis[upos + 1]) / math.log1p(-g3)))
    need = 2 * J - 1
    if at_site0:
        need += 1
    if epos + need > nexp:
        ipos[3] = need
        return -1.0
    s = 0.0
    for j in range(J):
        s += gs * exps[epos]
        epos += 1
    for j in range(J - 1):
        s += g0 * exps[epos]
        epos += 1
    if at_site0:
        s += g0 * exps[epos]
        epos += 1
    ipos[0] = epos
    ipos[1] = upos + 2
    return math.sqrt(s)


def billiard_advance(st, law0, law1, exps, unis, ipos, max_refl, t_end, out_u, out_R):
    """Fly and reflect until a stop condition.

    ``st`` is ``[x, ell, t]``; ``ipos`` is ``[exp_pos, uni_pos,
    reflections_written, exps_needed]``. Reflections are written to
    ``out_u``/``out_R`` from index ``ipos[2]``; status 0 means ``max_refl``
    of them have been written.
    """
    x = st[0]
    ell = st[1]
    t = st[2]
    status = EVENTS
    while True:
        if ipos[2] >= max_refl:
            status = EVENTS
            break
        if ell < 0.0:
            dt = x / (-ell)
            target = 0.0
        else:
            dt = (1.0 - x) / ell
            target = 1.0
        if t + dt > t_end:
            x = x + ell * (t_end - t)
            if x < 0.0:
                x = 0.0
            elif x > 1.0:
                x = 1.0
            t = t_end
            status = TIME
            break
        if target == 0.0:
            speed = _reflect(law0, ell, exps, unis, ipos)
        else:
            speed = _reflect(law1, ell, exps, unis, ipos)
        if speed < 0.0:
            status = NEED_DRAWS
            break
        t += dt
        x = target
        ell = speed if target == 0.0 else -speed
        out_u[ipos[2]] = t
        out_R[ipos[2]] = ell
        ipos[2] += 1
    st[0] = x
    st[1] = ell
    st[2] = t
    return status
