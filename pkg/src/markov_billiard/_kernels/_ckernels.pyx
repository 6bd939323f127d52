# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Statement-by-statement mirror of ``_pykernels``; see there for the
argument conventions and status codes.
"""

from libc.math cimport sqrt, exp, log, log1p, floor, fabs, INFINITY

cdef enum:
    EVENTS = 0
    TIME = 1
    EXITED = 2
    NEED_DRAWS = 3
    STUCK = 4

cdef double _ZERO_MEMORY = 1e-14


cdef inline double _hit_time(double m, double w, double h) nogil:
    cdef double disc
    if w > 0.0:
        return 2.0 * h / (m + sqrt(m * m + 2.0 * w * h))
    if w == 0.0:
        if m > 0.0:
            return h / m
        return INFINITY
    disc = m * m + 2.0 * w * h
    if disc > 0.0:
        return 2.0 * h / (m + sqrt(disc))
    return INFINITY


cdef void _spread(double[::1] hist, Py_ssize_t nb, double lo_edge, double width,
                  double a, double b, double dt) nogil:
    cdef double tmp, hi_edge, dens, e0, e1, part
    cdef Py_ssize_t k, k0, k1
    if a > b:
        tmp = a
        a = b
        b = tmp
    hi_edge = lo_edge + nb * width
    if b - a <= 0.0:
        if a < lo_edge:
            hist[0] += dt
        elif a >= hi_edge:
            hist[nb + 1] += dt
        else:
            k = <Py_ssize_t>((a - lo_edge) / width)
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
    k0 = <Py_ssize_t>((max(a, lo_edge) - lo_edge) / width)
    k1 = <Py_ssize_t>((min(b, hi_edge) - lo_edge) / width)
    if k1 >= nb:
        k1 = nb - 1
    for k in range(k0, k1 + 1):
        e0 = lo_edge + k * width
        e1 = e0 + width
        part = min(b, e1) - max(a, e0)
        if part > 0.0:
            hist[k + 1] += dens * part


cdef int _advance(double[::1] st, const double[::1] v, const double[::1] up_pos,
                  const double[::1] up_neg, const double[::1] dn_pos,
                  const double[::1] dn_neg, const double[::1] exps, long long[::1] ipos,
                  long long[::1] counters, long long max_events, double t_end,
                  long long lo_exit, long long hi_exit, double[::1] occupancy,
                  double[::1] hist, Py_ssize_t nb, double hist_lo, double hist_width,
                  double[:, ::1] trace, long long trace_cap) nogil:
    cdef long long site = <long long>st[0]
    cdef double ell = st[1]
    cdef double t = st[2]
    cdef long long pos = ipos[0]
    cdef long long nexp = exps.shape[0]
    cdef int status = EVENTS
    cdef double vi, s, m, w, a_up, a_dn, best, cand, t_sign, dt, new_ell
    cdef int dest, crossing, finished
    cdef long long row
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
        m = fabs(ell)
        w = vi * s
        if s > 0.0:
            a_up = up_pos[site]
            a_dn = dn_pos[site]
        else:
            a_up = up_neg[site]
            a_dn = dn_neg[site]
        best = INFINITY
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
        t_sign = INFINITY
        if w < 0.0:
            t_sign = m / (-w)
        if best == INFINITY and t_sign == INFINITY:
            status = STUCK
            break
        crossing = t_sign < best
        dt = t_sign if crossing else best
        finished = 0
        if t + dt >= t_end:
            dt = t_end - t
            crossing = 0
            dest = 0
            finished = 1
        if crossing:
            new_ell = 0.0
        else:
            new_ell = ell + vi * dt
            if new_ell * s < 0.0 or fabs(new_ell) < _ZERO_MEMORY * (m + fabs(vi) * dt):
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


def chain_advance(double[::1] st, const double[::1] v, const double[::1] up_pos,
                  const double[::1] up_neg, const double[::1] dn_pos,
                  const double[::1] dn_neg, const double[::1] exps, long long[::1] ipos,
                  long long[::1] counters, long long max_events, double t_end,
                  long long lo_exit, long long hi_exit, double[::1] occupancy,
                  double[::1] hist, double hist_lo, double hist_width,
                  double[:, ::1] trace):
    cdef Py_ssize_t nb = hist.shape[0] - 2 if hist.shape[0] >= 3 else 0
    cdef int status
    with nogil:
        status = _advance(st, v, up_pos, up_neg, dn_pos, dn_neg, exps, ipos, counters,
                          max_events, t_end, lo_exit, hi_exit, occupancy, hist, nb,
                          hist_lo, hist_width, trace, trace.shape[0])
    return status


def excursion_batch(const double[::1] entry, long long start_site, long long exit_site,
                    const double[::1] v, const double[::1] up_pos,
                    const double[::1] up_neg, const double[::1] dn_pos,
                    const double[::1] dn_neg, const double[::1] exps,
                    long long[::1] ipos, double[::1] st, long long[::1] counters,
                    double[::1] occupancy, long long[::1] out_level,
                    double[::1] out_speed, double[::1] out_duration,
                    long long[::1] out_against):
    cdef double[::1] empty = st[:0]
    cdef double[:, ::1] no_trace
    cdef Py_ssize_t total = entry.shape[0]
    cdef Py_ssize_t i
    cdef int j, status
    import numpy as np
    no_trace = np.zeros((0, 5))
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
                          1LL << 62, INFINITY, -1, exit_site, occupancy, empty, 0, 0.0,
                          1.0, no_trace, 0)
        if status != EXITED:
            return status
        out_level[i] = counters[2]
        out_speed[i] = st[1]
        out_duration[i] = st[2]
        out_against[i] = counters[3]
        ipos[2] = 0
        ipos[1] = i + 1
    return EXITED


cdef double _noiseless_speed2(const double[::1] law, double x2, double u,
                              const double[::1] exps, long long* pos) nogil:
    cdef int N = <int>law[1]
    cdef Py_ssize_t mus = 2
    cdef Py_ssize_t lams = 2 + N
    cdef Py_ssize_t logc = 2 + N + N + 1
    cdef Py_ssize_t sgn = logc + N * N
    cdef int level = 0
    cdef double acc = 0.0
    cdef double dens, pk, total
    cdef Py_ssize_t row
    cdef int k, j
    for k in range(N, 0, -1):
        row = (k - 1) * N
        dens = 0.0
        for j in range(k - 1, N):
            dens += law[sgn + row + j] * exp(law[logc + row + j] - x2 / law[mus + j])
        pk = law[mus + k - 1] * dens
        if pk < 0.0:
            pk = 0.0
        acc += pk
        if u < acc:
            level = k
            break
    total = 0.0
    for j in range(level, N + 1):
        total += law[lams + j] * exps[pos[0]]
        pos[0] += 1
    return total


cdef double _reflect(const double[::1] law, double ell, const double[::1] exps,
                     const double[::1] unis, long long[::1] ipos) nogil:
    cdef double x2 = 0.5 * ell * ell
    cdef long long epos = ipos[0]
    cdef long long upos = ipos[1]
    cdef long long nexp = exps.shape[0]
    cdef int N
    cdef double half, g0, gs, g3, b1, b2, p1, s
    cdef int at_site0
    cdef long long J, need, j
    if law[0] == 0.0:
        N = <int>law[1]
        if upos + 1 > unis.shape[0] or epos + N + 1 > nexp:
            ipos[3] = N + 1
            return -1.0
        half = _noiseless_speed2(law, x2, unis[upos], exps, &epos)
        ipos[0] = epos
        ipos[1] = upos + 1
        return sqrt(2.0 * half)
    g0 = law[1]
    gs = law[2]
    g3 = law[3]
    b1 = law[4]
    b2 = law[5]
    if upos + 2 > unis.shape[0]:
        ipos[3] = 0
        return -1.0
    p1 = b2 / (b1 + b2) + b1 / (b1 + b2) * exp(-(b1 + b2) * x2)
    at_site0 = unis[upos] >= p1
    J = 1
    if g3 < 1.0:
        J = 1 + <long long>floor(log(1.0 - unis[upos + 1]) / log1p(-g3))
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
    return sqrt(s)


def billiard_advance(double[::1] st, const double[::1] law0, const double[::1] law1,
                     const double[::1] exps, const double[::1] unis, long long[::1] ipos,
                     long long max_refl, double t_end, double[::1] out_u,
                     double[::1] out_R):
    cdef double x = st[0]
    cdef double ell = st[1]
    cdef double t = st[2]
    cdef int status = EVENTS
    cdef double dt, target, speed
    with nogil:
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
