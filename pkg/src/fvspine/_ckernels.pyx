# cython: language_level=3
"""Compiled simulation kernels.

Every kernel here has a line-for-line twin in ``_pykernels.py``.  Both draw
from the numpy bit generator through the same C routines
(``random_standard_normal`` and ``next_double``) in the same order, so for a
given generator state the two backends return bit-identical results.
Keep them in sync.
"""

cimport cython
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, sqrt, cos, sin, floor, INFINITY
from libc.stdlib cimport malloc, realloc, free
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal

import numpy as np

cdef double PI = 3.141592653589793
# bridge touches with probability below exp(-36) ~ 2.3e-16 are not sampled
cdef double BRIDGE_CUT = 36.0
# sub-steps used to separate two exits flagged in the same step
cdef int N_SUB = 100
# far from every boundary, m grid steps are merged into one N(0, m dt) move;
# m is capped so the boundary stays 8.5 standard deviations away (p < 2e-17)
cdef double JUMP_K2 = 72.25
cdef long long MAX_JUMP = 4096

BACKEND = "cython"


cdef bitgen_t* _bitgen(object gen) except NULL:
    capsule = gen.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline double _uniform(bitgen_t* rng) noexcept nogil:
    return rng.next_double(rng.state)


cdef inline long long _jump_len(double d, double dt) noexcept nogil:
    cdef long long m
    if d <= 0.0:
        return 1
    m = <long long> (d * d / (JUMP_K2 * dt))
    if m > MAX_JUMP:
        m = MAX_JUMP
    if m < 1:
        m = 1
    return m


cdef inline int _bridge_touch(double x, double xn, double dt, double lo, double hi,
                              bitgen_t* rng) noexcept nogil:
    cdef double e0 = 2.0 * (x - lo) * (xn - lo) / dt
    cdef double e1 = 2.0 * (hi - x) * (hi - xn) / dt
    cdef double p0 = 0.0
    cdef double p1 = 0.0
    cdef double u
    if e0 < BRIDGE_CUT:
        p0 = exp(-e0)
    if e1 < BRIDGE_CUT:
        p1 = exp(-e1)
    if p0 == 0.0 and p1 == 0.0:
        return 0
    u = _uniform(rng)
    if u < p0:
        return 1
    if u < p0 + p1:
        return 2
    return 0


cdef inline int _step(double x, double sdt, double dt, double lo, double hi,
                      bitgen_t* rng, double* out) noexcept nogil:
    cdef double xn = x + sdt * random_standard_normal(rng)
    out[0] = xn
    if xn <= lo:
        return 1
    if xn >= hi:
        return 2
    return _bridge_touch(x, xn, dt, lo, hi, rng)


cdef int _first_sub_exit(double xs, double xe, double dt, double lo, double hi,
                         bitgen_t* rng, double* sub, int* side) noexcept nogil:
    """Bridge from xs to xe on N_SUB sub-steps; index of the first exiting one."""
    cdef double h = dt / N_SUB
    cdef double x = xs
    cdef double nr, mean, sd, a, b
    cdef int k, code
    sub[0] = xs
    for k in range(N_SUB - 1):
        nr = <double>(N_SUB - k)
        mean = x + (xe - x) / nr
        sd = sqrt(h * (nr - 1.0) / nr)
        x = mean + sd * random_standard_normal(rng)
        sub[k + 1] = x
    sub[N_SUB] = xe
    for k in range(N_SUB):
        a = sub[k]
        b = sub[k + 1]
        if b <= lo:
            side[0] = 1
            return k
        if b >= hi:
            side[0] = 2
            return k
        code = _bridge_touch(a, b, h, lo, hi, rng)
        if code != 0:
            side[0] = code
            return k
    # flagged by the macro-step bridge but no sub-step touched: charge the last one
    side[0] = 1 if xe - lo < hi - xe else 2
    return N_SUB - 1


cdef struct TieOutcome:
    int loser
    int side
    double frac
    double survivor


cdef TieOutcome _resolve_tie(double x1s, double x1e, double lo1, double hi1,
                             double x2s, double x2e, double lo2, double hi2,
                             double dt, bitgen_t* rng) noexcept nogil:
    cdef double sub1[101]
    cdef double sub2[101]
    cdef int side1 = 0
    cdef int side2 = 0
    cdef int k1 = _first_sub_exit(x1s, x1e, dt, lo1, hi1, rng, sub1, &side1)
    cdef int k2 = _first_sub_exit(x2s, x2e, dt, lo2, hi2, rng, sub2, &side2)
    cdef TieOutcome out
    cdef int kl
    cdef double y, slo, shi
    if k1 < k2:
        out.loser = 1
    elif k2 < k1:
        out.loser = 2
    else:
        out.loser = 1 if _uniform(rng) < 0.5 else 2
    if out.loser == 1:
        kl = k1
        out.side = side1
        y = sub2[kl + 1]
        slo = lo2
        shi = hi2
        if not (slo < y < shi):
            y = sub2[kl]
    else:
        kl = k2
        out.side = side2
        y = sub1[kl + 1]
        slo = lo1
        shi = hi1
        if not (slo < y < shi):
            y = sub1[kl]
    out.frac = (kl + 1.0) / N_SUB
    out.survivor = y
    return out


def step(double x, double dt, object gen):
    """One bridge-corrected Brownian step in (0, pi); returns (x_new, code)."""
    cdef bitgen_t* rng = _bitgen(gen)
    cdef double xn
    cdef int code
    with gen.bit_generator.lock:
        code = _step(x, sqrt(dt), dt, 0.0, PI, rng, &xn)
    return xn, code


def race(double x0, double y0, double lo1, double hi1, double lo2, double hi2,
         double dt, double probe_dt, Py_ssize_t n, object gen,
         long long max_steps=2000000000):
    """First exit of two independent Brownian coordinates from their intervals.

    Returns arrays (loser, side, time, survivor, probe_half, probe_full) of
    length n.  loser is 1 or 2 (0 if max_steps ran out), side is 1 for the
    lower and 2 for the upper end of the loser's interval.  When probe_dt > 0
    the first two steps have size probe_dt/2 and probe_half/probe_full hold
    W1(probe_dt/2) - x0 and W1(probe_dt) - x0 for the free coordinate 1.
    """
    cdef bitgen_t* rng = _bitgen(gen)
    loser_arr = np.zeros(n, dtype=np.int8)
    side_arr = np.zeros(n, dtype=np.int8)
    time_arr = np.zeros(n, dtype=np.float64)
    surv_arr = np.zeros(n, dtype=np.float64)
    ph_arr = np.full(n, np.nan, dtype=np.float64)
    pf_arr = np.full(n, np.nan, dtype=np.float64)
    cdef signed char[::1] loser_v = loser_arr
    cdef signed char[::1] side_v = side_arr
    cdef double[::1] time_v = time_arr
    cdef double[::1] surv_v = surv_arr
    cdef double[::1] ph_v = ph_arr
    cdef double[::1] pf_v = pf_arr
    cdef double sdt = sqrt(dt)
    cdef double hp = 0.5 * probe_dt
    cdef double shp = sqrt(hp)
    cdef Py_ssize_t i
    cdef int s, c1, c2, decided, loser, side
    cdef double x1, x2, x1n, x2n, t, w1, T, surv, h, d
    cdef long long nsteps, mj
    cdef TieOutcome tie
    with gen.bit_generator.lock, nogil:
        for i in range(n):
            x1 = x0
            x2 = y0
            t = 0.0
            w1 = x0
            decided = 0
            loser = 0
            side = 0
            T = 0.0
            surv = 0.0
            if probe_dt > 0.0:
                for s in range(2):
                    if decided == 0:
                        c1 = _step(x1, shp, hp, lo1, hi1, rng, &x1n)
                        c2 = _step(x2, shp, hp, lo2, hi2, rng, &x2n)
                        w1 = w1 + (x1n - x1)
                        if c1 != 0 and c2 == 0:
                            decided = 1
                            loser = 1
                            side = c1
                            T = t + hp
                            surv = x2n
                        elif c2 != 0 and c1 == 0:
                            decided = 1
                            loser = 2
                            side = c2
                            T = t + hp
                            surv = x1n
                        elif c1 != 0 and c2 != 0:
                            tie = _resolve_tie(x1, x1n, lo1, hi1, x2, x2n, lo2, hi2, hp, rng)
                            decided = 1
                            loser = tie.loser
                            side = tie.side
                            T = t + tie.frac * hp
                            surv = tie.survivor
                        else:
                            x1 = x1n
                            x2 = x2n
                            t = t + hp
                    else:
                        w1 = w1 + shp * random_standard_normal(rng)
                    if s == 0:
                        ph_v[i] = w1 - x0
                    else:
                        pf_v[i] = w1 - x0
            nsteps = 0
            while decided == 0 and nsteps < max_steps:
                d = x1 - lo1
                if hi1 - x1 < d:
                    d = hi1 - x1
                if x2 - lo2 < d:
                    d = x2 - lo2
                if hi2 - x2 < d:
                    d = hi2 - x2
                mj = _jump_len(d, dt)
                if mj >= 2:
                    h = sqrt(mj * dt)
                    x1 = x1 + h * random_standard_normal(rng)
                    x2 = x2 + h * random_standard_normal(rng)
                    t = t + mj * dt
                    nsteps += mj
                    continue
                nsteps += 1
                c1 = _step(x1, sdt, dt, lo1, hi1, rng, &x1n)
                c2 = _step(x2, sdt, dt, lo2, hi2, rng, &x2n)
                if c1 == 0 and c2 == 0:
                    x1 = x1n
                    x2 = x2n
                    t = t + dt
                elif c2 == 0:
                    decided = 1
                    loser = 1
                    side = c1
                    T = t + dt
                    surv = x2n
                elif c1 == 0:
                    decided = 1
                    loser = 2
                    side = c2
                    T = t + dt
                    surv = x1n
                else:
                    tie = _resolve_tie(x1, x1n, lo1, hi1, x2, x2n, lo2, hi2, dt, rng)
                    decided = 1
                    loser = tie.loser
                    side = tie.side
                    T = t + tie.frac * dt
                    surv = tie.survivor
            loser_v[i] = loser
            side_v[i] = side
            time_v[i] = T if decided else t
            surv_v[i] = surv
    return loser_arr, side_arr, time_arr, surv_arr, ph_arr, pf_arr


cdef struct DBuf:
    double* data
    Py_ssize_t size
    Py_ssize_t cap


cdef int _dbuf_push(DBuf* b, double v) noexcept nogil:
    cdef double* p
    if b.size == b.cap:
        b.cap = 2 * b.cap + 16
        p = <double*> realloc(b.data, b.cap * sizeof(double))
        if p == NULL:
            return -1
        b.data = p
    b.data[b.size] = v
    b.size += 1
    return 0


cdef object _dbuf_to_array(DBuf* b):
    arr = np.empty(b.size, dtype=np.float64)
    cdef double[::1] v = arr
    cdef Py_ssize_t i
    for i in range(b.size):
        v[i] = b.data[i]
    free(b.data)
    b.data = NULL
    return arr


cdef inline Py_ssize_t _bin(double x, int nbins) noexcept nogil:
    cdef Py_ssize_t k = <Py_ssize_t> floor(x / PI * nbins)
    if k < 0:
        return 0
    if k >= nbins:
        return nbins - 1
    return k


def fv_run(double a, double b, double horizon, double dt, object gen,
           double[::1] eps, int nbins, double t_warm, long long stride,
           long long max_events):
    """Two-particle Fleming-Viot run on (0, pi) with online accumulators.

    Returns a dict with branch events (T, m, Y), the pair histogram sampled at
    step ends after t_warm, spine occupation times of (0, eps[j]) over
    completed inter-branch intervals after t_warm, the matching observation
    time, and (if stride > 0) path rows every stride steps with spine flags.
    """
    cdef bitgen_t* rng = _bitgen(gen)
    cdef Py_ssize_t ne = eps.shape[0]
    cdef Py_ssize_t j
    hist_arr = np.zeros((nbins, nbins), dtype=np.int64)
    cdef long long[:, ::1] hist = hist_arr
    occ_arr = np.zeros(ne, dtype=np.float64)
    cdef double[::1] spine_occ = occ_arr
    cdef double* buf1 = <double*> malloc((ne + 1) * sizeof(double))
    cdef double* buf2 = <double*> malloc((ne + 1) * sizeof(double))
    cdef DBuf ev_t, ev_m, ev_y, row_t, row_x1, row_x2, row_flag
    ev_t.data = NULL; ev_t.size = 0; ev_t.cap = 0
    ev_m.data = NULL; ev_m.size = 0; ev_m.cap = 0
    ev_y.data = NULL; ev_y.size = 0; ev_y.cap = 0
    row_t.data = NULL; row_t.size = 0; row_t.cap = 0
    row_x1.data = NULL; row_x1.size = 0; row_x1.cap = 0
    row_x2.data = NULL; row_x2.size = 0; row_x2.cap = 0
    row_flag.data = NULL; row_flag.size = 0; row_flag.cap = 0
    cdef double sdt = sqrt(dt)
    cdef double x1 = a
    cdef double x2 = b
    cdef double t = 0.0
    cdef double x1n, x2n, T, y, xs, dur, bt, d, hj
    cdef double eps_max = 0.0
    cdef long long mj
    cdef double spine_time = 0.0
    cdef int c1, c2, loser, surv_idx, oom
    cdef long long step_idx = 0
    cdef long long n_events = 0
    cdef long long hist_samples = 0
    cdef long long n_ties = 0
    cdef Py_ssize_t row_start = 0
    cdef Py_ssize_t r
    cdef TieOutcome tie
    cdef bint overflow = False
    if buf1 == NULL or buf2 == NULL:
        free(buf1)
        free(buf2)
        raise MemoryError()
    for j in range(ne):
        buf1[j] = 0.0
        buf2[j] = 0.0
        if eps[j] > eps_max:
            eps_max = eps[j]
    bt = 0.0
    oom = 0
    with gen.bit_generator.lock, nogil:
        while t < horizon:
            if stride > 0 and step_idx % stride == 0:
                oom |= _dbuf_push(&row_t, t)
                oom |= _dbuf_push(&row_x1, x1)
                oom |= _dbuf_push(&row_x2, x2)
                oom |= _dbuf_push(&row_flag, 0.0)
            # jumps must also stay clear of the occupation band (0, eps_max)
            d = x1 - eps_max
            if PI - x1 < d:
                d = PI - x1
            if x2 - eps_max < d:
                d = x2 - eps_max
            if PI - x2 < d:
                d = PI - x2
            mj = _jump_len(d, dt)
            if stride > 0 and mj > stride - step_idx % stride:
                mj = stride - step_idx % stride
            if mj >= 2:
                hj = sqrt(mj * dt)
                x1 = x1 + hj * random_standard_normal(rng)
                x2 = x2 + hj * random_standard_normal(rng)
                if t >= t_warm:
                    bt += mj * dt
                    hist[_bin(x1, nbins), _bin(x2, nbins)] += mj
                    hist_samples += mj
                t = t + mj * dt
                step_idx += mj
                continue
            step_idx += 1
            c1 = _step(x1, sdt, dt, 0.0, PI, rng, &x1n)
            c2 = _step(x2, sdt, dt, 0.0, PI, rng, &x2n)
            if c1 == 0 and c2 == 0:
                if t >= t_warm:
                    for j in range(ne):
                        buf1[j] += 0.5 * dt * ((x1 < eps[j]) + (x1n < eps[j]))
                        buf2[j] += 0.5 * dt * ((x2 < eps[j]) + (x2n < eps[j]))
                    bt += dt
                    hist[_bin(x1n, nbins), _bin(x2n, nbins)] += 1
                    hist_samples += 1
                x1 = x1n
                x2 = x2n
                t = t + dt
                continue
            if c2 == 0:
                loser = 1
                T = t + dt
                y = x2n
            elif c1 == 0:
                loser = 2
                T = t + dt
                y = x1n
            else:
                tie = _resolve_tie(x1, x1n, 0.0, PI, x2, x2n, 0.0, PI, dt, rng)
                n_ties += 1
                loser = tie.loser
                T = t + tie.frac * dt
                y = tie.survivor
            surv_idx = 3 - loser
            xs = x2 if surv_idx == 2 else x1
            if t >= t_warm:
                dur = T - t
                if surv_idx == 1:
                    for j in range(ne):
                        buf1[j] += 0.5 * dur * ((xs < eps[j]) + (y < eps[j]))
                        spine_occ[j] += buf1[j]
                else:
                    for j in range(ne):
                        buf2[j] += 0.5 * dur * ((xs < eps[j]) + (y < eps[j]))
                        spine_occ[j] += buf2[j]
                spine_time += bt + dur
                hist[_bin(y, nbins), _bin(y, nbins)] += 1
                hist_samples += 1
            for j in range(ne):
                buf1[j] = 0.0
                buf2[j] = 0.0
            bt = 0.0
            oom |= _dbuf_push(&ev_t, T)
            oom |= _dbuf_push(&ev_m, <double> surv_idx)
            oom |= _dbuf_push(&ev_y, y)
            n_events += 1
            for r in range(row_start, row_flag.size):
                row_flag.data[r] = <double> surv_idx
            row_start = row_flag.size
            x1 = y
            x2 = y
            t = T
            if oom != 0 or n_events >= max_events:
                overflow = True
                break
    free(buf1)
    free(buf2)
    out = {
        "T": _dbuf_to_array(&ev_t),
        "m": _dbuf_to_array(&ev_m).astype(np.int8),
        "Y": _dbuf_to_array(&ev_y),
        "hist": hist_arr,
        "hist_samples": hist_samples,
        "spine_occ": occ_arr,
        "spine_time": spine_time,
        "steps": step_idx,
        "ties": n_ties,
        "end_time": t,
        "rows_t": _dbuf_to_array(&row_t),
        "rows_x1": _dbuf_to_array(&row_x1),
        "rows_x2": _dbuf_to_array(&row_x2),
        "rows_flag": _dbuf_to_array(&row_flag).astype(np.int8),
    }
    if oom != 0:
        raise MemoryError("fv_run buffers exhausted")
    out["overflow"] = overflow
    return out


def cond_run(double x0, double horizon, double dt, object gen, double[::1] eps,
             int nbins, long long stride, bint noise=True, double t_warm=0.0):
    """Euler-Maruyama for dX = cot(X) dt + dW on (0, pi).

    Sub-steps of size min(remaining, (d/4)^2) with d the distance to the
    nearer boundary; proposals leaving (0, pi) are redrawn.  Occupation of
    (0, eps[j]) is accumulated by the trapezoid rule after t_warm; histogram
    and path rows are taken on the macro grid.
    """
    cdef bitgen_t* rng = _bitgen(gen)
    cdef Py_ssize_t ne = eps.shape[0]
    cdef Py_ssize_t j
    hist_arr = np.zeros(nbins, dtype=np.int64)
    cdef long long[::1] hist = hist_arr
    occ_arr = np.zeros(ne, dtype=np.float64)
    cdef double[::1] occ = occ_arr
    cdef DBuf row_t, row_x
    row_t.data = NULL; row_t.size = 0; row_t.cap = 0
    row_x.data = NULL; row_x.size = 0; row_x.cap = 0
    cdef long long n_macro = <long long> (horizon / dt + 0.5)
    cdef long long m
    cdef long long substeps = 0
    cdef long long rejections = 0
    cdef double x = x0
    cdef double t = 0.0
    cdef double rem, d, h, drift, xn, z
    cdef double obs_time = 0.0
    cdef double floor_rem = 1e-12 * dt
    cdef int oom = 0
    with gen.bit_generator.lock, nogil:
        for m in range(n_macro):
            if stride > 0 and m % stride == 0:
                oom |= _dbuf_push(&row_t, t)
                oom |= _dbuf_push(&row_x, x)
            rem = dt
            while rem > floor_rem:
                d = x if x < PI - x else PI - x
                h = 0.25 * d
                h = h * h
                if rem < h:
                    h = rem
                drift = cos(x) / sin(x)
                while True:
                    if noise:
                        z = random_standard_normal(rng)
                    else:
                        z = 0.0
                    xn = x + drift * h + sqrt(h) * z
                    if 0.0 < xn < PI:
                        break
                    rejections += 1
                if t >= t_warm:
                    for j in range(ne):
                        occ[j] += 0.5 * h * ((x < eps[j]) + (xn < eps[j]))
                    obs_time += h
                x = xn
                rem = rem - h
                substeps += 1
            t = (m + 1) * dt
            if t > t_warm:
                hist[_bin(x, nbins)] += 1
        if stride > 0 and n_macro % stride == 0:
            oom |= _dbuf_push(&row_t, t)
            oom |= _dbuf_push(&row_x, x)
    out = {
        "occ": occ_arr,
        "obs_time": obs_time,
        "hist": hist_arr,
        "substeps": substeps,
        "rejections": rejections,
        "end_time": t,
        "rows_t": _dbuf_to_array(&row_t),
        "rows_x": _dbuf_to_array(&row_x),
    }
    if oom != 0:
        raise MemoryError("cond_run buffers exhausted")
    return out


def quarter_exit(double x0, double y0, double R, double dt, Py_ssize_t n, object gen,
                 long long max_steps=2000000000):
    """Brownian exit from {x > 0, y > 0, |v| < R}; code 1 = arc, 0 = axes, -1 = undecided."""
    cdef bitgen_t* rng = _bitgen(gen)
    code_arr = np.zeros(n, dtype=np.int8)
    time_arr = np.zeros(n, dtype=np.float64)
    cdef signed char[::1] code_v = code_arr
    cdef double[::1] time_v = time_arr
    cdef double sdt = sqrt(dt)
    cdef double x, y, xn, yn, r, rn, t, ex, ey, er, px, py, pr, u, d, hj
    cdef Py_ssize_t i
    cdef long long k, mj
    cdef int code, hit_axis, hit_arc
    with gen.bit_generator.lock, nogil:
        for i in range(n):
            x = x0
            y = y0
            t = 0.0
            code = -1
            k = 0
            while k < max_steps:
                d = R - sqrt(x * x + y * y)
                if x < d:
                    d = x
                if y < d:
                    d = y
                mj = _jump_len(d, dt)
                if mj >= 2:
                    hj = sqrt(mj * dt)
                    x = x + hj * random_standard_normal(rng)
                    y = y + hj * random_standard_normal(rng)
                    t = t + mj * dt
                    k += mj
                    continue
                k += 1
                xn = x + sdt * random_standard_normal(rng)
                yn = y + sdt * random_standard_normal(rng)
                t = t + dt
                rn = sqrt(xn * xn + yn * yn)
                hit_axis = xn <= 0.0 or yn <= 0.0
                hit_arc = rn >= R
                if hit_axis or hit_arc:
                    if hit_axis and hit_arc:
                        code = 1 if _uniform(rng) < 0.5 else 0
                    else:
                        code = 1 if hit_arc else 0
                    break
                r = sqrt(x * x + y * y)
                ex = 2.0 * x * xn / dt
                ey = 2.0 * y * yn / dt
                er = 2.0 * (R - r) * (R - rn) / dt
                px = exp(-ex) if ex < BRIDGE_CUT else 0.0
                py = exp(-ey) if ey < BRIDGE_CUT else 0.0
                pr = exp(-er) if er < BRIDGE_CUT else 0.0
                if px != 0.0 or py != 0.0 or pr != 0.0:
                    u = _uniform(rng)
                    if u < px + py:
                        code = 0
                        break
                    if u < px + py + pr:
                        code = 1
                        break
                x = xn
                y = yn
            code_v[i] = code
            time_v[i] = t
    return code_arr, time_arr
