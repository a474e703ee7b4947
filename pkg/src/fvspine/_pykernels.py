"""Pure-Python fallback for the compiled kernels in ``_ckernels.pyx``.

Same signatures, same random-number consumption order and the same floating
point operation order, so results match the compiled backend bit for bit.
Roughly two orders of magnitude slower; fine for tests and small runs.
"""

import math

import numpy as np

PI = 3.141592653589793
BRIDGE_CUT = 36.0
N_SUB = 100
JUMP_K2 = 72.25
MAX_JUMP = 4096

BACKEND = "python"


def _jump_len(d, dt):
    if d <= 0.0:
        return 1
    m = int(d * d / (JUMP_K2 * dt))
    if m > MAX_JUMP:
        m = MAX_JUMP
    if m < 1:
        m = 1
    return m


def _bridge_touch(x, xn, dt, lo, hi, gen):
    e0 = 2.0 * (x - lo) * (xn - lo) / dt
    e1 = 2.0 * (hi - x) * (hi - xn) / dt
    p0 = 0.0
    p1 = 0.0
    if e0 < BRIDGE_CUT:
        p0 = math.exp(-e0)
    if e1 < BRIDGE_CUT:
        p1 = math.exp(-e1)
    if p0 == 0.0 and p1 == 0.0:
        return 0
    u = gen.random()
    if u < p0:
        return 1
    if u < p0 + p1:
        return 2
    return 0


def _step(x, sdt, dt, lo, hi, gen):
    xn = x + sdt * gen.standard_normal()
    if xn <= lo:
        return xn, 1
    if xn >= hi:
        return xn, 2
    return xn, _bridge_touch(x, xn, dt, lo, hi, gen)


def _first_sub_exit(xs, xe, dt, lo, hi, gen):
    h = dt / N_SUB
    x = xs
    sub = [0.0] * (N_SUB + 1)
    sub[0] = xs
    for k in range(N_SUB - 1):
        nr = float(N_SUB - k)
        mean = x + (xe - x) / nr
        sd = math.sqrt(h * (nr - 1.0) / nr)
        x = mean + sd * gen.standard_normal()
        sub[k + 1] = x
    sub[N_SUB] = xe
    for k in range(N_SUB):
        a = sub[k]
        b = sub[k + 1]
        if b <= lo:
            return k, 1, sub
        if b >= hi:
            return k, 2, sub
        code = _bridge_touch(a, b, h, lo, hi, gen)
        if code != 0:
            return k, code, sub
    side = 1 if xe - lo < hi - xe else 2
    return N_SUB - 1, side, sub


def _resolve_tie(x1s, x1e, lo1, hi1, x2s, x2e, lo2, hi2, dt, gen):
    """Returns (loser, side, frac, survivor)."""
    k1, side1, sub1 = _first_sub_exit(x1s, x1e, dt, lo1, hi1, gen)
    k2, side2, sub2 = _first_sub_exit(x2s, x2e, dt, lo2, hi2, gen)
    if k1 < k2:
        loser = 1
    elif k2 < k1:
        loser = 2
    else:
        loser = 1 if gen.random() < 0.5 else 2
    if loser == 1:
        kl, side, sub, slo, shi = k1, side1, sub2, lo2, hi2
    else:
        kl, side, sub, slo, shi = k2, side2, sub1, lo1, hi1
    y = sub[kl + 1]
    if not (slo < y < shi):
        y = sub[kl]
    return loser, side, (kl + 1.0) / N_SUB, y


def step(x, dt, gen):
    return _step(float(x), math.sqrt(dt), float(dt), 0.0, PI, gen)


def race(x0, y0, lo1, hi1, lo2, hi2, dt, probe_dt, n, gen, max_steps=2000000000):
    loser_arr = np.zeros(n, dtype=np.int8)
    side_arr = np.zeros(n, dtype=np.int8)
    time_arr = np.zeros(n, dtype=np.float64)
    surv_arr = np.zeros(n, dtype=np.float64)
    ph_arr = np.full(n, np.nan)
    pf_arr = np.full(n, np.nan)
    x0 = float(x0)
    y0 = float(y0)
    sdt = math.sqrt(dt)
    hp = 0.5 * probe_dt
    shp = math.sqrt(hp)
    for i in range(n):
        x1 = x0
        x2 = y0
        t = 0.0
        w1 = x0
        decided = False
        loser = side = 0
        T = surv = 0.0
        if probe_dt > 0.0:
            for s in range(2):
                if not decided:
                    x1n, c1 = _step(x1, shp, hp, lo1, hi1, gen)
                    x2n, c2 = _step(x2, shp, hp, lo2, hi2, gen)
                    w1 = w1 + (x1n - x1)
                    if c1 != 0 and c2 == 0:
                        decided, loser, side, T, surv = True, 1, c1, t + hp, x2n
                    elif c2 != 0 and c1 == 0:
                        decided, loser, side, T, surv = True, 2, c2, t + hp, x1n
                    elif c1 != 0 and c2 != 0:
                        loser, side, frac, surv = _resolve_tie(x1, x1n, lo1, hi1, x2, x2n, lo2, hi2, hp, gen)
                        decided = True
                        T = t + frac * hp
                    else:
                        x1 = x1n
                        x2 = x2n
                        t = t + hp
                else:
                    w1 = w1 + shp * gen.standard_normal()
                if s == 0:
                    ph_arr[i] = w1 - x0
                else:
                    pf_arr[i] = w1 - x0
        nsteps = 0
        while not decided and nsteps < max_steps:
            d = min(x1 - lo1, hi1 - x1, x2 - lo2, hi2 - x2)
            mj = _jump_len(d, dt)
            if mj >= 2:
                h = math.sqrt(mj * dt)
                x1 = x1 + h * gen.standard_normal()
                x2 = x2 + h * gen.standard_normal()
                t = t + mj * dt
                nsteps += mj
                continue
            nsteps += 1
            x1n, c1 = _step(x1, sdt, dt, lo1, hi1, gen)
            x2n, c2 = _step(x2, sdt, dt, lo2, hi2, gen)
            if c1 == 0 and c2 == 0:
                x1 = x1n
                x2 = x2n
                t = t + dt
            elif c2 == 0:
                decided, loser, side, T, surv = True, 1, c1, t + dt, x2n
            elif c1 == 0:
                decided, loser, side, T, surv = True, 2, c2, t + dt, x1n
            else:
                loser, side, frac, surv = _resolve_tie(x1, x1n, lo1, hi1, x2, x2n, lo2, hi2, dt, gen)
                decided = True
                T = t + frac * dt
        loser_arr[i] = loser
        side_arr[i] = side
        time_arr[i] = T if decided else t
        surv_arr[i] = surv
    return loser_arr, side_arr, time_arr, surv_arr, ph_arr, pf_arr


def _bin(x, nbins):
    k = int(math.floor(x / PI * nbins))
    if k < 0:
        return 0
    if k >= nbins:
        return nbins - 1
    return k


def fv_run(a, b, horizon, dt, gen, eps, nbins, t_warm, stride, max_events):
    eps = [float(e) for e in eps]
    ne = len(eps)
    hist = np.zeros((nbins, nbins), dtype=np.int64)
    spine_occ = [0.0] * ne
    buf1 = [0.0] * ne
    buf2 = [0.0] * ne
    ev_t, ev_m, ev_y = [], [], []
    row_t, row_x1, row_x2, row_flag = [], [], [], []
    sdt = math.sqrt(dt)
    x1 = float(a)
    x2 = float(b)
    t = 0.0
    bt = 0.0
    spine_time = 0.0
    step_idx = 0
    n_events = 0
    hist_samples = 0
    n_ties = 0
    row_start = 0
    overflow = False
    eps_max = max(eps) if eps else 0.0
    eps_max = max(eps_max, 0.0)
    while t < horizon:
        if stride > 0 and step_idx % stride == 0:
            row_t.append(t)
            row_x1.append(x1)
            row_x2.append(x2)
            row_flag.append(0)
        d = min(x1 - eps_max, PI - x1, x2 - eps_max, PI - x2)
        mj = _jump_len(d, dt)
        if stride > 0 and mj > stride - step_idx % stride:
            mj = stride - step_idx % stride
        if mj >= 2:
            hj = math.sqrt(mj * dt)
            x1 = x1 + hj * gen.standard_normal()
            x2 = x2 + hj * gen.standard_normal()
            if t >= t_warm:
                bt += mj * dt
                hist[_bin(x1, nbins), _bin(x2, nbins)] += mj
                hist_samples += mj
            t = t + mj * dt
            step_idx += mj
            continue
        step_idx += 1
        x1n, c1 = _step(x1, sdt, dt, 0.0, PI, gen)
        x2n, c2 = _step(x2, sdt, dt, 0.0, PI, gen)
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
            loser, T, y = 1, t + dt, x2n
        elif c1 == 0:
            loser, T, y = 2, t + dt, x1n
        else:
            loser, _side, frac, y = _resolve_tie(x1, x1n, 0.0, PI, x2, x2n, 0.0, PI, dt, gen)
            n_ties += 1
            T = t + frac * dt
        surv_idx = 3 - loser
        xs = x2 if surv_idx == 2 else x1
        if t >= t_warm:
            dur = T - t
            buf = buf1 if surv_idx == 1 else buf2
            for j in range(ne):
                buf[j] += 0.5 * dur * ((xs < eps[j]) + (y < eps[j]))
                spine_occ[j] += buf[j]
            spine_time += bt + dur
            hist[_bin(y, nbins), _bin(y, nbins)] += 1
            hist_samples += 1
        buf1 = [0.0] * ne
        buf2 = [0.0] * ne
        bt = 0.0
        ev_t.append(T)
        ev_m.append(surv_idx)
        ev_y.append(y)
        n_events += 1
        for r in range(row_start, len(row_flag)):
            row_flag[r] = surv_idx
        row_start = len(row_flag)
        x1 = y
        x2 = y
        t = T
        if n_events >= max_events:
            overflow = True
            break
    return {
        "T": np.array(ev_t, dtype=np.float64),
        "m": np.array(ev_m, dtype=np.int8),
        "Y": np.array(ev_y, dtype=np.float64),
        "hist": hist,
        "hist_samples": hist_samples,
        "spine_occ": np.array(spine_occ, dtype=np.float64),
        "spine_time": spine_time,
        "steps": step_idx,
        "ties": n_ties,
        "end_time": t,
        "rows_t": np.array(row_t, dtype=np.float64),
        "rows_x1": np.array(row_x1, dtype=np.float64),
        "rows_x2": np.array(row_x2, dtype=np.float64),
        "rows_flag": np.array(row_flag, dtype=np.int8),
        "overflow": overflow,
    }


def cond_run(x0, horizon, dt, gen, eps, nbins, stride, noise=True, t_warm=0.0):
    eps = [float(e) for e in eps]
    ne = len(eps)
    hist = np.zeros(nbins, dtype=np.int64)
    occ = [0.0] * ne
    row_t, row_x = [], []
    n_macro = int(horizon / dt + 0.5)
    substeps = 0
    rejections = 0
    x = float(x0)
    t = 0.0
    obs_time = 0.0
    floor_rem = 1e-12 * dt
    for m in range(n_macro):
        if stride > 0 and m % stride == 0:
            row_t.append(t)
            row_x.append(x)
        rem = dt
        while rem > floor_rem:
            d = x if x < PI - x else PI - x
            h = 0.25 * d
            h = h * h
            if rem < h:
                h = rem
            drift = math.cos(x) / math.sin(x)
            while True:
                z = gen.standard_normal() if noise else 0.0
                xn = x + drift * h + math.sqrt(h) * z
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
        row_t.append(t)
        row_x.append(x)
    return {
        "occ": np.array(occ, dtype=np.float64),
        "obs_time": obs_time,
        "hist": hist,
        "substeps": substeps,
        "rejections": rejections,
        "end_time": t,
        "rows_t": np.array(row_t, dtype=np.float64),
        "rows_x": np.array(row_x, dtype=np.float64),
    }


def quarter_exit(x0, y0, R, dt, n, gen, max_steps=2000000000):
    code_arr = np.zeros(n, dtype=np.int8)
    time_arr = np.zeros(n, dtype=np.float64)
    sdt = math.sqrt(dt)
    for i in range(n):
        x = float(x0)
        y = float(y0)
        t = 0.0
        code = -1
        k = 0
        while k < max_steps:
            d = min(R - math.sqrt(x * x + y * y), x, y)
            mj = _jump_len(d, dt)
            if mj >= 2:
                hj = math.sqrt(mj * dt)
                x = x + hj * gen.standard_normal()
                y = y + hj * gen.standard_normal()
                t = t + mj * dt
                k += mj
                continue
            k += 1
            xn = x + sdt * gen.standard_normal()
            yn = y + sdt * gen.standard_normal()
            t = t + dt
            rn = math.sqrt(xn * xn + yn * yn)
            hit_axis = xn <= 0.0 or yn <= 0.0
            hit_arc = rn >= R
            if hit_axis or hit_arc:
                if hit_axis and hit_arc:
                    code = 1 if gen.random() < 0.5 else 0
                else:
                    code = 1 if hit_arc else 0
                break
            r = math.sqrt(x * x + y * y)
            ex = 2.0 * x * xn / dt
            ey = 2.0 * y * yn / dt
            er = 2.0 * (R - r) * (R - rn) / dt
            px = math.exp(-ex) if ex < BRIDGE_CUT else 0.0
            py = math.exp(-ey) if ey < BRIDGE_CUT else 0.0
            pr = math.exp(-er) if er < BRIDGE_CUT else 0.0
            if px != 0.0 or py != 0.0 or pr != 0.0:
                u = gen.random()
                if u < px + py:
                    code = 0
                    break
                if u < px + py + pr:
                    code = 1
                    break
            x = xn
            y = yn
        code_arr[i] = code
        time_arr[i] = t
    return code_arr, time_arr
