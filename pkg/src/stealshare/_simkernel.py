"""Compiled event loop for one replication of the N-server farm.

External events (arrivals and probes) are drawn from their superposed
Poisson stream: rate ``N*lam + r*n_eligible``, re-drawn after every event,
which is exact by memorylessness. Departures sit in a binary heap keyed on
completion time. Service durations are sampled whole at service start.
"""

import numpy as np
from numba import njit

STEAL = 0
SHARE = 1

# layout of the stats vector returned by run_replication
ST_RESP_SUM = 0
ST_COMPLETED = 1
ST_AREA_JOBS = 2
ST_AREA_GE1 = 3
ST_AREA_GE2 = 4
ST_AREA_GE3 = 5
ST_PROBES = 6
ST_TRANSFERS = 7
ST_ARRIVALS = 8
ST_OBS_TIME = 9
ST_MAX_QUEUE = 10
N_STATS = 11


@njit(cache=True)
def _sample_service(alpha_cum, rates, jump_cum, n):
    u = np.random.random()
    phase = 0
    while phase < n - 1 and u >= alpha_cum[phase]:
        phase += 1
    total = 0.0
    while True:
        total += np.random.exponential(1.0 / rates[phase])
        u = np.random.random()
        nxt = 0
        while nxt < n and u >= jump_cum[phase, nxt]:
            nxt += 1
        if nxt == n:
            return total
        phase = nxt


@njit(cache=True)
def _heap_push(ht, hs, size, t, s):
    i = size
    ht[i] = t
    hs[i] = s
    while i > 0:
        p = (i - 1) >> 1
        if ht[p] <= ht[i]:
            break
        ht[p], ht[i] = ht[i], ht[p]
        hs[p], hs[i] = hs[i], hs[p]
        i = p
    return size + 1


@njit(cache=True)
def _heap_pop(ht, hs, size):
    size -= 1
    ht[0] = ht[size]
    hs[0] = hs[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        c = left
        if left + 1 < size and ht[left + 1] < ht[left]:
            c = left + 1
        if ht[i] <= ht[c]:
            break
        ht[c], ht[i] = ht[i], ht[c]
        hs[c], hs[i] = hs[i], hs[c]
        i = c
    return size


@njit(cache=True)
def _set_add(lst, pos, cnt, s):
    lst[cnt] = s
    pos[s] = cnt
    return cnt + 1


@njit(cache=True)
def _set_remove(lst, pos, cnt, s):
    i = pos[s]
    last = lst[cnt - 1]
    lst[i] = last
    pos[last] = i
    pos[s] = -1
    return cnt - 1


@njit(cache=True)
def _grow(buf, head, qlen):
    n_srv, cap = buf.shape
    new = np.empty((n_srv, 2 * cap))
    for s in range(n_srv):
        for j in range(qlen[s]):
            new[s, j] = buf[s, (head[s] + j) % cap]
        head[s] = 0
    return new


@njit(cache=True)
def run_replication(
    n_srv, lam, r, strategy, alpha_cum, rates, jump_cum, horizon, warmup, seed, init_cap
):
    """Simulate ``[0, horizon]`` from an empty system; statistics start at ``warmup``."""
    np.random.seed(seed)
    n_ph = rates.size
    stats = np.zeros(N_STATS)

    cap = init_cap
    buf = np.empty((n_srv, cap))  # arrival times, ring buffer per server, front = in service
    head = np.zeros(n_srv, np.int64)
    qlen = np.zeros(n_srv, np.int64)

    idle_lst = np.empty(n_srv, np.int64)
    idle_pos = np.full(n_srv, -1, np.int64)
    multi_lst = np.empty(n_srv, np.int64)
    multi_pos = np.full(n_srv, -1, np.int64)
    n_idle = 0
    n_multi = 0
    for s in range(n_srv):
        n_idle = _set_add(idle_lst, idle_pos, n_idle, s)
    n_ge3 = 0
    n_jobs = 0

    ht = np.empty(n_srv)
    hs = np.empty(n_srv, np.int64)
    hsize = 0

    arr_rate = n_srv * lam
    t = 0.0
    while True:
        n_elig = n_idle if strategy == STEAL else n_multi
        ext_rate = arr_rate + r * n_elig
        t_ext = t + np.random.exponential(1.0 / ext_rate)
        is_dep = hsize > 0 and ht[0] < t_ext
        t_next = ht[0] if is_dep else t_ext
        if t_next > horizon:
            t_next = horizon
        if t_next > warmup:
            dt = t_next - (t if t > warmup else warmup)
            stats[ST_AREA_JOBS] += n_jobs * dt
            stats[ST_AREA_GE1] += (n_srv - n_idle) * dt
            stats[ST_AREA_GE2] += n_multi * dt
            stats[ST_AREA_GE3] += n_ge3 * dt
        if t_next >= horizon:
            break
        t = t_next
        measuring = t >= warmup

        if is_dep:
            s = hs[0]
            hsize = _heap_pop(ht, hs, hsize)
            if measuring:
                stats[ST_RESP_SUM] += t - buf[s, head[s]]
                stats[ST_COMPLETED] += 1
            head[s] = (head[s] + 1) % cap
            qlen[s] -= 1
            n_jobs -= 1
            if qlen[s] == 0:
                n_idle = _set_add(idle_lst, idle_pos, n_idle, s)
            else:
                if qlen[s] == 1:
                    n_multi = _set_remove(multi_lst, multi_pos, n_multi, s)
                elif qlen[s] == 2:
                    n_ge3 -= 1
                hsize = _heap_push(ht, hs, hsize, t + _sample_service(alpha_cum, rates, jump_cum, n_ph), s)
            continue

        u = np.random.random() * ext_rate
        if u < arr_rate:
            s = np.random.randint(0, n_srv)
            if qlen[s] == cap:
                buf = _grow(buf, head, qlen)
                cap = buf.shape[1]
            buf[s, (head[s] + qlen[s]) % cap] = t
            qlen[s] += 1
            n_jobs += 1
            if measuring:
                stats[ST_ARRIVALS] += 1
            if qlen[s] == 1:
                n_idle = _set_remove(idle_lst, idle_pos, n_idle, s)
                hsize = _heap_push(ht, hs, hsize, t + _sample_service(alpha_cum, rates, jump_cum, n_ph), s)
            elif qlen[s] == 2:
                n_multi = _set_add(multi_lst, multi_pos, n_multi, s)
            elif qlen[s] == 3:
                n_ge3 += 1
            if qlen[s] > stats[ST_MAX_QUEUE]:
                stats[ST_MAX_QUEUE] = qlen[s]
            continue

        # probe from a uniformly chosen eligible server to a uniformly chosen other server
        if strategy == STEAL:
            src_probe = idle_lst[np.random.randint(0, n_idle)]
        else:
            src_probe = multi_lst[np.random.randint(0, n_multi)]
        tgt = np.random.randint(0, n_srv - 1)
        if tgt >= src_probe:
            tgt += 1
        if measuring:
            stats[ST_PROBES] += 1
        if strategy == STEAL:
            donor, taker = tgt, src_probe
        else:
            donor, taker = src_probe, tgt
        if qlen[donor] < 2 or qlen[taker] != 0:
            continue
        # move the job at the back of the donor queue; the job in service stays put
        last = (head[donor] + qlen[donor] - 1) % cap
        if last == head[donor]:
            raise RuntimeError("attempted to transfer the job in service")
        arrived = buf[donor, last]
        qlen[donor] -= 1
        if qlen[donor] == 1:
            n_multi = _set_remove(multi_lst, multi_pos, n_multi, donor)
        elif qlen[donor] == 2:
            n_ge3 -= 1
        buf[taker, head[taker]] = arrived
        qlen[taker] = 1
        n_idle = _set_remove(idle_lst, idle_pos, n_idle, taker)
        hsize = _heap_push(ht, hs, hsize, t + _sample_service(alpha_cum, rates, jump_cum, n_ph), taker)
        if measuring:
            stats[ST_TRANSFERS] += 1

    stats[ST_OBS_TIME] = horizon - warmup
    return stats
