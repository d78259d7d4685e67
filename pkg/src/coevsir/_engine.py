"""Compiled event loop of the exact stochastic simulator.

Aggregate-rate Gillespie scheme: every non-static pair carries a rate-gamma
redraw clock, every susceptible a rate-lambda contact clock (thinned by the
share of infected neighbours), every infected a rate-1 recovery clock.  Since
all pair clocks share one rate, a uniform pair among the non-recovered
vertices is drawn directly.
"""
import numpy as np
from numba import njit

S, I, R = 0, 1, 2
SS, SI, II, OTHER = 0, 1, 2, 3

STATUS_OK = 0
STATUS_BUDGET = 1
STATUS_BAD_ACCEPTANCE = 2

# sample columns
N_S, N_I, N_R, RECENT, E_SS, E_SI, E_II, E_OTHER = range(8)
# counter slots
C_EVENTS, C_INFECTIONS, C_RECOVERIES, C_REDRAWS, C_FLIPS, C_ATTEMPTS = range(6)


@njit(cache=True)
def _pair_cat(a, b):
    if a == R or b == R:
        return OTHER
    return a + b


@njit(cache=True)
def _remove(lst, pos, size, v):
    # swap-remove v from lst (positions in pos); returns new size
    k = pos[v]
    last = lst[size - 1]
    lst[k] = last
    pos[last] = k
    pos[v] = -1
    return size - 1


@njit(cache=True)
def _append(lst, pos, size, v):
    lst[size] = v
    pos[v] = size
    return size + 1


@njit(cache=True)
def run(adj, state, tinf, p0, lam, gamma, horizon,
        behavioral, phi1, phi2, window_a, ss_norm, ss_dist,
        si_ages, si_norm, si_dist, ii_norm, ii_dist, inf_ages, inf_values,
        mimic, grid_t, grid_J, grid_phi,
        sample_times, snap_times, seed, budget):
    np.random.seed(seed)
    n = state.shape[0]
    inv_n = 1.0 / n

    alive = np.empty(n, np.int64)
    alive_pos = -np.ones(n, np.int64)
    sus = np.empty(n, np.int64)
    sus_pos = -np.ones(n, np.int64)
    inf = np.empty(n, np.int64)
    inf_pos = -np.ones(n, np.int64)
    n_alive = 0
    n_s = 0
    n_i = 0
    n_r = 0
    # infection order, used to track the share infected within the window
    order = np.empty(n, np.int64)
    order_pos = -np.ones(n, np.int64)
    n_order = 0
    for v in range(n):
        if state[v] != R:
            n_alive = _append(alive, alive_pos, n_alive, v)
        if state[v] == S:
            n_s = _append(sus, sus_pos, n_s, v)
        elif state[v] == I:
            n_i = _append(inf, inf_pos, n_i, v)
        else:
            n_r += 1
    # initial infected first, then in order of infection time
    idx = np.argsort(tinf, kind="mergesort")
    for k in range(n):
        v = idx[k]
        if state[v] == I:
            order[n_order] = v
            order_pos[v] = n_order
            n_order += 1
    head = 0
    recent = n_i

    edges = np.zeros(4, np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if adj[i, j]:
                edges[_pair_cat(state[i], state[j])] += 1

    n_samples = sample_times.shape[0]
    samples = np.zeros((n_samples, 8))
    n_snaps = snap_times.shape[0]
    snap_adj = np.zeros((n_snaps, n, n), np.uint8)
    snap_state = np.zeros((n_snaps, n), np.int8)
    snap_tinf = np.zeros((n_snaps, n))
    counters = np.zeros(6, np.int64)
    next_sample = 0
    next_snap = 0
    status = STATUS_OK
    t = 0.0

    while True:
        m = float(n_alive)
        rate_edges = gamma * 0.5 * m * (m - 1.0)
        rate_inf = lam * n_s
        total = rate_edges + rate_inf + n_i
        if total > 0.0:
            t_next = t + np.random.exponential(1.0 / total)
        else:
            t_next = np.inf
        # observations on [t, t_next) see the current configuration
        while next_sample < n_samples and sample_times[next_sample] < t_next:
            g = sample_times[next_sample]
            while head < n_order and tinf[order[head]] < g - window_a:
                if state[order[head]] == I:
                    recent -= 1
                head += 1
            samples[next_sample, N_S] = n_s
            samples[next_sample, N_I] = n_i
            samples[next_sample, N_R] = n_r
            samples[next_sample, RECENT] = recent
            for c in range(4):
                samples[next_sample, E_SS + c] = edges[c]
            next_sample += 1
        while next_snap < n_snaps and snap_times[next_snap] < t_next:
            snap_adj[next_snap] = adj
            snap_state[next_snap] = state
            snap_tinf[next_snap] = tinf
            next_snap += 1
        if t_next > horizon:
            break
        t = t_next
        counters[C_EVENTS] += 1
        if counters[C_EVENTS] > budget:
            status = STATUS_BUDGET
            break
        while head < n_order and tinf[order[head]] < t - window_a:
            if state[order[head]] == I:
                recent -= 1
            head += 1

        u = np.random.random() * total
        if u < rate_edges:
            a = np.random.randint(0, n_alive)
            b = np.random.randint(0, n_alive - 1)
            if b >= a:
                b += 1
            i = alive[a]
            j = alive[b]
            if behavioral:
                if mimic:
                    phi = np.interp(t, grid_t, grid_phi)
                else:
                    phi = recent * inv_n
                ramp = (phi - phi1) / (phi2 - phi1)
                ramp = min(max(ramp, 0.0), 1.0)
                d = 0.1 + 0.8 * ramp
            else:
                d = 0.0
            si_ = state[i]
            sj_ = state[j]
            if si_ == S and sj_ == S:
                pi = (1.0 - d) * ss_norm + d * ss_dist
            elif si_ == I and sj_ == I:
                pi = (1.0 - d) * ii_norm + d * ii_dist
            else:
                age = t - tinf[i] if si_ == I else t - tinf[j]
                pi = ((1.0 - d) * np.interp(age, si_ages, si_norm)
                      + d * np.interp(age, si_ages, si_dist))
            new = 1 if np.random.random() < pi else 0
            old = adj[i, j]
            counters[C_REDRAWS] += 1
            if new != old:
                adj[i, j] = new
                adj[j, i] = new
                edges[_pair_cat(si_, sj_)] += new - old
                counters[C_FLIPS] += 1
        elif u < rate_edges + rate_inf:
            i = sus[np.random.randint(0, n_s)]
            counters[C_ATTEMPTS] += 1
            if mimic:
                acc = np.interp(t, grid_t, grid_J)
            else:
                acc = 0.0
                row = adj[i]
                for j in range(n):
                    if row[j] and state[j] == I:
                        acc += np.interp(t - tinf[j], inf_ages, inf_values)
                acc *= inv_n
            if acc > 1.0 + 1e-12:
                status = STATUS_BAD_ACCEPTANCE
                break
            if np.random.random() < acc:
                row = adj[i]
                for j in range(n):
                    if row[j] and j != i:
                        edges[_pair_cat(S, state[j])] -= 1
                        edges[_pair_cat(I, state[j])] += 1
                state[i] = I
                tinf[i] = t
                n_s = _remove(sus, sus_pos, n_s, i)
                n_i = _append(inf, inf_pos, n_i, i)
                order[n_order] = i
                order_pos[i] = n_order
                n_order += 1
                recent += 1
                counters[C_INFECTIONS] += 1
        else:
            i = inf[np.random.randint(0, n_i)]
            row = adj[i]
            for j in range(n):
                if row[j] and j != i:
                    edges[_pair_cat(I, state[j])] -= 1
            state[i] = R
            n_i = _remove(inf, inf_pos, n_i, i)
            n_alive = _remove(alive, alive_pos, n_alive, i)
            n_r += 1
            if order_pos[i] >= head:
                recent -= 1
            for j in range(n):
                if j == i:
                    continue
                new = 1 if np.random.random() < p0 else 0
                if new != adj[i, j]:
                    counters[C_FLIPS] += 1
                    adj[i, j] = new
                    adj[j, i] = new
                edges[OTHER] += new
            counters[C_RECOVERIES] += 1

    return samples, snap_adj, snap_state, snap_tinf, counters, status, t
