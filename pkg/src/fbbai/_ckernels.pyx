# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trial loops for the Monte-Carlo harness.

``X[j, i, m]`` is the m-th reward of arm i in trial j. Checkpoints are
round counts t in [1, T] in increasing order; outputs are written in place.
"""
from libc.math cimport exp, fabs, NAN, INFINITY
from libc.stdlib cimport malloc, free


cdef inline int _best(double* sums, long* counts, int* alive, int n_alive) noexcept nogil:
    # lowest-index arm with the largest empirical mean among ``alive``
    cdef int a, best = -1
    cdef double m, bm = -INFINITY
    for a in range(n_alive):
        if counts[alive[a]] > 0:
            m = sums[alive[a]] / counts[alive[a]]
        else:
            m = -INFINITY
        if best < 0 or m > bm:
            best = alive[a]
            bm = m
    return best


def simulate_schedule(const double[:, :, ::1] X, const long[::1] phase_len,
                      const long[::1] phase_keep, const unsigned char[::1] best_mask,
                      const long[::1] checkpoints, unsigned char[:, ::1] err_out):
    cdef Py_ssize_t n = X.shape[0], K = X.shape[1], T = X.shape[2]
    cdef Py_ssize_t C = checkpoints.shape[0], P = phase_len.shape[0]
    cdef Py_ssize_t j, t, c, a, b, phase, start, bound, n_alive, keep, tmp
    cdef int arm
    cdef double ma, mb
    cdef double* sums = <double*> malloc(K * sizeof(double))
    cdef long* counts = <long*> malloc(K * sizeof(long))
    cdef int* alive = <int*> malloc(K * sizeof(int))
    try:
        with nogil:
            for j in range(n):
                for a in range(K):
                    sums[a] = 0.0
                    counts[a] = 0
                    alive[a] = <int> a
                n_alive = K
                phase = 0
                start = 0
                bound = phase_len[0]
                c = 0
                t = 0
                while True:
                    # eliminations due at round t
                    while phase < P and t >= bound:
                        keep = phase_keep[phase]
                        # selection sort by (mean desc, index asc), keep prefix
                        for a in range(keep):
                            for b in range(a + 1, n_alive):
                                ma = sums[alive[a]] / counts[alive[a]] if counts[alive[a]] > 0 else -INFINITY
                                mb = sums[alive[b]] / counts[alive[b]] if counts[alive[b]] > 0 else -INFINITY
                                if mb > ma or (mb == ma and alive[b] < alive[a]):
                                    tmp = alive[a]; alive[a] = alive[b]; alive[b] = <int> tmp
                        n_alive = keep
                        # restore index order
                        for a in range(1, n_alive):
                            b = a
                            while b > 0 and alive[b - 1] > alive[b]:
                                tmp = alive[b]; alive[b] = alive[b - 1]; alive[b - 1] = <int> tmp
                                b -= 1
                        start = bound
                        phase += 1
                        if phase < P:
                            bound = bound + phase_len[phase]
                    while c < C and checkpoints[c] == t:
                        arm = _best(sums, counts, alive, <int> n_alive)
                        err_out[j, c] = 0 if best_mask[arm] else 1
                        c += 1
                    if t >= T:
                        break
                    arm = alive[(t - start) % n_alive]
                    sums[arm] += X[j, arm, counts[arm]]
                    counts[arm] += 1
                    t += 1
    finally:
        free(sums); free(counts); free(alive)


cdef void _net_forward(double* q, int K, int H,
                       const double[:, ::1] W1, const double[::1] b1,
                       const double[:, ::1] W2, const double[::1] b2,
                       const double[:, ::1] W3, const double[::1] b3,
                       int* perm, double* x, double* h1, double* h2, double* s,
                       double* r) noexcept nogil:
    cdef int i, j, k, tmp, g0
    cdef double acc, mx, tot
    # stable sort indices by decreasing q
    for i in range(K):
        perm[i] = i
    for i in range(1, K):
        j = i
        while j > 0 and q[perm[j - 1]] < q[perm[j]]:
            tmp = perm[j]; perm[j] = perm[j - 1]; perm[j - 1] = tmp
            j -= 1
    for i in range(K):
        x[i] = q[perm[i]]
    for j in range(H):
        acc = 0.0
        for k in range(K):
            acc = acc + x[k] * W1[j, k]
        acc = acc + b1[j]
        h1[j] = acc if acc > 0.0 else 0.0
    for j in range(H):
        acc = 0.0
        for k in range(H):
            acc = acc + h1[k] * W2[j, k]
        acc = acc + b2[j]
        h2[j] = h1[j] + (acc if acc > 0.0 else 0.0)
    mx = -INFINITY
    for j in range(K):
        acc = 0.0
        for k in range(H):
            acc = acc + h2[k] * W3[j, k]
        acc = acc + b3[j]
        s[j] = acc
        if acc > mx:
            mx = acc
    tot = 0.0
    for j in range(K):
        s[j] = exp(s[j] - mx)
        tot = tot + s[j]
    for j in range(K):
        s[j] = s[j] / tot
    # share mass evenly across runs of equal sorted inputs
    g0 = 0
    for i in range(1, K + 1):
        if i == K or x[i] != x[g0]:
            if i - g0 > 1:
                acc = 0.0
                for k in range(g0, i):
                    acc = acc + s[k]
                acc = acc / (i - g0)
                for k in range(g0, i):
                    s[k] = acc
            g0 = i
    for i in range(K):
        r[perm[i]] = s[i]


def simulate_tracking(const double[:, :, ::1] X, int use_network, const double[::1] fixed_w,
                      const double[:, ::1] W1, const double[::1] b1,
                      const double[:, ::1] W2, const double[::1] b2,
                      const double[:, ::1] W3, const double[::1] b3,
                      const unsigned char[::1] best_mask, const long[::1] checkpoints,
                      unsigned char[:, ::1] err_out, double[:, ::1] disc_out):
    cdef Py_ssize_t n = X.shape[0], K = X.shape[1], T = X.shape[2]
    cdef Py_ssize_t C = checkpoints.shape[0]
    cdef int H = W1.shape[0]
    cdef Py_ssize_t j, t, c, a
    cdef int arm, all_pulled
    cdef double d, best_d, dev
    cdef double* sums = <double*> malloc(K * sizeof(double))
    cdef long* counts = <long*> malloc(K * sizeof(long))
    cdef int* alive = <int*> malloc(K * sizeof(int))
    cdef double* q = <double*> malloc(K * sizeof(double))
    cdef double* r = <double*> malloc(K * sizeof(double))
    cdef int* perm = <int*> malloc(K * sizeof(int))
    cdef double* x = <double*> malloc(K * sizeof(double))
    cdef double* s = <double*> malloc(K * sizeof(double))
    cdef double* h1 = <double*> malloc((H + 1) * sizeof(double))
    cdef double* h2 = <double*> malloc((H + 1) * sizeof(double))
    try:
        with nogil:
            for a in range(K):
                alive[a] = <int> a
            for j in range(n):
                for a in range(K):
                    sums[a] = 0.0
                    counts[a] = 0
                c = 0
                t = 0
                while True:
                    all_pulled = 1 if t >= K else 0
                    if all_pulled:
                        for a in range(K):
                            q[a] = sums[a] / counts[a]
                        if use_network:
                            _net_forward(q, <int> K, H, W1, b1, W2, b2, W3, b3,
                                         perm, x, h1, h2, s, r)
                        else:
                            for a in range(K):
                                r[a] = fixed_w[a]
                    while c < C and checkpoints[c] == t:
                        arm = _best(sums, counts, alive, <int> K)
                        err_out[j, c] = 0 if best_mask[arm] else 1
                        if all_pulled:
                            dev = 0.0
                            for a in range(K):
                                d = fabs(r[a] - (<double> counts[a]) / t)
                                if d > dev:
                                    dev = d
                            disc_out[j, c] = dev
                        else:
                            disc_out[j, c] = NAN
                        c += 1
                    if t >= T:
                        break
                    if t < K:
                        arm = <int> t
                    else:
                        arm = 0
                        best_d = r[0] - (<double> counts[0]) / t
                        for a in range(1, K):
                            d = r[a] - (<double> counts[a]) / t
                            if d > best_d:
                                best_d = d
                                arm = <int> a
                    sums[arm] += X[j, arm, counts[arm]]
                    counts[arm] += 1
                    t += 1
    finally:
        free(sums); free(counts); free(alive); free(q); free(r)
        free(perm); free(x); free(s); free(h1); free(h2)
