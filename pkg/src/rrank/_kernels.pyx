# Training inner loops: per-triplet pairwise gradients accumulated per
# batch, one sparse Adam application per batch.  Gradients accumulate in
# float64; parameters and moments are stored float32.  Touched rows are
# compacted through per-block row maps so each batch costs O(touched).

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p, pow, sqrt, tanh

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.float32_t f32

cdef double BETA1 = 0.9
cdef double BETA2 = 0.999
cdef double EPS = 1e-8


cdef inline double _softplus_neg(double x) nogil:
    # -ln(sigmoid(x)), stable on both tails
    if x > 0.0:
        return log1p(exp(-x))
    return -x + log1p(exp(x))


cdef inline double _sigmoid(double x) nogil:
    return 0.5 * (tanh(0.5 * x) + 1.0)


cdef inline double _dot(f32[:, ::1] a, Py_ssize_t ra, f32[:, ::1] b, Py_ssize_t rb,
                        Py_ssize_t d) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t k
    for k in range(d):
        s += (<double>a[ra, k]) * (<double>b[rb, k])
    return s


cdef inline double _norm2(f32[:, ::1] a, Py_ssize_t r, Py_ssize_t d) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t k
    for k in range(d):
        s += (<double>a[r, k]) * (<double>a[r, k])
    return s


cdef inline Py_ssize_t _touch(i64[::1] row_map, i64[::1] touched, double[:, ::1] grad,
                              Py_ssize_t* count, Py_ssize_t row, Py_ssize_t d) nogil:
    cdef Py_ssize_t j = <Py_ssize_t>row_map[row]
    cdef Py_ssize_t k
    if j < 0:
        j = count[0]
        count[0] = j + 1
        row_map[row] = j
        touched[j] = row
        for k in range(d):
            grad[j, k] = 0.0
    return j


cdef inline Py_ssize_t _touch_b(i64[::1] row_map, i64[::1] touched, double[:, ::1] grad,
                                double[::1] gradb, Py_ssize_t* count, Py_ssize_t row,
                                Py_ssize_t d) nogil:
    cdef Py_ssize_t j = <Py_ssize_t>row_map[row]
    cdef Py_ssize_t k
    if j < 0:
        j = count[0]
        count[0] = j + 1
        row_map[row] = j
        touched[j] = row
        for k in range(d):
            grad[j, k] = 0.0
        gradb[j] = 0.0
    return j


cdef inline void _reset(i64[::1] row_map, i64[::1] touched, Py_ssize_t count) nogil:
    cdef Py_ssize_t j
    for j in range(count):
        row_map[touched[j]] = -1


cdef inline void _adam_rows(f32[:, ::1] param, f32[:, ::1] m, f32[:, ::1] v,
                            i64[::1] touched, double[:, ::1] grad, Py_ssize_t count,
                            double lr, double bc1, double bc2) nogil:
    cdef Py_ssize_t j, r, k
    cdef Py_ssize_t d = param.shape[1]
    cdef double g, m64, v64
    for j in range(count):
        r = <Py_ssize_t>touched[j]
        for k in range(d):
            g = grad[j, k]
            m64 = BETA1 * (<double>m[r, k]) + (1.0 - BETA1) * g
            v64 = BETA2 * (<double>v[r, k]) + (1.0 - BETA2) * g * g
            m[r, k] = <f32>m64
            v[r, k] = <f32>v64
            param[r, k] = <f32>((<double>param[r, k]) - lr * (m64 / bc1) / (sqrt(v64 / bc2) + EPS))


cdef inline void _adam_bias(f32[::1] param, f32[::1] m, f32[::1] v,
                            i64[::1] touched, double[::1] grad, Py_ssize_t count,
                            double lr, double bc1, double bc2) nogil:
    cdef Py_ssize_t j, r
    cdef double g, m64, v64
    for j in range(count):
        r = <Py_ssize_t>touched[j]
        g = grad[j]
        m64 = BETA1 * (<double>m[r]) + (1.0 - BETA1) * g
        v64 = BETA2 * (<double>v[r]) + (1.0 - BETA2) * g * g
        m[r] = <f32>m64
        v[r] = <f32>v64
        param[r] = <f32>((<double>param[r]) - lr * (m64 / bc1) / (sqrt(v64 / bc2) + EPS))


cdef double _bper_side(f32[:, ::1] owner, Py_ssize_t orow, f32[:, ::1] rat, f32[::1] bias,
                       i64[:, ::1] negs, Py_ssize_t idx, Py_ssize_t e,
                       i64[::1] map_o, i64[::1] tou_o, double[:, ::1] grad_o, Py_ssize_t* cnt_o,
                       i64[::1] map_r, i64[::1] tou_r, double[:, ::1] grad_r,
                       double[::1] grad_b, Py_ssize_t* cnt_r,
                       double l2, Py_ssize_t d) nogil:
    cdef Py_ssize_t jo, jpos, jneg, k, n, f
    cdef Py_ssize_t nneg = negs.shape[1]
    cdef double loss = 0.0, r_pos, r_neg, delta, g

    jo = _touch(map_o, tou_o, grad_o, cnt_o, orow, d)
    jpos = _touch_b(map_r, tou_r, grad_r, grad_b, cnt_r, e, d)
    r_pos = _dot(owner, orow, rat, e, d) + <double>bias[e]
    for k in range(d):
        grad_o[jo, k] += 2.0 * l2 * <double>owner[orow, k]
        grad_r[jpos, k] += 2.0 * l2 * <double>rat[e, k]
    grad_b[jpos] += 2.0 * l2 * <double>bias[e]
    loss += l2 * (_norm2(owner, orow, d) + _norm2(rat, e, d)
                  + (<double>bias[e]) * (<double>bias[e]))

    for n in range(nneg):
        f = <Py_ssize_t>negs[idx, n]
        jneg = _touch_b(map_r, tou_r, grad_r, grad_b, cnt_r, f, d)
        r_neg = _dot(owner, orow, rat, f, d) + <double>bias[f]
        delta = r_pos - r_neg
        loss += _softplus_neg(delta)
        g = _sigmoid(delta) - 1.0
        for k in range(d):
            grad_o[jo, k] += g * ((<double>rat[e, k]) - (<double>rat[f, k]))
            grad_r[jpos, k] += g * <double>owner[orow, k]
            grad_r[jneg, k] += -g * <double>owner[orow, k] + 2.0 * l2 * <double>rat[f, k]
        grad_b[jpos] += g
        grad_b[jneg] += -g + 2.0 * l2 * <double>bias[f]
        loss += l2 * (_norm2(rat, f, d) + (<double>bias[f]) * (<double>bias[f]))
    return loss


def run_bper_epoch(f32[:, ::1] P, f32[:, ::1] Q, f32[:, ::1] OU, f32[:, ::1] OI,
                   f32[::1] bU, f32[::1] bI,
                   f32[:, ::1] mP, f32[:, ::1] vP, f32[:, ::1] mQ, f32[:, ::1] vQ,
                   f32[:, ::1] mOU, f32[:, ::1] vOU, f32[:, ::1] mOI, f32[:, ::1] vOI,
                   f32[::1] mbU, f32[::1] vbU, f32[::1] mbI, f32[::1] vbI,
                   i64[:, ::1] trips, i64[:, ::1] negs_u, i64[:, ::1] negs_i,
                   double l2, double lr, Py_ssize_t batch_size, long long t0):
    cdef Py_ssize_t T = trips.shape[0]
    cdef Py_ssize_t d = P.shape[1]
    cdef Py_ssize_t nneg = negs_u.shape[1]
    cdef Py_ssize_t cap_r = batch_size * (1 + nneg)

    map_p_a = np.full(P.shape[0], -1, np.int64)
    map_q_a = np.full(Q.shape[0], -1, np.int64)
    map_u_a = np.full(OU.shape[0], -1, np.int64)
    map_i_a = np.full(OI.shape[0], -1, np.int64)
    cdef i64[::1] map_p = map_p_a, map_q = map_q_a, map_u = map_u_a, map_i = map_i_a
    cdef i64[::1] tou_p = np.empty(batch_size, np.int64)
    cdef i64[::1] tou_q = np.empty(batch_size, np.int64)
    cdef i64[::1] tou_u = np.empty(cap_r, np.int64)
    cdef i64[::1] tou_i = np.empty(cap_r, np.int64)
    cdef double[:, ::1] grad_p = np.empty((batch_size, d))
    cdef double[:, ::1] grad_q = np.empty((batch_size, d))
    cdef double[:, ::1] grad_u = np.empty((cap_r, d))
    cdef double[:, ::1] grad_i = np.empty((cap_r, d))
    cdef double[::1] grad_bu = np.empty(cap_r)
    cdef double[::1] grad_bi = np.empty(cap_r)

    cdef double loss = 0.0, bc1, bc2
    cdef long long t = t0
    cdef Py_ssize_t start = 0, stop, idx, u, i, e
    cdef Py_ssize_t cnt_p, cnt_q, cnt_u, cnt_i

    with nogil:
        while start < T:
            stop = start + batch_size
            if stop > T:
                stop = T
            cnt_p = cnt_q = cnt_u = cnt_i = 0
            for idx in range(start, stop):
                u = <Py_ssize_t>trips[idx, 0]
                i = <Py_ssize_t>trips[idx, 1]
                e = <Py_ssize_t>trips[idx, 2]
                loss += _bper_side(P, u, OU, bU, negs_u, idx, e,
                                   map_p, tou_p, grad_p, &cnt_p,
                                   map_u, tou_u, grad_u, grad_bu, &cnt_u, l2, d)
                loss += _bper_side(Q, i, OI, bI, negs_i, idx, e,
                                   map_q, tou_q, grad_q, &cnt_q,
                                   map_i, tou_i, grad_i, grad_bi, &cnt_i, l2, d)
            t += 1
            bc1 = 1.0 - pow(BETA1, <double>t)
            bc2 = 1.0 - pow(BETA2, <double>t)
            _adam_rows(P, mP, vP, tou_p, grad_p, cnt_p, lr, bc1, bc2)
            _adam_rows(Q, mQ, vQ, tou_q, grad_q, cnt_q, lr, bc1, bc2)
            _adam_rows(OU, mOU, vOU, tou_u, grad_u, cnt_u, lr, bc1, bc2)
            _adam_rows(OI, mOI, vOI, tou_i, grad_i, cnt_i, lr, bc1, bc2)
            _adam_bias(bU, mbU, vbU, tou_u, grad_bu, cnt_u, lr, bc1, bc2)
            _adam_bias(bI, mbI, vbI, tou_i, grad_bi, cnt_i, lr, bc1, bc2)
            _reset(map_p, tou_p, cnt_p)
            _reset(map_q, tou_q, cnt_q)
            _reset(map_u, tou_u, cnt_u)
            _reset(map_i, tou_i, cnt_i)
            start = stop
    return loss, t


cdef inline Py_ssize_t _proj(i64[::1] map_c, i64[::1] tou_c, double[:, ::1] cbuf,
                             Py_ssize_t* cnt_c, Py_ssize_t row,
                             f32[:, ::1] W, f32[:, ::1] S,
                             Py_ssize_t d, Py_ssize_t ds) nogil:
    cdef Py_ssize_t j = <Py_ssize_t>map_c[row]
    cdef Py_ssize_t k, l
    cdef double s
    if j < 0:
        j = cnt_c[0]
        cnt_c[0] = j + 1
        map_c[row] = j
        tou_c[j] = row
        for k in range(d):
            s = 0.0
            for l in range(ds):
                s += (<double>W[k, l]) * (<double>S[row, l])
            cbuf[j, k] = s
    return j


cdef double _bper_plus_side(f32[:, ::1] owner, Py_ssize_t orow, f32[:, ::1] rat,
                            f32[::1] bias, f32[:, ::1] W, f32[:, ::1] S,
                            i64[:, ::1] negs, Py_ssize_t idx, Py_ssize_t e,
                            i64[::1] map_o, i64[::1] tou_o, double[:, ::1] grad_o,
                            Py_ssize_t* cnt_o,
                            i64[::1] map_r, i64[::1] tou_r, double[:, ::1] grad_r,
                            double[::1] grad_b, Py_ssize_t* cnt_r,
                            i64[::1] map_c, i64[::1] tou_c, double[:, ::1] cbuf,
                            Py_ssize_t* cnt_c,
                            double[:, ::1] grad_w,
                            double l2, Py_ssize_t d, Py_ssize_t ds) nogil:
    cdef Py_ssize_t jo, jpos, jneg, jcp, jcn, k, l, n, f
    cdef Py_ssize_t nneg = negs.shape[1]
    cdef double loss = 0.0, r_pos, r_neg, delta, g, s, coef, sum_g = 0.0

    jo = _touch(map_o, tou_o, grad_o, cnt_o, orow, d)
    jpos = _touch_b(map_r, tou_r, grad_r, grad_b, cnt_r, e, d)
    jcp = _proj(map_c, tou_c, cbuf, cnt_c, e, W, S, d, ds)
    r_pos = 0.0
    for k in range(d):
        r_pos += (<double>owner[orow, k]) * (<double>rat[e, k]) * cbuf[jcp, k]
    r_pos += <double>bias[e]
    for k in range(d):
        grad_o[jo, k] += 2.0 * l2 * <double>owner[orow, k]
        grad_r[jpos, k] += 2.0 * l2 * <double>rat[e, k]
    grad_b[jpos] += 2.0 * l2 * <double>bias[e]
    loss += l2 * (_norm2(owner, orow, d) + _norm2(rat, e, d)
                  + (<double>bias[e]) * (<double>bias[e]))

    for n in range(nneg):
        f = <Py_ssize_t>negs[idx, n]
        jneg = _touch_b(map_r, tou_r, grad_r, grad_b, cnt_r, f, d)
        jcn = _proj(map_c, tou_c, cbuf, cnt_c, f, W, S, d, ds)
        r_neg = 0.0
        for k in range(d):
            r_neg += (<double>owner[orow, k]) * (<double>rat[f, k]) * cbuf[jcn, k]
        r_neg += <double>bias[f]
        delta = r_pos - r_neg
        loss += _softplus_neg(delta)
        g = _sigmoid(delta) - 1.0
        sum_g += g
        for k in range(d):
            grad_o[jo, k] += g * ((<double>rat[e, k]) * cbuf[jcp, k]
                                  - (<double>rat[f, k]) * cbuf[jcn, k])
            grad_r[jpos, k] += g * (<double>owner[orow, k]) * cbuf[jcp, k]
            grad_r[jneg, k] += -g * (<double>owner[orow, k]) * cbuf[jcn, k] \
                               + 2.0 * l2 * <double>rat[f, k]
        grad_b[jpos] += g
        grad_b[jneg] += -g + 2.0 * l2 * <double>bias[f]
        # projection gradient from the negative's score
        for k in range(d):
            coef = -g * (<double>owner[orow, k]) * (<double>rat[f, k])
            for l in range(ds):
                grad_w[k, l] += coef * <double>S[f, l]
        loss += l2 * (_norm2(rat, f, d) + (<double>bias[f]) * (<double>bias[f]))

    # projection gradient from the positive's score, summed over negatives
    for k in range(d):
        coef = sum_g * (<double>owner[orow, k]) * (<double>rat[e, k])
        for l in range(ds):
            grad_w[k, l] += coef * <double>S[e, l]
    return loss


def run_bper_plus_epoch(f32[:, ::1] P, f32[:, ::1] Q, f32[:, ::1] OU, f32[:, ::1] OI,
                        f32[::1] bU, f32[::1] bI, f32[:, ::1] W, f32[:, ::1] S,
                        f32[:, ::1] mP, f32[:, ::1] vP, f32[:, ::1] mQ, f32[:, ::1] vQ,
                        f32[:, ::1] mOU, f32[:, ::1] vOU, f32[:, ::1] mOI, f32[:, ::1] vOI,
                        f32[::1] mbU, f32[::1] vbU, f32[::1] mbI, f32[::1] vbI,
                        f32[:, ::1] mW, f32[:, ::1] vW,
                        i64[:, ::1] trips, i64[:, ::1] negs_u, i64[:, ::1] negs_i,
                        double l2, double lr, Py_ssize_t batch_size, long long t0):
    cdef Py_ssize_t T = trips.shape[0]
    cdef Py_ssize_t d = P.shape[1]
    cdef Py_ssize_t ds = W.shape[1]
    cdef Py_ssize_t nneg = negs_u.shape[1]
    cdef Py_ssize_t cap_r = batch_size * (1 + nneg)
    cdef Py_ssize_t cap_c = 2 * cap_r

    map_p_a = np.full(P.shape[0], -1, np.int64)
    map_q_a = np.full(Q.shape[0], -1, np.int64)
    map_u_a = np.full(OU.shape[0], -1, np.int64)
    map_i_a = np.full(OI.shape[0], -1, np.int64)
    map_c_a = np.full(OU.shape[0], -1, np.int64)
    cdef i64[::1] map_p = map_p_a, map_q = map_q_a, map_u = map_u_a
    cdef i64[::1] map_i = map_i_a, map_c = map_c_a
    cdef i64[::1] tou_p = np.empty(batch_size, np.int64)
    cdef i64[::1] tou_q = np.empty(batch_size, np.int64)
    cdef i64[::1] tou_u = np.empty(cap_r, np.int64)
    cdef i64[::1] tou_i = np.empty(cap_r, np.int64)
    cdef i64[::1] tou_c = np.empty(cap_c, np.int64)
    cdef double[:, ::1] grad_p = np.empty((batch_size, d))
    cdef double[:, ::1] grad_q = np.empty((batch_size, d))
    cdef double[:, ::1] grad_u = np.empty((cap_r, d))
    cdef double[:, ::1] grad_i = np.empty((cap_r, d))
    cdef double[::1] grad_bu = np.empty(cap_r)
    cdef double[::1] grad_bi = np.empty(cap_r)
    cdef double[:, ::1] cbuf = np.empty((cap_c, d))
    cdef double[:, ::1] grad_w = np.zeros((d, ds))

    cdef double loss = 0.0, bc1, bc2, wsq, m64, v64, g
    cdef long long t = t0
    cdef Py_ssize_t start = 0, stop, idx, u, i, e, k, l, nb
    cdef Py_ssize_t cnt_p, cnt_q, cnt_u, cnt_i, cnt_c

    with nogil:
        while start < T:
            stop = start + batch_size
            if stop > T:
                stop = T
            nb = stop - start
            cnt_p = cnt_q = cnt_u = cnt_i = cnt_c = 0
            wsq = 0.0
            for k in range(d):
                for l in range(ds):
                    grad_w[k, l] = 0.0
                    wsq += (<double>W[k, l]) * (<double>W[k, l])
            for idx in range(start, stop):
                u = <Py_ssize_t>trips[idx, 0]
                i = <Py_ssize_t>trips[idx, 1]
                e = <Py_ssize_t>trips[idx, 2]
                loss += _bper_plus_side(P, u, OU, bU, W, S, negs_u, idx, e,
                                        map_p, tou_p, grad_p, &cnt_p,
                                        map_u, tou_u, grad_u, grad_bu, &cnt_u,
                                        map_c, tou_c, cbuf, &cnt_c,
                                        grad_w, l2, d, ds)
                loss += _bper_plus_side(Q, i, OI, bI, W, S, negs_i, idx, e,
                                        map_q, tou_q, grad_q, &cnt_q,
                                        map_i, tou_i, grad_i, grad_bi, &cnt_i,
                                        map_c, tou_c, cbuf, &cnt_c,
                                        grad_w, l2, d, ds)
            # per-triplet l2 on the dense projection, summed over the batch
            loss += l2 * wsq * <double>nb
            t += 1
            bc1 = 1.0 - pow(BETA1, <double>t)
            bc2 = 1.0 - pow(BETA2, <double>t)
            for k in range(d):
                for l in range(ds):
                    g = grad_w[k, l] + 2.0 * l2 * (<double>nb) * (<double>W[k, l])
                    m64 = BETA1 * (<double>mW[k, l]) + (1.0 - BETA1) * g
                    v64 = BETA2 * (<double>vW[k, l]) + (1.0 - BETA2) * g * g
                    mW[k, l] = <f32>m64
                    vW[k, l] = <f32>v64
                    W[k, l] = <f32>((<double>W[k, l]) - lr * (m64 / bc1) / (sqrt(v64 / bc2) + EPS))
            _adam_rows(P, mP, vP, tou_p, grad_p, cnt_p, lr, bc1, bc2)
            _adam_rows(Q, mQ, vQ, tou_q, grad_q, cnt_q, lr, bc1, bc2)
            _adam_rows(OU, mOU, vOU, tou_u, grad_u, cnt_u, lr, bc1, bc2)
            _adam_rows(OI, mOI, vOI, tou_i, grad_i, cnt_i, lr, bc1, bc2)
            _adam_bias(bU, mbU, vbU, tou_u, grad_bu, cnt_u, lr, bc1, bc2)
            _adam_bias(bI, mbI, vbI, tou_i, grad_bi, cnt_i, lr, bc1, bc2)
            _reset(map_p, tou_p, cnt_p)
            _reset(map_q, tou_q, cnt_q)
            _reset(map_u, tou_u, cnt_u)
            _reset(map_i, tou_i, cnt_i)
            _reset(map_c, tou_c, cnt_c)
            start = stop
    return loss, t


def run_pitf_epoch(f32[:, ::1] P, f32[:, ::1] Q, f32[:, ::1] OU, f32[:, ::1] OI,
                   f32[:, ::1] mP, f32[:, ::1] vP, f32[:, ::1] mQ, f32[:, ::1] vQ,
                   f32[:, ::1] mOU, f32[:, ::1] vOU, f32[:, ::1] mOI, f32[:, ::1] vOI,
                   i64[:, ::1] trips, i64[:, ::1] neg_items, i64[:, ::1] negs_e,
                   double alpha, double l2, double lr, Py_ssize_t batch_size,
                   long long t0):
    cdef Py_ssize_t T = trips.shape[0]
    cdef Py_ssize_t d = P.shape[1]
    cdef Py_ssize_t nneg = neg_items.shape[1]
    cdef Py_ssize_t nneg_e = negs_e.shape[1]
    cdef Py_ssize_t cap_q = batch_size * (1 + nneg)
    cdef Py_ssize_t cap_r = batch_size * (1 + nneg_e)

    map_p_a = np.full(P.shape[0], -1, np.int64)
    map_q_a = np.full(Q.shape[0], -1, np.int64)
    map_u_a = np.full(OU.shape[0], -1, np.int64)
    map_i_a = np.full(OI.shape[0], -1, np.int64)
    cdef i64[::1] map_p = map_p_a, map_q = map_q_a, map_u = map_u_a, map_i = map_i_a
    cdef i64[::1] tou_p = np.empty(batch_size, np.int64)
    cdef i64[::1] tou_q = np.empty(cap_q, np.int64)
    cdef i64[::1] tou_u = np.empty(cap_r, np.int64)
    cdef i64[::1] tou_i = np.empty(cap_r, np.int64)
    cdef double[:, ::1] grad_p = np.empty((batch_size, d))
    cdef double[:, ::1] grad_q = np.empty((cap_q, d))
    cdef double[:, ::1] grad_u = np.empty((cap_r, d))
    cdef double[:, ::1] grad_i = np.empty((cap_r, d))

    cdef double loss = 0.0, bc1, bc2, r_ui, r_e, r_neg, delta, g
    cdef long long t = t0
    cdef Py_ssize_t start = 0, stop, idx, u, i, e, j, f, k, n
    cdef Py_ssize_t jp, jqi, jqn, jue, jie, juf, jif
    cdef Py_ssize_t cnt_p, cnt_q, cnt_u, cnt_i

    with nogil:
        while start < T:
            stop = start + batch_size
            if stop > T:
                stop = T
            cnt_p = cnt_q = cnt_u = cnt_i = 0
            for idx in range(start, stop):
                u = <Py_ssize_t>trips[idx, 0]
                i = <Py_ssize_t>trips[idx, 1]
                e = <Py_ssize_t>trips[idx, 2]

                jp = _touch(map_p, tou_p, grad_p, &cnt_p, u, d)
                jqi = _touch(map_q, tou_q, grad_q, &cnt_q, i, d)
                r_ui = _dot(P, u, Q, i, d)
                for k in range(d):
                    grad_p[jp, k] += 2.0 * l2 * <double>P[u, k]
                    grad_q[jqi, k] += 2.0 * l2 * <double>Q[i, k]
                loss += l2 * (_norm2(P, u, d) + _norm2(Q, i, d))
                for n in range(nneg):
                    j = <Py_ssize_t>neg_items[idx, n]
                    jqn = _touch(map_q, tou_q, grad_q, &cnt_q, j, d)
                    delta = r_ui - _dot(P, u, Q, j, d)
                    loss += _softplus_neg(delta)
                    g = _sigmoid(delta) - 1.0
                    for k in range(d):
                        grad_p[jp, k] += g * ((<double>Q[i, k]) - (<double>Q[j, k]))
                        grad_q[jqi, k] += g * <double>P[u, k]
                        grad_q[jqn, k] += -g * <double>P[u, k] + 2.0 * l2 * <double>Q[j, k]
                    loss += l2 * _norm2(Q, j, d)

                if alpha != 0.0:
                    jue = _touch(map_u, tou_u, grad_u, &cnt_u, e, d)
                    jie = _touch(map_i, tou_i, grad_i, &cnt_i, e, d)
                    r_e = _dot(P, u, OU, e, d) + _dot(Q, i, OI, e, d)
                    for k in range(d):
                        grad_u[jue, k] += 2.0 * l2 * <double>OU[e, k]
                        grad_i[jie, k] += 2.0 * l2 * <double>OI[e, k]
                    loss += l2 * (_norm2(OU, e, d) + _norm2(OI, e, d))
                    for n in range(nneg_e):
                        f = <Py_ssize_t>negs_e[idx, n]
                        juf = _touch(map_u, tou_u, grad_u, &cnt_u, f, d)
                        jif = _touch(map_i, tou_i, grad_i, &cnt_i, f, d)
                        r_neg = _dot(P, u, OU, f, d) + _dot(Q, i, OI, f, d)
                        delta = r_e - r_neg
                        loss += alpha * _softplus_neg(delta)
                        g = alpha * (_sigmoid(delta) - 1.0)
                        for k in range(d):
                            grad_p[jp, k] += g * ((<double>OU[e, k]) - (<double>OU[f, k]))
                            grad_q[jqi, k] += g * ((<double>OI[e, k]) - (<double>OI[f, k]))
                            grad_u[jue, k] += g * <double>P[u, k]
                            grad_u[juf, k] += -g * <double>P[u, k] + 2.0 * l2 * <double>OU[f, k]
                            grad_i[jie, k] += g * <double>Q[i, k]
                            grad_i[jif, k] += -g * <double>Q[i, k] + 2.0 * l2 * <double>OI[f, k]
                        loss += l2 * (_norm2(OU, f, d) + _norm2(OI, f, d))

            t += 1
            bc1 = 1.0 - pow(BETA1, <double>t)
            bc2 = 1.0 - pow(BETA2, <double>t)
            _adam_rows(P, mP, vP, tou_p, grad_p, cnt_p, lr, bc1, bc2)
            _adam_rows(Q, mQ, vQ, tou_q, grad_q, cnt_q, lr, bc1, bc2)
            _adam_rows(OU, mOU, vOU, tou_u, grad_u, cnt_u, lr, bc1, bc2)
            _adam_rows(OI, mOI, vOI, tou_i, grad_i, cnt_i, lr, bc1, bc2)
            _reset(map_p, tou_p, cnt_p)
            _reset(map_q, tou_q, cnt_q)
            _reset(map_u, tou_u, cnt_u)
            _reset(map_i, tou_i, cnt_i)
            start = stop
    return loss, t
