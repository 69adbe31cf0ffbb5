# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop RK4 kernel.

Mirrors ``_rk4_py.py`` line for line; any change must be made in both.
"""

from libc.math cimport sin, fabs, isfinite, NAN

import numpy as np
cimport numpy as cnp

cdef double DEGENERATE_VOLTS = 1e-6


cdef class _Ctx:
    cdef int mode, m, nv, nc, nseg, nx, seg
    cdef long[::1] topo
    cdef double[::1] L, Vg, gain, gamma
    cdef double C, V_des, Dv, rip_amp, rip_w, rip_phase
    cdef double[:, ::1] Av
    cdef double[::1] Bv, Cv
    cdef double[:, :, ::1] Ac
    cdef double[:, ::1] Bc, Cc
    cdef double[::1] Dc
    cdef double[::1] seg_t, seg_val
    cdef long[::1] seg_mode
    # scratch filled by algebra()
    cdef double e, iref, il
    cdef double[::1] eps, u, d, out
    cdef long[::1] sat
    # RK4 buffers
    cdef double[::1] k1, k2, k3, k4, xt

    def __init__(self, int mode, long[::1] topo, double[::1] L, double[::1] Vg,
                 double[::1] gain, double[::1] gamma, double C, double V_des,
                 double[:, ::1] Av, double[::1] Bv, double[::1] Cv, double Dv,
                 double[:, :, ::1] Ac, double[:, ::1] Bc, double[:, ::1] Cc, double[::1] Dc,
                 double[::1] seg_t, long[::1] seg_mode, double[::1] seg_val,
                 double rip_amp, double rip_w, double rip_phase):
        self.mode = mode
        self.m = topo.shape[0]
        self.nv = Bv.shape[0]
        self.nc = Ac.shape[1]
        self.nseg = seg_t.shape[0]
        self.nx = self.m + 1 + self.nv + self.m * self.nc
        self.topo = topo
        self.L = L
        self.Vg = Vg
        self.gain = gain
        self.gamma = gamma
        self.C = C
        self.V_des = V_des
        self.Av = Av
        self.Bv = Bv
        self.Cv = Cv
        self.Dv = Dv
        self.Ac = Ac
        self.Bc = Bc
        self.Cc = Cc
        self.Dc = Dc
        self.seg_t = seg_t
        self.seg_mode = seg_mode
        self.seg_val = seg_val
        self.rip_amp = rip_amp
        self.rip_w = rip_w
        self.rip_phase = rip_phase
        self.seg = self.segment(0.0)
        self.eps = np.zeros(self.m)
        self.u = np.zeros(self.m)
        self.d = np.zeros(self.m)
        self.out = np.zeros(self.m)
        self.sat = np.zeros(self.m, dtype=np.int_)
        self.k1 = np.zeros(self.nx)
        self.k2 = np.zeros(self.nx)
        self.k3 = np.zeros(self.nx)
        self.k4 = np.zeros(self.nx)
        self.xt = np.zeros(self.nx)

    cdef inline int segment(self, double t) nogil:
        cdef int i, j = 0
        for i in range(self.nseg):
            if self.seg_t[i] <= t:
                j = i
        return j

    cdef inline double load(self, double t, double V) nogil:
        # segment latched per step, see run()
        cdef int j = self.seg
        cdef double il
        if self.seg_mode[j] == 0:
            if self.mode == 1:
                il = self.V_des / self.seg_val[j]
            else:
                il = V / self.seg_val[j]
        else:
            il = self.seg_val[j]
        if self.rip_amp != 0.0:
            il += self.rip_amp * sin(self.rip_w * t + self.rip_phase)
        return il

    cdef int algebra(self, double t, double[::1] x, double nz) nogil:
        cdef int m = self.m, nv = self.nv, nc = self.nc
        cdef int i, k, off, tp, status = 0
        cdef int base = m + 1 + nv
        cdef double V = x[m]
        cdef double ek, uk, den, top, dk
        self.il = self.load(t, V)
        self.e = self.V_des - V - nz
        self.iref = self.Dv * self.e
        for i in range(nv):
            self.iref += self.Cv[i] * x[m + 1 + i]
        for k in range(m):
            ek = self.gamma[k] * self.iref - x[k]
            uk = self.Dc[k] * ek
            off = base + k * nc
            for i in range(nc):
                uk += self.Cc[k, i] * x[off + i]
            self.eps[k] = ek
            self.u[k] = uk
            self.sat[k] = 0
            tp = self.topo[k]
            if tp == 0:
                den = V
                top = V - self.Vg[k] + uk
            elif tp == 1:
                den = self.Vg[k]
                top = uk + V
            else:
                den = self.Vg[k] - V
                top = uk - V
            if fabs(den) < DEGENERATE_VOLTS:
                if self.mode != 1:
                    status = 2
                self.d[k] = NAN
                continue
            dk = top / den
            if dk < 0.0:
                dk = 0.0
                self.sat[k] = 1
            elif dk > 1.0:
                dk = 1.0
                self.sat[k] = 1
            self.d[k] = dk
        return status

    cdef void output_currents(self, double[::1] x, double[::1] d, double[::1] q) nogil:
        cdef int k, tp
        for k in range(self.m):
            tp = self.topo[k]
            if tp == 0:
                if self.mode == 1:
                    self.out[k] = self.gain[k] * x[k]
                elif self.mode == 2:
                    self.out[k] = (1.0 - q[k]) * x[k]
                else:
                    self.out[k] = (1.0 - d[k]) * x[k]
            elif tp == 1:
                self.out[k] = x[k]
            else:
                self.out[k] = self.gain[k] * x[k]

    cdef int derivative(self, double t, double[::1] x, double nz, double[::1] q,
                        double[::1] dx) nogil:
        cdef int status = self.algebra(t, x, nz)
        cdef int m = self.m, nv = self.nv, nc = self.nc
        cdef int i, j, k, tp, off
        cdef int base = m + 1 + nv
        cdef double V = x[m]
        cdef double total = 0.0, dk, di, acc
        for k in range(m):
            tp = self.topo[k]
            if self.mode == 1:
                dk = 0.0
                di = self.u[k] / self.L[k]
            else:
                if self.mode == 2:
                    dk = q[k]
                else:
                    dk = self.d[k]
                if tp == 0:
                    di = (-(1.0 - dk) * V + self.Vg[k]) / self.L[k]
                elif tp == 1:
                    di = (-V + dk * self.Vg[k]) / self.L[k]
                else:
                    di = (V + dk * (self.Vg[k] - V)) / self.L[k]
                # ideal diode blocks reverse inductor current while the switch is open
                if self.mode == 2 and tp == 0 and dk == 0.0 and x[k] <= 0.0 and di < 0.0:
                    di = 0.0
            dx[k] = di
            if tp == 0:
                if self.mode == 1:
                    total += self.gain[k] * x[k]
                else:
                    total += (1.0 - dk) * x[k]
            elif tp == 1:
                total += x[k]
            else:
                total += self.gain[k] * x[k]
        dx[m] = (total - self.il) / self.C
        for i in range(nv):
            acc = self.Bv[i] * self.e
            for j in range(nv):
                acc += self.Av[i, j] * x[m + 1 + j]
            dx[m + 1 + i] = acc
        for k in range(m):
            off = base + k * nc
            for i in range(nc):
                acc = self.Bc[k, i] * self.eps[k]
                for j in range(nc):
                    acc += self.Ac[k, i, j] * x[off + j]
                dx[off + i] = acc
        return status

    cdef int rk4(self, double t, double[::1] x, double h, double nz, double[::1] q) nogil:
        cdef int i, n = self.nx, status = 0, s
        s = self.derivative(t, x, nz, q, self.k1)
        if s > status:
            status = s
        for i in range(n):
            self.xt[i] = x[i] + 0.5 * h * self.k1[i]
        s = self.derivative(t + 0.5 * h, self.xt, nz, q, self.k2)
        if s > status:
            status = s
        for i in range(n):
            self.xt[i] = x[i] + 0.5 * h * self.k2[i]
        s = self.derivative(t + 0.5 * h, self.xt, nz, q, self.k3)
        if s > status:
            status = s
        for i in range(n):
            self.xt[i] = x[i] + h * self.k3[i]
        s = self.derivative(t + h, self.xt, nz, q, self.k4)
        if s > status:
            status = s
        for i in range(n):
            x[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i])
        return status


def run(int mode, topo, L, Vg, gain, gamma, double C, double V_des, Av, Bv, Cv, double Dv,
        Ac, Bc, Cc, Dc, seg_t, seg_mode, seg_val, double rip_amp, double rip_w,
        double rip_phase, double[::1] noise, x0, double dt, long n_steps, long decim, long spp,
        double[::1] rec_t, double[:, ::1] rec_x, double[::1] rec_iref, double[::1] rec_iload,
        double[:, ::1] rec_duty, double[:, ::1] rec_iout, cnp.int8_t[:, ::1] rec_sat):
    """Integrate ``n_steps`` RK4 steps, filling the ``rec_*`` arrays in place.

    Returns ``(status, last_recorded_index)``.
    """
    cdef _Ctx c = _Ctx(mode, np.ascontiguousarray(topo, dtype=np.int_),
                       np.ascontiguousarray(L, dtype=float), np.ascontiguousarray(Vg, dtype=float),
                       np.ascontiguousarray(gain, dtype=float), np.ascontiguousarray(gamma, dtype=float),
                       C, V_des, np.ascontiguousarray(Av, dtype=float),
                       np.ascontiguousarray(Bv, dtype=float), np.ascontiguousarray(Cv, dtype=float),
                       Dv, np.ascontiguousarray(Ac, dtype=float), np.ascontiguousarray(Bc, dtype=float),
                       np.ascontiguousarray(Cc, dtype=float), np.ascontiguousarray(Dc, dtype=float),
                       np.ascontiguousarray(seg_t, dtype=float),
                       np.ascontiguousarray(seg_mode, dtype=np.int_),
                       np.ascontiguousarray(seg_val, dtype=float), rip_amp, rip_w, rip_phase)
    cdef int m = c.m, nx = c.nx
    cdef double[::1] x = np.array(x0, dtype=float)
    cdef double[::1] held = np.zeros(m)
    cdef long[::1] held_sat = np.zeros(m, dtype=np.int_)
    cdef double[::1] edge = np.zeros(m)
    cdef double[::1] q = np.zeros(m)
    cdef double[::1] cuts = np.zeros(m + 1)
    cdef bint has_noise = noise.shape[0] > 0
    cdef double period = spp * dt
    cdef long i, r, rec = -1
    cdef int k, j, ncut
    cdef double t, nz, a, b, t_end, tmp, total
    cdef int status = 0
    with nogil:
        for i in range(n_steps + 1):
            t = i * dt
            nz = noise[i] if has_noise else 0.0
            c.seg = c.segment(t + 1e-9 * dt)
            if mode == 2 and i % spp == 0:
                if c.algebra(t, x, nz) != 0:
                    status = 2
                    break
                for k in range(m):
                    held[k] = c.d[k]
                    held_sat[k] = c.sat[k]
                    edge[k] = t + c.d[k] * period
            if i % decim == 0:
                if c.algebra(t, x, nz) != 0:
                    status = 2
                    break
                r = i // decim
                rec_t[r] = t
                for j in range(nx):
                    rec_x[r, j] = x[j]
                rec_iref[r] = c.iref
                rec_iload[r] = c.il
                if mode == 2:
                    # switch-cycle average (1 - d) i_L; instantaneous pulses alias on the grid
                    c.output_currents(x, held, held)
                    for k in range(m):
                        rec_duty[r, k] = held[k]
                        rec_sat[r, k] = held_sat[k]
                        rec_iout[r, k] = c.out[k]
                else:
                    c.output_currents(x, c.d, q)
                    for k in range(m):
                        rec_duty[r, k] = c.d[k]
                        rec_sat[r, k] = c.sat[k]
                        rec_iout[r, k] = c.out[k]
                rec = r
            if i == n_steps:
                break
            if mode == 2:
                t_end = t + dt
                ncut = 0
                for k in range(m):
                    if t < edge[k] and edge[k] < t_end:
                        cuts[ncut] = edge[k]
                        ncut += 1
                # insertion sort; m is tiny
                for k in range(1, ncut):
                    tmp = cuts[k]
                    j = k - 1
                    while j >= 0 and cuts[j] > tmp:
                        cuts[j + 1] = cuts[j]
                        j -= 1
                    cuts[j + 1] = tmp
                cuts[ncut] = t_end
                a = t
                for j in range(ncut + 1):
                    b = cuts[j]
                    for k in range(m):
                        q[k] = 1.0 if a < edge[k] else 0.0
                    if c.rk4(a, x, b - a, nz, q) != 0:
                        status = 2
                        break
                    for k in range(m):
                        if c.topo[k] == 0 and q[k] == 0.0 and x[k] < 0.0:
                            x[k] = 0.0
                    a = b
                if status != 0:
                    break
            else:
                if c.rk4(t, x, dt, nz, q) != 0:
                    status = 2
                    break
            total = 0.0
            for j in range(nx):
                total += x[j]
            if not isfinite(total):
                status = 1
                break
    return status, rec
