"""Pure-Python closed-loop RK4 kernel (reference and fallback).

Mirrors ``_rk4.pyx`` line for line; any change must be made in both.

State layout: ``[i_L[0..m), V, x_v[0..nv), x_c[0][0..nc), ..., x_c[m-1][0..nc)]``.
Modes: 0 averaged nonlinear, 1 averaged linear, 2 switched.
Topologies: 0 boost, 1 buck, 2 buck-boost.
Status codes: 0 ok, 1 non-finite state, 2 degenerate duty inversion.
"""

import math

DEGENERATE_VOLTS = 1e-6


class _Ctx:
    __slots__ = ("mode", "m", "nv", "nc", "topo", "L", "Vg", "gain", "gamma", "C", "V_des",
                 "Av", "Bv", "Cv", "Dv", "Ac", "Bc", "Cc", "Dc", "seg_t", "seg_mode",
                 "seg_val", "rip_amp", "rip_w", "rip_phase", "seg")

    def __init__(self, mode, topo, L, Vg, gain, gamma, C, V_des, Av, Bv, Cv, Dv,
                 Ac, Bc, Cc, Dc, seg_t, seg_mode, seg_val, rip_amp, rip_w, rip_phase):
        self.mode = int(mode)
        self.m = len(topo)
        self.nv = len(Bv)
        self.nc = Ac.shape[1] if self.m else 0
        self.topo = [int(v) for v in topo]
        self.L = [float(v) for v in L]
        self.Vg = [float(v) for v in Vg]
        self.gain = [float(v) for v in gain]
        self.gamma = [float(v) for v in gamma]
        self.C = float(C)
        self.V_des = float(V_des)
        self.Av = Av.tolist()
        self.Bv = Bv.tolist()
        self.Cv = Cv.tolist()
        self.Dv = float(Dv)
        self.Ac = Ac.tolist()
        self.Bc = Bc.tolist()
        self.Cc = Cc.tolist()
        self.Dc = Dc.tolist()
        self.seg_t = seg_t.tolist()
        self.seg_mode = seg_mode.tolist()
        self.seg_val = seg_val.tolist()
        self.rip_amp = float(rip_amp)
        self.rip_w = float(rip_w)
        self.rip_phase = float(rip_phase)
        self.seg = _segment(self, 0.0)


def _segment(c, t):
    """Index of the load segment active at t."""
    j = 0
    for i in range(len(c.seg_t)):
        if c.seg_t[i] <= t:
            j = i
    return j


def _load(c, t, V):
    # the segment is latched at the start of each step so that load steps on
    # the time grid act exactly at their switching time
    j = c.seg
    if c.seg_mode[j] == 0:
        il = (c.V_des if c.mode == 1 else V) / c.seg_val[j]
    else:
        il = c.seg_val[j]
    if c.rip_amp != 0.0:
        il += c.rip_amp * math.sin(c.rip_w * t + c.rip_phase)
    return il


def algebra(c, t, x, nz):
    """Controller outputs and duty at state x.

    Returns ``(status, e, iref, il, eps, u, d, sat)``.
    """
    m, nv, nc = c.m, c.nv, c.nc
    V = x[m]
    il = _load(c, t, V)
    e = c.V_des - V - nz
    iref = c.Dv * e
    for i in range(nv):
        iref += c.Cv[i] * x[m + 1 + i]
    eps = [0.0] * m
    u = [0.0] * m
    d = [0.0] * m
    sat = [0] * m
    status = 0
    base = m + 1 + nv
    for k in range(m):
        ek = c.gamma[k] * iref - x[k]
        uk = c.Dc[k] * ek
        ck = c.Cc[k]
        off = base + k * nc
        for i in range(nc):
            uk += ck[i] * x[off + i]
        eps[k] = ek
        u[k] = uk
        tp = c.topo[k]
        if tp == 0:
            den = V
            top = V - c.Vg[k] + uk
        elif tp == 1:
            den = c.Vg[k]
            top = uk + V
        else:
            den = c.Vg[k] - V
            top = uk - V
        if abs(den) < DEGENERATE_VOLTS:
            if c.mode != 1:
                status = 2
            d[k] = math.nan
            continue
        dk = top / den
        if dk < 0.0:
            dk = 0.0
            sat[k] = 1
        elif dk > 1.0:
            dk = 1.0
            sat[k] = 1
        d[k] = dk
    return status, e, iref, il, eps, u, d, sat


def output_currents(c, x, d, q):
    """Per-converter current into the DC link."""
    m = c.m
    out = [0.0] * m
    for k in range(m):
        tp = c.topo[k]
        if tp == 0:
            if c.mode == 1:
                out[k] = c.gain[k] * x[k]
            elif c.mode == 2:
                out[k] = (1.0 - q[k]) * x[k]
            else:
                out[k] = (1.0 - d[k]) * x[k]
        elif tp == 1:
            out[k] = x[k]
        else:
            out[k] = c.gain[k] * x[k]
    return out


def derivative(c, t, x, nz, q):
    status, e, iref, il, eps, u, d, sat = algebra(c, t, x, nz)
    m, nv, nc = c.m, c.nv, c.nc
    V = x[m]
    dx = [0.0] * len(x)
    total = 0.0
    for k in range(m):
        tp = c.topo[k]
        if c.mode == 1:
            dk = 0.0
            di = u[k] / c.L[k]
        else:
            dk = q[k] if c.mode == 2 else d[k]
            if tp == 0:
                di = (-(1.0 - dk) * V + c.Vg[k]) / c.L[k]
            elif tp == 1:
                di = (-V + dk * c.Vg[k]) / c.L[k]
            else:
                di = (V + dk * (c.Vg[k] - V)) / c.L[k]
            # ideal diode blocks reverse inductor current while the switch is open
            if c.mode == 2 and tp == 0 and dk == 0.0 and x[k] <= 0.0 and di < 0.0:
                di = 0.0
        dx[k] = di
        if tp == 0:
            if c.mode == 1:
                total += c.gain[k] * x[k]
            else:
                total += (1.0 - dk) * x[k]
        elif tp == 1:
            total += x[k]
        else:
            total += c.gain[k] * x[k]
    dx[m] = (total - il) / c.C
    for i in range(nv):
        acc = c.Bv[i] * e
        row = c.Av[i]
        for j in range(nv):
            acc += row[j] * x[m + 1 + j]
        dx[m + 1 + i] = acc
    base = m + 1 + nv
    for k in range(m):
        off = base + k * nc
        A = c.Ac[k]
        B = c.Bc[k]
        for i in range(nc):
            acc = B[i] * eps[k]
            row = A[i]
            for j in range(nc):
                acc += row[j] * x[off + j]
            dx[off + i] = acc
    return status, dx


def _rk4(c, t, x, h, nz, q):
    s1, k1 = derivative(c, t, x, nz, q)
    n = len(x)
    xt = [x[i] + 0.5 * h * k1[i] for i in range(n)]
    s2, k2 = derivative(c, t + 0.5 * h, xt, nz, q)
    xt = [x[i] + 0.5 * h * k2[i] for i in range(n)]
    s3, k3 = derivative(c, t + 0.5 * h, xt, nz, q)
    xt = [x[i] + h * k3[i] for i in range(n)]
    s4, k4 = derivative(c, t + h, xt, nz, q)
    status = max(s1, s2, s3, s4)
    return status, [x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(n)]


def run(mode, topo, L, Vg, gain, gamma, C, V_des, Av, Bv, Cv, Dv, Ac, Bc, Cc, Dc,
        seg_t, seg_mode, seg_val, rip_amp, rip_w, rip_phase, noise, x0, dt, n_steps, decim,
        spp, rec_t, rec_x, rec_iref, rec_iload, rec_duty, rec_iout, rec_sat):
    """Integrate ``n_steps`` RK4 steps, filling the ``rec_*`` arrays in place.

    Returns ``(status, last_recorded_index)``.
    """
    c = _Ctx(mode, topo, L, Vg, gain, gamma, C, V_des, Av, Bv, Cv, Dv, Ac, Bc, Cc, Dc,
             seg_t, seg_mode, seg_val, rip_amp, rip_w, rip_phase)
    m = c.m
    x = [float(v) for v in x0]
    has_noise = len(noise) > 0
    nzs = noise.tolist() if has_noise else None
    held = [0.0] * m
    held_sat = [0] * m
    edge = [0.0] * m
    q = [0.0] * m
    period = spp * dt
    rec = -1
    for i in range(n_steps + 1):
        t = i * dt
        nz = nzs[i] if has_noise else 0.0
        c.seg = _segment(c, t + 1e-9 * dt)
        if mode == 2 and i % spp == 0:
            st, e, iref, il, eps, u, d, sat = algebra(c, t, x, nz)
            if st != 0:
                return 2, rec
            for k in range(m):
                held[k] = d[k]
                held_sat[k] = sat[k]
                edge[k] = t + d[k] * period
        if i % decim == 0:
            st, e, iref, il, eps, u, d, sat = algebra(c, t, x, nz)
            if st != 0:
                return 2, rec
            r = i // decim
            rec_t[r] = t
            rec_x[r, :] = x
            rec_iref[r] = iref
            rec_iload[r] = il
            if mode == 2:
                # switch-cycle average (1 - d) i_L; instantaneous pulses alias on the grid
                out = output_currents(c, x, held, held)
                for k in range(m):
                    rec_duty[r, k] = held[k]
                    rec_sat[r, k] = held_sat[k]
                    rec_iout[r, k] = out[k]
            else:
                out = output_currents(c, x, d, q)
                for k in range(m):
                    rec_duty[r, k] = d[k]
                    rec_sat[r, k] = sat[k]
                    rec_iout[r, k] = out[k]
            rec = r
        if i == n_steps:
            break
        if mode == 2:
            t_end = t + dt
            cuts = sorted(edge[k] for k in range(m) if t < edge[k] < t_end)
            a = t
            for b in cuts + [t_end]:
                for k in range(m):
                    q[k] = 1.0 if a < edge[k] else 0.0
                st, x = _rk4(c, a, x, b - a, nz, q)
                if st != 0:
                    return 2, rec
                for k in range(m):
                    if c.topo[k] == 0 and q[k] == 0.0 and x[k] < 0.0:
                        x[k] = 0.0
                a = b
        else:
            st, x = _rk4(c, t, x, dt, nz, q)
            if st != 0:
                return 2, rec
        if not math.isfinite(sum(x)):
            return 1, rec
    return 0, rec
