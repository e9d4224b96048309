# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Cython render kernel: scalar per-pixel twin of render_py.render_scene.

BIT-EXACTNESS CONTRACT: every floating-point expression here must keep the
exact form and association order used in render_py.py, and the module must be
compiled with -ffp-contract=off (see setup.py). The two kernels are asserted
bit-identical in the test suite.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor

cnp.import_array()

cdef double T_EPS = 1e-9
cdef double DEN_EPS = 1e-12

cdef unsigned long long PX = 0x9E3779B97F4A7C15ULL
cdef unsigned long long PY = 0xC2B2AE3D27D4EB4FULL
cdef unsigned long long PZ = 0x165667B19E3779F9ULL
cdef unsigned long long MIX1 = 0xBF58476D1CE4E5B9ULL
cdef unsigned long long MIX2 = 0x94D049BB133111EBULL
cdef unsigned long long OCT2_SALT = 0xA5A5A5A5A5A5A5A5ULL
cdef double INV_2_53 = 2.0 ** -53


cdef inline double _hash3(long long ix, long long iy, long long iz,
                          unsigned long long seed) nogil:
    cdef unsigned long long h = seed ^ (
        (<unsigned long long>ix * PX + <unsigned long long>iy * PY)
        + <unsigned long long>iz * PZ)
    h = (h ^ (h >> 30)) * MIX1
    h = (h ^ (h >> 27)) * MIX2
    h = h ^ (h >> 31)
    return <double>(h >> 11) * INV_2_53


cdef inline double _vnoise(double x, double y, double z,
                           unsigned long long seed) nogil:
    cdef double x0 = floor(x)
    cdef double y0 = floor(y)
    cdef double z0 = floor(z)
    cdef double fx = x - x0
    cdef double fy = y - y0
    cdef double fz = z - z0
    cdef double wx = (fx * fx) * (3.0 - 2.0 * fx)
    cdef double wy = (fy * fy) * (3.0 - 2.0 * fy)
    cdef double wz = (fz * fz) * (3.0 - 2.0 * fz)
    cdef long long ix = <long long>x0
    cdef long long iy = <long long>y0
    cdef long long iz = <long long>z0
    cdef double c000 = _hash3(ix, iy, iz, seed)
    cdef double c100 = _hash3(ix + 1, iy, iz, seed)
    cdef double c010 = _hash3(ix, iy + 1, iz, seed)
    cdef double c110 = _hash3(ix + 1, iy + 1, iz, seed)
    cdef double c001 = _hash3(ix, iy, iz + 1, seed)
    cdef double c101 = _hash3(ix + 1, iy, iz + 1, seed)
    cdef double c011 = _hash3(ix, iy + 1, iz + 1, seed)
    cdef double c111 = _hash3(ix + 1, iy + 1, iz + 1, seed)
    cdef double c00 = c000 + wx * (c100 - c000)
    cdef double c10 = c010 + wx * (c110 - c010)
    cdef double c01 = c001 + wx * (c101 - c001)
    cdef double c11 = c011 + wx * (c111 - c011)
    cdef double c0 = c00 + wy * (c10 - c00)
    cdef double c1 = c01 + wy * (c11 - c01)
    return c0 + wz * (c1 - c0)


cdef inline double _texture_mod(double x, double y, double z, double scale,
                                double amp, unsigned long long seed) nogil:
    cdef double sx = scale * x
    cdef double sy = scale * y
    cdef double sz = scale * z
    cdef double n1 = _vnoise(sx, sy, sz, seed)
    cdef double n2 = _vnoise(2.0 * sx, 2.0 * sy, 2.0 * sz, seed ^ OCT2_SALT)
    cdef double n = (n1 + 0.5 * n2) * (2.0 / 3.0)
    return 1.0 + amp * (2.0 * n - 1.0)


def render_scene(scene):
    """Render the flattened scene to a float64 (height, width) image."""
    from .params import (
        IRIS_TEX_AMP, IRIS_TEX_SCALE, SCLERA_TEX_AMP, SCLERA_TEX_SCALE,
        SKIN_TEX_AMP, SKIN_TEX_SCALE,
    )

    cdef int W = scene.width
    cdef int H = scene.height
    cdef double fx = scene.fx
    cdef double fy = scene.fy
    cdef double cx = scene.cx
    cdef double cy = scene.cy
    rt = np.ascontiguousarray(scene.rot_t, dtype=np.float64)
    cdef double m00 = rt[0, 0], m01 = rt[0, 1], m02 = rt[0, 2]
    cdef double m10 = rt[1, 0], m11 = rt[1, 1], m12 = rt[1, 2]
    cdef double m20 = rt[2, 0], m21 = rt[2, 1], m22 = rt[2, 2]
    cdef double ox = scene.cam_origin[0], oy = scene.cam_origin[1], oz = scene.cam_origin[2]
    cdef double ecx = scene.ec[0], ecy = scene.ec[1], ecz = scene.ec[2]
    cdef double ccx = scene.cc[0], ccy = scene.cc[1], ccz = scene.cc[2]
    cdef double ax = scene.axis[0], ay = scene.axis[1], az = scene.axis[2]
    cdef double e1x = scene.e1[0], e1y = scene.e1[1], e1z = scene.e1[2]
    cdef double e2x = scene.e2[0], e2y = scene.e2[1], e2z = scene.e2[2]
    cdef double r_eye = scene.r_eye
    cdef double r_cor = scene.r_cor
    cdef double z_iris = scene.z_iris
    cdef double pupil_r = scene.pupil_r
    cdef double iris_r = scene.iris_r
    cdef double lid_cx = scene.lid_cx
    cdef double lid_cy = scene.lid_cy
    cdef double lid_a = scene.lid_a
    cdef double lid_b = scene.lid_b
    cdef double plane_z = scene.plane_z
    cdef double alb_pupil = scene.alb_pupil
    cdef double alb_iris = scene.alb_iris
    cdef double alb_sclera = scene.alb_sclera
    cdef double alb_skin = scene.alb_skin
    cdef double spec_strength = scene.spec_strength
    cdef double mir = -1.0 if scene.mirror else 1.0
    cdef unsigned long long seed_iris = scene.seed_iris
    cdef unsigned long long seed_sclera = scene.seed_sclera
    cdef unsigned long long seed_skin = scene.seed_skin
    cdef double tex_iris_scale = IRIS_TEX_SCALE
    cdef double tex_iris_amp = IRIS_TEX_AMP
    cdef double tex_sclera_scale = SCLERA_TEX_SCALE
    cdef double tex_sclera_amp = SCLERA_TEX_AMP
    cdef double tex_skin_scale = SKIN_TEX_SCALE
    cdef double tex_skin_amp = SKIN_TEX_AMP

    led_pos_arr = np.ascontiguousarray(scene.led_pos, dtype=np.float64)
    led_int_arr = np.ascontiguousarray(scene.led_intensity, dtype=np.float64)
    cdef double[:, ::1] led_pos = led_pos_arr.reshape(-1, 3)
    cdef double[::1] led_int = led_int_arr.reshape(-1)
    cdef int nled = led_pos.shape[0]

    out = np.zeros((H, W), dtype=np.float64)
    cdef double[:, ::1] ov = out

    cdef int i, j, k, surf
    cdef double dxc, dyc, rdx, rdy, rdz, n2, inv, dx, dy, dz
    cdef double oex, oey, oez, b_e, c_e, disc_e, sq_e, t_e, pex, pey, pez, w_e
    cdef double ocx, ocy, ocz, b_c, c_c, disc_c, sq_c, t_c, pcx, pcy, pcz, w_c
    cdef double q0x, q0y, q0z, denom, tnum, t_i, pix, piy, piz, ru, rv, rr
    cdef double t_p, t_best, px, py, pz, nx, ny, nz
    cdef double qex, qey, qez, invq, lx, ly, alb, acc, value
    cdef double gx, gy, gz, gi, lvx, lvy, lvz, d2, invd, ndl
    cdef double qcx, qcy, qcz, invc, ncx, ncy, ncz, sacc
    cdef double hx, hy, hz, hn2, invh, s, s2, s4, s8, s16, s32, s64, s128, s200
    cdef double su, sv, sw, fu, fv, fw
    cdef bint valid_e, valid_c, valid_i, valid_p, lid_inside, spec_ok

    q0x = ecx + z_iris * ax
    q0y = ecy + z_iris * ay
    q0z = ecz + z_iris * az
    oex = ox - ecx
    oey = oy - ecy
    oez = oz - ecz
    c_e = ((oex * oex + oey * oey) + oez * oez) - r_eye * r_eye
    ocx = ox - ccx
    ocy = oy - ccy
    ocz = oz - ccz
    c_c = ((ocx * ocx + ocy * ocy) + ocz * ocz) - r_cor * r_cor
    tnum = ((q0x - ox) * ax + (q0y - oy) * ay) + ((q0z - oz) * az)

    for i in range(H):
        dyc = (<double>i - cy) / fy
        for j in range(W):
            dxc = (<double>j - cx) / fx
            rdx = m00 * dxc + m01 * dyc + m02
            rdy = m10 * dxc + m11 * dyc + m12
            rdz = m20 * dxc + m21 * dyc + m22
            n2 = (rdx * rdx + rdy * rdy) + rdz * rdz
            inv = 1.0 / sqrt(n2)
            dx = rdx * inv
            dy = rdy * inv
            dz = rdz * inv

            # eyeball sphere, truncated at the iris plane
            b_e = (dx * oex + dy * oey) + dz * oez
            disc_e = b_e * b_e - c_e
            valid_e = False
            t_e = 0.0
            pex = pey = pez = 0.0
            if disc_e >= 0.0:
                sq_e = sqrt(disc_e)
                t_e = -b_e - sq_e
                if t_e > T_EPS:
                    pex = ox + t_e * dx
                    pey = oy + t_e * dy
                    pez = oz + t_e * dz
                    w_e = ((pex - ecx) * ax + (pey - ecy) * ay) + (pez - ecz) * az
                    valid_e = w_e <= z_iris

            # cornea cap
            b_c = (dx * ocx + dy * ocy) + dz * ocz
            disc_c = b_c * b_c - c_c
            valid_c = False
            t_c = 0.0
            pcx = pcy = pcz = 0.0
            if disc_c >= 0.0:
                sq_c = sqrt(disc_c)
                t_c = -b_c - sq_c
                if t_c > T_EPS:
                    pcx = ox + t_c * dx
                    pcy = oy + t_c * dy
                    pcz = oz + t_c * dz
                    w_c = ((pcx - ecx) * ax + (pcy - ecy) * ay) + (pcz - ecz) * az
                    valid_c = w_c >= z_iris

            # iris/pupil disk
            denom = (dx * ax + dy * ay) + dz * az
            valid_i = False
            t_i = 0.0
            ru = rv = rr = 0.0
            pix = piy = piz = 0.0
            if denom < -DEN_EPS:
                t_i = tnum / denom
                if t_i > T_EPS:
                    pix = ox + t_i * dx
                    piy = oy + t_i * dy
                    piz = oz + t_i * dz
                    ru = ((pix - ecx) * e1x + (piy - ecy) * e1y) + (piz - ecz) * e1z
                    rv = ((pix - ecx) * e2x + (piy - ecy) * e2y) + (piz - ecz) * e2z
                    rr = sqrt(ru * ru + rv * rv)
                    valid_i = rr <= iris_r

            # backdrop plane
            valid_p = False
            t_p = 0.0
            if dz < -DEN_EPS:
                t_p = (plane_z - oz) / dz
                valid_p = t_p > T_EPS

            t_best = float("inf")
            surf = 0
            if valid_i and t_i < t_best:
                t_best = t_i
                surf = 1
            if valid_e and t_e < t_best:
                t_best = t_e
                surf = 2
            if valid_p and t_p < t_best:
                t_best = t_p
                surf = 3

            value = 0.0
            if surf != 0:
                if surf == 1:
                    px = pix
                    py = piy
                    pz = piz
                    nx = ax
                    ny = ay
                    nz = az
                elif surf == 2:
                    px = pex
                    py = pey
                    pz = pez
                    qex = pex - ecx
                    qey = pey - ecy
                    qez = pez - ecz
                    invq = 1.0 / sqrt((qex * qex + qey * qey) + qez * qez)
                    nx = qex * invq
                    ny = qey * invq
                    nz = qez * invq
                else:
                    px = ox + t_p * dx
                    py = oy + t_p * dy
                    pz = oz + t_p * dz
                    nx = 0.0
                    ny = 0.0
                    nz = 1.0

                lid_inside = False
                if lid_b > DEN_EPS:
                    lx = (px - lid_cx) / lid_a
                    ly = (py - lid_cy) / lid_b
                    lid_inside = (lx * lx + ly * ly) <= 1.0

                # classify and texture
                if surf == 3 or not lid_inside:
                    fu = px - ecx
                    fv = py - ecy
                    fw = pz - ecz
                    alb = alb_skin * _texture_mod(mir * fu, fv, fw,
                                                  tex_skin_scale, tex_skin_amp,
                                                  seed_skin)
                elif surf == 1:
                    if rr <= pupil_r:
                        alb = alb_pupil
                    else:
                        alb = alb_iris * _texture_mod(mir * ru, rv, 0.0,
                                                      tex_iris_scale,
                                                      tex_iris_amp, seed_iris)
                else:
                    qex = pex - ecx
                    qey = pey - ecy
                    qez = pez - ecz
                    su = (qex * e1x + qey * e1y) + qez * e1z
                    sv = (qex * e2x + qey * e2y) + qez * e2z
                    sw = (qex * ax + qey * ay) + qez * az
                    alb = alb_sclera * _texture_mod(mir * su, sv, sw,
                                                    tex_sclera_scale,
                                                    tex_sclera_amp, seed_sclera)

                acc = 0.0
                for k in range(nled):
                    gx = led_pos[k, 0]
                    gy = led_pos[k, 1]
                    gz = led_pos[k, 2]
                    gi = led_int[k]
                    lvx = gx - px
                    lvy = gy - py
                    lvz = gz - pz
                    d2 = (lvx * lvx + lvy * lvy) + lvz * lvz
                    invd = 1.0 / sqrt(d2)
                    ndl = (nx * (lvx * invd) + ny * (lvy * invd)) + nz * (lvz * invd)
                    if ndl > 0.0:
                        acc = acc + (gi * ndl) / d2
                value = alb * acc

            # Blinn specular on the exposed cornea cap
            spec_ok = valid_c and t_c < t_best
            if spec_ok:
                if lid_b > DEN_EPS:
                    lx = (pcx - lid_cx) / lid_a
                    ly = (pcy - lid_cy) / lid_b
                    spec_ok = (lx * lx + ly * ly) <= 1.0
                else:
                    spec_ok = False
            if spec_ok:
                qcx = pcx - ccx
                qcy = pcy - ccy
                qcz = pcz - ccz
                invc = 1.0 / sqrt((qcx * qcx + qcy * qcy) + qcz * qcz)
                ncx = qcx * invc
                ncy = qcy * invc
                ncz = qcz * invc
                sacc = 0.0
                for k in range(nled):
                    gx = led_pos[k, 0]
                    gy = led_pos[k, 1]
                    gz = led_pos[k, 2]
                    gi = led_int[k]
                    lvx = gx - pcx
                    lvy = gy - pcy
                    lvz = gz - pcz
                    d2 = (lvx * lvx + lvy * lvy) + lvz * lvz
                    invd = 1.0 / sqrt(d2)
                    hx = lvx * invd - dx
                    hy = lvy * invd - dy
                    hz = lvz * invd - dz
                    hn2 = (hx * hx + hy * hy) + hz * hz
                    if hn2 > DEN_EPS:
                        invh = 1.0 / sqrt(hn2)
                        s = (ncx * (hx * invh) + ncy * (hy * invh)) + ncz * (hz * invh)
                        if s > 0.0:
                            s2 = s * s
                            s4 = s2 * s2
                            s8 = s4 * s4
                            s16 = s8 * s8
                            s32 = s16 * s16
                            s64 = s32 * s32
                            s128 = s64 * s64
                            s200 = (s128 * s64) * s8
                            sacc = sacc + (gi * s200) / d2
                value = value + spec_strength * sacc

            ov[i, j] = value

    return out
