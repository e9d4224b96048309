"""Pure-numpy render kernel.

One primary ray per pixel center against the parametric eye scene:
cornea cap (specular only), iris/pupil disk, eyeball sphere truncated at the
iris plane, and a skin backdrop plane; eyelid occlusion re-textures eye
surfaces as skin. Lambertian shading per LED plus a Blinn lobe (exponent 200)
on the cornea.

BIT-EXACTNESS CONTRACT: render_cy.pyx implements the same math per pixel and
must produce bit-identical float64 output. Keep every floating-point
expression (and its association order) in sync between the two files; no
transcendental calls besides sqrt are allowed in either kernel.
"""

from __future__ import annotations

import numpy as np

_T_EPS = 1e-9
_DEN_EPS = 1e-12

_PX = np.uint64(0x9E3779B97F4A7C15)
_PY = np.uint64(0xC2B2AE3D27D4EB4F)
_PZ = np.uint64(0x165667B19E3779F9)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_OCT2_SALT = np.uint64(0xA5A5A5A5A5A5A5A5)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV_2_53 = float(2.0 ** -53)


def _hash3(ix, iy, iz, seed):
    """Lattice-corner hash -> [0,1). ix/iy/iz are int64 arrays."""
    h = np.uint64(seed) ^ (
        ix.astype(np.uint64) * _PX + iy.astype(np.uint64) * _PY
        + iz.astype(np.uint64) * _PZ
    )
    h = (h ^ (h >> _S30)) * _MIX1
    h = (h ^ (h >> _S27)) * _MIX2
    h = h ^ (h >> _S31)
    return (h >> _S11).astype(np.float64) * _INV_2_53


def _vnoise(x, y, z, seed):
    """Trilinear value noise with smoothstep fade, in [0,1)."""
    x0 = np.floor(x)
    y0 = np.floor(y)
    z0 = np.floor(z)
    fx = x - x0
    fy = y - y0
    fz = z - z0
    wx = (fx * fx) * (3.0 - 2.0 * fx)
    wy = (fy * fy) * (3.0 - 2.0 * fy)
    wz = (fz * fz) * (3.0 - 2.0 * fz)
    ix = x0.astype(np.int64)
    iy = y0.astype(np.int64)
    iz = z0.astype(np.int64)
    one = np.int64(1)
    c000 = _hash3(ix, iy, iz, seed)
    c100 = _hash3(ix + one, iy, iz, seed)
    c010 = _hash3(ix, iy + one, iz, seed)
    c110 = _hash3(ix + one, iy + one, iz, seed)
    c001 = _hash3(ix, iy, iz + one, seed)
    c101 = _hash3(ix + one, iy, iz + one, seed)
    c011 = _hash3(ix, iy + one, iz + one, seed)
    c111 = _hash3(ix + one, iy + one, iz + one, seed)
    c00 = c000 + wx * (c100 - c000)
    c10 = c010 + wx * (c110 - c010)
    c01 = c001 + wx * (c101 - c001)
    c11 = c011 + wx * (c111 - c011)
    c0 = c00 + wy * (c10 - c00)
    c1 = c01 + wy * (c11 - c01)
    return c0 + wz * (c1 - c0)


def _texture_mod(x, y, z, scale, amp, seed):
    """Two-octave value-noise albedo modulation around 1.0."""
    sx = scale * x
    sy = scale * y
    sz = scale * z
    n1 = _vnoise(sx, sy, sz, seed)
    n2 = _vnoise(2.0 * sx, 2.0 * sy, 2.0 * sz, np.uint64(seed) ^ _OCT2_SALT)
    n = (n1 + 0.5 * n2) * (2.0 / 3.0)
    return 1.0 + amp * (2.0 * n - 1.0)


def render_scene(scene) -> np.ndarray:
    """Render the flattened scene to a float64 (height, width) image."""
    from .params import (
        IRIS_TEX_AMP, IRIS_TEX_SCALE, SCLERA_TEX_AMP, SCLERA_TEX_SCALE,
        SKIN_TEX_AMP, SKIN_TEX_SCALE,
    )

    W = scene.width
    H = scene.height
    m = scene.rot_t
    m00, m01, m02 = float(m[0, 0]), float(m[0, 1]), float(m[0, 2])
    m10, m11, m12 = float(m[1, 0]), float(m[1, 1]), float(m[1, 2])
    m20, m21, m22 = float(m[2, 0]), float(m[2, 1]), float(m[2, 2])
    ox, oy, oz = (float(scene.cam_origin[k]) for k in range(3))
    ecx, ecy, ecz = (float(scene.ec[k]) for k in range(3))
    ccx, ccy, ccz = (float(scene.cc[k]) for k in range(3))
    ax, ay, az = (float(scene.axis[k]) for k in range(3))
    e1x, e1y, e1z = (float(scene.e1[k]) for k in range(3))
    e2x, e2y, e2z = (float(scene.e2[k]) for k in range(3))
    r_eye = float(scene.r_eye)
    r_cor = float(scene.r_cor)
    z_iris = float(scene.z_iris)

    ucol = (np.arange(W, dtype=np.float64) - scene.cx) / scene.fx
    vcol = (np.arange(H, dtype=np.float64) - scene.cy) / scene.fy
    dxc = ucol[None, :]
    dyc = vcol[:, None]

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        rdx = m00 * dxc + m01 * dyc + m02
        rdy = m10 * dxc + m11 * dyc + m12
        rdz = m20 * dxc + m21 * dyc + m22
        n2 = (rdx * rdx + rdy * rdy) + rdz * rdz
        inv = 1.0 / np.sqrt(n2)
        dx = rdx * inv
        dy = rdy * inv
        dz = rdz * inv

        # eyeball sphere, truncated at the iris plane (w <= z_iris)
        oex = ox - ecx
        oey = oy - ecy
        oez = oz - ecz
        b_e = (dx * oex + dy * oey) + dz * oez
        c_e = ((oex * oex + oey * oey) + oez * oez) - r_eye * r_eye
        disc_e = b_e * b_e - c_e
        sq_e = np.sqrt(np.maximum(disc_e, 0.0))
        t_e = -b_e - sq_e
        pex = ox + t_e * dx
        pey = oy + t_e * dy
        pez = oz + t_e * dz
        w_e = ((pex - ecx) * ax + (pey - ecy) * ay) + (pez - ecz) * az
        valid_e = (disc_e >= 0.0) & (t_e > _T_EPS) & (w_e <= z_iris)

        # cornea cap (w >= z_iris), specular carrier only
        ocx = ox - ccx
        ocy = oy - ccy
        ocz = oz - ccz
        b_c = (dx * ocx + dy * ocy) + dz * ocz
        c_c = ((ocx * ocx + ocy * ocy) + ocz * ocz) - r_cor * r_cor
        disc_c = b_c * b_c - c_c
        sq_c = np.sqrt(np.maximum(disc_c, 0.0))
        t_c = -b_c - sq_c
        pcx = ox + t_c * dx
        pcy = oy + t_c * dy
        pcz = oz + t_c * dz
        w_c = ((pcx - ecx) * ax + (pcy - ecy) * ay) + (pcz - ecz) * az
        valid_c = (disc_c >= 0.0) & (t_c > _T_EPS) & (w_c >= z_iris)

        # iris/pupil disk on the iris plane
        q0x = ecx + z_iris * ax
        q0y = ecy + z_iris * ay
        q0z = ecz + z_iris * az
        denom = (dx * ax + dy * ay) + dz * az
        tnum = ((q0x - ox) * ax + (q0y - oy) * ay) + (q0z - oz) * az
        t_i = tnum / denom
        pix = ox + t_i * dx
        piy = oy + t_i * dy
        piz = oz + t_i * dz
        ru = ((pix - ecx) * e1x + (piy - ecy) * e1y) + (piz - ecz) * e1z
        rv = ((pix - ecx) * e2x + (piy - ecy) * e2y) + (piz - ecz) * e2z
        rr = np.sqrt(ru * ru + rv * rv)
        valid_i = (denom < -_DEN_EPS) & (t_i > _T_EPS) & (rr <= scene.iris_r)

        # skin backdrop plane z = plane_z
        t_p = (scene.plane_z - oz) / dz
        valid_p = (dz < -_DEN_EPS) & (t_p > _T_EPS)

        inf = np.inf
        ti_f = np.where(valid_i, t_i, inf)
        te_f = np.where(valid_e, t_e, inf)
        tp_f = np.where(valid_p, t_p, inf)
        t_best = np.minimum(np.minimum(ti_f, te_f), tp_f)
        hit = np.isfinite(t_best)
        is_iris = valid_i & (ti_f == t_best)
        is_eye = valid_e & (te_f == t_best) & ~is_iris
        is_plane = valid_p & (tp_f == t_best) & ~is_iris & ~is_eye
        is_pupil = is_iris & (rr <= scene.pupil_r)

        px = np.where(is_iris, pix, np.where(is_eye, pex, ox + t_p * dx))
        py = np.where(is_iris, piy, np.where(is_eye, pey, oy + t_p * dy))
        pz = np.where(is_iris, piz, np.where(is_eye, pez, oz + t_p * dz))

        # normals: iris plane -> axis, eyeball -> radial, plane -> +z
        qex = pex - ecx
        qey = pey - ecy
        qez = pez - ecz
        invq = 1.0 / np.sqrt((qex * qex + qey * qey) + qez * qez)
        nx = np.where(is_iris, ax, np.where(is_eye, qex * invq, 0.0))
        ny = np.where(is_iris, ay, np.where(is_eye, qey * invq, 0.0))
        nz = np.where(is_iris, az, np.where(is_eye, qez * invq, 1.0))

        # eyelid aperture test at the shading point
        if scene.lid_b > _DEN_EPS:
            lx = (px - scene.lid_cx) / scene.lid_a
            ly = (py - scene.lid_cy) / scene.lid_b
            lid_inside = (lx * lx + ly * ly) <= 1.0
        else:
            lid_inside = np.zeros((H, W), dtype=bool)

        on_eye = is_iris | is_eye
        masked = on_eye & ~lid_inside
        cls_pupil = is_pupil & lid_inside
        cls_iris = is_iris & ~is_pupil & lid_inside
        cls_sclera = is_eye & lid_inside
        cls_skin = is_plane | masked

        # albedo with per-surface procedural texture; noise is evaluated only
        # on the pixels of each class (the scalar kernel does the same work)
        mir = -1.0 if scene.mirror else 1.0
        albmap = np.zeros((H, W), dtype=np.float64)
        albmap[cls_pupil] = scene.alb_pupil
        sel = np.flatnonzero(cls_iris.ravel())
        if sel.size:
            tu = mir * ru.ravel()[sel]
            tv = rv.ravel()[sel]
            tw = np.zeros(sel.size, dtype=np.float64)
            mod = _texture_mod(tu, tv, tw, IRIS_TEX_SCALE, IRIS_TEX_AMP, scene.seed_iris)
            albmap.ravel()[sel] = scene.alb_iris * mod
        sel = np.flatnonzero(cls_sclera.ravel())
        if sel.size:
            su = ((qex * e1x + qey * e1y) + qez * e1z).ravel()[sel]
            sv = ((qex * e2x + qey * e2y) + qez * e2z).ravel()[sel]
            sw = ((qex * ax + qey * ay) + qez * az).ravel()[sel]
            mod = _texture_mod(mir * su, sv, sw, SCLERA_TEX_SCALE, SCLERA_TEX_AMP,
                               scene.seed_sclera)
            albmap.ravel()[sel] = scene.alb_sclera * mod
        sel = np.flatnonzero(cls_skin.ravel())
        if sel.size:
            fu = (px - ecx).ravel()[sel]
            fv = (py - ecy).ravel()[sel]
            fw = (pz - ecz).ravel()[sel]
            mod = _texture_mod(mir * fu, fv, fw, SKIN_TEX_SCALE, SKIN_TEX_AMP,
                               scene.seed_skin)
            albmap.ravel()[sel] = scene.alb_skin * mod

        # Lambertian accumulation over LEDs
        acc = np.zeros((H, W), dtype=np.float64)
        nled = scene.led_pos.shape[0]
        for k in range(nled):
            gx = float(scene.led_pos[k, 0])
            gy = float(scene.led_pos[k, 1])
            gz = float(scene.led_pos[k, 2])
            gi = float(scene.led_intensity[k])
            lvx = gx - px
            lvy = gy - py
            lvz = gz - pz
            d2 = (lvx * lvx + lvy * lvy) + lvz * lvz
            invd = 1.0 / np.sqrt(d2)
            ndl = (nx * (lvx * invd) + ny * (lvy * invd)) + nz * (lvz * invd)
            acc = acc + np.where(ndl > 0.0, (gi * ndl) / d2, 0.0)
        value = np.where(hit, albmap * acc, 0.0)

        # Blinn specular on the exposed cornea cap
        spec_ok = valid_c & (t_c < t_best)
        if scene.lid_b > _DEN_EPS:
            lcx = (pcx - scene.lid_cx) / scene.lid_a
            lcy = (pcy - scene.lid_cy) / scene.lid_b
            spec_ok = spec_ok & ((lcx * lcx + lcy * lcy) <= 1.0)
        else:
            spec_ok = np.zeros((H, W), dtype=bool)
        if spec_ok.any():
            qcx = pcx - ccx
            qcy = pcy - ccy
            qcz = pcz - ccz
            invc = 1.0 / np.sqrt((qcx * qcx + qcy * qcy) + qcz * qcz)
            ncx = qcx * invc
            ncy = qcy * invc
            ncz = qcz * invc
            sacc = np.zeros((H, W), dtype=np.float64)
            for k in range(nled):
                gx = float(scene.led_pos[k, 0])
                gy = float(scene.led_pos[k, 1])
                gz = float(scene.led_pos[k, 2])
                gi = float(scene.led_intensity[k])
                lvx = gx - pcx
                lvy = gy - pcy
                lvz = gz - pcz
                d2 = (lvx * lvx + lvy * lvy) + lvz * lvz
                invd = 1.0 / np.sqrt(d2)
                hx = lvx * invd - dx
                hy = lvy * invd - dy
                hz = lvz * invd - dz
                hn2 = (hx * hx + hy * hy) + hz * hz
                invh = 1.0 / np.sqrt(hn2)
                s = (ncx * (hx * invh) + ncy * (hy * invh)) + ncz * (hz * invh)
                s2 = s * s
                s4 = s2 * s2
                s8 = s4 * s4
                s16 = s8 * s8
                s32 = s16 * s16
                s64 = s32 * s32
                s128 = s64 * s64
                s200 = (s128 * s64) * s8
                good = (s > 0.0) & (hn2 > _DEN_EPS)
                sacc = sacc + np.where(good, (gi * s200) / d2, 0.0)
            value = value + np.where(spec_ok, scene.spec_strength * sacc, 0.0)

        return value
