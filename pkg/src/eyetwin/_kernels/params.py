"""Flattened scene description consumed by the render kernels.

Both kernels (numpy and Cython) receive exactly these numbers. The two
implementations are required to produce bit-identical images, so any new
field must be used with the same floating-point expression order in both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Procedural texture tuning, shared by both kernels. Scales are cycles per mm,
# amplitudes are relative albedo modulation.
IRIS_TEX_SCALE = 2.0
IRIS_TEX_AMP = 0.35
SCLERA_TEX_SCALE = 0.8
SCLERA_TEX_AMP = 0.08
SKIN_TEX_SCALE = 0.45
SKIN_TEX_AMP = 0.30

# Blinn lobe on the cornea (exponent fixed at 200; see render docs).
SPEC_STRENGTH = 0.4


@dataclass
class SceneParams:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    cam_origin: np.ndarray      # (3,) device mm
    rot_t: np.ndarray           # (3,3) camera->device
    ec: np.ndarray              # eyeball center (3,)
    r_eye: float
    cc: np.ndarray              # cornea center (3,)
    r_cor: float
    axis: np.ndarray            # posed visual axis (3,)
    e1: np.ndarray              # posed iris-plane basis (3,)
    e2: np.ndarray
    z_iris: float               # iris plane offset along axis from ec
    pupil_r: float
    iris_r: float
    lid_cx: float               # lid ellipse center, device x/y
    lid_cy: float
    lid_a: float                # lid ellipse half axes (<= 0 means closed)
    lid_b: float
    plane_z: float              # skin backdrop plane
    alb_pupil: float
    alb_iris: float
    alb_sclera: float
    alb_skin: float
    led_pos: np.ndarray         # (n,3)
    led_intensity: np.ndarray   # (n,)
    seed_iris: int              # uint64 texture seeds
    seed_sclera: int
    seed_skin: int
    mirror: bool                # sample textures at negated local x
    spec_strength: float
