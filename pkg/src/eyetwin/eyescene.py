"""Parametric near-infrared eye scene: geometry, posing, rendering, glints.

The scene is a sphere-based stand-in for scanned identities: an eyeball
sphere truncated at the iris plane, a protruding cornea sphere carrying
specular reflections, a flat iris/pupil disk (no corneal refraction; the
pupil sits at its geometric position), an eyelid aperture ellipse, and a skin
backdrop plane. Surfaces are Lambertian under point LEDs with seeded value-
noise textures, so renders are linear in LED intensity and fully
reproducible from (eye, camera, leds, slippage, seeds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .core import CameraIntrinsics, CameraPose, LinearImage, pitch_yaw_to_gaze, project
from .errors import BehindCameraError, DegenerateCameraError, ValidationError
from .rng import derive_seed, mix64, uniform

# eyelid shape: half width relative to the vertical half-opening, and upper
# lid droop per degree of downward pitch
LID_WIDTH_RATIO = 1.8
LID_DROOP_MM_PER_DEG = 0.3

# analytic glints are splatted as Gaussian spots over the rendered image
GLINT_SIGMA_PX = 0.7
GLINT_GAIN = 10.0
GLINT_STAMP_PX = 3.0

_IRIS_SALT = 0x1B873593
_SCLERA_SALT = 0x85EBCA6B
_SKIN_SALT = 0xC2B2AE35


@dataclass
class EyeModel:
    """Per-identity eye and periocular geometry with 850 nm albedos."""

    eyeball_center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    eyeball_radius: float = 12.0
    cornea_radius: float = 7.8
    cornea_center_offset: float = 5.6
    pupil_radius: float = 2.5
    iris_radius: float = 6.0
    albedo_pupil: float = 0.015
    albedo_iris: float = 0.40
    albedo_sclera: float = 0.75
    albedo_skin: float = 0.55
    eyelid_aperture: float = 10.0
    texture_seed: int = 0
    mirrored: bool = False

    def __post_init__(self):
        self.eyeball_center = np.asarray(self.eyeball_center, dtype=np.float64)

    def validate(self) -> "EyeModel":
        if not 0 < self.pupil_radius < self.iris_radius < self.eyeball_radius:
            raise ValidationError("need 0 < pupil_radius < iris_radius < eyeball_radius")
        if not 0 < self.cornea_radius < self.eyeball_radius:
            raise ValidationError("need 0 < cornea_radius < eyeball_radius")
        if self.cornea_center_offset + self.cornea_radius <= self.eyeball_radius:
            raise ValidationError("cornea sphere must protrude past the eyeball")
        for name in ("albedo_pupil", "albedo_iris", "albedo_sclera", "albedo_skin"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} outside [0, 1]")
        if self.albedo_pupil > 0.05:
            raise ValidationError("albedo_pupil must be <= 0.05 (darkest region)")
        if self.eyelid_aperture <= 0:
            raise ValidationError("eyelid_aperture must be positive")
        return self

    def to_dict(self) -> dict:
        return {
            "eyeball_center": self.eyeball_center.tolist(),
            "eyeball_radius": self.eyeball_radius,
            "cornea_radius": self.cornea_radius,
            "cornea_center_offset": self.cornea_center_offset,
            "pupil_radius": self.pupil_radius,
            "iris_radius": self.iris_radius,
            "albedo_pupil": self.albedo_pupil,
            "albedo_iris": self.albedo_iris,
            "albedo_sclera": self.albedo_sclera,
            "albedo_skin": self.albedo_skin,
            "eyelid_aperture": self.eyelid_aperture,
            "texture_seed": self.texture_seed,
            "mirrored": self.mirrored,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EyeModel":
        return cls(
            eyeball_center=np.array(d["eyeball_center"], dtype=np.float64),
            eyeball_radius=d["eyeball_radius"],
            cornea_radius=d["cornea_radius"],
            cornea_center_offset=d["cornea_center_offset"],
            pupil_radius=d["pupil_radius"],
            iris_radius=d["iris_radius"],
            albedo_pupil=d["albedo_pupil"],
            albedo_iris=d["albedo_iris"],
            albedo_sclera=d["albedo_sclera"],
            albedo_skin=d["albedo_skin"],
            eyelid_aperture=d["eyelid_aperture"],
            texture_seed=d["texture_seed"],
            mirrored=d.get("mirrored", False),
        ).validate()


@dataclass
class Illuminant:
    """Point NIR LED."""

    position: np.ndarray
    radiant_intensity: float
    wavelength_nm: float = 850.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if self.radiant_intensity < 0:
            raise ValidationError("radiant_intensity must be >= 0")

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "radiant_intensity": self.radiant_intensity,
            "wavelength_nm": self.wavelength_nm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Illuminant":
        return cls(np.array(d["position"]), d["radiant_intensity"],
                   d.get("wavelength_nm", 850.0))


@dataclass
class RigConfig:
    """Cameras and LEDs of one hardware configuration, device coordinates."""

    cameras: list  # of (CameraIntrinsics, CameraPose)
    leds: list
    nominal_eye_center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.nominal_eye_center = np.asarray(self.nominal_eye_center, dtype=np.float64)

    def validate(self) -> "RigConfig":
        if not self.cameras:
            raise ValidationError("rig needs at least one camera")
        if not self.leds:
            raise ValidationError("rig needs at least one LED")
        for intr, pose in self.cameras:
            intr.validate()
            pose.validate()
        return self

    def to_dict(self) -> dict:
        return {
            "cameras": [
                {"intrinsics": intr.to_dict(), "pose": pose.to_dict()}
                for intr, pose in self.cameras
            ],
            "leds": [led.to_dict() for led in self.leds],
            "nominal_eye_center": self.nominal_eye_center.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigConfig":
        cameras = []
        for c in d["cameras"]:
            intr = CameraIntrinsics.from_dict(c["intrinsics"])
            p = c["pose"]
            if "rotation" in p:
                pose = CameraPose.from_dict(p)
            else:
                pose = CameraPose.look_at(p["position"], p["look_at"],
                                          p.get("up", (0.0, 1.0, 0.0)))
            cameras.append((intr, pose))
        leds = [Illuminant.from_dict(x) for x in d["leds"]]
        return cls(cameras, leds, np.array(d.get("nominal_eye_center", [0, 0, 0]),
                                           dtype=np.float64)).validate()


@dataclass
class SlippageTransform:
    """Rigid device translation relative to nominal fit, mm."""

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz], dtype=np.float64)

    def is_zero(self) -> bool:
        return self.dx == 0.0 and self.dy == 0.0 and self.dz == 0.0


@dataclass
class PosedEye:
    """EyeModel rotated to a gaze direction; the renderable geometry."""

    eyeball_center: np.ndarray
    eyeball_radius: float
    cornea_center: np.ndarray
    cornea_radius: float
    axis: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    z_iris: float
    pupil_radius: float
    iris_radius: float
    albedo_pupil: float
    albedo_iris: float
    albedo_sclera: float
    albedo_skin: float
    eyelid_aperture: float
    droop_mm: float
    texture_seed: int
    mirrored: bool
    gaze: np.ndarray
    rotation: np.ndarray

    def translated(self, delta) -> "PosedEye":
        d = np.asarray(delta, dtype=np.float64)
        return replace(
            self,
            eyeball_center=self.eyeball_center + d,
            cornea_center=self.cornea_center + d,
        )


def rotation_from_gaze(gaze) -> np.ndarray:
    """Minimal rotation carrying the rest axis (0,0,1) onto `gaze`."""
    g = np.asarray(gaze, dtype=np.float64)
    gx, gy, gz = float(g[0]), float(g[1]), float(g[2])
    s2 = gx * gx + gy * gy
    if s2 < 1e-24:
        if gz < 0:
            raise ValidationError("gaze opposite the rest axis is unsupported")
        return np.eye(3)
    s = math.sqrt(s2)
    # rotation axis is z x g = (-gy, gx, 0), normalized
    kx = -gy / s
    ky = gx / s
    c = gz
    t = 1.0 - c
    return np.array([
        [c + t * kx * kx, t * kx * ky, s * ky],
        [t * kx * ky, c + t * ky * ky, -s * kx],
        [-s * ky, s * kx, c],
    ])


def apply_gaze(eye: EyeModel, gaze) -> PosedEye:
    """Rotate the eyeball about its center so the visual axis matches `gaze`.

    The eyelid aperture narrows with downward pitch (upper lid follows the
    gaze); eyelids themselves stay fixed to the face.
    """
    g = np.asarray(gaze, dtype=np.float64)
    if abs(np.linalg.norm(g) - 1.0) > 1e-9:
        raise ValidationError("gaze must be a unit vector")
    rot = rotation_from_gaze(g)
    axis = rot @ np.array([0.0, 0.0, 1.0])
    e1 = rot @ np.array([1.0, 0.0, 0.0])
    e2 = rot @ np.array([0.0, 1.0, 0.0])
    pitch_deg = math.degrees(math.asin(max(-1.0, min(1.0, g[1]))))
    droop = LID_DROOP_MM_PER_DEG * max(0.0, -pitch_deg)
    z_iris = math.sqrt(eye.eyeball_radius ** 2 - eye.iris_radius ** 2)
    return PosedEye(
        eyeball_center=eye.eyeball_center.copy(),
        eyeball_radius=eye.eyeball_radius,
        cornea_center=eye.eyeball_center + eye.cornea_center_offset * axis,
        cornea_radius=eye.cornea_radius,
        axis=axis,
        e1=e1,
        e2=e2,
        z_iris=z_iris,
        pupil_radius=eye.pupil_radius,
        iris_radius=eye.iris_radius,
        albedo_pupil=eye.albedo_pupil,
        albedo_iris=eye.albedo_iris,
        albedo_sclera=eye.albedo_sclera,
        albedo_skin=eye.albedo_skin,
        eyelid_aperture=eye.eyelid_aperture,
        droop_mm=droop,
        texture_seed=eye.texture_seed,
        mirrored=eye.mirrored,
        gaze=g.copy(),
        rotation=rot,
    )


def gaze_targets(count: int = 114, half_fov: float = 35.0) -> list[np.ndarray]:
    """Deterministic gaze-target directions: straight ahead plus concentric
    rings in (pitch, yaw) space, per-ring counts proportional to ring radius.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    if not 0.0 < half_fov < 90.0:
        raise ValidationError("half_fov must be in (0, 90)")
    targets = [pitch_yaw_to_gaze(0.0, 0.0)]
    rest = count - 1
    if rest == 0:
        return targets
    rings = 1
    while 3 * rings * (rings + 1) < rest:
        rings += 1
    # largest-remainder apportionment of `rest` over rings, weight k
    total_w = rings * (rings + 1) / 2
    quotas = [rest * k / total_w for k in range(1, rings + 1)]
    counts = [int(q) for q in quotas]
    shortfall = rest - sum(counts)
    order = sorted(range(rings), key=lambda i: (quotas[i] - counts[i], i), reverse=True)
    for i in order[:shortfall]:
        counts[i] += 1
    for k in range(1, rings + 1):
        radius = half_fov * k / rings
        m = counts[k - 1]
        for j in range(m):
            phi = 2.0 * math.pi * j / m
            yaw = radius * math.cos(phi)
            pitch = radius * math.sin(phi)
            targets.append(pitch_yaw_to_gaze(pitch, yaw))
    return targets


def mirror_identity(eye: EyeModel) -> EyeModel:
    """Reflect the identity across the device x=0 plane (right eye -> left).

    Positional fields negate x; radii and albedos are unchanged; the
    procedural texture is sampled mirrored so a mirrored render is the exact
    horizontal flip of the original.
    """
    center = eye.eyeball_center.copy()
    center[0] = -center[0]
    return replace(eye, eyeball_center=center, mirrored=not eye.mirrored)


def mirror_intrinsics(intr: CameraIntrinsics) -> CameraIntrinsics:
    return replace(intr, cx=(intr.width - 1) - intr.cx)


def mirror_pose(pose: CameraPose) -> CameraPose:
    m = np.diag([-1.0, 1.0, 1.0])
    return CameraPose(m @ pose.rotation @ m, m @ pose.translation)


def mirror_illuminant(led: Illuminant) -> Illuminant:
    p = led.position.copy()
    p[0] = -p[0]
    return replace(led, position=p)


def sample_slippage(rng_seed: int, ranges=(3.0, 3.0, 6.0)) -> SlippageTransform:
    """Uniform slippage draw, each component in its symmetric range."""
    rx, ry, rz = (float(r) for r in ranges)
    if min(rx, ry, rz) <= 0:
        raise ValidationError("slippage ranges must be positive")
    return SlippageTransform(
        dx=uniform(rng_seed, 0, -rx, rx),
        dy=uniform(rng_seed, 1, -ry, ry),
        dz=uniform(rng_seed, 2, -rz, rz),
    )


def generate_identity(identity_seed: int) -> EyeModel:
    """Deterministic identity with anatomy jittered around the defaults."""
    s = derive_seed(identity_seed, "identity-fields")
    return EyeModel(
        eyeball_center=np.zeros(3),
        eyeball_radius=uniform(s, 0, 11.0, 13.0),
        pupil_radius=uniform(s, 1, 1.5, 4.0),
        albedo_iris=uniform(s, 2, 0.25, 0.6),
        albedo_sclera=uniform(s, 3, 0.6, 0.9),
        albedo_skin=uniform(s, 4, 0.35, 0.75),
        eyelid_aperture=uniform(s, 5, 8.0, 12.0),
        texture_seed=derive_seed(identity_seed, "texture"),
    ).validate()


def default_rig(width: int = 320, height: int = 240, focal_px: float = 270.0) -> RigConfig:
    """Aria-like single-camera rig: oblique lower-temporal view, two LEDs."""
    eye_center = np.zeros(3)
    cam_pos = np.array([12.0, -14.0, 26.0])
    intr = CameraIntrinsics(fx=focal_px, fy=focal_px,
                            cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                            width=width, height=height)
    pose = CameraPose.look_at(cam_pos, eye_center)
    leds = [
        Illuminant(position=np.array([4.0, -18.0, 24.0]), radiant_intensity=650.0),
        Illuminant(position=np.array([20.0, -9.0, 23.0]), radiant_intensity=650.0),
    ]
    return RigConfig(cameras=[(intr, pose)], leds=leds,
                     nominal_eye_center=eye_center).validate()


def _lid_params(posed: PosedEye):
    """Eyelid ellipse (center x, center y, half width, half height)."""
    a = LID_WIDTH_RATIO * posed.eyelid_aperture
    half = 0.5 * posed.droop_mm
    return (
        float(posed.eyeball_center[0]),
        float(posed.eyeball_center[1]) - half,
        a,
        posed.eyelid_aperture - half,
    )


def _lid_inside(posed: PosedEye, point) -> bool:
    lcx, lcy, la, lb = _lid_params(posed)
    if lb <= 1e-12:
        return False
    lx = (point[0] - lcx) / la
    ly = (point[1] - lcy) / lb
    return lx * lx + ly * ly <= 1.0


def _flatten_scene(posed: PosedEye, intrinsics: CameraIntrinsics, pose: CameraPose,
                   leds) -> _kernels.SceneParams:
    lcx, lcy, la, lb = _lid_params(posed)
    led_pos = np.array([led.position for led in leds], dtype=np.float64).reshape(-1, 3)
    led_int = np.array([led.radiant_intensity for led in leds], dtype=np.float64)
    return _kernels.SceneParams(
        width=intrinsics.width,
        height=intrinsics.height,
        fx=float(intrinsics.fx),
        fy=float(intrinsics.fy),
        cx=float(intrinsics.cx),
        cy=float(intrinsics.cy),
        cam_origin=pose.camera_origin,
        rot_t=pose.rotation.T.copy(),
        ec=posed.eyeball_center,
        r_eye=posed.eyeball_radius,
        cc=posed.cornea_center,
        r_cor=posed.cornea_radius,
        axis=posed.axis,
        e1=posed.e1,
        e2=posed.e2,
        z_iris=posed.z_iris,
        pupil_r=posed.pupil_radius,
        iris_r=posed.iris_radius,
        lid_cx=lcx,
        lid_cy=lcy,
        lid_a=la,
        lid_b=lb,
        plane_z=float(posed.eyeball_center[2]),
        alb_pupil=posed.albedo_pupil,
        alb_iris=posed.albedo_iris,
        alb_sclera=posed.albedo_sclera,
        alb_skin=posed.albedo_skin,
        led_pos=led_pos,
        led_intensity=led_int,
        seed_iris=mix64(posed.texture_seed ^ _IRIS_SALT),
        seed_sclera=mix64(posed.texture_seed ^ _SCLERA_SALT),
        seed_skin=mix64(posed.texture_seed ^ _SKIN_SALT),
        mirror=posed.mirrored,
        spec_strength=_kernels.SPEC_STRENGTH,
    )


def _check_camera_clearance(posed: PosedEye, pose: CameraPose) -> None:
    cam = pose.camera_origin
    if cam[2] <= posed.eyeball_center[2] + 1.0:
        raise DegenerateCameraError("camera at or behind the skin plane")
    if np.linalg.norm(cam - posed.eyeball_center) <= posed.eyeball_radius + 1.0:
        raise DegenerateCameraError("camera inside the eyeball")
    if np.linalg.norm(cam - posed.cornea_center) <= posed.cornea_radius + 1.0:
        raise DegenerateCameraError("camera inside the cornea")


def glint_positions(posed: PosedEye, intrinsics: CameraIntrinsics, pose: CameraPose,
                    led: Illuminant) -> list[np.ndarray]:
    """Pixel positions of the LED's specular reflection on the cornea.

    Solves the sphere reflection point by bisecting the equal-angle residual
    in the plane spanned by camera, LED and cornea center, then drops
    solutions that are lid-occluded, off the exposed cap, or back-facing.
    """
    c = posed.cornea_center
    radius = posed.cornea_radius
    cam = pose.camera_origin
    lp = led.position
    up = cam - c
    ul = lp - c
    dp = np.linalg.norm(up)
    dl = np.linalg.norm(ul)
    if dp <= radius or dl <= radius:
        raise ValidationError("camera and LED must be outside the cornea sphere")
    b1 = up / dp
    w = ul - np.dot(ul, b1) * b1
    wn = np.linalg.norm(w)
    if wn < 1e-9:
        normal = b1
    else:
        b2 = w / wn
        alpha = math.atan2(float(np.dot(ul, b2)), float(np.dot(ul, b1)))

        def residual(theta):
            n = math.cos(theta) * b1 + math.sin(theta) * b2
            r = c + radius * n
            pv = cam - r
            lv = lp - r
            pv = pv / np.linalg.norm(pv)
            lv = lv / np.linalg.norm(lv)
            return float(np.dot(pv, n) - np.dot(lv, n))

        lo, hi = 0.0, alpha
        flo = residual(lo)
        if flo <= 0.0:
            return []
        if residual(hi) >= 0.0:
            return []
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if residual(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        theta = 0.5 * (lo + hi)
        normal = math.cos(theta) * b1 + math.sin(theta) * b2

    point = c + radius * normal
    if np.dot(cam - point, normal) <= 0.0 or np.dot(lp - point, normal) <= 0.0:
        return []
    # reflection-law sanity: the half vector must align with the normal
    pv = cam - point
    lv = lp - point
    h = pv / np.linalg.norm(pv) + lv / np.linalg.norm(lv)
    hn = np.linalg.norm(h)
    if hn < 1e-12 or np.linalg.norm(h / hn - normal) > 1e-6:
        return []
    if np.dot(point - posed.eyeball_center, posed.axis) < posed.z_iris:
        return []
    if not _lid_inside(posed, point):
        return []
    try:
        uv = project(point, intrinsics, pose)
    except BehindCameraError:
        return []
    return [uv]


def _splat_glints(img: np.ndarray, posed: PosedEye, intrinsics: CameraIntrinsics,
                  pose: CameraPose, leds) -> None:
    """Add Gaussian glint spots, 10x the local pre-splat maximum."""
    height, width = img.shape
    base = img.copy()
    inv2s2 = 1.0 / (2.0 * GLINT_SIGMA_PX * GLINT_SIGMA_PX)
    for led in leds:
        for uv in glint_positions(posed, intrinsics, pose, led):
            gu, gv = float(uv[0]), float(uv[1])
            lo_u = max(0, math.ceil(gu - GLINT_STAMP_PX))
            hi_u = min(width - 1, math.floor(gu + GLINT_STAMP_PX))
            lo_v = max(0, math.ceil(gv - GLINT_STAMP_PX))
            hi_v = min(height - 1, math.floor(gv + GLINT_STAMP_PX))
            if lo_u > hi_u or lo_v > hi_v:
                continue
            amp = GLINT_GAIN * float(base[lo_v:hi_v + 1, lo_u:hi_u + 1].max())
            if amp <= 0.0:
                continue
            du = np.arange(lo_u, hi_u + 1, dtype=np.float64) - gu
            dv = np.arange(lo_v, hi_v + 1, dtype=np.float64) - gv
            r2 = du[None, :] * du[None, :] + dv[:, None] * dv[:, None]
            img[lo_v:hi_v + 1, lo_u:hi_u + 1] += amp * np.exp(-r2 * inv2s2)


def render(posed: PosedEye, intrinsics: CameraIntrinsics, pose: CameraPose,
           leds, slippage: SlippageTransform | None = None) -> LinearImage:
    """Render one linear-irradiance frame.

    Slippage displaces the camera/LED assembly relative to the eye; it is
    applied by inverse-translating the eye, which makes the equivalence exact
    by construction.
    """
    intrinsics.validate()
    if slippage is not None and not slippage.is_zero():
        return render(posed.translated(-slippage.as_array()), intrinsics, pose, leds)
    _check_camera_clearance(posed, pose)
    scene = _flatten_scene(posed, intrinsics, pose, leds)
    img = _kernels.render_scene(scene)
    _splat_glints(img, posed, intrinsics, pose, leds)
    return LinearImage(img.astype(np.float32))


def project_pupil_center(posed: PosedEye, intrinsics: CameraIntrinsics,
                         pose: CameraPose) -> np.ndarray:
    """Pixel position of the geometric pupil center (iris-plane center)."""
    p = posed.eyeball_center + posed.z_iris * posed.axis
    return project(p, intrinsics, pose)
