"""Optical-effects pipeline: brightness -> aperture blur -> noise -> quantization.

The order is load-bearing: blur acts on the linear float image before sensor
saturation, so over-range specular glints bleed into neighbouring pixels
instead of clipping first. Noise is the simplified two-term model (Gaussian
read+shot plus quantization); thermal and fixed-pattern terms are omitted as
negligible for the target sensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .core import LinearImage, QuantizedImage
from .errors import InfinitePsnrError, ValidationError
from .rng import gaussian_field

# quantization saturation level in linear units; flat-mode noise sigma is
# expressed against this peak
SENSOR_PEAK = 1.0


@dataclass
class OpticsConfig:
    """One point in the optical design space.

    brightness subsumes exposure time and LED drive scaling. When target_psnr
    is set, flat Gaussian noise calibrated to that PSNR (against the sensor
    peak) replaces the signal-dependent read/shot model.
    """

    brightness: float = 1.0
    blur_radius: float = 0.0
    read_sigma: float = 0.01
    shot_gain: float = 0.0018
    target_psnr: float | None = None
    quant_bits: int = 8

    def validate(self) -> "OpticsConfig":
        if not self.brightness > 0:
            raise ValidationError("brightness must be > 0")
        if self.blur_radius < 0 or self.read_sigma < 0 or self.shot_gain < 0:
            raise ValidationError("blur_radius, read_sigma, shot_gain must be >= 0")
        if self.target_psnr is not None and not (
            self.target_psnr > 0 or math.isinf(self.target_psnr)
        ):
            raise ValidationError("target_psnr must be > 0 dB")
        if self.quant_bits != 8:
            raise ValidationError("only 8-bit quantization is supported")
        return self

    def to_dict(self) -> dict:
        psnr = self.target_psnr
        if psnr is not None and math.isinf(psnr):
            psnr = "inf"
        return {
            "brightness": self.brightness,
            "blur_radius": self.blur_radius,
            "read_sigma": self.read_sigma,
            "shot_gain": self.shot_gain,
            "target_psnr": psnr,
            "quant_bits": self.quant_bits,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OpticsConfig":
        psnr = d.get("target_psnr")
        if psnr == "inf":
            psnr = math.inf
        return cls(
            brightness=d.get("brightness", 1.0),
            blur_radius=d.get("blur_radius", 0.0),
            read_sigma=d.get("read_sigma", 0.01),
            shot_gain=d.get("shot_gain", 0.0018),
            target_psnr=psnr,
            quant_bits=d.get("quant_bits", 8),
        ).validate()


def adjust_brightness(img: LinearImage, b: float) -> LinearImage:
    """Scalar multiply in the linear domain; no clamping."""
    if not b > 0:
        raise ValidationError("brightness factor must be > 0")
    if b == 1.0:
        return img.copy()
    return LinearImage(img.values * np.float32(b))


def disk_psf(radius: float) -> np.ndarray:
    """Normalized aperture-disk kernel; pixel centers within `radius` are lit.

    radius 0 gives the 1x1 identity kernel.
    """
    if radius < 0:
        raise ValidationError("PSF radius must be >= 0")
    half = math.ceil(radius)
    side = 2 * half + 1
    yy, xx = np.mgrid[-half:half + 1, -half:half + 1]
    mask = (xx * xx + yy * yy) <= radius * radius + 1e-12
    kernel = mask.astype(np.float64)
    return kernel / kernel.sum()


def convolve(img: LinearImage, psf: np.ndarray) -> LinearImage:
    """Linear convolution via zero-padded FFT, cropped back to image size.

    A 1x1 kernel short-circuits to an exact multiply so identity pipelines
    stay bit-identical.
    """
    kh, kw = psf.shape
    if abs(psf.sum() - 1.0) > 1e-9:
        raise ValidationError("PSF must be normalized to sum 1")
    h, w = img.values.shape
    if kh > h or kw > w:
        raise ValidationError("kernel larger than image")
    if psf.shape == (1, 1):
        return LinearImage(img.values * np.float32(psf[0, 0]))
    fh = scipy.fft.next_fast_len(h + kh - 1)
    fw = scipy.fft.next_fast_len(w + kw - 1)
    spec = scipy.fft.rfft2(img.values.astype(np.float64), s=(fh, fw))
    spec *= scipy.fft.rfft2(psf, s=(fh, fw))
    full = scipy.fft.irfft2(spec, s=(fh, fw))
    top = kh // 2
    left = kw // 2
    out = full[top:top + h, left:left + w]
    # FFT round-off can leave tiny negatives on a non-negative signal
    return LinearImage(np.maximum(out, 0.0).astype(np.float32))


def sigma_for_target_psnr(peak: float, psnr_db: float) -> float:
    """Noise sigma whose expected MSE hits the target PSNR exactly."""
    if peak <= 0 or psnr_db <= 0:
        raise ValidationError("peak and psnr must be positive")
    return peak * 10.0 ** (-psnr_db / 20.0)


def add_noise(img: LinearImage, cfg: OpticsConfig, rng_seed: int) -> LinearImage:
    """Gaussian sensor noise, reproducible per (seed, pixel index).

    Signal-dependent mode: sigma(v) = sqrt(read_sigma^2 + shot_gain*max(v,0)).
    Flat mode (target_psnr set): constant sigma from sigma_for_target_psnr.
    Output may go negative; only quantization clamps.
    """
    cfg.validate()
    if cfg.target_psnr is not None:
        if math.isinf(cfg.target_psnr):
            return img.copy()
        sigma = sigma_for_target_psnr(SENSOR_PEAK, cfg.target_psnr)
        if sigma == 0.0:
            return img.copy()
        z = gaussian_field(rng_seed, img.values.size).reshape(img.values.shape)
        noisy = img.values.astype(np.float64) + sigma * z
        return LinearImage(noisy.astype(np.float32))
    if cfg.read_sigma == 0.0 and cfg.shot_gain == 0.0:
        return img.copy()
    v = img.values.astype(np.float64)
    sigma = np.sqrt(cfg.read_sigma * cfg.read_sigma + cfg.shot_gain * np.maximum(v, 0.0))
    z = gaussian_field(rng_seed, v.size).reshape(v.shape)
    return LinearImage((v + sigma * z).astype(np.float32))


def quantize(img: LinearImage) -> QuantizedImage:
    """8-bit codes: round-half-up of the [0,1]-clamped signal times 255."""
    v = np.clip(img.values.astype(np.float64), 0.0, SENSOR_PEAK)
    codes = np.floor(v * 255.0 + 0.5)
    return QuantizedImage(codes.astype(np.uint8))


def dequantize(img: QuantizedImage) -> LinearImage:
    """Codes back to linear [0,1] floats (for oracles and round-trip checks)."""
    return LinearImage(img.values.astype(np.float32) / np.float32(255.0))


def psnr(reference: LinearImage, test: LinearImage, peak: float) -> float:
    """10*log10(peak^2 / MSE). Identical images raise InfinitePsnrError."""
    if reference.values.shape != test.values.shape:
        raise ValidationError("psnr needs same-shape images")
    diff = reference.values.astype(np.float64) - test.values.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        raise InfinitePsnrError("images are identical; PSNR is unbounded")
    return 10.0 * math.log10(peak * peak / mse)


def apply_pipeline(img: LinearImage, cfg: OpticsConfig, rng_seed: int) -> QuantizedImage:
    """Full sensor pipeline in the fixed order brightness, blur, noise, quantize."""
    cfg.validate()
    out = adjust_brightness(img, cfg.brightness)
    out = convolve(out, disk_psf(cfg.blur_radius))
    out = add_noise(out, cfg, rng_seed)
    return quantize(out)
