"""On-disk formats (PNG, PFM, pose text, Gaussian cloud binary) and poses.

Field images are plain ``(H, W, C)`` float arrays in row-major order with
finite values; PNG carries 8-bit data in [0, 1] with 1/3/4 channels, PFM
carries 32-bit floats with 1 or 3 channels (bottom-up rows, little-endian
scale line ``-1.0``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class FormatError(ValueError):
    """Malformed or unsupported on-disk data."""


@dataclass(frozen=True)
class Pose:
    """Rigid world-to-camera transform: ``x_cam = R @ (x_world - t)``.

    ``rotation`` is the 3x3 world-to-camera matrix, ``translation`` the camera
    center in world coordinates.  The constructor rejects rotations that are
    not orthonormal to 1e-6 or have negative determinant, and re-projects to
    the nearest rotation when the error exceeds 1e-9 (bits below that are kept
    so that exact poses round-trip through the text format unchanged).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=float)
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        if rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise ValueError("pose entries must be finite")
        err = np.max(np.abs(rotation.T @ rotation - np.eye(3)))
        if err > 1e-6:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(rotation) < 0:
            raise ValueError("rotation determinant must be +1")
        if err > 1e-9:
            u, _, vt = np.linalg.svd(rotation)
            rotation = u @ vt
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def world_to_camera(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return (pts - self.translation) @ self.rotation.T

    def camera_to_world(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation + self.translation


def as_field_image(data, channels: int | None = None) -> np.ndarray:
    """Validate and return an (H, W, C) float array; 2-D input gains an axis."""
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ValueError("field images are (H, W, C) with positive dims")
    if channels is not None and arr.shape[2] != channels:
        raise ValueError(f"expected {channels} channels, got {arr.shape[2]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field images must be finite")
    return arr


# --------------------------------------------------------------------------
# PFM

def write_pfm(image, path) -> None:
    """Write a 1- or 3-channel float32 PFM (bottom-up rows, scale -1.0)."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise FormatError("PFM supports 1 or 3 channels")
    if not np.all(np.isfinite(arr)):
        raise FormatError("PFM values must be finite")
    height, width, channels = arr.shape
    magic = b"PF" if channels == 3 else b"Pf"
    with open(path, "wb") as handle:
        handle.write(magic + b"\n")
        handle.write(f"{width} {height}\n".encode("ascii"))
        handle.write(b"-1.0\n")
        handle.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into an (H, W, C) float32 array, top row first."""
    with open(path, "rb") as handle:
        magic = handle.readline().strip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise FormatError(f"malformed header in {path}: bad magic {magic!r}")
        dims = handle.readline().split()
        if len(dims) != 2:
            raise FormatError(f"malformed header in {path}: bad dimensions line")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(handle.readline().strip())
        except ValueError as exc:
            raise FormatError(f"malformed header in {path}") from exc
        if width < 1 or height < 1:
            raise FormatError(f"malformed header in {path}: non-positive dims")
        dtype = "<f4" if scale < 0 else ">f4"
        payload = handle.read()
    expected = width * height * channels * 4
    if len(payload) < expected:
        raise FormatError(f"truncated PFM data in {path}")
    data = np.frombuffer(payload[:expected], dtype=dtype)
    data = data.reshape(height, width, channels)
    return np.ascontiguousarray(np.flipud(data)).astype(np.float32)


# --------------------------------------------------------------------------
# PNG

def write_png(image, path) -> None:
    """Quantize [0, 1] floats to 8 bits and write 1/3/4-channel PNG."""
    arr = np.asarray(image, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3, 4):
        raise FormatError("PNG supports 1, 3 or 4 channels")
    if not np.all(np.isfinite(arr)):
        raise FormatError("PNG values must be finite")
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    mode = {1: "L", 3: "RGB", 4: "RGBA"}[arr.shape[2]]
    Image.fromarray(quantized.squeeze(axis=2) if mode == "L" else quantized, mode).save(
        path, format="PNG"
    )


def read_png(path) -> np.ndarray:
    """Read an 8-bit PNG into an (H, W, C) float array scaled to [0, 1]."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode == "P":
                img = img.convert("RGB")
            if img.mode not in ("L", "RGB", "RGBA"):
                raise FormatError(f"unsupported PNG mode {img.mode} in {path}")
            arr = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"malformed PNG file {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(float) / 255.0


def read_image(path) -> np.ndarray:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path).astype(float)
    if suffix == ".png":
        return read_png(path)
    raise FormatError(f"unsupported image extension: {path}")


def write_image(image, path) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        write_pfm(image, path)
    elif suffix == ".png":
        write_png(image, path)
    else:
        raise FormatError(f"unsupported image extension: {path}")


# --------------------------------------------------------------------------
# Pose text format: one camera per line, a name plus 12 numbers
# (row-major rotation, then translation).

def write_pose_file(poses, path, names=None) -> None:
    poses = list(poses)
    if names is None:
        names = [f"cam{i:03d}" for i in range(len(poses))]
    if len(names) != len(poses):
        raise ValueError("one name per pose required")
    lines = ["# name r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz"]
    for name, pose in zip(names, poses):
        if any(ch.isspace() for ch in name):
            raise ValueError("pose names cannot contain whitespace")
        numbers = np.concatenate([pose.rotation.reshape(9), pose.translation])
        lines.append(name + " " + " ".join(f"{x:.17g}" for x in numbers))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_pose_file(path) -> list[Pose]:
    """Parse poses; rejects wrong field counts and non-orthonormal rotations."""
    poses = []
    text = Path(path).read_text(encoding="ascii")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 13:
            raise FormatError(
                f"{path}:{lineno}: expected name plus 12 numbers, got {len(tokens)} fields"
            )
        try:
            values = np.array([float(tok) for tok in tokens[1:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric pose entry") from exc
        try:
            poses.append(Pose(values[:9].reshape(3, 3), values[9:]))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return poses


# --------------------------------------------------------------------------
# Gaussian cloud binary: magic, count, SH degree header, then per-Gaussian
# float32 little-endian records (position 3, scale 3, quaternion wxyz 4,
# opacity 1, SH coefficients 3*(degree+1)^2 channel-major).

_CLOUD_MAGIC = b"YYGC"


def write_cloud(cloud, path) -> None:
    count = len(cloud)
    degree = cloud.sh_degree
    record = np.concatenate(
        [
            cloud.positions,
            cloud.scales,
            cloud.rotations,
            cloud.opacities[:, None],
            cloud.sh.reshape(count, 3 * (degree + 1) ** 2),
        ],
        axis=1,
    ).astype("<f4")
    with open(path, "wb") as handle:
        handle.write(_CLOUD_MAGIC)
        handle.write(struct.pack("<II", count, degree))
        handle.write(record.tobytes())


def read_cloud(path):
    """Read a Gaussian cloud; validates magic, record size and quaternions."""
    from .gaussians import GaussianCloud

    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != _CLOUD_MAGIC:
        raise FormatError(f"malformed cloud file {path}: bad magic")
    count, degree = struct.unpack("<II", raw[4:12])
    per_record = 11 + 3 * (degree + 1) ** 2
    expected = 12 + count * per_record * 4
    if len(raw) != expected:
        raise FormatError(
            f"malformed cloud file {path}: expected {expected} bytes, got {len(raw)}"
        )
    data = np.frombuffer(raw[12:], dtype="<f4").reshape(count, per_record)
    data = data.astype(float)
    quats = data[:, 6:10]
    norms = np.linalg.norm(quats, axis=1)
    if count and np.any(np.abs(norms - 1.0) > 1e-3):
        raise FormatError(f"malformed cloud file {path}: non-unit quaternion")
    return GaussianCloud(
        positions=data[:, 0:3],
        scales=data[:, 3:6],
        rotations=quats,
        opacities=data[:, 10],
        sh=data[:, 11:].reshape(count, 3, (degree + 1) ** 2),
    )
