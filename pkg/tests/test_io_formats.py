"""File format round trips: PFM, PNG, pose text, Gaussian cloud binary."""

import numpy as np
import pytest

from yysplat import io_formats
from yysplat.io_formats import (
    FormatError,
    Pose,
    as_field_image,
    read_cloud,
    read_image,
    read_pfm,
    read_png,
    read_pose_file,
    write_cloud,
    write_image,
    write_pfm,
    write_png,
    write_pose_file,
)

from _helpers import random_cloud, random_rotation


# --------------------------------------------------------------------------
# Pose


def test_pose_identity_round_trip(tmp_path):
    path = tmp_path / "poses.txt"
    write_pose_file([Pose.identity()], path)
    poses = read_pose_file(path)
    assert len(poses) == 1
    assert np.array_equal(poses[0].rotation, np.eye(3))
    assert np.array_equal(poses[0].translation, np.zeros(3))


def test_pose_round_trip_random(tmp_path):
    rng = np.random.default_rng(11)
    poses = [Pose(random_rotation(rng), rng.normal(size=3)) for _ in range(5)]
    path = tmp_path / "poses.txt"
    write_pose_file(poses, path, names=[f"view_{i}" for i in range(5)])
    loaded = read_pose_file(path)
    assert len(loaded) == 5
    for original, back in zip(poses, loaded):
        assert np.array_equal(original.rotation, back.rotation)
        assert np.array_equal(original.translation, back.translation)


def test_pose_rejects_reflection(tmp_path):
    flip = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError, match="determinant"):
        Pose(flip, np.zeros(3))
    numbers = " ".join(str(x) for x in np.concatenate([flip.reshape(9), np.zeros(3)]))
    path = tmp_path / "poses.txt"
    path.write_text(f"cam000 {numbers}\n")
    with pytest.raises(FormatError):
        read_pose_file(path)


def test_pose_rejects_non_orthonormal():
    skewed = np.eye(3)
    skewed[0, 1] = 0.01
    with pytest.raises(ValueError, match="orthonormal"):
        Pose(skewed, np.zeros(3))


def test_pose_file_rejects_wrong_field_count(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("cam000 " + " ".join(["0.0"] * 11) + "\n")
    with pytest.raises(FormatError, match="12 numbers"):
        read_pose_file(path)


def test_pose_file_rejects_non_numeric(tmp_path):
    path = tmp_path / "poses.txt"
    fields = ["1", "0", "0", "0", "1", "0", "0", "0", "1", "0", "0", "oops"]
    path.write_text("cam000 " + " ".join(fields) + "\n")
    with pytest.raises(FormatError, match="non-numeric"):
        read_pose_file(path)


def test_pose_file_skips_comments_and_blanks(tmp_path):
    path = tmp_path / "poses.txt"
    write_pose_file([Pose.identity(), Pose.identity()], path)
    text = path.read_text()
    assert text.startswith("#")
    path.write_text("\n" + text + "\n# trailing comment\n")
    assert len(read_pose_file(path)) == 2


def test_pose_world_camera_round_trip():
    rng = np.random.default_rng(3)
    pose = Pose(random_rotation(rng), rng.normal(size=3))
    points = rng.normal(size=(20, 3))
    back = pose.camera_to_world(pose.world_to_camera(points))
    assert np.allclose(back, points, atol=1e-12)


# --------------------------------------------------------------------------
# PFM


def test_pfm_round_trip_three_channel_bits(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.normal(size=(4, 8, 3)).astype(np.float32)
    path = tmp_path / "field.pfm"
    write_pfm(image, path)
    back = read_pfm(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, image)


def test_pfm_round_trip_single_channel_bits(tmp_path):
    rng = np.random.default_rng(1)
    image = (rng.normal(size=(6, 5)) * 1e6).astype(np.float32)
    path = tmp_path / "depth.pfm"
    write_pfm(image, path)
    back = read_pfm(path)
    assert back.shape == (6, 5, 1)
    assert np.array_equal(back[:, :, 0], image)


def test_pfm_truncated_header_error(tmp_path):
    path = tmp_path / "broken.pfm"
    path.write_bytes(b"PF\n8")
    with pytest.raises(FormatError, match="malformed header"):
        read_pfm(path)


def test_pfm_bad_magic_error(tmp_path):
    path = tmp_path / "broken.pfm"
    path.write_bytes(b"XX\n8 4\n-1.0\n" + b"\x00" * 384)
    with pytest.raises(FormatError, match="malformed header"):
        read_pfm(path)


def test_pfm_truncated_payload_error(tmp_path):
    path = tmp_path / "short.pfm"
    write_pfm(np.ones((4, 8, 3), dtype=np.float32), path)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(FormatError, match="truncated"):
        read_pfm(path)


def test_pfm_rejects_bad_channel_count(tmp_path):
    with pytest.raises(FormatError, match="channels"):
        write_pfm(np.zeros((2, 2, 4)), tmp_path / "x.pfm")


def test_pfm_rejects_non_finite(tmp_path):
    image = np.zeros((2, 2, 1))
    image[0, 0, 0] = np.nan
    with pytest.raises(FormatError, match="finite"):
        write_pfm(image, tmp_path / "x.pfm")


# --------------------------------------------------------------------------
# PNG


def test_png_quantization_levels(tmp_path):
    image = np.full((2, 3, 3), 128.0 / 255.0)
    path = tmp_path / "gray.png"
    write_png(image, path)
    back = read_png(path)
    assert back.shape == (2, 3, 3)
    assert np.all(np.abs(back - 128.0 / 255.0) < 1e-9)


def test_png_round_trip_exact_on_quantized_values(tmp_path):
    rng = np.random.default_rng(2)
    levels = rng.integers(0, 256, size=(5, 7, 3))
    image = levels / 255.0
    path = tmp_path / "rand.png"
    write_png(image, path)
    back = read_png(path)
    assert np.array_equal(np.rint(back * 255.0).astype(int), levels)


def test_png_single_and_alpha_channels(tmp_path):
    gray = np.linspace(0.0, 1.0, 12).reshape(3, 4, 1)
    rgba = np.concatenate([np.ones((3, 4, 3)) * 0.5, np.ones((3, 4, 1))], axis=2)
    gray_path = tmp_path / "gray.png"
    rgba_path = tmp_path / "rgba.png"
    write_png(gray, gray_path)
    write_png(rgba, rgba_path)
    assert read_png(gray_path).shape == (3, 4, 1)
    assert read_png(rgba_path).shape == (3, 4, 4)


def test_png_malformed_file_error(tmp_path):
    path = tmp_path / "fake.png"
    path.write_bytes(b"not a png at all")
    with pytest.raises(FormatError, match="malformed PNG"):
        read_png(path)


def test_png_rejects_non_finite(tmp_path):
    image = np.zeros((2, 2, 3))
    image[1, 1, 1] = np.inf
    with pytest.raises(FormatError, match="finite"):
        write_png(image, tmp_path / "x.png")


# --------------------------------------------------------------------------
# Extension dispatch


def test_image_dispatch_by_extension(tmp_path):
    image = np.random.default_rng(4).random(size=(3, 6, 3)).astype(np.float32)
    pfm_path = tmp_path / "img.pfm"
    png_path = tmp_path / "img.png"
    write_image(image, pfm_path)
    write_image(image, png_path)
    assert np.array_equal(read_image(pfm_path), image.astype(float))
    assert np.max(np.abs(read_image(png_path) - image)) <= 0.5 / 255.0 + 1e-9


def test_image_dispatch_rejects_unknown_extension(tmp_path):
    with pytest.raises(FormatError, match="extension"):
        write_image(np.zeros((2, 2, 3)), tmp_path / "img.exr")
    with pytest.raises(FormatError, match="extension"):
        read_image(tmp_path / "img.tiff")


def test_as_field_image_validation():
    assert as_field_image(np.zeros((2, 3))).shape == (2, 3, 1)
    assert as_field_image(np.zeros((2, 3, 4))).shape == (2, 3, 4)
    with pytest.raises(ValueError, match="channels"):
        as_field_image(np.zeros((2, 3, 4)), channels=3)
    with pytest.raises(ValueError, match="finite"):
        as_field_image(np.full((2, 2), np.nan))
    with pytest.raises(ValueError):
        as_field_image(np.zeros(5))


# --------------------------------------------------------------------------
# Gaussian cloud binary


def test_cloud_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(7)
    cloud = random_cloud(rng, 1000)
    path = tmp_path / "cloud.yygc"
    write_cloud(cloud, path)
    back = read_cloud(path)
    original = {
        "positions": cloud.positions.astype(np.float32),
        "scales": cloud.scales.astype(np.float32),
        "rotations": cloud.rotations.astype(np.float32),
        "opacities": cloud.opacities.astype(np.float32),
        "sh": cloud.sh.astype(np.float32),
    }
    assert np.array_equal(back.positions.astype(np.float32), original["positions"])
    assert np.array_equal(back.scales.astype(np.float32), original["scales"])
    assert np.array_equal(back.rotations.astype(np.float32), original["rotations"])
    assert np.array_equal(back.opacities.astype(np.float32), original["opacities"])
    assert np.array_equal(back.sh.astype(np.float32), original["sh"])


def test_cloud_second_write_is_byte_stable(tmp_path):
    rng = np.random.default_rng(8)
    cloud = random_cloud(rng, 64)
    first = tmp_path / "a.yygc"
    second = tmp_path / "b.yygc"
    write_cloud(cloud, first)
    write_cloud(read_cloud(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_cloud_zero_count_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    cloud = random_cloud(rng, 3)
    empty = type(cloud)(
        positions=cloud.positions[:0],
        scales=cloud.scales[:0],
        rotations=cloud.rotations[:0],
        opacities=cloud.opacities[:0],
        sh=cloud.sh[:0],
    )
    path = tmp_path / "empty.yygc"
    write_cloud(empty, path)
    back = read_cloud(path)
    assert len(back) == 0
    assert back.sh.shape == (0, 3, 1)


def test_cloud_bad_magic_error(tmp_path):
    rng = np.random.default_rng(10)
    path = tmp_path / "cloud.yygc"
    write_cloud(random_cloud(rng, 4), path)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="bad magic"):
        read_cloud(path)


def test_cloud_truncated_error(tmp_path):
    rng = np.random.default_rng(12)
    path = tmp_path / "cloud.yygc"
    write_cloud(random_cloud(rng, 4), path)
    data = path.read_bytes()
    path.write_bytes(data[:-4])
    with pytest.raises(FormatError, match="expected"):
        read_cloud(path)


def test_cloud_quaternion_norm_tolerance(tmp_path):
    rng = np.random.default_rng(13)
    path = tmp_path / "cloud.yygc"
    write_cloud(random_cloud(rng, 2), path)
    pristine = path.read_bytes()

    def patch_quaternion_scale(factor):
        raw = bytearray(pristine)
        floats = np.frombuffer(raw, dtype="<f4", offset=12)
        floats[6:10] *= factor
        path.write_bytes(bytes(raw))

    patch_quaternion_scale(1.0 + 5e-4)
    read_cloud(path)

    patch_quaternion_scale(1.01)
    with pytest.raises(FormatError, match="quaternion"):
        read_cloud(path)


def test_cloud_higher_degree_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    base = random_cloud(rng, 6)
    sh = rng.normal(size=(6, 3, 9)).astype(np.float32).astype(float)
    cloud = type(base)(
        positions=base.positions,
        scales=base.scales,
        rotations=base.rotations,
        opacities=base.opacities,
        sh=sh,
    )
    assert cloud.sh_degree == 2
    path = tmp_path / "deg2.yygc"
    write_cloud(cloud, path)
    back = read_cloud(path)
    assert back.sh_degree == 2
    assert np.array_equal(back.sh.astype(np.float32), sh.astype(np.float32))


def test_cloud_magic_constant():
    assert io_formats._CLOUD_MAGIC == b"YYGC"
