import numpy as np
import pytest

from patchplane import imageio


@pytest.mark.parametrize("suffix,channels", [(".ppm", 3), (".pgm", 1)])
@pytest.mark.parametrize("bits", [8, 16])
def test_pnm_round_trip(tmp_path, suffix, channels, bits):
    img = np.random.default_rng(0).random((7, 9, channels))
    path = tmp_path / f"x{suffix}"
    imageio.save_image(path, img, bits=bits)
    back = imageio.load_image(path)
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 0.5 / (2**bits - 1) + 1e-12


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(0).random((7, 9, 3))
    imageio.save_image(tmp_path / "x.png", img)
    assert np.abs(imageio.load_image(tmp_path / "x.png") - img).max() <= 0.5 / 255 + 1e-12
    grey = img[..., :1]
    imageio.save_image(tmp_path / "g.png", grey, bits=16)
    assert np.abs(imageio.load_image(tmp_path / "g.png") - grey).max() <= 0.5 / 65535 + 1e-12


def test_pfm_round_trip(tmp_path):
    d = np.random.default_rng(0).uniform(0.1, 10, (5, 6))
    imageio.save_pfm(tmp_path / "d.pfm", d)
    np.testing.assert_allclose(imageio.load_pfm(tmp_path / "d.pfm"), d.astype(np.float32))


def test_labels_round_trip(tmp_path):
    labels = np.arange(20).reshape(4, 5) * 300
    imageio.save_labels(tmp_path / "l.png", labels)
    np.testing.assert_array_equal(imageio.load_labels(tmp_path / "l.png"), labels)


def test_bad_files(tmp_path):
    (tmp_path / "bad.pfm").write_bytes(b"nonsense")
    (tmp_path / "bad.png").write_bytes(b"nonsense")
    with pytest.raises(imageio.FormatError):
        imageio.load_pfm(tmp_path / "bad.pfm")
    with pytest.raises(imageio.FormatError):
        imageio.load_image(tmp_path / "bad.png")
    with pytest.raises(imageio.FormatError):
        imageio.load_image(tmp_path / "missing.png")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(imageio.FormatError):
        imageio.read_json(tmp_path / "bad.json")
