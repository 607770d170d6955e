import numpy as np
import pytest

from clibench.viz import MID_GRAY, first_component, pca_grayscale, pca_projection, read_pgm, write_pgm
from numgrad.tensor import Tensor, precision
from pv2bev.grid import BEVGrid, BEVGridMeta


def grid(features: np.ndarray) -> BEVGrid:
    H, W, D = features.shape
    with precision(np.float64):
        return BEVGrid(BEVGridMeta(H=H, W=W, D=D), Tensor(features), frame=0)


@pytest.mark.parametrize("seed", range(3))
def test_single_channel_is_min_max_scaling(seed):
    values = np.random.default_rng(seed).normal(size=(10, 5, 1))
    image = pca_grayscale(grid(values))
    assert image.dtype == np.uint8
    image = image.astype(int)
    v = values[..., 0]
    scaled = np.round((v - v.min()) / (v.max() - v.min()) * 255).astype(int)
    assert np.abs(image - scaled).max() <= 1 or np.abs(image - (255 - scaled)).max() <= 1


def test_constant_grid_is_mid_gray():
    with pytest.warns(RuntimeWarning, match="zero variance"):
        image = pca_grayscale(grid(np.full((10, 5, 4), 0.25)))
    assert image.shape == (10, 5)
    assert (image == MID_GRAY).all()


@pytest.mark.parametrize("seed", range(5))
def test_projection_matches_dense_eigensolver(seed):
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(20, 10, 32)) @ rng.normal(size=(32, 32))
    cells = features.reshape(-1, 32)
    centred = cells - cells.mean(axis=0)
    cov = np.cov(cells, rowvar=False)
    values, vectors = np.linalg.eig(cov)
    top = np.real(vectors[:, np.argmax(np.real(values))])
    oracle = centred @ top

    pc, variance = first_component(cells)
    assert variance == pytest.approx(np.max(np.real(values)), rel=1e-6)
    proj = pca_projection(grid(features)).ravel()
    assert np.allclose(proj, oracle, atol=1e-6) or np.allclose(proj, -oracle, atol=1e-6)


def test_largest_norm_cell_is_bright():
    rng = np.random.default_rng(11)
    features = rng.normal(size=(10, 5, 6))
    features[3, 2] *= 40
    image = pca_grayscale(grid(features))
    assert image[3, 2] == 255
    assert pca_grayscale(grid(-features))[3, 2] == 255


def test_pgm_is_valid_p5(tmp_path):
    image = pca_grayscale(grid(np.random.default_rng(0).normal(size=(10, 5, 3))))
    path = write_pgm(image, tmp_path / "bev.pgm")
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n5 10\n255\n")
    assert len(raw) == len(b"P5\n5 10\n255\n") + 10 * 5
    np.testing.assert_array_equal(read_pgm(path), image)


@pytest.mark.parametrize(
    "raw",
    [b"P2\n2 1\n255\n\x00\x01", b"P5\n2 1\n65535\n\x00\x01", b"P5\n2 2\n255\n\x00\x01"],
)
def test_read_pgm_rejects(tmp_path, raw):
    (tmp_path / "bad.pgm").write_bytes(raw)
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "bad.pgm")


if __name__ == "__main__":
    pytest.main(["-sv", __file__])
