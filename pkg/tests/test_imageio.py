import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from causalseg.imageio import (
    FormatError,
    Frame,
    colorize_labels,
    decode_label_map,
    encode_label_map,
    format_flow,
    gaussian_kernel,
    gaussian_smooth,
    label_colors,
    load_frame,
    load_pgm,
    read_flow,
    read_label_map,
    save_image,
    save_pgm,
    save_ppm,
    write_flow,
    write_label_map,
)
from causalseg.temporal import FlowMap


def _write_ppm(path, w, h, payload: bytes, maxval=255):
    path.write_bytes(b"P6\n%d %d\n%d\n" % (w, h, maxval) + payload)


def test_load_black_ppm(tmp_path):
    p = tmp_path / "black.ppm"
    _write_ppm(p, 2, 2, bytes(12))
    f = load_frame(p)
    assert (f.width, f.height) == (2, 2)
    assert np.array_equal(f.pixels, np.zeros((2, 2, 3)))


def test_load_ppm_row_major(tmp_path):
    px = bytes([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12])
    p = tmp_path / "f.ppm"
    _write_ppm(p, 2, 2, px)
    f = load_frame(p)
    assert f.pixels[0, 0].tolist() == [1, 2, 3]
    assert f.pixels[0, 1].tolist() == [4, 5, 6]
    assert f.pixels[1, 0].tolist() == [7, 8, 9]
    assert f.pixels[1, 1].tolist() == [10, 11, 12]


def test_load_ppm_with_comment(tmp_path):
    p = tmp_path / "c.ppm"
    p.write_bytes(b"P6\n# made by hand\n2 2\n255\n" + bytes(range(12)))
    assert load_frame(p).pixels.ravel().tolist() == list(range(12))


def test_truncated_header_is_format_error(tmp_path):
    p = tmp_path / "t.ppm"
    p.write_bytes(b"P6\n2 ")
    with pytest.raises(FormatError):
        load_frame(p)


def test_truncated_payload_is_format_error(tmp_path):
    p = tmp_path / "t.ppm"
    _write_ppm(p, 2, 2, bytes(5))
    with pytest.raises(FormatError) as err:
        load_frame(p)
    assert "P6" in str(err.value)


def test_unsupported_format_names_it(tmp_path):
    p = tmp_path / "x.bmp"
    p.write_bytes(b"BM" + bytes(40))
    with pytest.raises(FormatError) as err:
        load_frame(p)
    assert err.value.format == "netpbm"


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(OSError):
        load_frame(tmp_path / "nope.ppm")


def test_16bit_ppm_rescaled(tmp_path):
    p = tmp_path / "w.ppm"
    vals = np.array([0, 65535, 32768] * 4, dtype=">u2")
    _write_ppm(p, 2, 2, vals.tobytes(), maxval=65535)
    f = load_frame(p)
    assert f.pixels[0, 0, 0] == 0
    assert f.pixels[0, 0, 1] == pytest.approx(255.0)
    assert f.pixels[0, 0, 2] == pytest.approx(32768 * 255 / 65535)


def test_ppm_roundtrip(tmp_path, rng):
    px = rng.integers(0, 256, (5, 7, 3)).astype(float)
    save_ppm(tmp_path / "r.ppm", px)
    assert np.array_equal(load_frame(tmp_path / "r.ppm").pixels, px)


def test_png_roundtrip(tmp_path, rng):
    px = rng.integers(0, 256, (4, 6, 3)).astype(float)
    save_image(tmp_path / "r.png", px)
    assert np.array_equal(load_frame(tmp_path / "r.png").pixels, px)


def test_pgm_roundtrip(tmp_path):
    v = np.arange(12).reshape(3, 4)
    save_pgm(tmp_path / "s.pgm", v)
    assert np.array_equal(load_pgm(tmp_path / "s.pgm"), v)


def test_frame_validation():
    with pytest.raises(ValueError):
        Frame(np.zeros((1, 5, 3)))
    with pytest.raises(ValueError):
        Frame(np.full((2, 2, 3), 256.0))
    with pytest.raises(ValueError):
        Frame(np.full((2, 2, 3), np.nan))


# --- smoothing ------------------------------------------------------------------

def _dense_blur_oracle(img, sigma):
    """Direct 2-D convolution with the (non-separated) Gaussian and clamped borders."""
    r = int(math.ceil(3 * sigma))
    h, w = img.shape[:2]
    ker = np.array([[math.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma))
                     for dx in range(-r, r + 1)] for dy in range(-r, r + 1)])
    ker /= ker.sum()
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = np.zeros(img.shape[2])
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    acc += ker[dy + r, dx + r] * img[yy, xx]
            out[y, x] = acc
    return out


@pytest.mark.parametrize("sigma", [0.5, 1.2, 3.0])
def test_constant_image_unchanged(sigma):
    f = Frame(np.full((9, 11, 3), 97.0))
    assert np.allclose(gaussian_smooth(f, sigma).pixels, 97.0, atol=1e-9)


def test_sigma_zero_is_identity(rng):
    f = Frame(rng.uniform(0, 255, (6, 6, 3)))
    assert np.array_equal(gaussian_smooth(f, 0.0).pixels, f.pixels)
    assert np.array_equal(gaussian_smooth(f, 0.005).pixels, f.pixels)


def test_impulse_matches_dense_convolution():
    img = np.zeros((11, 11, 3))
    img[5, 5] = 255.0
    out = gaussian_smooth(Frame(img), 0.8).pixels
    expected = _dense_blur_oracle(img, 0.8)
    assert np.allclose(out, expected, atol=1e-9)
    assert out.sum() == pytest.approx(img.sum(), abs=1e-6)


def test_random_image_matches_dense_convolution_with_borders(rng):
    img = rng.uniform(0, 255, (7, 9, 3))
    assert np.allclose(gaussian_smooth(Frame(img), 1.1).pixels, _dense_blur_oracle(img, 1.1), atol=1e-9)


def test_kernel_radius_and_normalization():
    k = gaussian_kernel(0.8)
    assert len(k) == 2 * 3 + 1
    assert k.sum() == pytest.approx(1.0)
    assert np.allclose(k, k[::-1])


# --- label maps -----------------------------------------------------------------

def test_label_file_size(tmp_path):
    p = tmp_path / "l.seg"
    write_label_map(np.array([[1, 1], [2, 2]]), p)
    data = p.read_bytes()
    assert len(data) == 8 + 16
    assert data[:4] == b"SEGL"
    assert data[4:8] == (2).to_bytes(2, "little") + (2).to_bytes(2, "little")
    assert data[8:12] == (1).to_bytes(4, "little")


def test_label_file_deterministic(tmp_path, rng):
    labels = rng.integers(0, 1000, (5, 4))
    write_label_map(labels, tmp_path / "a.seg", tmp_path / "a.ppm")
    write_label_map(labels, tmp_path / "b.seg", tmp_path / "b.ppm")
    assert (tmp_path / "a.seg").read_bytes() == (tmp_path / "b.seg").read_bytes()
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()
    assert np.array_equal(read_label_map(tmp_path / "a.seg"), labels)


def test_label_range_enforced():
    with pytest.raises(ValueError):
        encode_label_map(np.array([[2**32, 0], [0, 0]]))
    with pytest.raises(ValueError):
        encode_label_map(np.array([[-1, 0], [0, 0]]))


def test_decode_rejects_bad_payload():
    data = encode_label_map(np.zeros((2, 2), int))
    with pytest.raises(FormatError):
        decode_label_map(data[:-1])
    with pytest.raises(FormatError):
        decode_label_map(b"XXXX" + data[4:])


@settings(max_examples=50, deadline=None)
@given(arrays(np.uint32, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_label_roundtrip_property(labels):
    assert np.array_equal(decode_label_map(encode_label_map(labels)), labels.astype(np.int64))


def test_colors_pure_function_of_label():
    a = colorize_labels(np.array([[7, 3], [3, 9]]))
    b = colorize_labels(np.array([[1, 7], [2, 2]]))
    assert np.array_equal(a[0, 0], b[0, 1])
    assert np.array_equal(a[0, 1], a[1, 0])
    assert np.array_equal(label_colors(np.array([7]))[0], a[0, 0])
    assert not np.array_equal(label_colors(np.array([1]))[0], label_colors(np.array([2]))[0])


# --- flow -------------------------------------------------------------------------

def _flow(rows):
    labels, dx, dy, valid = zip(*rows) if rows else ((), (), (), ())
    return FlowMap(np.array(labels, np.int64), np.array(dx, float), np.array(dy, float), np.array(valid, bool))


def test_flow_line_format():
    text = format_flow(_flow([(7, 3.0, 0.0, True)]))
    assert text.splitlines() == ["label,dx,dy,valid", "7,3.0,0.0,1"]


def test_flow_invalid_convention():
    text = format_flow(_flow([(4, 0.0, 0.0, False)]))
    assert text.splitlines()[1] == "4,0.0,0.0,0"


def test_empty_flow_header_only(tmp_path):
    write_flow(FlowMap.empty(), tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text() == "label,dx,dy,valid\n"


def test_flow_roundtrip_and_viz(tmp_path):
    flow = _flow([(1, 2.5, -1.25, True), (5, 0.0, 0.0, False)])
    labels = np.array([[1, 1, 5], [1, 5, 5]])
    write_flow(flow, tmp_path / "f.csv", tmp_path / "f.ppm", labels=labels)
    assert read_flow(tmp_path / "f.csv") == [(1, 2.5, -1.25, True), (5, 0.0, 0.0, False)]
    viz = load_frame(tmp_path / "f.ppm").pixels
    assert viz[0, 2].tolist() == [0, 0, 0]
    assert viz[0, 0].max() == 255
