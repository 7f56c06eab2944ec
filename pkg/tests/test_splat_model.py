import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splatprune.errors import PlyFormatError, TruncatedPayloadError, UnsupportedEncodingError
from splatprune.splat_model import (
    BYTES_PER_PRIMITIVE,
    N_PROPS,
    PROPERTY_NAMES,
    GaussianField,
    compact,
    covariance_of,
    covariances,
    load_field,
    ply_header,
    quat_to_rotmat,
    save_field,
)

from conftest import random_field, write_ply


def _row(**values):
    r = [0.0] * N_PROPS
    for k, v in values.items():
        r[PROPERTY_NAMES.index(k)] = v
    return r


def test_layout_constants():
    assert N_PROPS == 62
    assert BYTES_PER_PRIMITIVE == 248


def test_zero_payload(tmp_path):
    p = tmp_path / "z.ply"
    write_ply(p, [[0.0] * N_PROPS] * 2)
    f = load_field(p)
    assert len(f) == 2
    np.testing.assert_array_equal(f.centers, 0.0)
    assert f.sh_degree == 3


def test_hand_written_vertex(tmp_path):
    p = tmp_path / "one.ply"
    write_ply(p, [_row(x=1.5, opacity=0.0, rot_0=1.0)])
    f = load_field(p)
    assert f.centers[0, 0] == 1.5
    assert f.opacities[0] == 0.5


def test_round_trip_identity(tmp_path, rng):
    f = random_field(rng, 50)
    a, b = tmp_path / "a.ply", tmp_path / "b.ply"
    save_field(f, a)
    g = load_field(a)
    assert g == f
    save_field(g, b)
    assert a.read_bytes() == b.read_bytes()


def test_empty_field(tmp_path):
    p = tmp_path / "e.ply"
    save_field(GaussianField.empty(), p)
    assert b"element vertex 0" in p.read_bytes()
    assert len(load_field(p)) == 0


@pytest.mark.parametrize("n", [0, 1, 7, 100])
def test_file_size(tmp_path, rng, n):
    p = tmp_path / "f.ply"
    save_field(random_field(rng, n), p)
    assert p.stat().st_size == len(ply_header(n)) + n * 62 * 4


def test_missing_property_named(tmp_path):
    p = tmp_path / "m.ply"
    names = [n for n in PROPERTY_NAMES if n != "opacity"]
    write_ply(p, [[0.0] * len(names)], names=names)
    with pytest.raises(PlyFormatError, match="opacity"):
        load_field(p)


@pytest.mark.parametrize("fmt", ["binary_big_endian", "ascii"])
def test_unsupported_encoding(tmp_path, fmt):
    p = tmp_path / "u.ply"
    if fmt == "ascii":
        head = ["ply", "format ascii 1.0", "element vertex 1"] + [f"property float {n}" for n in PROPERTY_NAMES]
        p.write_text("\n".join(head + ["end_header", " ".join(["0"] * N_PROPS)]) + "\n")
    else:
        write_ply(p, [_row(rot_0=1.0)], fmt=fmt)
    with pytest.raises(UnsupportedEncodingError):
        load_field(p)


def test_truncated_reports_offset(tmp_path):
    p = tmp_path / "t.ply"
    hlen = write_ply(p, [_row(rot_0=1.0)] * 3, cut=10)
    with pytest.raises(TruncatedPayloadError) as info:
        load_field(p)
    assert info.value.offset == hlen + 3 * 248 - 10
    assert isinstance(info.value, OSError)


@pytest.mark.parametrize("n_rest,degree", [(0, 0), (9, 1), (24, 2)])
def test_lower_sh_degrees_channel_major(tmp_path, n_rest, degree):
    names = [n for n in PROPERTY_NAMES if not n.startswith("f_rest_")]
    at = names.index("opacity")
    names = names[:at] + [f"f_rest_{i}" for i in range(n_rest)] + names[at:]
    row = [0.0] * len(names)
    for i in range(n_rest):
        row[names.index(f"f_rest_{i}")] = float(i + 1)
    row[names.index("rot_0")] = 1.0
    p = tmp_path / "d.ply"
    write_ply(p, [row], names=names)
    f = load_field(p)
    assert f.sh_degree == degree
    per = n_rest // 3
    sh = f.sh_tensor()[0]  # (3, 16)
    for c in range(3):
        np.testing.assert_array_equal(sh[c, 1:1 + per], np.arange(c * per, (c + 1) * per) + 1.0)
        np.testing.assert_array_equal(sh[c, 1 + per:], 0.0)


def test_bad_rest_count(tmp_path):
    names = [n for n in PROPERTY_NAMES if not n.startswith("f_rest_")] + ["f_rest_0", "f_rest_1"]
    p = tmp_path / "r.ply"
    write_ply(p, [[0.0] * len(names)], names=names)
    with pytest.raises(PlyFormatError):
        load_field(p)


def test_not_a_ply(tmp_path):
    p = tmp_path / "x.ply"
    p.write_bytes(b"hello\n")
    with pytest.raises(PlyFormatError):
        load_field(p)


def test_unnormalized_quaternion_is_normalized():
    f = GaussianField.from_arrays(np.zeros((1, 3)), rotations=[[2.0, 0, 0, 0]])
    np.testing.assert_allclose(f.rotations[0], [1, 0, 0, 0])


# --- covariance ---------------------------------------------------------------

def _cov(log_scale, quat=(1, 0, 0, 0)):
    f = GaussianField.from_arrays(np.zeros((1, 3)), log_scales=[log_scale], rotations=[quat])
    return covariance_of(f[0])


def test_cov_identity():
    np.testing.assert_allclose(_cov([0, 0, 0]), np.eye(3), atol=1e-12)


def test_cov_scaled():
    np.testing.assert_allclose(_cov([math.log(2), 0, 0]), np.diag([4.0, 1, 1]), rtol=1e-6, atol=1e-12)


def test_cov_rotated_90_about_z():
    h = math.sqrt(0.5)
    np.testing.assert_allclose(_cov([math.log(2), 0, 0], (h, 0, 0, h)), np.diag([1.0, 4, 1]), atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 0.1),
       st.lists(st.floats(-2, 1), min_size=3, max_size=3))
def test_cov_quaternion_sign_and_psd(q, ls):
    a, b = _cov(ls, q), _cov(ls, [-c for c in q])
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a, a.T, atol=1e-15)
    assert np.linalg.eigvalsh(a).min() > 0


def test_rotmat_orthonormal(rng):
    R = quat_to_rotmat(rng.normal(size=(20, 4)))
    np.testing.assert_allclose(R @ np.swapaxes(R, 1, 2), np.broadcast_to(np.eye(3), R.shape), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-12)


def test_batched_covariances_match_single(rng):
    f = random_field(rng, 10)
    C = covariances(f)
    for i in range(10):
        np.testing.assert_allclose(C[i], covariance_of(f[i]), rtol=1e-12, atol=1e-15)


# --- compact -------------------------------------------------------------------

def test_compact_all(rng):
    f = random_field(rng, 8)
    assert compact(f, range(8)) == f


def test_compact_none(rng):
    assert len(compact(random_field(rng, 8), [])) == 0


def test_compact_bookkeeping(rng):
    f = random_field(rng, 5)
    c = compact(f, [4, 0, 2])
    assert len(c) == 3
    np.testing.assert_array_equal(c.data[1], f.data[2])


@pytest.mark.parametrize("bad", [[5], [-1], [0, 9]])
def test_compact_out_of_range(rng, bad):
    with pytest.raises(IndexError):
        compact(random_field(rng, 5), bad)


def test_compact_duplicates(rng):
    with pytest.raises(ValueError):
        compact(random_field(rng, 5), [1, 1])


def test_field_is_read_only(rng):
    f = random_field(rng, 3)
    with pytest.raises(ValueError):
        f.data[0, 0] = 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 40), st.integers(0, 2**31 - 1))
def test_round_trip_property(tmp_path_factory, n, seed):
    f = random_field(np.random.default_rng(seed), n)
    p = tmp_path_factory.mktemp("rt") / "f.ply"
    save_field(f, p)
    assert load_field(p) == f
