import numpy as np
import pytest

from tedia import io
from tedia.blocks import BlockStructure
from tedia.btd import random_btd_init
from tedia.sweep import TransformSet


def test_tensor_roundtrip_exact(tmp_path, rng):
    for t in (rng.standard_normal((2, 3, 4)),
              rng.standard_normal((3, 3, 3)) + 1j * rng.standard_normal((3, 3, 3)),
              np.array([[[np.pi]]])):
        io.write_tensor(tmp_path / "t.txt", t)
        back = io.read_tensor(tmp_path / "t.txt")
        assert back.dtype.kind == t.dtype.kind
        np.testing.assert_array_equal(back, t)


def test_tensor_file_layout(tmp_path):
    io.write_tensor(tmp_path / "t.txt", np.arange(8.0).reshape(2, 2, 2))
    lines = (tmp_path / "t.txt").read_text().splitlines()
    assert lines[:3] == ["TEDIA-TENSOR 1", "real", "2 2 2"]
    assert lines[3:5] == ["0", "1"]


def test_matrix_roundtrip(tmp_path, rng):
    m = rng.standard_normal((3, 5))
    io.write_matrix(tmp_path / "m.txt", m)
    np.testing.assert_array_equal(io.read_matrix(tmp_path / "m.txt"), m)
    with pytest.raises(ValueError):
        io.write_matrix(tmp_path / "m.txt", np.zeros(3))


@pytest.mark.parametrize("body", [
    "nope\nreal\n1 1 1\n0\n",
    "TEDIA-TENSOR 1\nquaternion\n1 1 1\n0\n",
    "TEDIA-TENSOR 1\nreal\n1 1\n0\n",
    "TEDIA-TENSOR 1\nreal\n1 1 2\n0\n",
    "TEDIA-TENSOR 1\nreal\n1 1 1\nx\n",
    "TEDIA-TENSOR 1\nreal\n1 1 1\nnan\n",
    "TEDIA-TENSOR 1\ncomplex\n1 1 1\n1\n",
])
def test_bad_tensor_files(tmp_path, body):
    (tmp_path / "t.txt").write_text(body)
    with pytest.raises(io.FormatError):
        io.read_tensor(tmp_path / "t.txt")


def test_missing_file(tmp_path):
    with pytest.raises(io.FormatError):
        io.read_tensor(tmp_path / "absent.txt")


def test_blocks_roundtrip(tmp_path):
    b = BlockStructure(perm=np.array([2, 0, 1, 3]), sizes=(3, 1))
    assert io.format_blocks(b) == "perm: 3 1 2 4\nsizes: 3 1\n"
    io.write_blocks(tmp_path / "b.txt", b)
    back = io.read_blocks(tmp_path / "b.txt")
    assert back.perm.tolist() == b.perm.tolist() and back.sizes == b.sizes
    with pytest.raises(io.FormatError):
        io.parse_blocks("sizes: 2\n")
    with pytest.raises(ValueError):
        io.parse_blocks("perm: 1 1\nsizes: 2\n")


def test_transforms_roundtrip(tmp_path, rng):
    tr = TransformSet.from_mixing(*(rng.standard_normal((3, 3)) + 3 * np.eye(3) for _ in range(3)))
    io.write_transforms(tmp_path, tr)
    back = io.read_transforms(tmp_path)
    for name in io.TRANSFORM_FILES:
        np.testing.assert_array_equal(getattr(back, name), getattr(tr, name))


def test_btd_roundtrip(tmp_path, rng):
    m = random_btd_init((4, 4, 4), (1, 3), rng)
    io.write_btd(tmp_path / "btd", m)
    assert (tmp_path / "btd" / "manifest.txt").read_text().startswith("sizes: 1 3\n")
    back = io.read_btd(tmp_path / "btd")
    np.testing.assert_array_equal(back.reconstruct(), m.reconstruct())
    with pytest.raises(io.FormatError):
        io.read_btd(tmp_path)


def test_read_kv(tmp_path):
    (tmp_path / "c.txt").write_text("# campaign\nkind = block\nc = 0.1, 0.2  # two values\n\n")
    assert io.read_kv(tmp_path / "c.txt") == {"kind": "block", "c": "0.1, 0.2"}
    (tmp_path / "bad.txt").write_text("kind block\n")
    with pytest.raises(io.FormatError):
        io.read_kv(tmp_path / "bad.txt")
