import struct

import numpy as np
import pytest

from splatprune.graph import build_graph, min_nn_distance
from splatprune.splat_model import PROPERTY_NAMES, GaussianField


def write_ply(path, rows, names=PROPERTY_NAMES, fmt="binary_little_endian", count=None, cut=0):
    """Hand-rolled PLY writer, independent of ``save_field``.

    ``rows`` is a list of per-vertex value lists ordered like ``names``.
    ``cut`` drops that many bytes from the end of the payload.
    """
    count = len(rows) if count is None else count
    head = ["ply", f"format {fmt} 1.0", f"element vertex {count}"]
    head += [f"property float {n}" for n in names]
    head.append("end_header")
    header = ("\n".join(head) + "\n").encode("ascii")
    endian = ">" if fmt == "binary_big_endian" else "<"
    payload = b"".join(struct.pack(endian + "f" * len(names), *r) for r in rows)
    if cut:
        payload = payload[:-cut]
    with open(path, "wb") as fh:
        fh.write(header + payload)
    return len(header)


def random_field(rng, n, sh_degree=3, spread=1.0):
    return GaussianField.from_arrays(
        centers=rng.uniform(-spread, spread, (n, 3)),
        log_scales=rng.normal(-3.0, 0.5, (n, 3)),
        rotations=rng.normal(size=(n, 4)),
        opacity_logits=rng.normal(size=n),
        sh=rng.normal(scale=0.3, size=(n, 48)),
        normals=rng.normal(size=(n, 3)),
        sh_degree=sh_degree,
    )


def random_graph(seed):
    """A small random point set with a tau that leaves a mix of components.

    tau is drawn between the minimum nearest-neighbor distance and a few times
    the median spacing, so some graphs are sparse and some nearly complete.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 201))
    pts = rng.uniform(0.0, 1.0, (n, 3))
    dmin = min_nn_distance(pts)
    spacing = n ** (-1 / 3)
    tau = float(rng.uniform(1.5 * dmin, 3.0 * spacing))
    field = GaussianField.from_arrays(pts)
    g = build_graph(field, tau=tau)
    if g.edge_count == 0:
        g = build_graph(field)
    return field, g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
