import json

import numpy as np
import pytest

from splatprune.errors import DegenerateInputError, EmptySelectionError
from splatprune.pruner import (
    CONTINUOUS,
    PruneConfig,
    field_bytes,
    memory_report,
    payload_bytes,
    prune_once,
    prune_schedule,
)
from splatprune.splat_model import GaussianField, compact, ply_header
from splatprune.synth import SynthSpec, synth_field

from conftest import random_field


@pytest.fixture(scope="module")
def thousand():
    return synth_field(SynthSpec(plane=900, cluster=100, seed=4))


def test_keep_everything(thousand):
    out, rep = prune_once(thousand, PruneConfig(k=1.0))
    assert out == thousand
    assert rep.after_count == rep.before_count == 1000


def test_k_tenth_keeps_hundred(thousand):
    out, rep = prune_once(thousand, PruneConfig(k=0.1))
    assert len(out) == rep.after_count == 100
    assert rep.bytes_after == field_bytes(100)
    assert len(rep.selection.high_band) == len(rep.selection.low_band) == 50


def test_output_is_compaction_of_selection(thousand):
    out, rep = prune_once(thousand, PruneConfig(k=0.3, gamma=0.25))
    assert out == compact(thousand, rep.selection.kept)


def test_toy_composition():
    # collinear, unevenly spaced points, then the selection indices are checked
    # against the composition of selection on the reported response
    pts = np.array([[0, 0, 0], [1, 0, 0], [1.5, 0, 0], [4, 0, 0], [4.2, 0, 0],
                    [6, 0, 0], [9, 0, 0], [9.1, 0, 0], [12, 0, 0], [15, 0, 0]], float)
    f = GaussianField.from_arrays(pts)
    out, rep = prune_once(f, PruneConfig(k=0.5, gamma=0.5))
    pi = rep.response.pi
    order_hi = sorted(range(10), key=lambda i: (-pi[i], i))
    high = sorted(order_hi[:2])
    rest = [i for i in sorted(range(10), key=lambda i: (pi[i], i)) if i not in high]
    assert rep.selection.kept.tolist() == sorted(high + rest[:3])
    assert len(out) == 5


def test_tiny_k_is_empty(thousand):
    with pytest.raises(EmptySelectionError):
        prune_once(thousand, PruneConfig(k=0.0004))


def test_deterministic(thousand):
    a, ra = prune_once(thousand, PruneConfig(k=0.2))
    b, rb = prune_once(thousand, PruneConfig(k=0.2))
    assert a == b
    ja, jb = ra.to_json(), rb.to_json()
    ja.pop("timings"), jb.pop("timings")
    assert ja == jb


def test_gamma_extremes_disjoint(thousand):
    _, lo = prune_once(thousand, PruneConfig(k=0.1, gamma=0.0))
    _, hi = prune_once(thousand, PruneConfig(k=0.1, gamma=1.0))
    assert not set(lo.selection.kept) & set(hi.selection.kept)


def test_report_json_serializable(thousand):
    _, rep = prune_once(thousand, PruneConfig(k=0.5))
    d = json.loads(json.dumps(rep.to_json()))
    assert d["payload_after"] == 500 * 248
    assert "selection" not in d


# --- continuous schedule ---------------------------------------------------------------

def _cfg(**kw):
    return PruneConfig(mode=CONTINUOUS, **kw)


def test_cascade(thousand):
    _, rep = prune_schedule([thousand] * 3, _cfg(interval=1, per_step_keep=0.8))
    assert rep.per_step_counts == [1000, 800, 640, 512]
    assert rep.peak_count == 1000
    assert rep.after_count == 512


def test_single_snapshot_matches_one_shot(thousand):
    a, _ = prune_schedule([thousand], _cfg(interval=1, per_step_keep=0.5))
    b, _ = prune_once(thousand, PruneConfig(k=0.5))
    assert a == b


def test_interval_skips_steps(thousand):
    _, rep = prune_schedule([thousand] * 4, _cfg(interval=2, per_step_keep=0.5))
    assert rep.per_step_counts == [1000, 1000, 500, 500, 250]


def test_max_steps(thousand):
    _, rep = prune_schedule([thousand] * 4, _cfg(per_step_keep=0.5, max_steps=2))
    assert rep.per_step_counts == [1000, 500, 250]


def test_growth_appends_and_peak():
    rng = np.random.default_rng(1)
    base = random_field(rng, 400)
    grown = GaussianField(np.vstack([base.data, random_field(rng, 200).data]), base.sh_degree)
    out, rep = prune_schedule([base, grown], _cfg(per_step_keep=0.5))
    # step 1: 400 -> 200; step 2: 200 survivors + 200 new = 400 -> 200
    assert rep.per_step_counts == [400, 200, 200]
    assert rep.peak_count == 400
    # every survivor is a record of the final snapshot
    rows = {r.tobytes() for r in grown.data}
    assert all(r.tobytes() in rows for r in out.data)


def test_primitive_cap(thousand):
    _, rep = prune_schedule([thousand] * 2, _cfg(per_step_keep=0.9, primitive_cap=300))
    assert rep.per_step_counts == [1000, 300, 270]


def test_empty_snapshot(thousand):
    with pytest.raises(DegenerateInputError):
        prune_schedule([thousand, GaussianField.empty()], _cfg())


def test_shrinking_snapshot_rejected(thousand):
    with pytest.raises(DegenerateInputError):
        prune_schedule([thousand, compact(thousand, range(10))], _cfg(per_step_keep=1.0))


@pytest.mark.parametrize("kw", [dict(k=0.0), dict(k=1.5), dict(gamma=-0.1), dict(mode="x"),
                                dict(mode=CONTINUOUS, interval=0), dict(primitive_cap=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PruneConfig(**kw)


# --- byte accounting ----------------------------------------------------------------------

@pytest.mark.parametrize("n,expected", [(0, 0), (1, 248), (10**6, 248_000_000)])
def test_payload_bytes(n, expected):
    assert payload_bytes(n) == expected


def test_memory_report(rng):
    f = random_field(rng, 17)
    rep = memory_report(f)
    assert rep.bytes_before == len(ply_header(17)) + 17 * 248
    assert rep.payload_before == 17 * 248
    assert memory_report(GaussianField.empty()).payload_before == 0
