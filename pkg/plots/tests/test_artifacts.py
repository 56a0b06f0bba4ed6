"""Reader contracts: schema checks fire before any figure work starts."""

import json

import numpy as np
import pytest

from qembed_plots import ArtifactError, read_campaign, read_slice, read_sweep
from qembed_plots.artifacts import SWEEP_HEADER

SLICE_HEADER = "t1,t3,mean,std,replications,horizon,seed0"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# ------------------------------------------------------------------ sweeps

def test_sweep_parses_values_exactly(tmp_path):
    p = _write(
        tmp_path,
        "curve.csv",
        f"{SWEEP_HEADER}\n1.0,0.5,0.01,100,10000,42\n1.5,0.4,0.02,100,10000,42\n",
    )
    t = read_sweep(p)
    assert t.y.tolist() == [1.0, 1.5]
    assert t.mean.tolist() == [0.5, 0.4]
    assert t.std.tolist() == [0.01, 0.02]
    assert t.label == "curve"


def test_sweep_missing_file(tmp_path):
    with pytest.raises(ArtifactError, match="file not found"):
        read_sweep(tmp_path / "nope.csv")


def test_sweep_empty_file(tmp_path):
    p = _write(tmp_path, "empty.csv", "")
    with pytest.raises(ArtifactError, match="empty file"):
        read_sweep(p)


def test_sweep_header_only(tmp_path):
    p = _write(tmp_path, "bare.csv", SWEEP_HEADER + "\n")
    with pytest.raises(ArtifactError, match="no data rows"):
        read_sweep(p)


def test_sweep_wrong_header(tmp_path):
    p = _write(tmp_path, "odd.csv", "a,b\n1,2\n")
    with pytest.raises(ArtifactError, match="expected header"):
        read_sweep(p)


def test_sweep_non_numeric_cell(tmp_path):
    p = _write(tmp_path, "bad.csv", f"{SWEEP_HEADER}\n1.0,x,0.0,1,1,1\n")
    with pytest.raises(ArtifactError, match="line 2"):
        read_sweep(p)


def test_sweep_grid_must_increase(tmp_path):
    p = _write(
        tmp_path,
        "rev.csv",
        f"{SWEEP_HEADER}\n2.0,0.1,0.0,1,1,1\n1.0,0.2,0.0,1,1,1\n",
    )
    with pytest.raises(ArtifactError, match="strictly increasing"):
        read_sweep(p)


# ------------------------------------------------------------------ slices

def _slice_text(rows):
    return SLICE_HEADER + "\n" + "".join(
        f"{a!r},{b!r},{m!r},0.0,3,1000,7\n" for a, b, m in rows
    )


def test_slice_pivots_rectangular_grid(tmp_path):
    rows = [(a, b, 10 * a + b) for a in (1.0, 2.0) for b in (1.0, 2.0, 3.0)]
    p = _write(tmp_path, "plane.csv", _slice_text(rows))
    t = read_slice(p)
    assert t.xname == "t1" and t.yname == "t3"
    assert t.xs.tolist() == [1.0, 2.0]
    assert t.ys.tolist() == [1.0, 2.0, 3.0]
    # mean[i, j] holds the cell at ys[i], xs[j]
    assert t.mean.shape == (3, 2)
    assert t.mean[2, 1] == 23.0
    assert not np.isnan(t.mean).any()


def test_slice_rejects_ragged_grid(tmp_path):
    rows = [(a, b, 0.0) for a in (1.0, 2.0) for b in (1.0, 2.0, 3.0)][:-1]
    p = _write(tmp_path, "ragged.csv", _slice_text(rows))
    with pytest.raises(ArtifactError, match="not rectangular"):
        read_slice(p)


def test_slice_rejects_duplicate_cell(tmp_path):
    rows = [(a, b, 0.0) for a in (1.0, 2.0) for b in (1.0, 2.0, 3.0)]
    rows[-1] = rows[0]
    p = _write(tmp_path, "dup.csv", _slice_text(rows))
    with pytest.raises(ArtifactError, match="duplicate cell"):
        read_slice(p)


def test_slice_wrong_header(tmp_path):
    p = _write(tmp_path, "odd.csv", "t1,t3,mean\n1,2,3\n")
    with pytest.raises(ArtifactError, match="expected header"):
        read_slice(p)


# --------------------------------------------------------------- campaigns

def _summary_row():
    return {
        "method": "m",
        "n_runs": 4,
        "budget": 100,
        "best": -0.7,
        "avg": -0.5,
        "std": 0.1,
        "avg_evals": 52.7,
        "avg_seconds": 0.2,
    }


def test_campaign_reads_methods_table(tmp_path):
    p = _write(
        tmp_path,
        "c.json",
        '{"methods": {"cobyla": %s}}' % json.dumps(_summary_row()),
    )
    methods = read_campaign(p)
    assert list(methods) == ["cobyla"]
    assert methods["cobyla"]["best"] == -0.7


def test_campaign_rejects_missing_keys(tmp_path):
    row = _summary_row()
    del row["avg_evals"]
    p = _write(tmp_path, "c.json", '{"methods": {"m": %s}}' % json.dumps(row))
    with pytest.raises(ArtifactError, match="avg_evals"):
        read_campaign(p)


def test_campaign_rejects_empty_and_invalid(tmp_path):
    with pytest.raises(ArtifactError, match="empty file"):
        read_campaign(_write(tmp_path, "e.json", " \n"))
    with pytest.raises(ArtifactError, match="not valid JSON"):
        read_campaign(_write(tmp_path, "b.json", "{nope"))
    with pytest.raises(ArtifactError, match="methods"):
        read_campaign(_write(tmp_path, "m.json", '{"other": 1}'))
