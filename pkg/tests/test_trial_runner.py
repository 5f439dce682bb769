"""
Tests for the seeded trial runner and the CSV report service.
"""

import numpy as np
import pandas as pd
import pytest

from app.commands.experiment_commands import _mse_chunk
from app.services.report_service import header_line, read_csv, render_csv, write_csv
from app.services.trial_runner import chunk_sizes, run_jobs, run_trials, spawn_rng


def _uniform_chunk(rng, size, scale):
    return scale * rng.random(size)


def _first_draw(rng, offset):
    return offset + float(rng.random())


def test_spawn_rng_streams():
    assert spawn_rng(1, 2, 3).random() == spawn_rng(1, 2, 3).random()
    assert spawn_rng(1, 2, 3).random() != spawn_rng(1, 2, 4).random()
    assert spawn_rng(1).random() != spawn_rng(2).random()


def test_chunk_sizes():
    assert chunk_sizes(7, 3) == [3, 3, 1]
    assert chunk_sizes(6, 3) == [3, 3]
    with pytest.raises(ValueError):
        chunk_sizes(0, 3)


def test_run_trials_concatenates_in_order():
    results = run_trials(_uniform_chunk, 5, 25, stream=1, args=(2.0,), chunk_size=10)
    assert results.shape == (25,)
    np.testing.assert_array_equal(results[:10], 2.0 * spawn_rng(5, 1, 0).random(10))
    np.testing.assert_array_equal(results[20:], 2.0 * spawn_rng(5, 1, 2).random(5))


def test_run_trials_independent_of_workers():
    args = (3, 1.0, 1.0, 2)
    serial = run_trials(_mse_chunk, 9, 40, args=args, chunk_size=10, workers=1)
    pooled = run_trials(_mse_chunk, 9, 40, args=args, chunk_size=10, workers=2)
    np.testing.assert_array_equal(serial, pooled)


def test_run_jobs_keeps_job_order():
    jobs = [((index,), (10.0 * index,)) for index in range(4)]
    results = run_jobs(_first_draw, 3, jobs, workers=1)
    assert [int(r // 10) for r in results] == [0, 1, 2, 3]
    assert results[2] == 20.0 + spawn_rng(3, 2).random()


def test_header_line():
    line = header_line("mse-sweep", "0123456789abcdef", {"M": "count", "mse": "power"})
    assert line == "# command=mse-sweep config_hash=0123456789abcdef units=M:count;mse:power\n"


def test_render_csv_float_format():
    frame = pd.DataFrame({"M": [1, 2], "value": [1 / 3, 2.0]})
    text = render_csv(frame, "x", "h", {"M": "count"})
    assert text.splitlines()[1:] == ["M,value", "1,0.333333333333", "2,2"]
    assert "\r" not in text


def test_write_and_read_csv(tmp_path):
    frame = pd.DataFrame({"M": [1, 4], "loss": [0.5, 0.25]})
    path = tmp_path / "nested" / "table.csv"
    write_csv(frame, str(path), "train", "h", {"loss": "loss"})
    assert path.read_text(encoding="utf-8").startswith("# command=train ")
    pd.testing.assert_frame_equal(read_csv(str(path)), frame)


def test_write_csv_to_stdout(capsys):
    write_csv(pd.DataFrame({"a": [1]}), None, "select-m", "h", {})
    assert capsys.readouterr().out == "# command=select-m config_hash=h units=\na\n1\n"
