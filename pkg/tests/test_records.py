import json
import math

import numpy as np
import pandas as pd

from utils.records import append_row, json_text, read_json, write_json, write_table


def test_json_is_plain_and_sorted(tmp_path):
    path = write_json(
        {"b": np.float64(1.5), "a": np.arange(3), "c": math.inf, "d": {"z": np.int64(2), "y": -math.inf}},
        tmp_path / "nested" / "out.json",
    )
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    data = read_json(path)
    assert data == {"a": [0, 1, 2], "b": 1.5, "c": "inf", "d": {"y": "-inf", "z": 2}}


def test_json_text_matches_file(tmp_path):
    payload = {"x": 0.1, "name": "nehari"}
    path = write_json(payload, tmp_path / "p.json")
    assert path.read_text() == json_text(payload) + "\n"
    assert json.loads(json_text(payload)) == payload


def test_table_is_byte_reproducible(tmp_path):
    frame = pd.DataFrame({"energy": [1.0 / 3.0, 2.0 / 7.0], "method": ["nehari", "mp"]})
    write_table(frame, tmp_path / "a.csv")
    write_table(frame, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = pd.read_csv(tmp_path / "a.csv")
    assert back["energy"].tolist() == frame["energy"].tolist()


def test_journal_writes_header_once(tmp_path):
    path = tmp_path / "journal.csv"
    append_row({"lambda": 1.0, "level": 0.25, "converged": True}, path)
    append_row({"lambda": 10.0, "level": np.float64(7.5), "converged": False}, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "lambda,level,converged"
    assert len(lines) == 3
    assert pd.read_csv(path)["level"].tolist() == [0.25, 7.5]
