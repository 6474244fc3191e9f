import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlbox.fileformat import (
    SCHEMA_VERSION,
    FormatError,
    dumps,
    load_system,
    save_system,
    system_from_dict,
    system_to_dict,
)
from nlbox.model import pr_box
from nlbox.systems import random_nonsignaling


def test_pr_box_document():
    doc = system_to_dict(pr_box())
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["sizes"] == {"x": 2, "y": 2, "a": 2, "b": 2}
    assert doc["probs"][1][1] == [["0", "1/2"], ["1/2", "0"]]


@given(st.integers(0, 2**32))
def test_round_trip(seed):
    P = random_nonsignaling(np.random.default_rng(seed))
    assert system_from_dict(json.loads(dumps(system_to_dict(P)))) == P


def test_file_round_trip(tmp_path):
    P = random_nonsignaling(np.random.default_rng(1), shape=(3, 2, 2, 3))
    path = tmp_path / "p.json"
    save_system(path, P)
    text = path.read_text(encoding="utf-8")
    assert text.endswith("\n")
    assert load_system(path) == P
    save_system(path, P)
    assert path.read_text(encoding="utf-8") == text


def test_integers_and_decimal_strings():
    doc = {"sizes": {"x": 1, "y": 1, "a": 1, "b": 2}, "probs": [[[[0, "1"]]]]}
    assert system_from_dict(doc)[0, 0, 0, 1] == 1
    doc["probs"] = [[[["0.25", "3/4"]]]]
    assert system_from_dict(doc)[0, 0, 0, 0] == Fraction(1, 4)


def test_floats_need_rationalize():
    doc = system_to_dict(pr_box())
    doc["probs"] = pr_box().to_array().tolist()
    with pytest.raises(FormatError, match="rationalize"):
        system_from_dict(doc)
    assert system_from_dict(doc, rationalize_max=4) == pr_box()


@pytest.mark.parametrize(
    "doc",
    [
        [],
        {"kind": "protocol"},
        {"sizes": {"x": 1, "y": 1, "a": 1}, "probs": [[[[1]]]]},
        {"sizes": {"x": 1, "y": 1, "a": 1, "b": 1}, "probs": [[[[1, 0]]]]},
        {"sizes": {"x": 1, "y": 1, "a": 1, "b": 1}, "probs": [[[["one"]]]]},
        {"sizes": {"x": 1, "y": 1, "a": 1, "b": 1}, "probs": [[[[True]]]]},
        {"sizes": {"x": 1, "y": 1, "a": 1, "b": 1}, "probs": [[[[None]]]]},
        {"schema_version": 99, "sizes": {"x": 1, "y": 1, "a": 1, "b": 1}, "probs": [[[[1]]]]},
    ],
)
def test_malformed(doc):
    with pytest.raises(FormatError):
        system_from_dict(doc)


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(FormatError):
        load_system(path)
