import csv
import json
import tracemalloc

import pytest

from rmlkg.mapping import LogicalSource, ReferenceFormulation
from rmlkg.sources import SourceError, SourceStats, open_source, project_attributes


def csv_source(tmp_path, text, name="s.csv"):
    (tmp_path / name).write_text(text, encoding="utf-8")
    return LogicalSource(name)


def json_source(tmp_path, doc, iterator, name="s.json"):
    (tmp_path / name).write_text(json.dumps(doc), encoding="utf-8")
    return LogicalSource(name, ReferenceFormulation.JSONPATH, iterator)


def test_csv_two_rows(tmp_path):
    ls = csv_source(tmp_path, "enst,omixcore\nE1,0.665\nE2,0.5\n")
    recs = list(open_source(ls, tmp_path))
    assert [r.bindings for r in recs] == [{"enst": "E1", "omixcore": "0.665"},
                                          {"enst": "E2", "omixcore": "0.5"}]
    assert [r.ordinal for r in recs] == [0, 1]


def test_csv_header_only_and_empty_file(tmp_path):
    assert list(open_source(csv_source(tmp_path, "a,b\n"), tmp_path)) == []
    assert list(open_source(csv_source(tmp_path, "", "e.csv"), tmp_path)) == []


def test_csv_rfc4180_quoting(tmp_path):
    ls = csv_source(tmp_path, 'a,b\n"x, y","line1\nline2"\n"say ""hi""",z\n')
    recs = [r.bindings for r in open_source(ls, tmp_path)]
    assert recs == [{"a": "x, y", "b": "line1\nline2"}, {"a": 'say "hi"', "b": "z"}]


def test_csv_wrong_column_count(tmp_path):
    ls = csv_source(tmp_path, "a,b\n1,2\n3\n")
    with pytest.raises(SourceError, match="line 3"):
        list(open_source(ls, tmp_path))


def test_missing_file(tmp_path):
    with pytest.raises(SourceError, match="not found"):
        open_source(LogicalSource("nope.csv"), tmp_path)


def test_duplicate_header(tmp_path):
    with pytest.raises(SourceError, match="duplicate"):
        list(open_source(csv_source(tmp_path, "a,a\n1,2\n"), tmp_path))


def test_values_are_not_coerced(tmp_path):
    ls = csv_source(tmp_path, "n\n007\n1e3\n")
    assert [r.bindings["n"] for r in open_source(ls, tmp_path)] == ["007", "1e3"]


def test_record_count_equals_rows(tmp_path):
    rows = [[str(i), f"v{i}"] for i in range(257)]
    with open(tmp_path / "r.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "v"])
        w.writerows(rows)
    assert sum(1 for _ in open_source(LogicalSource("r.csv"), tmp_path)) == 257


def test_relative_to_base_dir_and_absolute(tmp_path):
    sub = tmp_path / "sub"
    sub.mkdir()
    (sub / "x.csv").write_text("a\n1\n")
    assert len(list(open_source(LogicalSource("x.csv"), sub))) == 1
    assert len(list(open_source(LogicalSource(str(sub / "x.csv")), "/elsewhere"))) == 1


def test_json_minimal_iterator(tmp_path):
    ls = json_source(tmp_path, {"rows": [{"a": 1}]}, "$.rows[*]")
    assert [r.bindings for r in open_source(ls, tmp_path)] == [{"a": "1"}]


def test_json_nested_flattening_and_scalars(tmp_path):
    doc = {"data": {"items": [{"id": "x", "n": 0.665, "ok": True, "none": None,
                               "geo": {"lat": 1.5, "deep": {"k": "v"}}, "tags": ["a"]}]}}
    ls = json_source(tmp_path, doc, "$.data.items[*]")
    (rec,) = open_source(ls, tmp_path)
    assert rec.bindings == {"id": "x", "n": "0.665", "ok": "true", "geo.lat": "1.5",
                            "geo.deep.k": "v"}


def test_json_iterator_errors(tmp_path):
    ls = json_source(tmp_path, {"rows": {"a": 1}}, "$.rows")
    with pytest.raises(SourceError, match="array"):
        list(open_source(ls, tmp_path))
    ls = json_source(tmp_path, {"rows": {"a": 1}}, "$.rows[*]", "b.json")
    with pytest.raises(SourceError, match="non-array"):
        list(open_source(ls, tmp_path))
    ls = json_source(tmp_path, {"rows": [1, 2]}, "$.rows[*]", "c.json")
    with pytest.raises(SourceError, match="non-object"):
        list(open_source(ls, tmp_path))
    ls = json_source(tmp_path, {"rows": []}, "$..rows", "d.json")
    with pytest.raises(SourceError, match="unsupported"):
        list(open_source(ls, tmp_path))


def test_json_top_level_array(tmp_path):
    ls = json_source(tmp_path, [{"a": "1"}, {"a": "2"}], "$[*]")
    assert [r.bindings["a"] for r in open_source(ls, tmp_path)] == ["1", "2"]


@pytest.mark.parametrize("record, attrs, expected", [
    ({"enst": "E1"}, ["enst"], ["E1"]),
    ({"enst": "E1"}, ["missing"], None),
    ({"a": "1", "b": "2"}, ["b", "a"], ["2", "1"]),
    ({"a": ""}, ["a"], None),
    ({}, [], []),
])
def test_project_attributes(record, attrs, expected):
    assert project_attributes(record, attrs) == expected


def test_streaming_memory_is_bounded(tmp_path):
    path = tmp_path / "big.csv"
    n = 1_000_000
    with open(path, "w", newline="") as fh:
        fh.write("id,key,value\n")
        for i in range(n):
            fh.write(f"R{i:07d},K{i % 1000},{i * 7 % 1000 / 1000:.3f}\n")
    size = path.stat().st_size
    stats = SourceStats()
    tracemalloc.start()
    count = 0
    for _ in open_source(LogicalSource("big.csv"), tmp_path, stats):
        count += 1
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert count == stats.records == n
    assert stats.max_record_chars < 64
    # the file is ~24 MB; a streaming reader stays far below it
    assert peak < 1 << 20 < size
