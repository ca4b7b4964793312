import csv
import json
import warnings
from collections import Counter

import pytest

from rmlkg import load_mapping, parse_mapping
from rmlkg.bench import (TestbedSpec, generate_dataset, generate_mappings, make_grid, run_benchmark,
                         write_testbed)
from rmlkg.cli import EXIT_MAPPING, EXIT_OK, EXIT_PARTIAL, EXIT_SOURCE, EXIT_USAGE, main
from rmlkg.engine import plans_for
from rmlkg.mapping import OperatorKind


def column(path, name):
    with open(path, newline="") as fh:
        return [r[name] for r in csv.DictReader(fh)]


def row_multiset(path):
    with open(path, newline="") as fh:
        return Counter(tuple(r) for r in list(csv.reader(fh))[1:])


@pytest.mark.parametrize("rate, distinct", [(0.25, 7625), (0.75, 2875), (0.0, 10_000)])
def test_distinct_tuple_counts(tmp_path, rate, distinct):
    spec = TestbedSpec(10_000, rate)
    assert spec.distinct_tuples() == distinct
    paths = generate_dataset(spec, tmp_path)
    counts = row_multiset(paths["child"])
    assert sum(counts.values()) == 10_000
    assert len(counts) == distinct
    assert set(counts.values()) <= {1, 20}
    assert sum(v for v in counts.values() if v == 20) == round(rate * 10_000)


def test_duplicate_rows_rounded_to_repeat_factor():
    spec = TestbedSpec(1010, 0.25)
    with pytest.warns(UserWarning, match="multiple of 20"):
        assert spec.duplicate_rows() == 240
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert TestbedSpec(1000, 0.2).duplicate_rows() == 200


def test_spec_validation():
    with pytest.raises(ValueError):
        TestbedSpec(duplicate_rate=1.5)
    with pytest.raises(ValueError):
        TestbedSpec(pom_count=6)
    with pytest.raises(ValueError):
        TestbedSpec(pom_kind="XYZ")


def test_generation_is_deterministic(tmp_path):
    spec = TestbedSpec(2000, 0.75, pom_kind="OJM", seed=11)
    a = generate_dataset(spec, tmp_path / "a")
    b = generate_dataset(spec, tmp_path / "b")
    for role in ("child", "parent"):
        assert a[role].read_bytes() == b[role].read_bytes()
    c = generate_dataset(TestbedSpec(2000, 0.75, pom_kind="OJM", seed=12), tmp_path / "c")
    assert a["child"].read_bytes() != c["child"].read_bytes()


@pytest.mark.parametrize("match_rate", [1.0, 0.5, 0.0])
def test_parent_shares_join_keys(tmp_path, match_rate):
    paths = generate_dataset(TestbedSpec(2000, 0.25, pom_kind="OJM", match_rate=match_rate), tmp_path)
    parent_keys = set(column(paths["parent"], "key"))
    child_keys = column(paths["child"], "key")
    matched = sum(k.startswith("K") for k in child_keys) / len(child_keys)
    assert matched == pytest.approx(match_rate, abs=0.05)
    assert all(k in parent_keys for k in child_keys if k.startswith("K"))
    assert not any(k in parent_keys for k in child_keys if k.startswith("X"))
    # parent rows carry the same duplicate structure
    assert len(row_multiset(paths["parent"])) == TestbedSpec(2000, 0.25).distinct_tuples()


@pytest.mark.parametrize("kind", ["SOM", "ORM", "OJM"])
@pytest.mark.parametrize("count", [1, 3, 5])
def test_generated_mappings_classify(kind, count):
    dis = parse_mapping(generate_mappings(kind, count))
    plans = plans_for(dis, dis.get("http://example.org/mapping/TriplesMap1"))
    assert [p.kind for p in plans] == [OperatorKind(kind)] * count
    assert len({p.predicate for p in plans}) == count


def test_grid_shape():
    grid = make_grid([1000], [0.25, 0.75], ["SOM", "ORM", "OJM"], range(1, 6))
    assert len(grid) == 30 and len({s.name for s in grid}) == 30


# ---------------------------------------------------------------- CLI


def test_cli_end_to_end(tmp_path, capsys):
    assert main(["gen-data", "--rows", "400", "--dup-rate", "0.5", "--kind", "OJM",
                 "--out", str(tmp_path)]) == EXIT_OK
    assert main(["gen-mapping", "--kind", "OJM", "--poms", "2",
                 "--out", str(tmp_path / "m.ttl")]) == EXIT_OK
    capsys.readouterr()
    rc = main(["run", "--mapping", str(tmp_path / "m.ttl"), "--output", str(tmp_path / "kg.nt"),
               "--report", str(tmp_path / "r.json")])
    assert rc == EXIT_OK
    report = json.loads((tmp_path / "r.json").read_text())
    lines = (tmp_path / "kg.nt").read_text().splitlines()
    assert report["triples_emitted"] == len(lines) == len(set(lines))
    assert report["counter_law_holds"] and report["peak_rss_bytes"] > 0
    assert {"generated", "emitted"} <= set(next(iter(report["per_predicate"].values())))
    assert "optimized:" in capsys.readouterr().out


def test_cli_gen_mapping_stdout(capsys):
    assert main(["gen-mapping", "--kind", "ORM", "--poms", "2"]) == EXIT_OK
    text = capsys.readouterr().out
    assert len(plans_for(parse_mapping(text),
                         parse_mapping(text).get("http://example.org/mapping/TriplesMap1"))) == 2


def test_cli_config_file_and_override(tmp_path):
    mapping = write_testbed(TestbedSpec(200, 0.5), tmp_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# run settings\nmapping = {mapping}\noutput = {tmp_path / 'a.nt'}\nmode = naive\n")
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "a.nt").exists()
    assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "b.nt"),
                 "--mode", "optimized", "--report", str(tmp_path / "r.json")]) == EXIT_OK
    assert json.loads((tmp_path / "r.json").read_text())["mode"] == "optimized"
    assert set((tmp_path / "a.nt").read_text().splitlines()) == set((tmp_path / "b.nt").read_text().splitlines())


def test_cli_error_classes(tmp_path, biomedical_dir):
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("colour = blue\n")
    assert main(["run", "--config", str(bad_cfg)]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE
    assert main(["run", "--mapping", str(tmp_path / "none.ttl")]) == EXIT_MAPPING
    (tmp_path / "broken.ttl").write_text("<a> rr:bogus <b> .\n")
    assert main(["run", "--mapping", str(tmp_path / "broken.ttl")]) == EXIT_MAPPING
    (tmp_path / "m.ttl").write_text(generate_mappings("SOM", 1))
    assert main(["run", "--mapping", str(tmp_path / "m.ttl")]) == EXIT_SOURCE
    partial = tmp_path / "p"
    partial.mkdir()
    (partial / "m.ttl").write_text(
        (biomedical_dir / "mapping.ttl").read_text().replace('"dataSource2.csv"', '"gone.csv"'))
    (partial / "dataSource1.csv").write_bytes((biomedical_dir / "dataSource1.csv").read_bytes())
    assert main(["run", "--mapping", str(partial / "m.ttl"), "--output", str(partial / "o.nt")]) == EXIT_PARTIAL
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_biomedical_mapping_via_cli(biomedical_dir, tmp_path):
    out = tmp_path / "kg.nt"
    assert main(["run", "--mapping", str(biomedical_dir / "mapping.ttl"), "--output", str(out)]) == EXIT_OK
    from oracle import expected_graph
    assert set(out.read_text().splitlines(keepends=True)) == expected_graph(
        load_mapping(biomedical_dir / "mapping.ttl"))


# ---------------------------------------------------------------- benchmark runner


def test_run_benchmark_small(tmp_path):
    grid = [TestbedSpec(400, 0.25, pom_kind="ORM", pom_count=2)]
    report = run_benchmark(grid, ("optimized", "naive"), repetitions=2, workdir=tmp_path)
    assert [c["status"] for c in report.cells] == ["OK", "OK"]
    for cell in report.cells:
        assert cell["counter_law_holds"] and cell["outputs_equal"]
        assert len(cell["runs"]) == 2 and cell["spec"]["seed"] == 0
    opt = report.cells[0]
    assert opt["total_ops"] == opt["predicted_low"] == opt["predicted_high"]
    json_path, csv_path = report.write(tmp_path / "out" / "rep")
    assert json.loads(json_path.read_text())["repetitions"] == 2
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["mode"] for r in rows] == ["optimized", "naive"]


def test_run_benchmark_timeout(tmp_path):
    report = run_benchmark([TestbedSpec(2000, 0.25, pom_kind="OJM")], ("naive",),
                           timeout=0.05, workdir=tmp_path)
    assert report.cells[0]["status"] == "TIMEOUT"
    assert "wall_time" not in report.cells[0]


def test_cli_bench(tmp_path, capsys):
    rc = main(["bench", "--rows", "200", "--dup-rates", "0.5", "--kinds", "SOM", "--poms", "1-2",
               "--modes", "optimized", "--reps", "1", "--workdir", str(tmp_path)])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert out.count(": OK") == 2
    assert (tmp_path / "report.json").exists() and (tmp_path / "report.csv").exists()
