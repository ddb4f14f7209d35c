import csv
import io

import numpy as np
import pytest

from rxindex.cli import main
from rxindex.harness import CSV_HEADER
from rxindex.workloads import load_workload


def _run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_full_file_flow(tmp_path, capsys):
    keys = tmp_path / "keys.bin"
    points = tmp_path / "points.bin"
    index = tmp_path / "idx.bin"
    rows_out = tmp_path / "rows.txt"

    code, out, _ = _run(capsys, "gen-keys", "--seed", "3", "--count", "500",
                        "--pattern", "uniform32", "--out", str(keys))
    assert code == 0 and "500 keys" in out

    code, out, _ = _run(capsys, "gen-lookups", "--seed", "4", "--keys", str(keys),
                        "--count", "200", "--hit-rate", "0.5", "--out", str(points))
    assert code == 0 and "200 point lookups" in out

    code, out, _ = _run(capsys, "build", "--keys", str(keys),
                        "--out", str(index))
    assert code == 0 and "nodes" in out

    code, out, _ = _run(capsys, "lookup", "--index", str(index),
                        "--lookups", str(points), "--out", str(rows_out))
    assert code == 0
    assert "200 queries: 100 hits, 100 misses" in out
    assert "nodes_visited=" in out

    lines = rows_out.read_text().splitlines()
    assert len(lines) == 200
    assert sum(1 for ln in lines if ln == "-") == 100

    # per-query rows must match a direct library answer
    _, qs = load_workload(points)
    _, ks = load_workload(keys)
    order = np.argsort(ks, kind="stable")
    for ln, q in zip(lines[:40], qs[:40]):
        want = order[np.searchsorted(ks[order], q):
                     np.searchsorted(ks[order], q, side="right")]
        got = [] if ln == "-" else [int(t) for t in ln.split()]
        assert got == sorted(int(w) for w in want)


def test_range_flow_and_kind_guards(tmp_path, capsys):
    keys = tmp_path / "keys.bin"
    ranges = tmp_path / "ranges.bin"
    index = tmp_path / "idx.bin"
    _run(capsys, "gen-keys", "--seed", "5", "--count", "300", "--out", str(keys))
    code, out, _ = _run(capsys, "gen-lookups", "--seed", "5", "--keys", str(keys),
                        "--count", "50", "--kind", "range", "--range-hits", "4",
                        "--require-exact", "--out", str(ranges))
    assert code == 0 and "50 range lookups" in out
    _run(capsys, "build", "--keys", str(keys), "--mode", "naive",
         "--primitive", "sphere", "--out", str(index))
    code, out, _ = _run(capsys, "lookup", "--index", str(index),
                        "--lookups", str(ranges))
    assert code == 0
    assert "50 queries: 200 hits, 0 misses" in out

    # feeding the wrong file kind is a clean error, not a traceback
    code, _, err = _run(capsys, "gen-lookups", "--seed", "1", "--keys", str(ranges),
                        "--count", "5", "--out", str(tmp_path / "x.bin"))
    assert code == 1 and "not keys" in err
    code, _, err = _run(capsys, "lookup", "--index", str(index),
                        "--lookups", str(keys))
    assert code == 1 and "not lookups" in err


def test_bench_all_families_csv(tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    code, out, _ = _run(capsys, "bench", "--seed", "6", "--keys", "2048",
                        "--lookups", "256", "--hit-rate", "0.75",
                        "--csv", str(out_csv))
    assert code == 0 and "4 rows" in out
    text = out_csv.read_text()
    assert text.startswith(CSV_HEADER + "\n")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["index"] for r in rows] == ["rx", "sa", "ht", "bp"]
    assert len({r["checksum"] for r in rows}) == 1
    assert all(r["experiment"] == "bench" for r in rows)


def test_bench_range_skips_hash_table(capsys):
    code, out, err = _run(capsys, "bench", "--seed", "7", "--keys", "1024",
                          "--lookups", "64", "--kind", "range",
                          "--range-hits", "4")
    assert code == 0
    assert "skipping ht" in err
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["index"] for r in rows] == ["rx", "sa", "bp"]


def test_bench_stdout_and_backend_flag(capsys):
    args = ["bench", "--index", "rx", "--seed", "8", "--keys", "512",
            "--lookups", "128"]
    _, out_a, _ = _run(capsys, "--backend", "numpy", *args)
    _, out_b, _ = _run(capsys, "--backend", "numba", *args)
    strip = lambda t: [ln.rsplit(",", 1)[0] for ln in t.splitlines()]
    assert strip(out_a) == strip(out_b)  # identical modulo wall_ms


def test_fit_cost_from_bench_csv(tmp_path, capsys):
    out_csv = tmp_path / "spans.csv"
    with open(out_csv, "w", newline="") as f:
        first = True
        for s in (1, 4, 16, 64):
            code, out, _ = _run(capsys, "bench", "--index", "rx", "--seed", "9",
                                "--keys", "16384", "--lookups", "128",
                                "--kind", "range", "--range-hits", str(s),
                                "--require-exact", "--csv", "-")
            assert code == 0
            lines = out.splitlines()
            f.write("\n".join(lines if first else lines[1:]) + "\n")
            first = False
    code, out, _ = _run(capsys, "fit-cost", "--csv", str(out_csv))
    assert code == 0
    assert "cost(primitive_tests) =" in out
    assert "R^2" in out
    # marginal cost per covered row is about one primitive test
    b = float(out.split("s * ")[1].split()[0])
    assert 0.8 < b < 1.2

    code, _, err = _run(capsys, "fit-cost", "--csv", str(out_csv),
                        "--index", "ht")
    assert code == 1 and "no matching rows" in err


def test_error_exit_codes(tmp_path, capsys):
    code, _, err = _run(capsys, "build", "--keys", str(tmp_path / "nx.bin"),
                        "--bits", "banana", "--out", str(tmp_path / "i.bin"))
    assert code == 1  # unreadable key file or bad bits, either way RxError
    keys = tmp_path / "keys.bin"
    _run(capsys, "gen-keys", "--seed", "1", "--count", "32", "--out", str(keys))
    code, _, err = _run(capsys, "build", "--keys", str(keys), "--mode", "3d",
                        "--bits", "banana", "--out", str(tmp_path / "i.bin"))
    assert code == 1 and "X,Y,Z" in err
    code, _, err = _run(capsys, "build", "--keys", str(keys), "--mode", "extended",
                        "--primitive", "sphere", "--out", str(tmp_path / "i.bin"))
    assert code == 1 and "sphere" in err.lower()

    with pytest.raises(SystemExit) as ei:
        main(["gen-keys", "--count", "4", "--out", "x.bin"])  # missing --seed
    assert ei.value.code == 2


def test_oracle_mismatch_exit_code(monkeypatch, capsys):
    import rxindex.harness as hmod
    from rxindex.errors import OracleMismatch

    def broken(*a, **k):
        raise OracleMismatch("planted")

    monkeypatch.setattr(hmod, "validate_against_oracle", broken)
    code, _, err = _run(capsys, "bench", "--index", "sa", "--seed", "1",
                        "--keys", "64", "--lookups", "16")
    assert code == 2 and "oracle mismatch" in err
