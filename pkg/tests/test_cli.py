import csv
import json
import subprocess
import sys
from fractions import Fraction as F

import pytest

from auctionlab import dist, io as aio, model
from auctionlab.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def correlated_file(tmp_path):
    path = tmp_path / "corr.json"
    assert run("generate", "correlated", "-m", 2, "-n", 2, "-k", 2, "--seed", 1, "--out", path) == 0
    return path


@pytest.fixture
def mhr_file(tmp_path):
    path = tmp_path / "mhr.json"
    assert run("generate", "product-mhr", "-m", 2, "-n", 3, "-L", 6, "--seed", 2, "--out", path) == 0
    return path


# ----------------------------------------------------------------- io layer


@pytest.mark.parametrize("q, text", [(F(1, 4), "0.25"), (F(1, 3), "1/3"), (F(7), "7"), (F(-5, 8), "-0.625")])
def test_format_number(q, text):
    assert aio.format_number(q) == text


def test_instance_round_trip_is_exact(tmp_path):
    inst = model.product([F(13, 3), 40], [1, 2],
                         [[dist.uniform([1, 2]), dist.equal_revenue(9)], [dist.point_mass(F(5, 7)), dist.uniform([3])]])
    path = tmp_path / "i.json"
    aio.save_instance(inst, path)
    back = aio.load_instance(path)
    assert back.budgets == inst.budgets and back.demands == inst.demands
    assert back.edges == inst.edges
    assert aio.dumps_instance(back) == path.read_text()


def test_correlated_round_trip(correlated_file):
    inst = aio.load_instance(correlated_file)
    assert isinstance(inst, model.CorrelatedInstance)
    assert aio.dumps_instance(inst) == correlated_file.read_text()
    data = json.loads(correlated_file.read_text())
    assert data["kind"] == "correlated" and all(isinstance(b["budget"], str) for b in data["bidders"])


def test_malformed_instance_is_a_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "product", "n_items": 1, "bidders": [{"budget": "1", "demand": 1}],
                               "edge_distributions": [[{"support": ["1", "2"], "pmf": ["0.5", "0.6"]}]]}))
    assert run("solve", bad, "--lp", "lprev") == 2
    assert "error" in capsys.readouterr().err
    assert run("solve", tmp_path / "missing.json", "--lp", "lprev") == 2


# ----------------------------------------------------------------- commands


@pytest.mark.parametrize("kind", ["correlated", "product-mhr", "product-regular", "equal-revenue"])
def test_generate_every_kind(kind, tmp_path):
    path = tmp_path / "x.json"
    assert run("generate", kind, "-m", 2, "-n", 2, "-L", 8, "--seed", 3, "--out", path) == 0
    inst = aio.load_instance(path)
    assert inst.n_items == 2


@pytest.mark.parametrize("flag, value", [("-m", 0), ("-n", 51), ("-k", 65), ("-L", 10_001)])
def test_generate_caps(flag, value, tmp_path):
    assert run("generate", "correlated", flag, value, "--out", tmp_path / "x.json") == 2


def test_solve_writes_csv_and_dump(correlated_file, tmp_path, capsys):
    out, dump = tmp_path / "lp1.csv", tmp_path / "lp1.txt"
    assert run("solve", correlated_file, "--lp", "lp1", "--out", out, "--dump-lp", dump) == 0
    objective = float(capsys.readouterr().out.strip())
    table = rows(out)
    assert list(table[0]) == ["bidder", "item", "type", "prob", "value", "x", "price"]
    assert objective > 0 and dump.read_text()


@pytest.mark.parametrize("lp", ["lprev", "lp2", "lpseq"])
def test_solve_product_programs(lp, mhr_file, tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run("solve", mhr_file, "--lp", lp, "--out", out) == 0
    assert float(capsys.readouterr().out) > 0
    assert list(rows(out)[0])[:6] == ["bidder", "item", "value", "f", "phi", "x"]


def test_solve_rejects_wrong_kind(correlated_file, mhr_file):
    assert run("solve", correlated_file, "--lp", "lp2") == 2
    assert run("solve", mhr_file, "--lp", "lp1") == 2


def test_solve_simplex_matches_highs(mhr_file, capsys):
    run("solve", mhr_file, "--lp", "lp2")
    a = float(capsys.readouterr().out)
    run("solve", mhr_file, "--lp", "lp2", "--method", "simplex")
    assert float(capsys.readouterr().out) == pytest.approx(a, abs=1e-6)


def test_run_allpay_and_outcome_log(correlated_file, tmp_path):
    out, log = tmp_path / "est.csv", tmp_path / "log.csv"
    assert run("run", correlated_file, "--mechanism", "allpay", "--trials", 500, "--seed", 4,
               "--out", out, "--log-outcomes", log) == 0
    (est,) = rows(out)
    assert est["mechanism"] == "allpay" and est["bound"] == "LP1/4" and est["bound_passed"] == "1"
    outcomes = rows(log)
    assert list(outcomes[0]) == ["trial", "bidder", "item", "price", "sold"]
    assert {r["trial"] for r in outcomes} == {str(t) for t in range(500)}


def test_run_postedprice_log_is_consistent(mhr_file, tmp_path):
    out, log = tmp_path / "est.csv", tmp_path / "log.csv"
    assert run("run", mhr_file, "--mechanism", "postedprice", "--trials", 2000, "--seed", 5,
               "--out", out, "--log-outcomes", log) == 0
    (est,) = rows(out)
    sold = {}
    for r in rows(log):
        if r["sold"] == "1":
            key = (r["trial"], r["item"])
            assert key not in sold
            sold[key] = float(r["price"])
    assert sum(sold.values()) / 2000 == pytest.approx(float(est["mean"]), abs=1e-9)


@pytest.mark.parametrize("mechanism", ["postedprice", "general"])
def test_run_product_mechanisms(mechanism, mhr_file, tmp_path):
    out = tmp_path / "est.csv"
    assert run("run", mhr_file, "--mechanism", mechanism, "--trials", 20_000, "--out", out) == 0
    (est,) = rows(out)
    assert est["bound_passed"] == "1" and float(est["mean"]) > 0


def test_run_rejects_non_regular_postedprice(tmp_path):
    path = tmp_path / "bad.json"
    bad = dist.DiscreteDistribution((1, 2, 3), (F(45, 100), F(10, 100), F(45, 100)))
    aio.save_instance(model.product([100], [1], [[bad]]), path)
    assert run("run", path, "--mechanism", "postedprice", "--trials", 10) == 2


def test_audit_command(correlated_file, tmp_path, capsys):
    out = tmp_path / "audit.csv"
    assert run("audit", correlated_file, "--trials", 5000, "--out", out) == 0
    assert "PASS" in capsys.readouterr().out and rows(out)


def test_demo_command(tmp_path, capsys):
    out = tmp_path / "demo.csv"
    assert run("demo", "--n", 50, "--trials", 500, "--out", out) == 0
    text = capsys.readouterr().out
    assert "ratio" in text and rows(out)[0]["n"] == "50"
    assert run("demo", "--n", 1) == 2
    assert run("demo", "--epsilon", 1.5) == 2


def test_report_command(mhr_file, tmp_path, capsys):
    out = tmp_path / "report.csv"
    assert run("report", mhr_file, "--trials", 20_000, "--out", out) == 0
    assert "[PASS]" in capsys.readouterr().out
    assert all(r["passed"] == "1" for r in rows(out))


def test_argparse_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "x.json", "--mechanism", "allpay", "--trials", "0"])
    assert exc.value.code == 2


def test_module_entry_point_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "auctionlab", "solve", str(tmp_path / "none.json"), "--lp", "lp1"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "cannot read" in proc.stderr


# ---------------------------------------------------------- reproducibility


def test_env_seed_and_flag_precedence(mhr_file, tmp_path, monkeypatch):
    a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
    monkeypatch.setenv("AUCTIONLAB_SEED", "77")
    run("run", mhr_file, "--mechanism", "postedprice", "--trials", 1000, "--out", a)
    run("run", mhr_file, "--mechanism", "postedprice", "--trials", 1000, "--seed", 77, "--out", b)
    run("run", mhr_file, "--mechanism", "postedprice", "--trials", 1000, "--seed", 78, "--out", c)
    assert rows(a)[0]["seed"] == "77"
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    monkeypatch.setenv("AUCTIONLAB_SEED", "not-a-number")
    assert run("run", mhr_file, "--mechanism", "postedprice", "--trials", 10) == 2


def test_thread_count_does_not_change_output(mhr_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("run", mhr_file, "--mechanism", "postedprice", "--trials", 120_000, "--seed", 6, "--out", a)
    run("run", mhr_file, "--mechanism", "postedprice", "--trials", 120_000, "--seed", 6, "--threads", 3, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_shuffle_is_seeded(correlated_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        run("run", correlated_file, "--mechanism", "allpay", "--shuffle", "--trials", 300, "--seed", 8,
            "--log-outcomes", path)
    assert a.read_bytes() == b.read_bytes()
