from __future__ import annotations

import json

import numpy as np
import pytest

from emsql.cli import main
from emsql.maintenance import SuffStats, model_update, stats_from_model
from emsql.models import GmmParams
from emsql.models.base import script_text
from emsql.relation import load_csv


@pytest.fixture
def ws(tmp_path):
    return tmp_path


def run(ws, *argv):
    return main(["--workspace", str(ws), *argv])


def write(path, text):
    path.write_text(text)
    return str(path)


class TestLoad:
    def test_vector_rows(self, ws, capsys):
        csv = write(ws / "v.csv", 'id,x\n1,"[1.0,2.0]"\n2,"[3.0,4.0]"\n')
        assert run(ws, "load", "v", csv) == 0
        assert capsys.readouterr().out.strip() == "2"
        cfg = json.loads((ws / "workspace.json").read_text())
        assert cfg["tables"] == {"v": "data/v.csv"}

    def test_header_only(self, ws, capsys):
        assert run(ws, "load", "e", write(ws / "e.csv", "id,x\n")) == 0
        assert capsys.readouterr().out.strip() == "0"

    def test_malformed_vector(self, ws, capsys):
        csv = write(ws / "bad.csv", 'id,x\n1,"[1.0,2.0]"\n2,"[3.0,oops]"\n')
        assert run(ws, "load", "bad", csv) == 1
        assert "row 2" in capsys.readouterr().err


class TestRun:
    def test_closure(self, ws, capsys):
        run(ws, "load", "e", write(ws / "e.csv", "f,t\n1,2\n2,3\n3,4\n"))
        capsys.readouterr()
        out = ws / "tc.csv"
        script = write(ws / "tc.sql", script_text("transitive_closure.sql"))
        assert run(ws, "run", script, "--out", str(out)) == 0
        rows = set(load_csv(str(out)).rows())
        assert rows == {(1, 2), (2, 3), (3, 4), (1, 3), (2, 4), (1, 4)}

    def test_gmm_script_with_trace(self, ws, capsys):
        rng = np.random.default_rng(0)
        xs = np.concatenate([rng.normal(0, 1, 30), rng.normal(6, 1, 30)])
        write(ws / "x.csv", "id,x\n" + "".join(f"{i},{float(v)!r}\n" for i, v in enumerate(xs, 1)))
        write(ws / "init.csv", "k,pie,mean,cov\n1,0.5,-1.0,2.0\n2,0.5,1.0,2.0\n")
        run(ws, "load", "x", str(ws / "x.csv"))
        run(ws, "load", "init_para", str(ws / "init.csv"))
        script = write(ws / "gmm.sql", script_text("gmm_1d.sql"))
        trace = ws / "trace.csv"
        capsys.readouterr()
        assert run(ws, "run", script, "--param", "n=60", "--trace", str(trace)) == 0
        out = capsys.readouterr().out
        assert "(2 rows," in out
        lines = trace.read_text().strip().splitlines()
        assert lines[0] == "iteration,rows,changed,millis" and 2 <= len(lines) <= 11

    def test_double_update_is_a_diagnostic(self, ws, capsys):
        src = "with r(a) as ((select 1) union by update a (select a from r) union by update a (select a from r)) select * from r"
        assert run(ws, "run", write(ws / "bad.sql", src)) == 1
        assert "MultipleUnionByUpdate" in capsys.readouterr().err

    def test_bad_param(self, ws, capsys):
        assert run(ws, "run", write(ws / "q.sql", "select 1"), "--param", "oops") == 1


def blobs_workspace(ws, capsys):
    assert run(ws, "generate", "gaussian", "--n", "80", "-K", "2", "--hi", "50", "--spread", "0.5", "--seed", "3", "--register", "pts") == 0
    capsys.readouterr()


class TestModels:
    def test_train_assign_eval(self, ws, capsys):
        blobs_workspace(ws, capsys)
        assert run(ws, "train", "g", "--table", "pts", "-K", "2", "--iterations", "15", "--seed", "0") == 0
        assert "iteration 1: loglik" in capsys.readouterr().out
        clu = ws / "clu.csv"
        assert run(ws, "assign", "g", "pts", "--out", str(clu)) == 0
        capsys.readouterr()
        assert run(ws, "eval", str(clu), "pts") == 0
        assert capsys.readouterr().out.splitlines() == ["purity,1", "nmi,1"]

    def test_infer_single_component(self, ws, capsys):
        blobs_workspace(ws, capsys)
        run(ws, "train", "one", "--table", "pts", "-K", "1", "--iterations", "2")
        out = ws / "r.csv"
        assert run(ws, "infer", "one", "pts", "--out", str(out)) == 0
        assert np.all(np.asarray(load_csv(str(out)).column("p")) == 1.0)

    def test_eval_perfect(self, ws, capsys):
        a = write(ws / "a.csv", "id,k\n1,1\n2,2\n3,2\n")
        b = write(ws / "b.csv", "id,label\n1,7\n2,9\n3,9\n")
        assert run(ws, "eval", a, b) == 0
        assert capsys.readouterr().out.splitlines() == ["purity,1", "nmi,1"]

    def test_unknown_table(self, ws, capsys):
        assert run(ws, "train", "g", "--table", "missing", "-K", "2") == 1


class TestGenerate:
    def test_even_and_reproducible(self, ws, capsys):
        a, b = ws / "a.csv", ws / "b.csv"
        assert run(ws, "generate", "gaussian", "--n", "100", "-K", "10", "--seed", "5", "--out", str(a)) == 0
        assert run(ws, "generate", "gaussian", "--n", "100", "-K", "10", "--seed", "5", "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()
        labels = np.asarray(load_csv(str(a)).column("label"))
        assert np.bincount(labels).tolist() == [0] + [10] * 10

    def test_linear_schema(self, ws, capsys):
        out = ws / "l.csv"
        run(ws, "generate", "linear", "--n", "10", "--d", "2", "-K", "2", "--out", str(out))
        assert out.read_text().splitlines()[0] == "id,x,y,label"

    def test_flags_after_subcommand(self, ws, capsys):
        assert main(["generate", "rfm", "--n", "5", "--seed", "1", "--workspace", str(ws)]) == 0

    def test_usage_error(self, ws):
        with pytest.raises(SystemExit) as ei:
            main(["--workspace", str(ws), "frobnicate"])
        assert ei.value.code == 2


class TestMaintenanceCommands:
    def setup(self, ws, capsys, budget="0", T="0"):
        blobs_workspace(ws, capsys)
        run(ws, "train", "g", "--table", "pts", "-K", "2", "--iterations", "15", "--seed", "0")
        assert run(ws, "attach", "pts", "g", "--strategy", "entropy", "--budget", budget, "-T", T) == 0
        capsys.readouterr()
        rng = np.random.default_rng(1)
        rows = "".join(f'{100 + i},"[{float(a)!r},{float(b)!r}]",1\n' for i, (a, b) in enumerate(rng.uniform(0, 50, (10, 2))))
        return write(ws / "new.csv", "id,x,label\n" + rows)

    def view(self, ws):
        return GmmParams.from_relation(load_csv(str(ws / "data" / "g.view.csv")))

    def stats(self, ws):
        return SuffStats.from_relation(load_csv(str(ws / "data" / "g.stats.csv")))

    def test_insert_is_line_two_update(self, ws, capsys):
        new = self.setup(ws, capsys)
        before = self.view(ws)
        pts = load_csv(str(ws / "data" / "pts.csv"))
        assert run(ws, "insert", "pts", new) == 0
        out = capsys.readouterr().out
        assert "rows: 10" in out and "table size: 90" in out and "loglik:" in out
        rows = load_csv(new)
        expect, _ = model_update(before, stats_from_model(before, pts), rows, rows, T=0)
        assert self.view(ws).max_abs_diff(expect) < 1e-12

    def test_delete_restores_stats(self, ws, capsys):
        new = self.setup(ws, capsys)
        start = self.stats(ws)
        run(ws, "insert", "pts", new)
        assert run(ws, "delete", "pts", *[str(100 + i) for i in range(10)]) == 0
        assert self.stats(ws).max_abs_diff(start) < 1e-9
        assert len(load_csv(str(ws / "data" / "pts.csv"))) == 80

    def test_unbound_table(self, ws, capsys):
        new = self.setup(ws, capsys)
        run(ws, "load", "other", new)
        before = (ws / "data" / "g.view.csv").read_bytes()
        assert run(ws, "insert", "other", new) == 0
        assert "maintenance" not in capsys.readouterr().out
        assert (ws / "data" / "g.view.csv").read_bytes() == before

    def test_attach_needs_view(self, ws, capsys):
        blobs_workspace(ws, capsys)
        assert run(ws, "attach", "pts", "nope") == 1
