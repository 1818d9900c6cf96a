import csv
import json

import pytest

from hspa.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def parse_st(out):
    return dict(line.split(": ", 1) for line in out.strip().splitlines())


class TestStEval:
    def test_uniform(self, capsys):
        code, cap = run(capsys, "st-eval", "0.3,0.3,0.3")
        assert code == 0
        fields = parse_st(cap.out)
        assert [float(w) for w in fields["weights"].split(",")] == pytest.approx([1 / 3] * 3, abs=1e-15)
        assert fields["support_size"] == "3"
        assert fields["support"] == "0,1,2"

    def test_two_zero(self, capsys):
        code, cap = run(capsys, "st-eval", "2,0")
        fields = parse_st(cap.out)
        assert code == 0
        assert fields["weights"] == "1,0"
        assert fields["threshold"] == "1"

    def test_seventeen_digits(self, capsys):
        _, cap = run(capsys, "st-eval", "0.5,0.2,0.1")
        w = parse_st(cap.out)["weights"].split(",")[0]
        assert abs(float(w) - (0.5 + 1 / 15)) < 1e-15
        assert len(w.replace(".", "").lstrip("0")) == 17

    def test_file_input(self, capsys, tmp_path):
        f = tmp_path / "v.txt"
        f.write_text("1.0\n0.0\n")
        code, cap = run(capsys, "st-eval", "--file", str(f))
        assert code == 0 and parse_st(cap.out)["weights"] == "1,0"

    def test_topk_flag(self, capsys):
        _, cap = run(capsys, "st-eval", "0.3,0.3,0.3", "--k", "2")
        assert parse_st(cap.out)["support"] == "0,1"

    @pytest.mark.parametrize("arg", ["", "1,x", "nan,1"])
    def test_parse_failure(self, capsys, arg):
        code, cap = run(capsys, "st-eval", arg)
        assert code == 2
        assert "error" in cap.err


class TestDispatch:
    def test_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        assert "sr-demo" in capsys.readouterr().out

    @pytest.mark.parametrize("sub", ["st-eval", "gradcheck", "flatness", "support-bound", "sr-demo", "bench"])
    def test_subcommand_help(self, capsys, sub):
        with pytest.raises(SystemExit) as exc:
            main([sub, "--help"])
        assert exc.value.code == 0
        assert "--seed" in capsys.readouterr().out

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["gradcheck", "--bogus"])
        assert exc.value.code == 2

    def test_bad_threads(self):
        with pytest.raises(SystemExit) as exc:
            main(["gradcheck", "--threads", "0"])
        assert exc.value.code == 2


def test_gradcheck(capsys):
    code, cap = run(capsys, "gradcheck", "--trials", "1000", "--n", "32", "--seed", "1")
    assert code == 0
    assert cap.out.startswith("gradcheck PASS")


def test_flatness_csv(capsys, tmp_path):
    code, cap = run(capsys, "flatness", "--lengths", "16,64", "--trials", "500", "--out", "f.csv",
                    "--output-dir", str(tmp_path))
    assert code == 0
    rows = list(csv.reader((tmp_path / "f.csv").open()))
    assert rows[0] == ["length", "mean_max_prob", "mean_entropy", "mean_support_st"]
    assert [r[0] for r in rows[1:]] == ["16", "64"]


def test_support_bound_csv(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, cap = run(capsys, "support-bound", "--n", "16", "--k", "1,2,4", "--trials", "2000", "--out", "b.csv")
    assert code == 0
    assert "PASS" in cap.out
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 4


def test_support_bound_bad_k(capsys):
    code, _ = run(capsys, "support-bound", "--n", "4", "--k", "4", "--trials", "1000")
    assert code == 2


def test_sr_demo(capsys, tmp_path):
    code, cap = run(capsys, "sr-demo", "--input", "corpus:checkerboard", "--scale", "2", "--mode", "hspa_topk",
                    "--k", "128", "--search", "window:15", "--seed", "7", "--out", "out.ppm",
                    "--metrics", "metrics.json", "--output-dir", str(tmp_path))
    assert code == 0
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert {"psnr_db", "ssim", "mode", "timing_ms", "mean_support_size"} <= set(m)
    assert m["mode"] == "hspa_topk"
    assert (tmp_path / "out.ppm").read_bytes().startswith(b"P6\n64 64\n255\n")


def test_sr_demo_file_input(capsys, tmp_path):
    main(["corpus", "--dir", str(tmp_path)])
    code, _ = run(capsys, "sr-demo", "--input", str(tmp_path / "brick.pgm"), "--mode", "nla",
                  "--search", "window:9", "--degradation", "blur_bicubic", "--out", str(tmp_path / "o.pgm"))
    assert code == 0
    assert (tmp_path / "o.pgm").exists()


@pytest.mark.parametrize("argv", [
    ["sr-demo", "--input", "corpus:nothing"],
    ["sr-demo", "--input", "corpus:brick", "--search", "grid"],
    ["sr-demo", "--input", "/nonexistent.ppm"],
])
def test_sr_demo_errors(capsys, argv):
    code, cap = run(capsys, *argv)
    assert code == 2


def test_bench(capsys, tmp_path):
    code, cap = run(capsys, "bench", "--ops", "exact,topk", "--lengths", "512", "--reps", "3",
                    "--out", str(tmp_path / "b.csv"))
    assert code == 0
    assert "machine-dependent" in cap.out
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 3


def test_bench_unknown_op(capsys):
    code, _ = run(capsys, "bench", "--ops", "sortmax")
    assert code == 2
