import json
import os
import shutil
from pathlib import Path

import pytest

from xlkp.cli import build_parser, effective_config, main, parse_args

GOLDEN = Path(__file__).parent / "golden"
SUBCOMMANDS = ["ingest", "train-retriever", "build-index", "retrieve", "mine", "format-codemix", "generate",
               "evaluate", "rgit", "make-fixture"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def fx_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    assert main(["make-fixture", "--out", str(d), "--n-en", "300", "--n-par", "40", "--n-np", "60", "--n-dev", "40"]) == 0
    return d


@pytest.fixture(scope="module")
def trained(fx_dir, tmp_path_factory):
    d = tmp_path_factory.mktemp("model")
    argv = ["train-retriever", "--xx-corpus", fx_dir / "xx.jsonl", "--en-corpus", fx_dir / "en.jsonl",
            "--pairs", fx_dir / "par.jsonl", "--epochs", "3", "--dim", "32", "--out", d / "m.bin"]
    assert main([str(a) for a in argv]) == 0
    return d / "m.bin"


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_lists_defaults(command, capsys):
    code, out, _ = run(capsys, command, "--help")
    assert code == 0 and "(default:" in out


def test_help_shows_method_defaults(capsys):
    _, rgit_help, _ = run(capsys, "rgit", "--help")
    for flag, value in (("--tau", "5.0"), ("--m", "5"), ("--iterations", "6"), ("--negatives", "100")):
        assert f"{flag}" in rgit_help and f"(default: {value})" in rgit_help
    _, mine_help, _ = run(capsys, "mine", "--help")
    assert "(default: 1.03)" in mine_help


def test_errors_are_single_json_lines(capsys, tmp_path):
    cases = [
        (["evaluate", "--bogus"], "usage", 2),
        (["evaluate", "--gold", tmp_path / "none.jsonl", "--pred", "x"], "missing_file", 1),
        (["evaluate", "--pred", "x"], "usage", 2),
        ([], "usage", 2),
    ]
    for argv, code, status in cases:
        got, out, err = run(capsys, *argv)
        assert got == status
        lines = err.strip().splitlines()
        assert len(lines) == 1 and json.loads(lines[0])["error"] == code


def test_malformed_input_reports_line(capsys, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "lang": "DE", "text": "t", "keyphrases": []}\n{oops\n')
    code, _, err = run(capsys, "ingest", "--input", bad, "--out", tmp_path / "o.jsonl")
    assert code == 1 and "line 2" in json.loads(err)["message"]


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 7, "rgit": {"tau": 10, "m": 1}, "mine": {"threshold": 2.0}}))
    args = parse_args(["rgit", "--config", str(cfg), "--m", "3"])
    assert (args.seed, args.tau, args.m, args.iterations) == (7, 10.0, 3, 6)
    monkeypatch.setenv("XLKP_CONFIG", str(cfg))
    assert parse_args(["mine"]).threshold == 2.0
    assert parse_args(["mine", "--threshold", "1.5"]).threshold == 1.5


@pytest.mark.parametrize(
    "content, fragment",
    [({"nonsense": 1}, "unknown config key"), ({"rgit": {"tau": "high"}}, "expected a number"),
     ({"rgit": {"generator": "gpt"}}, "not one of"), ({"rgit": {"threshold": 1}}, "unknown config key")],
)
def test_config_schema_violations(tmp_path, capsys, content, fragment):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(content))
    code, _, err = run(capsys, "rgit", "--config", cfg)
    rec = json.loads(err)
    assert code == 2 and rec["error"] == "config_schema" and fragment in rec["message"]


def test_written_config_reproduces_the_arguments(fx_dir, tmp_path):
    args = parse_args(["mine", "--threshold", "1.2", "--out", str(tmp_path / "p.jsonl")])
    path = tmp_path / "eff.json"
    path.write_text(json.dumps(effective_config(args)))
    again = parse_args(["mine", "--config", str(path)])
    assert effective_config(again) == effective_config(args)


def test_evaluate_identical_files_is_perfect(fx_dir, capsys):
    code, out, _ = run(capsys, "evaluate", "--gold", fx_dir / "xx.jsonl", "--pred", fx_dir / "xx.jsonl")
    assert code == 0
    assert out.splitlines()[-1].split()[1:4] == ["100.00", "100.00", "100.00"]


def test_retrieve_on_small_index_is_flagged(tmp_path, capsys, trained, fx_dir):
    en = tmp_path / "en3.jsonl"
    en.write_text("".join((fx_dir / "en.jsonl").read_text(encoding="utf-8").splitlines(keepends=True)[:3]), encoding="utf-8")
    assert run(capsys, "build-index", "--en-corpus", en, "--model", trained, "--out", tmp_path / "i.bin")[0] == 0
    code, out, err = run(capsys, "retrieve", "--index", tmp_path / "i.bin", "--model", trained,
                         "--queries", fx_dir / "xx.jsonl", "--k", "5")
    assert code == 0
    lines = [json.loads(line) for line in out.splitlines()]
    assert all(len(rec["hits"]) == 3 and rec["truncated"] for rec in lines)
    assert set(lines[0]) == {"xx_id", "hits", "truncated"} and set(lines[0]["hits"][0]) == {"en_id", "score"}


def test_subcommands_are_idempotent(tmp_path, trained, fx_dir, capsys):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        assert run(capsys, "mine", "--xx-corpus", fx_dir / "xx.jsonl", "--en-corpus", fx_dir / "en.jsonl",
                   "--model", trained, "--out", d / "mined.jsonl")[0] == 0
        assert run(capsys, "train-retriever", "--xx-corpus", fx_dir / "xx.jsonl", "--en-corpus", fx_dir / "en.jsonl",
                   "--pairs", d / "mined.jsonl", "--pairs-kind", "PSEUDO", "--epochs", "1", "--dim", "16",
                   "--out", d / "m.bin")[0] == 0
        outs.append(((d / "mined.jsonl").read_bytes(), (d / "m.bin").read_bytes()))
    assert outs[0] == outs[1]
    assert json.loads((tmp_path / "a" / "mined.jsonl.config.json").read_text())["threshold"] == 1.03


def test_ingest_normalizes(tmp_path, capsys):
    src = tmp_path / "in.jsonl"
    src.write_text(json.dumps({"id": "a", "lang": "FR", "text": "t", "keyphrases": ["Ours", "ours"]}) + "\n")
    code, out, _ = run(capsys, "ingest", "--input", src, "--lang", "DE", "--out", tmp_path / "o.jsonl")
    summary = json.loads(out)
    assert code == 0 and summary["duplicate_keyphrases"] == 1 and summary["language_mismatches"] == 1
    assert json.loads((tmp_path / "o.jsonl").read_text())["keyphrases"] == ["ours"]


def test_rgit_writes_figure_and_summary(tmp_path, fx_dir, capsys):
    code, out, _ = run(capsys, "rgit", "--xx-corpus", fx_dir / "xx.jsonl", "--en-corpus", fx_dir / "en.jsonl",
                       "--par", fx_dir / "par.jsonl", "--np", fx_dir / "np.jsonl", "--dev", fx_dir / "dev.jsonl",
                       "--iterations", "1", "--m", "1", "--epochs", "2", "--dim", "16", "--out", tmp_path / "run")
    assert code == 0 and "final_recall" in json.loads(out)
    assert (tmp_path / "run" / "trajectory.png").stat().st_size > 0
    assert json.loads((tmp_path / "run" / "config.json").read_text())["tau"] == 5.0


def test_rgit_external_waits_for_predictions(tmp_path, fx_dir, capsys):
    code, _, err = run(capsys, "rgit", "--xx-corpus", fx_dir / "xx.jsonl", "--en-corpus", fx_dir / "en.jsonl",
                       "--par", fx_dir / "par.jsonl", "--generator", "external", "--epochs", "1", "--dim", "16",
                       "--out", tmp_path / "run")
    assert code == 3 and json.loads(err)["error"] == "awaiting_predictions"


# --- golden pipeline -------------------------------------------------------------------------


def test_pipeline_matches_golden(golden_pipeline, tmp_path):
    produced = golden_pipeline
    if os.environ.get("XLKP_REGEN_GOLDEN"):
        GOLDEN.mkdir(exist_ok=True)
        for name, path in produced.items():
            shutil.copyfile(path, GOLDEN / name)
    for name, path in produced.items():
        assert path.read_bytes() == (GOLDEN / name).read_bytes(), name
    assert (produced["report.txt"].parent / "f1_by_language.png").exists()


def test_parser_covers_every_stage():
    sub = next(a for a in build_parser()._actions if a.dest == "command")
    assert sorted(sub.choices) == sorted(SUBCOMMANDS)
