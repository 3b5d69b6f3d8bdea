import json
import sqlite3
import subprocess
import sys

import pytest
import yaml

from layerlens.cli import main
from layerlens.probing import read_results
from layerlens.synth import color_prototypes, shapes_dataset, stroop_images

PAPER_COLUMNS = ["name", "architecture", "image_path", "prompt", "label", "layer", "tensor_dim", "tensor"]
TINY_GRID = {"learning_rate": [0.01, 0.05, 0.1], "num_epochs": [2, 3, 4], "batch_size": [8, 16, 32]}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_config(path, **fields):
    base = {
        "architecture": "toy-vlm",
        "model_path": "toy-vlm",
        "model": [{"torch_dtype": "auto"}],
        "output_db": "out/acts.db",
        "input_dir": "images",
        "prompt": "Describe the color in this image in one word.",
        "modules": ["blocks.0.norm", "blocks.1.norm"],
    }
    base.update(fields)
    path.write_text(yaml.safe_dump(base, sort_keys=False))
    return path


# -- extract / modules -------------------------------------------------------

def test_extract_creates_store(capsys, toy_config_file, tmp_path):
    code, out, err = run(capsys, "extract", "--config", str(toy_config_file))
    assert code == 0 and err == ""
    db = tmp_path / "output" / "toy.db"
    assert "wrote 6 records" in out
    cols = [r[1] for r in sqlite3.connect(db).execute("PRAGMA table_info(tensors)")]
    assert cols == PAPER_COLUMNS + ["dtype"]


def test_legacy_config_flag(capsys, toy_config_file, tmp_path):
    code, _, err = run(capsys, "--config", str(toy_config_file))
    assert code == 0 and err == ""
    assert (tmp_path / "output" / "toy.db").exists()


def test_output_override(capsys, toy_config_file, tmp_path):
    code, _, _ = run(capsys, "extract", "--config", str(toy_config_file), "--output", str(tmp_path / "x.db"))
    assert code == 0 and (tmp_path / "x.db").exists()
    assert not (tmp_path / "output" / "toy.db").exists()


@pytest.mark.parametrize("argv", [
    ["modules", "--config", "{cfg}"],
    ["extract", "--config", "{cfg}", "--log-named-modules"],
    ["--config", "{cfg}", "--log-named-modules"],
])
def test_modules_lists_layers_without_inference(capsys, toy_config_file, tmp_path, argv):
    code, out, err = run(capsys, *[a.format(cfg=toy_config_file) for a in argv])
    assert code == 0 and err == ""
    names = out.split()
    assert "blocks.0.norm" in names and "head" in names and "shared" in names
    assert not (tmp_path / "output").exists()


def test_extract_without_config_is_usage_error(capsys):
    code, _, err = run(capsys, "extract")
    assert code == 2
    assert "usage:" in err and "--config" in err


@pytest.mark.parametrize("argv", [["frobnicate"], [], ["plot", "--input"]])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_missing_config_file(capsys, tmp_path):
    code, out, err = run(capsys, "extract", "--config", str(tmp_path / "nope.yaml"))
    assert code == 1
    assert len(err.strip().splitlines()) == 1 and "nope.yaml" in err


def test_layer_typo_reports_suggestion(capsys, tmp_path):
    cfg = write_config(tmp_path / "c.yaml", modules=["blocks.0.nrom"])
    (tmp_path / "images").mkdir()
    code, _, err = run(capsys, "extract", "--config", str(cfg))
    assert code == 1
    assert "blocks.0.norm" in err and len(err.strip().splitlines()) == 1


def test_help_exits_zero(capsys):
    assert run(capsys, "--help")[0] == 0


def test_python_dash_m_entry_point(toy_config_file):
    proc = subprocess.run([sys.executable, "-m", "layerlens", "modules", "--config", str(toy_config_file)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stderr == ""
    assert "head" in proc.stdout.split()


# -- probe -------------------------------------------------------------------

@pytest.fixture
def shapes_store(tmp_path, capsys):
    labels = shapes_dataset(tmp_path / "shapes", n=30, seed=1)
    cfg = write_config(tmp_path / "shapes.yaml", input_dir="shapes/images", probe_grid=TINY_GRID)
    assert run(capsys, "extract", "--config", str(cfg))[0] == 0
    return cfg, labels


def test_probe_default_layers(capsys, shapes_store, tmp_path):
    cfg, labels = shapes_store
    out_csv = tmp_path / "probe.csv"
    code, out, err = run(capsys, "probe", "--config", str(cfg), "--labels", str(labels),
                         "--splits", "size", "shape", "--output", str(out_csv), "--seed", "7")
    assert code == 0 and err == ""
    rows = read_results(out_csv)
    assert [(r["split"], r["layer"]) for r in rows] == [
        ("size", "blocks.0.norm"), ("size", "blocks.1.norm"),
        ("shape", "blocks.0.norm"), ("shape", "blocks.1.norm"),
    ]
    assert {r["seed"] for r in rows} == {"7"}
    assert {r["n_test"] for r in rows} == {"6"}


def test_probe_unknown_split(capsys, shapes_store, tmp_path):
    cfg, labels = shapes_store
    code, _, err = run(capsys, "probe", "--config", str(cfg), "--labels", str(labels), "--splits", "texture",
                       "--output", str(tmp_path / "p.csv"))
    assert code == 1 and "texture" in err


def test_probe_needs_store(capsys, tmp_path):
    assert run(capsys, "probe", "--layers", "a", "--output", str(tmp_path / "p.csv"))[0] == 2


# -- concept -----------------------------------------------------------------

def test_concept_surfaces(capsys, tmp_path):
    colors = ["red", "green", "blue", "yellow"]
    items = stroop_images(tmp_path / "stroop", n=6, seed=2, colors=colors)
    protos = color_prototypes(tmp_path / "protos", per_concept=3, seed=3, colors=colors)
    db = tmp_path / "c.db"
    for name, d in (("s.yaml", "stroop"), ("p.yaml", "protos")):
        cfg = write_config(tmp_path / name, input_dir=d, output_db=str(db), modules=["blocks.0.norm", "head"])
        assert run(capsys, "extract", "--config", str(cfg))[0] == 0
    out_csv = tmp_path / "surf.csv"
    code, out, err = run(capsys, "concept", "--store", str(db), "--items", str(items), "--prototypes", str(protos),
                         "--d-prime", "1", "2", "--output", str(out_csv), "--seed", "4")
    assert code == 0 and err == ""
    rows = list(csv_rows(out_csv))
    assert len(rows) == 3 * 2 * 2
    assert {r["seed"] for r in rows} == {"4"}
    assert "background" in out


def csv_rows(path):
    import csv

    with open(path, newline="") as fh:
        yield from csv.DictReader(fh)


# -- bench / plot / export ---------------------------------------------------

def test_bench_writes_report(capsys, toy_config_file, tmp_path):
    report = tmp_path / "bench.json"
    code, out, err = run(capsys, "bench", "--config", str(toy_config_file), "--output", str(report),
                         "--store", str(tmp_path / "b.db"), "--seed", "3")
    assert code == 0 and err == ""
    data = json.loads(report.read_text())
    assert data["n_instances"] == 3 and data["seed"] == 3
    assert out.splitlines()[0].split()[:2] == ["Model", "#"]


def test_plot_probe_byte_identical(capsys, tmp_path):
    src = tmp_path / "probe.csv"
    src.write_text(
        "split,layer,main_acc,control_acc,n_test,z,stars,best_lr,best_epochs,best_batch,seed\n"
        "color,l16,0.900000,0.300000,200,12.0,***,0.01,30,16,0\n"
        "color,l32,0.700000,0.300000,200,8.0,***,0.01,30,16,0\n"
        "size,l16,0.550000,0.500000,200,1.0,none,0.01,30,16,0\n"
        "size,l32,0.600000,0.500000,200,2.0,*,0.01,30,16,0\n"
    )
    outs = []
    for name in ("a.svg", "b.svg"):
        code, _, err = run(capsys, "plot", "--input", str(src), "--output", str(tmp_path / name), "--seed", "1")
        assert code == 0 and err == ""
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    assert b"<svg" in outs[0] and b"seed=1" in outs[0]


def test_plot_surfaces_byte_identical(capsys, tmp_path):
    lines = ["aspect,layer,d_prime,matched,mismatched,seed"]
    for aspect in ("lexical", "font", "background"):
        for layer in ("a", "b"):
            for d in (1, 2, 4):
                lines.append(f"{aspect},{layer},{d},{0.1 * d:.3f},{0.05 * d:.3f},0")
    src = tmp_path / "s.csv"
    src.write_text("\n".join(lines) + "\n")
    outs = []
    for name in ("a.svg", "b.svg"):
        assert run(capsys, "plot", "--input", str(src), "--output", str(tmp_path / name))[0] == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_plot_rejects_unknown_csv(capsys, tmp_path):
    src = tmp_path / "x.csv"
    src.write_text("foo,bar\n1,2\n")
    assert run(capsys, "plot", "--input", str(src), "--output", str(tmp_path / "x.svg"))[0] == 1


def test_export(capsys, toy_config_file, tmp_path):
    run(capsys, "extract", "--config", str(toy_config_file))
    code, _, err = run(capsys, "export", "--store", str(tmp_path / "output" / "toy.db"),
                       "--output", str(tmp_path / "dump"), "--layer", "head")
    assert code == 0 and err == ""
    manifest = json.loads((tmp_path / "dump" / "manifest.json").read_text())
    assert len(manifest["records"]) == 3


def test_export_missing_store(capsys, tmp_path):
    code, _, err = run(capsys, "export", "--store", str(tmp_path / "none.db"), "--output", str(tmp_path / "d"))
    assert code == 1 and "not found" in err
