import csv
import json
import math

import pytest

from gapforge import CellSpec, InclusionShape
from gapforge.cli import main

RUNNING_M1 = CellSpec((InclusionShape.rect(0.25, 0.25, 0.75, 0.75),), (0.125,))


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def cell_file(tmp_path):
    def write(cell, name="cell.json"):
        path = tmp_path / name
        path.write_text(cell.to_json())
        return str(path)

    return write


def targets_file(tmp_path, gaps):
    path = tmp_path / "targets.json"
    path.write_text(json.dumps({"gaps": gaps}))
    return str(path)


def test_design_single_gap(tmp_path):
    out_cell, out_sum = tmp_path / "c.json", tmp_path / "s.csv"
    code = main(["design", "--targets", targets_file(tmp_path, [[1, 1.25]]),
                 "--out-cell", str(out_cell), "--out-summary", str(out_sum), "--mesh", "0"])
    assert code == 0
    cell = CellSpec.from_json(out_cell.read_text())
    (sq,) = cell.inclusions
    # b = 0.2, so the square has area 0.2 and the strength follows from A = 1
    assert 4 * sq.half_extents[0] ** 2 == pytest.approx(0.2, rel=1e-14)
    assert cell.strengths[0] == pytest.approx(math.sqrt(0.2) / 4, rel=1e-14)
    (row,) = read_rows(out_sum)
    assert float(row["b_j"]) == pytest.approx(0.2)
    assert float(row["A_realized"]) == pytest.approx(1.0, rel=1e-12)


def test_design_snaps_to_mesh_by_default(tmp_path, capsys):
    out_cell = tmp_path / "c.json"
    code = main(["design", "--targets", targets_file(tmp_path, [[1, 1.25]]),
                 "--out-cell", str(out_cell), "--out-summary", str(tmp_path / "s.csv")])
    assert code == 0
    x0, _, x1, _ = CellSpec.from_json(out_cell.read_text()).inclusions[0].bounds
    assert round(x0 * 64) == pytest.approx(x0 * 64, abs=1e-9)
    assert round(x1 * 64) == pytest.approx(x1 * 64, abs=1e-9)
    (row,) = read_rows(tmp_path / "s.csv")
    assert float(row["A_realized"]) == pytest.approx(1.0, rel=1e-14)
    assert "B_j shift" in capsys.readouterr().err


@pytest.mark.parametrize("gaps, code", [([[1, 1.2], [1.1, 1.4]], 2), ([], 2),
                                        ([[0.3, 0.4], [0.6, 0.7], [0.9, 1.0]], 4)])
def test_design_errors(tmp_path, gaps, code):
    assert main(["design", "--targets", targets_file(tmp_path, gaps), "--out-cell",
                 str(tmp_path / "c.json"), "--out-summary", str(tmp_path / "s.csv")]) == code


def test_design_missing_file(tmp_path):
    assert main(["design", "--targets", str(tmp_path / "nope.json"), "--out-cell",
                 str(tmp_path / "c.json"), "--out-summary", str(tmp_path / "s.csv")]) == 2


def test_forward_running_cell(tmp_path, cell_file):
    out = tmp_path / "f.csv"
    assert main(["forward", "--cell", cell_file(RUNNING_M1), "--out", str(out)]) == 0
    (row,) = read_rows(out)
    assert float(row["A_j"]) == pytest.approx(1.0, rel=1e-14)
    assert float(row["B_j_bisection"]) == pytest.approx(4 / 3, abs=1e-12)
    assert float(row["B_j_matrix"]) == pytest.approx(4 / 3, abs=1e-12)
    assert float(row["abs_diff"]) <= 1e-7


def test_forward_m2_design(tmp_path, cell_file):
    cell = CellSpec((InclusionShape.rect(0.1, 0.1, 0.1 + math.sqrt(0.2), 0.1 + math.sqrt(0.2)),
                     InclusionShape.rect(0.6, 0.6, 0.6 + math.sqrt(0.1), 0.6 + math.sqrt(0.1))),
                    (math.sqrt(0.2) / 4, math.sqrt(0.1) / 2))  # q = A s / 4
    out = tmp_path / "f.csv"
    assert main(["forward", "--cell", cell_file(cell), "--out", str(out)]) == 0
    rows = read_rows(out)
    assert [float(r["B_j_bisection"]) for r in rows] == pytest.approx([1.2098387323, 2.3615898391], abs=1e-9)


def test_forward_rejects_equal_rates(tmp_path, cell_file):
    cell = CellSpec((InclusionShape.rect(0.1, 0.4, 0.3, 0.6), InclusionShape.rect(0.6, 0.4, 0.8, 0.6)),
                    (0.1, 0.1))
    assert main(["forward", "--cell", cell_file(cell), "--out", str(tmp_path / "f.csv")]) == 2


def test_forward_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{")
    assert main(["forward", "--cell", str(path), "--out", str(tmp_path / "f.csv")]) == 2


def test_bands_empty_cell(tmp_path, cell_file):
    out, svg = tmp_path / "b.csv", tmp_path / "b.svg"
    code = main(["bands", "--cell", cell_file(CellSpec((), ())), "--eps", "1", "--mesh", "32",
                 "--phi-grid", "2", "--k", "3", "--out", str(out), "--svg", str(svg)])
    assert code == 0
    rows = read_rows(out)
    assert len(rows) == 12
    keys = [(r["mode"], int(r["phi_i"]), int(r["k"])) for r in rows]
    assert keys == sorted(keys)
    by_phase = {int(r["phi_i"]): [float(x["lambda"]) for x in rows if x["phi_i"] == r["phi_i"]] for r in rows}
    assert by_phase[0][0] == pytest.approx(0.0, abs=1e-9)
    assert by_phase[0][1] == pytest.approx(4 * math.pi**2, rel=0.01)  # periodic: |2 pi e_1|^2
    assert by_phase[3][0] == pytest.approx(2 * math.pi**2, rel=0.01)  # phase (pi, pi)
    assert svg.read_text().count("<polyline") == 3


@pytest.mark.parametrize("extra", [["--mesh", "4"], ["--eps", "0"], ["--k", "0"]])
def test_bands_rejects_bad_config(tmp_path, cell_file, extra):
    args = {"--eps": "1", "--mesh": "16", "--phi-grid": "2", "--k": "2"}
    args.update(dict(zip(extra[::2], extra[1::2])))
    argv = ["bands", "--cell", cell_file(RUNNING_M1), "--out", str(tmp_path / "b.csv")]
    for k, v in args.items():
        argv += [k, v]
    assert main(argv) == 2


def test_verify_rejects_short_list(tmp_path, cell_file):
    assert main(["verify", "--cell", cell_file(RUNNING_M1), "--eps-list", "0.5,0.25",
                 "--mesh", "16", "--out", str(tmp_path / "v.csv")]) == 2


def test_verify_rejects_empty_cell(tmp_path, cell_file):
    assert main(["verify", "--cell", cell_file(CellSpec((), ())), "--eps-list", "0.5,0.25,0.125",
                 "--mesh", "16", "--out", str(tmp_path / "v.csv")]) == 2


def test_verify_writes_csv_before_verdict(tmp_path, cell_file, capsys):
    out = tmp_path / "v.csv"
    code = main(["verify", "--cell", cell_file(RUNNING_M1), "--eps-list", "0.5,0.25,0.125",
                 "--mesh", "16", "--out", str(out)])
    assert code in (0, 5)
    rows = read_rows(out)
    assert len(rows) == 12
    assert list(rows[0]) == ["eps", "k", "mode", "lambda", "limit", "abs_err", "mesh_margin"]
    printed = capsys.readouterr().out
    assert printed.count("slope") == 4


def test_lambda_command(cell_file, capsys):
    assert main(["lambda", "--cell", cell_file(RUNNING_M1), "--mesh", "16", "--phi-grid", "2"]) == 0
    lines = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert float(lines["Lambda_phi_min"]) == pytest.approx(0.0, abs=1e-9)
    assert float(lines["Lambda_phi_max"]) <= float(lines["Lambda_D"])


def test_unknown_subcommand_is_invalid():
    assert main(["nonsense"]) == 2


def test_snapping_note(tmp_path, cell_file, capsys):
    cell = CellSpec((InclusionShape.rect(0.249, 0.249, 0.751, 0.751),), (0.125,))
    assert main(["lambda", "--cell", cell_file(cell), "--mesh", "8"]) == 0
    assert "snapping" in capsys.readouterr().err


def test_forward_csv_is_deterministic(tmp_path, cell_file):
    path = cell_file(RUNNING_M1)
    outs = [tmp_path / f"f{i}.csv" for i in range(2)]
    for out in outs:
        assert main(["forward", "--cell", path, "--out", str(out)]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
