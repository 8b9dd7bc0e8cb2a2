"""Command-line interface: argument parsing, the full pipeline, exit codes."""

import json

import pytest

from frostcast import load_bank
from frostcast.cli import UsageError, main, parse_counts, parse_methods

SPEC = {
    "seed": 77,
    "n_stations": 6,
    "lon_min": 146.0,
    "lon_max": 147.0,
    "lat_min": -34.0,
    "lat_max": -33.0,
    "cell_size": 0.25,
    "days": 1,
    "sample_interval": 5,
    "noise_sd": 0.3,
}


class TestParseCounts:
    def test_ranges_and_steps(self):
        assert parse_counts("1..10,10..60:10") == [1, 2, 3, 4, 5, 6, 7, 8, 9, 10,
                                                   20, 30, 40, 50, 60]
        assert parse_counts("2..6:2") == [2, 4, 6]

    def test_duplicates_collapse_and_sort(self):
        assert parse_counts("3,1,2,2") == [1, 2, 3]

    def test_single_value(self):
        assert parse_counts("5") == [5]

    @pytest.mark.parametrize("bad", ["", "0", "a", "5..1", "1..4:0", "1..4:x", "1,,2"])
    def test_bad_tokens(self, bad):
        with pytest.raises(UsageError):
            parse_counts(bad)


class TestParseMethods:
    def test_tokens_expand(self):
        assert parse_methods("avg,wavg,vote") == [
            "average", "weighted_average", "weighted_vote",
        ]

    def test_dedup_preserves_order(self):
        assert parse_methods("vote,avg,vote") == ["weighted_vote", "average"]

    def test_unknown_token(self):
        with pytest.raises(UsageError):
            parse_methods("avg,magic")


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run the whole CLI once: synth -> ingest -> folds -> train -> calibrate."""
    base = tmp_path_factory.mktemp("cli")
    paths = {
        "spec": base / "spec.json",
        "world": base / "world",
        "data": base / "data.zip",
        "folds": base / "folds.json",
        "bank": base / "bank",
        "report": base / "report.json",
    }
    paths["spec"].write_text(json.dumps(SPEC))
    assert main(["synth", "--spec", str(paths["spec"]), "--out", str(paths["world"])]) == 0
    assert main([
        "ingest",
        "--stations", str(paths["world"] / "stations"),
        "--dem", str(paths["world"] / "dem.asc"),
        "--ndvi", str(paths["world"] / "ndvi.asc"),
        "--boundary", str(paths["world"] / "boundary.json"),
        "--out", str(paths["data"]),
    ]) == 0
    assert main([
        "folds", "--data", str(paths["data"]), "--seed", "1", "--n-folds", "3",
        "--deterministic", "--out", str(paths["folds"]),
    ]) == 0
    assert main([
        "train", "--data", str(paths["data"]), "--folds", str(paths["folds"]),
        "--fold", "0", "--seed", "2", "--epochs", "3", "--entry-stride", "10",
        "--max-entries", "2000", "--out", str(paths["bank"]),
    ]) == 0
    assert main(["calibrate", "--bank", str(paths["bank"]), "--preset", "paper-fold-0"]) == 0
    return paths


class TestPipeline:
    def test_world_files_written(self, pipeline):
        assert (pipeline["world"] / "dem.asc").exists()
        assert (pipeline["world"] / "stations" / "stations.json").exists()

    def test_folds_cover_all_stations(self, pipeline):
        doc = json.loads(pipeline["folds"].read_text())
        assert doc["version"] == 1
        ids = sorted(sid for fold in doc["folds"] for sid in fold)
        assert len(ids) == 6 and len(set(ids)) == 6

    def test_preset_sets_coefficients(self, pipeline):
        bank = load_bank(pipeline["bank"])
        assert (bank.coefficients.geo, bank.coefficients.dem, bank.coefficients.ndvi) == (
            0.1629, 0.0132, 0.0290,
        )

    def test_eval_writes_report(self, pipeline):
        rc = main([
            "eval", "--data", str(pipeline["data"]), "--bank", str(pipeline["bank"]),
            "--methods", "avg,wavg,vote", "--deterministic",
            "--out", str(pipeline["report"]),
        ])
        assert rc == 0
        doc = json.loads(pipeline["report"].read_text())
        assert doc["methods"] == ["average", "weighted_average", "weighted_vote"]
        assert doc["results"] and "generated_at" not in doc

    def test_eval_rerun_byte_identical(self, pipeline, tmp_path):
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        argv = [
            "eval", "--data", str(pipeline["data"]), "--bank", str(pipeline["bank"]),
            "--deterministic",
        ]
        assert main(argv + ["--out", str(out1)]) == 0
        assert main(argv + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_raster_and_compare(self, pipeline, tmp_path):
        bank = load_bank(pipeline["bank"])
        source = sorted(bank.models)[0]
        rasters = []
        for token in ("avg", "wavg", f"single:{source}"):
            out = tmp_path / f"{token.split(':')[0]}.asc"
            rc = main([
                "raster", "--data", str(pipeline["data"]), "--bank", str(pipeline["bank"]),
                "--method", token, "--timestamp", "60", "--out", str(out),
            ])
            assert rc == 0
            rasters.append(out)
        rerun = tmp_path / "again.asc"
        assert main([
            "raster", "--data", str(pipeline["data"]), "--bank", str(pipeline["bank"]),
            "--method", "avg", "--timestamp", "60", "--out", str(rerun),
        ]) == 0
        assert rerun.read_bytes() == rasters[0].read_bytes()
        matrix = tmp_path / "matrix.csv"
        assert main(
            ["compare", "--rasters", *map(str, rasters), "--out", str(matrix)]
        ) == 0
        lines = matrix.read_text().strip().splitlines()
        assert lines[0] == ",avg,single,wavg"
        assert len(lines) == 4


class TestExitCodes:
    def test_no_command_is_usage_error(self):
        assert main([]) == 2

    def test_missing_input_file(self, tmp_path):
        rc = main(["synth", "--spec", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert rc == 3

    def test_bad_counts_expression(self, pipeline, tmp_path):
        rc = main([
            "eval", "--data", str(pipeline["data"]), "--bank", str(pipeline["bank"]),
            "--counts", "junk", "--out", str(tmp_path / "r.json"),
        ])
        assert rc == 2

    def test_bad_preset(self, pipeline):
        assert main(["calibrate", "--bank", str(pipeline["bank"]), "--preset", "bogus"]) == 2
        assert main(["calibrate", "--bank", str(pipeline["bank"]), "--preset", "paper-fold-9"]) == 2

    def test_calibrate_without_data_or_preset(self, pipeline):
        assert main(["calibrate", "--bank", str(pipeline["bank"])]) == 2

    def test_bad_raster_method(self, pipeline, tmp_path):
        rc = main([
            "raster", "--data", str(pipeline["data"]), "--bank", str(pipeline["bank"]),
            "--method", "cubist", "--timestamp", "60", "--out", str(tmp_path / "r.asc"),
        ])
        assert rc == 2

    def test_compare_needs_two_distinct(self, pipeline, tmp_path):
        one = tmp_path / "a.asc"
        one.write_text("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1.0\n")
        assert main(["compare", "--rasters", str(one), "--out", str(tmp_path / "m.csv")]) == 2
        other_dir = tmp_path / "sub"
        other_dir.mkdir()
        twin = other_dir / "a.asc"
        twin.write_text(one.read_text())
        assert main([
            "compare", "--rasters", str(one), str(twin), "--out", str(tmp_path / "m.csv"),
        ]) == 2
