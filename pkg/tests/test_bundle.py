"""CSV emission, float formatting, and manifest hashing."""

import csv
import json

import pytest

from fdmfg import ResultBundle, emit_bundle, format_float


class TestFormatFloat:
    def test_round_trip_digits(self):
        assert format_float(1.0 / 3.0) == "0.33333333333333331"
        assert float(format_float(0.1)) == 0.1

    def test_integral_values_stay_short(self):
        assert format_float(0.0) == "0"
        assert format_float(2.0) == "2"

    def test_every_double_round_trips(self):
        for x in (1e-300, 0.1 + 0.2, 6.0221408e23, -1.5e-8):
            assert float(format_float(x)) == x


class TestResultBundle:
    def test_rejects_row_width_mismatch(self):
        b = ResultBundle()
        with pytest.raises(ValueError, match="cells"):
            b.add_table("t.csv", ["a", "b"], [[1.0]])

    def test_rejects_duplicate_and_bad_names(self):
        b = ResultBundle()
        b.add_table("t.csv", ["a"], [[1.0]])
        with pytest.raises(ValueError, match="duplicate"):
            b.add_table("t.csv", ["a"], [[1.0]])
        with pytest.raises(ValueError, match="csv"):
            b.add_table("t.txt", ["a"], [[1.0]])


class TestEmitBundle:
    def _bundle(self):
        b = ResultBundle()
        b.add_table("values.csv", ["t", "v"], [[0.0, 1.0 / 3.0], [0.5, 0.25]])
        b.add_table("labels.csv", ["name", "count"], [["a,b", 2], ['say "hi"', 3]])
        return b

    def test_writes_seventeen_digit_csv(self, tmp_path):
        emit_bundle(self._bundle(), str(tmp_path))
        text = (tmp_path / "values.csv").read_text()
        assert "0.33333333333333331" in text
        assert text.splitlines()[0] == "t,v"

    def test_quoting_follows_csv_rules(self, tmp_path):
        emit_bundle(self._bundle(), str(tmp_path))
        with open(tmp_path / "labels.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[1] == ["a,b", "2"]
        assert rows[2] == ['say "hi"', "3"]

    def test_manifest_covers_every_file(self, tmp_path):
        manifest = emit_bundle(self._bundle(), str(tmp_path),
                               config_echo={"network": {"beta": 1.0}})
        assert set(manifest["files"]) == {"values.csv", "labels.csv"}
        on_disk = json.loads((tmp_path / "manifest.json").read_text())
        assert on_disk["files"] == manifest["files"]
        assert on_disk["config"] == {"network": {"beta": 1.0}}
        assert on_disk["bundle_hash"] == manifest["bundle_hash"]

    def test_rerun_reproduces_bytes_and_hashes(self, tmp_path):
        m1 = emit_bundle(self._bundle(), str(tmp_path / "one"))
        m2 = emit_bundle(self._bundle(), str(tmp_path / "two"))
        assert m1["files"] == m2["files"]
        assert m1["bundle_hash"] == m2["bundle_hash"]
        a = (tmp_path / "one" / "values.csv").read_bytes()
        b = (tmp_path / "two" / "values.csv").read_bytes()
        assert a == b

    def test_extra_fields_merge_but_cannot_shadow(self, tmp_path):
        m = emit_bundle(self._bundle(), str(tmp_path), extra={"converged": False})
        assert m["converged"] is False
        with pytest.raises(ValueError, match="shadow"):
            emit_bundle(self._bundle(), str(tmp_path), extra={"files": {}})

    def test_crlf_line_endings(self, tmp_path):
        emit_bundle(self._bundle(), str(tmp_path))
        raw = (tmp_path / "values.csv").read_bytes()
        assert b"\r\n" in raw
