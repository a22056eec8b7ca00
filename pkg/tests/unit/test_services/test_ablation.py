"""Unit tests for sweeps and studies."""

import csv
import io
import math

import pytest

from heatreg.errors import InvalidParameterError
from heatreg.models.schemas.fit import FitConfig, Variant
from heatreg.services import ablation
from heatreg.services.ablation import (
    CSV_HEADER,
    IMBALANCE_OUTPUT_BLUR,
    IMBALANCE_SIGMA0,
    SIGMA0_GRID,
    SweepRow,
    ablation_sweep,
    compare_variants,
    format_value,
    imbalance_study,
    scale_ordering_study,
    write_csv,
)
from heatreg.services.synth_gen import generate_scene


@pytest.fixture
def scenes():
    return [generate_scene(seed, 1, scales=[1.0], canvas=(32, 32)) for seed in range(2)]


@pytest.fixture
def quick_cfg():
    return FitConfig(variant=Variant.SAHR, steps=5)


def read_csv(rows):
    sink = io.StringIO()
    write_csv(rows, sink)
    return list(csv.reader(io.StringIO(sink.getvalue())))


class TestAblationSweep:
    """Tests for ablation_sweep."""

    def test_one_row_per_value_in_order(self, scenes, quick_cfg):
        rows = ablation_sweep(scenes, quick_cfg, "lambda", [0.1, 0.5, 1.0, math.inf])
        assert [r.value for r in rows] == ["0.1", "0.5", "1", "inf"]
        assert all(r.param == "lambda" and r.seed_count == 2 for r in rows)
        assert all(r.mean_loc_err_px >= 0 for r in rows)

    def test_single_value(self, scenes, quick_cfg):
        rows = ablation_sweep(scenes, quick_cfg, "gamma", [0.01])
        assert len(rows) == 1
        assert rows[0].value == "0.01"

    def test_small_people_leave_size_metrics_undefined(self, scenes, quick_cfg):
        row = ablation_sweep(scenes, quick_cfg, "lambda", [1.0])[0]
        assert row.ap is not None
        assert row.ap_m is None
        assert row.ap_l is None

    def test_unknown_param(self, scenes, quick_cfg):
        with pytest.raises(InvalidParameterError):
            ablation_sweep(scenes, quick_cfg, "sigma", [1.0])

    def test_empty_values(self, scenes, quick_cfg):
        with pytest.raises(InvalidParameterError):
            ablation_sweep(scenes, quick_cfg, "lambda", [])

    def test_sigma0_sweep(self, scenes):
        rows = ablation_sweep(scenes, FitConfig(steps=5), "sigma0", SIGMA0_GRID)
        assert [(r.param, r.value) for r in rows] == [("sigma0", "2"), ("sigma0", "2.5"), ("sigma0", "3")]

    def test_compare_variants(self, scenes, quick_cfg):
        rows = compare_variants(scenes, quick_cfg)
        assert [(r.param, r.value) for r in rows] == [("variant", "base"), ("variant", "shr"), ("variant", "sahr")]


class TestWriteCsv:
    """Tests for write_csv."""

    def test_header_and_empty_cells(self):
        rows = read_csv([SweepRow(param="lambda", value="inf", mean_loc_err_px=1.5, ap=0.25, seed_count=3)])
        assert rows[0] == CSV_HEADER
        assert rows[1] == ["lambda", "inf", "1.500000", "0.250000", "", "", "3"]

    def test_header_only(self):
        assert read_csv([]) == [CSV_HEADER]

    def test_file_sink(self, tmp_path):
        path = tmp_path / "sweep.csv"
        write_csv([SweepRow(param="gamma", value="0.1", mean_loc_err_px=0.0, seed_count=1)], path)
        assert path.read_text(encoding="utf-8").splitlines()[0] == ",".join(CSV_HEADER)

    def test_format_value(self):
        assert format_value(math.inf) == "inf"
        assert format_value(0.001) == "0.001"


class TestStudies:
    """Tests for the paired studies."""

    def test_scale_ordering_bookkeeping(self):
        study = scale_ordering_study([0, 1], cfg_template=FitConfig(steps=5))
        assert study.runs == 2
        assert len(study.first) == len(study.second) == 2
        assert 0 <= study.wins <= 2
        assert 0.0 <= study.win_rate <= 1.0

    def test_imbalance_bookkeeping(self):
        study = imbalance_study([0, 1], cfg_template=FitConfig(sigma0=0.8, steps=5))
        assert study.name == "wahr_vs_base"
        assert study.runs == 2
        assert 0.0 < study.foreground_fraction < 0.5

    def test_imbalance_defaults_blur_the_output(self, monkeypatch):
        seen = []

        class Captured(Exception):
            pass

        def fake_fit(scene, cfg):
            seen.append(cfg)
            raise Captured

        monkeypatch.setattr(ablation, "fit_direct", fake_fit)
        with pytest.raises(Captured):
            imbalance_study([0])
        assert seen[0].sigma0 == IMBALANCE_SIGMA0
        assert seen[0].output_blur == IMBALANCE_OUTPUT_BLUR
