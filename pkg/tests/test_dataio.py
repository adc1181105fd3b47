import io
import math
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskest import dataio, pipeline, riskmodel, statcore
from riskest.errors import DataError, ValidationError

HEADER = "project_id,effort,fs,mts,dt,dp,lt,um,ma,at,pre\n"


def load(text):
    return dataio.load_projects(io.StringIO(text))


class TestProjects:
    def test_happy_path(self):
        ds = load(HEADER + "A,100,50,3,New,PC,3GL,yes,no,MIS,4.5\nB,250.5,80,5,Enhancement,MF,4GL,no,yes,Web,10\n")
        assert len(ds) == 2
        a = ds.records[0]
        assert (a.project_id, a.effort, a.fs, a.mts, a.lt, a.pre) == ("A", 100.0, 50.0, 3.0, "3GL", 4.5)

    def test_empty_cell_is_missing(self):
        ds = load(HEADER + "A,100,50,3,New,PC,,yes,no,MIS,4.5\n")
        assert ds.records[0].lt is None

    def test_negative_effort_located(self):
        with pytest.raises(DataError) as info:
            load(HEADER + "A,100,50,3,New,PC,3GL,yes,no,MIS,4.5\nB,-5,50,3,New,PC,3GL,yes,no,MIS,4.5\n")
        assert info.value.line == 3 and info.value.column == "effort"

    def test_malformed_number(self):
        for bad in ("1_000", "abc", "nan", "inf", "1e"):
            with pytest.raises(DataError) as info:
                load(HEADER + f"A,100,{bad},3,New,PC,3GL,yes,no,MIS,4.5\n")
            assert info.value.column == "fs"

    def test_missing_required_header(self):
        with pytest.raises(DataError, match="effort"):
            load("project_id,fs\nA,3\n")

    def test_duplicate_id(self):
        with pytest.raises(DataError, match="duplicate"):
            load(HEADER + "A,100,,,,,,,,,\nA,120,,,,,,,,,\n")

    def test_pre_out_of_range(self):
        with pytest.raises(DataError) as info:
            load(HEADER + "A,100,,,,,,,,,30\n")
        assert info.value.column == "pre"

    def test_optional_columns_and_extras(self):
        ds = load("project_id,effort,country,fs\nA,10,NZ,3\n")
        assert ds.records[0].get("country") == "NZ"
        assert ds.records[0].lt is None
        assert dataio.dump_projects(ds) == "project_id,effort,country,fs\nA,10,NZ,3\n"

    def test_empty_input(self):
        with pytest.raises(DataError):
            load("")


names = st.text(alphabet="abcXYZ019-_ ", min_size=1, max_size=8).filter(lambda s: s.strip() == s)
pos = st.floats(min_value=1e-6, max_value=1e9, allow_nan=False, allow_infinity=False)


@st.composite
def records(draw, pid):
    opt = lambda s: st.one_of(st.none(), s)  # noqa: E731
    return dataio.ProjectRecord(
        project_id=pid,
        effort=draw(pos),
        fs=draw(opt(pos)),
        mts=draw(opt(pos)),
        lt=draw(opt(names)),
        ma=draw(opt(names)),
        dt=draw(opt(names)),
        pre=draw(opt(st.floats(1, 25))),
    )


@settings(max_examples=60)
@given(st.data(), st.integers(0, 12))
def test_dataset_round_trip(data, n):
    recs = [data.draw(records(f"P{i}")) for i in range(n)]
    ds = dataio.Dataset(dataio.STANDARD_COLUMNS, recs)
    again = load(dataio.dump_projects(ds))
    assert again.ids == ds.ids
    assert again.records == ds.records


class TestAssessment:
    def test_line(self):
        a = dataio.load_assessment(io.StringIO("user.1,3,2,4,3,3\n"))
        assert riskmodel.risk_exposure(a.ratings[0]) == 9.0

    def test_header_and_comments(self):
        text = "risk_id,probability,technical,cost,schedule,team\n# note\n\nuser.2,1,1,1,1,1\n"
        assert len(dataio.load_assessment(io.StringIO(text)).ratings) == 1

    def test_unknown_id(self):
        with pytest.raises(DataError, match="unknown risk id") as info:
            dataio.load_assessment(io.StringIO("user.1,3,2,4,3,3\nuser.99,1,1,1,1,1\n"))
        assert info.value.line == 2

    def test_duplicate(self):
        with pytest.raises(DataError, match="duplicate rating"):
            dataio.load_assessment(io.StringIO("user.1,3,2,4,3,3\nuser.1,1,1,1,1,1\n"))

    @pytest.mark.parametrize("bad", ["user.1,6,1,1,1,1", "user.1,0,1,1,1,1", "user.1,3,1,1.5,1,1", "user.1,3,1,1"])
    def test_bad_levels(self, bad):
        with pytest.raises(DataError):
            dataio.load_assessment(io.StringIO(bad + "\n"))

    def test_round_trip(self):
        a = riskmodel.uniform_assessment("x", 2, (1, 3, 5, 2))
        assert dataio.load_assessment(io.StringIO(dataio.dump_assessment(a)), "x") == a


class TestAttachPre:
    def test_fill_and_agree(self):
        ds = load("project_id,effort\nA,10\nB,20\n")
        a = riskmodel.uniform_assessment("A", 3, (2, 4, 3, 3))
        out = dataio.attach_pre(ds, {"A": a})
        assert out.records[0].pre == 9.0 and out.records[1].pre is None
        # an agreeing precomputed value passes
        assert dataio.attach_pre(out, {"A": a}).records[0].pre == 9.0

    def test_disagreement(self):
        ds = load("project_id,effort,pre\nA,10,9.5\n")
        with pytest.raises(DataError, match="disagrees"):
            dataio.attach_pre(ds, {"A": riskmodel.uniform_assessment("A", 3, (2, 4, 3, 3))})


def make_model(rng, kind=None):
    kind = kind or str(rng.choice(pipeline.KINDS))
    drivers = [pipeline.DriverSpec("fs", "ratio"), pipeline.DriverSpec("lt", "nominal")]
    coefs = {"fs": float(rng.normal() * 10.0 ** int(rng.integers(-5, 5))), "lt=4GL": float(rng.normal())}
    if kind == pipeline.EEMR:
        drivers.append(pipeline.DriverSpec("pre", "ratio"))
        coefs["pre"] = float(rng.normal() * 1e3)
    return pipeline.FittedModel(
        kind=kind,
        drivers=tuple(drivers),
        reference_levels={"lt": "3GL"},
        intercept=float(rng.normal() * 1e4),
        coefficients=coefs,
        training={"mmre": float(rng.random()), "pred_25": float(rng.random()), "r_squared": float(rng.random())},
        seed=int(rng.integers(0, 2 ** 31)) if rng.random() < 0.8 else None,
        fold=int(rng.integers(0, 3)) if rng.random() < 0.5 else None,
        config_digest="abc123",
        created="2026-01-02T03:04:05Z",
    )


class TestModelFile:
    def test_round_trip_many(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            m = make_model(rng)
            assert dataio.load_model(dataio.save_model(m)) == m

    def test_fitted_round_trip(self, synthetic):
        prepared, _ = pipeline.prepare(synthetic, pipeline.specs_for(pipeline.CASE_STUDY_DRIVERS))
        m = pipeline.fit_model(prepared, pipeline.specs_for(("fs", "mts", "lt", "ma")), "EEMR", seed=42)
        assert dataio.load_model(io.StringIO(dataio.save_model(m))) == m

    def test_version_rejected(self):
        text = dataio.save_model(make_model(np.random.default_rng(1))).replace("eemr-model/1", "eemr-model/2")
        with pytest.raises(DataError, match="format"):
            dataio.load_model(text)

    def test_missing_intercept(self):
        text = "\n".join(l for l in dataio.save_model(make_model(np.random.default_rng(1))).splitlines()
                         if not l.startswith("intercept"))
        with pytest.raises(DataError, match="intercept"):
            dataio.load_model(text + "\n")

    def test_truncated(self):
        text = dataio.save_model(make_model(np.random.default_rng(2)))
        with pytest.raises(DataError, match="truncated"):
            dataio.load_model(text[: len(text) // 2])

    def test_seventeen_digits(self):
        m = make_model(np.random.default_rng(3))
        line = next(l for l in dataio.save_model(m).splitlines() if l.startswith("intercept"))
        assert line.split("\t")[1] == f"{m.intercept:.17g}"


class TestGenerator:
    def test_deterministic(self):
        a = dataio.dump_projects(dataio.generate_synthetic())
        b = dataio.dump_projects(dataio.generate_synthetic())
        assert a == b
        assert a != dataio.dump_projects(dataio.generate_synthetic(dataio.GeneratorConfig(seed=43)))

    def test_records_valid(self, synthetic):
        assert len(synthetic) == 200
        for r in synthetic:
            assert r.effort > 0
            assert r.pre is None or 1 <= r.pre <= 25

    def test_pre_effort_calibration(self, synthetic):
        pairs = [(r.pre, r.effort) for r in synthetic if r.pre is not None]
        r = statcore.pearson(*zip(*pairs)).statistic
        assert abs(r - 0.4) <= 0.1

    def test_degenerate_config(self):
        with pytest.raises(ValidationError, match="degenerate"):
            dataio.GeneratorConfig(lt_freq={"3GL": 1.0}, lt_offsets={"3GL": 50.0})
        with pytest.raises(ValidationError, match="degenerate"):
            dataio.GeneratorConfig(lt_freq={"3GL": 1.0, "4GL": 0.0}, lt_offsets={"3GL": 0.0, "4GL": 50.0})
        with pytest.raises(ValidationError):
            dataio.GeneratorConfig(n=5)
        with pytest.raises(ValidationError):
            dataio.GeneratorConfig(noise_sd=-1)

    def test_convergence_large_n(self):
        cfg = dataio.GeneratorConfig(n=10_000, seed=5, missing_rate=0.0)
        ds = dataio.generate_synthetic(cfg)
        fs = np.array(ds.column("fs"))
        mts = np.array(ds.column("mts"))
        expected_fs = math.exp(cfg.fs_log_mean + cfg.fs_log_sd ** 2 / 2)
        assert fs.mean() == pytest.approx(expected_fs, rel=0.05)
        assert mts.mean() == pytest.approx(1 + cfg.mts_mean, rel=0.05)
        for name in ("lt", "ma", "dp", "at"):
            freq = getattr(cfg, f"{name}_freq")
            total = sum(freq.values())
            counts = Counter(ds.column(name))
            for level, w in freq.items():
                assert counts[level] / len(ds) == pytest.approx(w / total, rel=0.05)

    def test_missing_rate(self):
        ds = dataio.generate_synthetic(dataio.GeneratorConfig(n=2000, missing_rate=0.1, seed=9))
        frac = sum(r.fs is None for r in ds) / len(ds)
        assert frac == pytest.approx(0.1, abs=0.02)

    def test_planted_coefficients_reparametrize(self):
        cfg = dataio.GeneratorConfig()
        base = dataio.planted_coefficients(cfg, {"lt": "3GL", "ma": "no"})
        alt = dataio.planted_coefficients(cfg, {"lt": "4GL", "ma": "no"})
        assert alt["(intercept)"] == base["(intercept)"] + cfg.lt_offsets["4GL"]
        assert alt["lt=3GL"] == -cfg.lt_offsets["4GL"]
        assert replace(cfg, seed=1).pre_coef == base["pre"]
