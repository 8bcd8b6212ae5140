import numpy as np
import pytest

from cadence.corpus import load_manifest
from cadence.errors import DataError
from cadence.pipelines import (DESK_OVERRIDES, SYSTEMS, PipelineConfig, build_context, extract_subject, fit_all,
                               fold_seed, load_fitted, make_system, parse_systems, save_fitted)


def test_config_roundtrip_and_unknown_key():
    cfg = PipelineConfig().with_(**DESK_OVERRIDES)
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    assert PipelineConfig().ubm_components == 512 and PipelineConfig().tv_dim == 125
    with pytest.raises(DataError):
        PipelineConfig.from_dict({"ubm_size": 4})


def test_parse_systems():
    assert [s.name for s in parse_systems("fluency, rnn")] == ["fluency", "rnn"]
    for bad in ("", "fluency,fluency", "nope"):
        with pytest.raises(DataError):
            parse_systems(bad)


def test_fold_seed_non_negative():
    assert fold_seed(3, -1) == [3, 0]
    assert fold_seed(3, 4) == [3, 5]


@pytest.fixture(scope="module")
def fitted(small_corpus):
    m = load_manifest(small_corpus)
    systems = [make_system(n) for n in SYSTEMS]
    ctx = build_context(m, systems, PipelineConfig().with_(**DESK_OVERRIDES))
    feats = [extract_subject(s, systems, ctx) for s in m.sorted().subjects]
    return m, systems, ctx, feats


@pytest.mark.parametrize("name", SYSTEMS)
def test_save_load_scores_identical(fitted, name, tmp_path):
    m, systems, ctx, feats = fitted
    system = next(s for s in systems if s.name == name)
    model = fit_all(m, system, ctx, feats)
    save_fitted(tmp_path, name, model, {"note": "test"})
    back = load_fitted(tmp_path, name)
    for f in feats:
        a, b = system.score(model, f[name]), system.score(back, f[name])
        assert np.isfinite(a) and a == b
    if system.threshold == 0.5:
        assert all(0.0 <= system.score(model, f[name]) <= 1.0 for f in feats)
