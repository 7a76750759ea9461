import numpy as np
import pytest

from sqp.baselines import best_trained, oracle
from sqp.data import save_features, load_features
from sqp.errors import ContractError
from sqp.harness import ExperimentParams, run_experiment, split_folds
from sqp.matcher import aggregate_all
from sqp.selection import RiskParams, select_configurations
from sqp.synth import SynthSpec, feature_records, synth_generate


def test_shape_and_roles():
    d = synth_generate(SynthSpec())
    assert d.matrix.shape == (12, 40)
    assert [c for c, r in d.roles.items() if r.startswith("specialist")] == ["cfg000", "cfg003", "cfg006", "cfg009"]
    assert d.roles["cfg001"] == "generalist"
    assert set(d.query_cluster.values()) == {0, 1, 2, 3}
    assert len(d.descriptors) == 12
    assert {x.uses_qe for x in d.descriptors} == {True, False}


def test_deterministic():
    a, b = synth_generate(SynthSpec(seed=3)), synth_generate(SynthSpec(seed=3))
    assert a.matrix.cell_equal(b.matrix)
    assert all(np.array_equal(a.features[q].values, b.features[q].values) for q in a.features)
    assert not synth_generate(SynthSpec(seed=4)).matrix.cell_equal(a.matrix)


def test_noise_free_closed_form():
    d = synth_generate(SynthSpec(noise_sd=0.0))
    assert oracle(d.matrix).mean == pytest.approx(0.7, abs=1e-12)
    best = best_trained(d.matrix)
    assert d.roles[best] == "generalist"
    assert float(np.mean(d.matrix.row(best))) == pytest.approx(0.55, abs=1e-12)


def test_single_cluster_specialist_first():
    d = synth_generate(SynthSpec(n_clusters=1, configs_per_cluster=3, noise_sd=0.0))
    m = d.matrix
    generalist = next(c for c, r in d.roles.items() if r == "generalist")
    pool = select_configurations(m.queries, m.configs, m, RiskParams("E", 0.0, 2, generalist))
    assert d.roles[pool.config_ids[0]] == "specialist:0"


def test_single_config_per_cluster_appends_generalist():
    d = synth_generate(SynthSpec(n_clusters=2, configs_per_cluster=1))
    assert d.matrix.configs == ("cfg000", "cfg001", "cfg002")
    assert d.roles["cfg002"] == "generalist"


def test_noise_free_matching_recovers_clusters():
    d = synth_generate(SynthSpec(noise_sd=0.0))
    plan = split_folds(d.matrix.queries, 3, 42)
    rep = run_experiment(d.matrix, d.features, ["erisk_cosine", "oracle_full"], plan, ExperimentParams(k=5))
    assert rep.methods["erisk_cosine"].per_query == rep.methods["oracle_full"].per_query


def test_feature_records_round_trip(tmp_path):
    d = synth_generate(SynthSpec(seed=2))
    save_features(feature_records(d.features), tmp_path / "f.tsv")
    back = aggregate_all(load_features(tmp_path / "f.tsv"), aggregators=("mean",))
    for q, v in d.features.items():
        assert np.array_equal(back[q].values, v.values)


def test_feature_dim():
    d = synth_generate(SynthSpec(feature_dim=6))
    assert next(iter(d.features.values())).dimension == 6


@pytest.mark.parametrize("kw", [
    {"n_clusters": 0}, {"base_effectiveness": 0.8, "planted_gap": 0.3},
    {"noise_sd": -0.1}, {"feature_dim": 2},
])
def test_invalid_specs(kw):
    with pytest.raises(ContractError):
        SynthSpec(**kw)
