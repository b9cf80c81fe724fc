import json

import numpy as np
import pytest

from signid.errors import (
    CovarianceFormatError,
    DimensionMismatch,
    LatentNodesPresent,
    NotHurwitz,
    ResampleBudgetExhausted,
)
from signid.ou import (
    ModelSampler,
    OUModel,
    SamplerConfig,
    check_m_faithful,
    covariance_from_csv,
    covariance_from_dict,
    faithfulness_violations,
    graph_hash,
    is_hurwitz,
    load_covariance,
    sample_model,
    stationary_covariance,
)

from conftest import corr3


def eig_hurwitz(a):
    return bool(np.max(np.linalg.eigvals(a).real) < 0)


@pytest.mark.parametrize(
    "a, expected",
    [
        (-np.eye(3), True),
        ([[0, 1], [-1, 0]], False),
        ([[1.0]], False),
        ([[-1, 5], [0, -1]], True),
        ([[-1, 0], [0, 0]], False),
    ],
)
def test_is_hurwitz_examples(a, expected):
    assert is_hurwitz(np.array(a, dtype=float)) is expected


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
def test_is_hurwitz_matches_eigenvalues(d):
    rng = np.random.default_rng(100 + d)
    checked = 0
    for _ in range(300):
        a = rng.uniform(-10, 10, size=(d, d))
        lam = np.linalg.eigvals(a)
        # skip draws within numerical reach of the stability boundary
        if np.min(np.abs(lam.real)) < 1e-6 * np.max(np.abs(lam)):
            continue
        assert is_hurwitz(a) == eig_hurwitz(a)
        checked += 1
    assert checked > 250


def test_stationary_covariance_examples(cat):
    g = cat["cause-effect"].graph
    m = OUModel(g, [[-1, 0], [1, -1]], [1, 1])
    np.testing.assert_allclose(stationary_covariance(m), [[0.5, 0.25], [0.25, 0.75]], atol=1e-14)
    m2 = OUModel(g, -np.eye(2), [2, 2])
    np.testing.assert_allclose(stationary_covariance(m2), np.eye(2), atol=1e-14)
    with pytest.raises(NotHurwitz):
        stationary_covariance(OUModel(g, [[1, 0], [1, -1]], [1, 1]))


def test_model_validation(cat):
    g = cat["cause-effect"].graph
    with pytest.raises(ValueError):
        OUModel(g, [[-1, 1], [1, -1]], [1, 1])  # Y->H is not an edge
    with pytest.raises(ValueError):
        OUModel(g, -np.eye(2), [1, 0])
    with pytest.raises(DimensionMismatch):
        OUModel(g, -np.eye(3), [1, 1, 1])
    with pytest.raises(ValueError):
        OUModel(g, -np.eye(2), [1, 1], minimal=True)
    m = OUModel(g, [[-1, 0], [2, -1]], [1, 1], minimal=True)
    assert m.edge_value(("H", "Y")) == 2.0


@pytest.mark.parametrize("a", [0.5, 2.0, 10.0])
def test_scale_invariance_of_forward_map(cat, a):
    g = cat["confounding"].graph
    model, sigma = sample_model(g, SamplerConfig(seed=5))
    scaled = stationary_covariance(model.scaled(a))
    np.testing.assert_allclose(scaled, sigma, rtol=1e-8)


def test_m_faithfulness_examples(cat):
    iv = cat["iv"].graph
    model, sigma = sample_model(iv, SamplerConfig(seed=1))
    assert check_m_faithful(sigma, iv)
    assert abs(sigma[0, 1]) < 1e-12
    chain = cat["chain"].graph
    s = corr3(0.5, 0.0, 0.3)
    assert not check_m_faithful(s, chain)
    assert faithfulness_violations(s, chain) == [("H", "Y")]
    assert not check_m_faithful(np.eye(3), cat["confounding"].graph)
    assert not check_m_faithful(corr3(0.9, 0.9, -0.9), chain)  # not PD
    with pytest.raises(DimensionMismatch):
        check_m_faithful(np.eye(2), chain)


def test_sampler_examples(cat):
    g = cat["cause-effect"].graph
    model, sigma = sample_model(g, SamplerConfig(seed=42))
    assert model.edge_value(("H", "Y")) != 0
    assert np.all(model.diffusion > 0)
    assert np.all(np.linalg.eigvalsh(sigma) > 0)
    _, s3 = sample_model(cat["three-cycle"].graph, SamplerConfig(seed=42))
    assert np.all(np.abs(s3) > 1e-9)


def test_sampler_is_deterministic_and_index_addressable(cat):
    g = cat["iv"].graph
    a = ModelSampler(g, SamplerConfig(seed=9))
    b = ModelSampler(g, SamplerConfig(seed=9))
    first = [a.draw(i) for i in range(5)]
    # drawing out of order must not change anything
    for i in reversed(range(5)):
        d = b.draw(i)
        np.testing.assert_array_equal(d.model.drift, first[i].model.drift)
        np.testing.assert_array_equal(d.sigma, first[i].sigma)
    c = ModelSampler(g, SamplerConfig(seed=10)).draw(0)
    assert not np.array_equal(c.model.drift, first[0].model.drift)


def test_graph_hash_separates_structures(cat):
    hashes = {graph_hash(e.graph) for e in cat.values()}
    assert len(hashes) == 6


def test_sampler_respects_ranges(cat):
    g = cat["confounding"].graph
    cfg = SamplerConfig(drift_range=(-2, 3), diffusion_range=(1, 2), seed=3)
    sampler = ModelSampler(g, cfg)
    mask = np.zeros((3, 3), dtype=bool)
    for i, j in g.drift_support():
        mask[i, j] = True
    for i in range(50):
        d = sampler.draw(i)
        assert np.all((d.model.drift[mask] >= -2) & (d.model.drift[mask] < 3))
        assert np.all(d.model.drift[~mask] == 0)
        assert np.all((d.model.diffusion >= 1) & (d.model.diffusion < 2))


def test_negative_self_loop_option(cat):
    g = cat["cycle-iv"].graph
    sampler = ModelSampler(g, SamplerConfig(seed=4, negative_self_loops=True))
    plain = ModelSampler(g, SamplerConfig(seed=4))
    neg_rej = plain_rej = 0
    for i in range(100):
        d = sampler.draw(i)
        assert np.all(np.diag(d.model.drift) < 0)
        neg_rej += d.hurwitz_rejections
        plain_rej += plain.draw(i).hurwitz_rejections
    assert neg_rej < plain_rej


def test_iv_acceptance_rate_positive(cat):
    g = cat["iv"].graph
    sampler = ModelSampler(g, SamplerConfig(seed=0))
    attempts = accepted = 0
    i = 0
    while attempts < 1000:
        d = sampler.draw(i)
        attempts += d.hurwitz_rejections + 1
        accepted += d.faithful
        i += 1
    assert accepted > 0


def test_budget_exhaustion(cat):
    g = cat["cycle-iv"].graph
    sampler = ModelSampler(g, SamplerConfig(seed=0, max_resamples=1))
    with pytest.raises(ResampleBudgetExhausted) as info:
        for i in range(100):
            sampler.sample(i)
    assert info.value.hurwitz_rejections >= 1


def test_sampler_rejects_latent(cat):
    with pytest.raises(LatentNodesPresent):
        ModelSampler(cat["iv"].graph.with_latent(["H"]))


@pytest.mark.parametrize(
    "kw",
    [
        {"drift_range": (1, 1)},
        {"diffusion_range": (-1, 2)},
        {"max_resamples": 0},
        {"zero_tol": 0},
        {"drift_range": (0, 1), "negative_self_loops": True},
    ],
)
def test_sampler_config_validation(kw):
    with pytest.raises(ValueError):
        SamplerConfig(**kw)


def test_sign_of_cause_effect_covariance_matches_alpha(cat):
    g = cat["cause-effect"].graph
    sampler = ModelSampler(g, SamplerConfig(seed=11))
    for i in range(300):
        model, sigma = sampler.sample(i)
        assert np.sign(sigma[0, 1]) == np.sign(model.edge_value(("H", "Y")))


def test_sign_of_chain_covariances_matches_alpha(cat):
    g = cat["chain"].graph
    sampler = ModelSampler(g, SamplerConfig(seed=12))
    for i in range(300):
        model, sigma = sampler.sample(i)
        assert np.sign(sigma[0, 2]) * np.sign(sigma[0, 1]) == np.sign(model.edge_value(("X", "Y")))


def test_covariance_csv(cat, tmp_path):
    g = cat["cause-effect"].graph
    s = covariance_from_csv("0.5,0.25\n0.25,0.75\n", g)
    np.testing.assert_array_equal(s, [[0.5, 0.25], [0.25, 0.75]])
    # header row reorders into graph order
    s2 = covariance_from_csv("Y,H\n0.75,0.25\n0.25,0.5\n", g)
    np.testing.assert_array_equal(s2, s)
    # tiny asymmetry is averaged away
    s3 = covariance_from_csv("0.5,0.25\n0.2500000001,0.75\n", g)
    assert s3[0, 1] == s3[1, 0]
    for bad in ["0.5,0.25\n0.3,0.75\n", "a,b,c\n1,2\n", "", "1,2\n3\n", "1,0\n0,1\n0,0\n"]:
        with pytest.raises(CovarianceFormatError):
            covariance_from_csv(bad, g)


def test_covariance_json(cat, tmp_path):
    g = cat["confounding"].graph
    sigma = corr3(0.3, 0.2, 0.5)
    perm = [2, 0, 1]
    data = {"nodes": ["Y", "H", "X"], "sigma": sigma[np.ix_(perm, perm)].tolist()}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(data))
    np.testing.assert_allclose(load_covariance(p, g), sigma)
    with pytest.raises(CovarianceFormatError):
        covariance_from_dict({"nodes": ["A", "B", "C"], "sigma": sigma.tolist()}, g)
    with pytest.raises(CovarianceFormatError):
        covariance_from_dict({"sigma": sigma.tolist()}, g)
    p.write_text("{")
    with pytest.raises(CovarianceFormatError):
        load_covariance(p, g)
