import json

import numpy as np
import pytest

from signid.closed_form import (
    ConditionVerdict,
    LatentVerdict,
    Sign,
    closed_form,
    confounding_conditions,
    cycle3_conditions,
    cycle_iv_ratio,
    latent_verdict,
    sign_cause_effect,
    sign_chain,
    sign_cycle_iv,
    sign_iv,
)
from signid.errors import ZeroDenominatorEntry
from signid.feasibility import pointwise_classify
from signid.ou import ModelSampler, SamplerConfig

from conftest import corr3


def accepted(entry, n, seed):
    sampler = ModelSampler(entry.graph, SamplerConfig(seed=seed))
    return [sampler.sample(i) for i in range(n)]


def test_cause_effect_sign():
    assert sign_cause_effect([[0.5, 0.25], [0.25, 0.75]]) is Sign.PLUS
    assert sign_cause_effect([[0.5, -0.25], [-0.25, 0.75]]) is Sign.MINUS
    with pytest.raises(ZeroDenominatorEntry):
        sign_cause_effect(np.eye(2))


@pytest.mark.parametrize(
    "hx, hy, expected",
    [(-0.3, -0.2, Sign.PLUS), (0.3, 0.2, Sign.PLUS), (0.3, -0.2, Sign.MINUS), (-0.3, 0.2, Sign.MINUS)],
)
def test_chain_sign(hx, hy, expected):
    assert sign_chain(corr3(hx, hy, 0.4)) is expected


def _zxy(zx, zy, xy):
    return np.array([[1, zx, zy], [zx, 1, xy], [zy, xy, 1]], dtype=float)


def test_iv_sign_uses_observed_entries_only():
    s3 = _zxy(0.3, -0.2, 0.1)
    assert sign_iv(s3) is Sign.MINUS
    s4 = np.eye(4)
    s4[np.ix_([0, 2, 3], [0, 2, 3])] = s3
    s4[1, 2] = s4[2, 1] = 0.4
    assert sign_iv(s4) is Sign.MINUS
    with pytest.raises(ZeroDenominatorEntry):
        sign_iv(_zxy(0.0, 0.2, 0.1))


def test_cycle_iv_branches():
    # r = zy * xy / zx
    assert sign_cycle_iv(_zxy(0.4, 0.4, 0.5)) is Sign.PLUS  # r = 0.5
    assert sign_cycle_iv(_zxy(-0.4, 0.4, -0.5)) is Sign.MINUS  # r = 0.5, zy/zx < 0
    assert sign_cycle_iv(_zxy(0.2, 0.4, 0.75)) is Sign.MINUS  # r = 1.5, negated
    assert sign_cycle_iv(_zxy(0.3, 0.6, 0.5)) is Sign.BOUNDARY  # r = 1
    r, q = cycle_iv_ratio(_zxy(0.3, 0.6, 0.5))
    assert r == pytest.approx(1.0) and q == pytest.approx(2.0)


def test_cycle3_plugin_values():
    rep = cycle3_conditions(corr3(0.5, 0.5, 0.5))
    assert rep.values["d"] == pytest.approx(0.5)
    assert json.loads(json.dumps(rep.to_dict()))["graph"] == "three-cycle"


def test_cycle3_undefined_b():
    # r(H,Y) = r(H,X) * r(X,Y) leaves b undefined
    with pytest.raises(ZeroDenominatorEntry):
        cycle3_conditions(corr3(0.5, 0.2, 0.4))


def test_confounding_sign_mismatch_is_identifiable():
    rng = np.random.default_rng(0)
    for _ in range(200):
        hx, hy = rng.uniform(-0.9, 0.9, size=2)
        xy = -np.sign(hx * hy) * rng.uniform(0.01, 0.5)
        s = corr3(hx, hy, xy)
        if np.min(np.linalg.eigvalsh(s)) <= 0 or min(abs(hx), abs(hy)) < 1e-3:
            continue
        rep = confounding_conditions(s)
        assert rep.values["c2_sign_match"] is False
        assert rep.verdict is ConditionVerdict.IDENTIFIABLE


def test_confounding_boxes():
    rng = np.random.default_rng(1)
    for _ in range(50):
        ident = corr3(rng.uniform(0.001, 0.002), rng.uniform(-0.001, 0), rng.uniform(0.001, 0.002))
        assert confounding_conditions(ident).verdict is ConditionVerdict.IDENTIFIABLE
        high = corr3(rng.uniform(0.001, 0.0015), rng.uniform(0.099, 0.1), rng.uniform(0.9, 0.95))
        rep = confounding_conditions(high)
        # the ratio itself is large; a zero-effect model needs 0 < ratio < 1
        assert rep.values["ratio"] > 1
        assert rep.verdict is ConditionVerdict.IDENTIFIABLE


def test_confounding_ratio_identity():
    rep = confounding_conditions(corr3(0.3, 0.4, 0.5))
    v = rep.values
    assert v["ratio"] == pytest.approx((v["p"] + v["q"]) / v["K"])


def test_confounding_ratio_above_one_implies_sign_match(cat):
    for model, sigma in accepted(cat["confounding"], 400, seed=13):
        rep = confounding_conditions(sigma)
        if rep.values["ratio"] > 1:
            assert rep.values["c2_sign_match"]


@pytest.mark.parametrize("name", ["cause-effect", "chain", "iv", "cycle-iv"])
def test_formula_matches_ground_truth_and_lp(cat, name):
    e = cat[name]
    for model, sigma in accepted(e, 150, seed=17):
        res = closed_form(name, sigma)
        truth = int(np.sign(model.edge_value(e.target)))
        assert res.sign.value_int == truth
        assert pointwise_classify(e.graph, sigma, e.target, reference=model).sign == truth


@pytest.mark.parametrize("name", ["confounding", "three-cycle"])
def test_conditions_match_lp(cat, name):
    e = cat[name]
    checked = 0
    for model, sigma in accepted(e, 200, seed=19):
        res = closed_form(name, sigma)
        if res.identifiable is None:
            continue
        lp = pointwise_classify(e.graph, sigma, e.target, reference=model)
        assert res.identifiable == lp.status.identifiable
        checked += 1
    assert checked >= 190


@pytest.mark.parametrize(
    "name, expected",
    [
        ("cause-effect", LatentVerdict.NON_IDENTIFIABLE),
        ("confounding", LatentVerdict.NON_IDENTIFIABLE),
        ("iv", LatentVerdict.IDENTIFIABLE),
        ("cycle-iv", LatentVerdict.IDENTIFIABLE),
        ("chain", LatentVerdict.UNSUPPORTED),
        ("three-cycle", LatentVerdict.UNSUPPORTED),
    ],
)
def test_latent_verdicts(name, expected):
    assert latent_verdict(name) is expected


def test_unknown_names():
    with pytest.raises(KeyError):
        latent_verdict("nope")
    with pytest.raises(KeyError):
        closed_form("nope", np.eye(2))


def test_rescaling_does_not_change_formulas(cat):
    for model, sigma in accepted(cat["three-cycle"], 30, seed=23):
        scale = np.diag([0.1, 5.0, 40.0])
        a = cycle3_conditions(sigma).verdict
        b = cycle3_conditions(scale @ sigma @ scale).verdict
        assert a is b
