import numpy as np
import pytest

from conftest import toy_dataset
from risksvm import risk_measures as rm
from risksvm.geometry import LabeledDataset
from risksvm.implied_measure import (
    ImpliedMeasure, implied_weights, reweighted_objective, verify_equivalence,
)
from risksvm.qp_model import LossSpec, train

RISK_SPECS = [
    LossSpec("joint_cvar", alpha=0.7, beta=0.4),
    LossSpec("asym_risk", lam=0.45),
    LossSpec("one_cvar", lam=0.55, alpha2=0.6),
    LossSpec("risk_cvar", lam=0.5, alpha2=0.75, beta2=0.5),
    LossSpec("two_risk", lam=0.6, kappa=0.7),
    LossSpec("two_cvar", lam=0.4, alpha1=0.8, alpha2=0.65, beta1=0.3, beta2=0.5),
]
TOY6 = LabeledDataset(np.array([[0.0, 0], [0, 1], [1.2, 0.4], [2, 0], [2, 1], [0.6, 0.8]]),
                      [0, 0, 0, 1, 1, 1])


def test_risk_neutral_is_uniform():
    data = toy_dataset(np.random.default_rng(0))
    spec = LossSpec("two_cvar", lam=0.3, alpha=0.5, beta=1.0)
    mu = implied_weights(spec, train(spec, data))
    m0, m1 = data.class_sizes
    assert mu.mu0 == pytest.approx(np.full(m0, 0.3 / m0), abs=1e-7)
    assert mu.mu1 == pytest.approx(np.full(m1, 0.7 / m1), abs=1e-7)
    assert verify_equivalence(mu, spec, data, train(spec, data)) <= 1e-6


def test_one_cvar_tail_weights():
    data = toy_dataset(np.random.default_rng(1), 12, 16, 2, sep=0.4)
    lam, alpha = 0.5, 0.5
    spec = LossSpec("one_cvar", lam=lam, alpha2=alpha)
    model = train(spec, data)
    mu = implied_weights(spec, model, source="density")
    m1 = data.class_sizes[1]
    top = (1 - lam) / (alpha * m1)
    assert np.all((np.isclose(mu.mu1, 0, atol=1e-12)) | (mu.mu1 <= top + 1e-12))
    tail = mu.mu1 > 1e-12
    assert np.isclose(mu.mu1, top).sum() >= int(alpha * m1) - 1
    # tail points carry the largest slacks
    assert model.slacks1[tail].min() >= model.slacks1[~tail].max() - 1e-6


@pytest.mark.parametrize("spec", RISK_SPECS, ids=lambda s: s.name)
def test_measure_invariants(spec):
    rng = np.random.default_rng(2)
    for _ in range(10):
        data = toy_dataset(rng)
        model = train(spec, data)
        for source in ("duals", "density"):
            mu = implied_weights(spec, model, source=source)
            assert mu.total == pytest.approx(1.0, abs=1e-9)
            assert np.all(mu.mu0 >= 0) and np.all(mu.mu1 >= 0)
        if spec.name == "joint_cvar":
            continue
        mu = implied_weights(spec, model, source="density")
        w0, w1 = spec.class_weights
        m0, m1 = data.class_sizes
        assert mu.mu0 * mu.loss_scale == pytest.approx(w0 * mu.zeta0 / m0)
        for zeta, z, risk in ((mu.zeta0, model.slacks0, spec.class_risks()[0]),
                              (mu.zeta1, model.slacks1, spec.class_risks()[1])):
            d = rm.EmpiricalDistribution(z)
            assert np.dot(d.weights * zeta, z) == pytest.approx(rm.evaluate(risk, d), abs=1e-9)
            if risk.kind == rm.AVAR:
                assert zeta.max() <= 1 / risk.alpha + 1e-12
            if risk.kind == rm.MSD:
                p = float(np.mean(z > rm.expectation(d)))
                assert zeta.min() >= 1 - risk.kappa * p - 1e-12
                assert zeta.max() <= 1 + risk.kappa * (1 - p) + 1e-12


@pytest.mark.parametrize("spec", RISK_SPECS, ids=lambda s: s.name)
def test_equivalence_gap(spec):
    rng = np.random.default_rng(3)
    for _ in range(20):
        data = toy_dataset(rng)
        model = train(spec, data)
        mu = implied_weights(spec, model)
        gap = verify_equivalence(mu, spec, data, model)
        assert gap <= 1e-5 * (1 + abs(model.objective))
        # the reweighted objective at the trained model equals the trained objective
        assert reweighted_objective(mu, spec.delta, model.classifier, data) == pytest.approx(
            model.objective, abs=1e-6)


def test_toy6_one_cvar():
    spec = LossSpec("one_cvar", lam=0.5, alpha2=0.5)
    model = train(spec, TOY6)
    mu = implied_weights(spec, model)
    assert verify_equivalence(mu, spec, TOY6, model) <= 1e-5


def test_perturbation_opens_gap():
    spec = LossSpec("one_cvar", lam=0.5, alpha2=0.5)
    model = train(spec, TOY6)
    mu = implied_weights(spec, model)
    for cls in (0, 1):
        bad = mu.perturbed(1.1, cls=cls)
        assert bad.total == pytest.approx(1.0)
        assert verify_equivalence(bad, spec, TOY6, model) > 1e-7


def test_huber_and_nonoptimal_rejected():
    data = toy_dataset(np.random.default_rng(4))
    with pytest.raises(ValueError):
        implied_weights(LossSpec("huber"), train(LossSpec("huber"), data))
    spec = RISK_SPECS[2]
    model = train(spec, data)
    model.status = "max_iter"
    with pytest.raises(ValueError):
        implied_weights(spec, model)


def test_csv_export(tmp_path):
    mu = ImpliedMeasure(np.array([0.25, 0.25]), np.array([0.5]), np.ones(2), np.ones(1), (0.5, 0.5))
    path = tmp_path / "mu.csv"
    mu.write_csv(path)
    assert path.read_text().splitlines() == ["class,index,weight", "0,0,0.25", "0,1,0.25", "1,0,0.5"]
