import json

import numpy as np
import pytest

from dpmult.datamodel import Dataset
from dpmult.dataio import preprocess
from dpmult.harness import AuditConfig, plan_sample_size, run_audit, stream_index
from dpmult.metrics import disagreement_summary
from dpmult.multiplicity import error_bound, multi_error_bound


def _toy():
    x = np.array([[2.0, 0.1], [1.5, -0.2], [-2.0, 0.3], [-1.7, 0.0]])
    ds = Dataset(x, [1, 1, 0, 0])
    train, test, _ = preprocess(ds, ds)
    return train, test


def test_config_validation():
    with pytest.raises(ValueError):
        AuditConfig(epsilon_grid=())
    with pytest.raises(ValueError):
        AuditConfig(epsilon_grid=(1.0, -0.5))
    with pytest.raises(ValueError):
        AuditConfig(m_models=1)
    with pytest.raises(ValueError):
        AuditConfig(mechanism="dp_sgd")
    with pytest.raises(ValueError, match="delta"):
        AuditConfig(mechanism="output_perturbation", delta=0.0)


def test_stream_index_layout():
    assert stream_index(0, 5) == 5
    assert stream_index(2, 7) == 2 * 2**32 + 7


def test_noiseless_limit_has_no_disagreement():
    train, test = _toy()
    rep = run_audit(train, test, AuditConfig(epsilon_grid=(1e9,), m_models=2, lambda_reg=1.0))
    assert rep.cells[0].ok
    assert rep.cells[0].disagreement.mean() == 0.0


def test_report_shapes_and_consistency(small_synthetic):
    train, test = small_synthetic
    rep = run_audit(train, test, AuditConfig(epsilon_grid=(0.5, 2.0), m_models=12, root_seed=3))
    assert not rep.partial
    for cell in rep.cells:
        assert cell.disagreement.shape == (test.n,)
        assert cell.viable_range.shape == (test.n,)
        for name in ("auc", "accuracy", "f1"):
            assert len(cell.performance[name].per_model) == 12
        d = cell.to_dict()
        assert d["disagreement"]["summary"] == disagreement_summary(np.array(d["disagreement"]["per_example"])).to_dict()
        assert cell.ensemble.seeds == tuple(stream_index(rep.cells.index(cell), j) for j in range(12))
    assert rep.bounds["single"] == error_bound(12, 0.05)
    assert rep.bounds["uniform"] == multi_error_bound(12, test.n, 0.05)


def test_schedule_independence(small_synthetic):
    train, test = small_synthetic
    cfg = AuditConfig(epsilon_grid=(0.5, 1.5), m_models=10, root_seed=11)
    a = json.dumps(run_audit(train, test, cfg, workers=1).to_dict())
    b = json.dumps(run_audit(train, test, cfg, workers=3).to_dict())
    assert a == b


def test_output_perturbation_cells(small_synthetic):
    train, test = small_synthetic
    rep = run_audit(
        train, test,
        AuditConfig(mechanism="output_perturbation", epsilon_grid=(0.5, 5.0), delta=1e-5, m_models=40),
    )
    lo, hi = rep.cells
    assert lo.sigma > hi.sigma
    assert lo.disagreement.mean() >= hi.disagreement.mean()
    assert "theta_nonprivate" in rep.data_info


def test_failed_cell_is_recorded(small_synthetic):
    train, test = small_synthetic
    rep = run_audit(train, test, AuditConfig(epsilon_grid=(1.0,), m_models=3, max_iters=1))
    cell = rep.cells[0]
    assert not cell.ok and rep.partial
    assert "ConvergenceError" in cell.error
    assert cell.to_dict()["status"] == "failed"


def test_guarantee_not_met_is_stamped(small_synthetic):
    train, test = small_synthetic
    rep = run_audit(train, test, AuditConfig(epsilon_grid=(1.0,), m_models=5, target_alpha=0.08, target_rho=0.05))
    assert rep.bounds["required_m"] == 4821
    assert rep.bounds["guarantee_met"] is False
    assert any("guarantee not met" in n for n in rep.notes)


def test_group_disparities_in_cells():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(120, 2))
    y = (x[:, 0] > 0).astype(int)
    groups = tuple("ab"[i % 2] for i in range(120))
    ds = Dataset(x, y, group=groups)
    train, test, _ = preprocess(ds, ds)
    rep = run_audit(train, test, AuditConfig(epsilon_grid=(1.0,), m_models=6))
    labels = [g.group_label for g in rep.cells[0].groups]
    assert labels == ["a", "b"]
    assert sum(g.count for g in rep.cells[0].groups) == 120


def test_plan_examples():
    plan = plan_sample_size(0.08, 0.05, 1)
    assert plan.m_single == 4821
    assert plan.bound_single <= 0.08
    p1, p10 = plan_sample_size(0.08, 0.05, 1), plan_sample_size(0.08, 0.05, 10)
    assert p10.m_uniform < 2 * p1.m_uniform
    small = plan_sample_size(0.5, 0.5, 1)
    assert small.m_single < 200
    assert error_bound(small.m_single, 0.5) <= 0.5
    assert multi_error_bound(p10.m_uniform, 10, 0.05) <= 0.08 < multi_error_bound(p10.m_uniform - 1, 10, 0.05)
