import math

import pytest

import cadloop

PLATE = {
    "category": "flat_plate",
    "initial_params": {"length": 200, "width": 50, "thickness": 10},
    "initial_material": "Carbon Steel - ASTM A105",
    "pressure_mpa": 0.5,
    "delta_mm": 100.0,
    "kappa": 1000.0,
    "stress_scale": 1.0,
    "max_rounds": 15,
    "max_tool_calls": 60,
    "seed": 3,
}


def test_von_mises_uniaxial_and_hydrostatic():
    assert cadloop.von_mises([250.0, 0, 0, 0, 0, 0]) == 250.0
    assert abs(cadloop.von_mises([7.0, 7.0, 7.0, 0, 0, 0])) <= 1e-9


def test_cost_chain():
    assert math.isclose(cadloop.cost(1.0e6, "Carbon Steel - ASTM A105"), 47.4, rel_tol=1e-12)
    with pytest.raises(cadloop.CadloopError):
        cadloop.cost(1.0, "Unobtainium")


def test_materials_and_descriptor():
    assert len(cadloop.materials()) == 5
    names = {t["name"] for t in cadloop.protocol_descriptor()["tools"]}
    assert {"generate_cad", "run_cae", "extract_results", "submit_final"} <= names


def test_episode_scores_full_reward_on_loose_task():
    log, final = cadloop.run_episode(PLATE, mesh_density=1)
    assert final.startswith("Final design:")
    score = cadloop.score_rollout(log, PLATE)
    assert score["R_cons"] == 1.0
    m = cadloop.evaluate_initial(PLATE, mesh_density=1)
    assert m["u_max_mm"] < PLATE["delta_mm"]
    assert math.isclose(m["cost"], 200 * 50 * 10 * 47.4e-6, rel_tol=1e-9)


def test_export_and_evaluate(tmp_path):
    assert cadloop.export_dataset(str(tmp_path / "ds"), 2, 1, 1, seed=5, mesh_density=1) == 4
    assert (tmp_path / "ds" / "manifest.json").exists()


def test_verify_fem():
    report = cadloop.verify_fem()
    assert report["all_pass"]
    assert report["checks"] and all(c["pass"] for c in report["checks"])
