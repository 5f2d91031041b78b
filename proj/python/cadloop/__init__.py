"""Python access to the cadloop design-loop core."""

import json as _json

from ._cadloop import CadloopError, cost, export_dataset, von_mises
from . import _cadloop

__all__ = [
    "CadloopError",
    "cost",
    "evaluate",
    "evaluate_initial",
    "export_dataset",
    "materials",
    "protocol_descriptor",
    "run_episode",
    "score_rollout",
    "verify_fem",
    "von_mises",
]


def _dump(obj):
    return obj if isinstance(obj, str) else _json.dumps(obj)


def materials():
    return _json.loads(_cadloop.materials_json())


def protocol_descriptor():
    return _json.loads(_cadloop.protocol_descriptor_json())


def evaluate_initial(task, mesh_density=2):
    return _json.loads(_cadloop.evaluate_initial(_dump(task), mesh_density))


def score_rollout(log_jsonl, task):
    return _json.loads(_cadloop.score_rollout(log_jsonl, _dump(task)))


def run_episode(task, policy="heuristic", seed=0, mesh_density=2, failures="0,0,0"):
    """Returns (rollout log as JSONL text, final answer text)."""
    return _cadloop.run_episode(_dump(task), policy, seed, mesh_density, failures)


def evaluate(tasks_dir, logs_dir, mesh_density=2):
    return _json.loads(_cadloop.evaluate(str(tasks_dir), str(logs_dir), mesh_density))


def verify_fem():
    return _json.loads(_cadloop.verify_fem_json())
