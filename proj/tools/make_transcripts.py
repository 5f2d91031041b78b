#!/usr/bin/env python3
"""Regenerates tests/transcripts/*.jsonl by driving `cadloop serve` over stdio.

Usage: make_transcripts.py <cadloop binary> <output dir>
"""

import json
import pathlib
import subprocess
import sys

MESH_DENSITY = 1
STEEL = "Carbon Steel - ASTM A105"

TASK = {
    "category": "flat_plate",
    "initial_params": {"length": 200, "width": 50, "thickness": 10},
    "initial_material": STEEL,
    "pressure_mpa": 0.5,
    "delta_mm": 0.05,
    "kappa": 10.0,
    "stress_scale": 1.0,
    "max_rounds": 15,
    "max_tool_calls": 60,
    "seed": 1,
}

PARAMS = {"length": 200, "width": 50, "thickness": 10}


def req(call_id, tool, args=None, episode="ep-000001"):
    r = {"call_id": call_id, "tool": tool, "args": args or {}}
    if episode is not None:
        r["episode_id"] = episode
    return r


def design(prefix, geom, res, material=STEEL, params=PARAMS, episode="ep-000001"):
    return [
        req(prefix + "1", "generate_cad", {"category": "flat_plate", "parameters": params}, episode),
        req(prefix + "2", "run_cae", {"geometry_id": geom, "material": material}, episode),
        req(prefix + "3", "extract_results", {"result_id": res}, episode),
        req(prefix + "4", "compute_cost", {"geometry_id": geom, "material": material}, episode),
    ]


FINAL = ('Final design:\n{"category": "flat_plate", "material": "' + STEEL +
         '", "parameters": {"length": 200, "width": 50, "thickness": 10}}')

SCENARIOS = {
    "basic_episode": [
        req("o1", "open_episode", {"task": TASK}, None),
        *design("a", "geom-1", "res-1"),
        *design("b", "geom-2", "res-2", params={"length": 200, "width": 50, "thickness": 14}),
        req("s1", "submit_final", {"text": FINAL}),
        req("l1", "get_rollout_log"),
        req("x1", "close_episode"),
    ],
    "protocol_errors": [
        "{not json",
        {"call_id": "e0", "args": {}},
        req("e1", "generate_cad", {"category": "flat_plate", "parameters": PARAMS}, "ep-000009"),
        req("o1", "open_episode", {"task": TASK}, None),
        req("e2", "mill_part"),
        req("e3", "generate_cad", {"category": "teapot", "parameters": {}}),
        req("e4", "generate_cad", {"category": "flat_plate",
                                   "parameters": {"length": 900, "width": 50, "thickness": 10}}),
        req("e5", "generate_cad", {"category": "flat_plate", "parameters": {"length": 200}}),
        req("e6", "run_cae", {"geometry_id": "geom-4", "material": STEEL}),
        req("e7", "extract_results", {"result_id": "res-1"}),
        req("e8", "generate_cad", {"category": "flat_plate", "parameters": PARAMS}),
        req("e9", "compute_cost", {"geometry_id": "geom-1", "material": "Unobtainium"}),
        req("s1", "submit_final", {"text": "no json here"}),
        req("e10", "generate_cad", {"category": "flat_plate", "parameters": PARAMS}),
        req("s2", "submit_final", {"text": FINAL}),
        req("l1", "get_rollout_log"),
    ],
    "budget_exhaustion": [
        req("o1", "open_episode", {"task": {**TASK, "max_tool_calls": 3}}, None),
        *design("a", "geom-1", "res-1"),
        req("z1", "generate_cad", {"category": "flat_plate", "parameters": PARAMS}),
        req("l1", "get_rollout_log"),
        req("s1", "submit_final", {"text": FINAL}),
        req("l2", "get_rollout_log"),
    ],
    "injected_failures": [
        req("o1", "open_episode",
            {"task": TASK, "failures": {"p_regen": 0.0, "p_mesh": 0.0, "p_solver": 1.0}}, None),
        *design("a", "geom-1", "res-1"),
        req("o2", "open_episode",
            {"task": TASK, "failures": {"p_regen": 1.0, "p_mesh": 0.0, "p_solver": 0.0, "seed": 5}},
            None),
        req("b1", "generate_cad", {"category": "flat_plate", "parameters": PARAMS}, "ep-000002"),
        req("l1", "get_rollout_log", episode="ep-000002"),
    ],
}


def main():
    binary, out_dir = sys.argv[1], pathlib.Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, requests in SCENARIOS.items():
        lines = [r if isinstance(r, str) else json.dumps(r) for r in requests]
        proc = subprocess.run([binary, "serve", "--mesh-density", str(MESH_DENSITY)],
                              input="\n".join(lines) + "\n", capture_output=True, text=True,
                              check=True)
        responses = proc.stdout.splitlines()
        assert len(responses) == len(lines), name
        with open(out_dir / f"{name}.jsonl", "w") as f:
            f.write(json.dumps({"mesh_density": MESH_DENSITY}) + "\n")
            for line, resp in zip(lines, responses):
                f.write(json.dumps({"request": line, "response": json.loads(resp)}) + "\n")


if __name__ == "__main__":
    main()
