"""Stage artifacts in the output directory.

JSON reports are written with sorted keys and a fixed layout so that identical
inputs give byte-identical files; bulk series go to CSV.
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import pydantic_core

from .config import ProblemSpec, configure_logging, load_problem
from .engine.critical import CriticalPoint
from .engine.errors import MissingArtifact, MorseActionError
from .engine.manifold import BoundaryCondition, ChartedManifold
from .engine.pathspace import DiscretePath

logger = logging.getLogger("MorseAction.artifacts")

STAGES = {
    "verify": "verify.json",
    "find": "critical_points.json",
    "index": "index.json",
    "flow": "flow.json",
    "complex": "complex.json",
    "homology": "homology.json",
    "probe-c2": "probe.json",
}


def dumps(payload:Any) -> str:
    return json.dumps(pydantic_core.to_jsonable_python(payload), sort_keys=True, indent=2) + "\n"


class Workspace:
    """ the output directory of one problem """

    def __init__(self, directory:str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)

    def path(self, *parts:str) -> str:
        return os.path.join(self.directory, *parts)

    def subdir(self, name:str) -> str:
        path = self.path(name)
        os.makedirs(path, exist_ok=True)
        return path

    def write_json(self, name:str, payload:Any) -> str:
        path = self.path(name)
        with open(path, "w") as f:
            f.write(dumps(payload))
        logger.info(f"Wrote {path}")
        return path

    def read_json(self, name:str, stage:str) -> Dict[str, Any]:
        path = self.path(name)
        if not os.path.exists(path):
            raise MissingArtifact(f"Missing {name}: run the {stage} stage first", stage=stage)
        with open(path, "r") as f:
            return json.load(f)

    def read_stage(self, stage:str) -> Dict[str, Any]:
        return self.read_json(STAGES[stage], stage)


def open_problem(problem_file:str, mesh:Optional[int]=None, sublevel:Optional[float]=None,
                 seed:Optional[int]=None, out:Optional[str]=None) -> Tuple[ProblemSpec, Workspace]:
    """ load the problem, create its output directory and start logging there """
    spec = load_problem(problem_file, mesh=mesh, sublevel=sublevel, seed=seed, out=out)
    workspace = Workspace(spec.output_dir)
    configure_logging(workspace.path("morse_action.log"))
    return spec, workspace


def require_verified(workspace:Workspace, force:bool) -> Optional[Dict[str, Any]]:
    if force:
        return None
    report = workspace.read_stage("verify")
    if not report.get("passed", False):
        raise MorseActionError("Problem did not pass verification, rerun with force to continue anyway")
    return report


def save_critical_points(workspace:Workspace, cps:List[CriticalPoint]) -> Tuple[List[Dict[str, Any]], List[str]]:
    paths_dir = workspace.subdir("paths")
    written = []
    records = []
    for cp in cps:
        ref = os.path.join("paths", f"{cp.id}.csv")
        cp.path.to_csv(os.path.join(paths_dir, f"{cp.id}.csv"))
        written.append(workspace.path(ref))
        records.append(cp.to_record(ref))
    return records, written


def load_critical_points(workspace:Workspace, manifold:ChartedManifold,
                         bc:BoundaryCondition, stage:str="find") -> List[CriticalPoint]:
    """ rebuild critical points from critical_points.json (or index.json) and their path files """
    report = workspace.read_stage(stage)
    cps = []
    for record in report["critical_points"]:
        path = DiscretePath.from_csv(workspace.path(record["path_csv_ref"]), manifold)
        cps.append(CriticalPoint(path=path, bc=bc, action_value=record["action"], morse_index=record["index"],
                                 nullity=record["nullity"], residual=record["residual"],
                                 spectral_gap=record["spectral_gap"], null_tol=record["null_tol"],
                                 id=record["id"]))
    return cps


def tool_result(success:bool, report:Dict[str, Any], artifacts:List[str]) -> Dict[str, Any]:
    return {"success": bool(success), "report": report, "artifacts": list(artifacts)}
