from typing import Dict, Any, Optional


def build_morse_complex(
    problem_file:str,
    mesh:Optional[int]=None,
    sublevel:Optional[float]=None,
    seed:Optional[int]=None,
    out:Optional[str]=None,
    force:bool=False,
) -> Dict[str, Any]:
    """Assemble the boundary matrices of the Morse complex from the connection counts.

    d_k has one row per generator of index k - 1 and one column per generator
    of index k. The composition d_(k-1) d_k must vanish exactly, otherwise
    the stage fails.

    Parameters:
    - problem_file: path of the JSON problem file
    - mesh: number of mesh cells, overrides the problem
    - sublevel: action sublevel, overrides the problem
    - seed: random seed, overrides the problem
    - out: output directory, overrides the problem
    - force: unused, accepted for a uniform signature

    Writes complex.json.
    """
    from morse_action.artifacts import open_problem, tool_result
    from morse_action.engine.morse_complex import boundary_matrices

    spec, workspace = open_problem(problem_file, mesh=mesh, sublevel=sublevel, seed=seed, out=out)
    flow_report = workspace.read_stage("flow")
    generators = {int(k): list(v) for k, v in flow_report["generators"].items()}
    data = boundary_matrices(generators, flow_report["counts"], flow_report["sublevel"],
                             connection_log=flow_report["connections"], mode=flow_report["mode"])
    report = {
        "problem": spec.name,
        "mesh": flow_report["mesh"],
        "ranks": {str(k): data.count(k) for k in sorted(data.generators)},
        **data.to_record(),
    }
    path = workspace.write_json("complex.json", report)
    return tool_result(True, report, [path])
