from typing import Dict, Any, Optional


def probe_hessian_continuity(
    problem_file:str,
    mesh:Optional[int]=None,
    sublevel:Optional[float]=None,
    seed:Optional[int]=None,
    out:Optional[str]=None,
    force:bool=False,
    dump_matrices:bool=False,
) -> Dict[str, Any]:
    """Probe whether the discrete Hessian of the action stays continuous under mesh refinement.

    At each mesh of the problem's probe block the constant path at the origin
    is perturbed on a single cell of width 1/N and the Hessian jump is
    measured against the H^1 product. A gap that stays bounded below as N
    grows means the action is not twice continuously differentiable on H^1.

    Parameters:
    - problem_file: path of the JSON problem file
    - mesh: when given, probe only at this mesh
    - sublevel: unused, accepted for a uniform signature
    - seed: unused, accepted for a uniform signature
    - out: output directory, overrides the problem
    - force: unused, accepted for a uniform signature
    - dump_matrices: also write the Hessian H and the H^1 Gram matrix G of the unperturbed path at every mesh under matrices/

    Writes probe.json.
    """
    import numpy as np
    from morse_action.artifacts import open_problem, tool_result
    from morse_action.engine.manifold import BoundaryCondition
    from morse_action.engine.pathspace import constant_path, dump_matrix, hessian, hessian_continuity_probe

    spec, workspace = open_problem(problem_file, sublevel=sublevel, seed=seed, out=out)
    manifold = spec.build_manifold()
    lagrangian = spec.build_lagrangian()
    meshes = [mesh] if mesh is not None else list(spec.probe.meshes)
    base = constant_path(manifold, np.zeros(manifold.dim), min(meshes))
    report = hessian_continuity_probe(lagrangian, base, meshes, v=spec.probe.v, w=spec.probe.w)
    report["problem"] = spec.name
    dumped = []
    if dump_matrices:
        workspace.subdir("matrices")
        for row in report["meshes"]:
            N = row["mesh"]
            pencil = hessian(lagrangian, base.resampled(N), BoundaryCondition.free(), product="h1")
            row["matrices"] = {"hessian": f"matrices/probe_N{N}_H.txt", "gram": f"matrices/probe_N{N}_G.txt"}
            dump_matrix(workspace.path(row["matrices"]["hessian"]), pencil.H)
            dump_matrix(workspace.path(row["matrices"]["gram"]), pencil.G)
            dumped.extend(workspace.path(ref) for ref in row["matrices"].values())
    path = workspace.write_json("probe.json", report)
    return tool_result(True, report, [path] + dumped)
