from typing import Dict, Any, List, Optional


def find_critical_points(
    problem_file:str,
    mesh:Optional[int]=None,
    sublevel:Optional[float]=None,
    seed:Optional[int]=None,
    out:Optional[str]=None,
    force:bool=False,
) -> Dict[str, Any]:
    """Search the discretized path space for critical points of the action.

    Runs damped Newton from every seed family listed in the problem
    (constant_grid, winding or fourier), merges the results and removes
    duplicates up to periodic lifts. Needs a passing verify stage unless force is set.

    Parameters:
    - problem_file: path of the JSON problem file
    - mesh: number of mesh cells, overrides the problem
    - sublevel: action sublevel, overrides the problem
    - seed: random seed, overrides the problem
    - out: output directory, overrides the problem
    - force: skip the verification gate

    Writes critical_points.json and one CSV per path under paths/.
    """
    from morse_action.artifacts import open_problem, require_verified, save_critical_points, tool_result
    from morse_action.config import thread_count
    from morse_action.engine.critical import deduplicate, seed_sweep

    spec, workspace = open_problem(problem_file, mesh=mesh, sublevel=sublevel, seed=seed, out=out)
    require_verified(workspace, force)
    settings = spec.settings
    manifold = spec.build_manifold()
    bc = spec.build_boundary()
    lagrangian = spec.build_lagrangian()

    found = []
    for strategy in spec.seed_strategies():
        found.extend(seed_sweep(
            lagrangian, bc, strategy, manifold, settings.mesh,
            workers=thread_count(),
            dedup_action_tol=settings.dedup_action_tol,
            dedup_path_tol=settings.dedup_path_tol,
            tol=settings.newton_tol,
            max_iter=settings.newton_max_iter,
            box=settings.newton_box,
            null_tol_rel=settings.null_tol_rel,
        ))
    cps = deduplicate(found, settings.dedup_action_tol, settings.dedup_path_tol)
    records, written = save_critical_points(workspace, cps)
    report = {
        "problem": spec.name,
        "mesh": settings.mesh,
        "boundary": bc.kind,
        "strategies": [block.kind for block in spec.seeds],
        "count": len(cps),
        "critical_points": records,
    }
    path = workspace.write_json("critical_points.json", report)
    return tool_result(len(cps) > 0, report, [path] + written)
