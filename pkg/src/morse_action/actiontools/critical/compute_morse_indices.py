from typing import Dict, Any, Optional


def compute_morse_indices(
    problem_file:str,
    mesh:Optional[int]=None,
    sublevel:Optional[float]=None,
    seed:Optional[int]=None,
    out:Optional[str]=None,
    force:bool=False,
    dump_matrices:bool=False,
) -> Dict[str, Any]:
    """Morse index, nullity and spectral gap of every critical point found.

    The index is the number of negative eigenvalues of the Hessian pencil
    against the <.,.>_0 product at the point. Each point is also re-solved on
    the doubled mesh, its index there is reported next to the original.

    Parameters:
    - problem_file: path of the JSON problem file
    - mesh: number of mesh cells, overrides the problem
    - sublevel: action sublevel, overrides the problem
    - seed: random seed, overrides the problem
    - out: output directory, overrides the problem
    - force: report degenerate points below the sublevel without failing
    - dump_matrices: also write the Hessian H and the Gram matrix G of every point as text under matrices/

    Writes index.json. success is False when a point below the sublevel is degenerate.
    """
    import logging
    from morse_action.artifacts import load_critical_points, open_problem, tool_result
    from morse_action.engine.critical import certify_L0, morse_index, newton_solve
    from morse_action.engine.errors import MorseActionError
    from morse_action.engine.pathspace import dump_matrix, hessian

    logger = logging.getLogger("MorseAction.tools")
    spec, workspace = open_problem(problem_file, mesh=mesh, sublevel=sublevel, seed=seed, out=out)
    settings = spec.settings
    manifold = spec.build_manifold()
    bc = spec.build_boundary()
    lagrangian = spec.build_lagrangian()
    found = workspace.read_stage("find")
    cps = load_critical_points(workspace, manifold, bc, stage="find")

    points = []
    degenerate = []
    dumped = []
    for cp, record in zip(cps, found["critical_points"]):
        pencil = hessian(lagrangian, cp.path, bc)
        index, nullity, gap, eigs, null_tol = morse_index(pencil, settings.null_tol_rel)
        certified = nullity == 0 and gap > 10.0 * null_tol
        entry = dict(record)
        entry.update({
            "index": index,
            "nullity": nullity,
            "spectral_gap": gap,
            "null_tol": null_tol,
            "certified": certified,
            "lowest_eigenvalues": [float(e) for e in eigs[:min(6, len(eigs))]],
            "unstable_dimension": index,
        })
        if dump_matrices:
            refs = {"hessian": f"matrices/{cp.id}_H.txt", "gram": f"matrices/{cp.id}_G.txt"}
            workspace.subdir("matrices")
            dump_matrix(workspace.path(refs["hessian"]), pencil.H)
            dump_matrix(workspace.path(refs["gram"]), pencil.G)
            dumped.extend(workspace.path(ref) for ref in refs.values())
            entry["matrices"] = refs
        try:
            refined = newton_solve(lagrangian, bc, cp.path.resampled(2 * cp.path.N), tol=settings.newton_tol,
                                   max_iter=settings.newton_max_iter, box=settings.newton_box,
                                   null_tol_rel=settings.null_tol_rel)
            entry["refined"] = {"mesh": 2 * cp.path.N, "index": refined.morse_index, "nullity": refined.nullity,
                                "action": refined.action_value, "stable": refined.morse_index == index}
        except MorseActionError as e:
            logger.warning(f"Refinement of {cp.id} on the doubled mesh failed: {e}")
            entry["refined"] = {"mesh": 2 * cp.path.N, "error": str(e), "stable": False}
        if cp.action_value < spec.sublevel and not certified:
            degenerate.append(cp.id)
        points.append(entry)
        logger.info(f"{cp.id}: action {cp.action_value:.10g}, index {index}, nullity {nullity}, gap {gap:.4g}")

    report = {
        "problem": spec.name,
        "mesh": settings.mesh,
        "sublevel": spec.sublevel,
        "critical_points": points,
        "degenerate_below_sublevel": degenerate,
        "mesh_stable": all(p["refined"]["stable"] for p in points),
        "certified": all(certify_L0(cp) for cp in cps if cp.action_value < spec.sublevel),
    }
    path = workspace.write_json("index.json", report)
    return tool_result(force or not degenerate, report, [path] + dumped)
