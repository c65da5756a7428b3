from typing import Dict, Any, Optional


def integrate_flow(
    problem_file:str,
    mesh:Optional[int]=None,
    sublevel:Optional[float]=None,
    seed:Optional[int]=None,
    out:Optional[str]=None,
    force:bool=False,
) -> Dict[str, Any]:
    """Build the pseudo-gradient field and follow the unstable branches of every generator.

    The field is linear near each certified critical point and a capped
    negative H^1 gradient elsewhere. From each generator of index k >= 1 below
    the sublevel the unstable directions are flowed until they settle at a
    critical point of lower index; the signed arrivals are the connection counts.

    Parameters:
    - problem_file: path of the JSON problem file
    - mesh: number of mesh cells, overrides the problem
    - sublevel: action sublevel, overrides the problem
    - seed: random seed for the perturbation of branch starts, overrides the problem
    - out: output directory, overrides the problem
    - force: unused, accepted for a uniform signature

    Writes field.json, flow.json and one CSV per branch under trajectories/.
    """
    import os
    from morse_action.artifacts import load_critical_points, open_problem, tool_result
    from morse_action.config import thread_count
    from morse_action.engine.critical import certify_L0
    from morse_action.engine.morse_complex import (
        INTEGER,
        MOD2,
        ConnectionOptions,
        collect_generators,
        conditions_report,
        count_connections,
    )
    from morse_action.engine.pseudograd import assemble_field, lyapunov_report

    spec, workspace = open_problem(problem_file, mesh=mesh, sublevel=sublevel, seed=seed, out=out)
    settings = spec.settings
    manifold = spec.build_manifold()
    bc = spec.build_boundary()
    lagrangian = spec.build_lagrangian()
    cps = load_critical_points(workspace, manifold, bc, stage="index")

    generators = collect_generators(cps, spec.sublevel)
    centers = [cp for cp in cps if certify_L0(cp)]
    field = assemble_field(centers, lagrangian, bc, cap_bound=settings.cap_bound, r0=settings.radius_r0,
                           floor=settings.radius_floor, samples=settings.calibration_samples, seed=spec.rng_seed)
    options = ConnectionOptions(
        t_max=settings.flow_t_max,
        stop_tol=settings.flow_stop_tol,
        rtol=settings.flow_rtol,
        atol=settings.flow_atol,
        identify_tol=settings.identify_tol,
        ambiguity_tol=settings.ambiguity_tol,
        perturbation_seed=spec.rng_seed,
        perturbation_eps=settings.perturbation_eps,
        perturbation_retries=settings.perturbation_retries,
        sphere_samples=settings.sphere_samples,
        workers=thread_count(),
    )

    trajectories_dir = workspace.subdir("trajectories")
    written = []
    counts: Dict[str, Dict[str, int]] = {}
    log = []
    mode = INTEGER
    for k in sorted(generators):
        if k == 0:
            continue
        for x in generators[k]:
            result = count_connections(x, field, generators, options, all_cps=centers)
            if result.mode == MOD2:
                mode = MOD2
            counts[x.id] = dict(sorted(result.counts.items()))
            for j, (entry, trajectory) in enumerate(zip(result.log, result.trajectories)):
                label = {"+": "plus", "-": "minus"}.get(entry["branch"], f"theta{j:03d}")
                ref = os.path.join("trajectories", f"{x.id}_{label}.csv")
                trajectory.to_csv(workspace.path(ref))
                written.append(workspace.path(ref))
                log.append(dict(entry, trajectory=ref))

    flow_report = {
        "problem": spec.name,
        "mesh": settings.mesh,
        "sublevel": spec.sublevel,
        "mode": mode,
        "generators": {str(k): [cp.id for cp in v] for k, v in sorted(generators.items())},
        "counts": counts,
        "connections": log,
    }
    field_report = {
        "field": field.dump(),
        "annulus": lyapunov_report(field, n_samples=settings.lyapunov_samples, seed=spec.rng_seed,
                                   region="annulus", sublevel=spec.sublevel),
        "conditions": conditions_report(field, centers, n_samples=settings.lyapunov_samples, seed=spec.rng_seed,
                                        sublevel=spec.sublevel),
    }
    artifacts = [workspace.write_json("field.json", field_report), workspace.write_json("flow.json", flow_report)]
    return tool_result(True, flow_report, artifacts + written)
