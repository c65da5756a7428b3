from typing import Dict, Any, Optional


def verify_problem(
    problem_file:str,
    mesh:Optional[int]=None,
    sublevel:Optional[float]=None,
    seed:Optional[int]=None,
    out:Optional[str]=None,
    force:bool=False,
) -> Dict[str, Any]:
    """Check the hypotheses of a problem file before any solve.

    Samples the metric of the manifold, the analytic derivatives of the
    Lagrangian against central differences, the growth and convexity
    conditions against the declared constants, and the Palais-Smale
    admissibility of the boundary condition.

    Parameters:
    - problem_file: path of the JSON problem file
    - mesh: number of mesh cells, overrides the problem
    - sublevel: action sublevel, overrides the problem
    - seed: random seed, overrides the problem
    - out: output directory, overrides the problem
    - force: unused, accepted for a uniform signature

    Writes verify.json. success is True when every declared condition passes.
    """
    from morse_action.artifacts import open_problem, tool_result
    from morse_action.engine.lagrangian import check_derivatives, check_growth_conditions
    from morse_action.engine.manifold import check_ps_admissible

    spec, workspace = open_problem(problem_file, mesh=mesh, sublevel=sublevel, seed=seed, out=out)
    manifold = spec.build_manifold()
    bc = spec.build_boundary()
    lagrangian = spec.build_lagrangian()

    metric = manifold.check(seed=spec.rng_seed)
    derivatives = check_derivatives(lagrangian, seed=spec.rng_seed)
    derivative_tol = 1e-3 if lagrangian.reduced_accuracy else 1e-5
    growth = check_growth_conditions(lagrangian, spec.sample_box(), n_samples=spec.checks.samples,
                                     seed=spec.rng_seed, metric=manifold.constant_metric())
    admissible, ps = check_ps_admissible(manifold, bc)

    metric_ok = metric["symmetric"] and metric["positive_definite"] and metric["periodic_invariant"]
    derivatives_ok = all(err <= derivative_tol for err in derivatives.values())
    passed = bool(metric_ok and derivatives_ok and growth["passed"])
    report = {
        "problem": spec.name,
        "lagrangian": lagrangian.name,
        "family": lagrangian.family,
        "mesh": spec.mesh,
        "metric": metric,
        "derivatives": {"errors": derivatives, "tolerance": derivative_tol, "passed": derivatives_ok},
        "growth": growth,
        "palais_smale": ps,
        "passed": passed,
    }
    if not admissible:
        report["warnings"] = ["boundary condition is not Palais-Smale admissible, flows may escape"]
    path = workspace.write_json("verify.json", report)
    return tool_result(passed, report, [path])
