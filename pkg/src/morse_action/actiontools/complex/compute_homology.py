from typing import Dict, Any, Optional


def compute_homology(
    problem_file:str,
    mesh:Optional[int]=None,
    sublevel:Optional[float]=None,
    seed:Optional[int]=None,
    out:Optional[str]=None,
    force:bool=False,
) -> Dict[str, Any]:
    """Homology of the Morse complex, compared with the problem's reference when it names one.

    Betti numbers come from the ranks of the boundary matrices, torsion from
    their Smith normal forms. Complexes built in the mod 2 exploratory mode
    give Z/2 coefficients.

    Parameters:
    - problem_file: path of the JSON problem file
    - mesh: number of mesh cells, overrides the problem
    - sublevel: action sublevel, overrides the problem
    - seed: random seed, overrides the problem
    - out: output directory, overrides the problem
    - force: unused, accepted for a uniform signature

    Writes homology.json. success is False when the reference comparison fails.
    """
    from morse_action.artifacts import open_problem, tool_result
    from morse_action.engine.morse_complex import MorseComplexData, compare_reference, homology

    spec, workspace = open_problem(problem_file, mesh=mesh, sublevel=sublevel, seed=seed, out=out)
    data = MorseComplexData.from_record(workspace.read_stage("complex"))
    result = homology(data)
    report = {
        "problem": spec.name,
        "sublevel": data.sublevel_a,
        "generators": {str(k): data.count(k) for k in sorted(data.generators)},
        **result.to_record(),
    }
    passed = True
    if spec.reference:
        comparison = compare_reference(result, spec.reference,
                                       {k: data.count(k) for k in data.generators})
        report["comparison"] = comparison
        passed = comparison["passed"]
    path = workspace.write_json("homology.json", report)
    return tool_result(passed, report, [path])
