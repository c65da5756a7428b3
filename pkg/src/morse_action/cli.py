"""Command line for the staged pipeline.

Each subcommand runs one tool on a problem file and prints its JSON report to
stdout. Exit codes: 0 success, 1 failed check or engine error, 2 invalid
input, 3 a missing upstream artifact.
"""

import logging
from typing import Annotated, Optional

import typer
from pydantic import ValidationError

from .artifacts import dumps
from .engine.errors import MissingArtifact, MorseActionError
from .server import tools

logger = logging.getLogger("MorseAction.cli")

app = typer.Typer(add_completion=False, no_args_is_help=True,
                  help="Morse complex of the Lagrangian action on discretized path spaces.")

ProblemFile = Annotated[str, typer.Argument(help="Path of the JSON problem file.")]
Mesh = Annotated[Optional[int], typer.Option("--mesh", help="Number of mesh cells.")]
Sublevel = Annotated[Optional[float], typer.Option("--sublevel", help="Action sublevel a.")]
Seed = Annotated[Optional[int], typer.Option("--seed", help="Random seed.")]
Out = Annotated[Optional[str], typer.Option("--out", help="Output directory.")]
Force = Annotated[bool, typer.Option("--force", help="Skip the verification gate.")]
DumpMatrices = Annotated[bool, typer.Option("--dump-matrices", help="Write the Hessian and Gram matrices as text under matrices/.")]


def run_stage(tool_name:str, problem_file:str, mesh:Optional[int], sublevel:Optional[float],
              seed:Optional[int], out:Optional[str], force:bool, **options) -> None:
    fn = tools().get_function(tool_name)
    if fn is None:
        typer.echo(f"Error: tool {tool_name} is not installed", err=True)
        raise typer.Exit(code=1)
    try:
        result = fn(problem_file=problem_file, mesh=mesh, sublevel=sublevel, seed=seed, out=out, force=force, **options)
    except MissingArtifact as e:
        typer.echo(f"Error: {e} (stage {e.stage})", err=True)
        raise typer.Exit(code=3)
    except (ValueError, ValidationError) as e:
        typer.echo(str(e) if str(e).startswith("Error") else f"Error: {e}", err=True)
        raise typer.Exit(code=2)
    except MorseActionError as e:
        logger.error(f"{tool_name} failed: {e}", exc_info=True)
        typer.echo(f"Error: {type(e).__name__}: {e}", err=True)
        raise typer.Exit(code=1)
    typer.echo(dumps(result["report"]), nl=False)
    if not result["success"]:
        raise typer.Exit(code=1)


@app.command()
def verify(problem_file:ProblemFile, mesh:Mesh=None, sublevel:Sublevel=None, seed:Seed=None,
           out:Out=None, force:Force=False):
    """Check the manifold, the Lagrangian derivatives and the growth conditions."""
    run_stage("verify_problem", problem_file, mesh, sublevel, seed, out, force)


@app.command()
def find(problem_file:ProblemFile, mesh:Mesh=None, sublevel:Sublevel=None, seed:Seed=None,
         out:Out=None, force:Force=False):
    """Find critical points by seeded Newton."""
    run_stage("find_critical_points", problem_file, mesh, sublevel, seed, out, force)


@app.command()
def index(problem_file:ProblemFile, mesh:Mesh=None, sublevel:Sublevel=None, seed:Seed=None,
          out:Out=None, force:Force=False, dump_matrices:DumpMatrices=False):
    """Compute Morse indices and nullities."""
    run_stage("compute_morse_indices", problem_file, mesh, sublevel, seed, out, force,
              dump_matrices=dump_matrices)


@app.command()
def flow(problem_file:ProblemFile, mesh:Mesh=None, sublevel:Sublevel=None, seed:Seed=None,
         out:Out=None, force:Force=False):
    """Assemble the pseudo-gradient field and count connecting flow lines."""
    run_stage("integrate_flow", problem_file, mesh, sublevel, seed, out, force)


@app.command()
def complex(problem_file:ProblemFile, mesh:Mesh=None, sublevel:Sublevel=None, seed:Seed=None,
            out:Out=None, force:Force=False):
    """Build the boundary matrices of the Morse complex."""
    run_stage("build_morse_complex", problem_file, mesh, sublevel, seed, out, force)


@app.command()
def homology(problem_file:ProblemFile, mesh:Mesh=None, sublevel:Sublevel=None, seed:Seed=None,
             out:Out=None, force:Force=False):
    """Compute homology and compare it with the problem's reference."""
    run_stage("compute_homology", problem_file, mesh, sublevel, seed, out, force)


@app.command("probe-c2")
def probe_c2(problem_file:ProblemFile, mesh:Mesh=None, sublevel:Sublevel=None, seed:Seed=None,
             out:Out=None, force:Force=False, dump_matrices:DumpMatrices=False):
    """Probe the continuity of the discrete Hessian under mesh refinement."""
    run_stage("probe_hessian_continuity", problem_file, mesh, sublevel, seed, out, force,
              dump_matrices=dump_matrices)


@app.command()
def serve():
    """Serve every tool over MCP on stdio."""
    from .server import main as serve_main
    serve_main()


def main():
    app()


if __name__ == "__main__":
    main()
