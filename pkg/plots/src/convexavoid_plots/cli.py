"""plot_run: render figures from one simulation run's artifacts."""

from __future__ import annotations

from pathlib import Path

import click

from . import __version__
from .artifacts import load_artifacts
from .figures import plot_ncbf, plot_snapshots


@click.command()
@click.version_option(__version__)
@click.argument("summary", type=click.Path(exists=True))
@click.option("--snapshots", default="0.0",
              help="Comma-separated snapshot times [s].")
@click.option("--out", "out_dir", type=click.Path(), default="figures",
              help="Output directory for PNG files.")
def main(summary, snapshots, out_dir):
    """Render trajectory snapshots and the barrier-vs-time figure."""
    artifacts = load_artifacts(summary)
    try:
        times = [float(v) for v in snapshots.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter("snapshots must be comma-separated numbers")
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    snap = plot_snapshots(artifacts, times, out_path / "snapshots.png")
    click.echo(f"wrote {snap}")
    ncbf = plot_ncbf(artifacts, out_path / "ncbf.png")
    click.echo(f"wrote {ncbf}")


if __name__ == "__main__":
    main()
