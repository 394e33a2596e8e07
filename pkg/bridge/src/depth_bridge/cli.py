"""Command line for the estimator bridge."""

import click

from .bridge import BridgeError, bridge_run


@click.group()
def main():
    """Run a monocular depth model over tangent images."""


@main.command()
@click.option("--layout", "layout_json", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "image_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--model", "model_id", default="fixed_filter", show_default=True)
def run(layout_json, image_dir, out_dir, model_id):
    """Infer disparity for the 20 tangent images and write the provider dir."""
    try:
        manifest = bridge_run(layout_json, image_dir, out_dir, model_id)
    except BridgeError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote provider directory with manifest {manifest}")


if __name__ == "__main__":
    main()
