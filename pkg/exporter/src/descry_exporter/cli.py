"""export-embeddings command line."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from descry.errors import DescryError, IoFailure

from .embedders import DEFAULT_MODEL
from .errors import ExporterError
from .export import ExportJob, run_job


@click.command()
@click.option("--annotations", required=True, type=click.Path(), help="COCO annotation JSON.")
@click.option("--images", "image_root", required=True, type=click.Path(), help="Image directory.")
@click.option("--model", default=DEFAULT_MODEL, show_default=True,
              help="hf:<checkpoint> or hash:<dim>.")
@click.option("--template", default="an image of {}", show_default=True)
@click.option("--out-crops", required=True, type=click.Path())
@click.option("--out-prompts", required=True, type=click.Path())
@click.option("--batch", default=32, show_default=True, type=click.IntRange(min=1))
@click.option("--classes", "classes_file", default=None, type=click.Path(),
              help="Optional file with one class name per line (e.g. a union list); "
                   "defaults to the dataset's own classes.")
def cli(annotations: str, image_root: str, model: str, template: str,
        out_crops: str, out_prompts: str, batch: int, classes_file: str | None) -> None:
    """Embed ground-truth crops and class prompts into EMBF stores."""
    classes = None
    if classes_file:
        lines = Path(classes_file).read_text(encoding="utf-8").splitlines()
        classes = tuple(line.strip() for line in lines if line.strip())
    job = ExportJob(
        annotation_path=Path(annotations),
        image_root=Path(image_root),
        out_crops=Path(out_crops),
        out_prompts=Path(out_prompts),
        model=model,
        prompt_template=template,
        batch_size=batch,
        classes=classes,
    )
    crops, prompts = run_job(job)
    click.echo(f"wrote {out_crops} ({len(crops)} crop vectors, d={crops.dimension})")
    click.echo(f"wrote {out_prompts} ({len(prompts)} prompt vectors)")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="export-embeddings", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except IoFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except (ExporterError, DescryError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    return 0


def entry() -> None:
    sys.exit(main())
