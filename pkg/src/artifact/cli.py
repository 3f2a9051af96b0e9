"""Command-line entry point: detect, repair, eval, dataset tooling, health."""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import datasets, metrics, orchestrator
from .config import PipelineConfig, dump_config, load_config
from .detector import detect as run_detect
from .errors import ArtifactError
from .raster import save_mask, save_rgb


def _load_cfg(path: str | None) -> PipelineConfig:
    if path is None:
        cfg = PipelineConfig()
        cfg.validate()
        return cfg
    return load_config(path)


def _load_instance(input_path: str, instance_id: str | None) -> datasets.DatasetInstance:
    if os.path.exists(os.path.join(input_path, "manifest.json")):
        if instance_id is None:
            raise ArtifactError("--input is a corpus root; pass --id to pick an instance")
        manifest = datasets.load_manifest(input_path)
        return datasets.load_instance(input_path, instance_id, task=manifest.task)
    root, leaf = os.path.split(os.path.abspath(input_path.rstrip("/")))
    return datasets.load_instance(root, leaf)


def _make_backend(spec: str, cfg: PipelineConfig, instance=None):
    if spec == "mock:oracle":
        if instance is None or instance.target is None:
            raise ArtifactError("mock:oracle backend needs an instance with a target image")
        return orchestrator.MockBackend("oracle", target=instance.target)
    if spec == "mock:blur":
        return orchestrator.MockBackend("blur_fill", blur_radius=cfg.backend.blur_fill_radius)
    if spec.startswith("http:") or spec.startswith("https:"):
        return orchestrator.HttpBackend(spec, timeout=cfg.backend.timeout, retries=cfg.backend.retries)
    raise ArtifactError(f"unknown backend {spec!r} (use mock:oracle, mock:blur, or http://...)")


@click.group()
def main():
    """Artifact detection and repair for virtual try-on / pose transfer output."""


@main.command("detect")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True), help="Instance dir or corpus root.")
@click.option("--id", "instance_id", default=None, help="Instance id when --input is a corpus root.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def cmd_detect(input_path, instance_id, config_path, out_dir):
    """Run the four-strategy detector and write report masks + JSON."""
    try:
        cfg = _load_cfg(config_path)
        inst = _load_instance(input_path, instance_id)
        result = run_detect(inst.detector_inputs(), cfg)
        os.makedirs(out_dir, exist_ok=True)
        doc = {"id": inst.id, "skipped": result.skipped, "reports": []}
        for i, rep in enumerate(result.reports):
            save_mask(os.path.join(out_dir, f"report_mask_{i}.png"), rep.mask)
            doc["reports"].append(
                {
                    "class": rep.artifact_class.value,
                    "score": rep.score,
                    "strategies": sorted(s.value for s in rep.strategies),
                    "mask": f"report_mask_{i}.png",
                }
            )
        with open(os.path.join(out_dir, "report.json"), "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
        click.echo(f"{inst.id}: {len(result.reports)} artifact(s)")
    except ArtifactError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.command("repair")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--id", "instance_id", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--backend", "backend_spec", default="mock:blur", show_default=True)
@click.option("--seed", "seeds", type=int, multiple=True, help="Override configured seeds.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def cmd_repair(input_path, instance_id, config_path, backend_spec, seeds, out_dir):
    """Detect artifacts, inpaint them through a backend, write the repaired image."""
    try:
        cfg = _load_cfg(config_path)
        if seeds:
            cfg.run.seeds = list(seeds)
        inst = _load_instance(input_path, instance_id)
        backend = _make_backend(backend_spec, cfg, inst)
        result = orchestrator.repair(
            inst.detector_inputs(), cfg, backend, target=inst.target
        )
        os.makedirs(out_dir, exist_ok=True)
        save_rgb(os.path.join(out_dir, "repaired.png"), result.repaired)
        if result.bundle is not None:
            result.bundle.save(os.path.join(out_dir, "bundle"))
        with open(os.path.join(out_dir, "audit.json"), "w") as f:
            json.dump(result.audit, f, indent=2, sort_keys=True, default=str)
        click.echo(
            f"{inst.id}: {len(result.reports)} artifact(s), seed {result.chosen_seed}"
        )
    except ArtifactError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.command("eval")
@click.option("--corpus", "corpus_root", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--backend", "backend_spec", default="mock:oracle", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True)
def cmd_eval(corpus_root, config_path, backend_spec, out_dir, jobs):
    """Before/after SSIM and detection scores over a corpus."""
    try:
        cfg = _load_cfg(config_path)
        report = metrics.eval_run(
            corpus_root, cfg, backend_mode=backend_spec, out_dir=out_dir, parallelism=jobs
        )
        agg = report.aggregate()
        click.echo(json.dumps(agg, indent=2, sort_keys=True))
        if report.failures:
            for instance_id, err in sorted(report.failures.items()):
                click.echo(f"failed {instance_id}: {err}", err=True)
            sys.exit(1)
    except ArtifactError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.group("dataset")
def cmd_dataset():
    """Corpus tooling: validate, stats, synth."""


@cmd_dataset.command("validate")
@click.option("--root", required=True, type=click.Path(exists=True))
def dataset_validate(root):
    try:
        report = datasets.validate_corpus(root)
        for v in report.violations:
            click.echo(f"violation: {v}")
        if not report.clean:
            click.echo(f"{len(report.violations)} violation(s)")
            sys.exit(1)
        click.echo("ok")
    except ArtifactError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@cmd_dataset.command("stats")
@click.option("--root", required=True, type=click.Path(exists=True))
def dataset_stats(root):
    try:
        click.echo(json.dumps(datasets.corpus_stats(root), indent=2, sort_keys=True))
    except ArtifactError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@cmd_dataset.command("synth")
@click.option("--out", "out_root", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--per-class", default=5, show_default=True, help="Instances per artifact class.")
@click.option("--clean", "n_clean", default=5, show_default=True)
@click.option("--width", default=320, show_default=True)
@click.option("--height", default=448, show_default=True)
def dataset_synth(out_root, seed, per_class, n_clean, width, height):
    try:
        plan = {
            "color_texture": per_class,
            "deformation": per_class,
            "cloth_design": per_class,
            "clean": n_clean,
        }
        datasets.synth_corpus(out_root, plan, seed=seed, width=width, height=height)
        click.echo(f"wrote {3 * per_class + n_clean} instances to {out_root}")
    except ArtifactError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.command("backend-health")
@click.option("--endpoint", required=True)
def cmd_backend_health(endpoint):
    """Query GET /health on an inpainting backend."""
    try:
        client = orchestrator.HttpBackend(endpoint, timeout=5.0, retries=0)
        doc = client.health()
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
    except ArtifactError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.group("config")
def cmd_config():
    """Configuration helpers."""


@cmd_config.command("dump-default")
@click.option("--out", "out_path", default=None, type=click.Path())
def config_dump_default(out_path):
    text = dump_config(PipelineConfig())
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
