"""Command line interface: deform, render, refine, eval, serve.

Exit codes: 0 success, 2 invalid configuration or input files, 3 a pipeline
stage failed.  Commands never leave partial outputs behind on failure.
"""

from __future__ import annotations

import contextlib
import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import (
    ArapGSError,
    ConfigError,
    ConstraintConflictError,
    DataError,
    EmptySelectionError,
    FormatError,
    SchemaError,
)
from .pipeline import (
    DeformConfig,
    deform as run_deform,
    evaluate_drag,
    load_image_u8,
    render_views,
    save_image,
    view_name,
)
from .refinement import (
    RefinementConfig,
    default_enhancer,
    make_enhancer,
    refine as run_refine,
)
from .splat_io import read_cameras, read_dragspec, read_ply, write_ply

CONFIG_ERRORS = (
    ConfigError,
    FormatError,
    SchemaError,
    DataError,
    EmptySelectionError,
    ConstraintConflictError,
    FileNotFoundError,
)

EXIT_CONFIG = 2
EXIT_STAGE = 3


@contextlib.contextmanager
def _outputs():
    """Collect written paths; remove them all if the command fails."""
    written: list[Path] = []
    try:
        yield written
    except BaseException:
        for p in written:
            with contextlib.suppress(OSError):
                Path(p).unlink()
        raise


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except CONFIG_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except ArapGSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_STAGE)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Drag-driven deformation for Gaussian splatting scenes."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _deform_options(fn):
    fn = click.option("--n-sub", default=None, type=int,
                      help="Deformation graph node budget  [default: 16384]")(fn)
    fn = click.option("--graph-k", default=None, type=int,
                      help="Graph neighbors per node  [default: 32]")(fn)
    fn = click.option("--interp-k", default=None, type=int,
                      help="Nodes blended per Gaussian  [default: 8]")(fn)
    fn = click.option("--max-iters", default=None, type=int,
                      help="ARAP alternation budget  [default: 16]")(fn)
    fn = click.option("--weight-mode", default=None,
                      type=click.Choice(["uniform", "gaussian"]),
                      help="Graph edge weighting  [default: uniform]")(fn)
    fn = click.option("--seed", default=None, type=int,
                      help="Subset sampling seed  [default: 0]")(fn)
    fn = click.option("--config", "config_path", default=None,
                      type=click.Path(exists=True, dir_okay=False,
                                      path_type=Path),
                      help="JSON run manifest supplying paths and stage "
                           "configs; explicit flags win.")(fn)
    return fn


MANIFEST_KEYS = {"scene", "drag", "cameras", "out", "seed",
                 "sampling", "graph", "arap", "propagation", "refine"}


def _load_manifest(path: Path | None) -> dict:
    if path is None:
        return {"_dir": Path(".")}
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: manifest must be a JSON object")
    bad = set(obj) - MANIFEST_KEYS
    if bad:
        raise ConfigError(f"{path}: unknown manifest keys {sorted(bad)}")
    obj["_dir"] = path.parent
    return obj


def _manifest_path(manifest: dict, key: str) -> Path | None:
    val = manifest.get(key)
    if val is None:
        return None
    p = Path(val)
    return p if p.is_absolute() else manifest["_dir"] / p


def _section(manifest: dict, name: str, allowed: set[str]) -> dict:
    obj = manifest.get(name) or {}
    if not isinstance(obj, dict):
        raise ConfigError(f"manifest section {name!r} must be an object")
    bad = set(obj) - allowed
    if bad:
        raise ConfigError(f"manifest section {name!r}: unknown keys {sorted(bad)}")
    return obj


def _first(*vals):
    for v in vals:
        if v is not None:
            return v
    return None


def _require(value, what: str):
    if value is None:
        raise ConfigError(f"missing {what}: pass the flag or set it in --config")
    return value


def _deform_config(manifest: dict, opts: dict) -> DeformConfig:
    sampling = _section(manifest, "sampling", {"n_sub", "seed"})
    graph = _section(manifest, "graph", {"k", "weight_mode"})
    arap = _section(manifest, "arap", {"max_iters"})
    prop = _section(manifest, "propagation", {"k", "tau"})
    values = {
        "n_sub": _first(opts["n_sub"], sampling.get("n_sub")),
        "graph_k": _first(opts["graph_k"], graph.get("k")),
        "interp_k": _first(opts["interp_k"], prop.get("k")),
        "max_iters": _first(opts["max_iters"], arap.get("max_iters")),
        "weight_mode": _first(opts["weight_mode"], graph.get("weight_mode")),
        "seed": _first(opts["seed"], manifest.get("seed"), sampling.get("seed")),
        "tau": prop.get("tau"),
    }
    return DeformConfig(**{k: v for k, v in values.items() if v is not None})


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _do_deform(scene_path, drag_path, out_dir, cfg, written):
    scene = read_ply(scene_path)
    drag = read_dragspec(drag_path)
    t0 = time.perf_counter()
    out = run_deform(scene, drag, cfg)
    elapsed = time.perf_counter() - t0

    out_dir.mkdir(parents=True, exist_ok=True)
    ply_path = out_dir / "deformed.ply"
    write_ply(out.scene, ply_path)
    written.append(ply_path)

    moved = np.linalg.norm(
        out.scene.centers.astype(np.float64) - scene.centers.astype(np.float64),
        axis=1,
    )
    threshold = 0.01 * scene.bbox_diagonal()
    report = {
        "count": scene.count,
        "subset_size": int(out.graph.n_nodes),
        "graph_edges": int(out.graph.indices.size),
        "constraints": len(out.graph.constraints),
        "arap_iterations": out.result.iterations,
        "converged": out.result.converged,
        "energy_trace": out.result.energy_trace.tolist(),
        "moved_gaussians": int(np.sum(moved > threshold)),
        "displacement_threshold": threshold,
        "snap": out.snap_info,
        "elapsed_s": elapsed,
    }
    report_path = out_dir / "report.json"
    _write_json(report_path, report)
    written.append(report_path)
    return scene, out


@main.command()
@click.option("--scene", "scene_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--drag", "drag_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", default=None,
              type=click.Path(file_okay=False, path_type=Path))
@_deform_options
@_guarded
def deform(scene_path, drag_path, out_dir, config_path, **opts):
    """Deform a scene by a drag spec; writes deformed.ply and report.json."""
    manifest = _load_manifest(config_path)
    scene_path = _require(_first(scene_path, _manifest_path(manifest, "scene")),
                          "--scene")
    drag_path = _require(_first(drag_path, _manifest_path(manifest, "drag")),
                         "--drag")
    out_dir = _require(_first(out_dir, _manifest_path(manifest, "out")), "--out")
    cfg = _deform_config(manifest, opts)
    with _outputs() as written:
        _do_deform(scene_path, drag_path, out_dir, cfg, written)
    click.echo(f"wrote {out_dir / 'deformed.ply'}")


@main.command()
@click.option("--scene", "scene_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--cameras", "cameras_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", default=None,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--background", nargs=3, type=float, default=(0.0, 0.0, 0.0),
              show_default=True, help="RGB background in [0,1].")
@click.option("--near", default=0.01, show_default=True)
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON run manifest supplying paths; explicit flags win.")
@_guarded
def render(scene_path, cameras_path, out_dir, background, near, config_path):
    """Render every camera to a PNG in the output directory."""
    manifest = _load_manifest(config_path)
    scene_path = _require(_first(scene_path, _manifest_path(manifest, "scene")),
                          "--scene")
    cameras_path = _require(
        _first(cameras_path, _manifest_path(manifest, "cameras")), "--cameras")
    out_dir = _require(_first(out_dir, _manifest_path(manifest, "out")), "--out")
    scene = read_ply(scene_path)
    cameras = read_cameras(cameras_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _outputs() as written:
        images = render_views(scene, cameras, background=background, near=near)
        for i, (cam, img) in enumerate(zip(cameras, images)):
            path = out_dir / f"{view_name(cam, i)}.png"
            save_image(path, img)
            written.append(path)
    click.echo(f"wrote {len(cameras)} renders to {out_dir}")


REFINE_SECTION_KEYS = {"iterations", "lr", "update_period", "views_per_update",
                       "displacement_threshold", "mask_dilation", "enhancer"}


@main.command()
@click.option("--scene", "scene_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Original (undeformed) scene.")
@click.option("--drag", "drag_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--cameras", "cameras_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", default=None,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--deformed", "deformed_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Reuse an existing deformed scene instead of re-solving.")
@click.option("--iterations", default=None, type=int,
              help="Refinement steps (default scales with scene size).")
@click.option("--lr", default=None, type=float,
              help="sh_dc learning rate  [default: 0.0025]")
@click.option("--update-period", default=None, type=int,
              help="Steps between supervision refreshes  [default: 10]")
@click.option("--views-per-update", default=None, type=int,
              help="Views whose supervision refreshes per update  [default: 1]")
@click.option("--mask-dilation", default=None, type=int,
              help="Square mask dilation radius in pixels  [default: 4]")
@click.option("--enhancer", "enhancer_spec", default=None,
              help="identity, sharpen, or an external command line; default "
                   "identity or ARAPGS_ENHANCER_CMD.")
@_deform_options
@_guarded
def refine(scene_path, drag_path, cameras_path, out_dir, deformed_path,
           iterations, lr, update_period, views_per_update, mask_dilation,
           enhancer_spec, config_path, **opts):
    """Deform (or reuse a deform) and refine appearance in the edit region."""
    manifest = _load_manifest(config_path)
    scene_path = _require(_first(scene_path, _manifest_path(manifest, "scene")),
                          "--scene")
    cameras_path = _require(
        _first(cameras_path, _manifest_path(manifest, "cameras")), "--cameras")
    out_dir = _require(_first(out_dir, _manifest_path(manifest, "out")), "--out")
    cfg = _deform_config(manifest, opts)
    section = _section(manifest, "refine", REFINE_SECTION_KEYS)
    original = read_ply(scene_path)
    cameras = read_cameras(cameras_path)
    out_dir.mkdir(parents=True, exist_ok=True)

    with _outputs() as written:
        if deformed_path is not None:
            deformed = read_ply(deformed_path)
        else:
            existing = out_dir / "deformed.ply"
            if existing.exists():
                deformed = read_ply(existing)
            else:
                drag_path = _require(
                    _first(drag_path, _manifest_path(manifest, "drag")), "--drag")
                _, out = _do_deform(scene_path, drag_path, out_dir, cfg, written)
                deformed = out.scene

        spec = _first(enhancer_spec, section.get("enhancer"))
        enhancer = make_enhancer(spec) if spec else default_enhancer()
        rvalues = {
            "iterations": _first(iterations, section.get("iterations")),
            "lr": _first(lr, section.get("lr")),
            "update_period": _first(update_period, section.get("update_period")),
            "views_per_update": _first(views_per_update,
                                       section.get("views_per_update")),
            "mask_dilation": _first(mask_dilation, section.get("mask_dilation")),
            "displacement_threshold": section.get("displacement_threshold"),
        }
        rcfg = RefinementConfig(
            **{k: v for k, v in rvalues.items() if v is not None})
        result = run_refine(original, deformed, cameras, enhancer, rcfg)

        ply_path = out_dir / "refined.ply"
        write_ply(result.scene, ply_path)
        written.append(ply_path)

        csv_path = out_dir / "loss.csv"
        lines = ["step,view,loss"]
        lines += [
            f"{i},{vi},{v:.10g}"
            for i, (vi, v) in enumerate(zip(result.view_trace, result.loss_history))
        ]
        csv_path.write_text("\n".join(lines) + "\n")
        written.append(csv_path)

        report_path = out_dir / "refine_report.json"
        _write_json(report_path, {
            "iterations": int(result.loss_history.size),
            "optimized_gaussians": int(result.selected.size),
            "views_used": result.view_indices.tolist(),
            "masked_pixels": result.masked_pixels,
            "supervision_updates": [list(u) for u in result.updates],
            "final_loss": float(result.loss_history[-1])
            if result.loss_history.size else None,
        })
        written.append(report_path)
    click.echo(f"wrote {out_dir / 'refined.ply'}")


@main.command("eval")
@click.option("--original-renders", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--edited-renders", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--drag", "drag_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--cameras", "cameras_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_path", default=None,
              type=click.Path(dir_okay=False, path_type=Path),
              help="Write the JSON report here instead of stdout.")
@click.option("--gamma", "gammas", multiple=True, type=int,
              help="Patch radius; repeat for several (default 1 5 10 20).")
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON run manifest supplying paths; explicit flags win.")
@_guarded
def eval_cmd(original_renders, edited_renders, drag_path, cameras_path,
             out_path, gammas, config_path):
    """Score how well edited renders moved content source-to-target."""
    manifest = _load_manifest(config_path)
    drag_path = _require(_first(drag_path, _manifest_path(manifest, "drag")),
                         "--drag")
    cameras_path = _require(
        _first(cameras_path, _manifest_path(manifest, "cameras")), "--cameras")
    drag = read_dragspec(drag_path)
    cameras = read_cameras(cameras_path)

    def load_dir(d: Path) -> list:
        files = sorted(d.glob("*.png"))
        if len(files) != len(cameras):
            raise DataError(
                f"{d} holds {len(files)} PNGs but cameras.json lists {len(cameras)}"
            )
        return [load_image_u8(f).astype(np.float64) / 255.0 for f in files]

    originals = load_dir(original_renders)
    edited = load_dir(edited_renders)
    gset = tuple(gammas) if gammas else (1, 5, 10, 20)
    result, used = evaluate_drag(originals, edited, drag, cameras, gammas=gset)
    payload = {
        "dai": result.value,
        "per_gamma": {str(g): v for g, v in result.per_gamma.items()},
        "per_view": dict(zip(map(str, used), result.per_view.tolist())),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        out_path.write_text(text + "\n")
    else:
        click.echo(text)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--scene", "scene_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Preload a scene into the default session.")
@click.option("--cameras", "cameras_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_guarded
def serve(host, port, scene_path, cameras_path):
    """Run the HTTP editing service."""
    import uvicorn

    from .service import create_app

    app = create_app(scene_path=scene_path, cameras_path=cameras_path)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
