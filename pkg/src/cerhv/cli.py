"""Operator command line: one subcommand per pipeline stage.

Every command is reproducible from (flags, config file, seed): the fully
resolved parameter set is echoed as JSON beside the outputs, and an output
directory is guarded by a lockfile so concurrent runs cannot interleave.
Exit codes: 0 success, 1 usage, 2 data/invariant error, 3 runtime failure.
"""
from __future__ import annotations

import contextlib
import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .augment import AugmentConfig
from .ctc import Alphabet
from .detector import (
    DEFAULT_TAU,
    manifest_preprocess_spec,
    score_samples,
    select_flagged,
    train_with_early_stopping,
    write_score_report,
)
from .lab import (
    LAB_ALPHABET,
    MIXED_NOISE_RATES,
    LabConfig,
    run_cleaning_comparison,
    run_learnability,
    run_noise_lab,
    write_lab_report,
)
from .images import read_image, write_image
from .manifest import INJECTABLE_CATEGORIES, Manifest, load_manifest, save_manifest
from .model import (
    ModelConfig,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
)
from .preprocess import crop_line_from_mask
from .review import (
    PendingVerdictsError,
    SessionStore,
    VerdictError,
    VerdictLog,
    build_cleaned_manifest,
)
from .splitting import apply_page_assignment, audit_split, page_transcripts, split_pages
from .synth import build_synthetic_manifest, inject_noise

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_DATA_ERRORS = (
    ValueError,
    KeyError,
    FileNotFoundError,
    NotADirectoryError,
    PendingVerdictsError,
    VerdictError,
)


def deterministic_mode() -> bool:
    return os.environ.get("CERHV_DETERMINISTIC", "") == "1"


@contextlib.contextmanager
def output_lock(out_dir: Path):
    """One process per output directory; stale runs must be cleaned up."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".cerhv.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(
            f"output directory {out_dir} is locked by another run "
            f"(remove {lock} if that run is dead)"
        )
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def echo_resolved_config(out_dir: Path, command: str, params: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {
        "command": command,
        "version": __version__,
        "deterministic": deterministic_mode(),
        "params": {k: _jsonable(v) for k, v in sorted(params.items())},
    }
    path = out_dir / f"{command}.config.json"
    path.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, tuple):
        return list(v)
    return v


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError("config file must be a JSON object of dotted keys")
    return data


def _config_section(cfg: dict, command: str, known: set[str]) -> dict:
    """Pull `command.option` keys; unknown keys for this command are fatal."""
    out = {}
    for key, value in cfg.items():
        if "." not in key:
            raise ValueError(f"config key {key!r} is not of the form command.option")
        cmd, opt = key.split(".", 1)
        if cmd != command:
            continue
        if opt not in known:
            raise ValueError(f"unknown config key {key!r}")
        out[opt] = value
    return out


def _parse_rates(pairs: tuple[str, ...]) -> dict[str, float]:
    rates = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--rate expects category=value, got {pair!r}")
        cat, _, val = pair.partition("=")
        if cat not in INJECTABLE_CATEGORIES:
            raise ValueError(
                f"unknown noise category {cat!r}; choose from {INJECTABLE_CATEGORIES}"
            )
        rates[cat] = float(val)
    return rates


@click.group(name="cerhv")
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file with flat dotted keys (command.option).")
@click.pass_context
def cli(ctx, config_path):
    """Dataset cleaning for handwritten text recognition."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_config_file(config_path)


def _merged(ctx, command: str, flags: dict) -> dict:
    """config-file values fill in wherever the flag was left at its default."""
    file_vals = _config_section(ctx.obj["config"], command, set(flags))
    merged = dict(flags)
    for key, value in file_vals.items():
        src = ctx.get_parameter_source(key)
        if src is not None and src.name == "DEFAULT":
            merged[key] = value
    return merged


@cli.command()
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--count", default=500, show_default=True)
@click.option("--alphabet-size", default=10, show_default=True)
@click.option("--rate", "rates", multiple=True,
              help="category=fraction, repeatable (e.g. --rate transcription=0.1).")
@click.option("--seed", default=0, show_default=True)
@click.option("--min-len", default=4, show_default=True)
@click.option("--max-len", default=8, show_default=True)
@click.option("--lines-per-page", default=0, show_default=True,
              help="group lines into pages of this size (0 = no pages).")
@click.option("--force", is_flag=True, help="overwrite an existing dataset directory.")
@click.pass_context
def synth(ctx, out, count, alphabet_size, rates, seed, min_len, max_len, lines_per_page, force):
    """Render a synthetic line dataset, optionally with injected noise."""
    params = _merged(ctx, "synth", dict(
        out=out, count=count, alphabet_size=alphabet_size, rates=list(rates),
        seed=seed, min_len=min_len, max_len=max_len, lines_per_page=lines_per_page,
    ))
    out = Path(params["out"])
    if out.exists() and any(out.iterdir()) and not force:
        raise ValueError(f"{out} exists and is not empty; pass --force to overwrite")
    rate_map = _parse_rates(tuple(params["rates"]))
    alphabet = Alphabet.of("abcdefghijklmnopqrstuvwxyz"[: int(params["alphabet_size"])])
    with output_lock(out):
        manifest = build_synthetic_manifest(
            out,
            count=int(params["count"]),
            alphabet=alphabet,
            seed=int(params["seed"]),
            min_len=int(params["min_len"]),
            max_len=int(params["max_len"]),
            lines_per_page=int(params["lines_per_page"]) or None,
        )
        counts = {}
        if rate_map:
            manifest = inject_noise(
                manifest, rate_map, seed=int(params["seed"]),
                splits=("train", "val", "test"),
            )
            for e in manifest.entries:
                if e.noise:
                    counts[e.noise] = counts.get(e.noise, 0) + 1
        save_manifest(manifest, out / "manifest.jsonl")
        echo_resolved_config(out, "synth", params)
    click.echo(f"wrote {len(manifest.entries)} samples to {out / 'manifest.jsonl'}")
    for cat in INJECTABLE_CATEGORIES:
        if cat in counts:
            click.echo(f"  injected {cat}: {counts[cat]}")


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--preset", type=click.Choice(["desk", "paper"]), default="desk", show_default=True)
@click.option("--max-epochs", default=None, type=int, help="default: 60 desk / 800 paper.")
@click.option("--patience", default=None, type=int, help="default: 8 desk / 20 paper.")
@click.option("--batch-size", default=16, show_default=True)
@click.option("--lr", default=None, type=float, help="default: 1e-3 desk / 5e-4 paper.")
@click.option("--pad", default=None, type=int, help="horizontal pad px/side; default 16 desk / 64 paper.")
@click.option("--seed", default=0, show_default=True)
@click.option("--augment/--no-augment", default=False, show_default=True)
@click.pass_context
def train(ctx, manifest_path, out, preset, max_epochs, patience, batch_size, lr, pad, seed, augment):
    """Train a recognizer with early stopping; write the best checkpoint."""
    params = _merged(ctx, "train", dict(
        manifest=manifest_path, out=out, preset=preset, max_epochs=max_epochs,
        patience=patience, batch_size=batch_size, lr=lr, pad=pad, seed=seed,
        augment=augment,
    ))
    desk = params["preset"] == "desk"
    defaults = dict(max_epochs=60, patience=8, lr=1e-3, pad=16) if desk else dict(
        max_epochs=800, patience=20, lr=5e-4, pad=64
    )
    for key, val in defaults.items():
        if params[key] is None:
            params[key] = val
    out = Path(params["out"])
    manifest = load_manifest(params["manifest"])
    spec = manifest_preprocess_spec(manifest, horizontal_pad=int(params["pad"]))
    make = ModelConfig.desk if desk else ModelConfig.paper
    model_config = make(spec.output_height, spec.output_width, manifest.alphabet.size)
    train_config = TrainConfig(
        max_epochs=int(params["max_epochs"]),
        batch_size=int(params["batch_size"]),
        learning_rate=float(params["lr"]),
        patience=int(params["patience"]),
        seed=int(params["seed"]),
        deterministic=deterministic_mode() or True,
    )
    with output_lock(out):
        echo_resolved_config(out, "train", params)
        history_path = out / "history.jsonl"
        with history_path.open("w", encoding="utf-8") as hist:
            def progress(rec):
                hist.write(json.dumps(rec.__dict__, sort_keys=True) + "\n")
                hist.flush()
                click.echo(
                    f"epoch {rec.epoch}: loss {rec.train_loss:.4f} val CER {rec.val_cer:.4f}"
                )

            outcome = train_with_early_stopping(
                manifest,
                spec,
                model_config,
                train_config,
                augment_config=AugmentConfig() if params["augment"] else None,
                progress=progress,
            )
        ckpt = save_checkpoint(
            out / "model.ckpt",
            outcome.model,
            manifest.alphabet,
            extra={
                "t_conv": outcome.t_conv,
                "best_epoch": outcome.best_epoch,
                "best_val_cer": outcome.best_val_cer,
                "preprocess": {
                    "target_height": spec.target_height,
                    "target_width": spec.target_width,
                    "horizontal_pad": spec.horizontal_pad,
                },
            },
        )
    click.echo(
        f"stopped at epoch {outcome.t_conv} (best {outcome.best_epoch}, "
        f"val CER {outcome.best_val_cer:.4f}); checkpoint: {ckpt}"
    )


def _load_scoring_context(checkpoint, manifest_path):
    from .preprocess import PreprocessSpec

    model, alphabet, extra = load_checkpoint(checkpoint)
    manifest = load_manifest(manifest_path)
    if manifest.alphabet.symbols != alphabet.symbols:
        raise ValueError("manifest alphabet does not match checkpoint alphabet")
    pp = extra.get("preprocess")
    if not pp:
        raise ValueError("checkpoint lacks preprocessing geometry")
    spec = PreprocessSpec(
        target_height=int(pp["target_height"]),
        target_width=int(pp["target_width"]),
        horizontal_pad=int(pp["horizontal_pad"]),
    )
    return model, manifest, spec


@cli.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--split", default="train", show_default=True)
@click.option("--tau", default=DEFAULT_TAU, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_context
def score(ctx, checkpoint, manifest_path, split, tau, out):
    """Score a split by per-sample CER and write the ranked report."""
    params = _merged(ctx, "score", dict(
        checkpoint=checkpoint, manifest=manifest_path, split=split, tau=tau, out=out,
    ))
    out = Path(params["out"])
    model, manifest, spec = _load_scoring_context(params["checkpoint"], params["manifest"])
    with output_lock(out):
        report = score_samples(model, manifest, params["split"], spec)
        scores_path = write_score_report(out / "scores.jsonl", report, tau=float(params["tau"]))
        flags = select_flagged(report.scores, float(params["tau"]))
        (out / "flagged.json").write_text(
            json.dumps({"tau": float(params["tau"]), "flagged": flags.ids()}, indent=2) + "\n",
            encoding="utf-8",
        )
        echo_resolved_config(out, "score", params)
    click.echo(
        f"scored {len(report.scores)} samples "
        f"({len(report.unreadable)} unreadable skipped); "
        f"{len(flags.flagged)} flagged at tau={params['tau']}; report: {scores_path}"
    )


@cli.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--split", default="test", show_default=True)
@click.pass_context
def eval_cmd(ctx, checkpoint, manifest_path, split):
    """Aggregate CER (mean over samples) of a checkpoint on one split."""
    params = _merged(ctx, "eval", dict(
        checkpoint=checkpoint, manifest=manifest_path, split=split,
    ))
    model, manifest, spec = _load_scoring_context(params["checkpoint"], params["manifest"])
    report = score_samples(model, manifest, params["split"], spec)
    value = sum(s.cer for s in report.scores) / len(report.scores)
    click.echo(json.dumps({
        "split": params["split"],
        "samples": len(report.scores),
        "cer": round(value, 6),
    }))


@cli.command("review-serve")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--root", default=Path("review-sessions"), type=click.Path(path_type=Path), show_default=True)
@click.option("--tau", default=DEFAULT_TAU, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8075, show_default=True)
@click.pass_context
def review_serve(ctx, manifest_path, scores_path, root, tau, host, port):
    """Serve the human-verification API (and create the initial session)."""
    from .review_api import create_app

    params = _merged(ctx, "review-serve", dict(
        manifest=manifest_path, scores=scores_path, root=root, tau=tau,
        host=host, port=port,
    ))
    store = SessionStore(Path(params["root"]))
    session = store.create(params["manifest"], params["scores"], tau=float(params["tau"]))
    echo_resolved_config(Path(params["root"]), "review-serve", params)
    click.echo(
        f"session {session.session_id}: {len(session.pending())} pending; "
        f"serving on http://{params['host']}:{params['port']}"
    )
    import uvicorn

    uvicorn.run(create_app(store), host=params["host"], port=int(params["port"]), log_level="warning")


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--verdicts", "verdicts_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--tau", default=DEFAULT_TAU, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--allow-partial", is_flag=True)
@click.pass_context
def clean(ctx, manifest_path, verdicts_path, scores_path, tau, out, allow_partial):
    """Materialize the cleaned manifest D' from a verdict log."""
    from .detector import load_score_report

    params = _merged(ctx, "clean", dict(
        manifest=manifest_path, verdicts=verdicts_path, scores=scores_path,
        tau=tau, out=out, allow_partial=allow_partial,
    ))
    manifest = load_manifest(params["manifest"])
    log = VerdictLog(Path(params["verdicts"]))
    report = load_score_report(params["scores"])
    flags = select_flagged(report.scores, float(params["tau"]))
    cleaned = build_cleaned_manifest(
        manifest, log.effective(), flags.ids(), allow_partial=bool(params["allow_partial"])
    )
    path = save_manifest(cleaned, Path(params["out"]))
    echo_resolved_config(path.parent, "clean", params)
    removed = len(manifest.entries) - len(cleaned.entries)
    click.echo(f"cleaned manifest: {path} ({removed} removed, {len(cleaned.entries)} kept)")


@cli.command("noise-lab")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--count", default=1000, show_default=True)
@click.option("--rate", "rates", multiple=True,
              help="category=fraction; default mixed 2% each.")
@click.option("--cleaning/--no-cleaning", default=True, show_default=True,
              help="also run the cleaned-retrain comparison per seed.")
@click.pass_context
def noise_lab(ctx, out, seeds, count, rates, cleaning):
    """Precision/recall of CER ranking over injected noise, across seeds."""
    params = _merged(ctx, "noise-lab", dict(
        out=out, seeds=seeds, count=count, rates=list(rates), cleaning=cleaning,
    ))
    out = Path(params["out"])
    seed_list = [int(s) for s in str(params["seeds"]).split(",") if s != ""]
    rate_map = _parse_rates(tuple(params["rates"])) or dict(MIXED_NOISE_RATES)
    records = []
    with output_lock(out):
        echo_resolved_config(out, "noise-lab", params)
        for seed in seed_list:
            seed_dir = out / f"seed-{seed}"
            result = run_noise_lab(seed_dir, seed=seed, count=int(params["count"]), rates=rate_map)
            rec = result.to_record()
            if result.injected == 0:
                rec["precision_at_injected"] = "n/a"
                rec["separation"] = "n/a"
            if params["cleaning"] and result.injected:
                comparison = run_cleaning_comparison(seed_dir, result)
                rec["cleaning"] = comparison.to_record()
            records.append(rec)
            click.echo(json.dumps(rec, sort_keys=True))
        numeric = [r for r in records if r["precision_at_injected"] != "n/a"]
        summary = {
            "seeds": seed_list,
            "mean_precision": (
                sum(r["precision_at_injected"] for r in numeric) / len(numeric)
                if numeric else "n/a"
            ),
            "mean_separation": (
                sum(r["separation"] for r in numeric) / len(numeric)
                if numeric else "n/a"
            ),
        }
        write_lab_report(out / "noise_lab.jsonl", records + [summary])
    click.echo(json.dumps(summary, sort_keys=True))


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--threshold", default=0.85, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def split(ctx, manifest_path, out, threshold, seed):
    """Re-split a paged manifest at page level without transcript leakage."""
    params = _merged(ctx, "split", dict(
        manifest=manifest_path, out=out, threshold=threshold, seed=seed,
    ))
    manifest = load_manifest(params["manifest"])
    pages = page_transcripts(manifest)
    assignment = split_pages(
        pages, similarity_threshold=float(params["threshold"]), seed=int(params["seed"])
    )
    violations = audit_split(pages, assignment, float(params["threshold"]))
    if violations:
        raise RuntimeError(f"split audit failed with {len(violations)} leaky pairs")
    result = apply_page_assignment(manifest, assignment)
    path = save_manifest(result, Path(params["out"]))
    echo_resolved_config(path.parent, "split", params)
    tags = {t: len(assignment.pages(t)) for t in ("train", "val", "test", "dropped")}
    click.echo(f"split {len(pages)} pages {tags}; audit clean; wrote {path}")


@cli.command("crop-lines")
@click.option("--page", "page_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--masks", required=True, type=click.Path(exists=True, path_type=Path),
              help="directory of per-line mask PNGs (nonzero = line pixels).")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_context
def crop_lines(ctx, page_path, masks, out):
    """Cut line images out of a page using per-line mask files."""
    params = _merged(ctx, "crop-lines", dict(page=page_path, masks=masks, out=out))
    out = Path(params["out"])
    page = read_image(params["page"])
    mask_files = sorted(Path(params["masks"]).glob("*.png"))
    if not mask_files:
        raise ValueError(f"no mask PNGs under {params['masks']}")
    with output_lock(out):
        for mask_file in mask_files:
            mask = read_image(mask_file)
            crop = crop_line_from_mask(page, mask)
            write_image(out / f"{mask_file.stem}_line.png", crop)
        echo_resolved_config(out, "crop-lines", params)
    click.echo(f"cropped {len(mask_files)} lines into {out}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return EXIT_OK
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports anything
        click.echo(f"runtime failure: {exc}", err=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
