"""End-to-end cleaning walkthrough without the browser UI.

Builds a noisy dataset, trains, ranks, then replays a scripted review using
the injection ground truth as the reviewer. Prints the category report table
and where the cleaned manifest landed.
"""
import argparse
from pathlib import Path

from cerhv.detector import select_flagged, write_score_report
from cerhv.lab import LabConfig, build_lab_dataset, score_all_splits, train_lab_model
from cerhv.manifest import save_manifest
from cerhv.review import (
    SessionStore,
    auto_verdicts_from_truth,
    build_cleaned_manifest,
    category_report,
    format_report_table,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", type=Path, default=Path("runs/review-demo"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--count", type=int, default=500)
    args = ap.parse_args()

    config = LabConfig(count=args.count, seed=args.seed)
    manifest = build_lab_dataset(args.workdir, config, rates={"transcription": 0.04, "orientation": 0.03})
    outcome, spec = train_lab_model(manifest, config)
    report = score_all_splits(outcome.model, manifest, spec)

    scores_path = write_score_report(args.workdir / "scores.jsonl", report, tau=config.tau)
    manifest_path = args.workdir / "manifest.jsonl"

    store = SessionStore(args.workdir / "sessions")
    session = store.create(manifest_path, scores_path, tau=config.tau)
    print(f"session {session.session_id}: {len(session.pending())} flagged samples to review")

    flags = select_flagged(report.scores, config.tau)
    for verdict in auto_verdicts_from_truth(manifest, flags.ids()).values():
        session.submit(verdict)

    rep = category_report(session)
    print(format_report_table(rep))

    cleaned = build_cleaned_manifest(
        manifest, session.log.effective(), flags.ids(), allow_partial=False
    )
    out = save_manifest(cleaned, args.workdir / "cleaned.jsonl")
    print(f"cleaned manifest: {out} ({len(manifest.entries) - len(cleaned.entries)} removed)")


if __name__ == "__main__":
    main()
