"""Stand up a real review service over a 20-sample synthetic flag set.

Prints one READY line of JSON (session id, paths) to stdout, then serves
until killed. The browser-client contract test drives this process.
"""
import argparse
import json
import sys

import uvicorn

from cerhv.ctc import Alphabet
from cerhv.detector import SampleScore, ScoreReport, write_score_report
from cerhv.manifest import save_manifest
from cerhv.review import SessionStore
from cerhv.review_api import create_app
from cerhv.synth import build_synthetic_manifest


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("workdir")
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--count", type=int, default=20)
    args = parser.parse_args()

    data = f"{args.workdir}/data"
    manifest = build_synthetic_manifest(data, count=args.count, alphabet=Alphabet.of("abcde"), seed=11)
    manifest_path = save_manifest(manifest, f"{data}/manifest.jsonl")

    # descending CER ladder, everything above tau: the whole set is flagged
    scores = []
    for i, entry in enumerate(manifest.entries):
        cer = 0.9 - 0.5 * i / len(manifest.entries)
        scores.append(
            SampleScore(entry.id, prediction=entry.text[:-1], cer=cer, edits=1, ref_len=len(entry.text), rank=i + 1)
        )
    scores_path = write_score_report(f"{data}/scores.jsonl", ScoreReport(scores=scores), tau=0.25)

    store = SessionStore(f"{args.workdir}/sessions")
    session = store.create(manifest_path, scores_path, tau=0.25)
    print(
        "READY " + json.dumps({
            "session_id": session.session_id,
            "manifest": str(manifest_path),
            "scores": str(scores_path),
            "port": args.port,
        }),
        flush=True,
    )
    uvicorn.run(create_app(store), host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
