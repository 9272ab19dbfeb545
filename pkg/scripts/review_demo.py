"""Stand up the clerical review service on a freshly linked corpus.

Generates a small noisy corpus, links it, and serves the resulting review
queue so the API (and the UI bundle, if built) can be exercised by hand.

Usage: python3 scripts/review_demo.py [--port N] [--ui DIR]
"""

import argparse
import tempfile
from pathlib import Path

from problink.config import load_config
from problink.evaluation import SyntheticSpec, generate_synthetic
from problink.linkage_engine import run_pipeline
from problink.review_service import serve


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--ui", default=None,
                        help="static UI bundle directory (e.g. frontend/dist)")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(tempfile.mkdtemp(prefix="review_demo_"))
    spec = SyntheticSpec(seed=args.seed, n_a=400, n_b=380, n_overlap=220,
                        typo_rate=0.25, missing_rate=0.15)
    paths = generate_synthetic(spec, out / "corpus")
    result = run_pipeline(load_config(paths.config_path), out / "run")
    queue = result.out_dir / "review_queue.csv"
    print(f"linked: {len(result.matched)} matches, "
          f"{len(result.review_rows)} pairs queued for review")
    print(f"serving {queue} on http://127.0.0.1:{args.port}")
    serve(queue, out / "decisions.ndjson", static_dir=args.ui, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
