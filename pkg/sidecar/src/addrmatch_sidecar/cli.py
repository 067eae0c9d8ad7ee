"""Run the sidecar server: ``addrmatch-sidecar --bundle deterministic``."""
from __future__ import annotations

import argparse


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="addrmatch-sidecar", description=__doc__)
    ap.add_argument("--bundle", choices=["deterministic", "transformer"],
                    default="deterministic")
    ap.add_argument("--model-name", default="distilbert-base-multilingual-cased",
                    help="encoder name for the transformer bundle")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-batch", type=int, default=256)
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8091)
    args = ap.parse_args(argv)

    import uvicorn

    from .app import create_app
    from .model import load_bundle

    kwargs = {"seed": args.seed, "max_batch": args.max_batch}
    if args.bundle == "transformer":
        kwargs["model_name"] = args.model_name
    bundle = load_bundle(args.bundle, **kwargs)
    uvicorn.run(create_app(bundle), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
