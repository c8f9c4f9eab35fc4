"""Command-line client for the toolkit service.

All subcommands speak HTTP to the FastAPI app: against a remote server
when --server is given, otherwise through an in-process ASGI transport, so
local runs need no network or separate process. Config files are read
locally and sent inline; errors come back as machine-readable JSON on
stderr with a nonzero exit code.
"""

import argparse
import json
import sys

import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # In-process transport: the CLI stays a plain HTTP client but local
    # runs need no separate server process.
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service import app

    return TestClient(app, raise_server_exceptions=False)


def _load_json(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _call(args, endpoint: str, payload: dict) -> int:
    with _client(args.server) as client:
        resp = client.post(endpoint, json=payload)
    if resp.status_code // 100 != 2:
        try:
            body = resp.json()
        except ValueError:
            body = {"detail": resp.text}
        json.dump({"error": f"http {resp.status_code}", **body}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    body = resp.json()
    json.dump(body, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return 0


def cmd_phantom(args):
    payload = {"config": _load_json(args.config), "out_path": args.out}
    if args.preview:
        payload["preview_pgm"] = args.preview
    return _call(args, "/phantom", payload)


def cmd_simulate(args):
    return _call(
        args,
        "/simulate",
        {"phantom_path": args.phantom, "config": _load_json(args.config), "out_path": args.out},
    )


def cmd_tof(args):
    return _call(
        args,
        "/tof",
        {"in_path": args.input, "config": _load_json(args.config), "out_path": args.out},
    )


def cmd_train(args):
    payload = {
        "data_path": args.data,
        "arch": _load_json(args.arch),
        "config": _load_json(args.config),
        "model_out": args.model,
    }
    if args.history:
        payload["history_out"] = args.history
    if args.finetune_data:
        payload["finetune_data_path"] = args.finetune_data
    return _call(args, "/train", payload)


def cmd_predict(args):
    return _call(
        args,
        "/predict",
        {
            "model_path": args.model,
            "in_path": args.input,
            "out_path": args.out,
            "stride": args.stride,
        },
    )


def cmd_eval(args):
    payload = {"pred_path": args.pred, "truth_path": args.truth, "metrics_out": args.out}
    if args.dice_threshold is not None:
        payload["dice_threshold"] = args.dice_threshold
    return _call(args, "/eval", payload)


def cmd_bench(args):
    return _call(args, "/bench", {"model_path": args.model, "n": args.n})


def cmd_render(args):
    try:
        lo, hi = (float(v) for v in args.range.split("..", 1))
    except ValueError:
        json.dump({"error": "InvalidRange", "detail": f"bad --range {args.range!r}"}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return _call(
        args,
        "/render",
        {
            "map_path": args.map,
            "out_path": args.out,
            "lo": lo,
            "hi": hi,
            "record_index": args.record,
        },
    )


def cmd_serve(args):
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sweikit", description="Shear wave elasticity imaging toolkit"
    )
    parser.add_argument(
        "--server", default=None, help="base URL of a running service (default: in-process)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="render a phantom elasticity map")
    p.add_argument("config", help="phantom JSON config")
    p.add_argument("out", help="output map (SWD1)")
    p.add_argument("--preview", default=None, help="optional PGM preview path")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("simulate", help="batch shear wave acquisitions")
    p.add_argument("phantom", help="phantom map (SWD1)")
    p.add_argument("config", help="simulation JSON config")
    p.add_argument("out", help="output sequences (SWD1)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tof", help="time-of-flight elasticity estimation")
    p.add_argument("input", help="sequences (SWD1)")
    p.add_argument("config", nargs="?", default=None, help="ToF JSON config")
    p.add_argument("out", help="output map (SWD1)")
    p.set_defaults(func=cmd_tof)

    p = sub.add_parser("train", help="train the spatio-temporal regressor")
    p.add_argument("data", help="training sequences (SWD1)")
    p.add_argument("arch", nargs="?", default=None, help="architecture JSON")
    p.add_argument("config", nargs="?", default=None, help="training JSON")
    p.add_argument("model", help="output model file")
    p.add_argument("--history", default=None, help="per-epoch loss CSV")
    p.add_argument("--finetune-data", default=None, help="inhomogeneous sequences (SWD1)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="pixelwise map inference")
    p.add_argument("model", help="model file")
    p.add_argument("input", help="sequences (SWD1)")
    p.add_argument("out", help="output maps (SWD1)")
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="compare predicted maps against ground truth")
    p.add_argument("pred", help="predicted maps (SWD1)")
    p.add_argument("truth", help="ground-truth map (SWD1)")
    p.add_argument("out", help="metrics CSV path")
    p.add_argument("--dice-threshold", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="inference throughput benchmark")
    p.add_argument("model", help="model file")
    p.add_argument("-n", type=int, default=1000, help="timed inferences")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="render a map to PGM or CSV")
    p.add_argument("map", help="map file (SWD1)")
    p.add_argument("out", help="output .pgm or .csv path")
    p.add_argument("--range", required=True, help="display range lo..hi in Pa")
    p.add_argument("--record", type=int, default=0, help="map record index")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        json.dump({"error": "FileNotFound", "detail": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
