"""Command line front end: synth | encode | train | eval | serve."""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
from pathlib import Path

import numpy as np

from .errors import KeydynError
from .events import extract_features_matrix, read_samples_jsonl
from .evaluation import (
    PipelineConfig,
    buffer_positions,
    buffer_with_history,
    compute_eer,
    config_schema,
    fit_pipeline,
    load_config,
    run_experiment,
)
from .matrixio import write_matrix
from .neural import SvddModel, SvddNetwork, save_model, score_batch, train_svdd
from .synthdata import export_cohort, generate_cohort


def _cmd_synth(args) -> int:
    per_user = args.sessions * args.per_session
    cohort = generate_cohort(
        args.users, per_user, args.imposters,
        pin_length=args.pin_length, sessions=args.sessions,
        separation=args.separation,
        outlier_rate=args.outlier_rate, seed=args.seed,
    )
    count = export_cohort(cohort, args.out)
    print(f"wrote {count} samples for {args.users} users to {args.out}")
    return 0


def _load_user_samples(path: str, user: str | None, label: str = "genuine"):
    samples = [s for s in read_samples_jsonl(path) if s.label == label]
    if user is not None:
        samples = [s for s in samples if s.user_id == user]
    if not samples:
        raise KeydynError(f"no {label} samples" +
                          (f" for user {user}" if user else "") + f" in {path}")
    return samples


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        normalization=args.normalization,
        buffer_size=args.buffer,
        augment_count=args.augment,
        encoder=args.encoder,
    )


def _cmd_encode(args) -> int:
    samples = _load_user_samples(args.samples, args.user)
    rows, layout = extract_features_matrix(samples)
    pipeline, buffered = fit_pipeline(rows, layout, _pipeline_config(args),
                                      seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, row in enumerate(buffered):
        pipeline.encode(row).save_png(out / f"window-{i:04d}.png")
    if args.matrix:
        write_matrix(args.matrix, buffered)
    print(f"encoded {buffered.shape[0]} windows to {out}")
    return 0


def _cmd_train(args) -> int:
    samples = _load_user_samples(args.samples, args.user)
    rows, layout = extract_features_matrix(samples)
    n = rows.shape[0]
    n_val = max(int(n * 0.25), 2)
    n_train = n - n_val
    pipeline, buffered = fit_pipeline(rows[:n_train], layout,
                                      _pipeline_config(args), seed=args.seed)
    stream = pipeline.transform(rows)
    b = args.buffer
    val_pos = list(range(n_train, n))
    val_gen = buffer_positions(stream, val_pos, b)
    rng = np.random.default_rng(args.seed)
    offsets = stream[val_pos] + rng.normal(0.0, 2.0, size=(n_val, layout.dim))
    val_imp = buffer_with_history(stream, offsets, val_pos, b)

    model = SvddModel(network=SvddNetwork(seed=args.seed))
    train_imgs = pipeline.encode_all(buffered)
    model.initialize_center(train_imgs)
    result = train_svdd(model, train_imgs, epochs=args.epochs, lr=args.lr,
                        batch_size=args.batch_size, seed=args.seed)
    val_eer, threshold = compute_eer(
        score_batch(model, pipeline.encode_all(val_gen)),
        score_batch(model, pipeline.encode_all(val_imp)),
    )
    model.threshold = float(threshold)
    model.metadata = {"val_eer": float(val_eer), "epochs": result.epochs_run,
                      "seed": args.seed}
    save_model(model, args.out)
    if args.pipeline_out:
        Path(args.pipeline_out).write_text(
            json.dumps(pipeline.to_dict(), sort_keys=True))
    print(f"trained on {n_train} samples: final_loss={result.final_loss:.6f} "
          f"val_eer={val_eer:.4f} threshold={threshold:.4f} -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    if args.print_schema:
        print(json.dumps(config_schema(), indent=2, sort_keys=True))
        return 0
    config = load_config(args.config)
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    report = run_experiment(config, progress=progress)
    report_cfg = config.get("report", {})
    csv_path = args.csv or report_cfg.get("csv")
    json_path = args.json_out or report_cfg.get("json")
    if csv_path:
        report.write_csv(csv_path)
    if json_path:
        report.write_json(json_path)
    for failure in report.failures:
        print(f"user {failure['user']} failed: {failure['error']}", file=sys.stderr)
    if report.rows:
        agg = report.aggregates()["Average"]
        print(f"users={len(report.rows)} mean_eer={agg['eer']:.4f} "
              f"mean_acc={agg['acc']:.4f}")
    return 0 if report.rows else 1


def _cmd_serve(args) -> int:
    import uvicorn
    from .service import ServiceConfig, create_app

    app = create_app(args.store, ServiceConfig(
        pin_length=args.pin_length, epochs=args.epochs,
        min_samples=args.min_samples,
    ))
    if args.ui:
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=args.ui, html=True), name="ui")

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((args.host, args.port))
    host, port = sock.getsockname()[:2]
    print(f"listening on {host}:{port}", flush=True)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keydyn",
        description="Keystroke-dynamics PIN authentication toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort as JSONL")
    p.add_argument("--users", type=int, default=4)
    p.add_argument("--sessions", type=int, default=1)
    p.add_argument("--per-session", type=int, default=100,
                   help="genuine entries per session")
    p.add_argument("--imposters", type=int, default=0,
                   help="imposter attempts per user")
    p.add_argument("--pin-length", type=int, default=10)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--outlier-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    def pipeline_flags(p):
        p.add_argument("--user", default=None)
        p.add_argument("--buffer", type=int, default=5)
        p.add_argument("--augment", type=int, default=300)
        p.add_argument("--encoder", default="ours-pca",
                       choices=["ours-pca", "ours-xy", "rp", "gaf", "mtf"])
        p.add_argument("--normalization", default="standardize",
                       choices=["standardize", "minmax"])
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("encode", help="encode samples into window images")
    p.add_argument("--samples", required=True, help="input JSONL")
    pipeline_flags(p)
    p.add_argument("--out", required=True, help="output directory for PNGs")
    p.add_argument("--matrix", default=None,
                   help="also dump buffered vectors to this KDYN file")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("train", help="train a one-class model for one user")
    p.add_argument("--samples", required=True, help="input JSONL")
    pipeline_flags(p)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--pipeline-out", default=None,
                   help="also save the fitted pipeline as JSON")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="run a cohort experiment from a TOML config")
    p.add_argument("--config", help="TOML experiment configuration")
    p.add_argument("--csv", default=None, help="write the CSV report here")
    p.add_argument("--json", dest="json_out", default=None,
                   help="write the JSON report here")
    p.add_argument("--print-schema", action="store_true",
                   help="print the configuration JSON schema and exit")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP authentication service")
    p.add_argument("--store", default=os.environ.get("KEYDYN_DATA_DIR"),
                   help="state directory (default: $KEYDYN_DATA_DIR)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000,
                   help="0 picks a free port and prints it")
    p.add_argument("--pin-length", type=int, default=10)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--min-samples", type=int, default=50)
    p.add_argument("--ui", default=None,
                   help="serve this directory of static files at /ui")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and not args.print_schema and not args.config:
        parser.error("eval requires --config (or --print-schema)")
    if args.command == "serve" and not args.store:
        parser.error("serve requires --store or KEYDYN_DATA_DIR")
    try:
        return args.func(args)
    except KeydynError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
