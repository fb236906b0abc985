"""Command-line entry point: dataset, train, generate, eval, serve.

Every subcommand exits 0 on success.  Bad input — unknown flags,
malformed request files, invalid configs — exits 2 with a single-line
message; runtime failures exit 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from ..errors import ConfigError, CtrlvidError, FormatError, ValidationError
from ..inference import DecodeConfig, decode_requests, grid_to_clip, iterative_decode
from ..model import TransformerConfig, load_checkpoint
from ..synthworld import WorldConfig, build_records, load_records, save_records
from ..tokenizer import save_clip
from ..training import STAGE_ADAPT, STAGE_PRETRAIN, TrainConfig, prepare_state, run_training
from .app import CHECKPOINT_ENV, ServiceConfig, build_app, resolve_checkpoint
from .frames import DEFAULT_SCALE, strip_png
from .wire import parse_request, request_from_record

RECORDS_NAME = "records.frec"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctrlvid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="generate a deterministic record file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--records", required=True)
    p.add_argument("--stage", required=True, choices=[STAGE_PRETRAIN, STAGE_ADAPT])
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True, help="checkpoint/metrics directory")
    p.add_argument("--base", help="pretrained checkpoint (required for adapt)")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--dtype", choices=["float64", "float32"], default="float64")

    p = sub.add_parser("generate", help="decode one request file to a clip")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--request", required=True, help="request JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scale", type=int, default=DEFAULT_SCALE, help="pixels per cell in the strip")

    p = sub.add_parser("eval", help="score generated clips against held-out records")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--count", type=int, default=0, help="records to use (0 = all)")
    p.add_argument("--skip", type=int, default=0, help="records to skip from the front")
    p.add_argument("--steps", type=int, default=DecodeConfig().steps)
    p.add_argument("--guidance-scale", type=float, default=DecodeConfig().guidance_scale)
    p.add_argument("--temperature", type=float, default=DecodeConfig().temperature)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--out", help="also write the report to this file")

    p = sub.add_parser("serve", help="run the HTTP generation service")
    p.add_argument("--checkpoint", default="", help=f"overridden by ${CHECKPOINT_ENV}")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8417)
    p.add_argument("--max-concurrency", type=int, default=1)
    p.add_argument("--retention", type=int, default=64)
    p.add_argument("--max-pending", type=int, default=16)
    p.add_argument("--snapshot", help="job snapshot file")
    return parser


def _cmd_dataset(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    config = WorldConfig()
    records = build_records(args.seed, args.count, config)
    path = os.path.join(args.out, RECORDS_NAME)
    save_records(path, records, config)
    print(f"wrote {len(records)} records to {path}")
    return 0


def _cmd_train(args) -> int:
    records, _meta = load_records(args.records)
    config = TrainConfig(
        stage=args.stage,
        steps=args.steps,
        batch=args.batch,
        lr=args.lr,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
    )
    state = None
    if not args.resume:
        if args.stage == STAGE_ADAPT and not args.base:
            raise ConfigError("adapt stage requires --base with a pretrained checkpoint")
        model_config = TransformerConfig(dtype=args.dtype)
        state = prepare_state(config, model_config=model_config, base_checkpoint=args.base)
    result = run_training(records, config, args.out, state=state, resume=args.resume)
    last = result.metrics[-1] if result.metrics else {}
    print(
        f"finished {args.stage} at step {last.get('step', 0)}: "
        f"loss {last.get('loss', float('nan')):.4f}, checkpoint in {args.out}"
    )
    return 0


def _cmd_generate(args) -> int:
    state = load_checkpoint(args.checkpoint)
    try:
        with open(args.request, "r", encoding="utf-8") as fh:
            body = json.load(fh)
    except OSError as e:
        raise ValidationError(f"cannot read request file: {e}") from e
    except ValueError as e:
        raise ValidationError(f"request file is not valid JSON: {e}") from e
    request = parse_request(body, state.config)
    clip = grid_to_clip(iterative_decode(state, request))
    os.makedirs(args.out, exist_ok=True)
    clip_path = os.path.join(args.out, "clip.fclp")
    strip_path = os.path.join(args.out, "frames.png")
    save_clip(clip_path, clip)
    with open(strip_path, "wb") as fh:
        fh.write(strip_png(clip, scale=args.scale))
    print(f"wrote {clip.frames.shape[0]} frames to {clip_path} and {strip_path}")
    return 0


def _cmd_eval(args) -> int:
    from ..evalsuite import evaluate_records

    state = load_checkpoint(args.checkpoint)
    records, _meta = load_records(args.records)
    records = records[args.skip :]
    if args.count:
        records = records[: args.count]
    if not records:
        raise ValidationError("no records selected for evaluation")
    decode = DecodeConfig(
        steps=args.steps,
        guidance_scale=args.guidance_scale,
        temperature=args.temperature,
        seed=args.seed,
    )
    requests = [
        request_from_record(r, state.config, dataclasses.replace(decode, seed=decode.seed + i))
        for i, r in enumerate(records)
    ]
    clips = decode_requests(state, requests, batch_size=args.batch)
    report = evaluate_records(clips, records)
    print(report.render())
    if args.out:
        report.save(args.out)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    config = ServiceConfig(
        host=args.host,
        port=args.port,
        checkpoint=args.checkpoint,
        max_concurrency=args.max_concurrency,
        retention=args.retention,
        max_pending=args.max_pending,
        snapshot_path=args.snapshot,
    )
    resolve_checkpoint(config)  # fail before binding if nothing is configured
    app = build_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


_COMMANDS = {
    "dataset": _cmd_dataset,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, ConfigError, FormatError) as e:
        field = getattr(e, "field", None)
        where = f" (field {field})" if field else ""
        print(f"error: {e}{where}", file=sys.stderr)
        return 2
    except CtrlvidError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
