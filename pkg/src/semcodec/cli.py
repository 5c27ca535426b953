"""Command-line front end.

Subcommands cover dataset generation, the two training stages, evaluation,
two interactive demos, a generic config sweep, and the named presets.
Exit codes: 0 success, 2 bad config or arguments, 3 training divergence,
4 IO or audit failure. The default output root is the SEMCODEC_OUT
environment variable, falling back to ./runs.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from ._version import __version__
from .bits import (huffman_build, huffman_encode, huffman_decode_resync,
                   pack_fixed, unpack_fixed, symbol_match_rate, source_entropy_bits)
from .channel import BscChannel
from .ckpt import load_into, save_checkpoint
from .config import (ConfigError, format_config, loss_weights_from, parse_value,
                     resolve_config, set_key, train_config_from)
from .data import load_small_binary, make_shapes, save_dataset, train_val_split
from .io import write_metrics_csv, METRICS_COLUMNS
from .models import Codec
from .presets import SKEWED_P, preset_names, run_preset
from .tasks import DivergenceError, train_task_model, task_accuracy
from .training import (derive_seed, evaluate, run_two_stage, split_features,
                       stage1_denoise, stage1_eval_loss)


def _out_root():
    return os.environ.get("SEMCODEC_OUT", "runs")


def _out_dir(args, leaf):
    return args.out if args.out else os.path.join(_out_root(), leaf)


def _resolve(args):
    return resolve_config(args.config, args.set or (), seed=args.seed)


def _prepare(cfg):
    images, labels = make_shapes(cfg["data.n_samples"], seed=cfg["data.seed"],
                                 n_classes=cfg["data.n_classes"])
    train_set, val_set = train_val_split(images, labels, cfg["data.val_fraction"],
                                         seed=cfg["data.seed"] + 1)
    task, _ = train_task_model(train_set, val_set, n_classes=cfg["data.n_classes"],
                               epochs=cfg["task.epochs"], lr=cfg["task.lr"],
                               batch_size=cfg["task.batch_size"], seed=cfg["task.seed"])
    task.freeze()
    return train_set, val_set, task


def _new_codec(cfg, task):
    return Codec(task.split_shape(), code_channels=cfg["codec.channels"],
                 n_centers=cfg["codec.centers"], n_blocks=cfg["codec.blocks"],
                 gate_hidden=cfg["codec.gate_hidden"],
                 seed=derive_seed(cfg["codec.seed"], cfg["train.seed"]),
                 use_log_ber=cfg["codec.use_log_ber"])


def _write_run(out_dir, cfg, rows, codec=None, columns=None):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as f:
        f.write(format_config(cfg))
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows,
                      columns or METRICS_COLUMNS)
    if codec is not None:
        save_checkpoint(os.path.join(out_dir, "codec.ckpt"), codec.params())


def cmd_gen_data(args):
    cfg = _resolve(args)
    out = _out_dir(args, "dataset")
    if args.kind == "synthetic-shapes":
        images, labels = make_shapes(args.n, seed=cfg["data.seed"],
                                     n_classes=cfg["data.n_classes"])
        meta = {"kind": args.kind, "seed": cfg["data.seed"]}
    else:
        if not args.src:
            raise ConfigError("import-small-binary needs --src FILE")
        images, labels = load_small_binary(args.src, limit=args.n)
        meta = {"kind": args.kind, "source": os.path.basename(args.src)}
    save_dataset(out, images, labels, meta)
    print(f"wrote {images.shape[0]} samples to {out}")
    return 0


def cmd_train_stage1(args):
    cfg = _resolve(args)
    train_set, val_set, task = _prepare(cfg)
    codec = _new_codec(cfg, task)
    tc = train_config_from(cfg)
    feats = split_features(task, train_set[0])
    val_feats = split_features(task, val_set[0])
    rows = stage1_denoise(codec, feats, tc, val_features=val_feats)
    out = _out_dir(args, f"stage1-seed{tc.seed}")
    _write_run(out, cfg, rows, codec)
    held = stage1_eval_loss(codec, val_feats, ber=0.0)
    print(f"stage1 done: held-out mse {held:.5f} at ber 0; artifacts in {out}")
    return 0


def cmd_train_stage2(args):
    cfg = _resolve(args)
    train_set, val_set, task = _prepare(cfg)
    codec = _new_codec(cfg, task)
    tc = train_config_from(cfg)
    rows = run_two_stage(codec, task, train_set, val_set, loss_weights_from(cfg), tc)
    rows += evaluate(codec, task, val_set[0], val_set[1], cfg["eval.ber_grid"],
                     reps=cfg["eval.reps"], seed=cfg["eval.seed"],
                     slice_ratio=tc.slice_ratio, side_info=tc.side_info,
                     recovery=tc.recovery_mode)
    out = _out_dir(args, f"stage2-seed{tc.seed}")
    _write_run(out, cfg, rows, codec)
    stage2 = [r for r in rows if r.get("stage") == 2]
    print(f"two-stage done: final entropy {stage2[-1]['entropy_bits']:.3f} bits; "
          f"artifacts in {out}")
    return 0


def cmd_eval(args):
    cfg = _resolve(args)
    train_set, val_set, task = _prepare(cfg)
    codec = _new_codec(cfg, task)
    load_into(codec.params(), args.ckpt)
    tc = train_config_from(cfg)
    rows = evaluate(codec, task, val_set[0], val_set[1], cfg["eval.ber_grid"],
                    reps=cfg["eval.reps"], seed=cfg["eval.seed"],
                    slice_ratio=tc.slice_ratio, side_info=tc.side_info,
                    recovery=tc.recovery_mode)
    out = _out_dir(args, "eval")
    _write_run(out, cfg, rows)
    print(f"task-model baseline accuracy {task_accuracy(task, *val_set):.3f}")
    for ber in cfg["eval.ber_grid"]:
        accs = [r["accuracy"] for r in rows if float(r["ber"]) == float(ber)]
        print(f"ber {ber:g}: accuracy {np.mean(accs):.3f} over {len(accs)} reps")
    return 0


def cmd_channel_demo(args):
    cfg = _resolve(args)
    rng = np.random.default_rng(cfg["train.seed"])
    sent = pack_fixed(rng.integers(0, 8, size=1024), 3)
    print(f"payload: {sent.bit_length} bits ({sent.symbol_count} symbols)")
    for ber in cfg["eval.ber_grid"]:
        ch = BscChannel(ber=ber, seed=derive_seed("channel-demo", cfg["train.seed"], float(ber)))
        noisy, info = ch.transmit(sent)
        n_sym = int(np.sum(unpack_fixed(noisy) != unpack_fixed(sent)))
        print(f"ber {ber:g}: {info['n_flips']} flips, {n_sym} corrupted symbols")
    return 0


def cmd_huffman_demo(args):
    cfg = _resolve(args)
    rng = np.random.default_rng(cfg["train.seed"])
    sent = rng.choice(len(SKEWED_P), size=2000, p=SKEWED_P)
    table = huffman_build(np.bincount(sent, minlength=len(SKEWED_P)))
    enc = huffman_encode(sent, table)
    emp = np.bincount(sent, minlength=len(SKEWED_P)) / sent.size
    print(f"source entropy {source_entropy_bits(SKEWED_P):.3f} bits/symbol, "
          f"avg code length {table.avg_length(emp):.3f}")
    for sym in sorted(table.codes):
        code, length = table.codes[sym]
        print(f"  symbol {sym}: {code:0{length}b}")
    for ber in [0.0, 0.001, 0.005]:
        ch = BscChannel(ber=ber, seed=derive_seed("huffman-demo", float(ber)))
        noisy, info = ch.transmit(enc)
        dec, mask = huffman_decode_resync(noisy, table, sent.size)
        print(f"ber {ber:g}: {info['n_flips']} flips, "
              f"match rate {symbol_match_rate(sent, dec, mask):.4f}")
    return 0


def cmd_sweep(args):
    cfg = _resolve(args)
    values = [parse_value(v) for v in args.values.split(",")]
    train_set, val_set, task = _prepare(cfg)
    rows = []
    for value in values:
        arm_cfg = dict(cfg)
        set_key(arm_cfg, args.key, value)
        codec = _new_codec(arm_cfg, task)
        tc = train_config_from(arm_cfg)
        label = f"{args.key}={value!r}"
        hist = run_two_stage(codec, task, train_set, val_set,
                             loss_weights_from(arm_cfg), tc)
        rows += [dict(r, arm=label) for r in hist]
        ev = evaluate(codec, task, val_set[0], val_set[1], cfg["eval.ber_grid"],
                      reps=cfg["eval.reps"], seed=cfg["eval.seed"],
                      slice_ratio=tc.slice_ratio, side_info=tc.side_info,
                      recovery=tc.recovery_mode)
        rows += [dict(r, arm=label, rep=r["seed"], seed=tc.seed) for r in ev]
        accs = [r["accuracy"] for r in ev]
        print(f"{label}: mean accuracy {np.mean(accs):.3f} across the grid")
    out = _out_dir(args, f"sweep-{args.key.replace('.', '-')}")
    _write_run(out, cfg, rows, columns=["arm", "rep"] + METRICS_COLUMNS)
    print(f"artifacts in {out}")
    return 0


def cmd_run_preset(args):
    cfg = _resolve(args)
    out = _out_dir(args, args.name)
    seeds = args.seeds or [cfg["train.seed"]]
    summary = run_preset(args.name, cfg, out, seeds=seeds)
    print(f"preset {args.name} done; artifacts in {out}")
    for key, value in summary.items():
        print(f"  {key}: {value}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file of key = value lines")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="training seed shortcut")
    common.add_argument("--out", help="output directory (default under SEMCODEC_OUT)")
    p = argparse.ArgumentParser(
        prog="semcodec",
        description="error-resilient split-computing codec lab",
    )
    p.add_argument("--version", action="version", version=f"semcodec {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write a dataset to disk")
    g.add_argument("--kind", choices=["synthetic-shapes", "import-small-binary"],
                   default="synthetic-shapes")
    g.add_argument("--n", type=int, default=512)
    g.add_argument("--src", help="source file for import-small-binary")
    g.set_defaults(fn=cmd_gen_data)

    s1 = sub.add_parser("train-stage1", parents=[common],
                        help="denoising pretraining only")
    s1.set_defaults(fn=cmd_train_stage1)

    s2 = sub.add_parser("train-stage2", parents=[common],
                        help="full two-stage training plus evaluation")
    s2.set_defaults(fn=cmd_train_stage2)

    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    ev.add_argument("--ckpt", required=True)
    ev.set_defaults(fn=cmd_eval)

    cd = sub.add_parser("channel-demo", parents=[common],
                        help="show flip statistics on a fixed-length stream")
    cd.set_defaults(fn=cmd_channel_demo)

    hd = sub.add_parser("huffman-demo", parents=[common],
                        help="show the prefix code and resync behavior")
    hd.set_defaults(fn=cmd_huffman_demo)

    sw = sub.add_parser("sweep", parents=[common], help="train once per value of a key")
    sw.add_argument("--key", required=True, help="config key to sweep")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.set_defaults(fn=cmd_sweep)

    rp = sub.add_parser("run-preset", parents=[common], help="run a named study")
    rp.add_argument("name", choices=preset_names())
    rp.add_argument("--seeds", type=int, nargs="+", help="seed list (default: train.seed)")
    rp.set_defaults(fn=cmd_run_preset)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
