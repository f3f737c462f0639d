"""gazectl: command-line entry point for every pipeline stage.

Exit status is 0 on success, 1 on usage errors and 2 on runtime errors.
Results go to stdout; logs go to stderr. ``--config FILE`` supplies
``key = value`` defaults (keys are flag names without the leading dashes);
flags given on the command line take precedence.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from typing import Callable, Sequence

from . import __version__
from .config import format_kv, parse_kv
from .errors import ConfigError, GazeError

log = logging.getLogger("gazectl")


class UsageError(Exception):
    def __init__(self, message: str, parser: argparse.ArgumentParser | None = None):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2; usage errors are 1 here
        raise UsageError(message, self)


def _rgb(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3 or not all(0 <= p <= 255 for p in parts):
        raise argparse.ArgumentTypeError(f"expected r,g,b with values 0..255, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def _names(text: str) -> tuple[str, ...]:
    return tuple(n.strip() for n in text.split(",")) if text else ()


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _calibration(args):
    from .geometry import CalibrationProfile

    return CalibrationProfile.load(args.calibration) if getattr(args, "calibration", None) else CalibrationProfile()


def _out(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


# ---------------------------------------------------------------------------
# subcommand implementations


def cmd_dataset_gen(args) -> int:
    from .dataset import SPLITS, generate

    m = generate(args.seed, args.subjects, args.frames_per_location, _calibration(args), args.out, args.split_by_subject)
    counts = {f"{s}_samples": len(m.split(s)) for s in SPLITS}
    _out(format_kv({"manifest": m.root / "manifest.csv", "samples": len(m.records), **counts}))
    return 0


def cmd_train(args) -> int:
    from .dataset import DatasetManifest
    from .nn.gazenet import GazeNetConfig
    from .nn.train import format_loss_log, train, write_loss_log

    manifest = DatasetManifest.load(args.data)
    config = GazeNetConfig(width_multiplier=args.width)
    net, history = train(manifest, config, args.epochs, args.batch, args.seed, args.lr)
    net.save(args.out)
    if args.loss_log:
        write_loss_log(history, args.loss_log)
    _out(format_loss_log(history))
    return 0


def cmd_gradcheck(args) -> int:
    from .nn.gradcheck import grad_check

    report = grad_check(seed=args.seed, tolerance=args.tolerance, corrupt_dense=args.corrupt_dense)
    _out(report.to_text())
    return 0 if report.passed else 2


def cmd_eval_regression(args) -> int:
    from .dataset import DatasetManifest
    from .eval import predict_split, regression_report
    from .nn.gazenet import GazeNet

    preds, truths = predict_split(GazeNet.load(args.model), DatasetManifest.load(args.data), args.split)
    _out(regression_report(preds, truths).to_text())
    return 0


def cmd_eval_hitrate(args) -> int:
    from .eval import HitRateReport, HitRateRow, hit_rate_empirical, hit_rate_simulated, simulation_layout
    from .layout import LayoutStyle

    cal = _calibration(args)
    styles = [LayoutStyle.parse(s) for s in args.styles.split(",")]
    report = HitRateReport()
    if args.empirical:
        from .dataset import DatasetManifest
        from .nn.gazenet import GazeNet

        if not args.data or not args.model:
            raise UsageError("--empirical needs --data and --model")
        model, manifest = GazeNet.load(args.model), DatasetManifest.load(args.data)
    for style in styles:
        for n in args.n:
            if style is LayoutStyle.STRIP and n < 3:
                continue
            if args.empirical:
                row = hit_rate_empirical(model, manifest, args.split, simulation_layout(style, n, cal), style.value)
            else:
                rate = hit_rate_simulated(style, n, (args.sigma_x, args.sigma_y), args.trials, args.seed, args.truth, cal)
                row = HitRateRow(style.value, n, rate, args.trials)
            report.rows.append(row)
    _out(report.to_csv())
    return 0


def cmd_eval_cuestats(args) -> int:
    from .eval import cue_stats

    _out(cue_stats(args.h, args.m, args.fp, args.cr).to_text())
    return 0


def cmd_layout_gen(args) -> int:
    from .imaging import save_ppm
    from .layout import LayoutSpec, generate_screenshot, layout_to_text, save_layout

    spec = LayoutSpec(
        args.n, args.style, args.names, args.background, _calibration(args), args.gutter, args.decorations
    )
    frame, lmap = generate_screenshot(spec)
    if args.tau is not None:
        lmap = lmap.with_tau(args.tau)
    save_ppm(frame, args.out)
    if args.record:
        save_layout(lmap, args.record)
    _out(layout_to_text(lmap))
    return 0


def cmd_layout_parse(args) -> int:
    from .imaging import load_ppm
    from .layout import layout_to_text, parse_screenshot, read_labels, save_layout

    labels = read_labels(args.labels) if args.labels else None
    lmap = parse_screenshot(
        load_ppm(args.screenshot), _calibration(args), args.background, args.tolerance, args.ar_tolerance,
        labels=labels, tau_cm=args.tau,
    )
    if args.out:
        save_layout(lmap, args.out)
    _out(layout_to_text(lmap))
    return 0


def _pipeline_from_args(args):
    from .facedet import SidecarDetector
    from .layout import LayoutSpec
    from .runtime import OverlayStyle, Pipeline, PipelineConfig

    sources = [s for s in (args.layout, args.screenshot, args.n) if s is not None]
    if len(sources) != 1:
        raise UsageError("give exactly one of --layout, --screenshot or --n")
    cal = _calibration(args)
    spec = LayoutSpec(args.n, args.style, calibration=cal) if args.n is not None else None
    origin = tuple(_ints(args.overlay_origin)) if args.overlay_origin else None
    config = PipelineConfig(
        calibration=cal,
        layout_file=args.layout,
        layout_screenshot=args.screenshot,
        layout_spec=spec,
        model_path=args.model,
        tau_cm=args.tau,
        window=args.window,
        overlay=OverlayStyle(origin, args.overlay_scale, args.overlay_color),
    )
    detector = SidecarDetector.from_file(args.detections) if getattr(args, "detections", None) else None
    return Pipeline(config, detector=detector)


def cmd_run(args) -> int:
    from .runtime import RESULT_COLUMNS, LatestFrameSlot, SequenceWriter, list_frames, result_row, run_directory

    if not args.outdir and not args.serve:
        raise UsageError("give --outdir and/or --serve")
    pipeline = _pipeline_from_args(args)
    frames = list_frames(args.frames)
    writer = SequenceWriter(args.outdir, args.append) if args.outdir else None
    slot = handle = None
    if args.serve:
        from .service import serve_stream

        slot = LatestFrameSlot()
        handle = serve_stream(slot, args.serve)
        log.info("stream at %s/stream", handle.url)
    _out(f"# {RESULT_COLUMNS}\n")
    try:
        pace = 1.0 / args.fps if args.fps > 0 else 0.0
        run_directory(pipeline, frames, writer, slot, pace, on_result=lambda r: _out(result_row(r) + "\n"))
        if handle is not None and args.linger > 0:
            time.sleep(args.linger)
    finally:
        if handle is not None:
            handle.stop()
    return 0


def cmd_bench_fps(args) -> int:
    from .dataset import FRAME_H, FRAME_W, HeadState, build_location_table, render_sample
    from .eval import fps_benchmark
    from .imaging import load_ppm

    if args.frame:
        frame = load_ppm(args.frame)
    else:
        gaze = build_location_table(_calibration(args))[46]
        frame, _ = render_sample(gaze, HeadState(FRAME_W / 2, FRAME_H / 2, 170), 0)
    pipeline = _pipeline_from_args(args)
    res = fps_benchmark(lambda: pipeline.process_frame(frame), args.trials, args.warmup)
    _out(res.to_text())
    return 0


def cmd_serve(args) -> int:
    from .runtime import LatestFrameSlot
    from .service import create_app, serve_stream

    slot = LatestFrameSlot()
    handle = serve_stream(slot, args.addr, app=create_app(slot, _calibration(args)))
    _out(f"url = {handle.url}\n")
    try:
        while handle.thread.is_alive():
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        handle.stop()
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_calibration(p) -> None:
    p.add_argument("--calibration", metavar="FILE", help="calibration profile (key = value); default 1920x1080 desk screen")


def _add_pipeline_args(p) -> None:
    p.add_argument("--model", required=True, help="GZNT parameter file")
    p.add_argument("--layout", help="layout record file")
    p.add_argument("--screenshot", help="gallery screenshot (PPM) to parse")
    p.add_argument("--n", type=int, help="synthetic layout participant count")
    p.add_argument("--style", default="grid", help="synthetic layout style: grid or strip")
    p.add_argument("--tau", type=float, help="targetless threshold in cm (default: auto)")
    p.add_argument("--window", type=int, default=5, help="smoothing window in frames")
    p.add_argument("--overlay-origin", help="x,y of the label (default: top-center)")
    p.add_argument("--overlay-scale", type=int, default=3)
    p.add_argument("--overlay-color", type=_rgb, default=(255, 255, 255))
    p.add_argument("--detections", help="sidecar CSV of face boxes (default: synthetic key-color detector)")
    _add_calibration(p)


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    root = _Parser(prog="gazectl", description=__doc__.splitlines()[0])
    root.add_argument("--version", action="version", version=f"gazectl {__version__}")
    root.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    root.add_argument("--config", metavar="FILE", help="key = value defaults for the subcommand's flags")
    sub = root.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    leaves: dict[str, _Parser] = {}

    def leaf(parent, name: str, func: Callable, help: str, path: str) -> _Parser:
        p = parent.add_parser(name, help=help, description=help)
        p.set_defaults(func=func)
        leaves[path] = p
        return p

    def group(name: str, help: str):
        p = sub.add_parser(name, help=help, description=help)
        p.set_defaults(func=None, group_parser=p)
        return p.add_subparsers(dest="action", metavar="ACTION", parser_class=_Parser)

    ds = group("dataset", "synthetic dataset tools")
    p = leaf(ds, "gen", cmd_dataset_gen, "render a synthetic dataset; prints key = value counts", "dataset gen")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=22)
    p.add_argument("--frames-per-location", type=int, default=1)
    p.add_argument("--split-by-subject", action="store_true", help="split by subject instead of by sample")
    _add_calibration(p)

    p = leaf(sub, "train", cmd_train, "train the regressor; prints 'epoch, train, val' loss rows", "train")
    p.add_argument("--data", required=True, help="dataset directory or manifest")
    p.add_argument("--out", required=True, help="output GZNT parameter file")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--width", type=float, default=0.25, help="width multiplier")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss-log", help="also write the loss rows here")

    p = leaf(sub, "gradcheck", cmd_gradcheck, "finite-difference gradient check; prints per-layer errors", "gradcheck")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--corrupt-dense", action="store_true", help="inject a dense-layer gradient bug (self-test)")

    ev = group("eval", "evaluation reports")
    p = leaf(ev, "regression", cmd_eval_regression, "regression error report (key = value)", "eval regression")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test")

    p = leaf(ev, "hitrate", cmd_eval_hitrate, "hit-rate table (CSV: style, then one column per N)", "eval hitrate")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--simulated", action="store_true", help="Monte Carlo with Gaussian error (default)")
    mode.add_argument("--empirical", action="store_true", help="use a trained model on a dataset split")
    p.add_argument("--styles", default="grid,strip")
    p.add_argument("--n", type=_ints, default=list(range(2, 9)), help="comma-separated participant counts")
    p.add_argument("--sigma-x", type=float, default=0.85)
    p.add_argument("--sigma-y", type=float, default=1.83)
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", default="cells", help="cells, centroids or locations")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--split", default="test")
    _add_calibration(p)

    p = leaf(ev, "cuestats", cmd_eval_cuestats, "cue-response ratios (key = value)", "eval cuestats")
    for flag in ("--h", "--m", "--fp", "--cr"):
        p.add_argument(flag, type=int, required=True)

    lay = group("layout", "gallery layout tools")
    p = leaf(lay, "gen", cmd_layout_gen, "render a gallery screenshot; prints the layout record", "layout gen")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--style", default="grid")
    p.add_argument("--out", required=True, help="screenshot PPM path")
    p.add_argument("--record", help="also save the layout record here")
    p.add_argument("--names", type=_names, default=(), help="comma-separated participant names")
    p.add_argument("--background", type=_rgb, default=(26, 26, 26))
    p.add_argument("--gutter", type=int, default=4)
    p.add_argument("--decorations", action="store_true", help="add non-16:9 toolbar decorations")
    p.add_argument("--tau", type=float)
    _add_calibration(p)

    p = leaf(lay, "parse", cmd_layout_parse, "parse a screenshot; prints the layout record", "layout parse")
    p.add_argument("--screenshot", required=True)
    p.add_argument("--out", help="also save the layout record here")
    p.add_argument("--labels", help="file with one participant name per line, row-major")
    p.add_argument("--background", type=_rgb, default=(26, 26, 26))
    p.add_argument("--tolerance", type=int, default=8)
    p.add_argument("--ar-tolerance", type=float, default=0.10)
    p.add_argument("--tau", type=float)
    _add_calibration(p)

    p = leaf(sub, "run", cmd_run, "run the pipeline over a frame directory; prints one CSV row per frame", "run")
    p.add_argument("--frames", required=True, help="directory of input PPM frames (name order)")
    p.add_argument("--outdir", help="write frame_000001.ppm ... here")
    p.add_argument("--append", action="store_true", help="continue numbering in --outdir")
    p.add_argument("--serve", metavar="HOST:PORT", help="stream annotated frames over HTTP")
    p.add_argument("--fps", type=float, default=0.0, help="pace output to this rate (0: as fast as possible)")
    p.add_argument("--linger", type=float, default=0.0, help="seconds to keep serving after the last frame")
    _add_pipeline_args(p)

    bench = group("bench", "benchmarks")
    p = leaf(bench, "fps", cmd_bench_fps, "per-frame pipeline latency (key = value)", "bench fps")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--frame", help="input frame PPM (default: a synthetic render)")
    _add_pipeline_args(p)

    p = leaf(sub, "serve", cmd_serve, "run the HTTP service (stream and JSON endpoints)", "serve")
    p.add_argument("--addr", default="127.0.0.1:8000")
    _add_calibration(p)
    return root, leaves


def _leaf_path(args) -> str | None:
    if args.command is None:
        return None
    action = getattr(args, "action", None)
    return f"{args.command} {action}" if action else args.command


def _apply_config(root, leaves, argv) -> argparse.Namespace:
    """Parse with the config file's values installed as the subcommand's defaults.

    Required flags are relaxed for a first pass that only locates the
    subcommand, so a config file may supply them.
    """
    required = [a for p in leaves.values() for a in p._actions if a.required]
    for a in required:
        a.required = False
    try:
        first = root.parse_args(argv)
    finally:
        for a in required:
            a.required = True
    path = _leaf_path(first)
    if path not in leaves:
        return first
    parser = leaves[path]
    try:
        with open(first.config, encoding="utf-8") as fh:
            values = parse_kv(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {first.config}: {exc}") from exc
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "func")}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key.replace("-", "_"))
        if action is None:
            raise UsageError(f"unknown config key {key!r} for '{path}'", parser)
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[action.dest] = value.lower() in ("1", "true", "yes", "on")
        else:
            defaults[action.dest] = value  # string defaults go through the action's type
        action.required = False
    parser.set_defaults(**defaults)
    return root.parse_args(argv)


def _config_path(argv: Sequence[str]) -> str | None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    return known.config


def run_cli(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    root, leaves = build_parser()
    try:
        args = _apply_config(root, leaves, argv) if _config_path(argv) else root.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            stream=sys.stderr,
            format="%(asctime)s %(name)s %(levelname)s %(message)s",
        )
        if args.command is None:
            raise UsageError("a command is required", root)
        if getattr(args, "func", None) is None:
            raise UsageError("an action is required", args.group_parser)
        return args.func(args)
    except UsageError as exc:
        parser = exc.parser or root
        parser.print_help(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1
    except (GazeError, OSError, ValueError) as exc:
        print(f"gazectl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
