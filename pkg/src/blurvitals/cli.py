"""Command-line interface: synth, blur, process, eval and an end-to-end demo."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, optics, synth
from .errors import BlurVitalsError, DataError, ValidationError
from .evaluation import build_report, evaluate_clip, run_benchmark, worker_count, write_report
from .fuse import FuseConfig, GatingConfig
from .grid import DEFAULT_SCALES, parse_scales
from .pipeline import PipelineConfig, estimates_to_ndjson, process_clip, read_estimates
from .spectra import HR_BAND, RR_BAND, Band
from .vidio import atomic_write_text, read_clip, read_pgm_sequence, write_clip

log = logging.getLogger("blurvitals")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA, EXIT_IO = 0, 2, 3, 4

# demo corpus: dimmer, noisier scenes with a weaker pulse than the library defaults so blur
# has a measurable cost, one large motion event per clip and distinct rates per posture
DEMO_RATES = ((66.0, 13.0), (78.0, 17.0), (90.0, 11.0))
DEMO_EVENT = (30.0, 31.0, 20.0)
DEMO_PULSE = 0.002


def _band(text):
    try:
        return Band.parse(text)
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _scales(text):
    try:
        return parse_scales(text)
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _event(text):
    try:
        start, end, disp = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"motion event must be 'start,end,displacement', got {text!r}") from None
    return (start, end, disp)


def _rates(text):
    try:
        pairs = [tuple(float(v) for v in item.split("/")) for item in text.split(",") if item.strip()]
    except ValueError:
        pairs = [()]
    if not pairs or any(len(p) != 2 for p in pairs):
        raise argparse.ArgumentTypeError(f"rates must look like '66/13,78/17', got {text!r}")
    return tuple(pairs)


def add_scene_args(p, demo=False):
    g = p.add_argument_group("scene")
    g.add_argument("--hr", type=float, default=72.0, help="heart rate, beats/min (default 72)")
    g.add_argument("--rr", type=float, default=15.0, help="respiration rate, breaths/min (default 15)")
    g.add_argument("--duration", type=float, default=60.0, help="clip length in seconds (default 60)")
    g.add_argument("--fps", type=float, default=20.0, help="frame rate (default 20)")
    g.add_argument("--width", type=int, default=128)
    g.add_argument("--height", type=int, default=160)
    g.add_argument("--seed", type=int, default=7, help="RNG seed (default 7)")
    g.add_argument("--pulse-amplitude", type=float, default=DEMO_PULSE if demo else 0.005,
                   help="fractional AC/DC of the pulse")
    g.add_argument("--breath-amplitude", type=float, default=2.0, help="chest displacement, px")
    g.add_argument("--noise-sigma", type=float, default=2.0 if demo else 1.0, help="sensor noise, intensity units")
    g.add_argument("--dc-scale", type=float, default=0.6 if demo else 1.0, help="scene brightness multiplier")
    g.add_argument("--motion-event", type=_event, action="append", metavar="START,END,DISP",
                   help="large body motion, seconds and px; repeatable")
    g.add_argument("--postures", type=int, default=3 if demo else 1,
                   help="number of postures from 0,60,90 degrees")
    g.add_argument("--rates", type=_rates, default=None, metavar="HR/RR,...",
                   help="one HR/RR pair per posture, overrides --hr/--rr")
    g.add_argument("--blur-radius", type=float, action="append", default=None, metavar="PX",
                   help="disc blur radius in px; repeatable, 0 means clear (default: %s)"
                   % ("0 and 6" if demo else "0"))
    if not demo:
        g.add_argument("--covered", choices=("no", "yes", "both"), default="no",
                       help="bedsheet condition (default no)")


def add_pipeline_args(p):
    g = p.add_argument_group("pipeline")
    g.add_argument("--scales", type=_scales, default=DEFAULT_SCALES, metavar="N,N,...",
                   help="block sizes in px (default 16,32,64)")
    g.add_argument("--window-sec", type=float, default=10.0, help="analysis window length (default 10)")
    g.add_argument("--hop-sec", type=float, default=1.0, help="window hop (default 1)")
    g.add_argument("--hr-band", type=_band, default=HR_BAND, metavar="LO,HI", help="HR band in Hz (default 0.7,3.0)")
    g.add_argument("--rr-band", type=_band, default=RR_BAND, metavar="LO,HI", help="RR band in Hz (default 0.1,0.7)")
    g.add_argument("--roi-k", type=int, default=10, help="blocks kept per heatmap (default 10)")
    g.add_argument("--min-snr-db", type=float, default=0.0, help="SNR floor for RoI blocks (default 0)")
    g.add_argument("--gate-threshold", type=float, default=1.0, help="motion gating threshold (default 1.0)")
    g.add_argument("--max-displacement", type=float, default=8.0, help="flow cap per frame pair, px (default 8)")
    g.add_argument("--rr-source", choices=("axis", "theta"), default="axis",
                   help="respiration signal per block: better of dx/dy, or combined angle")


def add_eval_args(p):
    p.add_argument("--emit-svg", action="store_true", help="also write boxplot and scatter SVGs")
    p.add_argument("--truth-injection", action="store_true",
                   help="use ground truth as the estimates (harness self-check)")
    p.add_argument("--workers", type=int, default=None, help="parallel clips (BLURVITALS_THREADS caps it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blurvitals", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render synthetic clips, ground truth and a manifest")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    add_scene_args(p)

    p = sub.add_parser("blur", help="apply disc defocus blur to a clip")
    p.add_argument("input", type=Path, help="clip (.bvr) or directory of PGM frames")
    p.add_argument("output", type=Path, help="output clip (.bvr)")
    p.add_argument("--blur-radius", type=float, required=True, help="disc radius in px; 0 copies the clip")
    p.add_argument("--fps", type=float, default=None, help="frame rate for PGM input")

    p = sub.add_parser("process", help="estimate HR/RR per window")
    p.add_argument("input", type=Path, help="clip (.bvr) or directory of PGM frames")
    p.add_argument("--out", type=Path, default=None, help="estimates file (.ndjson); stdout if omitted")
    p.add_argument("--fps", type=float, default=None, help="frame rate for PGM input")
    add_pipeline_args(p)

    p = sub.add_parser("eval", help="benchmark estimates against ground truth")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", required=True, type=Path, help="report directory")
    p.add_argument("--estimates", type=Path, default=None,
                   help="directory of <label>.ndjson files; the pipeline runs when omitted")
    add_pipeline_args(p)
    add_eval_args(p)

    p = sub.add_parser("demo", help="synth -> blur -> process -> eval in one go")
    p.add_argument("--out", required=True, type=Path, help="working directory")
    add_scene_args(p, demo=True)
    add_pipeline_args(p)
    add_eval_args(p)
    return parser


def pipeline_config(args) -> PipelineConfig:
    if args.roi_k < 1:
        raise ValidationError(f"--roi-k must be >= 1, got {args.roi_k}")
    if not args.window_sec > 0 or not args.hop_sec > 0:
        raise ValidationError("--window-sec and --hop-sec must be positive")
    if not args.max_displacement > 0:
        raise ValidationError("--max-displacement must be positive")
    if min(args.scales) < 4:
        raise ValidationError(f"block sizes must be >= 4 px, got {args.scales}")
    fuse = FuseConfig(args.hr_band, args.rr_band, args.roi_k, args.min_snr_db,
                      GatingConfig(args.gate_threshold), args.rr_source)
    return PipelineConfig(args.scales, args.window_sec, args.hop_sec, args.max_displacement, fuse)


def _check_bands(cfg: PipelineConfig, fps: float):
    cfg.fuse.hr_band.validate(fps)
    cfg.fuse.rr_band.validate(fps)
    cfg.plan(fps)


def scene_config(args) -> tuple[synth.SceneConfig, list, tuple]:
    events = tuple(args.motion_event) if args.motion_event is not None else (
        (DEMO_EVENT,) if args.command == "demo" else ())
    base = synth.SceneConfig(
        width=args.width, height=args.height, fps=args.fps, duration=args.duration, hr=args.hr, rr=args.rr,
        pulse_amplitude=args.pulse_amplitude, breath_amplitude=args.breath_amplitude,
        noise_sigma=args.noise_sigma, motion_events=events, seed=args.seed, dc_scale=args.dc_scale,
    ).validate()
    if not 1 <= args.postures <= len(synth.POSTURES):
        raise ValidationError(f"--postures must be in 1..{len(synth.POSTURES)}")
    rates = args.rates
    if rates is None and args.command == "demo" and args.postures == len(DEMO_RATES):
        rates = DEMO_RATES
    if rates is None:
        rates = ((args.hr, args.rr),) * args.postures
    if len(rates) != args.postures:
        raise ValidationError(f"--rates needs {args.postures} pairs, got {len(rates)}")
    for posture, (hr, rr) in zip(synth.POSTURES, rates):
        replace(base, hr=hr, rr=rr, posture_deg=posture).validate()
    radii = args.blur_radius if args.blur_radius is not None else ([0.0, 6.0] if args.command == "demo" else [0.0])
    for r in radii:
        optics.disc_psf(r)
    return base, list(radii), rates


def _render(base, radii, rates, postures, covers, out: Path) -> list[dict]:
    return synth.render_condition_suite(base, postures, radii, out, rates, covers)


def _load_clip(path: Path, fps):
    if path.is_dir():
        if fps is None:
            raise ValidationError("--fps is required for a PGM frame directory")
        return read_pgm_sequence(path, fps)
    return read_clip(path)


def cmd_synth(args) -> int:
    base, radii, rates = scene_config(args)
    covers = {"no": (False,), "yes": (True,), "both": (False, True)}[args.covered]
    entries = _render(base, radii, rates, args.postures, covers, args.out)
    print(f"wrote {len(entries)} clips and manifest to {args.out}")
    return EXIT_OK


def cmd_blur(args) -> int:
    psf = optics.disc_psf(args.blur_radius)
    clip = _load_clip(args.input, args.fps)
    write_clip(optics.blur_clip(clip, psf), args.output)
    print(f"blurred {len(clip)} frames with radius {args.blur_radius:g} px -> {args.output}")
    return EXIT_OK


def cmd_process(args) -> int:
    cfg = pipeline_config(args)
    clip = _load_clip(args.input, args.fps)
    _check_bands(cfg, clip.fps)
    text = estimates_to_ndjson(process_clip(clip, cfg))
    if args.out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(args.out, text)
        print(f"wrote {text.count(chr(10))} windows to {args.out}")
    return EXIT_OK


def _evaluate(manifest, cfg, estimates_dir, truth_injection, workers):
    if estimates_dir is None:
        return run_benchmark(manifest, cfg, truth_injection, workers)
    from .synth import load_manifest

    results = []
    for e in load_manifest(manifest):
        path = Path(estimates_dir) / f"{e['label']}.ndjson"
        if not path.exists():
            raise DataError(f"no estimates for {e['label']}: {path} missing")
        results.append(evaluate_clip(e, cfg, truth_injection, read_estimates(path)))
    return build_report(results)


def cmd_eval(args) -> int:
    cfg = pipeline_config(args)
    worker_count(args.workers)
    report = _evaluate(args.manifest, cfg, args.estimates, args.truth_injection, args.workers)
    paths = write_report(report, args.out, emit_svg=args.emit_svg)
    for e in report.errors:
        log.warning("%s: %s", e["id"], e["error"])
    print(report.summary())
    log.info("report files: %s", ", ".join(str(p) for p in paths))
    return EXIT_OK


def cmd_demo(args) -> int:
    cfg = pipeline_config(args)
    base, radii, rates = scene_config(args)
    _check_bands(cfg, base.fps)
    worker_count(args.workers)
    out = args.out
    corpus, est_dir = out / "corpus", out / "estimates"
    entries = _render(base, radii, rates, args.postures, (False, True), corpus)
    est_dir.mkdir(parents=True, exist_ok=True)
    if not args.truth_injection:
        for e in entries:
            clip = read_clip(corpus / e["clip"])
            atomic_write_text(est_dir / f"{e['label']}.ndjson", estimates_to_ndjson(process_clip(clip, cfg)))
            log.info("processed %s", e["label"])
    report = _evaluate(corpus / "manifest.json", cfg, None if args.truth_injection else est_dir,
                       args.truth_injection, args.workers)
    write_report(report, out / "report", emit_svg=args.emit_svg)
    print(report.summary())
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "blur": cmd_blur, "process": cmd_process, "eval": cmd_eval, "demo": cmd_demo}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BlurVitalsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
