"""Batch command line: ``cadence <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
Failures print one line on stderr of the form
``error module=<module> type=<ExceptionType> message="<text>"``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CadenceError, DataError, FoldError, NumericError, UsageError

log = logging.getLogger("cadence")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# Flag defaults; flags that are not given fall back to the config file, then to these.
DEFAULTS = {
    "seed": None,  # resolved via CADENCE_SEED, then 0
    "jobs": None,  # resolved to the available cores
    "systems": "ivector,xvector,functionals,fluency,rnn,linguistic",
    "profile": "full",
    "subjects": 40,
    "speaker": "PAR",
}


# ---------------------------------------------------------------- helpers


def _resolve(args, key, config):
    v = getattr(args, key, None)
    if v is None:
        v = config.get(key)
    if v is None:
        v = DEFAULTS.get(key)
    return v


def resolve_seed(args, config) -> int:
    v = _resolve(args, "seed", config)
    if v is None:
        env = os.environ.get("CADENCE_SEED")
        if env is not None:
            try:
                v = int(env)
            except ValueError:
                raise UsageError(f"CADENCE_SEED must be an integer, got {env!r}") from None
    return int(v) if v is not None else 0


def resolve_jobs(args, config) -> int:
    from .loso import default_jobs

    v = _resolve(args, "jobs", config)
    v = default_jobs() if v is None else int(v)
    if v < 1:
        raise UsageError("--jobs must be at least 1")
    return v


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise DataError(f"config file {path}: top level must be an object")
    return doc


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def pipeline_config(args, config):
    from .pipelines import DESK_OVERRIDES, PipelineConfig

    profile = _resolve(args, "profile", config)
    if profile not in ("full", "desk"):
        raise UsageError(f"--profile must be 'full' or 'desk', got {profile!r}")
    values = dict(DESK_OVERRIDES) if profile == "desk" else {}
    values.update(config.get("pipeline", {}))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = _parse_value(v)
    values["seed"] = resolve_seed(args, config)
    return PipelineConfig.from_dict(values)


def prepare_out_dir(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"--out-dir {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise UsageError(f"--out-dir {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, config):
    from .corpus import load_manifest

    path = _resolve(args, "manifest", config)
    if path is None:
        raise UsageError("--manifest is required")
    return load_manifest(path)


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands


def cmd_synth(args, config):
    from .synth import generate_synthetic_corpus

    out = prepare_out_dir(args.out_dir, args.force)
    n = int(_resolve(args, "subjects", config))
    manifest = generate_synthetic_corpus(n, resolve_seed(args, config), out)
    print(f"wrote {len(manifest.subjects)} subjects to {out / 'manifest.json'}")


def cmd_parse(args, config):
    from .chat import load_transcript

    out = prepare_out_dir(args.out_dir, args.force)
    speaker = _resolve(args, "speaker", config)
    keep = not args.drop_retraced
    if args.transcript:
        items = [(Path(p).stem, Path(p)) for p in args.transcript]
    else:
        items = [(s.id, s.transcript_path) for s in _manifest(args, config).sorted().subjects]
    for sid, path in items:
        tr = load_transcript(path, sid, speaker, keep)
        (out / f"{sid}.json").write_text(tr.to_json() + "\n")
    print(f"parsed {len(items)} transcript(s) into {out}")


def cmd_extract(args, config):
    from . import dsp
    from .acoustic_features import FLUENCY_NAMES, functional_names
    from .corpus import load_wav
    from .loso import extract_all
    from .pipelines import build_context, parse_systems
    from .text_features import LINGUISTIC_NAMES, write_feature_csv

    out = prepare_out_dir(args.out_dir, args.force)
    manifest = _manifest(args, config)
    systems = parse_systems(_resolve(args, "systems", config))
    unsupported = [s.name for s in systems if s.name not in ("functionals", "fluency", "linguistic")]
    if unsupported:
        raise UsageError(f"extract writes feature tables for functionals, fluency and linguistic; "
                         f"use extract-embeddings for {', '.join(unsupported)}")
    cfg = pipeline_config(args, config)
    ctx = build_context(manifest, systems, cfg)
    subjects = list(manifest.sorted().subjects)
    feats = extract_all(manifest, systems, ctx, resolve_jobs(args, config))
    for s in systems:
        if s.name == "fluency":
            write_feature_csv(out / "fluency.csv", FLUENCY_NAMES, {x.id: f["fluency"] for x, f in zip(subjects, feats)})
        elif s.name == "linguistic":
            write_feature_csv(out / "linguistic.csv", LINGUISTIC_NAMES,
                              {x.id: f["linguistic"] for x, f in zip(subjects, feats)})
        else:
            rows = {f"{x.id}#{k}": row for x, f in zip(subjects, feats) for k, row in enumerate(f["functionals"])}
            write_feature_csv(out / "functionals.csv", functional_names(), rows)
    if args.dump_frames:
        (out / "frames").mkdir(exist_ok=True)
        for x in subjects:
            dsp.analyze(load_wav(x.audio_path)).dump_csv(out / "frames" / f"{x.id}.csv")
    print(f"wrote features for {len(subjects)} subjects to {out}")


def cmd_train(args, config):
    from .pipelines import build_context, fit_all, make_system, save_fitted

    out = prepare_out_dir(args.out_dir, args.force)
    manifest = _manifest(args, config)
    system = make_system(args.system)
    cfg = pipeline_config(args, config)
    ctx = build_context(manifest, [system], cfg)
    model = fit_all(manifest, system, ctx)
    save_fitted(out, system.name, model, {"config": cfg.to_dict(), "n_subjects": len(manifest.subjects)})
    if ctx.ubm is not None:
        ctx.ubm.save(out / "ubm.bin")
    if ctx.tdnn is not None and not cfg.tdnn_weights:
        ctx.tdnn.save(out / "tdnn.bin")
    print(f"trained {system.name} on {len(manifest.subjects)} subjects; model in {out}")


def _ubm_frames(manifest, cfg):
    from .pipelines import background_frames

    paths = list(manifest.background_audio) or [s.audio_path for s in manifest.sorted().subjects]
    return background_frames(paths, cfg)


def cmd_train_ubm(args, config):
    from .embeddings import train_ubm

    out = prepare_out_dir(args.out_dir, args.force)
    manifest = _manifest(args, config)
    cfg = pipeline_config(args, config)
    X = _ubm_frames(manifest, cfg)
    ubm = train_ubm(X[: cfg.ubm_max_frames], cfg.ubm_components, cfg.ubm_iters, seed=cfg.seed)
    ubm.save(out / "ubm.bin")
    print(f"UBM with {ubm.n_components} components; average log-likelihood {ubm.llk_history[-1]:.4f}")


def _subject_window_stats(manifest, ubm, cfg):
    from . import dsp, embeddings as emb
    from .corpus import load_wav

    out = []
    for s in manifest.sorted().subjects:
        rec = load_wav(s.audio_path)
        fc = dsp.FrameConfig.for_rate(rec.sample_rate)
        feats = emb.cmvn(emb.plp_pitch_features(rec, fc))
        for span, idx, flagged in emb.window_frame_sets(feats.shape[0], fc, rec.duration, cfg.window_s, cfg.hop_s):
            out.append((s.id, span, flagged, emb.accumulate_bw_stats(ubm, feats[idx])))
    return out


def cmd_train_tv(args, config):
    from .embeddings import Ubm, train_tv

    out = prepare_out_dir(args.out_dir, args.force)
    manifest = _manifest(args, config)
    cfg = pipeline_config(args, config)
    ubm = Ubm.load(args.ubm)
    stats = [st for _, _, _, st in _subject_window_stats(manifest, ubm, cfg)]
    tv = train_tv(stats, ubm, cfg.tv_dim, cfg.tv_iters, seed=cfg.seed)
    tv.save(out / "tv.bin")
    print(f"TV matrix {tv.T.shape[0]}x{tv.rank} trained on {len(stats)} windows")


def cmd_extract_embeddings(args, config):
    from . import embeddings as emb
    from .corpus import load_wav

    out = prepare_out_dir(args.out_dir, args.force)
    manifest = _manifest(args, config)
    cfg = pipeline_config(args, config)
    rows = []
    if args.kind == "ivector":
        if not (args.ubm and args.tv):
            raise UsageError("--kind ivector needs --ubm and --tv")
        ubm, tv = emb.Ubm.load(args.ubm), emb.TvModel.load(args.tv)
        for sid, span, flagged, st in _subject_window_stats(manifest, ubm, cfg):
            e = emb.extract_ivector(tv, ubm, st, span)
            rows.append((sid, span, flagged, e.vector))
    else:
        tdnn = emb.TdnnModel.load(args.tdnn) if args.tdnn else emb.TdnnModel.random(seed=cfg.seed)
        lda = emb.LdaBasis.load(args.lda) if args.lda else None
        ext = emb.XvectorExtractor(tdnn, lda)
        for s in manifest.sorted().subjects:
            for e in emb.windowed_embeddings(load_wav(s.audio_path), ext, cfg.window_s, cfg.hop_s):
                rows.append((s.id, e.window, e.flagged, e.vector))
    with open(out / f"{args.kind}s.csv", "w") as fh:
        dim = rows[0][3].size if rows else 0
        fh.write(",".join(["subject_id", "start", "end", "flagged"] + [f"e{k}" for k in range(dim)]) + "\n")
        for sid, (a, b), flagged, vec in rows:
            fh.write(",".join([sid, repr(float(a)), repr(float(b)), str(int(flagged))]
                              + [repr(float(v)) for v in vec]) + "\n")
    print(f"wrote {len(rows)} {args.kind} embeddings to {out}")


def cmd_evaluate_loso(args, config):
    from .evaluation import write_reports
    from .loso import loso_run, thresholds_for
    from .pipelines import build_context, parse_systems

    manifest = _manifest(args, config)
    systems = parse_systems(_resolve(args, "systems", config))
    cfg = pipeline_config(args, config)
    jobs = resolve_jobs(args, config)
    out = prepare_out_dir(args.out_dir, args.force)
    ctx = build_context(manifest, systems, cfg)
    table = loso_run(manifest, systems, ctx, jobs=jobs)
    report = write_reports(table, out, thresholds_for(systems))
    _write_json(out / "config.json", {"systems": [s.name for s in systems], "pipeline": cfg.to_dict(),
                                      "thresholds": thresholds_for(systems)})
    _print_summary(report)


def _thresholds_from(args, in_dir):
    from .pipelines import THRESHOLD

    th = dict(THRESHOLD)
    cfg_path = Path(in_dir) / "config.json" if in_dir else None
    if cfg_path is not None and cfg_path.exists():
        th.update(json.loads(cfg_path.read_text()).get("thresholds", {}))
    return th


def _read_scores(path):
    from .evaluation import ScoreTable

    path = Path(path)
    if not path.is_file():
        raise DataError(f"scores file not found: {path}")
    return ScoreTable.from_csv(path.read_text())


def cmd_fuse(args, config):
    from .evaluation import ScoreTable, add_fusions, write_reports

    table = _read_scores(args.scores)
    systems = [s for s in (args.systems.split(",") if args.systems else table.systems)
               if table.system_rows(s) and table.modality(s) != "fusion"]
    if not systems:
        raise DataError("no systems to fuse")
    base = ScoreTable(r for r in table.rows if r.system in systems)
    out = prepare_out_dir(args.out_dir, args.force)
    fused = add_fusions(base, systems)
    report = write_reports(fused, out, _thresholds_from(args, Path(args.scores).parent))
    _print_summary(report)


def cmd_report(args, config):
    from .evaluation import metrics_report

    in_dir = Path(args.in_dir)
    table = _read_scores(in_dir / "scores.csv")
    report = metrics_report(table, _thresholds_from(args, in_dir))
    _print_summary(report)


def _fmt(v):
    return "   n/a" if v is None else f"{v:6.4f}"


def _print_summary(report: dict) -> None:
    print(f"{'system':12s} {'acc':>6s} {'auc':>6s} {'P(AD)':>6s} {'R(AD)':>6s} {'F1(AD)':>6s} "
          f"{'P(non)':>6s} {'R(non)':>6s} {'F1(non)':>7s}")
    for name, m in sorted(report["systems"].items()):
        print(f"{name:12s} {_fmt(m['accuracy'])} {_fmt(m['auc'])} {_fmt(m['AD']['precision'])} "
              f"{_fmt(m['AD']['recall'])} {_fmt(m['AD']['f1'])} {_fmt(m['nonAD']['precision'])} "
              f"{_fmt(m['nonAD']['recall'])} {_fmt(m['nonAD']['f1'])}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cadence", description="Speech and transcript dementia-detection pipelines.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr (default: off)")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(sp, out=True, manifest=True, pipeline=False):
        sp.add_argument("--config", help="JSON config file; flags override its values (default: none)")
        sp.add_argument("--seed", type=int, help="random seed (default: $CADENCE_SEED, else 0)")
        if manifest:
            sp.add_argument("--manifest", help="manifest JSON (default: none)")
        if out:
            sp.add_argument("--out-dir", required=True, help="output directory, must be empty")
            sp.add_argument("--force", action="store_true", help="allow a non-empty --out-dir (default: off)")
        if pipeline:
            sp.add_argument("--profile", choices=("full", "desk"),
                            help="model sizes: full or reduced desk-scale (default: full)")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override one pipeline setting, repeatable (default: none)")
            sp.add_argument("--jobs", type=int, help="worker processes (default: available cores)")

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    common(sp, manifest=False)
    sp.add_argument("--subjects", type=int, help="number of subjects, even and >= 4 (default: 40)")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("parse", help="parse CHAT transcripts into participant token lists")
    common(sp)
    sp.add_argument("--transcript", action="append", help="a .cha file, repeatable (default: all in manifest)")
    sp.add_argument("--speaker", help="speaker code to keep (default: PAR)")
    sp.add_argument("--drop-retraced", action="store_true", help="drop retraced words (default: keep)")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("extract", help="write functionals, fluency and linguistic feature tables")
    common(sp, pipeline=True)
    sp.add_argument("--systems", help="comma-separated subset of functionals,fluency,linguistic (default: all six, "
                                      "which this command rejects; pass a subset)")
    sp.add_argument("--dump-frames", action="store_true", help="also write per-frame descriptors (default: off)")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train", help="train one system on every subject of a manifest")
    common(sp, pipeline=True)
    sp.add_argument("--system", required=True, choices=("ivector", "xvector", "functionals", "fluency", "rnn",
                                                         "linguistic"), help="system to train")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("train-ubm", help="train the GMM universal background model")
    common(sp, pipeline=True)
    sp.set_defaults(func=cmd_train_ubm)

    sp = sub.add_parser("train-tv", help="train the total-variability matrix")
    common(sp, pipeline=True)
    sp.add_argument("--ubm", required=True, help="UBM model file")
    sp.set_defaults(func=cmd_train_tv)

    sp = sub.add_parser("extract-embeddings", help="write windowed i-vectors or x-vectors")
    common(sp, pipeline=True)
    sp.add_argument("--kind", required=True, choices=("ivector", "xvector"), help="embedding type")
    sp.add_argument("--ubm", help="UBM model file (ivector)")
    sp.add_argument("--tv", help="TV model file (ivector)")
    sp.add_argument("--tdnn", help="TDNN weights (xvector; default: random init from --seed)")
    sp.add_argument("--lda", help="LDA basis file (xvector; default: raw 512-d)")
    sp.set_defaults(func=cmd_extract_embeddings)

    sp = sub.add_parser("evaluate-loso", help="leave-one-subject-out evaluation with fusion")
    common(sp, pipeline=True)
    sp.add_argument("--systems", help=f"comma-separated systems (default: {DEFAULTS['systems']})")
    sp.set_defaults(func=cmd_evaluate_loso)

    sp = sub.add_parser("fuse", help="add Fusion I/II to an existing scores.csv")
    common(sp, manifest=False)
    sp.add_argument("--scores", required=True, help="scores.csv from evaluate-loso")
    sp.add_argument("--systems", help="comma-separated systems to fuse (default: all in the file)")
    sp.set_defaults(func=cmd_fuse)

    sp = sub.add_parser("report", help="print metrics for an evaluation directory")
    sp.add_argument("--in", dest="in_dir", required=True, help="directory holding scores.csv")
    sp.add_argument("--config", help="JSON config file (default: none)")
    sp.set_defaults(func=cmd_report)
    return p


def _origin_module(exc: BaseException) -> str:
    """The error class's module tag, else the innermost cadence module in the traceback."""
    tag = getattr(type(exc), "module", "cadence")
    if tag != "cadence":
        return tag
    found = "cli"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("cadence.") and name != "cadence.cli":
            found = name.split(".", 1)[1]
        tb = tb.tb_next
    return found


def _error_line(exc: BaseException) -> str:
    module = _origin_module(exc)
    text = str(exc).replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")
    line = f'error module={module} type={type(exc).__name__} message="{text}"'
    if isinstance(exc, FoldError):
        line += f" fold={exc.fold} subject={exc.subject_id}"
    return line


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, FoldError):
        return exit_code_for(exc.cause)
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, NumericError) or isinstance(exc, (ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = load_config(getattr(args, "config", None))
        args.func(args, config)
    except (CadenceError, OSError, np.linalg.LinAlgError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return exit_code_for(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
