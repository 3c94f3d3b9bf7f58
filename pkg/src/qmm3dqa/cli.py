"""Command-line entry point wiring the pipeline into reproducible runs.

Commands: render, qmm, train, evaluate, crossval, crossdb, bench, sweep,
synth.  Every command accepts ``--config FILE`` (TOML or JSON) whose keys
provide flag defaults; explicit flags win.  A single ``--seed`` drives
all randomness: stage seeds are derived by mixing the stage name into
the seed (``sample``, ``train``), so one integer reproduces a run.

Exit codes: 0 success, 2 input/config error, 3 runtime/numeric error.
JSON reports are byte-stable across reruns; wall-clock measurements are
never written into them (bench timings go to a separate file).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import bench as bench_mod
from . import corpus as corpus_mod
from .errors import InputError, QmmError
from .evaluation import (
    anti_oracle_fitter,
    compute_metrics,
    oracle_fitter,
    run_cross_database,
    run_cross_validation,
)
from .model_io import DatasetManifest, load_manifest, load_model, normalize_model
from .predictor import (
    BRIDGE_ENV,
    ExtractorKind,
    FeatureExtractor,
    FeatureExtractorSpec,
    TrainConfig,
    init_state,
    load_state,
    pipeline_fitter,
    render_manifest,
    save_state,
    score_features,
    train,
)
from .projector import RenderConfig, dump_projections, render_projections
from .quality_loss import LossConfig
from .rng import derive_seed
from .sampler import GridSpec, assemble_qmm, provenance_to_json, qmm_to_png


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib  # Python 3.11+
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


class Options:
    """Flag values backed by config-file defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(getattr(args, "config", None))

    def get(self, name: str, default=None):
        val = getattr(self.args, name, None)
        if val is not None:
            return val
        return self.config.get(name, default)


def _render_cfg(opt: Options) -> RenderConfig:
    return RenderConfig(
        resolution=int(opt.get("resolution", 1024)),
        splat_radius=float(opt.get("splat", 1.0)),
    )


def _grid_spec(opt: Options, seed: int) -> GridSpec:
    return GridSpec(
        grid=int(opt.get("grid", 7)),
        patch_px=int(opt.get("patch", 32)),
        num_views=int(opt.get("views", 6)),
        seed=derive_seed(seed, "sample"),
        blank_threshold=float(opt.get("blank_threshold", 0.05)),
    )


def _loss_cfg(opt: Options) -> LossConfig:
    return LossConfig(
        lambda1=float(opt.get("lambda1", 1.0)),
        lambda2=float(opt.get("lambda2", 1.0)),
    )


def _train_cfg(opt: Options, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=float(opt.get("lr", 1e-4)),
        decay=float(opt.get("decay", 0.9)),
        decay_every=int(opt.get("decay_every", 5)),
        batch_size=int(opt.get("batch", 32)),
        epochs=int(opt.get("epochs", 50)),
        seed=derive_seed(seed, "train"),
        resample_epochs=str(opt.get("resample", "on")) != "off",
    )


def _extractor_spec(opt: Options) -> FeatureExtractorSpec:
    kind = ExtractorKind(opt.get("extractor", "builtin"))
    return FeatureExtractorSpec(
        kind=kind,
        bridge_command=opt.get("bridge_cmd") or os.environ.get(BRIDGE_ENV),
    )


def _write_json(path: str | Path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _manifest_and_base(opt: Options, flag: str = "manifest"):
    path = Path(opt.get(flag))
    manifest = load_manifest(path)
    return manifest, path.parent


# -- commands ----------------------------------------------------------------


def cmd_render(opt: Options) -> int:
    model = normalize_model(load_model(opt.get("model")))
    ps = render_projections(model, _render_cfg(opt))
    out_dir = Path(opt.get("out"))
    stem = Path(opt.get("model")).stem
    written = dump_projections(ps, out_dir, stem)
    print(f"wrote {len(written)} images to {out_dir}")
    return 0


def cmd_qmm(opt: Options) -> int:
    seed = int(opt.get("seed", 0))
    model = normalize_model(load_model(opt.get("model")))
    ps = render_projections(model, _render_cfg(opt))
    qmm = assemble_qmm(ps, _grid_spec(opt, seed))
    out = Path(opt.get("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    qmm_to_png(qmm, out)
    prov_path = out.with_suffix(".provenance.json")
    provenance_to_json(qmm, prov_path)
    print(f"wrote {out} and {prov_path}")
    return 0


def cmd_train(opt: Options) -> int:
    seed = int(opt.get("seed", 0))
    manifest, base = _manifest_and_base(opt)
    spec = _extractor_spec(opt)
    state = init_state(spec, _train_cfg(opt, seed))
    with FeatureExtractor(spec) as ext:
        report = train(
            manifest,
            _render_cfg(opt),
            _grid_spec(opt, seed),
            state=state,
            loss_cfg=_loss_cfg(opt),
            extractor=ext,
            base_dir=base,
        )
    out = Path(opt.get("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_state(report.state, out)
    report_path = opt.get("report")
    payload = {
        "epochs": [
            {"total": e.total, "mse": e.mse, "rank": e.rank}
            for e in report.epochs
        ],
        "state_path": str(out),
    }
    if report_path:
        _write_json(report_path, payload)
    first, last = report.epochs[0], report.epochs[-1]
    print(
        f"trained {len(report.epochs)} epochs in {report.wall_clock_s:.1f}s; "
        f"loss {first.total:.4f} -> {last.total:.4f}; state at {out}"
    )
    return 0


def _predictions(opt: Options, manifest, base, seed: int):
    render_cfg = _render_cfg(opt)
    grid_spec = _grid_spec(opt, seed)
    state = load_state(opt.get("state"))
    spec = state.extractor
    if opt.get("bridge_cmd"):
        spec = replace(spec, bridge_command=opt.get("bridge_cmd"))
    cache: dict = {}
    preds = []
    with FeatureExtractor(spec) as ext:
        for entry in manifest.entries:
            ps = render_manifest(
                DatasetManifest((entry,)), render_cfg, base, cache
            )[0]
            gs = replace(
                grid_spec, seed=derive_seed(grid_spec.seed, f"eval:{entry.model_path}")
            )
            feats = ext.extract(assemble_qmm(ps, gs))
            preds.append(score_features(feats, state))
    return preds


def cmd_evaluate(opt: Options) -> int:
    seed = int(opt.get("seed", 0))
    manifest, base = _manifest_and_base(opt)
    if opt.get("oracle"):
        preds = [e.mos for e in manifest.entries]
    elif not opt.get("state"):
        raise InputError("evaluate needs --state or --oracle")
    else:
        preds = _predictions(opt, manifest, base, seed)
    report = compute_metrics(preds, [e.mos for e in manifest.entries])
    _write_json(opt.get("out"), report.to_dict())
    print(
        f"n={report.n} srcc={report.srcc:.4f} plcc={report.plcc:.4f} "
        f"krcc={report.krcc:.4f} rmse={report.rmse:.4f}"
    )
    return 0


def _make_fitter(opt: Options, base, seed: int, grid_spec=None):
    if opt.get("oracle"):
        return oracle_fitter
    if opt.get("anti_oracle"):
        return anti_oracle_fitter
    spec = _extractor_spec(opt)
    return pipeline_fitter(
        _render_cfg(opt),
        grid_spec or _grid_spec(opt, seed),
        spec=spec,
        train_cfg=_train_cfg(opt, seed),
        loss_cfg=_loss_cfg(opt),
        base_dir=base,
    )


def _crossval_threads(opt: Options) -> int:
    threads = opt.get("threads")
    if threads is not None:
        return int(threads)
    if _extractor_spec(opt).kind is ExtractorKind.BRIDGE:
        return 1  # one request in flight per bridge process
    return os.cpu_count() or 1


def cmd_crossval(opt: Options) -> int:
    seed = int(opt.get("seed", 0))
    manifest, base = _manifest_and_base(opt)
    fitter = _make_fitter(opt, base, seed)
    result = run_cross_validation(
        manifest, int(opt.get("k", 5)), fitter, threads=_crossval_threads(opt)
    )
    _write_json(opt.get("out"), result.to_dict())
    m = result.mean
    print(
        f"{result.plan.k}-fold mean: srcc={m.srcc:.4f} plcc={m.plcc:.4f} "
        f"krcc={m.krcc:.4f} rmse={m.rmse:.4f}"
    )
    return 0


def cmd_crossdb(opt: Options) -> int:
    seed = int(opt.get("seed", 0))
    train_manifest, train_base = _manifest_and_base(opt, "train_manifest")
    test_manifest, test_base = _manifest_and_base(opt, "test_manifest")
    if opt.get("oracle"):
        fitter = oracle_fitter
    else:
        # Model paths in the two manifests resolve against their own files.
        if train_base != test_base:
            raise InputError(
                "crossdb without --oracle requires both manifests in one "
                "directory (or manifests with absolute model paths)"
            )
        fitter = _make_fitter(opt, train_base, seed)
    result = run_cross_database(
        train_manifest, test_manifest, int(opt.get("k_test", 5)), fitter
    )
    _write_json(opt.get("out"), result.to_dict())
    m = result.mean
    print(
        f"cross-database mean: srcc={m.srcc:.4f} plcc={m.plcc:.4f} "
        f"krcc={m.krcc:.4f} rmse={m.rmse:.4f}"
    )
    return 0


def cmd_bench(opt: Options) -> int:
    seed = int(opt.get("seed", 0))
    mode = {
        "I": bench_mod.AblationMode.MODE_I_RESIZE_CROP6,
        "II": bench_mod.AblationMode.MODE_II_SIX_MAPS,
        "III": bench_mod.AblationMode.MODE_III_QMM,
    }[opt.get("mode", "III")]
    if opt.get("models"):
        paths = [Path(p) for p in opt.get("models")]
    else:
        manifest, base = _manifest_and_base(opt)
        paths = [base / e.model_path for e in manifest.entries]
    state = (
        load_state(opt.get("state")) if opt.get("state") else init_state()
    )
    report = bench_mod.run_benchmark(
        paths,
        _render_cfg(opt),
        _grid_spec(opt, seed),
        state,
        mode,
        trials=int(opt.get("trials", 3)),
        parallel_render=bool(opt.get("parallel_render", False)),
    )
    _write_json(opt.get("out"), report.counts_dict())
    timings_out = opt.get("timings_out")
    if timings_out:
        _write_json(timings_out, report.to_dict())
    print(report.to_text())
    return 0


def cmd_sweep(opt: Options) -> int:
    seed = int(opt.get("seed", 0))
    manifest, base = _manifest_and_base(opt)
    n_values = [int(v) for v in str(opt.get("views_list", "1,2,3,4,5,6")).split(",")]
    grid_spec = _grid_spec(opt, seed)

    def fitter_factory(gs):
        if opt.get("oracle"):
            return oracle_fitter
        return _make_fitter(opt, base, seed, grid_spec=gs)

    points = bench_mod.projection_sweep(
        manifest,
        grid_spec,
        int(opt.get("k", 2)),
        n_values,
        fitter_factory,
        threads=int(opt.get("threads", 1)),
    )
    _write_json(opt.get("out"), {"points": [p.to_dict() for p in points]})
    csv_path = opt.get("csv")
    if csv_path:
        Path(csv_path).write_text(bench_mod.sweep_to_csv(points), encoding="utf-8")
    for p in points:
        print(
            f"views={p.num_views} quota={p.quota} "
            f"mean srcc={p.metrics.mean.srcc:.4f}"
        )
    return 0


def cmd_synth(opt: Options) -> int:
    manifest_path = corpus_mod.make_corpus(
        opt.get("out"),
        contents=int(opt.get("contents", 4)),
        levels=int(opt.get("levels", 6)),
        points=int(opt.get("points", 3000)),
        seed=int(opt.get("seed", 0)),
    )
    print(f"wrote corpus manifest {manifest_path}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmm3dqa",
        description="Projection-based 3D model quality assessment",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, train_flags: bool = False):
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--seed", type=int, help="top-level seed (default 0)")
        p.add_argument("--resolution", type=int, help="render resolution")
        p.add_argument("--splat", type=float, help="point splat radius (px)")
        p.add_argument("--grid", type=int, help="grid side count")
        p.add_argument("--patch", type=int, help="mini-patch side (px)")
        p.add_argument("--views", type=int, help="projections used (1..6)")
        p.add_argument(
            "--blank-threshold", type=float, dest="blank_threshold",
            help="mask coverage below which a cell is blank",
        )
        if train_flags:
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch", type=int)
            p.add_argument("--lr", type=float)
            p.add_argument("--decay", type=float)
            p.add_argument("--decay-every", type=int, dest="decay_every")
            p.add_argument("--lambda1", type=float)
            p.add_argument("--lambda2", type=float)
            p.add_argument(
                "--extractor", choices=["builtin", "bridge"],
                help="feature extractor kind",
            )
            p.add_argument(
                "--bridge-cmd", dest="bridge_cmd",
                help=f"bridge executable (default ${BRIDGE_ENV})",
            )
            p.add_argument(
                "--resample", choices=["on", "off"],
                help="fresh mini-patch maps each epoch (default on)",
            )

    p = sub.add_parser("render", help="write the six projections as PNGs")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("qmm", help="write one mini-patch map and provenance")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_qmm)

    p = sub.add_parser("train", help="train the regression head")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="state file to write")
    p.add_argument("--report", help="JSON loss report path")
    common(p, train_flags=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a manifest with a trained state")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--state", help="trained state file")
    p.add_argument("--oracle", action="store_true",
                   help="score every entry with its own mos")
    p.add_argument("--bridge-cmd", dest="bridge_cmd")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="content-disjoint k-fold run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--anti-oracle", dest="anti_oracle", action="store_true")
    p.add_argument("--threads", type=int)
    common(p, train_flags=True)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("crossdb", help="train on A, test on B's folds")
    p.add_argument("--train-manifest", dest="train_manifest", required=True)
    p.add_argument("--test-manifest", dest="test_manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k-test", dest="k_test", type=int)
    p.add_argument("--oracle", action="store_true")
    common(p, train_flags=True)
    p.set_defaults(func=cmd_crossdb)

    p = sub.add_parser("bench", help="stage timings and extractor accounting")
    p.add_argument("--manifest")
    p.add_argument("--models", nargs="*")
    p.add_argument("--out", required=True)
    p.add_argument("--timings-out", dest="timings_out",
                   help="wall-clock JSON (non-deterministic, kept separate)")
    p.add_argument("--mode", choices=["I", "II", "III"])
    p.add_argument("--trials", type=int)
    p.add_argument("--state")
    p.add_argument("--parallel-render", dest="parallel_render",
                   action="store_true", default=None,
                   help="render the six views in parallel while timing")
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="criteria per projection count")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--views-list", dest="views_list",
                   help="comma list of projection counts")
    p.add_argument("--k", type=int)
    p.add_argument("--csv", help="also write a CSV table")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--threads", type=int)
    common(p, train_flags=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--contents", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--points", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opt = Options(args)
        return args.func(opt)
    except (InputError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
