"""Command-line entry point: ``vocdev {features,train,imitate,experiment,inspect}``.

Exit codes: 0 success, 2 usage or config error, 3 an asserted acceptance
inequality failed, 4 runtime or data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import model_store
from .audio_features import (
    DatasetManifest,
    FeatureConfig,
    ManifestEntry,
    fit_normalization,
    mfcc,
    read_frames,
    read_wav,
    synth_pseudo_language,
    write_frames,
)
from .compositional import CoConfig, co_evaluate
from .continual import ClConfig, cl_run
from .errors import ConfigError, MissingLanguage, VocdevError
from .experiments import (
    PipelineConfig,
    SomConfig,
    ZConfig,
    config_hash,
    curve_report,
    normalized_frames,
    pca_report,
    run_curriculum,
    run_forgetting_test,
    run_mode_comparison,
    synth_desk_corpus,
    write_projection,
)
from .model_store import ModelBundle
from .som import winner_census

EXIT_OK, EXIT_USAGE, EXIT_ASSERT, EXIT_RUNTIME = 0, 2, 3, 4

_SECTIONS = {"features": FeatureConfig, "som": SomConfig, "z": ZConfig, "cl": ClConfig, "co": CoConfig}


@dataclass
class RunConfig:
    manifest: str | None = None
    output_dir: str = "runs"
    seed: int = 0
    l1: str = "A"
    l2: list = field(default_factory=lambda: ["B", "C"])
    control: bool = True
    corpus_seconds: dict = field(default_factory=lambda: {"l1": 120.0, "l2": 60.0, "test": 60.0})
    bootstrap: int = 1000
    features: FeatureConfig = FeatureConfig()
    som: SomConfig = SomConfig()
    z: ZConfig = ZConfig()
    cl: ClConfig = ClConfig()
    co: CoConfig = CoConfig()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in d.items():
            if key in _SECTIONS:
                kind = _SECTIONS[key]
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                names = {f.name for f in dataclasses.fields(kind)}
                bad = sorted(set(value) - names)
                if bad:
                    raise ConfigError(f"unknown keys in {key!r}: {', '.join(bad)}")
                try:
                    kwargs[key] = kind(**value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"invalid {key!r} section: {exc}") from exc
            else:
                kwargs[key] = value
        if "corpus_seconds" in kwargs:
            bad = sorted(set(kwargs["corpus_seconds"]) - {"l1", "l2", "test"})
            if bad:
                raise ConfigError(f"unknown keys in 'corpus_seconds': {', '.join(bad)}")
            kwargs["corpus_seconds"] = {**cls().corpus_seconds, **kwargs["corpus_seconds"]}
        cfg = cls(**kwargs)
        if isinstance(cfg.l2, str):
            cfg.l2 = [cfg.l2]
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.som, self.z, self.cl, self.co, self.seed, self.bootstrap)


def load_config(path=None, seed=None) -> RunConfig:
    """Config file, then VOCDEV_SEED, then an explicit ``--seed`` flag."""
    d = {}
    if path is not None:
        try:
            d = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = RunConfig.from_dict(d)
    env = os.environ.get("VOCDEV_SEED")
    if env is not None:
        try:
            cfg.seed = int(env)
        except ValueError as exc:
            raise ConfigError(f"VOCDEV_SEED must be an integer, got {env!r}") from exc
    if seed is not None:
        cfg.seed = seed
    return cfg


def _echo(cfg: RunConfig, out_dir, extra=None) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"config": cfg.to_dict(), "seed": cfg.seed, **(extra or {})}
    (out_dir / "run_config.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def _manifest_with_norm(path, l1: str) -> DatasetManifest:
    m = DatasetManifest.load(path)
    if m.normalization is None:
        frames = m.load_frames(l1, "train")
        if len(frames) == 0:
            raise MissingLanguage(f"manifest has no train frames for L1 {l1!r}")
        m.normalization = fit_normalization(frames)
    return m


# --- commands ----------------------------------------------------------------------


def cmd_features(args, parser) -> int:
    if not args.wav and not args.synth:
        parser.error("features needs --wav or --synth")
    missing = [p for p in args.wav or [] if not Path(p).is_file()]
    if missing:
        parser.error(f"input not found: {', '.join(missing)}")
    cfg = load_config(args.config, args.seed)
    if args.synth:
        frames = mfcc(synth_pseudo_language(cfg.seed, args.synth, args.seconds), cfg.features)
    else:
        frames = np.concatenate([mfcc(read_wav(p), cfg.features) for p in args.wav], axis=0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_frames(frames, out)
    if args.manifest:
        mpath = Path(args.manifest)
        m = DatasetManifest.load(mpath) if mpath.exists() else DatasetManifest([], None, mpath.parent)
        try:
            rel = os.path.relpath(out.resolve(), mpath.resolve().parent)
        except ValueError:
            rel = str(out.resolve())
        m.entries.append(ManifestEntry(args.language, args.role, rel))
        m.save(mpath)
    _echo(cfg, out.parent, {"command": "features", "output": str(out), "frames": len(frames)})
    print(f"wrote {len(frames)} frames to {out}")
    return EXIT_OK


def cmd_train(args, parser) -> int:
    cfg = load_config(args.config, args.seed)
    if args.iterations is not None:
        cfg.som = replace(cfg.som, iterations=args.iterations)
    l1 = args.language or cfg.l1
    out = Path(args.out)
    if args.manifest:
        manifest = _manifest_with_norm(args.manifest, l1)
    else:
        secs = cfg.corpus_seconds
        corpus = out.parent / f"corpus-{config_hash(cfg.to_dict())}"
        manifest = synth_desk_corpus(corpus, cfg.seed, l1, (), secs["l1"], secs["l2"], secs["test"], cfg.features)
    frames = normalized_frames(manifest, l1, "train")
    t0 = time.perf_counter()
    cur = run_curriculum({l1: frames}, cfg.pipeline(), l1, (), manifest.normalization)
    bundle = cur.baseline
    out.parent.mkdir(parents=True, exist_ok=True)
    model_store.save(bundle, out)
    fp = bundle.fingerprint()
    census = winner_census(bundle.som, frames)
    _echo(cfg, out.parent, {"command": "train", "model": str(out), "fingerprint": fp})
    print(f"frames: {len(frames)}")
    print(f"SOM winner count: {census}")
    print(f"Z neuron count: {bundle.z.count}")
    print(f"fingerprint: {fp}")
    print(f"elapsed: {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def _imitation_frames(args, bundle: ModelBundle) -> np.ndarray:
    if args.frames:
        raw = read_frames(args.frames)
    elif args.manifest:
        if not args.language:
            raise ConfigError("--manifest needs --language")
        raw = DatasetManifest.load(args.manifest).load_frames(args.language, args.role)
        if len(raw) == 0:
            raise MissingLanguage(f"manifest has no {args.role} frames for {args.language!r}")
    else:
        raise ConfigError("imitate needs --frames or --manifest")
    return bundle.normalization.normalize(raw) if bundle.normalization is not None else raw


def cmd_imitate(args, parser) -> int:
    cfg = load_config(args.config, args.seed)
    bundle = model_store.load(args.model)
    frames = _imitation_frames(args, bundle)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    before = bundle.fingerprint()
    if args.mode == "co":
        mean, results = co_evaluate(
            bundle.z, bundle.som, frames, cfg.co, out / "co_results.csv", out / "co_constituents.json"
        )
        summary = {"mode": "co", "frames": len(frames), "mean_error": mean}
    else:
        events = []
        cl_cfg = replace(cfg.cl, rng_seed=cfg.seed)
        _, trace, summary = cl_run(bundle.som, bundle.z, frames, cl_cfg, log=events.append)
        trace.write_csv(out / "cl_trace.csv")
        with open(out / "growth.jsonl", "w") as fh:
            for e in events:
                fh.write(json.dumps(e) + "\n")
        summary = {"mode": "cl", **summary}
        if args.save_model:
            model_store.save(bundle, args.save_model)
    after = bundle.fingerprint()
    summary.update(fingerprint_before=before, fingerprint_after=after)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _echo(cfg, out, {"command": "imitate", "mode": args.mode, "model": str(args.model)})
    print(f"mode: {args.mode}")
    key = "mean_error" if args.mode == "co" else "mean_reconstruction_error"
    print(f"mean error: {summary[key]:.6g}")
    print(f"fingerprint before: {before}")
    print(f"fingerprint after:  {after}")
    return EXIT_OK


def _experiment_data(cfg: RunConfig, langs, scratch: Path):
    if cfg.manifest:
        manifest = _manifest_with_norm(cfg.manifest, cfg.l1)
    else:
        secs = cfg.corpus_seconds
        manifest = synth_desk_corpus(
            scratch / "corpus", cfg.seed, cfg.l1, tuple(cfg.l2), secs["l1"], secs["l2"], secs["test"], cfg.features
        )
    train = {t: normalized_frames(manifest, t, "train") for t in langs}
    test = {t: normalized_frames(manifest, t, "test") for t in langs}
    return manifest, train, test


def cmd_experiment(args, parser) -> int:
    cfg = load_config(args.config, args.seed)
    if args.manifest:
        cfg.manifest = args.manifest
    if args.out:
        cfg.output_dir = args.out
    run_dir = Path(cfg.output_dir) / f"{args.protocol}-{config_hash(cfg.to_dict())}"
    run_dir.mkdir(parents=True, exist_ok=True)
    pipe = cfg.pipeline()
    l2s = [t for t in cfg.l2 if t != cfg.l1]
    needs_l2 = args.protocol in ("mode-comparison", "forgetting")
    langs = [cfg.l1, *l2s] if needs_l2 else [cfg.l1]
    manifest, train, test = _experiment_data(cfg, langs, run_dir)

    arms = tuple(l2s) + ((cfg.l1,) if cfg.control and needs_l2 else ()) if needs_l2 else ()
    cur = run_curriculum(train, pipe, cfg.l1, arms, manifest.normalization, jobs=args.jobs)
    reports = []
    if args.protocol == "mode-comparison":
        reports.append(run_mode_comparison(cur, test, pipe, jobs=args.jobs))
    elif args.protocol == "forgetting":
        reports.append(run_forgetting_test(cur, test[cfg.l1], pipe, jobs=args.jobs))
    elif args.protocol == "curves":
        reports.append(curve_report(cur, pipe))
    else:
        report, neurons, inputs = pca_report(cur.baseline.som, train[cfg.l1], pipe)
        reports.append(report)
        write_projection(neurons, run_dir)
        write_projection(inputs, run_dir)
    for r in reports:
        r.notes.extend(cur.notes)
        r.write(run_dir)
    model_store.save(cur.baseline, run_dir / f"{cfg.l1}.vdm")
    for label, arm in cur.arms.items():
        model_store.save(arm, run_dir / f"{label}.vdm")
    _echo(cfg, run_dir, {"command": "experiment", "protocol": args.protocol})

    failed = []
    for r in reports:
        for name, c in r.checks.items():
            values = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in c.items() if k != "passed")
            print(f"{'PASS' if c['passed'] else 'FAIL'} {name} {values}")
            if not c["passed"]:
                failed.append(name)
    print(f"run directory: {run_dir}")
    if failed and not args.no_assert:
        print(f"{len(failed)} asserted inequalities failed", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def cmd_inspect(args, parser) -> int:
    print(json.dumps(model_store.describe(args.model), indent=2, sort_keys=True, default=str))
    return EXIT_OK


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vocdev", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run config; unknown keys are rejected")
        sp.add_argument("--seed", type=int, help="overrides the config seed and VOCDEV_SEED")

    f = sub.add_parser("features", help="MFCC frames from WAV files or a synthetic profile")
    f.add_argument("--wav", nargs="+", help="16 kHz mono WAV file(s)")
    f.add_argument("--synth", help="synthetic profile (A, B, C)")
    f.add_argument("--seconds", type=float, default=60.0)
    f.add_argument("--out", required=True, help="output .mfc file")
    f.add_argument("--manifest", help="append the output to this manifest")
    f.add_argument("--language", default="A")
    f.add_argument("--role", choices=("train", "test"), default="train")
    common(f)
    f.set_defaults(func=cmd_features)

    t = sub.add_parser("train", help="train the SOM and populate Z with a CL pass")
    t.add_argument("--manifest", help="dataset manifest (default: synthetic desk corpus)")
    t.add_argument("--out", required=True, help="output .vdm model")
    t.add_argument("--language", help="L1 tag (default from config)")
    t.add_argument("--iterations", type=int, help="SOM iterations")
    common(t)
    t.set_defaults(func=cmd_train)

    im = sub.add_parser("imitate", help="run CL or CO on frames with a trained model")
    im.add_argument("--model", required=True)
    im.add_argument("--mode", required=True, choices=("cl", "co"))
    im.add_argument("--frames", help=".mfc file with raw frames")
    im.add_argument("--manifest")
    im.add_argument("--language")
    im.add_argument("--role", choices=("train", "test"), default="test")
    im.add_argument("--out", required=True, help="output directory")
    im.add_argument("--save-model", help="write the model after CL learning here")
    common(im)
    im.set_defaults(func=cmd_imitate)

    e = sub.add_parser("experiment", help="run a protocol and check its inequalities")
    e.add_argument("protocol", choices=("mode-comparison", "forgetting", "curves", "pca"))
    e.add_argument("--manifest", help="dataset manifest (default: synthetic desk corpus)")
    e.add_argument("--out", help="output root (default from config)")
    e.add_argument("--no-assert", action="store_true", help="exit 0 even if an inequality fails")
    e.add_argument("--jobs", type=int, default=1, help="max worker processes")
    common(e)
    e.set_defaults(func=cmd_experiment)

    i = sub.add_parser("inspect", help="print bundle metadata")
    i.add_argument("model")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VocdevError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
