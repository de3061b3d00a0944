"""Command-line front end: corpora, experiments, bound curves, Monte-Carlo checks.

Subcommands: ``gen-synthetic``, ``eval``, ``bounds``, ``montecarlo``. The
``eval`` experiment is described by a single flat JSON config (archivable);
command-line flags override config keys, and ``RICS_WORKERS`` overrides the
configured worker count. All outputs are deterministic given config + seeds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .embedding import BlockMeanSpec, ConstantSpec, ExternalSpec, PatchHashSpec
from .evaluation import (
    ExperimentSettings,
    MetricKind,
    Pipeline,
    run_experiment,
)
from .imagecore import CYCLIC, REALISTIC
from .scoring import DEFAULT_MODULUS, DEFAULT_SIGMAS, MexicanHatSpec, RandHashSpec
from .selection import RicsConfig, score_variant_name
from .synthetic import SyntheticSpec, generate_dataset, load_manifest, write_dataset
from .theory import (
    BoundParams,
    adv_robustness_bound,
    argmax_uniformity,
    bound_rows,
    consistency_bound,
    simulate_crop_agreement,
)

CONFIG_DEFAULTS = {
    "view_size": 224,
    "crop_size": 140,
    "mode": REALISTIC,
    "engine": "auto",
    "score": {"variant": "randhash", "seed": 0},
    "baseline": True,
    "embedder": {"variant": "patchhash", "dim": 16, "seed": 0},
    "metrics": ["nn1", "class"],
    "knn_k": 1,
    "deltas": [1, 3, 5, 9],
    "consistency_geometry": "shell",
    "samples_per_image": 40,
    "gallery_metric": "cosine",
    "seed": 0,
    "workers": 1,
    "out_dir": "rics-out",
}

# keys that cannot change results; excluded from the report's config echo
_VOLATILE_KEYS = ("workers", "out_dir")


def parse_score(doc: dict):
    variant = doc.get("variant")
    if variant == "randhash":
        return RandHashSpec(seed=doc.get("seed", 0), modulus=doc.get("modulus", DEFAULT_MODULUS))
    if variant == "mexican_hat":
        return MexicanHatSpec(tuple(doc.get("sigmas", DEFAULT_SIGMAS)))
    raise ValueError(f"unknown score variant {variant!r}")


def parse_embedder(doc: dict):
    variant = doc.get("variant")
    if variant == "constant":
        return ConstantSpec(dim=doc.get("dim", 4))
    if variant == "blockmean":
        return BlockMeanSpec(grid=doc.get("grid", 2))
    if variant == "patchhash":
        return PatchHashSpec(dim=doc.get("dim", 16), seed=doc.get("seed", 0))
    if variant == "external":
        return ExternalSpec(tuple(doc["command"]), timeout=doc.get("timeout", 30.0))
    raise ValueError(f"unknown embedder variant {variant!r}")


def _load_config(path: str, overrides: dict) -> dict:
    with open(path) as f:
        doc = json.load(f)
    cfg = dict(CONFIG_DEFAULTS)
    cfg.update(doc)
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    env_workers = os.environ.get("RICS_WORKERS")
    if env_workers and overrides.get("workers") is None:
        cfg["workers"] = int(env_workers)
    return cfg


def build_experiment(cfg: dict):
    """Dataset + settings from a flat config dict (see README for the schema)."""
    if ("manifest" in cfg) == ("synthetic" in cfg):
        raise ValueError("config needs exactly one of 'manifest' or 'synthetic'")
    mode = cfg["mode"]
    view, k = int(cfg["view_size"]), int(cfg["crop_size"])
    deltas = [int(d) for d in cfg["deltas"]]
    if not deltas or min(deltas) < 1:
        raise ValueError("deltas must be positive")
    if k > view:
        raise ValueError("crop_size must be <= view_size")

    if "synthetic" in cfg:
        sdoc = dict(cfg["synthetic"])
        sdoc.setdefault("view_size", view)
        sdoc.setdefault("max_shift", 0 if mode == CYCLIC else max(deltas))
        spec = SyntheticSpec(**sdoc)
        dataset = generate_dataset(spec)
    else:
        dataset = load_manifest(cfg["manifest"])

    for item in dataset:
        h, w = item.image.height, item.image.width
        if mode == CYCLIC:
            if h != view or w != view:
                raise ValueError(f"id={item.id!r}: cyclic mode needs {view}x{view} sources, got {h}x{w}")
        elif min(h, w) < view + 2 * max(deltas):
            raise ValueError(
                f"id={item.id!r}: source {h}x{w} too small for view {view} with shift {max(deltas)}"
            )

    embedder = parse_embedder(cfg["embedder"])
    engine = cfg["engine"]
    if "pipelines" in cfg:
        score_docs = [(p["name"], parse_score(p["score"])) for p in cfg["pipelines"]]
    else:
        spec0 = parse_score(cfg["score"])
        score_docs = [(f"rics-{score_variant_name(spec0)}", spec0)]
    pipelines = [
        Pipeline(name, "rics", k, embedder, RicsConfig(k, score, mode, engine), mode)
        for name, score in score_docs
    ]
    if cfg["baseline"]:
        pipelines.append(Pipeline("center-crop", "center", k, embedder, None, mode))

    settings = ExperimentSettings(
        view_size=view,
        deltas=deltas,
        metrics=[MetricKind(m, int(cfg["knn_k"]) if m == "class" else 1) for m in cfg["metrics"]],
        pipelines=pipelines,
        mode=mode,
        consistency_geometry=cfg["consistency_geometry"],
        samples_per_image=int(cfg["samples_per_image"]),
        gallery_metric=cfg["gallery_metric"],
        knn_k=int(cfg["knn_k"]),
        seed=int(cfg["seed"]),
        workers=int(cfg["workers"]),
    )
    return dataset, settings


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(
        classes=args.classes,
        per_class=args.per_class,
        family=args.family,
        seed=args.seed,
        size=args.size,
        view_size=args.view_size,
        max_shift=args.max_shift,
    )
    manifest = write_dataset(spec, args.out)
    print(f"wrote {spec.classes * spec.per_class} images; manifest: {manifest}")
    return 0


def cmd_eval(args) -> int:
    overrides = {
        "workers": args.workers,
        "out_dir": args.out_dir,
        "seed": args.seed,
        "samples_per_image": args.samples_per_image,
    }
    cfg = _load_config(args.config, overrides)
    dataset, settings = build_experiment(cfg)
    report, audit = run_experiment(dataset, settings)
    report.config = {k: v for k, v in cfg.items() if k not in _VOLATILE_KEYS}

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    with open(out / "audit.jsonl", "w") as f:
        for line in audit:
            f.write(json.dumps(line) + "\n")
    for name in report.pipelines:
        print(f"{name}: accuracy {report.accuracy[name]:.4f}")
    print(f"report written to {out}")
    return 0


def cmd_bounds(args) -> int:
    ks = list(range(args.k_min, args.k_max + 1, args.k_step))
    deltas = [int(d) for d in args.deltas.split(",")]
    rows = bound_rows(args.n, ks, deltas)
    lines = ["k,delta,adv_robustness_bound,consistency_bound"]
    for r in rows:
        lines.append(
            f"{r['k']},{r['delta']},{r['adv_robustness_bound']:.10f},{r['consistency_bound']:.10f}"
        )
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        print(f"wrote {len(rows)} rows to {args.out}")
    return 0


# Declared Monte-Carlo tolerances (pass/fail gates of `montecarlo`):
UNIFORMITY_MIN_P = 1e-3          # chi-square p-value must exceed this
IDEAL_TOL = 0.005                # |ideal-uniform agreement - closed form|
RANDHASH_TOL = 0.02              # |hash-score agreement - closed form|


def cmd_montecarlo(args) -> int:
    if min(args.trials, args.image_trials, args.uniformity_trials) < 1:
        raise SystemExit("trial counts must be >= 1")
    p_ideal = BoundParams(args.n, args.k, args.delta)
    ideal = simulate_crop_agreement(p_ideal, args.trials, "ideal", seed=args.seed)
    bound_i = adv_robustness_bound(p_ideal)

    p_hash = BoundParams(args.agreement_n, args.agreement_k, args.delta)
    emp = simulate_crop_agreement(
        p_hash, args.image_trials, "randhash", seed=args.seed, scorer_seed=args.scorer_seed
    )
    bound_h = adv_robustness_bound(p_hash)

    chi2, pval = argmax_uniformity(
        args.uniformity_n, args.uniformity_k, args.uniformity_trials,
        seed=args.seed, scorer_seed=args.scorer_seed,
    )
    summary = {
        "uniformity": {
            "n": args.uniformity_n,
            "k": args.uniformity_k,
            "trials": args.uniformity_trials,
            "chi_square": round(chi2, 6),
            "p_value": pval,
            "pass": pval > UNIFORMITY_MIN_P,
        },
        "ideal_agreement": {
            "n": args.n,
            "k": args.k,
            "delta": args.delta,
            "trials": args.trials,
            "empirical": ideal,
            "closed_form": bound_i,
            "tolerance": IDEAL_TOL,
            "pass": abs(ideal - bound_i) <= IDEAL_TOL,
        },
        "randhash_agreement": {
            "n": args.agreement_n,
            "k": args.agreement_k,
            "delta": args.delta,
            "trials": args.image_trials,
            "empirical": emp,
            "closed_form": bound_h,
            "tolerance": RANDHASH_TOL,
            "pass": abs(emp - bound_h) <= RANDHASH_TOL,
        },
    }
    summary["pass"] = all(part["pass"] for part in summary.values() if isinstance(part, dict))
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0 if summary["pass"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rics", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="generate a deterministic synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--per-class", type=int, default=10)
    g.add_argument("--family", default="noise-plus-object")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=int, default=256)
    g.add_argument("--view-size", type=int, default=224)
    g.add_argument("--max-shift", type=int, default=9)
    g.set_defaults(fn=cmd_gen_synthetic)

    e = sub.add_parser("eval", help="run a benchmark experiment from a JSON config")
    e.add_argument("--config", required=True)
    e.add_argument("--workers", type=int, default=None)
    e.add_argument("--out-dir", default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--samples-per-image", type=int, default=None)
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("bounds", help="closed-form bound curves as CSV")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k-min", type=int, required=True)
    b.add_argument("--k-max", type=int, required=True)
    b.add_argument("--k-step", type=int, default=1)
    b.add_argument("--deltas", default="1,3,5,9")
    b.add_argument("--out", default="-")
    b.set_defaults(fn=cmd_bounds)

    m = sub.add_parser("montecarlo", help="verify argmax uniformity and the counting argument")
    m.add_argument("--n", type=int, default=224)
    m.add_argument("--k", type=int, default=140)
    m.add_argument("--delta", type=int, default=1)
    m.add_argument("--trials", type=int, default=100_000)
    m.add_argument("--agreement-n", type=int, default=64)
    m.add_argument("--agreement-k", type=int, default=32)
    m.add_argument("--image-trials", type=int, default=10_000)
    m.add_argument("--uniformity-n", type=int, default=40)
    m.add_argument("--uniformity-k", type=int, default=20)
    m.add_argument("--uniformity-trials", type=int, default=100_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--scorer-seed", type=int, default=0)
    m.add_argument("--out", default="-")
    m.set_defaults(fn=cmd_montecarlo)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
