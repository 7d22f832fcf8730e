"""Command-line entry point: ``planarcda synth|fit|transform|eval|bench``.

Exit codes: 0 success, 2 input or validation error, 3 a fit stopped at
``max_iter`` without converging (the model file is still written).
"""
import argparse
import dataclasses
import json
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import serialize
from .correlation import SolverOpts, fit_2dcca, fit_cca
from .cdtrl import CdtrlOpts, fit_cdtrl
from .data import (LabeledPairSet, SynthSpec, center_pair, class_names, gen_synthetic,
                   load_image_dir, load_view_dir, to_unit_range, write_image_dir)
from .errors import PlanarCDAError, ValidationError
from .evaluation import (METHODS, MethodSpec, ar_protocol, emit_report, loo_cv,
                         split_eval)

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 2, 3

# which RunConfig fields each method reads; the rest must stay unset
_SOLVER = {"d1", "d2", "max_iter", "conv_tol", "ridge"}
_APPLIES = {
    "cca": {"width", "ridge"},
    "2dcca": _SOLVER,
    "l2dcca": _SOLVER | {"sigma"},
    "cdtrl": _SOLVER | {"mode", "e_R", "e_r", "e_N", "e_n", "null_tol"},
    "pca": {"width", "view"},
    "2dpca": {"width", "view"},
    "lda": {"width", "ridge", "view"},
    "2dlda": {"width", "ridge", "view"},
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Method choice plus solver knobs; ``None`` means the method default."""

    method: str = "cdtrl"
    mode: str | None = None
    d1: int | None = None
    d2: int | None = None
    width: int | None = None
    e_R: int | None = None
    e_r: int | None = None
    e_N: int | None = None
    e_n: int | None = None
    sigma: float | None = None
    ridge: float | None = None
    conv_tol: float | None = None
    max_iter: int | None = None
    null_tol: float | None = None
    view: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        for name in ("d1", "d2", "width", "e_R", "e_r", "e_N", "e_n", "max_iter"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
                raise ValidationError(f"{name} must be a positive integer")
        for name in ("sigma", "conv_tol", "null_tol"):
            v = getattr(self, name)
            if v is not None and not float(v) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.ridge is not None and not float(self.ridge) >= 0:
            raise ValidationError("ridge must be nonnegative")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def set_fields(self):
        return {f.name for f in dataclasses.fields(self)
                if f.name not in ("method", "seed") and getattr(self, f.name) is not None}

    def check_applies(self, methods):
        """Reject knobs that none of ``methods`` would read."""
        used = set().union(*(_APPLIES[m] for m in methods))
        stray = sorted(self.set_fields() - used)
        if stray:
            raise ValidationError(f"{', '.join(stray)} not used by {', '.join(methods)}")

    def method_spec(self, method=None, mode=None):
        method = method or self.method
        kw = {k: getattr(self, k) for k in self.set_fields() & _APPLIES[method]}
        if mode is not None:
            kw["mode"] = mode
        return MethodSpec(method, **kw)

    def to_dict(self):
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


_KNOBS = (("--mode", str, "range, null or complete (cdtrl)"),
          ("--d1", int, "left 2DCCA width"), ("--d2", int, "right 2DCCA width"),
          ("--width", int, "output width of cca and the single-view baselines"),
          ("--e-R", int, "range branch left width"), ("--e-r", int, "range branch right width"),
          ("--e-N", int, "null branch left width"), ("--e-n", int, "null branch right width"),
          ("--sigma", float, "heat-kernel width (l2dcca)"), ("--ridge", float, "ridge"),
          ("--conv-tol", float, "convergence tolerance"), ("--max-iter", int, "iteration cap"),
          ("--null-tol", float, "relative null-space threshold"),
          ("--view", str, "view used by single-view baselines (x or y)"))


def _add_knobs(p, method_flag=True):
    if method_flag:
        p.add_argument("--method", choices=METHODS)
    p.add_argument("--config", help="JSON file with RunConfig fields")
    for flag, typ, text in _KNOBS:
        p.add_argument(flag, type=typ, help=text, dest=flag[2:].replace("-", "_"))
    p.add_argument("--seed", type=int)


def _run_config(args, method=None):
    values = {}
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(values, dict):
            raise ValidationError("config file must hold a JSON object")
    for flag, _, _ in _KNOBS + (("--seed", 0, ""), ("--method", 0, "")):
        v = getattr(args, flag[2:].replace("-", "_"), None)
        if v is not None:
            values[flag[2:].replace("-", "_")] = v
    if method is not None:
        values.setdefault("method", method)
    return RunConfig.from_dict(values)


# -- commands ---------------------------------------------------------------

def cmd_synth(args):
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ValidationError(f"{out} is not empty; pass --force to overwrite")
    shape = _int_list(args.shape, "shape")
    spec = SynthSpec(classes=args.classes, per_class=args.per_class, shape=tuple(shape),
                     class_separation=args.separation, noise_sigma=args.noise,
                     seed=args.seed, pattern_rank=args.rank)
    data = to_unit_range(gen_synthetic(spec))
    write_image_dir(data, out, args.max_gray)
    m, n, p, q = data.shapes
    print(f"N={len(data)} shapes={m}x{n},{p}x{q} c={data.n_classes}")
    return EXIT_OK


def cmd_fit(args):
    cfg = _run_config(args)
    cfg.check_applies([cfg.method])
    data = load_image_dir(args.data)
    spec = cfg.method_spec()
    model = spec.fit(data)
    serialize.save_model(args.out, model, cfg.to_dict())
    converged, notes = _convergence(model)
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    print(f"wrote {args.out} ({spec.name}, N={len(data)})")
    if not converged:
        print("error: fit stopped at max_iter without converging", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _convergence(model):
    """(converged, warnings) for the method's own iterative loop."""
    notes = []
    branches = getattr(model, "branches", None)
    if branches is not None:
        if not model.base.converged:
            notes.append("the 2DCCA stage stopped at max_iter without converging")
        return model.converged, notes
    base = getattr(model, "base", None)
    return (base.converged if base is not None else True), notes


def cmd_transform(args):
    model, _ = serialize.load_model(args.model)
    data = load_image_dir(args.data)
    names = class_names(args.data)
    if args.branch is not None:
        if not hasattr(model, "branches"):
            raise ValidationError("--branch applies to cdtrl models only")
        feats = model.transform(data, args.branch)
    else:
        feats = model.transform(data)
    doc = {"schema_version": serialize.SCHEMA_VERSION,
           "branch": args.branch,
           "samples": [{"id": sid, "class": names[label - 1],
                        "feature": serialize.matrix_dict(f)}
                       for sid, label, f in zip(data.ids, data.labels, feats)]}
    Path(args.out).write_text(serialize.dump_json(doc))
    print(f"wrote {len(data)} features of shape {feats.shape[1]}x{feats.shape[2]} to {args.out}")
    return EXIT_OK


def _method_specs(cfg, tokens):
    specs = []
    plain = []
    for tok in tokens:
        method, _, mode = tok.partition("-") if tok.startswith("cdtrl-") else (tok, "", "")
        if method not in METHODS:
            raise ValidationError(f"unknown method {tok!r}; choose from {', '.join(METHODS)}")
        plain.append(method)
        specs.append((method, mode or None))
    cfg.check_applies(plain)
    return [cfg.method_spec(m, mode) for m, mode in specs]


def _permuted(data, seed):
    labels = np.random.default_rng(seed).permutation(data.labels)
    return data.relabeled(labels)


def cmd_eval(args):
    cfg = _run_config(args, method="cdtrl")
    tokens = [t for t in args.methods.split(",") if t]
    if not tokens:
        raise ValidationError("--methods is empty")
    specs = _method_specs(cfg, tokens)
    timing = args.timing
    if args.protocol == "loo":
        data = load_image_dir(args.data)
        if args.permute_labels:
            data = _permuted(data, cfg.seed)
        rows = [loo_cv(data, s, timing=timing) for s in specs]
    elif args.protocol == "split":
        if not args.test:
            raise ValidationError("--protocol split needs --test")
        train = load_image_dir(args.data)
        if args.permute_labels:
            train = _permuted(train, cfg.seed)
        test = load_image_dir(args.test, classes=class_names(args.data))
        rows = [split_eval(train, test, s, timing=timing) for s in specs]
    else:
        if not args.refs:
            raise ValidationError("--protocol ar-loo needs --refs")
        if class_names(args.refs) != class_names(args.data):
            raise ValidationError("reference and variant directories name different classes")
        refs, variants = load_view_dir(args.refs), load_view_dir(args.data)
        rows = ar_protocol(refs, variants, specs, scope=args.scope, timing=timing)
    text = emit_report(rows)
    Path(args.report).write_text(text)
    sys.stdout.write(text)
    for r in rows:
        if r.skipped:
            print(f"note: {r.method} skipped {r.skipped} folds", file=sys.stderr)
    return EXIT_OK


# -- benchmark --------------------------------------------------------------

BENCH_METHODS = ("cca", "2dcca", "cdtrl")
BENCH_HEADER = ("m", "n", "N", "method", "median_ms")


def available_memory():
    """Bytes of available RAM (MemAvailable where /proc exists)."""
    try:
        with open("/proc/meminfo") as fh:
            for line in fh:
                if line.startswith("MemAvailable:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    try:
        return os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return None


def cca_bytes(dx, dy, N):
    """Rough peak working set of :func:`fit_cca` in bytes."""
    return 8 * (dx * dx + dy * dy + 3 * dx * dy + 2 * N * (dx + dy))


def bench(sizes, n_samples=100, reps=3, seed=0, classes=5, memory=None):
    """Median wall-clock fit times; rows ``(m, n, N, method, median_ms)``.

    Y samples are ``m/2 x n/2``. Vectorized CCA is skipped (``nan``) when its
    working set would not fit in ``memory`` bytes (default: available RAM).
    """
    if n_samples % classes:
        raise ValidationError(f"N={n_samples} is not a multiple of {classes} classes")
    if reps < 1:
        raise ValidationError("reps must be positive")
    memory = available_memory() if memory is None else memory
    rows = []
    for m in sizes:
        if m < 2:
            raise ValidationError("sizes must be at least 2")
        spec = SynthSpec(classes=classes, per_class=n_samples // classes,
                         shape=(m, m, m // 2, m // 2), seed=seed)
        data = gen_synthetic(spec)
        Xv, Yv = data.X.reshape(len(data), -1), data.Y.reshape(len(data), -1)
        d = min(8, Yv.shape[1])
        jobs = {"cca": lambda: fit_cca(Xv, Yv, d),
                "2dcca": lambda: fit_2dcca(center_pair(data), SolverOpts()),
                "cdtrl": lambda: fit_cdtrl(data, SolverOpts(), CdtrlOpts())}
        for name in BENCH_METHODS:
            if name == "cca" and memory is not None and cca_bytes(Xv.shape[1], Yv.shape[1],
                                                                   len(data)) > memory:
                print(f"note: skipping cca at m={m}: needs about "
                      f"{cca_bytes(Xv.shape[1], Yv.shape[1], len(data)) / 2**30:.1f} GiB",
                      file=sys.stderr)
                rows.append((m, m, len(data), name, float("nan")))
                continue
            times = []
            for _ in range(reps):
                start = time.perf_counter()
                jobs[name]()
                times.append((time.perf_counter() - start) * 1000.0)
            rows.append((m, m, len(data), name, statistics.median(times)))
    return rows


def cmd_bench(args):
    sizes = _int_list(args.sizes, "sizes")
    memory = None if args.max_mem_gb is None else int(args.max_mem_gb * 2**30)
    rows = bench(sizes, args.n, args.reps, args.seed, args.classes, memory)
    lines = ["\t".join(BENCH_HEADER)]
    lines += [f"{m}\t{n}\t{N}\t{name}\t{ms:.3f}" for m, n, N, name, ms in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _int_list(text, name):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"--{name} expects comma-separated integers") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="planarcda",
                                     description="Discriminative 2D correlation analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic paired dataset")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--shape", default="16,16,8,8", help="m,n,p,q")
    p.add_argument("--separation", type=float, default=5.0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--rank", type=int, default=2, help="rank of each class pattern")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-gray", type=int, default=65535)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a model and write it as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_knobs(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", help="features of a dataset under a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--branch", choices=("range", "null", "complete", "base"))
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("eval", help="recognition accuracy under a protocol")
    p.add_argument("--protocol", choices=("loo", "split", "ar-loo"), default="loo")
    p.add_argument("--methods", required=True,
                   help="comma-separated; cdtrl-range and cdtrl-null select one branch")
    p.add_argument("--data", required=True, help="dataset (variants for ar-loo)")
    p.add_argument("--test", help="test dataset for --protocol split")
    p.add_argument("--refs", help="reference images for --protocol ar-loo")
    p.add_argument("--scope", choices=("variants", "all"), default="variants")
    p.add_argument("--report", required=True)
    p.add_argument("--timing", action="store_true", help="record runtimes (else 0)")
    p.add_argument("--permute-labels", action="store_true",
                   help="shuffle training labels with --seed (sanity check)")
    _add_knobs(p, method_flag=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="fit-time comparison of CCA, 2DCCA and CDTRL")
    p.add_argument("--sizes", default="32,64", help="comma-separated m (= n)")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-mem-gb", type=float, help="skip CCA above this working set")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PlanarCDAError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
