"""Command-line entry point.

Every run writes ``manifest.json`` into its output directory, echoing the fully
resolved configuration (defaults and drawn seeds included).  Passing that file
back with ``--manifest`` reproduces the run's outputs byte for byte.

Exit codes: 0 success, 1 other errors, 2 dimension errors, 3 I/O errors,
4 every experiment cell failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import secrets
import sys
from pathlib import Path

import numpy as np

from . import bounds, harness, linops, manifolds
from .linops import DimensionError, OperatorDescriptor

log = logging.getLogger("stable_embed")

COMMANDS = ("bounds", "build-op", "embed", "test-embedding", "test-rip", "compare", "verify-geometry")


class ExperimentFailed(RuntimeError):
    pass


# --------------------------------------------------------------------------
# helpers


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _read_json(path):
    return json.loads(Path(path).read_text())


def _read_vectors(path):
    """Rows of a CSV of interleaved re/im columns (a header row is optional)."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    data = np.array([[float(v) for v in row] for row in rows], dtype=float)
    if data.ndim != 2 or data.shape[1] % 2:
        raise DimensionError(f"{path}: expected an even number of re/im columns")
    return manifolds.complexify(data)


def _write_vectors(path, vectors):
    real = manifolds.realify(np.atleast_2d(vectors))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"y{i}_{part}" for i in range(real.shape[1] // 2) for part in ("re", "im")])
        for row in real:
            writer.writerow([repr(float(v)) for v in row])


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def _sha256(desc):
    return hashlib.sha256(json.dumps(desc.to_dict(), sort_keys=True).encode()).hexdigest()


def _manifold(cfg):
    name = cfg["manifold"]
    if name == "sinusoid":
        return manifolds.sinusoid_manifold(cfg["N"])
    if name == "custom":
        if not cfg.get("grid"):
            raise ValueError("--manifold custom needs --grid PATH")
        return manifolds.load_custom_manifold(cfg["grid"])
    raise ValueError(f"unknown manifold {name!r}")


def _params(cfg):
    if cfg["manifold"] == "sinusoid" and cfg.get("tau") is None:
        return manifolds.sinusoid_geometry(cfg["N"])
    missing = [k for k in ("D", "N", "tau", "V") if cfg.get(k) is None]
    if missing:
        raise ValueError(f"manifold parameters missing: {', '.join('--' + k for k in missing)}")
    return bounds.ManifoldParams(cfg["D"], cfg["N"], cfg["tau"], cfg["V"], cfg.get("R") or 1.0)


def _operator(cfg, n_default=None):
    """Operator from ``--descriptor`` or from family flags."""
    if cfg.get("descriptor"):
        return linops.from_descriptor(OperatorDescriptor.from_dict(_read_json(cfg["descriptor"])))
    family = cfg.get("family")
    if not family:
        raise ValueError("need --descriptor or --family")
    n = cfg.get("n") or n_default
    m = cfg.get("m")
    seed = cfg["seed"]
    if cfg.get("embedding"):
        return harness.build_family(family, m, n, seed, cfg.get("J") or 4)
    if family == "dense_subgaussian":
        return linops.make_dense_subgaussian(m, n, cfg["dist"], seed)
    if family == "subsampled_dft":
        return linops.make_subsampled_dft(m, n, seed)
    if family == "partial_circulant":
        return linops.make_partial_circulant(m, n, cfg["dist"], seed, cfg["selection_policy"])
    if family == "random_convolution":
        return linops.make_random_convolution(m, n, seed)
    if family == "dbd":
        if not cfg.get("block"):
            raise ValueError("dbd needs --block M N J")
        return linops.make_dbd(*cfg["block"], cfg["dist"], seed)
    if family == "devore_binary":
        return linops.make_devore_binary(cfg["p"], cfg["r"])
    if family == "rademacher_diag":
        return linops.make_rademacher_diag(n, seed)
    if family == "unitary_dft":
        return linops.make_unitary_dft(n)
    if family == "identity":
        return linops.identity(n)
    raise ValueError(f"unknown family {family!r}")


# --------------------------------------------------------------------------
# commands


def cmd_bounds(cfg, out):
    params = _params(cfg)
    budget = bounds.embedding_budget(params, cfg["delta"], cfg["rho"])
    _write_json(out / "budget.json", budget.to_dict())
    cors, skipped = [], {}
    for name in bounds.COROLLARIES:
        try:
            cors.append(bounds.corollary_measurements(name, params, cfg["delta"], cfg["rho"], cfg["constant_C"]).to_dict())
        except ValueError as exc:
            skipped[name] = str(exc)
    _write_json(out / "corollaries.json", cors)
    _write_json(out / "bounds_meta.json", {
        "params": params.to_dict(),
        "note": "corollary counts are scaling laws with unknown constants, not certified counts",
        "log_base": "e",
        "failure_probability_form": bounds.FAILURE_PROBABILITY_FORM,
        "skipped": skipped,
    })
    return ["budget.json", "corollaries.json", "bounds_meta.json"], {}


def cmd_build_op(cfg, out):
    op = _operator(cfg)
    if op.descriptor is None:
        raise ValueError("operator is not serializable")
    _write_json(out / "descriptor.json", op.descriptor.to_dict())
    return ["descriptor.json"], {"descriptor_sha256": _sha256(op.descriptor)}


def cmd_embed(cfg, out):
    if not cfg.get("input"):
        raise ValueError("embed needs --input PATH")
    op = _operator(cfg)
    x = _read_vectors(cfg["input"])
    if x.shape[1] != op.n:
        raise DimensionError(f"input rows have dimension {x.shape[1]}, operator expects {op.n}")
    y = op.apply(x.T).T
    _write_vectors(out / "embedded.csv", y)
    extra = {"descriptor_sha256": _sha256(op.descriptor)} if op.descriptor is not None else {}
    return ["embedded.csv"], extra


def cmd_test_embedding(cfg, out):
    model = _manifold(cfg)
    op = _operator(cfg, n_default=model.N)
    chords = manifolds.sample_chords(model, cfg["samples"], cfg["chord_seed"], cfg["min_separation"])
    if op.n == model.ambient_n and op.n != model.N:
        chords = chords.realified()
    report = harness.measure_embedding(op, chords)
    _write_json(out / "report.json", report.to_dict())
    files = ["report.json"]
    if cfg.get("export_chords"):
        chords.to_csv(out / "chords.csv")
        files.append("chords.csv")
    return files, {}


def cmd_test_rip(cfg, out):
    op = _operator(cfg)
    rep = harness.measure_rip(op, cfg["sparsity"], cfg["samples"], cfg["seed"], cfg["support_policy"])
    _write_json(out / "rip.json", rep.to_dict())
    return ["rip.json"], {}


def cmd_compare(cfg, out):
    model = _manifold(cfg)
    families = cfg["families"]
    table = harness.compare_families(
        model, families, cfg["m_grid"], cfg["samples"], cfg["seeds"],
        base_seed=cfg["seed"], J=cfg["J"], min_separation=cfg["min_separation"],
        realify=cfg.get("real", False),
    )
    table.to_csv(out / "compare.csv")
    summary = {
        "medians": {fam: {str(m): v for m, v in ms.items()} for fam, ms in table.medians().items()},
        "failures": table.failures,
        "estimate_kind": harness.ESTIMATE_KIND,
    }
    _write_json(out / "summary.json", summary)
    if not table.rows:
        raise ExperimentFailed(f"all {len(table.failures)} cells failed")
    return ["compare.csv", "summary.json"], {}


def cmd_verify_geometry(cfg, out):
    model = _manifold(cfg)
    geometry = model.geometry if cfg.get("tau") is None else cfg["tau"]
    sa = manifolds.verify_self_avoidance(model, geometry, cfg["samples"], cfg["seed"])
    cv = manifolds.verify_curvature_bound(model, geometry, cfg["curvature_samples"], cfg["seed"])
    _write_json(out / "geometry.json", {"self_avoidance": sa.to_dict(), "curvature": cv.to_dict()})
    return ["geometry.json"], {}


HANDLERS = {
    "bounds": cmd_bounds,
    "build-op": cmd_build_op,
    "embed": cmd_embed,
    "test-embedding": cmd_test_embedding,
    "test-rip": cmd_test_rip,
    "compare": cmd_compare,
    "verify-geometry": cmd_verify_geometry,
}


# --------------------------------------------------------------------------
# argument parsing


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="stable-embed", description=__doc__.splitlines()[0])
    parser.add_argument("--manifest", help="re-run the configuration recorded in a manifest")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--out", default=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, help="64-bit seed; drawn and recorded if omitted")

    def manifold_flags(p):
        p.add_argument("--manifold", default="sinusoid", choices=sorted(manifolds.MANIFOLDS))
        p.add_argument("--N", type=int, default=64, help="sinusoid length / ambient dimension")
        p.add_argument("--grid", help="CSV grid for --manifold custom")

    def op_flags(p):
        p.add_argument("--descriptor", help="operator descriptor JSON")
        p.add_argument("--family")
        p.add_argument("--m", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--dist", default="gaussian", choices=linops.DISTS)
        p.add_argument("--selection-policy", default="first_m", choices=linops.SELECTION_POLICIES)
        p.add_argument("--block", type=int, nargs=3, metavar=("M", "N", "J"))
        p.add_argument("--p", type=int)
        p.add_argument("--r", type=int)
        p.add_argument("--J", type=int, default=4)
        p.add_argument("--embedding", action="store_true",
                       help="wrap the family into its stable-embedding composition")

    p = sub.add_parser("bounds", help="RIP-order budget and corollary measurement counts")
    common(p)
    manifold_flags(p)
    p.add_argument("--D", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--V", type=float)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--constant-C", type=float, default=1.0)

    p = sub.add_parser("build-op", help="write an operator descriptor")
    common(p)
    op_flags(p)

    p = sub.add_parser("embed", help="apply an operator to vectors in a CSV file")
    common(p)
    op_flags(p)
    p.add_argument("--input")

    p = sub.add_parser("test-embedding", help="measure distortion over sampled chords")
    common(p)
    manifold_flags(p)
    op_flags(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--chord-seed", type=int)
    p.add_argument("--min-separation", type=float)
    p.add_argument("--export-chords", action="store_true")

    p = sub.add_parser("test-rip", help="empirical RIP distortion over random sparse vectors")
    common(p)
    op_flags(p)
    p.add_argument("--sparsity", type=int, required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--support-policy", default="uniform_support", choices=("uniform_support", "worst_of_batch"))

    p = sub.add_parser("compare", help="compare operator families across a grid of m")
    common(p)
    manifold_flags(p)
    p.add_argument("--families", type=_str_list, default=["dense_gaussian", "subsampled_dft",
                                                           "partial_circulant", "random_convolution"])
    p.add_argument("--family", dest="families", type=_str_list, help="alias of --families")
    p.add_argument("--m", dest="m_grid", type=_int_list, default=[16, 32, 64], help="comma-separated m grid")
    p.add_argument("--samples", type=int, default=10_000, help="chords per trial")
    p.add_argument("--seeds", type=int, default=10, help="seeds per cell")
    p.add_argument("--J", type=int, default=4)
    p.add_argument("--min-separation", type=float)
    p.add_argument("--real", action="store_true", help="measure in the real 2N-dimensional layout")

    p = sub.add_parser("verify-geometry", help="numerical curvature and self-avoidance checks")
    common(p)
    manifold_flags(p)
    p.add_argument("--tau", type=float, help="override the claimed tau")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--curvature-samples", type=int, default=1000)
    return parser


def _resolve(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("manifest", "verbose")}
    if cfg.get("seed") is None:
        cfg["seed"] = secrets.randbits(63)
    if "chord_seed" in cfg and cfg["chord_seed"] is None:
        cfg["chord_seed"] = cfg["seed"]
    if "min_separation" in cfg and cfg["min_separation"] is None and cfg.get("manifold"):
        cfg["min_separation"] = manifolds.default_min_separation(_manifold(cfg))
    if cfg.get("out") is None:
        cfg["out"] = f"run-{cfg['command']}"
    return cfg


def run(cfg):
    """Execute one resolved configuration; returns the output directory."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    files, extra = HANDLERS[cfg["command"]](cfg, out)
    manifest = {"config": cfg, "outputs": files, **extra}
    _write_json(out / "manifest.json", manifest)
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.manifest:
            cfg = _read_json(args.manifest)["config"]
            if args.out:
                cfg["out"] = args.out
        elif args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        else:
            cfg = _resolve(args)
        out = run(cfg)
    except DimensionError as exc:
        print(f"dimension error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except ExperimentFailed as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
