"""Command-line front end.

Subcommands: ``learn``, ``represent``, ``denoise``, ``metrics``.

Settings resolve as built-in defaults < ``--preset`` < ``--config`` file
(flat ``key = value`` lines) < explicit flags. All randomness comes from
``--seed`` through numpy's PCG64 generator (``numpy.random.default_rng``).
"""

import argparse
import csv
import io
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

import xform
from xform import io as xio
from xform.denoise import DenoiseConfig, denoise_image
from xform.learning import TRACE_FIELDS, LearnConfig, init_transform, learn
from xform.linalg import condition_number
from xform.metrics import MetricsReport, metrics_report, nse, psnr, recovery_psnr
from xform.patches import extract_patches
from xform.sparse_coding import Constrained, Penalized, code_columns

log = logging.getLogger("xform")


class CommandError(Exception):
    pass


# ----------------------------------------------------------------------------
# settings
# ----------------------------------------------------------------------------

def _parse_sizes(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _opt_int(text):
    return None if text in (None, "", "none", "None") else int(text)


def _opt_float(text):
    return None if text in (None, "", "none", "None") else float(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


# name -> (type, default) per command; flags use the same names
LEARN_SETTINGS = {
    "s": (_opt_int, 11),
    "eta": (_opt_float, None),
    "lambda0": (float, 3.1e-3),
    "xi": (float, 1.0),
    "iters": (int, 100),
    "init": (str, "auto"),
    "seed": (int, 0),
    "order": (str, "update-first"),
    "stop_tol": (_opt_float, None),
    "patch": (int, 8),
    "stride": (_opt_int, None),
    "keep_mean": (_bool, False),
}

REPRESENT_SETTINGS = {
    "sizes": (_parse_sizes, [16, 36, 64]),
    "s": (_opt_int, None),
    "lambda0": (float, 3.1e-3),
    "xi": (float, 1.0),
    "iters": (int, 100),
    "init": (str, "dct"),
    "seed": (int, 0),
}

DENOISE_SETTINGS = {
    "sigma": (_opt_float, None),
    "n": (int, 121),
    "lambda0": (float, 0.031),
    "C": (float, 1.04),
    "outer_iters": (int, 11),
    "n_train": (int, 32000),
    "learn_iters": (int, 12),
    "tau_coeff": (float, 0.01),
    "s_init": (int, 12),
    "xi": (float, 1.0),
    "seed": (int, 0),
    "add_noise": (_bool, False),
}

PRESETS = {
    "learn": {"convergence": {"s": 11, "lambda0": 3.1e-3, "patch": 8, "init": "dct"}},
    "represent": {"fig3": {"sizes": [16, 36, 64, 100, 144], "lambda0": 3.1e-3, "init": "dct"}},
    "denoise": {
        "table1": {},
        # 7x7 patches and fewer iterations for small images / quick runs
        "small": {"n": 49, "outer_iters": 4, "n_train": 10000, "s_init": 5},
    },
}


def resolve_settings(table, args, command):
    """Merge defaults, preset, config file and explicit flags, in that order."""
    settings = {name: default for name, (_, default) in table.items()}
    preset = getattr(args, "preset", None)
    if preset is not None:
        try:
            settings.update(PRESETS[command][preset])
        except KeyError:
            raise CommandError(f"unknown preset {preset!r} for {command}") from None
    if getattr(args, "config", None):
        for key, raw in xio.read_kv(args.config).items():
            if key not in table:
                raise CommandError(f"{args.config}: unknown setting {key!r}")
            settings[key] = table[key][0](raw)
    for name, (conv, _) in table.items():
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = conv(value) if isinstance(value, str) and conv is not str else value
    return settings


# ----------------------------------------------------------------------------
# shared helpers
# ----------------------------------------------------------------------------

def _now():
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _manifest(command, settings, inputs, outputs, seed, started):
    out = {"command": command, "version": xform.__version__, "backend": xform.BACKEND,
           "rng": "numpy PCG64 (default_rng)", "seed": seed}
    for key, value in settings.items():
        out[f"config.{key}"] = ",".join(map(str, value)) if isinstance(value, list) else value
    for i, p in enumerate(inputs):
        out[f"input.{i}"] = p
    for i, p in enumerate(outputs):
        out[f"output.{i}"] = p
    out["started"] = started
    out["finished"] = _now()
    return out


def _trace_csv(trace):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_FIELDS)
    for r in trace.records:
        writer.writerow([r.iter, repr(r.objective), repr(r.sparsification_error),
                         repr(r.condition_number), repr(r.frobenius_norm), f"{r.elapsed_ms:.3f}"])
    return buf.getvalue().encode("ascii")


def _require_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise CommandError(f"{name} is not finite")


def _resolve_init(kind, n):
    if kind == "auto":
        side = int(round(math.sqrt(n)))
        return "dct" if side * side == n else "klt"
    return kind


def _round_half_up(x):
    return int(math.floor(x + 0.5))


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def cmd_learn(args):
    started = _now()
    cfg = resolve_settings(LEARN_SETTINGS, args, "learn")
    if (args.matrix is None) == (args.image is None):
        raise CommandError("give exactly one of --matrix or --image")
    if args.matrix is not None:
        Y = xio.read_matrix(args.matrix)
        source = args.matrix
        pixels = Y.size
    else:
        img = xio.read_pgm(args.image)
        stride = cfg["stride"] or cfg["patch"]
        patches = extract_patches(img, cfg["patch"], stride, remove_mean=not cfg["keep_mean"])
        Y = patches.vectors
        source = args.image
        pixels = Y.size
    n = Y.shape[0]
    if cfg["eta"] is not None:
        mode = Penalized(cfg["eta"])
    else:
        if cfg["s"] is None or not 0 <= cfg["s"] <= n:
            raise CommandError(f"--s must be in [0, {n}]")
        mode = Constrained(cfg["s"])
    cfg["init"] = _resolve_init(cfg["init"], n)
    config = LearnConfig(lambda0=cfg["lambda0"], mode=mode, xi=cfg["xi"],
                         iterations=cfg["iters"], init=cfg["init"], seed=cfg["seed"],
                         order=cfg["order"], stop_tol=cfg["stop_tol"])
    result = learn(Y, config)
    W, X = result.W, result.X.data
    _require_finite("learned transform", W)
    _require_finite("objective trace", result.trace.objectives)

    nnz = np.count_nonzero(X, axis=0)
    kappa = condition_number(W)
    summary = {
        "signals": Y.shape[1],
        "dimension": n,
        "total_nonzeros": int(nnz.sum()),
        "max_column_nonzeros": int(nnz.max()) if nnz.size else 0,
        "mean_column_nonzeros": float(nnz.mean()) if nnz.size else 0.0,
        "objective": result.trace.records[-1].objective,
        "sparsification_error": result.trace.records[-1].sparsification_error,
        "condition_number": kappa,
        "frobenius_norm": float(np.linalg.norm(W)),
    }
    if np.any(Y):
        summary["recovery_psnr_db"] = recovery_psnr(W, Y, X, pixels)

    out = Path(args.out)
    names = {"transform": out / "transform.csv", "trace": out / "trace.csv",
             "summary": out / "codes_summary.txt", "manifest": out / "manifest.txt"}
    if args.save_codes:
        names["codes"] = out / "codes.csv"
    with xio.OutputSet() as outputs:
        outputs.add(names["transform"], xio.encode_matrix(W))
        outputs.add(names["trace"], _trace_csv(result.trace))
        outputs.add(names["summary"], xio.encode_kv(summary))
        if args.save_codes:
            outputs.add(names["codes"], xio.encode_matrix(X))
        manifest = _manifest("learn", cfg, [source], [str(p) for p in names.values()],
                             cfg["seed"], started)
        outputs.add(names["manifest"], xio.encode_kv(manifest))
        outputs.commit()
    print(f"iterations={len(result.trace) - 1} objective={summary['objective']:.6g} "
          f"condition_number={kappa:.4f} frobenius_norm={summary['frobenius_norm']:.4f}")
    return 0


def represent_rows(img, sizes, s=None, lambda0=3.1e-3, xi=1.0, iters=100, init="dct", seed=0):
    """Learned-vs-DCT comparison on non-overlapping patches, one row per size."""
    rows = []
    for n in sizes:
        side = int(round(math.sqrt(n)))
        if side * side != n:
            raise CommandError(f"patch size {n} is not a perfect square")
        Y = extract_patches(img, side, side, remove_mean=True).vectors
        k = _round_half_up(0.17 * n) if s is None else s
        mode = Constrained(k)
        t0 = time.perf_counter()
        W = learn(Y, LearnConfig(lambda0=lambda0, mode=mode, xi=xi, iterations=iters,
                                 init=init, seed=seed)).W
        seconds = time.perf_counter() - t0
        D = init_transform("dct", n=n)
        pixels = Y.size
        rows.append({
            "patch_size": n,
            "nse_learned": nse(W, Y, k),
            "nse_dct": nse(D, Y, k),
            "rpsnr_learned": recovery_psnr(W, Y, code_columns(W @ Y, mode), pixels),
            "rpsnr_dct": recovery_psnr(D, Y, code_columns(D @ Y, mode), pixels),
            "kappa": condition_number(W),
            "seconds": seconds,
        })
    return rows


REPRESENT_FIELDS = ("patch_size", "nse_learned", "nse_dct", "rpsnr_learned", "rpsnr_dct",
                    "kappa", "seconds")


def cmd_represent(args):
    started = _now()
    cfg = resolve_settings(REPRESENT_SETTINGS, args, "represent")
    img = xio.read_pgm(args.image)
    rows = represent_rows(img, cfg["sizes"], cfg["s"], cfg["lambda0"], cfg["xi"],
                          cfg["iters"], cfg["init"], cfg["seed"])
    for row in rows:
        _require_finite("representation metrics", np.array(list(row.values()), dtype=float))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, REPRESENT_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    payload = buf.getvalue().encode("ascii")
    if args.out is None:
        sys.stdout.write(payload.decode())
        return 0
    out = Path(args.out)
    manifest_path = out.with_name(out.name + ".manifest.txt")
    with xio.OutputSet() as outputs:
        outputs.add(out, payload)
        outputs.add(manifest_path, xio.encode_kv(
            _manifest("represent", cfg, [args.image], [str(out), str(manifest_path)],
                      cfg["seed"], started)))
        outputs.commit()
    return 0


def cmd_denoise(args):
    started = _now()
    cfg = resolve_settings(DENOISE_SETTINGS, args, "denoise")
    if cfg["sigma"] is None:
        raise CommandError("--sigma is required")
    img = xio.read_pgm(args.input)
    clean = xio.read_pgm(args.clean) if args.clean else None
    if cfg["add_noise"]:
        clean = img
        img = img + np.random.default_rng(cfg["seed"]).normal(0.0, cfg["sigma"], img.shape)
    config = DenoiseConfig(**{k: v for k, v in cfg.items() if k != "add_noise"})
    denoised, state = denoise_image(img, config)
    _require_finite("denoised image", denoised)

    report = {"sigma": cfg["sigma"], "psnr_denoised_vs_input_db": psnr(img, denoised),
              "mean_sparsity": float(state.sparsities.mean()),
              "transform_condition_number": condition_number(state.W)}
    if clean is not None:
        report["psnr_input_vs_clean_db"] = psnr(clean, img)
        report["psnr_denoised_vs_clean_db"] = psnr(clean, denoised)
    out = Path(args.out)
    report_path = out.with_name(out.name + ".report.txt")
    manifest_path = out.with_name(out.name + ".manifest.txt")
    inputs = [args.input] + ([args.clean] if args.clean else [])
    with xio.OutputSet() as outputs:
        outputs.add(out, xio.encode_pgm(denoised))
        outputs.add(report_path, xio.encode_kv(report))
        outputs.add(manifest_path, xio.encode_kv(
            _manifest("denoise", cfg, inputs, [str(out), str(report_path), str(manifest_path)],
                      cfg["seed"], started)))
        outputs.commit()
    for key, value in report.items():
        print(f"{key}={value:.4f}" if isinstance(value, float) else f"{key}={value}")
    return 0


def cmd_metrics(args):
    writer = csv.writer(sys.stdout, lineterminator="\n")
    if args.image_a or args.image_b:
        if not (args.image_a and args.image_b):
            raise CommandError("--image-a and --image-b go together")
        a, b = xio.read_pgm(args.image_a), xio.read_pgm(args.image_b)
        value = psnr(a, b)
        writer.writerow(["psnr_db"])
        writer.writerow([repr(value)])
        return 0
    if not (args.transform and args.signals):
        raise CommandError("give --transform and --signals, or --image-a and --image-b")
    W = xio.read_matrix(args.transform)
    Y = xio.read_matrix(args.signals)
    if W.shape != (Y.shape[0], Y.shape[0]):
        raise CommandError(f"transform {W.shape} does not match signals {Y.shape}")
    if args.s is None:
        raise CommandError("--s is required")
    if args.codes:
        X = xio.read_matrix(args.codes)
        if X.shape != Y.shape:
            raise CommandError(f"codes {X.shape} do not match signals {Y.shape}")
    else:
        X = code_columns(W @ Y, Constrained(args.s))
    report = metrics_report(W, Y, X, args.s, args.pixels or Y.size)
    writer.writerow(MetricsReport.FIELDS)
    writer.writerow([repr(float(v)) for v in report.as_row()])
    return 0


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="xform", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"%(prog)s {xform.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a transform from a matrix or an image")
    p.add_argument("--matrix", help="signals as a matrix CSV (columns are signals)")
    p.add_argument("--image", help="PGM image to split into patches")
    p.add_argument("--patch", type=int, help="patch side (default 8)")
    p.add_argument("--stride", type=int, help="patch stride (default: patch side)")
    p.add_argument("--keep-mean", dest="keep_mean", action="store_const", const=True,
                   help="do not remove patch means")
    p.add_argument("--s", type=int, help="per-column sparsity (default 11)")
    p.add_argument("--eta", type=float, help="use the l0-penalized objective with this threshold")
    p.add_argument("--lambda0", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--iters", type=int, help="iterations (default 100)")
    p.add_argument("--init", choices=["auto", "dct", "klt", "identity", "random"])
    p.add_argument("--seed", type=int)
    p.add_argument("--order", choices=["update-first", "code-first"])
    p.add_argument("--stop-tol", dest="stop_tol", type=float)
    p.add_argument("--preset", choices=sorted(PRESETS["learn"]))
    p.add_argument("--config")
    p.add_argument("--save-codes", action="store_true", help="also write codes.csv")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("represent", help="learned vs. DCT representation sweep")
    p.add_argument("--image", required=True)
    p.add_argument("--sizes", help="comma-separated patch dimensions, e.g. 16,64")
    p.add_argument("--s", type=int, help="sparsity (default round(0.17 n))")
    p.add_argument("--lambda0", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--init", choices=["dct", "klt", "identity", "random"])
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=sorted(PRESETS["represent"]))
    p.add_argument("--config")
    p.add_argument("--out", help="CSV path (default: standard output)")
    p.set_defaults(func=cmd_represent)

    p = sub.add_parser("denoise", help="denoise a PGM image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="denoised.pgm")
    p.add_argument("--clean", help="reference image for PSNR reporting")
    p.add_argument("--add-noise", dest="add_noise", action="store_const", const=True,
                   help="treat --in as clean and add seeded Gaussian noise of std sigma")
    p.add_argument("--sigma", type=float)
    p.add_argument("--n", type=int, help="patch dimension (perfect square)")
    p.add_argument("--lambda0", type=float)
    p.add_argument("--C", type=float)
    p.add_argument("--outer-iters", dest="outer_iters", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--learn-iters", dest="learn_iters", type=int)
    p.add_argument("--tau-coeff", dest="tau_coeff", type=float)
    p.add_argument("--s-init", dest="s_init", type=int)
    p.add_argument("--xi", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=sorted(PRESETS["denoise"]))
    p.add_argument("--config")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("metrics", help="quality metrics for (W, Y[, X]) or an image pair")
    p.add_argument("--transform")
    p.add_argument("--signals")
    p.add_argument("--codes")
    p.add_argument("--s", type=int)
    p.add_argument("--pixels", type=int, help="pixel count for recovery PSNR (default: Y.size)")
    p.add_argument("--image-a", dest="image_a")
    p.add_argument("--image-b", dest="image_b")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, ValueError, OSError) as exc:
        print(f"xform {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
