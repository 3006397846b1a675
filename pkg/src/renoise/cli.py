"""Command-line front end.

Subcommands: denoise (single image), benchmark (dataset over noise levels),
verify-theory (Monte-Carlo claim suite), gradcheck (finite-difference audit
of the engine). Every run resolves its configuration first, digests it, and
writes artifacts under <out>/<digest-prefix>/; rerunning an identical
config rewrites byte-identical files.

Exit codes: 0 success, 1 invalid configuration or input, 2 runtime failure,
3 acceptance failure (a verify-theory claim or gradcheck tolerance).
"""

import os

if os.environ.get("NAC_SERIAL") == "1":
    # single-threaded numerics; must happen before numpy loads its BLAS
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, "1")

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from .exceptions import ImageFormatError, RenoiseError, SpecError
from .image import ROLE_OBSERVED, ImageBuffer

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3

DEFAULT_SIGMA_LEVELS = (5.0, 10.0, 15.0, 20.0, 25.0)


def _parse_range(text):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as err:
        raise SpecError(f"range must be LO:HI, got {text!r}") from err


def _parse_levels(text):
    try:
        levels = [float(v) for v in text.split(",") if v != ""]
    except ValueError as err:
        raise SpecError(f"levels must be comma-separated numbers, got {text!r}") from err
    if not levels:
        raise SpecError(f"no noise levels given in {text!r}")
    return levels


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="renoise",
        description="Self-supervised per-image denoising toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory (default ./runs)")

    d = sub.add_parser("denoise", help="train on one corrupted image and denoise it")
    common(d)
    d.add_argument("--input", default=None)
    d.add_argument("--no-synthesis", action="store_true",
                   help="input is already noisy; skip corruption and clean-image metrics")
    d.add_argument("--noise", default=None,
                   choices=["gaussian", "poisson", "mixed", "blind-gaussian", "blind-mixed"])
    d.add_argument("--sigma", type=float, default=None)
    d.add_argument("--lambda", dest="lam", type=float, default=None)
    d.add_argument("--sigma-range", default=None, metavar="LO:HI")
    d.add_argument("--lambda-range", default=None, metavar="LO:HI")
    d.add_argument("--blocks", type=int, default=None)
    d.add_argument("--channels", type=int, default=None)
    d.add_argument("--epochs", type=int, default=None)
    d.add_argument("--lr", type=float, default=None)
    d.add_argument("--blind", action="store_true")
    d.add_argument("--fixed-z", action="store_true")
    d.add_argument("--crop", type=int, default=None)

    b = sub.add_parser("benchmark", help="run the experiment over a dataset and noise levels")
    common(b)
    b.add_argument("--dataset", default=None)
    b.add_argument("--noise", default=None,
                   choices=["gaussian", "poisson", "mixed", "blind-gaussian", "blind-mixed"])
    b.add_argument("--sigma", default=None, metavar="S1,S2,...",
                   help="comma-separated noise levels (default 5,10,15,20,25)")
    b.add_argument("--lambda", dest="lam", default=None, metavar="L1,L2,...")
    b.add_argument("--sigma-range", default=None, metavar="LO:HI")
    b.add_argument("--lambda-range", default=None, metavar="LO:HI")
    b.add_argument("--blocks", type=int, default=None)
    b.add_argument("--channels", type=int, default=None)
    b.add_argument("--epochs", type=int, default=None)
    b.add_argument("--lr", type=float, default=None)
    b.add_argument("--blind", action="store_true")
    b.add_argument("--fixed-z", action="store_true")
    b.add_argument("--crop", type=int, default=None)
    b.add_argument("--color", action="store_true", help="keep color channels")

    v = sub.add_parser("verify-theory", help="Monte-Carlo verification of the noise statistics")
    common(v)
    v.add_argument("--trials", type=int, default=None)

    g = sub.add_parser("gradcheck", help="finite-difference audit of engine gradients")
    common(g)
    g.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


_DEFAULTS = {
    "denoise": {"seed": 0, "out": "runs", "input": None, "no_synthesis": False,
                "noise": "gaussian", "sigma": None, "lam": None,
                "sigma_range": None, "lambda_range": None,
                "blocks": 3, "channels": 32, "epochs": 500, "lr": 1e-3,
                "blind": False, "fixed_z": False, "crop": None},
    "benchmark": {"seed": 0, "out": "runs", "dataset": None,
                  "noise": "gaussian", "sigma": None, "lam": None,
                  "sigma_range": None, "lambda_range": None,
                  "blocks": 3, "channels": 32, "epochs": 500, "lr": 1e-3,
                  "blind": False, "fixed_z": False, "crop": None, "color": False},
    "verify-theory": {"seed": 0, "out": "runs", "trials": 1_000_000},
    "gradcheck": {"seed": 0, "out": "runs", "inject_fault": False},
}


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional config file, then explicit flags."""
    cfg = dict(_DEFAULTS[args.command])
    cfg["command"] = args.command
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ImageFormatError("input-not-found", f"{path}: config file not found")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise SpecError(f"{path}: invalid JSON config: {err}") from err
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lam"
            if key not in cfg:
                raise SpecError(f"{path}: unknown config key {key!r}")
            cfg[key] = value
    for key, default in list(cfg.items()):
        if key == "command":
            continue
        arg = getattr(args, key, None)
        if arg is not None and arg is not False:
            cfg[key] = arg
    return cfg


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _noise_spec(cfg: dict, **overrides):
    from .noise import NoiseSpec
    kind = cfg["noise"].replace("-", "_")
    sigma = overrides["sigma"] if "sigma" in overrides else cfg["sigma"]
    lam = overrides["lam"] if "lam" in overrides else cfg["lam"]
    sr = tuple(_parse_range(cfg["sigma_range"])) if isinstance(cfg["sigma_range"], str) \
        else (tuple(cfg["sigma_range"]) if cfg["sigma_range"] else None)
    lr_ = tuple(_parse_range(cfg["lambda_range"])) if isinstance(cfg["lambda_range"], str) \
        else (tuple(cfg["lambda_range"]) if cfg["lambda_range"] else None)
    return NoiseSpec(kind=kind, sigma=sigma, lam=lam, sigma_range=sr,
                     lambda_range=lr_, seed=cfg["seed"]).validate()


def _net_config(cfg: dict, channels: int):
    from .engine import NetworkConfig
    return NetworkConfig(num_residual_blocks=cfg["blocks"],
                         hidden_channels=cfg["channels"],
                         kernel_size=3, input_channels=channels).validate()


def _train_config(cfg: dict):
    from .pipeline import TrainConfig
    return TrainConfig(epochs=cfg["epochs"], learning_rate=cfg["lr"],
                       seed=cfg["seed"], blind=cfg["blind"],
                       fixed_z=cfg["fixed_z"], record_curve=True).validate()


def _run_dir(cfg: dict) -> Path:
    run = Path(cfg["out"]) / config_digest(cfg)
    (run / "denoised").mkdir(parents=True, exist_ok=True)
    (run / "curves").mkdir(parents=True, exist_ok=True)
    return run


def cmd_denoise(cfg: dict) -> int:
    from .imgio import center_crop, load_image, save_image
    from .metrics import EvalReport, EvalRow, psnr, ssim
    from .pipeline import denoise, train_denoiser
    from .rng import child_rng, derive_seed

    if not cfg["input"]:
        raise SpecError("denoise requires --input")
    img = load_image(cfg["input"])
    if cfg["crop"]:
        img = center_crop(img, cfg["crop"])
    image_id = Path(cfg["input"]).stem
    spec = _noise_spec(cfg)
    netcfg = _net_config(cfg, img.channels)

    clean = None
    if cfg["no_synthesis"]:
        y = ImageBuffer(img.data, ROLE_OBSERVED, img.meta)
    else:
        from .noise import make_observed
        clean = img
        y = make_observed(clean, spec, child_rng(cfg["seed"], "observe", image_id))

    traincfg = dataclasses.replace(_train_config(cfg),
                                   seed=derive_seed(cfg["seed"], "train", image_id))
    net, record = train_denoiser(y, spec, netcfg, traincfg, curve_reference=clean)
    result = denoise(net, y)

    run = _run_dir(cfg)
    digest = config_digest(cfg)
    ext = ".pgm" if result.channels == 1 else ".ppm"
    save_image(result, run / "denoised" / f"{image_id}{ext}")
    (run / "curves" / f"{image_id}.csv").write_text(
        f"# config_digest: {digest}\n" + record.to_csv())
    report = EvalReport(seed=cfg["seed"], config_digest=config_digest(cfg))
    report.rows.append(EvalRow(
        image_id=image_id, sigma=spec.sigma, lam=spec.lam,
        psnr=psnr(result, clean) if clean is not None else None,
        ssim=ssim(result, clean) if clean is not None else None))
    (run / "report.json").write_text(report.to_json())
    if clean is not None:
        print(f"{image_id}: noisy {psnr(y, clean):.2f} dB -> denoised {report.rows[0].psnr:.2f} dB")
    else:
        print(f"{image_id}: denoised (no clean reference)")
    print(f"artifacts: {run}")
    return EXIT_OK


def cmd_benchmark(cfg: dict) -> int:
    from .imgio import Dataset
    from .pipeline import run_experiment

    if not cfg["dataset"]:
        raise SpecError("benchmark requires --dataset")
    dataset = Dataset.from_dir(cfg["dataset"],
                               "color" if cfg["color"] else "gray", cfg["crop"])
    _id0, probe = dataset.load(0)
    netcfg = _net_config(cfg, probe.channels)
    traincfg = dataclasses.replace(_train_config(cfg), record_curve=False)

    # one of sigma/lambda sweeps across levels; the other, when the kind
    # needs it, stays fixed at a single value
    kind = cfg["noise"].replace("-", "_")
    if kind == "poisson":
        levels = _parse_levels(str(cfg["lam"])) if cfg["lam"] else list(DEFAULT_SIGMA_LEVELS)
        sigma_fixed = float(cfg["sigma"]) if cfg["sigma"] else None
        specs = [(lv, _noise_spec(cfg, sigma=sigma_fixed, lam=lv)) for lv in levels]
    else:
        levels = _parse_levels(str(cfg["sigma"])) if cfg["sigma"] else list(DEFAULT_SIGMA_LEVELS)
        lam_fixed = float(cfg["lam"]) if cfg["lam"] else None
        specs = [(lv, _noise_spec(cfg, sigma=lv, lam=lam_fixed)) for lv in levels]

    run = _run_dir(cfg)
    digest = config_digest(cfg)
    lines = [f"# config_digest: {digest}", "level,mean_psnr,mean_ssim"]
    failures = 0
    for level, spec in specs:
        report = run_experiment(dataset, spec, netcfg, traincfg, config_digest=digest)
        failures += len(report.errors)
        (run / f"report_level{level:g}.json").write_text(report.to_json())
        lines.append(f"{level:g},{report.mean_psnr:.4f},{report.mean_ssim:.6f}")
        print(f"level {level:g}: mean PSNR {report.mean_psnr:.2f} dB, "
              f"mean SSIM {report.mean_ssim:.4f} ({len(report.rows)} images)")
    (run / "benchmark.csv").write_text("\n".join(lines) + "\n")
    print(f"artifacts: {run}")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_verify_theory(cfg: dict) -> int:
    from .theory import MIN_TRIALS, run_verification_grid

    if cfg["trials"] < MIN_TRIALS:
        raise SpecError(f"trials must be >= {MIN_TRIALS}, got {cfg['trials']}")
    report = run_verification_grid(trials=cfg["trials"], seed=cfg["seed"])
    run = _run_dir(cfg)
    doc = json.loads(report.to_json())
    doc["config_digest"] = config_digest(cfg)
    (run / "theory.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(report.to_table(), end="")
    print(f"artifacts: {run}")
    return EXIT_OK if report.all_passed else EXIT_ACCEPTANCE


def cmd_gradcheck(cfg: dict) -> int:
    from .gradcheck import DEFAULT_TOLERANCE, check_all

    rows = check_all(seed=cfg["seed"], corrupt=cfg["inject_fault"])
    worst = max(r.worst_relative_error for r in rows)
    run = _run_dir(cfg)
    payload = {"rows": [r.to_json_dict() for r in rows], "worst": worst,
               "tolerance": DEFAULT_TOLERANCE, "pass": worst < DEFAULT_TOLERANCE,
               "config_digest": config_digest(cfg)}
    (run / "gradcheck.json").write_text(json.dumps(payload, indent=2) + "\n")
    for r in rows:
        print(f"{r.target:<22} worst rel err {r.worst_relative_error:.3e} "
              f"({r.coordinates_checked} coords)")
    print(f"worst: {worst:.3e} (tolerance {DEFAULT_TOLERANCE:g})")
    print(f"artifacts: {run}")
    return EXIT_OK if worst < DEFAULT_TOLERANCE else EXIT_ACCEPTANCE


_COMMANDS = {
    "denoise": cmd_denoise,
    "benchmark": cmd_benchmark,
    "verify-theory": cmd_verify_theory,
    "gradcheck": cmd_gradcheck,
}


def _emit_error(kind: str, message: str, cfg) -> None:
    record = {"error": kind, "message": message}
    print(json.dumps(record), file=sys.stderr)
    try:
        if cfg is not None and cfg.get("out"):
            out = Path(cfg["out"])
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(record, indent=2) + "\n")
    except OSError:
        pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except ImageFormatError as err:
        _emit_error(err.kind, str(err), cfg)
        return EXIT_VALIDATION
    except (SpecError, RenoiseError) as err:
        kind = "validation" if isinstance(err, SpecError) else type(err).__name__
        _emit_error(kind, str(err), cfg)
        return EXIT_VALIDATION if isinstance(err, SpecError) else EXIT_RUNTIME
    except Exception as err:  # noqa: BLE001 - CLI boundary
        _emit_error(type(err).__name__, str(err), cfg)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
