"""Command-line surface tying the pipeline together.

Exit codes: 0 on success, 1 on usage errors, 2 on data or solver errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict

import numpy as np

from .errors import DimMismatchError, RwregError
from .experiments import (
    WORKED_EXAMPLES,
    BumpSpec,
    random_bump_spec,
    run_synth_experiment,
)
from .formats import (
    BY_FIELD_MAX,
    BY_MAX_ENTROPY,
    HeatmapStyle,
    read_dist_field,
    read_pgm,
    write_dist_field,
    write_heatmap,
    write_pgm,
)
from .grid import ScalarImage
from .solver import RegistrationParams, register
from .uncertainty import compute_uncertainty_maps, label_images


def _add_registration_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--radius", type=int, default=2, help="displacement search radius")
    parser.add_argument("--sigma", type=float, default=10.0, help="likelihood width (intensity units)")
    parser.add_argument("--beta", type=float, default=0.05, help="edge-weight contrast sensitivity")
    parser.add_argument("--gamma", type=float, default=1.0, help="data-fidelity weight")
    parser.add_argument("--w-min", type=float, default=1e-6, help="edge-weight floor")
    parser.add_argument("--cg-tol", type=float, default=1e-8, help="CG residual tolerance")
    parser.add_argument("--cg-max-iter", type=int, default=None, help="CG iteration cap")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="force sequential, bit-reproducible solves",
    )


def _params_from_args(args) -> RegistrationParams:
    return RegistrationParams(
        radius=args.radius,
        sigma=args.sigma,
        beta=args.beta,
        gamma=args.gamma,
        w_min=args.w_min,
        cg_tol=args.cg_tol,
        cg_max_iter=args.cg_max_iter,
        deterministic=args.deterministic,
    )


def _cmd_register(args) -> int:
    fixed = read_pgm(args.fixed)
    moving = read_pgm(args.moving)
    params = _params_from_args(args)
    field, dset = register(fixed, moving, params)
    write_dist_field(field, dset, args.out)
    echo = {
        "command": "register",
        "fixed": args.fixed,
        "moving": args.moving,
        "out": args.out,
        "params": asdict(params),
        "dims": list(field.dims),
        "K": field.K,
    }
    print(json.dumps(echo, indent=2))
    return 0


def _grid_stats(grid: np.ndarray) -> dict:
    return {
        "mean": float(grid.mean()),
        "max": float(grid.max()),
        "min": float(grid.min()),
    }


def _cmd_analyze(args) -> int:
    field, dset = read_dist_field(args.dist)
    moving = read_pgm(args.moving)
    maps = compute_uncertainty_maps(field, moving, dset, args.bin_width)
    mode_img, mli_img = label_images(field, moving, dset, args.bin_width)

    maxval = 255 if float(moving.values.max()) <= 255 else 65535
    prefix = args.out_prefix
    write_pgm(ScalarImage(mode_img), f"{prefix}_mode.pgm", maxval)
    write_pgm(ScalarImage(mli_img), f"{prefix}_mli.pgm", maxval)
    write_pgm(
        ScalarImage(np.where(maps.disagreement, 255.0, 0.0)),
        f"{prefix}_disagreement.pgm",
    )
    entropy_style = HeatmapStyle(BY_MAX_ENTROPY, label_count=dset.K)
    field_style = HeatmapStyle(BY_FIELD_MAX)
    write_heatmap(maps.transform_entropy, entropy_style, f"{prefix}_transform_entropy.ppm")
    write_heatmap(maps.label_entropy, entropy_style, f"{prefix}_label_entropy.ppm")
    write_heatmap(maps.label_std, field_style, f"{prefix}_label_std.ppm")
    write_heatmap(maps.label_iqr, field_style, f"{prefix}_label_iqr.ppm")

    stats = {
        "command": "analyze",
        "dims": list(field.dims),
        "K": field.K,
        "bin_width": args.bin_width,
        "max_entropy_bits": math.log2(field.K),
        "voxel_count": int(np.prod(field.dims)),
        "count_disagreement": int(maps.disagreement.sum()),
        "maps": {
            "transform_entropy": _grid_stats(maps.transform_entropy),
            "label_entropy": _grid_stats(maps.label_entropy),
            "label_variance": _grid_stats(maps.label_variance),
            "label_std": _grid_stats(maps.label_std),
            "label_iqr": _grid_stats(maps.label_iqr),
        },
    }
    with open(f"{prefix}_stats.json", "w", encoding="ascii") as handle:
        json.dump(stats, handle, indent=2)
        handle.write("\n")
    print(json.dumps(stats, indent=2))
    return 0


def _cmd_reproduce(args) -> int:
    check = WORKED_EXAMPLES[args.figure]()
    payload = {"figure": args.figure, **check.to_dict()}
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"worked example {args.figure}: {check.name}")
        for key, value in check.quantities.items():
            status = "PASS" if check.passed.get(key, True) else "FAIL"
            if key in check.expected:
                print(
                    f"  {key} = {value:.6g} (expected {check.expected[key]:.6g} "
                    f"+/- {check.tolerance[key]:.3g}) {status}"
                )
            else:
                print(f"  {key} = {value:.6g}")
    return 0 if check.all_passed else 2


def _load_bump_spec(path: str, dims, seed_override) -> BumpSpec:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if "random" in data:
        rand = data["random"]
        seed = seed_override if seed_override is not None else int(data.get("seed", 0))
        return random_bump_spec(
            dims,
            count=int(rand["count"]),
            max_amplitude=float(rand["max_amplitude"]),
            width_range=(
                float(rand.get("min_width", 4.0)),
                float(rand.get("max_width", 8.0)),
            ),
            seed=seed,
        )
    spec = BumpSpec.from_dict(data)
    if seed_override is not None:
        spec = BumpSpec(spec.centers, spec.amplitudes, spec.widths, seed=seed_override)
    return spec


def _cmd_synth(args) -> int:
    fixed = read_pgm(args.image)
    spec = _load_bump_spec(args.spec, fixed.dims, args.seed)
    params = _params_from_args(args)
    report = run_synth_experiment(fixed, spec, params, args.bin_width)
    text = report.to_json()
    with open(args.out_report, "w", encoding="ascii") as handle:
        handle.write(text)
        handle.write("\n")
    synth = report.synth
    print(
        "synth experiment: "
        f"identity MAE {synth.identity_error.mean_abs:.4g}, "
        f"mode-label MAE {synth.mode_label_error.mean_abs:.4g}, "
        f"MLI MAE {synth.mli_error.mean_abs:.4g}, "
        f"disagreement {synth.count_disagreement}/{synth.voxel_count}"
    )
    return 0


def _cmd_compare(args) -> int:
    gt = read_pgm(args.gt)
    est = read_pgm(args.est)
    if gt.dims != est.dims:
        raise DimMismatchError(
            f"--gt dims {gt.dims} do not match --est dims {est.dims}"
        )
    err = np.abs(est.values - gt.values)
    lines = ["i,j,gt,est,abs_err"]
    for (i, j), g in np.ndenumerate(gt.values):
        lines.append(
            f"{i},{j},{float(g)!r},{float(est.values[i, j])!r},{float(err[i, j])!r}"
        )
    with open(args.out, "w", encoding="ascii") as handle:
        handle.write("\n".join(lines))
        handle.write("\n")
    print(f"mean abs error {float(err.mean())!r}, max abs error {float(err.max())!r}")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; argparse's default is 2, which we reserve for
    # data/solver failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rwreg",
        description="Probabilistic image registration with label-space uncertainty analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_reg = sub.add_parser("register", help="estimate a per-voxel displacement distribution")
    p_reg.add_argument("--fixed", required=True, help="fixed image (binary PGM)")
    p_reg.add_argument("--moving", required=True, help="moving image (binary PGM)")
    p_reg.add_argument("--out", required=True, help="output distribution file (PIRD)")
    _add_registration_flags(p_reg)
    p_reg.set_defaults(func=_cmd_register)

    p_ana = sub.add_parser("analyze", help="uncertainty maps and label images from a PIRD file")
    p_ana.add_argument("--dist", required=True, help="distribution file (PIRD)")
    p_ana.add_argument("--moving", required=True, help="moving image the labels come from")
    p_ana.add_argument("--bin-width", type=float, default=0.0, help="label bin width (0 = exact)")
    p_ana.add_argument("--out-prefix", required=True, help="prefix for all output files")
    p_ana.set_defaults(func=_cmd_analyze)

    p_rep = sub.add_parser("reproduce", help="run a built-in worked example")
    p_rep.add_argument(
        "--figure",
        type=int,
        required=True,
        choices=sorted(WORKED_EXAMPLES),
        help="worked-example id",
    )
    p_rep.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p_rep.set_defaults(func=_cmd_reproduce)

    p_syn = sub.add_parser("synth", help="synthetic-distortion experiment with known ground truth")
    p_syn.add_argument("--image", required=True, help="image to distort and register (PGM)")
    p_syn.add_argument("--spec", required=True, help="bump-deformation spec (JSON)")
    p_syn.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p_syn.add_argument("--bin-width", type=float, default=1.0, help="label bin width")
    p_syn.add_argument("--out-report", required=True, help="output report (JSON)")
    _add_registration_flags(p_syn)
    p_syn.set_defaults(func=_cmd_synth)

    p_cmp = sub.add_parser("compare", help="per-voxel error table between two images")
    p_cmp.add_argument("--gt", required=True, help="ground-truth image (PGM)")
    p_cmp.add_argument("--est", required=True, help="estimate image (PGM)")
    p_cmp.add_argument("--out", required=True, help="output table (CSV)")
    p_cmp.set_defaults(func=_cmd_compare)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (RwregError, OSError) as exc:
        print(f"rwreg: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
