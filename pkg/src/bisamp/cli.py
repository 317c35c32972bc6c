"""Command-line interface.

Subcommands: degrade, map, rto, myula, gibbs, diagnose, demo1d, run,
compare. Configuration comes from flat `key = value` files or shipped
presets; BISAMP_SEED and BISAMP_WORKERS override seed and worker count.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .chainio import ChainFormatError, load_chain, read_pgm, save_chain, write_pgm
from .config import (
    ExperimentConfig,
    apply_env_overrides,
    config_from_text,
    format_config,
    load_config_file,
    load_preset,
    preset_names,
)
from .core import Image, RngStream
from .diagnostics import acf, psnr, ssim, summarize
from .experiment import (
    CSV_SCHEMA_LINE,
    DEGRADE_STREAM_INDEX,
    admm_settings_from_config,
    build_operator,
    compare_point_estimates,
    load_observation,
    observation_image,
    resolve_truth,
    run_experiment,
    save_observation,
)
from .interval import IntervalModel, rto_interval_density, smoothed_posterior_pdf, truncated_posterior_pdf
from .operators import PowerIterationError, degrade, operator_norm_sq
from .regularizers import PriorSpec
from .samplers import (
    GibbsSettings,
    MyulaSettings,
    RtoSettings,
    SamplerError,
    gibbs_sample,
    map_estimate,
    myula_defaults,
    myula_sample,
    rto_sample,
)
from .solvers import SolverError


def _load_cfg(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "preset", None):
        cfg = load_preset(args.preset)
    if getattr(args, "config", None):
        cfg = load_config_file(args.config, base=cfg)
    for item in getattr(args, "set", None) or []:
        cfg = config_from_text(item, base=cfg)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=str(args.out))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return apply_env_overrides(cfg)


def _cmd_degrade(args) -> int:
    cfg = _load_cfg(args)
    if args.op:
        cfg = replace(cfg, problem={"blur": "deblur", "inpaint": "inpaint"}[args.op])
    if args.kernel:
        cfg = replace(cfg, kernel=args.kernel)
    if args.mask:
        cfg = replace(cfg, mask=args.mask)
    if args.sigma is not None:
        cfg = replace(cfg, sigma=args.sigma)
    if args.image:
        cfg = replace(cfg, image=args.image)
    truth = resolve_truth(cfg)
    op = build_operator(cfg, truth.height, truth.width)
    obs = degrade(op, truth, cfg.sigma, RngStream(cfg.seed, DEGRADE_STREAM_INDEX))
    save_observation(args.obs_out, obs, op)
    if args.preview:
        write_pgm(observation_image(obs, op), args.preview, bitdepth=16)
    print(f"wrote {args.obs_out} (m={obs.size}, sigma={obs.noise_std})")
    return 0


def _cmd_map(args) -> int:
    cfg = _load_cfg(args)
    obs, op = load_observation(args.obs)
    prior = PriorSpec(cfg.gamma, cfg.constraint, cfg.alpha)
    img = map_estimate(obs, op, prior, admm_settings_from_config(cfg))
    write_pgm(img, args.out, bitdepth=16)
    print(f"wrote {args.out}")
    return 0


def _cmd_sample(args, which: str) -> int:
    cfg = _load_cfg(args)
    obs, op = load_observation(args.obs)
    prior = PriorSpec(cfg.gamma, cfg.constraint, cfg.alpha)
    admm = admm_settings_from_config(cfg)
    if which == "rto":
        chain = rto_sample(obs, op, prior, RtoSettings(
            n_samples=cfg.rto_n_samples, admm=admm, worker_count=cfg.workers,
            seed=cfg.seed, init=cfg.rto_init))
    elif which == "myula":
        alpha_ref, delta_ref = myula_defaults(operator_norm_sq(op), obs.noise_std)
        chain = myula_sample(obs, op, prior, MyulaSettings(
            total_iters=cfg.myula_total_iters,
            delta=cfg.myula_delta or delta_ref,
            alpha1=cfg.myula_alpha1 or alpha_ref,
            alpha2=cfg.myula_alpha2 or alpha_ref,
            burn_in=cfg.myula_burn_in, thinning=cfg.myula_thinning,
            n_pd=cfg.pd_n_iters, seed=cfg.seed))
    else:
        chain = gibbs_sample(obs, op, prior, GibbsSettings(
            n_samples=cfg.gibbs_n_samples, admm=admm, seed=cfg.seed,
            a_lambda=cfg.gibbs_a_lambda, b_lambda=cfg.gibbs_b_lambda,
            a_gamma=cfg.gibbs_a_gamma, b_gamma=cfg.gibbs_b_gamma))
    save_chain(chain, args.out)
    print(f"wrote {args.out} ({len(chain)} samples, {chain.meta.wall_seconds:.1f}s)")
    return 0


def _cmd_diagnose(args) -> int:
    chain = load_chain(args.chain)
    ref = read_pgm(args.ref)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(chain)
    operator = None
    if args.obs:
        _, operator = load_observation(args.obs)
    max_lag = args.max_lag or max(1, min(100, len(chain) // 10))
    if args.basis == "fourier" and operator is None:
        # no operator bundle: fall back to the lowest nonzero frequencies
        h, w = chain.height, chain.width
        modes = [(0, 1), (1, 0), (1, 1), (0, 2), (2, 0), (1, 2), (2, 1), (0, 0)]
        modes = [(r % h, c % w) for r, c in modes]
        curves = acf(chain, basis="fourier", directions=modes, max_lag=max_lag)
    else:
        curves = acf(chain, basis=args.basis, directions=args.directions,
                     operator=operator, max_lag=max_lag)

    write_pgm(summary.mmse, out / "mmse.pgm", bitdepth=16)
    scale = float(np.max(summary.std.data)) or 1.0
    write_pgm(summary.std.with_data(summary.std.data / scale), out / "std.pgm", bitdepth=16)
    (out / "std_scale.txt").write_text(repr(scale) + "\n")

    def csv(path, header, rows):
        path.write_text("\n".join([CSV_SCHEMA_LINE, header, *rows]) + "\n")

    csv(out / "metrics.csv", "artifact,psnr_db,ssim",
        [f"mmse,{psnr(summary.mmse, ref):.10g},{ssim(summary.mmse, ref):.10g}"])
    csv(out / "acf.csv", "direction,lag,value,band",
        [f"{c.direction_label},{lag},{v:.10g},{c.confidence_band:.10g}"
         for c in curves for lag, v in zip(c.lags, c.values)])
    csv(out / "relerr.csv", "sample,rel_err",
        [f"{i},{v:.10g}" for i, v in enumerate(summary.rel_err)])
    names = sorted(chain.traces)
    csv(out / "traces.csv", ",".join(["sample"] + names),
        [",".join([str(i)] + [f"{chain.traces[t][i]:.10g}" for t in names])
         for i in range(len(chain))])
    print(f"wrote diagnostics to {out}")
    return 0


def _cmd_demo1d(args) -> int:
    m = IntervalModel(a=args.a, b=args.b, y=args.y, sigma=args.sigma)
    den = rto_interval_density(m)
    lo, hi = m.a - 4 * m.sigma, m.b + 4 * m.sigma
    grid = np.linspace(lo, hi, args.grid)
    trunc = truncated_posterior_pdf(m, grid)
    smooth = smoothed_posterior_pdf(m, args.alpha, grid)
    cont = den.continuous_pdf(grid)
    lines = [CSV_SCHEMA_LINE,
             f"# atom_a={den.atom_a:.10g} atom_b={den.atom_b:.10g}",
             "x,truncated_pdf,smoothed_pdf,clamp_continuous_pdf"]
    for i, x in enumerate(grid):
        lines.append(f"{x:.10g},{trunc[i]:.10g},{smooth[i]:.10g},{cont[i]:.10g}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out} (atom_a={den.atom_a:.5f}, atom_b={den.atom_b:.5f})")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_cfg(args)
    report = run_experiment(cfg)
    mmse_row = next(r for r in report.metrics if r["artifact"] == "mmse")
    print(f"run complete: out={report.out_dir} samples={len(report.chain)} "
          f"mmse psnr={mmse_row['psnr_db']:.2f}dB ssim={mmse_row['ssim']:.3f}")
    return 0


def _cmd_compare(args) -> int:
    ref = read_pgm(args.ref)
    rows = compare_point_estimates(args.a, args.b, ref, out_csv=args.out)
    for r in rows:
        print(f"{r['source']}/{r['artifact']}: psnr={r['psnr_db']:.2f}dB ssim={r['ssim']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bisamp",
                                description="Sampling-based UQ for linear imaging inverse problems")
    sub = p.add_subparsers(dest="command", required=True)

    def add_cfg_args(sp, with_out=True):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--preset", help=f"one of: {', '.join(preset_names())}")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a single config key (repeatable)")
        sp.add_argument("--seed", type=int, default=None)
        if with_out:
            sp.add_argument("--out", required=True)

    sp = sub.add_parser("degrade", help="apply the forward operator and add noise")
    add_cfg_args(sp, with_out=False)
    sp.add_argument("--op", choices=["blur", "inpaint"])
    sp.add_argument("--image", help="ground-truth PGM (default: built-in phantom)")
    sp.add_argument("--kernel", help="kernel file or uniform<k>")
    sp.add_argument("--mask", help="mask PGM or 'blocks'")
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--obs-out", required=True, help="output observation bundle (.npz)")
    sp.add_argument("--preview", help="optional PGM preview of the degraded image")
    sp.set_defaults(func=_cmd_degrade)

    sp = sub.add_parser("map", help="MAP estimate from an observation bundle")
    add_cfg_args(sp)
    sp.add_argument("--obs", required=True)
    sp.set_defaults(func=_cmd_map)

    for name, help_text in (("rto", "independent perturb-and-solve sampler"),
                            ("myula", "proximal Langevin sampler"),
                            ("gibbs", "hierarchical sampler (learns lambda, gamma)")):
        sp = sub.add_parser(name, help=help_text)
        add_cfg_args(sp)
        sp.add_argument("--obs", required=True)
        sp.set_defaults(func=lambda a, which=name: _cmd_sample(a, which))

    sp = sub.add_parser("diagnose", help="summaries and ACF curves from a chain file")
    sp.add_argument("--chain", required=True)
    sp.add_argument("--ref", required=True, help="reference PGM for metrics")
    sp.add_argument("--basis", choices=["fourier", "pixel"], default="pixel")
    sp.add_argument("--obs", help="observation bundle (for eigenvalue-ranked directions)")
    sp.add_argument("--directions", type=int, default=8)
    sp.add_argument("--max-lag", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_diagnose)

    sp = sub.add_parser("demo1d", help="scalar interval model densities as CSV")
    sp.add_argument("--a", type=float, default=0.0)
    sp.add_argument("--b", type=float, default=1.0)
    sp.add_argument("--y", type=float, default=0.8)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--alpha", type=float, default=0.01)
    sp.add_argument("--grid", type=int, default=512)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_demo1d)

    sp = sub.add_parser("run", help="full pipeline: degrade, sample, diagnose")
    add_cfg_args(sp, with_out=False)
    sp.add_argument("--out", help="output directory (overrides config)")
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("compare", help="PSNR/SSIM table for two run directories")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, ChainFormatError, SolverError, SamplerError,
            PowerIterationError) as e:
        module = type(e).__module__.rsplit(".", 1)[-1]
        print(f"bisamp {args.command} failed [{module}.{type(e).__name__}]: {e}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
