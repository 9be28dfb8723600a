"""Command-line front end.

Exit codes: 0 success, 2 input error, 3 non-convergence (partial output is
still written), 4 internal error.
"""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .blocks import BlockStructure, apply_block_permutation, cluster_blocks, rcm_blocks, similarity
from .btd import als_refine, from_tedia
from .perturbation import analyze
from .sweep import DiagonalizationResult, TediaConfig, brc_residuals, tedia
from .synth import (CampaignError, ScenarioConfig, add_noise, configs_from_mapping, make_scenario,
                    noise_variance, run_campaign, summary_rows, trial_seeds, write_campaign)
from .tensor import off_norm
from .tucker import hooi_compress

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_INTERNAL = 0, 2, 3, 4


class InputError(Exception):
    pass


def _fail_input(op, exc):
    raise InputError(f"{op}: {exc}") from exc


def _load_tensor(op, path):
    try:
        return io.read_tensor(path)
    except io.FormatError as exc:
        _fail_input(op, exc)


def cmd_decompose(args):
    op = "decompose"
    t = _load_tensor(op, args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = {"input": str(args.input), "input_shape": list(t.shape)}
    n = args.tucker
    if n is None and len(set(t.shape)) > 1:
        n = min(t.shape)
    if n is not None:
        if not 1 <= n <= min(t.shape):
            _fail_input(op, ValueError(f"--tucker {n} must lie in [1, {min(t.shape)}]"))
        tk = hooi_compress(t, n)
        for m, q in enumerate(tk.factors):
            io.write_matrix(out / f"tucker_Q{m + 1}.txt", q)
        log["tucker"] = {"n": n, "fit": tk.fit, "iterations": tk.n_iter}
        t = tk.core
    try:
        cfg = TediaConfig(epsilon=args.epsilon, max_sweeps=args.max_sweeps)
    except ValueError as exc:
        _fail_input(op, exc)
    r = tedia(t, cfg)
    io.write_tensor(out / "tensor.txt", t)
    io.write_tensor(out / "core.txt", r.core)
    io.write_transforms(out, r.transforms)
    brc = float(np.max(np.abs(brc_residuals(r.core)))) if t.shape[0] > 1 else 0.0
    log.update(
        converged=r.converged, sweeps=r.sweeps_run, epsilon=args.epsilon,
        off_norm_history=r.off_norm_history, theta_max_history=r.theta_max_history,
        relative_off_norm=off_norm(r.core) / max(np.linalg.norm(r.core), np.finfo(float).tiny),
        brc_residual=brc, damped_steps=r.n_damped, skipped_steps=r.n_skipped,
    )
    io.write_json(out / "log.json", log)
    print(f"sweeps={r.sweeps_run} converged={r.converged} "
          f"relative_off_norm={log['relative_off_norm']:.3e} brc_residual={brc:.3e}")
    if not r.converged:
        print(f"{op}: no convergence within {args.max_sweeps} sweeps; partial output written",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _load_decomposition(op, directory):
    d = Path(directory)
    try:
        core = io.read_tensor(d / "core.txt")
        tr = io.read_transforms(d)
        t = io.read_tensor(d / "tensor.txt")
    except io.FormatError as exc:
        _fail_input(op, exc)
    return t, core, tr


def cmd_blocks(args):
    op = "blocks"
    t, core, tr = _load_decomposition(op, args.input)
    if core.shape[0] != core.shape[1] or core.shape[1] != core.shape[2]:
        _fail_input(op, ValueError("core must be cubic"))
    f = similarity(core)
    try:
        if args.method == "rcm":
            b = rcm_blocks(f, args.zero_tol)
        else:
            b = cluster_blocks(f, args.stop_ratio, args.n_blocks)
    except ValueError as exc:
        _fail_input(op, exc)
    pcore, ptr = apply_block_permutation(core, tr, b)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_blocks(out / "blocks.txt", b)
    io.write_tensor(out / "core.txt", pcore)
    io.write_tensor(out / "tensor.txt", t)
    io.write_transforms(out, ptr)
    print("sizes: " + " ".join(str(s) for s in b.sizes))
    return EXIT_OK


def cmd_refine(args):
    op = "refine"
    t, core, tr = _load_decomposition(op, args.input)
    try:
        b = io.read_blocks(Path(args.input) / "blocks.txt")
    except io.FormatError as exc:
        _fail_input(op, exc)
    if b.n != core.shape[0]:
        _fail_input(op, ValueError(f"block structure covers {b.n} indices, core has {core.shape[0]}"))
    # the blocks output is already permuted: partition in place
    r = DiagonalizationResult(core=core, transforms=tr, sweeps_run=0, theta_max_history=[],
                              off_norm_history=[], converged=True)
    model = from_tedia(r, BlockStructure(perm=np.arange(b.n), sizes=b.sizes))
    res = als_refine(t, model, max_iter=args.max_iter, tol=args.tol)
    out = Path(args.out)
    io.write_btd(out, res.model)
    io.write_json(out / "als_log.json", {"fit_history": res.fit_history, "iterations": res.n_iter})
    print(f"fit={res.fit:.6e} iterations={res.n_iter}")
    return EXIT_OK


def cmd_perturb(args):
    op = "perturb"
    t = _load_tensor(op, args.input)
    if np.iscomplexobj(t):
        _fail_input(op, ValueError("perturbation analysis covers real tensors only"))
    if len(set(t.shape)) > 1:
        _fail_input(op, ValueError(f"tensor must be cubic, got shape {t.shape}"))
    if args.decomposition:
        try:
            tr = io.read_transforms(args.decomposition)
        except io.FormatError as exc:
            _fail_input(op, exc)
    else:
        tr = tedia(t).transforms
    sigma2 = args.sigma2
    if args.snr_db is not None:
        sigma2 = noise_variance(t, args.snr_db)
    rep = analyze(t, tr, sigma2)
    text = rep.summary()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.dump:
        d = Path(args.dump)
        d.mkdir(parents=True, exist_ok=True)
        io.write_tensor(d / "H1.txt", rep.H1[:, :, None])
        io.write_tensor(d / "H2.txt", rep.H2[:, :, None])
        if rep.cov is not None:
            io.write_tensor(d / "cov.txt", rep.cov[:, :, None])
    return EXIT_OK


def _scenario_config(args):
    kind = {"cp": "cp-diagonal", "block": "block-diagonal"}.get(args.kind, args.kind)
    sizes = tuple(int(s) for s in args.sizes.split(",")) if args.sizes else ()
    snr = math.inf if args.snr_db in (None, "noiseless", "inf") else float(args.snr_db)
    return ScenarioConfig(kind=kind, N=args.N, block_sizes=sizes, c=args.c,
                          snr_db=snr, seed=args.seed)


def cmd_synth(args):
    op = "synth"
    try:
        cfg = _scenario_config(args)
    except ValueError as exc:
        _fail_input(op, exc)
    scen_rng, noise_rng = trial_seeds(cfg.seed, 0)
    sc = make_scenario(cfg, scen_rng)
    x, sigma2 = add_noise(sc.tensor, cfg.snr_db, noise_rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_tensor(out / "tensor.txt", x)
    io.write_tensor(out / "core_true.txt", sc.core)
    io.write_transforms(out / "truth", sc.transforms)
    io.write_blocks(out / "blocks_true.txt", sc.structure)
    io.write_json(out / "scenario.json", {
        "kind": cfg.kind, "N": cfg.N, "block_sizes": list(cfg.block_sizes), "c": cfg.c,
        "snr_db": "noiseless" if math.isinf(cfg.snr_db) else cfg.snr_db,
        "seed": cfg.seed, "sigma2": sigma2,
    })
    print(f"wrote {out / 'tensor.txt'} (N={cfg.N}, sigma2={sigma2:.3e})")
    return EXIT_OK


def cmd_bench(args):
    op = "bench"
    kv = {}
    if args.config:
        try:
            kv.update(io.read_kv(args.config))
        except io.FormatError as exc:
            _fail_input(op, exc)
    for item in args.set or []:
        if "=" not in item:
            _fail_input(op, ValueError(f"--set expects key=value, got {item!r}"))
        key, _, val = item.partition("=")
        kv[key.strip()] = val.strip()
    try:
        cfgs = configs_from_mapping(kv)
    except (ValueError, TypeError) as exc:
        _fail_input(op, exc)
    results = run_campaign(cfgs, threads=args.threads)
    write_campaign(args.out, results)
    sys.stdout.write(summary_rows(results))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="tedia", description="Non-orthogonal tensor diagonalization toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="diagonalize a tensor file")
    d.add_argument("--input", required=True)
    d.add_argument("--epsilon", type=float, default=1e-6)
    d.add_argument("--max-sweeps", type=int, default=1000)
    d.add_argument("--tucker", type=int, default=None, help="compress to N x N x N first")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decompose)

    b = sub.add_parser("blocks", help="detect the block structure of a decompose output")
    b.add_argument("--input", required=True, help="decompose output directory")
    b.add_argument("--method", choices=("cluster", "rcm"), default="cluster")
    b.add_argument("--stop-ratio", type=float, default=0.1)
    b.add_argument("--n-blocks", type=int, default=None)
    b.add_argument("--zero-tol", type=float, default=1e-8)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_blocks)

    r = sub.add_parser("refine", help="ALS refinement of a blocks output")
    r.add_argument("--input", required=True, help="blocks output directory")
    r.add_argument("--max-iter", type=int, default=200)
    r.add_argument("--tol", type=float, default=1e-10)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_refine)

    q = sub.add_parser("perturb", help="first-order perturbation report")
    q.add_argument("--input", required=True, help="tensor file")
    q.add_argument("--decomposition", default=None, help="decompose output directory to analyze")
    q.add_argument("--sigma2", type=float, default=1.0)
    q.add_argument("--snr-db", type=float, default=None, help="derive sigma2 from this SNR")
    q.add_argument("--out", default=None)
    q.add_argument("--dump", default=None, help="directory for H1/H2/cov matrices")
    q.set_defaults(func=cmd_perturb)

    s = sub.add_parser("synth", help="generate a synthetic scenario")
    s.add_argument("--kind", choices=("cp", "block", "cp-diagonal", "block-diagonal"), default="cp")
    s.add_argument("--N", type=int, default=5)
    s.add_argument("--sizes", default=None, help="comma-separated block sizes")
    s.add_argument("--c", type=float, default=0.0)
    s.add_argument("--snr-db", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    k = sub.add_parser("bench", help="run a Monte Carlo campaign")
    k.add_argument("--config", default=None, help="key=value campaign file")
    k.add_argument("--set", action="append", help="extra key=value setting (repeatable)")
    k.add_argument("--threads", type=int, default=None)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CampaignError as exc:
        print(f"error: {args.command}: run_campaign: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:
        print(f"internal error in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
