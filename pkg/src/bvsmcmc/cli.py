"""Command-line runner: ``bvsmcmc run``, ``bvsmcmc compare`` and ``bvsmcmc simulate``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from .config import (
    DEFAULTS_PROVENANCE,
    OUTPUT_DIR_ENV,
    ConfigError,
    DataConfig,
    ExperimentConfig,
    load_config,
)
from .datagen import generate_yang, write_csv
from .diagnostics import RunOutput, pip_mse, read_pips_csv, relative_log10_mse, write_run
from .linmodel import enumerate_posterior
from .samplers import init_ensemble, run_chains

__all__ = ["run_experiment", "compare_samplers", "main"]

log = logging.getLogger("bvsmcmc")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _resolve_output_dir(cfg: ExperimentConfig, override=None) -> Path:
    out = override or cfg.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "bvsmcmc_out"
    return Path(out)


def run_experiment(cfg: ExperimentConfig, output_dir=None, base_dir=None, write=True) -> RunOutput:
    """Build data and prior from ``cfg``, run the sampler and write the run artifacts."""
    data = cfg.data.build(base_dir)
    prior = cfg.prior.build(data.p)
    ens = init_ensemble(
        data, prior, cfg.L, cfg.seed, tau=cfg.target_accept, s=cfg.s, pi0=cfg.pi0, eps=cfg.eps
    )
    log.info("running %s: n=%d p=%d L=%d iterations=%d", cfg.sampler, data.n, data.p, cfg.L, cfg.iterations)
    out = run_chains(ens, cfg.run_config(), data, prior)
    if write:
        meta = {
            "n": data.n,
            "p": data.p,
            "seed": cfg.seed,
            "prior": {"g": prior.g, "v_form": prior.v_form, "model_prior": prior.model_prior,
                      "h": prior.h, "a": prior.a, "b": prior.b},
            "target_accept": cfg.target_accept if cfg.sampler not in ("ads", "parni_kw") else None,
            "config": cfg.to_dict(),
            "defaults": DEFAULTS_PROVENANCE,
        }
        dest = _resolve_output_dir(cfg, output_dir)
        write_run(dest, out, meta, data.column_names)
        log.info("wrote %s", dest)
    return out


def compare_samplers(configs, reference, output_dir=None, seeds: int = 1, base_dir=None) -> list[dict]:
    """Run every config over ``seeds`` consecutive seeds and score PIPs against ``reference``.

    ``reference`` is ``"exact"`` (full enumeration, p <= 20) or a path to a
    pips.csv file.  Relative columns are log10 ratios of median MSEs against
    the first config; negative values mean the row beats that baseline.
    """
    configs = list(configs)
    if not configs:
        raise ConfigError("compare needs at least one config")
    if seeds < 1:
        raise ConfigError(f"seeds must be at least 1, got {seeds}")
    if reference is None:
        raise ConfigError("compare needs a reference: 'exact' or a pips.csv path")
    first = configs[0]
    for c in configs[1:]:
        if c.data != first.data or c.prior != first.prior:
            raise ConfigError("all compared configs must share the same data and prior sections")
    data = first.data.build(base_dir)
    prior = first.prior.build(data.p)
    if str(reference) == "exact":
        ref = enumerate_posterior(data, prior).pips
    else:
        ref = read_pips_csv(reference)
    if ref.size != data.p:
        raise ConfigError(f"reference has {ref.size} PIPs, data has p={data.p}")

    rows = []
    seen = {}
    for cfg in configs:
        imp, unimp = [], []
        for k in range(seeds):
            c = cfg.replace(seed=cfg.seed + k, keep_trace=False)
            ens = init_ensemble(data, prior, c.L, c.seed, tau=c.target_accept, s=c.s, pi0=c.pi0, eps=c.eps)
            out = run_chains(ens, c.run_config(), data, prior)
            a, b = pip_mse(out.pip_estimate, ref)
            imp.append(a)
            unimp.append(b)
        seen[cfg.sampler] = seen.get(cfg.sampler, 0) + 1
        label = cfg.sampler if seen[cfg.sampler] == 1 else f"{cfg.sampler}#{seen[cfg.sampler]}"
        rows.append(
            {
                "sampler": label,
                "mse_important": _median(imp),
                "mse_unimportant": _median(unimp),
            }
        )
    base = rows[0]
    for r in rows:
        for key in ("important", "unimportant"):
            cand, bl = r[f"mse_{key}"], base[f"mse_{key}"]
            r[f"log10_rel_{key}"] = (
                relative_log10_mse(cand, bl) if cand is not None and bl is not None and cand > 0 and bl > 0 else None
            )
    if output_dir is not None:
        _write_table(Path(output_dir), rows)
    return rows


def _median(values):
    vals = [v for v in values if v is not None]
    return statistics.median(vals) if vals else None


def _write_table(out: Path, rows) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "comparison.csv"
    cols = ["sampler", "mse_important", "mse_unimportant", "log10_rel_important", "log10_rel_unimportant"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([r["sampler"], *("" if r[c] is None else repr(float(r[c])) for c in cols[1:])])
    return path


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bvsmcmc", description="Adaptive MCMC samplers for Bayesian variable selection.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a YAML config")
    run.add_argument("config", help="YAML experiment config")
    run.add_argument("--seed", type=int, help="override the chain seed")
    run.add_argument("--output-dir", help=f"output directory (default: config, then ${OUTPUT_DIR_ENV})")

    cmp_ = sub.add_parser("compare", help="score several configs against a reference")
    cmp_.add_argument("configs", nargs="+", help="YAML experiment configs; the first is the baseline")
    cmp_.add_argument("--reference", required=True, help="'exact' or a pips.csv file")
    cmp_.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds per config")
    cmp_.add_argument("--seed", type=int, help="override the base seed of every config")
    cmp_.add_argument("--output-dir", help="where comparison.csv is written")

    sim = sub.add_parser("simulate", help="write a simulated dataset to CSV")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--snr", type=float, required=True)
    sim.add_argument("--sigma2", type=float, default=1.0)
    sim.add_argument("--rho", type=float, default=0.6)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="CSV path; response column is 'y'")
    return ap


def _error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = cfg.replace(seed=args.seed)
            out = run_experiment(cfg, args.output_dir, base_dir=Path(args.config).parent)
            print(
                json.dumps(
                    {
                        "sampler": out.sampler,
                        "output_dir": str(_resolve_output_dir(cfg, args.output_dir)),
                        "acceptance_rate": out.acceptance_rate,
                        "mean_asjd": out.mean_asjd,
                    }
                )
            )
        elif args.command == "compare":
            cfgs = [load_config(c) for c in args.configs]
            if args.seed is not None:
                cfgs = [c.replace(seed=args.seed) for c in cfgs]
            out_dir = args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "bvsmcmc_out"
            rows = compare_samplers(
                cfgs, args.reference, out_dir, seeds=args.seeds, base_dir=Path(args.configs[0]).parent
            )
            for r in rows:
                print(json.dumps(r))
        else:
            spec = DataConfig(
                preset=None, n=args.n, p=args.p, snr=args.snr, sigma2=args.sigma2, rho=args.rho, seed=args.seed
            )
            data, _ = generate_yang(spec.sim_spec())
            write_csv(args.out, data)
    except ConfigError as e:
        _error("config", str(e))
        return EXIT_USAGE
    except (OSError, ValueError, np.linalg.LinAlgError) as e:
        _error(type(e).__name__, str(e))
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
