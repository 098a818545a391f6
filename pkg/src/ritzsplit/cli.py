"""Command-line runner for the benchmark catalog.

Examples
--------
    ritzsplit list
    ritzsplit run exp_alpha1 --adaptive --seeds 0.01 --repeats 5 --out runs/exp1
    ritzsplit run --config cfg.json --iters 3
    ritzsplit render runs/exp1/repeat_00/pointwise_iter10.csv err.pgm

Exit status is 0 on success, 2 on a configuration error and 3 when a run
aborts on a numerical error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import artifacts, catalog, kernels, network, ritz, splitting
from . import constraints as C
from .tensor_ad import NumericalError, eval_jet

log = logging.getLogger("ritzsplit")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
HIST_SAMPLES = 10 ** 6
HIST_BINS = 100
ERROR_COLUMNS = ("iteration", "rel_L2", "rel_H2", "grad_err")


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    """One invocation of ``run``; ``None`` fields fall back to the case defaults."""

    case: str
    points: int | None = None
    boundary_points: int | None = None
    seeds: float | None = None
    adaptive: bool | None = None
    iters: int | None = None
    repeats: int | None = None
    seed: int = 0
    mode: str = splitting.DEEP_RITZ
    lam: float | None = None
    out: str = "runs"
    parallel_repeats: int = 1
    backend: str | None = None
    hist_samples: int = HIST_SAMPLES

    def resolve(self):
        """Check overrides against the case; return ``(case, spec, SolverConfig, repeats)``."""
        try:
            case = catalog.get(self.case)
        except KeyError as e:
            raise ConfigError(e.args[0]) from None

        def positive_int(name, v):
            if v is not None and (isinstance(v, bool) or not isinstance(v, int) or v < 1):
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")

        for name in ("points", "boundary_points", "iters", "repeats", "parallel_repeats",
                     "hist_samples"):
            positive_int(name, getattr(self, name))
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.seeds is not None and not (isinstance(self.seeds, (int, float))
                                           and 0 < self.seeds <= 1):
            raise ConfigError(f"seeds must be a fraction in (0, 1], got {self.seeds!r}")
        if self.lam is not None and not (isinstance(self.lam, (int, float)) and self.lam > 0):
            raise ConfigError(f"lambda must be positive, got {self.lam!r}")
        if self.adaptive is not None and not isinstance(self.adaptive, bool):
            raise ConfigError("adaptive must be a boolean")
        if self.mode not in (splitting.DEEP_RITZ, splitting.PINN_BASELINE):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == splitting.PINN_BASELINE and case.spec.kind != C.MONGE_AMPERE:
            raise ConfigError(f"pinn_baseline needs a Monge-Ampere case, {case.name} is "
                              f"{case.spec.kind}")
        if self.backend is not None and self.backend not in kernels.BACKENDS:
            raise ConfigError(f"backend must be one of {kernels.BACKENDS}")

        spec = case.spec if self.lam is None else dataclasses.replace(case.spec, lam=float(self.lam))
        adaptive = case.adaptive if self.adaptive is None else self.adaptive
        if self.mode == splitting.PINN_BASELINE:
            adaptive = False
        cfg = splitting.SolverConfig(
            n_c=self.points or case.n_c,
            n_b=self.boundary_points or case.n_b,
            n_iters=self.iters or case.n_iters,
            adaptive=adaptive,
            mode=self.mode,
            backend=self.backend,
        )
        if self.seeds is not None:
            cfg.seed_fraction = float(self.seeds)
        return case, spec, cfg, self.repeats or case.n_repeats


def _prepare_out(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ConfigError(f"output directory {out} is not writable: {e}") from None
    return out


# ----------------------------------------------------------------------------
# one repeat


def _map_samples(net, x, backend):
    return eval_jet(net, x, order=1, backend=backend, chunk=100_000).grad


def run_repeat(config, r, out):
    """Run repeat ``r`` into ``out/repeat_{r:02d}``; returns per-repeat series for quantiles."""
    case, spec, cfg, repeats = config.resolve()
    train_ss, hist_ss = np.random.SeedSequence(config.seed).spawn(repeats)[r].spawn(2)
    rng = np.random.default_rng(train_ss)
    arch = network.Architecture(case.arch_kind, network.DEFAULT_WIDTHS, "softplus")
    d = Path(out) / f"repeat_{r:02d}"
    d.mkdir(parents=True, exist_ok=True)

    samples = extent = None
    if spec.transport:
        samples = spec.mu0_sampler(config.hist_samples, np.random.default_rng(hist_ss))
        lo, hi = spec.target.bbox()
        extent = (lo[0], hi[0], lo[1], hi[1])

    hist_path = d / "history.csv"
    ritz.write_history(hist_path, [])
    with open(d / "errors.csv", "w", newline="") as fh:
        fh.write(",".join(ERROR_COLUMNS) + "\n")
    if spec.transport:
        (d / "pushforward.csv").write_text("iteration,inside_fraction,x0,x1,y0,y1\n")

    series = {"total": [], "pde_term": [], "bc_term": [], "rel_L2": [], "rel_H2": [],
              "grad_err": [], "inside_fraction": []}
    t0 = time.perf_counter()
    timing = []

    def on_iteration(k, net, err, hist):
        ritz.write_history(hist_path, hist, append=True)
        for h in hist:
            series["total"].append(h.total)
            series["pde_term"].append(h.pde_term)
            series["bc_term"].append(h.bc_term)
        network.save(net, d / f"checkpoint_iter{k}")
        if err is not None:
            with open(d / "errors.csv", "a", newline="") as fh:
                fh.write(",".join([str(k)] + [repr(v) for v in
                                              (err.rel_L2, err.rel_H2, err.grad_err)]) + "\n")
            artifacts.write_grid(d / f"pointwise_iter{k}.csv", err.pointwise[::-1])
            series["rel_L2"].append(err.rel_L2)
            series["rel_H2"].append(err.rel_H2)
            series["grad_err"].append(err.grad_err)
        if samples is not None:
            G = _map_samples(net, samples, cfg.backend)
            counts, ext = artifacts.pushforward_histogram(G, extent, HIST_BINS)
            artifacts.write_counts(d / f"hist_iter{k}.csv", counts)
            inside = float(np.mean(spec.target.contains(G)))
            series["inside_fraction"].append(inside)
            with open(d / "pushforward.csv", "a", newline="") as fh:
                fh.write(",".join([str(k), repr(inside)] + [repr(float(e)) for e in ext]) + "\n")
        timing.append(time.perf_counter() - t0)
        msg = f"{case.name} repeat {r} iteration {k}"
        if hist:
            msg += f" loss {hist[-1].total:.3e}"
        if err is not None:
            msg += f" L2 {err.rel_L2:.3e}"
        log.info(msg)

    try:
        splitting.outer_solve(spec, arch, rng, cfg, on_iteration=on_iteration)
    finally:
        # wall times are kept out of the CSV artifacts so those stay reproducible
        (d / "timing.json").write_text(json.dumps({"iteration_wall_s": timing}) + "\n")
    return series


def _repeat_job(args):
    # numerical aborts come back as data: exception objects with extra
    # constructor arguments do not survive the trip between processes
    config, r, out = args
    try:
        return run_repeat(config, r, out)
    except NumericalError as e:
        return {"abort": f"repeat {r}: {e}"}


def run(config):
    """Execute all repeats and write ``quantiles.csv``; returns an exit status."""
    try:
        case, spec, cfg, repeats = config.resolve()
        out = _prepare_out(config.out)
    except ConfigError as e:
        log.error("%s", e)
        return EXIT_CONFIG
    resolved = dataclasses.asdict(config)
    resolved.update(n_c=cfg.n_c, n_b=cfg.n_b, n_iters=cfg.n_iters, adaptive=cfg.adaptive,
                    seed_fraction=cfg.seed_fraction, lam=spec.lam, repeats=repeats)
    (out / "config.json").write_text(json.dumps(resolved, indent=1, sort_keys=True) + "\n")

    jobs = [(config, r, str(out)) for r in range(repeats)]
    if config.parallel_repeats > 1 and repeats > 1:
        with ProcessPoolExecutor(max_workers=config.parallel_repeats) as ex:
            results = list(ex.map(_repeat_job, jobs))
    else:
        results = [_repeat_job(j) for j in jobs]
    aborted = [s["abort"] for s in results if "abort" in s]
    if aborted:
        for msg in aborted:
            log.error("numerical abort: %s", msg)
        return EXIT_NUMERIC

    rows = []
    for metric in ("total", "pde_term", "bc_term"):
        rows += artifacts.quantile_rows([s[metric] for s in results], "epoch", metric)
    for metric in ("rel_L2", "rel_H2", "grad_err", "inside_fraction"):
        rows += artifacts.quantile_rows([s[metric] for s in results], "iteration", metric)
    artifacts.write_quantiles(out / "quantiles.csv", rows)
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument parsing


def _load_json(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    if "lambda" in data:
        data["lam"] = data.pop("lambda")
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def build_parser():
    p = argparse.ArgumentParser(prog="ritzsplit", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve a catalog case")
    r.add_argument("case_pos", nargs="?", metavar="CASE")
    r.add_argument("--case")
    r.add_argument("--config", help="JSON file with the same keys as the flags")
    r.add_argument("--points", type=int, help="interior collocation points")
    r.add_argument("--boundary-points", type=int)
    r.add_argument("--seeds", type=float, help="seed fraction of the collocation count")
    r.add_argument("--adaptive", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--iters", type=int, help="outer splitting iterations")
    r.add_argument("--repeats", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", choices=(splitting.DEEP_RITZ, splitting.PINN_BASELINE))
    r.add_argument("--lambda", dest="lam", type=float, help="boundary penalty")
    r.add_argument("--out")
    r.add_argument("--parallel-repeats", type=int)
    r.add_argument("--backend", choices=kernels.BACKENDS)
    r.add_argument("--hist-samples", type=int, help=argparse.SUPPRESS)

    sub.add_parser("list", help="list catalog cases")

    h = sub.add_parser("render", help="render a CSV grid as a PGM heatmap")
    h.add_argument("grid")
    h.add_argument("out")
    return p


def config_from_args(args):
    data = _load_json(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "config", "case_pos", "verbose") and v is not None}
    if args.case_pos is not None:
        flags.setdefault("case", args.case_pos)
    data.update(flags)
    if "case" not in data:
        raise ConfigError("no case given")
    return RunConfig(**data)


def _list_cases():
    print("name,kind,n_c,n_b,n_iters,n_repeats,arch,lambda,exact")
    for c in catalog.catalog():
        print(",".join(str(v) for v in (c.name, c.spec.kind, c.n_c, c.n_b, c.n_iters,
                                         c.n_repeats, c.arch_kind, c.lam,
                                         c.spec.exact is not None)))


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    if args.command == "list":
        _list_cases()
        return EXIT_OK
    if args.command == "render":
        try:
            lo, hi = artifacts.render_heatmap(args.grid, args.out)
        except (OSError, ValueError) as e:
            log.error("%s", e)
            return EXIT_CONFIG
        print(f"min={lo!r} max={hi!r}")
        return EXIT_OK
    try:
        config = config_from_args(args)
    except (ConfigError, TypeError) as e:
        log.error("%s", e)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
