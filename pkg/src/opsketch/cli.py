"""
Command-line experiment harness.

Every command writes CSV: `#`-prefixed lines echo the configuration, then a
header row and one row per k (or resolution).  Each trial draws from its
own stream derive_seed(seed, command, k, trial), so output does not depend
on execution order.  Set OPSKETCH_THREADS to run trials on a thread pool.
"""
from __future__ import annotations

import argparse
import io
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analysis, sketch
from .basis import BasisSpec
from .kernels import KERNELS, SE_COVARIANCE, get_kernel
from .operator import DEFAULT_TOL, DiscreteOperator, ResolutionError, discretize, reference_svd
from .rng import NestedGaussianMatrix, derive_seed

COMMANDS = ("fig1", "fig2", "fig3", "approx", "bounds", "coupling")
SYNTH_SIZE = 258
SYNTH_DECAY = 0.25

# per-command overrides of GENERIC
DEFAULTS = {
    "fig1": dict(kernel="airy"),
    "fig2": dict(kernel="gauss2d", p=10),
    "fig3": dict(kernel="rational", k_max=100),
    "approx": dict(kernel="airy", n="adaptive"),
    "bounds": dict(kernel="airy"),
    "coupling": dict(kernel="airy", k_min=3, k_max=3, p=2, trials=50),
}
GENERIC = dict(k_min=1, k_max=50, k_step=2, p=5, n="adaptive", trials=20, seed=0, eps=DEFAULT_TOL)
REQUIRED_KERNEL = {"fig1": "airy", "fig2": "gauss2d", "fig3": "rational"}


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    kernel: str
    k_min: int
    k_max: int
    k_step: int
    p: int
    n: str
    trials: int
    seed: int
    eps: float
    out: str | None = None
    t: float = 2.0
    u: float = 2.0
    method: str = "rsvd"
    resolutions: tuple = (8, 16, 32, 64)
    spectrum: tuple | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.spectrum is None and self.kernel not in KERNELS:
            raise UsageError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")
        need = REQUIRED_KERNEL.get(self.command)
        if need and self.kernel != need:
            raise UsageError(f"{self.command} reproduces the {need} experiment; got kernel {self.kernel!r}")
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if self.k_min < 1 or self.k_step < 1 or self.k_max < self.k_min:
            raise UsageError("k-range must be nonempty with k-min >= 1 and k-step >= 1")
        if self.p < 0:
            raise UsageError("p must be >= 0")
        if not 0 < self.eps < 1:
            raise UsageError("eps must lie in (0, 1)")
        if self.n != "adaptive" and not (self.n.isdigit() and int(self.n) >= 1):
            raise UsageError(f"--n must be a positive integer or 'adaptive', got {self.n!r}")
        if self.t < 1 or self.u < 1:
            raise UsageError("t and u must be >= 1")

    @property
    def ks(self) -> list:
        return list(range(self.k_min, self.k_max + 1, self.k_step))

    def echo(self) -> str:
        items = [("command", self.command), ("kernel", self.kernel if self.spectrum is None else "spectrum"),
                 ("k", f"{self.k_min}:{self.k_max}:{self.k_step}"), ("p", self.p), ("n", self.n),
                 ("trials", self.trials), ("seed", self.seed), ("eps", repr(self.eps))]
        if self.command == "bounds":
            items += [("t", self.t), ("u", self.u)]
        if self.command == "approx":
            items.append(("method", self.method))
        if self.command == "coupling":
            items.append(("resolutions", ",".join(map(str, self.resolutions))))
        return "# opsketch " + " ".join(f"{a}={b}" for a, b in items)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _csv(config: ExperimentConfig, notes, header, rows) -> str:
    buf = io.StringIO()
    buf.write(config.echo() + "\n")
    for note in notes:
        buf.write(f"# {note}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _map(fn, items):
    workers = int(os.environ.get("OPSKETCH_THREADS", "1") or 1)
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def _stats(values):
    v = np.asarray(values, dtype=float)
    return [float(np.median(v)), float(np.quantile(v, 0.25)), float(np.quantile(v, 0.75))]


def _stat_cols(name):
    return [f"{name}_median", f"{name}_q25", f"{name}_q75"]


def _trial_seeds(config, k):
    return [derive_seed(config.seed, config.command, k, j) for j in range(config.trials)]


def _test_matrix(r, seed, rows):
    return NestedGaussianMatrix(r, seed, "omega").rows(rows)


def run_fig1(config: ExperimentConfig) -> str:
    """Airy kernel: randomized SVD with n = 10, 15, adaptive n, idealized, optimal (relative HS)."""
    kernel = get_kernel(config.kernel)
    ref = reference_svd(kernel)
    norm = np.linalg.norm(ref.matrix)
    header = ["k"]
    for name in ("n10", "n15", "adaptive", "idealized"):
        header += _stat_cols(name)
    header += ["n10_floor", "n15_floor", "optimal"]
    rows = []
    for k in config.ks:
        r = k + config.p

        def trial(seed):
            out = []
            for n in (10, 15):
                a = sketch.discrete_rsvd(kernel, k, config.p, n=n, eps=config.eps, seed=seed)
                floor = ref.block_complement_norm(a.info["m"], n) / norm
                out += [sketch.hs_error(ref, a, relative=True), floor]
            a = sketch.discrete_rsvd(kernel, k, config.p, eps=config.eps, seed=seed)
            w = sketch.kl_weights(ref, _test_matrix(r, seed, ref.col_basis.size))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                i = sketch.idealized_rsvd(ref, k, config.p, seed, omega=w)
            return out + [sketch.hs_error(ref, a, relative=True), sketch.hs_error(ref, i, relative=True)]

        res = np.array(_map(trial, _trial_seeds(config, k)))
        rows.append([k, *_stats(res[:, 0]), *_stats(res[:, 2]), *_stats(res[:, 4]), *_stats(res[:, 5]),
                     float(np.median(res[:, 1])), float(np.median(res[:, 3])),
                     sketch.optimal_hs_error(ref, k, relative=True)])
    notes = ["relative Hilbert-Schmidt errors; idealized runs share each trial's Gaussian stream",
             f"reference resolution {ref.resolution}, tail bound {ref.tail_bound:.3e}"]
    return _csv(config, notes, header, rows)


def run_fig2(config: ExperimentConfig) -> str:
    """2d Gaussian kernel: Nystrom with n = 25, 625, idealized, optimal (relative trace norm)."""
    kernel = get_kernel(config.kernel)
    ref = reference_svd(kernel)
    ops = {n: discretize(kernel, ref.row_basis.size, n) for n in (25, 625)}
    header = ["k", *_stat_cols("n25"), *_stat_cols("n625"), *_stat_cols("idealized"), "optimal", "optimal_kp"]
    rows = []
    for k in config.ks:
        r = k + config.p

        def trial(seed):
            out = [sketch.trace_error(ref, sketch.nystrom_discrete(kernel, n, k, config.p, seed, op=ops[n]),
                                      relative=True) for n in (25, 625)]
            w = sketch.kl_weights(ref, _test_matrix(r, seed, ref.col_basis.size))
            i = sketch.nystrom_idealized(ref, k, config.p, seed, omega=w)
            return out + [sketch.trace_error(ref, i, relative=True)]

        res = np.array(_map(trial, _trial_seeds(config, k)))
        rows.append([k, *_stats(res[:, 0]), *_stats(res[:, 1]), *_stats(res[:, 2]),
                     sketch.optimal_trace_error(ref, k, relative=True),
                     sketch.optimal_trace_error(ref, r, relative=True)])
    notes = ["relative trace-norm errors", f"reference resolution {ref.resolution}"]
    return _csv(config, notes, header, rows)


def synthetic_covariance_baseline():
    return sketch.synthetic_covariance(np.exp(-SYNTH_DECAY * np.arange(SYNTH_SIZE)), BasisSpec.legendre(SYNTH_SIZE))


def run_fig3(config: ExperimentConfig) -> str:
    """Rational kernel: discrete n = 258 against covariance-sketched baselines (relative HS)."""
    kernel = get_kernel(config.kernel)
    ref = reference_svd(kernel)
    full = DiscreteOperator(ref.matrix, ref.row_basis, ref.col_basis, kernel)
    op = discretize(kernel, ref.row_basis.size, SYNTH_SIZE)
    covs = {"se": reference_svd(SE_COVARIANCE), "synth": synthetic_covariance_baseline()}
    header = ["k", *_stat_cols("discrete"), *_stat_cols("k_se"), *_stat_cols("k_synth"), "optimal"]
    rows = []
    for k in config.ks:
        def trial(seed):
            out = [sketch.hs_error(ref, sketch.discrete_rsvd(kernel, k, config.p, seed=seed, op=op), relative=True)]
            for name in ("se", "synth"):
                a = sketch.covariance_rsvd(kernel, covs[name], k, config.p, seed, op=full)
                out.append(sketch.hs_error(ref, a, relative=True))
            return out

        res = np.array(_map(trial, _trial_seeds(config, k)))
        rows.append([k, *_stats(res[:, 0]), *_stats(res[:, 1]), *_stats(res[:, 2]),
                     sketch.optimal_hs_error(ref, k, relative=True)])
    notes = ["relative Hilbert-Schmidt errors",
             f"discrete: n={SYNTH_SIZE}, m={ref.row_basis.size}; k_se rank {covs['se'].numerical_rank()}"]
    return _csv(config, notes, header, rows)


def run_approx(config: ExperimentConfig) -> str:
    """One approximation per k and trial, with its error and bounds."""
    kernel = get_kernel(config.kernel)
    ref = reference_svd(kernel)
    nystrom = config.method == "nystrom"
    header = ["k", "trial", "m", "n", "error", "rel_error", "disc_error", "bound_expectation", "bound_tail"]
    rows = []
    for k in config.ks:
        for j, seed in enumerate(_trial_seeds(config, k)):
            if nystrom:
                n = ref.col_basis.size if config.n == "adaptive" else int(config.n)
                a = sketch.nystrom_discrete(kernel, n, k, config.p, seed)
                m = ref.row_basis.size
                err = sketch.trace_error(ref, a)
                pos = BasisSpec(ref.col_basis.kind, n).positions_in(ref.col_basis)
                disc = ref.trace - float(np.trace(ref.matrix[np.ix_(pos, pos)]))
                rep = analysis.discrete_bounds(ref.sigma, max(disc, 0.0), k, config.p, measured=err, kind="trace")
                rel = err / ref.trace
            else:
                n = None if config.n == "adaptive" else int(config.n)
                a = sketch.discrete_rsvd(kernel, k, config.p, n=n, eps=config.eps, seed=seed)
                m, n = a.info["m"], a.info["n"]
                err = sketch.hs_error(ref, a)
                disc = ref.block_complement_norm(m, n)
                rep = analysis.discrete_bounds(ref.sigma, disc, k, config.p, measured=err)
                rel = err / np.linalg.norm(ref.matrix)
            rows.append([k, j, m, n, err, rel, rep.disc_error, rep.bound_expectation, rep.bound_tail])
    notes = [f"method {config.method}; rsvd bounds: expectation of squared HS error, tail of HS error"]
    return _csv(config, notes, header, rows)


def run_bounds(config: ExperimentConfig) -> str:
    """Closed-form bounds over k for a kernel's reference spectrum or a given spectrum."""
    if config.spectrum is not None:
        sigma = np.sort(np.asarray(config.spectrum, dtype=float))[::-1]
    else:
        sigma = reference_svd(get_kernel(config.kernel)).sigma.values
    p, t, u = config.p, config.t, config.u
    header = ["k", "sq_tail", "tail", "next_sigma", "expectation_hs", "tail_hs", "expectation_nystrom",
              "tail_nystrom", "failure_probability"]
    rows = []
    for k in config.ks:
        hs = analysis.discrete_bounds(sigma, 0.0, k, p, t, u, kind="hs")
        tr = analysis.discrete_bounds(sigma, 0.0, k, p, t, u, kind="trace")
        fail = analysis.failure_probability(p, t, u) if p >= 1 else math.inf
        rows.append([k, hs.tail_sums["sq_tail"], hs.tail_sums["tail"], hs.tail_sums["next"],
                     hs.bound_expectation, hs.bound_tail, tr.bound_expectation, tr.bound_tail, fail])
    return _csv(config, ["bounds that do not apply to (k, p, t, u) are reported as inf"], header, rows)


def run_coupling(config: ExperimentConfig) -> str:
    """Coupled distances ||A_hat - A_hat_{m,n}||_HS per co-range size n (m = reference size)."""
    kernel = get_kernel(config.kernel)
    out = []
    for k in config.ks:
        res = analysis.coupling_distance(kernel, k, config.p, list(config.resolutions), config.seed, config.trials)
        out += [[k, row.n, row.m, row.median, row.mean, row.disc_error, row.ratio] for row in res]
    header = ["k", "n", "m", "median", "mean", "disc_error", "ratio"]
    return _csv(config, ["synchronous coupling: both sketches share one Gaussian matrix per trial"], header, out)


RUNNERS = {"fig1": run_fig1, "fig2": run_fig2, "fig3": run_fig3, "approx": run_approx,
           "bounds": run_bounds, "coupling": run_coupling}


def run(config: ExperimentConfig) -> str:
    return RUNNERS[config.command](config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opsketch", description="Randomized low-rank approximation of integral operators.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"fig1": "Airy kernel, randomized SVD with fixed and adaptive n",
             "fig2": "2d Gaussian kernel, Nystrom with n = 25 and 625",
             "fig3": "rational kernel, discrete sketching against covariance baselines",
             "approx": "single approximations with error and bounds",
             "bounds": "closed-form bounds over k",
             "coupling": "coupled idealized/discrete distances over n"}
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--kernel")
        sp.add_argument("--k-min", type=int)
        sp.add_argument("--k-max", type=int)
        sp.add_argument("--k-step", type=int)
        sp.add_argument("--k", type=int, help="shorthand for --k-min K --k-max K")
        sp.add_argument("--p", type=int)
        sp.add_argument("--n", help="co-range size or 'adaptive'")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--out", help="output path (default: stdout)")
        if name == "bounds":
            sp.add_argument("--t", type=float, default=2.0)
            sp.add_argument("--u", type=float, default=2.0)
            sp.add_argument("--spectrum", help="comma-separated singular values instead of a kernel")
        if name == "approx":
            sp.add_argument("--method", choices=("rsvd", "nystrom"), default="rsvd")
        if name == "coupling":
            sp.add_argument("--resolutions", default="8,16,32,64", help="comma-separated co-range sizes")
    return parser


def config_from_args(args) -> ExperimentConfig:
    vals = dict(GENERIC)
    vals.update(DEFAULTS[args.command])
    for key in ("kernel", "k_min", "k_max", "k_step", "p", "n", "trials", "seed", "eps"):
        if getattr(args, key) is not None:
            vals[key] = getattr(args, key)
    if args.k is not None:
        vals["k_min"] = vals["k_max"] = args.k
    extra = {}
    if args.command == "bounds":
        extra.update(t=args.t, u=args.u)
        if args.spectrum:
            try:
                extra["spectrum"] = tuple(float(s) for s in args.spectrum.split(","))
            except ValueError:
                raise UsageError(f"bad --spectrum {args.spectrum!r}") from None
            if any(s < 0 or not math.isfinite(s) for s in extra["spectrum"]):
                raise UsageError("--spectrum entries must be finite and nonnegative")
    if args.command == "approx":
        extra["method"] = args.method
    if args.command == "coupling":
        try:
            extra["resolutions"] = tuple(int(s) for s in args.resolutions.split(","))
        except ValueError:
            raise UsageError(f"bad --resolutions {args.resolutions!r}") from None
    return ExperimentConfig(command=args.command, out=args.out, n=str(vals.pop("n")), **vals, **extra)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        text = run(config)
    except ResolutionError as exc:
        print(f"opsketch: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValueError, KeyError) as exc:
        print(f"opsketch: error: {exc}", file=sys.stderr)
        return 2
    if config.out:
        with open(config.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
