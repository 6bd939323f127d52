"""Command-line entry point.

Usage: ``markov-billiard <subcommand> --config <path> [--seed U64] [--out <path>]``.

The main artifact of a subcommand goes to ``--out`` (stdout if absent).
Subcommands that measure something also emit a ``metric,value,threshold,pass``
report: to ``<out>.report.csv`` when ``--out`` is given, else to stderr.
Exit status is 0 when every report row passes, 1 otherwise, 2 for usage or
configuration errors.
"""

import argparse
import csv
import io
import sys

import numpy as np

from . import _kernels
from .acceptance import report_rows, run_all
from .billiard import BilliardState, simulate_billiard
from .chain import ChainState, Horizon, boundary_excursions, build_chain, simulate_chain
from .config import load_config
from .errors import BilliardError, InvalidInput, ParseError, ValidationError
from .reflection import NoisyLaw, exit_speed_density, sample_reflection, \
    sign_change_prob_closed_form
from .rng import check_seed, stream
from .stats import chi_square_test, ks_2samp, std_normal_cdf, uniform_cdf

__all__ = ["main", "run"]

SUBCOMMANDS = ("reflect-sample", "level-probs", "density", "chain-run", "excursion",
               "billiard-run", "verify")

REPORT_HEADER = ("metric", "value", "threshold", "pass")
HIST_HEADER = ("bin_lo", "bin_hi", "weight")


def _fmt(x):
    return repr(float(x))


def _report_row(metric, value, threshold, passed):
    return (metric, _fmt(value), _fmt(threshold), "true" if passed else "false")


class _Outputs:
    """Collects CSV tables and writes them at the end of a run."""

    def __init__(self, out):
        self.out = out
        self.main = None
        self.report = None

    def _render(self, header, rows):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()

    def set_main(self, header, rows):
        self.main = self._render(header, rows)

    def set_report(self, rows):
        self.report = self._render(REPORT_HEADER, rows)
        self.report_ok = all(row[3] == "true" for row in rows)

    def flush(self):
        if self.out is None:
            if self.main is not None:
                sys.stdout.write(self.main)
            if self.report is not None:
                target = sys.stderr if self.main is not None else sys.stdout
                target.write(self.report)
            return
        if self.main is not None:
            with open(self.out, "w", encoding="utf-8", newline="") as handle:
                handle.write(self.main)
            if self.report is not None:
                with open(self.out + ".report.csv", "w", encoding="utf-8", newline="") as h:
                    h.write(self.report)
        elif self.report is not None:
            with open(self.out, "w", encoding="utf-8", newline="") as handle:
                handle.write(self.report)


def _law_pair(cfg):
    return cfg.reflection_law("minus"), cfg.reflection_law("plus")


def _chain_layer(cfg, side):
    kind = getattr(cfg, f"law_{side}") or cfg.law
    return "hard" if kind == "hard" else cfg.layer(side)


def _horizon(cfg):
    if cfg.events is None and cfg.clock is None:
        raise ValidationError("missing required key(s): events or clock")
    return Horizon(events=cfg.events, clock=cfg.clock)


def _cmd_reflect_sample(cfg, out, backend):
    cfg.require("ell0", "samples")
    if cfg.ell0 == 0:
        raise ValidationError("ell0 must be nonzero")
    law = cfg.reflection_law("minus" if cfg.ell0 < 0 else "plus")
    draws = [sample_reflection(cfg.ell0, law, stream(cfg.seed, r, "reflect-sample"),
                               size=cfg.samples) for r in range(cfg.replicas)]
    out.set_main(("value",), [(_fmt(x),) for x in np.concatenate(draws)])


def _cmd_level_probs(cfg, out, backend):
    cfg.require("ell0")
    if not cfg.ell0 < 0:
        raise ValidationError("ell0 must be negative")
    p = cfg.reflection_law("minus").level_probabilities(cfg.ell0)
    out.set_main(("level", "probability"), [(k, _fmt(pk)) for k, pk in enumerate(p)])


def _cmd_density(cfg, out, backend):
    law = cfg.reflection_law("minus")
    r_max = 3.0 if cfg.r_max is None else cfg.r_max
    if not r_max > 0:
        raise ValidationError("r_max must be positive")
    grid = r_max * np.arange(1, cfg.points + 1) / cfg.points
    if isinstance(law, NoisyLaw):
        p = law.params
        rows = [(_fmt(-g), _fmt(sign_change_prob_closed_form(-g, p.beta1_rate, p.beta2_rate)))
                for g in grid[::-1]]
        out.set_main(("ell", "p1"), rows)
        return
    level = 0 if cfg.level is None else cfg.level
    if not 0 <= level < len(law.lambdas):
        raise ValidationError(f"level must lie in 0..{len(law.lambdas) - 1}")
    f = exit_speed_density(level, law.lambdas, grid)
    out.set_main(("r", "density"), [(_fmt(r), _fmt(v)) for r, v in zip(grid, f)])


def _spec_from(cfg):
    cfg.require("n")
    theta = cfg.theta1 if cfg.mode == "noisy" else None
    try:
        return build_chain(cfg.n, _chain_layer(cfg, "minus"), _chain_layer(cfg, "plus"),
                           cfg.mode, theta)
    except InvalidInput as exc:
        raise ValidationError(str(exc)) from None


def _cmd_chain_run(cfg, out, backend):
    spec = _spec_from(cfg)
    horizon = _horizon(cfg)
    site = spec.n // 2 if cfg.site0 is None else cfg.site0
    ell = 1.0 if cfg.ell0 is None else cfg.ell0
    if not 0 <= site <= spec.n:
        raise ValidationError(f"site0 must lie in 0..{spec.n}")
    total = None
    for r in range(cfg.replicas):
        run = simulate_chain(spec, ChainState(site, ell), horizon,
                             stream(cfg.seed, r, "chain-run"), bins=cfg.bins,
                             memory_range=cfg.memory_range, backend=backend)
        total = run if total is None else total.merge(run)
    if total.memory is None:
        raise ValidationError("the horizon allows no elapsed time")
    out.set_main(HIST_HEADER, [tuple(_fmt(x) for x in row) for row in total.memory.rows()])
    dev = float(np.max(np.abs(total.occupancy_fraction * (spec.n + 1) - 1.0)))
    d = total.memory.ks_distance(std_normal_cdf)
    out.set_report([
        _report_row("jumps", total.jumps, 0, True),
        _report_row("max_rel_occupancy_dev", dev, 0.02, dev <= 0.02),
        _report_row("memory_D", d, 0.02, d <= 0.02),
    ])


def _cmd_excursion(cfg, out, backend):
    cfg.require("samples", "ell0")
    if not cfg.ell0 < 0:
        raise ValidationError("ell0 must be negative")
    if cfg.samples < 8:
        raise ValidationError("samples must be at least 8")
    spec = _spec_from(cfg)
    law = cfg.reflection_law("minus")
    levels, speeds = [], []
    for r in range(cfg.replicas):
        batch = boundary_excursions(spec, cfg.ell0, cfg.samples,
                                    stream(cfg.seed, r, "excursion"), backend=backend)
        levels.append(batch.levels)
        speeds.append(batch.exit_velocities)
    levels = np.concatenate(levels)
    speeds = np.concatenate(speeds)
    p = law.level_probabilities(cfg.ell0)
    counts = np.bincount(levels, minlength=len(p))
    rows = []
    if np.count_nonzero(p * len(levels) >= 5) >= 2:
        _, pval = chi_square_test(counts, p)
        rows.append(_report_row("level_chi2_p", pval, cfg.alpha, pval > cfg.alpha))
    ref = sample_reflection(cfg.ell0, law, stream(cfg.seed, 0, "excursion-oracle"),
                            size=len(speeds))
    _, kp = ks_2samp(speeds, ref)
    rows.append(_report_row("exit_velocity_ks2_p", kp, cfg.alpha, kp > cfg.alpha))
    out.set_report(rows)


def _cmd_billiard_run(cfg, out, backend):
    laws = _law_pair(cfg)
    horizon = _horizon(cfg)
    x0 = 0.5 if cfg.x0 is None else cfg.x0
    ell0 = -1.0 if cfg.ell0 is None else cfg.ell0
    try:
        init = BilliardState(x0, ell0)
        init.validate()
    except InvalidInput as exc:
        raise ValidationError(str(exc)) from None
    x_marg = l_marg = None
    reflections = 0
    for r in range(cfg.replicas):
        run = simulate_billiard(init, laws, horizon, stream(cfg.seed, r, "billiard-run"),
                                bins=cfg.bins, backend=backend)
        if run.x_marginal is None:
            raise ValidationError("the horizon allows no elapsed time")
        reflections += len(run.trajectory)
        x_marg = run.x_marginal if x_marg is None else x_marg.merge(run.x_marginal)
        l_marg = run.l_marginal if l_marg is None else l_marg.merge(run.l_marginal)
    out.set_main(HIST_HEADER, [tuple(_fmt(x) for x in row) for row in x_marg.rows()])
    dx = x_marg.ks_distance(uniform_cdf)
    dl = l_marg.ks_distance(std_normal_cdf)
    out.set_report([
        _report_row("reflections", reflections, 0, True),
        _report_row("X_D", dx, 0.01, dx <= 0.01),
        _report_row("L_D", dl, 0.02, dl <= 0.02),
    ])


def _cmd_verify(cfg, out, backend):
    results = run_all(cfg.seed, cfg.criteria)
    for res in results:
        print(res.summary(), file=sys.stderr)
    out.set_report(report_rows(results))


_DISPATCH = {
    "reflect-sample": _cmd_reflect_sample,
    "level-probs": _cmd_level_probs,
    "density": _cmd_density,
    "chain-run": _cmd_chain_run,
    "excursion": _cmd_excursion,
    "billiard-run": _cmd_billiard_run,
    "verify": _cmd_verify,
}


def run(command, cfg, out=None, backend=None):
    """Execute ``command`` with a parsed config; returns the exit status."""
    if command == "verify" and cfg.criteria is not None:
        from .acceptance import CRITERIA
        unknown = [k for k in cfg.criteria if k not in CRITERIA]
        if unknown:
            raise ValidationError(f"unknown criteria: {unknown}")
    outputs = _Outputs(out)
    _DISPATCH[command](cfg, outputs, backend)
    outputs.flush()
    if outputs.report is not None and not outputs.report_ok:
        return 1
    return 0


def _parser():
    parser = argparse.ArgumentParser(prog="markov-billiard",
                                     description="Billiards with Markovian reflections.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a key = value file")
        p.add_argument("--seed", type=int, default=None, help="64-bit unsigned seed")
        p.add_argument("--out", default=None, help="output CSV path (default stdout)")
        p.add_argument("--backend", choices=_kernels.available_backends(), default=None,
                       help="kernel backend (default: compiled when built)")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = check_seed(args.seed)
        return run(args.command, cfg, args.out, args.backend)
    except (ParseError, ValidationError, InvalidInput, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BilliardError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
