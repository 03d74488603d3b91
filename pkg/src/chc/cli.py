"""Command-line entry point: parse a flat config, dispatch a study or run.

Config files are flat ``key = value`` text; unknown keys are errors.  Every
invocation writes its resolved manifest before computing anything, then one
CSV per study.  The exit status is 0 iff every study check passed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field

from . import experiments
from .potential import Potential, double_well
from .spectral import DomainSpec

__version__ = "0.1.0"

STUDIES = (
    "run",
    "study-det",
    "study-det-deriv",
    "study-stoch-conv",
    "study-strong",
    "study-moments",
    "probe-holder",
)

# key -> (type, default); None default means "required" or study-specific
_SCHEMA = {
    "study": (str, None),
    "domain": (str, "interval"),
    "L": (float, 1.0),
    "Lx": (float, 1.0),
    "Ly": (float, 1.0),
    "n": (int, 64),
    "N": (int, 100),
    "T": (float, 0.1),
    "M": (int, 64),
    "J": (int, 32),
    "sigma": (float, 1.0),
    "r": (float, 2.0),
    "seed": (int, 42),
    "levels": (int, 4),
    "factor": (int, 2),
    "potential": (str, "0.25,0,-0.5,0,0.25"),
    "x0": (str, "0,0.1,0.05"),
    "workers": (int, 1),
}


@dataclass
class Bundle:
    """Resolved configuration: every schema key materialized."""

    values: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key)

    @property
    def domain_spec(self) -> DomainSpec:
        if self.values["domain"] == "interval":
            return DomainSpec.interval(self.values["L"])
        if self.values["domain"] == "rectangle":
            return DomainSpec.rectangle(self.values["Lx"], self.values["Ly"])
        raise ValueError(f"unknown domain {self.values['domain']!r}")

    @property
    def potential_obj(self) -> Potential:
        coeffs = tuple(float(v) for v in self.values["potential"].split(","))
        return Potential(coeffs)

    @property
    def x0_coeffs(self) -> tuple:
        return tuple(float(v) for v in self.values["x0"].split(","))


def parse_config(path: str | None, overrides: dict | None = None) -> Bundle:
    """Read a flat key = value file, apply overrides, validate against schema."""
    raw = {}
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                raw[key.strip()] = value.strip()
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})

    values = {}
    for key, text in raw.items():
        if key not in _SCHEMA:
            raise ValueError(f"unknown config key {key!r}")
        typ, _ = _SCHEMA[key]
        try:
            values[key] = typ(text)
        except (TypeError, ValueError):
            raise ValueError(f"config key {key!r}: cannot parse {text!r} as {typ.__name__}")
    for key, (typ, default) in _SCHEMA.items():
        values.setdefault(key, default)

    if values["study"] is None:
        raise ValueError("missing required key 'study'")
    if values["study"] not in STUDIES:
        raise ValueError(f"unknown study {values['study']!r}")
    if values["N"] < 1:
        raise ValueError("N must be >= 1")
    if values["n"] < 2:
        raise ValueError("n must be >= 2")
    if values["T"] <= 0:
        raise ValueError("T must be positive")
    if values["M"] < 1:
        raise ValueError("M must be >= 1")
    return Bundle(values)


def write_run_manifest(bundle: Bundle, outdir: str, csv_name: str) -> str:
    entries = {"artifact_version": __version__, "timestamp": f"{time.time():.0f}"}
    entries.update({k: bundle.values[k] for k in sorted(bundle.values)})
    entries["output_csv"] = csv_name
    path = os.path.join(outdir, "manifest.txt")
    experiments.write_manifest(path, entries)
    return path


def dispatch(bundle: Bundle, outdir: str) -> int:
    """Run the configured study, write CSV + manifest, return exit status."""
    os.makedirs(outdir, exist_ok=True)
    study = bundle.study
    csv_name = f"{study}.csv"
    write_run_manifest(bundle, outdir, csv_name)
    domain = bundle.domain_spec
    pot = bundle.potential_obj

    if study == "run":
        report, rows = experiments.single_run(
            domain=domain,
            n=bundle.n,
            N=bundle.N,
            T=bundle.T,
            sigma=bundle.sigma,
            r=bundle.r,
            J=bundle.J,
            seed=bundle.seed,
            pot=pot,
            x0_coeffs=bundle.x0_coeffs,
        )
        experiments.write_csv(
            os.path.join(outdir, csv_name),
            ("step", "t", "mass_deviation", "J", "Y_h1", "newton_iters"),
            rows,
        )
    elif study == "study-det":
        report = experiments.det_linear_rate_study(domain=domain)
    elif study == "study-det-deriv":
        report = experiments.det_derivative_rate_study(domain=domain)
    elif study == "study-stoch-conv":
        report = experiments.stoch_conv_rate_study(
            domain=domain, r=bundle.r, sigma=bundle.sigma, M=bundle.M, seed=bundle.seed
        )
    elif study == "study-strong":
        report = experiments.strong_convergence_study(
            domain=domain,
            finest=(bundle.n, bundle.N),
            n_levels=bundle.levels,
            factor=bundle.factor,
            T=bundle.T,
            M=bundle.M,
            sigma=bundle.sigma,
            r=bundle.r,
            J=bundle.J,
            seed=bundle.seed,
            pot=pot,
            x0_coeffs=bundle.x0_coeffs,
            workers=bundle.workers,
        )
    elif study == "study-moments":
        base_n, base_N = bundle.n, bundle.N
        ladder = tuple(
            (base_n * 2**i, base_N * 2**i) for i in range(max(3, bundle.levels - 1))
        )[:3]
        report = experiments.moment_bound_study(
            domain=domain,
            ladder=ladder,
            T=bundle.T,
            M=bundle.M,
            sigma=bundle.sigma,
            r=bundle.r,
            J=bundle.J,
            seed=bundle.seed,
            pot=pot,
            x0_coeffs=bundle.x0_coeffs,
            workers=bundle.workers,
        )
    elif study == "probe-holder":
        report = experiments.holder_probe(
            domain=domain,
            n=bundle.n,
            N_fine=bundle.N,
            T=bundle.T,
            sigma=bundle.sigma,
            r=bundle.r,
            J=bundle.J,
            seed=bundle.seed,
            pot=pot,
            x0_coeffs=bundle.x0_coeffs,
        )
    else:  # pragma: no cover - parse_config already validated
        raise ValueError(f"unknown study {study!r}")

    if study != "run":
        experiments.write_csv(
            os.path.join(outdir, csv_name), experiments.CSV_HEADER, report.rows()
        )
    status = 0
    for check in report.checks:
        mark = "PASS" if check.ok else "FAIL"
        print(f"[{mark}] {study}: {check.name} ({check.detail})")
        if not check.ok:
            status = 1
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chc",
        description="Fully discrete Cahn-Hilliard-Cook scheme: runs and rate studies",
    )
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="override the base seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, help="Monte-Carlo worker count")
    parser.add_argument("--study", help="study name (alternative to the subcommand)")
    sub = parser.add_subparsers(dest="command")
    for name in STUDIES:
        sub.add_parser(name)

    args = parser.parse_args(argv)
    study = args.command or args.study
    overrides = {
        "study": study,
        "seed": args.seed if args.seed is not None else os.environ.get("CHC_SEED"),
        "workers": args.workers,
    }
    try:
        bundle = parse_config(args.config, overrides)
    except (ValueError, OSError) as err:
        parser.exit(2, f"error: {err}\n")
    try:
        return dispatch(bundle, args.out)
    except Exception as err:  # surfaced with context, nonzero exit
        print(f"error: {bundle.study}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
