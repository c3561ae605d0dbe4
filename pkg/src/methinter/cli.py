"""Command-line interface: ``methinter <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure. Diagnostics go to stderr; stdout carries only data.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .basis import WeightSpec, build_basis
from .config import load_config_file, load_study, sim_from_dict, smoothing_from_dict
from .curves import (CurveSet, SmoothingConfig, common_region, read_methylation_csv, scale_positions,
                     smooth_samples, write_curves_csv)
from .errors import ConfigError, DataError, NumericalError, StudyError
from .harness import default_workers, run_study
from .inference import CpGArrayData, logistic_working_residuals, pairwise_baseline, wald_interaction_test
from .jsonio import dumps_canonical
from .model import Dataset, fit_reml
from .simgen import simulate_dataset, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- input files -------------------------------------------------------------

def _read_table(path, first: str) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header and (line number, fields) rows of a CSV whose first column is ``first``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if not header or header[0] != first:
            raise DataError(f"{path}: first header column must be {first}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, [x.strip() for x in row]))
    return header, rows


def _keyed(path, first: str, parse) -> tuple[list[str], dict[str, np.ndarray]]:
    header, rows = _read_table(path, first)
    out: dict[str, np.ndarray] = {}
    for lineno, row in rows:
        if row[0] in out:
            raise DataError(f"{path}:{lineno}: duplicate id {row[0]}")
        try:
            out[row[0]] = np.array([parse(v) for v in row[1:]], dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return header[1:], out


def _float(v: str) -> float:
    try:
        return float(v)
    except ValueError:
        raise ValueError(f"malformed number {v!r}") from None


def _genotype(v: str) -> int:
    if v not in ("0", "1", "2"):
        raise ValueError(f"genotype {v!r} is not a minor allele count in {{0, 1, 2}}")
    return int(v)


def read_snps(path) -> tuple[list[str], np.ndarray]:
    _, rows = _read_table(path, "snp_id")
    ids, pos = [], []
    for lineno, row in rows:
        if len(row) != 2:
            raise DataError(f"{path}: header must be snp_id,position_bp")
        try:
            pos.append(float(row[1]))
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed position {row[1]!r}") from None
        ids.append(row[0])
    if not ids:
        raise DataError(f"{path}: no SNPs")
    return ids, np.array(pos)


def _check_ids(sets: dict[str, set[str]]) -> None:
    names = list(sets)
    ref = sets[names[0]]
    for name in names[1:]:
        diff = ref ^ sets[name]
        if diff:
            raise DataError(f"individual ids differ between {names[0]} and {name}: "
                            + ", ".join(sorted(diff)))


def _check_distinct(inputs, outputs) -> None:
    paths = [Path(p).resolve() for p in (*inputs, *outputs) if p is not None]
    if len(set(paths)) != len(paths):
        raise ConfigError("input and output paths must all be distinct")


def _response(phen: dict[str, np.ndarray], ids, binary: bool, first_stage) -> np.ndarray:
    y = np.array([phen[i][0] for i in ids])
    if not binary:
        return y
    C = None
    if first_stage is not None:
        _, cov = _keyed(first_stage, "individual_id", _float)
        _check_ids({"phenotype": set(phen), "first-stage covariates": set(cov)})
        C = np.vstack([cov[i] for i in ids])
    return logistic_working_residuals(y, C)


def load_dataset(methylation_path, genotype_path, phenotype_path, snp_positions_path,
                 smoothing: SmoothingConfig | None = None, binary: bool = False,
                 first_stage_covariates=None) -> Dataset:
    """Read the four input files and smooth the curves; individuals are ordered by id.

    The region is the span of all CpG sites; SNP positions are scaled into
    it and must fall inside.
    """
    samples = read_methylation_csv(methylation_path)
    g_names, geno = _keyed(genotype_path, "individual_id", _genotype)
    p_names, phen = _keyed(phenotype_path, "individual_id", _float)
    if not p_names or p_names[0] != "y":
        raise DataError(f"{phenotype_path}: second header column must be y")
    snp_ids, snp_bp = read_snps(snp_positions_path)
    if g_names != snp_ids:
        raise DataError(f"{genotype_path}: SNP columns {g_names} do not match {snp_positions_path}")
    _check_ids({"methylation": {s.individual_id for s in samples}, "genotypes": set(geno),
                "phenotype": set(phen)})
    region = common_region(samples)
    if np.any(snp_bp < region[0]) or np.any(snp_bp > region[1]):
        raise DataError("SNP outside scaled region")
    curves = smooth_samples(samples, smoothing, region)
    ids = curves.ids
    Y = _response(phen, ids, binary, first_stage_covariates)
    W = np.vstack([phen[i][1:] for i in ids])
    G = np.vstack([geno[i] for i in ids])
    return Dataset(Y, W, G, scale_positions(snp_bp, region), curves, tuple(snp_ids), tuple(p_names[1:]))


def load_array_data(methylation_path, genotype_path, phenotype_path, snp_positions_path
                    ) -> tuple[CpGArrayData, list[str]]:
    """Raw CpG levels for the pairwise baseline; every individual must share the site positions."""
    samples = read_methylation_csv(methylation_path)
    pos = samples[0].positions
    for s in samples[1:]:
        if s.positions.shape != pos.shape or np.any(s.positions != pos):
            raise DataError(f"{methylation_path}: the pairwise baseline needs identical CpG "
                            f"positions for every individual ({s.individual_id} differs)")
    g_names, geno = _keyed(genotype_path, "individual_id", _genotype)
    p_names, phen = _keyed(phenotype_path, "individual_id", _float)
    if not p_names or p_names[0] != "y":
        raise DataError(f"{phenotype_path}: second header column must be y")
    snp_ids, snp_bp = read_snps(snp_positions_path)
    if g_names != snp_ids:
        raise DataError(f"{genotype_path}: SNP columns {g_names} do not match {snp_positions_path}")
    _check_ids({"methylation": {s.individual_id for s in samples}, "genotypes": set(geno),
                "phenotype": set(phen)})
    ids = [s.individual_id for s in samples]
    data = CpGArrayData(np.array([phen[i][0] for i in ids]), np.vstack([phen[i][1:] for i in ids]),
                        np.vstack([geno[i] for i in ids]), snp_bp, pos,
                        np.vstack([s.levels for s in samples]))
    return data, snp_ids


# --- options -----------------------------------------------------------------

def _file_settings(path) -> dict:
    if path is None:
        return {}
    doc = load_config_file(path)
    unknown = sorted(set(doc) - {"smoothing", "weight", "n_basis"})
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {', '.join(unknown)}")
    return doc


def _smoothing(args, doc: dict) -> SmoothingConfig:
    base = dict(doc.get("smoothing", {}))
    for key in ("k", "h_min", "grid_size"):
        if getattr(args, key, None) is not None:
            base[key] = getattr(args, key)
    return smoothing_from_dict(base)


def _weight(args, doc: dict) -> WeightSpec:
    base = dict(doc.get("weight", {}))
    unknown = sorted(set(base) - {"form", "rho"})
    if unknown:
        raise ConfigError(f"unknown keys in weight: {', '.join(unknown)}")
    if args.weight_form is not None:
        base["form"] = args.weight_form
    if args.rho is not None:
        base["rho"] = args.rho
    try:
        return WeightSpec(base.get("form", "exponential"), float(base.get("rho", 1.0)))
    except DataError as exc:
        raise ConfigError(str(exc)) from None


def _add_smoothing(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="nearest-CpG count for the bandwidth (default 70)")
    p.add_argument("--h-min", dest="h_min", type=float, help="minimum bandwidth in bp (default 1000)")
    p.add_argument("--grid-size", dest="grid_size", type=int, help="curve grid points (default 1001)")
    p.add_argument("--config", help="TOML/JSON file with smoothing, weight and n_basis")


def _add_inputs(p: argparse.ArgumentParser, methylation_only: bool = False) -> None:
    p.add_argument("--methylation", required=True, help="long CSV individual_id,position,level")
    if methylation_only:
        return
    p.add_argument("--genotypes", required=True, help="CSV individual_id,snp_1..snp_D")
    p.add_argument("--phenotype", required=True, help="CSV individual_id,y,w_1..w_S")
    p.add_argument("--snps", required=True, help="CSV snp_id,position_bp")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weight-form", dest="weight_form", choices=("exponential", "gaussian", "linear"))
    p.add_argument("--rho", type=float, help="weight decay parameter (default 1)")
    p.add_argument("--n-basis", dest="n_basis", type=int, help="number of B-spline functions (default 10)")
    p.add_argument("--binary", action="store_true",
                   help="y is 0/1: fit on logistic working residuals")
    p.add_argument("--first-stage-covariates", dest="first_stage",
                   help="CSV individual_id,c_1..c_q for the logistic first stage")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="methinter", description="Methylation curve by SNP interaction testing.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("smooth", help="smooth methylation samples onto a common grid")
    _add_inputs(p, methylation_only=True)
    _add_smoothing(p)
    p.add_argument("--out", required=True, help="wide CSV of curves")

    for name, text in (("fit", "fit the model by REML and write the fit as JSON"),
                       ("test", "test the overall interaction and print T_D and p")):
        p = sub.add_parser(name, help=text)
        _add_inputs(p)
        _add_smoothing(p)
        _add_model(p)
        p.add_argument("--out", required=name == "fit", help="JSON output")

    p = sub.add_parser("baseline", help="pairwise CpG x SNP tests with a Bonferroni threshold")
    _add_inputs(p)
    p.add_argument("--snp", required=True, help="SNP id to test")
    p.add_argument("--window-bp", dest="window_bp", type=float, default=5e5)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True, help="CSV of per-pair results")
    p.add_argument("--json", help="optional JSON summary")

    p = sub.add_parser("simulate", help="write one simulated dataset in the input formats")
    p.add_argument("--config", help="TOML/JSON with a [sim] table and optional seed")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("study", help="run a Monte Carlo study")
    p.add_argument("--config", required=True, help="study TOML/JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker processes (default $METHINTER_WORKERS or 1)")
    return parser


# --- commands ----------------------------------------------------------------

def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _cmd_smooth(args) -> int:
    _check_distinct([args.methylation, args.config], [args.out])
    doc = _file_settings(args.config)
    samples = read_methylation_csv(args.methylation)
    curves: CurveSet = smooth_samples(samples, _smoothing(args, doc))
    write_curves_csv(args.out, curves)
    return EXIT_OK


def _fit(args):
    _check_distinct([args.methylation, args.genotypes, args.phenotype, args.snps, args.config,
                     args.first_stage], [args.out])
    if args.first_stage is not None and not args.binary:
        raise ConfigError("--first-stage-covariates requires --binary")
    doc = _file_settings(args.config)
    n_basis = args.n_basis if args.n_basis is not None else int(doc.get("n_basis", 10))
    dataset = load_dataset(args.methylation, args.genotypes, args.phenotype, args.snps,
                           _smoothing(args, doc), args.binary, args.first_stage)
    return fit_reml(dataset, build_basis(n_basis), _weight(args, doc))


def _cmd_fit(args) -> int:
    fit = _fit(args)
    _write_text(args.out, dumps_canonical(fit.to_dict()) + "\n")
    for w in fit.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def _cmd_test(args) -> int:
    fit = _fit(args)
    result = wald_interaction_test(fit)
    if args.out:
        _write_text(args.out, dumps_canonical(result.to_dict()) + "\n")
    for w in fit.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(result.summary_line())
    return EXIT_OK


def _cmd_baseline(args) -> int:
    _check_distinct([args.methylation, args.genotypes, args.phenotype, args.snps], [args.out, args.json])
    data, snp_ids = load_array_data(args.methylation, args.genotypes, args.phenotype, args.snps)
    if args.snp not in snp_ids:
        raise DataError(f"unknown SNP id {args.snp!r}")
    result = pairwise_baseline(data, snp_ids.index(args.snp), args.window_bp, args.alpha)
    result.write_csv(args.out)
    if args.json:
        result.write_json(args.json)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    doc = load_config_file(args.config) if args.config else {}
    unknown = sorted(set(doc) - {"sim", "seed"})
    if unknown:
        raise ConfigError(f"unknown keys in {args.config}: {', '.join(unknown)}")
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    config = sim_from_dict(doc.get("sim", {}), seed)
    if args.replicate < 0:
        raise ConfigError("--replicate must be non-negative")
    dataset, database, draws = simulate_dataset(config, args.replicate)
    write_dataset(args.out, database, draws, dataset.Y)
    return EXIT_OK


def _cmd_study(args) -> int:
    spec = load_study(args.config, seed=args.seed, replicates=args.replicates)
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        raise ConfigError("--workers must be at least 1")
    result = run_study(spec, workers)
    result.write(args.out)
    return EXIT_OK


_COMMANDS = {"smooth": _cmd_smooth, "fit": _cmd_fit, "test": _cmd_test, "baseline": _cmd_baseline,
             "simulate": _cmd_simulate, "study": _cmd_study}


def run_command(argv=None) -> int:
    """Parse ``argv`` and run one command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, StudyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
