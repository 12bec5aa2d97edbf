"""Command-line driver: ``qwei bound|verify|selfcheck|spectra --config FILE``.

Exit codes: 0 success, 2 configuration or I/O error, 3 numerical
certification failure, 4 a state violates the bound, 5 a self-check failed.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import pipeline, spectra, states, tables
from .errors import (
    ConfigError,
    ConstraintProjectionFailed,
    InsufficientRange,
    TailEstimateFailed,
    TruncationWarning,
)

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_VIOLATION, EXIT_CHECK = 0, 2, 3, 4, 5


def _out_dir(args, rc):
    out = args.out or os.environ.get("QWEI_OUT") or rc["output"]["dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _bound_and_states(model):
    report, J = pipeline.compute_bound(model)
    corpus = pipeline.build_corpus(model)
    rows = pipeline.evaluate_states(model, corpus, J, report.B)
    return report, J, corpus, rows


def cmd_bound(model, out, strict):
    (report, _, _, rows), warns = pipeline.capture_warnings(_bound_and_states, model, strict=strict)
    doc = pipeline.report_header(model, "bound")
    doc.update(bound=report.to_dict(), states=rows, summary=pipeline.verify_rows(rows, report.B), warnings=warns)
    pipeline.dump_json(doc, os.path.join(out, "report.json"))
    write_spectra(model, out)
    print(f"B = {report.B:.12e}  (Λ* = {report.Lambda_star})")
    return EXIT_OK, doc


def cmd_verify(model, out, strict):
    (report, _, _, rows), warns = pipeline.capture_warnings(_bound_and_states, model, strict=strict)
    summary = pipeline.verify_rows(rows, report.B)
    doc = pipeline.report_header(model, "verify")
    doc.update(bound=report.to_dict(), states=rows, summary=summary, warnings=warns)
    pipeline.dump_json(doc, os.path.join(out, "report.json"))
    print(
        f"{len(rows)} states, B = {report.B:.6e}, min I_time = {summary['min_I_time']:.6e} "
        f"({summary['min_I_time_state']}), violations: {len(summary['violations'])}"
    )
    if not summary["passed"]:
        for sid in summary["violations"]:
            print(f"VIOLATION {sid}", file=sys.stderr)
        return EXIT_VIOLATION, doc
    return EXIT_OK, doc


def cmd_selfcheck(model, out, strict):
    checks, warns = pipeline.capture_warnings(pipeline.run_selfcheck, model, strict=strict)
    doc = pipeline.report_header(model, "selfcheck")
    doc.update(checks={c.name: {"passed": c.passed, **c.detail} for c in checks}, warnings=warns)
    pipeline.dump_json(doc, os.path.join(out, "report.json"))
    failed = [c.name for c in checks if not c.passed]
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}")
    if failed:
        print("failing checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK, doc
    return EXIT_OK, doc


def write_spectra(model, out, corpus=None):
    """Y.csv, sigma.csv, fhat.csv and one rho_<id>.csv per corpus state."""
    ref = model.ref
    lam = ref.lam
    tables.write_csv(
        os.path.join(out, "Y.csv"),
        ["lam"] + [f"Ydot_{a}" for a in range(1, 5)] + [f"Ygamma_{a}" for a in range(1, 5)] + ["sigma"],
        [lam, *ref.Y_dot.T, *ref.Y_gamma.T, ref.sigma],
    )
    sig3 = spectra.sigma_from(lam, ref.Y_dot[::-1])
    tables.write_csv(os.path.join(out, "sigma.csv"), ["lam", "sigma", "sigma_reflected"], [lam, ref.sigma, sig3])
    fh = model.weight.fhat(lam)
    tables.write_csv(os.path.join(out, "fhat.csv"), ["lam", "fhat_re", "fhat_im"], [lam, fh.real, fh.imag])
    if corpus is None:
        return
    for e in corpus:
        blocks = states.two_point_blocks(e.state, model.cfg)
        rho = states.density_at(blocks, model.cfg.tau)
        tables.write_csv(os.path.join(out, f"rho_{e.id}.csv"), ["tau", "rho"], [model.cfg.tau, rho])


def cmd_spectra(model, out, strict):
    corpus = pipeline.build_corpus(model)
    try:
        write_spectra(model, out, corpus)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    print(f"wrote spectra for {len(corpus)} states to {out}")
    return EXIT_OK, None


COMMANDS = {"bound": cmd_bound, "verify": cmd_verify, "selfcheck": cmd_selfcheck, "spectra": cmd_spectra}


def build_parser():
    p = argparse.ArgumentParser(prog="qwei", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--strict", action="store_true", help="treat truncation warnings as failures")
    p.add_argument("--out", help="output directory (overrides QWEI_OUT and the config)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        rc = pipeline.RunConfig.from_file(args.config)
        out = _out_dir(args, rc)
        model, warns = pipeline.capture_warnings(pipeline.build_model, rc, strict=args.strict)
        model.diagnostics["build_warnings"] = warns
        code, _ = COMMANDS[args.command](model, out, args.strict)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TailEstimateFailed, InsufficientRange, ConstraintProjectionFailed, TruncationWarning) as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERT
    except FloatingPointError as exc:  # pragma: no cover - defensive
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
