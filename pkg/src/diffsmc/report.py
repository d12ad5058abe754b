"""Line-delimited JSON serialization of run reports.

One record per sampler step ``{"step", "ess", "resampled",
"log_z_partial"}`` followed by a final record carrying the normalizing
constant estimate and the (optionally thinned) particle cloud.  Records
contain no timestamps, so identical runs serialize to identical bytes;
wall-clock metadata belongs in a separate file.
"""

import json

import numpy as np

from .smc import RunReport, StepRecord


def report_records(report: RunReport, thin: int = 0):
    """Records of one report, step records first, final record last.

    ``thin`` keeps every ``thin``-th particle in the final record
    (0 keeps all).
    """
    out = []
    for s in report.steps:
        rec = {
            "step": s.step,
            "ess": s.ess,
            "resampled": s.resampled,
            "log_z_partial": s.log_z,
        }
        if s.mcmc_accept is not None:
            rec["mcmc_accept"] = s.mcmc_accept
        out.append(rec)
    positions = report.positions
    log_weights = report.log_weights
    if thin and thin > 1:
        positions = positions[::thin]
        log_weights = log_weights[::thin]
    out.append(
        {
            "final": True,
            "target": report.target,
            "seed": report.seed,
            "n_particles": report.n_particles,
            "n_steps": report.n_steps,
            "log_z": report.log_z,
            "resample_events": list(report.resample_events),
            "samples": positions.tolist(),
            "log_weights": log_weights.tolist(),
        }
    )
    return out


def dumps_report(report: RunReport, thin: int = 0) -> str:
    lines = [json.dumps(rec, sort_keys=True) for rec in report_records(report, thin)]
    return "\n".join(lines) + "\n"


def write_report(path, report: RunReport, thin: int = 0):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_report(report, thin))


def parse_report(text: str) -> RunReport:
    """Inverse of :func:`dumps_report` (modulo thinning)."""
    steps = []
    final = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if rec.get("final"):
            final = rec
        else:
            steps.append(
                StepRecord(
                    step=rec["step"],
                    ess=rec["ess"],
                    resampled=rec["resampled"],
                    log_z=rec["log_z_partial"],
                    mcmc_accept=rec.get("mcmc_accept"),
                )
            )
    if final is None:
        raise ValueError("report stream has no final record")
    return RunReport(
        target=final["target"],
        seed=final["seed"],
        n_particles=final["n_particles"],
        n_steps=final["n_steps"],
        log_z=final["log_z"],
        steps=steps,
        positions=np.asarray(final["samples"], dtype=np.float64),
        log_weights=np.asarray(final["log_weights"], dtype=np.float64),
        resample_events=list(final["resample_events"]),
    )


def read_report(path) -> RunReport:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_report(fh.read())


def read_final_records(path):
    """All final records from a merged line-delimited JSON run log."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("final"):
                out.append(rec)
            elif "error" in rec:
                out.append(rec)
    return out
